// SPDX-License-Identifier: Apache-2.0
//
// cvqkd-sim — moments-level link simulator for LLO CV-QKD over free-space
// optical channels
// Copyright (C) 2026 the cvqkd-sim authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#pragma once

#include <cmath>

#include "cvqkd/common.hpp"
#include "cvqkd/dsp.hpp"
#include "cvqkd/frame.hpp"
#include "cvqkd/rng.hpp"
#include "cvqkd/rrc.hpp"

namespace cvqkd {

/// Seeded Gaussian symbol source. per_quadrature_variance = V_A / 2, so that
/// E|x + jp|^2 = V_A in shot-noise units.
struct GaussianSource {
    std::uint64_t seed = 1;
    double per_quadrature_variance = 13.78 / 2.0;
};

/// IQ-modulator imbalance: amplitude ratio d between the Q and I paths and
/// the extra rotation of the Q path away from quadrature. Constant values
/// broadcast over the frame; optional per-sample traces override them.
struct IqImbalance {
    double d = 1.0;          ///< in (0, 1]
    double theta_m = 0.0;    ///< rad, in (-pi/2, pi/2)
    RVec d_trace;            ///< optional per-sample d(t)
    RVec theta_trace;        ///< optional per-sample theta_m(t)

    void validate() const {
        require(d > 0.0 && std::isfinite(d), "imbalance: d must be positive and finite");
        require(theta_m > -M_PI / 2 && theta_m < M_PI / 2, "imbalance: theta_m out of range");
        for (double v : d_trace)
            require(v > 0.0 && std::isfinite(v), "imbalance: d trace must be positive and finite");
        for (double v : theta_trace)
            require(v > -M_PI / 2 && v < M_PI / 2, "imbalance: theta trace out of range");
    }
    bool is_identity() const {
        return d == 1.0 && theta_m == 0.0 && d_trace.empty() && theta_trace.empty();
    }
};

/// One transmitted frame: the FDM baseband plus the symbol blocks that
/// produced it.
struct TxFrame {
    ComplexTrace baseband;
    SymbolBlock quantum_symbols;
    SymbolBlock pilot_symbols;
    FrameLayout layout;
};

/// Draw n complex Gaussian symbols, both quadratures independent and
/// zero-mean with the configured variance. Identical seed, identical stream.
inline SymbolBlock generate_quantum_symbols(const GaussianSource& src, std::size_t n) {
    require(n >= 1, "generate_quantum_symbols: need n >= 1");
    require(src.per_quadrature_variance > 0, "generate_quantum_symbols: variance must be positive");
    Rng rng(src.seed);
    const double s = std::sqrt(src.per_quadrature_variance);
    SymbolBlock block;
    block.role = SymbolRole::quantum;
    block.symbols.resize(n);
    for (auto& v : block.symbols) v = Complex{s * rng.next_normal(), s * rng.next_normal()};
    return block;
}

/// Constant pilot block: c (1 + j) with c = A_p sqrt(V_A / 2), i.e. the
/// pilot modulus is pilot_amp_ratio times the quantum RMS amplitude.
inline SymbolBlock pilot_block(const FrameLayout& layout, double v_a) {
    const double c = layout.pilot_amp_ratio * std::sqrt(v_a / 2.0);
    SymbolBlock block;
    block.role = SymbolRole::pilot;
    block.symbols.assign(layout.n_symbols, Complex{c, c});
    return block;
}

/// Build the FDM baseband: RRC-shaped quantum band at DC plus the shaped
/// pilot mixed to its carrier. Bands may share the roll-off skirts (they do
/// at the default -1.25 GHz plan); only flat-passband overlap is rejected.
inline TxFrame assemble_frame(const SymbolBlock& quantum, const SymbolBlock& pilot,
                              const FrameLayout& layout) {
    layout.validate();
    require(quantum.size() == pilot.size(), "assemble_frame: block lengths differ");
    require(quantum.size() == layout.n_symbols, "assemble_frame: block size != layout.n_symbols");
    const double gap = std::abs(layout.pilot_freq);
    require(gap >= layout.occupied_half_bw() + layout.flat_half_bw(),
            "assemble_frame: pilot band overlaps the quantum passband");
    require(gap + layout.occupied_half_bw() <= layout.sample_rate / 2.0,
            "assemble_frame: pilot band exceeds Nyquist");

    const RrcTaps taps = design_rrc(layout.roll_off, layout.sps, layout.span);
    ComplexTrace q = pulse_shape(upsample(quantum, layout.sps, layout.sample_rate), taps);
    ComplexTrace p = pulse_shape(upsample(pilot, layout.sps, layout.sample_rate), taps);
    p = mix_carrier(p, layout.pilot_freq);

    TxFrame frame;
    frame.layout = layout;
    frame.quantum_symbols = quantum;
    frame.pilot_symbols = pilot;
    frame.baseband = std::move(q);
    for (std::size_t k = 0; k < frame.baseband.samples.size(); ++k)
        frame.baseband.samples[k] += p.samples[k];
    return frame;
}

/// Imbalanced modulator map on the composite signal: I + jQ becomes
/// I + j Q d e^{j theta_m}. d = 1, theta_m = 0 is an exact identity.
inline TxFrame apply_iq_imbalance(const TxFrame& frame, const IqImbalance& imb) {
    imb.validate();
    const std::size_t n = frame.baseband.samples.size();
    if (!imb.d_trace.empty())
        require(imb.d_trace.size() == n, "imbalance: d trace must cover the frame");
    if (!imb.theta_trace.empty())
        require(imb.theta_trace.size() == n, "imbalance: theta trace must cover the frame");

    TxFrame out = frame;
    if (imb.is_identity()) return out;
    for (std::size_t k = 0; k < n; ++k) {
        const double dk = imb.d_trace.empty() ? imb.d : imb.d_trace[k];
        const double tk = imb.theta_trace.empty() ? imb.theta_m : imb.theta_trace[k];
        const Complex rot = dk * Complex{std::cos(tk), std::sin(tk)};
        auto& v = out.baseband.samples[k];
        const double i = v.real();
        const double q = v.imag();
        v = Complex{i, 0.0} + Complex{0.0, 1.0} * rot * q;
    }
    return out;
}

}  // namespace cvqkd
