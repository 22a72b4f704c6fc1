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
#include <memory>
#include <optional>
#include <utility>

#include "cvqkd/common.hpp"
#include "cvqkd/frame.hpp"
#include "cvqkd/rng.hpp"
#include "cvqkd/turbulence.hpp"
#include "cvqkd/tx.hpp"

namespace cvqkd {

/// One channel realization: per-sample power transmittance, channel phase,
/// constant laser frequency offset and per-sample LO phase noise.
struct ChannelTrace {
    RVec transmittance;   ///< power transmittance in [0, 1] per sample
    RVec theta_s;         ///< channel phase rotation [rad] per sample
    RVec theta_lo;        ///< LO phase-noise path [rad] per sample
    double delta_f = 0.0; ///< laser frequency offset f_LO - f_s [Hz]

    std::size_t size() const { return transmittance.size(); }

    void validate() const {
        require(theta_s.size() == transmittance.size() && theta_lo.size() == transmittance.size(),
                "channel trace: arrays must have equal length");
        for (double t : transmittance)
            require(t >= 0.0 && t <= 1.0 && std::isfinite(t),
                    "channel trace: transmittance out of [0, 1]");
        for (double v : theta_s) require(std::isfinite(v), "channel trace: non-finite phase");
        for (double v : theta_lo) require(std::isfinite(v), "channel trace: non-finite phase");
    }

    /// Composite phase alpha(t) = 2 pi delta_f t + theta_s - theta_lo at sample k.
    double alpha(std::size_t k, double sample_rate) const {
        return 2.0 * M_PI * delta_f * static_cast<double>(k) / sample_rate + theta_s[k] -
               theta_lo[k];
    }
};

/// Heterodyne detector: efficiency, electrical noise, and a seeded noise
/// stream. noiseless disables both shot and electrical noise (test mode).
struct DetectorModel {
    double eta = 0.56;       ///< detection efficiency, (0, 1]
    double nu_el = 0.1;      ///< electrical noise [SNU]
    std::uint64_t seed = 1;
    bool noiseless = false;

    void validate() const {
        require(eta > 0.0 && eta <= 1.0, "detector: eta must be in (0, 1]");
        require(nu_el >= 0.0, "detector: nu_el must be >= 0");
    }

    /// Total complex noise variance per sample in SNU.
    double noise_variance() const { return noiseless ? 0.0 : 1.0 + nu_el; }
};

/// SNU-calibrated heterodyne record, with optional embedded ground truth for
/// test harnesses. The truth trace is shared: records are copied along the
/// receive chain and the trace is bulky.
struct DetectionRecord {
    ComplexTrace samples;
    FrameLayout layout;
    DetectorModel detector;
    std::shared_ptr<const ChannelTrace> truth;
};

// ---- channel realization builders -----------------------------------------

struct PhaseNoiseSpec {
    double delta_f = 0.0;    ///< constant frequency offset [Hz]
    double linewidth = 0.0;  ///< combined Lorentzian linewidth for the Wiener path [Hz]
    std::uint64_t seed = 2;
};

/// Wiener LO phase path with increment variance 2 pi linewidth / f_s.
inline RVec wiener_phase(std::size_t n, double linewidth, double sample_rate, std::uint64_t seed) {
    RVec out(n, 0.0);
    if (linewidth <= 0.0 || n == 0) return out;
    Rng rng(seed);
    const double s = std::sqrt(2.0 * M_PI * linewidth / sample_rate);
    for (std::size_t k = 1; k < n; ++k) out[k] = out[k - 1] + s * rng.next_normal();
    return out;
}

/// Channel realization from an explicit per-sample transmittance array plus
/// frequency offset and LO phase noise.
inline ChannelTrace make_channel(RVec transmittance, double sample_rate,
                                 const PhaseNoiseSpec& pn = {}) {
    ChannelTrace tr;
    const std::size_t n = transmittance.size();
    tr.transmittance = std::move(transmittance);
    tr.theta_s.assign(n, 0.0);
    tr.theta_lo = wiener_phase(n, pn.linewidth, sample_rate, pn.seed);
    tr.delta_f = pn.delta_f;
    tr.validate();
    return tr;
}

/// Constant-transmittance channel realization.
inline ChannelTrace constant_channel(std::size_t n, double transmittance, double sample_rate,
                                     const PhaseNoiseSpec& pn = {}) {
    require(transmittance >= 0.0 && transmittance <= 1.0, "constant_channel: T out of [0, 1]");
    return make_channel(RVec(n, transmittance), sample_rate, pn);
}

/// Log-domain transmittance ramp from t_start to t_stop across n samples.
inline RVec transmittance_ramp(std::size_t n, double t_start, double t_stop) {
    require(t_start > 0 && t_stop > 0, "transmittance_ramp: endpoints must be positive");
    RVec out(n);
    const double l0 = std::log(t_start);
    const double l1 = std::log(t_stop);
    for (std::size_t k = 0; k < n; ++k) {
        const double u = n > 1 ? static_cast<double>(k) / static_cast<double>(n - 1) : 0.0;
        out[k] = std::exp(l0 + (l1 - l0) * u);
    }
    return out;
}

// ---- propagation and detection ---------------------------------------------

/// Apply one channel realization: per-sample amplitude sqrt(T) and the
/// composite phase rotation alpha(t).
inline ComplexTrace propagate(const TxFrame& frame, const ChannelTrace& trace) {
    require(trace.size() == frame.baseband.samples.size(),
            "propagate: channel trace length != frame length");
    ComplexTrace out;
    out.sample_rate = frame.baseband.sample_rate;
    out.origin_time = frame.baseband.origin_time;
    out.samples.resize(trace.size());
    const double fs = out.sample_rate;
    const bool flat_phase = trace.delta_f == 0.0;
    for (std::size_t k = 0; k < trace.size(); ++k) {
        const double amp = std::sqrt(trace.transmittance[k]);
        const double ph = flat_phase ? (trace.theta_s[k] - trace.theta_lo[k]) : trace.alpha(k, fs);
        out.samples[k] =
            frame.baseband.samples[k] * amp * Complex{std::cos(ph), std::sin(ph)};
    }
    return out;
}

/// Heterodyne detection: out = sqrt(eta) * optical + n, with n circular
/// complex Gaussian of total variance 1 + nu_el SNU (unit shot noise plus
/// electrical noise), or zero in noiseless mode. Deterministic per seed.
inline DetectionRecord detect(const ComplexTrace& optical, const DetectorModel& det,
                              const FrameLayout& layout,
                              std::shared_ptr<const ChannelTrace> truth = nullptr) {
    det.validate();
    DetectionRecord rec;
    rec.layout = layout;
    rec.detector = det;
    rec.truth = std::move(truth);
    rec.samples.sample_rate = optical.sample_rate;
    rec.samples.origin_time = optical.origin_time;
    rec.samples.samples.resize(optical.samples.size());
    const double root_eta = std::sqrt(det.eta);
    const double nv = det.noise_variance();
    if (nv == 0.0) {
        for (std::size_t k = 0; k < optical.samples.size(); ++k)
            rec.samples.samples[k] = root_eta * optical.samples[k];
        return rec;
    }
    Rng rng(det.seed);
    for (std::size_t k = 0; k < optical.samples.size(); ++k)
        rec.samples.samples[k] = root_eta * optical.samples[k] + rng.next_complex_normal(nv);
    return rec;
}

}  // namespace cvqkd
