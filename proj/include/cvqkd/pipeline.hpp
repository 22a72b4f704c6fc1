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

#include <optional>

#include "cvqkd/channel.hpp"
#include "cvqkd/estimation.hpp"
#include "cvqkd/rx.hpp"
#include "cvqkd/tx.hpp"

namespace cvqkd {

/// Baseband length of one shaped frame (symbols plus filter tails).
inline std::size_t baseband_length(const FrameLayout& layout) {
    return (layout.n_symbols + static_cast<std::size_t>(layout.span)) *
           static_cast<std::size_t>(layout.sps);
}

/// Everything needed to synthesize and demodulate one frame.
struct LinkConfig {
    FrameLayout layout;
    double v_a = 12.4;
    IqImbalance imbalance;
    DetectorModel detector;
    CarrierOptions carrier;
    DemodOptions demod;
    int t_window = 64;
    int cal_smooth_window = 256;
    bool carrier_recovery = true;
};

/// Independent per-frame random streams.
struct FrameSeeds {
    std::uint64_t tx = 1;
    std::uint64_t channel = 2;
    std::uint64_t detector = 3;
};

inline FrameSeeds frame_seeds(std::uint64_t master, std::uint64_t frame_index) {
    FrameSeeds s;
    s.tx = Rng::substream(master, frame_index, 0);
    s.channel = Rng::substream(master, frame_index, 1);
    s.detector = Rng::substream(master, frame_index, 2);
    return s;
}

struct FrameOutput {
    SymbolBlock tx_symbols;
    DetectionRecord record;       ///< raw detection record
    DetectionRecord compensated;  ///< after carrier compensation
    CarrierEstimate carrier;
    FrameDemodResult demod;
    std::optional<TransmittanceSeries> t_hat;
    double noise_gain = 1.0;
};

/// Matched-filter noise gain of the demodulation chain for this layout.
inline double link_noise_gain(const LinkConfig& cfg) {
    const RrcTaps taps = design_rrc(cfg.layout.roll_off, cfg.layout.sps, cfg.layout.span);
    const MfOptions mf = detail::demod_mf_options(cfg.layout, cfg.demod);
    // frame-periodic model at a decimated symbol count keeps this cheap and
    // is insensitive to the exact grid
    const std::size_t n = std::min<std::size_t>(cfg.layout.n_symbols, 8192);
    return mf_noise_gain(taps, n, cfg.layout.sample_rate, mf);
}

/// Synthesize one frame, run it through the channel/detector, and demodulate.
inline FrameOutput run_frame(const LinkConfig& cfg, const ChannelTrace& channel,
                             const FrameSeeds& seeds,
                             const CalibrationReference* cal = nullptr) {
    cfg.layout.validate();
    const RrcTaps taps = design_rrc(cfg.layout.roll_off, cfg.layout.sps, cfg.layout.span);

    GaussianSource src;
    src.seed = seeds.tx;
    src.per_quadrature_variance = cfg.v_a / 2.0;

    FrameOutput out;
    out.tx_symbols = generate_quantum_symbols(src, cfg.layout.n_symbols);
    TxFrame frame =
        assemble_frame(out.tx_symbols, pilot_block(cfg.layout, cfg.v_a), cfg.layout);
    frame = apply_iq_imbalance(frame, cfg.imbalance);

    DetectorModel det = cfg.detector;
    det.seed = seeds.detector;
    const ComplexTrace optical = propagate(frame, channel);
    out.record = detect(optical, det, cfg.layout, std::make_shared<ChannelTrace>(channel));

    if (!cfg.carrier_recovery) {
        out.compensated = out.record;
        out.demod = demodulate_frame(out.record, taps, cfg.layout, cfg.demod);
    } else {
        // First pass: carrier from the raw record, single-round demodulation
        // just to obtain the quantum estimate for carrier cleanup.
        auto [est, comp] = recover_carrier(out.record, cfg.carrier);
        out.carrier = std::move(est);
        DemodOptions first = cfg.demod;
        if (cfg.demod.sic_rounds >= 2) first.sic_rounds = 1;
        out.demod = demodulate_frame(comp, taps, cfg.layout, first);
        out.compensated = std::move(comp);

        if (cfg.demod.sic_rounds >= 2) {
            // Second pass: the quantum band leaks weak sidelobes into the
            // pilot line; re-estimate the carrier on a quantum-cancelled
            // record, then demodulate against the refined rotation.
            CVec recon = detail::reconstruct_band(out.demod.quantum.symbols, taps, cfg.layout, 0.0);
            DetectionRecord cleaned = out.record;
            for (std::size_t k = 0; k < cleaned.samples.samples.size(); ++k)
                cleaned.samples.samples[k] -= recon[k] * out.carrier.mu2[k];
            auto [est2, ignored] = recover_carrier(cleaned, cfg.carrier);
            DetectionRecord comp2 = out.record;
            for (std::size_t k = 0; k < comp2.samples.samples.size(); ++k)
                comp2.samples.samples[k] = out.record.samples.samples[k] * std::conj(est2.mu2[k]);
            out.carrier = std::move(est2);
            out.demod = demodulate_frame(comp2, taps, cfg.layout, cfg.demod);
            out.compensated = std::move(comp2);
        }
    }
    if (cal != nullptr)
        out.t_hat = estimate_transmittance(out.demod.pilot, *cal, cfg.t_window);
    out.noise_gain = link_noise_gain(cfg);
    return out;
}

/// Back-to-back calibration run: unity transmittance, no offsets, same
/// detector model; the reference is smoothed over symbols (the b2b pilot is
/// constant by construction) before the stability gate.
inline CalibrationReference run_calibration(const LinkConfig& cfg, std::uint64_t seed) {
    const FrameSeeds seeds = frame_seeds(seed, 0);
    const ChannelTrace b2b =
        constant_channel(baseband_length(cfg.layout), 1.0, cfg.layout.sample_rate);
    const FrameOutput out = run_frame(cfg, b2b, seeds);

    CalibrationReference cal;
    cal.mu4_0 = out.demod.pilot.mu4;
    cal.layout_hash = cfg.layout.hash();
    cal.detector_seed = seeds.detector;
    cal.guard = out.demod.pilot.guard;
    if (cfg.cal_smooth_window > 1) cal.mu4_0 = moving_average(cal.mu4_0, cfg.cal_smooth_window);

    RVec mags;
    for (std::size_t i = cal.guard; i + cal.guard < cal.mu4_0.size(); ++i)
        mags.push_back(std::abs(cal.mu4_0[i]));
    const double m = mean(mags);
    if (!(m > 0) || std::sqrt(variance(mags)) / m > 0.01)
        throw CalibrationUnstable("run_calibration: smoothed reference spread exceeds 1%");
    return cal;
}

}  // namespace cvqkd
