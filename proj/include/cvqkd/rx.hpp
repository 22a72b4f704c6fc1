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

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>

#include "cvqkd/channel.hpp"
#include "cvqkd/common.hpp"
#include "cvqkd/dsp.hpp"
#include "cvqkd/fft.hpp"
#include "cvqkd/frame.hpp"
#include "cvqkd/rrc.hpp"

namespace cvqkd {

// ---- carrier recovery -------------------------------------------------------

struct CarrierOptions {
    double band_halfwidth = 150e6;   ///< analytic pilot band half-width [Hz]
    double band_transition = 20e6;
    double min_snr_db = 10.0;        ///< in-band pilot SNR gate
    int smoothing_window = 0;        ///< extra complex smoothing [samples]
    double unwrap_max_step = M_PI;
    int edge_taper = 1024;           ///< frame-edge taper for estimation [samples]
    double fade_rel_power = 0.01;    ///< hold the phase below this power vs median
};

/// Per-sample carrier estimate: the unwrapped composite phase trace and the
/// unit-modulus rotation used to compensate it.
struct CarrierEstimate {
    RVec alpha;              ///< unwrapped phase estimate [rad]
    CVec mu2;                ///< exp(j alpha), |mu2| = 1 per sample
    double coarse_offset_hz = 0.0;
    double snr_db = 0.0;     ///< in-band pilot SNR estimate
    RVec pilot_power;        ///< per-sample analytic pilot power
};

/// Pilot-based time-varying frequency-offset and phase recovery. Locates the
/// pilot line, extracts its analytic signal in a band around it, normalizes
/// the amplitude away, and derotates the record by the conjugate. The
/// pilot's own pi/4 symbol phase is referenced out so a clean channel maps
/// to mu2 = 1.
inline std::pair<CarrierEstimate, DetectionRecord> recover_carrier(const DetectionRecord& rec,
                                                                   const CarrierOptions& opt = {}) {
    const std::size_t n = rec.samples.size();
    require(n > 16, "recover_carrier: record too short");
    const double fs = rec.samples.sample_rate;

    // taper the frame edges for estimation only: the shaped frame's start
    // and stop transients leak across the whole spectrum and would bias the
    // pilot phase
    CVec work = rec.samples.samples;
    const std::size_t taper = std::min<std::size_t>(static_cast<std::size_t>(std::max(opt.edge_taper, 0)),
                                                    n / 8);
    for (std::size_t k = 0; k < taper; ++k) {
        const double w = 0.5 * (1.0 - std::cos(M_PI * static_cast<double>(k + 1) /
                                               static_cast<double>(taper + 1)));
        work[k] *= w;
        work[n - 1 - k] *= w;
    }

    const std::size_t ng = fft_nice_size(n);
    CVec spec = fft_padded(work, ng);

    // coarse pilot location = strongest bin
    const std::size_t k_peak = fft_peak_bin(spec);
    const double f_peak = fft_bin_freq(k_peak, ng, fs);

    // background density from the median bin power (pilot occupies few bins)
    RVec pow_bins(ng);
    for (std::size_t k = 0; k < ng; ++k) pow_bins[k] = std::norm(spec[k]);
    RVec sorted = pow_bins;
    std::nth_element(sorted.begin(), sorted.begin() + ng / 2, sorted.end());
    const double bg = sorted[ng / 2];

    // circular raised-cosine mask around the peak bin
    const double bin_hz = fs / static_cast<double>(ng);
    const auto w_bins = static_cast<std::ptrdiff_t>(opt.band_halfwidth / bin_hz);
    const auto t_bins =
        std::max<std::ptrdiff_t>(1, static_cast<std::ptrdiff_t>(opt.band_transition / bin_hz));
    double p_band = 0.0;
    std::size_t n_band = 0;
    {
        CVec masked(ng, Complex{0.0, 0.0});
        for (std::ptrdiff_t dk = -w_bins; dk <= w_bins; ++dk) {
            const std::size_t k = static_cast<std::size_t>(
                ((static_cast<std::ptrdiff_t>(k_peak) + dk) % static_cast<std::ptrdiff_t>(ng) +
                 static_cast<std::ptrdiff_t>(ng)) %
                static_cast<std::ptrdiff_t>(ng));
            double g = 1.0;
            const std::ptrdiff_t edge = w_bins - std::abs(dk);
            if (edge < t_bins)
                g = 0.5 * (1.0 - std::cos(M_PI * static_cast<double>(edge + 1) /
                                          static_cast<double>(t_bins + 1)));
            masked[k] = spec[k] * g;
            p_band += pow_bins[k];
            ++n_band;
        }
        spec = std::move(masked);
    }
    const double snr_lin = (p_band - bg * static_cast<double>(n_band)) /
                           std::max(bg * static_cast<double>(n_band), 1e-300);
    CarrierEstimate est;
    est.snr_db = lin_to_db(std::max(snr_lin, 1e-12));
    if (est.snr_db < opt.min_snr_db)
        throw LowPilotSnr("recover_carrier: pilot SNR below threshold");

    CVec z = ifft(spec);
    z.resize(n);
    if (opt.smoothing_window > 1) z = moving_average(z, opt.smoothing_window);

    // derotate by pilot carrier + coarse offset + the pilot's own pi/4
    const double f_coarse = f_peak - rec.layout.pilot_freq;
    est.coarse_offset_hz = f_coarse;
    const double w_known = 2.0 * M_PI * (rec.layout.pilot_freq + f_coarse) / fs;
    RVec wrapped(n);
    est.pilot_power.resize(n);
    CVec unit(n);
    {
        const Complex step{std::cos(w_known), -std::sin(w_known)};
        Complex ph{0.0, 0.0};
        constexpr std::size_t resync = 1024;
        for (std::size_t k = 0; k < n; ++k) {
            if (k % resync == 0) {
                const double a = w_known * static_cast<double>(k) + M_PI / 4.0;
                ph = Complex{std::cos(a), -std::sin(a)};
            }
            const Complex v = z[k] * ph;
            const double mag2 = std::norm(v);
            est.pilot_power[k] = mag2;
            unit[k] = mag2 > 0 ? v / std::sqrt(mag2) : Complex{1.0, 0.0};
            wrapped[k] = std::arg(v);
            ph *= step;
        }
    }

    // fade/taper gating: hold the residual phase where the analytic pilot is
    // too weak to trust (deep fades, tapered edges)
    RVec pw = est.pilot_power;
    std::nth_element(pw.begin(), pw.begin() + pw.size() / 2, pw.end());
    const double med = pw[pw.size() / 2];
    const double gate = opt.fade_rel_power * med;

    RVec res(n, 0.0);
    std::ptrdiff_t prev = -1;
    for (std::size_t k = 0; k < n; ++k) {
        if (est.pilot_power[k] < gate) continue;
        if (prev < 0) {
            res[k] = wrapped[k];
        } else {
            double d = wrapped[k] - std::remainder(res[prev], 2.0 * M_PI);
            while (d > M_PI) d -= 2.0 * M_PI;
            while (d < -M_PI) d += 2.0 * M_PI;
            if (prev == static_cast<std::ptrdiff_t>(k) - 1 && std::abs(d) > opt.unwrap_max_step)
                throw UnwrapFailure("recover_carrier: phase jump exceeds threshold");
            res[k] = res[prev] + d;
        }
        // hold through the weak gap just skipped
        for (std::ptrdiff_t j = prev + 1; j < static_cast<std::ptrdiff_t>(k); ++j)
            res[j] = (prev >= 0) ? res[prev] : res[k];
        prev = static_cast<std::ptrdiff_t>(k);
    }
    if (prev < 0) throw LowPilotSnr("recover_carrier: no usable pilot samples");
    for (std::size_t j = static_cast<std::size_t>(prev) + 1; j < n; ++j) res[j] = res[prev];

    const double w_coarse = 2.0 * M_PI * f_coarse / fs;
    est.alpha.resize(n);
    est.mu2.resize(n);
    DetectionRecord comp = rec;
    // e^{j res} equals the normalized analytic pilot on valid samples; held
    // samples get an explicit phasor. The coarse ramp rides on a recurrence.
    const Complex step{std::cos(w_coarse), std::sin(w_coarse)};
    Complex ramp_ph{1.0, 0.0};
    constexpr std::size_t resync = 1024;
    for (std::size_t k = 0; k < n; ++k) {
        if (k % resync == 0) {
            const double a = w_coarse * static_cast<double>(k);
            ramp_ph = Complex{std::cos(a), std::sin(a)};
        }
        est.alpha[k] = res[k] + w_coarse * static_cast<double>(k);
        const bool valid = est.pilot_power[k] >= gate;
        const Complex base = valid ? unit[k]
                                   : Complex{std::cos(res[k]), std::sin(res[k])};
        const Complex rot = base * ramp_ph;
        est.mu2[k] = rot;
        comp.samples.samples[k] = rec.samples.samples[k] * std::conj(rot);
        ramp_ph *= step;
    }
    return {std::move(est), std::move(comp)};
}

// ---- frame synchronization ---------------------------------------------------

struct SyncResult {
    std::ptrdiff_t offset = 0;
    double peak = 0.0;
};

/// Offset of the record against a known reference segment by normalized
/// circular cross-correlation. Throws SyncFailure below the confidence
/// threshold.
inline SyncResult frame_sync(const DetectionRecord& rec, const CVec& reference,
                             double threshold = 0.5) {
    const std::size_t n = rec.samples.size();
    require(!reference.empty() && reference.size() <= n, "frame_sync: bad reference length");

    CVec r_spec = fft(rec.samples.samples);
    CVec ref_spec = fft_padded(reference, n);
    for (std::size_t k = 0; k < n; ++k) r_spec[k] *= std::conj(ref_spec[k]);
    const CVec corr = ifft(r_spec);

    // sliding energy of the record over reference-length windows
    RVec e(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) e[k + 1] = e[k] + std::norm(rec.samples.samples[k]);
    double ref_energy = 0.0;
    for (const auto& v : reference) ref_energy += std::norm(v);

    const std::size_t m = reference.size();
    SyncResult best;
    for (std::size_t tau = 0; tau + m <= n; ++tau) {
        const double seg = e[tau + m] - e[tau];
        const double denom = std::sqrt(std::max(seg * ref_energy, 1e-300));
        const double c = std::abs(corr[tau]) / denom;
        if (c > best.peak) {
            best.peak = c;
            best.offset = static_cast<std::ptrdiff_t>(tau);
        }
    }
    if (best.offset > static_cast<std::ptrdiff_t>(n / 2))
        best.offset -= static_cast<std::ptrdiff_t>(n);
    if (best.peak < threshold) throw SyncFailure("frame_sync: correlation peak below threshold");
    return best;
}

// ---- demodulation ------------------------------------------------------------

struct DemodOptions {
    double band_margin = 50e6;       ///< mask flat region beyond occupied band
    double mask_transition = 50e6;
    int sic_rounds = 2;              ///< pilot/quantum cancellation passes
    int snr_window = 64;
    bool remove_dc = true;           ///< null a detected DC contaminant
    double dc_gate = 10.0;           ///< beat detector: |mean|^2 vs expected
    double fade_threshold = 0.02;    ///< pilot-power fade flag, rel. median
    std::ptrdiff_t sample_offset = 0;  ///< frame-sync alignment
};

/// Per-symbol complex pilot amplitudes plus quality metadata.
struct PilotDemodResult {
    CVec mu4;                 ///< per-symbol pilot amplitude
    double snr_p = 0.0;       ///< per-symbol pilot SNR estimate (linear)
    std::vector<char> fade_flag;
    std::uint64_t layout_hash = 0;
    int guard = 0;            ///< symbols to exclude at each frame edge
};

/// Per-symbol pilot amplitude reference measured back-to-back (T = 1).
struct CalibrationReference {
    CVec mu4_0;
    std::uint64_t layout_hash = 0;
    std::uint64_t detector_seed = 0;
    int guard = 0;
};

/// Per-symbol transmittance estimates.
struct TransmittanceSeries {
    RVec t;
    int smoothing_window = 1;
    int guard = 0;

    double mean_interior() const {
        if (t.size() <= 2 * static_cast<std::size_t>(guard)) return 0.0;
        double s = 0.0;
        std::size_t c = 0;
        for (std::size_t i = guard; i + guard < t.size(); ++i, ++c) s += t[i];
        return s / static_cast<double>(c);
    }
};

namespace detail {

inline MfOptions demod_mf_options(const FrameLayout& layout, const DemodOptions& opt) {
    MfOptions mf;
    mf.use_mask = true;
    mf.mask_lo = -(layout.occupied_half_bw() + opt.band_margin);
    mf.mask_hi = layout.occupied_half_bw() + opt.band_margin;
    mf.mask_transition = opt.mask_transition;
    mf.n_symbols = layout.n_symbols;
    mf.base_delay = -1;  // shape + MF delay
    return mf;
}

/// Rebuild the sample-domain waveform of a measured symbol stream: upsample,
/// shape with the same taps, optionally mix to a carrier.
inline CVec reconstruct_band(const CVec& symbols, const RrcTaps& taps, const FrameLayout& layout,
                             double carrier) {
    SymbolBlock blk;
    blk.symbols = symbols;
    ComplexTrace up = upsample(blk, layout.sps, layout.sample_rate);
    ComplexTrace shaped = pulse_shape(up, taps);
    if (carrier != 0.0) shaped = mix_carrier(shaped, carrier);
    return shaped.samples;
}

inline CVec demod_band(const CVec& record, const FrameLayout& layout, const RrcTaps& taps,
                       double carrier, const DemodOptions& opt) {
    ComplexTrace tr;
    tr.sample_rate = layout.sample_rate;
    tr.samples = record;
    if (carrier != 0.0) tr = mix_carrier(tr, -carrier);
    MfOptions mf = demod_mf_options(layout, opt);
    mf.base_delay = 2 * taps.delay() + opt.sample_offset;
    const SymbolBlock out = matched_filter_downsample(tr, taps, 0, mf);
    return out.symbols;
}

}  // namespace detail

/// Band-select the pilot, demodulate it coherently, matched-filter and
/// symbol-sample. In the balanced noiseless case mu4[i] recovers the
/// transmitted pilot symbol scaled by sqrt(T_i eta_e). An optional quantum
/// symbol estimate is cancelled from the record first (second SIC pass).
inline PilotDemodResult demodulate_pilot(const DetectionRecord& rec, const RrcTaps& taps,
                                         const FrameLayout& layout, const DemodOptions& opt = {},
                                         const CVec* quantum_estimate = nullptr) {
    CVec record = rec.samples.samples;
    if (quantum_estimate != nullptr) {
        const CVec q = detail::reconstruct_band(*quantum_estimate, taps, layout, 0.0);
        require(q.size() == record.size(), "demodulate_pilot: estimate length mismatch");
        for (std::size_t k = 0; k < record.size(); ++k) record[k] -= q[k];
    }
    PilotDemodResult out;
    out.mu4 = detail::demod_band(record, layout, taps, layout.pilot_freq, opt);
    out.layout_hash = layout.hash();
    out.guard = layout.span;

    // fade flags and an SNR diagnostic from the smoothed series
    const CVec smooth = moving_average(out.mu4, opt.snr_window);
    RVec p(out.mu4.size());
    for (std::size_t i = 0; i < out.mu4.size(); ++i) p[i] = std::norm(smooth[i]);
    RVec ps = p;
    std::nth_element(ps.begin(), ps.begin() + ps.size() / 2, ps.end());
    const double med = ps[ps.size() / 2];
    out.fade_flag.assign(out.mu4.size(), 0);
    double resid = 0.0, sig = 0.0;
    for (std::size_t i = 0; i < out.mu4.size(); ++i) {
        if (p[i] < opt.fade_threshold * med) out.fade_flag[i] = 1;
        resid += std::norm(out.mu4[i] - smooth[i]);
        sig += p[i];
    }
    resid /= static_cast<double>(out.mu4.size());
    sig /= static_cast<double>(out.mu4.size());
    out.snr_p = resid > 0 ? sig / resid : 1e18;
    return out;
}

/// Quantum-band demodulation: optional DC-contaminant nulling, coherent
/// cancellation of the measured pilot (its shaped spectrum leaks weak image
/// lines into the quantum band), band selection, matched filtering, symbol
/// sampling and exact cascade correction.
inline SymbolBlock demodulate_quantum(const DetectionRecord& rec, const RrcTaps& taps,
                                      const FrameLayout& layout,
                                      const PilotDemodResult* pilot = nullptr,
                                      const DemodOptions& opt = {}) {
    CVec record = rec.samples.samples;

    if (opt.remove_dc) {
        Complex m{0.0, 0.0};
        for (const auto& v : record) m += v;
        m /= static_cast<double>(record.size());
        const double expect = power(record) / static_cast<double>(record.size());
        if (std::norm(m) > opt.dc_gate * expect)
            for (auto& v : record) v -= m;
    }
    if (pilot != nullptr) {
        const CVec p = detail::reconstruct_band(pilot->mu4, taps, layout, layout.pilot_freq);
        require(p.size() == record.size(), "demodulate_quantum: pilot estimate length mismatch");
        for (std::size_t k = 0; k < record.size(); ++k) record[k] -= p[k];
    }
    SymbolBlock out;
    out.role = SymbolRole::quantum;
    out.symbols = detail::demod_band(record, layout, taps, 0.0, opt);
    return out;
}

/// Joint pilot/quantum demodulation with successive interference
/// cancellation. Two rounds bring the mutual band leakage below the 1e-6
/// loopback floor.
struct FrameDemodResult {
    PilotDemodResult pilot;
    SymbolBlock quantum;
};

inline FrameDemodResult demodulate_frame(const DetectionRecord& rec, const RrcTaps& taps,
                                         const FrameLayout& layout, const DemodOptions& opt = {}) {
    FrameDemodResult r;
    r.pilot = demodulate_pilot(rec, taps, layout, opt);
    r.quantum = demodulate_quantum(rec, taps, layout, &r.pilot, opt);
    for (int round = 1; round < opt.sic_rounds; ++round) {
        r.pilot = demodulate_pilot(rec, taps, layout, opt, &r.quantum.symbols);
        r.quantum = demodulate_quantum(rec, taps, layout, &r.pilot, opt);
    }
    return r;
}

// ---- calibration and transmittance estimation --------------------------------

/// Build the pre-calibration pilot reference from a back-to-back record
/// (T = 1, same layout and detector settings). Rejects unstable references.
inline CalibrationReference calibrate_reference(const DetectionRecord& rec_b2b, const RrcTaps& taps,
                                                const FrameLayout& layout,
                                                const DemodOptions& opt = {},
                                                double max_rel_spread = 0.01) {
    const FrameDemodResult d = demodulate_frame(rec_b2b, taps, layout, opt);
    CalibrationReference cal;
    cal.mu4_0 = d.pilot.mu4;
    cal.layout_hash = layout.hash();
    cal.detector_seed = rec_b2b.detector.seed;
    cal.guard = d.pilot.guard;

    RVec mags;
    mags.reserve(cal.mu4_0.size());
    for (std::size_t i = cal.guard; i + cal.guard < cal.mu4_0.size(); ++i)
        mags.push_back(std::abs(cal.mu4_0[i]));
    const double m = mean(mags);
    const double sd = std::sqrt(variance(mags));
    if (!(m > 0) || sd / m > max_rel_spread)
        throw CalibrationUnstable("calibrate_reference: per-symbol spread exceeds bound");
    return cal;
}

/// Per-symbol transmittance from the pilot-power ratio T_i =
/// |mu4_i|^2 / |mu4_0,i|^2, optionally smoothed by a centered moving
/// average. Values are clamped at zero from below.
inline TransmittanceSeries estimate_transmittance(const PilotDemodResult& pilot,
                                                  const CalibrationReference& cal, int window = 64) {
    require(window >= 1, "estimate_transmittance: window must be >= 1");
    if (pilot.layout_hash != cal.layout_hash)
        throw ConfigError("estimate_transmittance: calibration layout mismatch");
    require(pilot.mu4.size() == cal.mu4_0.size(),
            "estimate_transmittance: symbol count mismatch");

    TransmittanceSeries ts;
    ts.smoothing_window = window;
    ts.guard = std::max(pilot.guard, cal.guard);
    ts.t.resize(pilot.mu4.size());
    for (std::size_t i = 0; i < ts.t.size(); ++i) {
        const double denom = std::norm(cal.mu4_0[i]);
        ts.t[i] = denom > 0 ? std::norm(pilot.mu4[i]) / denom : 0.0;
    }
    if (window > 1) ts.t = moving_average(ts.t, window);
    for (auto& v : ts.t) v = std::max(v, 0.0);
    return ts;
}

}  // namespace cvqkd
