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
#include <memory>
#include <mutex>

#include "cvqkd/common.hpp"
#include "cvqkd/fft.hpp"
#include "cvqkd/frame.hpp"
#include "cvqkd/rrc.hpp"

namespace cvqkd {

// ---- elementary operations ------------------------------------------------

/// Zero-insertion upsampling: sample k*sps equals symbol k, all other
/// samples exactly zero. Output length n * sps.
inline ComplexTrace upsample(const SymbolBlock& block, int sps, double sample_rate) {
    require(sps >= 1, "upsample: sps must be >= 1");
    ComplexTrace out;
    out.sample_rate = sample_rate;
    out.samples.assign(block.symbols.size() * static_cast<std::size_t>(sps), Complex{0.0, 0.0});
    for (std::size_t k = 0; k < block.symbols.size(); ++k)
        out.samples[k * static_cast<std::size_t>(sps)] = block.symbols[k];
    return out;
}

/// Full linear convolution with the shaping taps; output length
/// L_h + L_up - 1, edges retained.
inline ComplexTrace pulse_shape(const ComplexTrace& trace, const RrcTaps& taps) {
    require(!trace.samples.empty(), "pulse_shape: empty trace");
    ComplexTrace out;
    out.sample_rate = trace.sample_rate;
    out.origin_time = trace.origin_time;
    out.samples = convolve(trace.samples, taps.coefficients);
    return out;
}

/// Multiply sample k by exp(j(2 pi f_c k / f_s + phi0)). Phasor recurrence
/// with periodic exact re-seeding: fast, and the phase error stays at the
/// rounding floor.
inline ComplexTrace mix_carrier(const ComplexTrace& trace, double f_c, double phi0 = 0.0) {
    require(std::abs(f_c) < trace.sample_rate / 2.0, "mix_carrier: carrier beyond Nyquist");
    ComplexTrace out;
    out.sample_rate = trace.sample_rate;
    out.origin_time = trace.origin_time;
    out.samples.resize(trace.samples.size());
    const double w = 2.0 * M_PI * f_c / trace.sample_rate;
    const Complex step{std::cos(w), std::sin(w)};
    constexpr std::size_t resync = 1024;
    Complex ph{std::cos(phi0), std::sin(phi0)};
    for (std::size_t k = 0; k < trace.samples.size(); ++k) {
        if (k % resync == 0) {
            const double a = w * static_cast<double>(k) + phi0;
            ph = Complex{std::cos(a), std::sin(a)};
        }
        out.samples[k] = trace.samples[k] * ph;
        ph *= step;
    }
    return out;
}

namespace detail {

/// Raised-cosine frequency mask on an n-point grid. The transitions sit
/// inside [f_lo, f_hi], so everything outside the band is exactly zero.
inline RVec band_mask(std::size_t n, double fs, double f_lo, double f_hi, double transition) {
    RVec m(n, 0.0);
    const double tr = std::min(transition, 0.25 * (f_hi - f_lo));
    for (std::size_t k = 0; k < n; ++k) {
        const double f = fft_bin_freq(k, n, fs);
        if (f < f_lo || f > f_hi) continue;
        if (f < f_lo + tr)
            m[k] = 0.5 * (1.0 - std::cos(M_PI * (f - f_lo) / tr));
        else if (f > f_hi - tr)
            m[k] = 0.5 * (1.0 - std::cos(M_PI * (f_hi - f) / tr));
        else
            m[k] = 1.0;
    }
    return m;
}

}  // namespace detail

/// Zero-phase band selection via frequency-domain masking. Output is
/// time-aligned with the input; stopband is exactly nulled.
inline ComplexTrace band_select(const ComplexTrace& trace, double f_lo, double f_hi,
                                double transition = 50e6) {
    require(f_lo < f_hi, "band_select: empty band");
    require(f_lo >= -trace.sample_rate / 2.0 && f_hi <= trace.sample_rate / 2.0,
            "band_select: band outside Nyquist range");
    CVec spec = fft(trace.samples);
    const RVec mask = detail::band_mask(spec.size(), trace.sample_rate, f_lo, f_hi, transition);
    for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= mask[k];
    ComplexTrace out;
    out.sample_rate = trace.sample_rate;
    out.origin_time = trace.origin_time;
    out.samples = ifft(spec);
    return out;
}

// ---- matched-filter demodulation -------------------------------------------

/// Options for the matched-filter stage. The defaults encode the standard
/// receive chain: shaping delay plus filter delay, exact Nyquist correction
/// of the truncated-tap cascade, no extra band mask.
struct MfOptions {
    bool use_mask = false;
    double mask_lo = 0.0;
    double mask_hi = 0.0;
    double mask_transition = 50e6;
    bool nyquist_correction = true;
    int correction_halfwidth = 128;  ///< symbol-domain composite half-support
    std::ptrdiff_t base_delay = -1;  ///< -1: 2 * taps.delay() (shape + MF)
    std::size_t n_symbols = 0;       ///< 0: all available
};

namespace detail {

/// Fold the composite impulse response into a circular symbol-domain
/// divisor of length n_ext; returns its DFT.
inline CVec symbol_divisor(const CVec& composite_time, std::size_t n_grid, int base, int sps,
                           std::size_t n_ext, int half_width) {
    CVec d(n_ext, Complex{0.0, 0.0});
    const auto ng = static_cast<std::ptrdiff_t>(n_grid);
    for (int k = -half_width; k <= half_width; ++k) {
        std::ptrdiff_t j = static_cast<std::ptrdiff_t>(base) + static_cast<std::ptrdiff_t>(k) * sps;
        j = ((j % ng) + ng) % ng;
        const std::size_t kk = static_cast<std::size_t>(((k % static_cast<int>(n_ext)) +
                                                         static_cast<int>(n_ext)) %
                                                        static_cast<int>(n_ext));
        d[kk] += composite_time[static_cast<std::size_t>(j)];
    }
    CVec D = fft(d);
    for (const auto& v : D)
        if (std::abs(v) < 0.2)
            throw InvalidParameter("matched filter: cascade correction ill-conditioned");
    return D;
}

/// Receive-side grids plus the cascade-correction divisor for one
/// (trace length, taps, mask) configuration. Demodulation reuses these
/// across SIC rounds and frames, so they are cached.
struct MfPlan {
    std::size_t n_grid = 0;
    CVec rx_filter;  // H * M, receive response on the padded grid
    CVec divisor;    // DFT of the folded symbol-domain cascade
    std::size_t n_ext = 0;
    int ext = 0;
};

inline std::uint64_t mf_plan_key(std::size_t trace_len, const RrcTaps& taps, double fs,
                                 const MfOptions& opt, std::size_t n_out) {
    std::uint64_t h = fnv1a64(&trace_len, sizeof(trace_len));
    h = fnv1a64(taps.coefficients.data(), taps.coefficients.size() * sizeof(double), h);
    const double vals[] = {fs,
                           opt.use_mask ? 1.0 : 0.0,
                           opt.mask_lo,
                           opt.mask_hi,
                           opt.mask_transition,
                           opt.nyquist_correction ? 1.0 : 0.0,
                           static_cast<double>(opt.correction_halfwidth),
                           static_cast<double>(n_out)};
    return fnv1a64(vals, sizeof(vals), h);
}

inline std::shared_ptr<const MfPlan> mf_plan(std::size_t trace_len, const RrcTaps& taps, double fs,
                                             const MfOptions& opt, std::size_t n_out) {
    static std::mutex mu;
    static std::map<std::uint64_t, std::shared_ptr<const MfPlan>> cache;

    const std::uint64_t key = mf_plan_key(trace_len, taps, fs, opt, n_out);
    {
        std::lock_guard<std::mutex> lk(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }

    auto plan = std::make_shared<MfPlan>();
    const std::size_t L = taps.size();
    const std::size_t ng = fft_nice_multiple(trace_len + L - 1, static_cast<std::size_t>(taps.sps));
    plan->n_grid = ng;

    CVec h(taps.size());
    for (std::size_t i = 0; i < taps.size(); ++i) h[i] = Complex{taps.coefficients[i], 0.0};
    const CVec H = fft_padded(h, ng);
    RVec mask;
    if (opt.use_mask) mask = band_mask(ng, fs, opt.mask_lo, opt.mask_hi, opt.mask_transition);

    plan->rx_filter.resize(ng);
    CVec composite(ng);
    for (std::size_t k = 0; k < ng; ++k) {
        const double m = opt.use_mask ? mask[k] : 1.0;
        plan->rx_filter[k] = H[k] * m;
        composite[k] = H[k] * H[k] * m;
    }

    if (opt.nyquist_correction) {
        // leading extension of span symbols pushes the circular wrap away
        // from the frame; the trailing extension absorbs the padding up to a
        // fast transform size
        plan->ext = taps.span;
        plan->n_ext = fft_nice_size(n_out + 2 * static_cast<std::size_t>(taps.span));

        const CVec ce = ifft(composite);
        const int hw = std::min<int>(opt.correction_halfwidth,
                                     static_cast<int>(ng / (2 * taps.sps)) - 1);
        plan->divisor =
            symbol_divisor(ce, ng, 2 * taps.delay(), taps.sps, plan->n_ext, hw);
    }

    std::lock_guard<std::mutex> lk(mu);
    if (cache.size() > 12) cache.clear();
    cache.emplace(key, plan);
    return plan;
}

}  // namespace detail

/// Matched-filter demodulation: apply the same RRC taps (optionally after a
/// band mask), sample at symbol centers, and invert the known symbol-domain
/// cascade of the truncated taps so that shape -> matched filter -> sample
/// is unity at symbol centers. symbol_offset shifts the sampling phase
/// within one symbol period.
inline SymbolBlock matched_filter_downsample(const ComplexTrace& trace, const RrcTaps& taps,
                                             int symbol_offset = 0, const MfOptions& opt = {}) {
    const std::size_t L = taps.size();
    if (trace.samples.size() < L)
        throw InsufficientData("matched filter: trace shorter than one filter span");
    require(std::abs(symbol_offset) < taps.sps, "matched filter: offset beyond one symbol");

    const std::ptrdiff_t base_delay =
        (opt.base_delay >= 0) ? opt.base_delay : static_cast<std::ptrdiff_t>(2 * taps.delay());
    const std::ptrdiff_t base = base_delay + symbol_offset;
    require(base >= 0, "matched filter: negative base delay");

    const std::size_t max_sym =
        (trace.samples.size() > static_cast<std::size_t>(base))
            ? (trace.samples.size() - static_cast<std::size_t>(base) + taps.sps - 1) / taps.sps
            : 0;
    const std::size_t n_out = opt.n_symbols == 0 ? max_sym : opt.n_symbols;
    require(n_out > 0 && n_out <= max_sym, "matched filter: no symbols available");

    const auto plan = detail::mf_plan(trace.samples.size(), taps, trace.sample_rate, opt, n_out);
    CVec spec = fft_padded(trace.samples, plan->n_grid);
    for (std::size_t k = 0; k < plan->n_grid; ++k) spec[k] *= plan->rx_filter[k];
    const CVec y = ifft(spec);

    SymbolBlock out;
    out.role = SymbolRole::quantum;
    if (!opt.nyquist_correction) {
        out.symbols.resize(n_out);
        for (std::size_t k = 0; k < n_out; ++k) {
            const std::size_t j = static_cast<std::size_t>(base) + k * taps.sps;
            out.symbols[k] = j < y.size() ? y[j] : Complex{0.0, 0.0};
        }
        return out;
    }

    CVec syms(plan->n_ext, Complex{0.0, 0.0});
    for (std::size_t k = 0; k < plan->n_ext; ++k) {
        const std::ptrdiff_t j =
            base + (static_cast<std::ptrdiff_t>(k) - plan->ext) * taps.sps;
        if (j >= 0 && j < static_cast<std::ptrdiff_t>(y.size()))
            syms[k] = y[static_cast<std::size_t>(j)];
    }
    CVec S = fft(syms);
    for (std::size_t k = 0; k < plan->n_ext; ++k) S[k] /= plan->divisor[k];
    const CVec corrected = ifft(S);
    out.symbols.assign(corrected.begin() + plan->ext, corrected.begin() + plan->ext + n_out);
    return out;
}

/// Per-symbol noise variance produced by the matched-filter chain per unit
/// of white per-sample input variance. Computed exactly on a frame-periodic
/// grid from the realized receive response and cascade correction.
inline double mf_noise_gain(const RrcTaps& taps, std::size_t n_symbols, double fs,
                            const MfOptions& opt = {}) {
    const std::size_t n_ext = n_symbols;  // frame-periodic model
    const std::size_t ng = n_ext * static_cast<std::size_t>(taps.sps);
    CVec h(taps.size());
    for (std::size_t i = 0; i < taps.size(); ++i) h[i] = Complex{taps.coefficients[i], 0.0};
    const CVec H = fft_padded(h, ng);
    RVec mask;
    if (opt.use_mask) mask = detail::band_mask(ng, fs, opt.mask_lo, opt.mask_hi, opt.mask_transition);

    // fold |H*M|^2 and the composite onto the symbol-rate grid
    RVec folded(n_ext, 0.0);
    CVec composite(ng);
    for (std::size_t k = 0; k < ng; ++k) {
        const double m = opt.use_mask ? mask[k] : 1.0;
        folded[k % n_ext] += std::norm(H[k]) * m * m / static_cast<double>(taps.sps);
        composite[k] = H[k] * H[k] * m;
    }
    if (!opt.nyquist_correction) {
        double s = 0.0;
        for (double v : folded) s += v;
        return s / static_cast<double>(n_ext);
    }
    const CVec ce = ifft(composite);
    const int hw = std::min<int>(opt.correction_halfwidth, static_cast<int>(ng / (2 * taps.sps)) - 1);
    const CVec D = detail::symbol_divisor(ce, ng, 2 * taps.delay(), taps.sps, n_ext, hw);
    double s = 0.0;
    for (std::size_t k = 0; k < n_ext; ++k) s += folded[k] / std::norm(D[k]);
    return s / static_cast<double>(n_ext);
}

// ---- small helpers shared by the receiver ---------------------------------

/// Unwrap phases with a pi jump threshold; throws if an adjacent step
/// exceeds max_step after unwrapping (estimation unreliable).
inline RVec unwrap_phase(const RVec& wrapped, double max_step = M_PI) {
    RVec out(wrapped.size());
    if (wrapped.empty()) return out;
    out[0] = wrapped[0];
    for (std::size_t k = 1; k < wrapped.size(); ++k) {
        double d = wrapped[k] - wrapped[k - 1];
        while (d > M_PI) d -= 2.0 * M_PI;
        while (d < -M_PI) d += 2.0 * M_PI;
        if (std::abs(d) > max_step)
            throw UnwrapFailure("unwrap_phase: adjacent jump exceeds threshold");
        out[k] = out[k - 1] + d;
    }
    return out;
}

/// Centered moving average with edge shrinking.
inline RVec moving_average(const RVec& x, int window) {
    if (window <= 1 || x.size() <= 1) return x;
    RVec cum(x.size() + 1, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) cum[i + 1] = cum[i] + x[i];
    RVec out(x.size());
    const int hw = window / 2;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t lo = i > static_cast<std::size_t>(hw) ? i - hw : 0;
        const std::size_t hi = std::min(x.size(), i + static_cast<std::size_t>(hw) + 1);
        out[i] = (cum[hi] - cum[lo]) / static_cast<double>(hi - lo);
    }
    return out;
}

inline CVec moving_average(const CVec& x, int window) {
    if (window <= 1 || x.size() <= 1) return x;
    CVec cum(x.size() + 1, Complex{0.0, 0.0});
    for (std::size_t i = 0; i < x.size(); ++i) cum[i + 1] = cum[i] + x[i];
    CVec out(x.size());
    const int hw = window / 2;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t lo = i > static_cast<std::size_t>(hw) ? i - hw : 0;
        const std::size_t hi = std::min(x.size(), i + static_cast<std::size_t>(hw) + 1);
        out[i] = (cum[hi] - cum[lo]) / static_cast<double>(hi - lo);
    }
    return out;
}

}  // namespace cvqkd
