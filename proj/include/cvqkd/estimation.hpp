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

#include "cvqkd/channel.hpp"
#include "cvqkd/common.hpp"
#include "cvqkd/numerics.hpp"
#include "cvqkd/rng.hpp"
#include "cvqkd/rx.hpp"
#include "cvqkd/turbulence.hpp"

namespace cvqkd {

/// Aggregate noise breakdown of one estimation block.
struct NoiseBudget {
    double excess_noise = 0.0;          ///< epsilon at Alice [SNU]
    double imbalance_noise = 0.0;       ///< Var[eps_q1] at Alice [SNU]
    double fading_noise = 0.0;          ///< eps_f [SNU]
    std::size_t block_size = 0;
};

/// Modulation-imbalance noise referred to the sender:
/// (V_A / 2) [d^2 sin^2(theta) + (d cos(theta) - 1)^2].
inline double min_variance(double d, double theta_m, double v_a) {
    require(d > 0, "min_variance: d must be positive");
    const double s = d * std::sin(theta_m);
    const double c = d * std::cos(theta_m) - 1.0;
    return v_a / 2.0 * (s * s + c * c);
}

struct ExcessNoiseOptions {
    double noise_gain = 1.0;  ///< per-symbol detection-noise gain of the demod chain
    int guard = 0;            ///< symbols excluded at each edge
    const std::vector<char>* fade_flag = nullptr;
};

/// Method-of-moments excess noise referred to the channel input:
/// eps = [Var(rx) - mean(T) eta V_A_hat - kappa (1 + nu_el)] / (mean(T) eta),
/// with V_A_hat the realized transmit variance. Negative estimates are
/// reported as-is.
inline double estimate_excess_noise(const SymbolBlock& tx_syms, const SymbolBlock& rx_syms,
                                    const TransmittanceSeries& t_series, const DetectorModel& det,
                                    const ExcessNoiseOptions& opt = {}) {
    require(tx_syms.size() == rx_syms.size(), "estimate_excess_noise: blocks must align");
    require(t_series.t.size() == rx_syms.size(), "estimate_excess_noise: T series must align");
    const int guard = std::max(opt.guard, t_series.guard);

    double var_rx = 0.0, va_hat = 0.0, t_mean = 0.0;
    std::size_t n = 0;
    for (std::size_t i = guard; i + guard < rx_syms.size(); ++i) {
        if (opt.fade_flag && (*opt.fade_flag)[i]) continue;
        var_rx += std::norm(rx_syms.symbols[i]);
        va_hat += std::norm(tx_syms.symbols[i]);
        t_mean += t_series.t[i];
        ++n;
    }
    require(n > 1, "estimate_excess_noise: no usable symbols");
    var_rx /= static_cast<double>(n);
    va_hat /= static_cast<double>(n);
    t_mean /= static_cast<double>(n);

    const double denom = t_mean * det.eta;
    if (denom < 1e-12) throw UnreliableEstimate("estimate_excess_noise: mean(T) eta below floor");
    const double noise_floor = opt.noise_gain * det.noise_variance();
    return (var_rx - denom * va_hat - noise_floor) / denom;
}

/// Empirical fading-noise distribution per the segment procedure: draw
/// random contiguous segments of length n_c from the transmittance trace and
/// evaluate eps_f = Var(sqrt(T)) (V_A - 1) on each.
inline RVec fading_noise(const RVec& t_trace, double v_a, std::size_t n_c, std::size_t trials,
                         std::uint64_t seed) {
    require(n_c >= 1 && n_c <= t_trace.size(), "fading_noise: segment length out of range");
    require(trials >= 1, "fading_noise: trials must be >= 1");
    Rng rng(seed);
    RVec out(trials);
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t max_start = t_trace.size() - n_c;
        const std::size_t start =
            max_start == 0 ? 0 : static_cast<std::size_t>(rng.next_u64() % (max_start + 1));
        double m_t = 0.0, m_rt = 0.0;
        for (std::size_t i = start; i < start + n_c; ++i) {
            m_t += t_trace[i];
            m_rt += std::sqrt(t_trace[i]);
        }
        m_t /= static_cast<double>(n_c);
        m_rt /= static_cast<double>(n_c);
        const double var_rt = m_t - m_rt * m_rt;  // mean(T) - mean(sqrt(T))^2
        out[t] = var_rt * (v_a - 1.0);
    }
    return out;
}

/// Single-segment fading noise over a full trace.
inline double fading_noise_full(const RVec& t_trace, double v_a) {
    return fading_noise(t_trace, v_a, t_trace.size(), 1, 1)[0];
}

// ---- transmittance statistics -------------------------------------------------

struct WeibullFit {
    double t0_sq = 0.0;
    double lambda = 0.0;
    double radius = 0.0;
    double sigma_sq = 0.0;
    bool valid = false;
};

/// dB-domain histogram of transmittance samples plus an optional
/// maximum-likelihood refit of the wander-law parameters.
struct TransmittanceStats {
    RVec bin_low_db;
    RVec bin_high_db;
    RVec probability;
    std::optional<WeibullFit> fitted;
};

inline WeibullFit fit_weibull(const RVec& t_samples, const TurbulenceModel& model);

inline TransmittanceStats transmittance_stats(const RVec& t_samples, double bin_width_db,
                                              const TurbulenceModel* fit_model = nullptr) {
    require(!t_samples.empty(), "transmittance_stats: no samples");
    require(bin_width_db > 0, "transmittance_stats: bin width must be positive");

    double lo = 1e308, hi = -1e308;
    for (double t : t_samples) {
        require(t > 0, "transmittance_stats: samples must be positive");
        const double db = lin_to_db(t);
        lo = std::min(lo, db);
        hi = std::max(hi, db);
    }
    const double first = std::floor(lo / bin_width_db) * bin_width_db;
    const std::size_t n_bins =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((hi - first) / bin_width_db)) +
                                     (hi == first ? 1 : 0));

    TransmittanceStats st;
    st.bin_low_db.resize(n_bins);
    st.bin_high_db.resize(n_bins);
    st.probability.assign(n_bins, 0.0);
    for (std::size_t b = 0; b < n_bins; ++b) {
        st.bin_low_db[b] = first + static_cast<double>(b) * bin_width_db;
        st.bin_high_db[b] = st.bin_low_db[b] + bin_width_db;
    }
    for (double t : t_samples) {
        const double db = lin_to_db(t);
        auto b = static_cast<std::size_t>((db - first) / bin_width_db);
        if (b >= n_bins) b = n_bins - 1;
        st.probability[b] += 1.0;
    }
    for (auto& p : st.probability) p /= static_cast<double>(t_samples.size());

    if (fit_model != nullptr) st.fitted = fit_weibull(t_samples, *fit_model);
    return st;
}

/// Maximum-likelihood refit of (lambda, sigma^2) with T0^2 and R fixed from
/// geometry; only R^2/sigma^2 and lambda are identifiable from samples, so R
/// is pinned and sigma^2 reported. Returns invalid on failure (the
/// histogram stays the primary product).
inline WeibullFit fit_weibull(const RVec& t_samples, const TurbulenceModel& model) {
    WeibullFit fit;
    const WanderLaw law = model.law();
    fit.t0_sq = law.t0_sq;
    fit.radius = law.radius;
    const double loss = model.static_loss();

    // log-likelihood in (log lambda, log k), k = R^2 / sigma^2
    auto nll = [&](const RVec& p) {
        const double lambda = std::exp(p[0]);
        const double k = std::exp(p[1]);
        if (!(lambda > 0.05 && lambda < 50 && k > 1e-12 && k < 1e12)) return 1e18;
        double ll = 0.0;
        for (double ts : t_samples) {
            const double t = ts / loss;
            if (!(t > 0) || t >= law.t0_sq) return 1e18;
            const double lg = std::log(law.t0_sq / t);
            const double pw = 2.0 / lambda;
            ll += std::log(k / lambda) - std::log(t) + (pw - 1.0) * std::log(lg) -
                  0.5 * k * std::pow(lg, pw);
        }
        return -ll;
    };
    try {
        const double k0 = law.radius * law.radius / model.wander_variance();
        const RVec best = nelder_mead(nll, RVec{std::log(law.lambda), std::log(k0)}, 0.3);
        fit.lambda = std::exp(best[0]);
        fit.sigma_sq = law.radius * law.radius / std::exp(best[1]);
        fit.valid = std::isfinite(fit.lambda) && std::isfinite(fit.sigma_sq) && fit.sigma_sq > 0;
    } catch (const Error&) {
        fit.valid = false;
    }
    return fit;
}

// ---- binned vs average estimation ---------------------------------------------

/// Outcome of the two-convention comparison on fluctuating channels: the
/// average-transmittance method references the amplitude-mean (E sqrt(T))^2
/// channel gain, so transmittance fluctuation inside the block surfaces as
/// extra noise relative to per-bin estimation.
struct BinnedNoiseComparison {
    double eps_average = 0.0;
    double eps_binned = 0.0;
    double fading_prediction = 0.0;  ///< Var(sqrt(T)) (V_A - 1) / (E sqrt(T))^2
    RVec bin_eps;
    RVec bin_t;
    RVec bin_weight;
};

inline BinnedNoiseComparison compare_binned_average(const SymbolBlock& tx_syms,
                                                    const SymbolBlock& rx_syms,
                                                    const TransmittanceSeries& t_series,
                                                    const DetectorModel& det, double bin_width_db,
                                                    const ExcessNoiseOptions& opt = {}) {
    require(tx_syms.size() == rx_syms.size() && t_series.t.size() == rx_syms.size(),
            "compare_binned_average: inputs must align");
    const int guard = std::max(opt.guard, t_series.guard);
    BinnedNoiseComparison cmp;

    // average-T method: gain referenced to the amplitude mean
    double var_rx = 0.0, va_hat = 0.0, mean_rt = 0.0, mean_t = 0.0;
    std::size_t n = 0;
    for (std::size_t i = guard; i + guard < rx_syms.size(); ++i) {
        if (opt.fade_flag && (*opt.fade_flag)[i]) continue;
        var_rx += std::norm(rx_syms.symbols[i]);
        va_hat += std::norm(tx_syms.symbols[i]);
        mean_rt += std::sqrt(std::max(t_series.t[i], 0.0));
        mean_t += t_series.t[i];
        ++n;
    }
    require(n > 1, "compare_binned_average: no usable symbols");
    var_rx /= static_cast<double>(n);
    va_hat /= static_cast<double>(n);
    mean_rt /= static_cast<double>(n);
    mean_t /= static_cast<double>(n);
    const double t_eq = mean_rt * mean_rt;
    const double denom = t_eq * det.eta;
    if (denom < 1e-12) throw UnreliableEstimate("compare_binned_average: gain below floor");
    const double v_a = va_hat;
    cmp.eps_average = (var_rx - denom * va_hat - opt.noise_gain * det.noise_variance()) / denom;
    cmp.fading_prediction = (mean_t - t_eq) * (v_a - 1.0) / t_eq;

    // binned method: group symbols by T_i in dB bins, estimate per bin
    double lo_db = 1e308, hi_db = -1e308;
    for (std::size_t i = guard; i + guard < t_series.t.size(); ++i) {
        if (t_series.t[i] <= 0) continue;
        const double db = lin_to_db(t_series.t[i]);
        lo_db = std::min(lo_db, db);
        hi_db = std::max(hi_db, db);
    }
    const auto n_bins = static_cast<std::size_t>(std::ceil((hi_db - lo_db) / bin_width_db)) + 1;
    std::vector<double> b_var(n_bins, 0.0), b_va(n_bins, 0.0), b_t(n_bins, 0.0);
    std::vector<std::size_t> b_n(n_bins, 0);
    for (std::size_t i = guard; i + guard < rx_syms.size(); ++i) {
        if (opt.fade_flag && (*opt.fade_flag)[i]) continue;
        if (t_series.t[i] <= 0) continue;
        auto b = static_cast<std::size_t>((lin_to_db(t_series.t[i]) - lo_db) / bin_width_db);
        if (b >= n_bins) b = n_bins - 1;
        b_var[b] += std::norm(rx_syms.symbols[i]);
        b_va[b] += std::norm(tx_syms.symbols[i]);
        b_t[b] += t_series.t[i];
        ++b_n[b];
    }
    double eps_w = 0.0, w_tot = 0.0;
    for (std::size_t b = 0; b < n_bins; ++b) {
        if (b_n[b] < 100) continue;  // skip starving bins
        const double nn = static_cast<double>(b_n[b]);
        const double tb = b_t[b] / nn;
        const double den = tb * det.eta;
        if (den < 1e-12) continue;
        const double eps_b =
            (b_var[b] / nn - den * (b_va[b] / nn) - opt.noise_gain * det.noise_variance()) / den;
        cmp.bin_eps.push_back(eps_b);
        cmp.bin_t.push_back(tb);
        cmp.bin_weight.push_back(nn);
        eps_w += eps_b * nn;
        w_tot += nn;
    }
    require(w_tot > 0, "compare_binned_average: all bins starved");
    cmp.eps_binned = eps_w / w_tot;
    for (auto& w : cmp.bin_weight) w /= w_tot;
    return cmp;
}

}  // namespace cvqkd
