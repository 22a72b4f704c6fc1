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
#include <vector>

#include "cvqkd/common.hpp"

namespace cvqkd {

/// G(x) = (x + 1) log2(x + 1) - x log2(x), extended continuously by
/// G(0) = 0.
inline double g_function(double x) {
    if (x < 0) {
        if (x > -1e-12) return 0.0;  // clamp tiny negatives from eigenvalue roundoff
        throw InvalidParameter("g_function: negative argument");
    }
    if (x == 0.0) return 0.0;
    return (x + 1.0) * std::log2(x + 1.0) - x * std::log2(x);
}

/// Inputs of the key-rate stack. T is the channel power transmittance,
/// epsilon the excess noise at the channel input, eta/nu_el the trusted
/// heterodyne detector, beta/FER the reconciliation constants.
struct SkrInput {
    double v_a = 12.4;
    double t = 1.0;
    double epsilon = 0.0;
    double eta = 0.56;
    double nu_el = 0.1;
    double beta = 0.96;
    double fer = 0.30;
    double f_m = 1e9;
    bool asymptotic = true;
    double n_block = 1e6;
    double eps_smooth = 1e-10;
    double eps_pe = 1e-10;

    void validate() const {
        require(v_a > 0, "skr: V_A must be positive");
        require(t > 0 && t <= 1.0, "skr: T must be in (0, 1]");
        require(eta > 0 && eta <= 1.0, "skr: eta must be in (0, 1]");
        require(nu_el >= 0, "skr: nu_el must be >= 0");
        require(beta > 0 && beta <= 1.0, "skr: beta must be in (0, 1]");
        require(fer >= 0 && fer < 1.0 + 1e-12, "skr: FER must be in [0, 1]");
        require(f_m > 0, "skr: F_m must be positive");
        if (!asymptotic) {
            require(n_block >= 1, "skr: block size must be >= 1");
            require(eps_smooth > 0 && eps_smooth < 1, "skr: eps_smooth in (0, 1)");
            require(eps_pe > 0 && eps_pe < 1, "skr: eps_pe in (0, 1)");
        }
    }

    double v() const { return v_a + 1.0; }
    double chi_het() const { return (1.0 + (1.0 - eta) + 2.0 * nu_el) / eta; }
    double chi_line() const { return 1.0 / t - 1.0 + epsilon; }
    double chi_tot() const { return chi_line() + chi_het() / t; }
};

/// Full key-rate breakdown with all intermediates preserved for audit.
struct SkrReport {
    double i_ab = 0.0;       ///< bits/symbol
    double kappa_be = 0.0;   ///< bits/symbol
    double lambda[5] = {0, 0, 0, 0, 1};
    double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
    double delta_n = 0.0;    ///< bits/symbol
    double bracket = 0.0;    ///< beta I_AB - kappa_BE - Delta(n), raw
    double rate = 0.0;       ///< bits/s, floored at zero
    double chi_het = 0.0, chi_line = 0.0, chi_tot = 0.0;
};

/// Shannon mutual information of the heterodyne channel,
/// I_AB = log2[(V + chi_tot) / (1 + chi_tot)].
inline double mutual_information(const SkrInput& in) {
    in.validate();
    return std::log2((in.v() + in.chi_tot()) / (1.0 + in.chi_tot()));
}

struct HolevoResult {
    double kappa_be = 0.0;
    double lambda[5] = {0, 0, 0, 0, 1};
    double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
};

/// Holevo bound for collective attacks against reverse reconciliation with a
/// trusted heterodyne detector. The C intermediate uses the
/// [T (V + chi_tot)]^2 denominator; the transcription with chi_tot squared
/// inside the parenthesis produces symplectic eigenvalues below one and a
/// negative bound, so the physical form is used.
inline HolevoResult holevo_bound(const SkrInput& in) {
    in.validate();
    const double v = in.v();
    const double t = in.t;
    const double chl = in.chi_line();
    const double chh = in.chi_het();
    const double cht = in.chi_tot();

    HolevoResult r;
    r.a = v * v * (1.0 - 2.0 * t) + 2.0 * t + t * t * (v + chl) * (v + chl);
    r.b = t * t * (v * chl + 1.0) * (v * chl + 1.0);
    const double sqrt_b = std::sqrt(r.b);
    const double num = r.a * chh * chh + r.b + 1.0 +
                       2.0 * chh * (v * sqrt_b + t * (v + chl)) + 2.0 * t * (v * v - 1.0);
    const double tv = t * (v + cht);
    r.c = num / (tv * tv);
    r.d = (v + sqrt_b * chh) / tv;
    r.d *= r.d;

    auto eig_pair = [](double s, double p, double& hi, double& lo) {
        double disc = s * s - 4.0 * p;
        if (disc < 0) {
            if (disc < -1e-9 * std::max(1.0, s * s))
                throw NonphysicalCovariance("holevo_bound: negative discriminant");
            disc = 0.0;
        }
        const double root = std::sqrt(disc);
        hi = std::sqrt(std::max((s + root) / 2.0, 0.0));
        lo = std::sqrt(std::max((s - root) / 2.0, 0.0));
    };
    eig_pair(r.a, r.b, r.lambda[0], r.lambda[1]);
    eig_pair(r.c, r.d, r.lambda[2], r.lambda[3]);
    r.lambda[4] = 1.0;

    r.kappa_be = g_function((r.lambda[0] - 1.0) / 2.0) + g_function((r.lambda[1] - 1.0) / 2.0) -
                 g_function((r.lambda[2] - 1.0) / 2.0) - g_function((r.lambda[3] - 1.0) / 2.0) -
                 g_function((r.lambda[4] - 1.0) / 2.0);
    return r;
}

/// Finite-size penalty Delta(n) = 7 sqrt(log2(1/eps_smooth)/n) +
/// (2/n) log2(1/eps_pe); zero in the asymptotic regime.
inline double finite_size_delta(double n, double eps_smooth, double eps_pe) {
    require(n >= 1, "finite_size_delta: n must be >= 1");
    require(eps_smooth > 0 && eps_smooth < 1 && eps_pe > 0 && eps_pe < 1,
            "finite_size_delta: security parameters must be in (0, 1)");
    return 7.0 * std::sqrt(std::log2(1.0 / eps_smooth) / n) + 2.0 / n * std::log2(1.0 / eps_pe);
}

/// Secret key rate R = F_m (1 - FER) [beta I_AB - kappa_BE - Delta(n)].
/// A negative bracket reports R = 0 with the raw bracket preserved.
inline SkrReport secret_key_rate(const SkrInput& in) {
    in.validate();
    SkrReport rep;
    rep.chi_het = in.chi_het();
    rep.chi_line = in.chi_line();
    rep.chi_tot = in.chi_tot();
    rep.i_ab = mutual_information(in);
    const HolevoResult h = holevo_bound(in);
    rep.kappa_be = h.kappa_be;
    for (int i = 0; i < 5; ++i) rep.lambda[i] = h.lambda[i];
    rep.a = h.a;
    rep.b = h.b;
    rep.c = h.c;
    rep.d = h.d;
    rep.delta_n = in.asymptotic ? 0.0 : finite_size_delta(in.n_block, in.eps_smooth, in.eps_pe);
    rep.bracket = in.beta * rep.i_ab - rep.kappa_be - rep.delta_n;
    rep.rate = in.f_m * (1.0 - in.fer) * std::max(rep.bracket, 0.0);
    return rep;
}

/// One transmittance bin of the final-rate sum.
struct TransmittanceBin {
    double t_center_db = 0.0;
    double probability = 0.0;
    double epsilon = 0.0;
};

struct TransmittanceBinning {
    std::vector<TransmittanceBin> bins;
    void validate() const {
        double p = 0.0;
        for (const auto& b : bins) {
            require(b.probability >= 0, "binning: probabilities must be >= 0");
            p += b.probability;
        }
        require(p <= 1.0 + 1e-9, "binning: probabilities exceed 1");
    }
};

/// Probability-weighted final rate over transmittance bins; negative-bracket
/// bins contribute zero.
inline double binned_final_rate(const TransmittanceBinning& binning, const SkrInput& tmpl) {
    binning.validate();
    double r = 0.0;
    for (const auto& b : binning.bins) {
        if (b.probability == 0.0) continue;
        SkrInput in = tmpl;
        in.t = db_to_lin(b.t_center_db);
        in.epsilon = b.epsilon;
        r += b.probability * secret_key_rate(in).rate;
    }
    return r;
}

}  // namespace cvqkd
