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
#include <functional>
#include <limits>
#include <vector>

#include "cvqkd/common.hpp"

namespace cvqkd {

/// Tanh-sinh (double-exponential) quadrature on (a, b). Handles integrable
/// endpoint singularities, which the Weibull transmittance density has at
/// its upper support edge. Levels are re-evaluated from scratch; the
/// integrands here are cheap.
inline double integrate_tanh_sinh(const std::function<double(double)>& f, double a, double b,
                                  int max_level = 14) {
    require(b > a, "integrate_tanh_sinh: empty interval");
    const double c = 0.5 * (b - a);
    double best = 0.0;
    double last = std::numeric_limits<double>::infinity();
    for (int lev = 5; lev <= max_level; ++lev) {
        const double h = 1.0 / static_cast<double>(1 << (lev - 5));
        const int kmax = static_cast<int>(std::ceil(6.0 / h));
        double s = 0.0;
        for (int k = -kmax; k <= kmax; ++k) {
            const double t = k * h;
            const double u = (M_PI / 2.0) * std::sinh(t);
            const double ch = std::cosh(u);
            const double w = (M_PI / 2.0) * std::cosh(t) / (ch * ch);
            if (!(w > 1e-300)) continue;
            // endpoint distance computed stably: 1 - |tanh(u)| = 2 e^{-2|u|} / (1 + e^{-2|u|})
            const double e2 = std::exp(-2.0 * std::abs(u));
            const double edge = 2.0 * e2 / (1.0 + e2);  // = 1 - |x|
            const double xx = (u >= 0.0) ? b - c * edge : a + c * edge;
            if (xx <= a || xx >= b) continue;
            s += w * f(xx);
        }
        best = s * h * c;
        if (std::abs(best - last) < 1e-13 * (std::abs(best) + 1.0)) break;
        last = best;
    }
    return best;
}

/// Exponentially scaled modified Bessel functions e^(-x) I_nu(x), nu = 0, 1,
/// x >= 0. Power series for moderate x, asymptotic expansion beyond; the
/// scaling keeps the turbulence-parameter formulas finite for tight beams
/// (large a^2/W^2).
inline double bessel_i0e(double x) {
    x = std::abs(x);
    if (x < 25.0) {
        double term = 1.0, sum = 1.0;
        const double q = x * x / 4.0;
        for (int k = 1; k < 300; ++k) {
            term *= q / (static_cast<double>(k) * k);
            sum += term;
            if (term < sum * 1e-18) break;
        }
        return sum * std::exp(-x);
    }
    const double ix = 1.0 / (8.0 * x);
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < 24; ++k) {
        term *= (2.0 * k - 1.0) * (2.0 * k - 1.0) * ix / k;
        sum += term;
        if (std::abs(term) < 1e-18) break;
    }
    return sum / std::sqrt(2.0 * M_PI * x);
}

inline double bessel_i1e(double x) {
    const double ax = std::abs(x);
    double r;
    if (ax < 25.0) {
        double term = ax / 2.0, sum = term;
        const double q = ax * ax / 4.0;
        for (int k = 1; k < 300; ++k) {
            term *= q / (static_cast<double>(k) * (k + 1.0));
            sum += term;
            if (term < sum * 1e-18) break;
        }
        r = sum * std::exp(-ax);
    } else {
        // t_k / t_{k-1} = ((2k-1)^2 - 4) / (8 k x) for nu = 1
        const double ix = 1.0 / (8.0 * ax);
        double term = 1.0, sum = 1.0;
        for (int k = 1; k < 24; ++k) {
            term *= ((2.0 * k - 1.0) * (2.0 * k - 1.0) - 4.0) * ix / k;
            sum += term;
            if (std::abs(term) < 1e-18) break;
        }
        r = sum / std::sqrt(2.0 * M_PI * ax);
    }
    return x < 0 ? -r : r;
}

/// Regularized lower incomplete gamma P(a, x); used for chi-square p-values.
inline double gammainc_lower(double a, double x) {
    if (x < 0 || a <= 0) throw InvalidParameter("gammainc_lower: bad arguments");
    if (x == 0) return 0.0;
    if (x < a + 1.0) {
        double term = 1.0 / a, sum = term;
        for (int k = 1; k < 2000; ++k) {
            term *= x / (a + k);
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-16) break;
        }
        return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
    // continued fraction for Q(a, x), modified Lentz
    const double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i < 2000; ++i) {
        const double an = -static_cast<double>(i) * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return 1.0 - std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

/// Survival function of chi-square with dof degrees of freedom.
inline double chi2_sf(double stat, double dof) {
    return 1.0 - gammainc_lower(dof / 2.0, stat / 2.0);
}

/// Nelder-Mead simplex minimizer for small smooth problems (Weibull MLE).
inline RVec nelder_mead(const std::function<double(const RVec&)>& f, RVec x0, double step = 0.25,
                        int max_iter = 2000, double tol = 1e-10) {
    const std::size_t n = x0.size();
    std::vector<RVec> pts(n + 1, x0);
    for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += (x0[i] != 0.0 ? step * std::abs(x0[i]) : step);
    RVec val(n + 1);
    for (std::size_t i = 0; i <= n; ++i) val[i] = f(pts[i]);

    for (int it = 0; it < max_iter; ++it) {
        std::vector<std::size_t> ord(n + 1);
        for (std::size_t i = 0; i <= n; ++i) ord[i] = i;
        std::sort(ord.begin(), ord.end(), [&](auto x, auto y) { return val[x] < val[y]; });
        const std::size_t best = ord[0], worst = ord[n], second = ord[n - 1];
        if (std::abs(val[worst] - val[best]) < tol * (std::abs(val[best]) + tol)) break;

        RVec centroid(n, 0.0);
        for (std::size_t i = 0; i <= n; ++i)
            if (i != worst)
                for (std::size_t j = 0; j < n; ++j) centroid[j] += pts[i][j] / static_cast<double>(n);

        auto blend = [&](double t) {
            RVec p(n);
            for (std::size_t j = 0; j < n; ++j) p[j] = centroid[j] + t * (pts[worst][j] - centroid[j]);
            return p;
        };
        const RVec xr = blend(-1.0);
        const double fr = f(xr);
        if (fr < val[best]) {
            const RVec xe = blend(-2.0);
            const double fe = f(xe);
            if (fe < fr) {
                pts[worst] = xe;
                val[worst] = fe;
            } else {
                pts[worst] = xr;
                val[worst] = fr;
            }
        } else if (fr < val[second]) {
            pts[worst] = xr;
            val[worst] = fr;
        } else {
            const RVec xc = blend(0.5);
            const double fc = f(xc);
            if (fc < val[worst]) {
                pts[worst] = xc;
                val[worst] = fc;
            } else {
                for (std::size_t i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    for (std::size_t j = 0; j < n; ++j)
                        pts[i][j] = pts[best][j] + 0.5 * (pts[i][j] - pts[best][j]);
                    val[i] = f(pts[i]);
                }
            }
        }
    }
    std::size_t bi = 0;
    for (std::size_t i = 1; i < val.size(); ++i)
        if (val[i] < val[bi]) bi = i;
    return pts[bi];
}

}  // namespace cvqkd
