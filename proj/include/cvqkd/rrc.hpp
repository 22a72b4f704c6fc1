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

namespace cvqkd {

/// Root-raised-cosine filter taps. Length sps*span + 1, symmetric,
/// normalized to unit energy (sum h^2 = 1); all static gain is calibrated
/// out downstream by the loopback-unity convention.
struct RrcTaps {
    RVec coefficients;
    int sps = 0;
    int span = 0;

    std::size_t size() const { return coefficients.size(); }
    /// Group delay in samples, (length - 1) / 2.
    int delay() const { return (static_cast<int>(coefficients.size()) - 1) / 2; }
};

/// Closed-form RRC impulse response at offset t (in symbol periods) from the
/// center tap, before normalization. Three analytic cases: center, the
/// |4*alpha*t| = 1 singular points, and the generic expression.
inline double rrc_impulse(double t, double alpha) {
    const double x = 4.0 * alpha * t;
    if (std::abs(t) < 1e-12) {
        return 1.0 - alpha + 4.0 * alpha / M_PI;
    }
    if (std::abs(std::abs(x) - 1.0) < 1e-9) {
        const double a = (1.0 + 2.0 / M_PI) * std::sin(M_PI / (4.0 * alpha));
        const double b = (1.0 - 2.0 / M_PI) * std::cos(M_PI / (4.0 * alpha));
        return alpha / std::sqrt(2.0) * (a + b);
    }
    const double num = std::sin(M_PI * t * (1.0 - alpha)) + x * std::cos(M_PI * t * (1.0 + alpha));
    const double den = M_PI * t * (1.0 - x * x);
    return num / den;
}

/// Design an RRC filter with unit-energy taps. The taps follow the standard
/// closed form; the cascade of two copies satisfies the Nyquist zero-ISI
/// criterion up to truncation, which the matched filter corrects exactly
/// (see dsp.hpp).
inline RrcTaps design_rrc(double alpha, int sps, int span) {
    require(alpha > 0.0 && alpha <= 1.0, "design_rrc: roll-off must be in (0, 1]");
    require(sps >= 1, "design_rrc: sps must be >= 1");
    require(span >= 2 && span % 2 == 0, "design_rrc: span must be even and >= 2");

    const int len = sps * span + 1;
    RrcTaps taps;
    taps.sps = sps;
    taps.span = span;
    taps.coefficients.resize(len);

    const int center = sps * span / 2;
    double energy = 0.0;
    for (int n = 0; n < len; ++n) {
        const double t = static_cast<double>(n - center) / sps;
        const double h = rrc_impulse(t, alpha);
        taps.coefficients[n] = h;
        energy += h * h;
    }
    const double s = 1.0 / std::sqrt(energy);
    for (auto& h : taps.coefficients) h *= s;
    // enforce exact symmetry against rounding asymmetries
    for (int n = 0; n < len / 2; ++n) {
        const double v = 0.5 * (taps.coefficients[n] + taps.coefficients[len - 1 - n]);
        taps.coefficients[n] = v;
        taps.coefficients[len - 1 - n] = v;
    }
    return taps;
}

}  // namespace cvqkd
