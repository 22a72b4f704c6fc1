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
#include "cvqkd/numerics.hpp"
#include "cvqkd/rng.hpp"

namespace cvqkd {

/// Beam-wander variance for weak turbulence:
/// sigma^2 = 1.919 Cn^2 z^3 (2 W0)^(-1/3).
inline double scintillation_sigma(double cn2, double z, double w0) {
    require(cn2 > 0 && z >= 0 && w0 > 0, "scintillation_sigma: inputs must be positive");
    return 1.919 * cn2 * z * z * z * std::pow(2.0 * w0, -1.0 / 3.0);
}

/// Derived constants of the aperture-coupling law
/// T^2(r) = T0^2 exp[-(r/R)^lambda].
struct WanderLaw {
    double t0_sq = 1.0;   ///< maximum power transmittance T0^2
    double lambda = 1.0;  ///< shape exponent
    double radius = 1.0;  ///< scale R [m]
};

/// Maximum transmittance and the (lambda, R) constants from aperture radius
/// a and received beam radius W, via exponentially scaled modified Bessel
/// functions (stable for tight beams where 4 a^2/W^2 is large).
inline WanderLaw turbulence_params(double a, double w) {
    require(a > 0 && w > 0, "turbulence_params: a and W must be positive");
    const double u = 4.0 * a * a / (w * w);
    WanderLaw law;
    law.t0_sq = 1.0 - std::exp(-u / 2.0);  // 1 - exp(-2 a^2 / W^2)
    const double i0e = bessel_i0e(u);
    const double i1e = bessel_i1e(u);
    const double denom = 1.0 - i0e;        // 1 - exp(-u) I0(u)
    require(denom > 0, "turbulence_params: degenerate geometry");
    const double log_term = std::log(2.0 * law.t0_sq / denom);
    require(log_term > 0, "turbulence_params: aperture law undefined for this geometry");
    law.lambda = 2.0 * u * (i1e / denom) / log_term;
    law.radius = a * std::pow(log_term, -1.0 / law.lambda);
    return law;
}

/// Geometric and atmospheric parameters plus the derived wander law.
struct TurbulenceModel {
    double aperture_radius = 0.125;  ///< a [m]
    double beam_radius = 0.1038;     ///< W at the receiver [m]
    double beam_waist = 0.0625;      ///< W0 at the transmitter [m]
    double path_length = 10500.0;    ///< z [m]
    double cn2 = 1e-15;              ///< refractive-index structure constant [m^-2/3]
    double sigma_sq = 0.0;           ///< beam-wander variance [m^2]; 0 = derive from Cn^2
    double extra_loss_db = 14.0;     ///< static coupling/absorption loss [dB]

    WanderLaw law() const { return turbulence_params(aperture_radius, beam_radius); }

    double wander_variance() const {
        if (sigma_sq > 0) return sigma_sq;
        return scintillation_sigma(cn2, path_length, beam_waist);
    }

    double static_loss() const { return std::pow(10.0, -extra_loss_db / 10.0); }

    void validate() const {
        require(aperture_radius > 0 && beam_radius > 0 && beam_waist > 0 && path_length > 0,
                "turbulence: lengths must be positive");
        require(wander_variance() > 0, "turbulence: wander variance must be positive");
        const WanderLaw l = law();
        require(l.t0_sq > 0 && l.t0_sq <= 1.0 && l.lambda > 0 && l.radius > 0,
                "turbulence: derived law out of range");
    }
};

/// Probability density of the power transmittance under beam wander
/// (log-negative Weibull law), before static loss. t is the power
/// transmittance in (0, T0^2]; density is zero outside.
///
/// With amplitude transmittance T = sqrt(t) and T0 = sqrt(T0^2), this is the
/// textbook form (2 R^2)/(sigma^2 lambda T) (2 ln(T0/T))^(2/lambda - 1)
/// exp[-R^2/(2 sigma^2) (2 ln(T0/T))^(2/lambda)] re-expressed in t.
inline double transmittance_pdf(double t, const TurbulenceModel& model) {
    const WanderLaw law = model.law();
    const double s2 = model.wander_variance();
    if (!(t > 0.0) || t > law.t0_sq) return 0.0;
    const double lg = std::log(law.t0_sq / t);  // = 2 ln(T0/T)
    const double r2 = law.radius * law.radius;
    const double p = 2.0 / law.lambda;
    if (lg == 0.0) return 0.0;  // upper support edge; density defined a.e.
    return (r2 / (s2 * law.lambda * t)) * std::pow(lg, p - 1.0) *
           std::exp(-r2 / (2.0 * s2) * std::pow(lg, p));
}

/// Quadrature of the transmittance pdf over its support (sanity: = 1), or
/// of t^k * pdf for moments.
inline double transmittance_pdf_moment(const TurbulenceModel& model, int k = 0) {
    // substitute s = ln(T0^2 / t): P(t) dt = c p s^(p-1) exp(-c s^p) ds, which
    // keeps full precision at the singular upper support edge
    const WanderLaw law = model.law();
    const double s2 = model.wander_variance();
    const double c = law.radius * law.radius / (2.0 * s2);
    const double p = 2.0 / law.lambda;
    const double kk = static_cast<double>(k);
    const double scale = std::pow(law.t0_sq, kk);
    return scale * integrate_tanh_sinh(
                       [&](double s) {
                           return c * p * std::pow(s, p - 1.0) * std::exp(-c * std::pow(s, p)) *
                                  std::exp(-kk * s);
                       },
                       0.0, 720.0, 16);
}

/// Temporally correlated power-transmittance trace from Ornstein-Uhlenbeck
/// beam-center wander (per-axis stationary variance sigma^2, exponential
/// autocorrelation with the given time constant), mapped through the
/// aperture law and scaled by the static loss.
inline RVec sample_beam_wander_trace(const TurbulenceModel& model, std::size_t n_samples,
                                     double correlation_time, double sample_rate,
                                     std::uint64_t seed) {
    require(correlation_time > 0, "sample_beam_wander_trace: correlation_time must be positive");
    require(sample_rate > 0, "sample_beam_wander_trace: sample_rate must be positive");
    model.validate();
    const WanderLaw law = model.law();
    const double s2 = model.wander_variance();
    const double sigma = std::sqrt(s2);
    const double loss = model.static_loss();

    const double rho = std::exp(-1.0 / (correlation_time * sample_rate));
    const double innov = sigma * std::sqrt(1.0 - rho * rho);

    Rng rng(seed);
    double rx = sigma * rng.next_normal();
    double ry = sigma * rng.next_normal();

    RVec out(n_samples);
    for (std::size_t k = 0; k < n_samples; ++k) {
        if (k > 0) {
            rx = rho * rx + innov * rng.next_normal();
            ry = rho * ry + innov * rng.next_normal();
        }
        const double rr = std::sqrt(rx * rx + ry * ry);
        const double t = law.t0_sq * std::exp(-std::pow(rr / law.radius, law.lambda));
        out[k] = t * loss;
    }
    return out;
}

}  // namespace cvqkd
