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
#include <complex>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvqkd {

using Complex = std::complex<double>;
using CVec = std::vector<Complex>;
using RVec = std::vector<double>;

// ---- error taxonomy -----------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidParameter : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct InsufficientData : Error {
    using Error::Error;
};
struct SyncFailure : Error {
    using Error::Error;
};
struct UnwrapFailure : Error {
    using Error::Error;
};
struct LowPilotSnr : Error {
    using Error::Error;
};
struct CalibrationUnstable : Error {
    using Error::Error;
};
struct NonphysicalCovariance : Error {
    using Error::Error;
};
struct UnreliableEstimate : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidParameter(msg);
}

// ---- unit helpers --------------------------------------------------------

inline double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }
inline double lin_to_db(double lin) { return 10.0 * std::log10(lin); }

// ---- small statistics helpers -------------------------------------------

inline double mean(const RVec& x) {
    if (x.empty()) return 0.0;
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline Complex mean(const CVec& x) {
    if (x.empty()) return {0.0, 0.0};
    Complex s{0.0, 0.0};
    for (const auto& v : x) s += v;
    return s / static_cast<double>(x.size());
}

// Population variance about the sample mean.
inline double variance(const RVec& x) {
    if (x.size() < 2) return 0.0;
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size());
}

// Total complex variance E|z - mean|^2 (both quadratures summed).
inline double variance(const CVec& x) {
    if (x.size() < 2) return 0.0;
    const Complex m = mean(x);
    double s = 0.0;
    for (const auto& v : x) s += std::norm(v - m);
    return s / static_cast<double>(x.size());
}

// Second raw moment E|z|^2.
inline double power(const CVec& x) {
    if (x.empty()) return 0.0;
    double s = 0.0;
    for (const auto& v : x) s += std::norm(v);
    return s / static_cast<double>(x.size());
}

inline double skewness(const RVec& x) {
    const double m = mean(x);
    double m2 = 0.0, m3 = 0.0;
    for (double v : x) {
        const double d = v - m;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= static_cast<double>(x.size());
    m3 /= static_cast<double>(x.size());
    return m3 / std::pow(m2, 1.5);
}

inline double excess_kurtosis(const RVec& x) {
    const double m = mean(x);
    double m2 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double d = v - m;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= static_cast<double>(x.size());
    m4 /= static_cast<double>(x.size());
    return m4 / (m2 * m2) - 3.0;
}

// ---- FNV-1a 64-bit hash (manifests, layout fingerprints) -----------------

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace cvqkd
