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

#include <cstdint>
#include <string>

#include "cvqkd/common.hpp"

namespace cvqkd {

/// Modulation-format constants of one frame: rates, roll-off, pilot
/// placement and frame length. All other modules derive their grids from
/// this.
struct FrameLayout {
    double symbol_rate = 1e9;       ///< F_m [Hz]
    double sample_rate = 5e9;       ///< f_s [Hz], must be sps * symbol_rate
    int sps = 5;                    ///< samples per symbol
    double roll_off = 0.3;          ///< RRC roll-off, (0, 1]
    int span = 10;                  ///< RRC span in symbols, even
    std::size_t n_symbols = 1u << 14;
    double pilot_freq = -1.25e9;    ///< pilot carrier [Hz], signed
    double pilot_amp_ratio = 16.0;  ///< pilot amplitude / quantum RMS amplitude

    void validate() const {
        require(symbol_rate > 0 && sample_rate > 0, "layout: rates must be positive");
        require(sps >= 1, "layout: sps >= 1");
        require(std::abs(sample_rate - sps * symbol_rate) <= 1e-6 * sample_rate,
                "layout: sample_rate must equal sps * symbol_rate");
        require(roll_off > 0.0 && roll_off <= 1.0, "layout: roll-off in (0, 1]");
        require(span >= 2 && span % 2 == 0, "layout: span must be even and >= 2");
        require(std::abs(pilot_freq) < sample_rate / 2.0, "layout: pilot beyond Nyquist");
        require(n_symbols >= 1, "layout: n_symbols >= 1");
        require(static_cast<std::size_t>(span) * sps + 1 <= n_symbols * sps,
                "layout: filter longer than frame");
        require(pilot_amp_ratio > 0.0, "layout: pilot amplitude ratio > 0");
    }

    /// Occupied RF half-bandwidth of one RRC band.
    double occupied_half_bw() const { return 0.5 * (1.0 + roll_off) * symbol_rate; }

    /// Flat (inner) half-bandwidth of one RRC band.
    double flat_half_bw() const { return 0.5 * (1.0 - roll_off) * symbol_rate; }

    /// Fingerprint used to match calibration references to measurements.
    std::uint64_t hash() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        auto mix = [&h](double v) { h = fnv1a64(&v, sizeof(v), h); };
        mix(symbol_rate);
        mix(sample_rate);
        mix(static_cast<double>(sps));
        mix(roll_off);
        mix(static_cast<double>(span));
        mix(static_cast<double>(n_symbols));
        mix(pilot_freq);
        mix(pilot_amp_ratio);
        return h;
    }
};

/// Uniformly sampled complex baseband waveform. The carrier between all DSP
/// stages.
struct ComplexTrace {
    CVec samples;
    double sample_rate = 0.0;  ///< Hz
    double origin_time = 0.0;  ///< t0 [s]

    std::size_t size() const { return samples.size(); }
    double duration() const { return static_cast<double>(samples.size()) / sample_rate; }

    void validate() const {
        require(sample_rate > 0.0, "trace: sample_rate must be positive");
        for (const auto& v : samples)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                throw InvalidParameter("trace: non-finite sample");
    }
};

enum class SymbolRole { quantum, pilot };

/// One frame's worth of symbols, either Gaussian quantum data or the
/// constant pilot.
struct SymbolBlock {
    CVec symbols;
    SymbolRole role = SymbolRole::quantum;

    std::size_t size() const { return symbols.size(); }
};

}  // namespace cvqkd
