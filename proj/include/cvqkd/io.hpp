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

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cvqkd/common.hpp"
#include "cvqkd/frame.hpp"

namespace cvqkd {

// Binary sample file: 16-byte header (magic "CVQK", u32 version, f64
// sample_rate, little endian) followed by interleaved float32 re/im pairs.

inline constexpr char kSampleMagic[4] = {'C', 'V', 'Q', 'K'};
inline constexpr std::uint32_t kSampleVersion = 1;

inline void write_samples(const std::filesystem::path& path, const ComplexTrace& trace) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("write_samples: cannot open " + path.string());
    f.write(kSampleMagic, 4);
    const std::uint32_t ver = kSampleVersion;
    f.write(reinterpret_cast<const char*>(&ver), 4);
    const double rate = trace.sample_rate;
    f.write(reinterpret_cast<const char*>(&rate), 8);
    std::vector<float> buf(trace.samples.size() * 2);
    for (std::size_t i = 0; i < trace.samples.size(); ++i) {
        buf[2 * i] = static_cast<float>(trace.samples[i].real());
        buf[2 * i + 1] = static_cast<float>(trace.samples[i].imag());
    }
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw IoError("write_samples: short write to " + path.string());
}

inline ComplexTrace read_samples(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_samples: cannot open " + path.string());
    char magic[4];
    std::uint32_t ver = 0;
    double rate = 0.0;
    f.read(magic, 4);
    f.read(reinterpret_cast<char*>(&ver), 4);
    f.read(reinterpret_cast<char*>(&rate), 8);
    if (!f || std::memcmp(magic, kSampleMagic, 4) != 0)
        throw IoError("read_samples: bad magic in " + path.string());
    if (ver != kSampleVersion) throw IoError("read_samples: unsupported version");

    const auto payload = std::filesystem::file_size(path) - 16;
    if (payload % (2 * sizeof(float)) != 0) throw IoError("read_samples: truncated payload");
    const std::size_t n = payload / (2 * sizeof(float));
    std::vector<float> buf(n * 2);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(payload));
    if (!f) throw IoError("read_samples: short read from " + path.string());

    ComplexTrace out;
    out.sample_rate = rate;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        out.samples[i] = Complex{static_cast<double>(buf[2 * i]), static_cast<double>(buf[2 * i + 1])};
    return out;
}

// ---- CSV ------------------------------------------------------------------

/// Minimal deterministic CSV writer; doubles printed with %.17g so re-runs
/// are byte-identical.
class CsvWriter {
  public:
    explicit CsvWriter(const std::filesystem::path& path) : f_(path) {
        if (!f_) throw IoError("CsvWriter: cannot open " + path.string());
    }

    void header(const std::vector<std::string>& cols) { row_strings(cols); }

    void row(const std::vector<double>& vals) {
        bool first = true;
        for (double v : vals) {
            if (!first) f_ << ',';
            first = false;
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            f_ << buf;
        }
        f_ << '\n';
    }

    void row_strings(const std::vector<std::string>& vals) {
        bool first = true;
        for (const auto& v : vals) {
            if (!first) f_ << ',';
            first = false;
            f_ << v;
        }
        f_ << '\n';
    }

  private:
    std::ofstream f_;
};

/// FNV-1a checksum of a file's bytes, as a hex string.
inline std::string file_checksum(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("file_checksum: cannot open " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (f) {
        f.read(buf, sizeof(buf));
        const std::streamsize got = f.gcount();
        h = fnv1a64(buf, static_cast<std::size_t>(got), h);
    }
    char out[20];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return std::string(out);
}

}  // namespace cvqkd
