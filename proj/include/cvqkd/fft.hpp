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

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>

#include "cvqkd/common.hpp"

namespace cvqkd {

/// Smallest 5-smooth integer >= n. Frame lengths carry awkward prime
/// factors; padding transforms to 2^a 3^b 5^c sizes keeps FFTW fast.
inline std::size_t fft_nice_size(std::size_t n) {
    if (n <= 16) return n;
    std::size_t best = ~std::size_t{0};
    for (std::size_t f5 = 1; f5 < 2 * n; f5 *= 5) {
        for (std::size_t f35 = f5; f35 < 2 * n; f35 *= 3) {
            std::size_t v = f35;
            while (v < n) v *= 2;
            if (v < best) best = v;
        }
    }
    return best;
}

/// Smallest multiple of step that is step * (5-smooth) and >= n.
inline std::size_t fft_nice_multiple(std::size_t n, std::size_t step) {
    return step * fft_nice_size((n + step - 1) / step);
}

namespace detail {

// Plan cache with thread-local aligned scratch. FFTW's planner is not
// thread-safe; execution on distinct buffers is.
class FftEngine {
  public:
    static FftEngine& instance() {
        static FftEngine e;
        return e;
    }

    void transform(const Complex* in, Complex* out, std::size_t n, int sign) {
        Scratch& s = scratch();
        s.ensure(n);
        std::copy(in, in + n, s.buf_in);
        fftw_plan plan = get_plan(n, sign);
        fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(s.buf_in),
                         reinterpret_cast<fftw_complex*>(s.buf_out));
        std::copy(s.buf_out, s.buf_out + n, out);
    }

  private:
    struct Scratch {
        Complex* buf_in = nullptr;
        Complex* buf_out = nullptr;
        std::size_t cap = 0;

        void ensure(std::size_t n) {
            if (n <= cap) return;
            if (buf_in) fftw_free(buf_in);
            if (buf_out) fftw_free(buf_out);
            buf_in = static_cast<Complex*>(fftw_malloc(n * sizeof(Complex)));
            buf_out = static_cast<Complex*>(fftw_malloc(n * sizeof(Complex)));
            if (!buf_in || !buf_out) throw Error("fft: scratch allocation failed");
            cap = n;
        }
        ~Scratch() {
            if (buf_in) fftw_free(buf_in);
            if (buf_out) fftw_free(buf_out);
        }
    };

    static Scratch& scratch() {
        thread_local Scratch s;
        return s;
    }

    fftw_plan get_plan(std::size_t n, int sign) {
        std::lock_guard<std::mutex> lk(mutex_);
        const auto key = std::make_pair(n, sign);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        // plan on properly aligned dummy buffers; execute_dft reuses it for
        // any buffers with the same alignment (fftw_malloc guarantees it)
        Complex* a = static_cast<Complex*>(fftw_malloc(n * sizeof(Complex)));
        Complex* b = static_cast<Complex*>(fftw_malloc(n * sizeof(Complex)));
        fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(a),
                                          reinterpret_cast<fftw_complex*>(b), sign, FFTW_ESTIMATE);
        fftw_free(a);
        fftw_free(b);
        if (!plan) throw Error("fft: planning failed");
        plans_.emplace(key, plan);
        return plan;
    }

    std::mutex mutex_;
    std::map<std::pair<std::size_t, int>, fftw_plan> plans_;
};

}  // namespace detail

/// Forward DFT, any length; deterministic (FFTW_ESTIMATE plans).
inline CVec fft(const CVec& x) {
    require(!x.empty(), "fft: empty input");
    CVec out(x.size());
    detail::FftEngine::instance().transform(x.data(), out.data(), x.size(), FFTW_FORWARD);
    return out;
}

/// Inverse DFT with 1/n normalization.
inline CVec ifft(const CVec& x) {
    require(!x.empty(), "ifft: empty input");
    CVec out(x.size());
    detail::FftEngine::instance().transform(x.data(), out.data(), x.size(), FFTW_BACKWARD);
    const double s = 1.0 / static_cast<double>(x.size());
    for (auto& v : out) v *= s;
    return out;
}

/// FFT of x zero-padded to length n.
inline CVec fft_padded(const CVec& x, std::size_t n) {
    require(n >= x.size(), "fft_padded: target shorter than input");
    CVec padded(n, Complex{0.0, 0.0});
    std::copy(x.begin(), x.end(), padded.begin());
    return fft(padded);
}

/// Frequency of FFT bin k for sample rate fs (two-sided, negative above n/2).
inline double fft_bin_freq(std::size_t k, std::size_t n, double fs) {
    const double kk = static_cast<double>(k);
    const double nn = static_cast<double>(n);
    return (kk <= nn / 2.0 ? kk : kk - nn) * fs / nn;
}

/// Index of the strongest bin of |X|^2.
inline std::size_t fft_peak_bin(const CVec& spectrum) {
    std::size_t best = 0;
    double bestp = -1.0;
    for (std::size_t k = 0; k < spectrum.size(); ++k) {
        const double p = std::norm(spectrum[k]);
        if (p > bestp) {
            bestp = p;
            best = k;
        }
    }
    return best;
}

namespace detail {

/// Kernel spectra recur heavily (the same RRC taps shape every band of every
/// frame); cache them per (kernel, grid).
inline std::shared_ptr<const CVec> kernel_spectrum(const CVec& h, std::size_t grid) {
    static std::mutex mu;
    static std::map<std::uint64_t, std::shared_ptr<const CVec>> cache;
    std::uint64_t key = fnv1a64(h.data(), h.size() * sizeof(Complex));
    key = fnv1a64(&grid, sizeof(grid), key);
    {
        std::lock_guard<std::mutex> lk(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    auto spec = std::make_shared<CVec>(fft_padded(h, grid));
    std::lock_guard<std::mutex> lk(mu);
    if (cache.size() > 16) cache.clear();
    cache.emplace(key, spec);
    return spec;
}

}  // namespace detail

/// Linear convolution; direct for short kernels, padded FFT otherwise.
inline CVec convolve(const CVec& x, const CVec& h) {
    require(!x.empty() && !h.empty(), "convolve: empty input");
    const std::size_t n = x.size(), m = h.size();
    const std::size_t out_len = n + m - 1;
    const double direct_cost = static_cast<double>(n) * static_cast<double>(m);
    if (direct_cost < 2e7) {
        CVec y(out_len, Complex{0.0, 0.0});
        for (std::size_t j = 0; j < m; ++j) {
            const Complex hj = h[j];
            if (hj == Complex{0.0, 0.0}) continue;
            for (std::size_t i = 0; i < n; ++i) y[i + j] += x[i] * hj;
        }
        return y;
    }
    const std::size_t grid = fft_nice_size(out_len);
    CVec X = fft_padded(x, grid);
    const auto H = detail::kernel_spectrum(h, grid);
    for (std::size_t k = 0; k < grid; ++k) X[k] *= (*H)[k];
    CVec y = ifft(X);
    y.resize(out_len);
    return y;
}

inline CVec convolve(const CVec& x, const RVec& h) {
    CVec hc(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) hc[i] = Complex{h[i], 0.0};
    return convolve(x, hc);
}

}  // namespace cvqkd
