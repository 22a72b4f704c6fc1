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

#include <gtest/gtest.h>

#include <cmath>

#include "cvqkd/estimation.hpp"
#include "cvqkd/pipeline.hpp"

using namespace cvqkd;

namespace {

// Symbol-level link: rx = sqrt(T_i eta)(s + e) + n, with everything seeded.
struct SymbolLink {
    SymbolBlock tx, rx;
    TransmittanceSeries t_series;
    DetectorModel det;
};

SymbolLink make_symbol_link(std::size_t n, double v_a, const RVec& t_per_symbol, double eps_inject,
                            bool with_detection_noise, std::uint64_t seed) {
    SymbolLink link;
    link.det.eta = 0.56;
    link.det.nu_el = 0.1;
    link.det.noiseless = !with_detection_noise;

    GaussianSource src;
    src.seed = seed;
    src.per_quadrature_variance = v_a / 2.0;
    link.tx = generate_quantum_symbols(src, n);

    Rng noise(seed ^ 0xabcdef1234ull);
    link.rx.symbols.resize(n);
    link.t_series.t.resize(n);
    link.t_series.guard = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = t_per_symbol[i % t_per_symbol.size()];
        link.t_series.t[i] = t;
        Complex s = link.tx.symbols[i];
        if (eps_inject > 0.0) s += noise.next_complex_normal(eps_inject);
        Complex y = std::sqrt(t * link.det.eta) * s;
        if (with_detection_noise) y += noise.next_complex_normal(1.0 + link.det.nu_el);
        link.rx.symbols[i] = y;
    }
    return link;
}

}  // namespace

TEST(MinVariance, ValuesAndSymmetry) {
    EXPECT_DOUBLE_EQ(min_variance(1.0, 0.0, 13.78), 0.0);
    EXPECT_NEAR(min_variance(0.9937, 2.0 * M_PI / 180.0, 13.78), 8.6149830336966172e-3, 1e-12);
    // even in theta
    EXPECT_DOUBLE_EQ(min_variance(0.95, 0.3, 10.0), min_variance(0.95, -0.3, 10.0));
    // monotone in |theta| for fixed d < 1
    double prev = -1.0;
    for (double th = 0.0; th <= M_PI / 4 + 1e-9; th += M_PI / 64) {
        const double v = min_variance(0.98, th, 13.78);
        EXPECT_GE(v, prev);
        prev = v;
    }
    EXPECT_THROW(min_variance(0.0, 0.1, 10.0), InvalidParameter);
}

TEST(MinVariance, FiveDegreeClaimDoesNotHoldButSmallAnglesDo) {
    // the formula evaluated at the stated +-5 degrees exceeds 0.02 SNU; the
    // bound holds on the +-2.5 degree range instead
    EXPECT_GT(min_variance(0.9937, 5.0 * M_PI / 180.0, 13.78), 0.02);
    EXPECT_NEAR(min_variance(0.9937, 5.0 * M_PI / 180.0, 13.78), 0.052380170915883362, 1e-12);
    for (double th = -2.5; th <= 2.5; th += 0.25)
        EXPECT_LT(min_variance(0.9937, th * M_PI / 180.0, 13.78), 0.02);
}

TEST(MinVariance, MonteCarloAcrossGrid) {
    // imbalance residual j p (d e^{j th} - 1), variance referred to the
    // sender, against the closed form across a (d, theta) grid
    const std::size_t n = 1000000;
    GaussianSource src;
    src.seed = 31337;
    src.per_quadrature_variance = 13.78 / 2.0;
    const SymbolBlock b = generate_quantum_symbols(src, n);
    for (double d : {0.98, 0.9937, 1.0}) {
        for (double deg : {-4.0, -2.0, 0.5, 2.0, 5.0}) {
            const double th = deg * M_PI / 180.0;
            const Complex rot = d * Complex{std::cos(th), std::sin(th)};
            double var = 0.0;
            for (const auto& s : b.symbols) var += std::norm((rot - 1.0) * s.imag());
            var /= static_cast<double>(n);
            const double want = min_variance(d, th, 13.78);
            if (want < 1e-12) {
                EXPECT_LT(var, 1e-12);
            } else {
                EXPECT_NEAR(var, want, 0.05 * want) << "d=" << d << " deg=" << deg;
            }
        }
    }
}

TEST(ExcessNoise, NoiselessLoopbackNearZero) {
    const RVec t{0.3};
    const SymbolLink link = make_symbol_link(200000, 12.4, t, 0.0, false, 5);
    const double eps = estimate_excess_noise(link.tx, link.rx, link.t_series, link.det);
    EXPECT_NEAR(eps, 0.0, 1e-9);
}

TEST(ExcessNoise, RecoversInjectedNoise) {
    const RVec t{1.0};
    const SymbolLink link = make_symbol_link(1000000, 12.4, t, 0.03, false, 99);
    const double eps = estimate_excess_noise(link.tx, link.rx, link.t_series, link.det);
    EXPECT_GT(eps, 0.027);
    EXPECT_LT(eps, 0.033);
}

TEST(ExcessNoise, WithDetectionNoiseStaysCloseAtUnityT) {
    const RVec t{1.0};
    const SymbolLink link = make_symbol_link(1000000, 12.4, t, 0.03, true, 4242);
    const double eps = estimate_excess_noise(link.tx, link.rx, link.t_series, link.det);
    EXPECT_NEAR(eps, 0.03, 0.02);  // shot-noise limited estimator scatter
}

TEST(ExcessNoise, TinyGainThrows) {
    const RVec t{1e-14};
    const SymbolLink link = make_symbol_link(1000, 12.4, t, 0.0, false, 2);
    EXPECT_THROW(estimate_excess_noise(link.tx, link.rx, link.t_series, link.det),
                 UnreliableEstimate);
}

TEST(ExcessNoise, ScaleInvarianceOfUnits) {
    // scaling rx and the SNU noise floor consistently leaves eps unchanged:
    // equivalent to re-deriving the SNU calibration constant
    const RVec t{0.5};
    SymbolLink link = make_symbol_link(400000, 12.4, t, 0.02, false, 7);
    const double eps0 = estimate_excess_noise(link.tx, link.rx, link.t_series, link.det);
    // rx scaled by g and T by g^2: same epsilon
    const double g = 1.7;
    for (auto& v : link.rx.symbols) v *= g;
    for (auto& v : link.t_series.t) v *= g * g;
    const double eps1 = estimate_excess_noise(link.tx, link.rx, link.t_series, link.det);
    EXPECT_NEAR(eps0, eps1, 1e-9);
}

TEST(ExcessNoise, AverageVersusBinnedMatchesFadingPrediction) {
    // two-level transmittance: the average-T convention references the
    // amplitude-mean gain and surfaces the fading penalty
    RVec t;
    for (int i = 0; i < 64; ++i) t.push_back(i % 2 == 0 ? 0.2 : 0.8);
    const SymbolLink link = make_symbol_link(1000000, 13.78, t, 0.0, true, 11);
    const BinnedNoiseComparison cmp =
        compare_binned_average(link.tx, link.rx, link.t_series, link.det, 1.0);

    const double delta = cmp.eps_average - cmp.eps_binned;
    EXPECT_GT(delta, 0.0);  // binned is lower, matching the two-method ordering
    EXPECT_NEAR(delta, cmp.fading_prediction, 0.20 * cmp.fading_prediction);

    // prediction itself equals Var(sqrt(T)) (V_A - 1) / (E sqrt T)^2 for the
    // true two-level trace
    const double m_t = 0.5;                                  // mean of {0.2, 0.8}
    const double m_rt = (std::sqrt(0.2) + std::sqrt(0.8)) / 2.0;
    const double want = (m_t - m_rt * m_rt) * (13.78 - 1.0) / (m_rt * m_rt);
    EXPECT_NEAR(cmp.fading_prediction, want, 0.02 * want);
}

TEST(FadingNoise, TwoLevelExactAndConstantZero) {
    RVec two;
    for (int i = 0; i < 1000; ++i) two.push_back(i % 2 == 0 ? 0.01 : 0.04);
    const RVec eps = fading_noise(two, 13.78, two.size(), 1, 1);
    EXPECT_NEAR(eps[0], 0.03195, 1e-12);  // mean T 0.025, mean sqrt(T) 0.15

    const RVec flat(500, 0.37);
    for (double v : fading_noise(flat, 13.78, 100, 20, 3)) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(FadingNoise, SlowWanderKeepsNoiseBelowThreeMilliSnu) {
    // lab-turbulence regime: wander correlation time far above the frame
    // duration, so per-segment transmittance barely moves and the fading
    // noise mass concentrates below 0.003 SNU
    TurbulenceModel m;
    m.sigma_sq = 4.44296475e-3;
    m.extra_loss_db = 14.0;
    const std::size_t n = 2000000;
    const RVec t = sample_beam_wander_trace(m, n, 0.5, 1e6, 99);  // tau = 5e5 samples
    const RVec eps = fading_noise(t, 13.78, n / 100, 500, 7);     // segment ~ tau / 25
    std::size_t below = 0;
    for (double v : eps)
        if (v < 0.003) ++below;
    EXPECT_GE(static_cast<double>(below) / static_cast<double>(eps.size()), 0.95);
}

TEST(FadingNoise, JensenNonNegativityOnRandomTraces) {
    Rng rng(8);
    RVec t(20000);
    for (auto& v : t) v = 0.01 + 0.9 * rng.next_unit();
    const RVec eps = fading_noise(t, 13.78, 512, 200, 9);
    for (double v : eps) EXPECT_GE(v, -1e-12);

    EXPECT_THROW(fading_noise(t, 13.78, t.size() + 1, 1, 1), InvalidParameter);
}

TEST(TransmittanceStats, DegenerateAndBinLayout) {
    const RVec same(100, 0.05);
    const TransmittanceStats st = transmittance_stats(same, 1.0);
    ASSERT_EQ(st.probability.size(), 1u);
    EXPECT_DOUBLE_EQ(st.probability[0], 1.0);

    // -26..-14 dB at 1 dB width: 12 bins
    RVec spread;
    for (int i = 0; i < 12; ++i) spread.push_back(db_to_lin(-25.5 + i));  // centers of each bin
    const TransmittanceStats st2 = transmittance_stats(spread, 1.0);
    ASSERT_EQ(st2.probability.size(), 12u);
    double sum = 0.0;
    for (double p : st2.probability) sum += p;
    EXPECT_DOUBLE_EQ(sum, 1.0);
    EXPECT_NEAR(st2.bin_low_db.front(), -26.0, 1e-12);
    EXPECT_NEAR(st2.bin_high_db.back(), -14.0, 1e-12);
}

TEST(TransmittanceStats, WeibullRefitRecoversGenerator) {
    TurbulenceModel m;
    m.sigma_sq = 4.44296475e-3;
    m.extra_loss_db = 0.0;
    const RVec t = sample_beam_wander_trace(m, 1000000, 1e-9, 1e6, 77);
    const TransmittanceStats st = transmittance_stats(t, 1.0, &m);
    ASSERT_TRUE(st.fitted.has_value());
    ASSERT_TRUE(st.fitted->valid);
    EXPECT_NEAR(st.fitted->lambda, m.law().lambda, 0.05 * m.law().lambda);
    EXPECT_NEAR(st.fitted->sigma_sq, m.sigma_sq, 0.05 * m.sigma_sq);
}

TEST(ExcessNoise, FullChainInjectedNoiseThroughDsp) {
    // the injected-noise oracle through the complete DSP chain: inject eps at
    // Alice by adding Gaussian noise to the symbols before shaping
    LinkConfig cfg;
    cfg.layout.n_symbols = 32768;
    cfg.v_a = 12.4;
    cfg.detector.eta = 0.56;
    cfg.detector.nu_el = 0.0;
    cfg.detector.noiseless = true;

    const double eps_true = 0.03;
    const std::size_t n = baseband_length(cfg.layout);

    // build the frame manually so noisy symbols ride the same chain
    const RrcTaps taps = design_rrc(cfg.layout.roll_off, cfg.layout.sps, cfg.layout.span);
    GaussianSource src;
    src.seed = 1001;
    src.per_quadrature_variance = cfg.v_a / 2.0;
    const SymbolBlock clean = generate_quantum_symbols(src, cfg.layout.n_symbols);
    SymbolBlock noisy = clean;
    Rng inj(555);
    for (auto& v : noisy.symbols) v += inj.next_complex_normal(eps_true);
    const TxFrame frame = assemble_frame(noisy, pilot_block(cfg.layout, cfg.v_a), cfg.layout);

    const double t_ch = 0.5;
    const ChannelTrace ch = constant_channel(n, t_ch, cfg.layout.sample_rate);
    const DetectionRecord rec = detect(propagate(frame, ch), cfg.detector, cfg.layout,
                                       std::make_shared<ChannelTrace>(ch));
    const auto [est, comp] = recover_carrier(rec, cfg.carrier);
    const FrameDemodResult demod = demodulate_frame(comp, taps, cfg.layout, cfg.demod);

    TransmittanceSeries ts;
    ts.t.assign(cfg.layout.n_symbols, t_ch);
    ts.guard = 2 * cfg.layout.span + cfg.carrier.edge_taper / cfg.layout.sps;

    ExcessNoiseOptions opt;
    opt.noise_gain = link_noise_gain(cfg);
    const double eps = estimate_excess_noise(clean, demod.quantum, ts, cfg.detector, opt);

    // at this frame size the seed-level symbol/noise cross covariance moves
    // the realized injection by a few 1e-3; the chain must reproduce the
    // realized value, the 1e6-symbol statistical check lives in acceptance
    double eps_realized = 0.0;
    std::size_t cnt = 0;
    for (std::size_t i = ts.guard; i + ts.guard < noisy.size(); ++i, ++cnt)
        eps_realized += std::norm(noisy.symbols[i]) - std::norm(clean.symbols[i]);
    eps_realized /= static_cast<double>(cnt);
    EXPECT_NEAR(eps, eps_realized, 5e-4);
    EXPECT_NEAR(eps, eps_true, 0.02);
}
