#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "eetsim/ramsey.hpp"

using namespace eetsim;

namespace {

const double kTwoPi = 2 * constants::pi;
const double kWL = kTwoPi * 15.0;

NoiseProfile figure_profile(double omegaJ = kTwoPi * 25.0) {
    const double w0 = kTwoPi * 0.005;
    return modulation_profile(Debye{kTwoPi * 0.01, kTwoPi * 45.0}, 5e-5, w0, static_cast<int>(std::lround(omegaJ / w0)),
                              1.0);
}

std::vector<double> grid(double t1, double dt) {
    std::vector<double> t;
    const auto n = static_cast<std::size_t>(std::lround(t1 / dt));
    for (std::size_t i = 0; i <= n; ++i) t.push_back(i * dt);
    return t;
}

RamseyConfig figure_config(std::size_t M, double t1 = 0.9) {
    RamseyConfig c;
    c.omega_L = kWL;
    c.t_grid = grid(t1, 0.02);
    c.dt = 0.02;
    c.M = M;
    c.source = figure_profile();
    return c;
}

double rms_dev(const RamseySeries& s, const std::vector<double>& a) {
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (s.mean[i] - a[i]) * (s.mean[i] - a[i]);
    return std::sqrt(acc / a.size());
}

double mean_se(const RamseySeries& s) {
    return std::accumulate(s.stderr_.begin(), s.stderr_.end(), 0.0) / s.stderr_.size();
}

}  // namespace

TEST(RamseyAnalytic, StartsAtOne) {
    auto c = figure_config(1);
    const auto p = ramsey_analytic(c);
    EXPECT_DOUBLE_EQ(p[0], 1.0);
    c.source = make_lineshape(kTwoPi * 0.01, kTwoPi * 45.0, 5e-5, 1.0);
    EXPECT_DOUBLE_EQ(ramsey_analytic(c)[0], 1.0);
}

TEST(RamseyAnalytic, ZeroNoiseIsPureCosine) {
    auto c = figure_config(1);
    auto p = figure_profile();
    p.alpha = 0.0;
    c.source = p;
    const auto P = ramsey_analytic(c);
    for (std::size_t i = 0; i < P.size(); ++i) EXPECT_NEAR(P[i], 0.5 * (1 + std::cos(kWL * c.t_grid[i])), 1e-15);
}

TEST(RamseyAnalytic, BoundedAndRelaxesToHalf) {
    auto c = figure_config(1);
    c.t_grid = grid(5.0, 0.001);
    const auto P = ramsey_analytic(c);
    for (double x : P) {
        EXPECT_GE(x, 0.0);
        EXPECT_LE(x, 1.0);
    }
    EXPECT_NEAR(P.back(), 0.5, 1e-12);
}

TEST(RamseyAnalytic, CombAndLineshapeFormsAgree) {
    // a fine, wide comb approximates Re g closely, so P0 and P1 coincide pointwise
    const double w0 = kTwoPi * 0.002;
    const auto p = modulation_profile(Debye{kTwoPi * 0.01, kTwoPi * 45.0}, 5e-5, w0, 500000, 1.0);
    RamseyConfig c;
    c.omega_L = kWL;
    c.t_grid = grid(0.9, 0.01);
    c.source = p;
    const auto P0 = ramsey_analytic(c);
    c.source = make_lineshape(kTwoPi * 0.01, kTwoPi * 45.0, 5e-5, 0.9);
    const auto P1 = ramsey_analytic(c);
    double worst = 0;
    for (std::size_t i = 0; i < P0.size(); ++i) worst = std::max(worst, std::abs(P0[i] - P1[i]));
    EXPECT_LT(worst, 1e-3);
}

TEST(RamseySimulate, ProtocolMatchesPulseProducts) {
    // one realization against explicit pulse matrices: exp(i pi X/4), steps, exp(-i pi X/4)
    const auto c = figure_config(1, 0.3);
    const auto prof = figure_profile();
    const auto r = ramsey_simulate(c, prof, 17);
    cmat h0 = cmat::Zero(2, 2);
    const auto s = make_schedule(HamiltonianMatrix(h0, UnitTag::NMR_angular), prof, NoiseMapping::paired, c.dt,
                                 c.t_grid.size() - 1, trajectory_seed(17, 0));
    const auto& n = s.terms[0].coeff;
    cvec psi = cvec::Zero(2);
    psi(0) = 1;
    psi = expm_hermitian(pauli::x(), -constants::pi / 4) * psi;
    double phase = 0;
    for (std::size_t i = 0; i < c.t_grid.size(); ++i) {
        const cvec out = expm_hermitian(pauli::x(), constants::pi / 4) * psi;
        EXPECT_NEAR(r.mean[i], std::norm(out(0)), 1e-10) << "i=" << i;
        EXPECT_NEAR(r.mean[i], 0.5 * (1 + std::cos(kWL * c.t_grid[i] + 2 * phase)), 1e-10);
        if (i + 1 == c.t_grid.size()) break;
        const double w = 0.5 * kWL + n[i];
        psi = expm_hermitian(w * pauli::z(), c.dt) * psi;
        phase += n[i] * c.dt;
    }
    EXPECT_EQ(r.stderr_[5], 0.0);
}

TEST(RamseySimulate, ZeroNoiseIsExact) {
    auto c = figure_config(7);
    auto p = figure_profile();
    p.alpha = 0;
    const auto r = ramsey_simulate(c, p, 3);
    for (std::size_t i = 0; i < r.t.size(); ++i) {
        EXPECT_NEAR(r.mean[i], 0.5 * (1 + std::cos(kWL * r.t[i])), 1e-8);
        EXPECT_NEAR(r.stderr_[i], 0.0, 1e-8);
    }
}

TEST(RamseySimulate, FigureParametersMatchAnalytic) {
    const auto c = figure_config(50);
    const auto r = ramsey_simulate(c, figure_profile(), 2024);
    const auto a = ramsey_analytic(c);
    EXPECT_LE(rms_dev(r, a), 3 * mean_se(r));
    for (double x : r.mean) {
        EXPECT_GE(x, 0.0);
        EXPECT_LE(x, 1.0);
    }
    // the fringe has decayed by the end of the grid
    EXPECT_LT(std::exp(-2 * decay_exponent(c).back()), 0.01);
}

TEST(RamseySimulate, StandardErrorScalesAsInverseRootM) {
    const auto a = ramsey_simulate(figure_config(200), figure_profile(), 5);
    const auto b = ramsey_simulate(figure_config(400), figure_profile(), 6);
    EXPECT_NEAR(mean_se(a) / mean_se(b), std::sqrt(2.0), 0.2 * std::sqrt(2.0));
}

TEST(RamseySimulate, DeviationShrinksWithM) {
    const auto c = figure_config(1);
    const auto a = ramsey_analytic(c);
    const std::size_t Ms[] = {50, 200, 800};
    double avg[3] = {0, 0, 0};
    int wins = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        double d[3];
        for (int k = 0; k < 3; ++k) {
            auto ck = c;
            ck.M = Ms[k];
            d[k] = rms_dev(ramsey_simulate(ck, figure_profile(), seed), a);
            avg[k] += d[k] / 5;
        }
        wins += d[2] < d[0];
    }
    EXPECT_GT(avg[0], avg[1]);
    EXPECT_GT(avg[1], avg[2]);
    EXPECT_GE(wins, 4);
}

TEST(RamseySimulate, ThreadCountDoesNotChangeResult) {
    const auto c = figure_config(70, 0.4);
    const auto a = ramsey_simulate(c, figure_profile(), 8, {Sampling::step_average, 1});
    const auto b = ramsey_simulate(c, figure_profile(), 8, {Sampling::step_average, 4});
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.stderr_, b.stderr_);
}

TEST(RamseySimulate, RejectsZeroRealizations) {
    EXPECT_THROW(ramsey_simulate(figure_config(0), figure_profile(), 1), std::invalid_argument);
}

TEST(Envelope, PureCosineIsFlat) {
    const auto t = grid(0.5, 0.002);
    std::vector<double> P(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) P[i] = 0.5 * (1 + std::cos(kWL * t[i] + 0.3));
    const auto e = extract_envelope(t, P, kWL);
    for (double v : e.value) EXPECT_NEAR(v, 1.0, 1e-6);
}

TEST(Envelope, RecoversKnownDecay) {
    // comb cut at 2 pi x 1 kHz, well below the fringe frequency, so exp(-2 chi) is smooth
    // on the window scale (cutting at 5 kHz already gives 3e-3 errors)
    const double w0 = kTwoPi * 0.005;
    const auto p = modulation_profile(Debye{kTwoPi * 0.01, kTwoPi * 45.0}, 5e-5, w0, 200, 1.0);
    RamseyConfig c;
    c.omega_L = kWL;
    c.t_grid = grid(1.0, 0.002);
    c.source = p;
    const auto P = ramsey_analytic(c);
    const auto e = extract_envelope(c.t_grid, P, kWL);
    const auto d = decay_exponent(c);
    for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(e.value[i], std::exp(-2 * d[i]), 1e-3) << "t=" << c.t_grid[i];
}

TEST(Envelope, ExponentialFit) {
    const auto t = grid(1.0, 0.002);
    std::vector<double> P(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) P[i] = 0.5 * (1 + 0.9 * std::exp(-t[i] / 0.25) * std::cos(kWL * t[i]));
    const auto e = extract_envelope(t, P, kWL);
    ASSERT_TRUE(e.fit_ok);
    EXPECT_NEAR(e.decay_time, 0.25, 1e-3);
    EXPECT_NEAR(e.amplitude, 0.9, 1e-3);
}

TEST(Envelope, WhiteNoiseFringeIsMonotone) {
    // dense white comb: chi grows linearly, so the envelope never rises. The kink of |t| at
    // t = 0 is narrower than the window, so the first half period is skipped.
    const double w0 = kTwoPi * 0.005;
    const auto p = modulation_profile(White{}, 5e-5, w0, 4000, 0.25);
    RamseyConfig c;
    c.omega_L = kWL;
    c.t_grid = grid(1.0, 0.002);
    c.dt = 0.002;
    c.M = 400;
    c.source = p;
    const auto e = extract_envelope(c.t_grid, ramsey_analytic(c), kWL);
    const std::size_t skip = 17;  // half a fringe period at 2 us spacing
    for (std::size_t i = skip + 1; i < e.value.size(); ++i) EXPECT_LE(e.value[i], e.value[i - 1] + 2e-3) << "i=" << i;
    EXPECT_LT(e.value.back(), 0.5 * e.value.front());

    const auto r = ramsey_simulate(c, p, 11);
    const auto es = extract_envelope(r.t, r.mean, kWL);
    const double tol = 3 * 2 * *std::max_element(r.stderr_.begin(), r.stderr_.end());
    const std::size_t stride = 50;  // compare windows that do not overlap
    for (std::size_t i = stride; i < es.value.size(); i += stride)
        EXPECT_LE(es.value[i], es.value[i - stride] + tol) << "i=" << i;
}

TEST(Envelope, RejectsShortSeries) {
    const auto t = grid(2.5 / 15.0, 0.002);  // 2.5 periods
    std::vector<double> P(t.size(), 0.5);
    EXPECT_THROW(extract_envelope(t, P, kWL), std::invalid_argument);
    EXPECT_THROW(extract_envelope({0.0, 0.1}, {1.0, 0.5}, kWL), std::invalid_argument);
}

TEST(Envelope, T2FromFigureComb) {
    // 1/e of the fringe envelope is reached at T2 where 2 chi = 1
    const auto c = figure_config(1);
    RamseyConfig fine = c;
    fine.t_grid = grid(0.9, 0.001);
    const auto e = extract_envelope(fine.t_grid, ramsey_analytic(fine), kWL);
    const auto t2 = fit_t2(std::get<NoiseProfile>(c.source));
    ASSERT_TRUE(t2);
    std::size_t k = 1;
    while (k < e.value.size() && e.value[k] > std::exp(-1.0)) ++k;
    ASSERT_LT(k, e.value.size());
    const double tc = fine.t_grid[k - 1] + (std::exp(-1.0) - e.value[k - 1]) / (e.value[k] - e.value[k - 1]) * 0.001;
    EXPECT_NEAR(tc / *t2, 1.0, 1e-2);
    const auto w = decay_window(std::get<NoiseProfile>(c.source), 2.0);
    ASSERT_TRUE(w);
    EXPECT_DOUBLE_EQ(w->first, *t2);
    EXPECT_NEAR(2 * chi(std::get<NoiseProfile>(c.source), w->second), 5.0, 0.05);
}

TEST(RamseyIo, TablesRoundTrip) {
    const auto c = figure_config(20, 0.2);
    const auto r = ramsey_simulate(c, figure_profile(), 4);
    std::stringstream ss;
    io::write_table(ss, ramsey_table(r));
    const auto back = io::read_table(ss);
    ASSERT_EQ(back.header, (std::vector<std::string>{"t_ms", "P0_mean", "P0_se"}));
    EXPECT_EQ(back.columns[1], r.mean);
    EXPECT_EQ(back.columns[2], r.stderr_);
    std::stringstream s2;
    io::write_table(s2, ramsey_table(c.t_grid, ramsey_analytic(c)));
    EXPECT_EQ(io::read_table(s2).header, (std::vector<std::string>{"t_ms", "P0"}));
}
