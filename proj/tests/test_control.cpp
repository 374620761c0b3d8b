#include <catch_amalgamated.hpp>

#include "sfvae/control.hpp"

using namespace sfvae;
using Catch::Approx;

namespace {

Mat orthonormal(Index rows, Index cols, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    Eigen::HouseholderQR<Mat> qr(standard_normal(rows, cols, rng));
    return qr.householderQ() * Mat::Identity(rows, cols);
}

/// Subspace with a random basis and a regressor whose coordinates are planted piecewise maps.
std::pair<SubspaceModel, RegressionModel> planted_control(Index l, Index m, int factor, std::uint64_t seed)
{
    SubspaceModel s;
    s.factor = factor;
    s.basis = orthonormal(l, m, seed);
    s.mean = Vec::LinSpaced(l, -0.5, 0.5);
    s.eigenvalues = Vec::Ones(l);
    RegressionModel r;
    r.factor = factor;
    r.y_min = 100.0;
    r.y_max = 300.0;
    for (Index k = 0; k < m; ++k) {
        const std::vector<double> br{150.0, 200.0, 250.0};
        const Vec coef = (Vec(5) << 0.1 * k, 0.01, -0.02, 0.015 * (k + 1), -0.01).finished();
        r.coords.push_back(from_hinge(coef, br));
    }
    r.rmse = Vec::Zero(m);
    return {s, r};
}

}  // namespace

TEST_CASE("hinge coefficients convert to a continuous piecewise function", "[control][piecewise]")
{
    const std::vector<double> br{1.0, 2.0};
    const Vec coef = (Vec(4) << 1.0, 2.0, -3.0, 4.0).finished();
    const auto f = from_hinge(coef, br);
    CHECK(f.segments() == 3);
    CHECK(f(0.5) == Approx(2.0));
    CHECK(f(1.5) == Approx(1.0 + 3.0 - 1.5));
    CHECK(f(3.0) == Approx(1.0 + 6.0 - 6.0 + 4.0));
    CHECK(f.continuity_gap() < 1e-12);
    CHECK(f.segment_of(1.0) == 1);
}

TEST_CASE("piecewise regression recovers planted data exactly", "[control][piecewise]")
{
    // breakpoints on the 16-division grid of [100, 300]
    const std::vector<double> br{137.5, 200.0, 262.5};
    const Vec coef = (Vec(5) << -1.0, 0.02, -0.05, 0.07, -0.03).finished();
    const auto truth = from_hinge(coef, br);
    const Vec y = Vec::LinSpaced(201, 100.0, 300.0);
    Vec t(y.size());
    for (Index i = 0; i < y.size(); ++i) t[i] = truth(y[i]);
    const auto fit = fit_piecewise_linear(y, t, 4, 16);
    CHECK(fit.rmse < 1e-8);
    for (Index j = 0; j < 3; ++j) CHECK(fit.function.breakpoints[j] == Approx(br[static_cast<std::size_t>(j)]));
    CHECK(fit.function.continuity_gap() < 1e-9);
}

TEST_CASE("one-segment regression is ordinary least squares", "[control][piecewise]")
{
    const Vec y = (Vec(4) << 0.0, 1.0, 2.0, 3.0).finished();
    const Vec t = (Vec(4) << 1.0, 3.0, 2.0, 5.0).finished();
    const auto fit = fit_piecewise_linear(y, t, 1);
    CHECK(fit.function.slopes[0] == Approx(1.1));
    CHECK(fit.function.intercepts[0] == Approx(1.1));
}

TEST_CASE("piecewise regression rejects underdetermined input", "[control][piecewise]")
{
    const Vec y = Vec::LinSpaced(4, 0.0, 1.0);
    CHECK_THROWS_AS(fit_piecewise_linear(y, y, 4), Error);
    CHECK_THROWS_AS(fit_piecewise_linear(y, Vec::Ones(3), 1), Error);
    CHECK_THROWS_AS(fit_piecewise_linear(y, y, 0), Error);
}

TEST_CASE("piecewise regression fits noisy data no worse than a line", "[control][piecewise]")
{
    std::mt19937_64 rng(3);
    const Vec y = Vec::LinSpaced(120, 85.0, 310.0);
    const Vec t = (y.array() / 50.0).sin().matrix() + 0.05 * standard_normal(120, 1, rng);
    const auto four = fit_piecewise_linear(y, t, 4);
    const auto one = fit_piecewise_linear(y, t, 1);
    CHECK(four.rmse <= one.rmse);
}

TEST_CASE("transform sets the subspace coordinates and keeps the complement", "[control][transform]")
{
    const auto [sub, reg] = planted_control(16, 4, 0, 11);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> hz(80.0, 320.0);
    const Mat comp = sub.complement();
    double coord_err = 0.0;
    double comp_err = 0.0;
    for (int k = 0; k < 10000; ++k) {
        const Vec z = 3.0 * standard_normal(16, 1, rng);
        const double y = hz(rng);
        const Vec t = transform_latent(z, sub, reg, y);
        coord_err = std::max(coord_err, (sub.basis.transpose() * t - reg.predict(y)).cwiseAbs().maxCoeff());
        comp_err = std::max(comp_err, (comp * t - comp * z).cwiseAbs().maxCoeff());
    }
    CHECK(coord_err < 1e-10);
    CHECK(comp_err < 1e-10);
}

TEST_CASE("removal zeroes the subspace coordinates", "[control][transform]")
{
    const auto [sub, reg] = planted_control(16, 3, 0, 2);
    std::mt19937_64 rng(6);
    const Vec z = standard_normal(16, 1, rng);
    const Vec r = remove_factor(z, sub);
    CHECK((sub.basis.transpose() * r).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((remove_factor(r, sub) - r).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("targets apply in centered coordinates of each subspace", "[control][transform]")
{
    FactorControls controls;
    auto [s0, r0] = planted_control(8, 2, 0, 1);
    controls.subspaces[0] = s0;
    controls.regressors[0] = r0;
    const Vec z = Vec::LinSpaced(8, 1.0, 2.0);
    const Vec out = apply_targets(z, controls, {{0, Target::value(180.0)}});
    CHECK((s0.basis.transpose() * (out - s0.mean) - r0.predict(180.0)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(apply_targets(z, controls, {}) == z);
    CHECK_THROWS_AS(apply_targets(z, controls, {{2, Target::value(1000.0)}}), Error);
    CHECK_THROWS_AS(apply_targets(z, controls, {{5, Target::value(1000.0)}}), Error);
    FactorControls no_reg;
    no_reg.subspaces[0] = s0;
    CHECK_THROWS_AS(apply_targets(z, no_reg, {{0, Target::value(150.0)}}), Error);
    CHECK_NOTHROW(apply_targets(z, no_reg, {{0, Target::removal()}}));
}

TEST_CASE("regressor prediction validates its input and flags extrapolation", "[control]")
{
    const auto [sub, reg] = planted_control(8, 2, 0, 1);
    CHECK_THROWS_AS(reg.predict(0.0), Error);
    CHECK_THROWS_AS(reg.predict(-5.0), Error);
    CHECK(reg.extrapolates(99.0));
    CHECK(reg.extrapolates(301.0));
    CHECK_FALSE(reg.extrapolates(200.0));
    RegressionModel other = reg;
    other.factor = 1;
    CHECK_THROWS_AS(transform_latent(Vec::Zero(8), sub, other, 150.0), Error);
}

TEST_CASE("transformed spectrogram reports extrapolated targets", "[control][transform]")
{
    auto vae = VaeParams::init(129, 8, 3);
    FactorControls controls;
    auto [s0, r0] = planted_control(8, 2, 0, 1);
    controls.subspaces[0] = s0;
    controls.regressors[0] = r0;
    SynthConfig c;
    c.frame_len = 256;
    Mat frames(129, 3);
    for (Index n = 0; n < 3; ++n) frames.col(n) = synth_frame(c, static_cast<std::uint64_t>(n));
    const std::vector<FrameTargets> targets{{{0, Target::value(150.0)}}, {{0, Target::value(400.0)}}, {}};
    const auto out = transform_spectrogram(vae, controls, frames, targets);
    CHECK(out.spectra.rows() == 129);
    CHECK(out.spectra.cols() == 3);
    REQUIRE(out.extrapolated.size() == 1);
    CHECK(out.extrapolated[0] == std::pair<Index, int>{1, 0});
    const LatentBatch enc = encode_batch(vae, frames);
    const Vec plain = decode(vae, enc.means.col(2));
    CHECK((out.spectra.col(2) - plain).cwiseAbs().maxCoeff() <= 1e-12 * plain.cwiseAbs().maxCoeff());
    const std::vector<FrameTargets> short_targets(2);
    CHECK_THROWS_AS(transform_spectrogram(vae, controls, frames, short_targets), Error);
}

TEST_CASE("conditional prior samples sit at the regressed coordinates", "[control]")
{
    const auto [sub, reg] = planted_control(16, 3, 0, 4);
    std::mt19937_64 rng(9);
    const Vec z = conditional_prior_sample(sub, reg, 222.0, rng);
    CHECK((sub.basis.transpose() * z - reg.predict(222.0)).cwiseAbs().maxCoeff() < 1e-10);
}
