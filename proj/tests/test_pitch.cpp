#include <catch_amalgamated.hpp>

#include "sfvae/pitch.hpp"

using namespace sfvae;
using Catch::Approx;

namespace {

ReferenceDictionary planted_dictionary()
{
    ReferenceDictionary d;
    d.labels = (Vec(3) << 100.0, 150.0, 200.0).finished();
    for (int k = 0; k < 3; ++k) {
        d.entries.emplace_back((Vec(2) << k, 0.0).finished(), Mat::Identity(2, 2) * 0.1);
    }
    return d;
}

ProjectedPosterior query(double x, double y, double var)
{
    ProjectedPosterior q;
    q.mean = (Vec(2) << x, y).finished();
    q.covariance = Mat::Identity(2, 2) * var;
    q.log_det = log_det_psd(q.covariance);
    return q;
}

}  // namespace

TEST_CASE("pitch error on a hand-computed 10-frame fixture", "[pitch][metric]")
{
    const std::vector<double> ref{100, 120, 140, 160, 180, 200, 220, 240, 260, 280};
    const std::vector<double> est{100, 150, 140, 130, 180, 240, 221, 96, 260, 280};
    const std::vector<bool> voiced{true, true, true, true, true, true, true, false, true, false};
    // voiced: 8 frames; relative errors 0, .25, 0, .1875, 0, .2, 1/220, 0
    CHECK(pitch_error(est, ref, voiced, 0.2) == Approx(100.0 * 2.0 / 8.0));
    CHECK(pitch_error(est, ref, voiced, 0.1) == Approx(100.0 * 3.0 / 8.0));
    CHECK(pitch_error(est, ref, voiced, 0.01) == Approx(100.0 * 3.0 / 8.0));
    CHECK(pitch_error(est, ref, voiced, 0.001) == Approx(100.0 * 4.0 / 8.0));
    const std::vector<bool> none(10, false);
    CHECK_THROWS_AS(pitch_error(est, ref, none, 0.2), Error);
    CHECK_THROWS_AS(pitch_error(est, ref, voiced, 0.0), Error);
    CHECK_THROWS_AS(pitch_error(std::vector<double>(9, 1.0), ref, voiced, 0.2), Error);
}

TEST_CASE("pitch error is monotone in the tolerance", "[pitch][metric]")
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(80.0, 320.0);
    std::vector<double> ref(200), est(200);
    for (std::size_t i = 0; i < ref.size(); ++i) {
        ref[i] = u(rng);
        est[i] = u(rng);
    }
    const std::vector<bool> voiced(200, true);
    double prev = 100.0;
    for (double lambda : {0.01, 0.05, 0.1, 0.2, 0.5, 1.0}) {
        const double pe = pitch_error(est, ref, voiced, lambda);
        CHECK(pe <= prev);
        prev = pe;
    }
}

TEST_CASE("nearest reference picks the closest entry and breaks ties low", "[pitch]")
{
    const auto d = planted_dictionary();
    CHECK(nearest_reference(query(0.1, 0.0, 0.1), d).f0_hz == 100.0);
    CHECK(nearest_reference(query(1.9, 0.0, 0.1), d).f0_hz == 200.0);
    CHECK(nearest_reference(query(0.5, 0.0, 0.1), d).f0_hz == 100.0);
    CHECK(nearest_reference(query(1.5, 0.0, 0.1), d).f0_hz == 150.0);
    const auto self = nearest_reference(query(1.0, 0.0, 0.1), d);
    CHECK(self.f0_hz == 150.0);
    CHECK(self.min_kl == 0.0);
    CHECK_THROWS_AS(nearest_reference(query(0.0, 0.0, 0.1), ReferenceDictionary{}), Error);
}

TEST_CASE("reference frames query to their own label with zero divergence", "[pitch]")
{
    const auto vae = VaeParams::init(513, 16, 3);
    const auto d0 = make_factor_dataset(0, 0);
    const auto sub = fit_subspace(VaeEncoder(vae), d0);
    const auto dict = build_reference(vae, sub, d0);
    REQUIRE(dict.size() == d0.size());
    for (Index k = 1; k < dict.size(); ++k) CHECK(dict.labels[k] > dict.labels[k - 1]);
    const auto est = estimate_f0_frames(d0.spectra, vae, sub, dict);
    for (Index n = 0; n < d0.size(); ++n) {
        CHECK(est[static_cast<std::size_t>(n)].f0_hz == d0.labels(0, n));
        CHECK(est[static_cast<std::size_t>(n)].min_kl == 0.0);
    }
    const auto latent = build_latent_reference(vae, d0);
    const auto lest = estimate_f0_latent_frames(d0.spectra.leftCols(10), vae, latent);
    for (Index n = 0; n < 10; ++n) CHECK(lest[static_cast<std::size_t>(n)].f0_hz == d0.labels(0, n));

    const auto d1 = make_factor_dataset(1, 0);
    CHECK_THROWS_AS(build_reference(vae, sub, d1), Error);
    CHECK_THROWS_AS(build_latent_reference(vae, d1), Error);
}

TEST_CASE("track smoothing applies the median filter inside voiced runs only", "[pitch][track]")
{
    std::vector<F0Estimate> raw;
    const std::vector<double> f0{100, 300, 102, 104, 106, 500, 110, 112, 114, 116};
    const std::vector<double> kl{1, 1, 1, 1, 1, 9, 1, 1, 1, 1};
    for (std::size_t i = 0; i < f0.size(); ++i) raw.push_back({f0[i], kl[i]});
    const auto t = track_from_estimates(raw, 5.0);
    CHECK_FALSE(t.voiced[5]);
    CHECK(t.f0_hz[5] == 500.0);
    const std::vector<double> first{100, 300, 102, 104, 106};
    const auto first_med = median_filter(first, 5);
    const std::vector<double> second{110, 112, 114, 116};
    const auto second_med = median_filter(second, 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(t.f0_hz[i] == first_med[i]);
    for (std::size_t i = 0; i < 4; ++i) CHECK(t.f0_hz[6 + i] == second_med[i]);
    CHECK(t.f0_hz[1] == 102.0);
}

TEST_CASE("quantile interpolates between order statistics", "[pitch][track]")
{
    CHECK(quantile({3.0, 1.0, 2.0}, 0.5) == 2.0);
    CHECK(quantile({1.0, 2.0}, 0.25) == Approx(1.25));
    CHECK(quantile({4.0}, 0.95) == 4.0);
    std::vector<double> v(101);
    for (int i = 0; i <= 100; ++i) v[static_cast<std::size_t>(i)] = i;
    CHECK(quantile(v, 0.95) == Approx(95.0));
    CHECK_THROWS_AS(quantile({}, 0.5), Error);
    std::vector<F0Estimate> est;
    for (int i = 0; i <= 100; ++i) est.push_back({100.0, static_cast<double>(i)});
    CHECK(calibrate_voiced_threshold(est) == Approx(95.0));
}

TEST_CASE("SNR sweep averages seeds and orders rows", "[pitch][sweep]")
{
    std::vector<SynthConfig> tests(4);
    for (std::size_t i = 0; i < tests.size(); ++i) tests[i].f0 = 100.0 + 50.0 * static_cast<double>(i);
    // An oracle that is exact above 0 dB and off by 30 % below.
    const FrameEstimator est = [&](const Mat& frames) {
        const double fill = (frames.colwise().mean().array() / frames.colwise().maxCoeff().array()).mean();
        std::vector<double> out;
        for (const auto& c : tests) out.push_back(fill > 0.05 ? 1.3 * c.f0 : c.f0);
        return out;
    };
    const std::vector<double> snr{10.0, -10.0};
    const std::vector<double> lambdas{0.2, 0.5};
    const std::vector<std::uint64_t> seeds{1, 2};
    const auto rows = snr_sweep(tests, snr, lambdas, est, seeds);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].lambda == 0.2);
    CHECK(rows[0].snr_db == -10.0);
    CHECK(rows[1].snr_db == 10.0);
    CHECK(rows[0].pe_percent == 100.0);
    CHECK(rows[1].pe_percent == 0.0);
    CHECK(rows[2].pe_percent == 0.0);
    CHECK_THROWS_AS(snr_sweep(tests, std::vector<double>{}, lambdas, est, seeds), Error);
}
