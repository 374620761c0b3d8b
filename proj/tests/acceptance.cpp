// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance [--cache DIR] [--desk-config FILE] [--only 1,5,...]

#include "sfvae/pipeline.hpp"

#include <CLI11.hpp>

#include <bit>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>

using namespace sfvae;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string num(double v, int precision = 4)
{
    std::ostringstream o;
    o.precision(precision);
    o << v;
    return o.str();
}

double elapsed_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void note(const std::string& msg)
{
    std::cerr << "  .. " << msg << std::endl;
}

// ---------------------------------------------------------------------------
// Desk model shared by criteria 3 to 8
// ---------------------------------------------------------------------------

struct Desk {
    PipelineConfig cfg;
    VaeParams vae;
    std::array<LabeledDataset, 4> datasets;
    FittedControls fitted;
};

VaeParams train_or_load(const PipelineConfig& cfg, const std::optional<fs::path>& cache)
{
    const std::optional<fs::path> file = cache ? std::optional(*cache / "desk_model.sft1") : std::nullopt;
    if (file && fs::exists(*file)) {
        const auto c = sft1::read_file(*file);
        if (get_stamp(c).config_hash == cfg.hash()) {
            note("desk model loaded from " + file->string());
            return checkpoint_from_sft1(c);
        }
        note("cached desk model has a different config hash; retraining");
    }
    const auto t0 = std::chrono::steady_clock::now();
    note("training desk model: " + std::to_string(cfg.corpus_frames) + " frames, " + std::to_string(cfg.train.epochs) +
         " epochs, batch " + std::to_string(cfg.train.batch_size) + ", KL warm-up " +
         std::to_string(cfg.train.kl_warmup_epochs));
    const auto corpus = make_corpus(cfg);
    auto [vae, log] = train(initial_model(cfg, corpus.spectra), corpus.spectra, cfg.train,
                            [&](std::size_t epoch, double v) {
                                if (epoch % 10 == 0) note("epoch " + std::to_string(epoch) + " validation ELBO " + num(v, 6));
                            });
    note("desk model trained in " + num(elapsed_since(t0), 3) + " s");
    if (file) {
        fs::create_directories(file->parent_path());
        sft1::write_file(*file, checkpoint_to_sft1(vae, {cfg.hash(), cfg.train.seed}));
    }
    return vae;
}

Desk build_desk(const PipelineConfig& cfg, const std::optional<fs::path>& cache)
{
    Desk d{cfg, train_or_load(cfg, cache), make_factor_datasets(cfg), {}};
    d.fitted = fit_controls(d.vae, d.datasets, cfg);
    note(format_subspace_summary(d.fitted.subspaces));
    return d;
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

Verdict gradient_check()
{
    SynthConfig s;
    s.frame_len = 256;
    HeldOutOptions ho;
    ho.count = 8;
    const Mat batch = render_frames(held_out_vowels(ho, s), 3);
    auto p = VaeParams::init(batch.rows(), 8, 5);
    adapt_to_corpus(p, batch);
    const auto r = check_elbo_gradient(p, batch, 100, 17);
    return {r.max_relative_error < 1e-4,
            "D=" + std::to_string(batch.rows()) + " L=8 coords=100 max_rel_err=" + num(r.max_relative_error, 3)};
}

Verdict training_sanity()
{
    const PipelineConfig cfg;  // 5000 frames, D=513, L=16, default optimizer settings
    const auto corpus = make_corpus(cfg);
    const VaeParams init = initial_model(cfg, corpus.spectra);
    TrainConfig tc = cfg.train;
    tc.epochs = 50;
    tc.log_every = 1;
    auto [trained, log] = train(init, corpus.spectra, tc);

    const std::size_t steps_per_epoch = (log.train_frames + tc.batch_size - 1) / tc.batch_size;
    const auto moving_average = [&](std::size_t end) {
        const std::size_t begin = end > 100 ? end - 100 : 0;
        double acc = 0.0;
        for (std::size_t i = begin; i < end; ++i) acc += log.step_elbo[i];
        return acc / static_cast<double>(end - begin);
    };
    const double first = moving_average(std::min(steps_per_epoch, log.step_elbo.size()));
    const double last = moving_average(log.step_elbo.size());
    const double is0 = mean_reconstruction_divergence(init, corpus.spectra);
    const double is1 = mean_reconstruction_divergence(trained, corpus.spectra);
    const double ratio = is0 / is1;
    return {last > first && ratio >= 5.0, "MA100 ELBO epoch1=" + num(first, 6) + " epoch50=" + num(last, 6) +
                                              " IS untrained=" + num(is0) + " trained=" + num(is1) +
                                              " drop=" + num(ratio, 3) + "x"};
}

Verdict pca_equivalence(const Desk& d)
{
    std::mt19937_64 rng(mix_seed(d.cfg.dataset_seed, 77));
    const VaeEncoder enc(d.vae);
    double worst = 0.0;
    std::string per;
    for (const auto& sub : d.fitted.subspaces) {
        const auto& ds = d.datasets[static_cast<std::size_t>(sub.factor)];
        const Mat oracle = sampling_pca_oracle(enc, ds.spectra, sub.dim(), 100000, rng);
        const double deg = radians_to_degrees(principal_angles(sub.basis, oracle).maxCoeff());
        worst = std::max(worst, deg);
        per += std::string(" ") + factor_name(sub.factor) + "(M=" + std::to_string(sub.dim()) + ")=" + num(deg, 3);
    }
    return {worst < 2.0, "max principal angle deg:" + per};
}

Verdict subspace_algebra(const Desk& d)
{
    std::mt19937_64 rng(mix_seed(d.cfg.dataset_seed, 78));
    double ortho = 0.0, idem = 0.0, coord = 0.0, comp = 0.0;
    for (const auto& sub : d.fitted.subspaces) {
        const auto& reg = *d.fitted.controls.regressors[static_cast<std::size_t>(sub.factor)];
        ortho = std::max(ortho, orthonormality_deviation(sub.basis));
        const Mat p = sub.projector();
        const Mat c = sub.complement();
        idem = std::max(idem, (p * p - p).cwiseAbs().maxCoeff());
        std::uniform_real_distribution<double> label(reg.y_min, reg.y_max);
        for (int k = 0; k < 10000 / kFactorCount; ++k) {
            const Vec z = 3.0 * standard_normal(sub.latent_dim(), 1, rng);
            const double y = label(rng);
            const Vec t = transform_latent(z, sub, reg, y);
            coord = std::max(coord, (sub.basis.transpose() * t - reg.predict(y)).cwiseAbs().maxCoeff());
            comp = std::max(comp, (c * t - c * z).cwiseAbs().maxCoeff());
        }
    }
    return {ortho < 1e-8 && idem < 1e-10 && coord < 1e-10 && comp < 1e-10,
            "draws=10000 |UtU-I|=" + num(ortho, 3) + " |PP-P|=" + num(idem, 3) + " |Ut z'-g(y)|=" + num(coord, 3) +
                " |complement change|=" + num(comp, 3)};
}

Verdict disentanglement(const Desk& d)
{
    const double latent = d.fitted.correlation.max_between(0, 1);
    const auto raw = raw_representation_baseline(d.datasets, d.cfg.variance_threshold);
    const double baseline = raw.report.max_between(0, 1);
    return {latent < 0.5 && baseline > latent, "f0-f1 max |corr| latent=" + num(latent, 3) +
                                                   " raw-spectrum=" + num(baseline, 3) + " (all pairs: latent=" +
                                                   num(d.fitted.correlation.max_off_block, 3) +
                                                   " raw=" + num(raw.report.max_off_block, 3) + ")"};
}

Verdict transformation(const Desk& d)
{
    ExperimentOptions opt;
    opt.held_out = d.cfg.held_out;
    opt.config_hash = d.cfg.hash();
    try {
        const auto r = run_transformation_experiment(d.vae, d.fitted.controls, d.cfg.sweeps[0], opt);
        note(format_transform_report(r));
        const auto med = [&](int j) { return r.delta[static_cast<std::size_t>(j)].median; };
        return {med(0) < 5.0 && med(1) < 15.0 && med(2) < 15.0 && med(3) < 15.0,
                "f0 sweep " + num(d.cfg.sweeps[0].min_hz) + ".." + num(d.cfg.sweeps[0].max_hz) + " Hz on " +
                    std::to_string(r.vowels) + " vowels; median delta% f0=" + num(med(0), 3) + " f1=" + num(med(1), 3) +
                    " f2=" + num(med(2), 3) + " f3=" + num(med(3), 3)};
    } catch (const MeasurementFailureError& e) {
        return {false, e.what()};
    }
}

Verdict whisper(const Desk& d)
{
    const auto r = run_whisper_experiment(d.vae, d.fitted.controls, d.cfg.held_out);
    note(format_whisper_report(r));
    const auto& s = r.formant_shift;
    return {r.unvoiced_fraction >= 0.9 && s[0].median < 15.0 && s[1].median < 15.0 && s[2].median < 15.0,
            "unvoiced fraction=" + num(r.unvoiced_fraction, 3) + " (threshold " + num(r.voiced_threshold_db) +
                " dB) median formant shift% f1=" + num(s[0].median, 3) + " f2=" + num(s[1].median, 3) +
                " f3=" + num(s[2].median, 3)};
}

Verdict f0_estimation(const Desk& d)
{
    const auto& cfg = d.cfg;
    const auto& sub0 = d.fitted.subspaces[0];
    const auto setup = prepare_pitch(d.vae, sub0, d.datasets[0], cfg);
    const auto tests = pitch_test_set(cfg);
    std::vector<double> refs;
    for (const auto& c : tests) refs.push_back(c.f0);
    const std::vector<bool> voiced(tests.size(), true);

    const Mat clean = render_frames(tests, cfg.held_out.seed);
    const double pe_clean = pitch_error(f0_values(estimate_f0_frames(clean, d.vae, sub0, setup.dictionary)), refs, voiced, 0.2);

    std::vector<double> snr = cfg.pitch.snr_db;
    std::sort(snr.begin(), snr.end(), std::greater<>());
    const auto seeds = sweep_seeds(cfg);
    const FrameEstimator projected = [&](const Mat& f) { return f0_values(estimate_f0_frames(f, d.vae, sub0, setup.dictionary)); };
    const FrameEstimator latent = [&](const Mat& f) {
        return f0_values(estimate_f0_latent_frames(f, d.vae, setup.latent_dictionary));
    };
    const auto rows_p = snr_sweep(tests, snr, cfg.pitch.lambdas, projected, seeds);
    const auto rows_l = snr_sweep(tests, snr, cfg.pitch.lambdas, latent, seeds);
    note("projected\n" + format_sweep(rows_p));
    note("full latent\n" + format_sweep(rows_l));

    const auto pe_at = [&](const std::vector<SweepRow>& rows, double lambda, double s) {
        for (const auto& r : rows) {
            if (r.lambda == lambda && r.snr_db == s) return r.pe_percent;
        }
        throw Error("missing sweep row");
    };
    bool monotone = true;
    bool beats_latent = true;
    std::string curve;
    for (double l : cfg.pitch.lambdas) {
        curve += " lambda=" + num(l) + ":";
        for (std::size_t k = 0; k < snr.size(); ++k) {
            const double pe = pe_at(rows_p, l, snr[k]);
            curve += (k ? "," : "") + num(pe, 3);
            if (k > 0 && pe < pe_at(rows_p, l, snr[k - 1])) monotone = false;
            if (snr[k] <= 0.0 && pe > pe_at(rows_l, l, snr[k])) beats_latent = false;
        }
    }
    return {pe_clean < 10.0 && monotone && beats_latent,
            "clean PE(20%)=" + num(pe_clean, 3) + "% on " + std::to_string(tests.size()) +
                " frames; non-decreasing=" + (monotone ? "yes" : "no") + " projected<=latent at SNR<=0=" +
                (beats_latent ? "yes" : "no") + "; PE% by SNR high->low" + curve};
}

Verdict metric_fixtures()
{
    std::vector<std::string> failed;
    const auto expect = [&](bool ok, const std::string& what) {
        if (!ok) failed.push_back(what);
    };
    const auto close = [](double a, double b, double tol = 1e-12) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); };

    {
        const std::vector<double> ref{100, 120, 140, 160, 180, 200, 220, 240, 260, 280};
        const std::vector<double> est{100, 150, 140, 130, 180, 240, 221, 96, 260, 280};
        const std::vector<bool> voiced{true, true, true, true, true, true, true, false, true, false};
        expect(close(pitch_error(est, ref, voiced, 0.2), 25.0), "PE(20%)");
        expect(close(pitch_error(est, ref, voiced, 0.1), 37.5), "PE(10%)");
        expect(close(pitch_error(est, ref, voiced, 0.01), 37.5), "PE(1%)");
        expect(close(pitch_error(est, ref, voiced, 0.001), 50.0), "PE(0.1%)");
    }
    {
        const std::vector<double> target{100, 120, 140, 160, 180, 200, 220, 240, 260, 280};
        const std::vector<double> measured{101, 114, 140, 168, 180, 230, 209, 240, 273, 266};
        std::vector<double> delta;
        for (std::size_t i = 0; i < target.size(); ++i) delta.push_back(relative_error_percent(measured[i], target[i]));
        const auto s = summarize(delta);
        expect(close(s.mean, 4.1) && close(s.median, 5.0), "delta mean/median");
    }
    std::mt19937_64 rng(2024);
    {
        const Index n = 3;
        const Mat a = standard_normal(n, n, rng);
        const Mat c0 = a * a.transpose() + 0.5 * Mat::Identity(n, n);
        const Mat b = standard_normal(n, n, rng);
        const Mat c1 = b * b.transpose() + 0.5 * Mat::Identity(n, n);
        const Vec mu0 = standard_normal(n, 1, rng);
        const Vec mu1 = standard_normal(n, 1, rng);
        expect(std::abs(gaussian_kl(mu0, c0, mu0, c0)) < 1e-12, "KL self-query");
        const double exact = gaussian_kl(mu0, c0, mu1, c1);
        const Eigen::LLT<Mat> l0(c0), l1(c1);
        const Mat chol0 = l0.matrixL();
        const double ld0 = 2.0 * chol0.diagonal().array().log().sum();
        const double ld1 = 2.0 * Mat(l1.matrixL()).diagonal().array().log().sum();
        const int samples = 400000;
        double acc = 0.0;
        for (int s = 0; s < samples; ++s) {
            const Vec x = mu0 + chol0 * standard_normal(n, 1, rng);
            const Vec r0 = l0.solve(x - mu0);
            const Vec r1 = l1.solve(x - mu1);
            acc += 0.5 * (ld1 - ld0 + (x - mu1).dot(r1) - (x - mu0).dot(r0));
        }
        const double mc = acc / samples;
        expect(std::abs(mc - exact) < 0.02 * exact, "KL vs Monte Carlo (exact " + num(exact) + ", MC " + num(mc) + ")");
    }
    {
        const std::vector<double> br{137.5, 200.0, 262.5};
        const Vec coef = (Vec(5) << -1.0, 0.02, -0.05, 0.07, -0.03).finished();
        const auto truth = from_hinge(coef, br);
        const Vec y = Vec::LinSpaced(201, 100.0, 300.0);
        Vec t(y.size());
        for (Index i = 0; i < y.size(); ++i) t[i] = truth(y[i]);
        const auto fit = fit_piecewise_linear(y, t, 4, 16);
        expect(fit.rmse < 1e-8, "planted piecewise RMSE " + num(fit.rmse, 3));
    }
    {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (std::size_t n : {1u, 2u, 5u, 11u, 40u}) {
            std::vector<double> x(n);
            for (auto& v : x) v = u(rng);
            const auto got = median_filter(x, 5);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t h = std::min<std::size_t>({2, i, n - 1 - i});
                std::vector<double> win(x.begin() + static_cast<long>(i - h), x.begin() + static_cast<long>(i + h + 1));
                std::sort(win.begin(), win.end());
                if (got[i] != win[win.size() / 2]) {
                    failed.push_back("median filter n=" + std::to_string(n));
                    break;
                }
            }
        }
    }
    std::string detail = "PE, delta, KL self-query, KL vs MC, planted regression, median filter";
    if (!failed.empty()) {
        detail = "failed:";
        for (const auto& f : failed) detail += " [" + f + "]";
    }
    return {failed.empty(), detail};
}

sft1::Container random_container(std::mt19937_64& rng)
{
    std::uniform_int_distribution<int> n_entries(0, 6), rank(0, 3), extent(0, 5), coin(0, 1);
    std::uniform_int_distribution<std::uint64_t> bits;
    sft1::Container c;
    const int n = n_entries(rng);
    for (int e = 0; e < n; ++e) {
        sft1::Tensor t;
        std::uint64_t count = 1;
        for (int k = rank(rng); k > 0; --k) {
            t.dims.push_back(static_cast<std::uint64_t>(extent(rng)));
            count *= t.dims.back();
        }
        if (coin(rng) == 0) {
            std::vector<double> v(count);
            for (auto& x : v) x = std::bit_cast<double>(bits(rng));
            t.data = std::move(v);
        } else {
            std::vector<std::int64_t> v(count);
            for (auto& x : v) x = std::bit_cast<std::int64_t>(bits(rng));
            t.data = std::move(v);
        }
        c.put("t" + std::to_string(e), std::move(t));
    }
    return c;
}

/// Every pipeline stage on a small configuration, as serialized artifacts.
std::vector<std::pair<std::string, std::string>> pipeline_artifacts(const PipelineConfig& base)
{
    PipelineConfig cfg = base;
    cfg.corpus_frames = 400;
    cfg.train.epochs = 2;
    cfg.train.batch_size = 32;
    cfg.held_out.count = 4;
    cfg.pitch.test_frames = 8;
    const ArtifactStamp stamp{cfg.hash(), cfg.train.seed};
    std::vector<std::pair<std::string, std::string>> out;

    const auto datasets = make_factor_datasets(cfg);
    for (const auto& ds : datasets) {
        out.emplace_back("dataset " + std::string(factor_name(*ds.varying_factor)), sft1::serialize(dataset_to_sft1(ds, stamp)));
    }
    const auto corpus = make_corpus(cfg);
    out.emplace_back("corpus", sft1::serialize(dataset_to_sft1(corpus, stamp)));
    const auto [vae, log] = train(initial_model(cfg, corpus.spectra), corpus.spectra, cfg.train);
    out.emplace_back("checkpoint", sft1::serialize(checkpoint_to_sft1(vae, stamp)));
    const auto fitted = fit_controls(vae, datasets, cfg);
    for (int i = 0; i < kFactorCount; ++i) {
        const auto k = static_cast<std::size_t>(i);
        out.emplace_back(std::string("subspace ") + factor_name(i), sft1::serialize(subspace_to_sft1(*fitted.controls.subspaces[k], stamp)));
        out.emplace_back(std::string("regressor ") + factor_name(i), sft1::serialize(regressor_to_sft1(*fitted.controls.regressors[k], stamp)));
    }
    const auto vowels = held_out_vowels(cfg.held_out, cfg.synth);
    const Mat frames = render_frames(vowels, cfg.held_out.seed);
    std::vector<FrameTargets> targets(vowels.size());
    targets[0][0] = Target::value(150.0);
    targets[1][0] = Target::removal();
    targets[2][1] = Target::value(700.0);
    const auto moved = transform_spectrogram(vae, fitted.controls, frames, targets);
    out.emplace_back("transformed spectrogram", sft1::serialize(spectrogram_to_sft1(moved.spectra, stamp)));
    const auto setup = prepare_pitch(vae, fitted.subspaces[0], datasets[0], cfg);
    const auto track = track_from_estimates(estimate_f0_frames(frames, vae, fitted.subspaces[0], setup.dictionary),
                                            setup.voiced_threshold);
    out.emplace_back("pitch track", format_track(track));
    return out;
}

Verdict determinism_and_formats(const PipelineConfig& cfg)
{
    std::vector<std::string> failed;
    const auto a = pipeline_artifacts(cfg);
    const auto b = pipeline_artifacts(cfg);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].second != b[i].second) failed.push_back("rerun differs: " + a[i].first);
        if (a[i].first == "pitch track") continue;
        if (sft1::serialize(sft1::deserialize(a[i].second)) != a[i].second) failed.push_back("round trip: " + a[i].first);
    }

    std::mt19937_64 rng(20240601);
    int truncations = 0;
    bool fuzz_ok = true;
    for (int trial = 0; trial < 1000 && fuzz_ok; ++trial) {
        const auto c = random_container(rng);
        const std::string bytes = sft1::serialize(c);
        const auto back = sft1::deserialize(bytes);
        if (back.size() != c.size() || sft1::serialize(back) != bytes) fuzz_ok = false;
        for (std::size_t e = 0; fuzz_ok && e < c.size(); ++e) {
            const auto& [name, t] = c.entries()[e];
            const auto& [name2, t2] = back.entries()[e];
            fuzz_ok = name == name2 && t.dims == t2.dims && t.dtype() == t2.dtype();
        }
        std::uniform_int_distribution<std::size_t> cut(0, bytes.size() - 1);
        try {
            (void)sft1::deserialize(std::string_view(bytes).substr(0, cut(rng)));
            fuzz_ok = false;
        } catch (const sft1::FormatError&) {
            ++truncations;
        }
    }
    if (!fuzz_ok) failed.push_back("SFT1 fuzz round trip or truncation rejection");
    std::string detail = std::to_string(a.size()) + " stage artifacts byte-identical on rerun; 1000 fuzz containers bit-exact; " +
                         std::to_string(truncations) + " truncations rejected";
    if (!failed.empty()) {
        detail = "failed:";
        for (const auto& f : failed) detail += " [" + f + "]";
    }
    return {failed.empty(), detail};
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"acceptance suite"};
    std::optional<fs::path> cache;
    fs::path desk_config = SFVAE_DESK_CONFIG;
    std::vector<int> only;
    app.add_option("--cache", cache, "directory for the trained desk model");
    app.add_option("--desk-config", desk_config, "configuration of the desk model")->check(CLI::ExistingFile);
    app.add_option("--only", only, "criteria to run")->delimiter(',')->check(CLI::Range(1, 10));
    CLI11_PARSE(app, argc, argv);

    const std::set<int> selected(only.begin(), only.end());
    const auto wanted = [&](int k) { return selected.empty() || selected.contains(k); };

    const std::array<const char*, 10> titles{
        "ELBO gradient vs finite differences",
        "training sanity",
        "analytic subspace vs sampling PCA",
        "subspace algebra",
        "desk disentanglement",
        "f0 transformation accuracy",
        "whisper (f0 removal)",
        "f0 estimation",
        "metric and unit fixtures",
        "determinism and formats",
    };

    PipelineConfig desk_cfg;
    std::optional<Desk> desk;
    try {
        desk_cfg = load_config(desk_config);
        desk_cfg.validate();
    } catch (const std::exception& e) {
        std::cerr << "desk config: " << e.what() << '\n';
        return 2;
    }
    const auto need_desk = [&]() -> const Desk& {
        if (!desk) desk = build_desk(desk_cfg, cache);
        return *desk;
    };

    int failures = 0;
    for (int k = 1; k <= 10; ++k) {
        if (!wanted(k)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            switch (k) {
            case 1: v = gradient_check(); break;
            case 2: v = training_sanity(); break;
            case 3: v = pca_equivalence(need_desk()); break;
            case 4: v = subspace_algebra(need_desk()); break;
            case 5: v = disentanglement(need_desk()); break;
            case 6: v = transformation(need_desk()); break;
            case 7: v = whisper(need_desk()); break;
            case 8: v = f0_estimation(need_desk()); break;
            case 9: v = metric_fixtures(); break;
            case 10: v = determinism_and_formats(desk_cfg); break;
            }
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        failures += v.pass ? 0 : 1;
        std::cout << "criterion " << k << ' ' << (v.pass ? "PASS" : "FAIL") << ": " << titles[static_cast<std::size_t>(k - 1)]
                  << " | " << v.detail << " [" << num(elapsed_since(t0), 3) << " s]" << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
