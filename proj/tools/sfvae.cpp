// sfvae: synthesize data, train the IS-VAE, fit factor controls, transform
// spectra, and estimate f0.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include "sfvae/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace sfvae;
namespace fs = std::filesystem;

namespace {

class UsageError : public Error {
public:
    using Error::Error;
};

struct Common {
    std::optional<fs::path> config_path;
    std::optional<std::uint64_t> seed;
};

PipelineConfig load(const Common& common)
{
    auto cfg = resolve_config(common.config_path);
    if (common.seed) {
        cfg.corpus_seed = *common.seed;
        cfg.dataset_seed = *common.seed;
        cfg.train.seed = *common.seed;
        cfg.init_seed = *common.seed;
        cfg.held_out.seed = *common.seed;
    }
    return cfg;
}

sft1::Container read_artifact(const fs::path& p)
{
    if (!fs::exists(p)) throw Error("no such file: " + p.string());
    return sft1::read_file(p);
}

void write_artifact(const fs::path& p, const sft1::Container& c)
{
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    sft1::write_file(p, c);
}

int parse_factor(const std::string& s)
{
    for (int i = 0; i < kFactorCount; ++i) {
        if (s == factor_name(i) || s == std::to_string(i)) return i;
    }
    throw UsageError("unknown factor '" + s + "' (expected 0..3 or f0..f3)");
}

/// Rows "frame_index factor value|REMOVE"; '#' starts a comment.
std::vector<FrameTargets> read_targets(const fs::path& path, Index n_frames)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open targets table " + path.string());
    std::vector<FrameTargets> rows(static_cast<std::size_t>(n_frames));
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
        std::istringstream ls(line);
        std::string idx, factor, value, extra;
        if (!(ls >> idx)) continue;
        const std::string where = path.string() + " line " + std::to_string(line_no) + ": ";
        if (!(ls >> factor >> value) || (ls >> extra)) throw UsageError(where + "expected 'frame_index factor value|REMOVE'");
        long long frame = 0;
        try {
            std::size_t used = 0;
            frame = std::stoll(idx, &used);
            if (used != idx.size()) throw std::invalid_argument(idx);
        } catch (const std::exception&) {
            throw UsageError(where + "bad frame index '" + idx + "'");
        }
        if (frame < 0 || frame >= n_frames) {
            throw UsageError(where + "frame index " + idx + " outside 0.." + std::to_string(n_frames - 1));
        }
        int f = 0;
        try {
            f = parse_factor(factor);
        } catch (const UsageError& e) {
            throw UsageError(where + e.what());
        }
        Target t;
        if (value == "REMOVE") {
            t = Target::removal();
        } else {
            try {
                std::size_t used = 0;
                t = Target::value(std::stod(value, &used));
                if (used != value.size()) throw std::invalid_argument(value);
            } catch (const std::exception&) {
                throw UsageError(where + "bad target value '" + value + "'");
            }
            if (!(t.hz > 0.0)) throw UsageError(where + "target must be a positive frequency");
        }
        rows[static_cast<std::size_t>(frame)][f] = t;
    }
    return rows;
}

FactorControls load_controls(const std::vector<fs::path>& subspaces, const std::vector<fs::path>& regressors)
{
    FactorControls c;
    for (const auto& p : subspaces) {
        auto s = subspace_from_sft1(read_artifact(p));
        c.subspaces[static_cast<std::size_t>(s.factor)] = std::move(s);
    }
    for (const auto& p : regressors) {
        auto r = regressor_from_sft1(read_artifact(p));
        const auto& s = c.subspaces[static_cast<std::size_t>(r.factor)];
        if (s && s->dim() != r.dim()) {
            throw Error(p.string() + ": regressor dimension does not match the " + factor_name(r.factor) + " subspace");
        }
        c.regressors[static_cast<std::size_t>(r.factor)] = std::move(r);
    }
    return c;
}

/// Files named subspace_fI.sft1 / regressor_fI.sft1 inside a directory.
void add_from_dir(const fs::path& dir, std::vector<fs::path>& subspaces, std::vector<fs::path>& regressors)
{
    for (int i = 0; i < kFactorCount; ++i) {
        const auto s = dir / ("subspace_" + std::string(factor_name(i)) + ".sft1");
        const auto r = dir / ("regressor_" + std::string(factor_name(i)) + ".sft1");
        if (fs::exists(s)) subspaces.push_back(s);
        if (fs::exists(r)) regressors.push_back(r);
    }
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::optional<int> factor;
    bool corpus = false;
    std::optional<std::size_t> n;
    std::optional<std::size_t> held_out;
    std::optional<double> snr_db;
    fs::path out;
};

int cmd_synth(const Common& common, const SynthArgs& a)
{
    auto cfg = load(common);
    const int modes = (a.factor ? 1 : 0) + (a.corpus ? 1 : 0) + (a.held_out ? 1 : 0);
    if (modes != 1) throw UsageError("synth needs exactly one of --factor, --corpus, --held-out");
    const ArtifactStamp stamp{cfg.hash(), a.factor ? cfg.dataset_seed : cfg.corpus_seed};
    if (a.held_out) {
        HeldOutOptions opt = cfg.held_out;
        opt.count = *a.held_out;
        const auto vowels = held_out_vowels(opt, cfg.synth);
        Mat frames(static_cast<Index>(cfg.synth.bins()), static_cast<Index>(vowels.size()));
        LabeledDataset ds;
        ds.labels.resize(kFactorCount, frames.cols());
        for (std::size_t i = 0; i < vowels.size(); ++i) {
            const auto seed = mix_seed(opt.seed, 500 + i);
            frames.col(static_cast<Index>(i)) =
                a.snr_db ? add_noise_at_snr(vowels[i], *a.snr_db, seed) : synth_frame(vowels[i], seed);
            ds.labels.col(static_cast<Index>(i)) = label_vector(vowels[i]);
        }
        ds.spectra = std::move(frames);
        ds.sample_rate = cfg.synth.sample_rate;
        ds.frame_len = cfg.synth.frame_len;
        write_artifact(a.out, dataset_to_sft1(ds, {cfg.hash(), opt.seed}));
        std::printf("held-out vowels N=%lld D=%lld\n", static_cast<long long>(ds.size()), static_cast<long long>(ds.dim()));
        return 0;
    }
    LabeledDataset ds;
    if (a.corpus) {
        if (a.n) cfg.corpus_frames = *a.n;
        if (cfg.corpus_frames < 1) throw UsageError("--n must be at least 1");
        ds = make_corpus(cfg);
    } else {
        ds = make_factor_dataset(factor_spec(cfg, *a.factor), cfg.dataset_seed);
    }
    write_artifact(a.out, dataset_to_sft1(ds, {cfg.hash(), stamp.seed}));
    std::printf("N=%lld D=%lld\n", static_cast<long long>(ds.size()), static_cast<long long>(ds.dim()));
    for (int i = 0; i < kFactorCount; ++i) {
        std::printf("%s\t%g..%g Hz\n", factor_name(i), ds.labels.row(i).minCoeff(), ds.labels.row(i).maxCoeff());
    }
    return 0;
}

struct TrainArgs {
    fs::path data;
    fs::path out;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch_size;
    std::optional<std::size_t> warmup;
};

int cmd_train(const Common& common, const TrainArgs& a)
{
    auto cfg = load(common);
    if (a.epochs) cfg.train.epochs = *a.epochs;
    if (a.batch_size) cfg.train.batch_size = *a.batch_size;
    if (a.warmup) cfg.train.kl_warmup_epochs = *a.warmup;
    cfg.validate();
    const auto ds = dataset_from_sft1(read_artifact(a.data));
    const VaeParams init = initial_model(cfg, ds.spectra);
    const fs::path log_path = a.out.string() + ".log.tsv";
    if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
    std::ofstream log(log_path);
    log << "# epoch\tvalidation_elbo\n";
    const auto on_epoch = [&](std::size_t epoch, double v) {
        log << epoch << '\t' << detail::fmt(v) << '\n' << std::flush;
        std::fprintf(stderr, "epoch %zu validation ELBO %.6g\n", epoch, v);
    };
    try {
        auto [params, history] = train(init, ds.spectra, cfg.train, on_epoch);
        log << "# initial\t" << detail::fmt(history.validation_elbo.front()) << '\n';
        write_artifact(a.out, checkpoint_to_sft1(params, {cfg.hash(), cfg.train.seed}));
        std::printf("initial ELBO %.6g\nfinal ELBO %.6g\nlog %s\n", history.validation_elbo.front(),
                    history.validation_elbo.back(), log_path.c_str());
    } catch (const TrainingDivergedError& e) {
        log << "# diverged at step " << e.step << '\n';
        throw Error(std::string(e.what()) + "; log: " + log_path.string());
    }
    return 0;
}

struct FitArgs {
    fs::path checkpoint;
    std::vector<fs::path> datasets;
    fs::path out;
    std::optional<double> threshold;
};

int cmd_fit(const Common& common, const FitArgs& a)
{
    auto cfg = load(common);
    if (a.threshold) cfg.variance_threshold = *a.threshold;
    cfg.validate();
    const auto vae = checkpoint_from_sft1(read_artifact(a.checkpoint));
    std::vector<LabeledDataset> datasets;
    for (std::size_t i = 0; i < a.datasets.size(); ++i) {
        auto ds = dataset_from_sft1(read_artifact(a.datasets[i]));
        if (ds.varying_factor != static_cast<int>(i)) {
            throw Error(a.datasets[i].string() + " does not vary factor " + factor_name(static_cast<int>(i)));
        }
        datasets.push_back(std::move(ds));
    }
    const auto fitted = fit_controls(vae, datasets, cfg);
    const ArtifactStamp stamp{cfg.hash(), cfg.dataset_seed};
    fs::create_directories(a.out);
    for (const auto& s : fitted.subspaces) {
        const std::string f = factor_name(s.factor);
        write_artifact(a.out / ("subspace_" + f + ".sft1"), subspace_to_sft1(s, stamp));
        write_artifact(a.out / ("regressor_" + f + ".sft1"),
                       regressor_to_sft1(*fitted.controls.regressors[static_cast<std::size_t>(s.factor)], stamp));
    }
    std::cout << format_subspace_summary(fitted.subspaces) << format_correlation(fitted.correlation);
    return 0;
}

struct TransformArgs {
    fs::path checkpoint;
    std::vector<fs::path> subspaces;
    std::vector<fs::path> regressors;
    std::optional<fs::path> controls_dir;
    fs::path in;
    std::optional<fs::path> targets;
    fs::path out;
    bool sample = false;
};

int cmd_transform(const Common& common, const TransformArgs& a)
{
    const auto cfg = load(common);
    auto subspaces = a.subspaces;
    auto regressors = a.regressors;
    if (a.controls_dir) add_from_dir(*a.controls_dir, subspaces, regressors);
    const auto vae = checkpoint_from_sft1(read_artifact(a.checkpoint));
    const auto controls = load_controls(subspaces, regressors);
    const Mat frames = spectra_from_sft1(read_artifact(a.in));
    const auto rows = a.targets ? read_targets(*a.targets, frames.cols()) : std::vector<FrameTargets>(static_cast<std::size_t>(frames.cols()));
    const auto seed = common.seed.value_or(cfg.train.seed);
    const auto result = transform_spectrogram(vae, controls, frames, rows, {a.sample, seed});
    for (const auto& [frame, factor] : result.extrapolated) {
        const auto& reg = *controls.regressors[static_cast<std::size_t>(factor)];
        std::fprintf(stderr, "warning: frame %lld %s target %g Hz is outside the fitted range %g..%g Hz (extrapolated)\n",
                     static_cast<long long>(frame), factor_name(factor), rows[static_cast<std::size_t>(frame)].at(factor).hz,
                     reg.y_min, reg.y_max);
    }
    write_artifact(a.out, spectrogram_to_sft1(result.spectra, {cfg.hash(), seed}));
    std::printf("frames=%lld extrapolated=%zu\n", static_cast<long long>(result.spectra.cols()), result.extrapolated.size());
    return 0;
}

struct PitchArgs {
    fs::path checkpoint;
    fs::path subspace0;
    fs::path dict;
    std::optional<fs::path> in;
    std::optional<std::string> lambda_list;
    std::optional<std::string> snr_list;
    std::string baseline = "projected";
    std::optional<double> threshold;
};

int cmd_pitch(const Common& common, const PitchArgs& a)
{
    auto cfg = load(common);
    if (a.lambda_list) cfg.pitch.lambdas = parse_number_list(*a.lambda_list, "--lambda-list");
    if (a.snr_list) cfg.pitch.snr_db = parse_number_list(*a.snr_list, "--snr-list");
    cfg.validate();
    const bool latent = a.baseline == "latent";
    const auto vae = checkpoint_from_sft1(read_artifact(a.checkpoint));
    const auto sub = subspace_from_sft1(read_artifact(a.subspace0));
    const auto d0 = dataset_from_sft1(read_artifact(a.dict));
    const auto setup = prepare_pitch(vae, sub, d0, cfg);
    const auto estimate = [&](const Mat& frames) {
        return latent ? estimate_f0_latent_frames(frames, vae, setup.latent_dictionary)
                      : estimate_f0_frames(frames, vae, sub, setup.dictionary);
    };

    if (a.in) {
        const double threshold = a.threshold.value_or(latent ? setup.latent_voiced_threshold : setup.voiced_threshold);
        const auto c = read_artifact(*a.in);
        const Mat frames = spectra_from_sft1(c);
        const auto raw = estimate(frames);
        const auto track = track_from_estimates(raw, threshold);
        std::cout << "# estimator=" << (latent ? "latent" : "projected") << " voiced_threshold=" << detail::fmt(threshold)
                  << '\n'
                  << format_track(track);
        if (c.contains("labels")) {
            const auto ds = dataset_from_sft1(c);
            std::vector<double> refs;
            for (Index n = 0; n < ds.size(); ++n) refs.push_back(ds.labels(0, n));
            std::cout << "# lambda\tpe_percent\n";
            for (double l : cfg.pitch.lambdas) {
                std::cout << detail::fmt(l) << '\t' << detail::fmt(pitch_error(track.f0_hz, refs, track.voiced, l)) << '\n';
            }
        }
        return 0;
    }
    const auto tests = pitch_test_set(cfg);
    const auto seeds = sweep_seeds(cfg);
    const FrameEstimator est = [&](const Mat& frames) { return f0_values(estimate(frames)); };
    const auto rows = snr_sweep(tests, cfg.pitch.snr_db, cfg.pitch.lambdas, est, seeds);
    std::cout << "# estimator=" << (latent ? "latent" : "projected") << " frames=" << tests.size()
              << " seeds=" << seeds.size() << " config_hash=" << cfg.hash() << '\n'
              << format_sweep(rows);
    return 0;
}

struct EvaluateArgs {
    fs::path checkpoint;
    fs::path controls_dir;
    std::vector<int> factors{0};
    bool whisper = false;
};

int cmd_evaluate(const Common& common, const EvaluateArgs& a)
{
    const auto cfg = load(common);
    std::vector<fs::path> subspaces, regressors;
    add_from_dir(a.controls_dir, subspaces, regressors);
    const auto vae = checkpoint_from_sft1(read_artifact(a.checkpoint));
    const auto controls = load_controls(subspaces, regressors);
    ExperimentOptions opt;
    opt.held_out = cfg.held_out;
    opt.config_hash = cfg.hash();
    for (int f : a.factors) {
        std::cout << format_transform_report(run_transformation_experiment(vae, controls, cfg.sweeps[static_cast<std::size_t>(f)], opt));
    }
    if (a.whisper) std::cout << format_whisper_report(run_whisper_experiment(vae, controls, cfg.held_out));
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Source-filter latent controls for an Itakura-Saito VAE over power spectra"};
    app.require_subcommand(1);
    app.fallthrough();
    Common common;
    app.add_option("--config", common.config_path, "Config file (default: $" + std::string(kConfigEnvVar) + ")");
    app.add_option("--seed", common.seed, "Override every seed in the config");

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Render a single-factor dataset, the training corpus, or held-out vowels");
    synth->add_option("--factor", synth_args.factor, "Factor dataset to render (0..3)")->check(CLI::Range(0, 3));
    synth->add_flag("--corpus", synth_args.corpus, "Render the training corpus");
    synth->add_option("--n", synth_args.n, "Corpus size");
    synth->add_option("--held-out", synth_args.held_out, "Render this many held-out test vowels");
    synth->add_option("--snr", synth_args.snr_db, "Add white noise at this SNR (dB) to held-out vowels");
    synth->add_option("--out", synth_args.out, "Output SFT1 file")->required();

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train the VAE on a dataset");
    train_cmd->add_option("--data", train_args.data, "Training dataset (SFT1)")->required();
    train_cmd->add_option("--out", train_args.out, "Output checkpoint (SFT1)")->required();
    train_cmd->add_option("--epochs", train_args.epochs, "Epoch count");
    train_cmd->add_option("--batch-size", train_args.batch_size, "Minibatch size");
    train_cmd->add_option("--kl-warmup", train_args.warmup, "Epochs of linear KL warm-up");

    FitArgs fit_args;
    auto* fit = app.add_subcommand("fit", "Fit factor subspaces and regressors");
    fit->add_option("--checkpoint", fit_args.checkpoint, "VAE checkpoint")->required();
    fit->add_option("--datasets", fit_args.datasets, "Datasets d0 d1 d2 d3, in factor order")->required()->expected(1, 4);
    fit->add_option("--out", fit_args.out, "Output directory")->required();
    fit->add_option("--threshold", fit_args.threshold, "Variance threshold override");

    TransformArgs tr_args;
    auto* transform = app.add_subcommand("transform", "Move spectra along factor subspaces");
    transform->add_option("--checkpoint", tr_args.checkpoint, "VAE checkpoint")->required();
    transform->add_option("--subspaces", tr_args.subspaces, "Subspace files");
    transform->add_option("--regressors", tr_args.regressors, "Regressor files");
    transform->add_option("--controls", tr_args.controls_dir, "Directory written by 'fit'");
    transform->add_option("--in", tr_args.in, "Input spectrogram or dataset")->required();
    transform->add_option("--targets", tr_args.targets, "Targets table: frame_index factor value|REMOVE");
    transform->add_option("--out", tr_args.out, "Output spectrogram")->required();
    transform->add_flag("--sample", tr_args.sample, "Use a posterior sample instead of the mean");

    PitchArgs pitch_args;
    auto* pitch = app.add_subcommand("pitch", "Estimate f0 tracks or run the SNR sweep");
    pitch->add_option("--checkpoint", pitch_args.checkpoint, "VAE checkpoint")->required();
    pitch->add_option("--subspace0", pitch_args.subspace0, "f0 subspace file")->required();
    pitch->add_option("--dict", pitch_args.dict, "f0 dataset used as the reference dictionary")->required();
    pitch->add_option("--in", pitch_args.in, "Spectrogram to track (omit to run the SNR sweep)");
    pitch->add_option("--lambda-list", pitch_args.lambda_list, "Comma-separated PE tolerances, e.g. 0.2,0.1,0.01");
    pitch->add_option("--snr-list", pitch_args.snr_list, "Comma-separated SNRs in dB");
    pitch->add_option("--baseline", pitch_args.baseline, "projected (default) or latent")
        ->check(CLI::IsMember({"projected", "latent"}));
    pitch->add_option("--threshold", pitch_args.threshold, "Voicing threshold on min KL (default: calibrated)");

    EvaluateArgs ev_args;
    auto* evaluate = app.add_subcommand("evaluate", "Transformation and whisper experiments on held-out vowels");
    evaluate->add_option("--checkpoint", ev_args.checkpoint, "VAE checkpoint")->required();
    evaluate->add_option("--controls", ev_args.controls_dir, "Directory written by 'fit'")->required();
    evaluate->add_option("--factors", ev_args.factors, "Factors to sweep")->check(CLI::Range(0, 3));
    evaluate->add_flag("--whisper", ev_args.whisper, "Also run f0 removal");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*synth) return cmd_synth(common, synth_args);
        if (*train_cmd) return cmd_train(common, train_args);
        if (*fit) return cmd_fit(common, fit_args);
        if (*transform) return cmd_transform(common, tr_args);
        if (*pitch) return cmd_pitch(common, pitch_args);
        if (*evaluate) return cmd_evaluate(common, ev_args);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
