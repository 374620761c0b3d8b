#pragma once

// Pipeline stages shared by the command-line tool and the acceptance suite.

#include "sfvae/config.hpp"
#include "sfvae/harness.hpp"
#include "sfvae/io.hpp"

namespace sfvae {

/// Default trajectory for a factor, rendered with the configured synthesis settings.
inline FactorDatasetSpec factor_spec(const PipelineConfig& cfg, int factor)
{
    auto spec = default_factor_spec(factor);
    SynthConfig base = cfg.synth;
    base.f0 = spec.base.f0;
    base.formants = spec.base.formants;
    spec.base = base;
    return spec;
}

inline std::array<LabeledDataset, 4> make_factor_datasets(const PipelineConfig& cfg)
{
    std::array<LabeledDataset, 4> out;
    for (int i = 0; i < kFactorCount; ++i) out[static_cast<std::size_t>(i)] = make_factor_dataset(factor_spec(cfg, i), cfg.dataset_seed);
    return out;
}

inline LabeledDataset make_corpus(const PipelineConfig& cfg)
{
    return make_training_corpus(cfg.corpus_frames, default_factor_ranges(), cfg.corpus_seed, cfg.synth, cfg.corpus_noise);
}

inline VaeParams initial_model(const PipelineConfig& cfg, const Mat& spectra)
{
    auto p = VaeParams::init(spectra.rows(), cfg.latent_dim, cfg.init_seed);
    adapt_to_corpus(p, spectra);
    return p;
}

struct FittedControls {
    FactorControls controls;
    std::vector<SubspaceModel> subspaces;
    CorrelationReport correlation;
};

/// Subspace and regressor for every dataset; datasets must be given in factor order.
inline FittedControls fit_controls(const VaeParams& vae, std::span<const LabeledDataset> datasets,
                                   const PipelineConfig& cfg)
{
    FittedControls out;
    const VaeEncoder enc(vae);
    for (std::size_t i = 0; i < datasets.size(); ++i) {
        const auto& ds = datasets[i];
        if (!ds.varying_factor) throw Error("dataset " + std::to_string(i) + " does not vary a single factor");
        const int f = *ds.varying_factor;
        if (out.controls.subspaces[static_cast<std::size_t>(f)]) {
            throw Error("two datasets vary factor " + std::string(factor_name(f)));
        }
        auto sub = fit_subspace(enc, ds, {cfg.variance_threshold, std::nullopt});
        const Mat coords = subspace_coordinates(sub, enc, ds.spectra);
        auto reg = fit_regression_to_coordinates(f, ds.labels.row(f).transpose(), coords, cfg.regression_segments,
                                                 cfg.regression_grid_divisions);
        out.controls.regressors[static_cast<std::size_t>(f)] = std::move(reg);
        out.controls.subspaces[static_cast<std::size_t>(f)] = sub;
        out.subspaces.push_back(std::move(sub));
    }
    out.correlation = cross_correlation_report(out.subspaces);
    return out;
}

/// Held-out voiced test vowels for f0 estimation.
inline std::vector<SynthConfig> pitch_test_set(const PipelineConfig& cfg)
{
    HeldOutOptions opt = cfg.held_out;
    opt.count = cfg.pitch.test_frames;
    opt.seed = mix_seed(cfg.held_out.seed, 41);
    return held_out_vowels(opt, cfg.synth);
}

struct PitchSetup {
    ReferenceDictionary dictionary;
    LatentDictionary latent_dictionary;
    double voiced_threshold = 0.0;
    double latent_voiced_threshold = 0.0;
};

/// Dictionaries from D_0 and voicing thresholds calibrated on clean test frames.
inline PitchSetup prepare_pitch(const VaeParams& vae, const SubspaceModel& subspace_f0, const LabeledDataset& d0,
                                const PipelineConfig& cfg)
{
    PitchSetup s;
    s.dictionary = build_reference(vae, subspace_f0, d0);
    s.latent_dictionary = build_latent_reference(vae, d0);
    const auto tests = pitch_test_set(cfg);
    const Mat clean = render_frames(tests, cfg.held_out.seed);
    s.voiced_threshold =
        calibrate_voiced_threshold(estimate_f0_frames(clean, vae, subspace_f0, s.dictionary), cfg.pitch.voiced_percentile);
    s.latent_voiced_threshold = calibrate_voiced_threshold(estimate_f0_latent_frames(clean, vae, s.latent_dictionary),
                                                           cfg.pitch.voiced_percentile);
    return s;
}

inline std::vector<double> f0_values(std::span<const F0Estimate> est)
{
    std::vector<double> out;
    out.reserve(est.size());
    for (const auto& e : est) out.push_back(e.f0_hz);
    return out;
}

inline std::vector<std::uint64_t> sweep_seeds(const PipelineConfig& cfg)
{
    std::vector<std::uint64_t> seeds;
    for (std::size_t k = 0; k < cfg.pitch.seeds; ++k) seeds.push_back(mix_seed(cfg.held_out.seed, 1000 + k));
    return seeds;
}

}  // namespace sfvae
