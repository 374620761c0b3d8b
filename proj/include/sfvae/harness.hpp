#pragma once

// Evaluation drivers: held-out vowels, factor sweeps through the latent
// controls, the whisper (f0 removal) check, and plain-text report tables.

#include "sfvae/control.hpp"
#include "sfvae/measure.hpp"
#include "sfvae/pitch.hpp"
#include "sfvae/subspace.hpp"
#include "sfvae/synth.hpp"
#include "sfvae/vae.hpp"

#include <cstdio>
#include <sstream>

namespace sfvae {

// ---------------------------------------------------------------------------
// Protocols
// ---------------------------------------------------------------------------

struct SweepProtocol {
    int factor = 0;
    double min_hz = 0.0;
    double max_hz = 0.0;
    double step_hz = 1.0;

    std::vector<double> values() const
    {
        if (!(step_hz > 0.0) || !(max_hz >= min_hz)) throw Error("sweep protocol: empty range or non-positive step");
        std::vector<double> v;
        const auto n = static_cast<int>(std::floor((max_hz - min_hz) / step_hz + 1e-9));
        for (int k = 0; k <= n; ++k) v.push_back(min_hz + step_hz * k);
        return v;
    }

    /// Half-width of the sweep relative to its center, in percent.
    double relative_variation_percent() const { return 100.0 * (max_hz - min_hz) / (max_hz + min_hz); }
};

inline SweepProtocol default_sweep(int factor)
{
    switch (factor) {
    case 0: return {0, 100.0, 300.0, 1.0};
    case 1: return {1, 300.0, 900.0, 10.0};
    case 2: return {2, 1100.0, 2700.0, 20.0};
    case 3: return {3, 2200.0, 3200.0, 20.0};
    default: throw Error("factor index must be in 0..3, got " + std::to_string(factor));
    }
}

// ---------------------------------------------------------------------------
// Held-out vowels
// ---------------------------------------------------------------------------

struct HeldOutOptions {
    std::size_t count = 12;
    std::uint64_t seed = 0;
    double min_formant_gap_hz = 400.0;  ///< keeps the three formants measurable as separate peaks
};

/// Distance from v to the nearest point of the factor's training grid, in grid steps.
inline double grid_offset_steps(int factor, double v)
{
    const auto spec = default_factor_spec(factor);
    const double step = (spec.range.max - spec.range.min) / (spec.n_points - 1);
    const double t = (v - spec.range.min) / step;
    return std::abs(t - std::round(t));
}

/**
 * Vowels drawn from the evaluation ranges whose factor values all sit at
 * least a quarter step away from the single-factor training grids.
 */
inline std::vector<SynthConfig> held_out_vowels(const HeldOutOptions& opt, const SynthConfig& base = {})
{
    std::mt19937_64 rng(mix_seed(opt.seed, 31));
    const auto ranges = default_factor_ranges();
    std::vector<SynthConfig> out;
    while (out.size() < opt.count) {
        const SynthConfig c = random_config(rng, ranges, base);
        bool ok = c.formants[1] - c.formants[0] >= opt.min_formant_gap_hz &&
                  c.formants[2] - c.formants[1] >= opt.min_formant_gap_hz;
        for (int i = 0; i < kFactorCount && ok; ++i) ok = grid_offset_steps(i, c.factor(i)) >= 0.25;
        if (ok) out.push_back(c);
    }
    return out;
}

inline Mat render_frames(std::span<const SynthConfig> configs, std::uint64_t seed)
{
    if (configs.empty()) throw Error("render_frames: no configurations");
    Mat frames(static_cast<Index>(configs.front().bins()), static_cast<Index>(configs.size()));
    for (std::size_t i = 0; i < configs.size(); ++i) {
        frames.col(static_cast<Index>(i)) = synth_frame(configs[i], mix_seed(seed, 500 + i));
    }
    return frames;
}

// ---------------------------------------------------------------------------
// Measurement of all four factors
// ---------------------------------------------------------------------------

struct FactorMeasurement {
    std::array<double, 4> hz{};
    double harmonicity_db = 0.0;
    bool formants_ok = false;
    std::string failure;
};

inline FactorMeasurement measure_factors(const Vec& power, const SpectrumGeometry& geo = {})
{
    FactorMeasurement m;
    const auto f0 = measure_f0(power, F0Grid{}, geo);
    m.hz[0] = f0.f0_hz;
    m.harmonicity_db = f0.score_db;
    try {
        const auto f = measure_formants_spectral(power, geo);
        m.hz[1] = f[0];
        m.hz[2] = f[1];
        m.hz[3] = f[2];
        m.formants_ok = true;
    } catch (const FormantMeasurementError& e) {
        m.failure = e.what();
    }
    return m;
}

struct DeltaStats {
    double mean = 0.0;
    double stddev = 0.0;
    double median = 0.0;
    std::size_t count = 0;
};

inline DeltaStats summarize(std::vector<double> values)
{
    DeltaStats s;
    s.count = values.size();
    if (values.empty()) return s;
    const auto n = static_cast<double>(values.size());
    for (double v : values) s.mean += v / n;
    for (double v : values) s.stddev += (v - s.mean) * (v - s.mean) / n;
    s.stddev = std::sqrt(s.stddev);
    s.median = quantile(std::move(values), 0.5);
    return s;
}

// ---------------------------------------------------------------------------
// Transformation experiment
// ---------------------------------------------------------------------------

struct TransformReport {
    SweepProtocol protocol;
    std::size_t vowels = 0;
    std::size_t frames = 0;
    std::size_t measurement_failures = 0;
    std::size_t extrapolated = 0;
    std::array<DeltaStats, 4> delta;       ///< relative error per measured factor, percent
    std::array<std::vector<double>, 4> raw;  ///< per-frame relative errors, frame order
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
};

class MeasurementFailureError : public Error {
public:
    MeasurementFailureError(const std::string& what, std::size_t failures, std::size_t frames)
        : Error(what), failures(failures), frames(frames)
    {
    }
    std::size_t failures;
    std::size_t frames;
};

struct ExperimentOptions {
    HeldOutOptions held_out;
    double max_failure_fraction = 0.10;
    std::uint64_t config_hash = 0;
};

/**
 * Sweeps one factor over the protocol range on every held-out vowel and
 * measures all four factors on the transformed spectra. The swept factor is
 * scored against its target, the others against the vowel's own values.
 * Frames whose formants cannot be measured count as failures and are left
 * out of the formant statistics.
 */
inline TransformReport run_transformation_experiment(const VaeParams& vae, const FactorControls& controls,
                                                     const SweepProtocol& protocol, const ExperimentOptions& opt = {})
{
    for (int i = 0; i < kFactorCount; ++i) {
        if (!controls.subspaces[static_cast<std::size_t>(i)] || !controls.regressors[static_cast<std::size_t>(i)]) {
            throw Error("transformation experiment needs fitted controls for all four factors (factor " +
                        std::to_string(i) + " missing)");
        }
    }
    const auto vowels = held_out_vowels(opt.held_out);
    const Mat inputs = render_frames(vowels, opt.held_out.seed);
    const auto targets = protocol.values();

    TransformReport report;
    report.protocol = protocol;
    report.vowels = vowels.size();
    report.seed = opt.held_out.seed;
    report.config_hash = opt.config_hash;

    const SpectrumGeometry geo{vowels.front().sample_rate, vowels.front().frame_len};
    std::map<std::string, std::size_t> census;
    for (std::size_t v = 0; v < vowels.size(); ++v) {
        Mat frames(inputs.rows(), static_cast<Index>(targets.size()));
        std::vector<FrameTargets> rows;
        for (std::size_t t = 0; t < targets.size(); ++t) {
            frames.col(static_cast<Index>(t)) = inputs.col(static_cast<Index>(v));
            rows.push_back({{protocol.factor, Target::value(targets[t])}});
        }
        const auto out = transform_spectrogram(vae, controls, frames, rows);
        report.extrapolated += out.extrapolated.size();
        for (std::size_t t = 0; t < targets.size(); ++t) {
            const auto m = measure_factors(out.spectra.col(static_cast<Index>(t)), geo);
            ++report.frames;
            Vec truth = label_vector(vowels[v]);
            truth[protocol.factor] = targets[t];
            if (!m.formants_ok) {
                ++report.measurement_failures;
                ++census[m.failure.substr(0, m.failure.find(':'))];
            }
            for (int j = 0; j < kFactorCount; ++j) {
                if (j > 0 && !m.formants_ok) continue;
                report.raw[static_cast<std::size_t>(j)].push_back(relative_error_percent(m.hz[static_cast<std::size_t>(j)], truth[j]));
            }
        }
    }
    if (static_cast<double>(report.measurement_failures) > opt.max_failure_fraction * static_cast<double>(report.frames)) {
        std::string msg = "formant measurement failed on " + std::to_string(report.measurement_failures) + " of " +
                          std::to_string(report.frames) + " frames:";
        for (const auto& [reason, n] : census) msg += " [" + reason + "] x" + std::to_string(n);
        throw MeasurementFailureError(msg, report.measurement_failures, report.frames);
    }
    for (std::size_t j = 0; j < 4; ++j) report.delta[j] = summarize(report.raw[j]);
    return report;
}

// ---------------------------------------------------------------------------
// Whisper: remove the f0 component
// ---------------------------------------------------------------------------

struct WhisperReport {
    std::size_t frames = 0;
    double voiced_threshold_db = kVoicedHarmonicityDb;
    double unvoiced_fraction = 0.0;              ///< output frames below the harmonicity threshold
    std::vector<double> harmonicity_db;          ///< per output frame
    std::array<DeltaStats, 3> formant_shift;     ///< relative to the input vowel's formants, percent
    std::size_t measurement_failures = 0;
    std::uint64_t seed = 0;
};

inline WhisperReport run_whisper_experiment(const VaeParams& vae, const FactorControls& controls,
                                            const HeldOutOptions& held_out, double voiced_threshold_db = kVoicedHarmonicityDb)
{
    if (!controls.subspaces[0]) throw Error("whisper experiment needs the f0 subspace");
    const auto vowels = held_out_vowels(held_out);
    const Mat inputs = render_frames(vowels, held_out.seed);
    const std::vector<FrameTargets> rows(vowels.size(), FrameTargets{{0, Target::removal()}});
    const auto out = transform_spectrogram(vae, controls, inputs, rows);

    WhisperReport r;
    r.frames = vowels.size();
    r.voiced_threshold_db = voiced_threshold_db;
    r.seed = held_out.seed;
    const SpectrumGeometry geo{vowels.front().sample_rate, vowels.front().frame_len};
    std::array<std::vector<double>, 3> shifts;
    std::size_t below = 0;
    for (std::size_t n = 0; n < vowels.size(); ++n) {
        const auto m = measure_factors(out.spectra.col(static_cast<Index>(n)), geo);
        r.harmonicity_db.push_back(m.harmonicity_db);
        if (m.harmonicity_db < voiced_threshold_db) ++below;
        if (!m.formants_ok) {
            ++r.measurement_failures;
            continue;
        }
        for (std::size_t j = 0; j < 3; ++j) shifts[j].push_back(relative_error_percent(m.hz[j + 1], vowels[n].formants[j]));
    }
    r.unvoiced_fraction = static_cast<double>(below) / static_cast<double>(r.frames);
    for (std::size_t j = 0; j < 3; ++j) r.formant_shift[j] = summarize(shifts[j]);
    return r;
}

// ---------------------------------------------------------------------------
// Text tables: tab separated, '#' header lines
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace detail

inline const char* factor_name(int factor)
{
    static constexpr std::array<const char*, 4> names{"f0", "f1", "f2", "f3"};
    if (factor < 0 || factor >= kFactorCount) throw Error("factor index must be in 0..3");
    return names[static_cast<std::size_t>(factor)];
}

inline std::string format_transform_report(const TransformReport& r)
{
    std::ostringstream o;
    o << "# transform sweep factor=" << factor_name(r.protocol.factor) << " range=" << detail::fmt(r.protocol.min_hz)
      << ".." << detail::fmt(r.protocol.max_hz) << " step=" << detail::fmt(r.protocol.step_hz)
      << " relative_variation=" << detail::fmt(r.protocol.relative_variation_percent()) << "%\n";
    o << "# vowels=" << r.vowels << " frames=" << r.frames << " failures=" << r.measurement_failures
      << " seed=" << r.seed << " config_hash=" << r.config_hash << "\n";
    o << "# factor\tmean_pct\tstd_pct\tmedian_pct\tcount\n";
    for (int j = 0; j < kFactorCount; ++j) {
        const auto& d = r.delta[static_cast<std::size_t>(j)];
        o << factor_name(j) << '\t' << detail::fmt(d.mean) << '\t' << detail::fmt(d.stddev) << '\t'
          << detail::fmt(d.median) << '\t' << d.count << '\n';
    }
    return o.str();
}

inline std::string format_correlation(const CorrelationReport& r)
{
    std::vector<std::string> labels;
    for (std::size_t b = 0; b < r.factors.size(); ++b) {
        for (Index k = r.block_start[b]; k < r.block_start[b + 1]; ++k) {
            labels.push_back(std::string(factor_name(r.factors[b])) + "." + std::to_string(k - r.block_start[b]));
        }
    }
    std::ostringstream o;
    o << "# basis correlation max_off_block=" << detail::fmt(r.max_off_block) << "\n#";
    for (const auto& l : labels) o << '\t' << l;
    o << '\n';
    for (Index i = 0; i < r.matrix.rows(); ++i) {
        o << labels[static_cast<std::size_t>(i)];
        for (Index j = 0; j < r.matrix.cols(); ++j) o << '\t' << detail::fmt(r.matrix(i, j));
        o << '\n';
    }
    return o.str();
}

inline std::string format_track(const PitchTrack& t)
{
    std::ostringstream o;
    o << "# frame_index\tf0_hz\tmin_kl\tvoiced\n";
    for (std::size_t i = 0; i < t.size(); ++i) {
        o << i << '\t' << detail::fmt(t.f0_hz[i]) << '\t' << detail::fmt(t.min_kl[i]) << '\t' << (t.voiced[i] ? 1 : 0)
          << '\n';
    }
    return o.str();
}

inline std::string format_sweep(std::vector<SweepRow> rows)
{
    std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
        return a.lambda != b.lambda ? a.lambda < b.lambda : a.snr_db < b.snr_db;
    });
    std::ostringstream o;
    o << "# lambda\tsnr_db\tpe_percent\n";
    for (const auto& r : rows) o << detail::fmt(r.lambda) << '\t' << detail::fmt(r.snr_db) << '\t' << detail::fmt(r.pe_percent) << '\n';
    return o.str();
}

/// Subspace dimension and retained variance per factor.
inline std::string format_subspace_summary(std::span<const SubspaceModel> models)
{
    std::ostringstream o;
    o << "# factor\tM\tvariance_retained_pct\n";
    for (const auto& m : models) {
        o << factor_name(m.factor) << '\t' << m.dim() << '\t' << detail::fmt(100.0 * m.variance_retained) << '\n';
    }
    return o.str();
}

inline std::string format_whisper_report(const WhisperReport& r)
{
    std::ostringstream o;
    o << "# whisper frames=" << r.frames << " threshold_db=" << detail::fmt(r.voiced_threshold_db)
      << " unvoiced_fraction=" << detail::fmt(r.unvoiced_fraction) << " failures=" << r.measurement_failures
      << " seed=" << r.seed << '\n';
    o << "# factor\tmean_shift_pct\tstd_pct\tmedian_pct\n";
    for (int j = 0; j < 3; ++j) {
        const auto& d = r.formant_shift[static_cast<std::size_t>(j)];
        o << factor_name(j + 1) << '\t' << detail::fmt(d.mean) << '\t' << detail::fmt(d.stddev) << '\t'
          << detail::fmt(d.median) << '\n';
    }
    return o.str();
}

}  // namespace sfvae
