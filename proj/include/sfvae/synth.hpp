#pragma once

// Stationary source-filter synthesizer producing labeled power-spectrum frames.
//
// A frame is a sum of harmonics of f0 with random phases, shaped by a source
// spectral slope and by three second-order formant resonances, Hann-windowed
// and transformed to a one-sided power spectrum. Spectra are scaled to unit
// peak power and floored at `noise_floor_rel`.

#include "sfvae/numerics.hpp"

#include <unsupported/Eigen/FFT>

#include <array>
#include <complex>
#include <numbers>
#include <optional>
#include <random>

namespace sfvae {

inline constexpr int kFactorCount = 4;

struct SynthConfig {
    double sample_rate = 16000.0;
    std::size_t frame_len = 1024;
    double f0 = 140.0;
    std::array<double, 3> formants{600.0, 2000.0, 3000.0};
    double formant_amplitude_db = 30.0;
    double source_slope_db_per_octave = -6.0;
    double noise_floor_rel = 1e-6;

    double nyquist() const { return 0.5 * sample_rate; }
    std::size_t bins() const { return frame_len / 2 + 1; }

    double factor(int i) const { return i == 0 ? f0 : formants[static_cast<std::size_t>(i - 1)]; }
    void set_factor(int i, double hz)
    {
        if (i == 0) f0 = hz;
        else formants[static_cast<std::size_t>(i - 1)] = hz;
    }

    /// Empty when valid, otherwise a description of the first violated invariant.
    std::optional<std::string> violation() const
    {
        if (frame_len < 2 || (frame_len & (frame_len - 1)) != 0) return "frame_len must be a power of two";
        if (!(noise_floor_rel > 0.0)) return "noise_floor_rel must be positive";
        if (!(sample_rate > 0.0)) return "sample_rate must be positive";
        const std::array<double, 5> chain{0.0, f0, formants[0], formants[1], formants[2]};
        for (std::size_t i = 1; i < chain.size(); ++i) {
            if (!(chain[i] > chain[i - 1])) return "factors must satisfy 0 < f0 < f1 < f2 < f3";
        }
        if (!(formants[2] < nyquist())) return "f3 must lie below the Nyquist frequency";
        return std::nullopt;
    }

    void validate() const
    {
        if (f0 >= nyquist()) throw Error("f0 " + std::to_string(f0) + " Hz is at or above Nyquist");
        if (auto v = violation()) throw Error("invalid synth config: " + *v);
    }
};

/// Formant bandwidth in Hz: 50 + 0.06 f, clamped to [50, 300].
inline double formant_bandwidth(double f)
{
    if (!(f > 0.0)) throw Error("formant_bandwidth: frequency must be positive");
    return std::clamp(50.0 + 0.06 * f, 50.0, 300.0);
}

/**
 * Power gain |H(f)|^2 of the vocal-tract filter.
 *
 * Each formant is a second-order band-pass response (peak 1 at its center,
 * -3 dB width equal to its bandwidth) raised by formant_amplitude_db over a
 * unit floor; the three resonances are multiplied.
 */
inline double vocal_tract_gain(double f, const SynthConfig& config)
{
    const double peak = std::pow(10.0, config.formant_amplitude_db / 10.0);
    double gain = 1.0;
    for (double fc : config.formants) {
        const double bw = formant_bandwidth(fc);
        const double num = (f * bw) * (f * bw);
        const double den = (fc * fc - f * f) * (fc * fc - f * f) + num;
        gain *= 1.0 + (peak - 1.0) * (den > 0.0 ? num / den : 1.0);
    }
    return gain;
}

/// Amplitude of the k-th harmonic (k >= 1) before the vocal-tract filter.
inline double source_amplitude(int k, const SynthConfig& config)
{
    return std::pow(10.0, config.source_slope_db_per_octave * std::log2(static_cast<double>(k)) / 20.0);
}

inline std::vector<double> hann_window(std::size_t n)
{
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    }
    return w;
}

/// Unwindowed time-domain frame (unit-free; not yet level-normalized).
inline std::vector<double> synth_waveform(const SynthConfig& config, std::uint64_t seed)
{
    config.validate();
    std::mt19937_64 rng(mix_seed(seed, 0));
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::vector<double> frame(config.frame_len, 0.0);
    const double w0 = 2.0 * std::numbers::pi * config.f0 / config.sample_rate;
    for (int k = 1; k * config.f0 < config.nyquist(); ++k) {
        const double amp = source_amplitude(k, config) * std::sqrt(vocal_tract_gain(k * config.f0, config));
        const double phi = phase(rng);
        for (std::size_t n = 0; n < frame.size(); ++n) {
            frame[n] += amp * std::sin(w0 * k * static_cast<double>(n) + phi);
        }
    }
    return frame;
}

/// One-sided power spectrum |X_k|^2 (k = 0..N/2) of the Hann-windowed frame, no floor.
inline Vec power_spectrum(std::span<const double> frame)
{
    const auto window = hann_window(frame.size());
    std::vector<double> windowed(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i) windowed[i] = frame[i] * window[i];
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, windowed);
    Vec out(static_cast<Index>(frame.size() / 2 + 1));
    for (Index k = 0; k < out.size(); ++k) out[k] = std::norm(spec[static_cast<std::size_t>(k)]);
    return out;
}

/// Energy of the windowed frame recovered from a one-sided power spectrum (Parseval).
inline double spectrum_energy(const Vec& power, std::size_t frame_len)
{
    const Index last = power.size() - 1;
    double acc = power[0] + power[last];
    for (Index k = 1; k < last; ++k) acc += 2.0 * power[k];
    return acc / static_cast<double>(frame_len);
}

/// Scales to unit peak power, then floors every bin at `floor_rel`.
inline Vec normalize_and_floor(Vec power, double floor_rel)
{
    const double peak = power.maxCoeff();
    if (peak > 0.0) power /= peak;
    return power.cwiseMax(floor_rel);
}

inline Vec synth_frame(const SynthConfig& config, std::uint64_t seed)
{
    const auto wave = synth_waveform(config, seed);
    return normalize_and_floor(power_spectrum(wave), config.noise_floor_rel);
}

inline double mean_power(std::span<const double> x)
{
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return acc / static_cast<double>(x.size());
}

/// White Gaussian noise scaled to give exactly the requested SNR over the frame.
inline std::vector<double> scaled_noise(std::span<const double> clean, double snr_db, std::uint64_t seed)
{
    std::mt19937_64 rng(mix_seed(seed, 1));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> noise(clean.size());
    for (auto& v : noise) v = gauss(rng);
    const double target = mean_power(clean) / std::pow(10.0, snr_db / 10.0);
    const double gain = std::sqrt(target / mean_power(noise));
    for (auto& v : noise) v *= gain;
    return noise;
}

inline Vec add_noise_at_snr(const SynthConfig& config, double snr_db, std::uint64_t seed)
{
    if (!std::isfinite(snr_db)) throw Error("add_noise_at_snr: SNR must be finite");
    auto wave = synth_waveform(config, seed);
    const auto noise = scaled_noise(wave, snr_db, seed);
    for (std::size_t i = 0; i < wave.size(); ++i) wave[i] += noise[i];
    return normalize_and_floor(power_spectrum(wave), config.noise_floor_rel);
}

/// Spectrum of white noise alone (no voiced component), same pipeline.
inline Vec noise_frame(const SynthConfig& config, std::uint64_t seed)
{
    std::mt19937_64 rng(mix_seed(seed, 2));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> wave(config.frame_len);
    for (auto& v : wave) v = gauss(rng);
    return normalize_and_floor(power_spectrum(wave), config.noise_floor_rel);
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/**
 * Labeled spectra. Frames are stored as columns: `spectra` is [D x N] and
 * `labels` is [4 x N] (f0, f1, f2, f3 in Hz), which is byte-identical to the
 * row-major [N x D] / [N x 4] layout used on disk.
 */
struct LabeledDataset {
    Mat spectra;
    Mat labels;
    std::optional<int> varying_factor;  ///< nullopt when every factor varies
    double sample_rate = 16000.0;
    std::size_t frame_len = 1024;

    Index size() const { return spectra.cols(); }
    Index dim() const { return spectra.rows(); }
    Vec frame(Index n) const { return spectra.col(n); }
};

struct FactorRange {
    double min;
    double max;
};

struct FactorDatasetSpec {
    int factor;
    FactorRange range;
    int n_points;
    SynthConfig base;  ///< supplies the fixed factors
};

/// Trajectory settings for the four single-factor datasets used to learn subspaces.
inline FactorDatasetSpec default_factor_spec(int factor)
{
    FactorDatasetSpec s{factor, {}, 0, SynthConfig{}};
    switch (factor) {
    case 0:
        s.range = {85.0, 310.0};
        s.n_points = 226;
        s.base.formants = {600.0, 2000.0, 3000.0};
        break;
    case 1:
        s.range = {200.0, 1000.0};
        s.n_points = 401;
        s.base.f0 = 140.0;
        s.base.formants = {500.0, 1600.0, 3200.0};
        break;
    case 2:
        s.range = {800.0, 2800.0};
        s.n_points = 401;
        s.base.f0 = 140.0;
        s.base.formants = {500.0, 1200.0, 3200.0};
        break;
    case 3:
        s.range = {2000.0, 3200.0};
        s.n_points = 241;
        s.base.f0 = 140.0;
        s.base.formants = {500.0, 1200.0, 2000.0};
        break;
    default:
        throw Error("factor index must be in 0..3, got " + std::to_string(factor));
    }
    return s;
}

inline Vec label_vector(const SynthConfig& c)
{
    Vec y(4);
    y << c.f0, c.formants[0], c.formants[1], c.formants[2];
    return y;
}

inline LabeledDataset make_factor_dataset(const FactorDatasetSpec& spec, std::uint64_t seed = 0)
{
    if (spec.factor < 0 || spec.factor >= kFactorCount) throw Error("factor index must be in 0..3");
    if (spec.n_points < 2) throw Error("make_factor_dataset: n_points must be at least 2");
    if (!(spec.range.max > spec.range.min)) throw Error("make_factor_dataset: empty range");

    std::vector<SynthConfig> configs(static_cast<std::size_t>(spec.n_points), spec.base);
    for (int n = 0; n < spec.n_points; ++n) {
        const double t = static_cast<double>(n) / static_cast<double>(spec.n_points - 1);
        const double value = n == spec.n_points - 1 ? spec.range.max : spec.range.min + t * (spec.range.max - spec.range.min);
        auto& c = configs[static_cast<std::size_t>(n)];
        c.set_factor(spec.factor, value);
        if (auto v = c.violation()) {
            throw Error("point " + std::to_string(n) + " (" + std::to_string(value) + " Hz) is invalid: " + *v);
        }
    }

    LabeledDataset ds;
    ds.varying_factor = spec.factor;
    ds.sample_rate = spec.base.sample_rate;
    ds.frame_len = spec.base.frame_len;
    ds.spectra.resize(static_cast<Index>(spec.base.bins()), spec.n_points);
    ds.labels.resize(4, spec.n_points);
    for (int n = 0; n < spec.n_points; ++n) {
        const auto& c = configs[static_cast<std::size_t>(n)];
        ds.spectra.col(n) = synth_frame(c, mix_seed(seed, static_cast<std::uint64_t>(n)));
        ds.labels.col(n) = label_vector(c);
    }
    return ds;
}

inline LabeledDataset make_factor_dataset(int factor, std::uint64_t seed = 0)
{
    return make_factor_dataset(default_factor_spec(factor), seed);
}

/// Variation ranges of the four factors for corpus and evaluation material.
inline std::array<FactorRange, 4> default_factor_ranges()
{
    return {FactorRange{100.0, 300.0}, FactorRange{300.0, 900.0}, FactorRange{1100.0, 2700.0},
            FactorRange{2200.0, 3200.0}};
}

/// Draws factor values uniformly from `ranges`, redrawing until the ordering invariant holds.
inline SynthConfig random_config(std::mt19937_64& rng, const std::array<FactorRange, 4>& ranges,
                                 const SynthConfig& base = {})
{
    SynthConfig c = base;
    for (;;) {
        for (int i = 0; i < kFactorCount; ++i) {
            const auto& r = ranges[static_cast<std::size_t>(i)];
            c.set_factor(i, std::uniform_real_distribution<double>(r.min, r.max)(rng));
        }
        if (!c.violation()) return c;
    }
}

/// Additive white noise on a random subset of corpus frames.
struct CorpusNoise {
    double fraction = 0.0;  ///< share of frames that get noise
    double min_snr_db = -10.0;
    double max_snr_db = 40.0;

    void validate() const
    {
        if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error("corpus noise fraction must be in [0, 1]");
        if (!(min_snr_db <= max_snr_db)) throw Error("corpus noise SNR range is empty");
    }
};

inline LabeledDataset make_training_corpus(std::size_t n_frames, const std::array<FactorRange, 4>& ranges,
                                           std::uint64_t seed, const SynthConfig& base = {},
                                           const CorpusNoise& noise = {})
{
    if (n_frames < 1) throw Error("make_training_corpus: n_frames must be at least 1");
    noise.validate();
    std::mt19937_64 rng(mix_seed(seed, 100));
    std::mt19937_64 noise_rng(mix_seed(seed, 101));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    LabeledDataset ds;
    ds.sample_rate = base.sample_rate;
    ds.frame_len = base.frame_len;
    ds.spectra.resize(static_cast<Index>(base.bins()), static_cast<Index>(n_frames));
    ds.labels.resize(4, static_cast<Index>(n_frames));
    for (std::size_t n = 0; n < n_frames; ++n) {
        const auto c = random_config(rng, ranges, base);
        const auto col = static_cast<Index>(n);
        const std::uint64_t frame_seed = mix_seed(seed, 1000 + n);
        const bool noisy = noise.fraction > 0.0 && unit(noise_rng) < noise.fraction;
        const double snr = noise.min_snr_db + (noise.max_snr_db - noise.min_snr_db) * unit(noise_rng);
        ds.spectra.col(col) = noisy ? add_noise_at_snr(c, snr, frame_seed) : synth_frame(c, frame_seed);
        ds.labels.col(col) = label_vector(c);
    }
    return ds;
}

/// Synth config for frame `n` of a dataset, rebuilt from its labels.
inline SynthConfig config_from_labels(const LabeledDataset& ds, Index n, const SynthConfig& base = {})
{
    SynthConfig c = base;
    c.sample_rate = ds.sample_rate;
    c.frame_len = ds.frame_len;
    for (int i = 0; i < kFactorCount; ++i) c.set_factor(i, ds.labels(i, n));
    return c;
}

}  // namespace sfvae
