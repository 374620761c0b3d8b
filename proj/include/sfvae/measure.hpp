#pragma once

// Spectral measurement of f0 and formants, used as an independent judge of
// synthesized and transformed spectra.

#include "sfvae/numerics.hpp"
#include "sfvae/synth.hpp"

#include <unsupported/Eigen/FFT>

#include <array>
#include <complex>
#include <numbers>

namespace sfvae {

struct SpectrumGeometry {
    double sample_rate = 16000.0;
    std::size_t frame_len = 1024;

    double bin_hz() const { return sample_rate / static_cast<double>(frame_len); }
    double nyquist() const { return 0.5 * sample_rate; }
};

struct F0Grid {
    double min_hz = 60.0;
    double max_hz = 400.0;
    double step_hz = 1.0;
};

struct CombOptions {
    int harmonics = 10;               ///< comb teeth per candidate
    double max_harmonic_hz = 4000.0;  ///< teeth above this are dropped
};

/// Log-power at a fractional bin position: parabola through the nearest bin and its neighbours.
inline double log_power_at(const Vec& log_power, double bin)
{
    const Index last = log_power.size() - 1;
    const double clamped = std::clamp(bin, 0.0, static_cast<double>(last));
    const Index c = std::clamp<Index>(static_cast<Index>(std::lround(clamped)), 1, last - 1);
    const double p = clamped - static_cast<double>(c);
    const double lo = log_power[c - 1], mid = log_power[c], hi = log_power[c + 1];
    return mid + 0.5 * p * (hi - lo) + 0.5 * p * p * (hi - 2.0 * mid + lo);
}

/**
 * Harmonic comb contrast for a candidate f0, in dB: the mean log-power at
 * the harmonics k*f0 minus the mean log-power sampled across the middle half
 * of each inter-harmonic interval.
 *
 * At a multiple of the true f0 the sampled intervals contain true harmonics,
 * and at a sub-multiple half the "harmonics" are valleys, so both score lower
 * than the true f0.
 */
inline double comb_score(const Vec& log_power_db, double f0, const SpectrumGeometry& geo, const CombOptions& opt = {})
{
    constexpr int kGapSamples = 9;
    const double top = std::min(opt.max_harmonic_hz, geo.nyquist());
    double peaks = 0.0;
    double gaps = 0.0;
    int count = 0;
    for (int k = 1; k <= opt.harmonics && k * f0 <= top; ++k) {
        peaks += log_power_at(log_power_db, k * f0 / geo.bin_hz());
        double gap = 0.0;
        for (int j = 0; j < kGapSamples; ++j) {
            const double u = 0.25 + 0.5 * j / (kGapSamples - 1);
            gap += log_power_at(log_power_db, (k - 1 + u) * f0 / geo.bin_hz());
        }
        gaps += gap / kGapSamples;
        ++count;
    }
    return count == 0 ? 0.0 : (peaks - gaps) / count;
}

inline Vec to_db(const Vec& power)
{
    return (10.0 * power.array().max(1e-300).log10()).matrix();
}

struct F0Measurement {
    double f0_hz = 0.0;
    double score_db = 0.0;  ///< comb contrast at the chosen candidate (harmonicity)
};

/// Grid search of the comb contrast, refined by a parabola through the best candidate and its neighbours.
inline F0Measurement measure_f0(const Vec& power, const F0Grid& grid, const SpectrumGeometry& geo = {},
                                const CombOptions& opt = {})
{
    if (!(grid.step_hz > 0.0) || !(grid.max_hz >= grid.min_hz) || !(grid.min_hz > 0.0) ||
        !(grid.max_hz < geo.nyquist())) {
        throw Error("measure_f0: empty or invalid candidate grid");
    }
    const Vec db = to_db(power);
    const auto n = static_cast<Index>(std::floor((grid.max_hz - grid.min_hz) / grid.step_hz + 1e-9)) + 1;
    Vec scores(n);
    for (Index i = 0; i < n; ++i) scores[i] = comb_score(db, grid.min_hz + grid.step_hz * i, geo, opt);
    Index best = 0;
    scores.maxCoeff(&best);
    double f0 = grid.min_hz + grid.step_hz * best;
    double score = scores[best];
    if (best > 0 && best + 1 < n) {
        const double a = scores[best - 1], b = scores[best], c = scores[best + 1];
        const double denom = a - 2.0 * b + c;
        if (denom < 0.0) {
            const double shift = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
            f0 += shift * grid.step_hz;
            score = b - 0.25 * (a - c) * shift;
        }
    }
    return {f0, score};
}

inline double measure_f0_spectral(const Vec& power, const F0Grid& grid, const SpectrumGeometry& geo = {})
{
    return measure_f0(power, grid, geo).f0_hz;
}

/// Comb contrast at the measured f0; voiced frames score above kVoicedHarmonicityDb.
inline double harmonicity(const Vec& power, const F0Grid& grid = {}, const SpectrumGeometry& geo = {})
{
    return measure_f0(power, grid, geo).score_db;
}

inline constexpr double kVoicedHarmonicityDb = 12.0;

// ---------------------------------------------------------------------------
// Formants
// ---------------------------------------------------------------------------

class FormantMeasurementError : public Error {
public:
    FormantMeasurementError(const std::string& what, std::vector<double> found) : Error(what), found(std::move(found)) {}
    std::vector<double> found;
};

/// Cepstrally smoothed log-power envelope (natural log), one value per bin.
inline Vec cepstral_envelope(const Vec& power, double lifter_seconds, const SpectrumGeometry& geo)
{
    const auto n = geo.frame_len;
    const auto half = static_cast<Index>(n / 2);
    if (power.size() != half + 1) throw Error("cepstral_envelope: spectrum size does not match frame length");
    std::vector<std::complex<double>> full(n);
    for (std::size_t k = 0; k < n; ++k) {
        const Index src = static_cast<Index>(k) <= half ? static_cast<Index>(k) : static_cast<Index>(n) - static_cast<Index>(k);
        full[k] = std::log(std::max(power[src], 1e-300));
    }
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> cep;
    fft.inv(cep, full);
    const auto cutoff = static_cast<std::size_t>(std::floor(lifter_seconds * geo.sample_rate));
    for (std::size_t q = 0; q < n; ++q) {
        const std::size_t dist = std::min(q, n - q);
        if (dist > cutoff) cep[q] = 0.0;
    }
    std::vector<std::complex<double>> env;
    fft.fwd(env, cep);
    Vec out(half + 1);
    for (Index k = 0; k <= half; ++k) out[k] = env[static_cast<std::size_t>(k)].real();
    return out;
}

struct FormantOptions {
    double lifter_seconds = 0.002;
    double min_hz = 150.0;
    double max_hz = 3600.0;
    double pre_emphasis = 0.97;   ///< first-order high-pass 1 - a z^-1 applied in the power domain
    double peak_hold_hz = 160.0;  ///< half-width of the running max that bridges inter-harmonic valleys
};

/// Pre-emphasized, peak-held power spectrum that the envelope is smoothed from.
inline Vec formant_precondition(const Vec& power, const SpectrumGeometry& geo, const FormantOptions& opt)
{
    const Index n = power.size();
    Vec emph(n);
    for (Index k = 0; k < n; ++k) {
        const double w = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(geo.frame_len);
        emph[k] = power[k] * (1.0 + opt.pre_emphasis * opt.pre_emphasis - 2.0 * opt.pre_emphasis * std::cos(w));
    }
    const auto half = static_cast<Index>(std::round(opt.peak_hold_hz / geo.bin_hz()));
    Vec held(n);
    for (Index k = 0; k < n; ++k) {
        const Index a = std::max<Index>(0, k - half);
        const Index b = std::min<Index>(n - 1, k + half);
        held[k] = std::max(emph.segment(a, b - a + 1).maxCoeff(), 1e-300);
    }
    return held;
}

/**
 * Three strongest envelope peaks in [min_hz, max_hz], ascending, with
 * parabolic refinement. The envelope is the 2 ms cepstral smoothing of the
 * pre-emphasized, peak-held log spectrum.
 */
inline std::array<double, 3> measure_formants_spectral(const Vec& power, const SpectrumGeometry& geo = {},
                                                       const FormantOptions& opt = {})
{
    for (Index i = 0; i < power.size(); ++i) {
        if (!(power[i] > 0.0)) throw Error("measure_formants_spectral: spectrum must be strictly positive");
    }
    const Vec env = cepstral_envelope(formant_precondition(power, geo, opt), opt.lifter_seconds, geo);
    struct Peak {
        double hz;
        double height;
    };
    std::vector<Peak> peaks;
    const auto lo = std::max<Index>(1, static_cast<Index>(std::ceil(opt.min_hz / geo.bin_hz())));
    const auto hi = std::min<Index>(env.size() - 2, static_cast<Index>(std::floor(opt.max_hz / geo.bin_hz())));
    for (Index k = lo; k <= hi; ++k) {
        if (env[k] > env[k - 1] && env[k] >= env[k + 1]) {
            const double a = env[k - 1], b = env[k], c = env[k + 1];
            const double denom = a - 2.0 * b + c;
            const double shift = denom < 0.0 ? std::clamp(0.5 * (a - c) / denom, -0.5, 0.5) : 0.0;
            peaks.push_back({(static_cast<double>(k) + shift) * geo.bin_hz(), b - 0.25 * (a - c) * shift});
        }
    }
    if (peaks.size() < 3) {
        std::vector<double> found;
        std::string list;
        for (const auto& p : peaks) {
            found.push_back(p.hz);
            list += " " + std::to_string(p.hz);
        }
        throw FormantMeasurementError("found " + std::to_string(peaks.size()) + " envelope peaks (need 3):" + list,
                                      std::move(found));
    }
    std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.height > b.height; });
    std::array<double, 3> out{peaks[0].hz, peaks[1].hz, peaks[2].hz};
    std::sort(out.begin(), out.end());
    return out;
}

/// Relative error 100 * |estimate - reference| / reference, in percent.
inline double relative_error_percent(double estimate, double reference)
{
    return 100.0 * std::abs(estimate - reference) / reference;
}

}  // namespace sfvae
