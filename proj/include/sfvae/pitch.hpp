#pragma once

// f0 estimation by nearest reference in KL divergence.
//
// The posterior of the f0-subspace coordinates p = U^T (z - mu(D_0)) is
// Gaussian, N(U^T (mu(x) - mu(D_0)), U^T diag(v(x)) U). A test frame gets the
// f0 label of the reference frame in D_0 whose coordinate posterior is
// closest in KL( q(p|x_test) || q(p|x_ref) ).

#include "sfvae/numerics.hpp"
#include "sfvae/subspace.hpp"
#include "sfvae/synth.hpp"
#include "sfvae/vae.hpp"

#include <functional>

namespace sfvae {

inline constexpr double kDictionaryJitter = 1e-9;

/// Projected posterior moments of a batch of frames.
struct ProjectedPosterior {
    Vec mean;
    Mat covariance;
    double log_det = 0.0;
};

inline ProjectedPosterior project_posterior(const SubspaceModel& subspace, const Vec& mean, const Vec& variance)
{
    const Mat& u = subspace.basis;
    ProjectedPosterior p;
    p.mean = u.transpose() * (mean - subspace.mean);
    p.covariance = u.transpose() * variance.asDiagonal() * u;
    p.covariance = 0.5 * (p.covariance + p.covariance.transpose());
    p.log_det = log_det_psd(p.covariance);
    return p;
}

struct ReferenceDictionary {
    Vec labels;                            ///< f0 of each entry, ascending
    std::vector<PreparedGaussian> entries; ///< projected posterior of each entry

    Index size() const { return labels.size(); }
};

/// Sorts dataset columns by the f0 label, stable, and checks strict ascent.
inline std::vector<Index> ascending_f0_order(const LabeledDataset& ds)
{
    std::vector<Index> order(static_cast<std::size_t>(ds.size()));
    for (Index i = 0; i < ds.size(); ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return ds.labels(0, a) < ds.labels(0, b); });
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (!(ds.labels(0, order[i]) > ds.labels(0, order[i - 1]))) {
            throw Error("reference dataset has repeated f0 labels");
        }
    }
    return order;
}

inline ReferenceDictionary build_reference(const VaeParams& vae, const SubspaceModel& subspace_f0,
                                           const LabeledDataset& d0)
{
    if (subspace_f0.factor != 0) throw Error("build_reference: subspace is not the f0 subspace");
    if (d0.varying_factor != 0) throw Error("build_reference: dataset does not vary f0");
    if (d0.size() == 0) throw Error("build_reference: empty dataset");
    const auto order = ascending_f0_order(d0);
    const LatentBatch enc = encode_batch(vae, d0.spectra);
    ReferenceDictionary dict;
    dict.labels.resize(d0.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        const Index n = order[k];
        dict.labels[static_cast<Index>(k)] = d0.labels(0, n);
        auto p = project_posterior(subspace_f0, enc.means.col(n), enc.variances.col(n));
        try {
            dict.entries.emplace_back(p.mean, p.covariance, "reference covariance " + std::to_string(k));
        } catch (const Error&) {
            p.covariance.diagonal().array() += kDictionaryJitter;
            dict.entries.emplace_back(p.mean, p.covariance, "reference covariance " + std::to_string(k));
        }
    }
    return dict;
}

struct F0Estimate {
    double f0_hz = 0.0;
    double min_kl = 0.0;
};

/// Argmin over the dictionary; ties go to the lower f0 (the earlier entry).
inline F0Estimate nearest_reference(const ProjectedPosterior& q, const ReferenceDictionary& dict)
{
    if (dict.size() == 0) throw Error("empty reference dictionary");
    F0Estimate best{dict.labels[0], std::numeric_limits<double>::infinity()};
    for (Index k = 0; k < dict.size(); ++k) {
        const double kl = gaussian_kl(q.mean, q.covariance, q.log_det, dict.entries[static_cast<std::size_t>(k)]);
        if (kl < best.min_kl) best = {dict.labels[k], kl};
    }
    return best;
}

inline std::vector<F0Estimate> estimate_f0_frames(const Mat& frames, const VaeParams& vae,
                                                  const SubspaceModel& subspace_f0, const ReferenceDictionary& dict)
{
    const LatentBatch enc = encode_batch(vae, frames);
    std::vector<F0Estimate> out;
    out.reserve(static_cast<std::size_t>(frames.cols()));
    for (Index n = 0; n < frames.cols(); ++n) {
        out.push_back(nearest_reference(project_posterior(subspace_f0, enc.means.col(n), enc.variances.col(n)), dict));
    }
    return out;
}

inline F0Estimate estimate_f0_frame(const Vec& x, const VaeParams& vae, const SubspaceModel& subspace_f0,
                                    const ReferenceDictionary& dict)
{
    return estimate_f0_frames(x, vae, subspace_f0, dict).front();
}

// ---------------------------------------------------------------------------
// Full-latent ablation: same search on q(z|x) itself
// ---------------------------------------------------------------------------

struct LatentDictionary {
    Vec labels;
    Mat means;      ///< [L x K]
    Mat variances;  ///< [L x K]

    Index size() const { return labels.size(); }
};

inline LatentDictionary build_latent_reference(const VaeParams& vae, const LabeledDataset& d0)
{
    if (d0.varying_factor != 0) throw Error("build_latent_reference: dataset does not vary f0");
    const auto order = ascending_f0_order(d0);
    const LatentBatch enc = encode_batch(vae, d0.spectra);
    LatentDictionary dict;
    dict.labels.resize(d0.size());
    dict.means.resize(vae.latent_dim, d0.size());
    dict.variances.resize(vae.latent_dim, d0.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto col = static_cast<Index>(k);
        dict.labels[col] = d0.labels(0, order[k]);
        dict.means.col(col) = enc.means.col(order[k]);
        dict.variances.col(col) = enc.variances.col(order[k]);
    }
    return dict;
}

inline std::vector<F0Estimate> estimate_f0_latent_frames(const Mat& frames, const VaeParams& vae,
                                                         const LatentDictionary& dict)
{
    if (dict.size() == 0) throw Error("empty reference dictionary");
    const LatentBatch enc = encode_batch(vae, frames);
    std::vector<F0Estimate> out;
    for (Index n = 0; n < frames.cols(); ++n) {
        F0Estimate best{dict.labels[0], std::numeric_limits<double>::infinity()};
        for (Index k = 0; k < dict.size(); ++k) {
            const double kl = gaussian_kl_diag(enc.means.col(n), enc.variances.col(n), dict.means.col(k),
                                               dict.variances.col(k));
            if (kl < best.min_kl) best = {dict.labels[k], kl};
        }
        out.push_back(best);
    }
    return out;
}

inline F0Estimate estimate_f0_latent_baseline(const Vec& x, const VaeParams& vae, const LatentDictionary& dict)
{
    return estimate_f0_latent_frames(x, vae, dict).front();
}

// ---------------------------------------------------------------------------
// Tracks
// ---------------------------------------------------------------------------

struct PitchTrack {
    std::vector<double> f0_hz;
    std::vector<double> min_kl;
    std::vector<bool> voiced;

    std::size_t size() const { return f0_hz.size(); }
};

inline constexpr int kTrackMedianWindow = 5;

/// Voicing by min-KL threshold, then a 5-frame median filter inside each contiguous voiced run.
inline PitchTrack track_from_estimates(std::span<const F0Estimate> raw, double voiced_threshold)
{
    PitchTrack t;
    for (const auto& e : raw) {
        t.f0_hz.push_back(e.f0_hz);
        t.min_kl.push_back(e.min_kl);
        t.voiced.push_back(e.min_kl <= voiced_threshold);
    }
    std::size_t i = 0;
    while (i < t.size()) {
        if (!t.voiced[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < t.size() && t.voiced[j]) ++j;
        const auto run = std::span<const double>(t.f0_hz).subspan(i, j - i);
        const auto smoothed = median_filter(run, kTrackMedianWindow);
        std::copy(smoothed.begin(), smoothed.end(), t.f0_hz.begin() + static_cast<std::ptrdiff_t>(i));
        i = j;
    }
    return t;
}

inline PitchTrack estimate_f0_track(const Mat& frames, const VaeParams& vae, const SubspaceModel& subspace_f0,
                                    const ReferenceDictionary& dict, double voiced_threshold)
{
    if (frames.cols() == 0) throw Error("estimate_f0_track: no frames");
    const auto raw = estimate_f0_frames(frames, vae, subspace_f0, dict);
    return track_from_estimates(raw, voiced_threshold);
}

/// Empirical quantile (linear interpolation between order statistics).
inline double quantile(std::vector<double> values, double q)
{
    if (values.empty()) throw Error("quantile of an empty set");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// Voicing threshold: the 95th percentile of min-KL over clean voiced frames.
inline double calibrate_voiced_threshold(std::span<const F0Estimate> clean_voiced, double percentile = 0.95)
{
    std::vector<double> kl;
    for (const auto& e : clean_voiced) kl.push_back(e.min_kl);
    return quantile(std::move(kl), percentile);
}

// ---------------------------------------------------------------------------
// Pitch error
// ---------------------------------------------------------------------------

/**
 * Percentage of jointly voiced frames whose relative f0 error is at least
 * `lambda` (a fraction, e.g. 0.2 for 20 %).
 */
inline double pitch_error(std::span<const double> estimates, std::span<const double> references,
                          const std::vector<bool>& voiced_mask, double lambda)
{
    if (estimates.size() != references.size() || estimates.size() != voiced_mask.size()) {
        throw Error("pitch_error: inputs differ in length");
    }
    if (!(lambda > 0.0)) throw Error("pitch_error: lambda must be positive");
    std::size_t voiced = 0;
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        if (!voiced_mask[i]) continue;
        ++voiced;
        if (std::abs(estimates[i] - references[i]) / references[i] >= lambda) ++wrong;
    }
    if (voiced == 0) throw Error("pitch_error: no jointly voiced frames");
    return 100.0 * static_cast<double>(wrong) / static_cast<double>(voiced);
}

struct SweepRow {
    double lambda = 0.0;
    double snr_db = 0.0;
    double pe_percent = 0.0;
};

using FrameEstimator = std::function<std::vector<double>(const Mat& frames)>;

/**
 * PE for every (lambda, SNR) pair. For each seed, every test configuration is
 * rendered with the same phases and noise realization at each SNR (only the
 * noise gain changes). PE is averaged over seeds; voicing is the ground truth
 * (every test frame is voiced).
 */
inline std::vector<SweepRow> snr_sweep(std::span<const SynthConfig> test_set, std::span<const double> snr_list,
                                       std::span<const double> lambdas, const FrameEstimator& estimator,
                                       std::span<const std::uint64_t> seeds)
{
    if (snr_list.empty()) throw Error("snr_sweep: empty SNR list");
    if (test_set.empty() || seeds.empty()) throw Error("snr_sweep: empty test set or seed list");
    std::vector<double> refs;
    for (const auto& c : test_set) refs.push_back(c.f0);
    const std::vector<bool> voiced(test_set.size(), true);

    std::vector<SweepRow> rows;
    for (double lambda : lambdas) {
        for (double snr : snr_list) rows.push_back({lambda, snr, 0.0});
    }
    for (std::uint64_t seed : seeds) {
        for (std::size_t s = 0; s < snr_list.size(); ++s) {
            Mat frames(static_cast<Index>(test_set.front().bins()), static_cast<Index>(test_set.size()));
            for (std::size_t i = 0; i < test_set.size(); ++i) {
                frames.col(static_cast<Index>(i)) = add_noise_at_snr(test_set[i], snr_list[s], mix_seed(seed, i));
            }
            const auto est = estimator(frames);
            for (std::size_t l = 0; l < lambdas.size(); ++l) {
                rows[l * snr_list.size() + s].pe_percent += pitch_error(est, refs, voiced, lambdas[l]);
            }
        }
    }
    for (auto& r : rows) r.pe_percent /= static_cast<double>(seeds.size());
    std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
        return a.lambda != b.lambda ? a.lambda < b.lambda : a.snr_db < b.snr_db;
    });
    return rows;
}

}  // namespace sfvae
