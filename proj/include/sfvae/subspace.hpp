#pragma once

// Latent subspace of one factor of variation.
//
// For a dataset in which only factor i varies, the aggregated posterior
// (1/N) sum_n q(z|x_n) has covariance
//
//   S = (1/N) sum_n [ mu_n mu_n^T + diag(v_n) ] - mu_bar mu_bar^T,
//
// and the basis minimizing E ||z - U U^T z||^2 over that mixture is the
// leading eigenvectors of S.

#include "sfvae/numerics.hpp"
#include "sfvae/synth.hpp"
#include "sfvae/vae.hpp"

#include <concepts>
#include <numbers>
#include <optional>
#include <random>

namespace sfvae {

/// Anything mapping a batch of spectra (columns) to posterior moments.
template <class E>
concept BatchEncoder = requires(const E& e, const Mat& x) {
    { e(x) } -> std::convertible_to<LatentBatch>;
};

struct VaeEncoder {
    const VaeParams* params;
    explicit VaeEncoder(const VaeParams& p) : params(&p) {}
    LatentBatch operator()(const Mat& x) const { return encode_batch(*params, x); }
};

/// Treats each input column as the posterior mean, with a constant variance.
struct IdentityEncoder {
    double variance = 0.0;
    LatentBatch operator()(const Mat& x) const { return {x, Mat::Constant(x.rows(), x.cols(), variance)}; }
};

/// Magnitude spectrum sqrt(x) as a deterministic "latent" code, for raw-space baselines.
struct MagnitudeEncoder {
    LatentBatch operator()(const Mat& x) const { return {x.array().sqrt().matrix(), Mat::Zero(x.rows(), x.cols())}; }
};

template <BatchEncoder E>
Vec dataset_posterior_mean(const E& encoder, const Mat& spectra)
{
    if (spectra.cols() == 0) throw Error("dataset_posterior_mean: empty dataset");
    return encoder(spectra).means.rowwise().mean();
}

inline Mat scatter_from_moments(const LatentBatch& moments)
{
    const auto n = static_cast<double>(moments.means.cols());
    const Vec mean = moments.means.rowwise().mean();
    const Mat centered = moments.means.colwise() - mean;
    Mat s = centered * centered.transpose() / n;
    s.diagonal() += moments.variances.rowwise().mean();
    return 0.5 * (s + s.transpose());
}

template <BatchEncoder E>
Mat scatter_matrix(const E& encoder, const Mat& spectra)
{
    if (spectra.cols() == 0) throw Error("scatter_matrix: empty dataset");
    return scatter_from_moments(encoder(spectra));
}

struct SubspaceModel {
    int factor = 0;
    Mat basis;        ///< U, [L x M], orthonormal columns
    Vec eigenvalues;  ///< full spectrum of S, descending
    Vec mean;         ///< mu(D_i)
    double variance_retained = 0.0;

    Index latent_dim() const { return basis.rows(); }
    Index dim() const { return basis.cols(); }
    Mat projector() const { return basis * basis.transpose(); }
    Mat complement() const { return Mat::Identity(latent_dim(), latent_dim()) - projector(); }

    /// Cumulative fraction of the eigenvalue sum captured by the first k components, k = 1..L.
    Vec cumulative_variance() const
    {
        Vec c(eigenvalues.size());
        const double total = eigenvalues.sum();
        double acc = 0.0;
        for (Index k = 0; k < c.size(); ++k) {
            acc += eigenvalues[k];
            c[k] = total > 0.0 ? acc / total : 0.0;
        }
        return c;
    }
};

struct SubspaceOptions {
    double variance_threshold = 0.8;
    std::optional<Index> dim_override;
};

/// Leading-eigenvector basis of a scatter matrix; M is capped at L - 1.
inline SubspaceModel fit_subspace_from_scatter(const Mat& scatter, Vec mean, int factor, const SubspaceOptions& opt = {})
{
    if (!(opt.variance_threshold > 0.0 && opt.variance_threshold <= 1.0)) {
        throw Error("variance threshold must be in (0, 1], got " + std::to_string(opt.variance_threshold));
    }
    const Index l = scatter.rows();
    if (l < 2) throw Error("fit_subspace: latent dimension must be at least 2");
    const EigenResult eig = sym_eig(scatter);
    const double total = eig.eigenvalues.sum();
    if (!(total > 0.0)) throw Error("fit_subspace: eigenvalue spectrum is zero, no variance to retain");

    Index m = 0;
    if (opt.dim_override) {
        m = *opt.dim_override;
        if (m < 1 || m > l - 1) throw Error("subspace dimension override must be in [1, L-1]");
    } else {
        double acc = 0.0;
        while (m < l - 1) {
            acc += eig.eigenvalues[m];
            ++m;
            if (acc / total >= opt.variance_threshold * (1.0 - 1e-12)) break;
        }
    }
    SubspaceModel model;
    model.factor = factor;
    model.basis = eig.eigenvectors.leftCols(m);
    model.eigenvalues = eig.eigenvalues;
    model.mean = std::move(mean);
    model.variance_retained = eig.eigenvalues.head(m).sum() / total;
    return model;
}

template <BatchEncoder E>
SubspaceModel fit_subspace(const E& encoder, const LabeledDataset& ds, const SubspaceOptions& opt = {})
{
    if (ds.size() == 0) throw Error("fit_subspace: empty dataset");
    if (!ds.varying_factor) throw Error("fit_subspace: dataset does not vary a single factor");
    const LatentBatch moments = encoder(ds.spectra);
    return fit_subspace_from_scatter(scatter_from_moments(moments), moments.means.rowwise().mean(), *ds.varying_factor,
                                     opt);
}

/**
 * Draws z from the aggregated posterior (uniform frame, then a posterior
 * sample), and returns the top-M eigenvectors of the sample covariance.
 * An independent route to the basis computed by fit_subspace.
 */
template <BatchEncoder E>
Mat sampling_pca_oracle(const E& encoder, const Mat& spectra, Index m, Index n_samples, std::mt19937_64& rng)
{
    const LatentBatch moments = encoder(spectra);
    const Index l = moments.means.rows();
    const Index n = moments.means.cols();
    std::uniform_int_distribution<Index> pick(0, n - 1);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const Mat stddev = moments.variances.array().sqrt().matrix();
    Mat samples(l, n_samples);
    for (Index s = 0; s < n_samples; ++s) {
        const Index j = pick(rng);
        for (Index i = 0; i < l; ++i) samples(i, s) = moments.means(i, j) + stddev(i, j) * gauss(rng);
    }
    const Vec mean = samples.rowwise().mean();
    samples.colwise() -= mean;
    const Mat cov = samples * samples.transpose() / static_cast<double>(n_samples);
    return sym_eig(0.5 * (cov + cov.transpose())).eigenvectors.leftCols(m);
}

inline double orthonormality_deviation(const Mat& u)
{
    return (u.transpose() * u - Mat::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff();
}

/// Principal angles (radians, ascending) between the column spans of two orthonormal bases.
inline Vec principal_angles(const Mat& u, const Mat& v, double tolerance = 1e-8)
{
    if (u.rows() != v.rows()) throw Error("principal_angles: bases live in different dimensions");
    for (const Mat* b : {&u, &v}) {
        const double dev = orthonormality_deviation(*b);
        if (dev > tolerance) throw Error("principal_angles: basis is not orthonormal (deviation " + std::to_string(dev) + ")");
    }
    Eigen::JacobiSVD<Mat> svd(u.transpose() * v);
    const Vec s = svd.singularValues();
    Vec angles(s.size());
    for (Index k = 0; k < s.size(); ++k) angles[k] = std::acos(std::clamp(s[k], 0.0, 1.0));
    std::sort(angles.data(), angles.data() + angles.size());
    return angles;
}

inline double radians_to_degrees(double r)
{
    return r * 180.0 / std::numbers::pi;
}

// ---------------------------------------------------------------------------
// Correlation between subspace bases
// ---------------------------------------------------------------------------

struct CorrelationReport {
    std::vector<int> factors;        ///< factor of each block
    std::vector<Index> block_start;  ///< first column of each block; one extra entry = total
    Mat matrix;                      ///< dot products between all basis columns
    double max_off_block = 0.0;

    /// Largest |entry| between the blocks of factors a and b.
    double max_between(int a, int b) const
    {
        double best = 0.0;
        for (std::size_t i = 0; i < factors.size(); ++i) {
            for (std::size_t j = 0; j < factors.size(); ++j) {
                if (factors[i] != a || factors[j] != b || i == j) continue;
                const Index r0 = block_start[i], r1 = block_start[i + 1];
                const Index c0 = block_start[j], c1 = block_start[j + 1];
                best = std::max(best, matrix.block(r0, c0, r1 - r0, c1 - c0).cwiseAbs().maxCoeff());
            }
        }
        return best;
    }
};

inline CorrelationReport cross_correlation_report(std::span<const SubspaceModel> models)
{
    if (models.empty()) throw Error("cross_correlation_report: no models");
    const Index l = models.front().latent_dim();
    Index total = 0;
    CorrelationReport r;
    for (const auto& m : models) {
        if (m.latent_dim() != l) throw Error("cross_correlation_report: models have different latent dimensions");
        r.factors.push_back(m.factor);
        r.block_start.push_back(total);
        total += m.dim();
    }
    r.block_start.push_back(total);
    Mat all(l, total);
    for (std::size_t i = 0; i < models.size(); ++i) all.middleCols(r.block_start[i], models[i].dim()) = models[i].basis;
    r.matrix = all.transpose() * all;
    for (std::size_t i = 0; i < models.size(); ++i) {
        for (std::size_t j = 0; j < models.size(); ++j) {
            if (i == j) continue;
            const Index r0 = r.block_start[i], c0 = r.block_start[j];
            const double m =
                r.matrix.block(r0, c0, models[i].dim(), models[j].dim()).cwiseAbs().maxCoeff();
            r.max_off_block = std::max(r.max_off_block, m);
        }
    }
    return r;
}

struct RawBaseline {
    std::vector<SubspaceModel> models;
    CorrelationReport report;
};

/// Subspaces learned directly on magnitude spectra, one per factor dataset.
inline RawBaseline raw_representation_baseline(std::span<const LabeledDataset> datasets, double variance_threshold = 0.8)
{
    if (datasets.empty()) throw Error("raw_representation_baseline: no datasets");
    const Index d = datasets.front().dim();
    RawBaseline out;
    for (const auto& ds : datasets) {
        if (ds.dim() != d) throw Error("raw_representation_baseline: datasets have different dimensions");
        out.models.push_back(fit_subspace(MagnitudeEncoder{}, ds, {variance_threshold, std::nullopt}));
    }
    out.report = cross_correlation_report(out.models);
    return out;
}

}  // namespace sfvae
