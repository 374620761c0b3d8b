#pragma once

// Factor control in the learned subspaces: a continuous piecewise-linear map
// from a factor value (Hz) to subspace coordinates, and the affine latent
// transformation
//
//   z~ = z - U U^T z + U g(y)
//
// applied to centered latent vectors.

#include "sfvae/numerics.hpp"
#include "sfvae/subspace.hpp"
#include "sfvae/vae.hpp"

#include <map>
#include <optional>
#include <random>

namespace sfvae {

/// Continuous piecewise-linear scalar function; segment j is slopes[j] * y + intercepts[j].
struct PiecewiseLinear {
    Vec breakpoints;  ///< interior breakpoints, strictly ascending (size = segments - 1)
    Vec slopes;
    Vec intercepts;

    Index segments() const { return slopes.size(); }

    Index segment_of(double y) const
    {
        Index j = 0;
        while (j < breakpoints.size() && y >= breakpoints[j]) ++j;
        return j;
    }

    double operator()(double y) const
    {
        const Index j = segment_of(y);
        return slopes[j] * y + intercepts[j];
    }

    /// Largest |left - right| mismatch over the breakpoints.
    double continuity_gap() const
    {
        double gap = 0.0;
        for (Index j = 0; j < breakpoints.size(); ++j) {
            const double b = breakpoints[j];
            gap = std::max(gap, std::abs((slopes[j] * b + intercepts[j]) - (slopes[j + 1] * b + intercepts[j + 1])));
        }
        return gap;
    }
};

struct PiecewiseFit {
    PiecewiseLinear function;
    double rmse = 0.0;
};

/// Hinge design matrix [1, y, (y - b_1)_+, ..., (y - b_k)_+].
inline Mat hinge_design(const Vec& y, std::span<const double> breaks)
{
    Mat a(y.size(), 2 + static_cast<Index>(breaks.size()));
    a.col(0).setOnes();
    a.col(1) = y;
    for (std::size_t k = 0; k < breaks.size(); ++k) {
        a.col(2 + static_cast<Index>(k)) = (y.array() - breaks[k]).max(0.0).matrix();
    }
    return a;
}

inline PiecewiseLinear from_hinge(const Vec& coef, std::span<const double> breaks)
{
    const auto segs = static_cast<Index>(breaks.size()) + 1;
    PiecewiseLinear f;
    f.breakpoints = Eigen::Map<const Vec>(breaks.data(), segs - 1);
    f.slopes.resize(segs);
    f.intercepts.resize(segs);
    double slope = coef[1];
    double intercept = coef[0];
    f.slopes[0] = slope;
    f.intercepts[0] = intercept;
    for (Index j = 1; j < segs; ++j) {
        slope += coef[1 + j];
        intercept -= coef[1 + j] * breaks[static_cast<std::size_t>(j - 1)];
        f.slopes[j] = slope;
        f.intercepts[j] = intercept;
    }
    return f;
}

/// Uniform candidate grid of interior breakpoints over (y_min, y_max).
inline std::vector<double> breakpoint_grid(double y_min, double y_max, int divisions)
{
    std::vector<double> grid;
    for (int k = 1; k < divisions; ++k) grid.push_back(y_min + (y_max - y_min) * k / divisions);
    return grid;
}

/**
 * Least-squares continuous piecewise-linear fit with `segments` pieces.
 * Interior breakpoints are chosen by exhaustive search over subsets of the
 * candidate grid; placements leaving a segment without enough points to be
 * identifiable are skipped.
 */
inline PiecewiseFit fit_piecewise_linear(const Vec& y, const Vec& target, int segments, int grid_divisions = 16)
{
    if (segments < 1) throw Error("piecewise fit needs at least one segment");
    if (y.size() != target.size()) throw Error("piecewise fit: inputs and targets differ in length");
    if (y.size() < segments + 1) {
        throw Error("piecewise fit: " + std::to_string(y.size()) + " points for " + std::to_string(segments + 1) +
                    " free parameters");
    }
    const auto grid = breakpoint_grid(y.minCoeff(), y.maxCoeff(), std::max(grid_divisions, segments));
    const auto interior = static_cast<std::size_t>(segments - 1);

    PiecewiseFit best;
    double best_sse = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> pick(interior);
    for (std::size_t i = 0; i < interior; ++i) pick[i] = i;
    std::vector<double> breaks(interior);
    for (;;) {
        for (std::size_t i = 0; i < interior; ++i) breaks[i] = grid[pick[i]];
        try {
            const Mat a = hinge_design(y, breaks);
            const Vec coef = solve_least_squares(a, target);
            const double sse = (a * coef - target).squaredNorm();
            if (sse < best_sse) {
                best_sse = sse;
                best.function = from_hinge(coef, breaks);
            }
        } catch (const RankDeficientError&) {
        }
        // next combination in lexicographic order
        std::size_t i = interior;
        while (i > 0 && pick[i - 1] == grid.size() - interior + (i - 1)) --i;
        if (i == 0) break;
        ++pick[i - 1];
        for (std::size_t j = i; j < interior; ++j) pick[j] = pick[j - 1] + 1;
    }
    if (!std::isfinite(best_sse)) throw Error("piecewise fit: no identifiable breakpoint placement");
    best.rmse = std::sqrt(best_sse / static_cast<double>(y.size()));
    return best;
}

struct RegressionModel {
    int factor = 0;
    int n_segments = 4;
    double y_min = 0.0;
    double y_max = 0.0;
    std::vector<PiecewiseLinear> coords;  ///< one map per subspace coordinate
    Vec rmse;                             ///< training RMSE per coordinate

    Index dim() const { return static_cast<Index>(coords.size()); }
    bool extrapolates(double y) const { return y < y_min || y > y_max; }

    Vec predict(double y) const
    {
        if (!(y > 0.0)) throw Error("regression input must be a positive frequency, got " + std::to_string(y));
        Vec p(dim());
        for (Index m = 0; m < dim(); ++m) p[m] = coords[static_cast<std::size_t>(m)](y);
        return p;
    }
};

inline Vec predict_coords(const RegressionModel& model, double y)
{
    return model.predict(y);
}

/// Subspace coordinates U^T (mu(x_n) - mu(D_i)) of every frame, [M x N].
template <BatchEncoder E>
Mat subspace_coordinates(const SubspaceModel& subspace, const E& encoder, const Mat& spectra)
{
    const Mat means = encoder(spectra).means;
    return subspace.basis.transpose() * (means.colwise() - subspace.mean);
}

inline RegressionModel fit_regression_to_coordinates(int factor, const Vec& labels, const Mat& coords, int n_segments,
                                                     int grid_divisions = 16)
{
    if (labels.size() < n_segments + 1) {
        throw Error("fit_regression: " + std::to_string(labels.size()) + " frames for " +
                    std::to_string(n_segments + 1) + " free parameters per coordinate");
    }
    RegressionModel model;
    model.factor = factor;
    model.n_segments = n_segments;
    model.y_min = labels.minCoeff();
    model.y_max = labels.maxCoeff();
    model.rmse.resize(coords.rows());
    for (Index m = 0; m < coords.rows(); ++m) {
        auto fit = fit_piecewise_linear(labels, coords.row(m).transpose(), n_segments, grid_divisions);
        model.coords.push_back(std::move(fit.function));
        model.rmse[m] = fit.rmse;
    }
    return model;
}

template <BatchEncoder E>
RegressionModel fit_regression(const SubspaceModel& subspace, const E& encoder, const LabeledDataset& ds,
                               int n_segments = 4)
{
    if (!ds.varying_factor || *ds.varying_factor != subspace.factor) {
        throw Error("fit_regression: dataset does not vary the subspace's factor " + std::to_string(subspace.factor));
    }
    const Mat coords = subspace_coordinates(subspace, encoder, ds.spectra);
    return fit_regression_to_coordinates(subspace.factor, ds.labels.row(subspace.factor).transpose(), coords, n_segments);
}

// ---------------------------------------------------------------------------
// Latent transformations
// ---------------------------------------------------------------------------

inline Vec transform_latent(const Vec& z, const SubspaceModel& subspace, const RegressionModel& regressor, double y)
{
    if (regressor.factor != subspace.factor || regressor.dim() != subspace.dim()) {
        throw Error("transform_latent: regressor for factor " + std::to_string(regressor.factor) +
                    " does not match subspace of factor " + std::to_string(subspace.factor));
    }
    const Mat& u = subspace.basis;
    return z - u * (u.transpose() * z) + u * regressor.predict(y);
}

inline Vec remove_factor(const Vec& z, const SubspaceModel& subspace)
{
    const Mat& u = subspace.basis;
    return z - u * (u.transpose() * z);
}

/// Draw from N(U g(y), I - U U^T), in the subspace's centered coordinates.
inline Vec conditional_prior_sample(const SubspaceModel& subspace, const RegressionModel& regressor, double y,
                                    std::mt19937_64& rng)
{
    const Vec z = standard_normal(subspace.latent_dim(), 1, rng);
    return transform_latent(z, subspace, regressor, y);
}

/// Posterior draw of x, centered by the subspace mean, then moved to f_i = y.
inline Vec conditional_posterior_sample(const VaeParams& vae, const Vec& x, const SubspaceModel& subspace,
                                        const RegressionModel& regressor, double y, std::mt19937_64& rng)
{
    const GaussianLatent g = encode(vae, as_span(x));
    const Vec z = sample_latent(g, rng) - subspace.mean;
    return transform_latent(z, subspace, regressor, y);
}

/// Target for one factor of one frame: a frequency, or removal of the factor.
struct Target {
    double hz = 0.0;
    bool remove = false;

    static Target value(double hz) { return {hz, false}; }
    static Target removal() { return {0.0, true}; }
};

using FrameTargets = std::map<int, Target>;

struct FactorControls {
    std::array<std::optional<SubspaceModel>, kFactorCount> subspaces;
    std::array<std::optional<RegressionModel>, kFactorCount> regressors;
};

struct TransformOptions {
    bool sample = false;  ///< posterior sample instead of the posterior mean
    std::uint64_t seed = 0;
};

struct TransformResult {
    Mat spectra;  ///< [D x N]
    std::vector<std::pair<Index, int>> extrapolated;  ///< (frame, factor) targets outside the regressor's range
};

/// Applies every requested factor in order f0..f3, each in its own centered coordinates.
inline Vec apply_targets(Vec z, const FactorControls& controls, const FrameTargets& targets)
{
    for (const auto& [factor, target] : targets) {
        if (factor < 0 || factor >= kFactorCount) throw Error("unknown factor key " + std::to_string(factor));
        const auto& sub = controls.subspaces[static_cast<std::size_t>(factor)];
        if (!sub) throw Error("no fitted subspace for factor " + std::to_string(factor));
        const Vec centered = z - sub->mean;
        if (target.remove) {
            z = remove_factor(centered, *sub) + sub->mean;
        } else {
            const auto& reg = controls.regressors[static_cast<std::size_t>(factor)];
            if (!reg) throw Error("no fitted regressor for factor " + std::to_string(factor));
            z = transform_latent(centered, *sub, *reg, target.hz) + sub->mean;
        }
    }
    return z;
}

/**
 * Encode, move in the requested subspaces, decode. `targets` holds one entry
 * per frame (an empty map leaves the frame's latent untouched); the output
 * spectrum is the decoder scale v(z~).
 */
inline TransformResult transform_spectrogram(const VaeParams& vae, const FactorControls& controls, const Mat& frames,
                                             std::span<const FrameTargets> targets, const TransformOptions& opt = {})
{
    if (static_cast<Index>(targets.size()) != frames.cols()) {
        throw Error("transform_spectrogram: " + std::to_string(targets.size()) + " target rows for " +
                    std::to_string(frames.cols()) + " frames");
    }
    const LatentBatch enc = encode_batch(vae, frames);
    std::mt19937_64 rng(mix_seed(opt.seed, 23));
    TransformResult out;
    Mat z(vae.latent_dim, frames.cols());
    for (Index n = 0; n < frames.cols(); ++n) {
        Vec zn = opt.sample ? sample_latent(enc.at(n), rng) : Vec(enc.means.col(n));
        const auto& t = targets[static_cast<std::size_t>(n)];
        for (const auto& [factor, target] : t) {
            if (factor < 0 || factor >= kFactorCount) throw Error("unknown factor key " + std::to_string(factor));
            const auto& reg = controls.regressors[static_cast<std::size_t>(factor)];
            if (!target.remove && reg && reg->extrapolates(target.hz)) out.extrapolated.emplace_back(n, factor);
        }
        z.col(n) = apply_targets(std::move(zn), controls, t);
    }
    out.spectra = decode_batch(vae, z);
    return out;
}

}  // namespace sfvae
