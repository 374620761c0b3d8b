#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sfvae {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotSymmetricError : public Error {
public:
    explicit NotSymmetricError(double max_asymmetry)
        : Error("matrix is not symmetric (max |A - A^T| = " + std::to_string(max_asymmetry) + ")"),
          max_asymmetry(max_asymmetry) {}
    double max_asymmetry;
};

class NonConvergenceError : public Error {
public:
    NonConvergenceError(const std::string& what, int iterations) : Error(what), iterations(iterations) {}
    int iterations;
};

class RankDeficientError : public Error {
public:
    RankDeficientError(Index rank, Index columns)
        : Error("least-squares design matrix is rank deficient (estimated rank " + std::to_string(rank) +
                " of " + std::to_string(columns) + ")"),
          rank(rank) {}
    Index rank;
};

class NonFiniteError : public Error {
public:
    NonFiniteError(const std::string& what, Index index) : Error(what), index(index) {}
    Index index;
};

inline Vec to_vec(std::span<const double> values)
{
    return Eigen::Map<const Vec>(values.data(), static_cast<Index>(values.size()));
}

inline std::span<const double> as_span(const Vec& v)
{
    return {v.data(), static_cast<std::size_t>(v.size())};
}

// ---------------------------------------------------------------------------
// Dense layers and reverse-mode gradients of a small MLP
// ---------------------------------------------------------------------------

enum class Activation { tanh, identity };

/**
 * One affine layer followed by an element-wise activation.
 *
 * Weights are stored [out x in]; inputs and outputs are batched column-wise.
 */
struct DenseLayer {
    Mat weights;
    Vec bias;
    Activation activation = Activation::tanh;

    DenseLayer() = default;
    DenseLayer(Index in, Index out, Activation act) : weights(Mat::Zero(out, in)), bias(Vec::Zero(out)), activation(act) {}

    Index in() const { return weights.cols(); }
    Index out() const { return weights.rows(); }
    Index parameter_count() const { return weights.size() + bias.size(); }

    Mat forward(const Mat& input) const
    {
        Mat pre = weights * input;
        pre.colwise() += bias;
        if (activation == Activation::tanh) {
            return pre.array().tanh().matrix();
        }
        return pre;
    }
};

/// Layer inputs and post-activation outputs kept from a forward pass.
struct MlpCache {
    std::vector<Mat> inputs;
    std::vector<Mat> outputs;

    const Mat& output() const { return outputs.back(); }
};

inline MlpCache mlp_forward(std::span<const DenseLayer> layers, const Mat& input)
{
    MlpCache cache;
    cache.inputs.reserve(layers.size());
    cache.outputs.reserve(layers.size());
    const Mat* current = &input;
    for (const auto& layer : layers) {
        if (layer.in() != current->rows()) {
            throw Error("layer input size " + std::to_string(layer.in()) + " does not match activation rows " +
                        std::to_string(current->rows()));
        }
        cache.inputs.push_back(*current);
        cache.outputs.push_back(layer.forward(*current));
        current = &cache.outputs.back();
    }
    return cache;
}

inline Index parameter_count(std::span<const DenseLayer> layers)
{
    Index n = 0;
    for (const auto& l : layers) n += l.parameter_count();
    return n;
}

/// Concatenates weights (column-major) then bias for each layer in order.
inline void flatten_into(std::span<const DenseLayer> layers, Vec& out, Index offset)
{
    for (const auto& l : layers) {
        out.segment(offset, l.weights.size()) = Eigen::Map<const Vec>(l.weights.data(), l.weights.size());
        offset += l.weights.size();
        out.segment(offset, l.bias.size()) = l.bias;
        offset += l.bias.size();
    }
}

inline Index assign_from(std::span<DenseLayer> layers, const Vec& flat, Index offset)
{
    for (auto& l : layers) {
        Eigen::Map<Vec>(l.weights.data(), l.weights.size()) = flat.segment(offset, l.weights.size());
        offset += l.weights.size();
        l.bias = flat.segment(offset, l.bias.size());
        offset += l.bias.size();
    }
    return offset;
}

struct MlpGradients {
    Vec parameters;     ///< same layout as flatten_into
    Mat input_adjoint;  ///< d loss / d input, one column per batch item
};

/**
 * Reverse-mode pass through the layers.
 *
 * `output_adjoint` is d loss / d (final post-activation output), batched
 * column-wise like the cached activations. The loss is assumed to be a sum
 * over batch columns; scale the adjoint yourself for a mean.
 */
inline MlpGradients mlp_gradients(std::span<const DenseLayer> layers, const Mat& output_adjoint, const MlpCache& cache)
{
    if (cache.inputs.size() != layers.size() || cache.outputs.size() != layers.size()) {
        throw Error("cache holds " + std::to_string(cache.inputs.size()) + " layers, network has " +
                    std::to_string(layers.size()));
    }
    for (std::size_t k = 0; k < layers.size(); ++k) {
        if (cache.inputs[k].rows() != layers[k].in() || cache.outputs[k].rows() != layers[k].out() ||
            cache.inputs[k].cols() != output_adjoint.cols()) {
            throw Error("cached activations of layer " + std::to_string(k) + " do not match its shape");
        }
    }
    if (output_adjoint.rows() != layers.back().out()) {
        throw Error("output adjoint has " + std::to_string(output_adjoint.rows()) + " rows, expected " +
                    std::to_string(layers.back().out()));
    }

    MlpGradients result;
    result.parameters.resize(parameter_count(layers));
    std::vector<Index> offsets(layers.size());
    Index offset = 0;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        offsets[k] = offset;
        offset += layers[k].parameter_count();
    }

    Mat adjoint = output_adjoint;
    for (std::size_t k = layers.size(); k-- > 0;) {
        const auto& layer = layers[k];
        if (layer.activation == Activation::tanh) {
            adjoint.array() *= 1.0 - cache.outputs[k].array().square();
        }
        Mat dw = adjoint * cache.inputs[k].transpose();
        result.parameters.segment(offsets[k], dw.size()) = Eigen::Map<const Vec>(dw.data(), dw.size());
        result.parameters.segment(offsets[k] + dw.size(), layer.bias.size()) = adjoint.rowwise().sum();
        adjoint = layer.weights.transpose() * adjoint;
    }
    result.input_adjoint = std::move(adjoint);
    return result;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
    Vec m;
    Vec v;
    std::int64_t t = 0;
    double step_size = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_size(Index n, double step_size = 1e-3)
    {
        AdamState s;
        s.m = Vec::Zero(n);
        s.v = Vec::Zero(n);
        s.step_size = step_size;
        return s;
    }
};

/// Bias-corrected Adam update minimizing the objective whose gradient is `grads`.
inline void adam_step(Vec& params, const Vec& grads, AdamState& state)
{
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw Error("adam_step: parameter, gradient and state lengths disagree");
    }
    for (Index i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw NonFiniteError("adam_step: non-finite gradient at index " + std::to_string(i), i);
        }
    }
    state.t += 1;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseAbs2();
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    params.array() -= state.step_size * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.epsilon);
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition (cyclic Jacobi)
// ---------------------------------------------------------------------------

struct EigenResult {
    Vec eigenvalues;   ///< descending
    Mat eigenvectors;  ///< column k pairs with eigenvalues[k]
};

inline double max_asymmetry(const Mat& a)
{
    return (a - a.transpose()).cwiseAbs().maxCoeff();
}

/**
 * Eigendecomposition of a real symmetric matrix by cyclic Jacobi rotations.
 *
 * Sweeps stop once the off-diagonal Frobenius norm falls below 1e-12 times
 * the Frobenius norm of the input. Each eigenvector is signed so that its
 * largest-magnitude component is positive.
 */
inline EigenResult sym_eig(const Mat& s, int max_sweeps = 100)
{
    if (s.rows() != s.cols()) throw Error("sym_eig: matrix is not square");
    const Index n = s.rows();
    if (n == 0) return {Vec(), Mat()};
    const double scale = s.cwiseAbs().maxCoeff();
    const double asym = max_asymmetry(s);
    if (asym > 1e-10 * scale) throw NotSymmetricError(asym);

    Mat a = 0.5 * (s + s.transpose());
    Mat v = Mat::Identity(n, n);
    const double target = 1e-12 * a.norm();

    auto off_norm = [&] {
        double acc = 0.0;
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i < n; ++i)
                if (i != j) acc += a(i, j) * a(i, j);
        return std::sqrt(acc);
    };

    int sweep = 0;
    while (off_norm() > target) {
        if (sweep == max_sweeps) {
            throw NonConvergenceError("sym_eig: no convergence after " + std::to_string(sweep) + " sweeps", sweep);
        }
        for (Index p = 0; p < n - 1; ++p) {
            for (Index q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                Eigen::JacobiRotation<double> rot;
                rot.makeJacobi(a, p, q);
                a.applyOnTheLeft(p, q, rot.adjoint());
                a.applyOnTheRight(p, q, rot);
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                v.applyOnTheRight(p, q, rot);
            }
        }
        ++sweep;
    }

    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return a(x, x) > a(y, y); });

    EigenResult out;
    out.eigenvalues.resize(n);
    out.eigenvectors.resize(n, n);
    for (Index k = 0; k < n; ++k) {
        const Index src = order[static_cast<std::size_t>(k)];
        out.eigenvalues[k] = a(src, src);
        Vec col = v.col(src);
        Index arg = 0;
        col.cwiseAbs().maxCoeff(&arg);
        if (col[arg] < 0) col = -col;
        out.eigenvectors.col(k) = col;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gaussian KL divergence
// ---------------------------------------------------------------------------

/// A Gaussian with its covariance factorized once, for repeated KL queries.
struct PreparedGaussian {
    Vec mean;
    Mat covariance;
    Eigen::LLT<Mat> cholesky;
    double log_det = 0.0;

    PreparedGaussian() = default;
    PreparedGaussian(Vec mu, Mat cov, const std::string& name = "cov1") : mean(std::move(mu)), covariance(std::move(cov))
    {
        if (covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
            throw Error("dimension mismatch between mean and covariance of " + name);
        }
        cholesky.compute(covariance);
        if (cholesky.info() != Eigen::Success) throw Error(name + " is singular or not positive definite");
        const Vec diag = Mat(cholesky.matrixL()).diagonal();
        if ((diag.array() <= 0.0).any()) throw Error(name + " is singular or not positive definite");
        log_det = 2.0 * diag.array().log().sum();
    }
};

inline double log_det_psd(const Mat& cov)
{
    Eigen::LDLT<Mat> ldlt(cov);
    const Vec d = ldlt.vectorD();
    if ((d.array() <= 0.0).any()) return -std::numeric_limits<double>::infinity();
    return d.array().log().sum();
}

/// KL( N(mu0, cov0) || target ), with cov0's log-determinant supplied by the caller.
inline double gaussian_kl(const Vec& mu0, const Mat& cov0, double log_det0, const PreparedGaussian& target)
{
    const Index m = target.mean.size();
    if (mu0.size() != m || cov0.rows() != m || cov0.cols() != m) throw Error("gaussian_kl: dimension mismatch");
    if (mu0 == target.mean && cov0 == target.covariance) return 0.0;
    if (!std::isfinite(log_det0)) return std::numeric_limits<double>::infinity();
    const Vec diff = target.mean - mu0;
    const double trace = target.cholesky.solve(cov0).trace();
    const double mahal = diff.dot(target.cholesky.solve(diff));
    const double kl = 0.5 * (trace + mahal - static_cast<double>(m) + target.log_det - log_det0);
    return std::max(kl, 0.0);
}

inline double gaussian_kl(const Vec& mu0, const Mat& cov0, const Vec& mu1, const Mat& cov1)
{
    if (mu0.size() != mu1.size() || cov0.rows() != mu0.size() || cov0.cols() != mu0.size()) {
        throw Error("gaussian_kl: dimension mismatch");
    }
    const PreparedGaussian target(mu1, cov1, "cov1");
    return gaussian_kl(mu0, cov0, log_det_psd(cov0), target);
}

/// KL between Gaussians with diagonal covariances given as variance vectors.
inline double gaussian_kl_diag(const Vec& mu0, const Vec& var0, const Vec& mu1, const Vec& var1)
{
    if (mu0.size() != mu1.size() || var0.size() != mu0.size() || var1.size() != mu0.size()) {
        throw Error("gaussian_kl_diag: dimension mismatch");
    }
    if (mu0 == mu1 && var0 == var1) return 0.0;
    const auto ratio = var0.array() / var1.array();
    const double kl =
        0.5 * (ratio.sum() + ((mu1 - mu0).array().square() / var1.array()).sum() - static_cast<double>(mu0.size()) -
               ratio.log().sum());
    return std::max(kl, 0.0);
}

// ---------------------------------------------------------------------------
// Least squares and median filter
// ---------------------------------------------------------------------------

inline Vec solve_least_squares(const Mat& a, const Vec& b)
{
    if (a.rows() != b.size()) throw Error("solve_least_squares: row count mismatch");
    if (a.rows() < a.cols()) throw Error("solve_least_squares: fewer rows than unknowns");
    if (!a.allFinite() || !b.allFinite()) throw Error("solve_least_squares: non-finite input");
    Eigen::ColPivHouseholderQR<Mat> qr(a);
    qr.setThreshold(1e-12);
    if (qr.rank() < a.cols()) throw RankDeficientError(qr.rank(), a.cols());
    return qr.solve(b);
}

/// Running median; the window shrinks symmetrically near the edges.
inline std::vector<double> median_filter(std::span<const double> seq, int window)
{
    if (window < 1 || window % 2 == 0) throw Error("median_filter: window must be a positive odd integer");
    const auto n = static_cast<std::ptrdiff_t>(seq.size());
    const std::ptrdiff_t half = window / 2;
    std::vector<double> out(seq.size());
    std::vector<double> buf;
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const std::ptrdiff_t h = std::min({half, i, n - 1 - i});
        buf.assign(seq.begin() + (i - h), seq.begin() + (i + h + 1));
        auto mid = buf.begin() + h;
        std::nth_element(buf.begin(), mid, buf.end());
        out[static_cast<std::size_t>(i)] = *mid;
    }
    return out;
}

/// 64-bit FNV-1a hash, used for config fingerprints.
inline std::uint64_t fnv1a(std::string_view text, std::uint64_t h = 14695981039346656037ull)
{
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Splits a 64-bit seed into independent sub-stream seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream)
{
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace sfvae
