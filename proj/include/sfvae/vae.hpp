#pragma once

// Itakura-Saito VAE over power spectra.
//
//   q(z|x) = N(mu(x), diag v(x))          encoder: D -> 256 -> 64 -> 2L
//   p(x|z) = prod_d Exp(x_d; 1 / v_d(z))   decoder: L -> 64 -> 256 -> D
//
// The encoder sees standardized log-power features; its last layer emits the
// mean and the log-variance. The decoder's last layer emits ln v, so the
// scale is positive by construction.

#include "sfvae/numerics.hpp"
#include "sfvae/synth.hpp"

#include <array>
#include <functional>
#include <random>

namespace sfvae {

struct GaussianLatent {
    Vec mean;
    Vec variance;
};

struct VaeParams {
    Index input_dim = 0;
    Index latent_dim = 0;
    std::array<DenseLayer, 3> encoder;
    std::array<DenseLayer, 3> decoder;
    double input_shift = 0.0;  ///< features are (ln x - shift) / scale
    double input_scale = 1.0;

    Index parameter_count() const { return sfvae::parameter_count(encoder) + sfvae::parameter_count(decoder); }

    Vec flatten() const
    {
        Vec flat(parameter_count());
        flatten_into(encoder, flat, 0);
        flatten_into(decoder, flat, sfvae::parameter_count(encoder));
        return flat;
    }

    void assign(const Vec& flat)
    {
        if (flat.size() != parameter_count()) throw Error("parameter vector has the wrong length");
        const Index off = assign_from(encoder, flat, 0);
        assign_from(decoder, flat, off);
    }

    /// Uniform fan-in initialization, U(-1/sqrt(in), 1/sqrt(in)), for every weight and bias.
    static VaeParams init(Index input_dim, Index latent_dim, std::uint64_t seed, Index hidden1 = 256, Index hidden2 = 64)
    {
        VaeParams p;
        p.input_dim = input_dim;
        p.latent_dim = latent_dim;
        p.encoder = {DenseLayer(input_dim, hidden1, Activation::tanh), DenseLayer(hidden1, hidden2, Activation::tanh),
                     DenseLayer(hidden2, 2 * latent_dim, Activation::identity)};
        p.decoder = {DenseLayer(latent_dim, hidden2, Activation::tanh), DenseLayer(hidden2, hidden1, Activation::tanh),
                     DenseLayer(hidden1, input_dim, Activation::identity)};
        std::mt19937_64 rng(mix_seed(seed, 7));
        auto fill = [&rng](DenseLayer& l) {
            const double r = 1.0 / std::sqrt(static_cast<double>(l.in()));
            std::uniform_real_distribution<double> u(-r, r);
            for (Index i = 0; i < l.weights.size(); ++i) l.weights.data()[i] = u(rng);
            for (Index i = 0; i < l.bias.size(); ++i) l.bias[i] = u(rng);
        };
        for (auto& l : p.encoder) fill(l);
        for (auto& l : p.decoder) fill(l);
        return p;
    }
};

/**
 * Adapts a freshly initialized model to a corpus: sets the input
 * standardization from the corpus log-power statistics and starts the
 * decoder output bias at the per-bin mean log-power.
 */
inline void adapt_to_corpus(VaeParams& params, const Mat& spectra)
{
    const Mat logx = spectra.array().log().matrix();
    const double mean = logx.mean();
    const double var = (logx.array() - mean).square().mean();
    params.input_shift = mean;
    params.input_scale = std::sqrt(std::max(var, 1e-12));
    params.decoder[2].bias = logx.rowwise().mean();
}

inline void check_spectrum(const Mat& x, Index expected_dim)
{
    if (x.rows() != expected_dim) {
        throw Error("spectrum has " + std::to_string(x.rows()) + " bins, model expects " + std::to_string(expected_dim));
    }
    for (Index j = 0; j < x.cols(); ++j) {
        for (Index i = 0; i < x.rows(); ++i) {
            const double v = x(i, j);
            if (!(v > 0.0) || !std::isfinite(v)) {
                throw NonFiniteError("spectrum bin " + std::to_string(i) + " is not strictly positive and finite", i);
            }
        }
    }
}

inline Mat encoder_features(const VaeParams& params, const Mat& x)
{
    return ((x.array().log() - params.input_shift) / params.input_scale).matrix();
}

/// Posterior moments for a batch of spectra (columns).
struct LatentBatch {
    Mat means;      ///< [L x B]
    Mat variances;  ///< [L x B]

    GaussianLatent at(Index n) const { return {means.col(n), variances.col(n)}; }
};

inline LatentBatch encode_batch(const VaeParams& params, const Mat& x)
{
    check_spectrum(x, params.input_dim);
    const Mat out = mlp_forward(params.encoder, encoder_features(params, x)).output();
    const Index l = params.latent_dim;
    return {out.topRows(l), out.bottomRows(l).array().exp().matrix()};
}

inline GaussianLatent encode(const VaeParams& params, std::span<const double> x)
{
    return encode_batch(params, to_vec(x)).at(0);
}

inline Mat decode_batch(const VaeParams& params, const Mat& z)
{
    if (z.rows() != params.latent_dim) throw Error("latent batch has the wrong dimension");
    if (!z.allFinite()) throw Error("decode: latent vector is not finite");
    return mlp_forward(params.decoder, z).output().array().exp().matrix();
}

inline Vec decode(const VaeParams& params, const Vec& z)
{
    return decode_batch(params, z);
}

/// Reparameterized draw z = mu + sqrt(v) * eps.
inline Vec sample_latent(const GaussianLatent& g, std::mt19937_64& rng)
{
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec z(g.mean.size());
    for (Index i = 0; i < z.size(); ++i) z[i] = g.mean[i] + std::sqrt(g.variance[i]) * gauss(rng);
    return z;
}

inline Mat standard_normal(Index rows, Index cols, std::mt19937_64& rng)
{
    std::normal_distribution<double> gauss(0.0, 1.0);
    Mat m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = gauss(rng);
    return m;
}

/// Itakura-Saito divergence sum_d (x/v - ln(x/v) - 1).
inline double is_divergence(const Vec& x, const Vec& v)
{
    const auto r = x.array() / v.array();
    return (r - r.log() - 1.0).sum();
}

struct ElboValue {
    double elbo = 0.0;
    double reconstruction = 0.0;  ///< batch mean of ln p(x|z) up to its constant
    double kl = 0.0;              ///< batch mean of KL(q(z|x) || N(0, I))
};

struct ElboGradient {
    ElboValue value;
    Vec gradient;  ///< d ELBO / d params, VaeParams::flatten layout
};

namespace detail {

inline void require_finite(double v, const char* term)
{
    if (!std::isfinite(v)) throw Error(std::string("non-finite ") + term + " term in ELBO");
}

}  // namespace detail

/**
 * Single-sample ELBO of a batch (spectra as columns) with the standard-normal
 * draws supplied in `noise` [L x B]; optionally its exact gradient.
 */
inline ElboGradient elbo_with_noise(const VaeParams& params, const Mat& batch, const Mat& noise, bool with_gradient,
                                    double kl_weight = 1.0)
{
    check_spectrum(batch, params.input_dim);
    const Index l = params.latent_dim;
    const Index b = batch.cols();
    if (noise.rows() != l || noise.cols() != b) throw Error("noise matrix has the wrong shape");

    const MlpCache enc = mlp_forward(params.encoder, encoder_features(params, batch));
    const Mat mu = enc.output().topRows(l);
    const Mat logv = enc.output().bottomRows(l);
    const Mat stddev = (0.5 * logv.array()).exp().matrix();
    const Mat z = mu + stddev.cwiseProduct(noise);

    const MlpCache dec = mlp_forward(params.decoder, z);
    const Mat& log_scale = dec.output();
    const Mat ratio = (batch.array() * (-log_scale.array()).exp()).matrix();

    const double inv_b = 1.0 / static_cast<double>(b);
    ElboGradient out;
    out.value.reconstruction = -(log_scale.sum() + ratio.sum()) * inv_b;
    out.value.kl = 0.5 * (mu.array().square() + logv.array().exp() - logv.array() - 1.0).sum() * inv_b;
    out.value.elbo = out.value.reconstruction - out.value.kl;
    detail::require_finite(out.value.reconstruction, "reconstruction");
    detail::require_finite(out.value.kl, "kl");
    if (!with_gradient) return out;

    // Gradients of the loss -ELBO, then negated.
    const Mat d_log_scale = (1.0 - ratio.array()).matrix() * inv_b;
    const MlpGradients dec_grad = mlp_gradients(params.decoder, d_log_scale, dec);
    const Mat& dz = dec_grad.input_adjoint;

    Mat d_enc_out(2 * l, b);
    d_enc_out.topRows(l) = dz + mu * (kl_weight * inv_b);
    d_enc_out.bottomRows(l) = (dz.array() * noise.array() * stddev.array() * 0.5 +
                               0.5 * kl_weight * (logv.array().exp() - 1.0) * inv_b)
                                  .matrix();
    const MlpGradients enc_grad = mlp_gradients(params.encoder, d_enc_out, enc);

    out.gradient.resize(params.parameter_count());
    const Index ne = enc_grad.parameters.size();
    out.gradient.head(ne) = -enc_grad.parameters;
    out.gradient.tail(dec_grad.parameters.size()) = -dec_grad.parameters;
    return out;
}

inline ElboValue elbo(const VaeParams& params, const Mat& batch, std::mt19937_64& rng)
{
    const Mat noise = standard_normal(params.latent_dim, batch.cols(), rng);
    return elbo_with_noise(params, batch, noise, false).value;
}

struct GradientCheckResult {
    std::vector<Index> coordinates;
    std::vector<double> analytic;
    std::vector<double> numeric;
    double max_relative_error = 0.0;
};

/**
 * Compares the analytic ELBO gradient with central differences on
 * `n_coords` randomly chosen parameters (fixed noise draw). Relative error is
 * |a - n| / max(|a|, |n|); pairs that are both below `tiny` count as agreeing.
 */
inline GradientCheckResult check_elbo_gradient(const VaeParams& params, const Mat& batch, Index n_coords,
                                               std::uint64_t seed, double step = 1e-5, double tiny = 1e-9)
{
    std::mt19937_64 rng(mix_seed(seed, 29));
    const Mat noise = standard_normal(params.latent_dim, batch.cols(), rng);
    const Vec grad = elbo_with_noise(params, batch, noise, true).gradient;
    const Vec flat = params.flatten();
    std::uniform_int_distribution<Index> pick(0, flat.size() - 1);
    GradientCheckResult r;
    VaeParams probe = params;
    for (Index k = 0; k < n_coords; ++k) {
        const Index i = pick(rng);
        Vec p = flat;
        p[i] = flat[i] + step;
        probe.assign(p);
        const double up = elbo_with_noise(probe, batch, noise, false).value.elbo;
        p[i] = flat[i] - step;
        probe.assign(p);
        const double down = elbo_with_noise(probe, batch, noise, false).value.elbo;
        const double fd = (up - down) / (2.0 * step);
        const double scale = std::max(std::abs(grad[i]), std::abs(fd));
        const double rel = scale < tiny ? 0.0 : std::abs(grad[i] - fd) / scale;
        r.coordinates.push_back(i);
        r.analytic.push_back(grad[i]);
        r.numeric.push_back(fd);
        r.max_relative_error = std::max(r.max_relative_error, rel);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 64;
    std::size_t epochs = 50;
    std::uint64_t seed = 0;
    std::size_t log_every = 1;  ///< record every n-th step ELBO
    double validation_fraction = 0.1;
    std::size_t kl_warmup_epochs = 0;  ///< KL gradient weight ramps linearly from 0 to 1 over these epochs

    void validate() const
    {
        if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
        if (batch_size < 1) throw Error("batch size must be at least 1");
        if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
            throw Error("validation fraction must be in [0, 1)");
        }
    }
};

struct TrainingLog {
    std::uint64_t seed = 0;
    std::vector<std::size_t> steps;         ///< step index of each logged ELBO
    std::vector<double> step_elbo;          ///< training minibatch ELBO
    std::vector<double> validation_elbo;    ///< entry 0 is before training, then one per epoch
    std::size_t train_frames = 0;
    std::size_t validation_frames = 0;
};

class TrainingDivergedError : public Error {
public:
    TrainingDivergedError(std::size_t step, double last_finite)
        : Error("training diverged at step " + std::to_string(step) + " (last finite ELBO " +
                std::to_string(last_finite) + ")"),
          step(step), last_finite_elbo(last_finite) {}
    std::size_t step;
    double last_finite_elbo;
};

/// Deterministic split into (train, validation) column indices.
inline std::pair<std::vector<Index>, std::vector<Index>> split_indices(Index n, double validation_fraction,
                                                                     std::uint64_t seed)
{
    std::vector<Index> idx(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    std::mt19937_64 rng(mix_seed(seed, 11));
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_val = static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(n)));
    if (n_val >= idx.size()) n_val = idx.size() - 1;
    std::vector<Index> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<Index> train(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    std::sort(val.begin(), val.end());
    return {train, val};
}

inline Mat gather_columns(const Mat& m, std::span<const Index> cols)
{
    Mat out(m.rows(), static_cast<Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Index>(j)) = m.col(cols[j]);
    return out;
}

/// Single-sample ELBO of the validation frames with a fixed noise stream.
inline double validation_elbo(const VaeParams& params, const Mat& frames, std::uint64_t seed)
{
    if (frames.cols() == 0) return 0.0;
    std::mt19937_64 rng(mix_seed(seed, 13));
    return elbo(params, frames, rng).elbo;
}

using TrainCallback = std::function<void(std::size_t epoch, double validation_elbo)>;

/// Adam ascent on the ELBO. Deterministic given config.seed.
inline std::pair<VaeParams, TrainingLog> train(VaeParams params, const Mat& spectra, const TrainConfig& config,
                                               const TrainCallback& on_epoch = {})
{
    config.validate();
    check_spectrum(spectra, params.input_dim);
    auto [train_idx, val_idx] = split_indices(spectra.cols(), config.validation_fraction, config.seed);
    const Mat val_frames = gather_columns(spectra, val_idx);

    TrainingLog log;
    log.seed = config.seed;
    log.train_frames = train_idx.size();
    log.validation_frames = val_idx.size();
    log.validation_elbo.push_back(validation_elbo(params, val_frames, config.seed));

    Vec flat = params.flatten();
    AdamState adam = AdamState::for_size(flat.size(), config.learning_rate);
    std::mt19937_64 rng(mix_seed(config.seed, 17));
    std::size_t step = 0;
    double last_finite = log.validation_elbo.front();
    const std::size_t steps_per_epoch = (train_idx.size() + config.batch_size - 1) / config.batch_size;
    const std::size_t warmup_steps = config.kl_warmup_epochs * steps_per_epoch;
    auto kl_weight = [warmup_steps](std::size_t s) {
        return warmup_steps == 0 ? 1.0 : std::min(1.0, static_cast<double>(s + 1) / static_cast<double>(warmup_steps));
    };

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        for (std::size_t start = 0; start < train_idx.size(); start += config.batch_size) {
            const std::size_t len = std::min(config.batch_size, train_idx.size() - start);
            const Mat batch = gather_columns(spectra, std::span<const Index>(train_idx).subspan(start, len));
            const Mat noise = standard_normal(params.latent_dim, batch.cols(), rng);
            ElboGradient eg;
            try {
                eg = elbo_with_noise(params, batch, noise, true, kl_weight(step));
            } catch (const Error&) {
                throw TrainingDivergedError(step, last_finite);
            }
            if (!eg.gradient.allFinite()) throw TrainingDivergedError(step, last_finite);
            last_finite = eg.value.elbo;
            if (config.log_every > 0 && step % config.log_every == 0) {
                log.steps.push_back(step);
                log.step_elbo.push_back(eg.value.elbo);
            }
            adam_step(flat, -eg.gradient, adam);
            params.assign(flat);
            ++step;
        }
        const double v = validation_elbo(params, val_frames, config.seed);
        if (!std::isfinite(v)) throw TrainingDivergedError(step, last_finite);
        log.validation_elbo.push_back(v);
        if (on_epoch) on_epoch(epoch + 1, v);
    }
    return {std::move(params), std::move(log)};
}

/// Mean per-frame IS divergence between frames and their posterior-mean reconstructions.
inline double mean_reconstruction_divergence(const VaeParams& params, const Mat& frames)
{
    const LatentBatch enc = encode_batch(params, frames);
    const Mat recon = decode_batch(params, enc.means);
    double acc = 0.0;
    for (Index n = 0; n < frames.cols(); ++n) acc += is_divergence(frames.col(n), recon.col(n));
    return acc / static_cast<double>(frames.cols());
}

}  // namespace sfvae
