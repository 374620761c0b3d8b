#pragma once

// Pipeline artifacts as SFT1 containers.

#include "sfvae/control.hpp"
#include "sfvae/sft1.hpp"
#include "sfvae/subspace.hpp"
#include "sfvae/synth.hpp"
#include "sfvae/vae.hpp"

#include <bit>

namespace sfvae {

inline constexpr std::int64_t kCheckpointFormatVersion = 1;

/// Provenance stamped into every artifact.
struct ArtifactStamp {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
};

inline void put_stamp(sft1::Container& c, const ArtifactStamp& s)
{
    c.put_scalar("config_hash", std::bit_cast<std::int64_t>(s.config_hash));
    c.put_scalar("seed", std::bit_cast<std::int64_t>(s.seed));
}

inline ArtifactStamp get_stamp(const sft1::Container& c)
{
    return {std::bit_cast<std::uint64_t>(c.scalar_i64("config_hash")), std::bit_cast<std::uint64_t>(c.scalar_i64("seed"))};
}

inline void require_kind(const sft1::Container& c, const std::string& kind)
{
    if (!c.contains("kind")) throw sft1::FormatError("artifact has no 'kind' entry, expected " + kind);
    const auto& v = c.i64("kind");
    const std::string got(v.begin(), v.end());
    if (got != kind) throw sft1::FormatError("artifact is a " + got + ", expected " + kind);
}

inline void put_kind(sft1::Container& c, const std::string& kind)
{
    c.put("kind", {{static_cast<std::uint64_t>(kind.size())}, std::vector<std::int64_t>(kind.begin(), kind.end())});
}

// ---------------------------------------------------------------------------
// Datasets and spectrograms
// ---------------------------------------------------------------------------

/// Frames are columns in memory and rows on disk; the bytes are the same.
inline void put_frames(sft1::Container& c, const std::string& name, const Mat& frames)
{
    c.put(name, {{static_cast<std::uint64_t>(frames.cols()), static_cast<std::uint64_t>(frames.rows())},
                 std::vector<double>(frames.data(), frames.data() + frames.size())});
}

inline Mat get_frames(const sft1::Container& c, const std::string& name)
{
    const auto& t = c.at(name);
    if (t.dims.size() != 2) throw sft1::FormatError("entry '" + name + "' is not rank 2");
    const auto& v = c.f64(name);
    return Eigen::Map<const Mat>(v.data(), static_cast<Index>(t.dims[1]), static_cast<Index>(t.dims[0]));
}

inline sft1::Container dataset_to_sft1(const LabeledDataset& ds, const ArtifactStamp& stamp)
{
    sft1::Container c;
    put_kind(c, "dataset");
    put_frames(c, "spectra", ds.spectra);
    put_frames(c, "labels", ds.labels);
    c.put_scalar("varying_factor", static_cast<std::int64_t>(ds.varying_factor.value_or(-1)));
    c.put_scalar("sample_rate", ds.sample_rate);
    c.put_scalar("frame_len", static_cast<std::int64_t>(ds.frame_len));
    put_stamp(c, stamp);
    return c;
}

inline LabeledDataset dataset_from_sft1(const sft1::Container& c)
{
    require_kind(c, "dataset");
    LabeledDataset ds;
    ds.spectra = get_frames(c, "spectra");
    ds.labels = get_frames(c, "labels");
    if (ds.labels.rows() != kFactorCount || ds.labels.cols() != ds.spectra.cols()) {
        throw sft1::FormatError("dataset labels must be [N x 4] matching the spectra");
    }
    const auto vf = c.scalar_i64("varying_factor");
    if (vf < -1 || vf >= kFactorCount) throw sft1::FormatError("varying_factor out of range");
    if (vf >= 0) ds.varying_factor = static_cast<int>(vf);
    ds.sample_rate = c.scalar_f64("sample_rate");
    ds.frame_len = static_cast<std::size_t>(c.scalar_i64("frame_len"));
    return ds;
}

/// A bare spectrogram: "spectra" [N x D] only.
inline sft1::Container spectrogram_to_sft1(const Mat& frames, const ArtifactStamp& stamp)
{
    sft1::Container c;
    put_kind(c, "spectrogram");
    put_frames(c, "spectra", frames);
    put_stamp(c, stamp);
    return c;
}

/// Accepts a spectrogram or a dataset.
inline Mat spectra_from_sft1(const sft1::Container& c)
{
    return get_frames(c, "spectra");
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

inline sft1::Container checkpoint_to_sft1(const VaeParams& p, const ArtifactStamp& stamp)
{
    sft1::Container c;
    put_kind(c, "checkpoint");
    c.put_scalar("format_version", kCheckpointFormatVersion);
    c.put_scalar("D", static_cast<std::int64_t>(p.input_dim));
    c.put_scalar("L", static_cast<std::int64_t>(p.latent_dim));
    c.put_scalar("input_shift", p.input_shift);
    c.put_scalar("input_scale", p.input_scale);
    for (std::size_t i = 0; i < 3; ++i) {
        c.put_matrix("enc" + std::to_string(i) + ".w", p.encoder[i].weights);
        c.put_vector("enc" + std::to_string(i) + ".b", p.encoder[i].bias);
    }
    for (std::size_t i = 0; i < 3; ++i) {
        c.put_matrix("dec" + std::to_string(i) + ".w", p.decoder[i].weights);
        c.put_vector("dec" + std::to_string(i) + ".b", p.decoder[i].bias);
    }
    put_stamp(c, stamp);
    return c;
}

inline VaeParams checkpoint_from_sft1(const sft1::Container& c)
{
    require_kind(c, "checkpoint");
    const auto version = c.scalar_i64("format_version");
    if (version != kCheckpointFormatVersion) {
        throw sft1::FormatError("unsupported checkpoint format version " + std::to_string(version));
    }
    const auto d = c.scalar_i64("D");
    const auto l = c.scalar_i64("L");
    const Mat w1 = c.matrix("enc0.w");
    const Mat w2 = c.matrix("enc1.w");
    VaeParams p = VaeParams::init(d, l, 0, w1.rows(), w2.rows());
    p.input_shift = c.scalar_f64("input_shift");
    p.input_scale = c.scalar_f64("input_scale");
    auto load = [&](DenseLayer& layer, const std::string& prefix) {
        Mat w = c.matrix(prefix + ".w");
        Vec b = c.vector(prefix + ".b");
        if (w.rows() != layer.out() || w.cols() != layer.in() || b.size() != layer.out()) {
            throw sft1::FormatError("checkpoint layer " + prefix + " has the wrong shape");
        }
        layer.weights = std::move(w);
        layer.bias = std::move(b);
    };
    for (std::size_t i = 0; i < 3; ++i) load(p.encoder[i], "enc" + std::to_string(i));
    for (std::size_t i = 0; i < 3; ++i) load(p.decoder[i], "dec" + std::to_string(i));
    return p;
}

// ---------------------------------------------------------------------------
// Subspace and regressor
// ---------------------------------------------------------------------------

inline sft1::Container subspace_to_sft1(const SubspaceModel& s, const ArtifactStamp& stamp)
{
    sft1::Container c;
    put_kind(c, "subspace");
    c.put_scalar("factor", static_cast<std::int64_t>(s.factor));
    c.put_scalar("M", static_cast<std::int64_t>(s.dim()));
    c.put_matrix("U", s.basis);
    c.put_vector("eigenvalues", s.eigenvalues);
    c.put_vector("mean", s.mean);
    c.put_scalar("variance_retained", s.variance_retained);
    put_stamp(c, stamp);
    return c;
}

inline SubspaceModel subspace_from_sft1(const sft1::Container& c)
{
    require_kind(c, "subspace");
    SubspaceModel s;
    s.factor = static_cast<int>(c.scalar_i64("factor"));
    s.basis = c.matrix("U");
    s.eigenvalues = c.vector("eigenvalues");
    s.mean = c.vector("mean");
    s.variance_retained = c.scalar_f64("variance_retained");
    if (s.factor < 0 || s.factor >= kFactorCount) throw sft1::FormatError("subspace factor out of range");
    if (c.scalar_i64("M") != s.dim() || s.mean.size() != s.latent_dim()) {
        throw sft1::FormatError("subspace entries have inconsistent shapes");
    }
    return s;
}

/// Piecewise maps stacked per coordinate: breakpoints [M x (S-1)], slopes and intercepts [M x S].
inline sft1::Container regressor_to_sft1(const RegressionModel& r, const ArtifactStamp& stamp)
{
    const Index m = r.dim();
    const Index s = r.n_segments;
    Mat breaks(m, s - 1), slopes(m, s), intercepts(m, s);
    for (Index i = 0; i < m; ++i) {
        const auto& f = r.coords[static_cast<std::size_t>(i)];
        if (f.segments() != s) throw Error("regressor coordinate " + std::to_string(i) + " has the wrong segment count");
        breaks.row(i) = f.breakpoints.transpose();
        slopes.row(i) = f.slopes.transpose();
        intercepts.row(i) = f.intercepts.transpose();
    }
    sft1::Container c;
    put_kind(c, "regressor");
    c.put_scalar("factor", static_cast<std::int64_t>(r.factor));
    c.put_scalar("n_segments", static_cast<std::int64_t>(s));
    c.put_scalar("y_min", r.y_min);
    c.put_scalar("y_max", r.y_max);
    c.put_matrix("breakpoints", breaks);
    c.put_matrix("slopes", slopes);
    c.put_matrix("intercepts", intercepts);
    c.put_vector("rmse", r.rmse);
    put_stamp(c, stamp);
    return c;
}

inline RegressionModel regressor_from_sft1(const sft1::Container& c)
{
    require_kind(c, "regressor");
    RegressionModel r;
    r.factor = static_cast<int>(c.scalar_i64("factor"));
    r.n_segments = static_cast<int>(c.scalar_i64("n_segments"));
    r.y_min = c.scalar_f64("y_min");
    r.y_max = c.scalar_f64("y_max");
    const Mat breaks = c.matrix("breakpoints");
    const Mat slopes = c.matrix("slopes");
    const Mat intercepts = c.matrix("intercepts");
    r.rmse = c.vector("rmse");
    if (slopes.cols() != r.n_segments || intercepts.cols() != r.n_segments || breaks.cols() != r.n_segments - 1 ||
        slopes.rows() != breaks.rows() || intercepts.rows() != breaks.rows() || r.rmse.size() != breaks.rows()) {
        throw sft1::FormatError("regressor entries have inconsistent shapes");
    }
    for (Index i = 0; i < slopes.rows(); ++i) {
        r.coords.push_back({breaks.row(i).transpose(), slopes.row(i).transpose(), intercepts.row(i).transpose()});
    }
    return r;
}

}  // namespace sfvae
