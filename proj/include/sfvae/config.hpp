#pragma once

// Pipeline configuration: an INI-style file of [section] headers and
// key = value lines. '#' and ';' start comments. Unknown sections or keys
// are rejected.

#include "sfvae/control.hpp"
#include "sfvae/harness.hpp"
#include "sfvae/subspace.hpp"
#include "sfvae/synth.hpp"
#include "sfvae/vae.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

namespace sfvae {

inline constexpr const char* kConfigEnvVar = "SFVAE_CONFIG";

class ConfigError : public Error {
public:
    using Error::Error;
};

struct PitchConfig {
    double voiced_percentile = 0.95;
    std::vector<double> lambdas{0.2, 0.1, 0.01};
    std::vector<double> snr_db{-10.0, -5.0, 0.0, 5.0, 10.0, 20.0, 30.0, 40.0};
    std::size_t seeds = 5;
    std::size_t test_frames = 100;
};

struct PipelineConfig {
    SynthConfig synth;
    std::size_t corpus_frames = 5000;
    std::uint64_t corpus_seed = 7;
    std::uint64_t dataset_seed = 11;
    CorpusNoise corpus_noise;

    TrainConfig train;
    Index latent_dim = 16;
    std::uint64_t init_seed = 1;

    double variance_threshold = 0.8;
    int regression_segments = 4;
    int regression_grid_divisions = 16;

    PitchConfig pitch;

    std::array<SweepProtocol, 4> sweeps{default_sweep(0), default_sweep(1), default_sweep(2), default_sweep(3)};
    HeldOutOptions held_out;

    std::filesystem::path work_dir = ".";

    /// Stable text form of every setting; the config hash is taken over it.
    std::string canonical() const
    {
        std::ostringstream o;
        o.precision(17);
        o << "synth " << synth.sample_rate << ' ' << synth.frame_len << ' ' << synth.formant_amplitude_db << ' '
          << synth.source_slope_db_per_octave << ' ' << synth.noise_floor_rel << ' ' << corpus_frames << ' '
          << corpus_seed << ' ' << dataset_seed << ' ' << corpus_noise.fraction << ' ' << corpus_noise.min_snr_db << ' '
          << corpus_noise.max_snr_db << '\n';
        o << "train " << train.learning_rate << ' ' << train.batch_size << ' ' << train.epochs << ' ' << train.seed << ' '
          << train.validation_fraction << ' ' << train.kl_warmup_epochs << ' ' << latent_dim << ' ' << init_seed << '\n';
        o << "subspace " << variance_threshold << '\n';
        o << "regression " << regression_segments << ' ' << regression_grid_divisions << '\n';
        o << "pitch " << pitch.voiced_percentile << ' ' << pitch.seeds << ' ' << pitch.test_frames;
        for (double l : pitch.lambdas) o << ' ' << l;
        o << " |";
        for (double s : pitch.snr_db) o << ' ' << s;
        o << '\n';
        for (const auto& s : sweeps) o << "sweep " << s.factor << ' ' << s.min_hz << ' ' << s.max_hz << ' ' << s.step_hz << '\n';
        o << "held_out " << held_out.count << ' ' << held_out.seed << ' ' << held_out.min_formant_gap_hz << '\n';
        return o.str();
    }

    std::uint64_t hash() const { return fnv1a(canonical()); }

    void validate() const
    {
        if (auto v = synth.violation()) throw ConfigError("synth: " + *v);
        try {
            train.validate();
        } catch (const Error& e) {
            throw ConfigError(std::string("train: ") + e.what());
        }
        if (corpus_frames < 1) throw ConfigError("synth.corpus_frames must be at least 1");
        try {
            corpus_noise.validate();
        } catch (const Error& e) {
            throw ConfigError(std::string("synth: ") + e.what());
        }
        if (latent_dim < 2) throw ConfigError("train.latent_dim must be at least 2");
        if (!(variance_threshold > 0.0 && variance_threshold <= 1.0)) {
            throw ConfigError("subspace.variance_threshold must be in (0, 1], got " + std::to_string(variance_threshold));
        }
        if (regression_segments < 1) throw ConfigError("regression.segments must be at least 1");
        if (regression_grid_divisions < regression_segments) {
            throw ConfigError("regression.grid_divisions must be at least regression.segments");
        }
        if (!(pitch.voiced_percentile > 0.0 && pitch.voiced_percentile <= 1.0)) {
            throw ConfigError("pitch.voiced_percentile must be in (0, 1]");
        }
        for (double l : pitch.lambdas) {
            if (!(l > 0.0)) throw ConfigError("pitch.lambdas entries must be positive");
        }
        if (pitch.snr_db.empty()) throw ConfigError("pitch.snr_db must not be empty");
        if (pitch.seeds < 1) throw ConfigError("pitch.seeds must be at least 1");
        for (const auto& s : sweeps) {
            if (!(s.step_hz > 0.0) || !(s.max_hz >= s.min_hz) || !(s.min_hz > 0.0)) {
                throw ConfigError(std::string("sweep for ") + factor_name(s.factor) + " has an empty range or bad step");
            }
        }
        if (held_out.count < 1) throw ConfigError("experiment.held_out_vowels must be at least 1");
    }
};

namespace detail {

inline std::string trim(std::string_view s)
{
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string_view::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return std::string(s.substr(a, b - a + 1));
}

template <class T>
T parse_number(const std::string& text, const std::string& key)
{
    T v{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) throw ConfigError("bad value for " + key + ": '" + text + "'");
    return v;
}

inline double parse_double(const std::string& text, const std::string& key)
{
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(v)) {
        throw ConfigError("bad value for " + key + ": '" + text + "'");
    }
    return v;
}

inline std::vector<double> parse_list(const std::string& text, const std::string& key)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(trim(item), key));
    if (out.empty()) throw ConfigError("empty list for " + key);
    return out;
}

}  // namespace detail

inline std::vector<double> parse_number_list(const std::string& text, const std::string& what)
{
    return detail::parse_list(text, what);
}

/// Applies the text of one config file on top of `cfg`. `base_dir` anchors relative paths.
inline void apply_config_text(PipelineConfig& cfg, std::string_view text, const std::filesystem::path& base_dir)
{
    using Setter = std::function<void(const std::string&, const std::string&)>;
    auto dbl = [](double& d) -> Setter { return [&d](const std::string& v, const std::string& k) { d = detail::parse_double(v, k); }; };
    auto u64 = [](std::uint64_t& d) -> Setter {
        return [&d](const std::string& v, const std::string& k) { d = detail::parse_number<std::uint64_t>(v, k); };
    };
    auto size = [](std::size_t& d) -> Setter {
        return [&d](const std::string& v, const std::string& k) { d = detail::parse_number<std::size_t>(v, k); };
    };
    auto integer = [](int& d) -> Setter {
        return [&d](const std::string& v, const std::string& k) { d = detail::parse_number<int>(v, k); };
    };
    auto list = [](std::vector<double>& d) -> Setter {
        return [&d](const std::string& v, const std::string& k) { d = detail::parse_list(v, k); };
    };

    std::map<std::string, Setter> setters{
        {"synth.sample_rate", dbl(cfg.synth.sample_rate)},
        {"synth.frame_len", size(cfg.synth.frame_len)},
        {"synth.formant_amplitude_db", dbl(cfg.synth.formant_amplitude_db)},
        {"synth.source_slope_db_per_octave", dbl(cfg.synth.source_slope_db_per_octave)},
        {"synth.noise_floor_rel", dbl(cfg.synth.noise_floor_rel)},
        {"synth.corpus_frames", size(cfg.corpus_frames)},
        {"synth.corpus_seed", u64(cfg.corpus_seed)},
        {"synth.dataset_seed", u64(cfg.dataset_seed)},
        {"synth.corpus_noise_fraction", dbl(cfg.corpus_noise.fraction)},
        {"synth.corpus_noise_min_snr_db", dbl(cfg.corpus_noise.min_snr_db)},
        {"synth.corpus_noise_max_snr_db", dbl(cfg.corpus_noise.max_snr_db)},
        {"train.learning_rate", dbl(cfg.train.learning_rate)},
        {"train.batch_size", size(cfg.train.batch_size)},
        {"train.epochs", size(cfg.train.epochs)},
        {"train.seed", u64(cfg.train.seed)},
        {"train.validation_fraction", dbl(cfg.train.validation_fraction)},
        {"train.kl_warmup_epochs", size(cfg.train.kl_warmup_epochs)},
        {"train.init_seed", u64(cfg.init_seed)},
        {"train.latent_dim", [&cfg](const std::string& v, const std::string& k) {
             cfg.latent_dim = detail::parse_number<Index>(v, k);
         }},
        {"subspace.variance_threshold", dbl(cfg.variance_threshold)},
        {"regression.segments", integer(cfg.regression_segments)},
        {"regression.grid_divisions", integer(cfg.regression_grid_divisions)},
        {"pitch.voiced_percentile", dbl(cfg.pitch.voiced_percentile)},
        {"pitch.lambdas", list(cfg.pitch.lambdas)},
        {"pitch.snr_db", list(cfg.pitch.snr_db)},
        {"pitch.seeds", size(cfg.pitch.seeds)},
        {"pitch.test_frames", size(cfg.pitch.test_frames)},
        {"experiment.held_out_vowels", size(cfg.held_out.count)},
        {"experiment.seed", u64(cfg.held_out.seed)},
        {"experiment.min_formant_gap_hz", dbl(cfg.held_out.min_formant_gap_hz)},
        {"paths.work_dir", [&cfg, base_dir](const std::string& v, const std::string&) {
             const std::filesystem::path p(v);
             cfg.work_dir = p.is_absolute() ? p : base_dir / p;
         }},
    };
    for (int i = 0; i < kFactorCount; ++i) {
        const std::string sec = std::string("experiment.") + factor_name(i) + ".";
        auto& s = cfg.sweeps[static_cast<std::size_t>(i)];
        setters[sec + "min_hz"] = dbl(s.min_hz);
        setters[sec + "max_hz"] = dbl(s.max_hz);
        setters[sec + "step_hz"] = dbl(s.step_hz);
    }

    std::string section;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto cut = raw.find_first_of("#;");
        const std::string line = detail::trim(cut == std::string::npos ? raw : raw.substr(0, cut));
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(line_no) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + "unterminated section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        const std::string key = section.empty() ? detail::trim(line.substr(0, eq))
                                                : section + "." + detail::trim(line.substr(0, eq));
        const auto it = setters.find(key);
        if (it == setters.end()) throw ConfigError(where + "unknown key '" + key + "'");
        try {
            it->second(detail::trim(line.substr(eq + 1)), key);
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
}

inline PipelineConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    PipelineConfig cfg;
    const auto base = std::filesystem::absolute(path).parent_path();
    cfg.work_dir = base;
    apply_config_text(cfg, buf.str(), base);
    cfg.validate();
    return cfg;
}

/// Explicit path, else $SFVAE_CONFIG, else built-in defaults.
inline PipelineConfig resolve_config(const std::optional<std::filesystem::path>& explicit_path)
{
    if (explicit_path) return load_config(*explicit_path);
    if (const char* env = std::getenv(kConfigEnvVar); env != nullptr && *env != '\0') return load_config(env);
    PipelineConfig cfg;
    cfg.validate();
    return cfg;
}

}  // namespace sfvae
