#pragma once

// Run configuration: a flat key=value format shared by config files and
// command-line flags. Keys are the long flag names without the leading
// dashes, e.g. `eval-every=1000`.

#include "gdro/env.hpp"
#include "gdro/error.hpp"
#include "gdro/gdro.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace gdro {

enum class EnvKind { synthetic, csv };

struct RunConfig {
    PlaMode algorithm = PlaMode::unified;
    EnvKind env = EnvKind::synthetic;

    // synthetic environment
    std::size_t m = 20;
    std::size_t dim = 500;
    double noise = 0.1;
    double similarity = 0.0;
    std::optional<std::uint64_t> env_seed;

    // csv environment
    std::string csv_path;
    std::vector<std::string> features;
    std::string label;
    std::string positive = "1";
    std::vector<std::string> group_by;

    BudgetSchedule schedule = BudgetSchedule::uniform_default();
    std::int64_t iters = 1000;
    std::uint64_t seed = 0;
    std::int64_t eval_every = 100;
    std::size_t eval_samples = 10'000;
    double radius = 1.0;
    std::optional<double> grad_bound;
    std::optional<double> x_max;
    std::optional<double> kappa;
    bool diagnostics = false;
    bool eps_phi = false;
    std::size_t eps_phi_iters = 500;
    std::size_t eps_phi_samples = 1'000;
    std::string out;
    std::size_t jobs = 1;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Every recognized key, in serialization order.
inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "algo",       "env",           "m",        "dim",         "noise",
        "similarity", "env-seed",      "csv",      "features",    "label",
        "positive",   "groups",        "schedule", "iters",       "seed",
        "eval-every", "eval-samples",  "radius",   "grad-bound",  "x-max",
        "kappa",      "diagnostics",   "eps-phi",  "eps-phi-iters", "eps-phi-samples",
        "out",        "jobs"};
    return keys;
}

namespace detail {

template <typename T>
T parse_number(const std::string& key, std::string_view text) {
    text = trim(text);
    T v{};
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (text.empty() || ec != std::errc() || ptr != end)
        throw ConfigError(key, "not a valid number: '" + std::string(text) + "'");
    if constexpr (std::is_floating_point_v<T>)
        if (!std::isfinite(v)) throw ConfigError(key, "must be finite");
    return v;
}

inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline bool parse_bool(const std::string& key, std::string_view text) {
    text = trim(text);
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ConfigError(key, "expected true or false, got '" + std::string(text) + "'");
}

inline std::vector<std::string> parse_list(std::string_view text) {
    std::vector<std::string> out;
    if (trim(text).empty()) return out;
    for (auto part : split(text, ',')) out.emplace_back(trim(part));
    return out;
}

inline std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
    return out;
}

inline std::optional<double> parse_optional_double(const std::string& key, std::string_view text) {
    if (trim(text) == "auto" || trim(text).empty()) return std::nullopt;
    const double v = parse_number<double>(key, text);
    if (!(v > 0.0)) throw ConfigError(key, "must be positive");
    return v;
}

} // namespace detail

inline PlaMode parse_algorithm(const std::string& key, std::string_view text) {
    text = detail::trim(text);
    if (text == "unified") return PlaMode::unified;
    if (text == "hybrid") return PlaMode::hybrid;
    throw ConfigError(key, "expected unified or hybrid, got '" + std::string(text) + "'");
}

/// Applies one key=value setting. Throws ConfigError naming the key.
inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
    using detail::parse_number;
    const auto positive_int = [&](auto v) {
        if (v < 1) throw ConfigError(key, "must be >= 1");
        return v;
    };
    if (key == "algo") {
        cfg.algorithm = parse_algorithm(key, value);
    } else if (key == "env") {
        const auto v = detail::trim(value);
        if (v == "synthetic") cfg.env = EnvKind::synthetic;
        else if (v == "csv") cfg.env = EnvKind::csv;
        else throw ConfigError(key, "expected synthetic or csv, got '" + std::string(v) + "'");
    } else if (key == "m") {
        cfg.m = parse_number<std::size_t>(key, value);
        if (cfg.m < 2) throw ConfigError(key, "need at least two groups");
    } else if (key == "dim") {
        cfg.dim = positive_int(parse_number<std::size_t>(key, value));
    } else if (key == "noise") {
        cfg.noise = parse_number<double>(key, value);
        if (!(cfg.noise >= 0.0 && cfg.noise <= 1.0)) throw ConfigError(key, "must lie in [0,1]");
    } else if (key == "similarity") {
        cfg.similarity = parse_number<double>(key, value);
        if (!(cfg.similarity >= 0.0 && cfg.similarity <= 1.0))
            throw ConfigError(key, "must lie in [0,1]");
    } else if (key == "env-seed") {
        if (detail::trim(value).empty() || detail::trim(value) == "auto") cfg.env_seed.reset();
        else cfg.env_seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "csv") {
        cfg.csv_path = std::string(detail::trim(value));
    } else if (key == "features") {
        cfg.features = detail::parse_list(value);
    } else if (key == "label") {
        cfg.label = std::string(detail::trim(value));
    } else if (key == "positive") {
        cfg.positive = std::string(detail::trim(value));
    } else if (key == "groups") {
        cfg.group_by = detail::parse_list(value);
    } else if (key == "schedule") {
        cfg.schedule = parse_schedule(detail::trim(value));
    } else if (key == "iters") {
        cfg.iters = positive_int(parse_number<std::int64_t>(key, value));
    } else if (key == "seed") {
        cfg.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "eval-every") {
        cfg.eval_every = positive_int(parse_number<std::int64_t>(key, value));
    } else if (key == "eval-samples") {
        cfg.eval_samples = positive_int(parse_number<std::size_t>(key, value));
    } else if (key == "radius") {
        cfg.radius = parse_number<double>(key, value);
        if (!(cfg.radius > 0.0)) throw ConfigError(key, "must be positive");
    } else if (key == "grad-bound") {
        cfg.grad_bound = detail::parse_optional_double(key, value);
    } else if (key == "x-max") {
        cfg.x_max = detail::parse_optional_double(key, value);
    } else if (key == "kappa") {
        cfg.kappa = detail::parse_optional_double(key, value);
    } else if (key == "diagnostics") {
        cfg.diagnostics = detail::parse_bool(key, value);
    } else if (key == "eps-phi") {
        cfg.eps_phi = detail::parse_bool(key, value);
    } else if (key == "eps-phi-iters") {
        cfg.eps_phi_iters = positive_int(parse_number<std::size_t>(key, value));
    } else if (key == "eps-phi-samples") {
        cfg.eps_phi_samples = positive_int(parse_number<std::size_t>(key, value));
    } else if (key == "out") {
        cfg.out = std::string(detail::trim(value));
    } else if (key == "jobs") {
        cfg.jobs = positive_int(parse_number<std::size_t>(key, value));
    } else {
        throw ConfigError(key, "unknown setting");
    }
}

/// Parses key=value lines. Blank lines and lines starting with '#' are skipped.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> out;
    for (auto raw : detail::split(text, '\n')) {
        const auto line = detail::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(std::string(line), "expected key=value");
        out.emplace_back(std::string(detail::trim(line.substr(0, eq))),
                         std::string(detail::trim(line.substr(eq + 1))));
    }
    return out;
}

inline std::string read_text_file(const std::string& path, const std::string& key) {
    std::ifstream in(path);
    if (!in) throw ConfigError(key, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Applies settings in order; later ones win.
inline RunConfig make_config(const std::vector<std::pair<std::string, std::string>>& settings,
                             RunConfig base = {}) {
    for (const auto& [k, v] : settings) apply_setting(base, k, v);
    return base;
}

/// Cross-field checks that single-key parsing cannot do.
inline void validate_config(const RunConfig& cfg) {
    if (cfg.iters < 1) throw ConfigError("iters", "must be >= 1");
    if (cfg.eval_every < 1) throw ConfigError("eval-every", "must be >= 1");
    if (cfg.env == EnvKind::synthetic) {
        try {
            cfg.schedule.validate(cfg.m);
        } catch (const ValidationError& e) {
            throw ConfigError("schedule", e.what());
        }
    } else {
        if (cfg.csv_path.empty()) throw ConfigError("csv", "required when env=csv");
        if (cfg.features.empty()) throw ConfigError("features", "required when env=csv");
        if (cfg.label.empty()) throw ConfigError("label", "required when env=csv");
        if (cfg.group_by.empty()) throw ConfigError("groups", "required when env=csv");
    }
}

inline std::string to_config_text(const RunConfig& cfg) {
    using detail::format_double;
    const auto opt = [](const std::optional<double>& v) {
        return v ? format_double(*v) : std::string("auto");
    };
    std::ostringstream o;
    o << "algo=" << to_string(cfg.algorithm) << '\n'
      << "env=" << (cfg.env == EnvKind::synthetic ? "synthetic" : "csv") << '\n'
      << "m=" << cfg.m << '\n'
      << "dim=" << cfg.dim << '\n'
      << "noise=" << format_double(cfg.noise) << '\n'
      << "similarity=" << format_double(cfg.similarity) << '\n'
      << "env-seed=" << (cfg.env_seed ? std::to_string(*cfg.env_seed) : "auto") << '\n'
      << "csv=" << cfg.csv_path << '\n'
      << "features=" << detail::join(cfg.features) << '\n'
      << "label=" << cfg.label << '\n'
      << "positive=" << cfg.positive << '\n'
      << "groups=" << detail::join(cfg.group_by) << '\n'
      << "schedule=" << cfg.schedule.to_string() << '\n'
      << "iters=" << cfg.iters << '\n'
      << "seed=" << cfg.seed << '\n'
      << "eval-every=" << cfg.eval_every << '\n'
      << "eval-samples=" << cfg.eval_samples << '\n'
      << "radius=" << format_double(cfg.radius) << '\n'
      << "grad-bound=" << opt(cfg.grad_bound) << '\n'
      << "x-max=" << opt(cfg.x_max) << '\n'
      << "kappa=" << opt(cfg.kappa) << '\n'
      << "diagnostics=" << (cfg.diagnostics ? "true" : "false") << '\n'
      << "eps-phi=" << (cfg.eps_phi ? "true" : "false") << '\n'
      << "eps-phi-iters=" << cfg.eps_phi_iters << '\n'
      << "eps-phi-samples=" << cfg.eps_phi_samples << '\n'
      << "out=" << cfg.out << '\n'
      << "jobs=" << cfg.jobs << '\n';
    return o.str();
}

inline GameConfig game_config(const RunConfig& cfg) {
    GameConfig g;
    g.mode = cfg.algorithm;
    g.schedule = cfg.schedule;
    g.horizon = cfg.iters;
    g.eval_every = cfg.eval_every;
    g.eval_samples = cfg.eval_samples;
    g.diagnostics = cfg.diagnostics;
    g.eps_phi = cfg.eps_phi;
    g.eps_phi_iters = cfg.eps_phi_iters;
    g.eps_phi_samples = cfg.eps_phi_samples;
    g.grad_bound = cfg.grad_bound;
    g.seed = cfg.seed;
    return g;
}

/// Builds the environment a configuration describes.
inline GroupEnvironment build_environment(const RunConfig& cfg) {
    if (cfg.env == EnvKind::synthetic) {
        SyntheticOptions opt;
        opt.noise = cfg.noise;
        opt.similarity = cfg.similarity;
        opt.radius = cfg.radius;
        opt.x_max = cfg.x_max;
        opt.kappa = cfg.kappa;
        RandomStream rng(cfg.env_seed.value_or(cfg.seed), Stream::construction);
        return synth_generate(cfg.m, cfg.dim, rng, opt);
    }
    CsvSpec spec;
    spec.features = cfg.features;
    spec.label = cfg.label;
    spec.positive = cfg.positive;
    spec.group_by = cfg.group_by;
    spec.radius = cfg.radius;
    spec.x_max = cfg.x_max;
    spec.kappa = cfg.kappa;
    return ingest_grouped_csv(cfg.csv_path, spec).env;
}

} // namespace gdro
