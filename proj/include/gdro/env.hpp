#pragma once

// The environment oracle: m group samplers, the bounded loss the players
// see, budget schedules, a synthetic generator and grouped-CSV ingestion.
//
// The loss is the binary logistic loss divided by a normalizer kappa and
// clamped at 1, so every emitted value lies in [0,1]. Features are clipped
// to norm x_max when drawn, which certifies the gradient bound
// G = x_max / kappa. With the default kappa = softplus(R * x_max) the clamp
// never binds inside the ball.

#include "gdro/error.hpp"
#include "gdro/rng.hpp"
#include "gdro/types.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace gdro {

struct Datum {
    std::vector<double> x;
    double y = 1.0;
};

// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// 1 / (1 + exp(-z)).
inline double logistic_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

struct LossEvaluation {
    double value = 0.0;
    bool clamped = false;
};

// ---------------------------------------------------------------------------
// Budget schedules
// ---------------------------------------------------------------------------

class BudgetSchedule {
public:
    struct Fixed {
        std::int64_t r;
        friend bool operator==(const Fixed&, const Fixed&) = default;
    };
    /// Uniform on [lo, hi]; a missing hi means m - 1.
    struct Uniform {
        std::int64_t lo = 1;
        std::optional<std::int64_t> hi;
        friend bool operator==(const Uniform&, const Uniform&) = default;
    };
    struct FromList {
        std::vector<std::int64_t> values;
        std::string source;
        friend bool operator==(const FromList&, const FromList&) = default;
    };
    using Kind = std::variant<Fixed, Uniform, FromList>;

    BudgetSchedule() : kind_(Uniform{}) {}
    explicit BudgetSchedule(Kind kind) : kind_(std::move(kind)) {}

    static BudgetSchedule fixed(std::int64_t r) { return BudgetSchedule(Fixed{r}); }
    static BudgetSchedule uniform(std::int64_t lo, std::int64_t hi) {
        return BudgetSchedule(Uniform{lo, hi});
    }
    static BudgetSchedule uniform_default() { return BudgetSchedule(Uniform{1, std::nullopt}); }
    static BudgetSchedule from_list(std::vector<std::int64_t> values, std::string source = {}) {
        return BudgetSchedule(FromList{std::move(values), std::move(source)});
    }

    const Kind& kind() const noexcept { return kind_; }

    /// Throws ValidationError unless every value the schedule can emit is in [1, m].
    void validate(std::size_t m) const {
        const auto in_range = [m](std::int64_t r) {
            return r >= 1 && static_cast<std::size_t>(r) <= m;
        };
        if (const auto* f = std::get_if<Fixed>(&kind_)) {
            if (!in_range(f->r)) throw ValidationError("schedule: fixed r outside [1,m]");
        } else if (const auto* u = std::get_if<Uniform>(&kind_)) {
            const auto [lo, hi] = uniform_range(*u, m);
            if (!in_range(lo) || !in_range(hi) || lo > hi)
                throw ValidationError("schedule: uniform range outside [1,m]");
        } else {
            const auto& l = std::get<FromList>(kind_);
            if (l.values.empty()) throw ValidationError("schedule: empty list");
            for (std::int64_t r : l.values)
                if (!in_range(r)) throw ValidationError("schedule: list value outside [1,m]");
        }
    }

    /// Text form accepted by parse_schedule ("fixed:R", "uniform:LO:HI",
    /// "uniform", "file:PATH").
    std::string to_string() const {
        if (const auto* f = std::get_if<Fixed>(&kind_)) return "fixed:" + std::to_string(f->r);
        if (const auto* u = std::get_if<Uniform>(&kind_)) {
            if (!u->hi) return "uniform";
            return "uniform:" + std::to_string(u->lo) + ":" + std::to_string(*u->hi);
        }
        return "file:" + std::get<FromList>(kind_).source;
    }

    static std::pair<std::int64_t, std::int64_t> uniform_range(const Uniform& u, std::size_t m) {
        return {u.lo, u.hi.value_or(static_cast<std::int64_t>(m) - 1)};
    }

    friend bool operator==(const BudgetSchedule&, const BudgetSchedule&) = default;

private:
    Kind kind_;
};

/// Budget for round t (1-based). Uniform schedules consume one draw per call.
inline QueryBudget reveal_budget(const BudgetSchedule& schedule, std::int64_t t, RandomStream& rng,
                                 std::size_t m) {
    if (t < 1) throw ValidationError("reveal_budget: t must be >= 1");
    const auto& kind = schedule.kind();
    if (const auto* f = std::get_if<BudgetSchedule::Fixed>(&kind)) return QueryBudget(f->r, m);
    if (const auto* u = std::get_if<BudgetSchedule::Uniform>(&kind)) {
        const auto [lo, hi] = BudgetSchedule::uniform_range(*u, m);
        return QueryBudget(rng.uniform_int(lo, hi), m);
    }
    const auto& values = std::get<BudgetSchedule::FromList>(kind).values;
    if (static_cast<std::size_t>(t) > values.size())
        throw ScheduleExhausted("schedule list has " + std::to_string(values.size()) +
                                " entries, round " + std::to_string(t) + " requested");
    return QueryBudget(values[static_cast<std::size_t>(t - 1)], m);
}

namespace detail {

inline std::int64_t parse_int(std::string_view s, const std::string& key) {
    std::int64_t v = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end)
        throw ConfigError(key, "expected an integer, got '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace detail

/// Reads a schedule file: integers separated by newlines, commas or blanks.
inline std::vector<std::int64_t> read_schedule_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("schedule", "cannot open schedule file '" + path + "'");
    std::vector<std::int64_t> out;
    std::string line;
    while (std::getline(in, line)) {
        std::replace_if(line.begin(), line.end(), [](char c) { return c == ',' || c == '\t'; }, ' ');
        for (const auto field : detail::split(line, ' ')) {
            const auto t = detail::trim(field);
            if (!t.empty()) out.push_back(detail::parse_int(t, "schedule"));
        }
    }
    return out;
}

inline BudgetSchedule parse_schedule(std::string_view text) {
    const auto parts = detail::split(text, ':');
    const std::string key = "schedule";
    if (parts[0] == "fixed" && parts.size() == 2)
        return BudgetSchedule::fixed(detail::parse_int(parts[1], key));
    if (parts[0] == "uniform" && parts.size() == 1) return BudgetSchedule::uniform_default();
    if (parts[0] == "uniform" && parts.size() == 3)
        return BudgetSchedule::uniform(detail::parse_int(parts[1], key),
                                       detail::parse_int(parts[2], key));
    if (parts[0] == "file" && parts.size() >= 2) {
        const std::string path(text.substr(5));
        return BudgetSchedule::from_list(read_schedule_file(path), path);
    }
    throw ConfigError(key, "expected fixed:R, uniform:LO:HI or file:PATH, got '" +
                               std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Group samplers and the environment
// ---------------------------------------------------------------------------

/// Gaussian features, label sign(x . w*) flipped with probability flip_prob.
struct SyntheticGroup {
    std::vector<double> w_star;
    double flip_prob = 0.1;
};

/// Uniform draws with replacement from a fixed row set.
struct EmpiricalGroup {
    std::shared_ptr<const std::vector<Datum>> rows;
    std::vector<std::string> key;
};

using GroupSampler = std::variant<SyntheticGroup, EmpiricalGroup>;

struct LossSettings {
    double radius = 1.0;
    double x_max = 1.0;
    /// Normalizer; defaults to softplus(radius * x_max) when unset.
    std::optional<double> kappa;
};

/// Losses of one round as seen by both players.
struct RoundObservation {
    ObservedLosses losses;
    Datum anchor_sample;
    std::int64_t clamp_count = 0;
};

class GroupEnvironment {
public:
    GroupEnvironment(std::vector<GroupSampler> samplers, std::size_t dim, LossSettings settings)
        : samplers_(std::move(samplers)), dim_(dim), radius_(settings.radius),
          x_max_(settings.x_max) {
        if (samplers_.size() < 2) throw TooFewGroups("environment needs at least two groups");
        if (dim_ == 0) throw ValidationError("environment: feature dimension must be >= 1");
        if (!(radius_ > 0.0) || !(x_max_ > 0.0))
            throw ValidationError("environment: radius and x_max must be positive");
        kappa_ = settings.kappa.value_or(softplus(radius_ * x_max_));
        if (!(kappa_ > 0.0)) throw ValidationError("environment: kappa must be positive");
        for (const auto& s : samplers_) {
            if (const auto* syn = std::get_if<SyntheticGroup>(&s)) {
                if (syn->w_star.size() != dim_) throw ValidationError("environment: w* dimension");
            } else {
                const auto& emp = std::get<EmpiricalGroup>(s);
                if (!emp.rows || emp.rows->empty()) throw EmptyGroup("environment: empty group");
            }
        }
    }

    std::size_t groups() const noexcept { return samplers_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    double radius() const noexcept { return radius_; }
    double x_max() const noexcept { return x_max_; }
    double kappa() const noexcept { return kappa_; }
    /// Certified bound on every gradient the environment emits.
    double grad_bound() const noexcept { return x_max_ / kappa_; }
    const GroupSampler& sampler(GroupIndex i) const { return samplers_.at(i); }

    bool empirical() const noexcept {
        return std::holds_alternative<EmpiricalGroup>(samplers_.front());
    }

    Datum draw_sample(GroupIndex i, RandomStream& rng) const {
        const auto& s = samplers_.at(i);
        if (const auto* emp = std::get_if<EmpiricalGroup>(&s)) {
            const auto& rows = *emp->rows;
            return rows[rng.uniform_index(rows.size())];
        }
        const auto& syn = std::get<SyntheticGroup>(s);
        Datum z;
        z.x.resize(dim_);
        for (double& v : z.x) v = rng.normal();
        clip(z.x);
        const double margin = dot(z.x, syn.w_star);
        const double truth = margin >= 0.0 ? 1.0 : -1.0;
        z.y = rng.bernoulli(syn.flip_prob) ? -truth : truth;
        return z;
    }

    LossEvaluation evaluate(std::span<const double> w, const Datum& z) const {
        const double raw = softplus(-z.y * dot(z.x, w));
        if (raw >= kappa_) return {1.0, true};
        return {raw / kappa_, false};
    }

    double loss(const ModelPoint& w, const Datum& z) const { return evaluate(w.coords(), z).value; }

    /// Gradient of the clamped normalized loss; zero where the clamp binds.
    std::vector<double> loss_gradient(std::span<const double> w, const Datum& z) const {
        std::vector<double> g(dim_, 0.0);
        const double margin = z.y * dot(z.x, w);
        if (softplus(-margin) >= kappa_) return g;
        const double scale = -z.y * logistic_sigmoid(-margin) / kappa_;
        for (std::size_t k = 0; k < dim_; ++k) g[k] = scale * z.x[k];
        return g;
    }

    std::vector<double> loss_gradient(const ModelPoint& w, const Datum& z) const {
        return loss_gradient(w.coords(), z);
    }

    /// Draws one sample per queried group and reports s_hat = 1 - loss. The
    /// anchor's sample is kept for the w-player's gradient.
    RoundObservation observed_losses(const ModelPoint& w, const SelectionRecord& sel,
                                     RandomStream& rng) const {
        RoundObservation out;
        std::vector<ObservedLosses::Entry> entries;
        entries.reserve(sel.all().size());
        for (GroupIndex i : sel.all()) {
            Datum z = draw_sample(i, rng);
            const auto ev = evaluate(w.coords(), z);
            out.clamp_count += ev.clamped ? 1 : 0;
            entries.push_back({i, 1.0 - ev.value});
            if (i == sel.anchor()) out.anchor_sample = std::move(z);
        }
        out.losses = ObservedLosses(std::move(entries));
        return out;
    }

    /// Simulation-only: s_hat for every group. Queried groups reuse their
    /// observed values; the others are drawn from `rng`, which must not be a
    /// training stream.
    std::vector<double> full_losses(const ModelPoint& w, const ObservedLosses& observed,
                                    RandomStream& rng) const {
        std::vector<double> out(groups(), 0.0);
        auto it = observed.entries().begin();
        for (GroupIndex i = 0; i < groups(); ++i) {
            if (it != observed.entries().end() && it->group == i) {
                out[i] = it->value;
                ++it;
            } else {
                out[i] = 1.0 - evaluate(w.coords(), draw_sample(i, rng)).value;
            }
        }
        return out;
    }

private:
    void clip(std::vector<double>& x) const {
        const double n = norm2(x);
        if (n > x_max_)
            for (double& v : x) v *= x_max_ / n;
    }

    std::vector<GroupSampler> samplers_;
    std::size_t dim_;
    double radius_;
    double x_max_;
    double kappa_;
};

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

struct SyntheticOptions {
    /// Label flip probability.
    double noise = 0.1;
    /// Mixing weight of a shared direction in every w*; 0 gives independent
    /// directions, 1 identical ones. Pairwise cosine concentrates near it.
    double similarity = 0.0;
    double radius = 1.0;
    /// Feature clipping norm; defaults to 3 sqrt(d).
    std::optional<double> x_max;
    std::optional<double> kappa;
};

inline std::vector<double> random_unit_vector(std::size_t d, RandomStream& rng) {
    std::vector<double> v(d);
    double n = 0.0;
    do {
        for (double& x : v) x = rng.normal();
        n = norm2(v);
    } while (n == 0.0);
    for (double& x : v) x /= n;
    return v;
}

inline GroupEnvironment synth_generate(std::size_t m, std::size_t d, RandomStream& rng,
                                       const SyntheticOptions& opt = {}) {
    if (m < 2) throw TooFewGroups("synthetic environment needs m >= 2");
    if (d < 1) throw ValidationError("synthetic environment needs d >= 1");
    if (!(opt.noise >= 0.0 && opt.noise <= 1.0))
        throw ValidationError("synthetic: noise outside [0,1]");
    if (!(opt.similarity >= 0.0 && opt.similarity <= 1.0))
        throw ValidationError("synthetic: similarity outside [0,1]");
    const std::vector<double> shared = random_unit_vector(d, rng);
    std::vector<GroupSampler> samplers;
    samplers.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        const std::vector<double> own = random_unit_vector(d, rng);
        std::vector<double> w(d);
        for (std::size_t k = 0; k < d; ++k)
            w[k] = std::sqrt(opt.similarity) * shared[k] + std::sqrt(1.0 - opt.similarity) * own[k];
        const double n = norm2(w);
        for (double& x : w) x /= n;
        samplers.emplace_back(SyntheticGroup{std::move(w), opt.noise});
    }
    LossSettings loss;
    loss.radius = opt.radius;
    loss.x_max = opt.x_max.value_or(3.0 * std::sqrt(static_cast<double>(d)));
    loss.kappa = opt.kappa;
    return GroupEnvironment(std::move(samplers), d, loss);
}

// ---------------------------------------------------------------------------
// Grouped CSV ingestion
// ---------------------------------------------------------------------------

struct CsvSpec {
    std::vector<std::string> features;
    std::string label;
    /// Label value mapped to +1; every other value maps to -1.
    std::string positive;
    std::vector<std::string> group_by;
    /// When set, only rows whose key is listed are kept, and each listed key
    /// must keep at least one row.
    std::optional<std::vector<std::vector<std::string>>> expected_groups;
    double radius = 1.0;
    /// Defaults to the largest feature norm in the data (no clipping).
    std::optional<double> x_max;
    std::optional<double> kappa;
};

namespace detail {

// Splits one CSV record; double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv_record(std::string_view line, std::size_t line_no) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char c = line[k];
        if (quoted) {
            if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
                cur += '"';
                ++k;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    if (quoted) throw MalformedRow(line_no, "unterminated quote");
    out.push_back(std::move(cur));
    return out;
}

inline double parse_double(std::string_view s, std::size_t line_no, const std::string& column) {
    s = trim(s);
    double v = 0.0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(v))
        throw MalformedRow(line_no, "column '" + column + "' is not a number: '" + std::string(s) + "'");
    return v;
}

} // namespace detail

/// Result of CSV ingestion: the environment plus the group keys in index order.
struct IngestedData {
    GroupEnvironment env;
    std::vector<std::vector<std::string>> group_keys;
    std::vector<std::size_t> group_sizes;
};

inline IngestedData ingest_grouped_csv(std::istream& in, const CsvSpec& spec) {
    std::string line;
    if (!std::getline(in, line)) throw MalformedRow(1, "missing header row");
    const auto header = detail::split_csv_record(line, 1);
    const auto column = [&](const std::string& name) {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (detail::trim(header[c]) == name) return c;
        throw MalformedRow(1, "header has no column '" + name + "'");
    };
    std::vector<std::size_t> feature_cols;
    for (const auto& f : spec.features) feature_cols.push_back(column(f));
    if (feature_cols.empty()) throw MalformedRow(1, "no feature columns configured");
    const std::size_t label_col = column(spec.label);
    std::vector<std::size_t> key_cols;
    for (const auto& g : spec.group_by) key_cols.push_back(column(g));
    if (key_cols.empty()) throw MalformedRow(1, "no group-key columns configured");

    std::map<std::vector<std::string>, std::vector<Datum>> by_key;
    if (spec.expected_groups)
        for (const auto& k : *spec.expected_groups) by_key[k];

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_csv_record(line, line_no);
        if (fields.size() != header.size())
            throw MalformedRow(line_no, "expected " + std::to_string(header.size()) +
                                            " fields, found " + std::to_string(fields.size()));
        std::vector<std::string> key;
        for (std::size_t c : key_cols) key.emplace_back(detail::trim(fields[c]));
        if (spec.expected_groups && !by_key.contains(key)) continue;
        const auto label = detail::trim(fields[label_col]);
        if (label.empty()) throw MalformedRow(line_no, "empty label");
        Datum z;
        z.y = label == spec.positive ? 1.0 : -1.0;
        for (std::size_t k = 0; k < feature_cols.size(); ++k)
            z.x.push_back(detail::parse_double(fields[feature_cols[k]], line_no, spec.features[k]));
        by_key[std::move(key)].push_back(std::move(z));
    }

    if (by_key.size() < 2)
        throw TooFewGroups("CSV yields " + std::to_string(by_key.size()) + " group(s); need >= 2");
    double max_norm = 0.0;
    std::vector<GroupSampler> samplers;
    std::vector<std::vector<std::string>> keys;
    std::vector<std::size_t> sizes;
    for (auto& [key, rows] : by_key) {
        if (rows.empty()) {
            std::string joined;
            for (const auto& k : key) joined += (joined.empty() ? "" : ",") + k;
            throw EmptyGroup("group (" + joined + ") has no rows");
        }
        for (const auto& z : rows) max_norm = std::max(max_norm, norm2(z.x));
        keys.push_back(key);
        sizes.push_back(rows.size());
        samplers.emplace_back(EmpiricalGroup{
            std::make_shared<const std::vector<Datum>>(std::move(rows)), key});
    }
    LossSettings loss;
    loss.radius = spec.radius;
    loss.x_max = spec.x_max.value_or(max_norm > 0.0 ? max_norm : 1.0);
    loss.kappa = spec.kappa;
    if (spec.x_max) {
        // Clip stored rows once so draws never exceed the certified bound.
        for (auto& s : samplers) {
            auto& emp = std::get<EmpiricalGroup>(s);
            auto rows = *emp.rows;
            for (auto& z : rows) {
                const double n = norm2(z.x);
                if (n > *spec.x_max)
                    for (double& v : z.x) v *= *spec.x_max / n;
            }
            emp.rows = std::make_shared<const std::vector<Datum>>(std::move(rows));
        }
    }
    return IngestedData{GroupEnvironment(std::move(samplers), feature_cols.size(), loss),
                        std::move(keys), std::move(sizes)};
}

inline IngestedData ingest_grouped_csv(const std::string& path, const CsvSpec& spec) {
    std::ifstream in(path);
    if (!in) throw ConfigError("csv", "cannot open '" + path + "'");
    return ingest_grouped_csv(in, spec);
}

} // namespace gdro
