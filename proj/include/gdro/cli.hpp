#pragma once

// Run and sweep drivers behind the command-line tool, kept in the library so
// tests can call them without spawning processes.

#include "gdro/config.hpp"
#include "gdro/gdro.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace gdro {

inline constexpr std::string_view metrics_header =
    "t,samples_used,max_risk,regret_q_prime,regret_ratio,eps_phi_est,wall_time_ms,clamp_count";

inline std::string format_metrics_row(const MetricsRecord& r) {
    using detail::format_double;
    const auto opt = [](const std::optional<double>& v) {
        return v ? format_double(*v) : std::string();
    };
    std::string row;
    row += std::to_string(r.t) + ',';
    row += std::to_string(r.samples_used) + ',';
    row += format_double(r.max_risk) + ',';
    row += opt(r.regret_q_prime) + ',';
    row += opt(r.regret_ratio) + ',';
    row += opt(r.eps_phi_est) + ',';
    row += format_double(r.wall_time_ms) + ',';
    row += std::to_string(r.clamp_count);
    return row;
}

/// Streams metric rows as CSV with LF line endings.
class MetricsCsvWriter {
public:
    explicit MetricsCsvWriter(std::ostream& out) : out_(&out) { *out_ << metrics_header << '\n'; }
    void write(const MetricsRecord& r) {
        *out_ << format_metrics_row(r) << '\n';
        out_->flush();
    }

private:
    std::ostream* out_;
};

/// Runs one configuration and writes its CSV to `out`. Returns the final
/// metrics row, if any.
inline std::optional<MetricsRecord> run_to_stream(const RunConfig& cfg, const GroupEnvironment& env,
                                                  std::ostream& out) {
    GameConfig game = game_config(cfg);
    try {
        game.schedule.validate(env.groups());
    } catch (const ValidationError& e) {
        throw ConfigError("schedule", e.what());
    }
    MetricsCsvWriter writer(out);
    const RunResult result = run(env, game, [&](const MetricsRecord& r) { writer.write(r); });
    if (result.metrics.empty()) return std::nullopt;
    return result.metrics.back();
}

/// Exit status convention: 0 success, 1 runtime failure, 2 configuration error.
inline int cmd_run(const RunConfig& cfg, std::ostream& err = std::cerr) {
    try {
        validate_config(cfg);
        const GroupEnvironment env = build_environment(cfg);
        if (cfg.out.empty() || cfg.out == "-") {
            run_to_stream(cfg, env, std::cout);
        } else {
            std::ofstream file(cfg.out, std::ios::binary);
            if (!file) throw ConfigError("out", "cannot open '" + cfg.out + "' for writing");
            run_to_stream(cfg, env, file);
        }
        return 0;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "run failed: " << e.what() << '\n';
        return 1;
    }
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepAxes {
    std::vector<std::int64_t> fixed_r;
    std::vector<std::uint64_t> seeds;
    std::vector<PlaMode> algorithms;

    bool empty() const { return fixed_r.empty() && seeds.empty() && algorithms.empty(); }
};

struct SweepCell {
    RunConfig config;
    /// Cell key without the seed; cells sharing it are summarized together.
    std::string group_key;
    std::string key;
};

inline std::vector<SweepCell> expand_sweep(const RunConfig& base, const SweepAxes& axes) {
    if (axes.empty()) throw ConfigError("axis", "a sweep needs at least one non-empty axis");
    const std::vector<std::optional<PlaMode>> algos =
        axes.algorithms.empty() ? std::vector<std::optional<PlaMode>>{std::nullopt}
                                : std::vector<std::optional<PlaMode>>(axes.algorithms.begin(),
                                                                      axes.algorithms.end());
    const std::vector<std::optional<std::int64_t>> rs =
        axes.fixed_r.empty() ? std::vector<std::optional<std::int64_t>>{std::nullopt}
                             : std::vector<std::optional<std::int64_t>>(axes.fixed_r.begin(),
                                                                        axes.fixed_r.end());
    const std::vector<std::optional<std::uint64_t>> seeds =
        axes.seeds.empty() ? std::vector<std::optional<std::uint64_t>>{std::nullopt}
                           : std::vector<std::optional<std::uint64_t>>(axes.seeds.begin(),
                                                                       axes.seeds.end());
    std::vector<SweepCell> cells;
    for (const auto& a : algos)
        for (const auto& r : rs)
            for (const auto& s : seeds) {
                SweepCell cell{base, {}, {}};
                std::string group;
                if (a) {
                    cell.config.algorithm = *a;
                    group += "algo-" + to_string(*a);
                }
                if (r) {
                    cell.config.schedule = BudgetSchedule::fixed(*r);
                    group += std::string(group.empty() ? "" : "_") + "r-" + std::to_string(*r);
                }
                if (group.empty()) group = "base";
                cell.group_key = group;
                cell.key = group;
                if (s) {
                    cell.config.seed = *s;
                    const std::string seed_part = "seed-" + std::to_string(*s);
                    cell.key = group == "base" ? seed_part : group + "_" + seed_part;
                }
                cells.push_back(std::move(cell));
            }
    return cells;
}

struct SweepSummaryRow {
    std::string group_key;
    std::string algorithm;
    std::string schedule;
    std::size_t runs = 0;
    std::size_t failures = 0;
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<double> finals;
};

/// Groups per-cell finals by group key; stddev is the sample (n-1) estimate,
/// zero for a single run.
inline std::vector<SweepSummaryRow> summarize_sweep(const std::vector<SweepCell>& cells,
                                                    const std::vector<std::optional<double>>& finals) {
    std::vector<SweepSummaryRow> rows;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        auto it = std::find_if(rows.begin(), rows.end(),
                               [&](const auto& r) { return r.group_key == cells[c].group_key; });
        if (it == rows.end()) {
            SweepSummaryRow row;
            row.group_key = cells[c].group_key;
            row.algorithm = to_string(cells[c].config.algorithm);
            row.schedule = cells[c].config.schedule.to_string();
            rows.push_back(std::move(row));
            it = std::prev(rows.end());
        }
        ++it->runs;
        if (finals[c]) it->finals.push_back(*finals[c]);
        else ++it->failures;
    }
    for (auto& r : rows) {
        const std::size_t n = r.finals.size();
        if (n == 0) continue;
        r.mean = std::accumulate(r.finals.begin(), r.finals.end(), 0.0) / static_cast<double>(n);
        double ss = 0.0;
        for (double v : r.finals) ss += (v - r.mean) * (v - r.mean);
        r.stddev = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    }
    return rows;
}

inline void write_sweep_summary(std::ostream& out, const std::vector<SweepSummaryRow>& rows) {
    out << "cell,algo,schedule,runs,failures,final_max_risk_mean,final_max_risk_std,finals\n";
    for (const auto& r : rows) {
        std::string finals;
        for (double v : r.finals) finals += (finals.empty() ? "" : ";") + detail::format_double(v);
        out << r.group_key << ',' << r.algorithm << ',' << r.schedule << ',' << r.runs << ','
            << r.failures << ',' << (r.finals.empty() ? "" : detail::format_double(r.mean)) << ','
            << (r.finals.empty() ? "" : detail::format_double(r.stddev)) << ',' << finals << '\n';
    }
}

/// Runs every cell, up to cfg.jobs at a time, writing `<out>/<key>.csv` and
/// `<out>/summary.csv`. Failed cells are reported and skipped. Returns 0 if
/// every cell succeeded, 1 if any failed, 2 on configuration errors.
inline int cmd_sweep(const RunConfig& base, const SweepAxes& axes, std::ostream& err = std::cerr) {
    std::vector<SweepCell> cells;
    std::filesystem::path dir;
    try {
        cells = expand_sweep(base, axes);
        for (const auto& c : cells) validate_config(c.config);
        dir = base.out.empty() ? std::filesystem::path("sweep") : std::filesystem::path(base.out);
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw ConfigError("out", "cannot create directory '" + dir.string() + "'");
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    }

    std::vector<std::optional<double>> finals(cells.size());
    std::mutex err_mutex;
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t c = next++; c < cells.size(); c = next++) {
            try {
                const GroupEnvironment env = build_environment(cells[c].config);
                std::ofstream file(dir / (cells[c].key + ".csv"), std::ios::binary);
                if (!file) throw Error("cannot write cell CSV");
                if (auto last = run_to_stream(cells[c].config, env, file)) finals[c] = last->max_risk;
                else throw Error("no metric rows (iters < eval-every)");
            } catch (const std::exception& e) {
                std::lock_guard lock(err_mutex);
                err << "cell " << cells[c].key << " failed: " << e.what() << '\n';
            }
        }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(base.jobs, cells.size()));
    std::vector<std::jthread> pool;
    for (std::size_t k = 1; k < n_threads; ++k) pool.emplace_back(worker);
    worker();
    pool.clear();

    std::ofstream summary(dir / "summary.csv", std::ios::binary);
    write_sweep_summary(summary, summarize_sweep(cells, finals));
    const bool any_failed =
        std::any_of(finals.begin(), finals.end(), [](const auto& f) { return !f.has_value(); });
    return any_failed ? 1 : 0;
}

} // namespace gdro
