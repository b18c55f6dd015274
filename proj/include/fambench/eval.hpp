#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "fambench/controllers.hpp"
#include "fambench/distribution.hpp"
#include "fambench/envs.hpp"
#include "fambench/family.hpp"
#include "fambench/text.hpp"

namespace fambench {

// A method is an opaque label plus a policy factory; the evaluation engine
// never looks inside. Externally computed scores enter through the score
// file instead and never call make_policy.
struct Method {
    std::string id;
    bool trainable = true;
    std::function<Policy(const EnvInstance& env, std::size_t point_index)> make_policy;
};

struct PointEvaluation {
    double raw_mean = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::pair<std::uint64_t, double>> per_seed;
    bool failed = false;
    bool cache_hit = false;
};

// (method, task, point, seed) -> raw return. Write-once per key: duplicate
// writes must carry the identical value.
class ScoreCache {
public:
    std::optional<double> lookup(const std::string& method, const std::string& task,
                                 std::size_t point, std::uint64_t seed) const {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = map_.find(key(method, task, point));
        if (it == map_.end()) return std::nullopt;
        auto jt = it->second.find(seed);
        if (jt == it->second.end()) return std::nullopt;
        return jt->second;
    }

    void insert(const std::string& method, const std::string& task, std::size_t point,
                std::uint64_t seed, double raw) {
        std::lock_guard<std::mutex> lock(mu_);
        auto [it, fresh] = map_[key(method, task, point)].emplace(seed, raw);
        if (!fresh && !same_value(it->second, raw))
            throw std::logic_error("score cache collision with a different value");
    }

    std::size_t size() const {
        std::lock_guard<std::mutex> lock(mu_);
        std::size_t n = 0;
        for (const auto& [k, v] : map_) n += v.size();
        return n;
    }

private:
    static bool same_value(double a, double b) {
        return a == b || (std::isnan(a) && std::isnan(b));
    }
    static std::string key(const std::string& method, const std::string& task, std::size_t point) {
        return method + '\x1f' + task + '\x1f' + std::to_string(point);
    }
    mutable std::mutex mu_;
    std::map<std::string, std::map<std::uint64_t, double>> map_;
};

struct ScoreCell {
    double raw_mean = std::numeric_limits<double>::quiet_NaN();
    double normalized = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::pair<std::uint64_t, double>> per_seed;
    bool failed = false;
    bool cache_hit = false;
    bool present = false;
};

// Raw and normalized scores for every (point MDP, method) pair, plus the
// per-point normalization anchor.
struct ScoreMatrix {
    std::string task_id;
    MetricDirection direction = MetricDirection::higher_better;
    std::vector<std::string> methods;
    std::size_t family_size = 0;
    std::vector<ScoreCell> cells;           // point-major
    std::vector<double> baseline_raw;       // per point; empty until normalized

    ScoreCell& cell(std::size_t point, std::size_t method) {
        return cells[point * methods.size() + method];
    }
    const ScoreCell& cell(std::size_t point, std::size_t method) const {
        return cells[point * methods.size() + method];
    }

    std::size_t method_index(const std::string& id) const {
        for (std::size_t r = 0; r < methods.size(); ++r)
            if (methods[r] == id) return r;
        throw std::invalid_argument("method '" + id + "' not in score matrix");
    }

    std::vector<std::size_t> missing_points(std::size_t method) const {
        std::vector<std::size_t> missing;
        for (std::size_t i = 0; i < family_size; ++i) {
            const ScoreCell& c = cell(i, method);
            if (!c.present || c.failed || !std::isfinite(c.normalized)) missing.push_back(i);
        }
        return missing;
    }

    // Normalized score column for one method; throws when the row is
    // incomplete (Definition-1 quantities need every point).
    std::vector<double> normalized_row(const std::string& id) const {
        const std::size_t r = method_index(id);
        auto missing = missing_points(r);
        if (!missing.empty()) {
            std::ostringstream os;
            os << "method '" << id << "' has no usable score for point MDPs:";
            for (std::size_t i : missing) os << ' ' << i;
            throw std::runtime_error(os.str());
        }
        std::vector<double> row(family_size);
        for (std::size_t i = 0; i < family_size; ++i) row[i] = cell(i, r).normalized;
        return row;
    }
};

// s = raw / baseline, pointwise. Reward metrics require a positive anchor,
// cost metrics any nonzero anchor; offending points come back as error
// entries rather than aborting the matrix.
struct NormalizeResult {
    std::vector<double> normalized;
    std::vector<bool> error;
};

inline NormalizeResult normalize_scores(const std::vector<double>& raw,
                                        const std::vector<double>& baseline_raw,
                                        MetricDirection direction) {
    if (raw.size() != baseline_raw.size())
        throw std::invalid_argument("raw and baseline score lengths differ");
    NormalizeResult out;
    out.normalized.assign(raw.size(), std::numeric_limits<double>::quiet_NaN());
    out.error.assign(raw.size(), false);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double b = baseline_raw[i];
        const bool bad_anchor =
            !std::isfinite(b) || b == 0.0 || (direction == MetricDirection::higher_better && b <= 0.0);
        if (bad_anchor || !std::isfinite(raw[i])) {
            out.error[i] = true;
            continue;
        }
        out.normalized[i] = raw[i] / b;
    }
    return out;
}

struct OverallPerformance {
    std::string method;
    double value = 0.0;                    // E = sum_i s_i * p_i
    std::vector<double> contributions;     // c_i = s_i * p_i
};

inline OverallPerformance overall_performance(const ScoreMatrix& scores,
                                              const ImportanceDistribution& dist,
                                              const std::string& method) {
    if (dist.family_size != scores.family_size)
        throw std::invalid_argument("distribution family size differs from score matrix");
    validate(dist);
    const std::vector<double> s = scores.normalized_row(method);
    OverallPerformance out;
    out.method = method;
    out.contributions.resize(s.size());
    double e = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        out.contributions[i] = s[i] * dist.mass[i];
        e += out.contributions[i];
    }
    out.value = e;
    return out;
}

// Same computation from a plain score vector (the estimators and reports
// work on rows that may not live in a matrix).
inline OverallPerformance overall_performance(const std::vector<double>& scores,
                                              const ImportanceDistribution& dist,
                                              const std::string& method = "") {
    if (dist.family_size != scores.size())
        throw std::invalid_argument("distribution family size differs from score vector");
    OverallPerformance out;
    out.method = method;
    out.contributions.resize(scores.size());
    double e = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out.contributions[i] = scores[i] * dist.mass[i];
        e += out.contributions[i];
    }
    out.value = e;
    return out;
}

struct VarianceSummary {
    double mean = 0.0;
    double stddev = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::size_t failures = 0;
};

inline VarianceSummary summarize(const std::vector<double>& values, std::size_t failures) {
    VarianceSummary s;
    s.failures = failures;
    if (values.empty()) return s;
    s.min = values[0];
    s.max = values[0];
    for (double v : values) {
        s.mean += v;
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
    }
    s.mean /= static_cast<double>(values.size());
    for (double v : values) s.stddev += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(s.stddev / static_cast<double>(values.size()));
    return s;
}

namespace detail {

inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    std::exception_ptr first_error;
    std::mutex error_mu;
    const int n_workers = std::min<std::size_t>(jobs, n);
    for (int w = 0; w < n_workers; ++w) {
        workers.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

// Trains and evaluates methods point by point, maintains the cache and
// the trainings counter. Evaluation results are pure functions of
// (method, point, eval seeds); the schedule and concurrency never matter.
class Evaluator {
public:
    ScoreCache& cache() { return cache_; }
    int trainings_executed() const { return trainings_.load(); }

    PointEvaluation evaluate_point(const Method& method, const std::string& task_id,
                                   const PointMdp& point,
                                   const std::vector<std::uint64_t>& eval_seeds) {
        if (eval_seeds.empty()) throw std::invalid_argument("need at least one eval seed");
        const EnvInstance env = make_env(task_id, point);

        PointEvaluation out;
        out.cache_hit = true;
        for (std::uint64_t seed : eval_seeds) {
            auto hit = cache_.lookup(method.id, task_id, point.index, seed);
            if (!hit) {
                out.cache_hit = false;
                break;
            }
        }
        if (out.cache_hit) {
            for (std::uint64_t seed : eval_seeds)
                out.per_seed.push_back({seed, *cache_.lookup(method.id, task_id, point.index, seed)});
        } else {
            Policy policy = method.make_policy(env, point.index);
            if (method.trainable) trainings_.fetch_add(1);
            for (std::uint64_t seed : eval_seeds) {
                const double raw =
                    rollout(env, [&](const std::vector<double>& o) { return policy.act(o); }, seed)
                        .raw_return;
                cache_.insert(method.id, task_id, point.index, seed, raw);
                out.per_seed.push_back({seed, raw});
            }
        }

        double total = 0.0;
        for (const auto& [seed, raw] : out.per_seed) {
            if (!std::isfinite(raw)) out.failed = true;
            total += raw;
        }
        out.raw_mean = out.failed ? std::numeric_limits<double>::quiet_NaN()
                                  : total / static_cast<double>(out.per_seed.size());
        return out;
    }

    // Fills the raw side of a score matrix for the given methods over the
    // whole family. Normalization is applied afterwards by the caller (the
    // anchor may be one of the very rows being filled).
    ScoreMatrix evaluate_matrix(const std::vector<Method>& methods, const MdpFamily& family,
                                const std::string& task_id,
                                const std::vector<std::uint64_t>& eval_seeds, int jobs = 1) {
        ScoreMatrix m;
        m.task_id = task_id;
        m.direction = task_info(task_id).direction;
        for (const auto& method : methods) m.methods.push_back(method.id);
        m.family_size = family.size();
        m.cells.resize(family.size() * methods.size());

        detail::parallel_for(family.size() * methods.size(), jobs, [&](std::size_t cell_index) {
            const std::size_t i = cell_index / methods.size();
            const std::size_t r = cell_index % methods.size();
            const PointEvaluation pe = evaluate_point(methods[r], task_id, family.at(i), eval_seeds);
            ScoreCell& c = m.cell(i, r);
            c.raw_mean = pe.raw_mean;
            c.per_seed = pe.per_seed;
            c.failed = pe.failed;
            c.cache_hit = pe.cache_hit;
            c.present = true;
        });
        return m;
    }

private:
    ScoreCache cache_;
    std::atomic<int> trainings_{0};
};

// Applies the per-point anchor to every method row of the matrix.
inline void apply_normalization(ScoreMatrix& m, std::vector<double> baseline_raw) {
    if (baseline_raw.size() != m.family_size)
        throw std::invalid_argument("baseline length differs from family size");
    m.baseline_raw = std::move(baseline_raw);
    for (std::size_t r = 0; r < m.methods.size(); ++r) {
        std::vector<double> raw(m.family_size);
        for (std::size_t i = 0; i < m.family_size; ++i) raw[i] = m.cell(i, r).raw_mean;
        const NormalizeResult nr = normalize_scores(raw, m.baseline_raw, m.direction);
        for (std::size_t i = 0; i < m.family_size; ++i) {
            ScoreCell& c = m.cell(i, r);
            c.normalized = nr.normalized[i];
            if (nr.error[i]) c.failed = true;
        }
    }
}

struct FamilyResult {
    std::vector<ScoreCell> row;
    std::optional<OverallPerformance> overall;  // only when the row is complete
    VarianceSummary raw_summary;
    std::vector<std::size_t> failed_points;
};

// Train/evaluate/normalize one method across the family against a supplied
// anchor vector, then compute Definition-1 quantities when possible.
inline FamilyResult evaluate_family(Evaluator& evaluator, const Method& method,
                                    const MdpFamily& family, const std::string& task_id,
                                    const ImportanceDistribution& dist,
                                    const std::vector<std::uint64_t>& eval_seeds,
                                    const std::vector<double>& baseline_raw, int jobs = 1) {
    ScoreMatrix m = evaluator.evaluate_matrix({method}, family, task_id, eval_seeds, jobs);
    apply_normalization(m, baseline_raw);

    FamilyResult out;
    out.row.reserve(family.size());
    std::vector<double> raw_ok;
    for (std::size_t i = 0; i < family.size(); ++i) {
        const ScoreCell& c = m.cell(i, 0);
        out.row.push_back(c);
        if (c.failed)
            out.failed_points.push_back(i);
        else
            raw_ok.push_back(c.raw_mean);
    }
    out.raw_summary = summarize(raw_ok, out.failed_points.size());
    if (out.failed_points.empty()) out.overall = overall_performance(m, dist, method.id);
    return out;
}

// --- score interchange file -------------------------------------------------
//
// One row per (method, point, seed):
//   method  task  point_index  <tau...>  seed  raw  normalized  failed
// This file is both the persistence of the cache and the injection point for
// externally computed scores.

inline TextTable scores_table(const ScoreMatrix& m, const MdpFamily& family) {
    TextTable t;
    t.header = {"method", "task", "point_index"};
    for (const auto& f : family.space.features) t.header.push_back(f.name);
    t.header.insert(t.header.end(), {"seed", "raw", "normalized", "failed"});
    for (std::size_t r = 0; r < m.methods.size(); ++r) {
        for (std::size_t i = 0; i < m.family_size; ++i) {
            const ScoreCell& c = m.cell(i, r);
            if (!c.present) continue;
            for (const auto& [seed, raw] : c.per_seed) {
                std::vector<std::string> row = {m.methods[r], m.task_id, std::to_string(i)};
                for (double v : family.at(i).tau) row.push_back(fmt_double(v));
                row.push_back(std::to_string(seed));
                row.push_back(fmt_double(raw));
                row.push_back(fmt_double(c.normalized));
                row.push_back(c.failed ? "1" : "0");
                t.rows.push_back(std::move(row));
            }
        }
    }
    return t;
}

inline void save_scores(const ScoreMatrix& m, const MdpFamily& family,
                        const std::filesystem::path& path) {
    scores_table(m, family).save(path);
}

inline ScoreMatrix load_scores(const std::filesystem::path& path, std::size_t family_size) {
    const TextTable t = TextTable::load(path);
    const std::size_t c_method = t.column("method");
    const std::size_t c_task = t.column("task");
    const std::size_t c_point = t.column("point_index");
    const std::size_t c_seed = t.column("seed");
    const std::size_t c_raw = t.column("raw");
    const std::size_t c_norm = t.column("normalized");
    const std::size_t c_failed = t.column("failed");

    ScoreMatrix m;
    m.family_size = family_size;
    for (const auto& row : t.rows) {
        if (m.task_id.empty()) {
            m.task_id = row[c_task];
            m.direction = task_info(m.task_id).direction;
        } else if (m.task_id != row[c_task]) {
            throw std::runtime_error("score file mixes tasks");
        }
        const std::string& method = row[c_method];
        bool known = false;
        for (const auto& id : m.methods) known = known || id == method;
        if (!known) m.methods.push_back(method);
    }
    m.cells.resize(m.family_size * m.methods.size());
    for (const auto& row : t.rows) {
        const std::size_t i = static_cast<std::size_t>(parse_int(row[c_point]));
        if (i >= m.family_size) throw std::runtime_error("score file point index outside family");
        const std::size_t r = m.method_index(row[c_method]);
        ScoreCell& c = m.cell(i, r);
        c.present = true;
        c.per_seed.push_back({static_cast<std::uint64_t>(parse_int(row[c_seed])),
                              parse_double(row[c_raw])});
        c.normalized = parse_double(row[c_norm]);
        if (row[c_failed] == "1") c.failed = true;
    }
    for (std::size_t r = 0; r < m.methods.size(); ++r) {
        for (std::size_t i = 0; i < m.family_size; ++i) {
            ScoreCell& c = m.cell(i, r);
            if (!c.present) continue;
            double total = 0.0;
            bool bad = false;
            for (const auto& [seed, raw] : c.per_seed) {
                if (!std::isfinite(raw)) bad = true;
                total += raw;
            }
            c.raw_mean = bad ? std::numeric_limits<double>::quiet_NaN()
                             : total / static_cast<double>(c.per_seed.size());
            if (bad) c.failed = true;
        }
    }
    return m;
}

// Prefills an evaluator cache from a score file so later evaluations are
// pure cache hits (reruns and external score injection).
inline void prime_cache(ScoreCache& cache, const ScoreMatrix& m) {
    for (std::size_t r = 0; r < m.methods.size(); ++r)
        for (std::size_t i = 0; i < m.family_size; ++i)
            for (const auto& [seed, raw] : m.cell(i, r).per_seed)
                cache.insert(m.methods[r], m.task_id, i, seed, raw);
}

}  // namespace fambench
