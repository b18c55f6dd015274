#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fambench/envs.hpp"
#include "fambench/rng.hpp"
#include "fambench/text.hpp"

namespace fambench {

enum class PolicyKind { linear, tabular, fixed };

inline std::string to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::linear: return "linear";
        case PolicyKind::tabular: return "tabular";
        case PolicyKind::fixed: return "fixed";
    }
    throw std::logic_error("unreachable");
}

// A controller. Linear policies act on the raw observation (discrete tasks
// threshold the dot product, box tasks clip it); tabular policies hold a
// flattened Q table over a uniform discretization; fixed policies are the
// hand-written per-task baselines.
struct Policy {
    PolicyKind kind = PolicyKind::fixed;
    std::string task_id;
    ActionSpace action_space;

    std::vector<double> parameters;  // linear weights, or flattened Q table

    // Tabular discretization: per-dimension bin counts and value ranges.
    std::vector<int> bins;
    std::vector<std::pair<double, double>> bin_ranges;

    double act(const std::vector<double>& obs) const;
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline int bin_of(double v, double lo, double hi, int n) {
    if (v <= lo) return 0;
    if (v >= hi) return n - 1;
    const int b = static_cast<int>((v - lo) / (hi - lo) * n);
    return std::min(b, n - 1);
}

inline std::size_t tabular_state(const Policy& p, const std::vector<double>& obs) {
    std::size_t state = 0;
    for (std::size_t d = 0; d < p.bins.size(); ++d) {
        state = state * static_cast<std::size_t>(p.bins[d]) +
                static_cast<std::size_t>(bin_of(obs[d], p.bin_ranges[d].first,
                                                p.bin_ranges[d].second, p.bins[d]));
    }
    return state;
}

inline double sign_or(double x, double at_zero) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : at_zero); }

// cartpole baseline: push toward the lean, action 1 = push right.
inline double cartpole_baseline(const std::vector<double>& obs) {
    return obs[2] + 0.5 * obs[3] > 0 ? 1.0 : 0.0;
}

// pendulum baseline: bang-bang energy shaping. Damp when the bob is in the
// upper half, pump when in the lower half; torque sticks at +max on the
// measure-zero deadlock where thdot * cos(theta) == 0.
inline double pendulum_baseline(const std::vector<double>& obs) {
    const double cos_t = obs[0];
    const double thdot = obs[2];
    const double p = thdot * cos_t;
    if (p == 0.0) return pendulum::kMaxTorque;
    return -pendulum::kMaxTorque * sign_or(p, 1.0);
}

// mountain car baseline: bang-bang along the velocity.
inline double mountain_car_baseline(const std::vector<double>& obs) {
    return sign_or(obs[1], 1.0);
}

}  // namespace detail

inline double Policy::act(const std::vector<double>& obs) const {
    switch (kind) {
        case PolicyKind::linear: {
            if (parameters.size() != obs.size())
                throw std::invalid_argument("linear policy arity mismatch");
            const double v = detail::dot(parameters, obs);
            if (action_space.kind == ActionSpace::Kind::discrete) return v > 0 ? 1.0 : 0.0;
            return std::clamp(v, action_space.lo, action_space.hi);
        }
        case PolicyKind::tabular: {
            const std::size_t state = detail::tabular_state(*this, obs);
            const std::size_t n_actions = static_cast<std::size_t>(action_space.count);
            std::size_t best = 0;
            for (std::size_t a = 1; a < n_actions; ++a)
                if (parameters[state * n_actions + a] > parameters[state * n_actions + best])
                    best = a;
            return static_cast<double>(best);
        }
        case PolicyKind::fixed: {
            if (task_id == "cartpole") return detail::cartpole_baseline(obs);
            if (task_id == "pendulum") return detail::pendulum_baseline(obs);
            if (task_id == "mountain_car_continuous") return detail::mountain_car_baseline(obs);
            throw std::invalid_argument("no fixed baseline for task '" + task_id + "'");
        }
    }
    throw std::logic_error("unreachable");
}

// Number of models that can be trained is accounted elsewhere; this is the
// per-training effort. One completed training counts as one budget unit no
// matter how many episodes it used.
struct TrainBudget {
    int max_episodes = 2000;
    int eval_episodes_per_candidate = 3;
    std::uint64_t rng_seed = 0;
};

inline void validate(const TrainBudget& b) {
    if (b.max_episodes < 1) throw std::invalid_argument("max_episodes must be positive");
    if (b.eval_episodes_per_candidate < 1)
        throw std::invalid_argument("eval_episodes_per_candidate must be positive");
}

struct TrainResult {
    Policy policy;
    // (episodes consumed so far, trainer's best-so-far mean raw return).
    std::vector<std::pair<int, double>> train_curve;
    int episodes_used = 0;
};

namespace detail {

inline bool better(MetricDirection dir, double a, double b) {
    if (std::isnan(b)) return !std::isnan(a);
    if (std::isnan(a)) return false;
    return dir == MetricDirection::higher_better ? a > b : a < b;
}

// Candidate scoring with common random numbers: every candidate inside one
// training run sees the same episode seeds, so comparisons are noise-free.
struct CandidateScorer {
    const EnvInstance& env;
    std::vector<std::uint64_t> seeds;

    CandidateScorer(const EnvInstance& e, const TrainBudget& b, int episodes_per_candidate)
        : env(e) {
        seeds.reserve(episodes_per_candidate);
        for (int k = 0; k < episodes_per_candidate; ++k)
            seeds.push_back(mix_seed(b.rng_seed, 0xe7a1u + static_cast<std::uint64_t>(k)));
    }

    double score(const Policy& p) const {
        double total = 0.0;
        for (std::uint64_t s : seeds)
            total += rollout(env, [&](const std::vector<double>& o) { return p.act(o); }, s).raw_return;
        return total / static_cast<double>(seeds.size());
    }
};

inline Policy make_linear(const EnvInstance& env, std::vector<double> w) {
    Policy p;
    p.kind = PolicyKind::linear;
    p.task_id = env.task_id;
    p.action_space = env.action_space;
    p.parameters = std::move(w);
    return p;
}

}  // namespace detail

// Hill-climbing random search over linear policy weights: perturb the
// incumbent with seeded Gaussian noise, keep improvements.
inline TrainResult train_random_search(const EnvInstance& env, const TrainBudget& budget,
                                       double step_size = 0.5) {
    validate(budget);
    const int dim = env.observation_dim;
    const int per_candidate = std::min(budget.eval_episodes_per_candidate, budget.max_episodes);
    detail::CandidateScorer scorer(env, budget, per_candidate);
    Rng rng(mix_seed(budget.rng_seed, hash_string("random_search")));

    std::vector<double> best(dim);
    for (double& w : best) w = rng.gaussian();
    Policy best_policy = detail::make_linear(env, best);
    double best_score = scorer.score(best_policy);
    int episodes = per_candidate;

    TrainResult out;
    out.train_curve.push_back({episodes, best_score});
    while (episodes + per_candidate <= budget.max_episodes) {
        std::vector<double> cand = best;
        for (double& w : cand) w += step_size * rng.gaussian();
        Policy cand_policy = detail::make_linear(env, cand);
        const double s = scorer.score(cand_policy);
        episodes += per_candidate;
        if (detail::better(env.metric_direction, s, best_score)) {
            best_score = s;
            best = std::move(cand);
            best_policy = std::move(cand_policy);
        }
        out.train_curve.push_back({episodes, best_score});
    }
    out.policy = std::move(best_policy);
    out.episodes_used = episodes;
    return out;
}

// Cross-entropy method over linear policy weights. The sampling distribution
// is refit to the elite fraction each generation; the returned policy is the
// best candidate ever scored.
inline TrainResult train_cem(const EnvInstance& env, const TrainBudget& budget, int population,
                             double elite_frac, double init_std = 1.0, double min_std = 0.05) {
    validate(budget);
    if (population < 2) throw std::invalid_argument("population must be at least 2");
    if (!(elite_frac > 0.0) || elite_frac > 1.0)
        throw std::invalid_argument("elite_frac must be inside (0, 1]");
    if (static_cast<double>(population) * elite_frac < 1.0)
        throw std::invalid_argument("population * elite_frac must be at least 1");
    const int n_elite = static_cast<int>(static_cast<double>(population) * elite_frac);

    const int dim = env.observation_dim;
    const int per_candidate = std::min(budget.eval_episodes_per_candidate, budget.max_episodes);
    detail::CandidateScorer scorer(env, budget, per_candidate);
    Rng rng(mix_seed(budget.rng_seed, hash_string("cem")));

    std::vector<double> mean(dim, 0.0), stddev(dim, init_std);
    Policy best_policy = detail::make_linear(env, mean);
    bool have_best = false;
    double best_score = 0.0;
    int episodes = 0;

    TrainResult out;
    std::vector<std::vector<double>> cand(population, std::vector<double>(dim));
    std::vector<double> score(population);
    double best_elite_mean = 0.0;
    bool have_curve = false;
    while (episodes + population * per_candidate <= budget.max_episodes) {
        for (int i = 0; i < population; ++i)
            for (int d = 0; d < dim; ++d) cand[i][d] = mean[d] + stddev[d] * rng.gaussian();
        for (int i = 0; i < population; ++i) {
            score[i] = scorer.score(detail::make_linear(env, cand[i]));
            episodes += per_candidate;
            if (!have_best || detail::better(env.metric_direction, score[i], best_score)) {
                have_best = true;
                best_score = score[i];
                best_policy = detail::make_linear(env, cand[i]);
            }
        }
        std::vector<int> order(population);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return detail::better(env.metric_direction, score[a], score[b]);
        });

        double elite_mean_score = 0.0;
        for (int d = 0; d < dim; ++d) {
            double m = 0.0;
            for (int e = 0; e < n_elite; ++e) m += cand[order[e]][d];
            m /= n_elite;
            double var = 0.0;
            for (int e = 0; e < n_elite; ++e) {
                const double dv = cand[order[e]][d] - m;
                var += dv * dv;
            }
            mean[d] = m;
            stddev[d] = std::max(min_std, std::sqrt(var / n_elite));
        }
        for (int e = 0; e < n_elite; ++e) elite_mean_score += score[order[e]];
        elite_mean_score /= n_elite;

        if (!have_curve || detail::better(env.metric_direction, elite_mean_score, best_elite_mean)) {
            best_elite_mean = elite_mean_score;
            have_curve = true;
        }
        out.train_curve.push_back({episodes, best_elite_mean});
    }
    if (out.train_curve.empty()) {
        // Budget too small for a single generation: score the initial mean.
        best_score = scorer.score(best_policy);
        episodes = per_candidate;
        out.train_curve.push_back({episodes, best_score});
    }
    out.policy = std::move(best_policy);
    out.episodes_used = episodes;
    return out;
}

struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.05;
    double decay_fraction = 0.8;  // linear decay over this share of episodes

    double at(int episode, int total_episodes) const {
        const double horizon = decay_fraction * static_cast<double>(total_episodes);
        if (horizon <= 0.0) return end;
        const double t = std::min(1.0, static_cast<double>(episode) / horizon);
        return start + (end - start) * t;
    }
};

struct TabularQConfig {
    std::vector<int> bins;
    double alpha = 0.1;
    double gamma = 0.99;
    EpsilonSchedule epsilon;
    // Discretization box per observation dimension; defaulted per task when
    // empty (cartpole only discrete built-in).
    std::vector<std::pair<double, double>> ranges;
};

inline std::vector<std::pair<double, double>> default_tabular_ranges(const std::string& task_id) {
    if (task_id == "cartpole")
        return {{-cartpole::kXLimit, cartpole::kXLimit},
                {-3.0, 3.0},
                {-cartpole::kThetaLimit, cartpole::kThetaLimit},
                {-3.5, 3.5}};
    throw std::invalid_argument("no default discretization ranges for task '" + task_id + "'");
}

// Epsilon-greedy tabular Q-learning over a uniformly discretized observation
// box. Discrete-action tasks only.
inline TrainResult train_tabular_q(const EnvInstance& env, const TrainBudget& budget,
                                   TabularQConfig cfg) {
    validate(budget);
    if (env.action_space.kind != ActionSpace::Kind::discrete)
        throw std::invalid_argument("tabular Q-learning requires a discrete action space");
    if (cfg.bins.empty()) throw std::invalid_argument("tabular Q-learning needs bin counts");
    if (static_cast<int>(cfg.bins.size()) != env.observation_dim)
        throw std::invalid_argument("bin count arity must match the observation");
    for (int b : cfg.bins)
        if (b < 1) throw std::invalid_argument("bins must be at least 1 per dimension");
    if (cfg.ranges.empty()) cfg.ranges = default_tabular_ranges(env.task_id);
    if (cfg.ranges.size() != cfg.bins.size())
        throw std::invalid_argument("discretization ranges arity must match bins");

    Policy q;
    q.kind = PolicyKind::tabular;
    q.task_id = env.task_id;
    q.action_space = env.action_space;
    q.bins = cfg.bins;
    q.bin_ranges = cfg.ranges;
    std::size_t states = 1;
    for (int b : cfg.bins) states *= static_cast<std::size_t>(b);
    const std::size_t n_actions = static_cast<std::size_t>(env.action_space.count);
    q.parameters.assign(states * n_actions, 0.0);

    Rng explore(mix_seed(budget.rng_seed, hash_string("tabular_q")));
    TrainResult out;
    double window_sum = 0.0;
    int window_n = 0;
    const int window = 100;
    for (int ep = 0; ep < budget.max_episodes; ++ep) {
        const double eps = cfg.epsilon.at(ep, budget.max_episodes);
        EnvState state = reset(env, mix_seed(budget.rng_seed, 0x9000u + static_cast<std::uint64_t>(ep)));
        double ep_return = 0.0;
        while (!state.done()) {
            const std::size_t s = detail::tabular_state(q, state.observation);
            std::size_t a;
            if (explore.uniform() < eps) {
                a = explore.below(n_actions);
            } else {
                a = 0;
                for (std::size_t k = 1; k < n_actions; ++k)
                    if (q.parameters[s * n_actions + k] > q.parameters[s * n_actions + a]) a = k;
            }
            StepResult r = step(env, state, static_cast<double>(a));
            ep_return += r.reward;
            const std::size_t s2 = detail::tabular_state(q, r.state.observation);
            double target = r.reward;
            if (!r.state.terminated && cfg.gamma != 0.0) {
                double best_next = q.parameters[s2 * n_actions];
                for (std::size_t k = 1; k < n_actions; ++k)
                    best_next = std::max(best_next, q.parameters[s2 * n_actions + k]);
                target += cfg.gamma * best_next;
            }
            q.parameters[s * n_actions + a] += cfg.alpha * (target - q.parameters[s * n_actions + a]);
            state = std::move(r.state);
        }
        window_sum += ep_return;
        if (++window_n == window || ep + 1 == budget.max_episodes) {
            out.train_curve.push_back({ep + 1, window_sum / window_n});
            window_sum = 0.0;
            window_n = 0;
        }
    }
    out.policy = std::move(q);
    out.episodes_used = budget.max_episodes;
    return out;
}

// Parameter-free hand-written controller; the normalization anchor for the
// tasks without an analytic score ceiling. Consumes zero training budget.
inline Policy fixed_baseline(const std::string& task_id) {
    const TaskInfo& info = task_info(task_id);
    Policy p;
    p.kind = PolicyKind::fixed;
    p.task_id = task_id;
    p.action_space = info.action_space;
    return p;
}

// --- plain-text parameter dumps --------------------------------------------

inline std::string policy_dump(const Policy& p) {
    std::ostringstream os;
    os << "kind\t" << to_string(p.kind) << '\n';
    os << "task\t" << p.task_id << '\n';
    if (p.kind == PolicyKind::tabular) {
        os << "bins";
        for (int b : p.bins) os << '\t' << b;
        os << '\n';
        os << "ranges";
        for (const auto& [lo, hi] : p.bin_ranges) os << '\t' << fmt_double(lo) << '\t' << fmt_double(hi);
        os << '\n';
    }
    os << "parameters";
    for (double v : p.parameters) os << '\t' << fmt_double(v);
    os << '\n';
    return os.str();
}

inline void save_policy(const std::filesystem::path& path, const Policy& p) {
    write_text_file(path, policy_dump(p));
}

}  // namespace fambench
