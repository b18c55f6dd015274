#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fambench/distribution.hpp"
#include "fambench/family.hpp"
#include "fambench/rng.hpp"

namespace fambench {

struct ActionSpace {
    enum class Kind { discrete, box };
    Kind kind = Kind::discrete;
    int count = 0;       // discrete
    double lo = 0.0;     // box
    double hi = 0.0;

    bool contains(double a) const {
        if (kind == Kind::discrete) {
            const double r = std::round(a);
            return std::isfinite(a) && r == a && r >= 0.0 && r < count;
        }
        return std::isfinite(a) && a >= lo && a <= hi;
    }
};

struct EnvState {
    std::vector<double> observation;
    // Raw physics state; equals the observation except for pendulum where
    // the observation is (cos th, sin th, thdot) over internal (th, thdot).
    std::vector<double> internal;
    int step_count = 0;
    bool terminated = false;
    bool truncated = false;

    bool done() const { return terminated || truncated; }
};

// Immutable per-point configuration: dynamics constants come from tau.
struct EnvInstance {
    std::string task_id;
    std::vector<double> tau;
    int horizon = 1;
    MetricDirection metric_direction = MetricDirection::higher_better;
    ActionSpace action_space;
    int observation_dim = 0;
};

struct EpisodeResult {
    double raw_return = 0.0;
    int steps_used = 0;
    std::uint64_t seed = 0;
};

inline double wrap_angle(double x) {
    // Map onto [-pi, pi).
    constexpr double kPi = 3.14159265358979323846;
    double y = std::fmod(x + kPi, 2.0 * kPi);
    if (y < 0) y += 2.0 * kPi;
    return y - kPi;
}

// --- cartpole: pole balance, discrete push left/right ---------------------
// tau = (pole_length, cart_mass, pole_mass, force_mag, gravity)
namespace cartpole {

constexpr double kDt = 0.02;
constexpr int kHorizon = 500;
constexpr double kXLimit = 2.4;
constexpr double kThetaLimit = 12.0 * 3.14159265358979323846 / 180.0;
constexpr double kMaxReturn = 500.0;  // horizon * (+1 per surviving step)

struct Params {
    double pole_length;  // pivot-to-center distance in the pole-balance ODE
    double cart_mass;
    double pole_mass;
    double force_mag;
    double gravity;

    static Params from_tau(const std::vector<double>& tau) {
        return {tau[0], tau[1], tau[2], tau[3], tau[4]};
    }
};

// State (x, xdot, theta, thetadot); explicit Euler with dt.
inline std::array<double, 4> integrate(const Params& p, const std::array<double, 4>& s,
                                       double force, double dt) {
    const double cos_t = std::cos(s[2]);
    const double sin_t = std::sin(s[2]);
    const double total_mass = p.cart_mass + p.pole_mass;
    const double pml = p.pole_mass * p.pole_length;
    const double temp = (force + pml * s[3] * s[3] * sin_t) / total_mass;
    const double theta_acc =
        (p.gravity * sin_t - cos_t * temp) /
        (p.pole_length * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total_mass));
    const double x_acc = temp - pml * theta_acc * cos_t / total_mass;
    return {s[0] + dt * s[1], s[1] + dt * x_acc, s[2] + dt * s[3], s[3] + dt * theta_acc};
}

inline bool failed(const std::array<double, 4>& s) {
    return std::abs(s[0]) > kXLimit || std::abs(s[2]) > kThetaLimit;
}

}  // namespace cartpole

// --- pendulum: torque-limited upright stabilization, per-step cost --------
// tau = (mass, length, gravity)
namespace pendulum {

constexpr double kDt = 0.05;
constexpr int kHorizon = 200;
constexpr double kMaxTorque = 2.0;
constexpr double kMaxSpeed = 8.0;

struct Params {
    double mass;
    double length;
    double gravity;

    static Params from_tau(const std::vector<double>& tau) { return {tau[0], tau[1], tau[2]}; }
};

// State (theta, thetadot) with theta = 0 upright; semi-implicit Euler and a
// thetadot clip at +-kMaxSpeed.
inline std::array<double, 2> integrate(const Params& p, const std::array<double, 2>& s, double u,
                                       double dt) {
    const double acc =
        3.0 * p.gravity / (2.0 * p.length) * std::sin(s[0]) + 3.0 / (p.mass * p.length * p.length) * u;
    double thdot = s[1] + acc * dt;
    thdot = std::clamp(thdot, -kMaxSpeed, kMaxSpeed);
    return {s[0] + thdot * dt, thdot};
}

// Cost of applying u in state s (evaluated before the transition).
inline double step_cost(const std::array<double, 2>& s, double u) {
    const double a = wrap_angle(s[0]);
    return a * a + 0.1 * s[1] * s[1] + 0.001 * u * u;
}

}  // namespace pendulum

// --- continuous mountain car ----------------------------------------------
// tau = (max_speed, goal_position, power)
namespace mountain_car {

constexpr double kDt = 1.0;  // per-step update; no separate integrator step size
constexpr int kHorizon = 999;
constexpr double kMinPosition = -1.2;
constexpr double kMaxPosition = 0.6;
constexpr double kGoalReward = 100.0;

struct Params {
    double max_speed;
    double goal_position;
    double power;

    static Params from_tau(const std::vector<double>& tau) { return {tau[0], tau[1], tau[2]}; }
};

// State (x, v).
inline std::array<double, 2> integrate(const Params& p, const std::array<double, 2>& s, double a) {
    double v = s[1] + p.power * a - 0.0025 * std::cos(3.0 * s[0]);
    v = std::clamp(v, -p.max_speed, p.max_speed);
    double x = s[0] + v;
    x = std::clamp(x, kMinPosition, kMaxPosition);
    if (x == kMinPosition && v < 0.0) v = 0.0;
    return {x, v};
}

inline bool reached_goal(const Params& p, const std::array<double, 2>& s) {
    return s[0] >= p.goal_position;
}

}  // namespace mountain_car

// --- task registry ---------------------------------------------------------

struct TaskInfo {
    std::string task_id;
    ContextSpace default_space;
    MetricDirection direction = MetricDirection::higher_better;
    int horizon = 1;
    ActionSpace action_space;
    int observation_dim = 0;
    // Normalization anchor: when set, scores divide by this constant instead
    // of the baseline controller's raw score (cartpole's analytic ceiling).
    double score_ceiling = 0.0;
    bool has_ceiling = false;
};

inline const std::map<std::string, TaskInfo>& task_registry() {
    static const std::map<std::string, TaskInfo> registry = [] {
        std::map<std::string, TaskInfo> r;

        TaskInfo cp;
        cp.task_id = "cartpole";
        cp.default_space.task_id = "cartpole";
        cp.default_space.features = {
            {"pole_length", {0.05, 0.5, 3.0, 5.0}},
            {"cart_mass", {0.1, 1.0, 6.0, 10.0}},
            {"pole_mass", {0.01, 0.1, 0.5, 1.0}},
            {"force_mag", {1.0, 50.0, 100.0}},
            {"gravity", {0.1, 9.8, 19.6}},
        };
        cp.direction = MetricDirection::higher_better;
        cp.horizon = cartpole::kHorizon;
        cp.action_space = {ActionSpace::Kind::discrete, 2, 0.0, 0.0};
        cp.observation_dim = 4;
        cp.score_ceiling = cartpole::kMaxReturn;
        cp.has_ceiling = true;
        r[cp.task_id] = cp;

        TaskInfo pd;
        pd.task_id = "pendulum";
        pd.default_space.task_id = "pendulum";
        pd.default_space.features = {
            {"mass", {0.4, 1.0, 1.5, 2.0, 3.0, 4.0}},
            {"length", {0.5, 1.0, 2.0, 4.0, 7.0, 10.0}},
            {"gravity", {2.0, 5.0, 10.0, 12.0, 15.0}},
        };
        pd.direction = MetricDirection::lower_better;
        pd.horizon = pendulum::kHorizon;
        pd.action_space = {ActionSpace::Kind::box, 0, -pendulum::kMaxTorque, pendulum::kMaxTorque};
        pd.observation_dim = 3;
        r[pd.task_id] = pd;

        TaskInfo mc;
        mc.task_id = "mountain_car_continuous";
        mc.default_space.task_id = "mountain_car_continuous";
        // Grids are a harness choice; the task's context features are
        // max speed, goal position and power.
        mc.default_space.features = {
            {"max_speed", {0.05, 0.07, 0.09}},
            {"goal_position", {0.45, 0.5, 0.55}},
            {"power", {0.0010, 0.0015, 0.0020}},
        };
        mc.direction = MetricDirection::higher_better;
        mc.horizon = mountain_car::kHorizon;
        mc.action_space = {ActionSpace::Kind::box, 0, -1.0, 1.0};
        mc.observation_dim = 2;
        r[mc.task_id] = mc;

        return r;
    }();
    return registry;
}

inline const TaskInfo& task_info(const std::string& task_id) {
    const auto& r = task_registry();
    auto it = r.find(task_id);
    if (it == r.end()) throw std::invalid_argument("unknown task '" + task_id + "'");
    return it->second;
}

inline EnvInstance make_env(const std::string& task_id, const PointMdp& point) {
    const TaskInfo& info = task_info(task_id);
    if (point.tau.size() != info.default_space.dimension())
        throw std::invalid_argument("tau arity mismatch for task '" + task_id + "': expected " +
                                    std::to_string(info.default_space.dimension()) + ", got " +
                                    std::to_string(point.tau.size()));
    for (double v : point.tau)
        if (!std::isfinite(v)) throw std::invalid_argument("tau component must be finite");
    EnvInstance env;
    env.task_id = task_id;
    env.tau = point.tau;
    env.horizon = info.horizon;
    env.metric_direction = info.direction;
    env.action_space = info.action_space;
    env.observation_dim = info.observation_dim;
    return env;
}

namespace detail {

inline EnvState observe(const EnvInstance& env, std::vector<double> internal, int step_count,
                        bool terminated, bool truncated) {
    EnvState s;
    if (env.task_id == "pendulum") {
        s.observation = {std::cos(internal[0]), std::sin(internal[0]), internal[1]};
    } else {
        s.observation = internal;
    }
    s.internal = std::move(internal);
    s.step_count = step_count;
    s.terminated = terminated;
    s.truncated = truncated;
    return s;
}

}  // namespace detail

inline EnvState reset(const EnvInstance& env, std::uint64_t seed) {
    Rng rng(mix_seed(seed, hash_string(env.task_id)));
    std::vector<double> internal;
    if (env.task_id == "cartpole") {
        internal = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05),
                    rng.uniform(-0.05, 0.05)};
    } else if (env.task_id == "pendulum") {
        internal = {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)};
    } else if (env.task_id == "mountain_car_continuous") {
        internal = {rng.uniform(-0.6, -0.4), 0.0};
    } else {
        throw std::invalid_argument("unknown task '" + env.task_id + "'");
    }
    return detail::observe(env, std::move(internal), 0, false, false);
}

struct StepResult {
    EnvState state;
    double reward = 0.0;
};

inline StepResult step(const EnvInstance& env, const EnvState& state, double action) {
    if (state.done())
        throw std::logic_error("step() on a finished episode is a contract violation");
    if (!env.action_space.contains(action))
        throw std::invalid_argument("action outside the task's action space");

    const int steps = state.step_count + 1;
    if (env.task_id == "cartpole") {
        const auto p = cartpole::Params::from_tau(env.tau);
        const double force = action == 1.0 ? p.force_mag : -p.force_mag;
        std::array<double, 4> s{state.internal[0], state.internal[1], state.internal[2],
                                state.internal[3]};
        s = cartpole::integrate(p, s, force, cartpole::kDt);
        const bool terminated = cartpole::failed(s);
        const bool truncated = !terminated && steps >= env.horizon;
        return {detail::observe(env, {s[0], s[1], s[2], s[3]}, steps, terminated, truncated), 1.0};
    }
    if (env.task_id == "pendulum") {
        const auto p = pendulum::Params::from_tau(env.tau);
        std::array<double, 2> s{state.internal[0], state.internal[1]};
        const double cost = pendulum::step_cost(s, action);
        s = pendulum::integrate(p, s, action, pendulum::kDt);
        const bool truncated = steps >= env.horizon;
        return {detail::observe(env, {s[0], s[1]}, steps, false, truncated), cost};
    }
    if (env.task_id == "mountain_car_continuous") {
        const auto p = mountain_car::Params::from_tau(env.tau);
        std::array<double, 2> s{state.internal[0], state.internal[1]};
        s = mountain_car::integrate(p, s, action);
        const bool terminated = mountain_car::reached_goal(p, s);
        const bool truncated = !terminated && steps >= env.horizon;
        const double reward = (terminated ? mountain_car::kGoalReward : 0.0) - 0.1 * action * action;
        return {detail::observe(env, {s[0], s[1]}, steps, terminated, truncated), reward};
    }
    throw std::invalid_argument("unknown task '" + env.task_id + "'");
}

// Runs one full episode. raw_return is the plain sum of per-step rewards or
// costs; metric_direction says how to read it.
template <typename PolicyFn>
EpisodeResult rollout(const EnvInstance& env, PolicyFn&& policy, std::uint64_t seed) {
    EnvState state = reset(env, seed);
    double total = 0.0;
    while (!state.done()) {
        const double action = policy(state.observation);
        StepResult r = step(env, state, action);
        total += r.reward;
        state = std::move(r.state);
    }
    return {total, state.step_count, seed};
}

}  // namespace fambench
