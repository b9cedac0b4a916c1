#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prefforge/envsim.hpp"
#include "prefforge/segment_view.hpp"

namespace prefforge::policyeval {

// Uniform grid over the clamped Mountain Car state box with a fixed action set.
struct DiscretizedSpace {
  int position_bins = 64;
  int velocity_bins = 64;
  std::vector<double> actions{-1.0, -0.5, 0.0, 0.5, 1.0};

  void validate() const;
  int cell_count() const { return position_bins * velocity_bins; }
  int action_count() const { return static_cast<int>(actions.size()); }
  int position_bin(double position) const;
  int velocity_bin(double velocity) const;
  int cell(const envsim::CarState& state) const;
  envsim::CarState cell_center(int cell) const;
};

struct QTable {
  int states = 0;
  int actions = 0;
  std::vector<double> values;

  QTable() = default;
  QTable(int s, int a) : states(s), actions(a), values(static_cast<std::size_t>(s) * a, 0.0) {}
  double& at(int s, int a) { return values[static_cast<std::size_t>(s) * actions + a]; }
  double at(int s, int a) const { return values[static_cast<std::size_t>(s) * actions + a]; }
  int greedy(int s) const;
  double max_value(int s) const { return at(s, greedy(s)); }
};

struct QConfig {
  int episodes = 3000;
  double gamma = 0.99;
  double alpha = 0.1;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double anneal_fraction = 0.5;  // epsilon reaches epsilon_end after this share of episodes

  void validate() const;
  double epsilon(int episode) const;
};

// A tabular control problem for one-step Q-learning.
template <class T>
concept TabularTask = requires(T task, const T ctask, typename T::State s, int a, std::mt19937_64& rng) {
  { task.reset(rng) } -> std::same_as<typename T::State>;
  { ctask.cell(s) } -> std::convertible_to<int>;
  { ctask.step(s, a) } -> std::same_as<std::pair<typename T::State, bool>>;
  { ctask.reward(s, a) } -> std::convertible_to<double>;
  { ctask.max_steps() } -> std::convertible_to<int>;
};

class QDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One-step TD control with epsilon-greedy exploration. Episodes end at a
// terminal state (no bootstrap) or at max_steps (bootstrapped truncation).
template <TabularTask Task>
void q_learn(QTable& q, Task& task, const QConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> random_action(0, q.actions - 1);
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const double eps = cfg.epsilon(ep);
    auto state = task.reset(rng);
    for (int t = 0; t < task.max_steps(); ++t) {
      const int s = task.cell(state);
      const int a = coin(rng) < eps ? random_action(rng) : q.greedy(s);
      const double r = task.reward(state, a);
      auto [next, terminal] = task.step(state, a);
      const double target = terminal ? r : r + cfg.gamma * q.max_value(task.cell(next));
      double& entry = q.at(s, a);
      entry += cfg.alpha * (target - entry);
      if (!std::isfinite(entry)) throw QDivergence("non-finite Q value at cell " + std::to_string(s));
      if (terminal) break;
      state = next;
    }
  }
}

// Learned reward per (cell, action).
struct RewardTable {
  int cells = 0;
  int actions = 0;
  std::vector<double> values;
  double at(int cell, int action) const { return values[static_cast<std::size_t>(cell) * actions + action]; }
};

enum class RewardOffset {
  none,      // raw learned reward
  max_zero,  // shift so the table maximum is 0
};

RewardOffset parse_reward_offset(const std::string& s);
std::string to_string(RewardOffset o);

using LearnedReward = std::function<double(const Frame&, std::span<const double>)>;

// Evaluates the learned reward on render(cell center) for every cell/action.
// Rendering ignores velocity, so frames are shared along the velocity axis.
RewardTable build_reward_table(const LearnedReward& reward, const envsim::EnvConfig& env,
                               const DiscretizedSpace& space, RewardOffset offset);

// Mountain Car on the discretized grid with rewards looked up per (cell, action).
class MountainCarTask {
 public:
  using State = envsim::CarState;
  MountainCarTask(const envsim::EnvConfig& env, const DiscretizedSpace& space, const RewardTable& rewards)
      : env_(env), space_(space), rewards_(rewards) {}

  State reset(std::mt19937_64& rng) const;
  int cell(const State& s) const { return space_.cell(s); }
  std::pair<State, bool> step(const State& s, int a) const;
  double reward(const State& s, int a) const { return rewards_.at(space_.cell(s), a); }
  int max_steps() const { return env_.max_steps; }

 private:
  const envsim::EnvConfig& env_;
  const DiscretizedSpace& space_;
  const RewardTable& rewards_;
};

// Fresh table trained on the learned reward table.
QTable q_train(const envsim::EnvConfig& env, const DiscretizedSpace& space, const RewardTable& rewards,
               const QConfig& cfg, std::uint64_t seed);

std::function<envsim::Action(const envsim::CarState&)> greedy_policy(const QTable& q, const DiscretizedSpace& space);

// Epsilon-greedy behaviour policy; the generator must outlive the policy.
std::function<envsim::Action(const envsim::CarState&)> epsilon_greedy_policy(const QTable& q,
                                                                            const DiscretizedSpace& space,
                                                                            double epsilon, std::mt19937_64& rng);

struct EvalReport {
  std::uint64_t epoch = 0;
  std::uint64_t feedbacks_used = 0;
  double mean_true_return = 0.0;
  double success_rate = 0.0;
  double pearson_r = 0.0;
  bool pearson_degenerate = false;
  double heldout_pref_accuracy = 0.0;
  std::string variant;
};

struct RolloutScore {
  double mean_true_return = 0.0;
  double success_rate = 0.0;
};

// Greedy rollouts from seeded start states, scored on the true reward.
RolloutScore evaluate(const QTable& q, const envsim::EnvConfig& env, const DiscretizedSpace& space, int episodes,
                      std::uint64_t seed);

struct Correlation {
  double r = 0.0;
  bool degenerate = false;
};

// Pearson correlation; zero variance on either side gives r = 0, degenerate.
Correlation pearson(std::span<const double> x, std::span<const double> y);

// Learned vs true reward over every (cell center, action) of the grid.
Correlation reward_correlation(const LearnedReward& reward, const envsim::EnvConfig& env,
                               const DiscretizedSpace& space);

using SegmentReturn = std::function<double(const SegmentView&)>;

// Fraction of held-out pairs whose predicted-return argmax matches the label.
double heldout_accuracy(const SegmentReturn& predicted_return, const PreferenceSource& heldout);

// CSV: epoch,feedbacks_used,mean_true_return,success_rate,pearson_r,heldout_pref_accuracy,variant
void emit_curves(std::span<const EvalReport> reports, const std::filesystem::path& path);
std::string curves_header();
std::string curves_row(const EvalReport& r);

}  // namespace prefforge::policyeval
