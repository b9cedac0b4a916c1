#include "prefforge/policyeval.hpp"

#include <fstream>
#include <numeric>

namespace prefforge::policyeval {

using envsim::CarState;

void DiscretizedSpace::validate() const {
  if (position_bins < 1 || velocity_bins < 1) throw std::invalid_argument("eval: bin counts must be >= 1");
  if (actions.empty()) throw std::invalid_argument("eval: action set must not be empty");
}

int DiscretizedSpace::position_bin(double position) const {
  const double t = (position - envsim::kMinPosition) / (envsim::kMaxPosition - envsim::kMinPosition);
  return std::clamp(static_cast<int>(std::floor(t * position_bins)), 0, position_bins - 1);
}

int DiscretizedSpace::velocity_bin(double velocity) const {
  const double t = (velocity + envsim::kMaxSpeed) / (2.0 * envsim::kMaxSpeed);
  return std::clamp(static_cast<int>(std::floor(t * velocity_bins)), 0, velocity_bins - 1);
}

int DiscretizedSpace::cell(const CarState& state) const {
  return position_bin(state.position) * velocity_bins + velocity_bin(state.velocity);
}

CarState DiscretizedSpace::cell_center(int cell) const {
  const int p = cell / velocity_bins;
  const int v = cell % velocity_bins;
  const double pw = (envsim::kMaxPosition - envsim::kMinPosition) / position_bins;
  const double vw = 2.0 * envsim::kMaxSpeed / velocity_bins;
  return {envsim::kMinPosition + (p + 0.5) * pw, -envsim::kMaxSpeed + (v + 0.5) * vw};
}

int QTable::greedy(int s) const {
  const double* row = values.data() + static_cast<std::size_t>(s) * actions;
  return static_cast<int>(std::max_element(row, row + actions) - row);
}

void QConfig::validate() const {
  if (episodes < 0) throw std::invalid_argument("eval.q_episodes must be >= 0");
  if (gamma < 0 || gamma > 1) throw std::invalid_argument("eval.gamma must lie in [0, 1]");
  if (!(alpha > 0) || alpha > 1) throw std::invalid_argument("eval.alpha must lie in (0, 1]");
  if (epsilon_start < 0 || epsilon_start > 1 || epsilon_end < 0 || epsilon_end > 1) {
    throw std::invalid_argument("eval: epsilon values must lie in [0, 1]");
  }
}

double QConfig::epsilon(int episode) const {
  const double horizon = anneal_fraction * episodes;
  if (horizon <= 0 || episode >= horizon) return epsilon_end;
  return epsilon_start + (epsilon_end - epsilon_start) * (episode / horizon);
}

RewardOffset parse_reward_offset(const std::string& s) {
  if (s == "none") return RewardOffset::none;
  if (s == "max_zero") return RewardOffset::max_zero;
  throw std::invalid_argument("unknown reward offset '" + s + "'");
}

std::string to_string(RewardOffset o) { return o == RewardOffset::none ? "none" : "max_zero"; }

RewardTable build_reward_table(const LearnedReward& reward, const envsim::EnvConfig& env,
                               const DiscretizedSpace& space, RewardOffset offset) {
  RewardTable table{space.cell_count(), space.action_count(), {}};
  table.values.resize(static_cast<std::size_t>(table.cells) * table.actions);
  std::vector<double> per_bin(static_cast<std::size_t>(space.position_bins) * table.actions);
  for (int p = 0; p < space.position_bins; ++p) {
    const Frame frame = envsim::render(space.cell_center(p * space.velocity_bins), env);
    for (int a = 0; a < table.actions; ++a) {
      const double action[1] = {space.actions[a]};
      per_bin[static_cast<std::size_t>(p) * table.actions + a] = reward(frame, action);
    }
  }
  for (int c = 0; c < table.cells; ++c) {
    const int p = c / space.velocity_bins;
    for (int a = 0; a < table.actions; ++a) {
      table.values[static_cast<std::size_t>(c) * table.actions + a] =
          per_bin[static_cast<std::size_t>(p) * table.actions + a];
    }
  }
  if (offset == RewardOffset::max_zero) {
    const double top = *std::max_element(table.values.begin(), table.values.end());
    for (double& v : table.values) v -= top;
  }
  return table;
}

CarState MountainCarTask::reset(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> dist(-0.6, -0.4);
  return {dist(rng), 0.0};
}

std::pair<CarState, bool> MountainCarTask::step(const CarState& s, int a) const {
  const CarState next = envsim::step(s, {space_.actions[a]}, env_);
  return {next, envsim::is_terminal(next, env_)};
}

QTable q_train(const envsim::EnvConfig& env, const DiscretizedSpace& space, const RewardTable& rewards,
               const QConfig& cfg, std::uint64_t seed) {
  QTable q(space.cell_count(), space.action_count());
  MountainCarTask task(env, space, rewards);
  q_learn(q, task, cfg, seed);
  return q;
}

std::function<envsim::Action(const CarState&)> greedy_policy(const QTable& q, const DiscretizedSpace& space) {
  return [&q, &space](const CarState& s) { return envsim::Action{space.actions[q.greedy(space.cell(s))]}; };
}

std::function<envsim::Action(const CarState&)> epsilon_greedy_policy(const QTable& q, const DiscretizedSpace& space,
                                                                     double epsilon, std::mt19937_64& rng) {
  return [&q, &space, epsilon, &rng](const CarState& s) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon) {
      std::uniform_int_distribution<int> pick(0, space.action_count() - 1);
      return envsim::Action{space.actions[pick(rng)]};
    }
    return envsim::Action{space.actions[q.greedy(space.cell(s))]};
  };
}

RolloutScore evaluate(const QTable& q, const envsim::EnvConfig& env, const DiscretizedSpace& space, int episodes,
                      std::uint64_t seed) {
  RolloutScore score;
  if (episodes <= 0) return score;
  envsim::StartStateSampler starts(seed);
  const auto policy = greedy_policy(q, space);
  int successes = 0;
  double total = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    const envsim::Rollout r = envsim::rollout(policy, starts.sample(), env, /*render_frames=*/false);
    total += std::accumulate(r.true_rewards.begin(), r.true_rewards.end(), 0.0);
    if (r.reached_goal) ++successes;
  }
  score.mean_true_return = total / episodes;
  score.success_rate = static_cast<double>(successes) / episodes;
  return score;
}

Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) throw std::invalid_argument("pearson: inputs must be non-empty and equal length");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return {0.0, true};
  return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

Correlation reward_correlation(const LearnedReward& reward, const envsim::EnvConfig& env,
                               const DiscretizedSpace& space) {
  const RewardTable learned = build_reward_table(reward, env, space, RewardOffset::none);
  std::vector<double> truth;
  truth.reserve(learned.values.size());
  for (int c = 0; c < space.cell_count(); ++c) {
    const CarState s = space.cell_center(c);
    for (int a = 0; a < space.action_count(); ++a) {
      const envsim::Action act{space.actions[a]};
      truth.push_back(envsim::true_reward(s, act, envsim::step(s, act, env), env));
    }
  }
  return pearson(learned.values, truth);
}

double heldout_accuracy(const SegmentReturn& predicted_return, const PreferenceSource& heldout) {
  const std::size_t n = heldout.pair_count();
  if (n == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const LabeledPair p = heldout.pair(i);
    const int predicted = predicted_return(p.first) >= predicted_return(p.second) ? 0 : 1;
    if (predicted == p.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

std::string curves_header() {
  return "epoch,feedbacks_used,mean_true_return,success_rate,pearson_r,heldout_pref_accuracy,variant";
}

std::string curves_row(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%llu,%llu,%.6f,%.6f,%.6f,%.6f,%s", static_cast<unsigned long long>(r.epoch),
                static_cast<unsigned long long>(r.feedbacks_used), r.mean_true_return, r.success_rate, r.pearson_r,
                r.heldout_pref_accuracy, r.variant.c_str());
  return buf;
}

void emit_curves(std::span<const EvalReport> reports, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write curves to " + path.string());
  out << curves_header() << '\n';
  for (const EvalReport& r : reports) out << curves_row(r) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace prefforge::policyeval
