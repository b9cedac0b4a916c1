#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "prefforge/policyeval.hpp"
#include "prefforge/prefstore.hpp"
#include "prefforge/reward_learn.hpp"
#include "prefforge/run_config.hpp"

namespace prefforge::service {

struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path resolved_config;
  std::filesystem::path curves;
  std::filesystem::path loss;
  std::filesystem::path checkpoint;
  std::filesystem::path store;

  static RunPaths under(const std::filesystem::path& dir);
};

struct TrainingHooks {
  std::function<void(const std::string&)> log;
  // Called once the store holds the held-out pool, before the first round.
  // Human mode uses it to attach the labeling API.
  std::function<void(prefstore::PreferenceStore&)> store_ready;
  // Human mode: how often the trainer checks for answered tickets.
  std::chrono::milliseconds human_poll{100};
};

struct TrainingResult {
  std::vector<policyeval::EvalReport> reports;
  rewardlearn::CheckpointMeta meta;
};

// Outer loop: collect rollouts, schedule and label queries, update the reward
// model, retrain Q on the learned reward and evaluate, once per round, until
// the feedback budget or the round cap runs out.
TrainingResult run_training(const config::RunConfig& cfg, const TrainingHooks& hooks = {});

struct EvalOutcome {
  policyeval::EvalReport report;
  policyeval::QTable q;
};

// Shared by training and `eval`, so both produce the same numbers for a given
// model and epoch.
EvalOutcome evaluate_model(const rewardlearn::RewardModel& model, const config::RunConfig& cfg,
                           const PreferenceSource& heldout, std::uint64_t epoch, std::uint64_t feedbacks);

// Loads a checkpoint (ShapeError if it does not fit the config) and the store's
// held-out pairs, then evaluates once.
policyeval::EvalReport run_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& store_dir,
                                const config::RunConfig& cfg);

// Behaviour policy: pump controller with a `noise` chance of a random grid action.
std::function<envsim::Action(const envsim::CarState&)> noisy_pump_policy(const policyeval::DiscretizedSpace& space,
                                                                        double noise, std::mt19937_64& rng);

prefstore::Episode to_episode(const envsim::Rollout& r);

}  // namespace prefforge::service
