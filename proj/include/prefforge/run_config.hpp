#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prefforge/augment.hpp"
#include "prefforge/envsim.hpp"
#include "prefforge/policyeval.hpp"
#include "prefforge/prefstore.hpp"
#include "prefforge/reward_learn.hpp"
#include "prefforge/toml_lite.hpp"

namespace prefforge::config {

inline constexpr int kSchemaVersion = 1;

enum class Variant { augmented, baseline };
enum class LabelMode { oracle, human };

std::string to_string(Variant v);
std::string to_string(LabelMode m);

struct StoreSettings {
  int segment_length = 50;
  std::size_t budget_cap = 1000;
  prefstore::QueryStrategy strategy = prefstore::QueryStrategy::uniform;
  int queries_per_round = 50;
  LabelMode label_mode = LabelMode::oracle;
  int heldout_episodes = 40;
  int heldout_pairs = 200;
};

// Rollout collection between query rounds. A share of the episodes follows a
// noisy pump controller so that goal-reaching segments exist before the
// learned policy can climb the hill.
struct CollectSettings {
  int episodes_per_round = 10;
  double epsilon = 0.2;  // exploration of the learned-policy episodes
  double explore_fraction = 0.5;
  double pump_noise = 0.3;  // chance of replacing a pump action by a random grid action
  int max_rounds = 1000;
};

struct EvalSettings {
  policyeval::DiscretizedSpace space;
  policyeval::QConfig q;
  int eval_episodes = 10;
  policyeval::RewardOffset reward_offset = policyeval::RewardOffset::max_zero;
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 0;
  Variant variant = Variant::augmented;
  std::string output_dir = "runs/default";
  envsim::EnvConfig env;
  augment::AugmentConfig augment;
  rewardlearn::TrainConfig train;
  std::vector<rewardlearn::ConvSpec> convs{{8, 4, 8}, {4, 2, 16}};
  int hidden = 64;
  StoreSettings store;
  CollectSettings collect;
  EvalSettings eval;

  rewardlearn::NetArch net_arch() const;

  // Propagates the run seed, applies the variant (baseline: no augmentation,
  // lambda_i = 0) and validates every section.
  void resolve();
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> feedbacks;
  bool no_augment = false;
  std::optional<std::vector<double>> sigma_set;
  std::optional<double> lambda_i;
  std::optional<std::string> output_dir;
};

// Unknown keys and wrong types raise ConfigError naming the field path.
RunConfig from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);

// Reads TOML (or a resolved_config.json echo), applies PREF_FORGE_SEED, then the explicit overrides, then resolves.
RunConfig load_run_config(const std::filesystem::path& path, const Overrides& overrides = {});
RunConfig parse_run_config(const std::string& toml_text, const Overrides& overrides = {});

}  // namespace prefforge::config
