#include "prefforge/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <set>

#include "prefforge/seeding.hpp"

namespace prefforge::config {

using nlohmann::json;

std::string to_string(Variant v) { return v == Variant::augmented ? "augmented" : "baseline"; }
std::string to_string(LabelMode m) { return m == LabelMode::oracle ? "oracle" : "human"; }

namespace {

// Walks a JSON object, reading typed fields and rejecting unknown keys.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected a table");
  }

  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(field(key) + ": unknown key");
    }
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(field(key) + ": expected a boolean");
        out = v.get<bool>();
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(field(key) + ": expected a number");
        out = v.get<T>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(field(key) + ": expected an integer");
        if (v.is_number_unsigned() || v.get<std::int64_t>() >= 0 || std::is_signed_v<T>) {
          out = v.get<T>();
        } else {
          throw ConfigError(field(key) + ": expected a non-negative integer");
        }
      } else {
        out = v.get<T>();
      }
    } catch (const json::exception& e) {
      throw ConfigError(field(key) + ": " + e.what());
    }
  }

  template <class E>
  void get_enum(const std::string& key, E& out, const std::map<std::string, E>& names) {
    std::string s;
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (!j_.at(key).is_string()) throw ConfigError(field(key) + ": expected a string");
    s = j_.at(key).get<std::string>();
    auto it = names.find(s);
    if (it == names.end()) throw ConfigError(field(key) + ": unknown value '" + s + "'");
    out = it->second;
  }

  void section(const std::string& key, const std::function<void(Reader&)>& body) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    Reader sub(j_.at(key), field(key));
    body(sub);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? j_.at(key) : null_;
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "<root>" : path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
  json null_;
};

template <class Fn>
void wrap(const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace

rewardlearn::NetArch RunConfig::net_arch() const {
  rewardlearn::NetArch arch;
  arch.frame_height = env.frame_height;
  arch.frame_width = env.frame_width;
  arch.action_dim = 1;
  arch.convs = convs;
  arch.hidden = hidden;
  return arch;
}

void RunConfig::resolve() {
  if (schema_version != kSchemaVersion) {
    throw ConfigError("schema_version: unsupported version " + std::to_string(schema_version));
  }
  env.seed = seed;
  train.seed = derive_seed(seed, "train");
  if (variant == Variant::baseline) {
    train.augmentation_enabled = false;
    train.lambda_i = 0.0;
  }
  wrap("env", [&] { env.validate(); });
  wrap("augment", [&] { augment.validate(); });
  wrap("train", [&] { train.validate(); });
  wrap("network", [&] { net_arch().validate(); });
  wrap("eval", [&] {
    eval.space.validate();
    eval.q.validate();
    if (eval.eval_episodes < 1) throw std::invalid_argument("eval_episodes must be >= 1");
  });
  wrap("collect", [&] {
    auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (collect.episodes_per_round < 1) throw std::invalid_argument("episodes_per_round must be >= 1");
    if (!unit(collect.epsilon)) throw std::invalid_argument("epsilon must lie in [0, 1]");
    if (!unit(collect.explore_fraction)) throw std::invalid_argument("explore_fraction must lie in [0, 1]");
    if (!unit(collect.pump_noise)) throw std::invalid_argument("pump_noise must lie in [0, 1]");
    if (collect.max_rounds < 1) throw std::invalid_argument("max_rounds must be >= 1");
  });
  wrap("store", [&] {
    if (store.segment_length < 1) throw std::invalid_argument("segment_length must be >= 1");
    if (store.segment_length > env.max_steps) throw std::invalid_argument("segment_length exceeds env.max_steps");
    if (store.queries_per_round < 1) throw std::invalid_argument("queries_per_round must be >= 1");
    if (store.heldout_episodes < 0 || store.heldout_pairs < 0) throw std::invalid_argument("held-out counts must be >= 0");
  });
}

RunConfig from_json(const json& j) {
  RunConfig cfg;
  Reader root(j, "");
  root.get("schema_version", cfg.schema_version);
  root.get("seed", cfg.seed);
  root.get_enum("variant", cfg.variant, {{"augmented", Variant::augmented}, {"baseline", Variant::baseline}});
  root.get("output_dir", cfg.output_dir);

  root.section("env", [&](Reader& r) {
    r.get("frame_height", cfg.env.frame_height);
    r.get("frame_width", cfg.env.frame_width);
    r.get("goal_position", cfg.env.goal_position);
    r.get("force_coeff", cfg.env.force_coeff);
    r.get("gravity_coeff", cfg.env.gravity_coeff);
    r.get("goal_bonus", cfg.env.goal_bonus);
    r.get("action_cost", cfg.env.action_cost);
    r.get("max_steps", cfg.env.max_steps);
  });
  root.section("augment", [&](Reader& r) {
    r.get("sigma_set", cfg.augment.sigma_set);
    r.get_enum("mask_polarity", cfg.augment.mask_polarity,
               {{"blur_style", augment::MaskPolarity::blur_style},
                {"blur_content_literal", augment::MaskPolarity::blur_content_literal}});
    r.get("kernel_radius_factor", cfg.augment.kernel_radius_factor);
    r.get_enum("border_mode", cfg.augment.border_mode,
               {{"reflect", augment::BorderMode::reflect}, {"replicate", augment::BorderMode::replicate}});
    r.get("mask_threshold", cfg.augment.mask_threshold);
    r.get("dilation_radius", cfg.augment.dilation_radius);
  });
  root.section("train", [&](Reader& r) {
    r.get("lambda_ce", cfg.train.lambda_ce);
    r.get("lambda_i", cfg.train.lambda_i);
    r.get("learning_rate", cfg.train.learning_rate);
    r.get("batch_pairs", cfg.train.batch_pairs);
    r.get("grad_steps_per_round", cfg.train.grad_steps_per_round);
    r.get("augmentation_enabled", cfg.train.augmentation_enabled);
    r.get("ensemble_size", cfg.train.ensemble_size);
  });
  root.section("network", [&](Reader& r) {
    const json& convs = r.raw("conv");
    if (!convs.is_null()) {
      if (!convs.is_array()) throw ConfigError(r.field("conv") + ": expected an array of [kernel, stride, channels]");
      cfg.convs.clear();
      for (std::size_t i = 0; i < convs.size(); ++i) {
        const json& c = convs[i];
        if (!c.is_array() || c.size() != 3 || !c[0].is_number_integer() || !c[1].is_number_integer() ||
            !c[2].is_number_integer()) {
          throw ConfigError(r.field("conv") + "[" + std::to_string(i) + "]: expected [kernel, stride, channels]");
        }
        cfg.convs.push_back({c[0].get<int>(), c[1].get<int>(), c[2].get<int>()});
      }
    }
    r.get("hidden", cfg.hidden);
  });
  root.section("store", [&](Reader& r) {
    r.get("segment_length", cfg.store.segment_length);
    r.get("budget_cap", cfg.store.budget_cap);
    r.get_enum("query_strategy", cfg.store.strategy,
               {{"uniform", prefstore::QueryStrategy::uniform},
                {"ensemble_disagreement", prefstore::QueryStrategy::ensemble_disagreement}});
    r.get("queries_per_round", cfg.store.queries_per_round);
    r.get_enum("label_mode", cfg.store.label_mode, {{"oracle", LabelMode::oracle}, {"human", LabelMode::human}});
    r.get("heldout_episodes", cfg.store.heldout_episodes);
    r.get("heldout_pairs", cfg.store.heldout_pairs);
  });
  root.section("collect", [&](Reader& r) {
    r.get("episodes_per_round", cfg.collect.episodes_per_round);
    r.get("epsilon", cfg.collect.epsilon);
    r.get("explore_fraction", cfg.collect.explore_fraction);
    r.get("pump_noise", cfg.collect.pump_noise);
    r.get("max_rounds", cfg.collect.max_rounds);
  });
  root.section("eval", [&](Reader& r) {
    r.get("position_bins", cfg.eval.space.position_bins);
    r.get("velocity_bins", cfg.eval.space.velocity_bins);
    r.get("actions", cfg.eval.space.actions);
    r.get("q_episodes", cfg.eval.q.episodes);
    r.get("gamma", cfg.eval.q.gamma);
    r.get("alpha", cfg.eval.q.alpha);
    r.get("epsilon_start", cfg.eval.q.epsilon_start);
    r.get("epsilon_end", cfg.eval.q.epsilon_end);
    r.get("anneal_fraction", cfg.eval.q.anneal_fraction);
    r.get("eval_episodes", cfg.eval.eval_episodes);
    r.get_enum("reward_offset", cfg.eval.reward_offset,
               {{"none", policyeval::RewardOffset::none}, {"max_zero", policyeval::RewardOffset::max_zero}});
  });
  return cfg;
}

json to_json(const RunConfig& c) {
  json convs = json::array();
  for (const auto& s : c.convs) convs.push_back({s.kernel, s.stride, s.channels});
  return {
      {"schema_version", c.schema_version},
      {"seed", c.seed},
      {"variant", to_string(c.variant)},
      {"output_dir", c.output_dir},
      {"env",
       {{"frame_height", c.env.frame_height},
        {"frame_width", c.env.frame_width},
        {"goal_position", c.env.goal_position},
        {"force_coeff", c.env.force_coeff},
        {"gravity_coeff", c.env.gravity_coeff},
        {"goal_bonus", c.env.goal_bonus},
        {"action_cost", c.env.action_cost},
        {"max_steps", c.env.max_steps}}},
      {"augment",
       {{"sigma_set", c.augment.sigma_set},
        {"mask_polarity",
         c.augment.mask_polarity == augment::MaskPolarity::blur_style ? "blur_style" : "blur_content_literal"},
        {"kernel_radius_factor", c.augment.kernel_radius_factor},
        {"border_mode", c.augment.border_mode == augment::BorderMode::reflect ? "reflect" : "replicate"},
        {"mask_threshold", c.augment.mask_threshold},
        {"dilation_radius", c.augment.dilation_radius}}},
      {"train",
       {{"lambda_ce", c.train.lambda_ce},
        {"lambda_i", c.train.lambda_i},
        {"learning_rate", c.train.learning_rate},
        {"batch_pairs", c.train.batch_pairs},
        {"grad_steps_per_round", c.train.grad_steps_per_round},
        {"augmentation_enabled", c.train.augmentation_enabled},
        {"ensemble_size", c.train.ensemble_size}}},
      {"network", {{"conv", convs}, {"hidden", c.hidden}}},
      {"store",
       {{"segment_length", c.store.segment_length},
        {"budget_cap", c.store.budget_cap},
        {"query_strategy", prefstore::to_string(c.store.strategy)},
        {"queries_per_round", c.store.queries_per_round},
        {"label_mode", to_string(c.store.label_mode)},
        {"heldout_episodes", c.store.heldout_episodes},
        {"heldout_pairs", c.store.heldout_pairs}}},
      {"collect",
       {{"episodes_per_round", c.collect.episodes_per_round},
        {"epsilon", c.collect.epsilon},
        {"explore_fraction", c.collect.explore_fraction},
        {"pump_noise", c.collect.pump_noise},
        {"max_rounds", c.collect.max_rounds}}},
      {"eval",
       {{"position_bins", c.eval.space.position_bins},
        {"velocity_bins", c.eval.space.velocity_bins},
        {"actions", c.eval.space.actions},
        {"q_episodes", c.eval.q.episodes},
        {"gamma", c.eval.q.gamma},
        {"alpha", c.eval.q.alpha},
        {"epsilon_start", c.eval.q.epsilon_start},
        {"epsilon_end", c.eval.q.epsilon_end},
        {"anneal_fraction", c.eval.q.anneal_fraction},
        {"eval_episodes", c.eval.eval_episodes},
        {"reward_offset", policyeval::to_string(c.eval.reward_offset)}}},
  };
}

namespace {

RunConfig finish(RunConfig cfg, const Overrides& overrides) {
  if (const char* env_seed = std::getenv("PREF_FORGE_SEED"); env_seed && *env_seed) {
    try {
      cfg.seed = std::stoull(env_seed);
    } catch (const std::exception&) {
      throw ConfigError("PREF_FORGE_SEED: not an unsigned integer");
    }
  }
  if (overrides.seed) cfg.seed = *overrides.seed;
  if (overrides.feedbacks) cfg.store.budget_cap = *overrides.feedbacks;
  if (overrides.no_augment) cfg.variant = Variant::baseline;
  if (overrides.sigma_set) cfg.augment.sigma_set = *overrides.sigma_set;
  if (overrides.lambda_i) cfg.train.lambda_i = *overrides.lambda_i;
  if (overrides.output_dir) cfg.output_dir = *overrides.output_dir;
  cfg.resolve();
  return cfg;
}

}  // namespace

RunConfig parse_run_config(const std::string& toml_text, const Overrides& overrides) {
  return finish(from_json(parse_toml(toml_text)), overrides);
}

RunConfig load_run_config(const std::filesystem::path& path, const Overrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (path.extension() == ".json") {
    const json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path.string() + ": invalid JSON");
    return finish(from_json(j), overrides);
  }
  return parse_run_config(text, overrides);
}

}  // namespace prefforge::config
