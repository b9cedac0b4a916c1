#include "prefforge/experiment.hpp"

#include <cmath>
#include <fstream>
#include <thread>

#include "prefforge/seeding.hpp"

namespace prefforge::service {

namespace fs = std::filesystem;
using config::RunConfig;
using policyeval::EvalReport;

RunPaths RunPaths::under(const fs::path& dir) {
  return {dir,
          dir / "resolved_config.json",
          dir / "curves.csv",
          dir / "loss.csv",
          dir / "reward_model.ckpt",
          dir / "store"};
}

std::function<envsim::Action(const envsim::CarState&)> noisy_pump_policy(const policyeval::DiscretizedSpace& space,
                                                                        double noise, std::mt19937_64& rng) {
  return [&space, noise, &rng](const envsim::CarState& s) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < noise) {
      std::uniform_int_distribution<int> pick(0, space.action_count() - 1);
      return envsim::Action{space.actions[pick(rng)]};
    }
    return envsim::pump_controller(s);
  };
}

prefstore::Episode to_episode(const envsim::Rollout& r) {
  prefstore::Episode e;
  e.frames = r.frames;
  e.actions = r.actions;
  e.true_rewards = r.true_rewards;
  return e;
}

EvalOutcome evaluate_model(const rewardlearn::RewardModel& model, const RunConfig& cfg,
                           const PreferenceSource& heldout, std::uint64_t epoch, std::uint64_t feedbacks) {
  policyeval::LearnedReward reward = [&model](const Frame& f, std::span<const double> a) {
    return model.predict(f, a);
  };
  const auto table = policyeval::build_reward_table(reward, cfg.env, cfg.eval.space, cfg.eval.reward_offset);
  EvalOutcome out;
  out.q = policyeval::q_train(cfg.env, cfg.eval.space, table, cfg.eval.q, derive_seed(cfg.seed, "q", epoch));
  const auto score =
      policyeval::evaluate(out.q, cfg.env, cfg.eval.space, cfg.eval.eval_episodes, derive_seed(cfg.seed, "eval", epoch));
  const auto corr = policyeval::reward_correlation(reward, cfg.env, cfg.eval.space);

  EvalReport& r = out.report;
  r.epoch = epoch;
  r.feedbacks_used = feedbacks;
  r.mean_true_return = score.mean_true_return;
  r.success_rate = score.success_rate;
  r.pearson_r = corr.r;
  r.pearson_degenerate = corr.degenerate;
  r.heldout_pref_accuracy =
      heldout.pair_count() == 0
          ? 0.0
          : policyeval::heldout_accuracy([&model](const SegmentView& s) { return model.segment_return(s); }, heldout);
  r.variant = config::to_string(cfg.variant);
  return out;
}

namespace {

void say(const TrainingHooks& hooks, const std::string& msg) {
  if (hooks.log) hooks.log(msg);
}

void build_heldout(prefstore::PreferenceStore& store, const RunConfig& cfg) {
  if (cfg.store.heldout_episodes == 0 || cfg.store.heldout_pairs == 0) return;
  envsim::StartStateSampler starts(derive_seed(cfg.seed, "heldout-start"));
  std::mt19937_64 rng(derive_seed(cfg.seed, "heldout-policy"));
  for (int e = 0; e < cfg.store.heldout_episodes; ++e) {
    // Alternate goal-seeking and random behaviour.
    const double noise = (e % 2 == 0) ? cfg.collect.pump_noise : 1.0;
    auto policy = noisy_pump_policy(cfg.eval.space, noise, rng);
    store.ingest_rollout(to_episode(envsim::rollout(policy, starts.sample(), cfg.env)), prefstore::SegmentPool::heldout);
  }
  store.make_heldout_pairs(static_cast<std::size_t>(cfg.store.heldout_pairs));
}

void collect_round(prefstore::PreferenceStore& store, const RunConfig& cfg, int round,
                   const policyeval::QTable* q) {
  envsim::StartStateSampler starts(derive_seed(cfg.seed, "collect-start", static_cast<std::uint64_t>(round)));
  std::mt19937_64 rng(derive_seed(cfg.seed, "collect-policy", static_cast<std::uint64_t>(round)));
  const int n = cfg.collect.episodes_per_round;
  const int explore = static_cast<int>(std::lround(cfg.collect.explore_fraction * n));
  for (int e = 0; e < n; ++e) {
    std::function<envsim::Action(const envsim::CarState&)> policy;
    if (e < explore) {
      policy = noisy_pump_policy(cfg.eval.space, cfg.collect.pump_noise, rng);
    } else if (q) {
      policy = policyeval::epsilon_greedy_policy(*q, cfg.eval.space, cfg.collect.epsilon, rng);
    } else {
      policy = noisy_pump_policy(cfg.eval.space, 1.0, rng);
    }
    store.ingest_rollout(to_episode(envsim::rollout(policy, starts.sample(), cfg.env)));
  }
}

void label_round(prefstore::PreferenceStore& store, const RunConfig& cfg, const rewardlearn::RewardModel& model,
                 const TrainingHooks& hooks) {
  prefstore::PreferenceStore::PairScorer scorer;
  if (cfg.store.strategy == prefstore::QueryStrategy::ensemble_disagreement) {
    scorer = [&model](const SegmentView& a, const SegmentView& b) { return model.disagreement(a, b); };
  }
  const auto tickets = store.schedule_queries(static_cast<std::size_t>(cfg.store.queries_per_round),
                                              cfg.store.strategy, scorer);
  if (cfg.store.label_mode == config::LabelMode::oracle) {
    for (const auto& t : tickets) {
      store.answer_ticket(t.ticket_id, store.oracle_label(t.seg0, t.seg1), prefstore::LabelSource::oracle);
    }
    return;
  }
  if (!tickets.empty()) say(hooks, std::to_string(tickets.size()) + " queries waiting for human labels");
  while (!store.pending_tickets().empty()) std::this_thread::sleep_for(hooks.human_poll);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

TrainingResult run_training(const RunConfig& cfg, const TrainingHooks& hooks) {
  if (cfg.store.budget_cap == 0) {
    throw config::ConfigError("store.budget_cap: feedback budget is 0 and the store holds no labeled tuples");
  }
  const RunPaths paths = RunPaths::under(cfg.output_dir);
  fs::create_directories(paths.dir);
  write_text(paths.resolved_config, config::to_json(cfg).dump(2) + "\n");

  prefstore::PreferenceStore store(
      {cfg.store.segment_length, cfg.store.budget_cap, derive_seed(cfg.seed, "store")});
  build_heldout(store, cfg);
  const prefstore::StoreSnapshot heldout = store.heldout_snapshot();
  say(hooks, "held-out pairs: " + std::to_string(heldout.pair_count()));
  if (hooks.store_ready) hooks.store_ready(store);

  rewardlearn::RewardModel model(cfg.net_arch(), cfg.train, cfg.augment);
  rewardlearn::LossLog loss_log(paths.loss);

  TrainingResult result;
  std::optional<policyeval::QTable> q;
  for (int round = 0; round < cfg.collect.max_rounds && !store.budget_exhausted(); ++round) {
    collect_round(store, cfg, round, q ? &*q : nullptr);
    label_round(store, cfg, model, hooks);

    const prefstore::StoreSnapshot data = store.snapshot();
    if (data.pair_count() == 0) continue;
    for (int k = 0; k < cfg.train.grad_steps_per_round; ++k) loss_log.append(model.grad_step(data));

    const std::uint64_t epoch = static_cast<std::uint64_t>(round) + 1;
    EvalOutcome ev = evaluate_model(model, cfg, heldout, epoch, store.answered_count());
    q = std::move(ev.q);
    result.reports.push_back(ev.report);
    result.meta = {epoch, ev.report.feedbacks_used};
    policyeval::emit_curves(result.reports, paths.curves);
    rewardlearn::save_checkpoint(paths.checkpoint, model, result.meta);

    char line[200];
    std::snprintf(line, sizeof line, "epoch %llu feedbacks %llu return %.2f success %.2f r %.3f acc %.3f",
                  static_cast<unsigned long long>(epoch), static_cast<unsigned long long>(ev.report.feedbacks_used),
                  ev.report.mean_true_return, ev.report.success_rate, ev.report.pearson_r,
                  ev.report.heldout_pref_accuracy);
    say(hooks, line);
  }
  if (result.reports.empty()) policyeval::emit_curves(result.reports, paths.curves);
  store.save(paths.store);
  return result;
}

EvalReport run_eval(const fs::path& checkpoint, const fs::path& store_dir, const RunConfig& cfg) {
  if (!fs::exists(checkpoint)) throw std::runtime_error("checkpoint not found: " + checkpoint.string());
  rewardlearn::RewardModel model(cfg.net_arch(), cfg.train, cfg.augment);
  const auto meta = rewardlearn::load_checkpoint(checkpoint, model);
  const auto store = prefstore::PreferenceStore::load(store_dir);
  return evaluate_model(model, cfg, store.heldout_snapshot(), meta.epoch, meta.feedbacks).report;
}

}  // namespace prefforge::service
