// prefforge: train, eval, serve, export.
// Exit codes: 0 success, 2 config error, 3 runtime abort.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>
#include <thread>

#include "prefforge/experiment.hpp"
#include "prefforge/export.hpp"
#include "prefforge/label_service.hpp"
#include "prefforge/run_config.hpp"

namespace pf = prefforge;
namespace fs = std::filesystem;

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeAbort = 3;

std::pair<std::string, int> split_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw pf::config::ConfigError("bind address must be HOST:PORT, got '" + bind + "'");
  try {
    return {bind.substr(0, colon), std::stoi(bind.substr(colon + 1))};
  } catch (const std::exception&) {
    throw pf::config::ConfigError("bind address must be HOST:PORT, got '" + bind + "'");
  }
}

void log_line(const std::string& msg) { std::cerr << msg << "\n"; }

void print_report(const pf::policyeval::EvalReport& r) {
  std::cout << pf::policyeval::curves_header() << "\n" << pf::policyeval::curves_row(r) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference-based reward learning with mask-guided augmentation"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Run the training loop");
  std::string train_config;
  pf::config::Overrides ov;
  std::uint64_t seed = 0;
  std::size_t feedbacks = 0;
  std::vector<double> sigmas;
  double lambda_i = 0.0;
  std::string output_dir, bind;
  train->add_option("config", train_config, "Run config (TOML)")->required()->check(CLI::ExistingFile);
  auto* seed_opt = train->add_option("--seed", seed, "Run seed (overrides PREF_FORGE_SEED)");
  auto* fb_opt = train->add_option("--feedbacks", feedbacks, "Feedback budget");
  train->add_flag("--no-augment", ov.no_augment, "Baseline variant: no augmentation, lambda_i = 0");
  auto* sigma_opt = train->add_option("--sigma-set", sigmas, "Blur sigmas")->delimiter(',');
  auto* li_opt = train->add_option("--lambda-i", lambda_i, "Invariance loss weight");
  auto* out_opt = train->add_option("--output", output_dir, "Output directory");
  train->add_option("--bind", bind, "Labeling API address in human mode")->default_val("127.0.0.1:8080");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint once");
  std::string eval_ckpt, eval_store, eval_config, eval_csv;
  eval->add_option("--checkpoint", eval_ckpt, "reward_model.ckpt")->required();
  eval->add_option("--store", eval_store, "Store directory")->required();
  eval->add_option("--config", eval_config, "Run config (TOML or resolved_config.json)")->required();
  eval->add_option("--csv", eval_csv, "Append the report row to this CSV");

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the labeling API for a store");
  std::string serve_store, serve_bind;
  serve->add_option("--store", serve_store, "Store directory")->required();
  serve->add_option("--bind", serve_bind, "HOST:PORT")->default_val("127.0.0.1:8080");

  // export
  auto* exp = app.add_subcommand("export", "Write frames, masks and perturbed frames as PGM/PBM");
  std::string exp_store, exp_out, exp_config, exp_demo;
  std::vector<std::uint64_t> exp_ids;
  exp->add_option("--out", exp_out, "Output directory")->required();
  exp->add_option("--store", exp_store, "Store directory");
  exp->add_option("--segments", exp_ids, "Segment ids")->delimiter(',');
  exp->add_option("--mask-demo", exp_demo, "Dot-world move: stay, up, down, left, right");
  exp->add_option("--config", exp_config, "Run config for the augmentation settings");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    if (*train) {
      if (*seed_opt) ov.seed = seed;
      if (*fb_opt) ov.feedbacks = feedbacks;
      if (*sigma_opt) ov.sigma_set = sigmas;
      if (*li_opt) ov.lambda_i = lambda_i;
      if (*out_opt) ov.output_dir = output_dir;
      const auto cfg = pf::config::load_run_config(train_config, ov);

      pf::service::TrainingHooks hooks;
      hooks.log = log_line;
      std::unique_ptr<pf::service::LabelService> api;
      std::thread api_thread;
      if (cfg.store.label_mode == pf::config::LabelMode::human) {
        const auto [host, port] = split_bind(bind);
        hooks.store_ready = [&, host = host, port = port](pf::prefstore::PreferenceStore& store) {
          api = std::make_unique<pf::service::LabelService>(store);
          api_thread = std::thread([&api, host, port] { api->listen(host, port); });
          api->wait_until_ready();
          log_line("labeling API on http://" + host + ":" + std::to_string(port));
        };
      }
      const auto result = pf::service::run_training(cfg, hooks);
      if (api) {
        api->stop();
        api_thread.join();
      }
      if (!result.reports.empty()) print_report(result.reports.back());
      return 0;
    }

    if (*eval) {
      const auto cfg = pf::config::load_run_config(eval_config);
      const auto report = pf::service::run_eval(eval_ckpt, eval_store, cfg);
      print_report(report);
      if (!eval_csv.empty()) {
        const bool fresh = !fs::exists(eval_csv);
        FILE* f = std::fopen(eval_csv.c_str(), "ab");
        if (!f) throw std::runtime_error("cannot write " + eval_csv);
        if (fresh) std::fprintf(f, "%s\n", pf::policyeval::curves_header().c_str());
        std::fprintf(f, "%s\n", pf::policyeval::curves_row(report).c_str());
        std::fclose(f);
      }
      return 0;
    }

    if (*serve) {
      const auto [host, port] = split_bind(serve_bind);
      auto store = pf::prefstore::PreferenceStore::load(serve_store);
      pf::service::LabelService api(store, fs::path(serve_store));
      log_line("serving " + serve_store + " on http://" + host + ":" + std::to_string(port));
      if (!api.listen(host, port)) throw std::runtime_error("cannot bind " + serve_bind);
      return 0;
    }

    if (*exp) {
      pf::augment::AugmentConfig aug;
      if (!exp_config.empty()) aug = pf::config::load_run_config(exp_config).augment;
      std::vector<fs::path> files;
      if (!exp_demo.empty()) {
        files = pf::service::export_mask_demo(pf::service::parse_dot_move(exp_demo), aug, exp_out);
      } else {
        if (exp_store.empty() || exp_ids.empty()) {
          throw pf::config::ConfigError("export needs --store with --segments, or --mask-demo");
        }
        const auto store = pf::prefstore::PreferenceStore::load(exp_store);
        files = pf::service::export_segments(store, exp_ids, aug, exp_out);
      }
      std::cout << files.size() << " files written to " << exp_out << "\n";
      return 0;
    }
  } catch (const pf::config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeAbort;
  }
  return 0;
}
