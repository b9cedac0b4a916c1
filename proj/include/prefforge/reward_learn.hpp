#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prefforge/augment.hpp"
#include "prefforge/reward_net.hpp"
#include "prefforge/segment_view.hpp"

namespace prefforge::rewardlearn {

// Non-finite loss or gradient during training.
class TrainingAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double lambda_ce = 1.0;
  double lambda_i = 0.6;
  double learning_rate = 3e-4;
  int batch_pairs = 16;
  int grad_steps_per_round = 50;
  std::uint64_t seed = 0;
  bool augmentation_enabled = true;
  int ensemble_size = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
};

using RewardVector = std::vector<double>;

RewardVector reward_vector(const RewardNet& net, const SegmentView& seg);
double segment_return(const RewardNet& net, const SegmentView& seg);

// P[first > second] under the Bradley-Terry model over segment returns.
double preference_probability(double return_first, double return_second);

struct PairReturns {
  double first = 0.0;
  double second = 0.0;
  int label = 0;  // 0: first preferred, 1: second preferred
};

// Mean of -log P[preferred > other].
double ce_loss(std::span<const PairReturns> batch);

// Mean over sigmas of the Euclidean distance between reward vectors.
double invariance_loss(const RewardVector& original, std::span<const RewardVector> augmented);
double invariance_loss(const RewardNet& net, const SegmentView& seg, std::span<const std::vector<Frame>> augmented);

double total_loss(double ce, double inv, const TrainConfig& cfg);

// A trajectory evaluated in a training batch: an original segment or one of
// its augmented copies (variant = sigma index + 1).
struct BatchTrajectory {
  std::uint64_t segment_id = 0;
  int variant = 0;
  std::span<const Frame> frames;
  std::span<const double> actions;
  int action_dim = 1;
};

struct CeTuple {
  std::size_t first;
  std::size_t second;
  int label;
};

struct InvarianceTerm {
  std::size_t original;
  std::vector<std::size_t> augmented;
};

struct Batch {
  std::vector<BatchTrajectory> trajectories;
  std::vector<CeTuple> ce_tuples;
  std::vector<InvarianceTerm> invariance_terms;
  std::vector<std::shared_ptr<const std::vector<Frame>>> owned_frames;
};

// Samples cfg.batch_pairs tuples (without replacement while the source has
// enough). With augmentation, each tuple contributes |sigma_set| extra CE
// tuples and one invariance term per side.
Batch build_batch(const PreferenceSource& source, const TrainConfig& cfg, const augment::AugmentConfig& aug,
                  std::mt19937_64& rng);

struct LossBreakdown {
  double ce = 0.0;
  double inv = 0.0;
  double total = 0.0;
};

// Loss of a batch; accumulates d(total)/d(params) into *grad when non-null.
LossBreakdown evaluate_batch(const RewardNet& net, const Batch& batch, const TrainConfig& cfg,
                             std::vector<double>* grad);

class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  explicit AdamOptimizer(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  void apply(std::span<double> params, std::span<const double> grad, const TrainConfig& cfg);

  std::vector<double>& first_moment() { return m_; }
  std::vector<double>& second_moment() { return v_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }
  std::uint64_t steps() const { return t_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

struct StepReport {
  std::uint64_t step = 0;
  LossBreakdown loss;
};

// One reward network, its optimizer state and its batch sampler.
class RewardTrainer {
 public:
  RewardTrainer(const NetArch& arch, TrainConfig cfg, augment::AugmentConfig aug, std::uint64_t seed);

  StepReport grad_step(const PreferenceSource& source);
  StepReport grad_step(const Batch& batch);

  const RewardNet& net() const { return net_; }
  RewardNet& net() { return net_; }
  AdamOptimizer& optimizer() { return adam_; }
  const AdamOptimizer& optimizer() const { return adam_; }
  const TrainConfig& config() const { return cfg_; }
  const augment::AugmentConfig& augment_config() const { return aug_; }

 private:
  RewardNet net_;
  AdamOptimizer adam_;
  TrainConfig cfg_;
  augment::AugmentConfig aug_;
  std::mt19937_64 rng_;
};

// Mean prediction over one or more independently seeded trainers.
class RewardModel {
 public:
  RewardModel(const NetArch& arch, const TrainConfig& cfg, const augment::AugmentConfig& aug);

  // Runs one grad step on every member; returns the mean loss.
  StepReport grad_step(const PreferenceSource& source);

  double predict(const Frame& frame, std::span<const double> action) const;
  double segment_return(const SegmentView& seg) const;

  // Variance across members of P[first > second]; 0 for a single member.
  double disagreement(const SegmentView& first, const SegmentView& second) const;

  std::size_t size() const { return members_.size(); }
  RewardTrainer& member(std::size_t i) { return members_[i]; }
  const RewardTrainer& member(std::size_t i) const { return members_[i]; }
  const NetArch& arch() const { return members_.front().net().arch(); }

 private:
  std::vector<RewardTrainer> members_;
};

// Checkpoint: magic, version, architecture, little-endian float64 weights and
// optimizer moments per member, then run metadata.
struct CheckpointMeta {
  std::uint64_t epoch = 0;
  std::uint64_t feedbacks = 0;
  bool operator==(const CheckpointMeta&) const = default;
};

void save_checkpoint(const std::filesystem::path& path, const RewardModel& model, const CheckpointMeta& meta);
// Overwrites the weights and optimizer state of `model`. Throws ShapeError if
// the stored architecture or member count differs.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, RewardModel& model);

// "step,ce,inv,total" CSV. The constructor starts a fresh file with the header.
class LossLog {
 public:
  explicit LossLog(std::filesystem::path path);
  void append(const StepReport& report);

 private:
  std::filesystem::path path_;
};

}  // namespace prefforge::rewardlearn
