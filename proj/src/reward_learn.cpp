#include "prefforge/reward_learn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include "prefforge/seeding.hpp"

namespace prefforge::rewardlearn {

void TrainConfig::validate() const {
  if (lambda_ce < 0 || lambda_i < 0) throw std::invalid_argument("train: lambda values must be >= 0");
  if (batch_pairs < 1) throw std::invalid_argument("train.batch_pairs must be >= 1");
  if (grad_steps_per_round < 0) throw std::invalid_argument("train.grad_steps_per_round must be >= 0");
  if (!(learning_rate > 0)) throw std::invalid_argument("train.learning_rate must be > 0");
  if (ensemble_size < 1) throw std::invalid_argument("train.ensemble_size must be >= 1");
}

RewardVector reward_vector(const RewardNet& net, const SegmentView& seg) {
  if (seg.length() == 0) throw std::invalid_argument("reward_vector: empty segment");
  RewardVector out(seg.length());
  Workspace ws;
  for (std::size_t t = 0; t < seg.length(); ++t) out[t] = net.forward(seg.frames[t], seg.action(t), ws);
  return out;
}

double segment_return(const RewardNet& net, const SegmentView& seg) {
  RewardVector r = reward_vector(net, seg);
  return std::accumulate(r.begin(), r.end(), 0.0);
}

double preference_probability(double return_first, double return_second) {
  // Logistic of the return gap, evaluated on the side that cannot overflow.
  const double d = return_first - return_second;
  if (d >= 0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double euclidean_distance(const RewardVector& a, const RewardVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("invariance_loss: reward vector lengths differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

double ce_loss(std::span<const PairReturns> batch) {
  if (batch.empty()) return 0.0;
  double sum = 0.0;
  for (const PairReturns& p : batch) {
    if (p.label != 0 && p.label != 1) throw std::invalid_argument("ce_loss: label must be 0 or 1");
    const double preferred = p.label == 0 ? p.first : p.second;
    const double other = p.label == 0 ? p.second : p.first;
    sum += softplus(other - preferred);
  }
  return sum / static_cast<double>(batch.size());
}

double invariance_loss(const RewardVector& original, std::span<const RewardVector> augmented) {
  if (augmented.empty()) return 0.0;
  double sum = 0.0;
  for (const RewardVector& a : augmented) sum += euclidean_distance(original, a);
  return sum / static_cast<double>(augmented.size());
}

double invariance_loss(const RewardNet& net, const SegmentView& seg, std::span<const std::vector<Frame>> augmented) {
  const RewardVector original = reward_vector(net, seg);
  std::vector<RewardVector> aug;
  for (const std::vector<Frame>& frames : augmented) {
    if (frames.size() != seg.length()) throw std::invalid_argument("invariance_loss: augmented length mismatch");
    SegmentView view = seg;
    view.frames = frames;
    aug.push_back(reward_vector(net, view));
  }
  return invariance_loss(original, aug);
}

double total_loss(double ce, double inv, const TrainConfig& cfg) { return cfg.lambda_ce * ce + cfg.lambda_i * inv; }

Batch build_batch(const PreferenceSource& source, const TrainConfig& cfg, const augment::AugmentConfig& aug,
                  std::mt19937_64& rng) {
  const std::size_t n = source.pair_count();
  if (n == 0) throw std::invalid_argument("build_batch: preference store is empty");
  const std::size_t want = static_cast<std::size_t>(cfg.batch_pairs);

  std::vector<std::size_t> picks;
  if (n >= want) {
    // Partial Fisher-Yates over the index range.
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < want; ++i) {
      std::uniform_int_distribution<std::size_t> dist(i, n - 1);
      std::swap(idx[i], idx[dist(rng)]);
    }
    picks.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(want));
  } else {
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    for (std::size_t i = 0; i < want; ++i) picks.push_back(dist(rng));
  }

  Batch batch;
  auto add = [&](const SegmentView& seg, int variant, std::span<const Frame> frames) {
    batch.trajectories.push_back({seg.id, variant, frames, seg.actions, seg.action_dim});
    return batch.trajectories.size() - 1;
  };
  for (std::size_t pick : picks) {
    const LabeledPair pair = source.pair(pick);
    const std::size_t a = add(pair.first, 0, pair.first.frames);
    const std::size_t b = add(pair.second, 0, pair.second.frames);
    batch.ce_tuples.push_back({a, b, pair.label});
    if (!cfg.augmentation_enabled) continue;

    InvarianceTerm term_a{a, {}}, term_b{b, {}};
    auto aug_a = augment::augment_all(pair.first.frames, aug);
    auto aug_b = augment::augment_all(pair.second.frames, aug);
    for (std::size_t i = 0; i < aug.sigma_set.size(); ++i) {
      auto fa = std::make_shared<const std::vector<Frame>>(std::move(aug_a[i]));
      auto fb = std::make_shared<const std::vector<Frame>>(std::move(aug_b[i]));
      const std::size_t ia = add(pair.first, static_cast<int>(i) + 1, *fa);
      const std::size_t ib = add(pair.second, static_cast<int>(i) + 1, *fb);
      batch.owned_frames.push_back(std::move(fa));
      batch.owned_frames.push_back(std::move(fb));
      batch.ce_tuples.push_back({ia, ib, pair.label});
      term_a.augmented.push_back(ia);
      term_b.augmented.push_back(ib);
    }
    batch.invariance_terms.push_back(std::move(term_a));
    batch.invariance_terms.push_back(std::move(term_b));
  }
  return batch;
}

LossBreakdown evaluate_batch(const RewardNet& net, const Batch& batch, const TrainConfig& cfg,
                             std::vector<double>* grad) {
  const std::size_t n_traj = batch.trajectories.size();
  std::vector<std::vector<Workspace>> ws(n_traj);
  std::vector<RewardVector> rewards(n_traj);
  std::vector<double> returns(n_traj, 0.0);
  for (std::size_t k = 0; k < n_traj; ++k) {
    const BatchTrajectory& tr = batch.trajectories[k];
    const std::size_t len = tr.frames.size();
    ws[k].resize(grad ? len : 1);
    rewards[k].resize(len);
    for (std::size_t t = 0; t < len; ++t) {
      auto action = tr.actions.subspan(t * tr.action_dim, static_cast<std::size_t>(tr.action_dim));
      rewards[k][t] = net.forward(tr.frames[t], action, ws[k][grad ? t : 0]);
      returns[k] += rewards[k][t];
    }
  }

  LossBreakdown loss;
  std::vector<double> d_return(n_traj, 0.0);
  std::vector<RewardVector> d_reward(n_traj);

  if (!batch.ce_tuples.empty()) {
    const double scale = 1.0 / static_cast<double>(batch.ce_tuples.size());
    double sum = 0.0;
    for (const CeTuple& c : batch.ce_tuples) {
      const std::size_t pref = c.label == 0 ? c.first : c.second;
      const std::size_t other = c.label == 0 ? c.second : c.first;
      const double x = returns[other] - returns[pref];
      sum += softplus(x);
      // d softplus(x)/dx = sigmoid(x) = 1 - P[preferred]
      const double s = 1.0 - preference_probability(returns[pref], returns[other]);
      d_return[pref] -= cfg.lambda_ce * scale * s;
      d_return[other] += cfg.lambda_ce * scale * s;
    }
    loss.ce = sum * scale;
  }

  if (!batch.invariance_terms.empty()) {
    const double term_scale = 1.0 / static_cast<double>(batch.invariance_terms.size());
    double sum = 0.0;
    for (const InvarianceTerm& term : batch.invariance_terms) {
      if (term.augmented.empty()) continue;
      const double sigma_scale = 1.0 / static_cast<double>(term.augmented.size());
      const RewardVector& orig = rewards[term.original];
      for (std::size_t aug : term.augmented) {
        const RewardVector& other = rewards[aug];
        const double dist = euclidean_distance(orig, other);
        sum += dist * sigma_scale;
        if (dist == 0.0) continue;  // subgradient 0 at the kink
        const double coef = cfg.lambda_i * term_scale * sigma_scale / dist;
        auto& d_orig = d_reward[term.original];
        auto& d_aug = d_reward[aug];
        d_orig.resize(orig.size(), 0.0);
        d_aug.resize(other.size(), 0.0);
        for (std::size_t t = 0; t < orig.size(); ++t) {
          const double diff = orig[t] - other[t];
          d_orig[t] += coef * diff;
          d_aug[t] -= coef * diff;
        }
      }
    }
    loss.inv = sum * term_scale;
  }
  loss.total = total_loss(loss.ce, loss.inv, cfg);
  if (!std::isfinite(loss.total)) {
    throw TrainingAbort("non-finite loss (ce=" + std::to_string(loss.ce) + ", inv=" + std::to_string(loss.inv) + ")");
  }

  if (grad) {
    if (grad->size() != net.param_count()) grad->assign(net.param_count(), 0.0);
    for (std::size_t k = 0; k < n_traj; ++k) {
      for (std::size_t t = 0; t < rewards[k].size(); ++t) {
        double g = d_return[k];
        if (!d_reward[k].empty()) g += d_reward[k][t];
        if (g != 0.0) net.backward(ws[k][t], g, *grad);
      }
    }
  }
  return loss;
}

void AdamOptimizer::apply(std::span<double> params, std::span<const double> grad, const TrainConfig& cfg) {
  if (m_.size() != params.size()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  }
  ++t_;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
    params[i] -= cfg.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg.adam_epsilon);
  }
}

RewardTrainer::RewardTrainer(const NetArch& arch, TrainConfig cfg, augment::AugmentConfig aug, std::uint64_t seed)
    : net_(arch, derive_seed(seed, "init")),
      adam_(net_.param_count()),
      cfg_(std::move(cfg)),
      aug_(std::move(aug)),
      rng_(derive_seed(seed, "batch")) {
  cfg_.validate();
  if (cfg_.augmentation_enabled) aug_.validate();
}

StepReport RewardTrainer::grad_step(const PreferenceSource& source) {
  const Batch batch = build_batch(source, cfg_, aug_, rng_);
  return grad_step(batch);
}

StepReport RewardTrainer::grad_step(const Batch& batch) {
  std::vector<double> grad(net_.param_count(), 0.0);
  StepReport report;
  report.loss = evaluate_batch(net_, batch, cfg_, &grad);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw TrainingAbort("non-finite gradient at parameter " + std::to_string(i));
    }
  }
  adam_.apply(net_.params(), grad, cfg_);
  report.step = adam_.steps();
  return report;
}

RewardModel::RewardModel(const NetArch& arch, const TrainConfig& cfg, const augment::AugmentConfig& aug) {
  cfg.validate();
  for (int i = 0; i < cfg.ensemble_size; ++i) {
    members_.emplace_back(arch, cfg, aug, derive_seed(cfg.seed, "member", static_cast<std::uint64_t>(i)));
  }
}

StepReport RewardModel::grad_step(const PreferenceSource& source) {
  StepReport mean;
  for (RewardTrainer& m : members_) {
    StepReport r = m.grad_step(source);
    mean.step = r.step;
    mean.loss.ce += r.loss.ce / members_.size();
    mean.loss.inv += r.loss.inv / members_.size();
    mean.loss.total += r.loss.total / members_.size();
  }
  return mean;
}

double RewardModel::predict(const Frame& frame, std::span<const double> action) const {
  double sum = 0.0;
  for (const RewardTrainer& m : members_) sum += m.net().predict(frame, action);
  return sum / static_cast<double>(members_.size());
}

double RewardModel::segment_return(const SegmentView& seg) const {
  double sum = 0.0;
  for (const RewardTrainer& m : members_) sum += rewardlearn::segment_return(m.net(), seg);
  return sum / static_cast<double>(members_.size());
}

double RewardModel::disagreement(const SegmentView& first, const SegmentView& second) const {
  if (members_.size() < 2) return 0.0;
  std::vector<double> probs;
  for (const RewardTrainer& m : members_) {
    probs.push_back(preference_probability(rewardlearn::segment_return(m.net(), first),
                                           rewardlearn::segment_return(m.net(), second)));
  }
  const double mean = std::accumulate(probs.begin(), probs.end(), 0.0) / probs.size();
  double var = 0.0;
  for (double p : probs) var += (p - mean) * (p - mean);
  return var / probs.size();
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

constexpr char kCheckpointMagic[8] = {'P', 'F', 'R', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

class LittleEndianWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const char* p, std::size_t n) { buf_.append(p, n); }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class LittleEndianReader {
 public:
  explicit LittleEndianReader(std::string data) : buf_(std::move(data)) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw std::runtime_error("checkpoint truncated");
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

void write_arch(LittleEndianWriter& w, const NetArch& a) {
  w.u32(static_cast<std::uint32_t>(a.frame_height));
  w.u32(static_cast<std::uint32_t>(a.frame_width));
  w.u32(static_cast<std::uint32_t>(a.action_dim));
  w.u32(static_cast<std::uint32_t>(a.convs.size()));
  for (const ConvSpec& c : a.convs) {
    w.u32(static_cast<std::uint32_t>(c.kernel));
    w.u32(static_cast<std::uint32_t>(c.stride));
    w.u32(static_cast<std::uint32_t>(c.channels));
  }
  w.u32(static_cast<std::uint32_t>(a.hidden));
}

NetArch read_arch(LittleEndianReader& r) {
  NetArch a;
  a.frame_height = static_cast<int>(r.u32());
  a.frame_width = static_cast<int>(r.u32());
  a.action_dim = static_cast<int>(r.u32());
  a.convs.resize(r.u32());
  for (ConvSpec& c : a.convs) {
    c.kernel = static_cast<int>(r.u32());
    c.stride = static_cast<int>(r.u32());
    c.channels = static_cast<int>(r.u32());
  }
  a.hidden = static_cast<int>(r.u32());
  return a;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const RewardModel& model, const CheckpointMeta& meta) {
  LittleEndianWriter w;
  w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u32(kCheckpointVersion);
  write_arch(w, model.arch());
  w.u32(static_cast<std::uint32_t>(model.size()));
  for (std::size_t i = 0; i < model.size(); ++i) {
    const RewardTrainer& m = model.member(i);
    auto params = m.net().params();
    w.u64(params.size());
    for (double v : params) w.f64(v);
    for (double v : m.optimizer().first_moment()) w.f64(v);
    for (double v : m.optimizer().second_moment()) w.f64(v);
    w.u64(m.optimizer().steps());
  }
  w.u64(meta.epoch);
  w.u64(meta.feedbacks);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

CheckpointMeta load_checkpoint(const std::filesystem::path& path, RewardModel& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  LittleEndianReader r(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
  if (r.bytes(sizeof(kCheckpointMagic)) != std::string(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  if (std::uint32_t v = r.u32(); v != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(v));
  }
  const NetArch arch = read_arch(r);
  if (!(arch == model.arch())) throw ShapeError("checkpoint architecture does not match the configured network");
  if (r.u32() != model.size()) throw ShapeError("checkpoint ensemble size does not match the configuration");

  // Decode everything before touching the model.
  struct Member {
    std::vector<double> params, m, v;
    std::uint64_t steps;
  };
  std::vector<Member> members(model.size());
  for (std::size_t i = 0; i < model.size(); ++i) {
    const std::uint64_t n = r.u64();
    if (n != model.member(i).net().param_count()) throw ShapeError("checkpoint parameter count mismatch");
    for (auto* vec : {&members[i].params, &members[i].m, &members[i].v}) {
      vec->resize(n);
      for (double& x : *vec) x = r.f64();
    }
    members[i].steps = r.u64();
  }
  CheckpointMeta meta;
  meta.epoch = r.u64();
  meta.feedbacks = r.u64();
  if (!r.done()) throw std::runtime_error("trailing bytes in checkpoint");

  for (std::size_t i = 0; i < model.size(); ++i) {
    RewardTrainer& t = model.member(i);
    std::copy(members[i].params.begin(), members[i].params.end(), t.net().params().begin());
    t.optimizer().first_moment() = std::move(members[i].m);
    t.optimizer().second_moment() = std::move(members[i].v);
    t.optimizer().set_steps(members[i].steps);
  }
  return meta;
}

LossLog::LossLog(std::filesystem::path path) : path_(std::move(path)) {
  std::ofstream out(path_, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write loss log " + path_.string());
  out << "step,ce,inv,total\n";
}

void LossLog::append(const StepReport& report) {
  std::ofstream out(path_, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to loss log " + path_.string());
  char line[160];
  std::snprintf(line, sizeof(line), "%llu,%.9g,%.9g,%.9g\n", static_cast<unsigned long long>(report.step),
                report.loss.ce, report.loss.inv, report.loss.total);
  out << line;
}

}  // namespace prefforge::rewardlearn
