#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "prefforge/reward_learn.hpp"

using namespace prefforge;
using namespace prefforge::rewardlearn;
namespace fs = std::filesystem;

namespace {

const std::vector<double>& tensor(const RewardNet& net, const std::string& name, std::vector<double>& out) {
  for (const auto& t : net.tensors()) {
    if (t.name == name) {
      out.assign(net.params().begin() + t.offset, net.params().begin() + t.offset + t.size);
      return out;
    }
  }
  throw std::runtime_error("no tensor " + name);
}

// Naive forward pass written from the architecture description.
double naive_forward(const RewardNet& net, const Frame& f, double action) {
  const NetArch& arch = net.arch();
  int c_in = 1, h = f.height, w = f.width;
  std::vector<double> x(f.pixels.begin(), f.pixels.end());
  for (double& v : x) v /= 255.0;
  std::vector<double> W, B;
  for (std::size_t l = 0; l < arch.convs.size(); ++l) {
    const auto& c = arch.convs[l];
    tensor(net, "conv" + std::to_string(l) + ".weight", W);
    tensor(net, "conv" + std::to_string(l) + ".bias", B);
    const int oh = (h - c.kernel) / c.stride + 1, ow = (w - c.kernel) / c.stride + 1;
    std::vector<double> y(static_cast<std::size_t>(c.channels) * oh * ow);
    for (int o = 0; o < c.channels; ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double s = B[o];
          for (int ci = 0; ci < c_in; ++ci)
            for (int a = 0; a < c.kernel; ++a)
              for (int b = 0; b < c.kernel; ++b)
                s += W[((o * c_in + ci) * c.kernel + a) * c.kernel + b] *
                     x[(ci * h + i * c.stride + a) * w + j * c.stride + b];
          y[(o * oh + i) * ow + j] = std::max(0.0, s);
        }
    x = std::move(y);
    c_in = c.channels;
    h = oh;
    w = ow;
  }
  x.push_back(action);
  std::vector<double> DW, DB, HW, HB;
  tensor(net, "dense.weight", DW);
  tensor(net, "dense.bias", DB);
  tensor(net, "head.weight", HW);
  tensor(net, "head.bias", HB);
  double z = HB[0];
  for (int j = 0; j < arch.hidden; ++j) {
    double s = DB[j];
    for (std::size_t i = 0; i < x.size(); ++i) s += DW[j * x.size() + i] * x[i];
    z += HW[j] * std::max(0.0, s);
  }
  return std::tanh(z);
}

struct PairFixture {
  fixture::VectorSource source;
  PairFixture(int pairs, int length, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (int i = 0; i < 2 * pairs; ++i) {
      source.segments.push_back(std::make_shared<fixture::OwnedSegment>(
          fixture::moving_block_segment(static_cast<std::uint64_t>(i + 1), 12, 12, length, rng)));
    }
    for (int i = 0; i < pairs; ++i) source.pairs.emplace_back(2 * i, 2 * i + 1, i % 2);
  }
};

}  // namespace

TEST(RewardNet, ForwardMatchesNaiveImplementation) {
  const RewardNet net(fixture::toy_arch(), 3);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    const Frame f = fixture::random_frame(12, 12, rng);
    const double a = std::uniform_real_distribution<double>(-1, 1)(rng);
    EXPECT_NEAR(net.predict(f, std::span(&a, 1)), naive_forward(net, f, a), 1e-12);
  }
}

TEST(RewardNet, DefaultArchitectureOn84) {
  NetArch arch;
  const RewardNet net(arch, 1);
  // 8 * 1 * 64 + 8, 16 * 8 * 16 + 16, dense (9*9*16 + 1) * 64 + 64, head 64 + 1
  EXPECT_EQ(net.param_count(), 520u + 2064u + 83008u + 64u + 65u);
  std::mt19937_64 rng(1);
  const double a = 0.5;
  const double r = net.predict(fixture::random_frame(84, 84, rng), std::span(&a, 1));
  EXPECT_GT(r, -1.0);
  EXPECT_LT(r, 1.0);
}

TEST(RewardNet, ZeroHeadOutputsZero) {
  RewardNet net(fixture::toy_arch(), 5);
  net.zero_head();
  std::mt19937_64 rng(6);
  const double a = 0.3;
  for (int i = 0; i < 10; ++i) EXPECT_EQ(net.predict(fixture::random_frame(12, 12, rng), std::span(&a, 1)), 0.0);
}

TEST(RewardNet, DeterministicAndBounded) {
  std::mt19937_64 rng(7);
  for (int s = 0; s < 10; ++s) {
    const RewardNet net(fixture::toy_arch(), s);
    const Frame f = fixture::random_frame(12, 12, rng);
    const double a = -0.7;
    const double r = net.predict(f, std::span(&a, 1));
    EXPECT_EQ(r, net.predict(f, std::span(&a, 1)));
    EXPECT_GT(r, -1.0);
    EXPECT_LT(r, 1.0);
  }
  EXPECT_EQ(RewardNet(fixture::toy_arch(), 9).params()[0], RewardNet(fixture::toy_arch(), 9).params()[0]);
}

TEST(RewardNet, ShapeErrors) {
  const RewardNet net(fixture::toy_arch(), 1);
  const double a = 0.0;
  EXPECT_THROW(net.predict(Frame(13, 12), std::span(&a, 1)), ShapeError);
  const std::vector<double> two{0.0, 1.0};
  EXPECT_THROW(net.predict(Frame(12, 12), two), ShapeError);
  NetArch bad = fixture::toy_arch();
  bad.convs = {{13, 1, 2}};
  EXPECT_THROW(RewardNet(bad, 1), std::invalid_argument);
}

TEST(RewardNet, InitBiasesZeroWeightsWithinFanIn) {
  const RewardNet net(fixture::toy_arch(), 2);
  std::vector<double> v;
  EXPECT_EQ(tensor(net, "conv0.bias", v), std::vector<double>(3, 0.0));
  EXPECT_EQ(tensor(net, "dense.bias", v), std::vector<double>(6, 0.0));
  for (double x : tensor(net, "conv0.weight", v)) EXPECT_LE(std::abs(x), 1.0 / std::sqrt(16.0));
}

TEST(SegmentReturn, SumOfRewardVectorAndBounded) {
  std::mt19937_64 rng(8);
  const auto seg = fixture::moving_block_segment(1, 12, 12, 9, rng);
  RewardNet net(fixture::toy_arch(), 3);
  const auto rv = reward_vector(net, seg.view());
  double sum = 0;
  for (double r : rv) sum += r;
  EXPECT_DOUBLE_EQ(segment_return(net, seg.view()), sum);
  EXPECT_LE(std::abs(sum), 9.0);
  net.zero_head();
  EXPECT_EQ(segment_return(net, seg.view()), 0.0);
  EXPECT_EQ(reward_vector(net, seg.view()), std::vector<double>(9, 0.0));
  EXPECT_THROW(reward_vector(net, SegmentView{}), std::invalid_argument);
}

TEST(Preference, Examples) {
  EXPECT_EQ(preference_probability(2.0, 2.0), 0.5);
  EXPECT_NEAR(preference_probability(std::log(3.0), 0.0), 0.75, 1e-15);
  EXPECT_NEAR(preference_probability(800.0, 0.0), 1.0, 1e-15);
  EXPECT_NEAR(preference_probability(0.0, 800.0), 0.0, 1e-15);
}

TEST(Preference, SymmetryAndShiftInvariance) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> r(-30, 30);
  for (int i = 0; i < 1000; ++i) {
    const double a = r(rng), b = r(rng), c = r(rng);
    EXPECT_NEAR(preference_probability(a, b) + preference_probability(b, a), 1.0, 1e-12);
    EXPECT_NEAR(preference_probability(a + c, b + c), preference_probability(a, b), 1e-12);
  }
}

TEST(CrossEntropy, Examples) {
  const std::vector<PairReturns> equal{{1.0, 1.0, 0}, {-3.0, -3.0, 1}, {0.0, 0.0, 0}};
  EXPECT_NEAR(ce_loss(equal), std::numbers::ln2, 1e-12);
  const std::vector<PairReturns> ln3{{std::log(3.0), 0.0, 0}};
  EXPECT_NEAR(ce_loss(ln3), -std::log(0.75), 1e-12);
  const std::vector<PairReturns> ln3_flipped{{0.0, std::log(3.0), 1}};
  EXPECT_NEAR(ce_loss(ln3_flipped), 0.287682072451781, 1e-12);
  const std::vector<PairReturns> sure{{60.0, 0.0, 0}};
  EXPECT_LT(ce_loss(sure), 1e-20);
  const std::vector<PairReturns> wrong{{0.0, 1000.0, 0}};
  EXPECT_NEAR(ce_loss(wrong), 1000.0, 1e-9);
}

TEST(Invariance, Examples) {
  const RewardVector orig{1.0, 2.0, 0.0, 0.5};
  const std::vector<RewardVector> same{orig};
  EXPECT_EQ(invariance_loss(orig, same), 0.0);
  const std::vector<RewardVector> tri{{4.0, 6.0, 0.0, 0.5}};
  EXPECT_NEAR(invariance_loss(orig, tri), 5.0, 1e-12);
  const std::vector<RewardVector> two{{4.0, 6.0, 0.0, 0.5}, {1.0, 2.0, 1.0, 0.5}};
  EXPECT_NEAR(invariance_loss(orig, two), 3.0, 1e-12);
  const std::vector<RewardVector> short_one{{1.0}};
  EXPECT_THROW(invariance_loss(orig, short_one), std::invalid_argument);
}

TEST(Invariance, IdenticalAugmentedFramesGiveZero) {
  std::mt19937_64 rng(10);
  const auto seg = fixture::moving_block_segment(1, 12, 12, 5, rng);
  const RewardNet net(fixture::toy_arch(), 1);
  const std::vector<std::vector<Frame>> aug{seg.frames, seg.frames};
  EXPECT_EQ(invariance_loss(net, seg.view(), aug), 0.0);
}

TEST(TotalLoss, Arithmetic) {
  TrainConfig cfg;
  EXPECT_NEAR(total_loss(0.7, 0.5, cfg), 1.0, 1e-15);
  EXPECT_EQ(total_loss(0.0, 0.0, cfg), 0.0);
  cfg.lambda_i = 0.0;
  EXPECT_EQ(total_loss(0.7, 123.0, cfg), 0.7);
}

TEST(Batch, CountsWithAndWithoutAugmentation) {
  PairFixture fx(20, 4, 11);
  TrainConfig cfg;
  cfg.batch_pairs = 8;
  augment::AugmentConfig aug;
  std::mt19937_64 rng(1);
  const Batch on = build_batch(fx.source, cfg, aug, rng);
  EXPECT_EQ(on.ce_tuples.size(), 32u);
  EXPECT_EQ(on.invariance_terms.size(), 16u);
  for (const auto& term : on.invariance_terms) EXPECT_EQ(term.augmented.size(), 3u);
  cfg.augmentation_enabled = false;
  const Batch off = build_batch(fx.source, cfg, aug, rng);
  EXPECT_EQ(off.ce_tuples.size(), 8u);
  EXPECT_EQ(off.invariance_terms.size(), 0u);
}

TEST(Batch, SeededCompositionIsStable) {
  PairFixture fx(30, 3, 12);
  TrainConfig cfg;
  cfg.batch_pairs = 8;
  cfg.augmentation_enabled = false;
  std::mt19937_64 a(42), b(42);
  for (int i = 0; i < 5; ++i) {
    const Batch x = build_batch(fx.source, cfg, {}, a);
    const Batch y = build_batch(fx.source, cfg, {}, b);
    ASSERT_EQ(x.trajectories.size(), y.trajectories.size());
    for (std::size_t k = 0; k < x.trajectories.size(); ++k) {
      EXPECT_EQ(x.trajectories[k].segment_id, y.trajectories[k].segment_id);
    }
  }
}

TEST(Batch, WithoutReplacementWhenEnoughPairs) {
  PairFixture fx(8, 2, 13);
  TrainConfig cfg;
  cfg.batch_pairs = 8;
  cfg.augmentation_enabled = false;
  std::mt19937_64 rng(3);
  const Batch b = build_batch(fx.source, cfg, {}, rng);
  std::set<std::uint64_t> ids;
  for (const auto& t : b.trajectories) ids.insert(t.segment_id);
  EXPECT_EQ(ids.size(), 16u);
  fixture::VectorSource empty;
  EXPECT_THROW(build_batch(empty, cfg, {}, rng), std::invalid_argument);
}

TEST(Batch, BaselineBuildsNoMasks) {
  PairFixture fx(10, 4, 14);
  TrainConfig cfg;
  cfg.augmentation_enabled = false;
  cfg.lambda_i = 0.0;
  RewardTrainer trainer(fixture::toy_arch(), cfg, {}, 1);
  const auto before = augment::MaskMatrix::constructed_count();
  for (int i = 0; i < 3; ++i) trainer.grad_step(fx.source);
  EXPECT_EQ(augment::MaskMatrix::constructed_count(), before);
}

TEST(Gradient, MatchesFiniteDifferencesOnBothTerms) {
  PairFixture fx(3, 4, 15);
  TrainConfig cfg;
  cfg.batch_pairs = 3;
  augment::AugmentConfig aug;
  aug.sigma_set = {1.0, 2.0};
  std::mt19937_64 rng(2);
  const Batch batch = build_batch(fx.source, cfg, aug, rng);
  RewardNet net(fixture::toy_arch(), 21);
  std::vector<double> grad;
  const LossBreakdown lb = evaluate_batch(net, batch, cfg, &grad);
  ASSERT_GT(lb.inv, 0.0);
  // Small step so no ReLU crosses its kink.
  const auto numeric =
      oracle::finite_difference(net.params(), [&] { return evaluate_batch(net, batch, cfg, nullptr).total; }, 1e-6);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double scale = std::max(std::abs(grad[i]), std::abs(numeric[i]));
    EXPECT_LE(std::abs(grad[i] - numeric[i]), std::max(1e-4 * scale, 1e-7)) << "param " << i;
  }
}

TEST(Training, ZeroWeightsLeaveParamsUnchanged) {
  PairFixture fx(4, 3, 16);
  TrainConfig cfg;
  cfg.lambda_ce = 0.0;
  cfg.lambda_i = 0.0;
  cfg.batch_pairs = 4;
  RewardTrainer trainer(fixture::toy_arch(), cfg, {}, 5);
  const std::vector<double> before(trainer.net().params().begin(), trainer.net().params().end());
  for (int i = 0; i < 5; ++i) trainer.grad_step(fx.source);
  EXPECT_EQ(std::vector<double>(trainer.net().params().begin(), trainer.net().params().end()), before);
}

TEST(Training, SinglePairLossDecreases) {
  PairFixture fx(1, 4, 17);
  TrainConfig cfg;
  cfg.batch_pairs = 1;
  cfg.learning_rate = 1e-4;
  cfg.augmentation_enabled = false;
  RewardTrainer trainer(fixture::toy_arch(), cfg, {}, 9);
  std::mt19937_64 rng(1);
  const Batch batch = build_batch(fx.source, cfg, {}, rng);
  double prev = evaluate_batch(trainer.net(), batch, cfg, nullptr).total;
  const double first = prev;
  for (int i = 0; i < 50; ++i) {
    trainer.grad_step(batch);
    const double now = evaluate_batch(trainer.net(), batch, cfg, nullptr).total;
    EXPECT_LE(now, prev + 1e-6) << "step " << i;
    prev = now;
  }
  EXPECT_LT(prev, first);
}

TEST(Training, NonFiniteLossAborts) {
  PairFixture fx(1, 2, 18);
  TrainConfig cfg;
  cfg.batch_pairs = 1;
  cfg.augmentation_enabled = false;
  RewardTrainer trainer(fixture::toy_arch(), cfg, {}, 9);
  trainer.net().params()[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(trainer.grad_step(fx.source), TrainingAbort);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  cfg.batch_pairs = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.lambda_i = -1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.learning_rate = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Ensemble, DisagreementZeroForSingleMemberAndMeanPrediction) {
  std::mt19937_64 rng(19);
  const auto a = fixture::moving_block_segment(1, 12, 12, 3, rng);
  const auto b = fixture::moving_block_segment(2, 12, 12, 3, rng);
  TrainConfig cfg;
  RewardModel one(fixture::toy_arch(), cfg, {});
  EXPECT_EQ(one.disagreement(a.view(), b.view()), 0.0);
  cfg.ensemble_size = 3;
  RewardModel three(fixture::toy_arch(), cfg, {});
  EXPECT_GT(three.disagreement(a.view(), b.view()), 0.0);
  const double act = 0.2;
  double mean = 0;
  for (std::size_t i = 0; i < 3; ++i) mean += three.member(i).net().predict(a.frames[0], std::span(&act, 1));
  EXPECT_NEAR(three.predict(a.frames[0], std::span(&act, 1)), mean / 3, 1e-15);
}

class CheckpointTest : public ::testing::Test {
 protected:
  fs::path dir = fs::temp_directory_path() / ("prefforge_ckpt_" + std::to_string(::getpid()));
  void SetUp() override { fs::create_directories(dir); }
  void TearDown() override { fs::remove_all(dir); }
};

TEST_F(CheckpointTest, RoundTripRestoresWeightsAndMoments) {
  PairFixture fx(4, 3, 20);
  TrainConfig cfg;
  cfg.batch_pairs = 2;
  cfg.ensemble_size = 2;
  cfg.augmentation_enabled = false;
  RewardModel model(fixture::toy_arch(), cfg, {});
  for (int i = 0; i < 3; ++i) model.grad_step(fx.source);
  save_checkpoint(dir / "m.ckpt", model, {7, 300});

  cfg.seed = 99;
  RewardModel other(fixture::toy_arch(), cfg, {});
  const auto meta = load_checkpoint(dir / "m.ckpt", other);
  EXPECT_EQ(meta, (CheckpointMeta{7, 300}));
  for (std::size_t m = 0; m < 2; ++m) {
    const auto& x = model.member(m);
    const auto& y = other.member(m);
    EXPECT_TRUE(std::equal(x.net().params().begin(), x.net().params().end(), y.net().params().begin()));
    EXPECT_EQ(x.optimizer().first_moment(), y.optimizer().first_moment());
    EXPECT_EQ(x.optimizer().second_moment(), y.optimizer().second_moment());
    EXPECT_EQ(x.optimizer().steps(), y.optimizer().steps());
  }
  save_checkpoint(dir / "again.ckpt", other, meta);
  std::ifstream a(dir / "m.ckpt", std::ios::binary), b(dir / "again.ckpt", std::ios::binary);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}), std::string(std::istreambuf_iterator<char>(b), {}));
}

TEST_F(CheckpointTest, ArchitectureMismatchIsShapeError) {
  TrainConfig cfg;
  RewardModel model(fixture::toy_arch(), cfg, {});
  save_checkpoint(dir / "m.ckpt", model, {});
  NetArch wider = fixture::toy_arch();
  wider.hidden = 7;
  RewardModel other(wider, cfg, {});
  const std::vector<double> before(other.member(0).net().params().begin(), other.member(0).net().params().end());
  EXPECT_THROW(load_checkpoint(dir / "m.ckpt", other), ShapeError);
  EXPECT_TRUE(std::equal(before.begin(), before.end(), other.member(0).net().params().begin()));
  cfg.ensemble_size = 2;
  RewardModel pair(fixture::toy_arch(), cfg, {});
  EXPECT_THROW(load_checkpoint(dir / "m.ckpt", pair), ShapeError);
}

TEST_F(CheckpointTest, MissingAndTruncatedFilesFail) {
  TrainConfig cfg;
  RewardModel model(fixture::toy_arch(), cfg, {});
  EXPECT_THROW(load_checkpoint(dir / "absent.ckpt", model), std::runtime_error);
  save_checkpoint(dir / "m.ckpt", model, {});
  fs::resize_file(dir / "m.ckpt", fs::file_size(dir / "m.ckpt") / 2);
  EXPECT_THROW(load_checkpoint(dir / "m.ckpt", model), std::runtime_error);
}

TEST_F(CheckpointTest, LossLogHasHeaderAndRows) {
  {
    LossLog log(dir / "loss.csv");
    log.append({1, {0.5, 0.25, 0.65}});
    log.append({2, {0.4, 0.0, 0.4}});
  }
  std::ifstream in(dir / "loss.csv");
  std::string header, row1, row2;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row2);
  EXPECT_EQ(header, "step,ce,inv,total");
  EXPECT_EQ(row1, "1,0.5,0.25,0.65");
  EXPECT_EQ(row2, "2,0.4,0,0.4");
}
