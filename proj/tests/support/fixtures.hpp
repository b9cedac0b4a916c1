#pragma once

#include <memory>
#include <random>
#include <vector>

#include "prefforge/frame.hpp"
#include "prefforge/reward_net.hpp"
#include "prefforge/segment_view.hpp"

namespace fixture {

inline prefforge::Frame random_frame(int h, int w, std::mt19937_64& rng) {
  prefforge::Frame f(h, w);
  std::uniform_int_distribution<int> px(0, 255);
  for (auto& p : f.pixels) p = static_cast<std::uint8_t>(px(rng));
  return f;
}

// A segment whose frames and actions are owned by the fixture.
struct OwnedSegment {
  std::uint64_t id = 0;
  std::vector<prefforge::Frame> frames;
  std::vector<double> actions;
  prefforge::SegmentView view() const { return {id, frames, actions, 1}; }
};

// Frames with a bright block moving one column per step over a textured
// background, so masks are non-trivial.
inline OwnedSegment moving_block_segment(std::uint64_t id, int h, int w, int length, std::mt19937_64& rng) {
  OwnedSegment s;
  s.id = id;
  prefforge::Frame background = random_frame(h, w, rng);
  for (auto& p : background.pixels) p = static_cast<std::uint8_t>(p / 4);
  std::uniform_real_distribution<double> act(-1.0, 1.0);
  std::uniform_int_distribution<int> start(0, w - 1);
  const int col0 = start(rng);
  for (int t = 0; t < length; ++t) {
    prefforge::Frame f = background;
    const int col = (col0 + t) % (w - 1);
    for (int r = h / 3; r < h / 3 + 3 && r < h; ++r) {
      f.at(r, col) = 250;
      f.at(r, col + 1) = 250;
    }
    s.frames.push_back(std::move(f));
    s.actions.push_back(act(rng));
  }
  return s;
}

class VectorSource : public prefforge::PreferenceSource {
 public:
  std::vector<std::shared_ptr<OwnedSegment>> segments;
  std::vector<std::tuple<std::size_t, std::size_t, int>> pairs;

  std::size_t pair_count() const override { return pairs.size(); }
  prefforge::LabeledPair pair(std::size_t i) const override {
    const auto& [a, b, y] = pairs[i];
    return {segments[a]->view(), segments[b]->view(), y};
  }
};

// Small architecture used by gradient and training tests on 12x12 frames.
inline prefforge::rewardlearn::NetArch toy_arch() {
  prefforge::rewardlearn::NetArch arch;
  arch.frame_height = 12;
  arch.frame_width = 12;
  arch.action_dim = 1;
  arch.convs = {{4, 2, 3}, {3, 2, 4}};
  arch.hidden = 6;
  return arch;
}

}  // namespace fixture
