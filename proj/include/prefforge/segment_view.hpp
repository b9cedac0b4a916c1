#pragma once

#include <cstdint>
#include <span>

#include "prefforge/frame.hpp"

namespace prefforge {

// What the reward learner may see of a segment: frames and actions. True
// rewards never cross this boundary.
struct SegmentView {
  std::uint64_t id = 0;
  std::span<const Frame> frames;
  std::span<const double> actions;  // frames.size() * action_dim entries
  int action_dim = 1;

  std::size_t length() const { return frames.size(); }
  std::span<const double> action(std::size_t t) const {
    return actions.subspan(t * static_cast<std::size_t>(action_dim), static_cast<std::size_t>(action_dim));
  }
};

// One row of the preference dataset: label 0 means `first` is preferred.
struct LabeledPair {
  SegmentView first;
  SegmentView second;
  int label = 0;
};

// Read-only access to labeled pairs. Implementations must keep the returned
// views alive for the lifetime of the source.
class PreferenceSource {
 public:
  virtual ~PreferenceSource() = default;
  virtual std::size_t pair_count() const = 0;
  virtual LabeledPair pair(std::size_t index) const = 0;
};

}  // namespace prefforge
