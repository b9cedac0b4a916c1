#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prefforge/frame.hpp"

namespace prefforge::rewardlearn {

struct ConvSpec {
  int kernel = 0;
  int stride = 1;
  int channels = 0;
  bool operator==(const ConvSpec&) const = default;
};

// Shape of the reward network: valid-padding conv stack with ReLU, one ReLU
// dense layer over [conv features, action], tanh scalar head.
struct NetArch {
  int frame_height = 84;
  int frame_width = 84;
  int action_dim = 1;
  std::vector<ConvSpec> convs{{8, 4, 8}, {4, 2, 16}};
  int hidden = 64;

  void validate() const;
  bool operator==(const NetArch&) const = default;
};

struct ConvShape {
  int in_channels, in_height, in_width;
  int out_channels, out_height, out_width;
  int kernel, stride;
  std::size_t weight_offset, bias_offset;
};

// Per-frame activations kept for the backward pass.
struct Workspace {
  std::vector<std::vector<double>> layers;  // [0] = scaled input, [l+1] = post-ReLU conv l
  std::vector<double> dense_in;             // flattened features + action
  std::vector<double> hidden;               // post-ReLU
  double output = 0.0;
};

class RewardNet {
 public:
  RewardNet(NetArch arch, std::uint64_t seed);

  const NetArch& arch() const { return arch_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }

  // Scalar reward in (-1, 1).
  double predict(const Frame& frame, std::span<const double> action) const;

  double forward(const Frame& frame, std::span<const double> action, Workspace& ws) const;

  // Accumulates upstream * d(output)/d(params) into grad.
  void backward(const Workspace& ws, double upstream, std::span<double> grad) const;

  // Sets the tanh head weights and bias to zero; the output is then exactly 0.
  void zero_head();

  struct Tensor {
    std::string name;
    std::size_t offset;
    std::size_t size;
  };
  const std::vector<Tensor>& tensors() const { return tensors_; }

 private:
  void check_input(const Frame& frame, std::span<const double> action) const;

  NetArch arch_;
  std::vector<ConvShape> conv_shapes_;
  std::size_t features_ = 0;
  std::size_t fc_w_ = 0, fc_b_ = 0, head_w_ = 0, head_b_ = 0;
  std::vector<double> params_;
  std::vector<Tensor> tensors_;
};

}  // namespace prefforge::rewardlearn
