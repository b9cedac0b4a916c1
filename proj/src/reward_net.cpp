#include "prefforge/reward_net.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace prefforge::rewardlearn {

void NetArch::validate() const {
  if (frame_height < 1 || frame_width < 1) throw std::invalid_argument("network: frame size must be positive");
  if (action_dim < 1) throw std::invalid_argument("network: action_dim must be >= 1");
  if (convs.empty()) throw std::invalid_argument("network: at least one conv layer is required");
  if (hidden < 1) throw std::invalid_argument("network: hidden width must be >= 1");
  int h = frame_height, w = frame_width;
  for (std::size_t l = 0; l < convs.size(); ++l) {
    const ConvSpec& c = convs[l];
    if (c.kernel < 1 || c.stride < 1 || c.channels < 1)
      throw std::invalid_argument("network: conv " + std::to_string(l) + " has non-positive kernel/stride/channels");
    if (h < c.kernel || w < c.kernel)
      throw std::invalid_argument("network: conv " + std::to_string(l) + " kernel larger than its " +
                                  std::to_string(h) + "x" + std::to_string(w) + " input");
    h = (h - c.kernel) / c.stride + 1;
    w = (w - c.kernel) / c.stride + 1;
  }
}

RewardNet::RewardNet(NetArch arch, std::uint64_t seed) : arch_(std::move(arch)) {
  arch_.validate();
  std::size_t offset = 0;
  int channels = 1, h = arch_.frame_height, w = arch_.frame_width;
  for (std::size_t l = 0; l < arch_.convs.size(); ++l) {
    const ConvSpec& c = arch_.convs[l];
    ConvShape s{};
    s.in_channels = channels;
    s.in_height = h;
    s.in_width = w;
    s.out_channels = c.channels;
    s.out_height = (h - c.kernel) / c.stride + 1;
    s.out_width = (w - c.kernel) / c.stride + 1;
    s.kernel = c.kernel;
    s.stride = c.stride;
    s.weight_offset = offset;
    std::size_t wsize = static_cast<std::size_t>(c.channels) * channels * c.kernel * c.kernel;
    tensors_.push_back({"conv" + std::to_string(l) + ".weight", offset, wsize});
    offset += wsize;
    s.bias_offset = offset;
    tensors_.push_back({"conv" + std::to_string(l) + ".bias", offset, static_cast<std::size_t>(c.channels)});
    offset += c.channels;
    conv_shapes_.push_back(s);
    channels = s.out_channels;
    h = s.out_height;
    w = s.out_width;
  }
  features_ = static_cast<std::size_t>(channels) * h * w;
  const std::size_t dense_in = features_ + arch_.action_dim;
  fc_w_ = offset;
  tensors_.push_back({"dense.weight", offset, dense_in * arch_.hidden});
  offset += dense_in * arch_.hidden;
  fc_b_ = offset;
  tensors_.push_back({"dense.bias", offset, static_cast<std::size_t>(arch_.hidden)});
  offset += arch_.hidden;
  head_w_ = offset;
  tensors_.push_back({"head.weight", offset, static_cast<std::size_t>(arch_.hidden)});
  offset += arch_.hidden;
  head_b_ = offset;
  tensors_.push_back({"head.bias", offset, 1});
  offset += 1;
  params_.assign(offset, 0.0);

  // Uniform fan-in scaling for weights, zero biases.
  std::mt19937_64 rng(seed);
  auto fill = [&](std::size_t off, std::size_t n, double fan_in) {
    std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    for (std::size_t i = 0; i < n; ++i) params_[off + i] = dist(rng);
  };
  for (const ConvShape& s : conv_shapes_) {
    double fan_in = double(s.in_channels) * s.kernel * s.kernel;
    fill(s.weight_offset, static_cast<std::size_t>(s.out_channels) * s.in_channels * s.kernel * s.kernel, fan_in);
  }
  fill(fc_w_, dense_in * arch_.hidden, double(dense_in));
  fill(head_w_, arch_.hidden, double(arch_.hidden));
}

void RewardNet::zero_head() {
  for (int j = 0; j < arch_.hidden; ++j) params_[head_w_ + j] = 0.0;
  params_[head_b_] = 0.0;
}

void RewardNet::check_input(const Frame& frame, std::span<const double> action) const {
  if (frame.height != arch_.frame_height || frame.width != arch_.frame_width) {
    throw ShapeError("reward net expects " + std::to_string(arch_.frame_height) + "x" +
                     std::to_string(arch_.frame_width) + " frames, got " + std::to_string(frame.height) + "x" +
                     std::to_string(frame.width));
  }
  if (action.size() != static_cast<std::size_t>(arch_.action_dim)) {
    throw ShapeError("reward net expects action_dim " + std::to_string(arch_.action_dim));
  }
}

double RewardNet::predict(const Frame& frame, std::span<const double> action) const {
  Workspace ws;
  return forward(frame, action, ws);
}

double RewardNet::forward(const Frame& frame, std::span<const double> action, Workspace& ws) const {
  check_input(frame, action);
  const double* p = params_.data();
  ws.layers.resize(conv_shapes_.size() + 1);
  std::vector<double>& input = ws.layers[0];
  input.resize(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) input[i] = frame.pixels[i] / 255.0;

  for (std::size_t l = 0; l < conv_shapes_.size(); ++l) {
    const ConvShape& s = conv_shapes_[l];
    const std::vector<double>& in = ws.layers[l];
    std::vector<double>& out = ws.layers[l + 1];
    out.resize(static_cast<std::size_t>(s.out_channels) * s.out_height * s.out_width);
    const int k = s.kernel;
    for (int oc = 0; oc < s.out_channels; ++oc) {
      const double bias = p[s.bias_offset + oc];
      for (int oy = 0; oy < s.out_height; ++oy) {
        for (int ox = 0; ox < s.out_width; ++ox) {
          double acc = bias;
          for (int ic = 0; ic < s.in_channels; ++ic) {
            const double* wk = p + s.weight_offset + (static_cast<std::size_t>(oc) * s.in_channels + ic) * k * k;
            for (int ky = 0; ky < k; ++ky) {
              const double* row =
                  in.data() + (static_cast<std::size_t>(ic) * s.in_height + oy * s.stride + ky) * s.in_width +
                  ox * s.stride;
              const double* wrow = wk + ky * k;
              for (int kx = 0; kx < k; ++kx) acc += wrow[kx] * row[kx];
            }
          }
          out[(static_cast<std::size_t>(oc) * s.out_height + oy) * s.out_width + ox] = acc < 0 ? 0.0 : acc;
        }
      }
    }
  }

  const std::vector<double>& feat = ws.layers.back();
  ws.dense_in.resize(features_ + arch_.action_dim);
  std::copy(feat.begin(), feat.end(), ws.dense_in.begin());
  std::copy(action.begin(), action.end(), ws.dense_in.begin() + static_cast<std::ptrdiff_t>(features_));

  const std::size_t n_in = ws.dense_in.size();
  ws.hidden.resize(arch_.hidden);
  double z = p[head_b_];
  for (int j = 0; j < arch_.hidden; ++j) {
    const double* wj = p + fc_w_ + static_cast<std::size_t>(j) * n_in;
    double acc = p[fc_b_ + j];
    for (std::size_t i = 0; i < n_in; ++i) acc += wj[i] * ws.dense_in[i];
    ws.hidden[j] = acc < 0 ? 0.0 : acc;
    z += p[head_w_ + j] * ws.hidden[j];
  }
  ws.output = std::tanh(z);
  return ws.output;
}

void RewardNet::backward(const Workspace& ws, double upstream, std::span<double> grad) const {
  if (grad.size() != params_.size()) throw ShapeError("gradient buffer size mismatch");
  const double* p = params_.data();
  double* g = grad.data();

  const double dz = upstream * (1.0 - ws.output * ws.output);
  g[head_b_] += dz;
  const std::size_t n_in = ws.dense_in.size();
  std::vector<double> d_in(features_, 0.0);
  for (int j = 0; j < arch_.hidden; ++j) {
    g[head_w_ + j] += dz * ws.hidden[j];
    if (ws.hidden[j] <= 0) continue;
    const double dh = dz * p[head_w_ + j];
    g[fc_b_ + j] += dh;
    double* gw = g + fc_w_ + static_cast<std::size_t>(j) * n_in;
    const double* wj = p + fc_w_ + static_cast<std::size_t>(j) * n_in;
    for (std::size_t i = 0; i < n_in; ++i) gw[i] += dh * ws.dense_in[i];
    for (std::size_t i = 0; i < features_; ++i) d_in[i] += dh * wj[i];
  }

  std::vector<double> d_out = std::move(d_in);
  for (std::size_t l = conv_shapes_.size(); l-- > 0;) {
    const ConvShape& s = conv_shapes_[l];
    const std::vector<double>& in = ws.layers[l];
    const std::vector<double>& out = ws.layers[l + 1];
    const bool need_input_grad = l > 0;
    std::vector<double> d_prev(need_input_grad ? in.size() : 0, 0.0);
    const int k = s.kernel;
    for (int oc = 0; oc < s.out_channels; ++oc) {
      for (int oy = 0; oy < s.out_height; ++oy) {
        for (int ox = 0; ox < s.out_width; ++ox) {
          const std::size_t oi = (static_cast<std::size_t>(oc) * s.out_height + oy) * s.out_width + ox;
          if (out[oi] <= 0) continue;
          const double d = d_out[oi];
          if (d == 0.0) continue;
          g[s.bias_offset + oc] += d;
          for (int ic = 0; ic < s.in_channels; ++ic) {
            const std::size_t wbase = s.weight_offset + (static_cast<std::size_t>(oc) * s.in_channels + ic) * k * k;
            for (int ky = 0; ky < k; ++ky) {
              const std::size_t ibase =
                  (static_cast<std::size_t>(ic) * s.in_height + oy * s.stride + ky) * s.in_width + ox * s.stride;
              const double* row = in.data() + ibase;
              double* gw = g + wbase + ky * k;
              for (int kx = 0; kx < k; ++kx) gw[kx] += d * row[kx];
              if (need_input_grad) {
                const double* wrow = p + wbase + ky * k;
                double* drow = d_prev.data() + ibase;
                for (int kx = 0; kx < k; ++kx) drow[kx] += d * wrow[kx];
              }
            }
          }
        }
      }
    }
    d_out = std::move(d_prev);
  }
}

}  // namespace prefforge::rewardlearn
