#include "prefforge/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace prefforge::augment {

MaskMatrix::MaskMatrix(int height, int width)
    : height_(height), width_(width), bits_(static_cast<std::size_t>(height) * width, 0) {
  constructed_.fetch_add(1, std::memory_order_relaxed);
}

std::size_t MaskMatrix::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

void AugmentConfig::validate() const {
  if (sigma_set.empty()) throw std::invalid_argument("augment.sigma_set must not be empty");
  for (double s : sigma_set) {
    if (!(s > 0)) throw std::invalid_argument("augment.sigma_set entries must be > 0");
  }
  if (!(kernel_radius_factor > 0)) throw std::invalid_argument("augment.kernel_radius_factor must be > 0");
  if (mask_threshold < 0) throw std::invalid_argument("augment.mask_threshold must be >= 0");
  if (dilation_radius < 0) throw std::invalid_argument("augment.dilation_radius must be >= 0");
}

MaskMatrix mask_pair(const Frame& frame, const Frame& previous, int threshold) {
  require_same_shape(frame, previous, "mask_pair");
  MaskMatrix mask(frame.height, frame.width);
  for (int r = 0; r < frame.height; ++r) {
    for (int c = 0; c < frame.width; ++c) {
      int diff = std::abs(int(frame.at(r, c)) - int(previous.at(r, c)));
      if (diff > threshold) mask.set(r, c, true);
    }
  }
  return mask;
}

MaskMatrix mask_union(std::span<const MaskMatrix> masks) {
  if (masks.empty()) throw std::invalid_argument("mask_union: empty mask list");
  MaskMatrix out(masks.front().height(), masks.front().width());
  for (const MaskMatrix& m : masks) {
    if (m.height() != out.height() || m.width() != out.width()) throw ShapeError("mask_union: mask shapes differ");
    for (int r = 0; r < m.height(); ++r) {
      for (int c = 0; c < m.width(); ++c) {
        if (m.at(r, c)) out.set(r, c, true);
      }
    }
  }
  return out;
}

MaskMatrix dilate(const MaskMatrix& mask, int radius) {
  MaskMatrix out(mask.height(), mask.width());
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(r, c)) continue;
      for (int dr = -radius; dr <= radius; ++dr) {
        for (int dc = -radius; dc <= radius; ++dc) {
          int rr = r + dr, cc = c + dc;
          if (rr >= 0 && rr < mask.height() && cc >= 0 && cc < mask.width()) out.set(rr, cc, true);
        }
      }
    }
  }
  return out;
}

int kernel_radius(double sigma, double radius_factor) {
  return std::max(1, static_cast<int>(std::ceil(radius_factor * sigma)));
}

std::vector<double> gaussian_kernel(double sigma, double radius_factor) {
  if (!(sigma > 0)) throw std::invalid_argument("gaussian_kernel: sigma must be > 0");
  const int radius = kernel_radius(sigma, radius_factor);
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    double v = std::exp(-0.5 * (k * k) / (sigma * sigma));
    taps[k + radius] = v;
    sum += v;
  }
  for (double& v : taps) v /= sum;
  return taps;
}

int border_index(int i, int n, BorderMode mode) {
  if (i >= 0 && i < n) return i;
  if (mode == BorderMode::replicate) return std::clamp(i, 0, n - 1);
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

ImageF gaussian_blur(const Frame& frame, double sigma, const AugmentConfig& cfg) {
  const std::vector<double> taps = gaussian_kernel(sigma, cfg.kernel_radius_factor);
  const int radius = static_cast<int>(taps.size() / 2);
  const int h = frame.height;
  const int w = frame.width;

  // Horizontal pass.
  ImageF tmp(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += taps[k + radius] * frame.at(r, border_index(c + k, w, cfg.border_mode));
      }
      tmp.at(r, c) = acc;
    }
  }
  // Vertical pass.
  ImageF out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int k = -radius; k <= radius; ++k) {
      const int src = border_index(r + k, h, cfg.border_mode);
      const double t = taps[k + radius];
      for (int c = 0; c < w; ++c) out.at(r, c) += t * tmp.at(src, c);
    }
  }
  return out;
}

namespace {

std::uint8_t quantize(double v) {
  // round-half-up
  double q = std::floor(v + 0.5);
  return static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
}

}  // namespace

Frame perturb_with_mask(const Frame& frame, const MaskMatrix& mask, double sigma, const AugmentConfig& cfg) {
  if (mask.height() != frame.height || mask.width() != frame.width) throw ShapeError("perturb: mask shape differs");
  const ImageF blurred = gaussian_blur(frame, sigma, cfg);
  const bool keep_masked = cfg.mask_polarity == MaskPolarity::blur_style;
  Frame out = frame;
  for (int r = 0; r < frame.height; ++r) {
    for (int c = 0; c < frame.width; ++c) {
      if (mask.at(r, c) != keep_masked) out.at(r, c) = quantize(blurred.at(r, c));
    }
  }
  return out;
}

namespace {

MaskMatrix transition_mask(const Frame& frame, const Frame& previous, const AugmentConfig& cfg) {
  MaskMatrix mask = mask_pair(frame, previous, cfg.mask_threshold);
  if (cfg.dilation_radius > 0) mask = dilate(mask, cfg.dilation_radius);
  return mask;
}

}  // namespace

Frame perturb(const Frame& frame, const Frame& previous, double sigma, const AugmentConfig& cfg) {
  return perturb_with_mask(frame, transition_mask(frame, previous, cfg), sigma, cfg);
}

std::vector<Frame> augment_trajectory(std::span<const Frame> frames, double sigma, const AugmentConfig& cfg) {
  std::vector<Frame> out;
  out.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    out.push_back(t == 0 ? frames[0] : perturb(frames[t], frames[t - 1], sigma, cfg));
  }
  return out;
}

std::vector<std::vector<Frame>> augment_all(std::span<const Frame> frames, const AugmentConfig& cfg) {
  std::vector<std::vector<Frame>> out(cfg.sigma_set.size());
  for (auto& traj : out) traj.reserve(frames.size());
  if (frames.empty()) return out;
  for (auto& traj : out) traj.push_back(frames[0]);
  for (std::size_t t = 1; t < frames.size(); ++t) {
    const MaskMatrix mask = transition_mask(frames[t], frames[t - 1], cfg);
    for (std::size_t i = 0; i < cfg.sigma_set.size(); ++i) {
      out[i].push_back(perturb_with_mask(frames[t], mask, cfg.sigma_set[i], cfg));
    }
  }
  return out;
}

}  // namespace prefforge::augment
