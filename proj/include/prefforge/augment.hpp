#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <vector>

#include "prefforge/frame.hpp"

namespace prefforge::augment {

// Boolean change mask over a frame. A set bit marks a "content" pixel.
class MaskMatrix {
 public:
  MaskMatrix(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }
  bool at(int row, int col) const { return bits_[index(row, col)] != 0; }
  void set(int row, int col, bool value) { bits_[index(row, col)] = value ? 1 : 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }
  std::size_t count() const;

  bool operator==(const MaskMatrix& other) const {
    return height_ == other.height_ && width_ == other.width_ && bits_ == other.bits_;
  }

  // Number of masks constructed in this process. Lets tests prove that the
  // baseline path never computes a mask.
  static std::uint64_t constructed_count() { return constructed_.load(); }

 private:
  std::size_t index(int row, int col) const { return static_cast<std::size_t>(row) * width_ + col; }

  int height_;
  int width_;
  std::vector<std::uint8_t> bits_;
  static inline std::atomic<std::uint64_t> constructed_{0};
};

enum class MaskPolarity {
  blur_style,            // keep changed pixels, blur the rest
  blur_content_literal,  // blur changed pixels, keep the rest
};

enum class BorderMode { reflect, replicate };

struct AugmentConfig {
  std::vector<double> sigma_set{1.0, 2.0, 3.0};
  MaskPolarity mask_polarity = MaskPolarity::blur_style;
  double kernel_radius_factor = 3.0;
  BorderMode border_mode = BorderMode::reflect;
  // Absolute intensity difference above which a pixel counts as changed.
  int mask_threshold = 0;
  int dilation_radius = 0;

  void validate() const;
};

// M(I, I_prev): bit set iff |I - I_prev| > threshold (threshold 0 means exact inequality).
MaskMatrix mask_pair(const Frame& frame, const Frame& previous, int threshold = 0);

// Elementwise OR. Throws on an empty list or mismatched dimensions.
MaskMatrix mask_union(std::span<const MaskMatrix> masks);

// Square dilation with the given Chebyshev radius.
MaskMatrix dilate(const MaskMatrix& mask, int radius);

int kernel_radius(double sigma, double radius_factor);

// Normalized 1-D Gaussian taps, length 2*radius + 1.
std::vector<double> gaussian_kernel(double sigma, double radius_factor);

// Maps an out-of-range index back into [0, n) according to the border mode.
// Reflect is symmetric (edge pixel repeated: ... c b a | a b c ...).
int border_index(int i, int n, BorderMode mode);

// Separable Gaussian convolution, real-valued output.
ImageF gaussian_blur(const Frame& frame, double sigma, const AugmentConfig& cfg);

// Mask-guided perturbation of `frame` using its predecessor.
Frame perturb(const Frame& frame, const Frame& previous, double sigma, const AugmentConfig& cfg);

// Same, with the mask supplied by the caller.
Frame perturb_with_mask(const Frame& frame, const MaskMatrix& mask, double sigma, const AugmentConfig& cfg);

// tau_g = <s_0, phi(s_1, s_0), ..., phi(s_n, s_{n-1})>.
std::vector<Frame> augment_trajectory(std::span<const Frame> frames, double sigma, const AugmentConfig& cfg);

// One augmented trajectory per sigma in cfg.sigma_set. Masks are computed once
// and shared across sigmas.
std::vector<std::vector<Frame>> augment_all(std::span<const Frame> frames, const AugmentConfig& cfg);

}  // namespace prefforge::augment
