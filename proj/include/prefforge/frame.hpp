#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace prefforge {

// Raised when two images (or an image and a network) disagree on dimensions.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Grayscale observation, row-major, one byte per pixel.
struct Frame {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  Frame() = default;
  Frame(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}

  std::size_t size() const { return pixels.size(); }
  std::uint8_t at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  std::uint8_t& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }

  bool operator==(const Frame&) const = default;
};

// Real-valued working image (blur output before re-quantization).
struct ImageF {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  ImageF() = default;
  ImageF(int h, int w, double fill = 0.0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
  double& at(int row, int col) { return values[static_cast<std::size_t>(row) * width + col]; }
};

inline void require_same_shape(const Frame& a, const Frame& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError(std::string(what) + ": frame shapes differ (" + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                     std::to_string(b.width) + ")");
  }
}

// Binary PGM (P5, maxval 255).
std::string encode_pgm(const Frame& frame);
Frame decode_pgm(const std::string& bytes);
void write_pgm(const std::filesystem::path& path, const Frame& frame);
Frame read_pgm(const std::filesystem::path& path);

// Binary PBM (P4). A set bit is written as 1 (black).
std::string encode_pbm(int height, int width, const std::vector<std::uint8_t>& bits);
void write_pbm(const std::filesystem::path& path, int height, int width,
               const std::vector<std::uint8_t>& bits);

std::string base64_encode(const std::string& bytes);

}  // namespace prefforge
