#include "prefforge/frame.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>

namespace prefforge {

std::string encode_pgm(const Frame& frame) {
  std::string out = "P5\n" + std::to_string(frame.width) + " " + std::to_string(frame.height) + "\n255\n";
  out.append(frame.pixels.begin(), frame.pixels.end());
  return out;
}

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(const std::string& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  return bytes.substr(start, pos - start);
}

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

Frame decode_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  if (next_token(bytes, pos) != "P5") throw std::runtime_error("not a binary PGM (P5)");
  int width = std::stoi(next_token(bytes, pos));
  int height = std::stoi(next_token(bytes, pos));
  int maxval = std::stoi(next_token(bytes, pos));
  if (maxval != 255) throw std::runtime_error("unsupported PGM maxval " + std::to_string(maxval));
  ++pos;  // single whitespace after maxval
  Frame frame(height, width);
  if (bytes.size() < pos + frame.size()) throw std::runtime_error("truncated PGM");
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), frame.size(), frame.pixels.begin());
  return frame;
}

void write_pgm(const std::filesystem::path& path, const Frame& frame) { write_bytes(path, encode_pgm(frame)); }

Frame read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_pgm(bytes);
}

std::string encode_pbm(int height, int width, const std::vector<std::uint8_t>& bits) {
  std::string out = "P4\n" + std::to_string(width) + " " + std::to_string(height) + "\n";
  const int row_bytes = (width + 7) / 8;
  for (int r = 0; r < height; ++r) {
    for (int b = 0; b < row_bytes; ++b) {
      unsigned char byte = 0;
      for (int k = 0; k < 8; ++k) {
        int c = b * 8 + k;
        if (c < width && bits[static_cast<std::size_t>(r) * width + c]) byte |= static_cast<unsigned char>(0x80u >> k);
      }
      out.push_back(static_cast<char>(byte));
    }
  }
  return out;
}

void write_pbm(const std::filesystem::path& path, int height, int width, const std::vector<std::uint8_t>& bits) {
  write_bytes(path, encode_pbm(height, width, bits));
}

std::string base64_encode(const std::string& bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    std::uint32_t v = (std::uint32_t(std::uint8_t(bytes[i])) << 16) | (std::uint32_t(std::uint8_t(bytes[i + 1])) << 8) |
                      std::uint8_t(bytes[i + 2]);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = std::uint32_t(std::uint8_t(bytes[i])) << 16;
    if (i + 1 < bytes.size()) v |= std::uint32_t(std::uint8_t(bytes[i + 1])) << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += (i + 1 < bytes.size()) ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

}  // namespace prefforge
