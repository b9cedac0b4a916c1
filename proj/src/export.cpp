#include "prefforge/export.hpp"

#include <cstdio>

namespace prefforge::service {

namespace fs = std::filesystem;

namespace {

std::string numbered(const char* stem, std::size_t t, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu%s", stem, t, suffix);
  return buf;
}

}  // namespace

envsim::DotMove parse_dot_move(const std::string& s) {
  using envsim::DotMove;
  if (s == "stay") return DotMove::stay;
  if (s == "up") return DotMove::up;
  if (s == "down") return DotMove::down;
  if (s == "left") return DotMove::left;
  if (s == "right") return DotMove::right;
  throw std::invalid_argument("unknown move '" + s + "' (stay, up, down, left, right)");
}

std::vector<fs::path> export_segments(const prefstore::PreferenceStore& store, std::span<const std::uint64_t> ids,
                                      const augment::AugmentConfig& aug, const fs::path& out) {
  aug.validate();
  std::vector<std::shared_ptr<const prefstore::Segment>> segs;
  for (std::uint64_t id : ids) segs.push_back(store.segment(id));  // throws on unknown ids

  std::vector<fs::path> written;
  for (const auto& seg : segs) {
    const fs::path dir = out / ("segment_" + std::to_string(seg->id));
    fs::create_directories(dir);
    const auto& frames = seg->frames;
    for (std::size_t t = 0; t < frames.size(); ++t) {
      written.push_back(dir / numbered("frame", t, ".pgm"));
      write_pgm(written.back(), frames[t]);
      if (t > 0) {
        const auto mask = augment::mask_pair(frames[t], frames[t - 1], aug.mask_threshold);
        written.push_back(dir / numbered("mask", t, ".pbm"));
        write_pbm(written.back(), mask.height(), mask.width(), mask.bits());
      }
    }
    const auto perturbed = augment::augment_all(frames, aug);
    for (std::size_t k = 0; k < perturbed.size(); ++k) {
      for (std::size_t t = 0; t < perturbed[k].size(); ++t) {
        written.push_back(dir / numbered("frame", t, ("_s" + std::to_string(k) + ".pgm").c_str()));
        write_pgm(written.back(), perturbed[k][t]);
      }
    }
  }
  return written;
}

std::vector<fs::path> export_mask_demo(envsim::DotMove move, const augment::AugmentConfig& aug, const fs::path& out,
                                       int grid_size, envsim::DotState start) {
  aug.validate();
  const Frame previous = envsim::dotworld_render(start, grid_size);
  const Frame current = envsim::dotworld_render(envsim::dotworld_step(start, move, grid_size), grid_size);
  fs::create_directories(out);
  std::vector<fs::path> written{out / "previous.pgm", out / "current.pgm", out / "mask.pbm"};
  write_pgm(written[0], previous);
  write_pgm(written[1], current);
  const auto mask = augment::mask_pair(current, previous, aug.mask_threshold);
  write_pbm(written[2], mask.height(), mask.width(), mask.bits());
  for (std::size_t k = 0; k < aug.sigma_set.size(); ++k) {
    written.push_back(out / ("perturbed_s" + std::to_string(k) + ".pgm"));
    write_pgm(written.back(), augment::perturb_with_mask(current, mask, aug.sigma_set[k], aug));
  }
  return written;
}

}  // namespace prefforge::service
