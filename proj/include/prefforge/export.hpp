#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "prefforge/augment.hpp"
#include "prefforge/envsim.hpp"
#include "prefforge/prefstore.hpp"

namespace prefforge::service {

// Per segment: frame_TTT.pgm, mask_TTT.pbm (t >= 1) and frame_TTT_sK.pgm for
// the K-th sigma, under <out>/segment_<id>/. All ids are checked before any
// file is written. Returns the written paths in order.
std::vector<std::filesystem::path> export_segments(const prefstore::PreferenceStore& store,
                                                   std::span<const std::uint64_t> ids,
                                                   const augment::AugmentConfig& aug, const std::filesystem::path& out);

// Dot world pair (start, step(start, move)): previous.pgm, current.pgm,
// mask.pbm and perturbed_sK.pgm.
std::vector<std::filesystem::path> export_mask_demo(envsim::DotMove move, const augment::AugmentConfig& aug,
                                                    const std::filesystem::path& out, int grid_size = 8,
                                                    envsim::DotState start = {3, 3});

envsim::DotMove parse_dot_move(const std::string& s);

}  // namespace prefforge::service
