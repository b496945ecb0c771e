// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "vlaprune/episode.hpp"

namespace vlaprune {

// Binary episode dump for replay (little-endian; layout documented in the
// README). save/load round-trip bit-exactly.
void save_episode(const std::string& path, const Episode& episode);
Episode load_episode(const std::string& path);

}  // namespace vlaprune
