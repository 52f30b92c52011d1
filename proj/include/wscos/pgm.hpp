#pragma once

#include <filesystem>
#include <string>

#include "wscos/grid.hpp"

namespace wscos {

// Binary PGM (P5), maxval 255. Byte value v encodes the float v/255.
void write_pgm(const std::filesystem::path& path, const Grid& g);
Grid read_pgm(const std::filesystem::path& path);

// Snaps every value to the nearest representable k/255 so a write/read
// round trip is bit-exact.
Grid quantize_u8(const Grid& g);

}  // namespace wscos
