#pragma once

#include <string>

#include "posal/core.hpp"

namespace posal::io {

// Binary PPM (P6) with 8-bit channels; values scaled from/to [0,1].
void write_ppm(const std::string& path, const std::vector<Grid<float>>& channels);
std::vector<Grid<float>> read_ppm(const std::string& path);

// Binary PGM (P5); raw integer levels, used for mask files.
void write_pgm(const std::string& path, const Grid<int>& gray);
Grid<int> read_pgm(const std::string& path);

}  // namespace posal::io
