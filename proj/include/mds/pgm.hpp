#pragma once

#include <string>

#include "mds/tensor.hpp"

namespace mds {

// Binary 8-bit PGM (P5). Values are expected in [0,1] and quantized to 0..255.
void save_pgm(const std::string& path, const Tensor& image_hw);

// Reads a P5 PGM into an [H,W] tensor with values in [0,1].
Tensor load_pgm(const std::string& path);

// Max-normalized export used for density map visualization; an all-zero map
// exports as all black.
void save_pgm_normalized(const std::string& path, const Tensor& map_hw);

}  // namespace mds
