#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mds/tensor.hpp"

namespace mds {

// "NT1" text tensor format:
//   line 1: literal NT1
//   line 2: space-separated shape extents
//   then row-major values, full precision (%.17g), one line per trailing row.
// A checkpoint file is a sequence of <name line> + NT1 blocks.

void save_nt1(const std::string& path, const Tensor& t);
Tensor load_nt1(const std::string& path);

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Tensor*>>& entries);
std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path);

std::string format_full(double v);

}  // namespace mds
