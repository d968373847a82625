#pragma once

#include <string>

#include "canseg/optim.hpp"

namespace canseg::nn {

// Weights archive: a flat little-endian container of named float32 tensors.
//
//   bytes 0-7   magic "CANSEGWT"
//   u32         format version (1)
//   u32         tensor count
//   per tensor: u32 name length, name bytes,
//               u32 ndim, u32 extents[ndim],
//               float32 data[prod(extents)]

void save_weights(const ParamSet& params, const std::string& path);

/// Load into an already-built model; every archived tensor must match a
/// registered parameter by name and shape, and vice versa.
void load_weights(ParamSet& params, const std::string& path);

/// Per-tensor shapes and scalar counts, one line each, with a total row.
std::string summarize(const ParamSet& params);

}  // namespace canseg::nn
