#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "concept_canvas/nn/layers.hpp"
#include "concept_canvas/nn/sequential.hpp"

namespace canvas::nn {

// Binary tensor archive:
//   "CCWEIGHT" | u32 version=1 | u32 count |
//   count * ( u32 name_len | name | u32 ndim | i64 dims[ndim] | f64 data[prod(dims)] )
// All integers and floats little-endian.
struct NamedArray {
  std::string name;
  std::vector<int> dims;
  std::vector<double> values;
};

void save_arrays(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> load_arrays(const std::filesystem::path& path);

std::vector<NamedArray> export_params(const Sequential& net, const std::string& prefix);
// Copies matching arrays into the network. Every parameter must be present
// with identical dims; throws DataError naming the first mismatch.
void import_params(Sequential& net, const std::vector<NamedArray>& arrays, const std::string& prefix);

}  // namespace canvas::nn
