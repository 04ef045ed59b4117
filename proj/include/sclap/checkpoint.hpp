#pragma once

#include <string>

#include "sclap/tensor.hpp"

namespace sclap {

// Little-endian binary checkpoint.
//
//   magic   6 bytes   "SCLAP1"
//   record  repeated until EOF:
//     name_len  u32
//     name      name_len bytes, UTF-8
//     rank      u32
//     dims      rank x u64
//     data      prod(dims) x f64
//
// Round-trips bit-exactly.
void save_checkpoint(const ParamSet& params, const std::string& path);

// Loads all records. If `expect` is non-null, names/shapes must match it and
// values are written into its storage; otherwise a fresh set is returned.
ParamSet load_checkpoint(const std::string& path, ParamSet* expect = nullptr);

}  // namespace sclap
