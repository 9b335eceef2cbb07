#pragma once

#include <cstdint>
#include <string>

#include "pssl/optim.hpp"

namespace pssl {

// Binary checkpoint format, little endian throughout:
//   magic   "PSSL" (4 bytes)
//   version u32 (currently 1)
//   count   u64 parameter count
//   per parameter:
//     name_len u64, name bytes (UTF-8, no terminator)
//     rank     u64, dims u64[rank]
//     data     f64[prod(dims)]
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ParamSet& params);

// Reads a checkpoint into a fresh set (trainable flags default to true).
ParamSet read_checkpoint(const std::string& path);

// Restores values into an existing set. Every stored name must exist with
// the same shape, and every parameter must be stored (DataError otherwise).
void load_checkpoint(const std::string& path, ParamSet& params);

}  // namespace pssl
