#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tlvd/numerics.hpp"

namespace tlvd::num {

/// One named tensor as stored in a checkpoint.
struct CheckpointEntry {
    std::string name;
    Tensor value;
};

struct Checkpoint {
    std::string module;
    std::uint64_t seed = 0;
    std::vector<CheckpointEntry> entries;
};

// Text format, values written as hexadecimal floating point so a round trip is bit-exact:
//
//   tlvd-checkpoint 1
//   module <name>
//   seed <n>
//   count <k>
//   param <name> <rank> <d0> ... <dr-1>
//   <values, row-major, whitespace separated>
//   ...
void write_checkpoint(std::ostream& out, const std::string& module, std::uint64_t seed,
                      const ParameterList& params);
Checkpoint read_checkpoint(std::istream& in);

/// Copies checkpoint values into `params`, matching by name and shape. Throws on any
/// missing, extra, or mis-shaped entry.
void load_into(const Checkpoint& ckpt, const ParameterList& params);

}  // namespace tlvd::num
