#pragma once

// Parameter checkpoint file.
//
//   offset 0   "FCSNA1\n"                      7-byte magic + version
//   offset 7   u64 little-endian               manifest length in bytes
//   offset 15  manifest, one line per array:   name \t f64 \t d0xd1x.. \t byte_offset \t count \n
//   then       payload, little-endian IEEE-754 binary64, byte_offset relative
//              to the first payload byte
//
// Names may not contain tabs or newlines.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "qfvs/tensor.hpp"

namespace qfvs {

class FormatError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<real> values;

    bool operator==(const NamedArray&) const = default;
};

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path);

}  // namespace qfvs
