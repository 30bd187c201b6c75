#pragma once

#include <string>
#include <vector>

#include "maskprop/core.hpp"

namespace maskprop {

// On-disk layout:
//   <dir>/JPEGImages/<name>/%05d.png    8-bit RGB frames
//   <dir>/Annotations/<name>/%05d.png   8-bit indexed label maps (0 = background)
// Object i (in sorted track-id order) is stored as label i.
void write_davis_layout(const VideoSequence& seq, const std::string& dir);

// Inverse of write_davis_layout; object ids are derived from the label
// indices found in the annotations ("01", "02", ...).
VideoSequence read_davis_layout(const std::string& dir, const std::string& name);

// Sequence names found under <dir>/JPEGImages, sorted.
std::vector<std::string> list_sequences(const std::string& dir);

}  // namespace maskprop
