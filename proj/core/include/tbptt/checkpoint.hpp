#pragma once

#include <string>

#include "tbptt/cells.hpp"

namespace tbptt {

// Text checkpoint, one file per model:
//
//   tbptt-ckpt 1
//   arch vocab=V emb=E layers=lstm:H,lstm:H
//   tensor <name> <rows> <cols>
//   <cols values per line, shortest round-trip decimal>
//   ...
//   end
//
// Values are written with std::to_chars and read back with std::from_chars,
// so save/load round-trips every double bit-exactly and the file itself is
// byte-stable across runs.  Layer kinds: lstm, rnn_tanh, rnn_linear.
void save_checkpoint(const std::string& path, const ModelParams& m);
ModelParams load_checkpoint(const std::string& path);

// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

}  // namespace tbptt
