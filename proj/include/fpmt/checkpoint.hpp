#pragma once

#include <filesystem>
#include <iosfwd>

#include "fpmt/data.hpp"
#include "fpmt/encoder.hpp"

namespace fpmt {

// Text checkpoint:
//   FPMT-CKPT v1
//   d=<d> H=<H> width=<w> activation=<tanh|relu> E=<E> C=<C>
//   <name> <rows> <cols> <row-major values...>      (one line per parameter)
// Normalization stats, when present, follow as norm.raw_dim, norm.kept,
// norm.mean and norm.std lines in the same layout.
struct Checkpoint {
  Encoder encoder;
  NormStats norm;
};

void write_checkpoint(std::ostream& out, const Encoder& encoder, const NormStats& norm = {});
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Encoder& encoder, const NormStats& norm = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fpmt
