#pragma once

// Plain-text checkpoint:
//
//   contra-checkpoint 1
//   dims <patches> <patch_dim> <image_hidden> <text_hidden> <vocab> <embed_dim>
//   flags <freeze_image> <freeze_text> <dropout>
//   section params|moment1|moment2
//   scalar temperature <value>
//   block <name> <rows> <cols>
//   <rows lines of cols values>
//   ...
//   optimizer_step <n>
//   end
//
// Values are written with 17 significant digits, so a load reproduces the
// saved doubles exactly.

#include <filesystem>
#include <string>

#include "contra/encoders.hpp"
#include "contra/engine.hpp"

namespace contra {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  EncoderParams params;
  OptimizerState optimizer;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws InvalidArgument with the line number on malformed input or a version mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace contra
