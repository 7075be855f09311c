#pragma once

#include <string>

#include "tprs/model.hpp"
#include "tprs/optim.hpp"
#include "tprs/rng.hpp"

namespace tprs {

// Binary checkpoint: magic "TPRS", format version, the model config (JSON)
// with its hash, every named parameter bit-exact, the Adam state, an RNG
// state and the best validation loss. Writes are atomic.
void save_checkpoint(const std::string& path, Model& model,
                     const AdamState& optim, const Rng& rng,
                     double best_val_loss);

struct LoadedCheckpoint {
  Model model;
  AdamState optim;
  Rng rng;
  double best_val_loss = 0;
};

// Rebuilds the model from the embedded config. Corrupt magic, version or
// hash, or a truncated file, raise without producing a partial model.
LoadedCheckpoint load_checkpoint(const std::string& path);

// Loads parameters into an existing model; refuses a checkpoint whose config
// hash differs from the model's.
void load_checkpoint_into(const std::string& path, Model& model);

}  // namespace tprs
