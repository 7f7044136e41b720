#pragma once

#include <string>

#include "textpainter/model.hpp"
#include "textpainter/rng.hpp"

namespace textpainter {

struct TrainState {
    int epoch = 0;
    int64_t step = 0;
    Rng rng{1};  // data-order rng, serialized mid-stream for exact resume
};

// Versioned binary container: magic, model config (canonical text), counters,
// rng state, named tensors for parameters and optimizer slots, and a trailing
// checksum so truncation is always detected.
void save_checkpoint(const std::string& path, const TextPainterModel& model,
                     const nn::Adam& opt_g, const nn::Adam& opt_d, const TrainState& state);

// Fills an existing model/optimizer pair built from the same config; a config
// hash mismatch or damaged file is rejected before anything is touched.
void load_checkpoint(const std::string& path, TextPainterModel& model, nn::Adam& opt_g,
                     nn::Adam& opt_d, TrainState& state);

// Reads only the stored config text, for constructing the model to load into.
KVConfig read_checkpoint_config(const std::string& path);

}  // namespace textpainter
