#pragma once

#include <cstdint>
#include <vector>

#include "finrag/decoder.hpp"
#include "finrag/preprocess.hpp"

namespace finrag::synthetic {

// Sentinel-driven program task: every record carries one sentinel number
// from a fixed pool plus two shuffled decoys, and the gold program is a
// fixed template keyed by which sentinel appears. Records look like regular
// dataset entries, so the same pipeline path trains and evaluates them.
std::vector<preprocess::QARecord> make_synthetic_records(size_t count, uint64_t seed);

// Training examples built exactly the way the decoder backend builds its
// candidates (reference embedder, internal top-3).
std::vector<decoder::TrainingExample> make_synthetic_task(size_t count, size_t dim,
                                                          uint64_t seed);

// Settings the synthetic task trains with (lr raised for a from-scratch toy;
// dropout off for memorization).
decoder::TrainConfig synthetic_train_config(uint64_t seed);

}  // namespace finrag::synthetic
