#pragma once

#include <cstdint>

#include "handformer/model/handformer.hpp"
#include "handformer/numerics/gradcheck.hpp"
#include "handformer/numerics/rng.hpp"
#include "handformer/train/batch.hpp"

namespace handformer::train {

// Standard-normal joints and wrist channels, unit-norm frame features when
// the config is multimodal.
template <typename T>
model::ModelBatch<T> random_batch(const model::ModelConfig& cfg, std::size_t batch, Rng& rng);

BatchLabels random_labels(const model::ModelConfig& cfg, std::size_t batch, Rng& rng);

// Finite-difference check of the full model in double precision on a random
// batch, with every loss term the config enables.
nn::GradCheckReport check_model_gradients(const model::ModelConfig& cfg, std::uint64_t seed,
                                          std::size_t batch = 2, std::size_t max_per_parameter = 0,
                                          double eps = 1e-5);

}  // namespace handformer::train
