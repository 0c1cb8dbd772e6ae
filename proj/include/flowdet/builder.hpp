// Builds the standard block architecture (invertible conv, dual coupling,
// rational-quadratic activation) across a multi-scale schedule from a flat
// configuration, with blockwise volume-preserving initialization and the
// Lipschitz-ablation variants.
#pragma once

#include <flowdet/flow.hpp>
#include <flowdet/train.hpp>

#include <cstdint>

namespace flowdet {

struct ModelConfig {
  Index d = 2;  // derived from image dims when those are set
  Index levels = 1;
  Index blocks_per_level = 4;
  Real split_fraction = 0.5;  // fraction of active dims factored out per level
  Index k = 2;                // squeeze factor of each level's first conv (images)
  Index bins = 16;            // spline bins per activation
  Index heads = 4;            // Mexican-hat mixture size
  Index hidden = 32;          // conditioner hidden width
  Index coupling_split = 0;   // 0 -> floor(active/2)
  Real beta = 0.7;            // volume-preserving init slope
  BaseKind base = BaseKind::Normal;
  Index image_h = 0, image_w = 0, image_c = 0;  // 0 -> vector data
  Ablation ablation = Ablation::None;
  std::uint64_t init_seed = 1;

  bool image_mode() const { return image_h > 0; }
  Index dim() const { return image_mode() ? image_h * image_w * image_c : d; }
};

const char* to_string(BaseKind base);
BaseKind base_from_string(const std::string& name);

FlowModel build_model(const ModelConfig& cfg);

}  // namespace flowdet
