#include <flowdet/builder.hpp>

#include <flowdet/layers/contractive.hpp>
#include <flowdet/rng.hpp>

#include <cmath>

namespace flowdet {

const char* to_string(BaseKind base) {
  return base == BaseKind::Normal ? "normal" : "uniform";
}

BaseKind base_from_string(const std::string& name) {
  if (name == "normal") return BaseKind::Normal;
  if (name == "uniform") return BaseKind::Uniform;
  throw InvalidArgument("unknown base distribution: " + name);
}

namespace {

// Gather permutation putting the first c_split channels of a row-major
// (h, w, c) block up front.
std::vector<Index> channel_split_perm(Index h, Index w, Index c, Index c_split) {
  std::vector<Index> perm;
  perm.reserve(h * w * c);
  for (Index ch0 = 0; ch0 < 2; ++ch0) {
    const Index lo = (ch0 == 0) ? 0 : c_split;
    const Index hi = (ch0 == 0) ? c_split : c;
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j < w; ++j)
        for (Index ch = lo; ch < hi; ++ch) perm.push_back((i * w + j) * c + ch);
  }
  return perm;
}

}  // namespace

FlowModel build_model(const ModelConfig& cfg) {
  require(cfg.levels >= 1, "build_model: levels must be >= 1");
  require(cfg.blocks_per_level >= 1, "build_model: blocks_per_level must be >= 1");
  require(cfg.beta > 0 && cfg.beta <= 1, "build_model: beta outside (0,1]");
  if (cfg.image_mode())
    require(cfg.image_w > 0 && cfg.image_c > 0, "build_model: incomplete image dims");

  const Index d = cfg.dim();
  require(d >= 2, "build_model: need at least two dimensions");

  FlowModel model(d, cfg.base);
  Rng rng(cfg.init_seed);

  const ScaleHead head = cfg.ablation == Ablation::UnconstrainedScale
                             ? ScaleHead::Exponential
                             : ScaleHead::MexicanHat;

  TensorShape shape = cfg.image_mode()
                          ? TensorShape{cfg.image_h, cfg.image_w, cfg.image_c}
                          : TensorShape{1, 1, d};

  for (Index level = 0; level < cfg.levels; ++level) {
    FlowModel::Level lv;
    for (Index block = 0; block < cfg.blocks_per_level; ++block) {
      // The first block of a level fuses the squeeze when the spatial dims
      // allow it; later blocks mix channels in place.
      Index kb = 1;
      if (cfg.image_mode() && block == 0 && cfg.k > 1 && shape.h % cfg.k == 0 &&
          shape.w % cfg.k == 0 && shape.h >= cfg.k && shape.w >= cfg.k)
        kb = cfg.k;
      auto conv = std::make_unique<InvConvLayer>(shape, kb);
      shape = conv->shape_out();
      const Index active = shape.size();

      Index r = cfg.coupling_split > 0 ? cfg.coupling_split : active / 2;
      require(r >= 1 && r < active, "build_model: coupling split out of range");
      auto coupling =
          std::make_unique<DualCouplingLayer>(active, r, cfg.hidden, cfg.heads, head);
      coupling->randomize_trunk(rng);

      auto act = std::make_unique<RqActivationLayer>(active, cfg.bins, 3.0, cfg.beta);
      block_init(*conv, *coupling, *act, cfg.beta);

      lv.layers.push_back(std::move(conv));
      lv.layers.push_back(std::move(coupling));
      if (cfg.ablation == Ablation::InsertTanh)
        lv.layers.push_back(std::make_unique<TanhLayer>(active));
      else if (cfg.ablation == Ablation::InsertNormalCdf)
        lv.layers.push_back(std::make_unique<NormalCdfLayer>(active));
      lv.layers.push_back(std::move(act));
    }
    if (cfg.base == BaseKind::Uniform)
      lv.layers.push_back(std::make_unique<NormalCdfLayer>(shape.size()));

    if (level + 1 < cfg.levels) {
      const Index active = shape.size();
      if (cfg.image_mode()) {
        Index c_split = static_cast<Index>(std::lround(cfg.split_fraction * shape.c));
        c_split = std::clamp<Index>(c_split, 1, shape.c - 1);
        lv.split_out = shape.h * shape.w * c_split;
        lv.split_perm = channel_split_perm(shape.h, shape.w, shape.c, c_split);
        shape.c -= c_split;
      } else {
        Index split = static_cast<Index>(std::lround(cfg.split_fraction * active));
        split = std::clamp<Index>(split, 1, active - 1);
        lv.split_out = split;
        shape.c -= split;  // vector mode keeps h = w = 1
      }
    }
    model.levels().push_back(std::move(lv));
  }

  model.validate();
  return model;
}

}  // namespace flowdet
