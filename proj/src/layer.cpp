#include <flowdet/layer.hpp>

namespace flowdet {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Linear: return "linear";
    case LayerKind::InvConv: return "inv_conv";
    case LayerKind::DualCoupling: return "dual_coupling";
    case LayerKind::RqActivation: return "rq_activation";
    case LayerKind::Tanh: return "tanh";
    case LayerKind::NormalCdf: return "normal_cdf";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
  if (name == "linear") return LayerKind::Linear;
  if (name == "inv_conv") return LayerKind::InvConv;
  if (name == "dual_coupling") return LayerKind::DualCoupling;
  if (name == "rq_activation") return LayerKind::RqActivation;
  if (name == "tanh") return LayerKind::Tanh;
  if (name == "normal_cdf") return LayerKind::NormalCdf;
  throw InvalidArgument("unknown layer kind: " + name);
}

std::pair<Vector, Real> layer_apply(const Layer& layer, Direction dir, VectorRef x) {
  require_finite(x, "layer_apply input");
  if (x.size() != layer.dim()) throw DimensionMismatch("layer_apply: dimension mismatch");
  const FlowResult r =
      dir == Direction::Forward ? layer.forward(x) : layer.inverse(x);
  return {r.y.col(0), r.logdet[0]};
}

}  // namespace flowdet
