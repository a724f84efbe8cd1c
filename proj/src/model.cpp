#include "glutag/model.hpp"

namespace glutag {

std::string to_string(HeadKind head) {
  switch (head) {
    case HeadKind::kCtc: return "ctc";
    case HeadKind::kGmp: return "gmp";
    case HeadKind::kGap: return "gap";
  }
  return "?";
}

std::string to_string(Gating gating) { return gating == Gating::kGlu ? "glu" : "relu"; }

HeadKind parse_head(const std::string& text) {
  if (text == "ctc") return HeadKind::kCtc;
  if (text == "gmp") return HeadKind::kGmp;
  if (text == "gap") return HeadKind::kGap;
  throw Error(ErrorCode::kConfig, "unknown head '" + text + "' (expected ctc|gmp|gap)");
}

Gating parse_gating(const std::string& text) {
  if (text == "glu") return Gating::kGlu;
  if (text == "relu") return Gating::kRelu;
  throw Error(ErrorCode::kConfig, "unknown gating '" + text + "' (expected glu|relu)");
}

int ModelConfig::pooled_bins() const {
  int bins = input_bins;
  for (const auto& b : blocks) bins /= b.pool;
  return bins;
}

void ModelConfig::check() const {
  if (num_classes < 1) throw Error(ErrorCode::kConfig, "need at least one class");
  if (input_bins < 1 || hidden < 1) throw Error(ErrorCode::kConfig, "sizes must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::kConfig, "dropout must be in [0, 1)");
  int bins = input_bins;
  for (const auto& b : blocks) {
    if (b.channels < 1 || b.pool < 1) throw Error(ErrorCode::kConfig, "bad conv block");
    if (b.kernel.height % 2 == 0 || b.kernel.width % 2 == 0)
      throw Error(ErrorCode::kShapeMismatch, "kernel sizes must be odd");
    if (bins % b.pool != 0)
      throw Error(ErrorCode::kNotDivisible, std::to_string(bins) + " bins not divisible by pool " +
                                                std::to_string(b.pool));
    bins /= b.pool;
  }
}

}  // namespace glutag
