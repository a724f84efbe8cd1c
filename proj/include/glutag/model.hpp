#pragma once

// Convolutional-recurrent tagger: gated (GLU) or ReLU conv blocks with
// frequency-only pooling, a bidirectional GRU and a per-frame dense head.
// The time axis is never pooled, so every stage keeps the input frame count.

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "glutag/ctc.hpp"
#include "glutag/layers.hpp"
#include "glutag/labels.hpp"

namespace glutag {

enum class HeadKind { kCtc, kGmp, kGap };
enum class Gating { kGlu, kRelu };

std::string to_string(HeadKind head);
std::string to_string(Gating gating);
HeadKind parse_head(const std::string& text);
Gating parse_gating(const std::string& text);

struct ConvBlockSpec {
  int channels = 16;
  KernelShape kernel{3, 3};
  int pool = 2;  // frequency pooling factor

  bool operator==(const ConvBlockSpec& o) const {
    return channels == o.channels && kernel.height == o.kernel.height &&
           kernel.width == o.kernel.width && pool == o.pool;
  }
};

struct ModelConfig {
  int num_classes = 4;
  HeadKind head = HeadKind::kCtc;
  Gating gating = Gating::kGlu;
  int input_bins = 64;
  std::vector<ConvBlockSpec> blocks{{16, {3, 3}, 2}, {32, {3, 3}, 2}, {32, {3, 3}, 2}};
  int hidden = 32;
  double dropout = 0.2;

  /// 2K+1 for the CTC head (start/end per class plus blank), K otherwise.
  int output_width() const { return head == HeadKind::kCtc ? 2 * num_classes + 1 : num_classes; }
  Token blank() const { return 2 * num_classes; }
  int pooled_bins() const;
  int rnn_input() const { return blocks.empty() ? input_bins : blocks.back().channels * pooled_bins(); }
  /// Throws CONFIG_ERROR / NOT_DIVISIBLE on an unusable configuration.
  void check() const;

  bool operator==(const ModelConfig&) const = default;
};

template <typename Scalar>
struct ConvBlockParams {
  Matrix<Scalar> w, b;  // linear path (the only path for ReLU blocks)
  Matrix<Scalar> v, c;  // gate path; empty for ReLU blocks
};

template <typename Scalar>
struct ModelParams {
  std::vector<ConvBlockParams<Scalar>> blocks;
  GruWeights<Scalar> gru_fwd, gru_bwd;
  Matrix<Scalar> dense_w, dense_b;

  /// Named views of every non-empty learnable array in a fixed order.
  template <typename Self>
  static auto named_arrays(Self& self) {
    using Ptr = decltype(&self.dense_w);
    std::vector<std::pair<std::string, Ptr>> out;
    auto add = [&](std::string name, Ptr m) {
      if (m->size() > 0) out.emplace_back(std::move(name), m);
    };
    for (std::size_t i = 0; i < self.blocks.size(); ++i) {
      const std::string p = "block" + std::to_string(i) + ".";
      add(p + "w", &self.blocks[i].w);
      add(p + "b", &self.blocks[i].b);
      add(p + "v", &self.blocks[i].v);
      add(p + "c", &self.blocks[i].c);
    }
    add("gru_fwd.input", &self.gru_fwd.input);
    add("gru_fwd.recurrent", &self.gru_fwd.recurrent);
    add("gru_fwd.bias", &self.gru_fwd.bias);
    add("gru_bwd.input", &self.gru_bwd.input);
    add("gru_bwd.recurrent", &self.gru_bwd.recurrent);
    add("gru_bwd.bias", &self.gru_bwd.bias);
    add("dense.w", &self.dense_w);
    add("dense.b", &self.dense_b);
    return out;
  }

  auto arrays() { return named_arrays(*this); }
  auto arrays() const { return named_arrays(*this); }

  ModelParams zeros_like() const {
    ModelParams z = *this;
    for (auto& [name, m] : z.arrays()) m->setZero();
    return z;
  }

  /// this += scale * other, array by array.
  void add_scaled(const ModelParams& other, Scalar scale) {
    auto mine = arrays();
    auto theirs = other.arrays();
    for (std::size_t i = 0; i < mine.size(); ++i) *mine[i].second += scale * *theirs[i].second;
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& [name, m] : arrays()) n += m->size();
    return n;
  }

  bool all_finite() const {
    for (const auto& [name, m] : arrays())
      if (!m->allFinite()) return false;
    return true;
  }

  template <typename Other>
  ModelParams<Other> cast() const {
    ModelParams<Other> out;
    out.blocks.resize(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      out.blocks[i].w = blocks[i].w.template cast<Other>();
      out.blocks[i].b = blocks[i].b.template cast<Other>();
      out.blocks[i].v = blocks[i].v.template cast<Other>();
      out.blocks[i].c = blocks[i].c.template cast<Other>();
    }
    auto cast_gru = [](const GruWeights<Scalar>& g) {
      return GruWeights<Other>{g.input.template cast<Other>(), g.recurrent.template cast<Other>(),
                               g.bias.template cast<Other>()};
    };
    out.gru_fwd = cast_gru(gru_fwd);
    out.gru_bwd = cast_gru(gru_bwd);
    out.dense_w = dense_w.template cast<Other>();
    out.dense_b = dense_b.template cast<Other>();
    return out;
  }
};

/// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
template <typename Scalar>
ModelParams<Scalar> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.check();
  std::mt19937_64 rng(seed);
  auto glorot = [&](Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix<Scalar> m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(limit * dist(rng));
    return m;
  };

  ModelParams<Scalar> p;
  int in_ch = 1;
  for (const auto& spec : cfg.blocks) {
    const int taps = spec.kernel.height * spec.kernel.width;
    ConvBlockParams<Scalar> blk;
    blk.w = glorot(spec.channels, in_ch * taps, in_ch * taps, spec.channels * taps);
    blk.b = Matrix<Scalar>::Zero(spec.channels, 1);
    if (cfg.gating == Gating::kGlu) {
      blk.v = glorot(spec.channels, in_ch * taps, in_ch * taps, spec.channels * taps);
      blk.c = Matrix<Scalar>::Zero(spec.channels, 1);
    }
    p.blocks.push_back(std::move(blk));
    in_ch = spec.channels;
  }
  const int d = cfg.rnn_input(), h = cfg.hidden;
  for (auto* g : {&p.gru_fwd, &p.gru_bwd}) {
    g->input = glorot(d, 3 * h, d, h);
    g->recurrent = glorot(h, 3 * h, h, h);
    g->bias = Matrix<Scalar>::Zero(1, 3 * h);
  }
  p.dense_w = glorot(2 * h, cfg.output_width(), 2 * h, cfg.output_width());
  p.dense_b = Matrix<Scalar>::Zero(1, cfg.output_width());
  return p;
}

template <typename Scalar>
struct BlockTrace {
  Tensor3<Scalar> input;
  GluCache<Scalar> glu;         // GLU blocks
  Tensor3<Scalar> pre_relu;     // ReLU blocks
  Tensor3<Scalar> activation;   // before pooling
  std::vector<int> pool_argmax;
  Grid<Scalar> dropout;         // empty when inactive
};

template <typename Scalar>
struct ForwardPass {
  std::vector<BlockTrace<Scalar>> blocks;
  Matrix<Scalar> rnn_in;   // T x (channels * pooled bins)
  BgruCache<Scalar> rnn;
  Matrix<Scalar> rnn_out;  // T x 2H
  Matrix<Scalar> logits;   // T x output_width
  Matrix<Scalar> probs;    // row softmax (CTC) or sigmoid (GMP/GAP)
};

/// Row softmax for the CTC head, elementwise sigmoid otherwise.
template <typename Scalar>
Matrix<Scalar> dense_head(const Matrix<Scalar>& logits, HeadKind head) {
  return head == HeadKind::kCtc ? softmax_rows(logits) : sigmoid_all(logits);
}

/// `features` is frames x bins. Dropout draws from `rng` only when
/// train_mode is set and the rate is positive.
template <typename Scalar>
ForwardPass<Scalar> model_forward(const Matrix<Scalar>& features, const ModelParams<Scalar>& p,
                                  const ModelConfig& cfg, bool train_mode,
                                  std::mt19937_64* rng = nullptr) {
  if (features.cols() != cfg.input_bins)
    throw Error(ErrorCode::kShapeMismatch, "feature width " + std::to_string(features.cols()) +
                                               " != configured " + std::to_string(cfg.input_bins));
  if (features.rows() < 1) throw Error(ErrorCode::kShapeMismatch, "no frames");
  const bool use_dropout = train_mode && cfg.dropout > 0.0;
  if (use_dropout && rng == nullptr)
    throw Error(ErrorCode::kConfig, "dropout in train mode needs a random generator");

  ForwardPass<Scalar> fp;
  fp.blocks.resize(cfg.blocks.size());
  Tensor3<Scalar> x = single_channel<Scalar>(features);
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    const auto& spec = cfg.blocks[i];
    const auto& bp = p.blocks[i];
    auto& tr = fp.blocks[i];
    tr.input = std::move(x);
    if (cfg.gating == Gating::kGlu) {
      tr.activation = glu_forward(tr.input, bp.w, bp.b, bp.v, bp.c, spec.kernel, &tr.glu);
    } else {
      tr.pre_relu = conv2d_same_forward(tr.input, bp.w, bp.b, spec.kernel);
      tr.activation = tr.pre_relu;
      relu_inplace(tr.activation);
    }
    auto pooled = freq_max_pool_forward(tr.activation, spec.pool);
    tr.pool_argmax = std::move(pooled.argmax);
    x = std::move(pooled.output);
    if (use_dropout) {
      tr.dropout = dropout_mask<Scalar>(x.data.rows(), x.data.cols(), cfg.dropout, *rng);
      x.data.array() *= tr.dropout.array();
    }
  }

  fp.rnn_in.resize(x.frames, x.channels * x.bins);
  for (int t = 0; t < x.frames; ++t)
    for (int c = 0; c < x.channels; ++c)
      for (int m = 0; m < x.bins; ++m) fp.rnn_in(t, c * x.bins + m) = x.at(c, t, m);

  fp.rnn_out = bgru_forward(fp.rnn_in, p.gru_fwd, p.gru_bwd, &fp.rnn);
  fp.logits = dense_forward(fp.rnn_out, p.dense_w, p.dense_b);
  fp.probs = dense_head(fp.logits, cfg.head);
  return fp;
}

/// Gradients of every parameter given d loss / d logits.
template <typename Scalar>
ModelParams<Scalar> model_backward(const ForwardPass<Scalar>& fp, const ModelParams<Scalar>& p,
                                   const ModelConfig& cfg, const Matrix<Scalar>& d_logits,
                                   Matrix<Scalar>* d_features = nullptr) {
  ModelParams<Scalar> g;
  g.blocks.resize(cfg.blocks.size());
  g.dense_w.noalias() = fp.rnn_out.transpose() * d_logits;
  g.dense_b = d_logits.colwise().sum();
  const Matrix<Scalar> d_rnn_out = d_logits * p.dense_w.transpose();

  auto gr = bgru_backward(fp.rnn_in, p.gru_fwd, p.gru_bwd, fp.rnn, d_rnn_out);
  g.gru_fwd = std::move(gr.fwd);
  g.gru_bwd = std::move(gr.bwd);

  const int frames = static_cast<int>(fp.rnn_in.rows());
  int channels = cfg.blocks.empty() ? 1 : cfg.blocks.back().channels;
  int bins = cfg.blocks.empty() ? cfg.input_bins : cfg.pooled_bins();
  Tensor3<Scalar> dx(channels, frames, bins);
  for (int t = 0; t < frames; ++t)
    for (int c = 0; c < channels; ++c)
      for (int m = 0; m < bins; ++m) dx.at(c, t, m) = gr.seq(t, c * bins + m);

  for (std::size_t i = cfg.blocks.size(); i-- > 0;) {
    const auto& spec = cfg.blocks[i];
    const auto& tr = fp.blocks[i];
    const auto& bp = p.blocks[i];
    if (tr.dropout.size() > 0) dx.data.array() *= tr.dropout.array();
    Tensor3<Scalar> d_act = freq_max_pool_backward(tr.pool_argmax, tr.activation.channels,
                                                   tr.activation.frames, tr.activation.bins, dx);
    if (cfg.gating == Gating::kGlu) {
      auto gg = glu_backward(tr.glu, tr.input.channels, bp.w, bp.v, d_act, spec.kernel);
      g.blocks[i] = {std::move(gg.w), std::move(gg.b), std::move(gg.v), std::move(gg.c)};
      dx = std::move(gg.input);
    } else {
      d_act.data.array() *= (tr.pre_relu.data.array() > Scalar(0)).template cast<Scalar>();
      auto cg = conv2d_same_backward(tr.input, bp.w, d_act, spec.kernel);
      g.blocks[i].w = std::move(cg.filters);
      g.blocks[i].b = std::move(cg.bias);
      dx = std::move(cg.input);
    }
  }
  if (d_features) {
    d_features->resize(frames, cfg.input_bins);
    for (int t = 0; t < frames; ++t)
      for (int m = 0; m < cfg.input_bins; ++m) (*d_features)(t, m) = dx.at(0, t, m);
  }
  return g;
}

template <typename Scalar>
struct HeadLoss {
  Scalar loss = 0;
  Matrix<Scalar> d_logits;
  bool feasible = true;
};

/// CTC objective on the logits of a CTC-head model.
template <typename Scalar>
HeadLoss<Scalar> ctc_head_loss(const Matrix<Scalar>& logits, const TokenSeq& target, Token blank) {
  auto r = ctc_loss_grad(logits, target, blank);
  return {r.loss, r.grad, r.feasible};
}

/// Binary cross-entropy between pooled clip probabilities and tags.
template <typename Scalar>
HeadLoss<Scalar> tag_head_loss(const Matrix<Scalar>& logits, const TagSet& tags, HeadKind head) {
  const Matrix<Scalar> probs = sigmoid_all(logits);
  RowVector<Scalar> target = RowVector<Scalar>::Zero(logits.cols());
  for (int k : tags) target[k] = Scalar(1);

  std::vector<int> argmax;
  const RowVector<Scalar> clip = head == HeadKind::kGmp ? gmp_pool(probs, &argmax) : gap_pool(probs);
  const auto bce = bce_loss(clip, target);
  const Matrix<Scalar> d_probs = head == HeadKind::kGmp
                                     ? gmp_backward(argmax, probs.rows(), bce.grad)
                                     : gap_backward(probs.rows(), bce.grad);
  HeadLoss<Scalar> out;
  out.loss = bce.loss;
  out.d_logits = (d_probs.array() * probs.array() * (Scalar(1) - probs.array())).matrix();
  return out;
}

}  // namespace glutag
