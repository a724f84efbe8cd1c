#pragma once

// Differentiable building blocks with hand-written backward passes.
//
// Feature maps are stored as Tensor3: a channels x (frames*bins) row-major
// matrix, so each channel's time-frequency plane is one contiguous row.
// Convolutions are evaluated as a GEMM against an im2col matrix.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <random>
#include <type_traits>
#include <vector>

#include "glutag/ctc.hpp"
#include "glutag/error.hpp"

namespace glutag {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
struct Tensor3 {
  int channels = 0;
  int frames = 0;
  int bins = 0;
  Grid<Scalar> data;  // channels x (frames * bins)

  Tensor3() = default;
  Tensor3(int c, int t, int m) : channels(c), frames(t), bins(m), data(Grid<Scalar>::Zero(c, t * m)) {}

  Scalar& at(int c, int t, int m) { return data(c, t * bins + m); }
  Scalar at(int c, int t, int m) const { return data(c, t * bins + m); }
  bool same_shape(const Tensor3& o) const {
    return channels == o.channels && frames == o.frames && bins == o.bins;
  }
};

template <typename Scalar>
Tensor3<Scalar> single_channel(const Eigen::Ref<const Matrix<Scalar>>& frames_by_bins) {
  Tensor3<Scalar> x(1, static_cast<int>(frames_by_bins.rows()),
                    static_cast<int>(frames_by_bins.cols()));
  for (int t = 0; t < x.frames; ++t)
    for (int m = 0; m < x.bins; ++m) x.at(0, t, m) = frames_by_bins(t, m);
  return x;
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

// ---------------------------------------------------------------------------
// Convolution, zero 'same' padding over time x frequency.

struct KernelShape {
  int height = 3;  // time
  int width = 3;   // frequency
};

/// (channels*kh*kw) x (frames*bins). Row (c, dt, dm) holds the input shifted
/// by (dt - kh/2, dm - kw/2), zero outside the plane.
template <typename Scalar>
Grid<Scalar> im2col(const Tensor3<Scalar>& x, KernelShape k) {
  if (k.height % 2 == 0 || k.width % 2 == 0)
    throw Error(ErrorCode::kShapeMismatch, "kernel sizes must be odd");
  const int ph = k.height / 2, pw = k.width / 2;
  Grid<Scalar> cols = Grid<Scalar>::Zero(x.channels * k.height * k.width, x.frames * x.bins);
  for (int c = 0; c < x.channels; ++c)
    for (int dt = 0; dt < k.height; ++dt)
      for (int dm = 0; dm < k.width; ++dm) {
        const int row = (c * k.height + dt) * k.width + dm;
        const int shift_t = dt - ph, shift_m = dm - pw;
        const int m_lo = std::max(0, -shift_m), m_hi = std::min(x.bins, x.bins - shift_m);
        for (int t = std::max(0, -shift_t); t < std::min(x.frames, x.frames - shift_t); ++t) {
          const Scalar* src = x.data.data() + c * x.data.cols() + (t + shift_t) * x.bins;
          Scalar* dst = cols.data() + row * cols.cols() + t * x.bins;
          for (int m = m_lo; m < m_hi; ++m) dst[m] = src[m + shift_m];
        }
      }
  return cols;
}

/// Adjoint of im2col: scatters column gradients back onto the input plane.
template <typename Scalar>
Tensor3<Scalar> col2im(const Grid<Scalar>& cols, int channels, int frames, int bins,
                       KernelShape k) {
  const int ph = k.height / 2, pw = k.width / 2;
  Tensor3<Scalar> dx(channels, frames, bins);
  for (int c = 0; c < channels; ++c)
    for (int dt = 0; dt < k.height; ++dt)
      for (int dm = 0; dm < k.width; ++dm) {
        const int row = (c * k.height + dt) * k.width + dm;
        const int shift_t = dt - ph, shift_m = dm - pw;
        const int m_lo = std::max(0, -shift_m), m_hi = std::min(bins, bins - shift_m);
        for (int t = std::max(0, -shift_t); t < std::min(frames, frames - shift_t); ++t) {
          Scalar* dst = dx.data.data() + c * dx.data.cols() + (t + shift_t) * bins;
          const Scalar* src = cols.data() + row * cols.cols() + t * bins;
          for (int m = m_lo; m < m_hi; ++m) dst[m + shift_m] += src[m];
        }
      }
  return dx;
}

/// Filters are out_channels x (in_channels*kh*kw); bias is out_channels x 1.
template <typename Scalar>
Tensor3<Scalar> conv_from_cols(const Grid<Scalar>& cols, const Matrix<Scalar>& filters,
                               const Matrix<Scalar>& bias, int frames, int bins) {
  if (filters.cols() != cols.rows() || bias.rows() != filters.rows() || bias.cols() != 1)
    throw Error(ErrorCode::kShapeMismatch, "convolution filter/bias shape");
  Tensor3<Scalar> y;
  y.channels = static_cast<int>(filters.rows());
  y.frames = frames;
  y.bins = bins;
  y.data.noalias() = filters * cols;
  y.data.colwise() += bias.col(0);
  return y;
}

template <typename Scalar>
Tensor3<Scalar> conv2d_same_forward(const Tensor3<Scalar>& x, const Matrix<Scalar>& filters,
                                    const Matrix<Scalar>& bias, KernelShape k) {
  if (filters.cols() != x.channels * k.height * k.width)
    throw Error(ErrorCode::kShapeMismatch, "filter width does not match input channels");
  return conv_from_cols(im2col(x, k), filters, bias, x.frames, x.bins);
}

template <typename Scalar>
struct ConvGrads {
  Tensor3<Scalar> input;
  Matrix<Scalar> filters;
  Matrix<Scalar> bias;
};

template <typename Scalar>
ConvGrads<Scalar> conv2d_same_backward(const Tensor3<Scalar>& x, const Matrix<Scalar>& filters,
                                       const Tensor3<Scalar>& grad_out, KernelShape k) {
  const Grid<Scalar> cols = im2col(x, k);
  ConvGrads<Scalar> g;
  g.filters.noalias() = grad_out.data * cols.transpose();
  g.bias = grad_out.data.rowwise().sum();
  const Grid<Scalar> dcols = filters.transpose() * grad_out.data;
  g.input = col2im(dcols, x.channels, x.frames, x.bins, k);
  return g;
}

// ---------------------------------------------------------------------------
// Gated linear unit: Y = (W*X + b) . sigmoid(V*X + c)

template <typename Scalar>
struct GluCache {
  Grid<Scalar> cols;
  Tensor3<Scalar> linear;
  Tensor3<Scalar> gate;  // sigmoid output, strictly inside (0, 1)
};

template <typename Scalar>
Tensor3<Scalar> glu_forward(const Tensor3<Scalar>& x, const Matrix<Scalar>& w,
                            const Matrix<Scalar>& b, const Matrix<Scalar>& v,
                            const Matrix<Scalar>& c, KernelShape k,
                            std::type_identity_t<GluCache<Scalar>>* cache = nullptr) {
  if (w.rows() != v.rows() || w.cols() != v.cols())
    throw Error(ErrorCode::kShapeMismatch, "GLU linear and gate filters differ in shape");
  if (w.cols() != x.channels * k.height * k.width)
    throw Error(ErrorCode::kShapeMismatch, "filter width does not match input channels");
  GluCache<Scalar> local;
  GluCache<Scalar>& st = cache ? *cache : local;
  st.cols = im2col(x, k);
  st.linear = conv_from_cols(st.cols, w, b, x.frames, x.bins);
  st.gate = conv_from_cols(st.cols, v, c, x.frames, x.bins);
  st.gate.data = st.gate.data.unaryExpr([](Scalar a) { return sigmoid(a); });
  Tensor3<Scalar> y = st.linear;
  y.data.array() *= st.gate.data.array();
  return y;
}

template <typename Scalar>
struct GluGrads {
  Tensor3<Scalar> input;
  Matrix<Scalar> w, b, v, c;
};

template <typename Scalar>
GluGrads<Scalar> glu_backward(const GluCache<Scalar>& st, int in_channels, const Matrix<Scalar>& w,
                              const Matrix<Scalar>& v, const Tensor3<Scalar>& grad_out,
                              KernelShape k) {
  const Grid<Scalar> d_linear = (grad_out.data.array() * st.gate.data.array()).matrix();
  const Grid<Scalar> d_gate_pre = (grad_out.data.array() * st.linear.data.array() *
                                   st.gate.data.array() * (Scalar(1) - st.gate.data.array()))
                                      .matrix();
  GluGrads<Scalar> g;
  g.w.noalias() = d_linear * st.cols.transpose();
  g.v.noalias() = d_gate_pre * st.cols.transpose();
  g.b = d_linear.rowwise().sum();
  g.c = d_gate_pre.rowwise().sum();
  Grid<Scalar> dcols = w.transpose() * d_linear;
  dcols.noalias() += v.transpose() * d_gate_pre;
  g.input = col2im(dcols, in_channels, grad_out.frames, grad_out.bins, k);
  return g;
}

// ---------------------------------------------------------------------------
// Frequency-only max pooling. Time resolution is untouched.

template <typename Scalar>
struct PoolResult {
  Tensor3<Scalar> output;
  std::vector<int> argmax;  // flat input column index per output element
};

template <typename Scalar>
PoolResult<Scalar> freq_max_pool_forward(const Tensor3<Scalar>& x, int factor) {
  if (factor < 1 || x.bins % factor != 0)
    throw Error(ErrorCode::kNotDivisible, std::to_string(x.bins) + " bins not divisible by " +
                                              std::to_string(factor));
  const int out_bins = x.bins / factor;
  PoolResult<Scalar> r;
  r.output = Tensor3<Scalar>(x.channels, x.frames, out_bins);
  r.argmax.resize(static_cast<std::size_t>(x.channels) * x.frames * out_bins);
  for (int c = 0; c < x.channels; ++c)
    for (int t = 0; t < x.frames; ++t)
      for (int j = 0; j < out_bins; ++j) {
        int best = t * x.bins + j * factor;
        for (int q = 1; q < factor; ++q) {
          const int idx = t * x.bins + j * factor + q;
          if (x.data(c, idx) > x.data(c, best)) best = idx;
        }
        r.output.data(c, t * out_bins + j) = x.data(c, best);
        r.argmax[(static_cast<std::size_t>(c) * x.frames + t) * out_bins + j] = best;
      }
  return r;
}

template <typename Scalar>
Tensor3<Scalar> freq_max_pool_backward(const std::vector<int>& argmax, int channels, int frames,
                                       int bins, const Tensor3<Scalar>& grad_out) {
  Tensor3<Scalar> dx(channels, frames, bins);
  const int per_channel = frames * grad_out.bins;
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < per_channel; ++i)
      dx.data(c, argmax[static_cast<std::size_t>(c) * per_channel + i]) += grad_out.data(c, i);
  return dx;
}

// ---------------------------------------------------------------------------
// Bidirectional GRU. Gate column order within the 3H blocks is [z, r, n]:
//   z = sig(x Wz + h Uz + bz),  r = sig(x Wr + h Ur + br)
//   n = tanh(x Wn + (r . h) Un + bn),  h' = (1 - z) . h + z . n

template <typename Scalar>
struct GruWeights {
  Matrix<Scalar> input;      // D x 3H
  Matrix<Scalar> recurrent;  // H x 3H
  Matrix<Scalar> bias;       // 1 x 3H

  int hidden() const { return static_cast<int>(recurrent.rows()); }
};

template <typename Scalar>
struct GruCache {
  Matrix<Scalar> z, r, n;    // T x H, in processing order
  Matrix<Scalar> h_prev;     // T x H
  Matrix<Scalar> h;          // T x H
};

/// Runs over the rows of `seq` in order (reverse = false) or back to front.
/// Output rows are aligned with input rows either way.
template <typename Scalar>
Matrix<Scalar> gru_forward(const Matrix<Scalar>& seq, const GruWeights<Scalar>& wts, bool reverse,
                           std::type_identity_t<GruCache<Scalar>>* cache = nullptr) {
  const int frames = static_cast<int>(seq.rows());
  const int hid = wts.hidden();
  if (wts.input.rows() != seq.cols() || wts.input.cols() != 3 * hid ||
      wts.recurrent.cols() != 3 * hid || wts.bias.cols() != 3 * hid)
    throw Error(ErrorCode::kShapeMismatch, "GRU weight shapes");
  Matrix<Scalar> pre = seq * wts.input;
  pre.rowwise() += wts.bias.row(0);

  GruCache<Scalar> local;
  GruCache<Scalar>& st = cache ? *cache : local;
  st.z.resize(frames, hid);
  st.r.resize(frames, hid);
  st.n.resize(frames, hid);
  st.h_prev.resize(frames, hid);
  st.h.resize(frames, hid);

  RowVector<Scalar> h = RowVector<Scalar>::Zero(hid);
  for (int step = 0; step < frames; ++step) {
    const int t = reverse ? frames - 1 - step : step;
    st.h_prev.row(t) = h;
    const RowVector<Scalar> zr = pre.row(t).head(2 * hid) + h * wts.recurrent.leftCols(2 * hid);
    const RowVector<Scalar> z = zr.head(hid).unaryExpr([](Scalar a) { return sigmoid(a); });
    const RowVector<Scalar> r = zr.tail(hid).unaryExpr([](Scalar a) { return sigmoid(a); });
    const RowVector<Scalar> rh = r.cwiseProduct(h);
    const RowVector<Scalar> n =
        (pre.row(t).tail(hid) + rh * wts.recurrent.rightCols(hid)).array().tanh().matrix();
    h = (RowVector<Scalar>::Ones(hid) - z).cwiseProduct(h) + z.cwiseProduct(n);
    st.z.row(t) = z;
    st.r.row(t) = r;
    st.n.row(t) = n;
    st.h.row(t) = h;
  }
  return st.h;
}

template <typename Scalar>
struct GruGrads {
  Matrix<Scalar> seq;
  GruWeights<Scalar> weights;
};

template <typename Scalar>
GruGrads<Scalar> gru_backward(const Matrix<Scalar>& seq, const GruWeights<Scalar>& wts,
                              bool reverse, const GruCache<Scalar>& st,
                              const Matrix<Scalar>& grad_out) {
  const int frames = static_cast<int>(seq.rows());
  const int hid = wts.hidden();
  const auto u_zr = wts.recurrent.leftCols(2 * hid);
  const auto u_n = wts.recurrent.rightCols(hid);

  Matrix<Scalar> d_pre = Matrix<Scalar>::Zero(frames, 3 * hid);
  GruGrads<Scalar> g;
  g.weights.recurrent = Matrix<Scalar>::Zero(hid, 3 * hid);
  RowVector<Scalar> dh_next = RowVector<Scalar>::Zero(hid);
  for (int step = frames - 1; step >= 0; --step) {
    const int t = reverse ? frames - 1 - step : step;
    const RowVector<Scalar> dh = grad_out.row(t) + dh_next;
    const auto z = st.z.row(t).array();
    const auto r = st.r.row(t).array();
    const auto n = st.n.row(t).array();
    const RowVector<Scalar> hp = st.h_prev.row(t);

    const RowVector<Scalar> dn_pre = (dh.array() * z * (Scalar(1) - n * n)).matrix();
    const RowVector<Scalar> dz_pre =
        (dh.array() * (n - hp.array()) * z * (Scalar(1) - z)).matrix();
    const RowVector<Scalar> d_rh = dn_pre * u_n.transpose();
    const RowVector<Scalar> dr_pre = (d_rh.array() * hp.array() * r * (Scalar(1) - r)).matrix();

    d_pre.row(t) << dz_pre, dr_pre, dn_pre;
    RowVector<Scalar> dzr(2 * hid);
    dzr << dz_pre, dr_pre;
    g.weights.recurrent.leftCols(2 * hid).noalias() += hp.transpose() * dzr;
    g.weights.recurrent.rightCols(hid).noalias() +=
        (r * hp.array()).matrix().transpose() * dn_pre;

    dh_next = (dh.array() * (Scalar(1) - z)).matrix() + (d_rh.array() * r).matrix() +
              dzr * u_zr.transpose();
  }
  g.weights.input.noalias() = seq.transpose() * d_pre;
  g.weights.bias = d_pre.colwise().sum();
  g.seq.noalias() = d_pre * wts.input.transpose();
  return g;
}

template <typename Scalar>
struct BgruCache {
  GruCache<Scalar> fwd, bwd;
};

/// T x D -> T x 2H: [forward states | backward states] per frame.
template <typename Scalar>
Matrix<Scalar> bgru_forward(const Matrix<Scalar>& seq, const GruWeights<Scalar>& fwd,
                            const GruWeights<Scalar>& bwd,
                            std::type_identity_t<BgruCache<Scalar>>* cache = nullptr) {
  Matrix<Scalar> out(seq.rows(), fwd.hidden() + bwd.hidden());
  out.leftCols(fwd.hidden()) = gru_forward(seq, fwd, false, cache ? &cache->fwd : nullptr);
  out.rightCols(bwd.hidden()) = gru_forward(seq, bwd, true, cache ? &cache->bwd : nullptr);
  return out;
}

template <typename Scalar>
struct BgruGrads {
  Matrix<Scalar> seq;
  GruWeights<Scalar> fwd, bwd;
};

template <typename Scalar>
BgruGrads<Scalar> bgru_backward(const Matrix<Scalar>& seq, const GruWeights<Scalar>& fwd,
                                const GruWeights<Scalar>& bwd, const BgruCache<Scalar>& st,
                                const Matrix<Scalar>& grad_out) {
  auto gf = gru_backward<Scalar>(seq, fwd, false, st.fwd, grad_out.leftCols(fwd.hidden()));
  auto gb = gru_backward<Scalar>(seq, bwd, true, st.bwd, grad_out.rightCols(bwd.hidden()));
  BgruGrads<Scalar> g;
  g.seq = gf.seq + gb.seq;
  g.fwd = std::move(gf.weights);
  g.bwd = std::move(gb.weights);
  return g;
}

// ---------------------------------------------------------------------------
// Output heads and clip pooling.

template <typename Scalar>
Matrix<Scalar> dense_forward(const Matrix<Scalar>& seq, const Matrix<Scalar>& weight,
                             const Matrix<Scalar>& bias) {
  if (weight.rows() != seq.cols() || bias.cols() != weight.cols())
    throw Error(ErrorCode::kShapeMismatch, "dense layer shape");
  Matrix<Scalar> out = seq * weight;
  out.rowwise() += bias.row(0);
  return out;
}

template <typename Scalar>
Matrix<Scalar> softmax_rows(const Matrix<Scalar>& logits) {
  return log_softmax_rows(logits).array().exp().matrix();
}

template <typename Scalar>
Matrix<Scalar> sigmoid_all(const Matrix<Scalar>& logits) {
  return logits.unaryExpr([](Scalar a) { return sigmoid(a); });
}

/// Per-class max over frames; `argmax` receives the winning frame (first on ties).
template <typename Scalar>
RowVector<Scalar> gmp_pool(const Matrix<Scalar>& frame_probs, std::vector<int>* argmax = nullptr) {
  RowVector<Scalar> out(frame_probs.cols());
  if (argmax) argmax->assign(static_cast<std::size_t>(frame_probs.cols()), 0);
  for (Eigen::Index k = 0; k < frame_probs.cols(); ++k) {
    Eigen::Index best = 0;
    for (Eigen::Index t = 1; t < frame_probs.rows(); ++t)
      if (frame_probs(t, k) > frame_probs(best, k)) best = t;
    out[k] = frame_probs(best, k);
    if (argmax) (*argmax)[static_cast<std::size_t>(k)] = static_cast<int>(best);
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> gmp_backward(const std::vector<int>& argmax, Eigen::Index frames,
                            const RowVector<Scalar>& grad_clip) {
  Matrix<Scalar> d = Matrix<Scalar>::Zero(frames, grad_clip.size());
  for (Eigen::Index k = 0; k < grad_clip.size(); ++k)
    d(argmax[static_cast<std::size_t>(k)], k) = grad_clip[k];
  return d;
}

template <typename Scalar>
RowVector<Scalar> gap_pool(const Matrix<Scalar>& frame_probs) {
  return frame_probs.colwise().mean();
}

template <typename Scalar>
Matrix<Scalar> gap_backward(Eigen::Index frames, const RowVector<Scalar>& grad_clip) {
  return (grad_clip / static_cast<Scalar>(frames)).replicate(frames, 1);
}

template <typename Scalar>
struct BceResult {
  Scalar loss = 0;
  RowVector<Scalar> grad;  // d loss / d pred
};

/// Mean binary cross-entropy over classes; predictions clipped to [eps, 1-eps].
template <typename Scalar>
BceResult<Scalar> bce_loss(const RowVector<Scalar>& pred, const RowVector<Scalar>& target,
                           Scalar eps = Scalar(1e-7)) {
  if (pred.size() != target.size()) throw Error(ErrorCode::kShapeMismatch, "BCE sizes differ");
  const auto k = static_cast<Scalar>(pred.size());
  BceResult<Scalar> r;
  r.grad.resize(pred.size());
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const Scalar p = std::clamp(pred[i], eps, Scalar(1) - eps);
    const Scalar t = target[i];
    r.loss -= t * std::log(p) + (Scalar(1) - t) * std::log(Scalar(1) - p);
    r.grad[i] = (p - t) / (p * (Scalar(1) - p)) / k;
  }
  r.loss /= k;
  return r;
}

// ---------------------------------------------------------------------------
// Dropout (inverted scaling) and ReLU.

template <typename Scalar, typename Rng>
Grid<Scalar> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Grid<Scalar> mask(rows, cols);
  std::bernoulli_distribution keep(1.0 - rate);
  const Scalar scale = Scalar(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? scale : Scalar(0);
  return mask;
}

template <typename Scalar>
void relu_inplace(Tensor3<Scalar>& x) {
  x.data = x.data.cwiseMax(Scalar(0));
}

}  // namespace glutag
