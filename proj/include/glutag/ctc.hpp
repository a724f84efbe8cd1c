#pragma once

// Connectionist temporal classification on a dense T x N posterior grid.
//
// Rows of the grid are frames, columns are tokens of the full output
// alphabet (labels plus one blank). All trellis arithmetic is carried out
// in the log domain.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "glutag/error.hpp"

namespace glutag {

using Token = int;
using TokenSeq = std::vector<Token>;

template <typename Scalar>
using Grid = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct Trellis {
  TokenSeq extended;   // blank-interleaved target, length 2U+1
  Grid<Scalar> alphas; // T x S, log forward variables
  Grid<Scalar> betas;  // T x S, log backward variables (include emission at t)
  Scalar log_total = -std::numeric_limits<Scalar>::infinity();
  bool feasible = false;
};

template <typename Scalar>
struct CtcLossResult {
  Scalar loss = std::numeric_limits<Scalar>::infinity();
  Grid<Scalar> grad;  // d loss / d logits
  bool feasible = false;
};

namespace detail {

template <typename Scalar>
inline Scalar log_add(Scalar a, Scalar b) {
  constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

// Skip transition s-2 -> s is allowed only onto a non-blank label that
// differs from the label two positions back.
inline bool can_skip(const TokenSeq& ext, std::size_t s, Token blank) {
  return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
}

// Runs both recursions on a matrix of log posteriors.
template <typename Scalar>
Trellis<Scalar> forward_backward(const Grid<Scalar>& log_y, const TokenSeq& ext,
                                 Token blank, bool feasible) {
  constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();
  const Eigen::Index frames = log_y.rows();
  const auto states = static_cast<Eigen::Index>(ext.size());

  Trellis<Scalar> tr;
  tr.extended = ext;
  tr.feasible = feasible;
  tr.alphas = Grid<Scalar>::Constant(frames, states, kNegInf);
  tr.betas = Grid<Scalar>::Constant(frames, states, kNegInf);
  if (!feasible) return tr;

  tr.alphas(0, 0) = log_y(0, ext[0]);
  if (states > 1) tr.alphas(0, 1) = log_y(0, ext[1]);
  for (Eigen::Index t = 1; t < frames; ++t) {
    for (Eigen::Index s = 0; s < states; ++s) {
      Scalar acc = tr.alphas(t - 1, s);
      if (s >= 1) acc = log_add(acc, tr.alphas(t - 1, s - 1));
      if (can_skip(ext, static_cast<std::size_t>(s), blank))
        acc = log_add(acc, tr.alphas(t - 1, s - 2));
      tr.alphas(t, s) = acc == kNegInf ? kNegInf : acc + log_y(t, ext[s]);
    }
  }

  const Eigen::Index last = frames - 1;
  tr.betas(last, states - 1) = log_y(last, ext[states - 1]);
  if (states > 1) tr.betas(last, states - 2) = log_y(last, ext[states - 2]);
  for (Eigen::Index t = last - 1; t >= 0; --t) {
    for (Eigen::Index s = 0; s < states; ++s) {
      Scalar acc = tr.betas(t + 1, s);
      if (s + 1 < states) acc = log_add(acc, tr.betas(t + 1, s + 1));
      if (s + 2 < states && can_skip(ext, static_cast<std::size_t>(s + 2), blank))
        acc = log_add(acc, tr.betas(t + 1, s + 2));
      tr.betas(t, s) = acc == kNegInf ? kNegInf : acc + log_y(t, ext[s]);
    }
  }

  Scalar total = tr.alphas(last, states - 1);
  if (states > 1) total = log_add(total, tr.alphas(last, states - 2));
  tr.log_total = total;
  if (total == kNegInf) tr.feasible = false;
  return tr;
}

}  // namespace detail

/// Blank, l1, blank, l2, ..., lU, blank.
inline TokenSeq extend_with_blanks(std::span<const Token> target, Token blank) {
  TokenSeq ext;
  ext.reserve(2 * target.size() + 1);
  ext.push_back(blank);
  for (Token label : target) {
    ext.push_back(label);
    ext.push_back(blank);
  }
  return ext;
}

/// Many-to-one path mapping: merge runs of identical ids, then drop blanks.
inline TokenSeq collapse(std::span<const Token> path, Token blank) {
  TokenSeq out;
  Token prev = -1;
  for (Token id : path) {
    if (id != prev && id != blank) out.push_back(id);
    prev = id;
  }
  return out;
}

/// Fewest frames able to emit `target`: one per label plus a blank between
/// every pair of identical neighbours.
inline Eigen::Index min_frames_for(std::span<const Token> target) {
  Eigen::Index need = static_cast<Eigen::Index>(target.size());
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++need;
  return need;
}

/// Total log probability of all paths through `grid` that collapse to
/// `target`. Infeasible targets yield log_total = -inf and feasible = false.
template <typename Derived>
Trellis<typename Derived::Scalar> ctc_log_prob(const Eigen::MatrixBase<Derived>& grid,
                                               std::span<const Token> target, Token blank) {
  using Scalar = typename Derived::Scalar;
  const TokenSeq ext = extend_with_blanks(target, blank);
  const bool feasible = grid.rows() >= 1 && grid.rows() >= min_frames_for(target);
  Grid<Scalar> log_y = grid.array().log().matrix();
  return detail::forward_backward<Scalar>(log_y, ext, blank, feasible);
}

/// Row-wise log-softmax.
template <typename Derived>
Grid<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Grid<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const Scalar peak = logits.row(t).maxCoeff();
    const Scalar lse = peak + std::log((logits.row(t).array() - peak).exp().sum());
    out.row(t) = logits.row(t).array() - lse;
  }
  return out;
}

/// CTC negative log likelihood after a row softmax of `logits`, and its
/// gradient with respect to the logits. Infeasible targets give
/// loss = +inf, a zero gradient and feasible = false.
template <typename Derived>
CtcLossResult<typename Derived::Scalar> ctc_loss_grad(const Eigen::MatrixBase<Derived>& logits,
                                                      std::span<const Token> target,
                                                      Token blank) {
  using Scalar = typename Derived::Scalar;
  constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();
  CtcLossResult<Scalar> res;
  res.grad = Grid<Scalar>::Zero(logits.rows(), logits.cols());

  const TokenSeq ext = extend_with_blanks(target, blank);
  const bool feasible = logits.rows() >= 1 && logits.rows() >= min_frames_for(target);
  if (!feasible) return res;

  const Grid<Scalar> log_y = log_softmax_rows(logits);
  const Trellis<Scalar> tr = detail::forward_backward<Scalar>(log_y, ext, blank, true);
  if (!tr.feasible) return res;

  res.feasible = true;
  res.loss = -tr.log_total;
  const auto states = static_cast<Eigen::Index>(ext.size());
  std::vector<Scalar> occupancy(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    std::fill(occupancy.begin(), occupancy.end(), kNegInf);
    for (Eigen::Index s = 0; s < states; ++s) {
      auto& slot = occupancy[static_cast<std::size_t>(ext[s])];
      slot = detail::log_add(slot, tr.alphas(t, s) + tr.betas(t, s));
    }
    for (Eigen::Index k = 0; k < logits.cols(); ++k) {
      const Scalar y = std::exp(log_y(t, k));
      const Scalar occ = occupancy[static_cast<std::size_t>(k)];
      const Scalar target_mass =
          occ == kNegInf ? Scalar(0) : std::exp(occ - log_y(t, k) - tr.log_total);
      res.grad(t, k) = y - target_mass;
    }
  }
  return res;
}

/// Per-frame argmax (lowest id wins ties) followed by collapse.
template <typename Derived>
TokenSeq best_path_decode(const Eigen::MatrixBase<Derived>& grid, Token blank) {
  TokenSeq path(static_cast<std::size_t>(grid.rows()));
  for (Eigen::Index t = 0; t < grid.rows(); ++t) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < grid.cols(); ++k)
      if (grid(t, k) > grid(t, best)) best = k;
    path[static_cast<std::size_t>(t)] = static_cast<Token>(best);
  }
  return collapse(path, blank);
}

/// Exhaustive oracle: sums the probability of every path of length T whose
/// collapse equals `target`. Throws TOO_LARGE beyond 10^6 paths.
template <typename Derived>
typename Derived::Scalar brute_force_total_prob(const Eigen::MatrixBase<Derived>& grid,
                                                std::span<const Token> target, Token blank) {
  using Scalar = typename Derived::Scalar;
  const auto frames = static_cast<std::size_t>(grid.rows());
  const auto width = static_cast<std::size_t>(grid.cols());
  double count = std::pow(static_cast<double>(width), static_cast<double>(frames));
  if (count > 1e6) throw Error(ErrorCode::kTooLarge, "brute force over more than 1e6 paths");

  const TokenSeq want(target.begin(), target.end());
  std::vector<Token> path(frames, 0);
  Scalar total = 0;
  for (;;) {
    if (collapse(path, blank) == want) {
      Scalar p = 1;
      for (std::size_t t = 0; t < frames; ++t)
        p *= grid(static_cast<Eigen::Index>(t), path[t]);
      total += p;
    }
    std::size_t pos = 0;
    while (pos < frames && ++path[pos] == static_cast<Token>(width)) path[pos++] = 0;
    if (pos == frames) break;
  }
  return total;
}

}  // namespace glutag
