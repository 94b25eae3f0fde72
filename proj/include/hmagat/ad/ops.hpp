#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmagat/ad/tape.hpp"

// Differentiable primitives over BasicVar. Shapes follow Eigen conventions: a batch of vectors is
// a matrix with one row per item, so a linear map is `matmul(x, W)` with W of shape (in, out).
namespace hmagat::ad {

inline constexpr double kLeakySlope = 0.2;

enum class Axis { kRows, kCols };  // kRows reduces over rows (result 1 x cols)

namespace detail {

template <typename S>
using Mat = typename BasicTape<S>::Matrix;

inline void require(bool cond, const char* op, const char* what) {
  if (!cond) throw std::invalid_argument(std::string(op) + ": " + what);
}

template <typename S>
BasicTape<S>* same_tape(const BasicVar<S>& a, const BasicVar<S>& b) {
  require(a.tape() == b.tape(), "ad", "operands live on different tapes");
  return a.tape();
}

template <typename S, typename F, typename D>
BasicVar<S> unary(const BasicVar<S>& a, F f, D df) {
  Mat<S> out = a.value().unaryExpr(f);
  return a.tape()->record(out, {a}, [a, out, df](BasicTape<S>& t, const Mat<S>& g) {
    t.accumulate(a, g.cwiseProduct(df(a.value(), out)));
  });
}

}  // namespace detail

template <typename S>
BasicVar<S> matmul(const BasicVar<S>& a, const BasicVar<S>& b) {
  auto* t = detail::same_tape(a, b);
  detail::require(a.cols() == b.rows(), "matmul", "inner dimensions differ");
  return t->record(a.value() * b.value(), {a, b}, [a, b](BasicTape<S>& tp, const detail::Mat<S>& g) {
    if (a.requires_grad()) tp.accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) tp.accumulate(b, a.value().transpose() * g);
  });
}

template <typename S>
BasicVar<S> add(const BasicVar<S>& a, const BasicVar<S>& b) {
  auto* t = detail::same_tape(a, b);
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add", "shape mismatch");
  return t->record(a.value() + b.value(), {a, b}, [a, b](BasicTape<S>& tp, const detail::Mat<S>& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

template <typename S>
BasicVar<S> sub(const BasicVar<S>& a, const BasicVar<S>& b) {
  auto* t = detail::same_tape(a, b);
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "sub", "shape mismatch");
  return t->record(a.value() - b.value(), {a, b}, [a, b](BasicTape<S>& tp, const detail::Mat<S>& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, -g);
  });
}

// a (n x c) + row (1 x c) broadcast over rows.
template <typename S>
BasicVar<S> add_row(const BasicVar<S>& a, const BasicVar<S>& row) {
  auto* t = detail::same_tape(a, row);
  detail::require(row.rows() == 1 && row.cols() == a.cols(), "add_row", "bias must be 1 x cols");
  detail::Mat<S> out = a.value().rowwise() + row.value().row(0);
  return t->record(std::move(out), {a, row}, [a, row](BasicTape<S>& tp, const detail::Mat<S>& g) {
    tp.accumulate(a, g);
    tp.accumulate(row, g.colwise().sum());
  });
}

template <typename S>
BasicVar<S> scale(const BasicVar<S>& a, S factor) {
  return a.tape()->record(a.value() * factor, {a}, [a, factor](BasicTape<S>& t, const detail::Mat<S>& g) {
    t.accumulate(a, g * factor);
  });
}

template <typename S>
BasicVar<S> hadamard(const BasicVar<S>& a, const BasicVar<S>& b) {
  auto* t = detail::same_tape(a, b);
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard", "shape mismatch");
  return t->record(a.value().cwiseProduct(b.value()), {a, b},
                   [a, b](BasicTape<S>& tp, const detail::Mat<S>& g) {
                     if (a.requires_grad()) tp.accumulate(a, g.cwiseProduct(b.value()));
                     if (b.requires_grad()) tp.accumulate(b, g.cwiseProduct(a.value()));
                   });
}

// Row i of `a` scaled by weights(i, 0).
template <typename S>
BasicVar<S> mul_rows(const BasicVar<S>& a, const BasicVar<S>& weights) {
  auto* t = detail::same_tape(a, weights);
  detail::require(weights.cols() == 1 && weights.rows() == a.rows(), "mul_rows", "weights must be n x 1");
  detail::Mat<S> out = a.value().array().colwise() * weights.value().col(0).array();
  return t->record(std::move(out), {a, weights}, [a, weights](BasicTape<S>& tp, const detail::Mat<S>& g) {
    if (a.requires_grad()) {
      detail::Mat<S> ga = g.array().colwise() * weights.value().col(0).array();
      tp.accumulate(a, ga);
    }
    if (weights.requires_grad()) {
      tp.accumulate(weights, g.cwiseProduct(a.value()).rowwise().sum());
    }
  });
}

// Per-row inner product: (n x c), (n x c) -> (n x 1).
template <typename S>
BasicVar<S> row_dot(const BasicVar<S>& a, const BasicVar<S>& b) {
  auto* t = detail::same_tape(a, b);
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "row_dot", "shape mismatch");
  detail::Mat<S> out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return t->record(std::move(out), {a, b}, [a, b](BasicTape<S>& tp, const detail::Mat<S>& g) {
    if (a.requires_grad()) {
      detail::Mat<S> ga = b.value().array().colwise() * g.col(0).array();
      tp.accumulate(a, ga);
    }
    if (b.requires_grad()) {
      detail::Mat<S> gb = a.value().array().colwise() * g.col(0).array();
      tp.accumulate(b, gb);
    }
  });
}

template <typename S>
BasicVar<S> concat_cols(const std::vector<BasicVar<S>>& parts) {
  detail::require(!parts.empty(), "concat_cols", "no inputs");
  auto* t = parts.front().tape();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    detail::require(p.tape() == t && p.rows() == parts.front().rows(), "concat_cols", "row mismatch");
    cols += p.cols();
  }
  detail::Mat<S> out(parts.front().rows(), cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return t->record(std::move(out), parts, [parts](BasicTape<S>& tp, const detail::Mat<S>& g) {
    Eigen::Index off = 0;
    for (const auto& p : parts) {
      tp.accumulate(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

template <typename S>
BasicVar<S> concat_rows(const std::vector<BasicVar<S>>& parts) {
  detail::require(!parts.empty(), "concat_rows", "no inputs");
  auto* t = parts.front().tape();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    detail::require(p.tape() == t && p.cols() == parts.front().cols(), "concat_rows", "column mismatch");
    rows += p.rows();
  }
  detail::Mat<S> out(rows, parts.front().cols());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return t->record(std::move(out), parts, [parts](BasicTape<S>& tp, const detail::Mat<S>& g) {
    Eigen::Index off = 0;
    for (const auto& p : parts) {
      tp.accumulate(p, g.middleRows(off, p.rows()));
      off += p.rows();
    }
  });
}

template <typename S>
BasicVar<S> slice_cols(const BasicVar<S>& a, Eigen::Index start, Eigen::Index count) {
  detail::require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols", "range out of bounds");
  return a.tape()->record(a.value().middleCols(start, count), {a},
                          [a, start, count](BasicTape<S>& t, const detail::Mat<S>& g) {
                            detail::Mat<S> full = detail::Mat<S>::Zero(a.rows(), a.cols());
                            full.middleCols(start, count) = g;
                            t.accumulate(a, full);
                          });
}

// Row selection by index (repeats allowed): out.row(k) = a.row(index[k]).
template <typename S>
BasicVar<S> gather_rows(const BasicVar<S>& a, const std::vector<int>& index) {
  detail::Mat<S> out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    detail::require(index[k] >= 0 && index[k] < a.rows(), "gather_rows", "index out of range");
    out.row(static_cast<Eigen::Index>(k)) = a.value().row(index[k]);
  }
  return a.tape()->record(std::move(out), {a}, [a, index](BasicTape<S>& t, const detail::Mat<S>& g) {
    detail::Mat<S> full = detail::Mat<S>::Zero(a.rows(), a.cols());
    for (std::size_t k = 0; k < index.size(); ++k) full.row(index[k]) += g.row(static_cast<Eigen::Index>(k));
    t.accumulate(a, full);
  });
}

template <typename S>
BasicVar<S> sum(const BasicVar<S>& a) {
  detail::Mat<S> out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->record(std::move(out), {a}, [a](BasicTape<S>& t, const detail::Mat<S>& g) {
    t.accumulate(a, detail::Mat<S>::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

template <typename S>
BasicVar<S> sum(const BasicVar<S>& a, Axis axis) {
  if (axis == Axis::kRows) {
    return a.tape()->record(a.value().colwise().sum(), {a}, [a](BasicTape<S>& t, const detail::Mat<S>& g) {
      detail::Mat<S> full = g.replicate(a.rows(), 1);
      t.accumulate(a, full);
    });
  }
  return a.tape()->record(a.value().rowwise().sum(), {a}, [a](BasicTape<S>& t, const detail::Mat<S>& g) {
    detail::Mat<S> full = g.replicate(1, a.cols());
    t.accumulate(a, full);
  });
}

template <typename S>
BasicVar<S> mean(const BasicVar<S>& a) {
  detail::require(a.value().size() > 0, "mean", "empty input");
  return scale(sum(a), S(1) / static_cast<S>(a.value().size()));
}

template <typename S>
BasicVar<S> mean(const BasicVar<S>& a, Axis axis) {
  const Eigen::Index n = axis == Axis::kRows ? a.rows() : a.cols();
  detail::require(n > 0, "mean", "empty axis");
  return scale(sum(a, axis), S(1) / static_cast<S>(n));
}

// out.row(s) = sum of a.row(k) with segment[k] == s; empty segments give zero rows.
template <typename S>
BasicVar<S> segment_sum(const BasicVar<S>& a, const std::vector<int>& segment, int num_segments) {
  detail::require(static_cast<Eigen::Index>(segment.size()) == a.rows(), "segment_sum", "segment ids must match rows");
  detail::Mat<S> out = detail::Mat<S>::Zero(num_segments, a.cols());
  for (std::size_t k = 0; k < segment.size(); ++k) {
    detail::require(segment[k] >= 0 && segment[k] < num_segments, "segment_sum", "segment id out of range");
    out.row(segment[k]) += a.value().row(static_cast<Eigen::Index>(k));
  }
  return a.tape()->record(std::move(out), {a}, [a, segment](BasicTape<S>& t, const detail::Mat<S>& g) {
    detail::Mat<S> ga(a.rows(), a.cols());
    for (std::size_t k = 0; k < segment.size(); ++k) ga.row(static_cast<Eigen::Index>(k)) = g.row(segment[k]);
    t.accumulate(a, ga);
  });
}

// Segment mean; empty segments give zero rows.
template <typename S>
BasicVar<S> segment_mean(const BasicVar<S>& a, const std::vector<int>& segment, int num_segments) {
  std::vector<S> count(num_segments, S(0));
  for (int s : segment) {
    detail::require(s >= 0 && s < num_segments, "segment_mean", "segment id out of range");
    count[s] += S(1);
  }
  detail::Mat<S> inv(static_cast<Eigen::Index>(segment.size()), 1);
  for (std::size_t k = 0; k < segment.size(); ++k) inv(static_cast<Eigen::Index>(k), 0) = S(1) / count[segment[k]];
  auto weights = a.tape()->constant(std::move(inv));
  return segment_sum(mul_rows(a, weights), segment, num_segments);
}

template <typename S>
BasicVar<S> relu(const BasicVar<S>& a) {
  return detail::unary(
      a, [](S v) { return v > S(0) ? v : S(0); },
      [](const detail::Mat<S>& x, const detail::Mat<S>&) -> detail::Mat<S> {
        return (x.array() > S(0)).template cast<S>();
      });
}

template <typename S>
BasicVar<S> leaky_relu(const BasicVar<S>& a, S slope = S(kLeakySlope)) {
  return detail::unary(
      a, [slope](S v) { return v > S(0) ? v : slope * v; },
      [slope](const detail::Mat<S>& x, const detail::Mat<S>&) -> detail::Mat<S> {
        return x.unaryExpr([slope](S v) { return v > S(0) ? S(1) : slope; });
      });
}

template <typename S>
BasicVar<S> sigmoid(const BasicVar<S>& a) {
  return detail::unary(
      a,
      [](S v) {
        if (v >= S(0)) return S(1) / (S(1) + std::exp(-v));
        const S e = std::exp(v);
        return e / (S(1) + e);
      },
      [](const detail::Mat<S>&, const detail::Mat<S>& y) -> detail::Mat<S> {
        return y.array() * (S(1) - y.array());
      });
}

template <typename S>
BasicVar<S> tanh(const BasicVar<S>& a) {
  return detail::unary(
      a, [](S v) { return std::tanh(v); },
      [](const detail::Mat<S>&, const detail::Mat<S>& y) -> detail::Mat<S> {
        return S(1) - y.array().square();
      });
}

// Softmax of a column of scores within each segment independently.
template <typename S>
BasicVar<S> segment_softmax(const BasicVar<S>& scores, const std::vector<int>& segment, int num_segments) {
  detail::require(scores.cols() == 1, "segment_softmax", "scores must be n x 1");
  detail::require(static_cast<Eigen::Index>(segment.size()) == scores.rows(), "segment_softmax",
                  "segment ids must match rows");
  const auto& x = scores.value();
  std::vector<S> peak(num_segments, -std::numeric_limits<S>::infinity());
  for (std::size_t k = 0; k < segment.size(); ++k) {
    detail::require(segment[k] >= 0 && segment[k] < num_segments, "segment_softmax", "segment id out of range");
    peak[segment[k]] = std::max(peak[segment[k]], x(static_cast<Eigen::Index>(k), 0));
  }
  detail::Mat<S> out(x.rows(), 1);
  std::vector<S> total(num_segments, S(0));
  for (std::size_t k = 0; k < segment.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    out(r, 0) = std::exp(x(r, 0) - peak[segment[k]]);
    total[segment[k]] += out(r, 0);
  }
  for (std::size_t k = 0; k < segment.size(); ++k) out(static_cast<Eigen::Index>(k), 0) /= total[segment[k]];
  return scores.tape()->record(out, {scores}, [scores, segment, num_segments, out](BasicTape<S>& t,
                                                                                  const detail::Mat<S>& g) {
    std::vector<S> dot(num_segments, S(0));
    for (std::size_t k = 0; k < segment.size(); ++k) {
      const auto r = static_cast<Eigen::Index>(k);
      dot[segment[k]] += out(r, 0) * g(r, 0);
    }
    detail::Mat<S> gin(out.rows(), 1);
    for (std::size_t k = 0; k < segment.size(); ++k) {
      const auto r = static_cast<Eigen::Index>(k);
      gin(r, 0) = out(r, 0) * (g(r, 0) - dot[segment[k]]);
    }
    t.accumulate(scores, gin);
  });
}

// Row-wise log-softmax.
template <typename S>
BasicVar<S> log_softmax(const BasicVar<S>& a) {
  const auto& x = a.value();
  detail::Mat<S> out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S m = x.row(r).maxCoeff();
    const S lse = m + std::log((x.row(r).array() - m).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  return a.tape()->record(out, {a}, [a, out](BasicTape<S>& t, const detail::Mat<S>& g) {
    detail::Mat<S> p = out.array().exp();
    detail::Mat<S> gin = g - (p.array().colwise() * g.rowwise().sum().array()).matrix();
    t.accumulate(a, gin);
  });
}

// Mean over rows of -log softmax(logits)[target].
template <typename S>
BasicVar<S> cross_entropy(const BasicVar<S>& logits, const std::vector<int>& targets) {
  detail::require(static_cast<Eigen::Index>(targets.size()) == logits.rows() && !targets.empty(),
                  "cross_entropy", "one target per row required");
  const auto& x = logits.value();
  detail::Mat<S> prob(x.rows(), x.cols());
  S loss = S(0);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const int c = targets[static_cast<std::size_t>(r)];
    detail::require(c >= 0 && c < x.cols(), "cross_entropy", "target out of range");
    const S m = x.row(r).maxCoeff();
    const S lse = m + std::log((x.row(r).array() - m).exp().sum());
    prob.row(r) = (x.row(r).array() - lse).exp();
    loss += lse - x(r, c);
  }
  const S n = static_cast<S>(x.rows());
  detail::Mat<S> out(1, 1);
  out(0, 0) = loss / n;
  return logits.tape()->record(std::move(out), {logits},
                               [logits, targets, prob, n](BasicTape<S>& t, const detail::Mat<S>& g) {
                                 detail::Mat<S> gin = prob;
                                 for (std::size_t r = 0; r < targets.size(); ++r) {
                                   gin(static_cast<Eigen::Index>(r), targets[r]) -= S(1);
                                 }
                                 t.accumulate(logits, gin * (g(0, 0) / n));
                               });
}

// Stride-1 2-D convolution with zero padding kernel/2 ("same" output size).
// x: N x (Cin*H*W), channel-major per row. weight: Cout x (Cin*K*K). bias: 1 x Cout.
// Result: N x (Cout*H*W).
template <typename S>
BasicVar<S> conv2d(const BasicVar<S>& x, const BasicVar<S>& weight, const BasicVar<S>& bias, int in_channels,
                   int height, int width, int kernel) {
  auto* t = detail::same_tape(x, weight);
  detail::require(bias.tape() == t, "conv2d", "bias on another tape");
  detail::require(kernel % 2 == 1, "conv2d", "kernel size must be odd");
  const int plane = height * width;
  const int patch = in_channels * kernel * kernel;
  detail::require(x.cols() == static_cast<Eigen::Index>(in_channels) * plane, "conv2d", "input width mismatch");
  detail::require(weight.cols() == patch, "conv2d", "weight width mismatch");
  const Eigen::Index out_channels = weight.rows();
  detail::require(bias.rows() == 1 && bias.cols() == out_channels, "conv2d", "bias must be 1 x Cout");
  const Eigen::Index batch = x.rows();
  const int pad = kernel / 2;

  // im2col over the whole batch: row (n*plane + p) holds the patch around pixel p of sample n.
  auto im2col = [=](const detail::Mat<S>& in) {
    detail::Mat<S> cols = detail::Mat<S>::Zero(batch * plane, patch);
    for (Eigen::Index n = 0; n < batch; ++n) {
      for (int c = 0; c < in_channels; ++c) {
        for (int ky = 0; ky < kernel; ++ky) {
          for (int kx = 0; kx < kernel; ++kx) {
            const int col = (c * kernel + ky) * kernel + kx;
            for (int y = 0; y < height; ++y) {
              const int sy = y + ky - pad;
              if (sy < 0 || sy >= height) continue;
              for (int xx = 0; xx < width; ++xx) {
                const int sx = xx + kx - pad;
                if (sx < 0 || sx >= width) continue;
                cols(n * plane + y * width + xx, col) = in(n, c * plane + sy * width + sx);
              }
            }
          }
        }
      }
    }
    return cols;
  };

  const detail::Mat<S> cols = im2col(x.value());
  detail::Mat<S> flat = cols * weight.value().transpose();
  flat.rowwise() += bias.value().row(0);
  detail::Mat<S> out(batch, out_channels * plane);
  for (Eigen::Index n = 0; n < batch; ++n) {
    for (Eigen::Index co = 0; co < out_channels; ++co) {
      out.block(n, co * plane, 1, plane) = flat.block(n * plane, co, plane, 1).transpose();
    }
  }

  return t->record(std::move(out), {x, weight, bias},
                   [=](BasicTape<S>& tp, const detail::Mat<S>& g) {
                     detail::Mat<S> gflat(batch * plane, out_channels);
                     for (Eigen::Index n = 0; n < batch; ++n) {
                       for (Eigen::Index co = 0; co < out_channels; ++co) {
                         gflat.block(n * plane, co, plane, 1) = g.block(n, co * plane, 1, plane).transpose();
                       }
                     }
                     if (bias.requires_grad()) tp.accumulate(bias, gflat.colwise().sum());
                     if (weight.requires_grad()) {
                       tp.accumulate(weight, gflat.transpose() * im2col(x.value()));
                     }
                     if (x.requires_grad()) {
                       const detail::Mat<S> gcols = gflat * weight.value();
                       detail::Mat<S> gx = detail::Mat<S>::Zero(batch, x.cols());
                       for (Eigen::Index n = 0; n < batch; ++n) {
                         for (int c = 0; c < in_channels; ++c) {
                           for (int ky = 0; ky < kernel; ++ky) {
                             for (int kx = 0; kx < kernel; ++kx) {
                               const int col = (c * kernel + ky) * kernel + kx;
                               for (int y = 0; y < height; ++y) {
                                 const int sy = y + ky - pad;
                                 if (sy < 0 || sy >= height) continue;
                                 for (int xx = 0; xx < width; ++xx) {
                                   const int sx = xx + kx - pad;
                                   if (sx < 0 || sx >= width) continue;
                                   gx(n, c * plane + sy * width + sx) += gcols(n * plane + y * width + xx, col);
                                 }
                               }
                             }
                           }
                         }
                       }
                       tp.accumulate(x, gx);
                     }
                   });
}

}  // namespace hmagat::ad
