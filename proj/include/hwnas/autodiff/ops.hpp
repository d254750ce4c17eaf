#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "hwnas/autodiff/rng.hpp"
#include "hwnas/autodiff/tape.hpp"
#include "hwnas/autodiff/tensor.hpp"

namespace hwnas {

namespace detail {

/// Row-major view of a contiguous buffer.
template <class T>
auto matrix_map(T* data, std::size_t rows, std::size_t cols) {
  using M = Eigen::Matrix<std::remove_const_t<T>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Map = std::conditional_t<std::is_const_v<T>, Eigen::Map<const M>, Eigen::Map<M>>;
  return Map(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <class T>
void require_same_tape(Var<T> a, Var<T> b) {
  if (a.tape != b.tape) throw std::invalid_argument("operands recorded on different tapes");
}

template <class T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(t.shape()));
  }
}

inline std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw ShapeError("stride must be positive");
  if (k == 0 || k > in + 2 * pad) {
    throw ShapeError("kernel extent " + std::to_string(k) + " exceeds padded input " +
                     std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - k) / stride + 1;
}

template <class T>
void add_into(std::vector<T>* sink, std::span<const T> g) {
  if (sink == nullptr) return;
  for (std::size_t i = 0; i < g.size(); ++i) (*sink)[i] += g[i];
}

}  // namespace detail

/// Output spatial extent of a strided, zero-padded window.
inline std::size_t conv_output_extent(std::size_t in, std::size_t k, std::size_t stride,
                                      std::size_t pad) {
  return detail::conv_extent(in, k, stride, pad);
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

/// 2-D convolution. input [N,Cin,H,W], weight [Cout,Kx,Ky,Cin] -> [N,Cout,Ox,Oy].
///
/// Lowered to an im2col matrix whose inner index order (kx, ky, ci) matches the
/// weight layout, so one output element is a single row-by-filter product.
template <class T>
Var<T> conv2d(Var<T> input, Var<T> weight, std::size_t stride, std::size_t padding) {
  detail::require_same_tape(input, weight);
  const auto& x = input.value();
  const auto& w = weight.value();
  detail::require_rank(x, 4, "conv2d input");
  detail::require_rank(w, 4, "conv2d weight");
  const std::size_t n_batch = x.extent(0), cin = x.extent(1), h = x.extent(2), wd = x.extent(3);
  const std::size_t cout = w.extent(0), kx = w.extent(1), ky = w.extent(2);
  if (w.extent(3) != cin) {
    throw ShapeError("conv2d: weight expects " + std::to_string(w.extent(3)) +
                     " input channels, input has " + std::to_string(cin));
  }
  const std::size_t ox = detail::conv_extent(h, kx, stride, padding);
  const std::size_t oy = detail::conv_extent(wd, ky, stride, padding);
  const std::size_t kdim = kx * ky * cin;
  const std::size_t rows = n_batch * ox * oy;

  auto cols = std::make_shared<std::vector<T>>(rows * kdim, T{0});
  {
    const T* xv = x.values().data();
    T* cv = cols->data();
    for (std::size_t n = 0; n < n_batch; ++n)
      for (std::size_t i = 0; i < ox; ++i)
        for (std::size_t j = 0; j < oy; ++j) {
          T* row = cv + ((n * ox + i) * oy + j) * kdim;
          for (std::size_t a = 0; a < kx; ++a) {
            const std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(i * stride + a) -
                                      static_cast<std::ptrdiff_t>(padding);
            if (xi < 0 || xi >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t b = 0; b < ky; ++b) {
              const std::ptrdiff_t yj = static_cast<std::ptrdiff_t>(j * stride + b) -
                                        static_cast<std::ptrdiff_t>(padding);
              if (yj < 0 || yj >= static_cast<std::ptrdiff_t>(wd)) continue;
              T* dst = row + (a * ky + b) * cin;
              const T* src = xv + n * cin * h * wd + static_cast<std::size_t>(xi) * wd +
                             static_cast<std::size_t>(yj);
              for (std::size_t c = 0; c < cin; ++c) dst[c] = src[c * h * wd];
            }
          }
        }
  }

  // prod[r, co] = sum_k cols[r, k] * w[co, k]
  std::vector<T> prod(rows * cout);
  detail::matrix_map(prod.data(), rows, cout).noalias() =
      detail::matrix_map(cols->data(), rows, kdim) * detail::matrix_map(w.values().data(), cout, kdim).transpose();

  Tensor<T> out(Shape{n_batch, cout, ox, oy});
  const std::size_t plane = ox * oy;
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t p = 0; p < plane; ++p)
      for (std::size_t co = 0; co < cout; ++co)
        out[(n * cout + co) * plane + p] = prod[(n * plane + p) * cout + co];

  const std::size_t in_id = input.id, w_id = weight.id;
  return input.tape->record(
      std::move(out), {in_id, w_id},
      [=](Tape<T>& tape, std::span<const T> gout) {
        std::vector<T> g(rows * cout);
        for (std::size_t n = 0; n < n_batch; ++n)
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t p = 0; p < plane; ++p)
              g[(n * plane + p) * cout + co] = gout[(n * cout + co) * plane + p];

        const auto gmat = detail::matrix_map(g.data(), rows, cout);
        if (auto* gw = tape.grad_sink(w_id)) {
          detail::matrix_map(gw->data(), cout, kdim).noalias() +=
              gmat.transpose() * detail::matrix_map(cols->data(), rows, kdim);
        }

        if (auto* gx = tape.grad_sink(in_id)) {
          // dcols[r, k] = sum_co g[r, co] * w[co, k], then scattered back (col2im)
          std::vector<T> dcols(rows * kdim);
          detail::matrix_map(dcols.data(), rows, kdim).noalias() =
              gmat * detail::matrix_map(tape.value(w_id).values().data(), cout, kdim);
          for (std::size_t n = 0; n < n_batch; ++n)
            for (std::size_t i = 0; i < ox; ++i)
              for (std::size_t j = 0; j < oy; ++j) {
                const T* dcol = dcols.data() + ((n * ox + i) * oy + j) * kdim;
                for (std::size_t a = 0; a < kx; ++a) {
                  const std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(i * stride + a) -
                                            static_cast<std::ptrdiff_t>(padding);
                  if (xi < 0 || xi >= static_cast<std::ptrdiff_t>(h)) continue;
                  for (std::size_t b = 0; b < ky; ++b) {
                    const std::ptrdiff_t yj = static_cast<std::ptrdiff_t>(j * stride + b) -
                                              static_cast<std::ptrdiff_t>(padding);
                    if (yj < 0 || yj >= static_cast<std::ptrdiff_t>(wd)) continue;
                    const T* src = dcol + (a * ky + b) * cin;
                    T* dst = gx->data() + n * cin * h * wd + static_cast<std::size_t>(xi) * wd +
                             static_cast<std::size_t>(yj);
                    for (std::size_t c = 0; c < cin; ++c) dst[c * h * wd] += src[c];
                  }
                }
              }
        }
      });
}

/// Per-channel 2-D convolution. input [N,C,H,W], weight [C,Kx,Ky] -> [N,C,Ox,Oy].
template <class T>
Var<T> depthwise_conv2d(Var<T> input, Var<T> weight, std::size_t stride, std::size_t padding) {
  detail::require_same_tape(input, weight);
  const auto& x = input.value();
  const auto& w = weight.value();
  detail::require_rank(x, 4, "depthwise_conv2d input");
  detail::require_rank(w, 3, "depthwise_conv2d weight");
  const std::size_t n_batch = x.extent(0), ch = x.extent(1), h = x.extent(2), wd = x.extent(3);
  if (w.extent(0) != ch) {
    throw ShapeError("depthwise_conv2d: weight has " + std::to_string(w.extent(0)) +
                     " channels, input has " + std::to_string(ch));
  }
  const std::size_t kx = w.extent(1), ky = w.extent(2);
  const std::size_t ox = detail::conv_extent(h, kx, stride, padding);
  const std::size_t oy = detail::conv_extent(wd, ky, stride, padding);

  // Visits every (output, input, tap) triple that lands inside the input.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t n = 0; n < n_batch; ++n)
      for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t in_base = (n * ch + c) * h * wd;
        const std::size_t out_base = (n * ch + c) * ox * oy;
        for (std::size_t a = 0; a < kx; ++a)
          for (std::size_t b = 0; b < ky; ++b) {
            const std::size_t w_idx = (c * kx + a) * ky + b;
            for (std::size_t i = 0; i < ox; ++i) {
              const std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(i * stride + a) -
                                        static_cast<std::ptrdiff_t>(padding);
              if (xi < 0 || xi >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t j = 0; j < oy; ++j) {
                const std::ptrdiff_t yj = static_cast<std::ptrdiff_t>(j * stride + b) -
                                          static_cast<std::ptrdiff_t>(padding);
                if (yj < 0 || yj >= static_cast<std::ptrdiff_t>(wd)) continue;
                fn(out_base + i * oy + j,
                   in_base + static_cast<std::size_t>(xi) * wd + static_cast<std::size_t>(yj), w_idx);
              }
            }
          }
      }
  };

  Tensor<T> out(Shape{n_batch, ch, ox, oy});
  for_each_tap([&](std::size_t o, std::size_t in, std::size_t k) { out[o] += w[k] * x[in]; });

  const std::size_t in_id = input.id, w_id = weight.id;
  return input.tape->record(std::move(out), {in_id, w_id},
                            [=](Tape<T>& tape, std::span<const T> gout) {
                              const auto& xv = tape.value(in_id);
                              const auto& wv = tape.value(w_id);
                              auto* gx = tape.grad_sink(in_id);
                              auto* gw = tape.grad_sink(w_id);
                              for_each_tap([&](std::size_t o, std::size_t in, std::size_t k) {
                                if (gx) (*gx)[in] += wv[k] * gout[o];
                                if (gw) (*gw)[k] += xv[in] * gout[o];
                              });
                            });
}

// ---------------------------------------------------------------------------
// Affine and pooling
// ---------------------------------------------------------------------------

/// input [N,F], weight [F,G], bias [G] -> [N,G].
template <class T>
Var<T> dense(Var<T> input, Var<T> weight, Var<T> bias) {
  detail::require_same_tape(input, weight);
  detail::require_same_tape(input, bias);
  const auto& x = input.value();
  const auto& w = weight.value();
  const auto& b = bias.value();
  detail::require_rank(x, 2, "dense input");
  detail::require_rank(w, 2, "dense weight");
  detail::require_rank(b, 1, "dense bias");
  const std::size_t n_batch = x.extent(0), f = x.extent(1), g = w.extent(1);
  if (w.extent(0) != f || b.extent(0) != g) {
    throw ShapeError("dense: input " + to_string(x.shape()) + " weight " + to_string(w.shape()) +
                     " bias " + to_string(b.shape()));
  }
  Tensor<T> out(Shape{n_batch, g});
  for (std::size_t n = 0; n < n_batch; ++n) {
    T* orow = out.values().data() + n * g;
    for (std::size_t j = 0; j < g; ++j) orow[j] = b[j];
    for (std::size_t i = 0; i < f; ++i) {
      const T a = x[n * f + i];
      const T* wrow = w.values().data() + i * g;
      for (std::size_t j = 0; j < g; ++j) orow[j] += a * wrow[j];
    }
  }
  const std::size_t x_id = input.id, w_id = weight.id, b_id = bias.id;
  return input.tape->record(std::move(out), {x_id, w_id, b_id},
                            [=](Tape<T>& tape, std::span<const T> gout) {
                              const auto& xv = tape.value(x_id);
                              const auto& wv = tape.value(w_id);
                              if (auto* gx = tape.grad_sink(x_id)) {
                                for (std::size_t n = 0; n < n_batch; ++n)
                                  for (std::size_t i = 0; i < f; ++i) {
                                    T acc{0};
                                    for (std::size_t j = 0; j < g; ++j)
                                      acc += gout[n * g + j] * wv[i * g + j];
                                    (*gx)[n * f + i] += acc;
                                  }
                              }
                              if (auto* gw = tape.grad_sink(w_id)) {
                                for (std::size_t n = 0; n < n_batch; ++n)
                                  for (std::size_t i = 0; i < f; ++i) {
                                    const T a = xv[n * f + i];
                                    for (std::size_t j = 0; j < g; ++j)
                                      (*gw)[i * g + j] += a * gout[n * g + j];
                                  }
                              }
                              if (auto* gb = tape.grad_sink(b_id)) {
                                for (std::size_t n = 0; n < n_batch; ++n)
                                  for (std::size_t j = 0; j < g; ++j) (*gb)[j] += gout[n * g + j];
                              }
                            });
}

/// Adds bias[c] to every element of channel c of an [N,C,...] tensor.
template <class T>
Var<T> add_channel_bias(Var<T> input, Var<T> bias) {
  detail::require_same_tape(input, bias);
  const auto& x = input.value();
  const auto& b = bias.value();
  if (x.rank() < 2 || b.rank() != 1 || b.extent(0) != x.extent(1)) {
    throw ShapeError("add_channel_bias: input " + to_string(x.shape()) + " bias " +
                     to_string(b.shape()));
  }
  const std::size_t n_batch = x.extent(0), ch = x.extent(1), inner = x.size() / (n_batch * ch);
  Tensor<T> out = x;
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t c = 0; c < ch; ++c) {
      T* p = out.values().data() + (n * ch + c) * inner;
      for (std::size_t k = 0; k < inner; ++k) p[k] += b[c];
    }
  const std::size_t x_id = input.id, b_id = bias.id;
  return input.tape->record(std::move(out), {x_id, b_id},
                            [=](Tape<T>& tape, std::span<const T> gout) {
                              detail::add_into(tape.grad_sink(x_id), gout);
                              if (auto* gb = tape.grad_sink(b_id)) {
                                for (std::size_t n = 0; n < n_batch; ++n)
                                  for (std::size_t c = 0; c < ch; ++c) {
                                    T acc{0};
                                    for (std::size_t k = 0; k < inner; ++k)
                                      acc += gout[(n * ch + c) * inner + k];
                                    (*gb)[c] += acc;
                                  }
                              }
                            });
}

/// [N,C,H,W] -> [N,C], spatial mean.
template <class T>
Var<T> global_avg_pool(Var<T> input) {
  const auto& x = input.value();
  detail::require_rank(x, 4, "global_avg_pool input");
  const std::size_t n_batch = x.extent(0), ch = x.extent(1), plane = x.extent(2) * x.extent(3);
  const T inv = T{1} / static_cast<T>(plane);
  Tensor<T> out(Shape{n_batch, ch});
  for (std::size_t nc = 0; nc < n_batch * ch; ++nc) {
    T acc{0};
    for (std::size_t p = 0; p < plane; ++p) acc += x[nc * plane + p];
    out[nc] = acc * inv;
  }
  const std::size_t x_id = input.id;
  return input.tape->record(std::move(out), {x_id}, [=](Tape<T>& tape, std::span<const T> gout) {
    if (auto* gx = tape.grad_sink(x_id)) {
      for (std::size_t nc = 0; nc < n_batch * ch; ++nc)
        for (std::size_t p = 0; p < plane; ++p) (*gx)[nc * plane + p] += gout[nc] * inv;
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

/// Backward uses the subgradient 1 at x == 0, so a channel silenced by a
/// zero mask still reports how the loss would react to reviving it.
template <class T>
Var<T> relu(Var<T> input) {
  Tensor<T> out = input.value();
  for (auto& v : out.values()) v = v > T{0} ? v : T{0};
  const std::size_t x_id = input.id;
  return input.tape->record(std::move(out), {x_id}, [=](Tape<T>& tape, std::span<const T> gout) {
    if (auto* gx = tape.grad_sink(x_id)) {
      const T* xv = tape.value(x_id).values().data();
      T* g = gx->data();
      for (std::size_t i = 0; i < gout.size(); ++i) g[i] += xv[i] >= T{0} ? gout[i] : T{0};
    }
  });
}

/// max(0, x) with gradient exactly 0 wherever x <= 0.
template <class T>
Var<T> positive_part(Var<T> input) {
  Tensor<T> out = input.value();
  for (auto& v : out.values()) v = v > T{0} ? v : T{0};
  const std::size_t x_id = input.id;
  return input.tape->record(std::move(out), {x_id}, [=](Tape<T>& tape, std::span<const T> gout) {
    if (auto* gx = tape.grad_sink(x_id)) {
      const auto& xv = tape.value(x_id);
      for (std::size_t i = 0; i < gout.size(); ++i)
        if (xv[i] > T{0}) (*gx)[i] += gout[i];
    }
  });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  if (a.shape() != b.shape()) {
    throw ShapeError("add: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t a_id = a.id, b_id = b.id;
  return a.tape->record(std::move(out), {a_id, b_id}, [=](Tape<T>& tape, std::span<const T> gout) {
    detail::add_into(tape.grad_sink(a_id), gout);
    detail::add_into(tape.grad_sink(b_id), gout);
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  if (a.shape() != b.shape()) {
    throw ShapeError("sub: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t a_id = a.id, b_id = b.id;
  return a.tape->record(std::move(out), {a_id, b_id}, [=](Tape<T>& tape, std::span<const T> gout) {
    detail::add_into(tape.grad_sink(a_id), gout);
    if (auto* gb = tape.grad_sink(b_id))
      for (std::size_t i = 0; i < gout.size(); ++i) (*gb)[i] -= gout[i];
  });
}

/// Elementwise product of equal shapes, or a rank-1 `b` broadcast along `axis`
/// of `a` (a mask of length C scaling every element of channel c).
template <class T>
Var<T> hadamard(Var<T> a, Var<T> b, std::size_t axis = 1) {
  detail::require_same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t a_id = a.id, b_id = b.id;
  if (av.shape() == bv.shape()) {
    Tensor<T> out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return a.tape->record(std::move(out), {a_id, b_id},
                          [=](Tape<T>& tape, std::span<const T> gout) {
                            const auto& x = tape.value(a_id);
                            const auto& y = tape.value(b_id);
                            if (auto* ga = tape.grad_sink(a_id))
                              for (std::size_t i = 0; i < gout.size(); ++i) (*ga)[i] += gout[i] * y[i];
                            if (auto* gb = tape.grad_sink(b_id))
                              for (std::size_t i = 0; i < gout.size(); ++i) (*gb)[i] += gout[i] * x[i];
                          });
  }
  if (bv.rank() != 1 || axis >= av.rank() || av.extent(axis) != bv.extent(0)) {
    throw ShapeError("hadamard: cannot broadcast " + to_string(bv.shape()) + " over axis " +
                     std::to_string(axis) + " of " + to_string(av.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= av.extent(d);
  for (std::size_t d = axis + 1; d < av.rank(); ++d) inner *= av.extent(d);
  const std::size_t ch = bv.extent(0);
  Tensor<T> out = av;
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t c = 0; c < ch; ++c) {
      T* p = out.values().data() + (o * ch + c) * inner;
      for (std::size_t k = 0; k < inner; ++k) p[k] *= bv[c];
    }
  return a.tape->record(std::move(out), {a_id, b_id}, [=](Tape<T>& tape, std::span<const T> gout) {
    const auto& x = tape.value(a_id);
    const auto& y = tape.value(b_id);
    auto* ga = tape.grad_sink(a_id);
    auto* gb = tape.grad_sink(b_id);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t base = (o * ch + c) * inner;
        if (ga)
          for (std::size_t k = 0; k < inner; ++k) (*ga)[base + k] += gout[base + k] * y[c];
        if (gb) {
          T acc{0};
          for (std::size_t k = 0; k < inner; ++k) acc += gout[base + k] * x[base + k];
          (*gb)[c] += acc;
        }
      }
  });
}

/// Elementwise product; alias of the equal-shape hadamard case.
template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  return hadamard(a, b);
}

template <class T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= factor;
  const std::size_t a_id = a.id;
  return a.tape->record(std::move(out), {a_id}, [=](Tape<T>& tape, std::span<const T> gout) {
    if (auto* ga = tape.grad_sink(a_id))
      for (std::size_t i = 0; i < gout.size(); ++i) (*ga)[i] += gout[i] * factor;
  });
}

template <class T>
Var<T> add_constant(Var<T> a, T offset) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v += offset;
  const std::size_t a_id = a.id;
  return a.tape->record(std::move(out), {a_id}, [=](Tape<T>& tape, std::span<const T> gout) {
    detail::add_into(tape.grad_sink(a_id), gout);
  });
}

/// |x|, with subgradient sign(x) and 0 at the kink.
template <class T>
Var<T> abs(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = std::abs(v);
  const std::size_t a_id = a.id;
  return a.tape->record(std::move(out), {a_id}, [=](Tape<T>& tape, std::span<const T> gout) {
    if (auto* ga = tape.grad_sink(a_id)) {
      const auto& x = tape.value(a_id);
      for (std::size_t i = 0; i < gout.size(); ++i) {
        if (x[i] > T{0}) (*ga)[i] += gout[i];
        else if (x[i] < T{0}) (*ga)[i] -= gout[i];
      }
    }
  });
}

/// Sum of all elements -> shape [1].
template <class T>
Var<T> sum(Var<T> a) {
  T acc{0};
  for (auto v : a.value().values()) acc += v;
  const std::size_t a_id = a.id;
  return a.tape->record(Tensor<T>::scalar(acc), {a_id}, [=](Tape<T>& tape, std::span<const T> gout) {
    if (auto* ga = tape.grad_sink(a_id))
      for (auto& g : *ga) g += gout[0];
  });
}

/// Sum of a list of scalars, left to right.
template <class T>
Var<T> add_all(Tape<T>& tape, std::span<const Var<T>> terms) {
  if (terms.empty()) return tape.constant(Tensor<T>::scalar(T{0}));
  Var<T> acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

/// Sum_i g[i] * branches[i] for equal-shape branches and coefficients g [M].
template <class T>
Var<T> weighted_sum(std::span<const Var<T>> branches, Var<T> g) {
  const auto& gv = g.value();
  detail::require_rank(gv, 1, "weighted_sum coefficients");
  if (branches.size() != gv.size() || branches.empty()) {
    throw ShapeError("weighted_sum: " + std::to_string(branches.size()) + " branches for " +
                     std::to_string(gv.size()) + " coefficients");
  }
  Tensor<T> out(branches[0].shape(), T{0});
  std::vector<std::size_t> ids{g.id};
  for (std::size_t i = 0; i < branches.size(); ++i) {
    detail::require_same_tape(branches[i], g);
    const auto& b = branches[i].value();
    if (b.shape() != out.shape()) throw ShapeError("weighted_sum: branch shapes differ");
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += gv[i] * b[k];
    ids.push_back(branches[i].id);
  }
  return g.tape->record(std::move(out), ids, [=](Tape<T>& tape, std::span<const T> gout) {
    const auto& coef = tape.value(ids[0]);
    auto* gg = tape.grad_sink(ids[0]);
    for (std::size_t i = 1; i < ids.size(); ++i) {
      const auto& b = tape.value(ids[i]);
      if (gg) {
        T acc{0};
        for (std::size_t k = 0; k < gout.size(); ++k) acc += gout[k] * b[k];
        (*gg)[i - 1] += acc;
      }
      if (auto* gb = tape.grad_sink(ids[i]))
        for (std::size_t k = 0; k < gout.size(); ++k) (*gb)[k] += coef[i - 1] * gout[k];
    }
  });
}

// ---------------------------------------------------------------------------
// Softmax family
// ---------------------------------------------------------------------------

/// softmax(x / temperature) over a rank-1 vector.
template <class T>
Var<T> softmax(Var<T> logits, T temperature = T{1}) {
  const auto& x = logits.value();
  detail::require_rank(x, 1, "softmax input");
  if (!(temperature > T{0})) throw std::invalid_argument("softmax temperature must be positive");
  const T mx = *std::max_element(x.values().begin(), x.values().end());
  Tensor<T> out(x.shape());
  T z{0};
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp((x[i] - mx) / temperature);
    z += out[i];
  }
  for (auto& v : out.values()) v /= z;
  const std::size_t x_id = logits.id;
  auto probs = std::make_shared<Tensor<T>>(out);
  return logits.tape->record(std::move(out), {x_id}, [=](Tape<T>& tape, std::span<const T> gout) {
    if (auto* gx = tape.grad_sink(x_id)) {
      T dot{0};
      for (std::size_t i = 0; i < gout.size(); ++i) dot += gout[i] * (*probs)[i];
      for (std::size_t i = 0; i < gout.size(); ++i)
        (*gx)[i] += (*probs)[i] * (gout[i] - dot) / temperature;
    }
  });
}

/// Mean over the batch of -log softmax(logits)[label].
template <class T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const int> labels) {
  const auto& x = logits.value();
  detail::require_rank(x, 2, "softmax_cross_entropy logits");
  const std::size_t n_batch = x.extent(0), k = x.extent(1);
  if (labels.size() != n_batch) throw ShapeError("softmax_cross_entropy: label count mismatch");
  auto probs = std::make_shared<std::vector<T>>(n_batch * k);
  std::vector<int> lab(labels.begin(), labels.end());
  T loss{0};
  for (std::size_t n = 0; n < n_batch; ++n) {
    if (lab[n] < 0 || static_cast<std::size_t>(lab[n]) >= k) {
      throw std::out_of_range("label " + std::to_string(lab[n]) + " outside [0," +
                              std::to_string(k) + ")");
    }
    const T* row = x.values().data() + n * k;
    const T mx = *std::max_element(row, row + k);
    T z{0};
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const T log_z = std::log(z) + mx;
    for (std::size_t j = 0; j < k; ++j) (*probs)[n * k + j] = std::exp(row[j] - log_z);
    loss += log_z - row[lab[n]];
  }
  loss /= static_cast<T>(n_batch);
  const std::size_t x_id = logits.id;
  return logits.tape->record(Tensor<T>::scalar(loss), {x_id},
                             [=](Tape<T>& tape, std::span<const T> gout) {
                               if (auto* gx = tape.grad_sink(x_id)) {
                                 const T s = gout[0] / static_cast<T>(n_batch);
                                 for (std::size_t n = 0; n < n_batch; ++n)
                                   for (std::size_t j = 0; j < k; ++j) {
                                     T g = (*probs)[n * k + j];
                                     if (static_cast<int>(j) == lab[n]) g -= T{1};
                                     (*gx)[n * k + j] += s * g;
                                   }
                               }
                             });
}

// ---------------------------------------------------------------------------
// Straight-through estimators
// ---------------------------------------------------------------------------

/// Index of the largest entry; ties go to the lowest index.
template <class T>
std::size_t argmax(std::span<const T> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

/// Forward: one-hot at the argmax. Backward: identity.
template <class T>
Var<T> ste_onehot_argmax(Var<T> scores) {
  const auto& s = scores.value();
  detail::require_rank(s, 1, "ste_onehot_argmax input");
  Tensor<T> out(s.shape(), T{0});
  out[argmax<T>(s.values())] = T{1};
  const std::size_t s_id = scores.id;
  return scores.tape->record(std::move(out), {s_id}, [=](Tape<T>& tape, std::span<const T> gout) {
    detail::add_into(tape.grad_sink(s_id), gout);
  });
}

/// Forward: 1 where theta >= threshold else 0. Backward: identity.
template <class T>
Var<T> ste_heaviside(Var<T> theta, T threshold = T{0}) {
  Tensor<T> out(theta.shape());
  const auto& t = theta.value();
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = t[i] >= threshold ? T{1} : T{0};
  const std::size_t t_id = theta.id;
  return theta.tape->record(std::move(out), {t_id}, [=](Tape<T>& tape, std::span<const T> gout) {
    detail::add_into(tape.grad_sink(t_id), gout);
  });
}

// ---------------------------------------------------------------------------
// Sampling and polarization
// ---------------------------------------------------------------------------

/// Gumbel(0,1) sample for a uniform draw u in (0,1).
inline double gumbel_from_uniform(double u) { return -std::log(-std::log(u)); }

template <class T>
Tensor<T> gumbel_noise(Rng& rng, Shape shape) {
  Tensor<T> out(std::move(shape));
  for (auto& v : out.values()) v = static_cast<T>(gumbel_from_uniform(rng.uniform()));
  return out;
}

inline constexpr double kIcvSigmaFloor = 1e-6;

/// Inverse coefficient of variation mean(g)/std(g) (population std, floored).
template <class T>
Var<T> inverse_cv(Var<T> g) {
  const auto& x = g.value();
  detail::require_rank(x, 1, "inverse_cv input");
  const std::size_t m = x.size();
  T mu{0};
  for (auto v : x.values()) mu += v;
  mu /= static_cast<T>(m);
  T var{0};
  for (auto v : x.values()) var += (v - mu) * (v - mu);
  var /= static_cast<T>(m);
  const T raw_sigma = std::sqrt(var);
  const bool clamped = raw_sigma < static_cast<T>(kIcvSigmaFloor);
  const T sigma = clamped ? static_cast<T>(kIcvSigmaFloor) : raw_sigma;
  const T value = mu / sigma;
  const std::size_t g_id = g.id;
  return g.tape->record(Tensor<T>::scalar(value), {g_id},
                        [=](Tape<T>& tape, std::span<const T> gout) {
                          auto* gg = tape.grad_sink(g_id);
                          if (!gg) return;
                          const auto& xv = tape.value(g_id);
                          const T mm = static_cast<T>(m);
                          for (std::size_t i = 0; i < m; ++i) {
                            // d mu/dx_i = 1/m ; d sigma/dx_i = (x_i - mu) / (m sigma)
                            T d = T{1} / (mm * sigma);
                            if (!clamped) d -= mu * (xv[i] - mu) / (mm * sigma * sigma * sigma);
                            (*gg)[i] += gout[0] * d;
                          }
                        });
}

}  // namespace hwnas
