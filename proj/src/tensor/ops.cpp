#include "seecg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace seecg {

namespace {

void require_rank(const char* op, const Shape& shape, std::size_t rank, const char* what) {
  if (shape.size() != rank) {
    throw ShapeError(op, "rank",
                     std::string(what) + " must have rank " + std::to_string(rank) + ", got " + shape_str(shape));
  }
}

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a.size() != b.size()) throw ShapeError(op, "rank", shape_str(a) + " vs " + shape_str(b));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) throw ShapeError(op, std::to_string(i), shape_str(a) + " vs " + shape_str(b));
  }
}

// Output positions o in [0, out_len) whose input index o*stride - pad + tap lies in [0, in_len).
struct Range {
  std::ptrdiff_t begin;
  std::ptrdiff_t end;
};

Range valid_range(std::ptrdiff_t in_len, std::ptrdiff_t out_len, std::ptrdiff_t stride, std::ptrdiff_t pad,
                  std::ptrdiff_t tap) {
  const std::ptrdiff_t lo_num = pad - tap;
  std::ptrdiff_t begin = lo_num > 0 ? (lo_num + stride - 1) / stride : 0;
  const std::ptrdiff_t hi_num = in_len - 1 + pad - tap;
  std::ptrdiff_t end = hi_num >= 0 ? hi_num / stride + 1 : 0;
  end = std::min(end, out_len);
  begin = std::min(begin, end);
  return {begin, end};
}

struct ConvGeometry {
  std::size_t n, c_in, t, l, c_out, kt, kl, st, sl, pt, pl, t_out, l_out;

  std::size_t in_plane() const { return t * l; }
  std::size_t out_plane() const { return t_out * l_out; }
  std::size_t kernel() const { return kt * kl; }
};

// Applies `body(in_row, out_row, tap_weight_index, [lo_begin, lo_end), in_offset)` over every
// valid (ci, a, b, to) combination of one (n, co) pair. Shared by forward and both backward passes.
template <typename Body>
void for_each_tap(const ConvGeometry& g, Body&& body) {
  const auto T_ = static_cast<std::ptrdiff_t>(g.t);
  const auto L_ = static_cast<std::ptrdiff_t>(g.l);
  const auto To = static_cast<std::ptrdiff_t>(g.t_out);
  const auto Lo = static_cast<std::ptrdiff_t>(g.l_out);
  const auto st = static_cast<std::ptrdiff_t>(g.st);
  const auto sl = static_cast<std::ptrdiff_t>(g.sl);
  const auto pt = static_cast<std::ptrdiff_t>(g.pt);
  const auto pl = static_cast<std::ptrdiff_t>(g.pl);
  for (std::size_t a = 0; a < g.kt; ++a) {
    const Range tr = valid_range(T_, To, st, pt, static_cast<std::ptrdiff_t>(a));
    for (std::size_t b = 0; b < g.kl; ++b) {
      const Range lr = valid_range(L_, Lo, sl, pl, static_cast<std::ptrdiff_t>(b));
      if (lr.begin >= lr.end) continue;
      for (std::ptrdiff_t to = tr.begin; to < tr.end; ++to) {
        const std::ptrdiff_t ti = to * st - pt + static_cast<std::ptrdiff_t>(a);
        body(static_cast<std::size_t>(ti * L_), static_cast<std::size_t>(to * Lo), a * g.kl + b, lr,
             static_cast<std::ptrdiff_t>(b) - pl);
      }
    }
  }
}

template <typename T>
void conv_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* out) {
  const bool columns = g.l == 1 && g.kl == 1 && g.pl == 0;
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t co = 0; co < g.c_out; ++co) {
      T* o = out + (n * g.c_out + co) * g.out_plane();
      std::fill(o, o + g.out_plane(), bias ? bias[co] : T(0));
      for (std::size_t ci = 0; ci < g.c_in; ++ci) {
        const T* in = x + (n * g.c_in + ci) * g.in_plane();
        const T* wk = w + (co * g.c_in + ci) * g.kernel();
        if (columns) {
          // One spatial axis: innermost loop runs over output time.
          for (std::size_t a = 0; a < g.kt; ++a) {
            const Range tr = valid_range(static_cast<std::ptrdiff_t>(g.t), static_cast<std::ptrdiff_t>(g.t_out),
                                         static_cast<std::ptrdiff_t>(g.st), static_cast<std::ptrdiff_t>(g.pt),
                                         static_cast<std::ptrdiff_t>(a));
            const T wv = wk[a];
            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(a) - static_cast<std::ptrdiff_t>(g.pt);
            const auto st = static_cast<std::ptrdiff_t>(g.st);
            for (std::ptrdiff_t to = tr.begin; to < tr.end; ++to) o[to] += wv * in[to * st + off];
          }
          continue;
        }
        for_each_tap(g, [&](std::size_t in_row, std::size_t out_row, std::size_t tap, Range lr, std::ptrdiff_t shift) {
          const T wv = wk[tap];
          const T* ir = in + in_row;
          T* orow = o + out_row;
          const auto sl = static_cast<std::ptrdiff_t>(g.sl);
          for (std::ptrdiff_t lo = lr.begin; lo < lr.end; ++lo) orow[lo] += wv * ir[lo * sl + shift];
        });
      }
    }
  }
}

template <typename T>
void conv_backward(const ConvGeometry& g, const T* x, const T* w, const T* gout, T* gx, T* gw, T* gb) {
  const bool columns = g.l == 1 && g.kl == 1 && g.pl == 0;
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t co = 0; co < g.c_out; ++co) {
      const T* go = gout + (n * g.c_out + co) * g.out_plane();
      if (gb) {
        T acc = 0;
        for (std::size_t i = 0; i < g.out_plane(); ++i) acc += go[i];
        gb[co] += acc;
      }
      if (!gx && !gw) continue;
      for (std::size_t ci = 0; ci < g.c_in; ++ci) {
        const T* in = x + (n * g.c_in + ci) * g.in_plane();
        T* gin = gx ? gx + (n * g.c_in + ci) * g.in_plane() : nullptr;
        const T* wk = w + (co * g.c_in + ci) * g.kernel();
        T* gwk = gw ? gw + (co * g.c_in + ci) * g.kernel() : nullptr;
        if (columns) {
          const auto st = static_cast<std::ptrdiff_t>(g.st);
          for (std::size_t a = 0; a < g.kt; ++a) {
            const Range tr = valid_range(static_cast<std::ptrdiff_t>(g.t), static_cast<std::ptrdiff_t>(g.t_out), st,
                                         static_cast<std::ptrdiff_t>(g.pt), static_cast<std::ptrdiff_t>(a));
            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(a) - static_cast<std::ptrdiff_t>(g.pt);
            if (gin) {
              const T wv = wk[a];
              for (std::ptrdiff_t to = tr.begin; to < tr.end; ++to) gin[to * st + off] += wv * go[to];
            }
            if (gwk) {
              T acc = 0;
              for (std::ptrdiff_t to = tr.begin; to < tr.end; ++to) acc += go[to] * in[to * st + off];
              gwk[a] += acc;
            }
          }
          continue;
        }
        for_each_tap(g, [&](std::size_t in_row, std::size_t out_row, std::size_t tap, Range lr, std::ptrdiff_t shift) {
          const auto sl = static_cast<std::ptrdiff_t>(g.sl);
          const T* gorow = go + out_row;
          if (gin) {
            const T wv = wk[tap];
            T* girow = gin + in_row;
            for (std::ptrdiff_t lo = lr.begin; lo < lr.end; ++lo) girow[lo * sl + shift] += wv * gorow[lo];
          }
          if (gwk) {
            const T* ir = in + in_row;
            T acc = 0;
            for (std::ptrdiff_t lo = lr.begin; lo < lr.end; ++lo) acc += gorow[lo] * ir[lo * sl + shift];
            gwk[tap] += acc;
          }
        });
      }
    }
  }
}

template <typename T>
Tensor<T> conv_impl(const char* op, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias,
                    ConvGeometry g, const Shape& out_shape) {
  if (g.st == 0 || g.sl == 0) throw ValueError(std::string(op) + ": stride must be positive");
  if (weight.extent(1) != input.extent(1)) {
    throw ShapeError(op, "C_in",
                     "weight expects " + std::to_string(weight.extent(1)) + " input channels, input has " +
                         std::to_string(input.extent(1)));
  }
  if (bias) {
    require_rank(op, bias->shape(), 1, "bias");
    if (bias->extent(0) != g.c_out) {
      throw ShapeError(op, "C_out", "bias has " + std::to_string(bias->extent(0)) + " entries, weight has " +
                                        std::to_string(g.c_out) + " output channels");
    }
  }

  Tensor<T> out(out_shape);
  conv_forward(g, input.data().data(), weight.data().data(), bias ? bias->data().data() : nullptr,
               out.data().data());

  if (Graph<T>* graph = detail::recorder<T>({&input, &weight, bias})) {
    auto xref = input.node();
    auto wref = weight.node();
    std::optional<NodeRef> bref = bias ? bias->node() : std::nullopt;
    std::vector<T> xs(input.data().begin(), input.data().end());
    std::vector<T> ws(weight.data().begin(), weight.data().end());
    out.set_node(graph->record(op, {&input, &weight, bias}, out.numel(),
                               [g, xref, wref, bref, xs = std::move(xs), ws = std::move(ws)](std::span<const T> gout,
                                                                                             Graph<T>& gr) {
                                 conv_backward(g, xs.data(), ws.data(), gout.data(), gr.grad_of(xref),
                                               gr.grad_of(wref), gr.grad_of(bref));
                               }));
  }
  return out;
}

std::size_t conv_extent(const char* op, const char* axis, std::size_t in, std::size_t k, std::size_t stride,
                        std::size_t pad) {
  if (stride == 0) throw ValueError(std::string(op) + ": stride must be positive");
  if (k > in + 2 * pad) {
    throw ShapeError(op, axis,
                     "kernel " + std::to_string(k) + " exceeds padded extent " + std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
Tensor<T> conv2d_any(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias, Conv2dOptions opts) {
  require_rank("conv2d", input.shape(), 4, "input");
  require_rank("conv2d", weight.shape(), 4, "weight");
  ConvGeometry g{};
  g.n = input.extent(0);
  g.c_in = input.extent(1);
  g.t = input.extent(2);
  g.l = input.extent(3);
  g.c_out = weight.extent(0);
  g.kt = weight.extent(2);
  g.kl = weight.extent(3);
  g.st = opts.stride[0];
  g.sl = opts.stride[1];
  g.pt = opts.padding[0];
  g.pl = opts.padding[1];
  g.t_out = conv_extent("conv2d", "T", g.t, g.kt, g.st, g.pt);
  g.l_out = conv_extent("conv2d", "L", g.l, g.kl, g.sl, g.pl);
  return conv_impl("conv2d", input, weight, bias, g, Shape{g.n, g.c_out, g.t_out, g.l_out});
}

template <typename T>
Tensor<T> conv1d_any(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias, Conv1dOptions opts) {
  require_rank("conv1d", input.shape(), 3, "input");
  require_rank("conv1d", weight.shape(), 3, "weight");
  ConvGeometry g{};
  g.n = input.extent(0);
  g.c_in = input.extent(1);
  g.t = input.extent(2);
  g.l = 1;
  g.c_out = weight.extent(0);
  g.kt = weight.extent(2);
  g.kl = 1;
  g.st = opts.stride;
  g.sl = 1;
  g.pt = opts.padding;
  g.pl = 0;
  g.t_out = conv_extent("conv1d", "T", g.t, g.kt, g.st, g.pt);
  g.l_out = 1;
  return conv_impl("conv1d", input, weight, bias, g, Shape{g.n, g.c_out, g.t_out});
}

// Pointwise unary op with derivative expressed through input x and output y.
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const char* kind, const Tensor<T>& a, Fwd fwd, Deriv deriv) {
  Tensor<T> out(a.shape());
  auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  if (Graph<T>* graph = detail::recorder<T>({&a})) {
    std::vector<T> xs(x.begin(), x.end());
    std::vector<T> ys(y.begin(), y.end());
    auto aref = a.node();
    out.set_node(graph->record(kind, {&a}, out.numel(),
                               [aref, deriv, xs = std::move(xs), ys = std::move(ys)](std::span<const T> g,
                                                                                     Graph<T>& gr) {
                                 T* ga = gr.grad_of(aref);
                                 for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(xs[i], ys[i]);
                               }));
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dOptions opts) {
  return conv2d_any(input, weight, &bias, opts);
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, Conv2dOptions opts) {
  return conv2d_any<T>(input, weight, nullptr, opts);
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, Conv1dOptions opts) {
  return conv1d_any(input, weight, &bias, opts);
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& input, const Tensor<T>& weight, Conv1dOptions opts) {
  return conv1d_any<T>(input, weight, nullptr, opts);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
  if (Graph<T>* graph = detail::recorder<T>({&a, &b})) {
    auto aref = a.node();
    auto bref = b.node();
    out.set_node(graph->record("add", {&a, &b}, out.numel(), [aref, bref](std::span<const T> g, Graph<T>& gr) {
      if (T* ga = gr.grad_of(aref))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      if (T* gb = gr.grad_of(bref))
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }));
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] - b[i];
  if (Graph<T>* graph = detail::recorder<T>({&a, &b})) {
    auto aref = a.node();
    auto bref = b.node();
    out.set_node(graph->record("sub", {&a, &b}, out.numel(), [aref, bref](std::span<const T> g, Graph<T>& gr) {
      if (T* ga = gr.grad_of(aref))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      if (T* gb = gr.grad_of(bref))
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }));
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * b[i];
  if (Graph<T>* graph = detail::recorder<T>({&a, &b})) {
    auto aref = a.node();
    auto bref = b.node();
    std::vector<T> av(a.data().begin(), a.data().end());
    std::vector<T> bv(b.data().begin(), b.data().end());
    out.set_node(graph->record("mul", {&a, &b}, out.numel(),
                               [aref, bref, av = std::move(av), bv = std::move(bv)](std::span<const T> g, Graph<T>& gr) {
                                 if (T* ga = gr.grad_of(aref))
                                   for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                                 if (T* gb = gr.grad_of(bref))
                                   for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                               }));
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary<T>("scale", a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  const bool fault = debug::backward_fault();
  return unary<T>(
      "relu", a, [](T x) { return x > T(0) ? x : T(0); },
      [fault](T x, T) { return x > T(0) ? (fault ? T(1.5) : T(1)) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary<T>(
      "sigmoid", a,
      [](T x) {
        // Kept strictly inside (0,1) even where the exact value rounds to 0 or 1.
        constexpr T lo = std::numeric_limits<T>::denorm_min();
        constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
        if (x >= T(0)) return std::min(hi, T(1) / (T(1) + std::exp(-x)));
        const T e = std::exp(x);
        return std::max(lo, e / (T(1) + e));
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (!(a[i] > T(0))) throw ValueError("log: non-positive input at flat index " + std::to_string(i));
  }
  return unary<T>("log", a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> channel_scale(const Tensor<T>& x, const Tensor<T>& gate) {
  if (x.rank() < 2) throw ShapeError("channel_scale", "rank", "input needs [N,C,...], got " + shape_str(x.shape()));
  require_rank("channel_scale", gate.shape(), 2, "gate");
  if (gate.extent(0) != x.extent(0)) throw ShapeError("channel_scale", "N", shape_str(gate.shape()) + " vs " + shape_str(x.shape()));
  if (gate.extent(1) != x.extent(1)) throw ShapeError("channel_scale", "C", shape_str(gate.shape()) + " vs " + shape_str(x.shape()));
  const std::size_t rows = gate.numel();
  const std::size_t inner = x.numel() / rows;
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T s = gate[r];
    for (std::size_t i = 0; i < inner; ++i) out[r * inner + i] = x[r * inner + i] * s;
  }
  if (Graph<T>* graph = detail::recorder<T>({&x, &gate})) {
    auto xref = x.node();
    auto gref = gate.node();
    std::vector<T> xv(x.data().begin(), x.data().end());
    std::vector<T> sv(gate.data().begin(), gate.data().end());
    out.set_node(graph->record(
        "channel_scale", {&x, &gate}, out.numel(),
        [xref, gref, rows, inner, xv = std::move(xv), sv = std::move(sv)](std::span<const T> g, Graph<T>& gr) {
          T* gx = gr.grad_of(xref);
          T* gs = gr.grad_of(gref);
          for (std::size_t r = 0; r < rows; ++r) {
            T acc = 0;
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t k = r * inner + i;
              if (gx) gx[k] += g[k] * sv[r];
              acc += g[k] * xv[k];
            }
            if (gs) gs[r] += acc;
          }
        }));
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (Graph<T>* graph = detail::recorder<T>({&a})) {
    auto aref = a.node();
    const std::size_t n = a.numel();
    out.set_node(graph->record("sum", {&a}, 1, [aref, n](std::span<const T> g, Graph<T>& gr) {
      T* ga = gr.grad_of(aref);
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[0];
    }));
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& a, std::size_t axis) {
  if (axis >= a.rank()) {
    throw ShapeError("mean_axis", std::to_string(axis), "axis out of range for " + shape_str(a.shape()));
  }
  const Shape& s = a.shape();
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  Tensor<T> out(out_shape);
  const T inv = T(1) / static_cast<T>(len);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      T acc = 0;
      for (std::size_t k = 0; k < len; ++k) acc += a[(o * len + k) * inner + i];
      out[o * inner + i] = acc * inv;
    }
  }
  if (Graph<T>* graph = detail::recorder<T>({&a})) {
    auto aref = a.node();
    out.set_node(graph->record("mean_axis", {&a}, out.numel(),
                               [aref, outer, inner, len, inv](std::span<const T> g, Graph<T>& gr) {
                                 T* ga = gr.grad_of(aref);
                                 for (std::size_t o = 0; o < outer; ++o)
                                   for (std::size_t k = 0; k < len; ++k)
                                     for (std::size_t i = 0; i < inner; ++i)
                                       ga[(o * len + k) * inner + i] += g[o * inner + i] * inv;
                               }));
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& a) {
  if (a.rank() < 3) {
    throw ShapeError("global_avg_pool", "rank", "input needs [N,C,spatial...], got " + shape_str(a.shape()));
  }
  const std::size_t rows = a.extent(0) * a.extent(1);
  const std::size_t inner = a.numel() / rows;
  Tensor<T> out(Shape{a.extent(0), a.extent(1)});
  const T inv = T(1) / static_cast<T>(inner);
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = 0;
    for (std::size_t i = 0; i < inner; ++i) acc += a[r * inner + i];
    out[r] = acc * inv;
  }
  if (Graph<T>* graph = detail::recorder<T>({&a})) {
    auto aref = a.node();
    out.set_node(graph->record("global_avg_pool", {&a}, out.numel(),
                               [aref, rows, inner, inv](std::span<const T> g, Graph<T>& gr) {
                                 T* ga = gr.grad_of(aref);
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   const T v = g[r] * inv;
                                   for (std::size_t i = 0; i < inner; ++i) ga[r * inner + i] += v;
                                 }
                               }));
  }
  return out;
}

template <typename T>
Tensor<T> avg_pool1d(const Tensor<T>& a, std::size_t window, std::size_t stride) {
  require_rank("avg_pool1d", a.shape(), 3, "input");
  if (stride == 0) throw ValueError("avg_pool1d: stride must be positive");
  if (window == 0) throw ValueError("avg_pool1d: window must be positive");
  const std::size_t len = a.extent(2);
  if (window > len) {
    throw ShapeError("avg_pool1d", "T", "window " + std::to_string(window) + " exceeds extent " + std::to_string(len));
  }
  const std::size_t rows = a.extent(0) * a.extent(1);
  const std::size_t out_len = (len - window) / stride + 1;
  Tensor<T> out(Shape{a.extent(0), a.extent(1), out_len});
  const T inv = T(1) / static_cast<T>(window);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out_len; ++o) {
      T acc = 0;
      for (std::size_t k = 0; k < window; ++k) acc += a[r * len + o * stride + k];
      out[r * out_len + o] = acc * inv;
    }
  }
  if (Graph<T>* graph = detail::recorder<T>({&a})) {
    auto aref = a.node();
    out.set_node(graph->record("avg_pool1d", {&a}, out.numel(),
                               [aref, rows, len, out_len, window, stride, inv](std::span<const T> g, Graph<T>& gr) {
                                 T* ga = gr.grad_of(aref);
                                 for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t o = 0; o < out_len; ++o)
                                     for (std::size_t k = 0; k < window; ++k)
                                       ga[r * len + o * stride + k] += g[r * out_len + o] * inv;
                               }));
  }
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank("linear", input.shape(), 2, "input");
  require_rank("linear", weight.shape(), 2, "weight");
  require_rank("linear", bias.shape(), 1, "bias");
  const std::size_t n = input.extent(0);
  const std::size_t f_in = input.extent(1);
  const std::size_t f_out = weight.extent(0);
  if (weight.extent(1) != f_in) {
    throw ShapeError("linear", "F_in",
                     "weight expects " + std::to_string(weight.extent(1)) + " features, input has " + std::to_string(f_in));
  }
  if (bias.extent(0) != f_out) {
    throw ShapeError("linear", "F_out", "bias has " + std::to_string(bias.extent(0)) + " entries, expected " +
                                            std::to_string(f_out));
  }
  Tensor<T> out(Shape{n, f_out});
  for (std::size_t i = 0; i < n; ++i) {
    const T* x = input.data().data() + i * f_in;
    for (std::size_t o = 0; o < f_out; ++o) {
      const T* w = weight.data().data() + o * f_in;
      T acc = bias[o];
      for (std::size_t f = 0; f < f_in; ++f) acc += x[f] * w[f];
      out[i * f_out + o] = acc;
    }
  }
  if (Graph<T>* graph = detail::recorder<T>({&input, &weight, &bias})) {
    auto xref = input.node();
    auto wref = weight.node();
    auto bref = bias.node();
    std::vector<T> xs(input.data().begin(), input.data().end());
    std::vector<T> ws(weight.data().begin(), weight.data().end());
    out.set_node(graph->record(
        "linear", {&input, &weight, &bias}, out.numel(),
        [=, xs = std::move(xs), ws = std::move(ws)](std::span<const T> g, Graph<T>& gr) {
          T* gx = gr.grad_of(xref);
          T* gw = gr.grad_of(wref);
          T* gb = gr.grad_of(bref);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t o = 0; o < f_out; ++o) {
              const T go = g[i * f_out + o];
              if (gb) gb[o] += go;
              if (gx)
                for (std::size_t f = 0; f < f_in; ++f) gx[i * f_in + f] += go * ws[o * f_in + f];
              if (gw)
                for (std::size_t f = 0; f < f_in; ++f) gw[o * f_in + f] += go * xs[i * f_in + f];
            }
          }
        }));
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape) {
  if (shape_numel(new_shape) != a.numel()) {
    throw ShapeError("reshape", "numel", shape_str(a.shape()) + " cannot become " + shape_str(new_shape));
  }
  Tensor<T> out(std::move(new_shape), a.values());
  if (Graph<T>* graph = detail::recorder<T>({&a})) {
    auto aref = a.node();
    out.set_node(graph->record("reshape", {&a}, out.numel(), [aref](std::span<const T> g, Graph<T>& gr) {
      T* ga = gr.grad_of(aref);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }));
  }
  return out;
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ValueError("concat: no operands");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat", std::to_string(axis), "axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) throw ShapeError("concat", "rank", shape_str(p.shape()) + " vs " + shape_str(first));
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (i != axis && p.extent(i) != first[i]) {
        throw ShapeError("concat", std::to_string(i), shape_str(p.shape()) + " vs " + shape_str(first));
      }
    }
    out_shape[axis] += p.extent(axis);
  }
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_row = out_shape[axis] * inner;

  Tensor<T> out(out_shape);
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.extent(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.data().data() + o * w, w, out.data().data() + o * out_row + offset);
    }
    offsets.push_back(offset);
    widths.push_back(w);
    offset += w;
  }
  std::vector<const Tensor<T>*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  if (Graph<T>* graph = detail::recorder<T>(std::span<const Tensor<T>* const>(ptrs))) {
    std::vector<std::optional<NodeRef>> refs;
    for (const auto& p : parts) refs.push_back(p.node());
    out.set_node(graph->record(
        "concat", std::span<const Tensor<T>* const>(ptrs), out.numel(),
        [refs, offsets, widths, outer, out_row](std::span<const T> g, Graph<T>& gr) {
          for (std::size_t k = 0; k < refs.size(); ++k) {
            T* gp = gr.grad_of(refs[k]);
            if (!gp) continue;
            for (std::size_t o = 0; o < outer; ++o)
              for (std::size_t i = 0; i < widths[k]; ++i) gp[o * widths[k] + i] += g[o * out_row + offsets[k] + i];
          }
        }));
  }
  return out;
}

template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& a) {
  if (a.rank() < 2) throw ShapeError("transpose_last2", "rank", "needs rank >= 2, got " + shape_str(a.shape()));
  Shape out_shape = a.shape();
  const std::size_t rows = out_shape[a.rank() - 2];
  const std::size_t cols = out_shape[a.rank() - 1];
  std::swap(out_shape[a.rank() - 2], out_shape[a.rank() - 1]);
  const std::size_t batch = a.numel() / (rows * cols);
  Tensor<T> out(out_shape);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* src = a.data().data() + b * rows * cols;
    T* dst = out.data().data() + b * rows * cols;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
  if (Graph<T>* graph = detail::recorder<T>({&a})) {
    auto aref = a.node();
    out.set_node(graph->record("transpose_last2", {&a}, out.numel(),
                               [aref, batch, rows, cols](std::span<const T> g, Graph<T>& gr) {
                                 T* ga = gr.grad_of(aref);
                                 for (std::size_t b = 0; b < batch; ++b)
                                   for (std::size_t r = 0; r < rows; ++r)
                                     for (std::size_t c = 0; c < cols; ++c)
                                       ga[b * rows * cols + r * cols + c] += g[b * rows * cols + c * rows + r];
                               }));
  }
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  require_rank("softmax", logits.shape(), 2, "logits");
  const std::size_t n = logits.extent(0);
  const std::size_t k = logits.extent(1);
  Tensor<T> out(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* x = logits.data().data() + i * k;
    T* y = out.data().data() + i * k;
    const T mx = *std::max_element(x, x + k);
    T z = 0;
    for (std::size_t j = 0; j < k; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < k; ++j) y[j] /= z;
  }
  if (Graph<T>* graph = detail::recorder<T>({&logits})) {
    auto xref = logits.node();
    std::vector<T> ys(out.data().begin(), out.data().end());
    out.set_node(graph->record("softmax", {&logits}, out.numel(),
                               [xref, n, k, ys = std::move(ys)](std::span<const T> g, Graph<T>& gr) {
                                 T* gx = gr.grad_of(xref);
                                 for (std::size_t i = 0; i < n; ++i) {
                                   T dot = 0;
                                   for (std::size_t j = 0; j < k; ++j) dot += g[i * k + j] * ys[i * k + j];
                                   for (std::size_t j = 0; j < k; ++j) gx[i * k + j] += ys[i * k + j] * (g[i * k + j] - dot);
                                 }
                               }));
  }
  return out;
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& logits) {
  require_rank("log_softmax", logits.shape(), 2, "logits");
  const std::size_t n = logits.extent(0);
  const std::size_t k = logits.extent(1);
  Tensor<T> out(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* x = logits.data().data() + i * k;
    T* y = out.data().data() + i * k;
    const T mx = *std::max_element(x, x + k);
    T z = 0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(x[j] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t j = 0; j < k; ++j) y[j] = x[j] - lse;
  }
  if (Graph<T>* graph = detail::recorder<T>({&logits})) {
    auto xref = logits.node();
    std::vector<T> ys(out.data().begin(), out.data().end());
    out.set_node(graph->record("log_softmax", {&logits}, out.numel(),
                               [xref, n, k, ys = std::move(ys)](std::span<const T> g, Graph<T>& gr) {
                                 T* gx = gr.grad_of(xref);
                                 for (std::size_t i = 0; i < n; ++i) {
                                   T total = 0;
                                   for (std::size_t j = 0; j < k; ++j) total += g[i * k + j];
                                   for (std::size_t j = 0; j < k; ++j)
                                     gx[i * k + j] += g[i * k + j] - std::exp(ys[i * k + j]) * total;
                                 }
                               }));
  }
  return out;
}

#define SEECG_INSTANTIATE_OPS(T)                                                                       \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dOptions);      \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, Conv2dOptions);                        \
  template Tensor<T> conv1d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv1dOptions);      \
  template Tensor<T> conv1d(const Tensor<T>&, const Tensor<T>&, Conv1dOptions);                        \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> scale(const Tensor<T>&, T);                                                       \
  template Tensor<T> relu(const Tensor<T>&);                                                           \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                        \
  template Tensor<T> log(const Tensor<T>&);                                                            \
  template Tensor<T> channel_scale(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> sum(const Tensor<T>&);                                                            \
  template Tensor<T> mean(const Tensor<T>&);                                                           \
  template Tensor<T> mean_axis(const Tensor<T>&, std::size_t);                                         \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                                \
  template Tensor<T> avg_pool1d(const Tensor<T>&, std::size_t, std::size_t);                           \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                 \
  template Tensor<T> concat(std::span<const Tensor<T>>, std::size_t);                                  \
  template Tensor<T> transpose_last2(const Tensor<T>&);                                                \
  template Tensor<T> softmax(const Tensor<T>&);                                                        \
  template Tensor<T> log_softmax(const Tensor<T>&);

SEECG_INSTANTIATE_OPS(float)
SEECG_INSTANTIATE_OPS(double)

#undef SEECG_INSTANTIATE_OPS

}  // namespace seecg
