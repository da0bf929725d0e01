#include "uwhdn/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>

#include "uwhdn/error.hpp"

namespace uwhdn {

using detail::Node;

// Access shim so op implementations can reach Value/Graph internals.
struct OpAccess {
  static Node* node(const Value& v) { return v.node_; }
  static Graph* graph(const Value& v) { return v.graph_; }
  static Value wrap(Node* n, Graph* g) { return Value(n, g); }
  static Node* make(Graph& g, Tensor value, std::vector<Node*> parents,
                    std::function<void(Node&)> bw) {
    return g.make(std::move(value), std::move(parents), std::move(bw));
  }
};

namespace {

using RowMat =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using CMapRM = Eigen::Map<const RowMat>;

void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

Tensor& ensure_grad(Node* n) {
  if (n->grad.empty()) n->grad = Tensor(n->value.shape());
  return n->grad;
}

bool wants_grad(const Node* n) { return n && n->requires_grad; }

// col is K x P row-major with K = c*kh*kw and P = oh*ow.
// col[(ci*kh + ky)*kw + kx][oy*ow + ox] = x[ci][oy*stride + ky - pad][...] (0 outside).
void im2col(const Scalar* x, std::size_t c, std::size_t h, std::size_t w,
            std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad,
            std::size_t oh, std::size_t ow, Scalar* col) {
  const std::size_t p = oh * ow;
  for (std::size_t ci = 0; ci < c; ++ci) {
    const Scalar* xc = x + ci * h * w;
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        Scalar* row = col + ((ci * kh + ky) * kw + kx) * p;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * stride + ky) -
              static_cast<std::ptrdiff_t>(pad);
          Scalar* dst = row + oy * ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + ow, 0.0);
            continue;
          }
          const Scalar* src = xc + static_cast<std::size_t>(iy) * w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) -
                static_cast<std::ptrdiff_t>(pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w))
                          ? 0.0
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into the image.
void col2im_add(const Scalar* col, std::size_t c, std::size_t h, std::size_t w,
                std::size_t kh, std::size_t kw, std::size_t stride,
                std::size_t pad, std::size_t oh, std::size_t ow, Scalar* x) {
  const std::size_t p = oh * ow;
  for (std::size_t ci = 0; ci < c; ++ci) {
    Scalar* xc = x + ci * h * w;
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const Scalar* row = col + ((ci * kh + ky) * kw + kx) * p;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * stride + ky) -
              static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          const Scalar* src = row + oy * ow;
          Scalar* dst = xc + static_cast<std::size_t>(iy) * w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) -
                static_cast<std::ptrdiff_t>(pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w))
              dst[static_cast<std::size_t>(ix)] += src[ox];
          }
        }
      }
    }
  }
}

Scalar stable_softplus(Scalar t) {
  // log(1 + e^t) without overflow.
  return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

Scalar stable_sigmoid(Scalar t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const Scalar e = std::exp(t);
  return e / (1.0 + e);
}

Value unary_elementwise(Value x, std::function<Scalar(Scalar)> f,
                        std::function<Scalar(Scalar, Scalar)> df_from_in_out) {
  Node* xn = OpAccess::node(x);
  Graph* g = OpAccess::graph(x);
  Tensor out(xn->value.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = f(xn->value[i]);
  Node* n = OpAccess::make(
      *g, std::move(out), {xn}, [xn, df_from_in_out](Node& self) {
        if (!wants_grad(xn)) return;
        Tensor& gx = ensure_grad(xn);
        for (std::size_t i = 0; i < gx.numel(); ++i)
          gx[i] += self.grad[i] * df_from_in_out(xn->value[i], self.value[i]);
      });
  return OpAccess::wrap(n, g);
}

}  // namespace

// ---- Graph ------------------------------------------------------------------

Node* Graph::make(Tensor value, std::vector<Node*> parents,
                  std::function<void(Node&)> bw) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->parents = std::move(parents);
  for (Node* p : node->parents)
    if (p && p->requires_grad) node->requires_grad = true;
  if (node->requires_grad) node->backward = std::move(bw);
  Node* raw = node.get();
  nodes_.push_back(std::move(node));
  return raw;
}

Value Graph::input(Tensor t) {
  Node* n = make(std::move(t), {}, nullptr);
  return Value(n, this);
}

Value Graph::use(Parameter& p) {
  Node* n = make(p.value, {}, nullptr);
  n->requires_grad = true;
  param_uses_.emplace_back(&p, n);
  return Value(n, this);
}

void Graph::backward(const Value& loss) {
  Node* root = OpAccess::node(loss);
  require(root != nullptr, "backward on empty value");
  require(root->value.numel() == 1, "backward requires a scalar loss, got " +
                                        root->value.shape().str());
  for (auto& n : nodes_) n->grad = Tensor();
  root->grad = Tensor(root->value.shape(), 1.0);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node* n = it->get();
    if (n->backward && n->requires_grad && !n->grad.empty()) n->backward(*n);
  }
  for (auto& [p, n] : param_uses_) {
    if (n->grad.empty()) continue;
    for (std::size_t i = 0; i < p->grad.numel(); ++i) p->grad[i] += n->grad[i];
  }
}

// ---- Convolutions -----------------------------------------------------------

Value conv2d(Value x, Value w, Value b, std::size_t stride, std::size_t pad) {
  Node* xn = OpAccess::node(x);
  Node* wn = OpAccess::node(w);
  Node* bn = b.valid() ? OpAccess::node(b) : nullptr;
  Graph* g = OpAccess::graph(x);
  const Shape4 xs = xn->value.shape(), ws = wn->value.shape();
  require(xs.c == ws.c, "conv2d: input has " + std::to_string(xs.c) +
                            " channels, weight expects " + std::to_string(ws.c));
  require(xs.h + 2 * pad >= ws.h && xs.w + 2 * pad >= ws.w,
          "conv2d: kernel larger than padded input");
  const std::size_t n = xs.n, cin = xs.c, cout = ws.n, kh = ws.h, kw = ws.w;
  const std::size_t oh = (xs.h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (xs.w + 2 * pad - kw) / stride + 1;
  const std::size_t k = cin * kh * kw, p = oh * ow;
  if (bn)
    require(bn->value.shape() == Shape4{1, cout, 1, 1},
            "conv2d: bias must be 1x" + std::to_string(cout) + "x1x1");

  Tensor out({n, cout, oh, ow});
  {
    const Scalar* xd = xn->value.data();
    const Scalar* wd = wn->value.data();
    Scalar* od = out.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      std::vector<Scalar> col(k * p);
      im2col(xd + i * cin * xs.h * xs.w, cin, xs.h, xs.w, kh, kw, stride, pad,
             oh, ow, col.data());
      MapRM y(od + i * cout * p, cout, p);
      y.noalias() = CMapRM(wd, cout, k) * CMapRM(col.data(), k, p);
    }
    if (bn) {
      const Scalar* bd = bn->value.data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < cout; ++c) {
          Scalar* row = od + (i * cout + c) * p;
          const Scalar bias = bd[c];
          for (std::size_t j = 0; j < p; ++j) row[j] += bias;
        }
    }
  }

  auto bw = [=](Node& self) {
    const Scalar* gy = self.grad.data();
    const Shape4 xs2 = xn->value.shape();
    // dW and dX; per-sample partials for dW keep the reduction order fixed.
    std::vector<Tensor> dw_part;
    if (wants_grad(wn)) dw_part.assign(n, Tensor(wn->value.shape()));
    if (wants_grad(xn)) ensure_grad(xn);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      CMapRM dy(gy + i * cout * p, cout, p);
      if (wants_grad(wn)) {
        std::vector<Scalar> col(k * p);
        im2col(xn->value.data() + i * cin * xs2.h * xs2.w, cin, xs2.h, xs2.w,
               kh, kw, stride, pad, oh, ow, col.data());
        MapRM dwp(dw_part[i].data(), cout, k);
        dwp.noalias() = dy * CMapRM(col.data(), k, p).transpose();
      }
      if (wants_grad(xn)) {
        std::vector<Scalar> m(k * p);
        MapRM mm(m.data(), k, p);
        mm.noalias() = CMapRM(wn->value.data(), cout, k).transpose() * dy;
        col2im_add(m.data(), cin, xs2.h, xs2.w, kh, kw, stride, pad, oh, ow,
                   xn->grad.data() + i * cin * xs2.h * xs2.w);
      }
    }
    if (wants_grad(wn)) {
      Tensor& gw = ensure_grad(wn);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < gw.numel(); ++j) gw[j] += dw_part[i][j];
    }
    if (wants_grad(bn)) {
      Tensor& gb = ensure_grad(bn);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < cout; ++c) {
          const Scalar* row = gy + (i * cout + c) * p;
          Scalar s = 0.0;
          for (std::size_t j = 0; j < p; ++j) s += row[j];
          gb[c] += s;
        }
    }
  };

  std::vector<Node*> parents = {xn, wn};
  if (bn) parents.push_back(bn);
  return OpAccess::wrap(OpAccess::make(*g, std::move(out), parents, bw), g);
}

Value conv_transpose2d(Value x, Value w, Value b, std::size_t stride,
                       std::size_t pad) {
  Node* xn = OpAccess::node(x);
  Node* wn = OpAccess::node(w);
  Node* bn = b.valid() ? OpAccess::node(b) : nullptr;
  Graph* g = OpAccess::graph(x);
  const Shape4 xs = xn->value.shape(), ws = wn->value.shape();
  require(xs.c == ws.n, "conv_transpose2d: input has " + std::to_string(xs.c) +
                            " channels, weight expects " + std::to_string(ws.n));
  const std::size_t n = xs.n, cin = xs.c, cout = ws.c, kh = ws.h, kw = ws.w;
  require((xs.h - 1) * stride + kh >= 2 * pad &&
              (xs.w - 1) * stride + kw >= 2 * pad,
          "conv_transpose2d: degenerate output size");
  const std::size_t oh = (xs.h - 1) * stride + kh - 2 * pad;
  const std::size_t ow = (xs.w - 1) * stride + kw - 2 * pad;
  const std::size_t k = cout * kh * kw, p = xs.h * xs.w;
  if (bn)
    require(bn->value.shape() == Shape4{1, cout, 1, 1},
            "conv_transpose2d: bias must be 1x" + std::to_string(cout) + "x1x1");

  Tensor out({n, cout, oh, ow});
  {
    const Scalar* xd = xn->value.data();
    const Scalar* wd = wn->value.data();
    Scalar* od = out.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      std::vector<Scalar> m(k * p);
      MapRM mm(m.data(), k, p);
      mm.noalias() = CMapRM(wd, cin, k).transpose() *
                     CMapRM(xd + i * cin * p, cin, p);
      col2im_add(m.data(), cout, oh, ow, kh, kw, stride, pad, xs.h, xs.w,
                 od + i * cout * oh * ow);
    }
    if (bn) {
      const Scalar* bd = bn->value.data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < cout; ++c) {
          Scalar* row = od + (i * cout + c) * oh * ow;
          for (std::size_t j = 0; j < oh * ow; ++j) row[j] += bd[c];
        }
    }
  }

  auto bw = [=](Node& self) {
    const Scalar* gy = self.grad.data();
    std::vector<Tensor> dw_part;
    if (wants_grad(wn)) dw_part.assign(n, Tensor(wn->value.shape()));
    if (wants_grad(xn)) ensure_grad(xn);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      // Columns of dY seen from each input position; adjoint of col2im_add.
      std::vector<Scalar> col(k * p);
      im2col(gy + i * cout * oh * ow, cout, oh, ow, kh, kw, stride, pad, xs.h,
             xs.w, col.data());
      if (wants_grad(xn)) {
        MapRM dx(xn->grad.data() + i * cin * p, cin, p);
        dx.noalias() += CMapRM(wn->value.data(), cin, k) *
                        CMapRM(col.data(), k, p);
      }
      if (wants_grad(wn)) {
        MapRM dwp(dw_part[i].data(), cin, k);
        dwp.noalias() = CMapRM(xn->value.data() + i * cin * p, cin, p) *
                        CMapRM(col.data(), k, p).transpose();
      }
    }
    if (wants_grad(wn)) {
      Tensor& gw = ensure_grad(wn);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < gw.numel(); ++j) gw[j] += dw_part[i][j];
    }
    if (wants_grad(bn)) {
      Tensor& gb = ensure_grad(bn);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < cout; ++c) {
          const Scalar* row = gy + (i * cout + c) * oh * ow;
          Scalar s = 0.0;
          for (std::size_t j = 0; j < oh * ow; ++j) s += row[j];
          gb[c] += s;
        }
    }
  };

  std::vector<Node*> parents = {xn, wn};
  if (bn) parents.push_back(bn);
  return OpAccess::wrap(OpAccess::make(*g, std::move(out), parents, bw), g);
}

// ---- Elementwise ------------------------------------------------------------

Value leaky_relu(Value x, Scalar slope) {
  return unary_elementwise(
      x, [slope](Scalar v) { return v >= 0.0 ? v : slope * v; },
      [slope](Scalar in, Scalar) { return in >= 0.0 ? 1.0 : slope; });
}

Value tanh_act(Value x) {
  return unary_elementwise(
      x, [](Scalar v) { return std::tanh(v); },
      [](Scalar, Scalar out) { return 1.0 - out * out; });
}

Value sigmoid(Value x) {
  return unary_elementwise(
      x, [](Scalar v) { return stable_sigmoid(v); },
      [](Scalar, Scalar out) { return out * (1.0 - out); });
}

Value affine(Value x, Scalar a, Scalar b) {
  return unary_elementwise(
      x, [a, b](Scalar v) { return a * v + b; },
      [a](Scalar, Scalar) { return a; });
}

Value add(Value x, Value y) {
  Node* xn = OpAccess::node(x);
  Node* yn = OpAccess::node(y);
  Graph* g = OpAccess::graph(x);
  require(xn->value.shape() == yn->value.shape(),
          "add: shape mismatch " + xn->value.shape().str() + " vs " +
              yn->value.shape().str());
  Tensor out(xn->value.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = xn->value[i] + yn->value[i];
  Node* n = OpAccess::make(*g, std::move(out), {xn, yn}, [xn, yn](Node& self) {
    for (Node* pn : {xn, yn}) {
      if (!wants_grad(pn)) continue;
      Tensor& gp = ensure_grad(pn);
      for (std::size_t i = 0; i < gp.numel(); ++i) gp[i] += self.grad[i];
    }
  });
  return OpAccess::wrap(n, g);
}

Value concat_channels(Value x, Value y) {
  Node* xn = OpAccess::node(x);
  Node* yn = OpAccess::node(y);
  Graph* g = OpAccess::graph(x);
  const Shape4 xs = xn->value.shape(), ys = yn->value.shape();
  require(xs.n == ys.n && xs.h == ys.h && xs.w == ys.w,
          "concat_channels: spatial/batch mismatch " + xs.str() + " vs " +
              ys.str());
  Tensor out({xs.n, xs.c + ys.c, xs.h, xs.w});
  const std::size_t hw = xs.h * xs.w;
  for (std::size_t i = 0; i < xs.n; ++i) {
    std::memcpy(out.data() + i * (xs.c + ys.c) * hw,
                xn->value.data() + i * xs.c * hw, xs.c * hw * sizeof(Scalar));
    std::memcpy(out.data() + (i * (xs.c + ys.c) + xs.c) * hw,
                yn->value.data() + i * ys.c * hw, ys.c * hw * sizeof(Scalar));
  }
  Node* n = OpAccess::make(
      *g, std::move(out), {xn, yn}, [xn, yn, xs, ys, hw](Node& self) {
        for (std::size_t i = 0; i < xs.n; ++i) {
          const Scalar* gx = self.grad.data() + i * (xs.c + ys.c) * hw;
          if (wants_grad(xn)) {
            Tensor& gp = ensure_grad(xn);
            Scalar* dst = gp.data() + i * xs.c * hw;
            for (std::size_t j = 0; j < xs.c * hw; ++j) dst[j] += gx[j];
          }
          if (wants_grad(yn)) {
            Tensor& gp = ensure_grad(yn);
            Scalar* dst = gp.data() + i * ys.c * hw;
            const Scalar* src = gx + xs.c * hw;
            for (std::size_t j = 0; j < ys.c * hw; ++j) dst[j] += src[j];
          }
        }
      });
  return OpAccess::wrap(n, g);
}

Value resize_nearest(Value x, std::size_t out_h, std::size_t out_w) {
  Node* xn = OpAccess::node(x);
  Graph* g = OpAccess::graph(x);
  const Shape4 xs = xn->value.shape();
  require(out_h > 0 && out_w > 0, "resize_nearest: empty target");
  if (out_h == xs.h && out_w == xs.w) return x;
  Tensor out({xs.n, xs.c, out_h, out_w});
  for (std::size_t i = 0; i < xs.n; ++i)
    for (std::size_t c = 0; c < xs.c; ++c)
      for (std::size_t y = 0; y < out_h; ++y) {
        const std::size_t iy = y * xs.h / out_h;
        for (std::size_t xo = 0; xo < out_w; ++xo)
          out.at(i, c, y, xo) = xn->value.at(i, c, iy, xo * xs.w / out_w);
      }
  Node* n = OpAccess::make(
      *g, std::move(out), {xn}, [xn, xs, out_h, out_w](Node& self) {
        if (!wants_grad(xn)) return;
        Tensor& gp = ensure_grad(xn);
        for (std::size_t i = 0; i < xs.n; ++i)
          for (std::size_t c = 0; c < xs.c; ++c)
            for (std::size_t y = 0; y < out_h; ++y) {
              const std::size_t iy = y * xs.h / out_h;
              for (std::size_t xo = 0; xo < out_w; ++xo)
                gp.at(i, c, iy, xo * xs.w / out_w) += self.grad.at(i, c, y, xo);
            }
      });
  return OpAccess::wrap(n, g);
}

// ---- Reductions ---------------------------------------------------------------

Value mean_abs(Value x) {
  Node* xn = OpAccess::node(x);
  Graph* g = OpAccess::graph(x);
  require(xn->value.numel() > 0, "mean_abs: empty tensor");
  Scalar s = 0.0;
  for (std::size_t i = 0; i < xn->value.numel(); ++i)
    s += std::abs(xn->value[i]);
  const Scalar inv_n = 1.0 / static_cast<Scalar>(xn->value.numel());
  Node* n = OpAccess::make(
      *g, Tensor::scalar(s * inv_n), {xn}, [xn, inv_n](Node& self) {
        if (!wants_grad(xn)) return;
        Tensor& gp = ensure_grad(xn);
        const Scalar gy = self.grad[0] * inv_n;
        for (std::size_t i = 0; i < gp.numel(); ++i) {
          const Scalar v = xn->value[i];
          gp[i] += gy * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
        }
      });
  return OpAccess::wrap(n, g);
}

Value mean_abs_diff(Value x, Value y) {
  Node* xn = OpAccess::node(x);
  Node* yn = OpAccess::node(y);
  Graph* g = OpAccess::graph(x);
  require(xn->value.shape() == yn->value.shape(),
          "mean_abs_diff: shape mismatch " + xn->value.shape().str() + " vs " +
              yn->value.shape().str());
  require(xn->value.numel() > 0, "mean_abs_diff: empty tensor");
  Scalar s = 0.0;
  for (std::size_t i = 0; i < xn->value.numel(); ++i)
    s += std::abs(xn->value[i] - yn->value[i]);
  const Scalar inv_n = 1.0 / static_cast<Scalar>(xn->value.numel());
  Node* n = OpAccess::make(
      *g, Tensor::scalar(s * inv_n), {xn, yn}, [xn, yn, inv_n](Node& self) {
        const Scalar gy = self.grad[0] * inv_n;
        for (std::size_t i = 0; i < xn->value.numel(); ++i) {
          const Scalar d = xn->value[i] - yn->value[i];
          const Scalar sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
          if (wants_grad(xn)) ensure_grad(xn)[i] += gy * sgn;
          if (wants_grad(yn)) ensure_grad(yn)[i] -= gy * sgn;
        }
      });
  return OpAccess::wrap(n, g);
}

Value mean_square_diff(Value x, Scalar target) {
  Node* xn = OpAccess::node(x);
  Graph* g = OpAccess::graph(x);
  require(xn->value.numel() > 0, "mean_square_diff: empty tensor");
  Scalar s = 0.0;
  for (std::size_t i = 0; i < xn->value.numel(); ++i) {
    const Scalar d = xn->value[i] - target;
    s += d * d;
  }
  const Scalar inv_n = 1.0 / static_cast<Scalar>(xn->value.numel());
  Node* n = OpAccess::make(
      *g, Tensor::scalar(s * inv_n), {xn}, [xn, target, inv_n](Node& self) {
        if (!wants_grad(xn)) return;
        Tensor& gp = ensure_grad(xn);
        const Scalar gy = self.grad[0] * inv_n;
        for (std::size_t i = 0; i < gp.numel(); ++i)
          gp[i] += gy * 2.0 * (xn->value[i] - target);
      });
  return OpAccess::wrap(n, g);
}

Value mean_softplus(Value x, Scalar sign) {
  require(sign == 1.0 || sign == -1.0, "mean_softplus: sign must be +-1");
  Node* xn = OpAccess::node(x);
  Graph* g = OpAccess::graph(x);
  require(xn->value.numel() > 0, "mean_softplus: empty tensor");
  Scalar s = 0.0;
  for (std::size_t i = 0; i < xn->value.numel(); ++i)
    s += stable_softplus(sign * xn->value[i]);
  const Scalar inv_n = 1.0 / static_cast<Scalar>(xn->value.numel());
  Node* n = OpAccess::make(
      *g, Tensor::scalar(s * inv_n), {xn}, [xn, sign, inv_n](Node& self) {
        if (!wants_grad(xn)) return;
        Tensor& gp = ensure_grad(xn);
        const Scalar gy = self.grad[0] * inv_n;
        for (std::size_t i = 0; i < gp.numel(); ++i)
          gp[i] += gy * sign * stable_sigmoid(sign * xn->value[i]);
      });
  return OpAccess::wrap(n, g);
}

Value weighted_sum(const std::vector<std::pair<Scalar, Value>>& terms) {
  require(!terms.empty(), "weighted_sum: no terms");
  Graph* g = OpAccess::graph(terms.front().second);
  Scalar s = 0.0;
  std::vector<Node*> parents;
  std::vector<Scalar> weights;
  for (const auto& [w, v] : terms) {
    Node* n = OpAccess::node(v);
    require(n->value.numel() == 1, "weighted_sum: non-scalar term");
    s += w * n->value[0];
    parents.push_back(n);
    weights.push_back(w);
  }
  std::vector<Node*> captured = parents;
  Node* n = OpAccess::make(
      *g, Tensor::scalar(s), parents, [captured, weights](Node& self) {
        for (std::size_t i = 0; i < captured.size(); ++i) {
          if (!wants_grad(captured[i])) continue;
          ensure_grad(captured[i])[0] += weights[i] * self.grad[0];
        }
      });
  return OpAccess::wrap(n, g);
}

Value detach(Value x) {
  Graph* g = OpAccess::graph(x);
  return g->input(OpAccess::node(x)->value);
}

}  // namespace uwhdn
