#include "symseg/ops.hpp"

#include <cmath>
#include <utility>

namespace symseg {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr make_node(Shape shape, Eigen::ArrayXd values, std::vector<NodePtr> parents,
                  std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

// Adds a result-shaped gradient contribution to a parent, collapsing it
// when the parent was broadcast from a single element.
void accumulate(const NodePtr& p, const Eigen::ArrayXd& g) {
  if (!p->requires_grad) return;
  p->ensure_grad();
  if (p->values.size() == 1) {
    p->grad(0) += g.sum();
  } else {
    p->grad += g;
  }
}

void check_binary_shapes(const char* op, const Tensor& a, const Tensor& b) {
  if (a.size() == 1 || b.size() == 1) return;
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

const Shape& broader_shape(const Tensor& a, const Tensor& b) {
  return (a.size() >= b.size()) ? a.shape() : b.shape();
}

Eigen::ArrayXd broadcast_to(const Eigen::ArrayXd& v, Index n) {
  if (v.size() == n) return v;
  return Eigen::ArrayXd::Constant(n, v(0));
}

struct AxisSpan {
  Index outer, axis, inner;
};

AxisSpan axis_span(const Shape& shape, Index axis) {
  if (axis < 0 || axis >= static_cast<Index>(shape.size())) {
    throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for shape " +
                                shape_str(shape));
  }
  AxisSpan s{1, shape[axis], 1};
  for (Index i = 0; i < axis; ++i) s.outer *= shape[i];
  for (Index i = axis + 1; i < static_cast<Index>(shape.size()); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_binary_shapes("add", a, b);
  const Index n = std::max(a.size(), b.size());
  Eigen::ArrayXd out = broadcast_to(a.values(), n) + broadcast_to(b.values(), n);
  auto pa = a.node_ptr(), pb = b.node_ptr();
  return Tensor(make_node(broader_shape(a, b), std::move(out), {pa, pb}, [pa, pb](Node& nd) {
    accumulate(pa, nd.grad);
    accumulate(pb, nd.grad);
  }));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_binary_shapes("sub", a, b);
  const Index n = std::max(a.size(), b.size());
  Eigen::ArrayXd out = broadcast_to(a.values(), n) - broadcast_to(b.values(), n);
  auto pa = a.node_ptr(), pb = b.node_ptr();
  return Tensor(make_node(broader_shape(a, b), std::move(out), {pa, pb}, [pa, pb](Node& nd) {
    accumulate(pa, nd.grad);
    accumulate(pb, -nd.grad);
  }));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_binary_shapes("mul", a, b);
  const Index n = std::max(a.size(), b.size());
  Eigen::ArrayXd out = broadcast_to(a.values(), n) * broadcast_to(b.values(), n);
  auto pa = a.node_ptr(), pb = b.node_ptr();
  return Tensor(make_node(broader_shape(a, b), std::move(out), {pa, pb}, [pa, pb, n](Node& nd) {
    accumulate(pa, nd.grad * broadcast_to(pb->values, n));
    accumulate(pb, nd.grad * broadcast_to(pa->values, n));
  }));
}

Tensor scale(const Tensor& a, double c) {
  Eigen::ArrayXd out = a.values() * c;
  auto pa = a.node_ptr();
  return Tensor(make_node(a.shape(), std::move(out), {pa}, [pa, c](Node& nd) {
    accumulate(pa, nd.grad * c);
  }));
}

Tensor neg(const Tensor& a) {
  Eigen::ArrayXd out = -a.values();
  auto pa = a.node_ptr();
  return Tensor(make_node(a.shape(), std::move(out), {pa}, [pa](Node& nd) {
    accumulate(pa, -nd.grad);
  }));
}

Tensor relu(const Tensor& a) {
  // select() rather than max() so -0.0 never leaks through
  Eigen::ArrayXd out = (a.values() > 0.0).select(a.values(), 0.0);
  auto pa = a.node_ptr();
  return Tensor(make_node(a.shape(), std::move(out), {pa}, [pa](Node& nd) {
    accumulate(pa, nd.grad * (pa->values > 0.0).cast<double>());
  }));
}

Tensor exp(const Tensor& a) {
  Eigen::ArrayXd out = a.values().exp();
  auto pa = a.node_ptr();
  return Tensor(make_node(a.shape(), std::move(out), {pa}, [pa](Node& nd) {
    accumulate(pa, nd.grad * nd.values);
  }));
}

Tensor log(const Tensor& a) {
  if ((a.values() <= 0.0).any()) {
    throw std::domain_error("log: input must be strictly positive");
  }
  Eigen::ArrayXd out = a.values().log();
  auto pa = a.node_ptr();
  return Tensor(make_node(a.shape(), std::move(out), {pa}, [pa](Node& nd) {
    accumulate(pa, nd.grad / pa->values);
  }));
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must not exceed hi");
  Eigen::ArrayXd out = a.values().max(lo).min(hi);
  auto pa = a.node_ptr();
  return Tensor(make_node(a.shape(), std::move(out), {pa}, [pa, lo, hi](Node& nd) {
    Eigen::ArrayXd mask =
        ((pa->values >= lo).cast<double>() * (pa->values <= hi).cast<double>());
    accumulate(pa, nd.grad * mask);
  }));
}

Tensor sum(const Tensor& a) {
  Eigen::ArrayXd out(1);
  out(0) = a.values().sum();
  auto pa = a.node_ptr();
  return Tensor(make_node({1}, std::move(out), {pa}, [pa](Node& nd) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    pa->grad += nd.grad(0);
  }));
}

Tensor sum_axis(const Tensor& a, Index axis) {
  const AxisSpan s = axis_span(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[axis] = 1;
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(s.outer * s.inner);
  const Eigen::ArrayXd& v = a.values();
  for (Index o = 0; o < s.outer; ++o)
    for (Index c = 0; c < s.axis; ++c)
      for (Index i = 0; i < s.inner; ++i) out(o * s.inner + i) += v((o * s.axis + c) * s.inner + i);
  auto pa = a.node_ptr();
  return Tensor(make_node(std::move(out_shape), std::move(out), {pa}, [pa, s](Node& nd) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (Index o = 0; o < s.outer; ++o)
      for (Index c = 0; c < s.axis; ++c)
        for (Index i = 0; i < s.inner; ++i)
          pa->grad((o * s.axis + c) * s.inner + i) += nd.grad(o * s.inner + i);
  }));
}

Tensor slice_axis0(const Tensor& a, Index begin, Index end) {
  const Shape& shape = a.shape();
  if (begin < 0 || end > shape[0] || begin >= end) {
    throw std::invalid_argument("slice_axis0: invalid range [" + std::to_string(begin) + "," +
                                std::to_string(end) + ") for shape " + shape_str(shape));
  }
  const Index inner = a.size() / shape[0];
  Shape out_shape = shape;
  out_shape[0] = end - begin;
  Eigen::ArrayXd out = a.values().segment(begin * inner, (end - begin) * inner);
  auto pa = a.node_ptr();
  return Tensor(make_node(std::move(out_shape), std::move(out), {pa},
                          [pa, begin, end, inner](Node& nd) {
                            if (!pa->requires_grad) return;
                            pa->ensure_grad();
                            pa->grad.segment(begin * inner, (end - begin) * inner) += nd.grad;
                          }));
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, Index stride, Index padding) {
  if (input.ndim() != 3) throw std::invalid_argument("conv2d: input must be [C,H,W]");
  if (kernel.ndim() != 4) throw std::invalid_argument("conv2d: kernel must be [C_out,C_in,k,k]");
  const Index c_in = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  const Index c_out = kernel.shape()[0], k = kernel.shape()[2];
  if (kernel.shape()[1] != c_in) {
    throw std::invalid_argument("conv2d: kernel expects " + std::to_string(kernel.shape()[1]) +
                                " input channels, input has " + std::to_string(c_in));
  }
  if (kernel.shape()[3] != k) throw std::invalid_argument("conv2d: kernel must be square");
  if (k % 2 == 0) throw std::invalid_argument("conv2d: kernel size must be odd");
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be positive");
  if (padding < 0) throw std::invalid_argument("conv2d: padding must be non-negative");
  const Index h_out = (h + 2 * padding - k) / stride + 1;
  const Index w_out = (w + 2 * padding - k) / stride + 1;
  if (h + 2 * padding < k || w + 2 * padding < k || h_out < 1 || w_out < 1) {
    throw std::invalid_argument("conv2d: non-positive output size");
  }

  const Eigen::ArrayXd& x = input.values();
  const Eigen::ArrayXd& kv = kernel.values();
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(c_out * h_out * w_out);
  for (Index co = 0; co < c_out; ++co) {
    for (Index oy = 0; oy < h_out; ++oy) {
      for (Index ox = 0; ox < w_out; ++ox) {
        double acc = 0.0;
        for (Index ci = 0; ci < c_in; ++ci) {
          for (Index ky = 0; ky < k; ++ky) {
            const Index y = oy * stride + ky - padding;
            if (y < 0 || y >= h) continue;
            for (Index kx = 0; kx < k; ++kx) {
              const Index xx = ox * stride + kx - padding;
              if (xx < 0 || xx >= w) continue;
              acc += x((ci * h + y) * w + xx) * kv(((co * c_in + ci) * k + ky) * k + kx);
            }
          }
        }
        out((co * h_out + oy) * w_out + ox) = acc;
      }
    }
  }

  auto pi = input.node_ptr(), pk = kernel.node_ptr();
  auto bw = [pi, pk, c_in, c_out, h, w, k, stride, padding, h_out, w_out](Node& nd) {
    const bool gi = pi->requires_grad, gk = pk->requires_grad;
    if (gi) pi->ensure_grad();
    if (gk) pk->ensure_grad();
    for (Index co = 0; co < c_out; ++co) {
      for (Index oy = 0; oy < h_out; ++oy) {
        for (Index ox = 0; ox < w_out; ++ox) {
          const double g = nd.grad((co * h_out + oy) * w_out + ox);
          if (g == 0.0) continue;
          for (Index ci = 0; ci < c_in; ++ci) {
            for (Index ky = 0; ky < k; ++ky) {
              const Index y = oy * stride + ky - padding;
              if (y < 0 || y >= h) continue;
              for (Index kx = 0; kx < k; ++kx) {
                const Index xx = ox * stride + kx - padding;
                if (xx < 0 || xx >= w) continue;
                const Index xi = (ci * h + y) * w + xx;
                const Index ki = ((co * c_in + ci) * k + ky) * k + kx;
                if (gi) pi->grad(xi) += g * pk->values(ki);
                if (gk) pk->grad(ki) += g * pi->values(xi);
              }
            }
          }
        }
      }
    }
  };
  return Tensor(make_node({c_out, h_out, w_out}, std::move(out), {pi, pk}, std::move(bw)));
}

Tensor softmax(const Tensor& logits, Index axis) {
  if (!logits.values().isFinite().all()) {
    throw std::domain_error("softmax: input must be finite");
  }
  const AxisSpan s = axis_span(logits.shape(), axis);
  const Eigen::ArrayXd& v = logits.values();
  Eigen::ArrayXd out(v.size());
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      double m = v((o * s.axis + 0) * s.inner + i);
      for (Index c = 1; c < s.axis; ++c) m = std::max(m, v((o * s.axis + c) * s.inner + i));
      double total = 0.0;
      for (Index c = 0; c < s.axis; ++c) {
        const Index idx = (o * s.axis + c) * s.inner + i;
        out(idx) = std::exp(v(idx) - m);
        total += out(idx);
      }
      for (Index c = 0; c < s.axis; ++c) out((o * s.axis + c) * s.inner + i) /= total;
    }
  }
  auto pa = logits.node_ptr();
  return Tensor(make_node(logits.shape(), std::move(out), {pa}, [pa, s](Node& nd) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (Index o = 0; o < s.outer; ++o) {
      for (Index i = 0; i < s.inner; ++i) {
        double dot = 0.0;
        for (Index c = 0; c < s.axis; ++c) {
          const Index idx = (o * s.axis + c) * s.inner + i;
          dot += nd.grad(idx) * nd.values(idx);
        }
        for (Index c = 0; c < s.axis; ++c) {
          const Index idx = (o * s.axis + c) * s.inner + i;
          pa->grad(idx) += nd.values(idx) * (nd.grad(idx) - dot);
        }
      }
    }
  }));
}

Tensor upsample_nearest(const Tensor& a, Index factor, Index out_h, Index out_w) {
  if (a.ndim() != 3) throw std::invalid_argument("upsample_nearest: input must be [C,H,W]");
  if (factor < 1) throw std::invalid_argument("upsample_nearest: factor must be positive");
  const Index c = a.shape()[0], h = a.shape()[1], w = a.shape()[2];
  if (out_h < 1 || out_w < 1 || out_h > h * factor || out_w > w * factor) {
    throw std::invalid_argument("upsample_nearest: target size out of range");
  }
  const Eigen::ArrayXd& v = a.values();
  Eigen::ArrayXd out(c * out_h * out_w);
  for (Index ci = 0; ci < c; ++ci)
    for (Index y = 0; y < out_h; ++y)
      for (Index x = 0; x < out_w; ++x)
        out((ci * out_h + y) * out_w + x) = v((ci * h + y / factor) * w + x / factor);
  auto pa = a.node_ptr();
  return Tensor(
      make_node({c, out_h, out_w}, std::move(out), {pa}, [pa, factor, c, h, w, out_h, out_w](Node& nd) {
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        for (Index ci = 0; ci < c; ++ci)
          for (Index y = 0; y < out_h; ++y)
            for (Index x = 0; x < out_w; ++x)
              pa->grad((ci * h + y / factor) * w + x / factor) +=
                  nd.grad((ci * out_h + y) * out_w + x);
      }));
}

Tensor l2_norm(const Tensor& a) {
  Eigen::ArrayXd out(1);
  out(0) = std::sqrt(a.values().square().sum());
  auto pa = a.node_ptr();
  return Tensor(make_node({1}, std::move(out), {pa}, [pa](Node& nd) {
    if (!pa->requires_grad) return;
    const double norm = nd.values(0);
    if (norm == 0.0) return;  // subgradient 0 at the origin
    pa->ensure_grad();
    pa->grad += (nd.grad(0) / norm) * pa->values;
  }));
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("cosine_similarity: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  const double na = std::sqrt(a.values().square().sum());
  const double nb = std::sqrt(b.values().square().sum());
  Eigen::ArrayXd out(1);
  const bool degenerate = (na == 0.0 || nb == 0.0);
  if (na == 0.0 && nb == 0.0) {
    out(0) = 1.0;
  } else if (degenerate) {
    out(0) = 0.0;
  } else {
    out(0) = (a.values() * b.values()).sum() / (na * nb);
  }
  auto pa = a.node_ptr(), pb = b.node_ptr();
  return Tensor(make_node({1}, std::move(out), {pa, pb}, [pa, pb, na, nb, degenerate](Node& nd) {
    if (degenerate) return;  // constant by convention at the degenerate points
    const double g = nd.grad(0);
    const double cosv = nd.values(0);
    if (pa->requires_grad) {
      pa->ensure_grad();
      pa->grad += g * (pb->values / (na * nb) - cosv * pa->values / (na * na));
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      pb->grad += g * (pa->values / (na * nb) - cosv * pb->values / (nb * nb));
    }
  }));
}

}  // namespace symseg
