#include "streamcast/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "streamcast/kernels.hpp"

namespace streamcast {

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;

void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericsError(std::string("non-finite value produced by op '") + op + "'");
    }
  }
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

namespace detail {

// Zero-initialized gradient buffers keyed by node id, created on demand.
class GradBuffers {
 public:
  explicit GradBuffers(std::unordered_map<std::uint64_t, std::vector<double>>& m) : map_(m) {}

  std::vector<double>& of(const NodePtr& n) {
    auto it = map_.find(n->id);
    if (it == map_.end()) {
      it = map_.emplace(n->id, std::vector<double>(n->value.size(), 0.0)).first;
    }
    return it->second;
  }

 private:
  std::unordered_map<std::uint64_t, std::vector<double>>& map_;
};

}  // namespace detail

namespace {

using detail::BackwardFn;
using detail::GradBuffers;
using detail::Node;
using detail::NodePtr;

Tensor make_node(const char* op, Shape shape, std::vector<double> value,
                 std::vector<NodePtr> parents, BackwardFn fn) {
  if (shape_size(shape) != value.size()) {
    throw ShapeError(std::string(op) + ": shape/data size mismatch");
  }
  check_finite(op, value);
  auto n = std::make_shared<Node>();
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  bool rg = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) rg = rg || p->requires_grad;
  }
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backward = std::move(fn);
  }
  return Tensor(std::move(n));
}

// Broadcast contract for binary ops: equal shapes, scalar rhs, or rhs shape a
// suffix of lhs shape. Returns rhs element count (the repeat block size).
std::size_t broadcast_block(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return b.size();
  if (b.size() == 1) return 1;
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() < sa.size() &&
      std::equal(sb.begin(), sb.end(), sa.end() - static_cast<std::ptrdiff_t>(sb.size()))) {
    return b.size();
  }
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(sa) + " vs " +
                   shape_str(sb));
}

Tensor binary_op(const char* op, const Tensor& a, const Tensor& b,
                 double (*fwd)(double, double),
                 double (*dfa)(double, double),
                 double (*dfb)(double, double)) {
  const std::size_t block = broadcast_block(op, a, b);
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i % block]);
  auto pa = a.node();
  auto pb = b.node();
  return make_node(op, a.shape(), std::move(out), {pa, pb},
                   [pa, pb, block, dfa, dfb](const std::vector<double>& g, GradBuffers& bufs) {
                     const auto& av2 = pa->value;
                     const auto& bv2 = pb->value;
                     if (pa->requires_grad) {
                       auto& ga = bufs.of(pa);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         ga[i] += g[i] * dfa(av2[i], bv2[i % block]);
                       }
                     }
                     if (pb->requires_grad) {
                       auto& gb = bufs.of(pb);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         gb[i % block] += g[i] * dfb(av2[i], bv2[i % block]);
                       }
                     }
                   });
}

Tensor unary_op(const char* op, const Tensor& a, double (*fwd)(double), double (*dfd)(double)) {
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  auto pa = a.node();
  return make_node(op, a.shape(), std::move(out), {pa},
                   [pa, dfd](const std::vector<double>& g, GradBuffers& bufs) {
                     if (!pa->requires_grad) return;
                     auto& ga = bufs.of(pa);
                     const auto& av2 = pa->value;
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfd(av2[i]);
                   });
}

void require_2d(const char* op, const Tensor& t) {
  if (t.shape().size() != 2) {
    throw ShapeError(std::string(op) + ": expected 2-D tensor, got " + shape_str(t.shape()));
  }
}

}  // namespace

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  return make_node("leaf", std::move(shape), std::move(values), {}, nullptr);
}

Tensor Tensor::zeros(Shape shape) {
  std::size_t n = shape_size(shape);
  return make_node("leaf", std::move(shape), std::vector<double>(n, 0.0), {}, nullptr);
}

Tensor Tensor::full(Shape shape, double v) {
  std::size_t n = shape_size(shape);
  return make_node("leaf", std::move(shape), std::vector<double>(n, v), {}, nullptr);
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::param(Shape shape, std::vector<double> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

double Tensor::value() const {
  if (size() != 1) throw ShapeError("value(): tensor is not scalar, shape " + shape_str(shape()));
  return node_->value[0];
}

std::vector<double>& Tensor::leaf_data() {
  if (!node_->parents.empty()) throw ShapeError("leaf_data(): tensor is not a leaf");
  return node_->value;
}

GradientMap backward(const Tensor& loss) {
  if (loss.size() != 1) throw ShapeError("backward: loss must be scalar");
  GradientMap result;
  if (!loss.requires_grad()) return result;

  // Deterministic postorder over the requires_grad subgraph.
  std::vector<detail::NodePtr> order;
  std::unordered_set<std::uint64_t> visited;
  struct Frame {
    detail::NodePtr node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node(), 0});
  visited.insert(loss.node()->id);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      const auto& p = f.node->parents[f.next_parent++];
      if (p->requires_grad && visited.insert(p->id).second) {
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  auto& grads = result.grads_;
  grads.emplace(loss.id(), std::vector<double>{1.0});
  detail::GradBuffers bufs(grads);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto& n = *it;
    if (!n->backward) continue;
    auto g = grads.find(n->id);
    if (g == grads.end()) continue;
    // Copy: scattering into parents may rehash the map under us.
    const std::vector<double> gout = g->second;
    n->backward(gout, bufs);
  }
  return result;
}

Tensor GradientMap::grad(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) return Tensor::zeros(t.shape());
  return Tensor::from(t.shape(), it->second);
}

bool GradientMap::contains(const Tensor& t) const { return grads_.count(t.id()) > 0; }

void GradAccumulator::accumulate(const GradientMap& g) {
  for (const auto& [id, v] : g.grads_) {
    auto it = total_.grads_.find(id);
    if (it == total_.grads_.end()) {
      total_.grads_.emplace(id, v);
    } else {
      auto& acc = it->second;
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
    }
  }
}

void GradAccumulator::scale(double s) {
  for (auto& [id, v] : total_.grads_) {
    (void)id;
    for (double& x : v) x *= s;
  }
}

Tensor GradAccumulator::grad(const Tensor& t) const { return total_.grad(t); }

namespace ops {

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor divide(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& a) {
  return unary_op(
      "neg", a, [](double x) { return -x; }, [](double) { return -1.0; });
}

Tensor scale(const Tensor& a, double c) {
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * c;
  auto pa = a.node();
  return make_node("scale", a.shape(), std::move(out), {pa},
                   [pa, c](const std::vector<double>& g, GradBuffers& bufs) {
                     if (!pa->requires_grad) return;
                     auto& ga = bufs.of(pa);
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
                   });
}

Tensor add_const(const Tensor& a, double c) {
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + c;
  auto pa = a.node();
  return make_node("add_const", a.shape(), std::move(out), {pa},
                   [pa](const std::vector<double>& g, GradBuffers& bufs) {
                     if (!pa->requires_grad) return;
                     auto& ga = bufs.of(pa);
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                   });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Tensor log(const Tensor& a) {
  return unary_op(
      "log", a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Tensor abs(const Tensor& a) {
  return unary_op(
      "abs", a, [](double x) { return std::fabs(x); },
      [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& a) {
  return unary_op(
      "softplus", a,
      [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d("matmul", a);
  require_2d("matmul", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dims differ: " + shape_str(a.shape()) + " * " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  kernels::matmul(a.data().data(), b.data().data(), out.data(), m, k, n);
  auto pa = a.node();
  auto pb = b.node();
  return make_node("matmul", {m, n}, std::move(out), {pa, pb},
                   [pa, pb, m, k, n](const std::vector<double>& g, GradBuffers& bufs) {
                     if (pa->requires_grad) {
                       std::vector<double> da(m * k);
                       kernels::matmul_nt(g.data(), pb->value.data(), da.data(), m, n, k);
                       auto& ga = bufs.of(pa);
                       for (std::size_t i = 0; i < da.size(); ++i) ga[i] += da[i];
                     }
                     if (pb->requires_grad) {
                       std::vector<double> db(k * n);
                       kernels::matmul_tn(pa->value.data(), g.data(), db.data(), k, m, n);
                       auto& gb = bufs.of(pb);
                       for (std::size_t i = 0; i < db.size(); ++i) gb[i] += db[i];
                     }
                   });
}

Tensor transpose(const Tensor& a) {
  require_2d("transpose", a);
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  const auto& av = a.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  }
  auto pa = a.node();
  return make_node("transpose", {c, r}, std::move(out), {pa},
                   [pa, r, c](const std::vector<double>& g, GradBuffers& bufs) {
                     if (!pa->requires_grad) return;
                     auto& ga = bufs.of(pa);
                     for (std::size_t i = 0; i < r; ++i) {
                       for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
                     }
                   });
}

Tensor softmax_rows(const Tensor& a) {
  const Shape& s = a.shape();
  if (s.empty()) throw ShapeError("softmax_rows: empty shape");
  const std::size_t cols = s.back();
  const std::size_t rows = a.size() / std::max<std::size_t>(cols, 1);
  if (cols == 0) throw ShapeError("softmax_rows: zero-width rows");
  std::vector<double> out(a.size());
  kernels::softmax_rows(a.data().data(), out.data(), rows, cols);
  auto pa = a.node();
  // Capture outputs for the backward: dx = y * (g - sum(g*y)).
  auto yv = std::make_shared<std::vector<double>>(out);
  return make_node("softmax", s, std::move(out), {pa},
                   [pa, yv, rows, cols](const std::vector<double>& g, GradBuffers& bufs) {
                     if (!pa->requires_grad) return;
                     auto& ga = bufs.of(pa);
                     const auto& y = *yv;
                     for (std::size_t i = 0; i < rows; ++i) {
                       const std::size_t off = i * cols;
                       double dot = 0.0;
                       for (std::size_t j = 0; j < cols; ++j) dot += g[off + j] * y[off + j];
                       for (std::size_t j = 0; j < cols; ++j) {
                         ga[off + j] += y[off + j] * (g[off + j] - dot);
                       }
                     }
                   });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("layer_norm: empty shape");
  const std::size_t cols = s.back();
  const std::size_t rows = x.size() / std::max<std::size_t>(cols, 1);
  if (gain.size() != cols || bias.size() != cols) {
    throw ShapeError("layer_norm: gain/bias size must match last dim");
  }
  std::vector<double> out(x.size());
  auto mean = std::make_shared<std::vector<double>>(rows);
  auto rstd = std::make_shared<std::vector<double>>(rows);
  kernels::layernorm_rows(x.data().data(), gain.data().data(), bias.data().data(), eps,
                          out.data(), mean->data(), rstd->data(), rows, cols);
  auto px = x.node();
  auto pg = gain.node();
  auto pb = bias.node();
  return make_node(
      "layer_norm", s, std::move(out), {px, pg, pb},
      [px, pg, pb, mean, rstd, rows, cols](const std::vector<double>& g, GradBuffers& bufs) {
        const auto& xv = px->value;
        const auto& gv = pg->value;
        const double inv_c = 1.0 / static_cast<double>(cols);
        std::vector<double> xhat(cols), dxhat(cols);
        for (std::size_t i = 0; i < rows; ++i) {
          const std::size_t off = i * cols;
          const double mu = (*mean)[i];
          const double rs = (*rstd)[i];
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < cols; ++j) {
            xhat[j] = (xv[off + j] - mu) * rs;
            dxhat[j] = g[off + j] * gv[j];
            sum_dxhat += dxhat[j];
            sum_dxhat_xhat += dxhat[j] * xhat[j];
          }
          if (px->requires_grad) {
            auto& gx = bufs.of(px);
            for (std::size_t j = 0; j < cols; ++j) {
              gx[off + j] +=
                  rs * (dxhat[j] - inv_c * sum_dxhat - xhat[j] * inv_c * sum_dxhat_xhat);
            }
          }
          if (pg->requires_grad) {
            auto& gg = bufs.of(pg);
            for (std::size_t j = 0; j < cols; ++j) gg[j] += g[off + j] * xhat[j];
          }
          if (pb->requires_grad) {
            auto& gb = bufs.of(pb);
            for (std::size_t j = 0; j < cols; ++j) gb[j] += g[off + j];
          }
        }
      });
}

Tensor concat(const std::vector<Tensor>& ts, std::size_t axis) {
  if (ts.empty()) throw ShapeError("concat: empty input list");
  const std::size_t ndim = ts[0].shape().size();
  if (ndim == 0 || ndim > 2 || axis >= ndim) {
    throw ShapeError("concat: supports 1-D/2-D tensors, axis 0 or 1");
  }
  for (const auto& t : ts) {
    if (t.shape().size() != ndim) throw ShapeError("concat: rank mismatch");
  }
  std::vector<double> out;
  Shape shape;
  std::vector<NodePtr> parents;
  parents.reserve(ts.size());
  for (const auto& t : ts) parents.push_back(t.node());
  const std::vector<NodePtr> ps = parents;  // lambda copy; `parents` is moved into the node

  if (ndim == 1 || axis == 0) {
    const std::size_t cols = ndim == 2 ? ts[0].cols() : 1;
    std::size_t rows = 0;
    for (const auto& t : ts) {
      if (ndim == 2 && t.cols() != cols) throw ShapeError("concat: column mismatch");
      rows += t.shape()[0];
      out.insert(out.end(), t.data().begin(), t.data().end());
    }
    shape = ndim == 2 ? Shape{rows, cols} : Shape{rows};
    return make_node("concat", std::move(shape), std::move(out), std::move(parents),
                     [ps](const std::vector<double>& g, GradBuffers& bufs) {
                       std::size_t off = 0;
                       for (const auto& p : ps) {
                         const std::size_t n = p->value.size();
                         if (p->requires_grad) {
                           auto& gp = bufs.of(p);
                           for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
                         }
                         off += n;
                       }
                     });
  }

  // axis == 1, 2-D: all row counts equal.
  const std::size_t rows = ts[0].rows();
  std::size_t cols = 0;
  std::vector<std::size_t> widths;
  for (const auto& t : ts) {
    if (t.rows() != rows) throw ShapeError("concat: row mismatch");
    widths.push_back(t.cols());
    cols += t.cols();
  }
  out.resize(rows * cols);
  std::size_t coff = 0;
  for (const auto& t : ts) {
    const std::size_t w = t.cols();
    for (std::size_t i = 0; i < rows; ++i) {
      std::copy_n(t.data().begin() + i * w, w, out.begin() + i * cols + coff);
    }
    coff += w;
  }
  return make_node(
      "concat", {rows, cols}, std::move(out), std::move(parents),
      [ps, widths, rows, cols](const std::vector<double>& g, GradBuffers& bufs) {
        std::size_t coff2 = 0;
        for (std::size_t t = 0; t < ps.size(); ++t) {
          const std::size_t w = widths[t];
          if (ps[t]->requires_grad) {
            auto& gp = bufs.of(ps[t]);
            for (std::size_t i = 0; i < rows; ++i) {
              for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * cols + coff2 + j];
            }
          }
          coff2 += w;
        }
      });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t count) {
  const Shape& s = a.shape();
  if (s.empty() || s.size() > 2 || axis >= s.size()) {
    throw ShapeError("slice: supports 1-D/2-D tensors, axis 0 or 1");
  }
  if (begin + count > s[axis]) throw ShapeError("slice: out of range");
  const auto& av = a.data();
  auto pa = a.node();

  if (s.size() == 1 || axis == 0) {
    const std::size_t cols = s.size() == 2 ? s[1] : 1;
    std::vector<double> out(av.begin() + begin * cols, av.begin() + (begin + count) * cols);
    Shape shape = s.size() == 2 ? Shape{count, s[1]} : Shape{count};
    return make_node("slice", std::move(shape), std::move(out), {pa},
                     [pa, begin, cols](const std::vector<double>& g, GradBuffers& bufs) {
                       if (!pa->requires_grad) return;
                       auto& ga = bufs.of(pa);
                       const std::size_t off = begin * cols;
                       for (std::size_t i = 0; i < g.size(); ++i) ga[off + i] += g[i];
                     });
  }

  const std::size_t rows = s[0], cols = s[1];
  std::vector<double> out(rows * count);
  for (std::size_t i = 0; i < rows; ++i) {
    std::copy_n(av.begin() + i * cols + begin, count, out.begin() + i * count);
  }
  return make_node("slice", {rows, count}, std::move(out), {pa},
                   [pa, begin, count, rows, cols](const std::vector<double>& g, GradBuffers& bufs) {
                     if (!pa->requires_grad) return;
                     auto& ga = bufs.of(pa);
                     for (std::size_t i = 0; i < rows; ++i) {
                       for (std::size_t j = 0; j < count; ++j) {
                         ga[i * cols + begin + j] += g[i * count + j];
                       }
                     }
                   });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: size mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  auto pa = a.node();
  return make_node("reshape", std::move(shape), a.data(), {pa},
                   [pa](const std::vector<double>& g, GradBuffers& bufs) {
                     if (!pa->requires_grad) return;
                     auto& ga = bufs.of(pa);
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                   });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  auto pa = a.node();
  return make_node("sum", {1}, {acc}, {pa},
                   [pa](const std::vector<double>& g, GradBuffers& bufs) {
                     if (!pa->requires_grad) return;
                     auto& ga = bufs.of(pa);
                     for (double& x : ga) x += g[0];
                   });
}

Tensor row_sum(const Tensor& a) {
  require_2d("row_sum", a);
  const std::size_t rows = a.rows(), cols = a.cols();
  std::vector<double> out(rows, 0.0);
  const auto& av = a.data();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[i] += av[i * cols + j];
  }
  auto pa = a.node();
  return make_node("row_sum", {rows}, std::move(out), {pa},
                   [pa, rows, cols](const std::vector<double>& g, GradBuffers& bufs) {
                     if (!pa->requires_grad) return;
                     auto& ga = bufs.of(pa);
                     for (std::size_t i = 0; i < rows; ++i) {
                       for (std::size_t j = 0; j < cols; ++j) ga[i * cols + j] += g[i];
                     }
                   });
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor detach(const Tensor& a) { return Tensor::from(a.shape(), a.data()); }

Tensor dropout(const Tensor& a, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return a;
  const double keep = 1.0 - rate;
  const double scl = 1.0 / keep;
  const auto& av = a.data();
  std::vector<double> out(av.size());
  auto mask = std::make_shared<std::vector<double>>(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double m = rng.uniform() < keep ? scl : 0.0;
    (*mask)[i] = m;
    out[i] = av[i] * m;
  }
  auto pa = a.node();
  return make_node("dropout", a.shape(), std::move(out), {pa},
                   [pa, mask](const std::vector<double>& g, GradBuffers& bufs) {
                     if (!pa->requires_grad) return;
                     auto& ga = bufs.of(pa);
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*mask)[i];
                   });
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, double scl) {
  require_2d("attention", q);
  require_2d("attention", k);
  require_2d("attention", v);
  if (k.rows() == 0) return Tensor::zeros({q.rows(), v.cols()});
  Tensor scores = scale(matmul(q, transpose(k)), scl);
  Tensor weights = softmax_rows(scores);
  return matmul(weights, v);
}

}  // namespace ops

}  // namespace streamcast
