#include "necho/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace necho::ag {

namespace {

thread_local bool g_grad_enabled = true;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("autograd: ") + what);
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string("autograd: shape mismatch in ") + op + " (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }
bool wants(Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

double Var::item() const {
  require(rows() == 1 && cols() == 1, "item() on non-scalar");
  return node_->value(0, 0);
}

Var make_result(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
  Var out;
  out.node_ = std::make_shared<Node>();
  out.node_->value = std::move(value);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(parents.size());
  for (auto& p : parents) out.node_->parents.push_back(p.node());
  out.node_->backward_fn = std::move(backward_fn);
  return out;
}

Var constant(Matrix value) { return Var(std::move(value), false); }

Var scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Var& loss) {
  require(loss.rows() == 1 && loss.cols() == 1, "backward() needs a scalar loss");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !p->parents.empty() && seen.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Node& root = *loss.node();
  Matrix one(1, 1);
  one(0, 0) = 1.0;
  root.accumulate(one);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->grad.size() == 0 || !n->backward_fn) continue;
    n->backward_fn(*n);
    // Interior gradients are not needed after propagation.
    if (n != &root) n->grad.resize(0, 0);
  }
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_result(a.value() + b.value(), {a, b}, [](Node& self) {
    if (wants(self, 0)) parent(self, 0).accumulate(self.grad);
    if (wants(self, 1)) parent(self, 1).accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make_result(a.value() - b.value(), {a, b}, [](Node& self) {
    if (wants(self, 0)) parent(self, 0).accumulate(self.grad);
    if (wants(self, 1)) parent(self, 1).accumulate_expr(-self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return make_result(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    const Matrix& av = parent(self, 0).value;
    const Matrix& bv = parent(self, 1).value;
    if (wants(self, 0)) parent(self, 0).accumulate_expr(self.grad.cwiseProduct(bv));
    if (wants(self, 1)) parent(self, 1).accumulate_expr(self.grad.cwiseProduct(av));
  });
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a, b, "div");
  return make_result(a.value().cwiseQuotient(b.value()), {a, b}, [](Node& self) {
    const Matrix& av = parent(self, 0).value;
    const Matrix& bv = parent(self, 1).value;
    if (wants(self, 0)) parent(self, 0).accumulate_expr(self.grad.cwiseQuotient(bv));
    if (wants(self, 1)) {
      parent(self, 1).accumulate_expr(
          -self.grad.cwiseProduct(av).cwiseQuotient(bv.cwiseProduct(bv)));
    }
  });
}

Var scale(const Var& a, double s) {
  return make_result(a.value() * s, {a}, [s](Node& self) {
    parent(self, 0).accumulate_expr(self.grad * s);
  });
}

Var add_scalar(const Var& a, double s) {
  return make_result((a.value().array() + s).matrix(), {a},
                     [](Node& self) { parent(self, 0).accumulate(self.grad); });
}

Var scale_by(const Var& a, const Var& s) {
  require(s.rows() == 1 && s.cols() == 1, "scale_by expects a 1x1 factor");
  const double f = s.value()(0, 0);
  return make_result(a.value() * f, {a, s}, [f](Node& self) {
    if (wants(self, 0)) parent(self, 0).accumulate_expr(self.grad * f);
    if (wants(self, 1)) {
      Matrix g(1, 1);
      g(0, 0) = self.grad.cwiseProduct(parent(self, 0).value).sum();
      parent(self, 1).accumulate(g);
    }
  });
}

Var mul_col(const Var& a, const Var& c) {
  require(c.cols() == 1 && c.rows() == a.rows(), "mul_col expects a rows x 1 factor");
  Matrix out = a.value().array().colwise() * c.value().col(0).array();
  return make_result(std::move(out), {a, c}, [](Node& self) {
    const Matrix& av = parent(self, 0).value;
    const Matrix& cv = parent(self, 1).value;
    if (wants(self, 0)) {
      Matrix g = self.grad.array().colwise() * cv.col(0).array();
      parent(self, 0).accumulate(g);
    }
    if (wants(self, 1)) {
      Matrix g = self.grad.cwiseProduct(av).rowwise().sum();
      parent(self, 1).accumulate(g);
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul inner dimension mismatch");
  Matrix out = a.value() * b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const Matrix& av = parent(self, 0).value;
    const Matrix& bv = parent(self, 1).value;
    if (wants(self, 0)) parent(self, 0).accumulate_expr(self.grad * bv.transpose());
    if (wants(self, 1)) parent(self, 1).accumulate_expr(av.transpose() * self.grad);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require(a.cols() == b.cols(), "matmul_nt inner dimension mismatch");
  Matrix out = a.value() * b.value().transpose();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const Matrix& av = parent(self, 0).value;
    const Matrix& bv = parent(self, 1).value;
    if (wants(self, 0)) parent(self, 0).accumulate_expr(self.grad * bv);
    if (wants(self, 1)) parent(self, 1).accumulate_expr(self.grad.transpose() * av);
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require(x.cols() == weight.rows(), "linear input width mismatch");
  require(bias.rows() == 1 && bias.cols() == weight.cols(), "linear bias shape mismatch");
  Matrix out = x.value() * weight.value();
  out.rowwise() += bias.value().row(0);
  return make_result(std::move(out), {x, weight, bias}, [](Node& self) {
    const Matrix& xv = parent(self, 0).value;
    const Matrix& wv = parent(self, 1).value;
    if (wants(self, 0)) parent(self, 0).accumulate_expr(self.grad * wv.transpose());
    if (wants(self, 1)) parent(self, 1).accumulate_expr(xv.transpose() * self.grad);
    if (wants(self, 2)) parent(self, 2).accumulate_expr(self.grad.colwise().sum());
  });
}

Var relu(const Var& a) {
  return make_result(a.value().cwiseMax(0.0), {a}, [](Node& self) {
    const Matrix& av = parent(self, 0).value;
    parent(self, 0).accumulate_expr((av.array() > 0.0).select(self.grad.array(), 0.0).matrix());
  });
}

Var sigmoid(const Var& a) {
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return make_result(out, {a}, [out](Node& self) {
    parent(self, 0).accumulate_expr(
        (self.grad.array() * out.array() * (1.0 - out.array())).matrix());
  });
}

Var clamp_max(const Var& a, double hi) {
  return make_result(a.value().cwiseMin(hi), {a}, [hi](Node& self) {
    const Matrix& av = parent(self, 0).value;
    parent(self, 0).accumulate_expr((av.array() < hi).select(self.grad.array(), 0.0).matrix());
  });
}

// ---------------------------------------------------------------- reductions

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_result(std::move(out), {a}, [](Node& self) {
    const Matrix& av = parent(self, 0).value;
    parent(self, 0).accumulate_expr(Matrix::Constant(av.rows(), av.cols(), self.grad(0, 0)));
  });
}

Var mean(const Var& a) {
  require(a.value().size() > 0, "mean of empty matrix");
  const double n = static_cast<double>(a.value().size());
  Matrix out(1, 1);
  out(0, 0) = a.value().sum() / n;
  return make_result(std::move(out), {a}, [n](Node& self) {
    const Matrix& av = parent(self, 0).value;
    parent(self, 0).accumulate_expr(
        Matrix::Constant(av.rows(), av.cols(), self.grad(0, 0) / n));
  });
}

Var diag(const Var& a) {
  require(a.rows() == a.cols(), "diag expects a square matrix");
  Matrix out = a.value().diagonal();
  return make_result(std::move(out), {a}, [](Node& self) {
    const Index n = self.grad.rows();
    Matrix g = Matrix::Zero(n, n);
    g.diagonal() = self.grad.col(0);
    parent(self, 0).accumulate(g);
  });
}

Var row_l2_norm(const Var& a) {
  Matrix out = a.value().rowwise().norm();
  return make_result(out, {a}, [out](Node& self) {
    const Matrix& av = parent(self, 0).value;
    Matrix g(av.rows(), av.cols());
    for (Index r = 0; r < av.rows(); ++r) {
      const double n = out(r, 0);
      g.row(r) = n > 0.0 ? (av.row(r) * (self.grad(r, 0) / n)).eval()
                         : Eigen::RowVectorXd::Zero(av.cols()).eval();
    }
    parent(self, 0).accumulate(g);
  });
}

Var row_normalize(const Var& a) {
  Eigen::VectorXd norms = a.value().rowwise().norm();
  require((norms.array() > 0.0).all(), "row_normalize on a zero row");
  Matrix out = a.value().array().colwise() / norms.array();
  return make_result(out, {a}, [out, norms](Node& self) {
    // d(x/|x|) = (g - y <g, y>) / |x|
    Eigen::VectorXd dots = self.grad.cwiseProduct(out).rowwise().sum();
    Matrix g = self.grad - (out.array().colwise() * dots.array()).matrix();
    g = g.array().colwise() / norms.array();
    parent(self, 0).accumulate(g);
  });
}

Var softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return make_result(out, {a}, [out](Node& self) {
    Eigen::VectorXd dots = self.grad.cwiseProduct(out).rowwise().sum();
    Matrix g = out.cwiseProduct((self.grad.array().colwise() - dots.array()).matrix());
    parent(self, 0).accumulate(g);
  });
}

Var log_softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    const double lse = m + std::log((out.row(r).array() - m).exp().sum());
    out.row(r).array() -= lse;
  }
  return make_result(out, {a}, [out](Node& self) {
    Matrix probs = out.array().exp().matrix();
    Eigen::VectorXd sums = self.grad.rowwise().sum();
    Matrix g = self.grad - (probs.array().colwise() * sums.array()).matrix();
    parent(self, 0).accumulate(g);
  });
}

// ---------------------------------------------------------------- shape

Var slice_cols(const Var& a, Index begin, Index count) {
  require(begin >= 0 && count >= 0 && begin + count <= a.cols(), "slice_cols out of range");
  Matrix out = a.value().middleCols(begin, count);
  return make_result(std::move(out), {a}, [begin, count](Node& self) {
    const Matrix& av = parent(self, 0).value;
    Matrix g = Matrix::Zero(av.rows(), av.cols());
    g.middleCols(begin, count) = self.grad;
    parent(self, 0).accumulate(g);
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols of nothing");
  Index cols = 0;
  for (const auto& p : parts) {
    require(p.rows() == parts[0].rows(), "concat_cols row mismatch");
    cols += p.cols();
  }
  Matrix out(parts[0].rows(), cols);
  std::vector<Index> offsets;
  Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return make_result(std::move(out), parents, [offsets](Node& self) {
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      if (!wants(self, i)) continue;
      const Index width = parent(self, i).value.cols();
      parent(self, i).accumulate_expr(self.grad.middleCols(offsets[i], width));
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows of nothing");
  Index rows = 0;
  for (const auto& p : parts) {
    require(p.cols() == parts[0].cols(), "concat_rows column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, parts[0].cols());
  std::vector<Index> offsets;
  Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return make_result(std::move(out), parents, [offsets](Node& self) {
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      if (!wants(self, i)) continue;
      const Index height = parent(self, i).value.rows();
      parent(self, i).accumulate_expr(self.grad.middleRows(offsets[i], height));
    }
  });
}

Var gather_rows(const Var& a, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < a.rows(), "gather_rows index out of range");
    out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  return make_result(std::move(out), {a}, [idx](Node& self) {
    const Matrix& av = parent(self, 0).value;
    Matrix g = Matrix::Zero(av.rows(), av.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Index>(i));
    parent(self, 0).accumulate(g);
  });
}

Var embedding_bag_sum(const Var& table, const std::vector<std::vector<int>>& bags) {
  Matrix out = Matrix::Zero(static_cast<Index>(bags.size()), table.cols());
  for (std::size_t r = 0; r < bags.size(); ++r) {
    for (int id : bags[r]) {
      require(id >= 0 && id < table.rows(), "embedding index out of range");
      out.row(static_cast<Index>(r)) += table.value().row(id);
    }
  }
  return make_result(std::move(out), {table}, [bags](Node& self) {
    Node& t = parent(self, 0);
    if (t.grad.size() == 0) t.grad = Matrix::Zero(t.value.rows(), t.value.cols());
    for (std::size_t r = 0; r < bags.size(); ++r) {
      for (int id : bags[r]) t.grad.row(id) += self.grad.row(static_cast<Index>(r));
    }
  });
}

Var segment_mean(const Var& a, std::span<const Segment> segments) {
  Matrix out(static_cast<Index>(segments.size()), a.cols());
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& seg = segments[s];
    require(seg.length > 0 && seg.begin >= 0 && seg.begin + seg.length <= a.rows(),
            "segment_mean bad segment");
    out.row(static_cast<Index>(s)) =
        a.value().middleRows(seg.begin, seg.length).colwise().sum() / static_cast<double>(seg.length);
  }
  std::vector<Segment> segs(segments.begin(), segments.end());
  return make_result(std::move(out), {a}, [segs](Node& self) {
    const Matrix& av = parent(self, 0).value;
    Matrix g = Matrix::Zero(av.rows(), av.cols());
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const auto& seg = segs[s];
      g.middleRows(seg.begin, seg.length).rowwise() +=
          self.grad.row(static_cast<Index>(s)) / static_cast<double>(seg.length);
    }
    parent(self, 0).accumulate(g);
  });
}

// ---------------------------------------------------------------- network

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Index n = x.rows();
  const Index d = x.cols();
  require(gamma.rows() == 1 && gamma.cols() == d && beta.rows() == 1 && beta.cols() == d,
          "layer_norm affine shape mismatch");
  Matrix xhat(n, d);
  Eigen::VectorXd inv_std(n);
  for (Index r = 0; r < n; ++r) {
    const double mu = x.value().row(r).mean();
    const double var = (x.value().row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.value().row(r).array() - mu) * inv_std(r);
  }
  Matrix out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return make_result(std::move(out), {x, gamma, beta}, [xhat, inv_std](Node& self) {
    const Matrix& gv = parent(self, 1).value;
    if (wants(self, 0)) {
      Matrix dxhat = self.grad.array().rowwise() * gv.row(0).array();
      const double dd = static_cast<double>(dxhat.cols());
      Matrix g(dxhat.rows(), dxhat.cols());
      for (Index r = 0; r < dxhat.rows(); ++r) {
        const double m1 = dxhat.row(r).sum() / dd;
        const double m2 = dxhat.row(r).dot(xhat.row(r)) / dd;
        g.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r);
      }
      parent(self, 0).accumulate(g);
    }
    if (wants(self, 1)) parent(self, 1).accumulate_expr(self.grad.cwiseProduct(xhat).colwise().sum());
    if (wants(self, 2)) parent(self, 2).accumulate_expr(self.grad.colwise().sum());
  });
}

Var dropout(const Var& x, double p, bool training, std::mt19937_64& rng) {
  if (!training || p <= 0.0) return x;
  require(p < 1.0, "dropout probability must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  Matrix mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? s : 0.0;
  Matrix out = x.value().cwiseProduct(mask);
  return make_result(std::move(out), {x}, [mask](Node& self) {
    parent(self, 0).accumulate_expr(self.grad.cwiseProduct(mask));
  });
}

Var segmented_attention(const Var& q, const Var& k, const Var& v, int heads,
                        std::span<const AttentionSegment> segments, bool causal) {
  const Index width = q.cols();
  require(heads > 0 && width % heads == 0, "attention width not divisible by heads");
  require(k.cols() == width && v.cols() == width && k.rows() == v.rows(),
          "attention q/k/v shape mismatch");
  const Index dh = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix out = Matrix::Zero(q.rows(), width);
  // Attention probabilities per (segment, head), kept for the backward pass.
  auto probs = std::make_shared<std::vector<Matrix>>();
  probs->reserve(segments.size() * static_cast<std::size_t>(heads));
  for (const auto& seg : segments) {
    require(seg.q_begin >= 0 && seg.q_begin + seg.q_length <= q.rows() && seg.k_begin >= 0 &&
                seg.k_begin + seg.k_length <= k.rows() && seg.k_length > 0,
            "attention segment out of range");
    require(!causal || seg.q_length == seg.k_length, "causal attention needs square segments");
    for (int h = 0; h < heads; ++h) {
      const Index c0 = h * dh;
      Matrix scores = q.value().block(seg.q_begin, c0, seg.q_length, dh) *
                      k.value().block(seg.k_begin, c0, seg.k_length, dh).transpose();
      scores *= inv_sqrt;
      for (Index i = 0; i < seg.q_length; ++i) {
        const Index allowed = causal ? i + 1 : seg.k_length;
        const double m = scores.row(i).head(allowed).maxCoeff();
        double total = 0.0;
        for (Index j = 0; j < seg.k_length; ++j) {
          const double e = j < allowed ? std::exp(scores(i, j) - m) : 0.0;
          scores(i, j) = e;
          total += e;
        }
        scores.row(i) /= total;
      }
      out.block(seg.q_begin, c0, seg.q_length, dh) =
          scores * v.value().block(seg.k_begin, c0, seg.k_length, dh);
      probs->push_back(std::move(scores));
    }
  }

  std::vector<AttentionSegment> segs(segments.begin(), segments.end());
  return make_result(std::move(out), {q, k, v}, [segs, probs, heads, dh, inv_sqrt](Node& self) {
    const Matrix& qv = parent(self, 0).value;
    const Matrix& kv = parent(self, 1).value;
    const Matrix& vv = parent(self, 2).value;
    Matrix dq = Matrix::Zero(qv.rows(), qv.cols());
    Matrix dk = Matrix::Zero(kv.rows(), kv.cols());
    Matrix dv = Matrix::Zero(vv.rows(), vv.cols());
    std::size_t at = 0;
    for (const auto& seg : segs) {
      for (int h = 0; h < heads; ++h) {
        const Matrix& p = (*probs)[at++];
        const Index c0 = h * dh;
        auto d_out = self.grad.block(seg.q_begin, c0, seg.q_length, dh);
        auto v_blk = vv.block(seg.k_begin, c0, seg.k_length, dh);
        dv.block(seg.k_begin, c0, seg.k_length, dh).noalias() += p.transpose() * d_out;
        Matrix dp = d_out * v_blk.transpose();
        Eigen::VectorXd dots = dp.cwiseProduct(p).rowwise().sum();
        Matrix ds = p.cwiseProduct((dp.array().colwise() - dots.array()).matrix()) * inv_sqrt;
        dq.block(seg.q_begin, c0, seg.q_length, dh).noalias() +=
            ds * kv.block(seg.k_begin, c0, seg.k_length, dh);
        dk.block(seg.k_begin, c0, seg.k_length, dh).noalias() +=
            ds.transpose() * qv.block(seg.q_begin, c0, seg.q_length, dh);
      }
    }
    if (wants(self, 0)) parent(self, 0).accumulate(dq);
    if (wants(self, 1)) parent(self, 1).accumulate(dk);
    if (wants(self, 2)) parent(self, 2).accumulate(dv);
  });
}

// ---------------------------------------------------------------- losses

Var mse(const Var& a, const Var& b) {
  require_same_shape(a, b, "mse");
  require(a.value().size() > 0, "mse of empty arrays");
  Matrix diff = a.value() - b.value();
  const double n = static_cast<double>(diff.size());
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return make_result(std::move(out), {a, b}, [diff, n](Node& self) {
    const double s = 2.0 * self.grad(0, 0) / n;
    if (wants(self, 0)) parent(self, 0).accumulate_expr(diff * s);
    if (wants(self, 1)) parent(self, 1).accumulate_expr(diff * -s);
  });
}

Var bce_with_logits(const Var& logits, const Matrix& targets) {
  require(logits.rows() == targets.rows() && logits.cols() == targets.cols(),
          "bce target shape mismatch");
  const auto& z = logits.value().array();
  const auto& y = targets.array();
  // max(z, 0) - z*y + log(1 + exp(-|z|))
  const double n = static_cast<double>(targets.size());
  Matrix out(1, 1);
  out(0, 0) = (z.max(0.0) - z * y + (1.0 + (-z.abs()).exp()).log()).sum() / n;
  return make_result(std::move(out), {logits}, [targets, n](Node& self) {
    const Matrix& zv = parent(self, 0).value;
    Matrix probs = (1.0 / (1.0 + (-zv.array()).exp())).matrix();
    parent(self, 0).accumulate_expr((probs - targets) * (self.grad(0, 0) / n));
  });
}

}  // namespace necho::ag
