#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Every value is a 2-D matrix; scalars are 1x1.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

namespace necho::ag {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix& g);
  template <class Expr>
  void accumulate_expr(const Expr& g) {
    if (grad.size() == 0) {
      grad.resize(g.rows(), g.cols());
      grad.noalias() = g;
    } else {
      grad.noalias() += g;
    }
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  double item() const;
  void zero_grad() { node_->grad.resize(0, 0); }

  // Fresh leaf sharing no history with this one.
  Var detach() const { return Var(node_->value, false); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  friend Var make_result(Matrix value, std::vector<Var> parents,
                         std::function<void(Node&)> backward_fn);
  std::shared_ptr<Node> node_;
};

// Records an op result. The backward function receives the result node whose
// `grad` is populated and must accumulate into `parents[i]` when they
// require grad.
Var make_result(Matrix value, std::vector<Var> parents,
                std::function<void(Node&)> backward_fn);

Var constant(Matrix value);
Var scalar(double v);

// Runs reverse accumulation from a 1x1 loss.
void backward(const Var& loss);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// -- elementwise and linear algebra
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var scale_by(const Var& a, const Var& s);  // s is 1x1
Var mul_col(const Var& a, const Var& c);   // c is rows x 1, broadcast over columns
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var linear(const Var& x, const Var& weight, const Var& bias);  // x W + b
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var clamp_max(const Var& a, double hi);

// -- reductions
Var sum(const Var& a);
Var mean(const Var& a);
Var diag(const Var& a);  // square -> n x 1
Var row_l2_norm(const Var& a);
Var row_normalize(const Var& a);
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);

// -- shape
Var slice_cols(const Var& a, Index begin, Index count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var gather_rows(const Var& a, std::span<const Index> rows);

// Row r of the result is the sum of table rows listed in bags[r].
Var embedding_bag_sum(const Var& table, const std::vector<std::vector<int>>& bags);

struct Segment {
  Index begin = 0;
  Index length = 0;
};
Var segment_mean(const Var& a, std::span<const Segment> segments);

// -- network primitives
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var dropout(const Var& x, double p, bool training, std::mt19937_64& rng);

// Multi-head scaled dot-product attention restricted to segments. Query rows
// of segment s attend only to key rows of the same segment; with `causal`,
// query i attends to keys 0..i of its segment (segments then need equal
// query and key lengths). Inputs are already projected: [rows x hidden].
struct AttentionSegment {
  Index q_begin = 0;
  Index q_length = 0;
  Index k_begin = 0;
  Index k_length = 0;
};
Var segmented_attention(const Var& q, const Var& k, const Var& v, int heads,
                        std::span<const AttentionSegment> segments, bool causal);

// -- losses
Var mse(const Var& a, const Var& b);
Var bce_with_logits(const Var& logits, const Matrix& targets);

}  // namespace necho::ag
