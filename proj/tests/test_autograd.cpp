#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

using namespace necho;
using necho::test::gradient_error;
using necho::test::random_matrix;

namespace {

constexpr double kTol = 1e-4;

// Contracts a matrix result with fixed random weights so every entry matters.
ag::Var contract(const ag::Var& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return ag::sum(ag::mul(y, ag::constant(random_matrix(y.rows(), y.cols(), rng))));
}

std::mt19937_64 rng_for(const char* name) {
  std::uint64_t h = 1469598103934665603ull;
  for (const char* c = name; *c; ++c) h = (h ^ static_cast<unsigned char>(*c)) * 1099511628211ull;
  return std::mt19937_64(h);
}

}  // namespace

TEST_CASE("elementwise ops have correct gradients") {
  auto rng = rng_for("elementwise");
  const auto a = random_matrix(3, 4, rng);
  ag::Matrix b = random_matrix(3, 4, rng);
  ag::Matrix pos = b.array().abs() + 0.5;

  CHECK(gradient_error([](auto& v) { return contract(ag::add(v[0], v[1])); }, {a, b}, rng) < kTol);
  CHECK(gradient_error([](auto& v) { return contract(ag::sub(v[0], v[1])); }, {a, b}, rng) < kTol);
  CHECK(gradient_error([](auto& v) { return contract(ag::mul(v[0], v[1])); }, {a, b}, rng) < kTol);
  CHECK(gradient_error([](auto& v) { return contract(ag::div(v[0], v[1])); }, {a, pos}, rng) < kTol);
  CHECK(gradient_error([](auto& v) { return contract(ag::scale(v[0], -2.5)); }, {a}, rng) < kTol);
  CHECK(gradient_error([](auto& v) { return contract(ag::add_scalar(v[0], 3.0)); }, {a}, rng) < kTol);
  CHECK(gradient_error([](auto& v) { return contract(ag::sigmoid(v[0])); }, {a}, rng) < kTol);
  CHECK(gradient_error([](auto& v) { return contract(ag::scale_by(v[0], v[1])); },
                       {a, random_matrix(1, 1, rng)}, rng) < kTol);
  CHECK(gradient_error([](auto& v) { return contract(ag::mul_col(v[0], v[1])); },
                       {a, random_matrix(3, 1, rng)}, rng) < kTol);
}

TEST_CASE("piecewise ops away from their kinks") {
  auto rng = rng_for("piecewise");
  ag::Matrix a = random_matrix(4, 5, rng);
  for (ag::Index i = 0; i < a.size(); ++i) {
    double& x = a.data()[i];
    if (std::abs(x) < 0.05) x += 0.2;
  }
  CHECK(gradient_error([](auto& v) { return contract(ag::relu(v[0])); }, {a}, rng) < kTol);
  ag::Matrix c = a;
  for (ag::Index i = 0; i < c.size(); ++i) {
    double& x = c.data()[i];
    if (std::abs(x - 0.3) < 0.05) x += 0.2;
  }
  CHECK(gradient_error([](auto& v) { return contract(ag::clamp_max(v[0], 0.3)); }, {c}, rng) < kTol);
}

TEST_CASE("products and affine maps") {
  auto rng = rng_for("products");
  const auto a = random_matrix(3, 4, rng);
  const auto b = random_matrix(4, 2, rng);
  const auto c = random_matrix(5, 4, rng);
  CHECK(gradient_error([](auto& v) { return contract(ag::matmul(v[0], v[1])); }, {a, b}, rng) < kTol);
  CHECK(gradient_error([](auto& v) { return contract(ag::matmul_nt(v[0], v[1])); }, {a, c}, rng) < kTol);
  CHECK(gradient_error([](auto& v) { return contract(ag::linear(v[0], v[1], v[2])); },
                       {a, b, random_matrix(1, 2, rng)}, rng) < kTol);
}

TEST_CASE("reductions") {
  auto rng = rng_for("reductions");
  const auto a = random_matrix(4, 6, rng);
  const auto sq = random_matrix(5, 5, rng);
  CHECK(gradient_error([](auto& v) { return ag::sum(v[0]); }, {a}, rng) < kTol);
  CHECK(gradient_error([](auto& v) { return ag::mean(v[0]); }, {a}, rng) < kTol);
  CHECK(gradient_error([](auto& v) { return contract(ag::diag(v[0])); }, {sq}, rng) < kTol);
  CHECK(gradient_error([](auto& v) { return contract(ag::row_l2_norm(v[0])); }, {a}, rng) < kTol);
  CHECK(gradient_error([](auto& v) { return contract(ag::row_normalize(v[0])); }, {a}, rng) < kTol);
  CHECK(gradient_error([](auto& v) { return contract(ag::softmax_rows(v[0])); }, {a}, rng) < kTol);
  CHECK(gradient_error([](auto& v) { return contract(ag::log_softmax_rows(v[0])); }, {a}, rng) < kTol);
}

TEST_CASE("shape ops route gradients to the right entries") {
  auto rng = rng_for("shape");
  const auto a = random_matrix(4, 6, rng);
  const auto b = random_matrix(4, 2, rng);
  const auto c = random_matrix(3, 6, rng);
  CHECK(gradient_error([](auto& v) { return contract(ag::slice_cols(v[0], 1, 3)); }, {a}, rng) < kTol);
  CHECK(gradient_error(
            [](auto& v) {
              std::vector<ag::Var> parts{v[0], v[1]};
              return contract(ag::concat_cols(parts));
            },
            {a, b}, rng) < kTol);
  CHECK(gradient_error(
            [](auto& v) {
              std::vector<ag::Var> parts{v[0], v[1]};
              return contract(ag::concat_rows(parts));
            },
            {a, c}, rng) < kTol);
  CHECK(gradient_error(
            [](auto& v) {
              const std::vector<ag::Index> rows{3, 0, 3, 1};
              return contract(ag::gather_rows(v[0], rows));
            },
            {a}, rng) < kTol);
  CHECK(gradient_error(
            [](auto& v) { return contract(ag::embedding_bag_sum(v[0], {{0, 2}, {}, {1, 1, 3}})); }, {a},
            rng) < kTol);
  CHECK(gradient_error(
            [](auto& v) {
              const std::vector<ag::Segment> segs{{0, 1}, {1, 3}};
              return contract(ag::segment_mean(v[0], segs));
            },
            {a}, rng) < kTol);
}

TEST_CASE("layer norm and losses") {
  auto rng = rng_for("layernorm");
  const auto x = random_matrix(3, 8, rng);
  CHECK(gradient_error([](auto& v) { return contract(ag::layer_norm(v[0], v[1], v[2])); },
                       {x, random_matrix(1, 8, rng), random_matrix(1, 8, rng)}, rng) < kTol);
  CHECK(gradient_error([](auto& v) { return ag::mse(v[0], v[1]); }, {x, random_matrix(3, 8, rng)}, rng) <
        kTol);
  ag::Matrix targets = (random_matrix(3, 8, rng).array() > 0.0).cast<double>();
  CHECK(gradient_error([&](auto& v) { return ag::bce_with_logits(v[0], targets); }, {x}, rng) < kTol);
}

TEST_CASE("segmented attention gradients, causal and cross") {
  auto rng = rng_for("attention");
  const int heads = 2;
  const auto q = random_matrix(6, 4, rng);
  const auto k = random_matrix(6, 4, rng);
  const auto v = random_matrix(6, 4, rng);
  const std::vector<ag::AttentionSegment> segs{{0, 2, 0, 2}, {2, 4, 2, 4}};
  for (bool causal : {true, false}) {
    CHECK(gradient_error(
              [&](auto& in) { return contract(ag::segmented_attention(in[0], in[1], in[2], heads, segs, causal)); },
              {q, k, v}, rng) < kTol);
  }
  const std::vector<ag::AttentionSegment> uneven{{0, 2, 0, 3}, {2, 4, 3, 3}};
  CHECK(gradient_error(
            [&](auto& in) { return contract(ag::segmented_attention(in[0], in[1], in[2], heads, uneven, false)); },
            {q, k, v}, rng) < kTol);
}

TEST_CASE("causal attention ignores later rows of the segment and other segments") {
  std::mt19937_64 rng(5);
  const auto q = random_matrix(5, 4, rng);
  auto k = random_matrix(5, 4, rng);
  auto v = random_matrix(5, 4, rng);
  const std::vector<ag::AttentionSegment> segs{{0, 3, 0, 3}, {3, 2, 3, 2}};
  const ag::Matrix base =
      ag::segmented_attention(ag::constant(q), ag::constant(k), ag::constant(v), 2, segs, true).value();
  k.row(2).setRandom();
  v.row(2).setRandom();
  k.row(4).setRandom();
  const ag::Matrix moved =
      ag::segmented_attention(ag::constant(q), ag::constant(k), ag::constant(v), 2, segs, true).value();
  CHECK((base.topRows(2) - moved.topRows(2)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(base.row(3) == moved.row(3));
}

TEST_CASE("attention with identical keys averages values") {
  ag::Matrix q = ag::Matrix::Random(2, 2);
  ag::Matrix k = ag::Matrix::Ones(3, 2);
  ag::Matrix v(3, 2);
  v << 1, 2, 3, 4, 5, 6;
  const std::vector<ag::AttentionSegment> segs{{0, 2, 0, 3}};
  const auto out = ag::segmented_attention(ag::constant(q), ag::constant(k), ag::constant(v), 1, segs, false);
  CHECK(out.value()(0, 0) == doctest::Approx(3.0));
  CHECK(out.value()(1, 1) == doctest::Approx(4.0));
}

TEST_CASE("no-grad guard records nothing and restores") {
  ag::Var x(ag::Matrix::Ones(2, 2), true);
  {
    ag::NoGradGuard guard;
    CHECK_FALSE(ag::grad_enabled());
    CHECK_FALSE(ag::scale(x, 2.0).requires_grad());
  }
  CHECK(ag::grad_enabled());
  CHECK(ag::scale(x, 2.0).requires_grad());
}

TEST_CASE("gradients accumulate across shared uses") {
  ag::Var x(ag::Matrix::Constant(1, 1, 3.0), true);
  ag::backward(ag::sum(ag::mul(x, x)));
  CHECK(x.grad()(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("dropout is identity in eval and unbiased in training") {
  std::mt19937_64 rng(3);
  ag::Var x(ag::Matrix::Ones(200, 50), false);
  CHECK(ag::dropout(x, 0.1, false, rng).value() == x.value());
  const auto y = ag::dropout(x, 0.1, true, rng).value();
  CHECK(y.mean() == doctest::Approx(1.0).epsilon(0.02));
  CHECK(((y.array() == 0.0).cast<double>().mean()) == doctest::Approx(0.1).epsilon(0.1));
}

TEST_CASE("row_normalize rejects zero rows") {
  CHECK_THROWS_AS(ag::row_normalize(ag::constant(ag::Matrix::Zero(2, 3))), std::invalid_argument);
}

TEST_CASE("bce matches the direct formula") {
  ag::Matrix z(1, 3);
  z << -2.0, 0.5, 30.0;
  ag::Matrix y(1, 3);
  y << 0.0, 1.0, 1.0;
  double expected = 0.0;
  for (int j = 0; j < 3; ++j) {
    const double p = 1.0 / (1.0 + std::exp(-z(0, j)));
    expected -= y(0, j) * std::log(p) + (1.0 - y(0, j)) * std::log1p(-p);
  }
  CHECK(ag::bce_with_logits(ag::constant(z), y).item() == doctest::Approx(expected / 3.0).epsilon(1e-12));
}
