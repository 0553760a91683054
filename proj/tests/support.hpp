#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "necho/autograd.hpp"
#include "necho/distillation.hpp"
#include "necho/ehr_data.hpp"
#include "necho/model.hpp"

namespace necho::test {

inline ag::Matrix random_matrix(ag::Index rows, ag::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  ag::Matrix m(rows, cols);
  for (ag::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

using ScalarFn = std::function<ag::Var(const std::vector<ag::Var>&)>;

// Largest relative error between the reverse-mode gradient and central
// differences over `probes` random coordinates of every input.
inline double gradient_error(const ScalarFn& f, const std::vector<ag::Matrix>& inputs, std::mt19937_64& rng,
                             int probes = 20, double h = 1e-5) {
  std::vector<ag::Var> leaves;
  for (const auto& m : inputs) leaves.emplace_back(m, true);
  ag::backward(f(leaves));

  auto eval = [&](std::size_t which, ag::Index idx, double delta) {
    std::vector<ag::Var> vs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      ag::Matrix m = inputs[i];
      if (i == which) m.data()[idx] += delta;
      vs.emplace_back(std::move(m), false);
    }
    ag::NoGradGuard guard;
    return f(vs).item();
  };

  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::uniform_int_distribution<ag::Index> pick(0, inputs[i].size() - 1);
    for (int p = 0; p < probes; ++p) {
      const ag::Index idx = pick(rng);
      const double numeric = (eval(i, idx, h) - eval(i, idx, -h)) / (2.0 * h);
      const double analytic = leaves[i].grad().size() == 0 ? 0.0 : leaves[i].grad().data()[idx];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-5});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

// A small cohort and network for fast tests.
inline DatasetConfig tiny_data_config(int patients = 40, std::uint64_t seed = 42) {
  DatasetConfig c;
  c.typing_count = 3;
  c.category_count = 8;
  c.unique_count = 24;
  c.demographic_cardinalities = {2, 3};
  c.note_vocab_size = 40;
  c.max_note_length = 8;
  c.max_visits = 5;
  c.patient_count = patients;
  c.seed = seed;
  return c;
}

inline ModelConfig tiny_model_config(const DatasetConfig& data, FusionVariant fusion, std::uint64_t init_seed = 1) {
  ModelConfig m = ModelConfig::for_dataset(data, fusion);
  m.hidden_dim = 16;
  m.heads = 2;
  m.layers = 1;
  m.ffn_dim = 32;
  m.note_dim = 8;
  m.note_layers = 1;
  m.note_heads = 2;
  m.note_ffn_dim = 16;
  m.init_seed = init_seed;
  return m;
}

// Bundle fields in a fixed order: the nine per-visit arrays, then the four logit arrays.
inline constexpr int kBundleFields = 13;

inline RepresentationBundle bundle_from(const std::vector<ag::Var>& f, std::vector<bool> mask = {}) {
  RepresentationBundle b;
  b.r_demo = f[0];
  b.r_note = f[1];
  b.r_code = f[2];
  b.c_dn = f[3];
  b.c_cn = f[4];
  b.s_dn = f[5];
  b.s_cn = f[6];
  b.s_c = f[7];
  b.fusion = f[8];
  b.y_hat = f[9];
  b.o_hat_demo = f[10];
  b.o_hat_note = f[11];
  b.o_hat_code = f[12];
  b.valid_visit_mask = mask.empty() ? std::vector<bool>(static_cast<std::size_t>(f[0].rows()), true) : mask;
  return b;
}

struct BundleShape {
  ag::Index rows = 6;
  ag::Index patients = 2;
  ag::Index hidden = 8;
  ag::Index categories = 5;
  ag::Index typings = 3;
};

inline std::vector<ag::Matrix> random_fields(const BundleShape& s, std::mt19937_64& rng) {
  std::vector<ag::Matrix> out;
  for (int i = 0; i < 9; ++i) out.push_back(random_matrix(s.rows, s.hidden, rng));
  out.push_back(random_matrix(s.patients, s.categories, rng));
  for (int i = 0; i < 3; ++i) out.push_back(random_matrix(s.patients, s.typings, rng));
  return out;
}

inline RepresentationBundle constant_bundle(const std::vector<ag::Matrix>& fields, std::vector<bool> mask = {}) {
  std::vector<ag::Var> vars;
  for (const auto& m : fields) vars.push_back(ag::constant(m));
  return bundle_from(vars, std::move(mask));
}

}  // namespace necho::test
