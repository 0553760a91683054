#pragma once

// Parameter registry and reusable layers built on the autograd core.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "necho/autograd.hpp"

namespace necho::nn {

using ag::Matrix;
using ag::Var;

// Optimizer learning-rate group.
enum class ParamGroup { kBase, kNoteEncoder };

struct Parameter {
  std::string name;
  Var var;
  ParamGroup group = ParamGroup::kBase;
};

class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed) : rng_(seed) {}

  // Xavier-uniform weight of shape [in x out].
  Var xavier(const std::string& name, ag::Index in, ag::Index out, ParamGroup group);
  Var normal(const std::string& name, ag::Index rows, ag::Index cols, double stddev, ParamGroup group);
  Var constant(const std::string& name, ag::Index rows, ag::Index cols, double value, ParamGroup group);

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  const Parameter* find(const std::string& name) const;
  std::size_t scalar_count() const;

  void zero_grad();
  void set_requires_grad(bool on);

  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);

  // FNV-1a over parameter names, shapes and raw value bytes.
  std::uint64_t digest() const;

 private:
  Var add(const std::string& name, Matrix value, ParamGroup group);

  std::mt19937_64 rng_;
  std::vector<Parameter> params_;
};

struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // required when training (dropout)
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, ag::Index in, ag::Index out,
         ParamGroup group = ParamGroup::kBase);
  Var operator()(const Var& x) const { return ag::linear(x, weight_, bias_); }
  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }

 private:
  Var weight_;
  Var bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, ag::Index dim,
            ParamGroup group = ParamGroup::kBase);
  Var operator()(const Var& x) const { return ag::layer_norm(x, gamma_, beta_); }

 private:
  Var gamma_;
  Var beta_;
};

struct TransformerOptions {
  int layers = 3;
  int heads = 4;
  int width = 128;
  int ffn_width = 256;
  double dropout = 0.1;
  bool cross = false;  // queries from the target stream, keys/values from the source
  ParamGroup group = ParamGroup::kBase;
};

// Pre-norm transformer encoder over segmented rows. In cross mode every
// layer attends from the evolving target stream into the fixed source stream.
class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(ParameterStore& store, const std::string& name, const TransformerOptions& options);

  Var forward(const Var& target, const Var* source, std::span<const ag::AttentionSegment> segments,
              bool causal, const ForwardContext& ctx) const;

  const TransformerOptions& options() const { return options_; }

 private:
  struct Layer {
    LayerNorm norm_q;
    LayerNorm norm_kv;
    Linear wq, wk, wv, wo;
    LayerNorm norm_ff;
    Linear ff_in, ff_out;
  };

  TransformerOptions options_;
  std::vector<Layer> layers_;
  LayerNorm final_norm_;
};

// Sinusoidal position table [positions x width].
Matrix sinusoidal_positions(int positions, int width);

}  // namespace necho::nn
