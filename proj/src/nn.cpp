#include "necho/nn.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace necho::nn {

Var ParameterStore::add(const std::string& name, Matrix value, ParamGroup group) {
  if (find(name) != nullptr) throw std::logic_error("duplicate parameter name " + name);
  Var v(std::move(value), true);
  params_.push_back({name, v, group});
  return v;
}

Var ParameterStore::xavier(const std::string& name, ag::Index in, ag::Index out, ParamGroup group) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(in, out);
  for (ag::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng_);
  return add(name, std::move(m), group);
}

Var ParameterStore::normal(const std::string& name, ag::Index rows, ag::Index cols, double stddev,
                           ParamGroup group) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (ag::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng_);
  return add(name, std::move(m), group);
}

Var ParameterStore::constant(const std::string& name, ag::Index rows, ag::Index cols, double value,
                             ParamGroup group) {
  return add(name, Matrix::Constant(rows, cols, value), group);
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.var.value().size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

void ParameterStore::set_requires_grad(bool on) {
  for (auto& p : params_) p.var.node()->requires_grad = on;
}

std::vector<Matrix> ParameterStore::snapshot() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.var.value());
  return out;
}

void ParameterStore::restore(const std::vector<Matrix>& values) {
  if (values.size() != params_.size()) throw std::invalid_argument("restore: parameter count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto& dst = params_[i].var.mutable_value();
    if (dst.rows() != values[i].rows() || dst.cols() != values[i].cols()) {
      throw std::invalid_argument("restore: shape mismatch for " + params_[i].name);
    }
    dst = values[i];
  }
}

std::uint64_t ParameterStore::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : params_) {
    feed(p.name.data(), p.name.size());
    const std::int64_t shape[2] = {p.var.rows(), p.var.cols()};
    feed(shape, sizeof(shape));
    feed(p.var.value().data(), static_cast<std::size_t>(p.var.value().size()) * sizeof(double));
  }
  return h;
}

Linear::Linear(ParameterStore& store, const std::string& name, ag::Index in, ag::Index out, ParamGroup group)
    : weight_(store.xavier(name + ".weight", in, out, group)),
      bias_(store.constant(name + ".bias", 1, out, 0.0, group)) {}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, ag::Index dim, ParamGroup group)
    : gamma_(store.constant(name + ".gamma", 1, dim, 1.0, group)),
      beta_(store.constant(name + ".beta", 1, dim, 0.0, group)) {}

TransformerEncoder::TransformerEncoder(ParameterStore& store, const std::string& name,
                                       const TransformerOptions& options)
    : options_(options) {
  if (options.width % options.heads != 0) {
    throw std::invalid_argument("transformer width must be divisible by the head count");
  }
  const auto g = options.group;
  for (int l = 0; l < options.layers; ++l) {
    const std::string p = name + ".layer" + std::to_string(l);
    Layer layer;
    layer.norm_q = LayerNorm(store, p + ".norm_q", options.width, g);
    if (options.cross) layer.norm_kv = LayerNorm(store, p + ".norm_kv", options.width, g);
    layer.wq = Linear(store, p + ".wq", options.width, options.width, g);
    layer.wk = Linear(store, p + ".wk", options.width, options.width, g);
    layer.wv = Linear(store, p + ".wv", options.width, options.width, g);
    layer.wo = Linear(store, p + ".wo", options.width, options.width, g);
    layer.norm_ff = LayerNorm(store, p + ".norm_ff", options.width, g);
    layer.ff_in = Linear(store, p + ".ff_in", options.width, options.ffn_width, g);
    layer.ff_out = Linear(store, p + ".ff_out", options.ffn_width, options.width, g);
    layers_.push_back(std::move(layer));
  }
  final_norm_ = LayerNorm(store, name + ".final_norm", options.width, g);
}

Var TransformerEncoder::forward(const Var& target, const Var* source,
                                std::span<const ag::AttentionSegment> segments, bool causal,
                                const ForwardContext& ctx) const {
  if (options_.cross && source == nullptr) throw std::invalid_argument("cross transformer needs a source stream");
  if (source != nullptr && source->rows() != target.rows()) {
    throw std::invalid_argument("cross transformer: source and target visit counts differ");
  }
  if (ctx.training && ctx.rng == nullptr) throw std::invalid_argument("training forward needs an rng");
  std::mt19937_64 unused;
  std::mt19937_64& rng = ctx.rng != nullptr ? *ctx.rng : unused;

  Var x = target;
  for (const auto& layer : layers_) {
    Var q_in = layer.norm_q(x);
    Var kv_in = options_.cross ? layer.norm_kv(*source) : q_in;
    Var attended = ag::segmented_attention(layer.wq(q_in), layer.wk(kv_in), layer.wv(kv_in), options_.heads,
                                           segments, causal);
    x = ag::add(x, ag::dropout(layer.wo(attended), options_.dropout, ctx.training, rng));
    Var hidden = ag::relu(layer.ff_in(layer.norm_ff(x)));
    hidden = ag::dropout(hidden, options_.dropout, ctx.training, rng);
    x = ag::add(x, ag::dropout(layer.ff_out(hidden), options_.dropout, ctx.training, rng));
  }
  return final_norm_(x);
}

Matrix sinusoidal_positions(int positions, int width) {
  Matrix pe(positions, width);
  for (int pos = 0; pos < positions; ++pos) {
    for (int i = 0; i < width; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / width);
      pe(pos, i) = (i % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
    }
  }
  return pe;
}

}  // namespace necho::nn
