#include "necho/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

#include "necho/json_io.hpp"

namespace necho {

using json = nlohmann::json;

namespace {

constexpr const char* kMagic = "NECHO-CHECKPOINT 1";

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint " + path + ": truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const NechoModel& model, const json& metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  const auto& params = model.parameters().all();
  json header{{"model", model.config()},
              {"frozen", model.frozen()},
              {"digest", model.parameters().digest()},
              {"arrays", params.size()},
              {"metadata", metadata.is_null() ? json::object() : metadata}};
  out << kMagic << '\n' << header.dump() << '\n';
  for (const auto& p : params) {
    write_pod(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_pod(out, static_cast<std::int64_t>(p.var.rows()));
    write_pod(out, static_cast<std::int64_t>(p.var.cols()));
    out.write(reinterpret_cast<const char*>(p.var.value().data()),
              static_cast<std::streamsize>(p.var.value().size() * static_cast<ag::Index>(sizeof(double))));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw std::runtime_error("checkpoint " + path + ": bad magic");
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint " + path + ": missing header");
  json header;
  try {
    header = json::parse(line);
  } catch (const std::exception& e) {
    throw std::runtime_error("checkpoint " + path + ": malformed header: " + e.what());
  }

  Checkpoint ck;
  ck.model = std::make_unique<NechoModel>(header.at("model").get<ModelConfig>());
  ck.metadata = header.value("metadata", json::object());
  auto& params = ck.model->parameters().all();
  if (header.at("arrays").get<std::size_t>() != params.size()) {
    throw std::runtime_error("checkpoint " + path + ": array count does not match the model");
  }
  for (auto& p : params) {
    const auto name_len = read_pod<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rows = read_pod<std::int64_t>(in, path);
    const auto cols = read_pod<std::int64_t>(in, path);
    if (!in || name != p.name || rows != p.var.rows() || cols != p.var.cols()) {
      throw std::runtime_error("checkpoint " + path + ": array " + name + " does not match parameter " + p.name);
    }
    auto& value = p.var.mutable_value();
    in.read(reinterpret_cast<char*>(value.data()), static_cast<std::streamsize>(rows * cols * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint " + path + ": truncated array " + name);
  }
  if (ck.model->parameters().digest() != header.at("digest").get<std::uint64_t>()) {
    throw std::runtime_error("checkpoint " + path + ": parameter digest mismatch");
  }
  ck.frozen = header.at("frozen").get<bool>();
  if (ck.frozen) ck.model->freeze();
  return ck;
}

}  // namespace necho
