#include "ignn/param_store.hpp"

#include <fstream>

#include "ignn/binio.hpp"

namespace ignn::num {

namespace {
constexpr char kMagic[8] = {'I', 'G', 'N', 'N', 'C', 'K', 'P', '1'};
}

Tensor& ParameterStore::add(const std::string& name, Tensor t) {
  if (params_.count(name))
    throw Error(Errc::invalid_argument, "parameter '" + name + "' already exists");
  if (!t.defined()) throw Error(Errc::invalid_argument, "parameter '" + name + "' is undefined");
  t.set_requires_grad(true);
  auto [it, ok] = params_.emplace(name, std::move(t));
  (void)ok;
  return it->second;
}

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw Error(Errc::invalid_argument, "unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParameterStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end())
    throw Error(Errc::invalid_argument, "unknown parameter '" + name + "'");
  return it->second;
}

int64_t ParameterStore::scalar_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

void ParameterStore::clear_grads() {
  for (auto& [name, t] : params_) t.clear_grad();
}

std::map<std::string, std::vector<double>> ParameterStore::snapshot_values() const {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [name, t] : params_)
    out.emplace(name, std::vector<double>(t.data().begin(), t.data().end()));
  return out;
}

void ParameterStore::restore_values(const std::map<std::string, std::vector<double>>& values) {
  if (values.size() != params_.size())
    throw Error(Errc::invalid_argument, "restore_values: parameter count mismatch");
  for (auto& [name, t] : params_) {
    auto it = values.find(name);
    if (it == values.end())
      throw Error(Errc::invalid_argument, "restore_values: missing parameter '" + name + "'");
    if (it->second.size() != static_cast<size_t>(t.numel()))
      throw Error(Errc::invalid_argument, "restore_values: size mismatch for '" + name + "'");
    std::copy(it->second.begin(), it->second.end(), t.mutable_data().begin());
  }
}

void save_checkpoint(const std::string& path, const ParameterStore& store, uint64_t config_hash) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::io, "cannot open '" + path + "' for writing");
  io::write_bytes(os, kMagic, 8);
  io::write_u64(os, config_hash);
  io::write_u32(os, static_cast<uint32_t>(store.count()));
  for (const auto& [name, t] : store.entries()) {
    io::write_str(os, name);
    io::write_u8(os, static_cast<uint8_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) io::write_u32(os, static_cast<uint32_t>(t.dim(i)));
    for (double v : t.data()) io::write_f64(os, v);
  }
  io::write_u32(os, static_cast<uint32_t>(store.extras.size()));
  for (const auto& [key, vals] : store.extras) {
    io::write_str(os, key);
    io::write_u32(os, static_cast<uint32_t>(vals.size()));
    for (double v : vals) io::write_f64(os, v);
  }
  io::write_u32(os, static_cast<uint32_t>(store.text_extras.size()));
  for (const auto& [key, text] : store.text_extras) {
    io::write_str(os, key);
    io::write_u32(os, static_cast<uint32_t>(text.size()));
    io::write_bytes(os, text.data(), text.size());
  }
  os.flush();
  if (!os) throw Error(Errc::io, "write failed for '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::io, "cannot open checkpoint '" + path + "'");
  char magic[8];
  io::read_bytes(is, magic, 8, "checkpoint magic");
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw Error(Errc::data, "'" + path + "' is not a checkpoint file");
  LoadedCheckpoint ck;
  ck.config_hash = io::read_u64(is, "config hash");
  const uint32_t num_params = io::read_u32(is, "parameter count");
  for (uint32_t i = 0; i < num_params; ++i) {
    const std::string name = io::read_str(is, "parameter name");
    const uint8_t ndim = io::read_u8(is, "parameter rank");
    Shape shape(ndim);
    for (uint8_t d = 0; d < ndim; ++d)
      shape[d] = static_cast<int64_t>(io::read_u32(is, "parameter dim"));
    const int64_t count = shape_numel(shape);
    std::vector<double> data(static_cast<size_t>(count));
    for (auto& v : data) v = io::read_f64(is, "parameter values");
    ck.params.emplace(name, Tensor::from(std::move(shape), std::move(data)));
  }
  const uint32_t num_extras = io::read_u32(is, "extras count");
  for (uint32_t i = 0; i < num_extras; ++i) {
    const std::string key = io::read_str(is, "extras key");
    const uint32_t n = io::read_u32(is, "extras size");
    std::vector<double> vals(n);
    for (auto& v : vals) v = io::read_f64(is, "extras values");
    ck.extras.emplace(key, std::move(vals));
  }
  const uint32_t num_text = io::read_u32(is, "text extras count");
  for (uint32_t i = 0; i < num_text; ++i) {
    const std::string key = io::read_str(is, "text extras key");
    const uint32_t n = io::read_u32(is, "text extras size");
    std::string text(n, '\0');
    if (n) io::read_bytes(is, text.data(), n, "text extras value");
    ck.text_extras.emplace(key, std::move(text));
  }
  return ck;
}

void restore_from_checkpoint(ParameterStore& store, const LoadedCheckpoint& ck) {
  if (ck.params.size() != store.count())
    throw Error(Errc::mismatch, "checkpoint holds " + std::to_string(ck.params.size()) +
                                    " parameters, model expects " + std::to_string(store.count()));
  for (auto& [name, t] : store.entries()) {
    auto it = ck.params.find(name);
    if (it == ck.params.end())
      throw Error(Errc::mismatch, "checkpoint is missing parameter '" + name + "'");
    if (it->second.shape() != t.shape())
      throw Error(Errc::mismatch, "checkpoint shape mismatch for '" + name + "': " +
                                      shape_str(it->second.shape()) + " vs " +
                                      shape_str(t.shape()));
  }
  std::map<std::string, std::vector<double>> values;
  for (const auto& [name, t] : ck.params)
    values.emplace(name, std::vector<double>(t.data().begin(), t.data().end()));
  store.restore_values(values);
  store.extras = ck.extras;
  store.text_extras = ck.text_extras;
}

}  // namespace ignn::num
