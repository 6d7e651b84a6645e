#include "pseudopilot/param_store.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "pseudopilot/errors.hpp"

namespace pseudopilot {

double lr_schedule(const OptimConfig& cfg, double progress) {
  if (progress < 0.0 || progress > 1.0)
    throw ConfigError("lr_schedule: progress must lie in [0,1]");
  return cfg.base_lr / std::pow(1.0 + cfg.decay_rate * progress, cfg.decay_power);
}

void ParamStore::add(const std::string& name, Tensor value) {
  if (has(name)) throw ConfigError("ParamStore: duplicate parameter '" + name + "'");
  momentum_[name] = Tensor::zeros(value.rows(), value.cols());
  params_[name] = std::move(value);
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamStore::momentum(const std::string& name) {
  auto it = momentum_.find(name);
  if (it == momentum_.end()) throw ConfigError("ParamStore: unknown buffer '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::momentum(const std::string& name) const {
  auto it = momentum_.find(name);
  if (it == momentum_.end()) throw ConfigError("ParamStore: unknown buffer '" + name + "'");
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

void ParamStore::zero_momentum() {
  for (auto& [name, buf] : momentum_) buf = Tensor::zeros(buf.rows(), buf.cols());
}

void sgd_step(ParamStore& params, const GradMap& grads, const OptimConfig& cfg,
              double progress) {
  // Validate the whole step before mutating anything.
  for (const auto& [name, g] : grads) {
    if (!g.all_finite())
      throw NumericError("sgd_step: non-finite gradient for '" + name + "', step rejected");
    if (!g.same_shape(params.at(name)))
      throw NumericError("sgd_step: gradient shape mismatch for '" + name + "'");
  }
  const double lr = lr_schedule(cfg, progress);
  for (const auto& [name, g] : grads) {
    Tensor& w = params.at(name);
    Tensor& v = params.momentum(name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      v.values()[i] = cfg.momentum * v.values()[i] + g.values()[i] +
                      cfg.weight_decay * w.values()[i];
      w.values()[i] -= lr * v.values()[i];
    }
  }
}

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_f64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw ParseError("checkpoint: truncated u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw ParseError("checkpoint: truncated f64");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

void write_record(std::ostream& os, const std::string& name, const Tensor& t) {
  write_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(os, static_cast<std::uint32_t>(t.rows()));
  write_u32(os, static_cast<std::uint32_t>(t.cols()));
  for (double v : t.values()) write_f64(os, v);
}

std::pair<std::string, Tensor> read_record(std::istream& is) {
  const std::uint32_t len = read_u32(is);
  std::string name(len, '\0');
  if (!is.read(name.data(), len)) throw ParseError("checkpoint: truncated record name");
  const std::uint32_t rows = read_u32(is);
  const std::uint32_t cols = read_u32(is);
  Tensor t(rows, cols);
  for (auto& v : t.values()) v = read_f64(is);
  return {std::move(name), std::move(t)};
}

}  // namespace

void save_checkpoint(const ParamStore& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("checkpoint: cannot open '" + path + "' for writing");
  os.write(kCheckpointMagic, static_cast<std::streamsize>(std::strlen(kCheckpointMagic)));
  os.put('\n');
  const auto names = params.names();
  write_u32(os, static_cast<std::uint32_t>(names.size()));
  for (const auto& name : names) write_record(os, name, params.at(name));
  for (const auto& name : names) write_record(os, name, params.momentum(name));
  if (!os) throw ParseError("checkpoint: write to '" + path + "' failed");
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("checkpoint: cannot open '" + path + "'");
  const std::size_t magic_len = std::strlen(kCheckpointMagic);
  std::string magic(magic_len, '\0');
  if (!is.read(magic.data(), static_cast<std::streamsize>(magic_len)) ||
      magic != kCheckpointMagic || is.get() != '\n')
    throw ParseError("checkpoint: bad magic header in '" + path + "'");
  const std::uint32_t count = read_u32(is);
  ParamStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, value] = read_record(is);
    store.add(name, std::move(value));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, value] = read_record(is);
    if (!store.has(name)) throw ParseError("checkpoint: buffer for unknown parameter '" + name + "'");
    if (!value.same_shape(store.at(name)))
      throw ParseError("checkpoint: buffer shape mismatch for '" + name + "'");
    store.momentum(name) = std::move(value);
  }
  return store;
}

}  // namespace pseudopilot
