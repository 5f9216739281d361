#include "snn/network.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <map>

#include "snn/binio.hpp"

namespace snn {

namespace {

constexpr char kMagic[4] = {'S', 'N', 'N', 'C'};
constexpr uint32_t kVersion = 1;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string metadata_text(const ModelParams& p) {
  std::string meta;
  meta += "backbone=" + std::string(backbone_name(p.backbone)) + "\n";
  meta += "input_size=" + std::to_string(p.input_size) + "\n";
  meta += "channels=" + std::to_string(p.channels) + "\n";
  meta += "feature_dim=" + std::to_string(p.feature_dim) + "\n";
  meta += "normalize=" + std::string(p.normalize ? "1" : "0") + "\n";
  meta += "dropout=" + format_double(p.dropout) + "\n";
  return meta;
}

uint64_t parse_u64(const std::string& origin, const std::string& key,
                   const std::string& value) {
  uint64_t out = 0;
  if (value.empty()) throw std::runtime_error(origin + ": empty value for " + key);
  for (char c : value) {
    if (c < '0' || c > '9')
      throw std::runtime_error(origin + ": bad integer '" + value + "' for " + key);
    out = out * 10 + static_cast<uint64_t>(c - '0');
  }
  return out;
}

void apply_metadata(const std::string& origin, const std::string& meta, ModelParams& p) {
  std::map<std::string, std::string> kv;
  size_t pos = 0;
  while (pos < meta.size()) {
    size_t nl = meta.find('\n', pos);
    if (nl == std::string::npos)
      throw std::runtime_error(origin + ": metadata line without newline terminator");
    const std::string line = meta.substr(pos, nl - pos);
    pos = nl + 1;
    const size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw std::runtime_error(origin + ": malformed metadata line '" + line + "'");
    if (!kv.emplace(line.substr(0, eq), line.substr(eq + 1)).second)
      throw std::runtime_error(origin + ": duplicate metadata key '" + line.substr(0, eq) + "'");
  }
  static const char* required[] = {"backbone", "input_size", "channels",
                                   "feature_dim", "normalize", "dropout"};
  for (const char* key : required)
    if (!kv.count(key))
      throw std::runtime_error(origin + ": metadata missing key '" + std::string(key) + "'");
  for (const auto& [key, value] : kv) {
    if (key == std::string("backbone")) {
      if (value == "builtin") p.backbone = Backbone::kBuiltin;
      else if (value == "precomputed") p.backbone = Backbone::kPrecomputed;
      else throw std::runtime_error(origin + ": unknown backbone '" + value + "'");
    } else if (key == std::string("input_size")) {
      p.input_size = parse_u64(origin, key, value);
    } else if (key == std::string("channels")) {
      p.channels = parse_u64(origin, key, value);
    } else if (key == std::string("feature_dim")) {
      p.feature_dim = parse_u64(origin, key, value);
    } else if (key == std::string("normalize")) {
      if (value != "0" && value != "1")
        throw std::runtime_error(origin + ": normalize must be 0 or 1, got '" + value + "'");
      p.normalize = value == "1";
    } else if (key == std::string("dropout")) {
      char* end = nullptr;
      p.dropout = std::strtod(value.c_str(), &end);
      if (end == nullptr || *end != '\0')
        throw std::runtime_error(origin + ": bad dropout value '" + value + "'");
    } else {
      throw std::runtime_error(origin + ": unknown metadata key '" + key + "'");
    }
  }
}

}  // namespace

void save_checkpoint(const ModelParams& p, const std::string& path) {
  validate_model(p);
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<uint32_t>(p.tensors.size()));
  const std::string meta = metadata_text(p);
  w.u32(static_cast<uint32_t>(meta.size()));
  w.str(meta);
  for (const auto& t : p.tensors) {
    if (t.name.empty() || t.name.size() > 0xffff)
      throw std::runtime_error("checkpoint: bad tensor name '" + t.name + "'");
    w.u16(static_cast<uint16_t>(t.name.size()));
    w.str(t.name);
    w.u8(static_cast<uint8_t>(t.value->rank()));
    for (size_t d : t.value->shape()) w.u32(static_cast<uint32_t>(d));
    w.f32_array(t.value->data(), t.value->size());
  }
  w.save(path);
}

ModelParams load_checkpoint(const std::string& path) {
  ByteReader r = ByteReader::from_file(path);
  if (r.str(4) != std::string(kMagic, 4))
    throw std::runtime_error(path + ": not a checkpoint file (bad magic)");
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version " +
                             std::to_string(version));
  const uint32_t count = r.u32();
  const uint32_t meta_len = r.u32();
  ModelParams p;
  p.tensors.clear();
  apply_metadata(path, r.str(meta_len), p);
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = r.u16();
    if (name_len == 0)
      throw std::runtime_error(path + ": tensor record with empty name");
    const std::string name = r.str(name_len);
    const uint8_t rank = r.u8();
    if (rank == 0 || rank > 8)
      throw std::runtime_error(path + ": tensor '" + name + "' has invalid rank " +
                               std::to_string(rank));
    std::vector<size_t> shape(rank);
    size_t total = 1;
    for (uint8_t j = 0; j < rank; ++j) {
      const uint32_t d = r.u32();
      if (d == 0)
        throw std::runtime_error(path + ": tensor '" + name + "' has zero dimension");
      shape[j] = d;
      total *= d;
      if (total > (1ull << 31))
        throw std::runtime_error(path + ": tensor '" + name + "' is implausibly large");
    }
    Tensor t(shape);
    r.f32_array(t.data(), total);
    p.tensors.push_back({name, std::make_shared<Tensor>(std::move(t))});
  }
  r.expect_end();
  validate_model(p);
  return p;
}

ModelParams clone_model(const ModelParams& p) {
  ModelParams out = p;
  out.tensors.clear();
  for (const auto& t : p.tensors)
    out.tensors.push_back({t.name, std::make_shared<Tensor>(*t.value)});
  return out;
}

ModelParamsT<double> widen_model(const ModelParams& p) {
  ModelParamsT<double> out;
  out.backbone = p.backbone;
  out.input_size = p.input_size;
  out.channels = p.channels;
  out.feature_dim = p.feature_dim;
  out.normalize = p.normalize;
  out.dropout = p.dropout;
  for (const auto& t : p.tensors) {
    TensorT<double> wd(t.value->shape());
    for (size_t i = 0; i < wd.size(); ++i)
      wd[i] = static_cast<double>((*t.value)[i]);
    out.tensors.push_back({t.name, std::make_shared<TensorT<double>>(std::move(wd))});
  }
  return out;
}

}  // namespace snn
