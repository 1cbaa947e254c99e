#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fdlite/errors.hpp"
#include "fdlite/executor.hpp"

namespace fdlite::executor {

using netgraph::LayerGraph;
using netgraph::LayerKind;

namespace {

constexpr char kMagic[4] = {'F', 'D', 'W', '1'};

std::string shape_string(const std::vector<std::int64_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

void put_f32(std::string& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

float get_f32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

std::uint32_t crc_of(const char* data, std::size_t len) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(len)));
}

}  // namespace

void WeightStore::set(const std::string& name, std::vector<std::int64_t> shape,
                      std::vector<float> values) {
  if (element_count(shape) != static_cast<std::int64_t>(values.size())) {
    throw DataError("weight '" + name + "': " + std::to_string(values.size()) +
                    " values do not fill shape " + shape_string(shape));
  }
  auto [it, inserted] = entries_.insert_or_assign(name, WeightEntry{std::move(shape), std::move(values)});
  if (inserted) order_.push_back(name);
}

const WeightEntry* WeightStore::find(const std::string& name) const {
  auto it = entries_.find(name);
  return it == entries_.end() ? nullptr : &it->second;
}

const WeightEntry& WeightStore::at(const std::string& name) const {
  const auto* e = find(name);
  if (!e) throw ExecutionError("missing weight '" + name + "'");
  return *e;
}

std::vector<RequiredWeight> required_weights(const LayerGraph& graph) {
  std::vector<RequiredWeight> out;
  std::set<std::string> seen;
  for (const auto& n : graph.nodes()) {
    const auto& key = n.weight_key();
    if (n.kind == LayerKind::Conv && seen.insert(key).second) {
      out.push_back({key + ".weight",
                     {n.out_channels, n.kernel_h, n.kernel_w, n.in_channels / n.groups}});
      if (n.has_bias) out.push_back({key + ".bias", {n.out_channels}});
    } else if (n.kind == LayerKind::BatchNorm && seen.insert(key).second) {
      for (const char* part : {".scale", ".shift", ".mean", ".var"}) {
        out.push_back({key + part, {n.in_channels}});
      }
    }
  }
  return out;
}

WeightValidation validate_weights(const LayerGraph& graph, const WeightStore& store) {
  WeightValidation v;
  std::set<std::string> used;
  for (const auto& req : required_weights(graph)) {
    used.insert(req.name);
    const auto* e = store.find(req.name);
    if (!e) {
      v.missing.push_back(req.name);
    } else if (e->shape != req.shape) {
      v.mismatched.push_back(req.name + ": expected " + shape_string(req.shape) + " got " +
                             shape_string(e->shape));
    }
  }
  for (const auto& name : store.names()) {
    if (!used.count(name)) v.orphans.push_back(name);
  }
  return v;
}

WeightStore init_weights(const LayerGraph& graph, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  WeightStore store;
  for (const auto& n : graph.nodes()) {
    if (n.kind == LayerKind::Conv) {
      if (store.find(n.weight_key() + ".weight")) continue;
      const std::int64_t receptive = static_cast<std::int64_t>(n.kernel_h) * n.kernel_w;
      const double fan_in = static_cast<double>(receptive * (n.in_channels / n.groups));
      const double fan_out = static_cast<double>(receptive * (n.out_channels / n.groups));
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      std::vector<std::int64_t> shape{n.out_channels, n.kernel_h, n.kernel_w,
                                      n.in_channels / n.groups};
      std::vector<float> w(static_cast<std::size_t>(element_count(shape)));
      for (auto& x : w) {
        // 53 uniform bits from the engine; std:: distributions are not
        // reproducible across standard libraries.
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        float v = static_cast<float>((2.0 * u - 1.0) * bound);
        if (std::abs(static_cast<double>(v)) > bound) v = std::nextafter(v, 0.0f);
        x = v;
      }
      store.set(n.weight_key() + ".weight", std::move(shape), std::move(w));
      if (n.has_bias) {
        store.set(n.weight_key() + ".bias", {n.out_channels},
                  std::vector<float>(n.out_channels, 0.0f));
      }
    } else if (n.kind == LayerKind::BatchNorm) {
      if (store.find(n.weight_key() + ".scale")) continue;
      const auto c = static_cast<std::size_t>(n.in_channels);
      store.set(n.weight_key() + ".scale", {n.in_channels}, std::vector<float>(c, 1.0f));
      store.set(n.weight_key() + ".shift", {n.in_channels}, std::vector<float>(c, 0.0f));
      store.set(n.weight_key() + ".mean", {n.in_channels}, std::vector<float>(c, 0.0f));
      store.set(n.weight_key() + ".var", {n.in_channels}, std::vector<float>(c, 1.0f));
    }
  }
  return store;
}

std::string serialize_weights(const WeightStore& store) {
  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["tensors"] = nlohmann::json::array();
  std::string blob;
  for (const auto& name : store.names()) {
    const auto& e = store.at(name);
    const std::size_t offset = blob.size();
    for (float f : e.values) put_f32(blob, f);
    manifest["tensors"].push_back({{"name", name},
                                   {"shape", e.shape},
                                   {"offset", offset},
                                   {"count", e.values.size()},
                                   {"crc32", crc_of(blob.data() + offset, blob.size() - offset)}});
  }
  manifest["blob_bytes"] = blob.size();
  const std::string text = manifest.dump();
  std::string out(kMagic, kMagic + 4);
  put_u64(out, text.size());
  out += text;
  out += blob;
  return out;
}

WeightStore deserialize_weights(const std::string& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not an FDW1 weight container");
  }
  const std::uint64_t len = get_u64(bytes, 4);
  if (len > bytes.size() - 12) throw FormatError("truncated manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(12, len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  const std::size_t base = 12 + len;
  WeightStore store;
  try {
    const std::uint64_t blob_bytes = manifest.at("blob_bytes").get<std::uint64_t>();
    if (bytes.size() - base < blob_bytes) {
      throw FormatError("truncated blob: expected " + std::to_string(blob_bytes) + " bytes, found " +
                        std::to_string(bytes.size() - base));
    }
    if (bytes.size() - base > blob_bytes) throw FormatError("trailing bytes after blob");
    std::uint64_t expected_offset = 0;
    for (const auto& t : manifest.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto shape = t.at("shape").get<std::vector<std::int64_t>>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      const auto count = t.at("count").get<std::uint64_t>();
      if (offset != expected_offset) throw FormatError("tensor '" + name + "' is not contiguous");
      if (static_cast<std::uint64_t>(element_count(shape)) != count) {
        throw FormatError("tensor '" + name + "': shape " + shape_string(shape) +
                          " does not match count " + std::to_string(count));
      }
      if (offset + 4 * count > blob_bytes) throw FormatError("tensor '" + name + "' overruns blob");
      const char* p = bytes.data() + base + offset;
      if (crc_of(p, 4 * count) != t.at("crc32").get<std::uint32_t>()) {
        throw FormatError("checksum mismatch in tensor '" + name + "'");
      }
      std::vector<float> values(count);
      for (std::uint64_t i = 0; i < count; ++i) {
        values[i] = get_f32(reinterpret_cast<const unsigned char*>(p) + 4 * i);
      }
      store.set(name, shape, std::move(values));
      expected_offset = offset + 4 * count;
    }
    if (expected_offset != blob_bytes) throw FormatError("blob size does not match manifest");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  return store;
}

void save_weights(const WeightStore& store, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  const auto bytes = serialize_weights(store);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError("write failed for '" + path.string() + "'");
}

WeightStore load_weights(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return deserialize_weights(ss.str());
}

}  // namespace fdlite::executor
