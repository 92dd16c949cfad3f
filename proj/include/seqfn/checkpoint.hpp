#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "json.hpp"

#include "seqfn/errors.hpp"
#include "seqfn/network.hpp"
#include "seqfn/optim.hpp"
#include "seqfn/spec_json.hpp"

namespace seqfn {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'S', 'E', 'Q', 'F', 'N', 'C', 'K', '\0'};

struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;

  bool operator==(const TensorRecord&) const = default;
};

struct OptimSnapshot {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<TensorRecord> m;
  std::vector<TensorRecord> v;
};

/// In-memory image of a checkpoint file. Values are held at the on-disk
/// precision (32-bit) so what is saved is exactly what was loaded.
struct Checkpoint {
  ArchSpec spec;
  std::vector<TensorRecord> params;
  std::optional<OptimSnapshot> optim;
  nlohmann::json metadata = nlohmann::json::object();  // epoch, best metric, ...

  const TensorRecord* find(const std::string& name) const {
    for (const auto& r : params) {
      if (r.name == name) return &r;
    }
    return nullptr;
  }
};

template <class T>
Checkpoint make_checkpoint(const Network<T>& net, const OptimState* optim = nullptr,
                           nlohmann::json metadata = nlohmann::json::object()) {
  Checkpoint ck{net.spec, {}, std::nullopt, std::move(metadata)};
  for (const auto& [name, t] : net.params) {
    TensorRecord r{name, t.shape(), {}};
    r.values.reserve(t.numel());
    for (auto x : t.data()) r.values.push_back(static_cast<float>(x));
    ck.params.push_back(std::move(r));
  }
  if (optim) {
    OptimSnapshot s{optim->config, optim->step, {}, {}};
    for (const auto& [name, t] : net.params) {
      auto moments = [&](const std::map<std::string, std::vector<double>>& src, std::vector<TensorRecord>& dst) {
        auto it = src.find(name);
        if (it == src.end()) return;
        dst.push_back({name, t.shape(), std::vector<float>(it->second.begin(), it->second.end())});
      };
      moments(optim->m, s.m);
      moments(optim->v, s.v);
    }
    ck.optim = std::move(s);
  }
  return ck;
}

template <class T>
Network<T> network_from_checkpoint(const Checkpoint& ck) {
  Network<T> net{ck.spec, {}};
  for (const auto& r : ck.params) {
    std::vector<T> v(r.values.begin(), r.values.end());
    net.params.add(r.name, Tensor<T>::from(r.shape, std::move(v)));
  }
  return net;
}

inline OptimState optim_from_checkpoint(const Checkpoint& ck) {
  OptimState st;
  if (!ck.optim) return st;
  st.config = ck.optim->config;
  st.step = ck.optim->step;
  for (const auto& r : ck.optim->m) st.m[r.name].assign(r.values.begin(), r.values.end());
  for (const auto& r : ck.optim->v) st.v[r.name].assign(r.values.begin(), r.values.end());
  return st;
}

namespace detail {

inline std::uint32_t crc32_of(const char* data, std::size_t n) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(::crc32(c, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

class ByteWriter {
 public:
  template <class U>
  void put(U v) {
    auto bits = std::bit_cast<std::array<char, sizeof(U)>>(v);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
    out_.append(bits.data(), bits.size());
  }
  void bytes(std::string_view s) { out_.append(s); }
  std::size_t size() const { return out_.size(); }
  const std::string& str() const { return out_; }
  std::uint32_t crc_since(std::size_t start) const { return crc32_of(out_.data() + start, out_.size() - start); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view in) : in_(in) {}
  template <class U>
  U get(const char* what) {
    need(sizeof(U), what);
    std::array<char, sizeof(U)> bits;
    std::memcpy(bits.data(), in_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
    pos_ += sizeof(U);
    return std::bit_cast<U>(bits);
  }
  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }
  std::uint32_t crc_since(std::size_t start) const { return crc32_of(in_.data() + start, pos_ - start); }

 private:
  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw CheckpointError(std::string("truncated checkpoint: file ends inside ") + what);
    }
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

inline void write_record(ByteWriter& w, const std::string& name, const Shape& shape, std::span<const float> values) {
  const std::size_t start = w.size();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
  w.bytes(name);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) w.put<std::uint64_t>(d);
  w.put<std::uint64_t>(4 * values.size());
  for (float v : values) w.put<float>(v);
  w.put<std::uint32_t>(w.crc_since(start));
}

inline std::pair<std::string, TensorRecord> read_record(ByteReader& r) {
  const std::size_t start = r.pos();
  const auto name_len = r.get<std::uint32_t>("record name length");
  TensorRecord rec;
  rec.name = std::string(r.bytes(name_len, "record name"));
  const auto rank = r.get<std::uint32_t>("record rank");
  if (rank > 8) throw CheckpointError("record '" + rec.name + "' has implausible rank " + std::to_string(rank));
  for (std::uint32_t i = 0; i < rank; ++i) rec.shape.push_back(r.get<std::uint64_t>("record shape"));
  const auto payload = r.get<std::uint64_t>("record payload length");
  if (payload != 4 * shape_numel(rec.shape)) {
    throw CheckpointError("record '" + rec.name + "' payload is " + std::to_string(payload) + " bytes, shape " +
                          shape_str(rec.shape) + " needs " + std::to_string(4 * shape_numel(rec.shape)));
  }
  rec.values.resize(payload / 4);
  for (auto& v : rec.values) v = r.get<float>("record payload");
  const auto expect = r.crc_since(start);
  if (r.get<std::uint32_t>("record checksum") != expect) {
    throw CheckpointError("checksum mismatch in record '" + rec.name + "'");
  }
  return {rec.name, std::move(rec)};
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["spec"] = to_json(ck.spec);
  header["metadata"] = ck.metadata;
  if (ck.optim) {
    const auto& o = *ck.optim;
    header["optim"] = {{"step", o.step},         {"lr", o.config.lr},   {"beta1", o.config.beta1},
                       {"beta2", o.config.beta2}, {"eps", o.config.eps}};
  } else {
    header["optim"] = nullptr;
  }
  const std::string text = header.dump();

  detail::ByteWriter w;
  w.bytes(std::string_view(kCheckpointMagic, sizeof kCheckpointMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  w.put<std::uint32_t>(detail::crc32_of(text.data(), text.size()));
  const std::size_t n_optim = ck.optim ? ck.optim->m.size() + ck.optim->v.size() : 0;
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.params.size() + n_optim));
  for (const auto& r : ck.params) detail::write_record(w, r.name, r.shape, r.values);
  if (ck.optim) {
    for (const auto& r : ck.optim->m) detail::write_record(w, "optim.m/" + r.name, r.shape, r.values);
    for (const auto& r : ck.optim->v) detail::write_record(w, "optim.v/" + r.name, r.shape, r.values);
  }
  return w.str();
}

/// Parses a whole checkpoint image; any defect throws CheckpointError and
/// nothing is returned.
inline Checkpoint deserialize_checkpoint(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (r.bytes(sizeof kCheckpointMagic, "magic") != std::string_view(kCheckpointMagic, sizeof kCheckpointMagic)) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = r.get<std::uint32_t>("header length");
  const auto text = r.bytes(header_len, "header");
  if (r.get<std::uint32_t>("header checksum") != detail::crc32_of(text.data(), text.size())) {
    throw CheckpointError("checksum mismatch in header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed header: ") + e.what());
  }
  Checkpoint ck;
  try {
    ck.spec = arch_spec_from_json(header.at("spec"));
    ck.metadata = header.at("metadata");
    if (!header.at("optim").is_null()) {
      const auto& o = header.at("optim");
      OptimSnapshot s;
      s.step = o.at("step").get<std::size_t>();
      s.config = {o.at("lr").get<double>(), o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                  o.at("eps").get<double>()};
      ck.optim = std::move(s);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("malformed header: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>("record count");
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, rec] = detail::read_record(r);
    if (name.starts_with("optim.m/") || name.starts_with("optim.v/")) {
      if (!ck.optim) throw CheckpointError("optimizer record '" + name + "' without optimizer header");
      rec.name = name.substr(8);
      (name[6] == 'm' ? ck.optim->m : ck.optim->v).push_back(std::move(rec));
    } else {
      ck.params.push_back(std::move(rec));
    }
  }
  if (!r.done()) throw CheckpointError("trailing bytes after the last record");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const auto bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write to '" + path + "' failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

/// Header only: spec and metadata without reading the payloads' values.
inline nlohmann::json read_checkpoint_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::string prefix(16, '\0');
  in.read(prefix.data(), 16);
  if (in.gcount() != 16) throw CheckpointError("truncated checkpoint: file ends inside header");
  detail::ByteReader r(prefix);
  if (r.bytes(8, "magic") != std::string_view(kCheckpointMagic, 8)) throw CheckpointError("not a checkpoint file (bad magic)");
  if (r.get<std::uint32_t>("version") != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version");
  const auto len = r.get<std::uint32_t>("header length");
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (static_cast<std::uint32_t>(in.gcount()) != len) throw CheckpointError("truncated checkpoint: file ends inside header");
  return nlohmann::json::parse(text);
}

}  // namespace seqfn
