/* Copyright 2026 The RDRF Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Checkpoint files.
//
//   "RDRF" | u32 version | u64 len, canonical JSON config | u64 step
//   | u32 n, n parameter records | u32 m, m first-moment records | u32 m, m second-moment records
//
// record: u32 name length, name bytes, u8 dtype (0 = f32), u32 rank, rank x u64 dims,
// little-endian payload. Records are written in lexicographic name order.

#pragma once

#include <openssl/evp.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "rdrf/autograd.hpp"
#include "rdrf/data.hpp"
#include "rdrf/model.hpp"

namespace rdrf {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;

struct Checkpoint {
  /// {"model": ModelConfig, "train": TrainConfig or null}
  nlohmann::json config;
  std::uint64_t step = 0;
  Params<float> params;
  Params<float> adam_m;
  Params<float> adam_v;

  ModelConfig model_config() const { return model_config_from_json(config.at("model")); }
};

namespace detail {

inline void put_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}
template <class U>
void put_le(std::string& out, U v) {
  put_bytes(out, &v, sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::string& b) : b_(b) {}
  void take(void* dst, std::size_t n, const char* what) {
    if (b_.size() - pos_ < n) throw FormatError(std::string("checkpoint truncated in ") + what);
    std::memcpy(dst, b_.data() + pos_, n);
    pos_ += n;
  }
  template <class U>
  U le(const char* what) {
    U v{};
    take(&v, sizeof(U), what);
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    std::string s(n, '\0');
    take(s.data(), n, what);
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::string& b_;
  std::size_t pos_ = 0;
};

inline void put_records(std::string& out, const Params<float>& ps) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ps.size()));
  for (const auto& [name, t] : ps) {  // std::map iterates in lexicographic order
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le<std::uint8_t>(out, kDtypeF32);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (Index d : t.shape()) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    put_bytes(out, t.data(), static_cast<std::size_t>(t.numel()) * sizeof(float));
  }
}

inline Params<float> get_records(Reader& r) {
  Params<float> ps;
  const auto n = r.le<std::uint32_t>("record count");
  std::string prev;
  for (std::uint32_t k = 0; k < n; ++k) {
    const auto len = r.le<std::uint32_t>("record name");
    std::string name = r.str(len, "record name");
    if (k > 0 && !(prev < name)) throw FormatError("checkpoint records out of order at '" + name + "'");
    if (r.le<std::uint8_t>("dtype") != kDtypeF32) throw FormatError("unsupported dtype for '" + name + "'");
    const auto rank = r.le<std::uint32_t>("rank");
    if (rank > 8) throw FormatError("implausible rank for '" + name + "'");
    Shape s;
    for (std::uint32_t d = 0; d < rank; ++d) s.push_back(static_cast<Index>(r.le<std::uint64_t>("shape")));
    Tensor<float> t(s);
    r.take(t.data(), static_cast<std::size_t>(t.numel()) * sizeof(float), "payload");
    prev = name;
    ps.emplace(std::move(name), std::move(t));
  }
  return ps;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  std::string out = "RDRF";
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  const std::string js = ck.config.dump();
  detail::put_le<std::uint64_t>(out, js.size());
  out += js;
  detail::put_le<std::uint64_t>(out, ck.step);
  detail::put_records(out, ck.params);
  detail::put_records(out, ck.adam_m);
  detail::put_records(out, ck.adam_v);
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  detail::Reader r(bytes);
  if (r.str(4, "magic") != "RDRF") throw FormatError("not a checkpoint (bad magic)");
  const auto ver = r.le<std::uint32_t>("version");
  if (ver != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(ver));
  Checkpoint ck;
  const auto len = r.le<std::uint64_t>("config length");
  ck.config = nlohmann::json::parse(r.str(len, "config"));
  ck.step = r.le<std::uint64_t>("step");
  ck.params = detail::get_records(r);
  ck.adam_m = detail::get_records(r);
  ck.adam_v = detail::get_records(r);
  if (!r.done()) throw FormatError("trailing bytes after checkpoint");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::string b = serialize_checkpoint(ck);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f.write(b.data(), static_cast<std::streamsize>(b.size()));
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(detail::slurp(path)); }

/// Hex SHA-256 of a byte string.
inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

inline std::string checkpoint_digest(const Checkpoint& ck) { return sha256_hex(serialize_checkpoint(ck)); }

/// Throws if the stored parameters do not match what `cfg` declares.
inline void check_params_match(const ModelConfig& cfg, const Params<float>& params) {
  const ParamSpecs specs = model_param_specs(cfg);
  if (specs.size() != params.size())
    throw std::invalid_argument("checkpoint has " + std::to_string(params.size()) + " tensors, config declares " +
                                std::to_string(specs.size()));
  for (const auto& s : specs) {
    auto it = params.find(s.name);
    if (it == params.end()) throw std::invalid_argument("checkpoint lacks parameter '" + s.name + "'");
    if (it->second.shape() != s.shape)
      throw std::invalid_argument("parameter '" + s.name + "' has shape " + shape_str(it->second.shape()) +
                                  ", config expects " + shape_str(s.shape));
  }
}

}  // namespace rdrf
