// SPDX-License-Identifier: Apache-2.0
#include "ekt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ekt/errors.hpp"

namespace ekt {

namespace {

constexpr char kMagic[8] = {'E', 'K', 'T', 'C', 'K', 'P', 'T', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void put_doubles(std::string& out, const Tensor& t) {
  const auto d = t.data();
  out.append(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(double));
}

template <class T>
void put(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& m, const Vocabulary& vocab,
                     const nlohmann::json& meta, const std::string& rng_state) {
  std::string payload;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& p : m.params()) {
    tensors.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"trainable", p.trainable}});
    put_doubles(payload, p.value);
    put_doubles(payload, p.m1);
    put_doubles(payload, p.m2);
  }
  nlohmann::json header = {{"config", m.config().to_json()},
                           {"vocab", vocab.to_json()},
                           {"vocab_hash", vocab.hash()},
                           {"adam_step", m.params().step()},
                           {"rng_state", rng_state},
                           {"tensors", tensors},
                           {"payload_bytes", payload.size()},
                           {"payload_hash", fnv1a(payload)},
                           {"meta", meta}};
  const std::string h = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, h.size());
  out += h;
  out += payload;

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write checkpoint " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const Vocabulary* expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();
  const std::string where = "checkpoint " + path.string() + ": ";

  const std::size_t fixed = sizeof kMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (buf.size() < fixed) throw DataError(where + "truncated");
  if (std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) throw DataError(where + "bad magic");
  std::uint32_t version = 0;
  std::uint64_t hlen = 0;
  std::memcpy(&version, buf.data() + sizeof kMagic, sizeof version);
  std::memcpy(&hlen, buf.data() + sizeof kMagic + sizeof version, sizeof hlen);
  if (version != kCheckpointVersion) {
    throw DataError(where + "version " + std::to_string(version) + " unsupported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  if (hlen > buf.size() - fixed) throw DataError(where + "truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.substr(fixed, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + "corrupt header: " + e.what());
  }
  const std::string payload = buf.substr(fixed + hlen);
  try {
    if (payload.size() != header.at("payload_bytes").get<std::size_t>()) throw DataError(where + "truncated payload");
    if (fnv1a(payload) != header.at("payload_hash").get<std::uint64_t>()) throw DataError(where + "payload hash mismatch");

    Vocabulary vocab = Vocabulary::from_json(header.at("vocab"));
    if (vocab.hash() != header.at("vocab_hash").get<std::uint64_t>()) {
      throw DataError(where + "stored vocabulary does not match its hash");
    }
    if (expected && expected->hash() != vocab.hash()) {
      throw DataError(where + "vocabulary hash differs from the dataset vocabulary");
    }

    const ModelConfig config = ModelConfig::from_json(header.at("config"));
    ParamStore store;
    std::size_t off = 0;
    for (const auto& t : header.at("tensors")) {
      const auto shape = t.at("shape").get<std::vector<std::size_t>>();
      Tensor value(shape);
      Tensor m1(shape);
      Tensor m2(shape);
      for (Tensor* dst : {&value, &m1, &m2}) {
        const std::size_t bytes = dst->size() * sizeof(double);
        if (off + bytes > payload.size()) throw DataError(where + "truncated tensor data");
        std::memcpy(dst->data().data(), payload.data() + off, bytes);
        off += bytes;
      }
      const std::size_t i = store.add(t.at("name").get<std::string>(), std::move(value), t.at("trainable").get<bool>());
      store[i].m1 = std::move(m1);
      store[i].m2 = std::move(m2);
    }
    if (off != payload.size()) throw DataError(where + "trailing payload bytes");
    store.set_step(header.at("adam_step").get<std::uint64_t>());
    return Checkpoint{Model::bind(config, std::move(store)), std::move(vocab), header.value("meta", nlohmann::json::object()),
                      header.value("rng_state", std::string{})};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + "malformed header: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(where + e.what());
  }
}

}  // namespace ekt
