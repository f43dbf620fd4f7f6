#include "circscope/container.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace circscope {

namespace {

struct HeaderEntry {
  std::string name;
  std::vector<Index> shape;
  std::uint64_t offset = 0;
};

std::uint64_t read_u64_le(std::istream& in, const std::string& path) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw DataError("weight container '" + path + "': truncated header length");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

}  // namespace

std::map<std::string, TensorF> read_weight_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open weight container '" + path.string() + "'");

  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kWeightMagic, 8) != 0) {
    throw DataError("weight container '" + path.string() + "': bad magic");
  }
  const std::uint64_t header_len = read_u64_le(in, path.string());
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError("weight container '" + path.string() + "': truncated header");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("weight container '" + path.string() + "': bad header JSON: " + e.what());
  }
  if (!j.is_array()) {
    throw DataError("weight container '" + path.string() + "': header must be a JSON array");
  }

  std::vector<HeaderEntry> entries;
  for (const auto& item : j) {
    HeaderEntry e;
    try {
      e.name = item.at("name").get<std::string>();
      const std::string dtype = item.at("dtype").get<std::string>();
      if (dtype != "f32") {
        throw DataError("weight container: tensor '" + e.name + "' has dtype '" + dtype +
                        "', only f32 is supported");
      }
      for (const auto& d : item.at("shape")) e.shape.push_back(d.get<Index>());
      e.offset = item.at("offset").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& ex) {
      throw DataError("weight container '" + path.string() + "': bad header entry: " + ex.what());
    }
    entries.push_back(std::move(e));
  }

  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::map<std::string, TensorF> out;
  for (const auto& e : entries) {
    Index n = 1;
    for (Index d : e.shape) n *= d;
    if (e.shape.empty()) n = 0;
    const std::uint64_t bytes = static_cast<std::uint64_t>(n) * sizeof(float);
    if (e.offset + bytes > blob.size()) {
      throw DataError("weight container '" + path.string() + "': blob truncated for tensor '" +
                      e.name + "'");
    }
    TensorF t;
    t.shape = e.shape;
    t.data.resize(static_cast<std::size_t>(n));
    std::memcpy(t.data.data(), blob.data() + e.offset, bytes);
    t.validate(e.name);
    if (!out.emplace(e.name, std::move(t)).second) {
      throw DataError("weight container '" + path.string() + "': duplicate tensor '" + e.name +
                      "'");
    }
  }
  return out;
}

void write_weight_container(const std::filesystem::path& path,
                            const std::map<std::string, TensorF>& tensors) {
  nlohmann::json header = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    t.validate(name);
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = t.shape;
    entry["dtype"] = "f32";
    entry["offset"] = offset;
    header.push_back(std::move(entry));
    offset += t.data.size() * sizeof(float);
  }
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write weight container '" + path.string() + "'");
  out.write(kWeightMagic, 8);
  write_u64_le(out, header_str.size());
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, t] : tensors) {
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing weight container '" + path.string() + "'");
}

WeightsF load_weights(const std::filesystem::path& path, const ModelConfig& config) {
  return weights_from_tensors(config, read_weight_container(path));
}

void save_weights(const std::filesystem::path& path, const ModelConfig& config,
                  const WeightsF& weights) {
  write_weight_container(path, tensors_from_weights(config, weights));
}

}  // namespace circscope
