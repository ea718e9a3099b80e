#include "daformer/experiment/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "daformer/core/errors.hpp"

namespace daformer {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'D', 'A', 'F', 'C', 'K', 'P', 'T', '1'};
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  json arrays = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : ckpt.arrays) {
    arrays.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"dtype", "float32"}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size()) * sizeof(float);
  }
  const std::string header = json{{"meta", ckpt.meta}, {"arrays", arrays}}.dump();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw FormatError("cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t len = header.size();
    unsigned char le[8];
    for (int i = 0; i < 8; ++i) le[i] = static_cast<unsigned char>(len >> (8 * i));
    out.write(reinterpret_cast<const char*>(le), 8);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, m] : ckpt.arrays)
      out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
    if (!out) throw FormatError("failed writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  char magic[8];
  unsigned char le[8];
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(le), 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw FormatError("not a checkpoint: " + path.string());
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(le[i]) << (8 * i);
  if (len > (1ULL << 30)) throw FormatError("checkpoint header too large");
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("truncated checkpoint header");
  Checkpoint ckpt;
  json h;
  try {
    h = json::parse(header);
    ckpt.meta = h.at("meta");
    const auto data_start = in.tellg();
    for (const auto& a : h.at("arrays")) {
      if (a.at("dtype").get<std::string>() != "float32") throw FormatError("unsupported dtype in checkpoint");
      MatF m(a.at("rows").get<Eigen::Index>(), a.at("cols").get<Eigen::Index>());
      in.seekg(data_start + static_cast<std::streamoff>(a.at("offset").get<std::uint64_t>()));
      in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
      if (!in) throw FormatError("truncated checkpoint data for " + a.at("name").get<std::string>());
      ckpt.arrays.emplace(a.at("name").get<std::string>(), std::move(m));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  }
  return ckpt;
}

void pack_params(Checkpoint& ckpt, const std::string& prefix, const ParamStore<float>& params) {
  for (const auto& [key, p] : params) ckpt.arrays[prefix + "/" + key] = p.value;
}

void unpack_params(const Checkpoint& ckpt, const std::string& prefix, ParamStore<float>& params) {
  for (auto& [key, p] : params) {
    auto it = ckpt.arrays.find(prefix + "/" + key);
    if (it == ckpt.arrays.end()) throw StateError("checkpoint lacks " + prefix + "/" + key);
    if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols())
      throw StateError("checkpoint shape mismatch for " + prefix + "/" + key);
    p.value = it->second;
  }
}

}  // namespace daformer
