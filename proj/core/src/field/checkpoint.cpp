// Checkpoint layout (all integers little-endian):
//
//   bytes 0..3   magic "MFCK"
//   bytes 4..7   uint32 format version
//   bytes 8..15  uint64 header length H
//   H bytes      UTF-8 JSON header
//   zero padding up to the next multiple of 8
//   float64 payload, tensors concatenated in header order
//
// Header: {"format":"meshfield-checkpoint","version":1,"seed":N,
//          "config_hash":"...","tensors":[{"name":..,"shape":[..],"offset":..}]}
// where offset counts float64 elements from the start of the payload.

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <map>

#include "meshfield/errors.hpp"
#include "meshfield/field.hpp"

namespace meshfield {

namespace {

constexpr char kMagic[4] = {'M', 'F', 'C', 'K'};

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw FormatError("checkpoint: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

void save_checkpoint(const StyleField& field, const std::filesystem::path& path, std::uint64_t seed,
                     const std::string& config_hash) {
  const auto tensors = field.state();
  nlohmann::json header;
  header["format"] = "meshfield-checkpoint";
  header["version"] = kCheckpointVersion;
  header["seed"] = seed;
  header["config_hash"] = config_hash;
  header["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    header["tensors"].push_back({{"name", t.name}, {"shape", t.tensor.shape()}, {"offset", offset}});
    offset += t.tensor.numel();
  }
  const std::string text = header.dump();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(kMagic, 4);
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    const std::size_t used = 16 + text.size();
    for (std::size_t pad = (8 - used % 8) % 8; pad > 0; --pad) out.put('\0');
    for (const auto& t : tensors)
      for (double v : t.tensor.data()) put_le(out, v);
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointInfo load_checkpoint(StyleField& field, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
  CheckpointInfo info;
  info.version = get_le<std::uint32_t>(in);
  if (info.version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(info.version));
  }
  const auto header_len = get_le<std::uint64_t>(in);
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw FormatError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }
  const std::size_t used = 16 + header_len;
  in.seekg(static_cast<std::streamoff>(used + (8 - used % 8) % 8));
  const auto payload_start = in.tellg();

  info.seed = header.value("seed", std::uint64_t{0});
  info.config_hash = header.value("config_hash", std::string{});

  std::map<std::string, std::pair<ag::Shape, std::size_t>> index;
  for (const auto& t : header.at("tensors")) {
    index[t.at("name").get<std::string>()] = {t.at("shape").get<ag::Shape>(), t.at("offset").get<std::size_t>()};
  }
  for (auto& named : field.state()) {
    auto it = index.find(named.name);
    if (it == index.end()) throw FormatError("checkpoint: missing tensor " + named.name);
    if (it->second.first != named.tensor.shape()) {
      throw DimensionError("checkpoint: tensor " + named.name + " has shape " + ag::shape_str(it->second.first) +
                           ", field expects " + ag::shape_str(named.tensor.shape()));
    }
    in.seekg(payload_start + static_cast<std::streamoff>(it->second.second * sizeof(double)));
    auto values = named.tensor.data_mut();
    for (auto& v : values) v = get_le<double>(in);
  }
  return info;
}

}  // namespace meshfield
