#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "meshfield/errors.hpp"
#include "meshfield/mesh.hpp"

namespace meshfield {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Converts an OBJ index token ("7", "7/1/3", "-1") into a 0-based vertex index.
std::uint32_t obj_index(const std::string& token, std::size_t vertex_count, std::size_t line) {
  const std::string head = token.substr(0, token.find('/'));
  long long idx = 0;
  try {
    std::size_t used = 0;
    idx = std::stoll(head, &used);
    if (used != head.size()) throw std::invalid_argument(head);
  } catch (const std::exception&) {
    throw FormatError("obj: bad face index '" + token + "'", line);
  }
  if (idx < 0) idx += static_cast<long long>(vertex_count) + 1;
  if (idx < 1 || idx > static_cast<long long>(vertex_count)) {
    throw FormatError("obj: face index " + head + " out of range", line);
  }
  return static_cast<std::uint32_t>(idx - 1);
}

Mesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Mesh mesh;
  bool any_color = false;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream ls(raw);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      std::vector<double> vals;
      std::string tok;
      while (ls >> tok) {
        try {
          std::size_t used = 0;
          vals.push_back(std::stod(tok, &used));
          if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
          throw FormatError("obj: bad vertex value '" + tok + "'", line);
        }
      }
      if (vals.size() != 3 && vals.size() != 4 && vals.size() != 6 && vals.size() != 7) {
        throw FormatError("obj: vertex needs 3 coordinates (optionally followed by r g b)", line);
      }
      mesh.vertices.push_back({vals[0], vals[1], vals[2]});
      if (vals.size() >= 6) {
        const std::size_t c = vals.size() == 7 ? 4 : 3;
        mesh.colors.push_back({vals[c], vals[c + 1], vals[c + 2]});
        any_color = true;
      } else {
        mesh.colors.push_back({kGray, kGray, kGray});
      }
    } else if (tag == "f") {
      std::vector<std::uint32_t> poly;
      std::string tok;
      while (ls >> tok) poly.push_back(obj_index(tok, mesh.vertices.size(), line));
      if (poly.size() < 3) throw FormatError("obj: face with fewer than 3 vertices", line);
      for (std::size_t k = 1; k + 1 < poly.size(); ++k) mesh.faces.push_back({poly[0], poly[k], poly[k + 1]});
    }
  }
  if (any_color)
    for (auto& c : mesh.colors)
      for (auto& v : c) v = std::clamp(v, 0.0, 1.0);
  mesh.validate();
  return mesh;
}

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

PlyType ply_type(const std::string& name, std::size_t line) {
  const std::string n = lower(name);
  if (n == "char" || n == "int8") return PlyType::i8;
  if (n == "uchar" || n == "uint8") return PlyType::u8;
  if (n == "short" || n == "int16") return PlyType::i16;
  if (n == "ushort" || n == "uint16") return PlyType::u16;
  if (n == "int" || n == "int32") return PlyType::i32;
  if (n == "uint" || n == "uint32") return PlyType::u32;
  if (n == "float" || n == "float32") return PlyType::f32;
  if (n == "double" || n == "float64") return PlyType::f64;
  throw FormatError("ply: unknown property type '" + name + "'", line);
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::i8:
    case PlyType::u8: return 1;
    case PlyType::i16:
    case PlyType::u16: return 2;
    case PlyType::i32:
    case PlyType::u32:
    case PlyType::f32: return 4;
    case PlyType::f64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::f32;
  bool is_list = false;
  PlyType count_type = PlyType::u8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

class PlyReader {
 public:
  PlyReader(std::istream& in, bool ascii, bool big_endian) : in_(in), ascii_(ascii), big_endian_(big_endian) {}

  double read(PlyType t) {
    if (ascii_) {
      std::string tok;
      if (!(in_ >> tok)) throw FormatError("ply: unexpected end of data");
      try {
        return std::stod(tok);
      } catch (const std::exception&) {
        throw FormatError("ply: bad value '" + tok + "'");
      }
    }
    unsigned char buf[8];
    const std::size_t n = ply_size(t);
    if (!in_.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n))) {
      throw FormatError("ply: unexpected end of binary data");
    }
    if (big_endian_ != (std::endian::native == std::endian::big)) std::reverse(buf, buf + n);
    switch (t) {
      case PlyType::i8: return static_cast<double>(static_cast<std::int8_t>(buf[0]));
      case PlyType::u8: return static_cast<double>(buf[0]);
      case PlyType::i16: { std::int16_t v; std::memcpy(&v, buf, 2); return v; }
      case PlyType::u16: { std::uint16_t v; std::memcpy(&v, buf, 2); return v; }
      case PlyType::i32: { std::int32_t v; std::memcpy(&v, buf, 4); return v; }
      case PlyType::u32: { std::uint32_t v; std::memcpy(&v, buf, 4); return v; }
      case PlyType::f32: { float v; std::memcpy(&v, buf, 4); return v; }
      case PlyType::f64: { double v; std::memcpy(&v, buf, 8); return v; }
    }
    return 0.0;
  }

 private:
  std::istream& in_;
  bool ascii_;
  bool big_endian_;
};

bool is_integer_type(PlyType t) { return t != PlyType::f32 && t != PlyType::f64; }

Mesh load_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string raw;
  std::size_t line = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, raw)) return false;
    ++line;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    return true;
  };
  if (!next_line() || raw != "ply") throw FormatError("ply: missing 'ply' magic", 1);
  bool ascii = false, big_endian = false, have_format = false;
  std::vector<PlyElement> elements;
  while (true) {
    if (!next_line()) throw FormatError("ply: header not terminated", line);
    std::istringstream ls(raw);
    std::string tag;
    ls >> tag;
    if (tag == "end_header") break;
    if (tag == "comment" || tag == "obj_info" || tag.empty()) continue;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") ascii = true;
      else if (fmt == "binary_little_endian") big_endian = false;
      else if (fmt == "binary_big_endian") big_endian = true;
      else throw FormatError("ply: unknown format '" + fmt + "'", line);
      have_format = true;
    } else if (tag == "element") {
      PlyElement e;
      if (!(ls >> e.name >> e.count)) throw FormatError("ply: malformed element line", line);
      elements.push_back(std::move(e));
    } else if (tag == "property") {
      if (elements.empty()) throw FormatError("ply: property before element", line);
      PlyProperty p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ls >> count_type >> item_type;
        p.is_list = true;
        p.count_type = ply_type(count_type, line);
        p.type = ply_type(item_type, line);
      } else {
        p.type = ply_type(type, line);
      }
      if (!(ls >> p.name)) throw FormatError("ply: property without a name", line);
      elements.back().props.push_back(p);
    } else {
      throw FormatError("ply: unexpected header keyword '" + tag + "'", line);
    }
  }
  if (!have_format) throw FormatError("ply: missing format line", line);

  Mesh mesh;
  PlyReader reader(in, ascii, big_endian);
  bool have_color = false;
  for (const auto& e : elements) {
    if (e.name == "vertex") {
      mesh.vertices.resize(e.count);
      mesh.colors.assign(e.count, Vec3{kGray, kGray, kGray});
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const auto& p : e.props) {
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(reader.read(p.count_type));
            for (std::size_t k = 0; k < n; ++k) reader.read(p.type);
            continue;
          }
          const double v = reader.read(p.type);
          if (p.name == "x") mesh.vertices[i][0] = v;
          else if (p.name == "y") mesh.vertices[i][1] = v;
          else if (p.name == "z") mesh.vertices[i][2] = v;
          else if (p.name == "red" || p.name == "green" || p.name == "blue" || p.name == "r" || p.name == "g" ||
                   p.name == "b") {
            const int channel = (p.name[0] == 'r') ? 0 : (p.name[0] == 'g') ? 1 : 2;
            mesh.colors[i][channel] = is_integer_type(p.type) ? v / 255.0 : v;
            have_color = true;
          }
        }
      }
    } else if (e.name == "face") {
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const auto& p : e.props) {
          if (!p.is_list) {
            reader.read(p.type);
            continue;
          }
          const auto n = static_cast<std::size_t>(reader.read(p.count_type));
          std::vector<std::uint32_t> poly(n);
          for (auto& idx : poly) {
            const double v = reader.read(p.type);
            if (v < 0 || v >= static_cast<double>(mesh.vertices.size()))
              throw FormatError("ply: face index out of range");
            idx = static_cast<std::uint32_t>(v);
          }
          if (p.name != "vertex_indices" && p.name != "vertex_index") continue;
          if (n < 3) throw FormatError("ply: face with fewer than 3 vertices");
          for (std::size_t k = 1; k + 1 < n; ++k) mesh.faces.push_back({poly[0], poly[k], poly[k + 1]});
        }
      }
    } else {
      for (std::size_t i = 0; i < e.count; ++i)
        for (const auto& p : e.props) {
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(reader.read(p.count_type));
            for (std::size_t k = 0; k < n; ++k) reader.read(p.type);
          } else {
            reader.read(p.type);
          }
        }
    }
  }
  if (have_color)
    for (auto& c : mesh.colors)
      for (auto& v : c) v = std::clamp(v, 0.0, 1.0);
  mesh.validate();
  return mesh;
}

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v + 0.0);
  return buf;
}

void write_obj(const Mesh& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# meshfield stylized mesh: v x y z r g b\n";
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    const auto& v = m.vertices[i];
    const auto& c = m.colors[i];
    out << "v " << fmt_num(v[0]) << ' ' << fmt_num(v[1]) << ' ' << fmt_num(v[2]) << ' ' << fmt_num(c[0]) << ' '
        << fmt_num(c[1]) << ' ' << fmt_num(c[2]) << '\n';
  }
  for (const auto& f : m.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

void write_ply(const Mesh& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "ply\nformat binary_little_endian 1.0\ncomment meshfield stylized mesh\n"
      << "element vertex " << m.vertices.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "element face " << m.faces.size() << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    for (double v : m.vertices[i]) put_le(out, static_cast<float>(v));
    for (double c : m.colors[i])
      put_le(out, static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0)));
  }
  for (const auto& f : m.faces) {
    put_le(out, static_cast<std::uint8_t>(3));
    for (auto idx : f) put_le(out, static_cast<std::int32_t>(idx));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

MeshFormat format_from_extension(const std::filesystem::path& path) {
  const std::string ext = lower(path.extension().string());
  if (ext == ".obj") return MeshFormat::obj;
  if (ext == ".ply") return MeshFormat::ply;
  throw InputError("unsupported mesh extension '" + path.extension().string() + "' (expected .obj or .ply)");
}

Mesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
  if (!std::filesystem::exists(path)) throw IoError("mesh file not found: " + path.string());
  return format == MeshFormat::obj ? load_obj(path) : load_ply(path);
}

Mesh load_mesh(const std::filesystem::path& path) { return load_mesh(path, format_from_extension(path)); }

void save_mesh(const Mesh& m, const std::filesystem::path& path, MeshFormat format) {
  if (format == MeshFormat::obj) write_obj(m, path);
  else write_ply(m, path);
}

void save_mesh(const StylizedMesh& s, const std::filesystem::path& path, MeshFormat format) {
  save_mesh(s.bake(), path, format);
}

void save_mesh(const StylizedMesh& s, const std::filesystem::path& path) {
  save_mesh(s, path, format_from_extension(path));
}

}  // namespace meshfield
