#include "gastro/ply.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gastro/error.hpp"

namespace gastro {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace {

template <typename T>
void Put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void WriteFile(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  GASTRO_CHECK(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  GASTRO_CHECK(out.good(), ErrorKind::kIo, "failed writing " + path.string());
}

}  // namespace

void WritePointCloudPly(const std::filesystem::path& path, const PointCloud& cloud) {
  const bool colors = cloud.colors.size() == cloud.size();
  std::string out = "ply\nformat binary_little_endian 1.0\nelement vertex " +
                    std::to_string(cloud.size()) +
                    "\nproperty double x\nproperty double y\nproperty double z\n";
  if (colors) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out += "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int a = 0; a < 3; ++a) Put(out, cloud.points[i][a]);
    if (colors) {
      for (int c = 0; c < 3; ++c) Put(out, cloud.colors[i][c]);
    }
  }
  WriteFile(path, out);
}

void WriteMeshPly(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::string out = "ply\nformat binary_little_endian 1.0\nelement vertex " +
                    std::to_string(mesh.vertices.size()) +
                    "\nproperty double x\nproperty double y\nproperty double z\nelement face " +
                    std::to_string(mesh.triangles.size()) +
                    "\nproperty list uchar int vertex_indices\nend_header\n";
  for (const auto& v : mesh.vertices) {
    for (int a = 0; a < 3; ++a) Put(out, v[a]);
  }
  for (const auto& t : mesh.triangles) {
    Put<std::uint8_t>(out, 3);
    for (int k = 0; k < 3; ++k) Put<std::int32_t>(out, t[k]);
  }
  WriteFile(path, out);
}

namespace {

enum class PlyType { kChar, kUChar, kShort, kUShort, kInt, kUInt, kFloat, kDouble };

PlyType ParseType(const std::string& name) {
  if (name == "char" || name == "int8") return PlyType::kChar;
  if (name == "uchar" || name == "uint8") return PlyType::kUChar;
  if (name == "short" || name == "int16") return PlyType::kShort;
  if (name == "ushort" || name == "uint16") return PlyType::kUShort;
  if (name == "int" || name == "int32") return PlyType::kInt;
  if (name == "uint" || name == "uint32") return PlyType::kUInt;
  if (name == "float" || name == "float32") return PlyType::kFloat;
  if (name == "double" || name == "float64") return PlyType::kDouble;
  throw Error(ErrorKind::kIo, "unsupported PLY type " + name);
}

std::size_t TypeSize(PlyType t) {
  switch (t) {
    case PlyType::kChar:
    case PlyType::kUChar: return 1;
    case PlyType::kShort:
    case PlyType::kUShort: return 2;
    case PlyType::kInt:
    case PlyType::kUInt:
    case PlyType::kFloat: return 4;
    case PlyType::kDouble: return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  PlyType type = PlyType::kFloat;
  bool is_list = false;
  PlyType count_type = PlyType::kUChar;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t pos, bool binary)
      : bytes_(bytes), pos_(pos), binary_(binary) {}

  double Read(PlyType t) {
    if (!binary_) {
      std::string token = NextToken();
      return std::stod(token);
    }
    const std::size_t n = TypeSize(t);
    GASTRO_CHECK(pos_ + n <= bytes_.size(), ErrorKind::kIo, "truncated PLY body");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    switch (t) {
      case PlyType::kChar: return Load<std::int8_t>(p);
      case PlyType::kUChar: return Load<std::uint8_t>(p);
      case PlyType::kShort: return Load<std::int16_t>(p);
      case PlyType::kUShort: return Load<std::uint16_t>(p);
      case PlyType::kInt: return Load<std::int32_t>(p);
      case PlyType::kUInt: return Load<std::uint32_t>(p);
      case PlyType::kFloat: return Load<float>(p);
      case PlyType::kDouble: return Load<double>(p);
    }
    return 0.0;
  }

 private:
  template <typename T>
  static double Load(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<double>(v);
  }

  std::string NextToken() {
    while (pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    GASTRO_CHECK(pos_ > start, ErrorKind::kIo, "truncated PLY body");
    return bytes_.substr(start, pos_ - start);
  }

  const std::string& bytes_;
  std::size_t pos_;
  bool binary_;
};

}  // namespace

PlyData ReadPly(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  GASTRO_CHECK(in.good(), ErrorKind::kIo, "cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string marker = "end_header\n";
  const std::size_t header_end = bytes.find(marker);
  GASTRO_CHECK(bytes.rfind("ply", 0) == 0 && header_end != std::string::npos, ErrorKind::kIo,
               path.string() + " is not a PLY file");
  std::istringstream header(bytes.substr(0, header_end));
  std::string line;
  bool binary = false;
  std::vector<Element> elements;
  while (std::getline(header, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "format") {
      std::string fmt;
      ss >> fmt;
      GASTRO_CHECK(fmt == "binary_little_endian" || fmt == "ascii", ErrorKind::kIo,
                   "unsupported PLY format " + fmt);
      binary = fmt == "binary_little_endian";
    } else if (tag == "element") {
      Element e;
      ss >> e.name >> e.count;
      elements.push_back(e);
    } else if (tag == "property") {
      GASTRO_CHECK(!elements.empty(), ErrorKind::kIo, "PLY property before element");
      Property p;
      std::string type;
      ss >> type;
      if (type == "list") {
        std::string count_type;
        std::string item_type;
        ss >> count_type >> item_type >> p.name;
        p.is_list = true;
        p.count_type = ParseType(count_type);
        p.type = ParseType(item_type);
      } else {
        p.type = ParseType(type);
        ss >> p.name;
      }
      elements.back().properties.push_back(p);
    }
  }

  PlyData data;
  Reader reader(bytes, header_end + marker.size(), binary);
  for (const auto& e : elements) {
    const bool vertex = e.name == "vertex";
    const bool face = e.name == "face";
    bool has_color = false;
    for (const auto& p : e.properties) has_color |= p.name == "red";
    for (std::size_t i = 0; i < e.count; ++i) {
      Vec3 pos = Vec3::Zero();
      Rgb color{0, 0, 0};
      for (const auto& p : e.properties) {
        if (p.is_list) {
          const auto n = static_cast<std::size_t>(reader.Read(p.count_type));
          std::vector<int> idx(n);
          for (auto& v : idx) v = static_cast<int>(reader.Read(p.type));
          if (face) {
            GASTRO_CHECK(n == 3, ErrorKind::kIo, "only triangle faces are supported");
            data.faces.push_back({idx[0], idx[1], idx[2]});
          }
          continue;
        }
        const double v = reader.Read(p.type);
        if (!vertex) continue;
        if (p.name == "x") pos.x() = v;
        if (p.name == "y") pos.y() = v;
        if (p.name == "z") pos.z() = v;
        if (p.name == "red") color[0] = static_cast<std::uint8_t>(v);
        if (p.name == "green") color[1] = static_cast<std::uint8_t>(v);
        if (p.name == "blue") color[2] = static_cast<std::uint8_t>(v);
      }
      if (vertex) {
        data.cloud.points.push_back(pos);
        if (has_color) data.cloud.colors.push_back(color);
      }
    }
  }
  return data;
}

}  // namespace gastro
