#include "gastro/obj.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "gastro/error.hpp"

namespace gastro {

std::string FormatDouble(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

void WriteObj(const std::filesystem::path& path, const ObjData& obj) {
  std::ofstream out(path, std::ios::binary);
  GASTRO_CHECK(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  std::string text;
  if (!obj.mtllib.empty()) text += "mtllib " + obj.mtllib + "\n";
  for (const auto& v : obj.vertices) {
    text += "v " + FormatDouble(v.x()) + " " + FormatDouble(v.y()) + " " + FormatDouble(v.z()) + "\n";
  }
  for (const auto& t : obj.texcoords) {
    text += "vt " + FormatDouble(t.x()) + " " + FormatDouble(t.y()) + "\n";
  }
  if (!obj.material.empty()) text += "usemtl " + obj.material + "\n";
  const bool with_uv = !obj.face_texcoords.empty();
  for (std::size_t f = 0; f < obj.faces.size(); ++f) {
    text += "f";
    for (int k = 0; k < 3; ++k) {
      text += " " + std::to_string(obj.faces[f][k] + 1);
      if (with_uv) text += "/" + std::to_string(obj.face_texcoords[f][k] + 1);
    }
    text += "\n";
  }
  out << text;
  GASTRO_CHECK(out.good(), ErrorKind::kIo, "failed writing " + path.string());
}

namespace {

double ParseDouble(const std::string& token, const std::filesystem::path& path, int line) {
  double value = 0.0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
  GASTRO_CHECK(res.ec == std::errc() && res.ptr == token.data() + token.size(),
               ErrorKind::kIo, path.string() + ":" + std::to_string(line) + ": bad number '" + token + "'");
  return value;
}

}  // namespace

ObjData ReadObj(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  GASTRO_CHECK(in.good(), ErrorKind::kIo, "cannot read " + path.string());
  ObjData obj;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      std::string a, b, c;
      ss >> a >> b >> c;
      obj.vertices.emplace_back(ParseDouble(a, path, number), ParseDouble(b, path, number),
                                ParseDouble(c, path, number));
    } else if (tag == "vt") {
      std::string a, b;
      ss >> a >> b;
      obj.texcoords.emplace_back(ParseDouble(a, path, number), ParseDouble(b, path, number));
    } else if (tag == "f") {
      Triangle face{};
      Triangle uv{};
      bool has_uv = true;
      for (int k = 0; k < 3; ++k) {
        std::string token;
        GASTRO_CHECK(static_cast<bool>(ss >> token), ErrorKind::kIo,
                     path.string() + ":" + std::to_string(number) + ": face needs 3 vertices");
        const auto slash = token.find('/');
        face[k] = std::stoi(token.substr(0, slash)) - 1;
        if (slash == std::string::npos || slash + 1 >= token.size() || token[slash + 1] == '/') {
          has_uv = false;
        } else {
          uv[k] = std::stoi(token.substr(slash + 1)) - 1;
        }
      }
      std::string extra;
      GASTRO_CHECK(!(ss >> extra), ErrorKind::kIo,
                   path.string() + ":" + std::to_string(number) + ": only triangles are supported");
      obj.faces.push_back(face);
      if (has_uv) obj.face_texcoords.push_back(uv);
    } else if (tag == "mtllib") {
      ss >> obj.mtllib;
    } else if (tag == "usemtl") {
      ss >> obj.material;
    }
  }
  if (obj.face_texcoords.size() != obj.faces.size()) obj.face_texcoords.clear();
  for (const auto& f : obj.faces) {
    for (const int i : f) {
      GASTRO_CHECK(i >= 0 && static_cast<std::size_t>(i) < obj.vertices.size(), ErrorKind::kIo,
                   path.string() + ": face index out of range");
    }
  }
  return obj;
}

void WriteMtl(const std::filesystem::path& path, const std::string& material,
              const std::string& texture) {
  std::ofstream out(path, std::ios::binary);
  GASTRO_CHECK(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << "newmtl " << material << "\n"
      << "Ka 1 1 1\nKd 1 1 1\nKs 0 0 0\nillum 1\n"
      << "map_Kd " << texture << "\n";
}

TriangleMesh ToMesh(const ObjData& obj) {
  TriangleMesh mesh;
  mesh.vertices = obj.vertices;
  mesh.triangles = obj.faces;
  return mesh;
}

}  // namespace gastro
