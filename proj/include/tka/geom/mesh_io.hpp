// Copyright 2026 The tkaslam Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "tka/error.hpp"
#include "tka/geom/mesh.hpp"

namespace tka::io {

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

template <typename T>
T read_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

inline TriangleMesh parse_stl(const std::string& data, const std::string& name) {
  // Binary STL: 80-byte header + count + 50 bytes per facet. Some exporters write
  // "solid" into binary headers, so the size check takes precedence.
  if (data.size() >= 84) {
    const auto n = read_le<std::uint32_t>(data.data() + 80);
    if (data.size() == 84 + 50ull * n) {
      std::vector<Vec3> v;
      std::vector<Face> f;
      v.reserve(3ull * n);
      f.reserve(n);
      for (std::uint32_t t = 0; t < n; ++t) {
        const char* rec = data.data() + 84 + 50ull * t + 12;
        for (int k = 0; k < 3; ++k) {
          v.emplace_back(read_le<float>(rec + 12 * k), read_le<float>(rec + 12 * k + 4),
                         read_le<float>(rec + 12 * k + 8));
        }
        const int b = static_cast<int>(3 * t);
        f.push_back({b, b + 1, b + 2});
      }
      return TriangleMesh(std::move(v), std::move(f));
    }
  }
  std::istringstream in(data);
  std::string tok;
  in >> tok;
  if (lower(tok) != "solid") throw Error(ErrorCode::kIo, name + ": not an STL file");
  std::vector<Vec3> v;
  std::vector<Face> f;
  while (in >> tok) {
    if (lower(tok) != "vertex") continue;
    Vec3 p;
    if (!(in >> p.x() >> p.y() >> p.z())) throw Error(ErrorCode::kIo, name + ": bad vertex");
    v.push_back(p);
    if (v.size() % 3 == 0) {
      const int b = static_cast<int>(v.size()) - 3;
      f.push_back({b, b + 1, b + 2});
    }
  }
  if (v.size() % 3 != 0) throw Error(ErrorCode::kIo, name + ": truncated facet");
  return TriangleMesh(std::move(v), std::move(f));
}

inline TriangleMesh parse_ply(const std::string& data, const std::string& name) {
  const auto header_end = data.find("end_header");
  if (data.rfind("ply", 0) != 0 || header_end == std::string::npos)
    throw Error(ErrorCode::kIo, name + ": not a PLY file");
  std::istringstream header(data.substr(0, header_end));
  std::string line;
  std::string format;
  std::size_t n_vertices = 0;
  std::size_t n_faces = 0;
  std::string current;
  std::vector<std::pair<std::string, std::string>> vertex_props;  // (type, name)
  std::string face_count_type = "uchar";
  std::string face_index_type = "int";
  while (std::getline(header, line)) {
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      ls >> format;
    } else if (kw == "element") {
      std::size_t count = 0;
      ls >> current >> count;
      if (current == "vertex") n_vertices = count;
      if (current == "face") n_faces = count;
    } else if (kw == "property") {
      std::string type;
      ls >> type;
      if (current == "vertex") {
        std::string pname;
        ls >> pname;
        vertex_props.emplace_back(type, pname);
      } else if (current == "face" && type == "list") {
        ls >> face_count_type >> face_index_type;
      }
    }
  }
  std::size_t body = data.find('\n', header_end);
  if (body == std::string::npos) throw Error(ErrorCode::kIo, name + ": truncated header");
  ++body;

  auto prop_index = [&](const char* pname) {
    for (std::size_t i = 0; i < vertex_props.size(); ++i)
      if (vertex_props[i].second == pname) return static_cast<int>(i);
    throw Error(ErrorCode::kIo, name + ": vertex property '" + pname + "' missing");
  };
  const int ix = prop_index("x");
  const int iy = prop_index("y");
  const int iz = prop_index("z");

  std::vector<Vec3> v(n_vertices);
  std::vector<Face> f;
  f.reserve(n_faces);
  auto add_polygon = [&](const std::vector<long long>& idx) {
    if (idx.size() < 3) throw Error(ErrorCode::kIo, name + ": face with fewer than 3 vertices");
    for (std::size_t k = 1; k + 1 < idx.size(); ++k)
      f.push_back({static_cast<int>(idx[0]), static_cast<int>(idx[k]), static_cast<int>(idx[k + 1])});
  };

  if (format == "ascii") {
    std::istringstream in(data.substr(body));
    for (std::size_t i = 0; i < n_vertices; ++i) {
      std::vector<double> vals(vertex_props.size());
      for (auto& x : vals)
        if (!(in >> x)) throw Error(ErrorCode::kIo, name + ": truncated vertex list");
      v[i] = {vals[ix], vals[iy], vals[iz]};
    }
    for (std::size_t i = 0; i < n_faces; ++i) {
      std::size_t count = 0;
      if (!(in >> count)) throw Error(ErrorCode::kIo, name + ": truncated face list");
      std::vector<long long> idx(count);
      for (auto& x : idx) in >> x;
      add_polygon(idx);
    }
  } else if (format == "binary_little_endian") {
    auto size_of = [&](const std::string& t) -> std::size_t {
      if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
      if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
      if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" ||
          t == "float32")
        return 4;
      if (t == "double" || t == "float64") return 8;
      throw Error(ErrorCode::kIo, name + ": unsupported PLY type " + t);
    };
    auto read_value = [&](const std::string& t, const char* p) -> double {
      if (t == "char" || t == "int8") return read_le<std::int8_t>(p);
      if (t == "uchar" || t == "uint8") return read_le<std::uint8_t>(p);
      if (t == "short" || t == "int16") return read_le<std::int16_t>(p);
      if (t == "ushort" || t == "uint16") return read_le<std::uint16_t>(p);
      if (t == "int" || t == "int32") return read_le<std::int32_t>(p);
      if (t == "uint" || t == "uint32") return read_le<std::uint32_t>(p);
      if (t == "float" || t == "float32") return read_le<float>(p);
      return read_le<double>(p);
    };
    std::size_t pos = body;
    auto need = [&](std::size_t n) {
      if (pos + n > data.size()) throw Error(ErrorCode::kIo, name + ": truncated binary body");
    };
    for (std::size_t i = 0; i < n_vertices; ++i) {
      std::vector<double> vals(vertex_props.size());
      for (std::size_t k = 0; k < vertex_props.size(); ++k) {
        const std::size_t s = size_of(vertex_props[k].first);
        need(s);
        vals[k] = read_value(vertex_props[k].first, data.data() + pos);
        pos += s;
      }
      v[i] = {vals[ix], vals[iy], vals[iz]};
    }
    const std::size_t cs = size_of(face_count_type);
    const std::size_t is = size_of(face_index_type);
    for (std::size_t i = 0; i < n_faces; ++i) {
      need(cs);
      const auto count = static_cast<std::size_t>(read_value(face_count_type, data.data() + pos));
      pos += cs;
      std::vector<long long> idx(count);
      for (auto& x : idx) {
        need(is);
        x = static_cast<long long>(read_value(face_index_type, data.data() + pos));
        pos += is;
      }
      add_polygon(idx);
    }
  } else {
    throw Error(ErrorCode::kIo, name + ": unsupported PLY format '" + format + "'");
  }
  return TriangleMesh(std::move(v), std::move(f));
}

}  // namespace detail

/// Loads an STL (ASCII or binary) or PLY (ASCII or binary little-endian) mesh.
/// Units are taken as millimetres.
inline TriangleMesh load_mesh(const std::filesystem::path& path) {
  const std::string data = detail::read_file(path);
  const std::string ext = detail::lower(path.extension().string());
  if (ext == ".ply") return detail::parse_ply(data, path.string());
  if (ext == ".stl") return detail::parse_stl(data, path.string());
  if (data.rfind("ply", 0) == 0) return detail::parse_ply(data, path.string());
  return detail::parse_stl(data, path.string());
}

/// ASCII PLY with round-trip precision.
inline void save_ply(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << mesh.vertices().size()
      << "\nproperty double x\nproperty double y\nproperty double z\nelement face "
      << mesh.faces().size() << "\nproperty list uchar int vertex_indices\nend_header\n";
  char buf[96];
  for (const auto& p : mesh.vertices()) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out << buf;
  }
  for (const auto& f : mesh.faces()) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

inline void save_stl(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  char header[80] = {};
  std::snprintf(header, sizeof(header), "binary stl");
  out.write(header, 80);
  const auto n = static_cast<std::uint32_t>(mesh.triangle_count());
  out.write(reinterpret_cast<const char*>(&n), 4);
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const Vec3 nrm = mesh.face_normal(t).normalized();
    float rec[12];
    for (int k = 0; k < 3; ++k) rec[k] = static_cast<float>(nrm[k]);
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 3; ++k) rec[3 + 3 * c + k] = static_cast<float>(mesh.corner(t, c)[k]);
    out.write(reinterpret_cast<const char*>(rec), sizeof(rec));
    const std::uint16_t attr = 0;
    out.write(reinterpret_cast<const char*>(&attr), 2);
  }
}

}  // namespace tka::io
