#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vfsr/knn.hpp"
#include "vfsr/volume.hpp"

namespace vfsr {

/// Generic named-field volume, the on-disk unit of the FVOL format.
struct VolumeFields {
  Int3 dims{};
  double spacing = 0.5;
  Vec3 origin{};
  std::vector<std::pair<std::string, std::vector<float>>> fields;

  const std::vector<float>* find(const std::string& name) const {
    for (auto& [n, d] : fields)
      if (n == name) return &d;
    return nullptr;
  }
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}
inline void put_f32(std::ostream& os, float v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}
inline std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
inline float get_f32(std::istream& is) {
  float v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace detail

// FVOL: magic "FVOL", u32 version=1, u32 dims[3], f32 spacing_mm,
// f32 origin[3], u32 n_fields, then per field a 16-byte ASCII name and the
// f32 little-endian C-order grid (x fastest).
inline void write_fvol(const std::string& path, const VolumeFields& v) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os.write("FVOL", 4);
  detail::put_u32(os, 1);
  detail::put_u32(os, std::uint32_t(v.dims.x));
  detail::put_u32(os, std::uint32_t(v.dims.y));
  detail::put_u32(os, std::uint32_t(v.dims.z));
  detail::put_f32(os, float(v.spacing));
  detail::put_f32(os, float(v.origin.x));
  detail::put_f32(os, float(v.origin.y));
  detail::put_f32(os, float(v.origin.z));
  detail::put_u32(os, std::uint32_t(v.fields.size()));
  const std::size_t n = std::size_t(v.dims.x) * v.dims.y * v.dims.z;
  for (auto& [name, data] : v.fields) {
    if (name.size() > 16) throw std::runtime_error("FVOL field name too long");
    if (data.size() != n) throw std::runtime_error("FVOL field size mismatch");
    char buf[16] = {};
    std::memcpy(buf, name.data(), name.size());
    os.write(buf, 16);
    os.write(reinterpret_cast<const char*>(data.data()), std::streamsize(n * 4));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline VolumeFields read_fvol(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (std::memcmp(magic, "FVOL", 4) != 0)
    throw std::runtime_error("not an FVOL file: " + path);
  if (detail::get_u32(is) != 1)
    throw std::runtime_error("unsupported FVOL version: " + path);
  VolumeFields v;
  v.dims.x = int(detail::get_u32(is));
  v.dims.y = int(detail::get_u32(is));
  v.dims.z = int(detail::get_u32(is));
  v.spacing = detail::get_f32(is);
  v.origin.x = detail::get_f32(is);
  v.origin.y = detail::get_f32(is);
  v.origin.z = detail::get_f32(is);
  const std::uint32_t nf = detail::get_u32(is);
  const std::size_t n = std::size_t(v.dims.x) * v.dims.y * v.dims.z;
  for (std::uint32_t f = 0; f < nf; ++f) {
    char buf[17] = {};
    is.read(buf, 16);
    std::vector<float> data(n);
    is.read(reinterpret_cast<char*>(data.data()), std::streamsize(n * 4));
    v.fields.emplace_back(std::string(buf), std::move(data));
  }
  if (!is) throw std::runtime_error("truncated FVOL file: " + path);
  return v;
}

inline VolumeFields to_fields(const FlowVolume& f) {
  VolumeFields v;
  v.dims = f.dims;
  v.spacing = f.spacing;
  v.origin = f.origin;
  v.fields = {{"vx", f.vx.data}, {"vy", f.vy.data}, {"vz", f.vz.data},
              {"mask", f.mask.data}};
  return v;
}

inline VolumeFields to_fields(const MRVolume& m) {
  VolumeFields v;
  v.dims = m.dims;
  v.spacing = m.spacing;
  v.origin = m.origin;
  v.fields = {{"vx", m.vx.data}, {"vy", m.vy.data}, {"vz", m.vz.data},
              {"mask", m.mask.data}, {"mag", m.mag.data}};
  return v;
}

inline FlowVolume flow_from_fields(const VolumeFields& v) {
  FlowVolume f(v.dims, v.spacing, v.origin);
  auto get = [&](const char* name) {
    const auto* d = v.find(name);
    if (!d) throw std::runtime_error(std::string("FVOL missing field: ") + name);
    return *d;
  };
  f.vx.data = get("vx");
  f.vy.data = get("vy");
  f.vz.data = get("vz");
  f.mask.data = get("mask");
  return f;
}

inline MRVolume mr_from_fields(const VolumeFields& v) {
  MRVolume m(v.dims, v.spacing, v.origin);
  auto get = [&](const char* name) {
    const auto* d = v.find(name);
    if (!d) throw std::runtime_error(std::string("FVOL missing field: ") + name);
    return *d;
  };
  m.vx.data = get("vx");
  m.vy.data = get("vy");
  m.vz.data = get("vz");
  m.mask.data = get("mask");
  m.mag.data = get("mag");
  return m;
}

/// Legacy VTK STRUCTURED_POINTS export (ASCII) for external viewers.
/// Velocity fields become one VECTORS array; everything else SCALARS.
inline void write_vtk(const std::string& path, const VolumeFields& v) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  const std::size_t n = std::size_t(v.dims.x) * v.dims.y * v.dims.z;
  os << "# vtk DataFile Version 3.0\n";
  os << "vfsr volume\n";
  os << "ASCII\n";
  os << "DATASET STRUCTURED_POINTS\n";
  os << "DIMENSIONS " << v.dims.x << " " << v.dims.y << " " << v.dims.z << "\n";
  os << "ORIGIN " << v.origin.x + 0.5 * v.spacing << " "
     << v.origin.y + 0.5 * v.spacing << " " << v.origin.z + 0.5 * v.spacing
     << "\n";
  os << "SPACING " << v.spacing << " " << v.spacing << " " << v.spacing << "\n";
  os << "POINT_DATA " << n << "\n";

  const auto *vx = v.find("vx"), *vy = v.find("vy"), *vz = v.find("vz");
  if (vx && vy && vz) {
    os << "VECTORS velocity float\n";
    for (std::size_t i = 0; i < n; ++i)
      os << (*vx)[i] << " " << (*vy)[i] << " " << (*vz)[i] << "\n";
  }
  for (auto& [name, data] : v.fields) {
    if (name == "vx" || name == "vy" || name == "vz") continue;
    os << "SCALARS " << name << " float 1\n";
    os << "LOOKUP_TABLE default\n";
    for (std::size_t i = 0; i < n; ++i) os << data[i] << "\n";
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

/// CSV point cloud: header "x,y,z,vx,vy,vz", units mm and m/s.
inline ScatteredPoints read_csv_points(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty CSV: " + path);
  ScatteredPoints out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    double v[6];
    char comma;
    for (int i = 0; i < 6; ++i) {
      if (!(ss >> v[i])) throw std::runtime_error("bad CSV row: " + line);
      if (i < 5 && !(ss >> comma)) throw std::runtime_error("bad CSV row: " + line);
    }
    out.pos.push_back({v[0], v[1], v[2]});
    out.vel.push_back({v[3], v[4], v[5]});
  }
  return out;
}

inline void write_csv_points(const std::string& path, const ScatteredPoints& p) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << "x,y,z,vx,vy,vz\n";
  for (std::size_t i = 0; i < p.pos.size(); ++i)
    os << p.pos[i].x << "," << p.pos[i].y << "," << p.pos[i].z << ","
       << p.vel[i].x << "," << p.vel[i].y << "," << p.vel[i].z << "\n";
}

}  // namespace vfsr
