#pragma once
// On-disk formats.
//
// Binary snapshot: 32-byte header, little-endian:
//     bytes  0..7   magic "KSFLD1\0\0"
//     bytes  8..11  u32 d
//     bytes 12..15  u32 n
//     bytes 16..23  f64 L (half_width)
//     bytes 24..31  f64 time
// followed by n^d f64 values, row-major (axis 0 slowest).
//
// Diagnostics CSV: header `t,mass,l1,l2,l2m,linf,min,dt`, one row per record,
// every value printed with "%.17g" so reruns are byte-comparable.
//
// Ensemble CSV: a comment line `# t=<time> seed=<seed>`, a header
// `id,x1,..,xd`, then one row per particle.

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kslab/core.hpp"

namespace kslab {

static_assert(std::endian::native == std::endian::little,
              "snapshot format is little-endian; big-endian hosts unsupported");

inline constexpr std::array<char, 8> kSnapshotMagic = {'K', 'S', 'F', 'L', 'D', '1', '\0', '\0'};

inline void write_snapshot(const std::filesystem::path& path, const ScalarField& f, double time) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_snapshot: cannot open " + path.string());
  os.write(kSnapshotMagic.data(), 8);
  const std::uint32_t d = static_cast<std::uint32_t>(f.grid.d);
  const std::uint32_t n = static_cast<std::uint32_t>(f.grid.n);
  const double L = f.grid.half_width;
  os.write(reinterpret_cast<const char*>(&d), 4);
  os.write(reinterpret_cast<const char*>(&n), 4);
  os.write(reinterpret_cast<const char*>(&L), 8);
  os.write(reinterpret_cast<const char*>(&time), 8);
  os.write(reinterpret_cast<const char*>(f.v.data()),
           static_cast<std::streamsize>(f.v.size() * sizeof(double)));
  if (!os) throw std::runtime_error("write_snapshot: write failed for " + path.string());
}

struct SnapshotData {
  ScalarField field;
  double time = 0.0;
};

inline SnapshotData read_snapshot(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_snapshot: cannot open " + path.string());
  std::array<char, 8> magic{};
  std::uint32_t d = 0, n = 0;
  double L = 0.0, time = 0.0;
  is.read(magic.data(), 8);
  is.read(reinterpret_cast<char*>(&d), 4);
  is.read(reinterpret_cast<char*>(&n), 4);
  is.read(reinterpret_cast<char*>(&L), 8);
  is.read(reinterpret_cast<char*>(&time), 8);
  if (!is || magic != kSnapshotMagic)
    throw std::runtime_error("read_snapshot: bad header in " + path.string());
  if ((d != 2 && d != 3) || n == 0)
    throw std::runtime_error("read_snapshot: bad dimensions in " + path.string());
  SnapshotData out;
  out.field = ScalarField(Grid(static_cast<int>(d), L, static_cast<int>(n)));
  out.time = time;
  is.read(reinterpret_cast<char*>(out.field.v.data()),
          static_cast<std::streamsize>(out.field.v.size() * sizeof(double)));
  if (!is) throw std::runtime_error("read_snapshot: truncated data in " + path.string());
  return out;
}

// shortest round-trippable decimal form used across all CSV output
inline std::string format_g17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline constexpr const char* kDiagnosticsHeader = "t,mass,l1,l2,l2m,linf,min,dt";

inline std::string diagnostics_csv(const std::vector<DiagnosticsRow>& rows) {
  std::string s = kDiagnosticsHeader;
  s += '\n';
  for (const auto& r : rows) {
    s += format_g17(r.t);
    s += ',';
    s += format_g17(r.mass);
    s += ',';
    s += format_g17(r.l1);
    s += ',';
    s += format_g17(r.l2);
    s += ',';
    s += format_g17(r.l2m);
    s += ',';
    s += format_g17(r.linf);
    s += ',';
    s += format_g17(r.min);
    s += ',';
    s += format_g17(r.dt);
    s += '\n';
  }
  return s;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_text_file: cannot open " + path.string());
  os.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!os) throw std::runtime_error("write_text_file: write failed for " + path.string());
}

inline void write_diagnostics_csv(const std::filesystem::path& path,
                                  const std::vector<DiagnosticsRow>& rows) {
  write_text_file(path, diagnostics_csv(rows));
}

inline std::string ensemble_csv(const std::vector<std::array<double, 3>>& positions, int d,
                                double t, std::uint64_t seed) {
  std::string s = "# t=" + format_g17(t) + " seed=" + std::to_string(seed) + "\n";
  s += "id,x1,x2";
  if (d == 3) s += ",x3";
  s += '\n';
  for (std::size_t i = 0; i < positions.size(); ++i) {
    s += std::to_string(i);
    for (int a = 0; a < d; ++a) {
      s += ',';
      s += format_g17(positions[i][a]);
    }
    s += '\n';
  }
  return s;
}

inline void write_ensemble_csv(const std::filesystem::path& path,
                               const std::vector<std::array<double, 3>>& positions, int d,
                               double t, std::uint64_t seed) {
  write_text_file(path, ensemble_csv(positions, d, t, seed));
}

} // namespace kslab
