#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "lungseg/volume.hpp"

namespace lungseg::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("lungseg-test-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Geometry make_geometry(std::size_t w, std::size_t h, std::size_t d) {
  Geometry g;
  g.dims = {w, h, d};
  g.spacing = {0.78, 0.78, 1.25};
  g.origin = {-200.5, 10.0, -312.25};
  return g;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_text(const std::filesystem::path& path) {
  const auto b = read_bytes(path);
  return {b.begin(), b.end()};
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

/// Random binary mask; density picked per volume so that empty and full slices occur.
inline BinaryMask random_mask(std::mt19937_64& rng, const Geometry& g, double density) {
  std::bernoulli_distribution bit(density);
  std::vector<std::uint8_t> v(g.voxel_count());
  for (auto& x : v) x = bit(rng) ? 1 : 0;
  return BinaryMask(g, std::move(v));
}

/// Voxel-set oracle: masks become coordinate sets and Dice is computed from
/// set sizes in integers.
struct SetDice {
  std::int64_t pred = 0, truth = 0, both = 0;
};

inline SetDice set_dice(const BinaryMask& s, const BinaryMask& g, std::size_t z_first, std::size_t z_last) {
  using Voxel = std::tuple<std::size_t, std::size_t, std::size_t>;
  std::set<Voxel> a, b;
  const auto& geo = s.geometry();
  for (std::size_t z = z_first; z <= z_last; ++z) {
    for (std::size_t y = 0; y < geo.height(); ++y) {
      for (std::size_t x = 0; x < geo.width(); ++x) {
        if (s.at(x, y, z)) a.insert({x, y, z});
        if (g.at(x, y, z)) b.insert({x, y, z});
      }
    }
  }
  SetDice out;
  out.pred = static_cast<std::int64_t>(a.size());
  out.truth = static_cast<std::int64_t>(b.size());
  for (const auto& v : a) out.both += b.count(v);
  return out;
}

/// Synthetic chest: body disc of soft tissue inside -3000 padding, two lung
/// discs (left and right labels) and a small trachea disc. Lung radius grows
/// with z so neighbouring slices differ.
struct SyntheticScan {
  CtVolume ct;
  ByteVolume labels;
};

inline SyntheticScan synthetic_scan(std::size_t size, std::size_t depth, std::uint64_t seed, std::uint8_t left,
                                    std::uint8_t right, std::uint8_t trachea) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 25.0);
  const Geometry g = make_geometry(size, size, depth);
  std::vector<std::int16_t> ct(g.voxel_count());
  std::vector<std::uint8_t> lab(g.voxel_count(), 0);
  const double c = (static_cast<double>(size) - 1) / 2;
  for (std::size_t z = 0; z < depth; ++z) {
    const double r = size * (0.14 + 0.06 * static_cast<double>(z) / std::max<std::size_t>(depth - 1, 1));
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const std::size_t i = (z * size + y) * size + x;
        const double dx = x - c, dy = y - c;
        const double lx = x - c + size * 0.2, rx = x - c - size * 0.2;
        std::int16_t hu = -3000;
        if (dx * dx + dy * dy <= 0.46 * 0.46 * size * size) hu = static_cast<std::int16_t>(40 + noise(rng));
        if (lx * lx + dy * dy <= r * r) {
          hu = static_cast<std::int16_t>(-850 + noise(rng));
          lab[i] = left;
        } else if (rx * rx + dy * dy <= r * r) {
          hu = static_cast<std::int16_t>(-850 + noise(rng));
          lab[i] = right;
        } else if (dx * dx + (y - c + size * 0.3) * (y - c + size * 0.3) <= 2.5 * 2.5) {
          hu = -990;
          lab[i] = trachea;
        }
        ct[i] = hu;
      }
    }
  }
  return {CtVolume(g, std::move(ct)), ByteVolume(g, std::move(lab))};
}

}  // namespace lungseg::testing
