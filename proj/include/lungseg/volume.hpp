#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lungseg/error.hpp"

namespace lungseg {

/// Voxel grid geometry shared by CT, label and mask volumes. Voxels are stored
/// x-fastest, then y, then z (axial slice index).
struct Geometry {
  std::array<std::size_t, 3> dims{1, 1, 1};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::array<double, 3> origin{0.0, 0.0, 0.0};

  std::size_t width() const { return dims[0]; }
  std::size_t height() const { return dims[1]; }
  std::size_t depth() const { return dims[2]; }
  std::size_t slice_size() const { return dims[0] * dims[1]; }
  std::size_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }

  /// Throws InvalidConfig on zero dims or non-positive spacing.
  void validate() const;

  bool same_grid(const Geometry& other) const { return dims == other.dims; }
  bool operator==(const Geometry&) const = default;
};

/// Immutable voxel volume. Derived types narrow the admissible voxel values.
template <typename T>
class Volume {
 public:
  using value_type = T;

  Volume() = default;
  Volume(Geometry geometry, std::vector<T> voxels)
      : geometry_(std::move(geometry)), voxels_(std::move(voxels)) {
    geometry_.validate();
    if (voxels_.size() != geometry_.voxel_count()) {
      fail(ErrorCode::DimMismatch,
           "voxel count " + std::to_string(voxels_.size()) + " does not match dims (" +
               std::to_string(geometry_.voxel_count()) + " expected)");
    }
  }

  const Geometry& geometry() const { return geometry_; }
  std::span<const T> voxels() const { return voxels_; }

  std::span<const T> slice(std::size_t z) const {
    if (z >= geometry_.depth()) {
      fail(ErrorCode::OutOfRange, "slice " + std::to_string(z) + " outside volume");
    }
    return std::span<const T>(voxels_).subspan(z * geometry_.slice_size(), geometry_.slice_size());
  }

  T at(std::size_t x, std::size_t y, std::size_t z) const {
    return voxels_[(z * geometry_.height() + y) * geometry_.width() + x];
  }

  bool operator==(const Volume&) const = default;

 private:
  Geometry geometry_;
  std::vector<T> voxels_;
};

/// Hounsfield-unit CT volume.
using CtVolume = Volume<std::int16_t>;
/// Raw MET_UCHAR volume as read from disk, before any label interpretation.
using ByteVolume = Volume<std::uint8_t>;

/// Which integer in a label volume carries each anatomical role. There are no
/// defaults: the values always come from the run configuration.
struct LabelMap {
  std::uint8_t left_lung = 0;
  std::uint8_t right_lung = 0;
  std::uint8_t trachea = 0;

  /// Lung labels must be nonzero; 0 is background.
  void validate() const;

  bool maps(std::uint8_t value) const {
    return value == left_lung || value == right_lung || value == trachea;
  }
  bool is_lung(std::uint8_t value) const { return value == left_lung || value == right_lung; }
};

class LabelVolume : public ByteVolume {
 public:
  LabelVolume() = default;
  /// In strict mode every nonzero voxel must be one of the mapped labels
  /// (UnmappedLabel otherwise).
  LabelVolume(ByteVolume raw, LabelMap label_map, bool strict);

  const LabelMap& label_map() const { return label_map_; }
  bool strict() const { return strict_; }

 private:
  LabelMap label_map_;
  bool strict_ = false;
};

/// Volume whose voxels are exactly 0 or 1.
class BinaryMask : public ByteVolume {
 public:
  BinaryMask() = default;
  BinaryMask(Geometry geometry, std::vector<std::uint8_t> voxels);

  std::size_t count() const;
};

}  // namespace lungseg
