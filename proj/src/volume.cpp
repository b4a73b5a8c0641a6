#include "lungseg/volume.hpp"

#include <algorithm>

namespace lungseg {

void Geometry::validate() const {
  for (std::size_t d : dims) {
    if (d == 0) fail(ErrorCode::InvalidConfig, "volume dimensions must be positive");
  }
  for (double s : spacing) {
    if (!(s > 0.0)) fail(ErrorCode::InvalidConfig, "voxel spacing must be strictly positive");
  }
}

void LabelMap::validate() const {
  if (left_lung == 0 || right_lung == 0) {
    fail(ErrorCode::InvalidConfig, "label map: lung labels must be nonzero");
  }
  if (left_lung == right_lung || left_lung == trachea || right_lung == trachea) {
    fail(ErrorCode::InvalidConfig, "label map: labels must be distinct");
  }
}

LabelVolume::LabelVolume(ByteVolume raw, LabelMap label_map, bool strict)
    : ByteVolume(std::move(raw)), label_map_(label_map), strict_(strict) {
  label_map_.validate();
  if (!strict_) return;
  for (std::uint8_t v : voxels()) {
    if (v != 0 && !label_map_.maps(v)) {
      fail(ErrorCode::UnmappedLabel, "label value " + std::to_string(v) + " is not in the label map");
    }
  }
}

BinaryMask::BinaryMask(Geometry geometry, std::vector<std::uint8_t> voxels)
    : ByteVolume(std::move(geometry), std::move(voxels)) {
  auto vs = this->voxels();
  if (std::any_of(vs.begin(), vs.end(), [](std::uint8_t v) { return v > 1; })) {
    fail(ErrorCode::UnsupportedType, "binary mask voxels must be 0 or 1");
  }
}

std::size_t BinaryMask::count() const {
  auto vs = voxels();
  return static_cast<std::size_t>(std::count(vs.begin(), vs.end(), std::uint8_t{1}));
}

}  // namespace lungseg
