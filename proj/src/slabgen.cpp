#include "lungseg/slabgen.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace lungseg::slabgen {

std::string_view to_string(SlabMode mode) {
  switch (mode) {
    case SlabMode::Rgb: return "rgb";
    case SlabMode::Bgr: return "bgr";
    case SlabMode::Gray: return "gray";
  }
  return "rgb";
}

SlabMode parse_slab_mode(std::string_view text) {
  std::string lower;
  for (char c : text) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "rgb") return SlabMode::Rgb;
  if (lower == "bgr") return SlabMode::Bgr;
  if (lower == "gray" || lower == "grey") return SlabMode::Gray;
  fail(ErrorCode::InvalidConfig, "unknown slab mode '" + std::string(text) + "'");
}

std::vector<float> slab_channels(const preprocess::NormalizedVolume& volume, std::size_t n, SlabMode mode) {
  const std::size_t depth = volume.geometry.depth();
  if (n == 0 || n + 1 >= depth) {
    fail(ErrorCode::OutOfRange, "slab center " + std::to_string(n) + " needs neighbours inside depth " +
                                    std::to_string(depth));
  }
  std::array<std::size_t, 3> source{};
  switch (mode) {
    case SlabMode::Rgb: source = {n - 1, n, n + 1}; break;
    case SlabMode::Bgr: source = {n + 1, n, n - 1}; break;
    case SlabMode::Gray: source = {n, n, n}; break;
  }
  const std::size_t plane = volume.geometry.slice_size();
  std::vector<float> channels(3 * plane);
  for (std::size_t c = 0; c < 3; ++c) {
    auto s = volume.slice(source[c]);
    std::copy(s.begin(), s.end(), channels.begin() + static_cast<std::ptrdiff_t>(c * plane));
  }
  return channels;
}

Slab make_slab(const preprocess::NormalizedVolume& volume, const BinaryMask& gt, std::size_t n,
               SlabMode mode, std::string scan_id) {
  if (!gt.geometry().same_grid(volume.geometry)) {
    fail(ErrorCode::GeometryMismatch, "ground truth grid differs from the CT grid");
  }
  Slab slab;
  slab.channels = slab_channels(volume, n, mode);
  slab.scan_id = std::move(scan_id);
  slab.center = n;
  slab.height = volume.geometry.height();
  slab.width = volume.geometry.width();
  auto t = gt.slice(n);
  slab.target.assign(t.begin(), t.end());
  return slab;
}

SlabSequence::SlabSequence(std::shared_ptr<const preprocess::NormalizedVolume> volume,
                           std::shared_ptr<const BinaryMask> gt, SlabMode mode, std::string scan_id)
    : volume_(std::move(volume)), gt_(std::move(gt)), mode_(mode), scan_id_(std::move(scan_id)) {
  if (!volume_ || !gt_) fail(ErrorCode::EmptyDataset, "slab sequence needs a volume and a mask");
  if (!gt_->geometry().same_grid(volume_->geometry)) {
    fail(ErrorCode::GeometryMismatch, "ground truth grid differs from the CT grid");
  }
}

std::size_t SlabSequence::size() const {
  const std::size_t depth = volume_->geometry.depth();
  return depth >= 2 ? depth - 2 : 0;
}

Slab SlabSequence::operator[](std::size_t i) const {
  if (i >= size()) fail(ErrorCode::OutOfRange, "slab index " + std::to_string(i) + " past end");
  return make_slab(*volume_, *gt_, i + 1, mode_, scan_id_);
}

SlabSequence iterate_slabs(std::shared_ptr<const preprocess::NormalizedVolume> volume,
                           std::shared_ptr<const BinaryMask> gt, SlabMode mode, std::string scan_id) {
  return SlabSequence(std::move(volume), std::move(gt), mode, std::move(scan_id));
}

}  // namespace lungseg::slabgen
