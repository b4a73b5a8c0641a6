#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lungseg/preprocess.hpp"
#include "lungseg/volume.hpp"

namespace lungseg::slabgen {

/// How slices n-1, n, n+1 map onto the three input channels.
///   Rgb:  (n-1, n, n+1) -> (red, green, blue)
///   Bgr:  (n-1, n, n+1) -> (blue, green, red)
///   Gray: n on all three channels
enum class SlabMode { Rgb, Bgr, Gray };

std::string_view to_string(SlabMode mode);
/// Accepts "rgb", "bgr", "gray" (case-insensitive). InvalidConfig otherwise.
SlabMode parse_slab_mode(std::string_view text);

/// One 2.5-D sample. Channels are stored planar: red plane, green plane, blue plane.
struct Slab {
  std::string scan_id;
  std::size_t center = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> channels;
  std::vector<std::uint8_t> target;

  std::size_t plane_size() const { return height * width; }
};

/// Channels only; OutOfRange when n-1 or n+1 falls outside the stack.
std::vector<float> slab_channels(const preprocess::NormalizedVolume& volume, std::size_t n, SlabMode mode);

Slab make_slab(const preprocess::NormalizedVolume& volume, const BinaryMask& gt, std::size_t n,
               SlabMode mode, std::string scan_id = {});

/// Lazy, random-access view over the slabs of one scan, centers 1..depth-2 in
/// ascending order. Holds shared ownership of immutable inputs, so copies and
/// concurrent reads of disjoint indices are safe.
class SlabSequence {
 public:
  SlabSequence(std::shared_ptr<const preprocess::NormalizedVolume> volume,
               std::shared_ptr<const BinaryMask> gt, SlabMode mode, std::string scan_id = {});

  std::size_t size() const;
  bool empty() const { return size() == 0; }
  Slab operator[](std::size_t i) const;
  SlabMode mode() const { return mode_; }
  const std::string& scan_id() const { return scan_id_; }

  class iterator {
   public:
    using value_type = Slab;
    using difference_type = std::ptrdiff_t;

    iterator() = default;
    iterator(const SlabSequence* seq, std::size_t i) : seq_(seq), i_(i) {}
    Slab operator*() const { return (*seq_)[i_]; }
    iterator& operator++() {
      ++i_;
      return *this;
    }
    iterator operator++(int) {
      auto tmp = *this;
      ++i_;
      return tmp;
    }
    bool operator==(const iterator& o) const { return i_ == o.i_; }

   private:
    const SlabSequence* seq_ = nullptr;
    std::size_t i_ = 0;
  };

  iterator begin() const { return {this, 0}; }
  iterator end() const { return {this, size()}; }

 private:
  std::shared_ptr<const preprocess::NormalizedVolume> volume_;
  std::shared_ptr<const BinaryMask> gt_;
  SlabMode mode_;
  std::string scan_id_;
};

/// GeometryMismatch if the mask grid differs from the volume grid.
SlabSequence iterate_slabs(std::shared_ptr<const preprocess::NormalizedVolume> volume,
                           std::shared_ptr<const BinaryMask> gt, SlabMode mode,
                           std::string scan_id = {});

}  // namespace lungseg::slabgen
