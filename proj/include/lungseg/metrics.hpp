#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lungseg/volume.hpp"

namespace lungseg::metrics {

/// pixel = 1 iff probability >= threshold.
template <typename T>
std::vector<std::uint8_t> binarize(std::span<const T> probs, double threshold);

BinaryMask binarize_volume(const Geometry& geometry, std::span<const float> probs, double threshold);

/// Voxel-count cardinalities |S|, |G| and |S ∩ G|.
struct Overlap {
  std::uint64_t pred = 0;
  std::uint64_t truth = 0;
  std::uint64_t both = 0;

  Overlap& operator+=(const Overlap& o) {
    pred += o.pred;
    truth += o.truth;
    both += o.both;
    return *this;
  }
  bool empty() const { return pred + truth == 0; }
  /// 2|S ∩ G| / (|S| + |G|). BothEmpty when both sets are empty.
  double dice() const;
};

Overlap overlap(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);

/// Dice of two equally shaped binary masks.
double dice(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);

/// Inclusive slice range [first, last].
struct SliceRange {
  std::size_t first = 0;
  std::size_t last = 0;

  std::size_t size() const { return last >= first ? last - first + 1 : 0; }
  /// 1 .. depth-2: the slices the 2.5-D predictor can produce. Empty when depth < 3.
  static SliceRange interior(std::size_t depth);
  static SliceRange all(std::size_t depth);
};

struct SliceDice {
  std::size_t slice = 0;
  double dice = 0.0;
  bool included = false;
  Overlap counts;
};

struct Dice2d {
  double mean = 0.0;
  double std = 0.0;  // population
  std::vector<SliceDice> slices;
};

/// Per-slice Dice over the range; slices where both masks are empty are not
/// included. NoIncludedSlices if nothing remains.
Dice2d dice_2d(const BinaryMask& pred, const BinaryMask& truth, SliceRange range);

/// Dice of the whole voxel sets restricted to the slice range.
double dice_3d(const BinaryMask& pred, const BinaryMask& truth, SliceRange range);

struct ScanDice {
  std::string scan_id;
  std::string group;
  double mean_2d = 0.0;
  double std_2d = 0.0;
  double dice_3d = 0.0;
  std::vector<SliceDice> slices;
};

ScanDice evaluate_scan(const std::string& scan_id, const std::string& group, const BinaryMask& pred,
                       const BinaryMask& truth, SliceRange range);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(std::span<const double> values);

/// One column of the summary table: across-scan statistics for one group.
struct GroupSummary {
  std::string group;
  std::size_t scans = 0;
  MeanStd dice_2d;  // over per-scan 2-D means
  MeanStd dice_3d;  // over per-scan 3-D Dice
};

struct DiceReport {
  std::string title;
  std::vector<ScanDice> scans;
  std::vector<GroupSummary> groups;  // order of first appearance
};

DiceReport aggregate(const std::vector<ScanDice>& scans, std::string title = {});

/// Summary block with one column per group:
///   block,metric,Total (RGB),Total (Gray)
///   <title>,Dice score (2D),...
///   <title>,STD (2D),...
///   <title>,Dice score (3D),...
///   <title>,STD (3D),...
std::string format_summary(const std::vector<DiceReport>& blocks);

/// `scan_id,group,dice_2d_mean,dice_2d_std,dice_3d` rows.
std::string format_per_scan(const DiceReport& report);

/// `scan_id,slice,dice,included` rows over every evaluated slice, optionally
/// restricted to one group.
std::string format_slices(const DiceReport& report, const std::string& group = {});

}  // namespace lungseg::metrics
