#include "lungseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace lungseg::metrics {

template <typename T>
std::vector<std::uint8_t> binarize(std::span<const T> probs, double threshold) {
  std::vector<std::uint8_t> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = static_cast<double>(probs[i]) >= threshold ? 1 : 0;
  return out;
}

template std::vector<std::uint8_t> binarize(std::span<const float>, double);
template std::vector<std::uint8_t> binarize(std::span<const double>, double);

BinaryMask binarize_volume(const Geometry& geometry, std::span<const float> probs, double threshold) {
  return BinaryMask(geometry, binarize(probs, threshold));
}

double Overlap::dice() const {
  if (empty()) fail(ErrorCode::BothEmpty, "Dice is undefined when both masks are empty");
  return 2.0 * static_cast<double>(both) / static_cast<double>(pred + truth);
}

Overlap overlap(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  if (pred.size() != truth.size()) fail(ErrorCode::ShapeMismatch, "masks differ in size");
  Overlap o;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool s = pred[i] != 0, g = truth[i] != 0;
    o.pred += s;
    o.truth += g;
    o.both += s && g;
  }
  return o;
}

double dice(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  return overlap(pred, truth).dice();
}

SliceRange SliceRange::interior(std::size_t depth) {
  if (depth < 3) return {1, 0};
  return {1, depth - 2};
}

SliceRange SliceRange::all(std::size_t depth) { return {0, depth - 1}; }

namespace {

void check_pair(const BinaryMask& pred, const BinaryMask& truth, SliceRange range) {
  if (!pred.geometry().same_grid(truth.geometry())) {
    fail(ErrorCode::GeometryMismatch, "prediction and ground truth grids differ");
  }
  if (range.size() > 0 && range.last >= pred.geometry().depth()) {
    fail(ErrorCode::OutOfRange, "slice range exceeds the volume depth");
  }
}

}  // namespace

Dice2d dice_2d(const BinaryMask& pred, const BinaryMask& truth, SliceRange range) {
  check_pair(pred, truth, range);
  Dice2d out;
  std::vector<double> values;
  for (std::size_t z = range.first; range.size() > 0 && z <= range.last; ++z) {
    SliceDice s;
    s.slice = z;
    s.counts = overlap(pred.slice(z), truth.slice(z));
    s.included = !s.counts.empty();
    if (s.included) {
      s.dice = s.counts.dice();
      values.push_back(s.dice);
    }
    out.slices.push_back(s);
  }
  if (values.empty()) fail(ErrorCode::NoIncludedSlices, "no slice contains lung in either mask");
  const MeanStd ms = mean_std(values);
  out.mean = ms.mean;
  out.std = ms.std;
  return out;
}

double dice_3d(const BinaryMask& pred, const BinaryMask& truth, SliceRange range) {
  check_pair(pred, truth, range);
  Overlap total;
  for (std::size_t z = range.first; range.size() > 0 && z <= range.last; ++z) {
    total += overlap(pred.slice(z), truth.slice(z));
  }
  return total.dice();
}

ScanDice evaluate_scan(const std::string& scan_id, const std::string& group, const BinaryMask& pred,
                       const BinaryMask& truth, SliceRange range) {
  Dice2d d2 = dice_2d(pred, truth, range);
  ScanDice s;
  s.scan_id = scan_id;
  s.group = group;
  s.mean_2d = d2.mean;
  s.std_2d = d2.std;
  s.dice_3d = dice_3d(pred, truth, range);
  s.slices = std::move(d2.slices);
  return s;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(sq / static_cast<double>(values.size()));
  return out;
}

DiceReport aggregate(const std::vector<ScanDice>& scans, std::string title) {
  DiceReport report;
  report.title = std::move(title);
  report.scans = scans;
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> values;
  for (const auto& s : scans) {
    if (!values.count(s.group)) order.push_back(s.group);
    values[s.group].first.push_back(s.mean_2d);
    values[s.group].second.push_back(s.dice_3d);
  }
  for (const auto& g : order) {
    GroupSummary sum;
    sum.group = g;
    sum.scans = values[g].first.size();
    sum.dice_2d = mean_std(values[g].first);
    sum.dice_3d = mean_std(values[g].second);
    report.groups.push_back(sum);
  }
  return report;
}

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string group_label(const std::string& group) {
  if (group == "rgb") return "Total (RGB)";
  if (group == "bgr") return "Total (BGR)";
  if (group == "gray") return "Total (Gray)";
  return "Total (" + group + ")";
}

}  // namespace

std::string format_summary(const std::vector<DiceReport>& blocks) {
  std::vector<std::string> columns;
  for (const auto& b : blocks) {
    for (const auto& g : b.groups) {
      if (std::find(columns.begin(), columns.end(), g.group) == columns.end()) columns.push_back(g.group);
    }
  }
  std::string out = "# evaluated slices: interior range 1..depth-2\nblock,metric";
  for (const auto& c : columns) out += "," + group_label(c);
  out += '\n';
  for (const auto& b : blocks) {
    auto row = [&](const char* metric, auto pick) {
      out += b.title + "," + metric;
      for (const auto& c : columns) {
        auto it = std::find_if(b.groups.begin(), b.groups.end(), [&](const GroupSummary& g) { return g.group == c; });
        out += ",";
        if (it != b.groups.end()) out += fixed(pick(*it));
      }
      out += '\n';
    };
    row("Dice score (2D)", [](const GroupSummary& g) { return g.dice_2d.mean; });
    row("STD (2D)", [](const GroupSummary& g) { return g.dice_2d.std; });
    row("Dice score (3D)", [](const GroupSummary& g) { return g.dice_3d.mean; });
    row("STD (3D)", [](const GroupSummary& g) { return g.dice_3d.std; });
  }
  return out;
}

std::string format_per_scan(const DiceReport& report) {
  std::string out = "scan_id,group,dice_2d_mean,dice_2d_std,dice_3d\n";
  for (const auto& s : report.scans) {
    out += s.scan_id + "," + s.group + "," + fixed(s.mean_2d) + "," + fixed(s.std_2d) + "," + fixed(s.dice_3d) + "\n";
  }
  return out;
}

std::string format_slices(const DiceReport& report, const std::string& group) {
  std::string out = "scan_id,slice,dice,included\n";
  for (const auto& s : report.scans) {
    if (!group.empty() && s.group != group) continue;
    for (const auto& sl : s.slices) {
      out += s.scan_id + "," + std::to_string(sl.slice) + "," + fixed(sl.dice) + "," + (sl.included ? "1" : "0") +
             "\n";
    }
  }
  return out;
}

}  // namespace lungseg::metrics
