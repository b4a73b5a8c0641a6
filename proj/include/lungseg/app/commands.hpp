#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lungseg/app/config.hpp"
#include "lungseg/app/overlay.hpp"
#include "lungseg/metrics.hpp"
#include "lungseg/preprocess.hpp"

namespace lungseg::app {

/// Runs fn(0..n-1) on up to `jobs` threads (0 means 1). The first exception
/// thrown by any call is rethrown after all threads finish.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

/// Sorted stems of the `.mhd` files in dir.
std::vector<std::string> list_scans(const std::filesystem::path& dir);

/// Ground truth from disk: through the label map when one is given, otherwise
/// the volume must already be binary.
BinaryMask load_truth(const std::filesystem::path& path, const std::optional<LabelMap>& map, bool strict);

std::optional<LabelMap> label_map_of(const RunConfig& cfg);

struct LoadedScan {
  std::string id;
  std::shared_ptr<const preprocess::WindowedVolume> windowed;
  std::shared_ptr<const preprocess::NormalizedVolume> image;
  std::shared_ptr<const BinaryMask> truth;  // null when loaded without labels
};

/// Reads `<scans_dir>/<id>.mhd` (and `<labels_dir>/<id>.mhd` when with_truth)
/// and runs the calibrate, clip and normalize chain.
LoadedScan load_scan(const RunConfig& cfg, const std::string& id, bool with_truth);

/// Writes `<out>/preprocessed/<id>.mhd` (windowed HU) and, when labels are
/// configured, `<id>_lung.mhd` (binary target). Returns the number of scans.
std::size_t cmd_preprocess(const RunConfig& cfg, std::size_t jobs);

struct TrainResult {
  train::TrainHistory history;
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;  // equals train_ids when fewer than two scans are available
  std::filesystem::path weights;
  std::filesystem::path history_file;
};

/// Splits ids per scan, fits a fresh network and writes `weights.lsw` and
/// `history.csv` into out_dir. EmptyDataset when no scan yields a slab.
TrainResult train_on(const RunConfig& cfg, const std::vector<std::string>& ids, const std::filesystem::path& out_dir,
                     std::size_t jobs, const train::EpochCallback& on_epoch = {});

TrainResult cmd_train(const RunConfig& cfg, std::size_t jobs, const train::EpochCallback& on_epoch = {});

/// Forward pass over every slab of the volume; edge slices 0 and depth-1 stay 0.
/// GeometryMismatch when the slice size differs from the network input size.
BinaryMask predict_volume(const nn::Network<float>& net, const preprocess::NormalizedVolume& image,
                          slabgen::SlabMode mode, double threshold, std::size_t batch_size);

/// Network described by cfg with the container at path loaded strictly.
/// BadWeights when the container does not fit the network.
nn::Network<float> load_network(const RunConfig& cfg, const std::filesystem::path& weights);

/// Writes `<out_dir>/<id>.mhd` and the `<id>.predict.txt` sidecar.
void write_prediction(const BinaryMask& mask, const std::filesystem::path& out_dir, const std::string& id,
                      slabgen::SlabMode mode, double threshold);

/// Predicts one CT scan and writes the mask and sidecar into out_dir.
BinaryMask cmd_predict(const RunConfig& cfg, const std::filesystem::path& scan,
                       const std::filesystem::path& weights, const std::filesystem::path& out_dir);

/// `name=dir` pairs; the name titles a report block (truth) or a column (predictions).
struct NamedDir {
  std::string name;
  std::filesystem::path dir;

  /// "name=dir", or a bare dir named after its last component.
  static NamedDir parse(const std::string& text);
};

/// One report block per truth set, one group per prediction set. Every scan id
/// must be present on both sides (MissingPair). Writes `summary.csv`, and per
/// truth set `per_scan_<name>.csv` and `slices_<name>.csv`.
std::vector<metrics::DiceReport> cmd_evaluate(const std::vector<NamedDir>& predictions,
                                              const std::vector<NamedDir>& truths,
                                              const std::optional<LabelMap>& map, bool strict,
                                              const std::filesystem::path& out_dir, std::size_t jobs);

struct FoldResult {
  std::size_t fold = 0;  // 1-based
  std::vector<std::string> test_ids;
  TrainResult training;
  metrics::DiceReport report;
};

/// k-fold cross-validation over every scan with ground truth. Each fold lives
/// in `<out>/fold_<k>/`; pooled results go to `crossval_summary.csv` and
/// `crossval_per_scan.csv`.
std::vector<FoldResult> cmd_crossval(const RunConfig& cfg, std::size_t jobs,
                                     const std::function<void(std::size_t fold, const train::EpochRecord&)>& on_epoch = {});

/// Renders one axial slice of scan against pred and truth and writes it as PPM.
OverlayImage cmd_overlay(const std::filesystem::path& scan, const std::filesystem::path& pred,
                         const std::filesystem::path& truth, std::size_t slice, const std::optional<LabelMap>& map,
                         bool strict, const std::filesystem::path& out);

/// Human-readable description of a MetaImage header, weight container or config file.
std::string cmd_info(const std::filesystem::path& path);

}  // namespace lungseg::app
