#include "lungseg/app/commands.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <variant>

#include "lungseg/nn/weights.hpp"
#include "lungseg/volume_io.hpp"

namespace lungseg::app {

namespace fs = std::filesystem;

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex guard;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(guard);
        if (!first) first = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

std::vector<std::string> list_scans(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCode::IoError, "not a directory: " + dir.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".mhd") ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

BinaryMask load_truth(const fs::path& path, const std::optional<LabelMap>& map, bool strict) {
  if (map) return io::to_binary_lung(io::read_labels(path, *map, strict));
  auto vol = io::read_mhd(path);
  auto* bytes = std::get_if<ByteVolume>(&vol);
  if (!bytes) fail(ErrorCode::UnsupportedType, path.string() + " is not a MET_UCHAR mask");
  return BinaryMask(bytes->geometry(), std::vector<std::uint8_t>(bytes->voxels().begin(), bytes->voxels().end()));
}

std::optional<LabelMap> label_map_of(const RunConfig& cfg) {
  if (!cfg.has_label_map()) return std::nullopt;
  return cfg.labels;
}

namespace {

fs::path scan_path(const fs::path& dir, const std::string& id) { return dir / (id + ".mhd"); }

void require_dir(const fs::path& dir, const char* key) {
  if (dir.empty()) fail(ErrorCode::InvalidConfig, std::string(key) + " is required for this command");
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::IoError, "short write to " + path.string());
}

void check_input_size(const Geometry& g, const nn::NetworkConfig& net) {
  if (g.height() != net.input_height || g.width() != net.input_width) {
    fail(ErrorCode::GeometryMismatch, "slices are " + std::to_string(g.height()) + "x" + std::to_string(g.width()) +
                                          " but the network expects " + std::to_string(net.input_height) + "x" +
                                          std::to_string(net.input_width));
  }
}

std::vector<LoadedScan> load_scans(const RunConfig& cfg, const std::vector<std::string>& ids, bool with_truth,
                                   std::size_t jobs) {
  std::vector<LoadedScan> out(ids.size());
  parallel_for(ids.size(), jobs, [&](std::size_t i) { out[i] = load_scan(cfg, ids[i], with_truth); });
  return out;
}

train::SlabDataset dataset_of(const std::vector<LoadedScan>& scans, const std::set<std::string>& ids,
                              slabgen::SlabMode mode) {
  train::SlabDataset data;
  for (const auto& s : scans) {
    if (ids.count(s.id)) data.add(slabgen::iterate_slabs(s.image, s.truth, mode, s.id));
  }
  return data;
}

}  // namespace

LoadedScan load_scan(const RunConfig& cfg, const std::string& id, bool with_truth) {
  require_dir(cfg.scans_dir, "scans_dir");
  LoadedScan scan;
  scan.id = id;
  auto windowed = std::make_shared<preprocess::WindowedVolume>(preprocess::window(io::read_ct(scan_path(cfg.scans_dir, id))));
  scan.image = std::make_shared<preprocess::NormalizedVolume>(preprocess::normalize(*windowed));
  scan.windowed = std::move(windowed);
  if (with_truth) {
    require_dir(cfg.labels_dir, "labels_dir");
    auto truth = std::make_shared<BinaryMask>(
        load_truth(scan_path(cfg.labels_dir, id), label_map_of(cfg), cfg.strict_labels));
    if (!truth->geometry().same_grid(scan.image->geometry)) {
      fail(ErrorCode::GeometryMismatch, "labels of " + id + " do not match the scan grid");
    }
    scan.truth = std::move(truth);
  }
  return scan;
}

std::size_t cmd_preprocess(const RunConfig& cfg, std::size_t jobs) {
  require_dir(cfg.scans_dir, "scans_dir");
  const auto ids = list_scans(cfg.scans_dir);
  const bool with_truth = !cfg.labels_dir.empty();
  const fs::path dir = cfg.out_dir / "preprocessed";
  make_dirs(dir);
  parallel_for(ids.size(), jobs, [&](std::size_t i) {
    const LoadedScan s = load_scan(cfg, ids[i], with_truth);
    io::write_mhd(*s.windowed, scan_path(dir, s.id));
    if (s.truth) io::write_mhd(*s.truth, dir / (s.id + "_lung.mhd"));
  });
  return ids.size();
}

TrainResult train_on(const RunConfig& cfg, const std::vector<std::string>& ids, const fs::path& out_dir,
                     std::size_t jobs, const train::EpochCallback& on_epoch) {
  if (ids.empty()) fail(ErrorCode::EmptyDataset, "no scans to train on");
  const auto split = train::split_validation(ids, cfg.train.val_fraction, cfg.train.shuffle_seed);
  TrainResult result;
  result.train_ids = split.train;
  result.val_ids = split.val.empty() ? split.train : split.val;

  const auto scans = load_scans(cfg, ids, true, jobs);
  for (const auto& s : scans) check_input_size(s.image->geometry, cfg.network);
  const auto train_set = dataset_of(scans, {result.train_ids.begin(), result.train_ids.end()}, cfg.mode);
  const auto val_set = dataset_of(scans, {result.val_ids.begin(), result.val_ids.end()}, cfg.mode);
  if (train_set.empty() || val_set.empty()) fail(ErrorCode::EmptyDataset, "scans need at least three slices");

  auto net = nn::build_network<float>(cfg.network);
  if (!cfg.encoder_weights.empty()) {
    nn::load_into(net.parameters(), nn::read_container(cfg.encoder_weights), false);
  }
  result.history = train::fit(net, train_set, val_set, cfg.train, on_epoch);

  make_dirs(out_dir);
  result.weights = out_dir / "weights.lsw";
  result.history_file = out_dir / "history.csv";
  nn::save_weights(net, result.weights);
  train::write_history(result.history, result.history_file);
  return result;
}

TrainResult cmd_train(const RunConfig& cfg, std::size_t jobs, const train::EpochCallback& on_epoch) {
  require_dir(cfg.scans_dir, "scans_dir");
  return train_on(cfg, list_scans(cfg.scans_dir), cfg.out_dir, jobs, on_epoch);
}

BinaryMask predict_volume(const nn::Network<float>& net, const preprocess::NormalizedVolume& image,
                          slabgen::SlabMode mode, double threshold, std::size_t batch_size) {
  const Geometry& g = image.geometry;
  check_input_size(g, net.config());
  const std::size_t depth = g.depth(), plane = g.slice_size();
  std::vector<std::uint8_t> mask(g.voxel_count(), 0);
  const std::size_t batch = std::max<std::size_t>(batch_size, 1);
  for (std::size_t first = 1; first + 1 < depth; first += batch) {
    const std::size_t last = std::min(first + batch, depth - 1);  // exclusive
    nn::Tensor<float> x({last - first, 3, g.height(), g.width()});
    for (std::size_t n = first; n < last; ++n) {
      const auto channels = slabgen::slab_channels(image, n, mode);
      std::copy(channels.begin(), channels.end(), x.data() + (n - first) * 3 * plane);
    }
    const auto probs = net.forward(x);
    const auto bits = metrics::binarize(std::span<const float>(probs.data(), probs.size()), threshold);
    std::copy(bits.begin(), bits.end(), mask.begin() + static_cast<std::ptrdiff_t>(first * plane));
  }
  return BinaryMask(g, std::move(mask));
}

nn::Network<float> load_network(const RunConfig& cfg, const fs::path& weights) {
  auto net = nn::build_network<float>(cfg.network);
  try {
    nn::load_weights(net, weights, true);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError) throw;
    fail(ErrorCode::BadWeights, weights.string() + " does not fit the configured network: " + e.what());
  }
  return net;
}

void write_prediction(const BinaryMask& mask, const fs::path& out_dir, const std::string& id, slabgen::SlabMode mode,
                      double threshold) {
  make_dirs(out_dir);
  io::write_mhd(mask, scan_path(out_dir, id));
  const std::size_t depth = mask.geometry().depth();
  std::ostringstream note;
  note << "scan = " << id << "\n";
  note << "mode = " << slabgen::to_string(mode) << "\n";
  note << "threshold = " << threshold << "\n";
  note << "predicted_slices = ";
  if (depth >= 3) note << "1.." << depth - 2;
  note << "\nunpredicted_slices = ";
  if (depth >= 2) {
    note << "0," << depth - 1;
  } else if (depth == 1) {
    note << "0";
  }
  note << "\nunpredicted_fill = 0\n";
  write_text(out_dir / (id + ".predict.txt"), note.str());
}

BinaryMask cmd_predict(const RunConfig& cfg, const fs::path& scan, const fs::path& weights, const fs::path& out_dir) {
  const auto net = load_network(cfg, weights);
  const auto image = preprocess::normalize(preprocess::window(io::read_ct(scan)));
  BinaryMask mask = predict_volume(net, image, cfg.mode, cfg.train.threshold, cfg.train.batch_size);
  write_prediction(mask, out_dir, scan.stem().string(), cfg.mode, cfg.train.threshold);
  return mask;
}

NamedDir NamedDir::parse(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) {
    fs::path dir(text);
    std::string name = dir.filename().string();
    if (name.empty()) name = dir.parent_path().filename().string();
    return {name, dir};
  }
  if (eq == 0 || eq + 1 == text.size()) fail(ErrorCode::InvalidConfig, "expected name=dir, got '" + text + "'");
  return {text.substr(0, eq), fs::path(text.substr(eq + 1))};
}

std::vector<metrics::DiceReport> cmd_evaluate(const std::vector<NamedDir>& predictions,
                                              const std::vector<NamedDir>& truths,
                                              const std::optional<LabelMap>& map, bool strict,
                                              const fs::path& out_dir, std::size_t jobs) {
  if (predictions.empty() || truths.empty()) fail(ErrorCode::MissingPair, "need prediction and truth directories");

  struct Task {
    std::size_t truth, pred;
    std::string id;
  };
  std::vector<Task> tasks;
  for (std::size_t t = 0; t < truths.size(); ++t) {
    const auto gt_ids = list_scans(truths[t].dir);
    for (std::size_t p = 0; p < predictions.size(); ++p) {
      const auto pred_ids = list_scans(predictions[p].dir);
      std::vector<std::string> only_one;
      std::set_symmetric_difference(gt_ids.begin(), gt_ids.end(), pred_ids.begin(), pred_ids.end(),
                                    std::back_inserter(only_one));
      if (!only_one.empty()) {
        fail(ErrorCode::MissingPair, "scan " + only_one.front() + " is missing from " + predictions[p].name + " or " +
                                         truths[t].name);
      }
      for (const auto& id : gt_ids) tasks.push_back({t, p, id});
    }
  }

  std::vector<metrics::ScanDice> results(tasks.size());
  parallel_for(tasks.size(), jobs, [&](std::size_t i) {
    const Task& task = tasks[i];
    const BinaryMask truth = load_truth(scan_path(truths[task.truth].dir, task.id), map, strict);
    const BinaryMask pred = load_truth(scan_path(predictions[task.pred].dir, task.id), std::nullopt, true);
    results[i] = metrics::evaluate_scan(task.id, predictions[task.pred].name, pred, truth,
                                        metrics::SliceRange::interior(truth.geometry().depth()));
  });

  std::vector<metrics::DiceReport> reports;
  for (std::size_t t = 0; t < truths.size(); ++t) {
    std::vector<metrics::ScanDice> block;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (tasks[i].truth == t) block.push_back(results[i]);
    }
    reports.push_back(metrics::aggregate(block, truths[t].name));
  }

  make_dirs(out_dir);
  write_text(out_dir / "summary.csv", metrics::format_summary(reports));
  for (const auto& r : reports) {
    write_text(out_dir / ("per_scan_" + r.title + ".csv"), metrics::format_per_scan(r));
    write_text(out_dir / ("slices_" + r.title + ".csv"), metrics::format_slices(r));
  }
  return reports;
}

std::vector<FoldResult> cmd_crossval(const RunConfig& cfg, std::size_t jobs,
                                     const std::function<void(std::size_t, const train::EpochRecord&)>& on_epoch) {
  require_dir(cfg.scans_dir, "scans_dir");
  require_dir(cfg.labels_dir, "labels_dir");
  const auto ids = list_scans(cfg.scans_dir);
  if (ids.empty()) fail(ErrorCode::EmptyDataset, "no scans in " + cfg.scans_dir.string());
  const auto folds = train::kfold_split(ids, cfg.train.folds, cfg.train.shuffle_seed);
  const std::string group(slabgen::to_string(cfg.mode));

  std::vector<FoldResult> out;
  std::vector<metrics::ScanDice> pooled;
  for (std::size_t k = 0; k < folds.size(); ++k) {
    FoldResult fold;
    fold.fold = k + 1;
    fold.test_ids = folds[k];
    const fs::path dir = cfg.out_dir / ("fold_" + std::to_string(fold.fold));

    std::vector<std::string> train_ids;
    for (std::size_t j = 0; j < folds.size(); ++j) {
      if (j != k) train_ids.insert(train_ids.end(), folds[j].begin(), folds[j].end());
    }
    if (train_ids.empty()) train_ids = fold.test_ids;
    std::sort(train_ids.begin(), train_ids.end());
    fold.training = train_on(cfg, train_ids, dir, jobs, [&](const train::EpochRecord& r) {
      if (on_epoch) on_epoch(fold.fold, r);
    });

    const auto net = load_network(cfg, fold.training.weights);
    const auto scans = load_scans(cfg, fold.test_ids, true, jobs);
    std::vector<metrics::ScanDice> scores(scans.size());
    parallel_for(scans.size(), jobs, [&](std::size_t i) {
      const auto& s = scans[i];
      const BinaryMask pred = predict_volume(net, *s.image, cfg.mode, cfg.train.threshold, cfg.train.batch_size);
      write_prediction(pred, dir / "pred", s.id, cfg.mode, cfg.train.threshold);
      scores[i] = metrics::evaluate_scan(s.id, group, pred, *s.truth,
                                         metrics::SliceRange::interior(s.image->geometry.depth()));
    });
    fold.report = metrics::aggregate(scores, "fold_" + std::to_string(fold.fold));
    write_text(dir / "report.csv", metrics::format_summary({fold.report}));
    write_text(dir / "per_scan.csv", metrics::format_per_scan(fold.report));
    write_text(dir / "slices.csv", metrics::format_slices(fold.report));
    pooled.insert(pooled.end(), scores.begin(), scores.end());
    out.push_back(std::move(fold));
  }

  const auto total = metrics::aggregate(pooled, "pooled");
  std::vector<metrics::DiceReport> blocks;
  for (const auto& f : out) blocks.push_back(f.report);
  blocks.push_back(total);
  write_text(cfg.out_dir / "crossval_summary.csv", metrics::format_summary(blocks));
  write_text(cfg.out_dir / "crossval_per_scan.csv", metrics::format_per_scan(total));
  return out;
}

OverlayImage cmd_overlay(const fs::path& scan, const fs::path& pred, const fs::path& truth, std::size_t slice,
                         const std::optional<LabelMap>& map, bool strict, const fs::path& out) {
  const auto windowed = preprocess::window(io::read_ct(scan));
  const BinaryMask p = load_truth(pred, std::nullopt, true);
  const BinaryMask g = load_truth(truth, map, strict);
  const Geometry& geo = windowed.geometry();
  if (!p.geometry().same_grid(geo) || !g.geometry().same_grid(geo)) {
    fail(ErrorCode::GeometryMismatch, "scan, prediction and truth grids differ");
  }
  OverlayImage img = render_overlay(windowed.slice(slice), p.slice(slice), g.slice(slice), geo.height(), geo.width());
  if (out.has_parent_path()) make_dirs(out.parent_path());
  write_ppm(img, out);
  return img;
}

std::string cmd_info(const fs::path& path) {
  std::ostringstream out;
  if (path.extension() == ".mhd") {
    for (const auto& [k, v] : io::parse_mhd_header(path)) out << k << " = " << v << "\n";
    const auto vol = io::read_mhd(path);
    std::visit(
        [&](const auto& v) {
          const auto vox = v.voxels();
          const auto [lo, hi] = std::minmax_element(vox.begin(), vox.end());
          out << "voxels = " << vox.size() << "\n";
          if (!vox.empty()) out << "range = " << +*lo << ".." << +*hi << "\n";
        },
        vol);
    return out.str();
  }

  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot read " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::string_view(magic, 4) == std::string_view(nn::kWeightMagic, 4)) {
    const auto container = nn::read_container(path);
    std::size_t values = 0;
    for (const auto& r : container.records) values += r.values.size();
    out << "format = LSW1\n";
    out << "records = " << container.records.size() << "\n";
    out << "values = " << values << "\n";
    for (const auto& r : container.records) out << r.name << " " << nn::format_dims(r.dims) << "\n";
    return out.str();
  }
  return format_config(load_config(path));
}

}  // namespace lungseg::app
