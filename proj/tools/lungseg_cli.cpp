#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lungseg/app/commands.hpp"
#include "lungseg/volume_io.hpp"

namespace fs = std::filesystem;
using namespace lungseg;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> mode;
  std::optional<double> threshold;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::size_t jobs = 1;
};

void add_common(CLI::App* cmd, Overrides& o, bool config_required) {
  auto* c = cmd->add_option("--config", o.config, "run configuration (key = value)");
  if (config_required) c->required();
  cmd->add_option("--mode", o.mode, "slab mode")->check(CLI::IsMember({"rgb", "bgr", "gray"}, CLI::ignore_case));
  cmd->add_option("--threshold", o.threshold, "binarization threshold (default 0.5)")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--seed", o.seed, "seed for initialization and shuffling");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--jobs", o.jobs, "scans processed concurrently")->check(CLI::PositiveNumber);
}

app::RunConfig resolve(const Overrides& o) {
  app::RunConfig cfg = o.config.empty() ? app::RunConfig{} : app::load_config(o.config);
  if (o.mode) cfg.mode = slabgen::parse_slab_mode(*o.mode);
  if (o.threshold) cfg.train.threshold = *o.threshold;
  if (o.seed) {
    cfg.network.seed = *o.seed;
    cfg.train.shuffle_seed = *o.seed;
  }
  if (o.out) cfg.out_dir = *o.out;
  return cfg;
}

void print_epoch(const train::EpochRecord& r) {
  std::printf("epoch %zu train_loss %.6f val_loss %.6f lr %g\n", r.epoch, r.train_loss, r.val_loss, r.lr);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"2.5-D lung segmentation of CT volumes"};
  cli.require_subcommand(1);
  Overrides o;

  auto* preprocess_cmd = cli.add_subcommand("preprocess", "write windowed scans and binary lung targets");
  add_common(preprocess_cmd, o, true);

  auto* train_cmd = cli.add_subcommand("train", "fit a network on every configured scan");
  add_common(train_cmd, o, true);

  auto* crossval_cmd = cli.add_subcommand("crossval", "k-fold cross-validation");
  add_common(crossval_cmd, o, true);

  std::vector<std::string> scans;
  std::string weights;
  auto* predict_cmd = cli.add_subcommand("predict", "segment CT scans with trained weights");
  add_common(predict_cmd, o, true);
  predict_cmd->add_option("--weights", weights, "weight container")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("scans", scans, "CT .mhd files")->required()->check(CLI::ExistingFile);

  std::vector<std::string> preds, truths;
  auto* evaluate_cmd = cli.add_subcommand("evaluate", "Dice scores of prediction sets against truth sets");
  add_common(evaluate_cmd, o, false);
  evaluate_cmd->add_option("--pred", preds, "name=dir of predicted masks (repeatable)")->required();
  evaluate_cmd->add_option("--gt", truths, "name=dir of ground truth (repeatable)")->required();

  std::string scan, pred, truth, image;
  std::size_t slice = 0;
  auto* overlay_cmd = cli.add_subcommand("overlay", "render TP/FP/FN colours on one slice as PPM");
  add_common(overlay_cmd, o, false);
  overlay_cmd->add_option("--scan", scan, "CT .mhd")->required()->check(CLI::ExistingFile);
  overlay_cmd->add_option("--pred", pred, "predicted mask .mhd")->required()->check(CLI::ExistingFile);
  overlay_cmd->add_option("--gt", truth, "ground truth .mhd")->required()->check(CLI::ExistingFile);
  overlay_cmd->add_option("--slice", slice, "axial slice index")->required();
  overlay_cmd->add_option("--image", image, "output .ppm (default <out>/<scan>_<slice>.ppm)");

  std::string info_path;
  auto* info_cmd = cli.add_subcommand("info", "describe a MetaImage, weight container or config");
  info_cmd->add_option("path", info_path)->required()->check(CLI::ExistingFile);

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: InvalidArguments: " << e.what() << "\n";
    return 2;
  }

  try {
    if (preprocess_cmd->parsed()) {
      const auto cfg = resolve(o);
      std::cout << "preprocessed " << app::cmd_preprocess(cfg, o.jobs) << " scans into "
                << (cfg.out_dir / "preprocessed").string() << "\n";
    } else if (train_cmd->parsed()) {
      const auto cfg = resolve(o);
      const auto r = app::cmd_train(cfg, o.jobs, print_epoch);
      std::cout << "stop " << train::to_string(r.history.stop) << " best_epoch " << r.history.best_epoch << "\n"
                << "weights " << r.weights.string() << "\nhistory " << r.history_file.string() << "\n";
    } else if (crossval_cmd->parsed()) {
      const auto cfg = resolve(o);
      const auto folds = app::cmd_crossval(cfg, o.jobs, [](std::size_t fold, const train::EpochRecord& r) {
        std::printf("fold %zu ", fold);
        print_epoch(r);
      });
      for (const auto& f : folds) {
        const auto& g = f.report.groups.front();
        std::printf("fold %zu scans %zu dice_2d %.6f dice_3d %.6f\n", f.fold, g.scans, g.dice_2d.mean, g.dice_3d.mean);
      }
      std::cout << "summary " << (cfg.out_dir / "crossval_summary.csv").string() << "\n";
    } else if (predict_cmd->parsed()) {
      const auto cfg = resolve(o);
      const auto net = app::load_network(cfg, weights);
      app::parallel_for(scans.size(), o.jobs, [&](std::size_t i) {
        const fs::path path(scans[i]);
        const auto image = preprocess::normalize(preprocess::window(io::read_ct(path)));
        const auto mask = app::predict_volume(net, image, cfg.mode, cfg.train.threshold, cfg.train.batch_size);
        app::write_prediction(mask, cfg.out_dir, path.stem().string(), cfg.mode, cfg.train.threshold);
      });
      std::cout << "predicted " << scans.size() << " scans into " << cfg.out_dir.string() << "\n";
    } else if (evaluate_cmd->parsed()) {
      const auto cfg = resolve(o);
      std::vector<app::NamedDir> p, g;
      for (const auto& s : preds) p.push_back(app::NamedDir::parse(s));
      for (const auto& s : truths) g.push_back(app::NamedDir::parse(s));
      const auto reports = app::cmd_evaluate(p, g, app::label_map_of(cfg), cfg.strict_labels, cfg.out_dir, o.jobs);
      std::cout << metrics::format_summary(reports);
    } else if (overlay_cmd->parsed()) {
      const auto cfg = resolve(o);
      const fs::path target =
          image.empty() ? cfg.out_dir / (fs::path(scan).stem().string() + "_" + std::to_string(slice) + ".ppm")
                        : fs::path(image);
      const auto img = app::cmd_overlay(scan, pred, truth, slice, app::label_map_of(cfg), cfg.strict_labels, target);
      const auto counts = app::count_classes(img);
      std::cout << "tp " << counts.true_positive << " fp " << counts.false_positive << " fn " << counts.false_negative
                << "\nimage " << target.string() << "\n";
    } else if (info_cmd->parsed()) {
      std::cout << app::cmd_info(info_path);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
