#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lungseg/nn/network.hpp"
#include "lungseg/slabgen.hpp"
#include "lungseg/train/trainer.hpp"
#include "lungseg/volume.hpp"

namespace lungseg::app {

/// Everything a run needs. Parsed from line-oriented `key = value` text;
/// `#` starts a comment. Recognised keys:
///
///   scans_dir, labels_dir, out_dir, encoder_weights
///   label_left_lung, label_right_lung, label_trachea, strict_labels
///   mode
///   input_height, input_width, width, decoder_channels, freeze_encoder, net_seed
///   lr, batch_size, max_epochs, plateau_factor, plateau_patience, min_delta,
///   min_lr, early_stop_patience, threshold, folds, val_fraction, shuffle_seed
struct RunConfig {
  std::filesystem::path scans_dir;   // <id>.mhd CT volumes
  std::filesystem::path labels_dir;  // <id>.mhd label volumes with the same ids
  std::filesystem::path out_dir = ".";
  std::filesystem::path encoder_weights;  // optional pretrained encoder container
  LabelMap labels;
  bool strict_labels = true;
  slabgen::SlabMode mode = slabgen::SlabMode::Rgb;
  nn::NetworkConfig network;
  train::TrainConfig train;

  bool has_label_map() const { return labels.left_lung != 0 && labels.right_lung != 0; }
};

/// Relative paths are resolved against base_dir. InvalidConfig on unknown or
/// duplicate keys, malformed lines and unparsable values.
RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});

/// Parses the file and checks that every referenced input path exists (IoError).
RunConfig load_config(const std::filesystem::path& path);

void check_paths(const RunConfig& cfg);

/// Canonical `key = value` rendering; parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& cfg);

}  // namespace lungseg::app
