#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lungseg/nn/network.hpp"
#include "lungseg/slabgen.hpp"
#include "lungseg/train/loss.hpp"
#include "lungseg/train/optim.hpp"

namespace lungseg::train {

struct TrainConfig {
  double initial_lr = 0.001;
  std::size_t batch_size = 2;
  std::size_t max_epochs = 50;
  PlateauConfig plateau;
  std::size_t early_stop_patience = 5;
  double threshold = 0.5;
  std::size_t folds = 10;
  double val_fraction = 0.1;
  std::uint64_t shuffle_seed = 0;

  void validate() const;
};

enum class StopReason { MaxEpochs, EarlyStop };

std::string_view to_string(StopReason reason);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  StopReason stop = StopReason::MaxEpochs;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
};

/// Concatenation of per-scan slab sequences with flat random access.
class SlabDataset {
 public:
  SlabDataset() = default;
  void add(slabgen::SlabSequence seq);

  std::size_t size() const { return total_; }
  bool empty() const { return total_ == 0; }
  slabgen::Slab operator[](std::size_t i) const;
  const std::vector<slabgen::SlabSequence>& scans() const { return scans_; }

 private:
  std::vector<slabgen::SlabSequence> scans_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

/// Packs slabs into a (B, 3, H, W) batch and the matching B*H*W target vector.
template <typename T>
nn::Tensor<T> make_batch(const std::vector<slabgen::Slab>& slabs, std::vector<std::uint8_t>* targets = nullptr);

/// Mean BCE over a dataset in inference mode.
template <typename T>
double evaluate_loss(const nn::Network<T>& net, const SlabDataset& data, std::size_t batch_size);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Shuffled mini-batch Adam training with a plateau schedule and early
/// stopping on validation loss. Weights from the best validation epoch are
/// restored before returning.
template <typename T>
TrainHistory fit(nn::Network<T>& net, const SlabDataset& train, const SlabDataset& val, const TrainConfig& cfg,
                 const EpochCallback& on_epoch = {});

/// Splits scan ids into k folds of near-equal size (sizes differ by at most one),
/// deterministically from the seed. InvalidK unless 1 <= k <= ids.size().
std::vector<std::vector<std::string>> kfold_split(const std::vector<std::string>& ids, std::size_t k,
                                                  std::uint64_t seed);

struct ScanSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
};

/// Holds out round(fraction * n) whole scans (at least one) for validation.
/// With fewer than two scans nothing is held out and `val` is empty.
ScanSplit split_validation(const std::vector<std::string>& ids, double fraction, std::uint64_t seed);

/// `epoch,train_loss,val_loss,lr` header followed by one line per epoch.
std::string format_history(const TrainHistory& history);
void write_history(const TrainHistory& history, const std::filesystem::path& path);

}  // namespace lungseg::train
