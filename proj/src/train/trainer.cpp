#include "lungseg/train/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "lungseg/random.hpp"

namespace lungseg::train {

void TrainConfig::validate() const {
  if (!(initial_lr > 0) || !(plateau.min_lr > 0)) fail(ErrorCode::InvalidConfig, "learning rates must be positive");
  if (batch_size == 0) fail(ErrorCode::InvalidConfig, "batch size must be positive");
  if (max_epochs == 0) fail(ErrorCode::InvalidConfig, "max_epochs must be positive");
  if (!(plateau.factor > 0 && plateau.factor < 1)) fail(ErrorCode::InvalidConfig, "plateau factor must lie in (0, 1)");
  if (!(val_fraction > 0 && val_fraction < 1)) fail(ErrorCode::InvalidConfig, "val_fraction must lie in (0, 1)");
  if (!(threshold >= 0 && threshold <= 1)) fail(ErrorCode::InvalidConfig, "threshold must lie in [0, 1]");
}

std::string_view to_string(StopReason reason) {
  return reason == StopReason::EarlyStop ? "early-stop" : "max-epochs";
}

void SlabDataset::add(slabgen::SlabSequence seq) {
  offsets_.push_back(total_);
  total_ += seq.size();
  scans_.push_back(std::move(seq));
}

slabgen::Slab SlabDataset::operator[](std::size_t i) const {
  if (i >= total_) fail(ErrorCode::OutOfRange, "dataset index past end");
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), i);
  // last scan starting at or before i; empty scans never win because they share
  // their offset with the following scan
  const std::size_t scan = static_cast<std::size_t>(it - offsets_.begin()) - 1;
  return scans_[scan][i - offsets_[scan]];
}

template <typename T>
nn::Tensor<T> make_batch(const std::vector<slabgen::Slab>& slabs, std::vector<std::uint8_t>* targets) {
  if (slabs.empty()) fail(ErrorCode::EmptyDataset, "empty batch");
  const std::size_t h = slabs.front().height, w = slabs.front().width, plane = h * w;
  nn::Tensor<T> batch({slabs.size(), 3, h, w});
  if (targets) targets->resize(slabs.size() * plane);
  for (std::size_t b = 0; b < slabs.size(); ++b) {
    const auto& s = slabs[b];
    if (s.height != h || s.width != w) fail(ErrorCode::ShapeMismatch, "slabs in one batch differ in size");
    std::copy(s.channels.begin(), s.channels.end(), batch.data() + b * 3 * plane);
    if (targets) std::copy(s.target.begin(), s.target.end(), targets->begin() + static_cast<std::ptrdiff_t>(b * plane));
  }
  return batch;
}

template <typename T>
double evaluate_loss(const nn::Network<T>& net, const SlabDataset& data, std::size_t batch_size) {
  if (data.empty()) fail(ErrorCode::EmptyDataset, "no slabs to evaluate");
  double weighted = 0.0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, data.size());
    std::vector<slabgen::Slab> slabs;
    for (std::size_t i = start; i < end; ++i) slabs.push_back(data[i]);
    std::vector<std::uint8_t> targets;
    auto batch = make_batch<T>(slabs, &targets);
    weighted += net.loss(batch, targets, false) * static_cast<double>(end - start);
  }
  return weighted / static_cast<double>(data.size());
}

template <typename T>
TrainHistory fit(nn::Network<T>& net, const SlabDataset& train, const SlabDataset& val, const TrainConfig& cfg,
                 const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.empty() || val.empty()) fail(ErrorCode::EmptyDataset, "training and validation slabs are required");

  AdamOptimizer<T> adam;
  PlateauScheduler plateau(cfg.initial_lr, cfg.plateau);
  EarlyStopping stopper(cfg.early_stop_patience, cfg.plateau.min_delta);
  std::mt19937_64 rng(cfg.shuffle_seed);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainHistory history;
  std::vector<nn::Tensor<T>> best;
  double lr = cfg.initial_lr;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      std::vector<slabgen::Slab> slabs;
      for (std::size_t i = start; i < end; ++i) slabs.push_back(train[order[i]]);
      std::vector<std::uint8_t> targets;
      auto batch = make_batch<T>(slabs, &targets);
      auto lg = net.gradients(batch, targets, true);
      adam.step(net.parameters(), lg.gradients, lr);
      net.apply_running_stats(lg.running_stats);
      loss_sum += lg.loss * static_cast<double>(end - start);
      ++history.steps;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_loss = evaluate_loss(net, val, cfg.batch_size);
    rec.lr = lr;
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const bool stop = stopper.update(rec.val_loss);
    if (stopper.improved()) {
      history.best_epoch = epoch;
      best.clear();
      for (const auto& p : net.parameters()) best.push_back(p.value);
    }
    lr = plateau.update(rec.val_loss);
    if (stop) {
      history.stop = StopReason::EarlyStop;
      break;
    }
  }

  if (!best.empty()) {
    auto& params = net.parameters();
    for (nn::ParamId id = 0; id < params.size(); ++id) params[id].value = std::move(best[id]);
  }
  return history;
}

std::vector<std::vector<std::string>> kfold_split(const std::vector<std::string>& ids, std::size_t k,
                                                  std::uint64_t seed) {
  if (k == 0 || k > ids.size()) {
    fail(ErrorCode::InvalidK, "k = " + std::to_string(k) + " is invalid for " + std::to_string(ids.size()) + " scans");
  }
  std::vector<std::string> shuffled = ids;
  std::mt19937_64 rng(seed);
  shuffle(std::span<std::string>(shuffled), rng);

  std::vector<std::vector<std::string>> folds(k);
  const std::size_t base = ids.size() / k, extra = ids.size() % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t n = base + (f < extra ? 1 : 0);
    folds[f].assign(shuffled.begin() + static_cast<std::ptrdiff_t>(pos),
                    shuffled.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
  }
  return folds;
}

ScanSplit split_validation(const std::vector<std::string>& ids, double fraction, std::uint64_t seed) {
  ScanSplit split;
  if (ids.size() < 2) {
    split.train = ids;
    return split;
  }
  std::vector<std::string> shuffled = ids;
  std::mt19937_64 rng(seed);
  shuffle(std::span<std::string>(shuffled), rng);
  std::size_t n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, ids.size() - 1);
  split.val.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.train.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_val), shuffled.end());
  return split;
}

namespace {
std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}
}  // namespace

std::string format_history(const TrainHistory& history) {
  std::string out = "epoch,train_loss,val_loss,lr\n";
  for (const auto& e : history.epochs) {
    out += std::to_string(e.epoch) + ',' + shortest(e.train_loss) + ',' + shortest(e.val_loss) + ',' +
           shortest(e.lr) + '\n';
  }
  return out;
}

void write_history(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << format_history(history);
}

template nn::Tensor<float> make_batch(const std::vector<slabgen::Slab>&, std::vector<std::uint8_t>*);
template nn::Tensor<double> make_batch(const std::vector<slabgen::Slab>&, std::vector<std::uint8_t>*);
template double evaluate_loss(const nn::Network<float>&, const SlabDataset&, std::size_t);
template double evaluate_loss(const nn::Network<double>&, const SlabDataset&, std::size_t);
template TrainHistory fit(nn::Network<float>&, const SlabDataset&, const SlabDataset&, const TrainConfig&,
                          const EpochCallback&);
template TrainHistory fit(nn::Network<double>&, const SlabDataset&, const SlabDataset&, const TrainConfig&,
                          const EpochCallback&);

}  // namespace lungseg::train
