#include "odseg/train.hpp"

#include <cmath>
#include <optional>

#include "odseg/error.hpp"
#include "odseg/loss.hpp"
#include "odseg/metrics.hpp"

namespace odseg {

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::Localize: return "localize";
    case Phase::Segment: return "segment";
    case Phase::Baseline: return "baseline";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ParameterError("learning rate must be positive");
  if (batch_size < 1) throw ParameterError("batch size must be >= 1");
  if (epochs < 1) throw ParameterError("epochs must be >= 1");
  if (patience < 0) throw ParameterError("patience must be >= 0");
}

TrainConfig TrainConfig::localize_defaults() {
  TrainConfig c;
  c.phase = Phase::Localize;
  c.optimizer = OptimizerKind::RmsProp;
  c.batch_size = 8;
  return c;
}

TrainConfig TrainConfig::segment_defaults() {
  TrainConfig c;
  c.phase = Phase::Segment;
  c.optimizer = OptimizerKind::Adam;
  c.batch_size = 4;
  return c;
}

TrainConfig TrainConfig::baseline_defaults() {
  TrainConfig c = segment_defaults();
  c.phase = Phase::Baseline;
  return c;
}

namespace {

Tensor gather(const std::vector<Tensor>& items, const std::vector<std::size_t>& order, std::size_t begin,
              std::size_t end) {
  std::vector<Tensor> parts;
  parts.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) parts.push_back(items[order[i]]);
  return parts.size() == 1 ? parts[0] : concat_batch(parts);
}

EncoderFeatures gather_features(const std::vector<EncoderFeatures>& cache, const std::vector<std::size_t>& order,
                                std::size_t begin, std::size_t end) {
  EncoderFeatures f;
  const std::size_t levels = cache.front().skips.size();
  for (std::size_t l = 0; l < levels; ++l) {
    std::vector<Tensor> parts;
    for (std::size_t i = begin; i < end; ++i) parts.push_back(cache[order[i]].skips[l]);
    f.skips.push_back(concat_batch(parts));
  }
  std::vector<Tensor> parts;
  for (std::size_t i = begin; i < end; ++i) parts.push_back(cache[order[i]].bottom);
  f.bottom = concat_batch(parts);
  return f;
}

std::vector<EncoderFeatures> encode_all(UNetModel& model, const TensorSet& set) {
  NoGradGuard guard;
  std::vector<EncoderFeatures> out;
  out.reserve(set.size());
  for (const auto& x : set.inputs) out.push_back(model.encode(x, Mode::Eval, nullptr));
  return out;
}

double mean_dice(const std::vector<Tensor>& probs, const TensorSet& set) {
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    acc += dice_coefficient(threshold_mask(probs[i]), threshold_mask(set.targets[i]));
  return acc / static_cast<double>(probs.size());
}

std::vector<CentroidLabel> truth_centroids(const TensorSet& set) {
  std::vector<CentroidLabel> out;
  for (const auto& t : set.targets) out.push_back({t.values()[0], t.values()[1]});
  return out;
}

// Bookkeeping shared by all training loops: curve, early stopping and
// best-epoch snapshots.
class EpochTracker {
 public:
  EpochTracker(const TrainConfig& cfg, bool has_validation, bool higher_is_better)
      : cfg_(cfg), has_validation_(has_validation), higher_(higher_is_better) {}

  // Returns false when training should stop.
  bool record(EpochRecord rec, const UNetModel& model) {
    curve_.push_back(rec);
    last_epoch_ = rec.epoch;
    if (!has_validation_) return true;
    const bool improved = !best_ || (higher_ ? rec.val_metric > best_value_ : rec.val_metric < best_value_);
    if (improved) {
      best_value_ = rec.val_metric;
      best_epoch_ = rec.epoch;
      since_best_ = 0;
      if (cfg_.select_best) best_ = model.clone();
      else best_.emplace();
    } else {
      ++since_best_;
    }
    return cfg_.patience == 0 || since_best_ < cfg_.patience;
  }

  TrainResult finish(UNetModel& model) {
    TrainResult r;
    r.curve = std::move(curve_);
    if (has_validation_ && cfg_.select_best && best_) {
      r.model = std::move(*best_);
      r.best_epoch = best_epoch_;
    } else {
      r.model = std::move(model);
      r.best_epoch = last_epoch_;
    }
    return r;
  }

 private:
  const TrainConfig& cfg_;
  bool has_validation_;
  bool higher_;
  std::vector<EpochRecord> curve_;
  std::optional<UNetModel> best_;
  double best_value_ = 0.0;
  int best_epoch_ = 0;
  int since_best_ = 0;
  int last_epoch_ = 0;
};

void check_nonempty(const TensorSet& train) {
  if (train.size() == 0) throw ParameterError("training set is empty");
  if (train.inputs.size() != train.targets.size()) throw ShapeError("training inputs and targets differ in count");
}

TrainResult segmentation_loop(UNetModel model, const TensorSet& train, const TensorSet* validation,
                              const TrainConfig& cfg) {
  const bool cached = model.encoder_frozen();
  std::vector<EncoderFeatures> train_features, val_features;
  if (cached) {
    train_features = encode_all(model, train);
    if (validation) val_features = encode_all(model, *validation);
  }

  Rng rng(cfg.seed);
  Optimizer opt(cfg.optimizer, cfg.learning_rate, model.parameters());
  EpochTracker tracker(cfg, validation != nullptr && validation->size() > 0, true);
  const std::size_t n = train.size();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto order = all_ids(n);
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      model.zero_grad();
      const Tensor target = gather(train.targets, order, start, end);
      const Tensor pred = cached ? model.decode(gather_features(train_features, order, start, end), Mode::Train)
                                 : model.segment(gather(train.inputs, order, start, end), Mode::Train, &rng);
      const Tensor loss = neg_log_soft_dice_loss(pred, target);
      backward(loss);
      opt.step();
      total += loss.item() * static_cast<double>(end - start);
    }
    EpochRecord rec{epoch, total / static_cast<double>(n)};
    if (validation && validation->size() > 0) {
      std::vector<Tensor> probs;
      if (cached) {
        NoGradGuard guard;
        const auto ids = all_ids(validation->size());
        for (std::size_t i = 0; i < ids.size(); ++i)
          probs.push_back(model.decode(gather_features(val_features, ids, i, i + 1), Mode::Eval));
      } else {
        probs = predict_masks(model, *validation);
      }
      rec.val_metric = mean_dice(probs, *validation);
    }
    if (!tracker.record(rec, model)) break;
  }
  return tracker.finish(model);
}

}  // namespace

TrainResult train_localizer(UNetModel model, const TensorSet& train, const TensorSet* validation,
                            const TrainConfig& cfg) {
  cfg.validate();
  check_nonempty(train);
  if (!model.has_localizer()) throw StateError("train_localizer needs a model with a localizer head");

  Rng rng(cfg.seed);
  Optimizer opt(cfg.optimizer, cfg.learning_rate, model.parameters());
  EpochTracker tracker(cfg, validation != nullptr && validation->size() > 0, false);
  const std::size_t n = train.size();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto order = all_ids(n);
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      model.zero_grad();
      const Tensor pred = model.localize(gather(train.inputs, order, start, end), Mode::Train, &rng);
      const Tensor loss = mse_loss(pred, gather(train.targets, order, start, end));
      backward(loss);
      opt.step();
      total += loss.item() * static_cast<double>(end - start);
    }
    EpochRecord rec{epoch, total / static_cast<double>(n)};
    if (validation && validation->size() > 0)
      rec.val_metric = localization_report(predict_centroids(model, *validation), truth_centroids(*validation)).mse;
    if (!tracker.record(rec, model)) break;
  }
  return tracker.finish(model);
}

TrainResult train_segmenter(UNetModel model, const TensorSet& train, const TensorSet* validation,
                            const TrainConfig& cfg) {
  cfg.validate();
  check_nonempty(train);
  if (model.kind() != ModelKind::Segmenter || !model.encoder_frozen())
    throw StateError("train_segmenter needs a model extended from a localizer");
  return segmentation_loop(std::move(model), train, validation, cfg);
}

std::uint64_t baseline_init_seed(std::uint64_t train_seed) { return derive_seed(train_seed, {0xba5e}); }

TrainResult train_baseline(const ModelConfig& model_cfg, const TensorSet& train, const TensorSet* validation,
                           const TrainConfig& cfg) {
  cfg.validate();
  check_nonempty(train);
  Rng init(baseline_init_seed(cfg.seed));
  return segmentation_loop(build_baseline(model_cfg, init), train, validation, cfg);
}

void write_curve_csv(std::ostream& os, const std::vector<EpochRecord>& curve) {
  os << "epoch,train_loss,val_metric\n";
  char buf[128];
  for (const auto& r : curve) {
    if (std::isnan(r.val_metric)) std::snprintf(buf, sizeof buf, "%d,%.10g,\n", r.epoch, r.train_loss);
    else std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g\n", r.epoch, r.train_loss, r.val_metric);
    os << buf;
  }
}

std::vector<CentroidLabel> predict_centroids(UNetModel& model, const TensorSet& set, int batch_size) {
  NoGradGuard guard;
  std::vector<CentroidLabel> out;
  const auto order = all_ids(set.size());
  for (std::size_t start = 0; start < set.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(set.size(), start + static_cast<std::size_t>(batch_size));
    const Tensor pred = model.localize(gather(set.inputs, order, start, end), Mode::Eval, nullptr);
    for (std::size_t i = 0; i < end - start; ++i) out.push_back({pred.values()[2 * i], pred.values()[2 * i + 1]});
  }
  return out;
}

std::vector<Tensor> predict_masks(UNetModel& model, const TensorSet& set, int batch_size) {
  NoGradGuard guard;
  std::vector<Tensor> out;
  const auto order = all_ids(set.size());
  for (std::size_t start = 0; start < set.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(set.size(), start + static_cast<std::size_t>(batch_size));
    const Tensor pred = model.segment(gather(set.inputs, order, start, end), Mode::Eval, nullptr);
    const std::size_t plane = pred.numel() / (end - start);
    const Shape one{1, 1, pred.dim(2), pred.dim(3)};
    for (std::size_t i = 0; i < end - start; ++i)
      out.push_back(Tensor::from(one, std::vector<double>(pred.values().begin() + static_cast<std::ptrdiff_t>(i * plane),
                                                          pred.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * plane))));
  }
  return out;
}

}  // namespace odseg
