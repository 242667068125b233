#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fiona/autodiff.hpp"
#include "fiona/dataio.hpp"
#include "fiona/eer.hpp"
#include "fiona/error.hpp"
#include "fiona/models.hpp"
#include "fiona/objective.hpp"
#include "fiona/optim.hpp"
#include "fiona/rng.hpp"

namespace fiona {

// One or two row-aligned embedding sources. Non-owning.
class DataView {
 public:
  DataView(const EmbeddingDataset& single) : branches_{&single} {}  // NOLINT(implicit)
  DataView(const PairedDataset& paired)  // NOLINT(implicit)
      : branches_{&paired.sources[0], &paired.sources[1]} {}

  std::size_t branch_count() const noexcept { return branches_.size(); }
  std::size_t count() const noexcept { return branches_[0]->count(); }
  const std::vector<Label>& labels() const noexcept { return branches_[0]->labels; }
  const std::vector<std::string>& ids() const noexcept { return branches_[0]->ids; }
  const EmbeddingDataset& branch(std::size_t b) const { return *branches_.at(b); }

  std::vector<Tensor> batch(std::span<const std::size_t> rows) const {
    std::vector<Tensor> out;
    for (const auto* ds : branches_) out.push_back(ds->batch(rows));
    return out;
  }

 private:
  std::vector<const EmbeddingDataset*> branches_;
};

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::size_t early_stop_patience = 5;
  AdamConfig adam{};
  LossConfig loss{};
  std::uint64_t seed = 0;

  void validate(Architecture arch) const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (is_fusion(arch) && batch_size < 2) throw ConfigError("fusion models need batch size >= 2");
    if (early_stop_patience < 1) throw ConfigError("early-stop patience must be >= 1");
    if (!(adam.learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    loss.validate();
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_eer = 0.0;
  std::optional<double> mean_batch_cka;  // Fiona: mean CKA between projected branches

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainReport {
  std::string architecture;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  std::size_t skipped_batches = 0;
  double wall_time_seconds = 0.0;

  const EpochRecord& best() const { return epochs.at(best_epoch - 1); }

  // Everything except wall time, which is the only non-deterministic field.
  bool same_run(const TrainReport& o) const {
    return architecture == o.architecture && epochs == o.epochs && best_epoch == o.best_epoch &&
           stopped_early == o.stopped_early && skipped_batches == o.skipped_batches;
  }
};

inline nlohmann::ordered_json to_json(const TrainReport& r) {
  nlohmann::ordered_json j;
  j["architecture"] = r.architecture;
  j["completed_epochs"] = r.epochs.size();
  j["best_epoch"] = r.best_epoch;
  j["stopped_early"] = r.stopped_early;
  j["skipped_batches"] = r.skipped_batches;
  j["wall_time_seconds"] = r.wall_time_seconds;
  auto& arr = j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : r.epochs) {
    nlohmann::ordered_json row;
    row["epoch"] = e.epoch;
    row["train_loss"] = e.train_loss;
    row["val_loss"] = e.val_loss;
    row["val_eer"] = e.val_eer;
    if (e.mean_batch_cka) row["mean_batch_cka"] = *e.mean_batch_cka;
    arr.push_back(std::move(row));
  }
  return j;
}

namespace detail {

// Consecutive chunks of `size`; a tail shorter than `min_tail` is merged
// into the previous chunk.
inline std::vector<std::pair<std::size_t, std::size_t>> chunks(std::size_t count, std::size_t size,
                                                               std::size_t min_tail) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t start = 0; start < count; start += size) out.emplace_back(start, std::min(count, start + size));
  if (out.size() > 1 && out.back().second - out.back().first < min_tail) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

inline void check_inputs(const Model& model, const DataView& data, const char* what) {
  if (data.count() == 0) throw DataError(std::string(what) + " set is empty");
  if (data.branch_count() != model.branch_count()) {
    throw DimensionError(std::string(what) + " set has " + std::to_string(data.branch_count()) +
                         " branch(es), model expects " + std::to_string(model.branch_count()));
  }
  for (std::size_t b = 0; b < data.branch_count(); ++b)
    if (data.branch(b).dim != model.config().input_dims[b]) {
      throw DimensionError(std::string(what) + " branch " + std::to_string(b) + " has width " +
                           std::to_string(data.branch(b).dim) + ", model expects " +
                           std::to_string(model.config().input_dims[b]));
    }
}

struct InferenceResult {
  std::vector<double> p_deepfake;
  double cross_entropy = 0.0;
};

inline InferenceResult infer(const Model& model, const DataView& data) {
  constexpr std::size_t kChunk = 256;
  InferenceResult out;
  out.p_deepfake.reserve(data.count());
  Rng unused(0);
  double ce_sum = 0.0;
  for (auto [lo, hi] : chunks(data.count(), kChunk, 2)) {
    std::vector<std::size_t> rows(hi - lo);
    std::iota(rows.begin(), rows.end(), lo);
    Graph g;
    const auto inputs = data.batch(rows);
    const auto fwd = model.forward(g, inputs, false, unused);
    const Tensor& p = fwd.probs.value();
    for (std::size_t i = 0; i < rows.size(); ++i) out.p_deepfake.push_back(p(i, 1));
    const std::span<const Label> labels(data.labels().data() + lo, hi - lo);
    ce_sum += cross_entropy(fwd.probs, labels).value().item() * static_cast<double>(rows.size());
  }
  out.cross_entropy = ce_sum / static_cast<double>(data.count());
  return out;
}

// Mean CKA between the projected branches of a Fiona model, over the data
// in consecutive batches of cfg.batch_size, dropout off. Degenerate batches
// are left out of the mean.
inline double mean_batch_cka(const Model& model, const DataView& data, const TrainConfig& cfg) {
  Rng unused(0);
  double sum = 0.0;
  std::size_t n = 0;
  for (auto [lo, hi] : chunks(data.count(), cfg.batch_size, 2)) {
    if (hi - lo < 2) continue;
    std::vector<std::size_t> rows(hi - lo);
    std::iota(rows.begin(), rows.end(), lo);
    Graph g;
    const auto inputs = data.batch(rows);
    const auto fwd = model.forward(g, inputs, false, unused);
    const auto& proj = *fwd.branches->projected;
    try {
      sum += cka(proj[0], proj[1], cfg.loss.cka_epsilon).value().item();
      ++n;
    } catch (const DegenerateBatchError&) {
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace detail

// Deepfake-class probability per utterance, dropout off.
inline ScoreSet evaluate(const Model& model, const DataView& data) {
  detail::check_inputs(model, data, "evaluation");
  ScoreSet s;
  s.ids = data.ids();
  s.labels = data.labels();
  s.scores = detail::infer(model, data).p_deepfake;
  return s;
}

// Validation loss is the cross-entropy of the classifier output (for every
// architecture), so runs with different lambdas are monitored on the same scale.
inline TrainReport train(Model& model, const DataView& train_set, const DataView& val_set,
                         const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate(model.arch());
  detail::check_inputs(model, train_set, "training");
  detail::check_inputs(model, val_set, "validation");
  const bool fusion = is_fusion(model.arch());
  const bool aligned = model.arch() == Architecture::fiona;

  Rng root(cfg.seed);
  Rng shuffle_rng = root.split("shuffle");
  Rng dropout_rng = root.split("dropout");
  AdamState state = AdamState::for_parameters(model.parameters());
  std::uint64_t step = 0;

  TrainReport report;
  report.architecture = std::string(to_string(model.arch()));
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Parameter> best_params = model.parameters();
  std::size_t since_best = 0;

  std::vector<std::size_t> order(train_set.count());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t loss_n = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      if (fusion && stop - start < 2) continue;  // final short batch cannot be centered
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      std::vector<Label> labels;
      labels.reserve(rows.size());
      for (auto r : rows) labels.push_back(train_set.labels()[r]);

      Graph g;
      const auto inputs = train_set.batch(rows);
      const auto fwd = model.forward(g, inputs, true, dropout_rng);
      Var loss;
      if (aligned) {
        const auto& proj = *fwd.branches->projected;
        try {
          const LossTerms terms = total_loss(fwd.probs, labels, proj[0], proj[1], cfg.loss);
          loss = terms.total;
        } catch (const DegenerateBatchError&) {
          ++report.skipped_batches;
          continue;
        }
      } else {
        loss = cross_entropy(fwd.probs, labels, cfg.loss.label_smoothing);
      }
      const double lv = loss.value().item();
      if (!std::isfinite(lv)) throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
      g.backward(loss);
      std::vector<Tensor> grads;
      grads.reserve(fwd.params.size());
      for (const Var& p : fwd.params) grads.push_back(g.grad(p));
      adam_step(model.parameters(), grads, state, ++step, cfg.adam);
      loss_sum += lv * static_cast<double>(rows.size());
      loss_n += rows.size();
    }
    if (loss_n == 0) {
      throw NumericError("epoch " + std::to_string(epoch) + ": every batch was skipped as degenerate");
    }

    const auto val = detail::infer(model, val_set);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(loss_n);
    rec.val_loss = val.cross_entropy;
    rec.val_eer = eer(ScoreSet{{}, val.p_deepfake, val_set.labels()});
    if (aligned) rec.mean_batch_cka = detail::mean_batch_cka(model, train_set, cfg);
    report.epochs.push_back(rec);

    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      best_params = model.parameters();
      report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      report.stopped_early = epoch < cfg.epochs;
      break;
    }
  }

  if (report.best_epoch == 0) throw NumericError("validation loss never became finite");
  model.parameters() = std::move(best_params);
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace fiona
