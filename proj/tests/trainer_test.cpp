#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fiona/synth.hpp"
#include "fiona/trainer.hpp"

using namespace fiona;

namespace {

SynthConfig easy(std::size_t n_per_class, std::uint64_t seed) {
  SynthConfig c;
  c.n_per_class = n_per_class;
  c.dim_a = 16;
  c.dim_b = 20;
  c.theta = 0.0;
  c.sigma = 0.15;
  c.seed = seed;
  return c;
}

EmbeddingDataset flipped(EmbeddingDataset ds) {
  for (auto& l : ds.labels) l = l == Label::bonafide ? Label::deepfake : Label::bonafide;
  return ds;
}

double ce_from_scores(const ScoreSet& s) {
  double sum = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double p = s.labels[i] == Label::deepfake ? s.scores[i] : 1.0 - s.scores[i];
    sum -= std::log(std::max(p, kProbabilityFloor));
  }
  return sum / static_cast<double>(s.size());
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_EQ(c.epochs, 50u);
  EXPECT_EQ(c.batch_size, 32u);
  EXPECT_EQ(c.early_stop_patience, 5u);
  EXPECT_EQ(c.adam.learning_rate, 1e-3);
  c.batch_size = 1;
  EXPECT_NO_THROW(c.validate(Architecture::cnn));
  EXPECT_THROW(c.validate(Architecture::fiona), ConfigError);
  c = TrainConfig{};
  c.epochs = 0;
  EXPECT_THROW(c.validate(Architecture::fcn), ConfigError);
}

TEST(Train, PatienceOneStopsAfterWorseningEpoch) {
  const PairedDataset d = synth_generate(easy(100, 1));
  const EmbeddingDataset& train_set = d.sources[0];
  const EmbeddingDataset val = flipped(train_set);
  Model m = build_cnn(16, 0.3, 1);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.early_stop_patience = 1;
  const TrainReport r = train(m, train_set, val, cfg);
  ASSERT_EQ(r.epochs.size(), 2u);
  EXPECT_GT(r.epochs[1].val_loss, r.epochs[0].val_loss);
  EXPECT_TRUE(r.stopped_early);
  EXPECT_EQ(r.best_epoch, 1u);
}

TEST(Train, SeparableSetLearns) {
  const auto split = synth_generate_train_eval(easy(300, 2), 100);
  const auto [tr, va] = stratified_split(split.train.sources[0], 0.1, 2);
  Model m = build_cnn(16, 0.3, 2);
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.seed = 2;
  const TrainReport r = train(m, tr, va, cfg);
  ASSERT_GE(r.epochs.size(), 5u);
  for (std::size_t e = 1; e < 5; ++e) EXPECT_LT(r.epochs[e].train_loss, r.epochs[e - 1].train_loss) << e;
  EXPECT_LT(r.best().val_eer, 0.05);
  EXPECT_LT(eer(evaluate(m, split.eval.sources[0])), 0.05);
}

TEST(Train, FixedSeedIsDeterministic) {
  const auto d = synth_generate(easy(80, 3));
  const auto [tr, va] = stratified_split(d, 0.1, 3);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 9;
  Model a = build_fiona(16, 20, 12, 0.3, 4);
  Model b = build_fiona(16, 20, 12, 0.3, 4);
  const TrainReport ra = train(a, tr, va, cfg);
  const TrainReport rb = train(b, tr, va, cfg);
  EXPECT_TRUE(ra.same_run(rb));
  EXPECT_EQ(a.parameters(), b.parameters());
  cfg.seed = 10;
  Model c = build_fiona(16, 20, 12, 0.3, 4);
  EXPECT_FALSE(train(c, tr, va, cfg).same_run(ra));
}

TEST(Train, RestoresBestEpochParameters) {
  const PairedDataset d = synth_generate(easy(60, 4));
  const EmbeddingDataset& tr = d.sources[0];
  const EmbeddingDataset val = flipped(tr);  // val loss worsens as training fits
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.early_stop_patience = 10;
  cfg.seed = 5;
  Model full = build_cnn(16, 0.3, 5);
  const TrainReport r = train(full, tr, val, cfg);
  ASSERT_LT(r.best_epoch, r.epochs.size());
  cfg.epochs = r.best_epoch;
  Model upto = build_cnn(16, 0.3, 5);
  train(upto, tr, val, cfg);
  EXPECT_EQ(full.parameters(), upto.parameters());
}

TEST(Train, ReportInvariants) {
  const auto d = synth_generate(easy(60, 5));
  const auto [tr, va] = stratified_split(d.sources[1], 0.2, 5);
  Model m = build_fcn(20, 0.3, 6);
  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.early_stop_patience = 2;
  const TrainReport r = train(m, tr, va, cfg);
  ASSERT_FALSE(r.epochs.empty());
  EXPECT_LE(r.epochs.size(), cfg.epochs);
  for (const auto& e : r.epochs) {
    EXPECT_LE(r.best().val_loss, e.val_loss);
    EXPECT_FALSE(e.mean_batch_cka.has_value());
  }
  if (r.stopped_early) {
    const std::size_t n = r.epochs.size(), first_stale = n - cfg.early_stop_patience;
    double best_before = INFINITY;
    for (std::size_t k = 0; k < first_stale; ++k) best_before = std::min(best_before, r.epochs[k].val_loss);
    for (std::size_t k = first_stale; k < n; ++k) EXPECT_GE(r.epochs[k].val_loss, best_before);
  }
  const auto j = to_json(r);
  EXPECT_EQ(j["architecture"], "fcn");
  EXPECT_EQ(j["completed_epochs"], r.epochs.size());
  EXPECT_TRUE(j["epochs"][0].contains("val_eer"));
  EXPECT_FALSE(j["epochs"][0].contains("mean_batch_cka"));
}

TEST(Train, FionaLogsCkaAndMonitorsCrossEntropy) {
  const auto d = synth_generate(easy(50, 6));
  const auto [tr, va] = stratified_split(d, 0.2, 6);
  Model m = build_fiona(16, 20, 12, 0.3, 7);
  TrainConfig cfg;
  cfg.epochs = 2;
  const TrainReport r = train(m, tr, va, cfg);
  for (const auto& e : r.epochs) {
    ASSERT_TRUE(e.mean_batch_cka.has_value());
    EXPECT_GE(*e.mean_batch_cka, 0.0);
    EXPECT_LE(*e.mean_batch_cka, 1.0 + 1e-9);
  }
  EXPECT_TRUE(to_json(r)["epochs"][0].contains("mean_batch_cka"));
  // Restored parameters are the best epoch's, so the validation CE recomputes.
  EXPECT_NEAR(ce_from_scores(evaluate(m, va)), r.best().val_loss, 1e-12);
}

TEST(Train, FusionDropsSingletonTailBatch) {
  auto d = synth_generate(easy(40, 7));
  std::vector<std::size_t> rows(33);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const PairedDataset tr = subset(d, rows);
  Model m = build_fiona(16, 20, 8, 0.3, 8);
  TrainConfig cfg;
  cfg.epochs = 2;
  EXPECT_NO_THROW(train(m, tr, d, cfg));
}

TEST(Train, AllDegenerateBatchesIsNumericError) {
  auto d = synth_generate(easy(20, 8));
  std::fill(d.sources[1].vectors.begin(), d.sources[1].vectors.end(), 0.25f);
  Model m = build_fiona(16, 20, 8, 0.0, 9);
  // A constant branch input gives identical projections for every sample.
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train(m, d, d, cfg), NumericError);
}

TEST(Train, InputErrors) {
  const auto d = synth_generate(easy(20, 9));
  Model cnn = build_cnn(16);
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train(cnn, d.sources[1], d.sources[1], cfg), DimensionError);
  EXPECT_THROW(train(cnn, d, d, cfg), DimensionError);
  EXPECT_THROW(train(cnn, EmbeddingDataset{16, {}, {}, {}, "empty"}, d.sources[0], cfg), DataError);
  EXPECT_THROW(evaluate(cnn, EmbeddingDataset{16, {}, {}, {}, "empty"}), DataError);
  EXPECT_THROW(evaluate(cnn, d.sources[1]), DimensionError);
}

TEST(Evaluate, RepeatableAndHandComputed) {
  const auto d = synth_generate(easy(20, 10));
  const Model m = build_concat_fusion(16, 20, 0.3, 11);
  const ScoreSet a = evaluate(m, d);
  const ScoreSet b = evaluate(m, d);
  EXPECT_EQ(a.scores, b.scores);
  EXPECT_EQ(a.ids, d.ids());

  // FCN on width 1 carrying x through unit 0 of every layer.
  Model toy = build_fcn(1, 0.3, 0);
  for (auto& p : toy.parameters()) std::fill(p.value.data().begin(), p.value.data().end(), 0.0);
  for (auto& p : toy.parameters()) {
    if (p.name == "fcn.dense4.weight") p.value(0, 1) = 2.0;
    else if (p.name.ends_with(".weight")) p.value(0, 0) = 1.0;
  }
  EmbeddingDataset one{1, {0.75f}, {"u1"}, {Label::deepfake}, "toy"};
  const ScoreSet s = evaluate(toy, one);
  EXPECT_NEAR(s.scores[0], 1.0 / (1.0 + std::exp(-1.5)), 1e-15);
}

TEST(Chunks, MergesShortTail) {
  EXPECT_EQ(detail::chunks(65, 32, 2).size(), 2u);
  EXPECT_EQ(detail::chunks(65, 32, 2).back(), (std::pair<std::size_t, std::size_t>{32, 65}));
  EXPECT_EQ(detail::chunks(66, 32, 2).size(), 3u);
  EXPECT_EQ(detail::chunks(1, 32, 2).size(), 1u);
}
