// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Tolerances and time budgets are pinned below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fiona/fiona.hpp"
#include "gradient_cases.hpp"
#include "oracles.hpp"

using namespace fiona;
using namespace fiona::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) detail << "first failure: " << what << "; ";
    ok = ok && cond;
  }
};

struct Criterion {
  std::string name;
  double budget_seconds;
  std::function<void(Outcome&)> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor gaussian(Rng& rng, std::size_t n, std::size_t d) {
  Tensor t({n, d});
  for (double& v : t.data()) v = rng.normal();
  return t;
}

double cka_of(const Tensor& x, const Tensor& y) { return cka(FeatureMatrix(x), FeatureMatrix(y)); }

// ---- CKA suite

constexpr double kCkaSelfTol = 1e-9;
constexpr double kCkaSymTol = 1e-12;
constexpr double kCkaInvarianceTol = 1e-9;
constexpr double kCenteringTol = 1e-10;
constexpr double kCkaRangeSlack = 1e-9;

// Random draws start at n = 3: two samples with one feature each fall under
// the degeneracy epsilon whenever they nearly coincide.
void cka_suite(Outcome& o) {
  Rng rng(101);
  double self = 0, sym = 0, inv = 0, centering = 0, lo = 1, hi = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 3 + rng.below(40), d1 = 1 + rng.below(12), d2 = 1 + rng.below(12);
    const Tensor x = gaussian(rng, n, d1), y = gaussian(rng, n, d2);
    self = std::max(self, std::abs(cka_of(x, x) - 1.0));
    sym = std::max(sym, std::abs(cka_of(x, y) - cka_of(y, x)));
    const Tensor q = oracle::random_orthogonal(rng, d1);
    Tensor xq({n, d1});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d1; ++j)
        for (std::size_t k = 0; k < d1; ++k) xq(i, j) += x(i, k) * q(k, j);
    Tensor xs = x;
    const double c = std::exp(rng.uniform(-3.0, 3.0));
    for (double& v : xs.data()) v *= c;
    const double base = cka_of(x, y);
    inv = std::max({inv, std::abs(cka_of(xq, y) - base), std::abs(cka_of(xs, y) - base)});
  }
  for (std::size_t n = 2; n <= 64; ++n) {
    const Tensor x = gaussian(rng, n, 1 + rng.below(8));
    const GramMatrix k = gram_matrix(FeatureMatrix(x));
    const Tensor fast = center_gram(k).values();
    const auto slow = oracle::explicit_center(oracle::from_tensor(k.values()));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) centering = std::max(centering, std::abs(fast(i, j) - slow[i][j]));
  }
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 3 + rng.below(30);
    const double v = cka_of(gaussian(rng, n, 1 + rng.below(10)), gaussian(rng, n, 1 + rng.below(10)));
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  o.require(self <= kCkaSelfTol, "cka(X,X) = 1");
  o.require(sym <= kCkaSymTol, "symmetry");
  o.require(inv <= kCkaInvarianceTol, "orthogonal/scale invariance");
  o.require(centering <= kCenteringTol, "fast centering = HKH");
  o.require(lo >= 0.0 && hi <= 1.0 + kCkaRangeSlack, "range [0, 1]");
  o.detail << "self " << fmt("%.1e", self) << ", sym " << fmt("%.1e", sym) << ", invariance " << fmt("%.1e", inv)
           << ", centering " << fmt("%.1e", centering) << ", 1000 pairs in [" << fmt("%.3f", lo) << ", "
           << fmt("%.3f", hi) << "]";
}

// ---- gradients

constexpr double kGradTol = 1e-4;

void gradient_suite(Outcome& o) {
  double worst = 0.0;
  std::string worst_name;
  auto note = [&](double e, const std::string& name) {
    if (e > worst) worst = e, worst_name = name;
    o.require(e < kGradTol, name);
  };
  for (const Case& c : primitive_cases()) {
    Rng rng(Rng::fnv1a64(c.name) ^ 0xacce);
    for (int t = 0; t < 25; ++t) {
      auto [inputs, build] = c.make(rng, 5000 + static_cast<std::uint64_t>(t));
      note(check_gradients(build, inputs).max_rel_error, c.name);
    }
  }
  Rng rng(202);
  for (int t = 0; t < 25; ++t) {
    // n = 2 is excluded for CKA: two centered samples are always perfectly aligned
    const std::size_t n = 3 + rng.below(2);
    const std::vector<Tensor> in{random_tensor(rng, {n, 1 + rng.below(5)}), random_tensor(rng, {n, 1 + rng.below(5)})};
    note(check_gradients([](Graph&, const std::vector<Var>& v) { return cka_loss(v[0], v[1]); }, in).max_rel_error,
         "cka_loss");
    std::vector<Label> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back(rng.below(2) ? Label::deepfake : Label::bonafide);
    note(check_gradients([labels](Graph&, const std::vector<Var>& v) { return cross_entropy(softmax(v[0]), labels); },
                         {random_tensor(rng, {n, 2}, -2, 2)})
             .max_rel_error,
         "cross_entropy");
  }
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const std::vector<Tensor> x{random_tensor(rng, {4, 12}), random_tensor(rng, {4, 14})};
    const std::vector<Label> y{Label::bonafide, Label::deepfake, Label::deepfake, Label::bonafide};
    note(model_gradient_error(build_fiona(12, 14, 6, 0.3, seed), x, y, 0.1, seed), "fiona total loss");
  }
  o.detail << "worst relative error " << fmt("%.2e", worst) << " (" << worst_name << ")";
}

// ---- EER

constexpr double kEerOracleTol = 1e-9;
constexpr double kEerInvarianceTol = 1e-12;

void eer_oracle(Outcome& o) {
  Rng rng(303);
  double worst = 0.0, worst_inv = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.below(199);
    ScoreSet s;
    const bool coarse = rng.below(3) == 0;  // every third set has many ties
    for (std::size_t i = 0; i < n; ++i) {
      const Label l = i == 0 ? Label::bonafide : i == 1 ? Label::deepfake : rng.below(2) ? Label::deepfake : Label::bonafide;
      const double shift = l == Label::deepfake ? rng.uniform(0.0, 1.5) : 0.0;
      double v = rng.normal() + shift;
      if (coarse) v = std::round(v * 4.0) / 4.0;
      s.ids.push_back("u" + std::to_string(i));
      s.scores.push_back(v);
      s.labels.push_back(l);
    }
    const double e = eer(s);
    worst = std::max(worst, std::abs(e - oracle::brute_force_eer(s.scores, s.labels)));
    for (const auto& f : std::vector<std::function<double(double)>>{
             [](double v) { return 3.0 * v - 7.0; }, [](double v) { return std::atan(v); },
             [](double v) { return v * v * v + v; }}) {
      ScoreSet m = s;
      for (double& v : m.scores) v = f(v);
      worst_inv = std::max(worst_inv, std::abs(eer(m) - e));
    }
  }
  o.require(worst <= kEerOracleTol, "engine vs brute force");
  o.require(worst_inv <= kEerInvarianceTol, "monotone-transform invariance");
  o.detail << "max |engine - oracle| " << fmt("%.1e", worst) << ", max transform drift " << fmt("%.1e", worst_inv);
}

// ---- end-to-end

constexpr double kEasyEerMax = 0.05;

void easy_training(Outcome& o) {
  SynthConfig c;
  c.n_per_class = 2000;
  c.dim_a = c.dim_b = 32;
  c.theta = 0.0;
  c.sigma = 0.1;
  c.seed = 7;
  const SynthSplit data = synth_generate_train_eval(c, 500);
  const auto [tr, va] = stratified_split(data.train.sources[0], 0.1, 7);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.seed = 7;
  std::vector<double> eers;
  std::vector<TrainReport> reports;
  std::vector<Model> models;
  double first_run_seconds = 0.0;
  for (int run = 0; run < 2; ++run) {
    const auto t0 = std::chrono::steady_clock::now();
    Model m = build_cnn(32, kDefaultDropout, 7);
    reports.push_back(train(m, tr, va, cfg));
    eers.push_back(eer(evaluate(m, data.eval.sources[0])));
    models.push_back(std::move(m));
    if (run == 0) first_run_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  o.require(eers[0] <= kEasyEerMax, "EER <= 5%");
  o.require(reports[0].epochs.size() <= 50, "within 50 epochs");
  o.require(first_run_seconds < 120.0, "one run < 2 min");
  o.require(reports[0].same_run(reports[1]) && models[0].parameters() == models[1].parameters() &&
                eers[0] == eers[1],
            "bitwise-identical rerun");
  o.detail << "CNN eval EER " << fmt("%.2f%%", 100 * eers[0]) << " after " << reports[0].epochs.size()
           << " epochs (best " << reports[0].best_epoch << ") in " << fmt("%.1f s", first_run_seconds)
           << ", rerun identical: " << (reports[0].same_run(reports[1]) ? "yes" : "no");
}

// ---- fusion trend

constexpr int kFusionSeeds = 5;
constexpr double kFusionMargin = 0.03;        // fusion beats best single branch by 3 points
constexpr double kFionaVsConcatSlack = 0.005;  // fiona within 0.5 points of concat

void fusion_trend(Outcome& o) {
  double single = 0, concat = 0, fiona = 0;
  std::ostringstream cka_trace;
  for (int seed = 1; seed <= kFusionSeeds; ++seed) {
    const auto s = static_cast<std::uint64_t>(seed);
    SynthConfig c;
    c.n_per_class = 1000;
    c.dim_a = 32;
    c.dim_b = 40;
    c.seed = s;
    c.sigma = synth_sigma_for_single_error(c, 0.15);
    const SynthSplit data = synth_generate_train_eval(c, 500);
    const auto [tr, va] = stratified_split(data.train, 0.1, s);
    TrainConfig cfg;
    cfg.seed = s;
    cfg.loss.lambda = 0.1;
    double best_single = 1.0;
    for (std::size_t b = 0; b < 2; ++b) {
      Model m = build_cnn(data.train.sources[b].dim, kDefaultDropout, s);
      train(m, tr.sources[b], va.sources[b], cfg);
      best_single = std::min(best_single, eer(evaluate(m, data.eval.sources[b])));
    }
    Model mc = build_concat_fusion(32, 40, kDefaultDropout, s);
    train(mc, tr, va, cfg);
    const double ec = eer(evaluate(mc, data.eval));
    Model mf = build_fiona(32, 40, kDefaultProjectionDim, kDefaultDropout, s);
    const TrainReport rep = train(mf, tr, va, cfg);
    const double ef = eer(evaluate(mf, data.eval));
    const double cka1 = *rep.epochs.front().mean_batch_cka, cka_best = *rep.best().mean_batch_cka;
    o.require(cka_best > cka1, "CKA at best epoch > epoch 1 (seed " + std::to_string(seed) + ")");
    cka_trace << (seed > 1 ? "; " : "") << "s" << seed << " " << fmt("%.3f", cka1) << "->" << fmt("%.3f", cka_best)
              << "@" << rep.best_epoch;
    single += best_single / kFusionSeeds;
    concat += ec / kFusionSeeds;
    fiona += ef / kFusionSeeds;
  }
  o.require(concat <= single - kFusionMargin, "concat beats best single by 3 points");
  o.require(fiona <= single - kFusionMargin, "fiona beats best single by 3 points");
  o.require(fiona <= concat + kFionaVsConcatSlack, "fiona <= concat + 0.5 points");
  o.detail << "mean EER single " << fmt("%.2f%%", 100 * single) << ", concat " << fmt("%.2f%%", 100 * concat)
           << ", fiona " << fmt("%.2f%%", 100 * fiona) << "; CKA epoch1->best " << cka_trace.str();
}

// ---- total loss

void total_loss_contract(Outcome& o) {
  Rng rng(404);
  int bitwise = 0, monotone = 0;
  const std::vector<double> lambdas{0.0, 0.01, 0.1, 0.5, 1.0, 3.0};
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.below(31);
    const Tensor logits = random_tensor(rng, {n, 2}, -3, 3);
    const Tensor x = gaussian(rng, n, 1 + rng.below(16)), y = gaussian(rng, n, 1 + rng.below(16));
    std::vector<Label> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back(rng.below(2) ? Label::deepfake : Label::bonafide);
    double prev = -1.0;
    bool mono = true, same = false;
    for (double lambda : lambdas) {
      Graph g;
      const Var probs = softmax(g.leaf(logits, false));
      const LossTerms terms = total_loss(probs, labels, g.leaf(x, false), g.leaf(y, false), LossConfig{lambda});
      const double total = terms.total.value().item();
      if (lambda == 0.0) {
        Graph h;
        const double ce = cross_entropy(softmax(h.leaf(logits, false)), labels).value().item();
        same = total == ce && total == terms.cross_entropy.value().item();
      }
      mono = mono && total >= prev;
      prev = total;
    }
    bitwise += same;
    monotone += mono;
  }
  o.require(bitwise == 100, "lambda = 0 equals cross-entropy bitwise");
  o.require(monotone == 100, "monotone in lambda");
  o.detail << bitwise << "/100 bitwise at lambda 0, " << monotone << "/100 monotone over " << lambdas.size()
           << " lambdas";
}

// ---- formats

void formats(Outcome& o) {
  Rng rng(505);
  EmbeddingDataset ds;
  ds.dim = 24;
  for (std::size_t i = 0; i < 50; ++i) {
    ds.ids.push_back("clip" + std::to_string(i));
    ds.labels.push_back(i % 3 ? Label::deepfake : Label::bonafide);
    for (std::size_t j = 0; j < ds.dim; ++j) ds.vectors.push_back(static_cast<float>(rng.normal() * 1e3));
  }
  ds.vectors[0] = -0.0f;
  ds.vectors[1] = std::numeric_limits<float>::denorm_min();
  ds.vectors[2] = std::numeric_limits<float>::max();

  const fs::path dir = fs::temp_directory_path() / "fiona_acceptance_formats";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_femb(ds, dir / "x.femb");
  const EmbeddingDataset back = read_femb(dir / "x.femb");
  const auto bytes = encode_femb(ds);
  o.require(encode_femb(back) == bytes && back.ids == ds.ids && back.labels == ds.labels, "FEMB round trip");

  const std::vector<Model> models{build_fcn(20, 0.3, 1), build_cnn(33, 0.3, 2), build_concat_fusion(12, 40, 0.1, 3),
                                  build_fiona(16, 24, 7, 0.45, 4)};
  bool ckpt = true;
  for (const Model& m : models) {
    save_checkpoint(m, dir / "m.fmdl");
    const Model r = load_checkpoint(dir / "m.fmdl");
    ckpt = ckpt && r.config() == m.config() && r.parameters() == m.parameters() &&
           encode_checkpoint(r) == encode_checkpoint(m);
  }
  o.require(ckpt, "checkpoint round trip");
  fs::remove_all(dir);

  std::size_t detected = 0;
  for (int t = 0; t < 1000; ++t) {
    auto bad = bytes;
    const std::size_t bit = rng.below(bad.size() * 8);
    bad[bit / 8] ^= static_cast<unsigned char>(1u << (bit % 8));
    try {
      decode_femb(bad);
    } catch (const FormatError&) {
      ++detected;
    }
  }
  o.require(detected == 1000, "all bit flips detected");
  o.detail << "FEMB and 4 checkpoints bitwise, " << detected << "/1000 bit flips detected";
}

// ---- parameter counts

void parameter_counts(Outcome& o) {
  const std::size_t fcn = build_fcn(768).parameter_count(), cnn = build_cnn(768).parameter_count();
  // the reference sums, term by term
  constexpr std::size_t fcn_768 = 768 * 128 + 128 + 128 * 64 + 64 + 64 * 32 + 32 + 32 * 2 + 2;
  constexpr std::size_t cnn_768 = 16 * (3 + 1) + 32 * (16 * 3 + 1) + 6080 * 50 + 50 + 50 * 2 + 2;
  static_assert(fcn_768 == 108834 && cnn_768 == 305784);
  o.require(fcn == fcn_768 && fcn == oracle::fcn_params(768), "FCN at 768");
  o.require(cnn == cnn_768 && cnn == oracle::cnn_params(768), "CNN at 768");
  Rng rng(606);
  int matched = 0;
  for (int t = 0; t < 40; ++t) {
    const std::size_t a = 10 + rng.below(190), b = 10 + rng.below(190), p = 1 + rng.below(150);
    matched += build_fcn(a).parameter_count() == oracle::fcn_params(a);
    matched += build_cnn(a).parameter_count() == oracle::cnn_params(a);
    matched += build_concat_fusion(a, b).parameter_count() == oracle::concat_params(a, b);
    matched += build_fiona(a, b, p).parameter_count() == oracle::fiona_params(a, b, p);
  }
  o.require(matched == 160, "random dims vs closed form");
  o.detail << "FCN(768) " << fcn << ", CNN(768) " << cnn << ", " << matched << "/160 random builds exact";
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"cka-correctness", 10.0, cka_suite},
      {"gradients", 60.0, gradient_suite},
      {"eer-oracle", 10.0, eer_oracle},
      {"synthetic-end-to-end", 300.0, easy_training},
      {"fusion-trend", 600.0, fusion_trend},
      {"total-loss-contract", 60.0, total_loss_contract},
      {"formats", 60.0, formats},
      {"parameter-counts", 60.0, parameter_counts},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail << "threw: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_seconds;
    if (!in_time) o.detail << "; over the " << c.budget_seconds << " s budget";
    const bool pass = o.ok && in_time;
    failed += !pass;
    std::printf("%s %-22s %7.1f s  %s\n", pass ? "PASS" : "FAIL", c.name.c_str(), secs, o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed ? 1 : 0;
}
