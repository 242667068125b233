// fiona: train and score detection heads over FEMB embedding files.
//
//   fiona synth         write a synthetic two-modality train/eval set
//   fiona train         single-embedding FCN or CNN
//   fiona train-fusion  concat or fiona fusion over two embeddings
//   fiona eval          score an embedding set with a saved checkpoint
//   fiona eer           EER of a score file
//   fiona sweep         grid of (pair, mode, seed) fusion runs
//
// Exit codes: 0 ok, 2 bad input or configuration, 3 runtime failure.

#include <CLI11.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "fiona/fiona.hpp"

namespace fs = std::filesystem;
using namespace fiona;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitRuntime = 3;

std::string eer_line(double e) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "EER: %.2f%%", 100.0 * e);
  return buf;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  if (!os) throw DataError("cannot write " + p.string());
  os << text;
}

fs::path make_out_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
  return p;
}

// Flag values as TOML, so `--config <dir>/config.toml` repeats the run.
void echo_config(const CLI::App* cmd, const fs::path& dir) {
  write_text(dir / "config.toml", "[" + cmd->get_name() + "]\n" + cmd->config_to_str(true, false));
}

struct TrainFlags {
  std::size_t epochs = 50;
  double lr = 1e-3;
  std::size_t batch = 32;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  double dropout = kDefaultDropout;
  double val_fraction = 0.1;
  double label_smoothing = 0.0;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--epochs", f.epochs, "Maximum training epochs")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--batch", f.batch, "Minibatch size")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--patience", f.patience, "Early-stopping patience in epochs")->capture_default_str();
  cmd->add_option("--seed", f.seed, "Seed for init, shuffling, dropout and the validation split")->capture_default_str();
  cmd->add_option("--dropout", f.dropout, "Dropout rate")->capture_default_str();
  cmd->add_option("--val-fraction", f.val_fraction, "Stratified share of training data held out for early stopping")
      ->capture_default_str();
  cmd->add_option("--label-smoothing", f.label_smoothing, "Label smoothing in [0, 0.2]")->capture_default_str();
}

TrainConfig train_config(const TrainFlags& f, double lambda) {
  TrainConfig c;
  c.epochs = f.epochs;
  c.adam.learning_rate = f.lr;
  c.batch_size = f.batch;
  c.early_stop_patience = f.patience;
  c.seed = f.seed;
  c.loss.lambda = lambda;
  c.loss.label_smoothing = f.label_smoothing;
  return c;
}

struct RunOutcome {
  Model model;
  TrainReport report;
  ScoreSet scores;
  double eer;
  std::size_t train_count, val_count;
};

template <class Dataset>
RunOutcome fit_and_score(Model model, const Dataset& train_all, const Dataset& eval_set, const TrainConfig& cfg,
                         double val_fraction) {
  auto [tr, va] = stratified_split(train_all, val_fraction, cfg.seed);
  TrainReport report = train(model, tr, va, cfg);
  ScoreSet scores = evaluate(model, eval_set);
  const double e = fiona::eer(scores);
  return {std::move(model), std::move(report), std::move(scores), e, tr.count(), va.count()};
}

void write_run(const fs::path& dir, const RunOutcome& r, nlohmann::ordered_json extra) {
  save_checkpoint(r.model, dir / "model.fmdl");
  write_scores((dir / "scores.txt").string(), r.scores);
  auto j = to_json(r.report);
  j["eval_eer"] = r.eer;
  j["parameter_count"] = r.model.parameter_count();
  j["train_count"] = r.train_count;
  j["val_count"] = r.val_count;
  j["eval_count"] = r.scores.size();
  for (auto& [k, v] : extra.items()) j[k] = v;
  write_text(dir / "report.json", j.dump(2) + "\n");
}

void print_run(const RunOutcome& r) {
  std::cout << r.report.architecture << ": " << r.report.epochs.size() << " epoch(s), best epoch "
            << r.report.best_epoch << (r.report.stopped_early ? " (early stop)" : "");
  if (r.report.skipped_batches) std::cout << ", " << r.report.skipped_batches << " degenerate batch(es) skipped";
  std::cout << "\n" << eer_line(r.eer) << "\n";
}

// ---- synth

struct SynthFlags {
  std::string out;
  std::size_t n = 1000;
  std::size_t n_eval = 500;
  std::vector<std::size_t> dims{32, 40};
  double theta = std::numbers::pi / 2;
  std::optional<double> sigma;
  double single_error = 0.15;
  double hidden_fraction = SynthConfig{}.hidden_fraction;
  double separation = 1.0;
  std::uint64_t seed = 0;
};

void setup_synth(CLI::App& app, SynthFlags& f, std::function<void()>& run) {
  auto* cmd = app.add_subcommand("synth", "Write a synthetic complementary two-modality train/eval set");
  cmd->add_option("--out", f.out, "Output directory")->required();
  cmd->add_option("--n", f.n, "Training samples per class")->capture_default_str();
  cmd->add_option("--n-eval", f.n_eval, "Evaluation samples per class")->capture_default_str();
  cmd->add_option("--dims", f.dims, "Embedding widths of modality a and b")->delimiter(',')->expected(2)
      ->capture_default_str();
  cmd->add_option("--theta", f.theta, "Complementarity angle, 0 = redundant, pi/2 = complementary")
      ->capture_default_str();
  cmd->add_option("--sigma", f.sigma, "Noise scale (default: chosen for --single-error)");
  cmd->add_option("--single-error", f.single_error, "Target single-modality Bayes error when --sigma is absent")
      ->capture_default_str();
  cmd->add_option("--hidden-fraction", f.hidden_fraction, "Share of samples hidden from each modality")
      ->capture_default_str();
  cmd->add_option("--separation", f.separation, "Class mean amplitude")->capture_default_str();
  cmd->add_option("--seed", f.seed, "Seed")->capture_default_str();
  run = [cmd, &f] {
    SynthConfig c;
    c.n_per_class = f.n;
    c.dim_a = f.dims.at(0);
    c.dim_b = f.dims.at(1);
    c.theta = f.theta;
    c.hidden_fraction = f.hidden_fraction;
    c.separation = f.separation;
    c.seed = f.seed;
    c.validate();
    c.sigma = f.sigma ? *f.sigma : synth_sigma_for_single_error(c, f.single_error);
    const SynthSplit s = synth_generate_train_eval(c, f.n_eval);
    const fs::path dir = make_out_dir(f.out);
    write_femb(s.train.sources[0], dir / "a_train.femb");
    write_femb(s.train.sources[1], dir / "b_train.femb");
    write_femb(s.eval.sources[0], dir / "a_eval.femb");
    write_femb(s.eval.sources[1], dir / "b_eval.femb");
    echo_config(cmd, dir);
    std::printf("wrote %zu train / %zu eval samples per modality to %s\n", s.train.count(), s.eval.count(),
                dir.string().c_str());
    std::printf("sigma %.6f, single-modality Bayes error %.2f%%, two-modality Bayes error %.2f%%\n", c.sigma,
                100.0 * synth_single_bayes_error(c), 100.0 * synth_joint_bayes_error(c, 401));
  };
}

// ---- train / train-fusion

struct SingleFlags {
  std::string arch, train_path, eval_path, out = "run";
  TrainFlags t;
};

void setup_train(CLI::App& app, SingleFlags& f, std::function<void()>& run) {
  auto* cmd = app.add_subcommand("train", "Train an FCN or CNN head on one embedding");
  cmd->add_option("--arch", f.arch, "Architecture")->required()->check(CLI::IsMember({"fcn", "cnn"}));
  cmd->add_option("--train", f.train_path, "Training FEMB file")->required();
  cmd->add_option("--eval", f.eval_path, "Evaluation FEMB file")->required();
  cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
  add_train_flags(cmd, f.t);
  run = [cmd, &f] {
    const EmbeddingDataset tr = read_femb(f.train_path);
    const EmbeddingDataset ev = read_femb(f.eval_path);
    const Architecture arch = parse_architecture(f.arch);
    const TrainConfig cfg = train_config(f.t, 0.0);
    Model m = build_model({arch, {tr.dim}, kDefaultProjectionDim, f.t.dropout}, f.t.seed);
    const fs::path dir = make_out_dir(f.out);
    echo_config(cmd, dir);
    const RunOutcome r = fit_and_score(std::move(m), tr, ev, cfg, f.t.val_fraction);
    write_run(dir, r, {{"train", f.train_path}, {"eval", f.eval_path}});
    print_run(r);
  };
}

struct FusionFlags {
  std::string mode, train_a, train_b, eval_a, eval_b, out = "run";
  double lambda = kDefaultLambda;
  std::size_t projection_dim = kDefaultProjectionDim;
  TrainFlags t;
};

void add_fusion_flags(CLI::App* cmd, FusionFlags& f) {
  cmd->add_option("--lambda", f.lambda, "Weight of the CKA alignment term (fiona only)")->capture_default_str();
  cmd->add_option("--projection-dim", f.projection_dim, "Width of each projected branch (fiona only)")
      ->capture_default_str();
  add_train_flags(cmd, f.t);
}

RunOutcome run_fusion(Architecture arch, const FusionFlags& f, const PairedDataset& tr, const PairedDataset& ev) {
  const TrainConfig cfg = train_config(f.t, arch == Architecture::fiona ? f.lambda : 0.0);
  Model m = build_model({arch, {tr.sources[0].dim, tr.sources[1].dim}, f.projection_dim, f.t.dropout}, f.t.seed);
  return fit_and_score(std::move(m), tr, ev, cfg, f.t.val_fraction);
}

void setup_train_fusion(CLI::App& app, FusionFlags& f, std::function<void()>& run) {
  auto* cmd = app.add_subcommand("train-fusion", "Train a concat or fiona fusion model on two embeddings");
  cmd->add_option("--mode", f.mode, "Fusion mode")->required()->check(CLI::IsMember({"concat", "fiona"}));
  cmd->add_option("--train-a", f.train_a, "Training FEMB, branch a")->required();
  cmd->add_option("--train-b", f.train_b, "Training FEMB, branch b")->required();
  cmd->add_option("--eval-a", f.eval_a, "Evaluation FEMB, branch a")->required();
  cmd->add_option("--eval-b", f.eval_b, "Evaluation FEMB, branch b")->required();
  cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
  add_fusion_flags(cmd, f);
  run = [cmd, &f] {
    const Architecture arch = parse_architecture(f.mode);
    if (arch == Architecture::concat_fusion && cmd->count("--lambda")) {
      std::cerr << "warning: --lambda is ignored for --mode concat\n";
    }
    const PairedDataset tr = pair(read_femb(f.train_a), read_femb(f.train_b));
    const PairedDataset ev = pair(read_femb(f.eval_a), read_femb(f.eval_b));
    const fs::path dir = make_out_dir(f.out);
    echo_config(cmd, dir);
    const RunOutcome r = run_fusion(arch, f, tr, ev);
    nlohmann::ordered_json extra{{"train_a", f.train_a}, {"train_b", f.train_b},
                                 {"eval_a", f.eval_a},   {"eval_b", f.eval_b}};
    if (arch == Architecture::fiona) {
      extra["lambda"] = f.lambda;
      extra["projection_dim"] = f.projection_dim;
    }
    write_run(dir, r, extra);
    print_run(r);
  };
}

// ---- eval / eer

struct EvalFlags {
  std::string checkpoint, eval_a, eval_b, out = "scores.txt";
};

void setup_eval(CLI::App& app, EvalFlags& f, std::function<void()>& run) {
  auto* cmd = app.add_subcommand("eval", "Score embeddings with a saved checkpoint");
  cmd->add_option("--checkpoint", f.checkpoint, "FMDL checkpoint")->required();
  cmd->add_option("--eval-a", f.eval_a, "FEMB file (branch a for fusion models)")->required();
  cmd->add_option("--eval-b", f.eval_b, "FEMB file for branch b (fusion models)");
  cmd->add_option("--out", f.out, "Score file to write")->capture_default_str();
  run = [&f] {
    const Model m = load_checkpoint(f.checkpoint);
    ScoreSet s;
    if (is_fusion(m.arch())) {
      if (f.eval_b.empty()) throw ConfigError("checkpoint is a fusion model; --eval-b is required");
      s = evaluate(m, pair(read_femb(f.eval_a), read_femb(f.eval_b)));
    } else {
      if (!f.eval_b.empty()) throw ConfigError("checkpoint has one branch; drop --eval-b");
      s = evaluate(m, read_femb(f.eval_a));
    }
    write_scores(f.out, s);
    std::cout << "wrote " << s.size() << " scores to " << f.out << "\n" << eer_line(fiona::eer(s)) << "\n";
  };
}

void setup_eer(CLI::App& app, std::string& path, std::function<void()>& run) {
  auto* cmd = app.add_subcommand("eer", "Equal error rate of a score file");
  cmd->add_option("--scores", path, "Score file: <id> <bonafide|deepfake> <score> per line")->required();
  run = [&path] {
    if (!fs::exists(path)) throw DataError("no such file: " + path);
    std::cout << eer_line(fiona::eer(read_scores(path))) << "\n";
  };
}

// ---- sweep

struct SweepFlags {
  std::string data, out = "sweep";
  std::vector<std::string> pairs, modes{"concat", "fiona"};
  std::vector<std::uint64_t> seeds{0};
  std::size_t jobs = 1;
  FusionFlags fusion;
};

struct Cell {
  std::string pair, mode;
  std::uint64_t seed;
  std::optional<double> eer;
  std::string error;
};

void run_cell(Cell& cell, const SweepFlags& f) {
  const auto plus = cell.pair.find('+');
  if (plus == std::string::npos || plus == 0 || plus + 1 == cell.pair.size()) {
    throw ConfigError("pair '" + cell.pair + "' must look like a+b");
  }
  const std::string a = cell.pair.substr(0, plus), b = cell.pair.substr(plus + 1);
  const fs::path d(f.data);
  const PairedDataset tr = pair(read_femb(d / (a + "_train.femb")), read_femb(d / (b + "_train.femb")));
  const PairedDataset ev = pair(read_femb(d / (a + "_eval.femb")), read_femb(d / (b + "_eval.femb")));
  FusionFlags ff = f.fusion;
  ff.t.seed = cell.seed;
  cell.eer = run_fusion(parse_architecture(cell.mode), ff, tr, ev).eer;
}

std::string pct(double e) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * e);
  return buf;
}

void setup_sweep(CLI::App& app, SweepFlags& f, std::function<void()>& run, int& exit_code) {
  auto* cmd = app.add_subcommand("sweep", "Run fusion models over a grid of embedding pairs, modes and seeds");
  cmd->add_option("--data", f.data, "Directory with <name>_train.femb and <name>_eval.femb files")->required();
  cmd->add_option("--pairs", f.pairs, "Embedding pairs, e.g. xvector+mert330m")->delimiter(',')->required();
  cmd->add_option("--modes", f.modes, "Fusion modes")->delimiter(',')->capture_default_str()
      ->check(CLI::IsMember({"concat", "fiona"}));
  cmd->add_option("--seeds", f.seeds, "Seeds")->delimiter(',')->capture_default_str();
  cmd->add_option("--jobs", f.jobs, "Grid cells trained in parallel")->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
  add_fusion_flags(cmd, f.fusion);
  cmd->remove_option(cmd->get_option("--seed"));  // --seeds sets it per cell
  run = [cmd, &f, &exit_code] {
    if (cmd->count("--lambda") && std::find(f.modes.begin(), f.modes.end(), "fiona") == f.modes.end()) {
      std::cerr << "warning: --lambda is ignored for --mode concat\n";
    }
    std::vector<Cell> cells;
    for (const auto& p : f.pairs)
      for (const auto& m : f.modes)
        for (auto s : f.seeds) cells.push_back({p, m, s, std::nullopt, ""});
    const fs::path dir = make_out_dir(f.out);
    echo_config(cmd, dir);

    std::atomic<std::size_t> next{0};
    std::mutex log_mu;
    auto worker = [&] {
      for (std::size_t i = next++; i < cells.size(); i = next++) {
        Cell& c = cells[i];
        try {
          run_cell(c, f);
        } catch (const std::exception& e) {
          c.error = e.what();
        }
        std::lock_guard lock(log_mu);
        std::cerr << "[" << i + 1 << "/" << cells.size() << "] " << c.pair << " " << c.mode << " seed " << c.seed
                  << ": " << (c.eer ? eer_line(*c.eer) : "failed: " + c.error) << "\n";
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < std::min(f.jobs, cells.size()); ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::ostringstream csv;
    csv << "pair,mode,seed,eer,error\n";
    std::size_t failed = 0;
    for (const auto& c : cells) {
      std::string err = c.error;
      std::replace(err.begin(), err.end(), '"', '\'');
      csv << c.pair << ',' << c.mode << ',' << c.seed << ',';
      if (c.eer) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", *c.eer);
        csv << buf << ",\n";
      } else {
        ++failed;
        csv << "failed,\"" << err << "\"\n";
      }
    }
    write_text(dir / "sweep.csv", csv.str());

    // Mean EER (%) per pair and mode over the seeds that succeeded.
    std::ostringstream md;
    md << "| Pair |";
    for (const auto& m : f.modes) md << ' ' << m << " EER (%) |";
    md << "\n|---|";
    for (std::size_t i = 0; i < f.modes.size(); ++i) md << "---:|";
    md << "\n";
    for (const auto& p : f.pairs) {
      md << "| " << p << " |";
      for (const auto& m : f.modes) {
        double sum = 0.0;
        std::size_t ok = 0, n = 0;
        for (const auto& c : cells)
          if (c.pair == p && c.mode == m) {
            ++n;
            if (c.eer) sum += *c.eer, ++ok;
          }
        md << ' ' << (ok ? pct(sum / static_cast<double>(ok)) : "failed");
        if (ok && ok < n) md << " (" << n - ok << " failed)";
        md << " |";
      }
      md << "\n";
    }
    write_text(dir / "sweep.md", md.str());
    std::cout << md.str() << cells.size() << " cell(s), " << failed << " failed\n";
    if (failed == cells.size()) exit_code = kExitInput;
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deepfake detection heads over foundation-model embeddings"};
  app.require_subcommand(1);
  // one --config for every subcommand; its keys sit under a [subcommand] table
  app.set_config("--config", "", "TOML file of flag values under a [subcommand] table (flags on the command line win)");
  app.fallthrough(true);

  SynthFlags synth_flags;
  SingleFlags train_flags;
  FusionFlags fusion_flags;
  EvalFlags eval_flags;
  std::string eer_path;
  SweepFlags sweep_flags;
  int exit_code = 0;
  std::map<std::string, std::function<void()>> commands;
  setup_synth(app, synth_flags, commands["synth"]);
  setup_train(app, train_flags, commands["train"]);
  setup_train_fusion(app, fusion_flags, commands["train-fusion"]);
  setup_eval(app, eval_flags, commands["eval"]);
  setup_eer(app, eer_path, commands["eer"]);
  setup_sweep(app, sweep_flags, commands["sweep"], exit_code);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    commands.at(name)();
    return exit_code;
  } catch (const MetricUndefinedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const DegenerateBatchError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const Error& e) {
    // data, format, config, dimension, degenerate-input and contract errors
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
