#pragma once

// Equal error rate over detector scores (higher = more deepfake-like).
//
//   FAR(t) = fraction of bonafide trials scored >= t   (bonafide flagged as deepfake)
//   FRR(t) = fraction of deepfake trials scored <  t   (deepfake missed)
//
// Operating points are taken at -inf, every distinct score, and +inf. FAR - FRR
// is non-increasing along that list; the EER is the value at the first point
// where it reaches zero, linearly interpolated from the preceding point when
// the sign change falls between two operating points. Swapping the FAR/FRR
// roles yields the same crossing value.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fiona/error.hpp"
#include "fiona/labels.hpp"

namespace fiona {

struct ScoreSet {
  std::vector<std::string> ids;  // optional; empty or one per score
  std::vector<double> scores;
  std::vector<Label> labels;

  std::size_t size() const noexcept { return scores.size(); }

  void validate() const {
    if (scores.size() != labels.size()) throw DataError("score/label count mismatch");
    if (!ids.empty() && ids.size() != scores.size()) throw DataError("score/id count mismatch");
    for (double s : scores)
      if (!std::isfinite(s)) throw DataError("non-finite score");
  }
};

struct OperatingPoint {
  double threshold;
  double far;
  double frr;
};

inline std::vector<OperatingPoint> roc_points(const ScoreSet& s) {
  s.validate();
  std::vector<std::pair<double, Label>> trials;
  trials.reserve(s.size());
  std::size_t n_bona = 0, n_fake = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    trials.emplace_back(s.scores[i], s.labels[i]);
    (s.labels[i] == Label::bonafide ? n_bona : n_fake) += 1;
  }
  if (n_bona == 0 || n_fake == 0) {
    throw MetricUndefinedError("EER undefined: score set needs both bonafide and deepfake trials");
  }
  std::sort(trials.begin(), trials.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<OperatingPoint> pts;
  pts.push_back({-inf, 1.0, 0.0});
  // Before visiting the group at score v, `bona_below` / `fake_below` count trials < v.
  std::size_t bona_below = 0, fake_below = 0;
  for (std::size_t i = 0; i < trials.size();) {
    const double v = trials[i].first;
    pts.push_back({v, static_cast<double>(n_bona - bona_below) / static_cast<double>(n_bona),
                   static_cast<double>(fake_below) / static_cast<double>(n_fake)});
    for (; i < trials.size() && trials[i].first == v; ++i)
      (trials[i].second == Label::bonafide ? bona_below : fake_below) += 1;
  }
  pts.push_back({inf, 0.0, 1.0});
  return pts;
}

inline double eer(const ScoreSet& s) {
  const auto pts = roc_points(s);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double d = pts[i].far - pts[i].frr;
    if (d > 0.0) continue;
    if (d == 0.0) return pts[i].far;
    const double d_prev = pts[i - 1].far - pts[i - 1].frr;
    const double alpha = d_prev / (d_prev - d);
    return pts[i - 1].far + alpha * (pts[i].far - pts[i - 1].far);
  }
  return pts.back().far;  // unreachable: the +inf sentinel has FAR - FRR = -1
}

// Score file: one trial per line, "<utt_id> <bonafide|deepfake> <score>".
inline void write_scores(std::ostream& os, const ScoreSet& s) {
  s.validate();
  os << std::setprecision(17);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::string id = s.ids.empty() ? "trial" + std::to_string(i) : s.ids[i];
    os << id << ' ' << to_string(s.labels[i]) << ' ' << s.scores[i] << '\n';
  }
}

inline void write_scores(const std::string& path, const ScoreSet& s) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open score file for writing: " + path);
  write_scores(os, s);
}

inline ScoreSet read_scores(std::istream& is, const std::string& origin = "<stream>") {
  ScoreSet out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string id, label, score_text, extra;
    auto fail = [&](const std::string& why) {
      return FormatError(origin + ":" + std::to_string(lineno) + ": " + why);
    };
    if (!(ls >> id >> label >> score_text)) throw fail("expected '<id> <label> <score>'");
    if (ls >> extra) throw fail("trailing field '" + extra + "'");
    Label l;
    try {
      l = parse_label(label);
    } catch (const DataError&) {
      throw fail("label must be bonafide or deepfake, got '" + label + "'");
    }
    double v = 0.0;
    std::size_t used = 0;
    try {
      v = std::stod(score_text, &used);
    } catch (const std::exception&) {
      throw fail("score is not a number: '" + score_text + "'");
    }
    if (used != score_text.size() || !std::isfinite(v)) throw fail("bad score '" + score_text + "'");
    out.ids.push_back(std::move(id));
    out.labels.push_back(l);
    out.scores.push_back(v);
  }
  return out;
}

inline ScoreSet read_scores(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open score file: " + path);
  return read_scores(is, path);
}

}  // namespace fiona
