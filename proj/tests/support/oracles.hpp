#pragma once

// Independent brute-force references shared by the unit and acceptance tests.
// Each one recomputes a quantity by enumeration or straight-line code, never
// through the dynamic programs it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "segscribe/bigram_lm.hpp"
#include "segscribe/hmm.hpp"
#include "segscribe/segfeat.hpp"
#include "segscribe/semimarkov.hpp"

namespace oracle {

using namespace segscribe;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNegInf = -kInf;

inline double lse(const std::vector<double>& v) {
  double m = -kInf;
  for (double x : v) m = std::max(m, x);
  if (m == -kInf) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

struct Enumerated {
  LabeledSegmentation path;
  double score;
};

// Every labeled segmentation with segments <= L, scored edge by edge.
inline std::vector<Enumerated> enumerate(const SegmentScores& s) {
  std::vector<Enumerated> out;
  std::vector<Label> labels;
  std::vector<int> bounds{0};
  std::function<void(int, int, double)> rec = [&](int t, int prev, double acc) {
    if (t == s.num_frames) {
      if (acc > -kInf) out.push_back({LabeledSegmentation(labels, bounds), acc});
      return;
    }
    for (int d = 1; d <= s.max_len && t + d <= s.num_frames; ++d) {
      for (int y = 0; y < s.num_labels(); ++y) {
        labels.push_back(s.labels[static_cast<std::size_t>(y)]);
        bounds.push_back(t + d);
        rec(t + d, y, acc + s.trans(prev, y) + s.unary(s.row(t, d), y));
        labels.pop_back();
        bounds.pop_back();
      }
    }
  };
  rec(0, s.start(), 0.0);
  return out;
}

inline SegmentScores random_scores(std::mt19937_64& rng, int T, int Y, int L, bool boundaries) {
  std::normal_distribution<double> n(0.0, 1.5);
  SegmentScores s;
  s.num_frames = T;
  s.max_len = L;
  for (int y = 0; y < Y; ++y) s.labels.push_back(y);
  if (boundaries && Y >= 3) {
    s.labels[0] = kBos;
    s.labels[static_cast<std::size_t>(Y - 1)] = kEos;
  }
  s.unary = Matrix(T * L, Y);
  for (Eigen::Index i = 0; i < s.unary.size(); ++i) s.unary.data()[i] = n(rng);
  s.trans = Matrix(Y + 1, Y);
  for (Eigen::Index i = 0; i < s.trans.size(); ++i) s.trans.data()[i] = n(rng);
  if (boundaries) s.trans = constrained_transitions(s.labels, s.trans);
  return s;
}

// Top-down recursive Levenshtein distance.
inline int edit_oracle(const std::vector<Label>& a, const std::vector<Label>& b) {
  const std::size_t w = b.size() + 1;
  std::vector<int> memo((a.size() + 1) * w, -1);
  std::function<int(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> int {
    if (i == a.size()) return static_cast<int>(b.size() - j);
    if (j == b.size()) return static_cast<int>(a.size() - i);
    int& slot = memo[i * w + j];
    if (slot >= 0) return slot;
    int best = go(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
    best = std::min(best, go(i + 1, j) + 1);
    best = std::min(best, go(i, j + 1) + 1);
    return slot = best;
  };
  return go(0, 0);
}

inline std::vector<std::vector<Label>> all_sequences(int max_len, int alphabet) {
  std::vector<std::vector<Label>> out{{}};
  std::vector<std::vector<Label>> frontier{{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<std::vector<Label>> next;
    for (const auto& s : frontier) {
      for (int a = 0; a < alphabet; ++a) {
        auto t = s;
        t.push_back(a);
        next.push_back(t);
      }
    }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

inline Matrix random_posteriors(int T, int V, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Matrix p(T, V);
  for (int t = 0; t < T; ++t) {
    for (int v = 0; v < V; ++v) p(t, v) = u(rng);
    p.row(t) /= p.row(t).sum();
  }
  return p;
}

// Straight-line reference for one template of one span.
inline std::vector<double> segment_feature(FeatureTemplate tpl, const SegmentInputs& in, int q, int qe, Label y) {
  const Matrix& g = in.posteriors;
  const int V = static_cast<int>(g.cols()), T = static_cast<int>(g.rows()), n = qe - q;
  std::vector<double> out;
  auto mean_of = [&](int a, int b, int v) {
    double s = 0.0;
    for (int t = a; t < b; ++t) s += g(t, v);
    return s / (b - a);
  };
  auto max_of = [&](int a, int b, int v) {
    double m = -1.0;
    for (int t = a; t < b; ++t) m = std::max(m, g(t, v));
    return m;
  };
  auto clampf = [&](int t) { return t < 0 ? 0 : (t > T - 1 ? T - 1 : t); };
  switch (tpl) {
    case FeatureTemplate::kMean:
      for (int v = 0; v < V; ++v) out.push_back(mean_of(q, qe, v));
      break;
    case FeatureTemplate::kMax:
      for (int v = 0; v < V; ++v) out.push_back(max_of(q, qe, v));
      break;
    case FeatureTemplate::kDivS:
    case FeatureTemplate::kDivM:
      for (int j = 0; j < 3; ++j) {
        int a = q + (j * n) / 3, b = q + ((j + 1) * n) / 3;
        if (a == b) {
          a = std::min(a, qe - 1);
          b = a + 1;
        }
        for (int v = 0; v < V; ++v) out.push_back(tpl == FeatureTemplate::kDivS ? mean_of(a, b, v) : max_of(a, b, v));
      }
      break;
    case FeatureTemplate::kPeak: {
      // Count strict interior local minima by scanning plateaus.
      int minima = 0;
      int t = q;
      double left = NAN;
      while (t < qe) {
        int e = t;
        while (e + 1 < qe && in.derivative(e + 1) == in.derivative(t)) ++e;
        if (t > q && e < qe - 1 && in.derivative(t) < left && in.derivative(t) < in.derivative(e + 1)) ++minima;
        left = in.derivative(t);
        t = e + 1;
      }
      out.push_back(minima == 1 ? 1.0 : 0.0);
      break;
    }
    case FeatureTemplate::kBaseline: {
      std::set<Label> labels(in.baseline.begin() + q, in.baseline.begin() + qe);
      out.push_back(labels.size() == 1 && *labels.begin() == y ? 1.0 : -1.0);
      break;
    }
    case FeatureTemplate::kSamples:
      for (double f : {0.16, 0.50, 0.84}) {
        const int t = std::min(q + static_cast<int>(std::floor(n * f + 0.5)), qe - 1);
        for (int v = 0; v < V; ++v) out.push_back(g(t, v));
      }
      break;
    case FeatureTemplate::kLBoundary:
      for (int k = -1; k <= 1; ++k)
        for (int v = 0; v < V; ++v) out.push_back(g(clampf(q + k), v));
      break;
    case FeatureTemplate::kRBoundary:
      for (int k = -1; k <= 1; ++k)
        for (int v = 0; v < V; ++v) out.push_back(g(clampf(qe - 1 + k), v));
      break;
    case FeatureTemplate::kDuration:
      for (int k = 1; k <= 31; ++k) out.push_back((n == k || (k == 31 && n > 31)) ? 1.0 : 0.0);
      break;
    case FeatureTemplate::kBias:
      out.push_back(1.0);
      break;
    case FeatureTemplate::kLm:
      break;
  }
  return out;
}

// Brute force for one-state units: every unit sequence BOS x+ EOS with every
// positive duration vector.
struct Best {
  double score = kNegInf;
  LabeledSegmentation seg;
};

inline void enumerate_units(const TandemHmm& m, const Matrix& em, const BigramLm* lm, double lmw, double pen,
               const std::vector<Label>& letters, std::vector<Label>& units, std::vector<int>& bounds, Best* best) {
  const int T = static_cast<int>(em.rows());
  const int t0 = bounds.back();
  if (t0 == T) return;
  auto finish_unit = [&](Label u, int a, int b) {
    double s = 0.0;
    for (int t = a; t < b; ++t) s += em(t, m.state(u, 0));
    s += (b - a - 1) * std::log(m.transitions()(m.state(u, 0), 0));
    return s;
  };
  auto score_of = [&](const std::vector<Label>& us, const std::vector<int>& bs) {
    double s = 0.0;
    for (std::size_t i = 0; i < us.size(); ++i) {
      s += finish_unit(us[i], bs[i], bs[i + 1]);
      if (i + 1 < us.size()) {
        s += std::log(m.transitions()(m.state(us[i], 0), 1)) + pen;
        if (lm != nullptr) s += lmw * lm->logprob(us[i], us[i + 1]);
      }
    }
    return s;
  };
  // Close with EOS over [t0, T) when at least one letter was placed.
  if (units.size() >= 2) {
    units.push_back(kEos);
    bounds.push_back(T);
    const double s = score_of(units, bounds);
    if (s > best->score) *best = {s, LabeledSegmentation(units, bounds)};
    units.pop_back();
    bounds.pop_back();
  }
  for (Label l : letters) {
    for (int t1 = t0 + 1; t1 < T; ++t1) {
      units.push_back(l);
      bounds.push_back(t1);
      enumerate_units(m, em, lm, lmw, pen, letters, units, bounds, best);
      units.pop_back();
      bounds.pop_back();
    }
  }
}

inline Best brute_force(const TandemHmm& m, const Matrix& em, const BigramLm* lm, double lmw, double pen,
                 const std::vector<Label>& letters) {
  Best best;
  const int T = static_cast<int>(em.rows());
  for (int b = 1; b < T; ++b) {
    std::vector<Label> units{kBos};
    std::vector<int> bounds{0, b};
    enumerate_units(m, em, lm, lmw, pen, letters, units, bounds, &best);
  }
  return best;
}

}  // namespace oracle
