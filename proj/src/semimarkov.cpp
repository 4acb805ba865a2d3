#include "segscribe/semimarkov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "segscribe/error.hpp"

namespace segscribe {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_shapes(const SegmentScores& s) {
  const int Y = s.num_labels();
  if (s.num_frames < 1) throw DataError("semi-Markov chart needs at least one frame");
  if (s.max_len < 1) throw UsageError("maximum segment length must be positive");
  if (Y < 1) throw UsageError("semi-Markov chart needs at least one label");
  if (s.unary.rows() != static_cast<Eigen::Index>(s.num_frames) * s.max_len || s.unary.cols() != Y ||
      s.trans.rows() != Y + 1 || s.trans.cols() != Y) {
    throw UsageError("segment score shapes are inconsistent");
  }
}

// alpha/beta plus the per-(q, y) entry and exit terms used by the marginals.
struct Chart {
  ForwardBackward fb;
  Matrix enter;  // T x Y: log score of reaching q ready to start a segment labelled y
  Matrix leave;  // T x Y: log score of a segment labelled y starting at q, through to T
};

Chart run_chart(const SegmentScores& s) {
  check_shapes(s);
  const int T = s.num_frames, L = s.max_len, Y = s.num_labels();
  Chart c;
  c.fb.alpha = Matrix::Constant(T + 1, Y, kNegInf);
  c.fb.beta = Matrix::Constant(T + 1, Y, kNegInf);
  c.enter = Matrix::Constant(T, Y, kNegInf);
  c.leave = Matrix::Constant(T, Y, kNegInf);
  for (int q = 0; q < T; ++q) {
    for (int y = 0; y < Y; ++y) {
      double e = kNegInf;
      if (q == 0) {
        e = s.trans(s.start(), y);
      } else {
        for (int p = 0; p < Y; ++p) e = log_sum_exp(e, c.fb.alpha(q, p) + s.trans(p, y));
      }
      c.enter(q, y) = e;
      if (e == kNegInf) continue;
      for (int d = 1; d <= L && q + d <= T; ++d) {
        c.fb.alpha(q + d, y) = log_sum_exp(c.fb.alpha(q + d, y), e + s.unary(s.row(q, d), y));
      }
    }
  }
  double zf = kNegInf;
  for (int y = 0; y < Y; ++y) zf = log_sum_exp(zf, c.fb.alpha(T, y));
  c.fb.log_z_forward = zf;

  c.fb.beta.row(T).setZero();
  for (int q = T - 1; q >= 0; --q) {
    for (int y = 0; y < Y; ++y) {
      double b = kNegInf;
      for (int d = 1; d <= L && q + d <= T; ++d) b = log_sum_exp(b, s.unary(s.row(q, d), y) + c.fb.beta(q + d, y));
      c.leave(q, y) = b;
    }
    for (int p = 0; p < Y; ++p) {
      double b = kNegInf;
      for (int y = 0; y < Y; ++y) b = log_sum_exp(b, s.trans(p, y) + c.leave(q, y));
      c.fb.beta(q, p) = b;
    }
  }
  double zb = kNegInf;
  for (int y = 0; y < Y; ++y) zb = log_sum_exp(zb, s.trans(s.start(), y) + c.leave(0, y));
  c.fb.log_z_backward = zb;
  return c;
}

std::vector<int> positions_of(const SegmentScores& s, const std::vector<Label>& labels) {
  std::vector<int> g;
  g.reserve(labels.size());
  for (Label l : labels) {
    const int p = s.position(l);
    if (p < 0) throw DataError("label outside the model's label set");
    g.push_back(p);
  }
  return g;
}

// a(t, i): segmentations of [0, t) into the first i + 1 gold labels.
// b(t, i): completions of [t, T) after gold label i ended at t.
struct ConstrainedChart {
  Matrix a, b;
  double log_z = kNegInf;
};

ConstrainedChart run_constrained(const SegmentScores& s, const std::vector<int>& g) {
  check_shapes(s);
  const int T = s.num_frames, L = s.max_len, K = static_cast<int>(g.size());
  if (K == 0) throw DataError("empty label sequence");
  ConstrainedChart c;
  c.a = Matrix::Constant(T + 1, K, kNegInf);
  c.b = Matrix::Constant(T + 1, K, kNegInf);
  for (int i = 0; i < K; ++i) {
    for (int q = 0; q < T; ++q) {
      const double in = i == 0 ? (q == 0 ? s.trans(s.start(), g[0]) : kNegInf) : c.a(q, i - 1) + s.trans(g[i - 1], g[i]);
      if (in == kNegInf) continue;
      for (int d = 1; d <= L && q + d <= T; ++d) {
        c.a(q + d, i) = log_sum_exp(c.a(q + d, i), in + s.unary(s.row(q, d), g[i]));
      }
    }
  }
  c.log_z = c.a(T, K - 1);
  c.b(T, K - 1) = 0.0;
  for (int i = K - 2; i >= 0; --i) {
    for (int t = T - 1; t >= 1; --t) {
      double v = kNegInf;
      for (int d = 1; d <= L && t + d <= T; ++d) {
        v = log_sum_exp(v, s.trans(g[i], g[i + 1]) + s.unary(s.row(t, d), g[i + 1]) + c.b(t + d, i + 1));
      }
      c.b(t, i) = v;
    }
  }
  return c;
}

LabeledSegmentation make_path(const SegmentScores& s, std::vector<std::pair<int, int>> rev) {
  // rev holds (start, label position) from the last segment backwards.
  std::reverse(rev.begin(), rev.end());
  std::vector<Label> labels;
  std::vector<int> bounds;
  for (auto& [q, y] : rev) {
    bounds.push_back(q);
    labels.push_back(s.labels[static_cast<std::size_t>(y)]);
  }
  bounds.push_back(s.num_frames);
  return {labels, bounds};
}

}  // namespace

int SegmentScores::position(Label l) const {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == l) return static_cast<int>(i);
  }
  return -1;
}

double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

Matrix constrained_transitions(const std::vector<Label>& labels, Matrix trans) {
  const int Y = static_cast<int>(labels.size());
  for (int y = 0; y < Y; ++y) {
    if (labels[static_cast<std::size_t>(y)] == kBos) {
      for (int p = 0; p < Y; ++p) trans(p, y) = kNegInf;
    }
    if (labels[static_cast<std::size_t>(y)] == kEos) trans.row(y).setConstant(kNegInf);
  }
  return trans;
}

ForwardBackward forward_backward(const SegmentScores& s) { return run_chart(s).fb; }

double log_partition(const SegmentScores& s) { return run_chart(s).fb.log_z_forward; }

EdgeMarginals edge_marginals(const SegmentScores& s) {
  const Chart c = run_chart(s);
  const int T = s.num_frames, L = s.max_len, Y = s.num_labels();
  const double z = c.fb.log_z_forward;
  if (!std::isfinite(z)) throw DataError("semi-Markov chart has no path with finite score");
  EdgeMarginals m;
  m.log_z = z;
  m.unary = Matrix::Zero(s.unary.rows(), Y);
  m.trans = Matrix::Zero(Y + 1, Y);
  for (int q = 0; q < T; ++q) {
    for (int y = 0; y < Y; ++y) {
      const double e = c.enter(q, y);
      if (e == kNegInf) continue;
      for (int d = 1; d <= L && q + d <= T; ++d) {
        m.unary(s.row(q, d), y) = std::exp(e + s.unary(s.row(q, d), y) + c.fb.beta(q + d, y) - z);
      }
      if (q == 0) {
        m.trans(s.start(), y) = std::exp(s.trans(s.start(), y) + c.leave(0, y) - z);
      } else {
        for (int p = 0; p < Y; ++p) m.trans(p, y) += std::exp(c.fb.alpha(q, p) + s.trans(p, y) + c.leave(q, y) - z);
      }
    }
  }
  return m;
}

double constrained_log_partition(const SegmentScores& s, const std::vector<Label>& labels) {
  return run_constrained(s, positions_of(s, labels)).log_z;
}

EdgeMarginals constrained_marginals(const SegmentScores& s, const std::vector<Label>& labels) {
  const auto g = positions_of(s, labels);
  const ConstrainedChart c = run_constrained(s, g);
  if (!std::isfinite(c.log_z)) throw DataError("label sequence admits no segmentation within the length limit");
  const int T = s.num_frames, L = s.max_len, K = static_cast<int>(g.size()), Y = s.num_labels();
  EdgeMarginals m;
  m.log_z = c.log_z;
  m.unary = Matrix::Zero(s.unary.rows(), Y);
  m.trans = Matrix::Zero(Y + 1, Y);
  for (int i = 0; i < K; ++i) {
    m.trans(i == 0 ? s.start() : g[i - 1], g[i]) += 1.0;
    for (int q = 0; q < T; ++q) {
      const double in = i == 0 ? (q == 0 ? s.trans(s.start(), g[0]) : kNegInf) : c.a(q, i - 1) + s.trans(g[i - 1], g[i]);
      if (in == kNegInf) continue;
      for (int d = 1; d <= L && q + d <= T; ++d) {
        m.unary(s.row(q, d), g[i]) += std::exp(in + s.unary(s.row(q, d), g[i]) + c.b(q + d, i) - c.log_z);
      }
    }
  }
  return m;
}

double path_score(const SegmentScores& s, const LabeledSegmentation& path) {
  check_shapes(s);
  if (path.num_frames() != s.num_frames) throw DataError("path length differs from the chart");
  double total = 0.0;
  int prev = s.start();
  for (int i = 0; i < path.size(); ++i) {
    const int d = path.end(i) - path.start(i);
    if (d > s.max_len) throw DataError("segment longer than the maximum segment length");
    const int y = s.position(path.labels()[static_cast<std::size_t>(i)]);
    if (y < 0) throw DataError("label outside the model's label set");
    total += s.trans(prev, y) + s.unary(s.row(path.start(i), d), y);
    prev = y;
  }
  return total;
}

ScoredPath viterbi(const SegmentScores& s) {
  check_shapes(s);
  const int T = s.num_frames, L = s.max_len, Y = s.num_labels();
  Matrix delta = Matrix::Constant(T + 1, Y, kNegInf);
  std::vector<int> back_q(static_cast<std::size_t>((T + 1) * Y), -1), back_p(back_q.size(), -1);
  std::vector<Vector> enter(static_cast<std::size_t>(T));
  std::vector<std::vector<int>> enter_arg(static_cast<std::size_t>(T));
  for (int q = 0; q < T; ++q) {
    Vector& e = enter[static_cast<std::size_t>(q)];
    auto& arg = enter_arg[static_cast<std::size_t>(q)];
    e = Vector::Constant(Y, kNegInf);
    arg.assign(static_cast<std::size_t>(Y), -1);
    for (int y = 0; y < Y; ++y) {
      if (q == 0) {
        e(y) = s.trans(s.start(), y);
        arg[static_cast<std::size_t>(y)] = s.start();
        continue;
      }
      for (int p = 0; p < Y; ++p) {
        const double v = delta(q, p) + s.trans(p, y);
        if (v > e(y)) {
          e(y) = v;
          arg[static_cast<std::size_t>(y)] = p;
        }
      }
    }
    // delta(t) for every t reachable from q only needs enter(q') for q' < t,
    // so delta(q + 1) is final after this sweep over q' <= q.
    const int t = q + 1;
    for (int y = 0; y < Y; ++y) {
      for (int d = std::min(L, t); d >= 1; --d) {
        const int qs = t - d;
        const double v = enter[static_cast<std::size_t>(qs)](y) + s.unary(s.row(qs, d), y);
        if (v > delta(t, y)) {
          delta(t, y) = v;
          back_q[static_cast<std::size_t>(t * Y + y)] = qs;
          back_p[static_cast<std::size_t>(t * Y + y)] = enter_arg[static_cast<std::size_t>(qs)][static_cast<std::size_t>(y)];
        }
      }
    }
  }
  int y = -1;
  double best = kNegInf;
  for (int k = 0; k < Y; ++k) {
    if (delta(T, k) > best) {
      best = delta(T, k);
      y = k;
    }
  }
  if (y < 0) throw DataError("semi-Markov chart has no path with finite score");
  std::vector<std::pair<int, int>> rev;
  int t = T;
  while (t > 0) {
    const int q = back_q[static_cast<std::size_t>(t * Y + y)];
    rev.emplace_back(q, y);
    y = back_p[static_cast<std::size_t>(t * Y + y)];
    t = q;
  }
  return {make_path(s, std::move(rev)), best};
}

std::vector<ScoredPath> kbest(const SegmentScores& s, int k) {
  check_shapes(s);
  if (k < 1) throw UsageError("k-best needs k >= 1");
  const int T = s.num_frames, L = s.max_len, Y = s.num_labels();
  struct Entry {
    double score;
    int q, p, r;
  };
  // Candidate ordering: higher score, then earlier boundary, smaller label, lower rank.
  auto worse = [](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score < b.score;
    if (a.q != b.q) return a.q > b.q;
    if (a.p != b.p) return a.p > b.p;
    return a.r > b.r;
  };
  std::vector<std::vector<Entry>> lists(static_cast<std::size_t>((T + 1) * Y));
  auto list = [&](int t, int y) -> std::vector<Entry>& { return lists[static_cast<std::size_t>(t * Y + y)]; };

  for (int t = 1; t <= T; ++t) {
    for (int y = 0; y < Y; ++y) {
      std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> heap(worse);
      auto cand = [&](int q, int p, int r) {
        const double u = s.unary(s.row(q, t - q), y);
        if (q == 0) return u + s.trans(s.start(), y);
        return list(q, p)[static_cast<std::size_t>(r)].score + s.trans(p, y) + u;
      };
      for (int d = 1; d <= std::min(L, t); ++d) {
        const int q = t - d;
        if (q == 0) {
          const double v = cand(0, s.start(), 0);
          if (v != kNegInf) heap.push({v, 0, s.start(), 0});
          continue;
        }
        for (int p = 0; p < Y; ++p) {
          if (list(q, p).empty()) continue;
          const double v = cand(q, p, 0);
          if (v != kNegInf) heap.push({v, q, p, 0});
        }
      }
      auto& out = list(t, y);
      while (!heap.empty() && static_cast<int>(out.size()) < k) {
        Entry e = heap.top();
        heap.pop();
        out.push_back(e);
        if (e.q > 0 && e.r + 1 < static_cast<int>(list(e.q, e.p).size())) {
          const double v = cand(e.q, e.p, e.r + 1);
          if (v != kNegInf) heap.push({v, e.q, e.p, e.r + 1});
        }
      }
    }
  }

  // Final merge over the last label; q holds T and p the label.
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> heap(worse);
  for (int y = 0; y < Y; ++y) {
    if (!list(T, y).empty()) heap.push({list(T, y)[0].score, T, y, 0});
  }
  std::vector<ScoredPath> paths;
  while (!heap.empty() && static_cast<int>(paths.size()) < k) {
    Entry e = heap.top();
    heap.pop();
    if (e.r + 1 < static_cast<int>(list(T, e.p).size())) heap.push({list(T, e.p)[e.r + 1].score, T, e.p, e.r + 1});
    std::vector<std::pair<int, int>> rev;
    int t = T, y = e.p, r = e.r;
    while (t > 0) {
      const Entry& cur = list(t, y)[static_cast<std::size_t>(r)];
      rev.emplace_back(cur.q, y);
      t = cur.q;
      y = cur.p;
      r = cur.r;
    }
    paths.push_back({make_path(s, std::move(rev)), e.score});
  }
  if (paths.empty()) throw DataError("semi-Markov chart has no path with finite score");
  return paths;
}

LabeledSegmentation LatticePath::segmentation(const Lattice& lat) const {
  std::vector<Label> labels;
  std::vector<int> bounds{0};
  for (int e : edges) {
    labels.push_back(lat.edges()[static_cast<std::size_t>(e)].label);
    bounds.push_back(lat.edges()[static_cast<std::size_t>(e)].end);
  }
  return {labels, bounds};
}

namespace {

void check_lattice(const LatticeScores& s) {
  if (!s.lattice) throw UsageError("lattice scores without a lattice");
  const auto E = s.lattice->edges().size();
  const auto Y = static_cast<Eigen::Index>(s.labels.size());
  if (static_cast<std::size_t>(s.unary.size()) != E || s.label_pos.size() != E || s.trans.rows() != Y + 1 ||
      s.trans.cols() != Y) {
    throw UsageError("lattice score shapes are inconsistent");
  }
}

std::vector<int> edges_by_start(const Lattice& lat) {
  std::vector<int> order(lat.edges().size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return lat.edges()[static_cast<std::size_t>(a)].start < lat.edges()[static_cast<std::size_t>(b)].start; });
  return order;
}

}  // namespace

LatticePath lattice_viterbi(const LatticeScores& s) {
  check_lattice(s);
  const auto& edges = s.lattice->edges();
  const int E = static_cast<int>(edges.size()), T = s.lattice->num_frames();
  std::vector<double> best(static_cast<std::size_t>(E), kNegInf);
  std::vector<int> back(static_cast<std::size_t>(E), -1);
  std::vector<std::vector<int>> ending(static_cast<std::size_t>(T) + 1);
  for (int e : edges_by_start(*s.lattice)) {
    const auto& ed = edges[static_cast<std::size_t>(e)];
    const int y = s.label_pos[static_cast<std::size_t>(e)];
    double v = ed.start == 0 ? s.trans(s.start(), y) : kNegInf;
    int arg = -1;
    for (int f : ending[static_cast<std::size_t>(ed.start)]) {
      const double c = best[static_cast<std::size_t>(f)] + s.trans(s.label_pos[static_cast<std::size_t>(f)], y);
      if (c > v) {
        v = c;
        arg = f;
      }
    }
    best[static_cast<std::size_t>(e)] = v + s.unary(e);
    back[static_cast<std::size_t>(e)] = arg;
    ending[static_cast<std::size_t>(ed.end)].push_back(e);
  }
  int last = -1;
  double top = kNegInf;
  for (int e : ending[static_cast<std::size_t>(T)]) {
    if (best[static_cast<std::size_t>(e)] > top) {
      top = best[static_cast<std::size_t>(e)];
      last = e;
    }
  }
  if (last < 0) throw DataError("lattice has no complete path with finite score");
  LatticePath path;
  path.score = top;
  for (int e = last; e >= 0; e = back[static_cast<std::size_t>(e)]) path.edges.push_back(e);
  std::reverse(path.edges.begin(), path.edges.end());
  return path;
}

EdgeMarginals lattice_marginals(const LatticeScores& s, const std::vector<Label>* gold) {
  check_lattice(s);
  const auto& edges = s.lattice->edges();
  const int E = static_cast<int>(edges.size()), T = s.lattice->num_frames();
  const int Y = static_cast<int>(s.labels.size());
  const bool restricted = gold && !gold->empty();
  std::vector<int> g;
  if (restricted) {
    for (Label l : *gold) {
      auto it = std::find(s.labels.begin(), s.labels.end(), l);
      if (it == s.labels.end()) throw DataError("label outside the model's label set");
      g.push_back(static_cast<int>(it - s.labels.begin()));
    }
  }
  const int K = restricted ? static_cast<int>(g.size()) : 1;
  auto allowed = [&](int e, int i) { return !restricted || s.label_pos[static_cast<std::size_t>(e)] == g[static_cast<std::size_t>(i)]; };
  auto first_ok = [&](int i) { return !restricted || i == 0; };
  auto last_ok = [&](int i) { return !restricted || i == K - 1; };
  auto prev_i = [&](int i) { return restricted ? i - 1 : i; };
  auto next_i = [&](int i) { return restricted ? i + 1 : i; };

  const auto order = edges_by_start(*s.lattice);
  std::vector<std::vector<int>> ending(static_cast<std::size_t>(T) + 1), starting(static_cast<std::size_t>(T) + 1);
  for (int e = 0; e < E; ++e) {
    ending[static_cast<std::size_t>(edges[static_cast<std::size_t>(e)].end)].push_back(e);
    starting[static_cast<std::size_t>(edges[static_cast<std::size_t>(e)].start)].push_back(e);
  }
  Matrix alpha = Matrix::Constant(E, K, kNegInf), beta = Matrix::Constant(E, K, kNegInf);
  for (int e : order) {
    const auto& ed = edges[static_cast<std::size_t>(e)];
    const int y = s.label_pos[static_cast<std::size_t>(e)];
    for (int i = 0; i < K; ++i) {
      if (!allowed(e, i)) continue;
      double v = (ed.start == 0 && first_ok(i)) ? s.trans(s.start(), y) : kNegInf;
      const int pi = prev_i(i);
      if (pi >= 0) {
        for (int f : ending[static_cast<std::size_t>(ed.start)]) {
          v = log_sum_exp(v, alpha(f, pi) + s.trans(s.label_pos[static_cast<std::size_t>(f)], y));
        }
      }
      alpha(e, i) = v + s.unary(e);
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int e = *it;
    const auto& ed = edges[static_cast<std::size_t>(e)];
    const int y = s.label_pos[static_cast<std::size_t>(e)];
    for (int i = 0; i < K; ++i) {
      if (!allowed(e, i)) continue;
      double v = (ed.end == T && last_ok(i)) ? 0.0 : kNegInf;
      const int ni = next_i(i);
      if (ni < K) {
        for (int f : starting[static_cast<std::size_t>(ed.end)]) {
          v = log_sum_exp(v, s.trans(y, s.label_pos[static_cast<std::size_t>(f)]) + s.unary(f) + beta(f, ni));
        }
      }
      beta(e, i) = v;
    }
  }
  EdgeMarginals m;
  m.log_z = kNegInf;
  for (int e : ending[static_cast<std::size_t>(T)]) {
    for (int i = 0; i < K; ++i) {
      if (last_ok(i)) m.log_z = log_sum_exp(m.log_z, alpha(e, i));
    }
  }
  m.unary = Matrix::Zero(E, 1);
  m.trans = Matrix::Zero(Y + 1, Y);
  if (m.log_z == kNegInf) return m;
  for (int e = 0; e < E; ++e) {
    const auto& ed = edges[static_cast<std::size_t>(e)];
    const int y = s.label_pos[static_cast<std::size_t>(e)];
    for (int i = 0; i < K; ++i) {
      if (alpha(e, i) == kNegInf || beta(e, i) == kNegInf) continue;
      m.unary(e, 0) += std::exp(alpha(e, i) + beta(e, i) - m.log_z);
      const double tail = s.unary(e) + beta(e, i) - m.log_z;
      if (ed.start == 0 && first_ok(i)) m.trans(s.start(), y) += std::exp(s.trans(s.start(), y) + tail);
      const int pi = prev_i(i);
      if (pi < 0) continue;
      for (int f : ending[static_cast<std::size_t>(ed.start)]) {
        const int p = s.label_pos[static_cast<std::size_t>(f)];
        m.trans(p, y) += std::exp(alpha(f, pi) + s.trans(p, y) + tail);
      }
    }
  }
  return m;
}

}  // namespace segscribe
