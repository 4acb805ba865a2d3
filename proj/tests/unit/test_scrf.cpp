#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

#include "doctest.h"
#include "segscribe/error.hpp"
#include "segscribe/scrf.hpp"
#include "segscribe/segmentation.hpp"

using namespace segscribe;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Fixture {
  BigramLm lm = BigramLm::fit({"ABC", "CAB", "BAA", "ACE"});
};

SegmentInputs random_inputs(int T, int V, std::mt19937_64& rng, const BigramLm* lm, const std::vector<Label>& labels) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  SegmentInputs in;
  in.posteriors = Matrix(T, V);
  for (int t = 0; t < T; ++t) {
    for (int v = 0; v < V; ++v) in.posteriors(t, v) = u(rng);
    in.posteriors.row(t) /= in.posteriors.row(t).sum();
  }
  in.derivative = Vector(T);
  for (int t = 0; t < T; ++t) in.derivative(t) = std::floor(3.0 * u(rng));
  for (int t = 0; t < T; ++t) in.baseline.push_back(labels[static_cast<std::size_t>(t / 2 % labels.size())]);
  in.lm = lm;
  return in;
}

void randomize(ScrfModel& m, std::mt19937_64& rng, double scale = 0.7) {
  std::normal_distribution<double> n(0.0, scale);
  for (Eigen::Index i = 0; i < m.weights().size(); ++i) m.weights()(i) = n(rng);
}

std::vector<LabeledSegmentation> all_paths(int T, int L, const std::vector<Label>& labels) {
  std::vector<LabeledSegmentation> out;
  std::vector<Label> ls;
  std::vector<int> bs{0};
  std::function<void(int)> rec = [&](int t) {
    if (t == T) {
      out.emplace_back(ls, bs);
      return;
    }
    for (int d = 1; d <= L && t + d <= T; ++d) {
      for (Label y : labels) {
        ls.push_back(y);
        bs.push_back(t + d);
        rec(t + d);
        ls.pop_back();
        bs.pop_back();
      }
    }
  };
  rec(0);
  return out;
}

double lse(const std::vector<double>& v) {
  double m = -kInf;
  for (double x : v) m = std::max(m, x);
  if (m == -kInf) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

FeatureRegistry full_registry(const std::vector<Label>& labels, int V) {
  return FeatureRegistry({FeatureTemplate::kMean, FeatureTemplate::kMax, FeatureTemplate::kDivS, FeatureTemplate::kPeak,
                          FeatureTemplate::kLm, FeatureTemplate::kBaseline, FeatureTemplate::kSamples,
                          FeatureTemplate::kRBoundary, FeatureTemplate::kDuration, FeatureTemplate::kBias},
                         labels, V);
}

}  // namespace

TEST_CASE("path scores: zero weights, single edge, hand summation") {
  Fixture fx;
  std::mt19937_64 rng(1);
  const std::vector<Label> labels{kBos, 0, 1, kEos};
  ScrfModel m(full_registry(labels, 3), 6);
  SegmentInputs in = random_inputs(9, 3, rng, &fx.lm, labels);
  LabeledSegmentation p3({kBos, 1, kEos}, {0, 2, 6, 9});
  CHECK(path_score(m, in, p3) == 0.0);

  randomize(m, rng);
  LabeledSegmentation one({0}, {0, 5});
  SegmentInputs in5 = random_inputs(5, 3, rng, &fx.lm, labels);
  CHECK(path_score(m, in5, one) == doctest::Approx(m.weights().dot(segment_features(m.registry(), {kBos, 0, 0, 5, &in5}))));

  double hand = 0.0;
  Label prev = kBos;
  for (int i = 0; i < p3.size(); ++i) {
    const Label y = p3.labels()[static_cast<std::size_t>(i)];
    hand += m.weights().dot(segment_features(m.registry(), {prev, y, p3.start(i), p3.end(i), &in}));
    prev = y;
  }
  CHECK(path_score(m, in, p3) == doctest::Approx(hand).epsilon(1e-12));
  // The chart assigns the same score through its span table.
  CHECK(std::abs(path_score(segment_scores(m, in), p3) - hand) <= 1e-9);
  CHECK(path_score(m, in, LabeledSegmentation({0, kBos}, {0, 4, 9})) == -kInf);
  CHECK_THROWS_AS(path_score(m, in, LabeledSegmentation({0}, {0, 9})), DataError);
}

TEST_CASE("log partition and decode match enumeration with real features") {
  Fixture fx;
  std::mt19937_64 rng(17);
  const std::vector<std::vector<Label>> label_sets{{2}, {0, 1}, {kBos, 0, kEos}, {0, 1, 2}};
  int checked = 0;
  for (int T = 1; T <= 6; ++T) {
    for (const auto& labels : label_sets) {
      for (int L = 1; L <= 6; ++L) {
        for (int draw = 0; draw < 2; ++draw) {
          ScrfModel m(full_registry(labels, 3), L);
          randomize(m, rng);
          SegmentInputs in = random_inputs(std::max(T, 1), 3, rng, &fx.lm, labels);
          std::vector<double> scores;
          double best = -kInf;
          LabeledSegmentation arg;
          for (auto& p : all_paths(T, L, labels)) {
            const double s = path_score(m, in, p);
            scores.push_back(s);
            if (s > best) {
              best = s;
              arg = p;
            }
          }
          REQUIRE(std::abs(log_partition(m, in) - lse(scores)) <= 1e-8);
          REQUIRE(decode(m, in) == arg);
          ++checked;
        }
      }
    }
  }
  CHECK(checked == 6 * 4 * 6 * 2);
}

TEST_CASE("gradient matches central differences") {
  Fixture fx;
  std::mt19937_64 rng(23);
  const std::vector<Label> labels{kBos, 0, 1, 2, kEos};
  ScrfModel m(full_registry(labels, 4), 5);
  randomize(m, rng, 0.3);
  std::vector<ScrfExample> data;
  for (int k = 0; k < 3; ++k) {
    ScrfExample ex;
    ex.inputs = random_inputs(10, 4, rng, &fx.lm, labels);
    ex.gold = LabeledSegmentation({kBos, static_cast<Label>(k), 1, kEos}, {0, 2, 5, 8, 10});
    data.push_back(std::move(ex));
  }
  // One lattice example built from the top hypotheses plus the gold path.
  {
    ScrfExample ex;
    ex.inputs = random_inputs(8, 4, rng, &fx.lm, labels);
    ex.gold = LabeledSegmentation({kBos, 2, kEos}, {0, 3, 6, 8});
    std::vector<LabeledSegmentation> paths{ex.gold};
    for (auto& p : decode_kbest(m, ex.inputs, 6)) paths.push_back(p.path);
    ex.lattice = Lattice::from_paths(paths, {});
    data.push_back(std::move(ex));
  }
  std::vector<const ScrfExample*> batch;
  for (auto& e : data) batch.push_back(&e);
  const Regularization reg{0.0, 0.01};
  Vector g;
  nll_and_gradient(m, batch, reg, &g);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(m.weights().size()) - 1);
  std::vector<int> coords{m.registry().lm_index()};
  while (coords.size() < 14) coords.push_back(pick(rng));
  const double h = 1e-5;
  for (int c : coords) {
    ScrfModel plus = m, minus = m;
    plus.weights()(c) += h;
    minus.weights()(c) -= h;
    const double fd = (nll_and_gradient(plus, batch, reg, nullptr) - nll_and_gradient(minus, batch, reg, nullptr)) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(g(c)), 1e-6});
    CHECK(std::abs(fd - g(c)) / denom <= 1e-4);
  }
}

TEST_CASE("zero weights: loss counts hypotheses") {
  Fixture fx;
  std::mt19937_64 rng(2);
  const std::vector<Label> labels{0, 1};
  FeatureRegistry reg({FeatureTemplate::kMean, FeatureTemplate::kBias}, labels, 2);
  ScrfModel m(reg, 3);
  ScrfExample ex;
  ex.inputs = random_inputs(5, 2, rng, &fx.lm, labels);
  ex.gold = LabeledSegmentation({0, 1}, {0, 2, 5});
  auto paths = all_paths(5, 3, labels);
  double consistent = 0;
  for (auto& p : paths) consistent += p.labels() == ex.gold.labels() ? 1 : 0;
  const double want = std::log(static_cast<double>(paths.size())) - std::log(consistent);
  CHECK(nll_and_gradient(m, {&ex}, {}, nullptr) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("features absent from every hypothesis get only the regularizer") {
  Fixture fx;
  std::mt19937_64 rng(4);
  const std::vector<Label> labels{0, 1};
  FeatureRegistry reg({FeatureTemplate::kDuration, FeatureTemplate::kBias}, labels, 2);
  ScrfModel m(reg, 4);
  randomize(m, rng);
  ScrfExample ex;
  ex.inputs = random_inputs(6, 2, rng, &fx.lm, labels);
  ex.gold = LabeledSegmentation({0, 1}, {0, 3, 6});
  const Regularization r{0.3, 0.2};
  Vector g;
  nll_and_gradient(m, {&ex}, r, &g);
  for (int k = 4; k <= kDurationBins; ++k) {
    const int c = reg.index(0, FeatureTemplate::kDuration, k);
    const double w = m.weights()(c);
    CHECK(g(c) == doctest::Approx(r.l2 * w + r.l1 * (w > 0 ? 1.0 : -1.0)));
  }
  ScrfExample bad = ex;
  bad.gold = LabeledSegmentation({0, 1}, {0, 5, 6});
  CHECK_THROWS_AS(nll_and_gradient(m, {&bad}, {}, nullptr), DataError);
}

TEST_CASE("duration weights favouring two frames give length-two segments") {
  const std::vector<Label> labels{0, 1};
  FeatureRegistry reg({FeatureTemplate::kMean, FeatureTemplate::kDuration}, labels, 2);
  ScrfModel m(reg, 6);
  for (int pos = 0; pos < 2; ++pos) {
    for (int k = 0; k <= kDurationBins; ++k) m.weights()(reg.index(pos, FeatureTemplate::kDuration, k)) = k == 1 ? 1.0 : -1.0;
  }
  std::mt19937_64 rng(6);
  SegmentInputs in = random_inputs(10, 2, rng, nullptr, labels);
  auto out = decode(m, in);
  CHECK(out.size() == 5);
  for (int i = 0; i < out.size(); ++i) CHECK(out.end(i) - out.start(i) == 2);

  ScrfModel single(FeatureRegistry({FeatureTemplate::kBias}, {3}, 2), 10);
  single.weights()(0) = -1.0;
  auto one = decode(single, in);
  CHECK(one.size() == 1);
  CHECK(one.end(0) == 10);
}

TEST_CASE("log-sum-exp dominance and per-segment shifts") {
  Fixture fx;
  std::mt19937_64 rng(8);
  const std::vector<Label> labels{kBos, 0, 1, kEos};
  ScrfModel m(full_registry(labels, 3), 4);
  randomize(m, rng);
  SegmentInputs in = random_inputs(12, 3, rng, &fx.lm, labels);
  LabeledSegmentation gold({kBos, 0, 1, kEos}, {0, 3, 6, 9, 12});
  const double z = log_partition(m, in);
  CHECK(path_score(m, in, gold) <= z);

  const auto top = decode_kbest(m, in, 10);
  ScrfModel shifted = m;
  const double c = 0.37;
  for (int pos = 0; pos < 4; ++pos) shifted.weights()(m.registry().index(pos, FeatureTemplate::kBias, 0)) += c;
  for (const auto& p : top) {
    CHECK(path_score(shifted, in, p.path) == doctest::Approx(p.score + c * p.path.size()).epsilon(1e-12));
  }
}

TEST_CASE("rescoring restricted to lattices") {
  Fixture fx;
  std::mt19937_64 rng(10);
  const std::vector<Label> labels{0, 1, 2};
  ScrfModel m(FeatureRegistry::rescoring(labels, 3), 6);
  randomize(m, rng);
  SegmentInputs in = random_inputs(5, 3, rng, &fx.lm, labels);
  Lattice full = Lattice::from_paths(all_paths(5, 6, labels), {});
  CHECK(rescore(m, full, in) == decode(m, in));
  EdgeMarginals lz = lattice_marginals(lattice_scores(m, in, full));
  CHECK(std::abs(lz.log_z - log_partition(m, in)) <= 1e-8);

  LabeledSegmentation only({2, 0}, {0, 1, 5});
  Lattice single = Lattice::from_paths({only}, {});
  for (int k = 0; k < 4; ++k) {
    randomize(m, rng, 3.0);
    CHECK(rescore(m, single, in) == only);
  }
  auto top = decode_kbest(m, in, 4);
  Lattice part = Lattice::from_paths({top[1].path, top[3].path}, {});
  CHECK(lattice_marginals(lattice_scores(m, in, part)).log_z <= log_partition(m, in));
}

TEST_CASE("model file round-trips bit-exactly") {
  std::mt19937_64 rng(12);
  ScrfModel m(FeatureRegistry::firstpass({kBos, 0, 5, kEos}, 4, true), 17);
  randomize(m, rng);
  std::stringstream ss;
  m.save(ss);
  ScrfModel back = ScrfModel::load(ss);
  CHECK(back == m);
  std::stringstream bad("XXXX");
  CHECK_THROWS_AS(ScrfModel::load(bad), DataError);
}

namespace {

// Noisy one-hot posteriors around a known segmentation.
std::vector<ScrfExample> toy_corpus(int n, std::mt19937_64& rng, const BigramLm* lm) {
  std::uniform_int_distribution<int> letter(0, 2), len(2, 4);
  std::normal_distribution<double> noise(0.0, 0.6);
  std::vector<ScrfExample> out;
  for (int k = 0; k < n; ++k) {
    std::vector<Label> ls{kBos};
    std::vector<int> bs{0, 2};
    const int m = 2 + k % 2;
    for (int i = 0; i < m; ++i) {
      ls.push_back(letter(rng));
      bs.push_back(bs.back() + len(rng));
    }
    ls.push_back(kEos);
    bs.push_back(bs.back() + 2);
    ScrfExample ex;
    ex.gold = LabeledSegmentation(ls, bs);
    const auto frames = ex.gold.frame_labels();
    const int T = static_cast<int>(frames.size());
    ex.inputs.posteriors = Matrix(T, 5);
    for (int t = 0; t < T; ++t) {
      const Label y = frames[static_cast<std::size_t>(t)];
      const int cls = y == kBos ? 3 : (y == kEos ? 4 : y);
      Eigen::RowVectorXd z(5);
      for (int v = 0; v < 5; ++v) z(v) = noise(rng) + (v == cls ? 2.0 : 0.0);
      z = (z.array() - z.maxCoeff()).exp();
      ex.inputs.posteriors.row(t) = z / z.sum();
    }
    ex.inputs.derivative = Vector::Zero(T);
    ex.inputs.lm = lm;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

TEST_CASE("training lowers the loss and selects by dev error") {
  const BigramLm lm = BigramLm::fit({"ABC", "CAB", "BCA", "AAB"});
  std::mt19937_64 rng(14);
  auto train = toy_corpus(30, rng, &lm);
  auto dev = toy_corpus(10, rng, &lm);
  const std::vector<Label> labels{0, 1, 2, kBos, kEos};
  ScrfModel init(FeatureRegistry::firstpass(labels, 5, true), 6);

  ScrfTrainConfig cfg;
  cfg.epochs = 5;
  cfg.step = 0.05;
  ScrfTrainReport rep;
  ScrfModel trained = train_scrf(init, train, dev, cfg, &rep);
  REQUIRE(rep.train_loss.size() == 6);
  for (int e = 1; e <= 5; ++e) CHECK(rep.train_loss[static_cast<std::size_t>(e)] < rep.train_loss[static_cast<std::size_t>(e - 1)]);
  CHECK(rep.dev_ler.size() == 6);
  CHECK(rep.dev_ler[static_cast<std::size_t>(rep.best_epoch)] == *std::min_element(rep.dev_ler.begin(), rep.dev_ler.end()));
  CHECK(rep.dev_ler[static_cast<std::size_t>(rep.best_epoch)] < 0.5 * rep.dev_ler[0]);
  ScrfTrainConfig longer = cfg;
  longer.epochs = 10;
  longer.step = 0.3;
  ScrfModel better = train_scrf(init, train, dev, longer);
  CHECK(scrf_error_rate(better, dev) <= 0.1);

  cfg.epochs = 0;
  CHECK(train_scrf(init, train, dev, cfg) == init);

  cfg.epochs = 2;
  cfg.l1 = 200.0;
  ScrfModel sparse = train_scrf(init, train, {}, cfg);
  const auto zeros = (sparse.weights().array() == 0.0).count();
  CHECK(zeros >= sparse.weights().size() / 2);
}
