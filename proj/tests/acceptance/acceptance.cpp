// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            all criteria
//   acceptance 1 4 9      selected criteria
//   --known-failure N     criterion N still prints FAIL but does not set
//                         the exit status (see the README's results table)
//
// Exit status is non-zero when any other selected criterion fails.

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "segscribe/error.hpp"
#include "segscribe/evalx.hpp"
#include "segscribe/scrf.hpp"
#include "segscribe/segmentation.hpp"
#include "support/oracles.hpp"

using namespace segscribe;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- 1

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
  for (int t = 0; t < T; ++t) in.baseline.push_back(labels[static_cast<std::size_t>(t % labels.size())]);
  in.lm = lm;
  return in;
}

FeatureRegistry full_registry(const std::vector<Label>& labels, int V) {
  return FeatureRegistry({FeatureTemplate::kMean, FeatureTemplate::kMax, FeatureTemplate::kDivS, FeatureTemplate::kDivM,
                          FeatureTemplate::kPeak, FeatureTemplate::kLm, FeatureTemplate::kBaseline,
                          FeatureTemplate::kSamples, FeatureTemplate::kLBoundary, FeatureTemplate::kRBoundary,
                          FeatureTemplate::kDuration, FeatureTemplate::kBias},
                         labels, V);
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

Outcome semi_markov_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1001);
  long charts = 0, mismatches = 0;
  double worst = 0.0;
  // Generic charts: every (T, V, L) with 100 weight draws each.
  for (int T = 1; T <= 6; ++T) {
    for (int V = 1; V <= 3; ++V) {
      for (int L = 1; L <= 6; ++L) {
        for (int draw = 0; draw < 100; ++draw) {
          const SegmentScores s = oracle::random_scores(rng, T, V, L, V == 3 && draw % 2 == 1);
          const auto all = oracle::enumerate(s);
          if (all.empty()) continue;
          std::vector<double> scores;
          std::size_t arg = 0;
          for (std::size_t i = 0; i < all.size(); ++i) {
            scores.push_back(all[i].score);
            if (all[i].score > all[arg].score) arg = i;
          }
          worst = std::max(worst, std::abs(log_partition(s) - oracle::lse(scores)));
          mismatches += !(viterbi(s).path == all[arg].path);
          ++charts;
        }
      }
    }
  }
  // SCRF charts built from real segment features, 100 draws.
  const BigramLm lm = BigramLm::fit({"ABC", "CAB", "BAA", "ACB"});
  long scrf = 0;
  for (int draw = 0; draw < 100; ++draw) {
    const int T = 1 + draw % 6, V = 1 + (draw / 6) % 3, L = 1 + (draw / 18) % 6;
    std::vector<Label> labels;
    for (int y = 0; y < V; ++y) labels.push_back(y);
    ScrfModel m(full_registry(labels, 3), L);
    std::normal_distribution<double> n(0.0, 0.5);
    for (Eigen::Index i = 0; i < m.weights().size(); ++i) m.weights()(i) = n(rng);
    const SegmentInputs in = random_inputs(T, 3, rng, &lm, labels);
    const auto paths = all_paths(T, L, labels);
    std::vector<double> scores;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < paths.size(); ++i) {
      scores.push_back(path_score(m, in, paths[i]));
      if (scores[i] > scores[arg]) arg = i;
    }
    worst = std::max(worst, std::abs(log_partition(m, in) - oracle::lse(scores)));
    mismatches += !(decode(m, in) == paths[arg]);
    ++scrf;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-8 && mismatches == 0 && secs < 30.0,
          fmt("%ld charts + %ld SCRF instances, max |dlogZ| %.2e (tol 1e-8), %ld argmax mismatches, %.1f s (< 30)",
              charts, scrf, worst, mismatches, secs)};
}

// ---------------------------------------------------------------- 2

double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

Outcome gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2002);
  double worst_scrf = 0.0, worst_mlp = 0.0;
  int n_scrf = 0, n_mlp = 0;

  {
    const BigramLm lm = BigramLm::fit({"ABC", "CAB", "BAA", "ACE"});
    const std::vector<Label> labels{kBos, 0, 1, 2, kEos};
    ScrfModel m(full_registry(labels, 4), 5);
    std::normal_distribution<double> n(0.0, 0.3);
    for (Eigen::Index i = 0; i < m.weights().size(); ++i) m.weights()(i) = n(rng);
    std::vector<ScrfExample> data;
    for (int k = 0; k < 3; ++k) {
      ScrfExample ex;
      ex.inputs = random_inputs(10, 4, rng, &lm, labels);
      ex.gold = LabeledSegmentation({kBos, static_cast<Label>(k), 1, kEos}, {0, 2, 5, 8, 10});
      data.push_back(std::move(ex));
    }
    {
      ScrfExample ex;
      ex.inputs = random_inputs(8, 4, rng, &lm, labels);
      ex.gold = LabeledSegmentation({kBos, 2, kEos}, {0, 3, 6, 8});
      std::vector<LabeledSegmentation> paths{ex.gold};
      for (auto& p : decode_kbest(m, ex.inputs, 6)) paths.push_back(p.path);
      ex.lattice = Lattice::from_paths(paths, {});
      data.push_back(std::move(ex));
    }
    std::vector<const ScrfExample*> batch;
    for (auto& e : data) batch.push_back(&e);
    const Regularization off{0.0, 0.0};
    Vector g;
    nll_and_gradient(m, batch, off, &g);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(m.weights().size()) - 1);
    std::vector<int> coords{m.registry().lm_index()};
    while (coords.size() < 16) coords.push_back(pick(rng));
    const double h = 1e-5;
    for (int c : coords) {
      ScrfModel plus = m, minus = m;
      plus.weights()(c) += h;
      minus.weights()(c) -= h;
      const double fd = (nll_and_gradient(plus, batch, off, nullptr) - nll_and_gradient(minus, batch, off, nullptr)) / (2 * h);
      worst_scrf = std::max(worst_scrf, relative_error(fd, g(c)));
      ++n_scrf;
    }
  }

  {
    std::mt19937 r32(7);
    std::normal_distribution<double> g;
    auto rnd = [&](int r, int c) {
      Matrix m(r, c);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(r32);
      return m;
    };
    Mlp model(3, 4, {7, 6}, 5, 11);
    for (auto& l : model.layers()) l.bias = 0.1 * rnd(static_cast<int>(l.bias.size()), 1).col(0);
    const Matrix x = rnd(9, 12);
    const std::vector<int> y{0, 1, 2, 3, 4, 0, 1, 2, 3};
    const TrainableSet set = model.all_trainable();
    Mlp grad;
    mlp_loss_and_gradient(model, x, y, 0.0, set, &grad, 0.0);
    std::vector<std::pair<double*, long>> params, grads;
    model.for_each_block(set, [&](double* d, long n, bool) { params.emplace_back(d, n); });
    grad.for_each_block(set, [&](double* d, long n, bool) { grads.emplace_back(d, n); });
    const double h = 1e-5;
    for (std::size_t b = 0; b < params.size(); ++b) {
      for (int k = 0; k < 4; ++k) {
        const long i = static_cast<long>(r32() % static_cast<unsigned>(params[b].second));
        double* p = params[b].first + i;
        const double saved = *p;
        *p = saved + h;
        const double up = mlp_loss_and_gradient(model, x, y, 0.0, set, nullptr);
        *p = saved - h;
        const double down = mlp_loss_and_gradient(model, x, y, 0.0, set, nullptr);
        *p = saved;
        worst_mlp = std::max(worst_mlp, relative_error((up - down) / (2 * h), grads[b].first[i]));
        ++n_mlp;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {n_scrf >= 10 && n_mlp >= 10 && worst_scrf <= 1e-4 && worst_mlp <= 1e-4 && secs < 60.0,
          fmt("SCRF %d coords max rel err %.2e, MLP %d coords max rel err %.2e (tol 1e-4), %.1f s (< 60)", n_scrf,
              worst_scrf, n_mlp, worst_mlp, secs)};
}

// ---------------------------------------------------------------- 3

Outcome hmm_sanity() {
  // Embedded EM on clean synthetic words.
  const auto profiles = make_profiles(preset("easy"), 1, 3003);
  const auto words = sample_words(25, 3004);
  std::vector<Matrix> feats;
  std::vector<LabeledSegmentation> gold;
  std::vector<std::vector<Label>> transcripts;
  for (std::size_t i = 0; i < words.size(); ++i) {
    auto [seq, ann] = generate_word(profiles[0], words[i], i);
    feats.push_back(seq.frames());
    gold.push_back(peaks_to_segmentation(ann, seq.num_frames()));
    transcripts.push_back(gold.back().labels());
  }
  EmReport report;
  const TandemHmm model = train_em(TandemHmm::initialize(feats, gold, 3), feats, transcripts, EmConfig{5, {1}}, &report);
  std::vector<double> ll = report.log_likelihood;
  double final_ll = 0.0;
  for (std::size_t i = 0; i < feats.size(); ++i) final_ll += sequence_log_likelihood(model, feats[i], transcripts[i]);
  ll.push_back(final_ll);
  double worst_step = oracle::kInf;
  for (std::size_t i = 1; i < ll.size(); ++i) worst_step = std::min(worst_step, ll[i] - ll[i - 1]);

  // Forced alignment never beats the unconstrained decode.
  int fa_violations = 0;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const Matrix em = model.emissions(feats[i]);
    const double free_score = viterbi_decode(model, em, nullptr, 0.0, 0.0).score;
    const double fa = forced_align(model, em, LabelAlphabet::standard().letters_of(words[i])).score;
    fa_violations += fa > free_score + 1e-9 * std::max(1.0, std::abs(free_score));
  }

  // One-state toy models against enumeration.
  std::mt19937_64 rng(3005);
  const BigramLm lm = BigramLm::fit({"AB", "BA", "AAB"});
  int toy = 0, toy_mismatch = 0;
  for (int trial = 0; trial < 60; ++trial) {
    std::uniform_real_distribution<double> u(0.05, 0.95);
    TandemHmm m(1, 1, Vector::Constant(1, 1e-6));
    for (int g = 0; g < m.num_states(); ++g) {
      m.transitions()(g, 0) = u(rng);
      m.transitions()(g, 1) = 1.0 - m.transitions()(g, 0);
    }
    const int T = 3 + trial % 4;
    std::normal_distribution<double> n(0.0, 2.0);
    Matrix em = Matrix::Constant(T, m.num_states(), oracle::kNegInf);
    for (Label l : {kBos, Label{0}, Label{1}, kEos}) {
      for (int t = 0; t < T; ++t) em(t, m.state(l, 0)) = n(rng);
    }
    const double lmw = trial % 3 == 0 ? 0.0 : 0.7, pen = trial % 2 ? -0.5 : 0.3;
    const auto best = oracle::brute_force(m, em, trial % 2 ? &lm : nullptr, lmw, pen, {0, 1});
    const auto d = viterbi_decode(m, em, trial % 2 ? &lm : nullptr, lmw, pen);
    toy_mismatch += !(d.segmentation == best.seg) || std::abs(d.score - best.score) > 1e-9;
    ++toy;
  }
  return {worst_step >= -1e-6 && fa_violations == 0 && toy_mismatch == 0,
          fmt("EM min step %.3e over %zu iterations (>= -1e-6), FA > free on %d/%zu sequences, "
              "%d/%d one-state enumeration mismatches",
              worst_step, ll.size() - 1, fa_violations, feats.size(), toy_mismatch, toy)};
}

// ---------------------------------------------------------------- 4

Outcome edit_distance_oracle() {
  const auto seqs = oracle::all_sequences(6, 3);
  long pairs = 0, wrong = 0;
  for (const auto& hyp : seqs) {
    for (const auto& ref : seqs) {
      ++pairs;
      if (ref.empty()) {
        bool threw = false;
        try {
          letter_error_rate(hyp, ref);
        } catch (const Error&) {
          threw = true;
        }
        wrong += !threw;
        continue;
      }
      const double want = static_cast<double>(oracle::edit_oracle(hyp, ref)) / static_cast<double>(ref.size());
      wrong += letter_error_rate(hyp, ref) != want;
    }
  }
  return {wrong == 0, fmt("%ld ordered pairs over %zu sequences (length <= 6, 3 letters), %ld disagreements", pairs,
                          seqs.size(), wrong)};
}

// ---------------------------------------------------------------- 5

// Mean first-pass LER observed once with exactly this setup: 0.0248.
// Threshold = observed + 0.01.
constexpr double kFirstPassThreshold = 0.0348;

Outcome signer_dependent_pipeline() {
  const auto t0 = std::chrono::steady_clock::now();
  const Corpus corpus = generate_corpus(make_profiles(preset("easy"), 4, 5005), sample_words(300, 5006), FoldSpec{10, 5007});
  ExperimentPlan plan;
  plan.folds_used = 2;
  plan.seed = 5008;
  plan.model = ModelKind::kFirstpassScrf;
  const ResultTable first = run_plan(plan, corpus);
  plan.model = ModelKind::kTandem;
  const ResultTable tandem = run_plan(plan, corpus);
  const double secs = seconds_since(t0);
  return {first.mean_ler <= tandem.mean_ler && first.mean_ler <= std::min(kFirstPassThreshold, 0.05) && secs < 900.0,
          fmt("first-pass %.2f%% <= tandem %.2f%%; first-pass <= %.2f%% (calibrated, cap 5%%); "
              "4 signers x 300 words, %d folds, %.0f s (< 900)",
              100 * first.mean_ler, 100 * tandem.mean_ler, 100 * kFirstPassThreshold, plan.folds_used, secs)};
}

// ---------------------------------------------------------------- 6, 7, 8

struct Shifted {
  Corpus corpus;
  ExperimentPlan plan;
  IndependentModels models;
};

const Shifted& shifted() {
  static const std::unique_ptr<Shifted> s = [] {
    auto p = std::make_unique<Shifted>();
    p->corpus = generate_corpus(make_profiles(preset("shifted"), 4, 6006), sample_words(200, 6007), FoldSpec{10, 6008});
    p->plan.mode = ExperimentMode::kSignerIndep;
    p->plan.model = ModelKind::kFirstpassScrf;
    p->plan.folds_used = 2;
    p->plan.seed = 6009;
    const auto t0 = std::chrono::steady_clock::now();
    p->models = train_independent(p->plan, p->corpus);
    std::printf("      (signer-independent models trained in %.0f s)\n", seconds_since(t0));
    std::fflush(stdout);
    return p;
  }();
  return *s;
}

ExperimentPlan adapted_plan(LabelSource labels, AdaptMethod method, std::uint64_t seed_offset = 0) {
  ExperimentPlan p = shifted().plan;
  p.mode = ExperimentMode::kAdapted;
  p.fraction = 0.2;
  p.labels = labels;
  p.adapt_method = method;
  p.seed += seed_offset;
  return p;
}

Outcome adaptation_ordering() {
  const Shifted& s = shifted();
  const double none = run_signer_independent(s.plan, s.corpus, &s.models).mean_ler;
  const double fa = run_adapted(adapted_plan(LabelSource::kFa, AdaptMethod::kFineTune), s.corpus, &s.models).mean_ler;
  const ResultTable ft = run_adapted(adapted_plan(LabelSource::kGt, AdaptMethod::kFineTune), s.corpus, &s.models);
  const ResultTable up = run_adapted(adapted_plan(LabelSource::kGt, AdaptMethod::kLinUp), s.corpus, &s.models);
  const ResultTable lon = run_adapted(adapted_plan(LabelSource::kGt, AdaptMethod::kLinLon), s.corpus, &s.models);
  const double gt = ft.mean_ler;
  const bool ler_ok = none - fa >= 0.02 && fa - gt >= 0.02;
  const bool fe_ok = ft.mean_frame_error <= up.mean_frame_error && up.mean_frame_error <= lon.mean_frame_error + 0.01;
  return {ler_ok && fe_ok,
          fmt("LER unadapted %.2f%% > FA %.2f%% > GT %.2f%% (gaps >= 2%%); frame error at 20%%: fine-tune %.2f%% <= "
              "LIN+UP %.2f%% <= LIN+LON %.2f%% + 1%%",
              100 * none, 100 * fa, 100 * gt, 100 * ft.mean_frame_error, 100 * up.mean_frame_error,
              100 * lon.mean_frame_error)};
}

Outcome realignment() {
  const Shifted& s = shifted();
  int improved = 0;
  double worst = -oracle::kInf;
  std::string deltas;
  for (std::uint64_t k = 0; k < 5; ++k) {
    std::vector<ResultTable> rounds;
    realign_iterate(adapted_plan(LabelSource::kFa, AdaptMethod::kFineTune, k), s.corpus, 2, &s.models, &rounds);
    const double d = rounds[1].mean_ler - rounds[0].mean_ler;
    improved += d < 0.0;
    worst = std::max(worst, d);
    deltas += fmt("%s%.2f->%.2f", k ? ", " : "", 100 * rounds[0].mean_ler, 100 * rounds[1].mean_ler);
  }
  return {worst <= 0.005 && improved >= 3,
          fmt("improved in %d/5 seeds (>= 3), worst change %+.2f%% (<= +0.5%%): %s", improved, 100 * worst,
              deltas.c_str())};
}

Outcome scratch_ordering() {
  const Shifted& s = shifted();
  const ResultTable ft = run_adapted(adapted_plan(LabelSource::kGt, AdaptMethod::kFineTune), s.corpus, &s.models);
  ExperimentPlan p = adapted_plan(LabelSource::kGt, AdaptMethod::kFineTune);
  p.mode = ExperimentMode::kScratchDnn;
  const ResultTable dnn = run_scratch(p, s.corpus, &s.models);
  p.mode = ExperimentMode::kScratchBoth;
  const ResultTable both = run_scratch(p, s.corpus, &s.models);
  // Orderings hold up to the combined noise band of the two runs compared.
  auto band = [](const ResultTable& a, const ResultTable& b) { return std::hypot(a.noise_band(), b.noise_band()); };
  const bool ok = ft.mean_ler <= dnn.mean_ler + band(ft, dnn) && dnn.mean_ler <= both.mean_ler + band(dnn, both);
  return {ok, fmt("fine-tuned %.2f%% (+-%.2f) <= scratch DNN + indep. SCRF %.2f%% (+-%.2f) <= scratch both %.2f%% (+-%.2f)",
                  100 * ft.mean_ler, 100 * ft.noise_band(), 100 * dnn.mean_ler, 100 * dnn.noise_band(),
                  100 * both.mean_ler, 100 * both.noise_band())};
}

// ---------------------------------------------------------------- 9

Outcome feature_equivalence() {
  std::mt19937_64 rng(9009);
  const BigramLm lm = BigramLm::fit({"ABC", "BAD", "CAB", "DAD"});
  const std::vector<FeatureTemplate> all = {
      FeatureTemplate::kMean,      FeatureTemplate::kMax,       FeatureTemplate::kDivS,     FeatureTemplate::kDivM,
      FeatureTemplate::kPeak,      FeatureTemplate::kLm,        FeatureTemplate::kBaseline, FeatureTemplate::kSamples,
      FeatureTemplate::kLBoundary, FeatureTemplate::kRBoundary, FeatureTemplate::kDuration, FeatureTemplate::kBias};
  const int V = 4;
  std::vector<Label> labels{0, 1, 2, 3, 4};
  FeatureRegistry reg(all, labels, V);
  long values = 0, wrong = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int T = std::uniform_int_distribution<int>(2, 45)(rng);
    SegmentInputs in;
    in.posteriors = oracle::random_posteriors(T, V, rng);
    std::uniform_int_distribution<int> lab(0, 3), step(0, 2);
    in.derivative = Vector(T);
    for (int t = 0; t < T; ++t) in.derivative(t) = step(rng);
    Label cur = lab(rng);
    for (int t = 0; t < T; ++t) {
      if (step(rng) == 0) cur = lab(rng);
      in.baseline.push_back(cur);
    }
    in.lm = &lm;
    const int q = std::uniform_int_distribution<int>(0, T - 1)(rng);
    const int qe = std::uniform_int_distribution<int>(q + 1, T)(rng);
    const Label y = std::uniform_int_distribution<int>(0, 4)(rng);
    const Label prev = std::uniform_int_distribution<int>(0, 5)(rng) == 5 ? kBos : std::uniform_int_distribution<int>(0, 4)(rng);
    const Vector f = segment_features(reg, SegmentContext{prev, y, q, qe, &in});
    for (auto tpl : all) {
      if (tpl == FeatureTemplate::kLm) {
        wrong += f(reg.lm_index()) != lm.logprob(prev, y);
        ++values;
        continue;
      }
      const auto want = oracle::segment_feature(tpl, in, q, qe, y);
      if (static_cast<int>(want.size()) != FeatureRegistry::width(tpl, V)) {
        ++wrong;
        continue;
      }
      for (std::size_t k = 0; k < want.size(); ++k) {
        wrong += f(reg.index(reg.label_index(y), tpl, static_cast<int>(k))) != want[k];
        ++values;
      }
    }
  }
  return {wrong == 0, fmt("1000 random contexts, %zu templates, %ld values compared exactly, %ld differ", all.size(),
                          values, wrong)};
}

// ---------------------------------------------------------------- 10

Outcome determinism() {
  const Corpus corpus = generate_corpus(make_profiles(preset("shifted"), 3, 1010), sample_words(40, 1011), FoldSpec{4, 1012});
  ExperimentPlan p;
  p.num_folds = 4;
  p.folds_used = 1;
  p.seed = 1013;
  p.pipeline.frame.hidden = {32};
  p.pipeline.frame.epochs = 4;
  p.pipeline.scrf.epochs = 3;
  int same = 0, runs = 0;
  for (ExperimentMode mode : {ExperimentMode::kSignerDep, ExperimentMode::kAdapted}) {
    ExperimentPlan q = p;
    q.mode = mode;
    if (mode == ExperimentMode::kAdapted) {
      q.fraction = 0.2;
      q.labels = LabelSource::kFa;
    }
    q.jobs = 1;
    const std::string a = run_plan(q, corpus).manifest();
    q.jobs = 3;
    const std::string b = run_plan(q, corpus).manifest();
    same += a == b;
    ++runs;
  }
  return {same == runs, fmt("%d/%d plan pairs (1 vs 3 workers) gave byte-identical manifests", same, runs)};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "semi-Markov exactness", semi_markov_exactness},
      {2, "gradient fidelity", gradient_fidelity},
      {3, "HMM sanity", hmm_sanity},
      {4, "edit-distance oracle", edit_distance_oracle},
      {5, "signer-dependent pipeline (easy)", signer_dependent_pipeline},
      {6, "adaptation ordering (shifted)", adaptation_ordering},
      {7, "realignment (shifted, 5 seeds)", realignment},
      {8, "scratch comparisons (shifted)", scratch_ordering},
      {9, "feature-function equivalence", feature_equivalence},
      {10, "determinism", determinism},
  };
  std::set<int> selected, known;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--known-failure" && i + 1 < argc) {
      known.insert(std::atoi(argv[++i]));
    } else {
      selected.insert(std::atoi(a.c_str()));
    }
  }
  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const bool excused = !o.pass && known.count(c.id);
    failed += !o.pass && !excused;
    std::printf("%s  C%-2d %-34s %s [%.1f s]%s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                seconds_since(t0), excused ? " (known failure)" : "");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
