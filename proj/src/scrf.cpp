#include "segscribe/scrf.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "segscribe/error.hpp"
#include "segscribe/io.hpp"
#include "segscribe/segmentation.hpp"

namespace segscribe {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr char kModelMagic[4] = {'S', 'G', 'S', 'C'};
constexpr std::uint32_t kModelVersion = 1;

// Local weight block of every label as a P x Y matrix.
Matrix weight_blocks(const ScrfModel& m) {
  const int P = m.registry().local_dim(), Y = m.registry().num_labels();
  Matrix W(P, Y);
  for (int i = 0; i < Y; ++i) W.col(i) = m.weights().segment(static_cast<Eigen::Index>(i) * P, P);
  return W;
}

double baseline_sign(Label sole, Label y) { return sole == y ? 1.0 : -1.0; }

void check_gold(const ScrfModel& model, const ScrfExample& ex) {
  if (ex.gold.num_frames() != ex.inputs.num_frames()) throw DataError("gold segmentation length differs from the sequence");
  for (int i = 0; i < ex.gold.size(); ++i) {
    if (ex.gold.end(i) - ex.gold.start(i) > model.max_len()) {
      throw DataError("gold segment longer than the maximum segment length");
    }
  }
}

}  // namespace

ScrfModel::ScrfModel(FeatureRegistry registry, int max_len)
    : registry_(std::move(registry)), max_len_(max_len), weights_(Vector::Zero(registry_.dim())) {
  if (max_len_ < 1) throw UsageError("maximum segment length must be positive");
}

void ScrfModel::save(std::ostream& out) const {
  out.write(kModelMagic, 4);
  io::write_u32(out, kModelVersion);
  io::write_string(out, registry_.to_text());
  io::write_u32(out, static_cast<std::uint32_t>(max_len_));
  io::write_u32(out, static_cast<std::uint32_t>(weights_.size()));
  for (Eigen::Index i = 0; i < weights_.size(); ++i) io::write_f64(out, weights_(i));
}

ScrfModel ScrfModel::load(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kModelMagic, 4) != 0) throw DataError("not an SCRF model file");
  if (io::read_u32(in) != kModelVersion) throw DataError("unsupported SCRF model version");
  FeatureRegistry reg = FeatureRegistry::from_text(io::read_string(in));
  const int max_len = static_cast<int>(io::read_u32(in));
  ScrfModel m(std::move(reg), max_len);
  const auto n = io::read_u32(in);
  if (static_cast<Eigen::Index>(n) != m.weights_.size()) throw DataError("SCRF weight count differs from the registry");
  for (Eigen::Index i = 0; i < m.weights_.size(); ++i) m.weights_(i) = io::read_f64(in);
  if (!m.weights_.allFinite()) throw DataError("SCRF model has non-finite weights");
  return m;
}

void ScrfModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  save(out);
}

ScrfModel ScrfModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return load(in);
}

Matrix lm_values(const std::vector<Label>& labels, const SegmentInputs& in) {
  const int Y = static_cast<int>(labels.size());
  Matrix v(Y + 1, Y);
  for (int y = 0; y < Y; ++y) {
    for (int p = 0; p < Y; ++p) v(p, y) = lm_feature(in, labels[static_cast<std::size_t>(p)], labels[static_cast<std::size_t>(y)]);
    v(Y, y) = lm_feature(in, kBos, labels[static_cast<std::size_t>(y)]);
  }
  return v;
}

Matrix transition_scores(const ScrfModel& model, const SegmentInputs& in, bool constrained) {
  const auto& reg = model.registry();
  const int Y = reg.num_labels();
  Matrix t = Matrix::Zero(Y + 1, Y);
  if (reg.has(FeatureTemplate::kLm)) t = model.weights()(reg.lm_index()) * lm_values(reg.labels(), in);
  return constrained ? constrained_transitions(reg.labels(), std::move(t)) : t;
}

SegmentScores segment_scores(const ScrfModel& model, const SegmentInputs& in, const SpanFeatures* spans) {
  const auto& reg = model.registry();
  if (model.weights().size() != reg.dim()) throw UsageError("SCRF weights do not match the registry");
  std::optional<SpanFeatures> own;
  if (!spans) spans = &own.emplace(reg, in, model.max_len());
  if (spans->num_frames() != in.num_frames() || spans->max_len() != model.max_len()) {
    throw UsageError("span table does not match the inputs");
  }
  SegmentScores s;
  s.num_frames = in.num_frames();
  s.max_len = model.max_len();
  s.labels = reg.labels();
  s.unary = spans->table() * weight_blocks(model);
  const int P = reg.local_dim(), Y = reg.num_labels();
  const bool base = reg.has(FeatureTemplate::kBaseline);
  const int b = base ? reg.local_offset(FeatureTemplate::kBaseline) : 0;
  for (int q = 0; q < s.num_frames; ++q) {
    for (int d = 1; d <= s.max_len; ++d) {
      if (!spans->valid(q, d)) {
        s.unary.row(s.row(q, d)).setConstant(kNegInf);
        continue;
      }
      if (!base) continue;
      const Label sole = spans->baseline_label(q, d);
      for (int i = 0; i < Y; ++i) {
        s.unary(s.row(q, d), i) += model.weights()(i * P + b) * baseline_sign(sole, s.labels[static_cast<std::size_t>(i)]);
      }
    }
  }
  s.trans = transition_scores(model, in);
  return s;
}

LatticeScores lattice_scores(const ScrfModel& model, const SegmentInputs& in, const Lattice& lattice) {
  const auto& reg = model.registry();
  if (lattice.num_frames() != in.num_frames()) throw DataError("lattice length differs from the sequence");
  const int P = reg.local_dim();
  LatticeScores s;
  s.lattice = &lattice;
  s.labels = reg.labels();
  s.unary = Vector(static_cast<Eigen::Index>(lattice.edges().size()));
  for (std::size_t e = 0; e < lattice.edges().size(); ++e) {
    const auto& ed = lattice.edges()[e];
    const int pos = reg.label_index(ed.label);
    if (pos < 0) throw DataError("lattice label outside the model's label set");
    s.label_pos.push_back(pos);
    s.unary(static_cast<Eigen::Index>(e)) =
        model.weights().segment(static_cast<Eigen::Index>(pos) * P, P).dot(local_features(reg, in, ed.start, ed.end, ed.label));
  }
  s.trans = transition_scores(model, in);
  return s;
}

double path_score(const ScrfModel& model, const SegmentInputs& in, const LabeledSegmentation& path) {
  if (path.num_frames() != in.num_frames()) throw DataError("path length differs from the sequence");
  double total = 0.0;
  Label prev = kBos;
  for (int i = 0; i < path.size(); ++i) {
    const Label y = path.labels()[static_cast<std::size_t>(i)];
    if (path.end(i) - path.start(i) > model.max_len()) throw DataError("segment longer than the maximum segment length");
    if ((y == kBos && i > 0) || (y == kEos && i + 1 < path.size())) return kNegInf;
    SegmentContext ctx{prev, y, path.start(i), path.end(i), &in};
    total += model.weights().dot(segment_features(model.registry(), ctx));
    prev = y;
  }
  return total;
}

double log_partition(const ScrfModel& model, const SegmentInputs& in) { return log_partition(segment_scores(model, in)); }

LabeledSegmentation decode(const ScrfModel& model, const SegmentInputs& in) { return viterbi(segment_scores(model, in)).path; }

std::vector<ScoredPath> decode_kbest(const ScrfModel& model, const SegmentInputs& in, int k) {
  return kbest(segment_scores(model, in), k);
}

LabeledSegmentation rescore(const ScrfModel& model, const Lattice& lattice, const SegmentInputs& in) {
  return lattice_viterbi(lattice_scores(model, in, lattice)).segmentation(lattice);
}

double nll_and_gradient(const ScrfModel& model, const std::vector<const ScrfExample*>& batch, const Regularization& reg,
                        Vector* gradient, int* skipped) {
  const auto& fr = model.registry();
  const int P = fr.local_dim(), Y = fr.num_labels();
  const bool base = fr.has(FeatureTemplate::kBaseline), lm = fr.has(FeatureTemplate::kLm);
  const int b = base ? fr.local_offset(FeatureTemplate::kBaseline) : 0;
  Vector grad = Vector::Zero(fr.dim());
  double loss = 0.0;
  int skip = 0;
  for (const ScrfExample* ex : batch) {
    check_gold(model, *ex);
    const auto& gold_labels = ex->gold.labels();
    if (ex->lattice) {
      const LatticeScores ls = lattice_scores(model, ex->inputs, *ex->lattice);
      const EdgeMarginals full = lattice_marginals(ls);
      const EdgeMarginals gold = lattice_marginals(ls, &gold_labels);
      if (gold.log_z == kNegInf) {
        ++skip;
        continue;
      }
      loss += full.log_z - gold.log_z;
      const auto& edges = ex->lattice->edges();
      for (std::size_t e = 0; e < edges.size(); ++e) {
        const double diff = full.unary(static_cast<Eigen::Index>(e), 0) - gold.unary(static_cast<Eigen::Index>(e), 0);
        if (diff == 0.0) continue;
        const int pos = ls.label_pos[e];
        grad.segment(static_cast<Eigen::Index>(pos) * P, P) +=
            diff * local_features(fr, ex->inputs, edges[e].start, edges[e].end, edges[e].label);
      }
      if (lm) grad(fr.lm_index()) += (full.trans - gold.trans).cwiseProduct(lm_values(fr.labels(), ex->inputs)).sum();
      continue;
    }
    const SpanFeatures spans(fr, ex->inputs, model.max_len());
    const SegmentScores s = segment_scores(model, ex->inputs, &spans);
    const EdgeMarginals full = edge_marginals(s);
    const EdgeMarginals gold = constrained_marginals(s, gold_labels);
    loss += full.log_z - gold.log_z;
    const Matrix diff = full.unary - gold.unary;
    const Matrix G = spans.table().transpose() * diff;
    for (int i = 0; i < Y; ++i) grad.segment(static_cast<Eigen::Index>(i) * P, P) += G.col(i);
    if (base) {
      for (int q = 0; q < s.num_frames; ++q) {
        for (int d = 1; d <= s.max_len && q + d <= s.num_frames; ++d) {
          const Label sole = spans.baseline_label(q, d);
          for (int i = 0; i < Y; ++i) {
            grad(i * P + b) += diff(s.row(q, d), i) * baseline_sign(sole, s.labels[static_cast<std::size_t>(i)]);
          }
        }
      }
    }
    if (lm) grad(fr.lm_index()) += (full.trans - gold.trans).cwiseProduct(lm_values(fr.labels(), ex->inputs)).sum();
  }
  const Vector& w = model.weights();
  loss += reg.l1 * w.lpNorm<1>() + 0.5 * reg.l2 * w.squaredNorm();
  if (gradient) {
    grad += reg.l2 * w;
    if (reg.l1 > 0.0) grad += reg.l1 * w.unaryExpr([](double x) { return static_cast<double>((x > 0) - (x < 0)); });
    *gradient = std::move(grad);
  }
  if (skipped) *skipped = skip;
  return loss;
}

double scrf_error_rate(const ScrfModel& model, const std::vector<ScrfExample>& data) {
  EditCounts total;
  for (const auto& ex : data) {
    const LabeledSegmentation hyp = ex.lattice ? rescore(model, *ex.lattice, ex.inputs) : decode(model, ex.inputs);
    total += edit_counts(hyp.labels(), ex.gold.labels());
  }
  return total.rate();
}

ScrfModel train_scrf(const ScrfModel& init, const std::vector<ScrfExample>& train, const std::vector<ScrfExample>& dev,
                     const ScrfTrainConfig& config, ScrfTrainReport* report) {
  if (config.epochs < 0) throw UsageError("epochs must be non-negative");
  if (!(config.step > 0.0)) throw UsageError("step size must be positive");
  ScrfTrainReport rep;
  ScrfModel model = init;
  ScrfModel best = init;
  double best_ler = std::numeric_limits<double>::infinity();
  auto evaluate = [&](int epoch) {
    if (dev.empty()) {
      best = model;
      rep.best_epoch = epoch;
      return;
    }
    const double ler = scrf_error_rate(model, dev);
    rep.dev_ler.push_back(ler);
    if (ler < best_ler) {
      best_ler = ler;
      best = model;
      rep.best_epoch = epoch;
    }
  };
  std::vector<const ScrfExample*> all;
  for (const auto& ex : train) all.push_back(&ex);
  if (config.epochs > 0 && all.empty()) throw DataError("no SCRF training sequences");
  {
    int skipped = 0;
    rep.train_loss.push_back(all.empty() ? 0.0 : nll_and_gradient(model, all, {}, nullptr, &skipped));
    rep.skipped = skipped;
  }
  evaluate(0);

  const double n = static_cast<double>(std::max<std::size_t>(all.size(), 1));
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed);
  Vector g;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t i : order) {
      const double loss = nll_and_gradient(model, {all[i]}, {}, &g);
      if (!std::isfinite(loss) || !g.allFinite()) throw Error("SCRF training diverged");
      epoch_loss += loss;
      Vector& w = model.weights();
      w -= config.step * (g + (config.l2 / n) * w);
      if (config.l1 > 0.0) {
        const double thr = config.step * config.l1 / n;
        w = w.unaryExpr([thr](double x) { return x > thr ? x - thr : (x < -thr ? x + thr : 0.0); });
      }
    }
    rep.train_loss.push_back(epoch_loss);
    evaluate(epoch);
  }
  if (report) *report = rep;
  return best;
}

}  // namespace segscribe
