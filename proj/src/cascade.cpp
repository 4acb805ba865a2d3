#include "segscribe/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "segscribe/error.hpp"
#include "segscribe/io.hpp"
#include "segscribe/segmentation.hpp"

namespace segscribe {

namespace {

constexpr double kFloorLog = -18.420680743952367;  // log(1e-8)

Matrix gold_segments(const FrameSequence& seq, const LabeledSegmentation& gold, std::vector<Label>* labels) {
  if (gold.num_frames() != seq.num_frames()) throw DataError("gold segmentation length differs from the sequence");
  Matrix rows(gold.size(), 3 * seq.dim());
  for (int i = 0; i < gold.size(); ++i) {
    rows.row(i) = segment_thirds(seq.frames(), gold.start(i), gold.end(i)).transpose();
    labels->push_back(gold.labels()[static_cast<std::size_t>(i)]);
  }
  return rows;
}

}  // namespace

Vector segment_thirds(const Matrix& frames, int q, int q_end) {
  if (q < 0 || q_end <= q || q_end > frames.rows()) throw DataError("segment span out of range");
  const auto D = frames.cols();
  const int n = q_end - q;
  Vector out(3 * D);
  for (int j = 0; j < 3; ++j) {
    int a = q + j * n / 3, b = q + (j + 1) * n / 3;
    if (a == b) {
      a = std::min(a, q_end - 1);
      b = a + 1;
    }
    out.segment(j * D, D) = frames.middleRows(a, b - a).colwise().mean().transpose();
  }
  return out;
}

SegmentalDnn SegmentalDnn::train(const std::vector<FrameSequence>& sequences, const std::vector<LabeledSegmentation>& gold,
                                 const std::vector<FrameSequence>& dev_sequences,
                                 const std::vector<LabeledSegmentation>& dev_gold, const TrainConfig& config) {
  if (sequences.empty() || sequences.size() != gold.size()) throw DataError("segmental DNN needs one gold segmentation per sequence");
  if (dev_sequences.size() != dev_gold.size()) throw DataError("dev sequences and segmentations differ in count");
  std::vector<Matrix> rows;
  std::vector<std::vector<Label>> labels(sequences.size());
  std::set<Label> seen;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    rows.push_back(gold_segments(sequences[i], gold[i], &labels[i]));
    seen.insert(labels[i].begin(), labels[i].end());
  }
  SegmentalDnn dnn;
  dnn.classes_.assign(seen.begin(), seen.end());
  auto index_of = [&](Label l) {
    auto it = std::lower_bound(dnn.classes_.begin(), dnn.classes_.end(), l);
    return (it != dnn.classes_.end() && *it == l) ? static_cast<int>(it - dnn.classes_.begin()) : -1;
  };
  const int D3 = static_cast<int>(3 * sequences[0].dim());
  FrameDataset train(D3), heldout(D3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<int> idx;
    for (Label l : labels[i]) idx.push_back(index_of(l));
    train.add(rows[i], idx);
  }
  for (std::size_t i = 0; i < dev_sequences.size(); ++i) {
    std::vector<Label> dl;
    Matrix r = gold_segments(dev_sequences[i], dev_gold[i], &dl);
    std::vector<int> idx;
    Matrix kept(r.rows(), r.cols());
    int k = 0;
    for (std::size_t j = 0; j < dl.size(); ++j) {
      const int c = index_of(dl[j]);
      if (c < 0) continue;
      kept.row(k++) = r.row(static_cast<Eigen::Index>(j));
      idx.push_back(c);
    }
    if (k > 0) heldout.add(kept.topRows(k), idx);
  }
  TrainConfig cfg = config;
  cfg.window = 1;
  dnn.net_ = train_mlp(train, heldout, static_cast<int>(dnn.classes_.size()), cfg, nullptr, "segment");
  return dnn;
}

Vector SegmentalDnn::log_posteriors(const Matrix& frames, int q, int q_end) const {
  if (frames.cols() * 3 != net_.static_dim()) throw DataError("descriptor dimension differs from the segmental DNN");
  const Vector x = segment_thirds(frames, q, q_end);
  const Matrix p = net_.forward(Matrix(x.transpose()));
  Vector out = Vector::Constant(kNumLabels, kFloorLog);
  for (std::size_t c = 0; c < classes_.size(); ++c) {
    out(classes_[c]) = std::log(std::max(p(0, static_cast<Eigen::Index>(c)), 1e-8));
  }
  return out;
}

void SegmentalDnn::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  io::write_u32(out, static_cast<std::uint32_t>(classes_.size()));
  for (Label l : classes_) io::write_u32(out, static_cast<std::uint32_t>(l));
  net_.save(out);
}

SegmentalDnn SegmentalDnn::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  SegmentalDnn d;
  const auto n = io::read_u32(in);
  if (n > static_cast<std::uint32_t>(kNumLabels)) throw DataError("segmental DNN class count out of range");
  for (std::uint32_t i = 0; i < n; ++i) d.classes_.push_back(static_cast<Label>(io::read_u32(in)));
  d.net_ = Mlp::load(in);
  if (d.net_.num_classes() != static_cast<int>(n)) throw DataError("segmental DNN class list differs from its network");
  return d;
}

CascadeLattice build_cascade_lattice(const ScrfModel& first, const SegmentalDnn& dnn, const SegmentInputs& in,
                                     const FrameSequence& seq, int nbest) {
  if (nbest < 1) throw UsageError("N-best size must be at least 1");
  if (seq.num_frames() != in.num_frames()) throw DataError("descriptor and posterior lengths differ");
  const SegmentScores s = segment_scores(first, in);
  const auto top = kbest(s, nbest);
  std::vector<LabeledSegmentation> paths;
  std::vector<std::vector<double>> scores;
  for (const auto& p : top) {
    paths.push_back(p.path);
    std::vector<double> es;
    for (int i = 0; i < p.path.size(); ++i) {
      es.push_back(s.unary(s.row(p.path.start(i), p.path.end(i) - p.path.start(i)),
                           s.position(p.path.labels()[static_cast<std::size_t>(i)])));
    }
    scores.push_back(std::move(es));
  }
  CascadeLattice c;
  c.lattice = Lattice::from_paths(paths, scores);
  c.labels = first.labels();
  const auto E = static_cast<Eigen::Index>(c.lattice.edges().size());
  c.first_pass = Vector(E);
  c.segdnn = Vector(E);
  c.peak = Vector(E);
  for (Eigen::Index e = 0; e < E; ++e) {
    const auto& ed = c.lattice.edges()[static_cast<std::size_t>(e)];
    c.label_pos.push_back(s.position(ed.label));
    c.first_pass(e) = ed.score;
    c.segdnn(e) = dnn.log_posteriors(seq.frames(), ed.start, ed.end)(ed.label);
    c.peak(e) = in.derivative.size() == in.num_frames() ? peak_indicator(in.derivative, ed.start, ed.end) : 0.0;
  }
  c.first_pass_trans = transition_scores(first, in, false);
  c.lm = in.lm ? lm_values(c.labels, in) : Matrix::Zero(c.first_pass_trans.rows(), c.first_pass_trans.cols());
  return c;
}

LabeledSegmentation cascade_best(const CascadeLattice& lat, const CascadeWeights& w) {
  LatticeScores s;
  s.lattice = &lat.lattice;
  s.labels = lat.labels;
  s.label_pos = lat.label_pos;
  s.unary = w.first_pass * lat.first_pass + w.segdnn * lat.segdnn + w.peak * lat.peak;
  s.trans = constrained_transitions(lat.labels, w.first_pass * lat.first_pass_trans + w.lm * lat.lm);
  return lattice_viterbi(s).segmentation(lat.lattice);
}

LabeledSegmentation cascade_decode(const ScrfModel& first, const CascadeWeights& w, const SegmentalDnn& dnn,
                                   const SegmentInputs& in, const FrameSequence& seq, int nbest) {
  return cascade_best(build_cascade_lattice(first, dnn, in, seq, nbest), w);
}

CascadeWeights tune_cascade(const std::vector<CascadeLattice>& lattices, const std::vector<LabeledSegmentation>& gold) {
  if (lattices.size() != gold.size()) throw DataError("one gold segmentation per lattice is required");
  CascadeWeights best;
  if (lattices.empty()) return best;
  auto error = [&](const CascadeWeights& w) {
    EditCounts total;
    for (std::size_t i = 0; i < lattices.size(); ++i) total += edit_counts(cascade_best(lattices[i], w).labels(), gold[i].labels());
    return total.rate();
  };
  double best_err = error(best);
  for (double dnn : {0.0, 0.25, 0.5, 1.0, 2.0}) {
    for (double peak : {0.0, -1.0, 1.0}) {
      for (double lm : {0.0, 0.5, 1.0}) {
        const CascadeWeights w{1.0, dnn, peak, lm};
        const double err = error(w);
        if (err < best_err) {
          best_err = err;
          best = w;
        }
      }
    }
  }
  return best;
}

}  // namespace segscribe
