#pragma once

#include <vector>

#include "segscribe/types.hpp"

namespace segscribe {

/// Edge scores of a semi-Markov model over T frames with labels indexed by
/// position in `labels`.
///
/// score(prev, q, d, y) = unary(row(q, d), y) + trans(prev, y), where prev is
/// a label position or start() for the first segment. Disallowed edges hold
/// -inf. Paths end at T with no final score.
struct SegmentScores {
  int num_frames = 0;
  int max_len = 1;
  std::vector<Label> labels;
  Matrix unary;  // (T * L) x Y
  Matrix trans;  // (Y + 1) x Y

  int num_labels() const { return static_cast<int>(labels.size()); }
  int start() const { return num_labels(); }
  Eigen::Index row(int q, int d) const { return static_cast<Eigen::Index>(q) * max_len + (d - 1); }
  /// Position of `l` in labels; -1 when absent.
  int position(Label l) const;
};

/// Transition matrix with the sentence-boundary constraints applied: BOS only
/// as the first segment and nothing after EOS.
Matrix constrained_transitions(const std::vector<Label>& labels, Matrix trans);

double log_sum_exp(double a, double b);

/// Expected edge counts under the model, or under the gold-label-restricted
/// model. unary has the shape of SegmentScores::unary.
struct EdgeMarginals {
  double log_z = 0.0;
  Matrix unary;
  Matrix trans;
};

struct ForwardBackward {
  double log_z_forward = 0.0;
  double log_z_backward = 0.0;
  Matrix alpha;  // (T + 1) x Y: paths over [0, t) whose last label is y
  Matrix beta;   // (T + 1) x Y: completions of [t, T) after label y
};

ForwardBackward forward_backward(const SegmentScores& s);
double log_partition(const SegmentScores& s);
EdgeMarginals edge_marginals(const SegmentScores& s);

/// Sum over segmentations of exactly the given label sequence. -inf when no
/// segmentation fits. Throws DataError for labels outside the model.
double constrained_log_partition(const SegmentScores& s, const std::vector<Label>& labels);
EdgeMarginals constrained_marginals(const SegmentScores& s, const std::vector<Label>& labels);

/// Score of one labeled segmentation; throws DataError when a segment is
/// longer than max_len or a label is unknown.
double path_score(const SegmentScores& s, const LabeledSegmentation& path);

struct ScoredPath {
  LabeledSegmentation path;
  double score = 0.0;
};

/// Highest-scoring labeled segmentation; ties go to the earlier boundary,
/// then the smaller label position.
ScoredPath viterbi(const SegmentScores& s);
/// Up to k best distinct labeled segmentations, scores non-increasing.
std::vector<ScoredPath> kbest(const SegmentScores& s, int k);

/// Scores of lattice edges: per-edge unary plus label transitions shaped like
/// SegmentScores::trans.
struct LatticeScores {
  const Lattice* lattice = nullptr;
  std::vector<Label> labels;
  Vector unary;                 // one per edge
  std::vector<int> label_pos;   // edge label positions
  Matrix trans;

  int start() const { return static_cast<int>(labels.size()); }
};

/// Indices of the best complete path and its score. Throws DataError when no
/// complete path has finite score.
struct LatticePath {
  std::vector<int> edges;
  double score = 0.0;
  LabeledSegmentation segmentation(const Lattice& lat) const;
};
LatticePath lattice_viterbi(const LatticeScores& s);

/// Marginals over complete lattice paths; `gold` restricts them to paths
/// whose label sequence equals it (empty = unrestricted). unary has one entry
/// per edge (E x 1). log_z is -inf when no path qualifies.
EdgeMarginals lattice_marginals(const LatticeScores& s, const std::vector<Label>* gold = nullptr);

}  // namespace segscribe
