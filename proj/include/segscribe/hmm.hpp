#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "segscribe/bigram_lm.hpp"
#include "segscribe/frontend.hpp"
#include "segscribe/semimarkov.hpp"

namespace segscribe {

/// log(max(p, 1e-8)) of every head, concatenated column-wise. Throws
/// DataError when the heads differ in length.
Matrix log_posterior_block(const std::vector<PosteriorStream>& heads);

struct TandemConfig {
  int posterior_dim = 40;  // clamped to the data rank bound
  int image_dim = 40;      // 0 drops the image block; at most 200
};

/// PCA of the log-posterior block concatenated with PCA of the image
/// descriptors.
class TandemTransform {
 public:
  TandemTransform() = default;

  /// `images` may be empty when config.image_dim is 0.
  static TandemTransform fit(const std::vector<std::vector<PosteriorStream>>& heads, const std::vector<Matrix>& images,
                             const TandemConfig& config);

  int dim() const;
  int posterior_dim() const { return posterior_pca_.output_dim(); }
  int image_dim() const { return has_images_ ? image_pca_.output_dim() : 0; }

  /// Throws DataError when the streams and the descriptors differ in T.
  Matrix apply(const std::vector<PosteriorStream>& heads, const Matrix* images) const;

  void save(std::ostream& out) const;
  static TandemTransform load(std::istream& in);

 private:
  PcaProjector posterior_pca_;
  PcaProjector image_pca_;
  bool has_images_ = false;
};

/// Feature matrix file: "SGMX" magic, u32 rows, u32 cols, then f64 values.
void write_matrix(const std::string& path, const Matrix& m);
Matrix read_matrix(const std::string& path);

/// Diagonal-covariance Gaussian mixture.
struct DiagGmm {
  Vector weights;    // K
  Matrix means;      // K x D
  Matrix variances;  // K x D
  int size() const { return static_cast<int>(weights.size()); }
  /// log w_k + log N(x; mean_k, var_k).
  double component_log_likelihood(int k, const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  double log_likelihood(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

/// Left-to-right HMMs for every label id (letters, BOS, EOS), each with
/// states_per_unit emitting states. A state either stays or advances to the
/// next state; the last state of a unit advances into the next unit.
class TandemHmm {
 public:
  TandemHmm() = default;
  TandemHmm(int dim, int states_per_unit, Vector variance_floor);

  int dim() const { return dim_; }
  int states_per_unit() const { return states_; }
  int num_states() const { return kNumLabels * states_; }
  int state(Label unit, int s) const { return unit * states_ + s; }

  std::vector<DiagGmm>& gmms() { return gmms_; }
  const std::vector<DiagGmm>& gmms() const { return gmms_; }
  /// num_states x 2: probabilities of staying and of advancing.
  Matrix& transitions() { return trans_; }
  const Matrix& transitions() const { return trans_; }
  const Vector& variance_floor() const { return floor_; }

  double lm_weight = 1.0;
  double penalty = 0.0;

  /// Per-frame emission log-likelihoods, T x num_states.
  Matrix emissions(const Matrix& features) const;

  /// States take the frames of their share of each gold segment (thirds
  /// for 3 states); units without frames get the global statistics and a
  /// warning. Variance floor = 1e-4 x global variance.
  static TandemHmm initialize(const std::vector<Matrix>& features, const std::vector<LabeledSegmentation>& gold,
                              int states_per_unit, std::vector<std::string>* warnings = nullptr);

  void save(std::ostream& out) const;
  static TandemHmm load(std::istream& in);
  void save(const std::string& path) const;
  static TandemHmm load(const std::string& path);
  bool operator==(const TandemHmm& other) const;

 private:
  int dim_ = 0;
  int states_ = 3;
  Vector floor_;
  std::vector<DiagGmm> gmms_;
  Matrix trans_;
};

/// Splits the heaviest component of every state until each has `components`.
/// Means move by +-0.2 standard deviations.
void split_mixtures(TandemHmm& model, int components);

struct EmConfig {
  int iterations = 4;             // per stage
  std::vector<int> schedule{1};   // mixture components of each stage
};

struct EmReport {
  std::vector<double> log_likelihood;  // total before each iteration's update
  std::vector<int> components;         // components during each iteration
  int skipped = 0;                     // sequences too short for their transcript
  std::vector<std::string> warnings;
};

/// Embedded Baum-Welch: each iteration runs forward-backward over the
/// concatenated unit HMMs of every transcript, then re-estimates all
/// emitting states and transitions. Labels are used verbatim.
TandemHmm train_em(TandemHmm init, const std::vector<Matrix>& features,
                   const std::vector<std::vector<Label>>& transcripts, const EmConfig& config,
                   EmReport* report = nullptr);

/// Log-likelihood of one sequence under its composed transcript HMM; -inf
/// when the sequence is too short.
double sequence_log_likelihood(const TandemHmm& model, const Matrix& features, const std::vector<Label>& transcript);

struct HmmDecodeResult {
  LabeledSegmentation segmentation;  // BOS first, EOS last
  double score = 0.0;
};

/// Best path over BOS, one or more letters, EOS with score
///   sum of emission and HMM transition log-probabilities
///   + lm_weight * log p_LM(next | prev) + penalty
/// per unit-to-unit transition. `lm` may be null. `emissions` is T x
/// num_states. Throws DataError when T < 3 units' worth of states.
HmmDecodeResult viterbi_decode(const TandemHmm& model, const Matrix& emissions, const BigramLm* lm, double lm_weight,
                               double penalty);
inline HmmDecodeResult viterbi_decode(const TandemHmm& model, const Matrix& features, const BigramLm* lm) {
  return viterbi_decode(model, model.emissions(features), lm, model.lm_weight, model.penalty);
}

struct Alignment {
  LabeledSegmentation segmentation;
  std::vector<Label> frame_labels;
  double score = 0.0;  // emission + transition log-probabilities
};

/// Viterbi through BOS, the letters of `transcript`, EOS. Throws DataError
/// "transcript too long" when T is below states_per_unit frames per unit.
Alignment forced_align(const TandemHmm& model, const Matrix& emissions, const std::vector<Label>& transcript);

/// Semi-Markov chart whose edge (q, d, y) is the best pass of unit y through
/// frames [q, q + d), including its exit transition unless y is EOS. Paths
/// are forced to start with BOS and end with EOS; letters follow letters
/// with lm and penalty terms. Its Viterbi equals viterbi_decode when every
/// unit of the best path spans at most max_len frames.
SegmentScores hmm_segment_scores(const TandemHmm& model, const Matrix& emissions, const BigramLm* lm,
                                 double lm_weight, double penalty, int max_len);

struct HmmNbest {
  Lattice lattice;
  std::vector<ScoredPath> paths;  // scores non-increasing
};

/// Up to n distinct labeled segmentations merged into a lattice whose 1-best
/// is the top path. Throws UsageError when n < 1.
HmmNbest nbest_lattice(const TandemHmm& model, const Matrix& emissions, const BigramLm* lm, int n, int max_len = 40);

}  // namespace segscribe
