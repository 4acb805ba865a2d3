#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "segscribe/segfeat.hpp"
#include "segscribe/semimarkov.hpp"

namespace segscribe {

/// Log-linear model over labeled segmentations: one weight per registry
/// coordinate and a maximum segment length.
class ScrfModel {
 public:
  ScrfModel() = default;
  ScrfModel(FeatureRegistry registry, int max_len);

  const FeatureRegistry& registry() const { return registry_; }
  const std::vector<Label>& labels() const { return registry_.labels(); }
  int max_len() const { return max_len_; }
  Vector& weights() { return weights_; }
  const Vector& weights() const { return weights_; }

  void save(std::ostream& out) const;
  static ScrfModel load(std::istream& in);
  void save(const std::string& path) const;
  static ScrfModel load(const std::string& path);

  bool operator==(const ScrfModel& o) const {
    return registry_ == o.registry_ && max_len_ == o.max_len_ && weights_ == o.weights_;
  }

 private:
  FeatureRegistry registry_;
  int max_len_ = 40;
  Vector weights_;
};

/// Label transition scores (start row last) with BOS/EOS constraints applied
/// unless `constrained` is false.
Matrix transition_scores(const ScrfModel& model, const SegmentInputs& in, bool constrained = true);
/// LM value of every transition, shaped like transition_scores.
Matrix lm_values(const std::vector<Label>& labels, const SegmentInputs& in);

/// Full chart of edge scores. Pass `spans` to reuse a span table built for
/// the same inputs and the model's registry and length limit.
SegmentScores segment_scores(const ScrfModel& model, const SegmentInputs& in, const SpanFeatures* spans = nullptr);
/// Edge scores of a lattice; features are recomputed from the inputs.
LatticeScores lattice_scores(const ScrfModel& model, const SegmentInputs& in, const Lattice& lattice);

/// Sum of edge scores computed feature by feature. -inf when BOS/EOS sit
/// anywhere but the ends; throws DataError for segments longer than max_len.
double path_score(const ScrfModel& model, const SegmentInputs& in, const LabeledSegmentation& path);
double log_partition(const ScrfModel& model, const SegmentInputs& in);
/// Joint Viterbi over labels and boundaries.
LabeledSegmentation decode(const ScrfModel& model, const SegmentInputs& in);
std::vector<ScoredPath> decode_kbest(const ScrfModel& model, const SegmentInputs& in, int k);
/// Best lattice path under the model. Throws DataError when none exists.
LabeledSegmentation rescore(const ScrfModel& model, const Lattice& lattice, const SegmentInputs& in);

/// One training sequence. With a lattice the model normalizes over lattice
/// paths only; otherwise over every segmentation within max_len.
struct ScrfExample {
  SegmentInputs inputs;
  LabeledSegmentation gold;
  std::optional<Lattice> lattice;
};

struct Regularization {
  double l1 = 0.0;
  double l2 = 0.0;
};

/// Negative conditional log-likelihood of the gold label sequences,
/// marginalized over their segmentations, plus l1 |w| + (l2 / 2) |w|^2.
/// Lattice examples whose lattice lacks the gold labels contribute nothing
/// and are counted in `skipped`.
double nll_and_gradient(const ScrfModel& model, const std::vector<const ScrfExample*>& batch, const Regularization& reg,
                        Vector* gradient, int* skipped = nullptr);

struct ScrfTrainConfig {
  int epochs = 10;
  double step = 0.05;
  /// Regularizer strengths per full pass; each per-sequence step applies 1/N.
  double l1 = 0.0;
  double l2 = 0.0;
  std::uint64_t seed = 1;
};

struct ScrfTrainReport {
  std::vector<double> train_loss;  // per epoch, index 0 = before training
  std::vector<double> dev_ler;     // empty without dev data
  int best_epoch = 0;
  int skipped = 0;
};

/// Decodes (or rescores, for lattice examples) and returns the pooled letter
/// error rate against the gold letters.
double scrf_error_rate(const ScrfModel& model, const std::vector<ScrfExample>& data);

/// Per-sequence SGD in a seeded order with a proximal L1 step. Returns the
/// epoch with the lowest dev error (the last epoch without dev data); epoch 0
/// is the initial model. Throws Error when the loss becomes non-finite.
ScrfModel train_scrf(const ScrfModel& init, const std::vector<ScrfExample>& train, const std::vector<ScrfExample>& dev,
                     const ScrfTrainConfig& config, ScrfTrainReport* report = nullptr);

}  // namespace segscribe
