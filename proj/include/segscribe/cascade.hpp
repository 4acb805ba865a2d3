#pragma once

#include <string>
#include <vector>

#include "segscribe/mlp.hpp"
#include "segscribe/scrf.hpp"

namespace segscribe {

/// Means of the three thirds of frames [q, q_end), concatenated (3 x D). The
/// thirds split as in the div_s template; an empty third takes its start frame.
Vector segment_thirds(const Matrix& frames, int q, int q_end);

/// Whole-segment letter classifier on segment_thirds inputs.
class SegmentalDnn {
 public:
  SegmentalDnn() = default;

  /// Trains on the gold segments of `sequences`. Only labels seen in training
  /// are modelled.
  static SegmentalDnn train(const std::vector<FrameSequence>& sequences, const std::vector<LabeledSegmentation>& gold,
                            const std::vector<FrameSequence>& dev_sequences,
                            const std::vector<LabeledSegmentation>& dev_gold, const TrainConfig& config);

  int static_dim() const { return net_.static_dim() / 3; }
  const Mlp& net() const { return net_; }
  const std::vector<Label>& classes() const { return classes_; }

  /// log p(y | segment) for every label id; labels never seen in training get
  /// log(1e-8).
  Vector log_posteriors(const Matrix& frames, int q, int q_end) const;

  void save(const std::string& path) const;
  static SegmentalDnn load(const std::string& path);

 private:
  Mlp net_;
  std::vector<Label> classes_;
};

/// Second-pass weights on {first-pass edge score, segmental DNN log-posterior,
/// peak indicator, lm}.
struct CascadeWeights {
  double first_pass = 1.0;
  double segdnn = 0.0;
  double peak = 0.0;
  double lm = 0.0;
};

/// N-best lattice of the first pass with every second-pass feature cached.
struct CascadeLattice {
  Lattice lattice;
  std::vector<Label> labels;
  std::vector<int> label_pos;  // per edge
  Vector first_pass;           // per edge, local part of the first-pass score
  Vector segdnn;
  Vector peak;
  Matrix first_pass_trans;     // (Y + 1) x Y, unconstrained
  Matrix lm;                   // (Y + 1) x Y
};

/// Throws UsageError when nbest < 1.
CascadeLattice build_cascade_lattice(const ScrfModel& first, const SegmentalDnn& dnn, const SegmentInputs& in,
                                     const FrameSequence& seq, int nbest);
LabeledSegmentation cascade_best(const CascadeLattice& lat, const CascadeWeights& w);
LabeledSegmentation cascade_decode(const ScrfModel& first, const CascadeWeights& w, const SegmentalDnn& dnn,
                                   const SegmentInputs& in, const FrameSequence& seq, int nbest);

/// Grid search for the weights with the lowest pooled letter error on the
/// given lattices; first_pass stays 1 and the first-pass-only weights win
/// ties.
CascadeWeights tune_cascade(const std::vector<CascadeLattice>& lattices, const std::vector<LabeledSegmentation>& gold);

}  // namespace segscribe
