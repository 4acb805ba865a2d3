#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "segscribe/alphabet.hpp"

namespace segscribe {

/// Row-major dense matrix; rows are frames or samples throughout the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// A T x D sequence of per-frame descriptors from one signer.
class FrameSequence {
 public:
  FrameSequence() = default;
  FrameSequence(Matrix frames, double frame_rate, std::string source_id);

  int num_frames() const { return static_cast<int>(frames_.rows()); }
  int dim() const { return static_cast<int>(frames_.cols()); }
  const Matrix& frames() const { return frames_; }
  double frame_rate() const { return frame_rate_; }
  const std::string& source_id() const { return source_id_; }

 private:
  Matrix frames_;
  double frame_rate_ = 60.0;
  std::string source_id_;
};

struct Peak {
  int frame = 0;
  Label letter = 0;
  /// Second letter of a digraph peak, or -1.
  Label second = -1;
  bool noncanonical = false;  // '+'
  bool undetected = false;    // '*'

  bool is_digraph() const { return second >= 0; }
};

/// Peak annotation of one fingerspelled word recording.
class PeakAnnotation {
 public:
  PeakAnnotation() = default;
  /// Validates ordering, range and letter count; throws DataError.
  PeakAnnotation(std::string word, std::string signer, int num_frames, std::vector<Peak> peaks);

  const std::string& word() const { return word_; }
  const std::string& signer() const { return signer_; }
  int num_frames() const { return num_frames_; }
  const std::vector<Peak>& peaks() const { return peaks_; }
  bool has_digraph() const;

 private:
  std::string word_;
  std::string signer_;
  int num_frames_ = 0;
  std::vector<Peak> peaks_;
};

/// Labels s_1..s_k with boundaries q_0 = 0 < q_1 < ... < q_k = T. Segment i
/// covers frames [q_{i-1}, q_i).
class LabeledSegmentation {
 public:
  LabeledSegmentation() = default;
  LabeledSegmentation(std::vector<Label> labels, std::vector<int> boundaries);

  int size() const { return static_cast<int>(labels_.size()); }
  int num_frames() const { return boundaries_.empty() ? 0 : boundaries_.back(); }
  const std::vector<Label>& labels() const { return labels_; }
  const std::vector<int>& boundaries() const { return boundaries_; }
  int start(int i) const { return boundaries_[static_cast<std::size_t>(i)]; }
  int end(int i) const { return boundaries_[static_cast<std::size_t>(i) + 1]; }

  /// Label of every frame.
  std::vector<Label> frame_labels() const;
  /// Labels with BOS/EOS removed.
  std::vector<Label> letters() const;

  bool operator==(const LabeledSegmentation&) const = default;

 private:
  std::vector<Label> labels_;
  std::vector<int> boundaries_;
};

/// T x V matrix of per-frame class posteriors of one classifier head.
class PosteriorStream {
 public:
  PosteriorStream() = default;
  PosteriorStream(Matrix probs, std::string head);

  int num_frames() const { return static_cast<int>(probs_.rows()); }
  int num_classes() const { return static_cast<int>(probs_.cols()); }
  const Matrix& probs() const { return probs_; }
  const std::string& head() const { return head_; }

 private:
  Matrix probs_;
  std::string head_;
};

struct LatticeEdge {
  int start = 0;
  int end = 0;
  Label label = 0;
  double score = 0.0;
};

/// DAG of scored labeled segments over time points 0..T.
class Lattice {
 public:
  Lattice() = default;
  /// Validates edge endpoints, completeness and the 1-best path.
  Lattice(std::vector<int> nodes, std::vector<LatticeEdge> edges, std::vector<int> one_best);

  int num_frames() const { return nodes_.empty() ? 0 : nodes_.back(); }
  const std::vector<int>& nodes() const { return nodes_; }
  const std::vector<LatticeEdge>& edges() const { return edges_; }
  /// Edge indices of the designated 1-best path, in time order.
  const std::vector<int>& one_best() const { return one_best_; }
  LabeledSegmentation one_best_segmentation() const;

  /// Builds a lattice from the union of the given paths; paths[0] is the 1-best.
  /// Duplicate (start, end, label) edges are merged keeping the highest score.
  static Lattice from_paths(const std::vector<LabeledSegmentation>& paths,
                            const std::vector<std::vector<double>>& edge_scores);

 private:
  std::vector<int> nodes_;
  std::vector<LatticeEdge> edges_;
  std::vector<int> one_best_;
};

}  // namespace segscribe
