#pragma once

#include <string>
#include <vector>

#include "segscribe/bigram_lm.hpp"
#include "segscribe/types.hpp"

namespace segscribe {

enum class FeatureTemplate {
  kMean,
  kMax,
  kDivS,
  kDivM,
  kPeak,
  kLm,
  kBaseline,
  kSamples,
  kLBoundary,
  kRBoundary,
  kDuration,
  kBias,
};

const char* template_name(FeatureTemplate t);
/// Throws UsageError for unknown names.
FeatureTemplate parse_template(const std::string& name);

inline constexpr int kDurationBins = 30;  // plus one overflow bin
inline constexpr double kSampleFractions[3] = {0.16, 0.50, 0.84};

/// Ordered set of enabled templates and the coordinate layout of the
/// feature space: one block of local_dim() coordinates per label (all
/// templates except lm, multiplied by the label indicator), followed by a
/// single unlexicalized lm coordinate when lm is enabled.
class FeatureRegistry {
 public:
  FeatureRegistry() = default;
  /// `stream_dim` is the total class count of the concatenated posterior streams.
  FeatureRegistry(std::vector<FeatureTemplate> templates, std::vector<Label> labels, int stream_dim);

  static FeatureRegistry rescoring(std::vector<Label> labels, int stream_dim);
  static FeatureRegistry firstpass(std::vector<Label> labels, int stream_dim, bool with_lm = false);

  const std::vector<FeatureTemplate>& templates() const { return templates_; }
  const std::vector<Label>& labels() const { return labels_; }
  int num_labels() const { return static_cast<int>(labels_.size()); }
  int stream_dim() const { return stream_dim_; }
  bool has(FeatureTemplate t) const { return offset_[static_cast<std::size_t>(t)] >= 0; }

  int local_dim() const { return local_dim_; }
  int dim() const { return num_labels() * local_dim_ + (has(FeatureTemplate::kLm) ? 1 : 0); }
  /// Offset of the template inside a local block; -1 when disabled. Meaningless for lm.
  int local_offset(FeatureTemplate t) const { return offset_[static_cast<std::size_t>(t)]; }
  static int width(FeatureTemplate t, int stream_dim);

  /// Index of label `l` in labels(); -1 when absent.
  int label_index(Label l) const;
  /// Coordinate of component k of template t for label position y.
  int index(int label_pos, FeatureTemplate t, int k) const;
  int lm_index() const;

  std::string to_text() const;
  static FeatureRegistry from_text(const std::string& text);

  bool operator==(const FeatureRegistry& o) const {
    return templates_ == o.templates_ && labels_ == o.labels_ && stream_dim_ == o.stream_dim_;
  }

 private:
  std::vector<FeatureTemplate> templates_;
  std::vector<Label> labels_;
  int stream_dim_ = 0;
  int local_dim_ = 0;
  std::vector<int> offset_ = std::vector<int>(12, -1);
  std::vector<int> label_pos_;
};

/// d_t = |o_{t+1} - o_t| (last value repeated), then a 5-frame centered
/// moving average with edge replication. Throws DataError when T < 2.
Vector smoothed_derivative(const Matrix& frames);
inline Vector smoothed_derivative(const FrameSequence& seq) { return smoothed_derivative(seq.frames()); }

/// 1 when profile[q, q_end) has exactly one maximal constant run strictly
/// lower than both adjacent runs; runs touching the span ends have only one
/// neighbour and never count.
int peak_indicator(const Vector& profile, int q, int q_end);

/// Per-sequence inputs shared by every segment.
struct SegmentInputs {
  Matrix posteriors;               // T x stream_dim, streams concatenated
  Vector derivative;               // T; empty unless peak features are used
  const BigramLm* lm = nullptr;    // required by the lm template
  std::vector<Label> baseline;     // per-frame baseline labels; empty unless used

  int num_frames() const { return static_cast<int>(posteriors.rows()); }

  static SegmentInputs make(const FrameSequence& seq, const std::vector<PosteriorStream>& streams,
                            const BigramLm* lm = nullptr, const LabeledSegmentation* baseline = nullptr);
};

struct SegmentContext {
  Label prev = kBos;  // previous label; kBos for the first segment
  Label label = 0;
  int q = 0;
  int q_end = 1;  // segment covers frames [q, q_end)
  const SegmentInputs* inputs = nullptr;
};

/// Local block for label y (the baseline template is the only y-dependent part).
Vector local_features(const FeatureRegistry& reg, const SegmentInputs& in, int q, int q_end, Label y);
/// log p_LM(y | prev); 0 when y is BOS.
double lm_feature(const SegmentInputs& in, Label prev, Label y);
/// Full feature vector of one edge.
Vector segment_features(const FeatureRegistry& reg, const SegmentContext& ctx);
Vector rescoring_features(const SegmentContext& ctx, const FeatureRegistry& reg);
Vector firstpass_features(const SegmentContext& ctx, const FeatureRegistry& reg);

/// Local blocks of every span of length <= max_len, baseline column left 0.
class SpanFeatures {
 public:
  SpanFeatures(const FeatureRegistry& reg, const SegmentInputs& in, int max_len);

  int num_frames() const { return T_; }
  int max_len() const { return L_; }
  bool valid(int q, int d) const { return q >= 0 && d >= 1 && d <= L_ && q + d <= T_; }
  Eigen::Index row(int q, int d) const { return static_cast<Eigen::Index>(q) * L_ + (d - 1); }
  /// (T * L) x local_dim; rows of invalid spans are zero.
  const Matrix& table() const { return table_; }
  /// Sole baseline label of the span, or -1 when it covers several.
  Label baseline_label(int q, int d) const { return baseline_[static_cast<std::size_t>(row(q, d))]; }
  Vector local(int q, int d, Label y) const;

 private:
  const FeatureRegistry* reg_;
  int T_, L_;
  Matrix table_;
  std::vector<Label> baseline_;
};

}  // namespace segscribe
