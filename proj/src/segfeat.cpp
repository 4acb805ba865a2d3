#include "segscribe/segfeat.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "segscribe/error.hpp"

namespace segscribe {

namespace {

constexpr FeatureTemplate kAllTemplates[] = {
    FeatureTemplate::kMean,     FeatureTemplate::kMax,       FeatureTemplate::kDivS,      FeatureTemplate::kDivM,
    FeatureTemplate::kPeak,     FeatureTemplate::kLm,        FeatureTemplate::kBaseline,  FeatureTemplate::kSamples,
    FeatureTemplate::kLBoundary, FeatureTemplate::kRBoundary, FeatureTemplate::kDuration, FeatureTemplate::kBias,
};

// Writes the y-independent local block of span [q, q_end) given the running
// sum and max of its posterior rows. The baseline slot is left untouched.
void fill_local(const FeatureRegistry& reg, const SegmentInputs& in, int q, int q_end, const double* sum,
                const double* mx, double* out) {
  const int V = reg.stream_dim();
  const int n = q_end - q;
  const int T = in.num_frames();
  const Matrix& g = in.posteriors;
  auto off = [&](FeatureTemplate t) { return reg.local_offset(t); };

  if (reg.has(FeatureTemplate::kMean)) {
    double* o = out + off(FeatureTemplate::kMean);
    for (int v = 0; v < V; ++v) o[v] = sum[v] / n;
  }
  if (reg.has(FeatureTemplate::kMax)) {
    double* o = out + off(FeatureTemplate::kMax);
    for (int v = 0; v < V; ++v) o[v] = mx[v];
  }
  if (reg.has(FeatureTemplate::kDivS) || reg.has(FeatureTemplate::kDivM)) {
    double* os = reg.has(FeatureTemplate::kDivS) ? out + off(FeatureTemplate::kDivS) : nullptr;
    double* om = reg.has(FeatureTemplate::kDivM) ? out + off(FeatureTemplate::kDivM) : nullptr;
    for (int j = 0; j < 3; ++j) {
      const int a = q + j * n / 3, b = q + (j + 1) * n / 3;
      for (int v = 0; v < V; ++v) {
        double s, m;
        if (a == b) {
          s = m = g(std::min(a, q_end - 1), v);
        } else {
          double acc = 0.0;
          m = g(a, v);
          for (int t = a; t < b; ++t) {
            acc += g(t, v);
            m = std::max(m, g(t, v));
          }
          s = acc / (b - a);
        }
        if (os) os[j * V + v] = s;
        if (om) om[j * V + v] = m;
      }
    }
  }
  if (reg.has(FeatureTemplate::kPeak)) {
    if (in.derivative.size() != T) throw DataError("peak features need the derivative profile");
    out[off(FeatureTemplate::kPeak)] = peak_indicator(in.derivative, q, q_end);
  }
  if (reg.has(FeatureTemplate::kSamples)) {
    double* o = out + off(FeatureTemplate::kSamples);
    for (int i = 0; i < 3; ++i) {
      const int t = std::min(q + static_cast<int>(std::round(n * kSampleFractions[i])), q_end - 1);
      for (int v = 0; v < V; ++v) o[i * V + v] = g(t, v);
    }
  }
  if (reg.has(FeatureTemplate::kLBoundary)) {
    double* o = out + off(FeatureTemplate::kLBoundary);
    for (int k = -1; k <= 1; ++k) {
      const int t = std::clamp(q + k, 0, T - 1);
      for (int v = 0; v < V; ++v) o[(k + 1) * V + v] = g(t, v);
    }
  }
  if (reg.has(FeatureTemplate::kRBoundary)) {
    double* o = out + off(FeatureTemplate::kRBoundary);
    for (int k = -1; k <= 1; ++k) {
      const int t = std::clamp(q_end - 1 + k, 0, T - 1);
      for (int v = 0; v < V; ++v) o[(k + 1) * V + v] = g(t, v);
    }
  }
  if (reg.has(FeatureTemplate::kDuration)) {
    double* o = out + off(FeatureTemplate::kDuration);
    for (int k = 0; k <= kDurationBins; ++k) o[k] = 0.0;
    o[std::min(n, kDurationBins + 1) - 1] = 1.0;
  }
  if (reg.has(FeatureTemplate::kBias)) out[off(FeatureTemplate::kBias)] = 1.0;
}

void check_span(const SegmentInputs& in, int q, int q_end) {
  if (q < 0 || q_end <= q || q_end > in.num_frames()) throw DataError("segment span out of range");
}

Label sole_baseline_label(const SegmentInputs& in, int q, int q_end) {
  if (static_cast<int>(in.baseline.size()) != in.num_frames()) {
    throw DataError("baseline consistency needs the baseline 1-best");
  }
  const Label first = in.baseline[static_cast<std::size_t>(q)];
  for (int t = q + 1; t < q_end; ++t) {
    if (in.baseline[static_cast<std::size_t>(t)] != first) return -1;
  }
  return first;
}

}  // namespace

const char* template_name(FeatureTemplate t) {
  switch (t) {
    case FeatureTemplate::kMean:
      return "mean";
    case FeatureTemplate::kMax:
      return "max";
    case FeatureTemplate::kDivS:
      return "div_s";
    case FeatureTemplate::kDivM:
      return "div_m";
    case FeatureTemplate::kPeak:
      return "peak";
    case FeatureTemplate::kLm:
      return "lm";
    case FeatureTemplate::kBaseline:
      return "baseline_consistency";
    case FeatureTemplate::kSamples:
      return "samples";
    case FeatureTemplate::kLBoundary:
      return "l_boundary";
    case FeatureTemplate::kRBoundary:
      return "r_boundary";
    case FeatureTemplate::kDuration:
      return "duration";
    case FeatureTemplate::kBias:
      return "bias";
  }
  return "?";
}

FeatureTemplate parse_template(const std::string& name) {
  for (auto t : kAllTemplates) {
    if (name == template_name(t)) return t;
  }
  throw UsageError("unknown feature template: " + name);
}

int FeatureRegistry::width(FeatureTemplate t, int V) {
  switch (t) {
    case FeatureTemplate::kMean:
    case FeatureTemplate::kMax:
      return V;
    case FeatureTemplate::kDivS:
    case FeatureTemplate::kDivM:
    case FeatureTemplate::kSamples:
    case FeatureTemplate::kLBoundary:
    case FeatureTemplate::kRBoundary:
      return 3 * V;
    case FeatureTemplate::kPeak:
    case FeatureTemplate::kBaseline:
    case FeatureTemplate::kBias:
      return 1;
    case FeatureTemplate::kDuration:
      return kDurationBins + 1;
    case FeatureTemplate::kLm:
      return 0;
  }
  return 0;
}

FeatureRegistry::FeatureRegistry(std::vector<FeatureTemplate> templates, std::vector<Label> labels, int stream_dim)
    : templates_(std::move(templates)), labels_(std::move(labels)), stream_dim_(stream_dim) {
  if (labels_.empty()) throw UsageError("registry needs at least one label");
  if (stream_dim_ < 0) throw UsageError("negative stream dimension");
  for (auto t : templates_) {
    auto& o = offset_[static_cast<std::size_t>(t)];
    if (o >= 0) throw UsageError(std::string("duplicate feature template: ") + template_name(t));
    o = local_dim_;  // lm gets a marker offset but no local slot
    local_dim_ += width(t, stream_dim_);
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const Label l = labels_[i];
    if (l < 0 || l >= kNumLabels) throw UsageError("registry label out of range");
    if (static_cast<std::size_t>(l) >= label_pos_.size()) label_pos_.resize(static_cast<std::size_t>(l) + 1, -1);
    if (label_pos_[static_cast<std::size_t>(l)] >= 0) throw UsageError("duplicate registry label");
    label_pos_[static_cast<std::size_t>(l)] = static_cast<int>(i);
  }
}

FeatureRegistry FeatureRegistry::rescoring(std::vector<Label> labels, int stream_dim) {
  return {{FeatureTemplate::kMean, FeatureTemplate::kMax, FeatureTemplate::kDivS, FeatureTemplate::kDivM,
           FeatureTemplate::kPeak, FeatureTemplate::kLm, FeatureTemplate::kBaseline},
          std::move(labels),
          stream_dim};
}

FeatureRegistry FeatureRegistry::firstpass(std::vector<Label> labels, int stream_dim, bool with_lm) {
  std::vector<FeatureTemplate> t{FeatureTemplate::kMean,      FeatureTemplate::kSamples,  FeatureTemplate::kLBoundary,
                                 FeatureTemplate::kRBoundary, FeatureTemplate::kDuration, FeatureTemplate::kBias};
  if (with_lm) t.push_back(FeatureTemplate::kLm);
  return {std::move(t), std::move(labels), stream_dim};
}

int FeatureRegistry::label_index(Label l) const {
  if (l < 0 || static_cast<std::size_t>(l) >= label_pos_.size()) return -1;
  return label_pos_[static_cast<std::size_t>(l)];
}

int FeatureRegistry::index(int label_pos, FeatureTemplate t, int k) const {
  if (t == FeatureTemplate::kLm) return lm_index();
  if (!has(t) || label_pos < 0 || label_pos >= num_labels() || k < 0 || k >= width(t, stream_dim_)) {
    throw UsageError("feature coordinate out of range");
  }
  return label_pos * local_dim_ + local_offset(t) + k;
}

int FeatureRegistry::lm_index() const {
  if (!has(FeatureTemplate::kLm)) throw UsageError("registry has no lm feature");
  return num_labels() * local_dim_;
}

std::string FeatureRegistry::to_text() const {
  std::ostringstream os;
  os << "templates";
  for (auto t : templates_) os << ' ' << template_name(t);
  os << "\nlabels";
  for (Label l : labels_) os << ' ' << l;
  os << "\nstream_dim " << stream_dim_ << '\n';
  return os.str();
}

FeatureRegistry FeatureRegistry::from_text(const std::string& text) {
  std::istringstream is(text);
  std::string line, key;
  std::vector<FeatureTemplate> templates;
  std::vector<Label> labels;
  int stream_dim = -1;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    if (!(ls >> key)) continue;
    if (key == "templates") {
      std::string name;
      while (ls >> name) templates.push_back(parse_template(name));
    } else if (key == "labels") {
      Label l;
      while (ls >> l) labels.push_back(l);
    } else if (key == "stream_dim") {
      ls >> stream_dim;
    } else {
      throw DataError("unknown registry key: " + key);
    }
  }
  if (stream_dim < 0) throw DataError("registry text lacks stream_dim");
  return {std::move(templates), std::move(labels), stream_dim};
}

Vector smoothed_derivative(const Matrix& frames) {
  const auto T = frames.rows();
  if (T < 2) throw DataError("derivative needs at least two frames");
  Vector d(T);
  for (Eigen::Index t = 0; t + 1 < T; ++t) d(t) = (frames.row(t + 1) - frames.row(t)).norm();
  d(T - 1) = d(T - 2);
  Vector out(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    double s = 0.0;
    for (Eigen::Index k = -2; k <= 2; ++k) s += d(std::clamp<Eigen::Index>(t + k, 0, T - 1));
    out(t) = s / 5.0;
  }
  return out;
}

int peak_indicator(const Vector& profile, int q, int q_end) {
  if (q < 0 || q_end > profile.size() || q_end <= q) throw DataError("peak span out of range");
  // Values of the maximal constant runs.
  std::vector<double> runs;
  for (int t = q; t < q_end; ++t) {
    if (runs.empty() || profile(t) != runs.back()) runs.push_back(profile(t));
  }
  int minima = 0;
  for (std::size_t i = 1; i + 1 < runs.size(); ++i) {
    if (runs[i] < runs[i - 1] && runs[i] < runs[i + 1]) ++minima;
  }
  return minima == 1 ? 1 : 0;
}

SegmentInputs SegmentInputs::make(const FrameSequence& seq, const std::vector<PosteriorStream>& streams,
                                  const BigramLm* lm, const LabeledSegmentation* baseline) {
  SegmentInputs in;
  const int T = seq.num_frames();
  int V = 0;
  for (const auto& s : streams) {
    if (s.num_frames() != T) throw DataError("posterior stream length differs from the sequence");
    V += s.num_classes();
  }
  in.posteriors.resize(T, V);
  int col = 0;
  for (const auto& s : streams) {
    in.posteriors.middleCols(col, s.num_classes()) = s.probs();
    col += s.num_classes();
  }
  if (T >= 2) {
    in.derivative = smoothed_derivative(seq);
  } else {
    in.derivative = Vector::Zero(T);
  }
  in.lm = lm;
  if (baseline) {
    if (baseline->num_frames() != T) throw DataError("baseline length differs from the sequence");
    in.baseline = baseline->frame_labels();
  }
  return in;
}

Vector local_features(const FeatureRegistry& reg, const SegmentInputs& in, int q, int q_end, Label y) {
  check_span(in, q, q_end);
  if (in.posteriors.cols() != reg.stream_dim()) throw DataError("posterior width differs from the registry");
  const int V = reg.stream_dim();
  std::vector<double> sum(static_cast<std::size_t>(V), 0.0), mx(static_cast<std::size_t>(V));
  for (int v = 0; v < V; ++v) mx[static_cast<std::size_t>(v)] = in.posteriors(q, v);
  for (int t = q; t < q_end; ++t) {
    for (int v = 0; v < V; ++v) {
      sum[static_cast<std::size_t>(v)] += in.posteriors(t, v);
      mx[static_cast<std::size_t>(v)] = std::max(mx[static_cast<std::size_t>(v)], in.posteriors(t, v));
    }
  }
  Vector out = Vector::Zero(reg.local_dim());
  fill_local(reg, in, q, q_end, sum.data(), mx.data(), out.data());
  if (reg.has(FeatureTemplate::kBaseline)) {
    out(reg.local_offset(FeatureTemplate::kBaseline)) = sole_baseline_label(in, q, q_end) == y ? 1.0 : -1.0;
  }
  return out;
}

double lm_feature(const SegmentInputs& in, Label prev, Label y) {
  if (!in.lm) throw DataError("lm feature needs a language model");
  if (y == kBos) return 0.0;
  return in.lm->logprob(prev, y);
}

Vector segment_features(const FeatureRegistry& reg, const SegmentContext& ctx) {
  if (!ctx.inputs) throw UsageError("segment context without inputs");
  const int pos = reg.label_index(ctx.label);
  if (pos < 0) throw DataError("segment label not in the registry");
  Vector f = Vector::Zero(reg.dim());
  f.segment(static_cast<Eigen::Index>(pos) * reg.local_dim(), reg.local_dim()) =
      local_features(reg, *ctx.inputs, ctx.q, ctx.q_end, ctx.label);
  if (reg.has(FeatureTemplate::kLm)) f(reg.lm_index()) = lm_feature(*ctx.inputs, ctx.prev, ctx.label);
  return f;
}

Vector rescoring_features(const SegmentContext& ctx, const FeatureRegistry& reg) { return segment_features(reg, ctx); }

Vector firstpass_features(const SegmentContext& ctx, const FeatureRegistry& reg) { return segment_features(reg, ctx); }

SpanFeatures::SpanFeatures(const FeatureRegistry& reg, const SegmentInputs& in, int max_len)
    : reg_(&reg), T_(in.num_frames()), L_(max_len) {
  if (max_len < 1) throw UsageError("maximum segment length must be positive");
  if (in.posteriors.cols() != reg.stream_dim()) throw DataError("posterior width differs from the registry");
  const int V = reg.stream_dim();
  table_ = Matrix::Zero(static_cast<Eigen::Index>(T_) * L_, reg.local_dim());
  baseline_.assign(static_cast<std::size_t>(T_) * static_cast<std::size_t>(L_), -1);
  const bool with_baseline = reg.has(FeatureTemplate::kBaseline);
  std::vector<double> sum(static_cast<std::size_t>(V)), mx(static_cast<std::size_t>(V));
  for (int q = 0; q < T_; ++q) {
    std::fill(sum.begin(), sum.end(), 0.0);
    for (int v = 0; v < V; ++v) mx[static_cast<std::size_t>(v)] = in.posteriors(q, v);
    Label sole = with_baseline ? sole_baseline_label(in, q, q + 1) : -1;
    for (int d = 1; d <= L_ && q + d <= T_; ++d) {
      const int t = q + d - 1;
      for (int v = 0; v < V; ++v) {
        sum[static_cast<std::size_t>(v)] += in.posteriors(t, v);
        mx[static_cast<std::size_t>(v)] = std::max(mx[static_cast<std::size_t>(v)], in.posteriors(t, v));
      }
      fill_local(reg, in, q, q + d, sum.data(), mx.data(), table_.row(row(q, d)).data());
      if (with_baseline) {
        if (in.baseline[static_cast<std::size_t>(t)] != in.baseline[static_cast<std::size_t>(q)]) sole = -1;
        baseline_[static_cast<std::size_t>(row(q, d))] = sole;
      }
    }
  }
}

Vector SpanFeatures::local(int q, int d, Label y) const {
  if (!valid(q, d)) throw DataError("span out of range");
  Vector out = table_.row(row(q, d)).transpose();
  if (reg_->has(FeatureTemplate::kBaseline)) {
    out(reg_->local_offset(FeatureTemplate::kBaseline)) = baseline_label(q, d) == y ? 1.0 : -1.0;
  }
  return out;
}

}  // namespace segscribe
