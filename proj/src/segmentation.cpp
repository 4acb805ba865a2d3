#include "segscribe/segmentation.hpp"

#include <algorithm>

#include "segscribe/error.hpp"

namespace segscribe {

namespace {

int ceil_half(int sum) { return (sum + 1) / 2; }

}  // namespace

LabeledSegmentation peaks_to_segmentation(const PeakAnnotation& ann, int num_frames) {
  const auto& peaks = ann.peaks();
  if (peaks.empty()) throw DataError("no peaks");
  for (const auto& p : peaks) {
    if (p.frame < 0 || p.frame >= num_frames) throw DataError("peak out of range");
  }

  std::vector<Label> labels;
  std::vector<int> bounds{0};

  const int bos_end = ceil_half(peaks.front().frame);
  if (bos_end > 0) {
    labels.push_back(kBos);
    bounds.push_back(bos_end);
  }
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    const Peak& p = peaks[i];
    const int right = i + 1 < peaks.size() ? ceil_half(p.frame + peaks[i + 1].frame)
                                           : std::max(ceil_half(p.frame + num_frames - 1),
                                                      p.frame + 1);
    if (p.is_digraph()) {
      const int left = bounds.back();
      const int mid = left + (right - left + 1) / 2;
      if (mid <= left || mid >= right) throw DataError("digraph peak span too short to split");
      labels.push_back(p.letter);
      bounds.push_back(mid);
      labels.push_back(p.second);
    } else {
      labels.push_back(p.letter);
    }
    bounds.push_back(right);
  }
  if (bounds.back() < num_frames) {
    labels.push_back(kEos);
    bounds.push_back(num_frames);
  }
  return {labels, bounds};
}

double EditCounts::rate() const {
  if (reference_length == 0) throw DataError("empty reference");
  return static_cast<double>(errors()) / reference_length;
}

EditCounts& EditCounts::operator+=(const EditCounts& o) {
  substitutions += o.substitutions;
  insertions += o.insertions;
  deletions += o.deletions;
  reference_length += o.reference_length;
  return *this;
}

EditCounts edit_counts(const std::vector<Label>& hyp_in, const std::vector<Label>& ref_in) {
  auto strip = [](const std::vector<Label>& v) {
    std::vector<Label> out;
    for (Label l : v) {
      if (l != kBos && l != kEos) out.push_back(l);
    }
    return out;
  };
  const auto hyp = strip(hyp_in);
  const auto ref = strip(ref_in);
  const std::size_t n = hyp.size();
  const std::size_t m = ref.size();

  // cost[i][j]: distance between hyp[0..i) and ref[0..j); ties prefer
  // substitution, then deletion, then insertion when tracing back.
  std::vector<std::vector<int>> cost(n + 1, std::vector<int>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) cost[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) cost[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const int sub = cost[i - 1][j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cost[i][j] = std::min({sub, cost[i - 1][j] + 1, cost[i][j - 1] + 1});
    }
  }

  EditCounts counts;
  counts.reference_length = static_cast<int>(m);
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        cost[i][j] == cost[i - 1][j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1)) {
      if (hyp[i - 1] != ref[j - 1]) ++counts.substitutions;
      --i;
      --j;
    } else if (j > 0 && cost[i][j] == cost[i][j - 1] + 1) {
      ++counts.deletions;
      --j;
    } else {
      ++counts.insertions;
      --i;
    }
  }
  return counts;
}

double letter_error_rate(const std::vector<Label>& hyp, const std::vector<Label>& ref) {
  return edit_counts(hyp, ref).rate();
}

LabelHistogram label_histogram(const std::vector<PeakAnnotation>& annotations) {
  LabelHistogram h;
  for (const auto& ann : annotations) {
    for (const auto& p : ann.peaks()) {
      ++h.entries[p.letter].count;
      ++h.total;
      if (p.is_digraph()) {
        ++h.entries[p.second].count;
        ++h.total;
      }
    }
  }
  for (auto& [label, e] : h.entries) {
    e.frequency = static_cast<double>(e.count) / static_cast<double>(h.total);
  }
  return h;
}

}  // namespace segscribe
