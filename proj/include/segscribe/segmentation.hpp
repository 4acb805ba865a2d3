#pragma once

#include <map>
#include <vector>

#include "segscribe/types.hpp"

namespace segscribe {

/// Splits a recording into BOS, one segment per annotated letter, and EOS.
///
/// The boundary between consecutive peaks p_i < p_{i+1} is ceil((p_i + p_{i+1}) / 2).
/// The BOS segment ends at ceil(p_1 / 2) and the EOS segment starts at
/// ceil((p_k + T - 1) / 2). A BOS segment that would be empty (p_1 = 0) is
/// dropped, as is an EOS segment that would start on the last peak
/// (p_k = T - 1), so every letter segment contains its peak frame.
/// Digraph peaks produce two letter segments splitting the peak's span in half.
///
/// Throws DataError("no peaks") or DataError("peak out of range").
LabeledSegmentation peaks_to_segmentation(const PeakAnnotation& ann, int num_frames);

struct EditCounts {
  int substitutions = 0;
  int insertions = 0;
  int deletions = 0;
  int reference_length = 0;

  int errors() const { return substitutions + insertions + deletions; }
  /// Throws DataError("empty reference") when the reference is empty.
  double rate() const;
  EditCounts& operator+=(const EditCounts& o);
};

/// Levenshtein alignment of hyp against ref after stripping BOS/EOS.
EditCounts edit_counts(const std::vector<Label>& hyp, const std::vector<Label>& ref);

/// Levenshtein distance divided by the reference length.
double letter_error_rate(const std::vector<Label>& hyp, const std::vector<Label>& ref);

struct HistogramEntry {
  double frequency = 0.0;
  long count = 0;
};

struct LabelHistogram {
  std::map<Label, HistogramEntry> entries;
  long total = 0;
};

/// Per-letter peak counts and relative frequencies. Digraph peaks count
/// both constituent letters.
LabelHistogram label_histogram(const std::vector<PeakAnnotation>& annotations);

}  // namespace segscribe
