#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "segscribe/alphabet.hpp"

namespace segscribe {

/// Letter bigram model with Witten-Bell smoothing that backs off to an add-one
/// unigram distribution.
///
/// Histories are BOS, the 26 letters and UNK; predicted symbols are the 26
/// letters, EOS and UNK. Every history's conditional distribution sums to one
/// over the predicted symbols.
class BigramLm {
 public:
  /// Reserved id for out-of-vocabulary symbols; shares no id with real labels.
  static constexpr int kUnk = kNumLabels;
  static constexpr int kNumHistories = kNumLetters + 2;  // letters, BOS, UNK
  static constexpr int kNumPredictions = kNumLetters + 2;  // letters, EOS, UNK

  BigramLm();

  /// Counts over BOS-padded words, then smooths.
  static BigramLm fit(const std::vector<std::string>& words);
  /// Builds a model from raw counts; rows are histories, columns predictions
  /// (see history_index / prediction_index).
  static BigramLm from_counts(const Eigen::MatrixXd& bigram_counts);

  /// log p(next | prev). BOS as `next` has probability one (log 0.0) since
  /// sentence-start is not predicted; unknown ids map to UNK.
  double logprob(Label prev, Label next) const;
  double prob(Label prev, Label next) const;

  /// Per-letter perplexity of words including the EOS transition.
  double perplexity(const std::vector<std::string>& words) const;
  /// Total log probability of a word including the EOS transition.
  double word_logprob(const std::vector<Label>& letters) const;

  static int history_index(Label l);
  static int prediction_index(Label l);

  const Eigen::MatrixXd& counts() const { return counts_; }
  const Eigen::MatrixXd& log_table() const { return log_table_; }
  const Eigen::VectorXd& unigram_log() const { return unigram_log_; }

  /// Text format: a "\bigram" section of `h<TAB>w<TAB>logprob` lines and a
  /// "\backoff" section of `w<TAB>logprob` unigram lines. Round-trips exactly.
  void save(const std::string& path) const;
  static BigramLm load(const std::string& path);

 private:
  void smooth();

  Eigen::MatrixXd counts_;      // kNumHistories x kNumPredictions
  Eigen::MatrixXd log_table_;   // smoothed log p(w | h)
  Eigen::VectorXd unigram_log_; // add-one unigram log p(w)
};

}  // namespace segscribe
