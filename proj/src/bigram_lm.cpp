#include "segscribe/bigram_lm.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "segscribe/error.hpp"
#include "segscribe/io.hpp"

namespace segscribe {

namespace {

constexpr int kHistBos = kNumLetters;
constexpr int kHistUnk = kNumLetters + 1;
constexpr int kPredEos = kNumLetters;
constexpr int kPredUnk = kNumLetters + 1;

std::string history_name(int h) {
  if (h < kNumLetters) return std::string(1, static_cast<char>('A' + h));
  return h == kHistBos ? "<s>" : "<unk>";
}

std::string prediction_name(int w) {
  if (w < kNumLetters) return std::string(1, static_cast<char>('A' + w));
  return w == kPredEos ? "</s>" : "<unk>";
}

int parse_history(const std::string& s) {
  for (int h = 0; h < BigramLm::kNumHistories; ++h) {
    if (history_name(h) == s) return h;
  }
  throw DataError("unknown LM history '" + s + "'");
}

int parse_prediction(const std::string& s) {
  for (int w = 0; w < BigramLm::kNumPredictions; ++w) {
    if (prediction_name(w) == s) return w;
  }
  throw DataError("unknown LM symbol '" + s + "'");
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

BigramLm::BigramLm()
    : counts_(Eigen::MatrixXd::Zero(kNumHistories, kNumPredictions)) {
  smooth();
}

int BigramLm::history_index(Label l) {
  if (is_letter(l)) return l;
  return l == kBos ? kHistBos : kHistUnk;
}

int BigramLm::prediction_index(Label l) {
  if (is_letter(l)) return l;
  return l == kEos ? kPredEos : kPredUnk;
}

BigramLm BigramLm::fit(const std::vector<std::string>& words) {
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(kNumHistories, kNumPredictions);
  for (const auto& word : words) {
    int prev = kHistBos;
    for (char c : word) {
      const Label l = (c >= 'A' && c <= 'Z') ? c - 'A' : kUnk;
      counts(prev, prediction_index(l)) += 1.0;
      prev = history_index(l);
    }
    counts(prev, kPredEos) += 1.0;
  }
  return from_counts(counts);
}

BigramLm BigramLm::from_counts(const Eigen::MatrixXd& bigram_counts) {
  if (bigram_counts.rows() != kNumHistories || bigram_counts.cols() != kNumPredictions) {
    throw UsageError("bigram count table has the wrong shape");
  }
  if ((bigram_counts.array() < 0.0).any()) throw UsageError("negative bigram count");
  BigramLm lm;
  lm.counts_ = bigram_counts;
  lm.smooth();
  return lm;
}

void BigramLm::smooth() {
  const Eigen::VectorXd unigram_counts = counts_.colwise().sum().transpose();
  const double total = unigram_counts.sum();
  Eigen::VectorXd unigram(kNumPredictions);
  for (int w = 0; w < kNumPredictions; ++w) {
    unigram(w) = (unigram_counts(w) + 1.0) / (total + kNumPredictions);
  }
  unigram_log_ = unigram.array().log();

  log_table_.resize(kNumHistories, kNumPredictions);
  for (int h = 0; h < kNumHistories; ++h) {
    const double hist_count = counts_.row(h).sum();
    const double types = static_cast<double>((counts_.row(h).array() > 0.0).count());
    for (int w = 0; w < kNumPredictions; ++w) {
      const double p = hist_count > 0.0
                           ? (counts_(h, w) + types * unigram(w)) / (hist_count + types)
                           : unigram(w);
      log_table_(h, w) = std::log(p);
    }
  }
}

double BigramLm::logprob(Label prev, Label next) const {
  if (next == kBos) return 0.0;
  return log_table_(history_index(prev), prediction_index(next));
}

double BigramLm::prob(Label prev, Label next) const { return std::exp(logprob(prev, next)); }

double BigramLm::word_logprob(const std::vector<Label>& letters) const {
  double total = 0.0;
  Label prev = kBos;
  for (Label l : letters) {
    total += logprob(prev, l);
    prev = l;
  }
  return total + logprob(prev, kEos);
}

double BigramLm::perplexity(const std::vector<std::string>& words) const {
  double total = 0.0;
  long tokens = 0;
  for (const auto& word : words) {
    std::vector<Label> letters;
    for (char c : word) letters.push_back((c >= 'A' && c <= 'Z') ? c - 'A' : kUnk);
    total += word_logprob(letters);
    tokens += static_cast<long>(letters.size()) + 1;
  }
  if (tokens == 0) throw UsageError("perplexity of an empty word list");
  return std::exp(-total / static_cast<double>(tokens));
}

void BigramLm::save(const std::string& path) const {
  std::ostringstream os;
  os << "\\bigram\n";
  for (int h = 0; h < kNumHistories; ++h) {
    for (int w = 0; w < kNumPredictions; ++w) {
      os << history_name(h) << '\t' << prediction_name(w) << '\t'
         << format_double(log_table_(h, w)) << '\n';
    }
  }
  os << "\\backoff\n";
  for (int w = 0; w < kNumPredictions; ++w) {
    os << prediction_name(w) << '\t' << format_double(unigram_log_(w)) << '\n';
  }
  io::write_text(path, os.str());
}

BigramLm BigramLm::load(const std::string& path) {
  BigramLm lm;
  lm.log_table_.setConstant(std::nan(""));
  lm.unigram_log_.setConstant(std::nan(""));
  enum { kNone, kBigram, kBackoff } section = kNone;
  for (const auto& line : io::read_lines(path)) {
    if (line.empty()) continue;
    if (line == "\\bigram") {
      section = kBigram;
      continue;
    }
    if (line == "\\backoff") {
      section = kBackoff;
      continue;
    }
    std::stringstream ss(line);
    std::vector<std::string> f;
    std::string tok;
    while (std::getline(ss, tok, '\t')) f.push_back(tok);
    try {
      if (section == kBigram && f.size() == 3) {
        lm.log_table_(parse_history(f[0]), parse_prediction(f[1])) = std::stod(f[2]);
      } else if (section == kBackoff && f.size() == 2) {
        lm.unigram_log_(parse_prediction(f[0])) = std::stod(f[1]);
      } else {
        throw DataError("bad LM line: " + line);
      }
    } catch (const std::invalid_argument&) {
      throw DataError("bad LM value: " + line);
    }
  }
  if (!lm.log_table_.allFinite() || !lm.unigram_log_.allFinite()) {
    throw DataError(path + ": incomplete LM file");
  }
  // Raw counts are not stored; keep a zero table so the model stays queryable.
  lm.counts_.setZero();
  return lm;
}

}  // namespace segscribe
