#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "segscribe/cascade.hpp"
#include "segscribe/hmm.hpp"
#include "segscribe/mlp.hpp"
#include "segscribe/scrf.hpp"
#include "segscribe/synth.hpp"

namespace segscribe {

enum class ExperimentMode { kSignerDep, kSignerIndep, kAdapted, kScratchDnn, kScratchBoth };
enum class LabelSource { kGt, kFa };
enum class ModelKind { kTandem, kRescoringScrf, kFirstpassScrf, kCascade };

const char* mode_name(ExperimentMode m);
ExperimentMode parse_mode(const std::string& s);
const char* label_source_name(LabelSource s);
LabelSource parse_label_source(const std::string& s);
const char* model_kind_name(ModelKind k);
ModelKind parse_model_kind(const std::string& s);

/// Hyperparameters of every trainable stage.
struct PipelineConfig {
  TrainConfig frame = default_frame();
  std::string heads = "letter";  // or "letter+phonological"
  std::string phonological_table;
  int scrf_max_len = 24;
  ScrfTrainConfig scrf = default_scrf();
  bool firstpass_lm = false;
  TandemConfig tandem{20, 10};
  int hmm_states = 3;
  EmConfig em{4, {1, 2}};
  std::vector<double> hmm_lm_weights{0.0, 0.5, 1.0, 2.0};
  std::vector<double> hmm_penalties{-8.0, -4.0, 0.0, 4.0};
  int nbest = 10;
  int lattice_max_len = 40;
  TrainConfig segdnn = default_segdnn();
  AdaptConfig adapt;

  static TrainConfig default_frame();
  static ScrfTrainConfig default_scrf();
  static TrainConfig default_segdnn();
};

struct ExperimentPlan {
  ExperimentMode mode = ExperimentMode::kSignerDep;
  double fraction = 0.0;  // adaptation data, share of the test signer's words
  LabelSource labels = LabelSource::kGt;
  ModelKind model = ModelKind::kFirstpassScrf;
  AdaptMethod adapt_method = AdaptMethod::kFineTune;
  int num_folds = 10;
  int folds_used = 8;
  bool disjoint_vocabulary = false;
  std::uint64_t seed = 1;
  int jobs = 1;
  std::string digest;  // embedded in results; plan_digest() when empty
  PipelineConfig pipeline;

  /// Fraction in {0, 0.05, 0.1, 0.2}; adapted needs a positive fraction;
  /// scratch modes need 0.2 and GT labels. Throws UsageError.
  void validate() const;
  /// Stable "key = value" rendering of every field.
  std::string canonical_text() const;
};

/// 16 hex digits of the FNV-1a 64-bit hash.
std::string fnv1a_hex(const std::string& text);
std::string plan_digest(const ExperimentPlan& plan);

struct FoldRecord {
  std::string signer;
  int fold = 0;
  int round = 1;
  long errors = 0;
  long ref_letters = 0;
  double ler = 0.0;
  double frame_error = 0.0;
  int changed_alignments = 0;
};

struct ResultTable {
  std::string title;
  std::string digest;
  std::vector<std::string> signers;
  std::vector<double> signer_ler;          // mean of the signer's fold LERs
  std::vector<double> signer_frame_error;  // mean of the signer's fold frame errors
  std::vector<double> signer_stddev;       // spread of the signer's fold LERs
  double mean_ler = 0.0;
  double mean_frame_error = 0.0;
  std::vector<FoldRecord> folds;

  /// Recomputes the per-signer and mean entries from `folds`, signers in
  /// first-appearance order.
  void aggregate();
  /// Standard error of mean_ler over folds, used as the noise band.
  double noise_band() const;
  /// Signer columns then Mean, LER in percent.
  std::string to_tsv() const;
  std::string folds_tsv() const;
  /// Flat "key = value" manifest; values as %.17g.
  std::string manifest() const;
  static ResultTable from_manifest(const std::string& text);
};

/// Frame classifier heads with compact class maps: a head only models the
/// classes seen in its training data and reports zero posterior for the rest.
struct FrameHead {
  Mlp net;
  std::vector<int> classes;  // sorted full-space class ids
  int full_classes = 0;
  int feature = -1;          // phonological feature index, -1 for letters
  std::vector<int> label_map;  // letter id -> head class; empty for the letter head
  PosteriorStream posteriors(const FrameSequence& seq) const;
  /// Head targets of per-frame letter labels.
  std::vector<int> targets(const std::vector<int>& letter_labels) const;
};

struct FrameBank {
  std::vector<FrameHead> heads;
  int stream_dim() const;
  std::vector<PosteriorStream> posteriors(const FrameSequence& seq) const;
  /// Letter-head frame error against per-frame letter labels, pooled.
  double frame_error(const std::vector<const FrameSequence*>& seqs, const std::vector<std::vector<int>>& labels) const;

  /// "SGFB" magic, version, then every head with its class maps and network.
  void save(const std::string& path) const;
  static FrameBank load(const std::string& path);
};

struct LabeledUtterance {
  std::string key;  // signer/utterance
  std::string word;
  const FrameSequence* frames = nullptr;
  LabeledSegmentation gold;
  std::vector<int> frame_labels;  // training targets (GT or FA)
};

FrameBank train_frame_bank(const std::vector<LabeledUtterance>& train, const std::vector<LabeledUtterance>& dev,
                           const PipelineConfig& config, std::uint64_t seed);
FrameBank adapt_frame_bank(const FrameBank& base, const std::vector<LabeledUtterance>& data, const AdaptConfig& config);

/// Frame classifiers plus the sequence model of one kind.
struct Recognizer {
  ModelKind kind = ModelKind::kFirstpassScrf;
  FrameBank bank;
  std::shared_ptr<const BigramLm> lm;
  std::optional<ScrfModel> firstpass;
  std::optional<TandemTransform> tandem;
  std::optional<TandemHmm> hmm;
  std::optional<ScrfModel> rescoring;
  std::optional<SegmentalDnn> segdnn;
  CascadeWeights cascade_weights;
  int nbest = 10;
  int lattice_max_len = 40;
  bool firstpass_lm = false;

  Matrix tandem_features(const FrameSequence& seq) const;
  /// Decoded letters (BOS/EOS stripped).
  std::vector<Label> decode(const FrameSequence& seq) const;
  /// Forced alignment frame labels from the tandem HMM.
  std::vector<int> align(const FrameSequence& seq, const std::string& word) const;
};

/// Trains the recognizer of `kind` (and the tandem HMM when `with_hmm`).
/// `dev` selects SCRF epochs and tunes decoding weights.
Recognizer train_recognizer(ModelKind kind, const std::vector<LabeledUtterance>& train,
                            const std::vector<LabeledUtterance>& dev, const PipelineConfig& config, std::uint64_t seed,
                            bool with_hmm = false);
/// Model directory: recognizer.txt plus one file per present component.
void save_recognizer(const std::string& dir, const Recognizer& r);
Recognizer load_recognizer(const std::string& dir);

/// Re-tunes decoding weights (HMM lm weight and penalty, cascade weights)
/// on `tune` without touching trained parameters.
void retune(Recognizer& r, const std::vector<LabeledUtterance>& tune, const PipelineConfig& config);

struct Scored {
  long errors = 0;
  long ref_letters = 0;
  double ler() const { return ref_letters > 0 ? static_cast<double>(errors) / static_cast<double>(ref_letters) : 0.0; }
};
Scored evaluate(const Recognizer& r, const std::vector<LabeledUtterance>& test);

/// Corpus of one signer per entry; utterance ids are qualified by signer.
using Corpus = std::vector<SynthCorpus>;

/// Signer-independent recognizers, one per held-out signer.
struct IndependentModels {
  std::vector<Recognizer> per_signer;
};
IndependentModels train_independent(const ExperimentPlan& plan, const Corpus& corpus);

ResultTable run_signer_dependent(const ExperimentPlan& plan, const Corpus& corpus);
ResultTable run_signer_independent(const ExperimentPlan& plan, const Corpus& corpus,
                                   const IndependentModels* models = nullptr);
ResultTable run_adapted(const ExperimentPlan& plan, const Corpus& corpus, const IndependentModels* models = nullptr);
/// Table of the last round; `per_round` receives every round's table.
ResultTable realign_iterate(const ExperimentPlan& plan, const Corpus& corpus, int rounds,
                            const IndependentModels* models = nullptr, std::vector<ResultTable>* per_round = nullptr);
/// Variant by plan.mode: kScratchBoth trains classifiers and sequence model
/// on the adaptation data; kScratchDnn trains classifiers only and keeps the
/// signer-independent sequence model.
ResultTable run_scratch(const ExperimentPlan& plan, const Corpus& corpus, const IndependentModels* models = nullptr);
/// Dispatches on plan.mode.
ResultTable run_plan(const ExperimentPlan& plan, const Corpus& corpus);

/// Utterances of one fold. Signer-dependent: the signer's other chunks train,
/// chunk fold+1 is dev, chunk fold is test. Independent: every other signer
/// trains with their chunk 0 as dev; the signer's chunk fold is test.
/// Digraph words are skipped. Pointers refer into `corpus`.
struct Split {
  std::vector<LabeledUtterance> train, dev, test;
};
Split make_split(const Corpus& corpus, int num_folds, const std::string& signer, int fold, bool independent);

/// Adapts the frame classifiers of `base` to `signer` with the plan's
/// fraction, label source and method, then retunes on chunk fold+1; the same
/// draw as run_adapted.
Recognizer adapt_recognizer(const ExperimentPlan& plan, const Corpus& corpus, const Recognizer& base,
                            const std::string& signer, int fold);

/// Throws DataError when a test key also appears in `used`.
void audit_disjoint(const std::vector<std::string>& test_keys, const std::vector<std::string>& used);

/// Runs f(0..n-1) on up to `jobs` threads; each index runs exactly once.
/// The first exception is rethrown after all workers stop.
void parallel_for(int n, int jobs, const std::function<void(int)>& f);

/// Corpus directory: one subdirectory per signer with descriptors/<id>.bin,
/// annotations.txt, manifest.tsv and words.txt, plus signers.txt.
void write_corpus(const std::string& dir, const Corpus& corpus);
Corpus read_corpus(const std::string& dir);

}  // namespace segscribe
