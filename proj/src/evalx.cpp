#include "segscribe/evalx.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "segscribe/error.hpp"
#include "segscribe/io.hpp"
#include "segscribe/segmentation.hpp"

namespace segscribe {

namespace fs = std::filesystem;

const char* mode_name(ExperimentMode m) {
  switch (m) {
    case ExperimentMode::kSignerDep: return "signer_dep";
    case ExperimentMode::kSignerIndep: return "signer_indep";
    case ExperimentMode::kAdapted: return "adapted";
    case ExperimentMode::kScratchDnn: return "scratch_dnn";
    case ExperimentMode::kScratchBoth: return "scratch_both";
  }
  return "?";
}

ExperimentMode parse_mode(const std::string& s) {
  for (auto m : {ExperimentMode::kSignerDep, ExperimentMode::kSignerIndep, ExperimentMode::kAdapted,
                 ExperimentMode::kScratchDnn, ExperimentMode::kScratchBoth}) {
    if (s == mode_name(m)) return m;
  }
  throw UsageError("unknown experiment mode: " + s);
}

const char* label_source_name(LabelSource s) { return s == LabelSource::kGt ? "GT" : "FA"; }

LabelSource parse_label_source(const std::string& s) {
  if (s == "GT") return LabelSource::kGt;
  if (s == "FA") return LabelSource::kFa;
  throw UsageError("unknown label source: " + s);
}

const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kTandem: return "tandem";
    case ModelKind::kRescoringScrf: return "rescoring_scrf";
    case ModelKind::kFirstpassScrf: return "firstpass_scrf";
    case ModelKind::kCascade: return "cascade";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& s) {
  for (auto k : {ModelKind::kTandem, ModelKind::kRescoringScrf, ModelKind::kFirstpassScrf, ModelKind::kCascade}) {
    if (s == model_kind_name(k)) return k;
  }
  throw UsageError("unknown model kind: " + s);
}

TrainConfig PipelineConfig::default_frame() {
  TrainConfig c;
  c.hidden = {64};
  c.window = 5;
  c.epochs = 8;
  c.learning_rate = 0.05;
  c.momentum = 0.9;
  c.dropout = 0.0;
  return c;
}

ScrfTrainConfig PipelineConfig::default_scrf() {
  ScrfTrainConfig c;
  c.epochs = 6;
  c.step = 0.1;
  return c;
}

TrainConfig PipelineConfig::default_segdnn() {
  TrainConfig c;
  c.hidden = {32};
  c.epochs = 15;
  c.learning_rate = 0.05;
  c.momentum = 0.9;
  c.dropout = 0.0;
  return c;
}

void ExperimentPlan::validate() const {
  const double allowed[] = {0.0, 0.05, 0.10, 0.20};
  if (std::none_of(std::begin(allowed), std::end(allowed), [&](double a) { return std::abs(a - fraction) < 1e-12; })) {
    throw UsageError("adaptation fraction must be one of 0, 0.05, 0.1, 0.2");
  }
  if (mode == ExperimentMode::kAdapted && fraction <= 0.0) throw UsageError("adapted mode needs a positive fraction");
  if ((mode == ExperimentMode::kScratchDnn || mode == ExperimentMode::kScratchBoth) &&
      (std::abs(fraction - 0.2) > 1e-12 || labels != LabelSource::kGt)) {
    throw UsageError("scratch modes use 20% adaptation data with GT labels");
  }
  if (num_folds < 3) throw UsageError("need at least three folds");
  if (folds_used < 1 || folds_used > num_folds) throw UsageError("folds_used out of range");
  if (jobs < 1) throw UsageError("jobs must be positive");
  if (pipeline.heads != "letter" && pipeline.heads != "letter+phonological") {
    throw UsageError("heads must be letter or letter+phonological");
  }
  if (pipeline.heads == "letter+phonological" && pipeline.phonological_table.empty()) {
    throw UsageError("letter+phonological heads need a phonological table");
  }
  pipeline.frame.validate();
  pipeline.segdnn.validate();
}

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + num(v[i]);
  return s;
}

void render_train(std::ostringstream& o, const std::string& p, const TrainConfig& c) {
  o << p << ".hidden = " << join_ints(c.hidden) << "\n"
    << p << ".window = " << c.window << "\n"
    << p << ".batch_size = " << c.batch_size << "\n"
    << p << ".epochs = " << c.epochs << "\n"
    << p << ".learning_rate = " << num(c.learning_rate) << "\n"
    << p << ".momentum = " << num(c.momentum) << "\n"
    << p << ".weight_decay = " << num(c.weight_decay) << "\n"
    << p << ".dropout = " << num(c.dropout) << "\n"
    << p << ".halving_threshold = " << num(c.halving_threshold) << "\n"
    << p << ".seed = " << c.seed << "\n";
}

}  // namespace

std::string ExperimentPlan::canonical_text() const {
  std::ostringstream o;
  const auto& p = pipeline;
  o << "mode = " << mode_name(mode) << "\n"
    << "fraction = " << num(fraction) << "\n"
    << "labels = " << label_source_name(labels) << "\n"
    << "model = " << model_kind_name(model) << "\n"
    << "adapt_method = " << adapt_method_name(adapt_method) << "\n"
    << "num_folds = " << num_folds << "\n"
    << "folds_used = " << folds_used << "\n"
    << "disjoint_vocabulary = " << (disjoint_vocabulary ? 1 : 0) << "\n"
    << "seed = " << seed << "\n";
  render_train(o, "frame", p.frame);
  o << "heads = " << p.heads << "\n"
    << "phonological_table = " << p.phonological_table << "\n"
    << "scrf.max_len = " << p.scrf_max_len << "\n"
    << "scrf.epochs = " << p.scrf.epochs << "\n"
    << "scrf.step = " << num(p.scrf.step) << "\n"
    << "scrf.l1 = " << num(p.scrf.l1) << "\n"
    << "scrf.l2 = " << num(p.scrf.l2) << "\n"
    << "scrf.seed = " << p.scrf.seed << "\n"
    << "scrf.firstpass_lm = " << (p.firstpass_lm ? 1 : 0) << "\n"
    << "tandem.posterior_dim = " << p.tandem.posterior_dim << "\n"
    << "tandem.image_dim = " << p.tandem.image_dim << "\n"
    << "hmm.states = " << p.hmm_states << "\n"
    << "hmm.iterations = " << p.em.iterations << "\n"
    << "hmm.schedule = " << join_ints(p.em.schedule) << "\n"
    << "hmm.lm_weights = " << join_doubles(p.hmm_lm_weights) << "\n"
    << "hmm.penalties = " << join_doubles(p.hmm_penalties) << "\n"
    << "nbest = " << p.nbest << "\n"
    << "lattice_max_len = " << p.lattice_max_len << "\n";
  render_train(o, "segdnn", p.segdnn);
  o << "adapt.epochs = " << p.adapt.epochs << "\n"
    << "adapt.learning_rate = " << num(p.adapt.learning_rate) << "\n"
    << "adapt.momentum = " << num(p.adapt.momentum) << "\n"
    << "adapt.batch_size = " << p.adapt.batch_size << "\n"
    << "adapt.weight_decay = " << num(p.adapt.weight_decay) << "\n"
    << "adapt.dropout = " << num(p.adapt.dropout) << "\n"
    << "adapt.seed = " << p.adapt.seed << "\n";
  return o.str();
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::string plan_digest(const ExperimentPlan& plan) { return fnv1a_hex(plan.canonical_text()); }

// ---------------------------------------------------------------- results

void ResultTable::aggregate() {
  signers.clear();
  for (const auto& f : folds) {
    if (std::find(signers.begin(), signers.end(), f.signer) == signers.end()) signers.push_back(f.signer);
  }
  signer_ler.assign(signers.size(), 0.0);
  signer_frame_error.assign(signers.size(), 0.0);
  signer_stddev.assign(signers.size(), 0.0);
  for (std::size_t s = 0; s < signers.size(); ++s) {
    std::vector<const FoldRecord*> mine;
    for (const auto& f : folds) {
      if (f.signer == signers[s]) mine.push_back(&f);
    }
    double sum = 0.0, fe = 0.0;
    for (const auto* f : mine) {
      sum += f->ler;
      fe += f->frame_error;
    }
    const double n = static_cast<double>(mine.size());
    signer_ler[s] = sum / n;
    signer_frame_error[s] = fe / n;
    double var = 0.0;
    for (const auto* f : mine) var += (f->ler - signer_ler[s]) * (f->ler - signer_ler[s]);
    signer_stddev[s] = mine.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  }
  mean_ler = 0.0;
  mean_frame_error = 0.0;
  for (std::size_t s = 0; s < signers.size(); ++s) {
    mean_ler += signer_ler[s];
    mean_frame_error += signer_frame_error[s];
  }
  if (!signers.empty()) {
    mean_ler /= static_cast<double>(signers.size());
    mean_frame_error /= static_cast<double>(signers.size());
  }
}

double ResultTable::noise_band() const {
  if (folds.size() < 2) return 0.0;
  double m = 0.0;
  for (const auto& f : folds) m += f.ler;
  m /= static_cast<double>(folds.size());
  double var = 0.0;
  for (const auto& f : folds) var += (f.ler - m) * (f.ler - m);
  const double n = static_cast<double>(folds.size());
  return std::sqrt(var / (n - 1.0) / n);
}

std::string ResultTable::to_tsv() const {
  std::ostringstream o;
  o << "model";
  for (const auto& s : signers) o << "\t" << s;
  o << "\tMean\n" << title;
  char buf[32];
  for (double v : signer_ler) {
    std::snprintf(buf, sizeof buf, "\t%.2f", 100.0 * v);
    o << buf;
  }
  std::snprintf(buf, sizeof buf, "\t%.2f\n", 100.0 * mean_ler);
  o << buf;
  return o.str();
}

std::string ResultTable::folds_tsv() const {
  std::ostringstream o;
  o << "signer\tfold\tround\terrors\tref_letters\tler\tframe_error\tchanged_alignments\n";
  for (const auto& f : folds) {
    o << f.signer << "\t" << f.fold << "\t" << f.round << "\t" << f.errors << "\t" << f.ref_letters << "\t"
      << num(f.ler) << "\t" << num(f.frame_error) << "\t" << f.changed_alignments << "\n";
  }
  return o.str();
}

std::string ResultTable::manifest() const {
  std::ostringstream o;
  o << "title = " << title << "\n" << "digest = " << digest << "\n" << "signers =";
  for (const auto& s : signers) o << " " << s;
  o << "\n"
    << "mean_ler = " << num(mean_ler) << "\n"
    << "mean_frame_error = " << num(mean_frame_error) << "\n"
    << "noise_band = " << num(noise_band()) << "\n";
  for (std::size_t s = 0; s < signers.size(); ++s) {
    o << "signer." << signers[s] << ".ler = " << num(signer_ler[s]) << "\n"
      << "signer." << signers[s] << ".frame_error = " << num(signer_frame_error[s]) << "\n"
      << "signer." << signers[s] << ".stddev = " << num(signer_stddev[s]) << "\n";
  }
  for (std::size_t i = 0; i < folds.size(); ++i) {
    const auto& f = folds[i];
    o << "fold." << i << " = " << f.signer << " " << f.fold << " " << f.round << " " << f.errors << " "
      << f.ref_letters << " " << num(f.ler) << " " << num(f.frame_error) << " " << f.changed_alignments << "\n";
  }
  return o.str();
}

ResultTable ResultTable::from_manifest(const std::string& text) {
  ResultTable t;
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> order;
  bool has_title = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find(" = ");
    const auto bare = line.find(" =");
    if (eq == std::string::npos && bare == std::string::npos) throw DataError("malformed manifest line: " + line);
    const std::string key = line.substr(0, eq != std::string::npos ? eq : bare);
    const std::string value = eq != std::string::npos ? line.substr(eq + 3) : "";
    if (key == "title") {
      t.title = value;
      has_title = true;
    } else if (key == "digest") {
      t.digest = value;
    } else if (key == "signers") {
      std::istringstream s(value);
      std::string id;
      while (s >> id) order.push_back(id);
    } else if (key.rfind("fold.", 0) == 0) {
      std::istringstream s(value);
      FoldRecord f;
      if (!(s >> f.signer >> f.fold >> f.round >> f.errors >> f.ref_letters >> f.ler >> f.frame_error >>
            f.changed_alignments)) {
        throw DataError("malformed fold record: " + line);
      }
      t.folds.push_back(f);
    }
  }
  if (!has_title || t.folds.empty()) throw DataError("manifest has no results");
  t.aggregate();
  if (!order.empty() && order != t.signers) throw DataError("manifest signer list differs from its folds");
  return t;
}

// ---------------------------------------------------------------- frame classifiers

PosteriorStream FrameHead::posteriors(const FrameSequence& seq) const {
  const Matrix p = net.forward(window_frames(seq.frames(), net.window()));
  Matrix full = Matrix::Zero(p.rows(), full_classes);
  for (std::size_t c = 0; c < classes.size(); ++c) full.col(classes[c]) = p.col(static_cast<Eigen::Index>(c));
  return PosteriorStream(std::move(full), net.head());
}

int FrameBank::stream_dim() const {
  int d = 0;
  for (const auto& h : heads) d += h.full_classes;
  return d;
}

std::vector<PosteriorStream> FrameBank::posteriors(const FrameSequence& seq) const {
  std::vector<PosteriorStream> out;
  for (const auto& h : heads) out.push_back(h.posteriors(seq));
  return out;
}

double FrameBank::frame_error(const std::vector<const FrameSequence*>& seqs,
                              const std::vector<std::vector<int>>& labels) const {
  long wrong = 0, total = 0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const PosteriorStream p = heads.at(0).posteriors(*seqs[i]);
    for (int t = 0; t < p.num_frames(); ++t) {
      wrong += argmax_row(p.probs(), t) != labels[i][static_cast<std::size_t>(t)];
      ++total;
    }
  }
  return total > 0 ? static_cast<double>(wrong) / static_cast<double>(total) : 0.0;
}

std::vector<int> FrameHead::targets(const std::vector<int>& letter_labels) const {
  if (label_map.empty()) return letter_labels;
  std::vector<int> out(letter_labels.size());
  for (std::size_t t = 0; t < letter_labels.size(); ++t) out[t] = label_map.at(static_cast<std::size_t>(letter_labels[t]));
  return out;
}

namespace {

// Rows whose label has no compact index are dropped.
void add_mapped(FrameDataset* ds, const Matrix& frames, const std::vector<int>& labels, const std::vector<int>& classes) {
  std::vector<int> idx;
  std::vector<Eigen::Index> keep;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    auto it = std::lower_bound(classes.begin(), classes.end(), labels[t]);
    if (it == classes.end() || *it != labels[t]) continue;
    idx.push_back(static_cast<int>(it - classes.begin()));
    keep.push_back(static_cast<Eigen::Index>(t));
  }
  if (keep.empty()) return;
  if (keep.size() == labels.size()) {
    ds->add(frames, idx);
    return;
  }
  Matrix sub(static_cast<Eigen::Index>(keep.size()), frames.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = frames.row(keep[i]);
  ds->add(sub, idx);
}

struct HeadSpec {
  int feature;
  int full;
  std::string name;
  std::vector<int> label_map;
};

std::vector<HeadSpec> head_specs(const PipelineConfig& config) {
  std::vector<HeadSpec> specs{{-1, kNumLabels, "letter", {}}};
  if (config.heads == "letter+phonological") {
    LabelAlphabet alphabet;
    alphabet.load_phonological(config.phonological_table);
    std::vector<int> ids;
    for (int l = 0; l < kNumLabels; ++l) ids.push_back(l);
    const auto& feats = phonological_features();
    for (int f = 0; f < static_cast<int>(feats.size()); ++f) {
      specs.push_back({f, static_cast<int>(feats[static_cast<std::size_t>(f)].values.size()),
                       feats[static_cast<std::size_t>(f)].name, phonological_labels(alphabet, f, ids)});
    }
  }
  return specs;
}

}  // namespace

FrameBank train_frame_bank(const std::vector<LabeledUtterance>& train, const std::vector<LabeledUtterance>& dev,
                           const PipelineConfig& config, std::uint64_t seed) {
  if (train.empty()) throw DataError("no training utterances for the frame classifiers");
  const auto specs = head_specs(config);
  FrameBank bank;
  const int D = train[0].frames->dim();
  for (std::size_t h = 0; h < specs.size(); ++h) {
    const auto& spec = specs[h];
    FrameHead head;
    head.full_classes = spec.full;
    head.feature = spec.feature;
    head.label_map = spec.label_map;
    std::set<int> seen;
    std::vector<std::vector<int>> labels;
    for (const auto& u : train) {
      labels.push_back(head.targets(u.frame_labels));
      seen.insert(labels.back().begin(), labels.back().end());
    }
    head.classes.assign(seen.begin(), seen.end());
    FrameDataset tr(D), held(D);
    for (std::size_t i = 0; i < train.size(); ++i) add_mapped(&tr, train[i].frames->frames(), labels[i], head.classes);
    for (const auto& u : dev) add_mapped(&held, u.frames->frames(), head.targets(u.frame_labels), head.classes);
    TrainConfig cfg = config.frame;
    cfg.seed = splitmix64(seed + 7919 * h);
    head.net = train_mlp(tr, held, static_cast<int>(head.classes.size()), cfg, nullptr, spec.name);
    bank.heads.push_back(std::move(head));
  }
  return bank;
}

FrameBank adapt_frame_bank(const FrameBank& base, const std::vector<LabeledUtterance>& data, const AdaptConfig& config) {
  FrameBank out = base;
  for (std::size_t h = 0; h < out.heads.size(); ++h) {
    FrameHead& head = out.heads[h];
    FrameDataset ds(head.net.static_dim());
    for (const auto& u : data) add_mapped(&ds, u.frames->frames(), head.targets(u.frame_labels), head.classes);
    if (ds.empty()) continue;
    AdaptConfig cfg = config;
    cfg.seed = splitmix64(config.seed + 104729 * h);
    head.net = adapt(head.net, ds, cfg);
  }
  return out;
}

namespace {

constexpr char kBankMagic[4] = {'S', 'G', 'F', 'B'};

void write_ints(std::ostream& out, const std::vector<int>& v) {
  io::write_u32(out, static_cast<std::uint32_t>(v.size()));
  for (int x : v) io::write_u32(out, static_cast<std::uint32_t>(x));
}

std::vector<int> read_ints(std::istream& in) {
  const std::uint32_t n = io::read_u32(in);
  if (n > 1u << 20) throw DataError("implausible list length in frame bank");
  std::vector<int> v(n);
  for (auto& x : v) x = static_cast<int>(io::read_u32(in));
  return v;
}

}  // namespace

void FrameBank::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(kBankMagic, 4);
  io::write_u32(out, 1);
  io::write_u32(out, static_cast<std::uint32_t>(heads.size()));
  for (const auto& h : heads) {
    io::write_u32(out, static_cast<std::uint32_t>(h.full_classes));
    io::write_u32(out, static_cast<std::uint32_t>(h.feature + 1));
    write_ints(out, h.classes);
    write_ints(out, h.label_map);
    h.net.save(out);
  }
  if (!out) throw DataError("write failed: " + path);
}

FrameBank FrameBank::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kBankMagic)) throw DataError("not a frame bank file: " + path);
  if (io::read_u32(in) != 1) throw DataError("unsupported frame bank version: " + path);
  const std::uint32_t n = io::read_u32(in);
  if (n == 0 || n > 64) throw DataError("implausible head count in " + path);
  FrameBank bank;
  for (std::uint32_t i = 0; i < n; ++i) {
    FrameHead h;
    h.full_classes = static_cast<int>(io::read_u32(in));
    h.feature = static_cast<int>(io::read_u32(in)) - 1;
    h.classes = read_ints(in);
    h.label_map = read_ints(in);
    h.net = Mlp::load(in);
    if (h.net.num_classes() != static_cast<int>(h.classes.size())) throw DataError("head class map mismatch in " + path);
    for (int c : h.classes) {
      if (c < 0 || c >= h.full_classes) throw DataError("head class out of range in " + path);
    }
    bank.heads.push_back(std::move(h));
  }
  return bank;
}

// ---------------------------------------------------------------- recognizers

namespace {

std::vector<Label> all_labels() {
  std::vector<Label> l;
  for (Label y = 0; y < kNumLabels; ++y) l.push_back(y);
  return l;
}

bool fits(const LabeledSegmentation& g, int max_len) {
  for (int i = 0; i < g.size(); ++i) {
    if (g.end(i) - g.start(i) > max_len) return false;
  }
  return true;
}

void tune_hmm(Recognizer& r, const std::vector<LabeledUtterance>& tune, const PipelineConfig& config) {
  if (tune.empty()) return;
  std::vector<Matrix> em;
  for (const auto& u : tune) em.push_back(r.hmm->emissions(r.tandem_features(*u.frames)));
  double best = std::numeric_limits<double>::infinity();
  for (double w : config.hmm_lm_weights) {
    for (double p : config.hmm_penalties) {
      EditCounts total;
      for (std::size_t i = 0; i < tune.size(); ++i) {
        total += edit_counts(viterbi_decode(*r.hmm, em[i], r.lm.get(), w, p).segmentation.letters(), tune[i].gold.letters());
      }
      const double e = total.rate();
      if (e < best) {
        best = e;
        r.hmm->lm_weight = w;
        r.hmm->penalty = p;
      }
    }
  }
}

HmmNbest hmm_lattice(const Recognizer& r, const Matrix& em, int T) {
  try {
    return nbest_lattice(*r.hmm, em, r.lm.get(), r.nbest, r.lattice_max_len);
  } catch (const DataError&) {
    return nbest_lattice(*r.hmm, em, r.lm.get(), r.nbest, T);
  }
}

SegmentInputs firstpass_inputs(const Recognizer& r, const FrameSequence& seq) {
  return SegmentInputs::make(seq, r.bank.posteriors(seq), r.firstpass_lm ? r.lm.get() : nullptr);
}

void tune_cascade_weights(Recognizer& r, const std::vector<LabeledUtterance>& tune) {
  if (tune.empty()) return;
  std::vector<CascadeLattice> lats;
  std::vector<LabeledSegmentation> gold;
  for (const auto& u : tune) {
    SegmentInputs in = SegmentInputs::make(*u.frames, r.bank.posteriors(*u.frames), r.lm.get());
    lats.push_back(build_cascade_lattice(*r.firstpass, *r.segdnn, in, *u.frames, r.nbest));
    gold.push_back(u.gold);
  }
  r.cascade_weights = tune_cascade(lats, gold);
}

}  // namespace

Matrix Recognizer::tandem_features(const FrameSequence& seq) const {
  if (!tandem) throw UsageError("recognizer has no tandem transform");
  return tandem->apply(bank.posteriors(seq), &seq.frames());
}

std::vector<Label> Recognizer::decode(const FrameSequence& seq) const {
  switch (kind) {
    case ModelKind::kTandem:
      return viterbi_decode(*hmm, tandem_features(seq), lm.get()).segmentation.letters();
    case ModelKind::kFirstpassScrf:
      return segscribe::decode(*firstpass, firstpass_inputs(*this, seq)).letters();
    case ModelKind::kRescoringScrf: {
      const HmmNbest nb = hmm_lattice(*this, hmm->emissions(tandem_features(seq)), seq.num_frames());
      const LabeledSegmentation base = nb.lattice.one_best_segmentation();
      const SegmentInputs in = SegmentInputs::make(seq, bank.posteriors(seq), lm.get(), &base);
      return rescore(*rescoring, nb.lattice, in).letters();
    }
    case ModelKind::kCascade: {
      // The cascade's lm feature reads the LM regardless of the first pass.
      const SegmentInputs in = SegmentInputs::make(seq, bank.posteriors(seq), lm.get());
      return cascade_decode(*firstpass, cascade_weights, *segdnn, in, seq, nbest).letters();
    }
  }
  throw UsageError("unknown model kind");
}

std::vector<int> Recognizer::align(const FrameSequence& seq, const std::string& word) const {
  if (!hmm) throw UsageError("forced alignment needs the tandem HMM");
  return forced_align(*hmm, hmm->emissions(tandem_features(seq)), LabelAlphabet::standard().letters_of(word)).frame_labels;
}

Recognizer train_recognizer(ModelKind kind, const std::vector<LabeledUtterance>& train,
                            const std::vector<LabeledUtterance>& dev, const PipelineConfig& config, std::uint64_t seed,
                            bool with_hmm) {
  Recognizer r;
  r.kind = kind;
  r.nbest = config.nbest;
  r.lattice_max_len = config.lattice_max_len;
  r.firstpass_lm = config.firstpass_lm;
  r.bank = train_frame_bank(train, dev, config, seed);
  std::vector<std::string> words;
  for (const auto& u : train) words.push_back(u.word);
  r.lm = std::make_shared<const BigramLm>(BigramLm::fit(words));

  std::vector<std::vector<PosteriorStream>> post_train, post_dev;
  for (const auto& u : train) post_train.push_back(r.bank.posteriors(*u.frames));
  for (const auto& u : dev) post_dev.push_back(r.bank.posteriors(*u.frames));

  const bool need_first = kind == ModelKind::kFirstpassScrf || kind == ModelKind::kCascade;
  const bool need_hmm = with_hmm || kind == ModelKind::kTandem || kind == ModelKind::kRescoringScrf;

  if (need_first) {
    ScrfModel init(FeatureRegistry::firstpass(all_labels(), r.bank.stream_dim(), config.firstpass_lm), config.scrf_max_len);
    std::vector<ScrfExample> tr, dv;
    const BigramLm* lm = config.firstpass_lm ? r.lm.get() : nullptr;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (!fits(train[i].gold, config.scrf_max_len)) continue;
      tr.push_back({SegmentInputs::make(*train[i].frames, post_train[i], lm), train[i].gold, std::nullopt});
    }
    for (std::size_t i = 0; i < dev.size(); ++i) {
      dv.push_back({SegmentInputs::make(*dev[i].frames, post_dev[i], lm), dev[i].gold, std::nullopt});
    }
    if (tr.empty()) throw DataError("no training utterance fits the SCRF segment length bound");
    ScrfTrainConfig cfg = config.scrf;
    cfg.seed = splitmix64(seed ^ 0x5c7f);
    r.firstpass = train_scrf(init, tr, dv, cfg);
  }

  if (need_hmm) {
    std::vector<Matrix> images;
    for (const auto& u : train) images.push_back(u.frames->frames());
    r.tandem = TandemTransform::fit(post_train, images, config.tandem);
    std::vector<Matrix> feats;
    std::vector<LabeledSegmentation> gold;
    std::vector<std::vector<Label>> transcripts;
    for (std::size_t i = 0; i < train.size(); ++i) {
      feats.push_back(r.tandem->apply(post_train[i], &train[i].frames->frames()));
      gold.push_back(train[i].gold);
      transcripts.push_back(train[i].gold.labels());
    }
    TandemHmm init = TandemHmm::initialize(feats, gold, config.hmm_states);
    r.hmm = train_em(init, feats, transcripts, config.em);
    tune_hmm(r, dev, config);
  }

  if (kind == ModelKind::kRescoringScrf) {
    ScrfModel init(FeatureRegistry::rescoring(all_labels(), r.bank.stream_dim()), config.lattice_max_len);
    auto make = [&](const LabeledUtterance& u, const std::vector<PosteriorStream>& post) {
      const Matrix em = r.hmm->emissions(r.tandem->apply(post, &u.frames->frames()));
      const HmmNbest nb = hmm_lattice(r, em, u.frames->num_frames());
      const LabeledSegmentation base = nb.lattice.one_best_segmentation();
      return ScrfExample{SegmentInputs::make(*u.frames, post, r.lm.get(), &base), u.gold, nb.lattice};
    };
    std::vector<ScrfExample> tr, dv;
    for (std::size_t i = 0; i < train.size(); ++i) tr.push_back(make(train[i], post_train[i]));
    for (std::size_t i = 0; i < dev.size(); ++i) dv.push_back(make(dev[i], post_dev[i]));
    // Lattice edges may be longer than the chart bound of the model.
    int longest = 1;
    for (const auto& ex : tr) {
      for (const auto& e : ex.lattice->edges()) longest = std::max(longest, e.end - e.start);
    }
    for (const auto& ex : dv) {
      for (const auto& e : ex.lattice->edges()) longest = std::max(longest, e.end - e.start);
    }
    init = ScrfModel(init.registry(), std::max(longest, config.lattice_max_len));
    ScrfTrainConfig cfg = config.scrf;
    cfg.seed = splitmix64(seed ^ 0x7e5c);
    r.rescoring = train_scrf(init, tr, dv, cfg);
  }

  if (kind == ModelKind::kCascade) {
    std::vector<FrameSequence> seqs, dseqs;
    std::vector<LabeledSegmentation> gold, dgold;
    for (const auto& u : train) {
      seqs.push_back(*u.frames);
      gold.push_back(u.gold);
    }
    for (const auto& u : dev) {
      dseqs.push_back(*u.frames);
      dgold.push_back(u.gold);
    }
    TrainConfig cfg = config.segdnn;
    cfg.seed = splitmix64(seed ^ 0x3a3a);
    r.segdnn = SegmentalDnn::train(seqs, gold, dseqs, dgold, cfg);
    tune_cascade_weights(r, dev);
  }
  return r;
}

void retune(Recognizer& r, const std::vector<LabeledUtterance>& tune, const PipelineConfig& config) {
  if (r.hmm && (r.kind == ModelKind::kTandem || r.kind == ModelKind::kRescoringScrf)) tune_hmm(r, tune, config);
  if (r.kind == ModelKind::kCascade) tune_cascade_weights(r, tune);
}

void save_recognizer(const std::string& dir, const Recognizer& r) {
  fs::create_directories(dir);
  const fs::path root(dir);
  std::ostringstream o;
  o << "kind = " << model_kind_name(r.kind) << "\n"
    << "nbest = " << r.nbest << "\n"
    << "lattice_max_len = " << r.lattice_max_len << "\n"
    << "firstpass_lm = " << (r.firstpass_lm ? 1 : 0) << "\n"
    << "cascade.first_pass = " << num(r.cascade_weights.first_pass) << "\n"
    << "cascade.segdnn = " << num(r.cascade_weights.segdnn) << "\n"
    << "cascade.peak = " << num(r.cascade_weights.peak) << "\n"
    << "cascade.lm = " << num(r.cascade_weights.lm) << "\n";
  io::write_text((root / "recognizer.txt").string(), o.str());
  r.bank.save((root / "frames.bin").string());
  if (r.lm) r.lm->save((root / "lm.txt").string());
  if (r.firstpass) r.firstpass->save((root / "firstpass.scrf").string());
  if (r.rescoring) r.rescoring->save((root / "rescoring.scrf").string());
  if (r.hmm) r.hmm->save((root / "tandem.hmm").string());
  if (r.segdnn) r.segdnn->save((root / "segdnn.bin").string());
  if (r.tandem) {
    std::ofstream out(root / "tandem.bin", std::ios::binary);
    r.tandem->save(out);
    if (!out) throw DataError("cannot write " + (root / "tandem.bin").string());
  }
}

Recognizer load_recognizer(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::exists(root / "recognizer.txt")) throw DataError("no recognizer.txt in " + dir);
  std::map<std::string, std::string> kv;
  for (const auto& line : io::read_lines((root / "recognizer.txt").string())) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  auto get = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw DataError("recognizer.txt lacks " + k);
    return it->second;
  };
  Recognizer r;
  r.kind = parse_model_kind(get("kind"));
  r.nbest = std::stoi(get("nbest"));
  r.lattice_max_len = std::stoi(get("lattice_max_len"));
  r.firstpass_lm = get("firstpass_lm") == "1";
  r.cascade_weights = {std::stod(get("cascade.first_pass")), std::stod(get("cascade.segdnn")),
                       std::stod(get("cascade.peak")), std::stod(get("cascade.lm"))};
  r.bank = FrameBank::load((root / "frames.bin").string());
  if (fs::exists(root / "lm.txt")) r.lm = std::make_shared<const BigramLm>(BigramLm::load((root / "lm.txt").string()));
  if (fs::exists(root / "firstpass.scrf")) r.firstpass = ScrfModel::load((root / "firstpass.scrf").string());
  if (fs::exists(root / "rescoring.scrf")) r.rescoring = ScrfModel::load((root / "rescoring.scrf").string());
  if (fs::exists(root / "tandem.hmm")) r.hmm = TandemHmm::load((root / "tandem.hmm").string());
  if (fs::exists(root / "segdnn.bin")) r.segdnn = SegmentalDnn::load((root / "segdnn.bin").string());
  if (fs::exists(root / "tandem.bin")) {
    std::ifstream in(root / "tandem.bin", std::ios::binary);
    r.tandem = TandemTransform::load(in);
  }
  const bool ok = r.lm && (r.kind == ModelKind::kFirstpassScrf   ? r.firstpass.has_value()
                           : r.kind == ModelKind::kCascade       ? r.firstpass && r.segdnn
                           : r.kind == ModelKind::kTandem        ? r.hmm && r.tandem
                                                                 : r.hmm && r.tandem && r.rescoring);
  if (!ok) throw DataError("model directory " + dir + " lacks components of a " + model_kind_name(r.kind) + " recognizer");
  return r;
}

Scored evaluate(const Recognizer& r, const std::vector<LabeledUtterance>& test) {
  Scored s;
  for (const auto& u : test) {
    const EditCounts c = edit_counts(r.decode(*u.frames), u.gold.letters());
    s.errors += c.errors();
    s.ref_letters += c.reference_length;
  }
  return s;
}

// ---------------------------------------------------------------- protocols

void audit_disjoint(const std::vector<std::string>& test_keys, const std::vector<std::string>& used) {
  const std::set<std::string> u(used.begin(), used.end());
  for (const auto& k : test_keys) {
    if (u.count(k)) throw DataError("test utterance " + k + " also used for training, adaptation or tuning");
  }
}

void parallel_for(int n, int jobs, const std::function<void(int)>& f) {
  if (n <= 0) return;
  const int workers = std::max(1, std::min(jobs, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex m;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (int i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(m);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace {

struct SignerView {
  std::string id;
  std::vector<LabeledUtterance> utts;
  std::vector<int> chunk;
};

std::vector<SignerView> views_of(const Corpus& corpus, int num_folds) {
  std::vector<SignerView> out;
  for (const auto& c : corpus) {
    SignerView v;
    v.id = c.profile_id;
    for (std::size_t i = 0; i < c.utterances.size(); ++i) {
      const auto& u = c.utterances[i];
      if (u.annotation.has_digraph()) continue;
      const int ch = c.chunk.at(i);
      if (ch < 0 || ch >= num_folds) throw DataError("utterance chunk outside the fold range");
      LabeledUtterance l;
      l.key = c.profile_id + "/" + u.id;
      l.word = u.word;
      l.frames = &u.frames;
      l.gold = peaks_to_segmentation(u.annotation, u.frames.num_frames());
      l.frame_labels = l.gold.frame_labels();
      v.utts.push_back(std::move(l));
      v.chunk.push_back(ch);
    }
    std::set<int> present(v.chunk.begin(), v.chunk.end());
    if (static_cast<int>(present.size()) < num_folds) throw DataError("signer " + v.id + " is missing folds");
    out.push_back(std::move(v));
  }
  if (out.empty()) throw DataError("empty corpus");
  return out;
}

std::vector<LabeledUtterance> in_chunk(const SignerView& v, int chunk) {
  std::vector<LabeledUtterance> out;
  for (std::size_t i = 0; i < v.utts.size(); ++i) {
    if (v.chunk[i] == chunk) out.push_back(v.utts[i]);
  }
  return out;
}

std::vector<std::string> keys_of(const std::vector<LabeledUtterance>& u) {
  std::vector<std::string> k;
  for (const auto& x : u) k.push_back(x.key);
  return k;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

double letter_frame_error(const FrameBank& bank, const std::vector<LabeledUtterance>& test) {
  std::vector<const FrameSequence*> seqs;
  std::vector<std::vector<int>> labels;
  for (const auto& u : test) {
    seqs.push_back(u.frames);
    labels.push_back(u.gold.frame_labels());
  }
  return bank.frame_error(seqs, labels);
}

FoldRecord record(const std::string& signer, int fold, const Recognizer& r, const std::vector<LabeledUtterance>& test) {
  const Scored s = evaluate(r, test);
  FoldRecord f;
  f.signer = signer;
  f.fold = fold;
  f.errors = s.errors;
  f.ref_letters = s.ref_letters;
  f.ler = s.ler();
  f.frame_error = letter_frame_error(r.bank, test);
  return f;
}

std::string title_of(const ExperimentPlan& plan) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s/%s/%s/%g/%s", mode_name(plan.mode), model_kind_name(plan.model),
                label_source_name(plan.labels), plan.fraction, adapt_method_name(plan.adapt_method));
  return buf;
}

ResultTable finish(const ExperimentPlan& plan, std::vector<FoldRecord> folds, const std::string& title) {
  ResultTable t;
  t.title = title;
  t.digest = plan.digest.empty() ? plan_digest(plan) : plan.digest;
  t.folds = std::move(folds);
  t.aggregate();
  return t;
}

std::uint64_t task_seed(std::uint64_t seed, int signer, int fold, std::uint64_t salt) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(signer) * 1000003u + static_cast<std::uint64_t>(fold) + salt));
}

// Independent training set for held-out signer s: every other signer; chunk
// 0 of each is the dev set.
void independent_split(const std::vector<SignerView>& views, std::size_t s, std::vector<LabeledUtterance>* train,
                       std::vector<LabeledUtterance>* dev) {
  for (std::size_t o = 0; o < views.size(); ++o) {
    if (o == s) continue;
    for (std::size_t i = 0; i < views[o].utts.size(); ++i) {
      (views[o].chunk[i] == 0 ? dev : train)->push_back(views[o].utts[i]);
    }
  }
}

// Adaptation utterances of one fold: a seeded draw from the chunks that are
// neither the test nor the tuning chunk.
std::vector<LabeledUtterance> adaptation_set(const ExperimentPlan& plan, const SignerView& v, int s, int fold) {
  const int tune = (fold + 1) % plan.num_folds;
  std::vector<LabeledUtterance> pool;
  for (std::size_t i = 0; i < v.utts.size(); ++i) {
    if (v.chunk[i] != fold && v.chunk[i] != tune) pool.push_back(v.utts[i]);
  }
  std::mt19937_64 rng(task_seed(plan.seed, s, fold, 0xada));
  std::shuffle(pool.begin(), pool.end(), rng);
  const auto n = static_cast<std::size_t>(std::llround(plan.fraction * static_cast<double>(v.utts.size())));
  pool.resize(std::min(n, pool.size()));
  return pool;
}

// Replaces training targets by forced alignments; utterances that cannot be
// aligned are dropped.
std::vector<LabeledUtterance> realigned(const Recognizer& r, const std::vector<LabeledUtterance>& data) {
  std::vector<LabeledUtterance> out;
  for (const auto& u : data) {
    try {
      LabeledUtterance a = u;
      a.frame_labels = r.align(*u.frames, u.word);
      out.push_back(std::move(a));
    } catch (const DataError&) {
    }
  }
  return out;
}

AdaptConfig adapt_config(const ExperimentPlan& plan, int s, int fold) {
  AdaptConfig cfg = plan.pipeline.adapt;
  cfg.method = plan.adapt_method;
  // Fine-tuning reruns the signer-independent SGD schedule; adapt.* only
  // configures the LIN methods.
  if (cfg.method == AdaptMethod::kFineTune) {
    const TrainConfig& f = plan.pipeline.frame;
    cfg.epochs = f.epochs;
    cfg.learning_rate = f.learning_rate;
    cfg.momentum = f.momentum;
    cfg.batch_size = f.batch_size;
    cfg.weight_decay = f.weight_decay;
    cfg.dropout = f.dropout;
  }
  cfg.seed = task_seed(plan.seed ^ cfg.seed, s, fold, 0xad);
  return cfg;
}

const IndependentModels& ensure_models(const ExperimentPlan& plan, const Corpus& corpus, const IndependentModels* given,
                                       IndependentModels* storage) {
  if (given != nullptr) {
    if (given->per_signer.size() != corpus.size()) throw UsageError("independent models do not match the corpus");
    return *given;
  }
  *storage = train_independent(plan, corpus);
  return *storage;
}

}  // namespace

IndependentModels train_independent(const ExperimentPlan& plan, const Corpus& corpus) {
  const auto views = views_of(corpus, plan.num_folds);
  if (views.size() < 2) throw DataError("signer-independent experiments need at least two signers");
  IndependentModels m;
  m.per_signer.resize(views.size());
  parallel_for(static_cast<int>(views.size()), plan.jobs, [&](int s) {
    std::vector<LabeledUtterance> train, dev;
    independent_split(views, static_cast<std::size_t>(s), &train, &dev);
    m.per_signer[static_cast<std::size_t>(s)] =
        train_recognizer(plan.model, train, dev, plan.pipeline, task_seed(plan.seed, s, -1, 0x51), true);
  });
  return m;
}

ResultTable run_signer_dependent(const ExperimentPlan& plan, const Corpus& corpus) {
  const auto views = views_of(corpus, plan.num_folds);
  const int F = plan.folds_used;
  std::vector<FoldRecord> recs(views.size() * static_cast<std::size_t>(F));
  parallel_for(static_cast<int>(recs.size()), plan.jobs, [&](int task) {
    const int s = task / F, f = task % F;
    const SignerView& v = views[static_cast<std::size_t>(s)];
    const int dev_chunk = (f + 1) % plan.num_folds;
    const auto test = in_chunk(v, f);
    const auto dev = in_chunk(v, dev_chunk);
    std::set<std::string> held_words;
    if (plan.disjoint_vocabulary) {
      for (const auto& u : test) held_words.insert(u.word);
      for (const auto& u : dev) held_words.insert(u.word);
    }
    std::vector<LabeledUtterance> train;
    for (std::size_t i = 0; i < v.utts.size(); ++i) {
      if (v.chunk[i] == f || v.chunk[i] == dev_chunk) continue;
      if (held_words.count(v.utts[i].word)) continue;
      train.push_back(v.utts[i]);
    }
    audit_disjoint(keys_of(test), concat(keys_of(train), keys_of(dev)));
    const Recognizer r = train_recognizer(plan.model, train, dev, plan.pipeline, task_seed(plan.seed, s, f, 0xd));
    recs[static_cast<std::size_t>(task)] = record(v.id, f, r, test);
  });
  return finish(plan, std::move(recs), title_of(plan));
}

ResultTable run_signer_independent(const ExperimentPlan& plan, const Corpus& corpus, const IndependentModels* models) {
  IndependentModels storage;
  const IndependentModels& m = ensure_models(plan, corpus, models, &storage);
  const auto views = views_of(corpus, plan.num_folds);
  const int F = plan.folds_used;
  std::vector<FoldRecord> recs(views.size() * static_cast<std::size_t>(F));
  parallel_for(static_cast<int>(recs.size()), plan.jobs, [&](int task) {
    const int s = task / F, f = task % F;
    const auto test = in_chunk(views[static_cast<std::size_t>(s)], f);
    std::vector<LabeledUtterance> train, dev;
    independent_split(views, static_cast<std::size_t>(s), &train, &dev);
    audit_disjoint(keys_of(test), concat(keys_of(train), keys_of(dev)));
    recs[static_cast<std::size_t>(task)] = record(views[static_cast<std::size_t>(s)].id, f, m.per_signer[static_cast<std::size_t>(s)], test);
  });
  ExperimentPlan p = plan;
  p.fraction = 0.0;
  return finish(plan, std::move(recs), title_of(p));
}

namespace {

// One adapted fold; `rounds` > 1 realigns the adaptation data with the
// previous round's recognizer and re-adapts from the independent classifiers.
std::vector<FoldRecord> adapted_fold(const ExperimentPlan& plan, const std::vector<SignerView>& views,
                                     const IndependentModels& m, int s, int f, int rounds) {
  const SignerView& v = views[static_cast<std::size_t>(s)];
  const Recognizer& base = m.per_signer[static_cast<std::size_t>(s)];
  const auto test = in_chunk(v, f);
  const auto tune = in_chunk(v, (f + 1) % plan.num_folds);
  std::vector<LabeledUtterance> train, dev;
  independent_split(views, static_cast<std::size_t>(s), &train, &dev);
  std::vector<LabeledUtterance> data = adaptation_set(plan, v, s, f);
  audit_disjoint(keys_of(test), concat(concat(keys_of(train), keys_of(dev)), concat(keys_of(tune), keys_of(data))));
  std::vector<FoldRecord> out;
  if (data.empty()) {
    FoldRecord r = record(v.id, f, base, test);
    for (int k = 1; k <= rounds; ++k) {
      r.round = k;
      out.push_back(r);
    }
    return out;
  }
  if (plan.labels == LabelSource::kFa) data = realigned(base, data);
  Recognizer current = base;
  std::vector<std::vector<int>> previous;
  for (const auto& u : data) previous.push_back(u.frame_labels);
  for (int k = 1; k <= rounds; ++k) {
    int changed = 0;
    if (k > 1) {
      const auto next = realigned(current, data);
      if (next.size() == data.size()) {
        for (std::size_t i = 0; i < data.size(); ++i) changed += next[i].frame_labels != previous[i];
        data = next;
        previous.clear();
        for (const auto& u : data) previous.push_back(u.frame_labels);
      }
    }
    current = base;
    current.bank = adapt_frame_bank(base.bank, data, adapt_config(plan, s, f));
    retune(current, tune, plan.pipeline);
    FoldRecord r = record(v.id, f, current, test);
    r.round = k;
    r.changed_alignments = changed;
    out.push_back(r);
  }
  return out;
}

}  // namespace

Split make_split(const Corpus& corpus, int num_folds, const std::string& signer, int fold, bool independent) {
  const auto views = views_of(corpus, num_folds);
  if (fold < 0 || fold >= num_folds) throw UsageError("fold out of range");
  std::size_t s = views.size();
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (views[i].id == signer) s = i;
  }
  if (s == views.size()) throw UsageError("unknown signer: " + signer);
  Split out;
  out.test = in_chunk(views[s], fold);
  if (independent) {
    independent_split(views, s, &out.train, &out.dev);
  } else {
    const int dev_chunk = (fold + 1) % num_folds;
    out.dev = in_chunk(views[s], dev_chunk);
    for (std::size_t i = 0; i < views[s].utts.size(); ++i) {
      if (views[s].chunk[i] != fold && views[s].chunk[i] != dev_chunk) out.train.push_back(views[s].utts[i]);
    }
  }
  return out;
}

Recognizer adapt_recognizer(const ExperimentPlan& plan, const Corpus& corpus, const Recognizer& base,
                            const std::string& signer, int fold) {
  const auto views = views_of(corpus, plan.num_folds);
  int s = -1;
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (views[i].id == signer) s = static_cast<int>(i);
  }
  if (s < 0) throw UsageError("unknown signer: " + signer);
  if (fold < 0 || fold >= plan.num_folds) throw UsageError("fold out of range");
  const SignerView& v = views[static_cast<std::size_t>(s)];
  auto data = adaptation_set(plan, v, s, fold);
  if (plan.labels == LabelSource::kFa) data = realigned(base, data);
  Recognizer r = base;
  if (data.empty()) return r;
  r.bank = adapt_frame_bank(base.bank, data, adapt_config(plan, s, fold));
  retune(r, in_chunk(v, (fold + 1) % plan.num_folds), plan.pipeline);
  return r;
}

ResultTable run_adapted(const ExperimentPlan& plan, const Corpus& corpus, const IndependentModels* models) {
  if (plan.fraction == 0.0) return run_signer_independent(plan, corpus, models);
  return realign_iterate(plan, corpus, 1, models);
}

ResultTable realign_iterate(const ExperimentPlan& plan, const Corpus& corpus, int rounds,
                            const IndependentModels* models, std::vector<ResultTable>* per_round) {
  if (rounds < 1) throw UsageError("realignment needs at least one round");
  if (rounds > 1 && plan.labels != LabelSource::kFa) throw UsageError("realignment iterates forced alignments (FA labels)");
  const double allowed[] = {0.05, 0.10, 0.20};
  if (std::none_of(std::begin(allowed), std::end(allowed), [&](double a) { return std::abs(a - plan.fraction) < 1e-12; })) {
    throw UsageError("adaptation fraction must be one of 0.05, 0.1, 0.2");
  }
  IndependentModels storage;
  const IndependentModels& m = ensure_models(plan, corpus, models, &storage);
  const auto views = views_of(corpus, plan.num_folds);
  const int F = plan.folds_used;
  std::vector<std::vector<FoldRecord>> recs(views.size() * static_cast<std::size_t>(F));
  parallel_for(static_cast<int>(recs.size()), plan.jobs, [&](int task) {
    recs[static_cast<std::size_t>(task)] = adapted_fold(plan, views, m, task / F, task % F, rounds);
  });
  ExperimentPlan p = plan;
  p.mode = ExperimentMode::kAdapted;
  std::vector<ResultTable> tables;
  for (int k = 0; k < rounds; ++k) {
    std::vector<FoldRecord> round;
    for (const auto& r : recs) round.push_back(r[static_cast<std::size_t>(k)]);
    tables.push_back(finish(plan, std::move(round), title_of(p) + (rounds > 1 ? "/round" + std::to_string(k + 1) : "")));
  }
  if (per_round != nullptr) *per_round = tables;
  return tables.back();
}

ResultTable run_scratch(const ExperimentPlan& plan, const Corpus& corpus, const IndependentModels* models) {
  if (plan.mode != ExperimentMode::kScratchDnn && plan.mode != ExperimentMode::kScratchBoth) {
    throw UsageError("run_scratch needs a scratch mode");
  }
  ExperimentPlan p = plan;
  p.fraction = 0.2;
  p.labels = LabelSource::kGt;
  const auto views = views_of(corpus, p.num_folds);
  IndependentModels storage;
  const IndependentModels* m = nullptr;
  if (p.mode == ExperimentMode::kScratchDnn) m = &ensure_models(p, corpus, models, &storage);
  const int F = p.folds_used;
  std::vector<FoldRecord> recs(views.size() * static_cast<std::size_t>(F));
  parallel_for(static_cast<int>(recs.size()), p.jobs, [&](int task) {
    const int s = task / F, f = task % F;
    const SignerView& v = views[static_cast<std::size_t>(s)];
    const auto test = in_chunk(v, f);
    const auto tune = in_chunk(v, (f + 1) % p.num_folds);
    const auto data = adaptation_set(p, v, s, f);
    audit_disjoint(keys_of(test), concat(keys_of(tune), keys_of(data)));
    const std::uint64_t seed = task_seed(p.seed, s, f, 0x5c);
    Recognizer r;
    if (p.mode == ExperimentMode::kScratchBoth) {
      r = train_recognizer(p.model, data, tune, p.pipeline, seed);
    } else {
      std::vector<LabeledUtterance> train, dev;
      independent_split(views, static_cast<std::size_t>(s), &train, &dev);
      audit_disjoint(keys_of(test), concat(keys_of(train), keys_of(dev)));
      r = m->per_signer[static_cast<std::size_t>(s)];
      r.bank = train_frame_bank(data, tune, p.pipeline, seed);
      retune(r, tune, p.pipeline);
    }
    recs[static_cast<std::size_t>(task)] = record(v.id, f, r, test);
  });
  return finish(p, std::move(recs), title_of(p));
}

ResultTable run_plan(const ExperimentPlan& plan, const Corpus& corpus) {
  plan.validate();
  switch (plan.mode) {
    case ExperimentMode::kSignerDep: return run_signer_dependent(plan, corpus);
    case ExperimentMode::kSignerIndep: return run_signer_independent(plan, corpus);
    case ExperimentMode::kAdapted: return run_adapted(plan, corpus);
    case ExperimentMode::kScratchDnn:
    case ExperimentMode::kScratchBoth: return run_scratch(plan, corpus);
  }
  throw UsageError("unknown experiment mode");
}

// ---------------------------------------------------------------- corpus files

void write_corpus(const std::string& dir, const Corpus& corpus) {
  fs::create_directories(dir);
  std::string signers;
  for (const auto& c : corpus) {
    signers += c.profile_id + "\n";
    const fs::path root = fs::path(dir) / c.profile_id;
    fs::create_directories(root / "descriptors");
    std::vector<PeakAnnotation> anns;
    for (const auto& u : c.utterances) {
      io::write_descriptors((root / "descriptors" / (u.id + ".bin")).string(), u.frames);
      anns.push_back(u.annotation);
    }
    io::write_annotations((root / "annotations.txt").string(), anns);
    io::write_manifest((root / "manifest.tsv").string(), c.manifest);
    std::string words;
    for (const auto& w : c.words) words += w + "\n";
    io::write_text((root / "words.txt").string(), words);
  }
  io::write_text((fs::path(dir) / "signers.txt").string(), signers);
}

Corpus read_corpus(const std::string& dir) {
  const fs::path list = fs::path(dir) / "signers.txt";
  if (!fs::exists(list)) throw DataError("no signers.txt in " + dir);
  Corpus corpus;
  for (const auto& id : io::read_lines(list.string())) {
    if (id.empty()) continue;
    const fs::path root = fs::path(dir) / id;
    SynthCorpus c;
    c.profile_id = id;
    for (const auto& w : io::read_lines((root / "words.txt").string())) {
      if (!w.empty()) c.words.push_back(w);
    }
    const auto anns = io::read_annotations((root / "annotations.txt").string());
    c.manifest = io::read_manifest((root / "manifest.tsv").string());
    std::vector<std::string> ids;
    std::map<std::string, int> chunk;
    for (const auto& e : c.manifest) {
      if (e.fold == 0) ids.push_back(e.utterance);
      if (e.role == io::FoldRole::kTest) chunk[e.utterance] = e.fold;
    }
    if (ids.size() != anns.size()) throw DataError("manifest and annotations of " + id + " differ in size");
    for (std::size_t i = 0; i < ids.size(); ++i) {
      SynthUtterance u;
      u.id = ids[i];
      u.word = anns[i].word();
      u.annotation = anns[i];
      u.frames = io::read_descriptors((root / "descriptors" / (u.id + ".bin")).string(), id);
      if (u.frames.num_frames() != u.annotation.num_frames()) throw DataError("descriptor length differs for " + u.id);
      auto it = chunk.find(u.id);
      if (it == chunk.end()) throw DataError("utterance " + u.id + " is in no test fold");
      c.chunk.push_back(it->second);
      c.utterances.push_back(std::move(u));
    }
    corpus.push_back(std::move(c));
  }
  if (corpus.empty()) throw DataError("corpus " + dir + " lists no signers");
  return corpus;
}

}  // namespace segscribe
