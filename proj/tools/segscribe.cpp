// segscribe: one binary, one subcommand per pipeline stage.
// Exit status 0 on success, 1 on usage errors, 2 on data errors.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "segscribe/error.hpp"
#include "segscribe/evalx.hpp"
#include "segscribe/frontend.hpp"
#include "segscribe/io.hpp"
#include "segscribe/run_config.hpp"
#include "segscribe/segmentation.hpp"

namespace fs = std::filesystem;
using namespace segscribe;

namespace {

struct Globals {
  std::string config_path;
  std::string out;
  std::string corpus;
  long long seed = -1;
  int jobs = 1;
  bool verbose = false;
};

struct Inputs {
  std::string model;
  std::string in;
  std::string word;
  std::string signer;
  int fold = 0;
  bool independent = false;
};

class Context {
 public:
  explicit Context(const Globals& g) : g_(g), start_(std::chrono::steady_clock::now()) {
    if (!g.config_path.empty()) config_ = RunConfig::load(g.config_path);
    if (g.seed >= 0) config_.set("seed", std::to_string(g.seed));
    if (g.jobs < 1) throw UsageError("--jobs must be positive");
  }

  const RunConfig& config() const { return config_; }

  ExperimentPlan plan() const {
    ExperimentPlan p = config_.plan();
    p.jobs = g_.jobs;
    return p;
  }

  // Output directory: --out, then the config's out key.
  std::string out_dir(bool required = true) const {
    std::string d = !g_.out.empty() ? g_.out : config_.get("out", "");
    if (d.empty() && required) throw UsageError("no output directory (--out or out = ...)");
    return d;
  }

  // Corpus directory: --corpus, then the config's corpus key (relative to
  // SEGSCRIBE_DATA when set), then SEGSCRIBE_DATA itself.
  std::string corpus_dir() const {
    const char* root = std::getenv("SEGSCRIBE_DATA");
    if (!g_.corpus.empty()) return g_.corpus;
    if (config_.has("corpus")) {
      const fs::path p = config_.get("corpus", "");
      return (p.is_relative() && root != nullptr && *root != '\0') ? (fs::path(root) / p).string() : p.string();
    }
    if (root != nullptr && *root != '\0') return root;
    throw UsageError("no corpus directory (--corpus, corpus = ... or SEGSCRIBE_DATA)");
  }

  void log(const std::string& msg) const {
    if (!g_.verbose) return;
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::fprintf(stderr, "[%7.1fs] %s\n", t, msg.c_str());
  }

 private:
  Globals g_;
  RunConfig config_;
  std::chrono::steady_clock::time_point start_;
};

std::string letters_text(const std::vector<Label>& letters) {
  return LabelAlphabet::standard().word_of(letters);
}

// ---------------------------------------------------------------- synth

void write_raster(const fs::path& dir, const RasterSequence& r) {
  fs::create_directories(dir);
  char name[32];
  for (std::size_t t = 0; t < r.frames.size(); ++t) {
    std::snprintf(name, sizeof name, "frame_%04zu.ppm", t);
    write_pnm((dir / name).string(), r.frames[t]);
    Image mask(r.masks[t].width, r.masks[t].height, 1);
    for (int y = 0; y < mask.height; ++y) {
      for (int x = 0; x < mask.width; ++x) mask.at(x, y) = r.masks[t].get(x, y) ? 255 : 0;
    }
    std::snprintf(name, sizeof name, "mask_%04zu.pgm", t);
    write_pnm((dir / name).string(), mask);
  }
  io::write_annotations((dir / "annotation.txt").string(), {r.annotation});
}

int cmd_synth(const Context& ctx) {
  const auto& c = ctx.config();
  std::string out = ctx.out_dir(false);
  if (out.empty()) out = ctx.corpus_dir();
  const std::uint64_t seed = static_cast<std::uint64_t>(c.get_int("synth.seed", 1));
  const auto profiles = make_profiles(preset(c.get("synth.preset", "easy")), c.get_int("synth.signers", 4), seed);
  const auto words = sample_words(c.get_int("synth.words", 300), splitmix64(seed + 1));
  const int folds = c.get_int("num_folds", 10);
  ctx.log("generating " + std::to_string(profiles.size()) + " signers x " + std::to_string(words.size()) + " words");
  const Corpus corpus = generate_corpus(profiles, words, FoldSpec{folds, splitmix64(seed + 2)});
  write_corpus(out, corpus);
  const int raster = c.get_int("synth.raster_words", 0);
  for (int i = 0; i < raster && i < static_cast<int>(words.size()); ++i) {
    const auto& u = corpus[0].utterances[static_cast<std::size_t>(i)];
    RasterConfig rc;
    rc.seed = splitmix64(seed + 3);
    write_raster(fs::path(out) / "raster" / u.id, render_raster(profiles[0], u.word, rc, static_cast<std::uint64_t>(i)));
  }
  std::printf("wrote %zu signers to %s\n", corpus.size(), out.c_str());
  return 0;
}

// ---------------------------------------------------------------- frontend

BinaryMask mask_of(const Image& img) {
  BinaryMask m(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) m.set(x, y, img.gray(x, y) > 127.0);
  }
  return m;
}

int cmd_frontend(const Context& ctx, const Inputs& in) {
  if (in.in.empty()) throw UsageError("frontend needs --in DIR with frame_*.ppm");
  std::vector<fs::path> frames;
  for (const auto& e : fs::directory_iterator(in.in)) {
    const auto name = e.path().filename().string();
    if (name.rfind("frame_", 0) == 0 && e.path().extension() == ".ppm") frames.push_back(e.path());
  }
  std::sort(frames.begin(), frames.end());
  if (frames.empty()) throw DataError("no frame_*.ppm in " + in.in);
  std::vector<Image> images;
  for (const auto& f : frames) images.push_back(read_pnm(f.string()));

  const int want = ctx.config().get_int("frontend.mask_frames", 5);
  std::vector<Image> fit_frames;
  std::vector<BinaryMask> fit_masks;
  for (std::size_t t = 0; t < frames.size() && static_cast<int>(fit_frames.size()) < want; ++t) {
    std::string mask = frames[t].filename().string();
    mask.replace(0, 6, "mask_");
    const fs::path mp = frames[t].parent_path() / fs::path(mask).replace_extension(".pgm");
    if (!fs::exists(mp)) continue;
    fit_frames.push_back(images[t]);
    fit_masks.push_back(mask_of(read_pnm(mp.string())));
  }
  if (fit_frames.empty()) throw DataError("no mask_*.pgm next to the frames to fit the color models");
  const ColorModel model = fit_color_models(fit_frames, fit_masks);
  for (const auto& w : model.warnings) ctx.log("color model: " + w);

  HogConfig hog = HogConfig::coarse();
  if (ctx.config().has("frontend.grids")) {
    hog.grids.clear();
    std::stringstream ss(ctx.config().get("frontend.grids", ""));
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        hog.grids.push_back(std::stoi(item));
      } catch (const std::exception&) {
        throw UsageError("frontend.grids: expected integers, got '" + item + "'");
      }
    }
  }
  Matrix desc = Matrix::Zero(static_cast<Eigen::Index>(images.size()), hog.dim());
  int missing = 0;
  for (std::size_t t = 0; t < images.size(); ++t) {
    const HandMask hand = segment_hand(images[t], model);
    HogResult h;
    if (hand.found) h = hog_descriptor(images[t], hand.mask, hog);
    if (h.valid) {
      desc.row(static_cast<Eigen::Index>(t)) = h.descriptor.transpose();
    } else {
      ++missing;
      if (t > 0) desc.row(static_cast<Eigen::Index>(t)) = desc.row(static_cast<Eigen::Index>(t) - 1);
    }
  }
  const std::string out = ctx.out_dir();
  const fs::path target = fs::path(out).extension() == ".bin" ? fs::path(out) : fs::path(out) / "descriptors.bin";
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  io::write_descriptors(target.string(), FrameSequence(desc, 60.0, fs::path(in.in).filename().string()));
  std::printf("%zu frames, %d without a hand, %d dims -> %s\n", images.size(), missing, hog.dim(),
              target.string().c_str());
  return 0;
}

// ---------------------------------------------------------------- training

Split split_of(const Context& ctx, const Corpus& corpus, const Inputs& in) {
  const ExperimentPlan plan = ctx.plan();
  const std::string signer = in.signer.empty() ? corpus.at(0).profile_id : in.signer;
  const bool independent = in.independent || plan.mode == ExperimentMode::kSignerIndep;
  Split s = make_split(corpus, plan.num_folds, signer, in.fold, independent);
  ctx.log(std::string(independent ? "independent" : "dependent") + " split for " + signer + " fold " +
          std::to_string(in.fold) + ": " + std::to_string(s.train.size()) + " train, " + std::to_string(s.dev.size()) +
          " dev, " + std::to_string(s.test.size()) + " test");
  return s;
}

int cmd_train_frames(const Context& ctx, const Inputs& in) {
  const Corpus corpus = read_corpus(ctx.corpus_dir());
  const Split s = split_of(ctx, corpus, in);
  const ExperimentPlan plan = ctx.plan();
  const FrameBank bank = train_frame_bank(s.train, s.dev, plan.pipeline, plan.seed);
  const std::string out = ctx.out_dir();
  fs::create_directories(out);
  bank.save((fs::path(out) / "frames.bin").string());
  std::vector<const FrameSequence*> seqs;
  std::vector<std::vector<int>> labels;
  for (const auto& u : s.test) {
    seqs.push_back(u.frames);
    labels.push_back(u.frame_labels);
  }
  std::printf("frame error %.4f on %zu test sequences\n", bank.frame_error(seqs, labels), seqs.size());
  return 0;
}

int cmd_train_lm(const Context& ctx, const Inputs& in) {
  const Corpus corpus = read_corpus(ctx.corpus_dir());
  const Split s = split_of(ctx, corpus, in);
  std::vector<std::string> words, test;
  for (const auto& u : s.train) words.push_back(u.word);
  for (const auto& u : s.test) test.push_back(u.word);
  const BigramLm lm = BigramLm::fit(words);
  const std::string out = ctx.out_dir();
  fs::create_directories(out);
  lm.save((fs::path(out) / "lm.txt").string());
  std::printf("perplexity %.3f on %zu test words\n", lm.perplexity(test), test.size());
  return 0;
}

int train_and_save(const Context& ctx, const Inputs& in, ModelKind kind) {
  const Corpus corpus = read_corpus(ctx.corpus_dir());
  const Split s = split_of(ctx, corpus, in);
  const ExperimentPlan plan = ctx.plan();
  ctx.log(std::string("training ") + model_kind_name(kind));
  const Recognizer r = train_recognizer(kind, s.train, s.dev, plan.pipeline, plan.seed, kind != ModelKind::kFirstpassScrf);
  save_recognizer(ctx.out_dir(), r);
  const Scored sc = evaluate(r, s.test);
  std::printf("%s: LER %.4f (%ld/%ld) on %zu test sequences\n", model_kind_name(kind), sc.ler(), sc.errors,
              sc.ref_letters, s.test.size());
  return 0;
}

int cmd_train_scrf(const Context& ctx, const Inputs& in) {
  ModelKind kind = ctx.plan().model;
  if (kind == ModelKind::kTandem) kind = ModelKind::kFirstpassScrf;
  return train_and_save(ctx, in, kind);
}

// ---------------------------------------------------------------- decoding

FrameSequence read_input(const Inputs& in) {
  if (in.in.empty()) throw UsageError("missing --in descriptor file");
  return io::read_descriptors(in.in, fs::path(in.in).stem().string());
}

Recognizer read_model(const Inputs& in) {
  if (in.model.empty()) throw UsageError("missing --model directory");
  return load_recognizer(in.model);
}

int cmd_decode(const Inputs& in) {
  const Recognizer r = read_model(in);
  std::printf("%s\n", letters_text(r.decode(read_input(in))).c_str());
  return 0;
}

int cmd_rescore(const Context& ctx, const Inputs& in) {
  const Recognizer r = read_model(in);
  if (r.kind != ModelKind::kRescoringScrf) throw UsageError("rescore needs a rescoring_scrf model");
  const FrameSequence seq = read_input(in);
  const Matrix em = r.hmm->emissions(r.tandem_features(seq));
  const HmmNbest nb = nbest_lattice(*r.hmm, em, r.lm.get(), r.nbest, std::max(r.lattice_max_len, 1));
  const std::string out = ctx.out_dir(false);
  if (!out.empty()) {
    fs::create_directories(out);
    io::write_lattice((fs::path(out) / "lattice.txt").string(), nb.lattice);
  }
  ctx.log("baseline 1-best " + letters_text(nb.lattice.one_best_segmentation().letters()));
  std::printf("%s\n", letters_text(r.decode(seq)).c_str());
  return 0;
}

int cmd_cascade(const Inputs& in) {
  const Recognizer r = read_model(in);
  if (r.kind != ModelKind::kCascade) throw UsageError("cascade needs a cascade model");
  std::printf("%s\n", letters_text(r.decode(read_input(in))).c_str());
  return 0;
}

int cmd_align(const Context& ctx, const Inputs& in) {
  if (in.word.empty()) throw UsageError("align needs --word");
  const Recognizer r = read_model(in);
  if (!r.hmm) throw UsageError("align needs a model with a tandem HMM");
  const FrameSequence seq = read_input(in);
  const Alignment a =
      forced_align(*r.hmm, r.hmm->emissions(r.tandem_features(seq)), LabelAlphabet::standard().letters_of(in.word));
  const std::string out = ctx.out_dir(false);
  if (!out.empty()) {
    fs::create_directories(out);
    io::write_frame_labels((fs::path(out) / "frame_labels.txt").string(), a.frame_labels);
  }
  const auto& seg = a.segmentation;
  for (int i = 0; i < seg.size(); ++i) {
    std::printf("%s\t%d\t%d\n", std::string(LabelAlphabet::standard().symbol(seg.labels()[static_cast<std::size_t>(i)])).c_str(),
                seg.start(i), seg.end(i));
  }
  return 0;
}

int cmd_adapt(const Context& ctx, const Inputs& in) {
  const Recognizer base = read_model(in);
  const Corpus corpus = read_corpus(ctx.corpus_dir());
  ExperimentPlan plan = ctx.plan();
  if (plan.fraction <= 0.0) throw UsageError("adapt needs fraction > 0");
  const std::string signer = in.signer.empty() ? corpus.at(0).profile_id : in.signer;
  const Recognizer r = adapt_recognizer(plan, corpus, base, signer, in.fold);
  save_recognizer(ctx.out_dir(), r);
  const Split s = make_split(corpus, plan.num_folds, signer, in.fold, true);
  const Scored before = evaluate(base, s.test), after = evaluate(r, s.test);
  std::printf("%s fold %d: LER %.4f -> %.4f\n", signer.c_str(), in.fold, before.ler(), after.ler());
  return 0;
}

// ---------------------------------------------------------------- eval and report

std::string file_stem(const std::string& title) {
  std::string s = title;
  for (char& c : s) {
    if (c == '/' || c == ' ') c = '_';
  }
  return s;
}

void write_table(const fs::path& dir, const ResultTable& t) {
  io::write_text((dir / (file_stem(t.title) + ".manifest")).string(), t.manifest());
  io::write_text((dir / (file_stem(t.title) + ".folds.tsv")).string(), t.folds_tsv());
}

int cmd_eval(const Context& ctx) {
  const ExperimentPlan plan = ctx.plan();
  plan.validate();
  const Corpus corpus = read_corpus(ctx.corpus_dir());
  const std::string out = ctx.out_dir();
  fs::create_directories(out);
  io::write_text((fs::path(out) / "config.txt").string(), ctx.config().canonical());
  ctx.log("plan digest " + plan.digest);
  const int rounds = ctx.config().get_int("eval.rounds", 1);
  std::vector<ResultTable> tables;
  if (rounds > 1) {
    realign_iterate(plan, corpus, rounds, nullptr, &tables);
  } else {
    tables.push_back(run_plan(plan, corpus));
  }
  for (const auto& t : tables) {
    write_table(out, t);
    std::printf("%s", t.to_tsv().c_str());
  }
  return 0;
}

std::vector<std::string> split_title(const std::string& title) {
  std::vector<std::string> parts;
  std::stringstream ss(title);
  std::string p;
  while (std::getline(ss, p, '/')) parts.push_back(p);
  return parts;
}

int cmd_report(const Context& ctx, const Inputs& in) {
  const std::string dir = !in.in.empty() ? in.in : ctx.out_dir();
  if (!fs::is_directory(dir)) throw DataError("no run directory " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".manifest") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no result manifests in " + dir);
  std::vector<ResultTable> tables;
  for (const auto& f : files) {
    std::string text;
    for (const auto& l : io::read_lines(f.string())) text += l + "\n";
    tables.push_back(ResultTable::from_manifest(text));
  }

  // LER table: one row per manifest; columns are the union of signers.
  std::vector<std::string> signers;
  for (const auto& t : tables) {
    for (const auto& s : t.signers) {
      if (std::find(signers.begin(), signers.end(), s) == signers.end()) signers.push_back(s);
    }
  }
  auto cell = [](const ResultTable& t, const std::string& s, bool frame) {
    for (std::size_t i = 0; i < t.signers.size(); ++i) {
      if (t.signers[i] == s) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", 100.0 * (frame ? t.signer_frame_error[i] : t.signer_ler[i]));
        return std::string(buf);
      }
    }
    return std::string("-");
  };
  std::ostringstream ler, fe;
  ler << "model";
  for (const auto& s : signers) ler << "\t" << s;
  ler << "\tMean\tnoise_band\n";
  fe << "mode\tmodel\tlabels\tfraction\tmethod";
  for (const auto& s : signers) fe << "\t" << s;
  fe << "\tMean\n";
  char buf[64];
  for (const auto& t : tables) {
    ler << t.title;
    for (const auto& s : signers) ler << "\t" << cell(t, s, false);
    std::snprintf(buf, sizeof buf, "\t%.2f\t%.2f\n", 100.0 * t.mean_ler, 100.0 * t.noise_band());
    ler << buf;
    auto parts = split_title(t.title);
    parts.resize(std::max<std::size_t>(parts.size(), 5), "-");
    fe << parts[0] << "\t" << parts[1] << "\t" << parts[2] << "\t" << parts[3] << "\t" << parts[4];
    for (const auto& s : signers) fe << "\t" << cell(t, s, true);
    std::snprintf(buf, sizeof buf, "\t%.2f\n", 100.0 * t.mean_frame_error);
    fe << buf;
  }
  const std::string out = ctx.out_dir(false).empty() ? dir : ctx.out_dir(false);
  fs::create_directories(out);
  io::write_text((fs::path(out) / "ler_table.tsv").string(), ler.str());
  io::write_text((fs::path(out) / "frame_error.tsv").string(), fe.str());
  std::printf("%zu result manifests\n\nLetter error rate (%%)\n%s\nFrame error rate (%%)\n%s", tables.size(),
              ler.str().c_str(), fe.str().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segscribe: lexicon-free fingerspelling recognition pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  Inputs in;
  app.add_option("--config", g.config_path, "run configuration (key = value)");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--corpus", g.corpus, "corpus directory (default: config corpus, then SEGSCRIBE_DATA)");
  app.add_option("--seed", g.seed, "overrides the config seed");
  app.add_option("--jobs", g.jobs, "worker threads");
  app.add_flag("--verbose", g.verbose, "progress on standard error");

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  auto* frontend = app.add_subcommand("frontend", "hand segmentation and HOG descriptors of a frame directory");
  frontend->add_option("--in", in.in, "directory of frame_*.ppm and mask_*.pgm");
  auto* train_frames = app.add_subcommand("train-frames", "train the frame classifiers of one split");
  auto* train_lm = app.add_subcommand("train-lm", "fit the letter bigram LM of one split");
  auto* train_hmm = app.add_subcommand("train-hmm", "train a tandem HMM recognizer");
  auto* train_scrf = app.add_subcommand("train-scrf", "train an SCRF recognizer (config model)");
  for (auto* sc : {train_frames, train_lm, train_hmm, train_scrf}) {
    sc->add_option("--signer", in.signer, "signer id (default: first)");
    sc->add_option("--fold", in.fold, "test fold");
    sc->add_flag("--independent", in.independent, "train on the other signers");
  }
  auto* decode = app.add_subcommand("decode", "decode a descriptor file");
  auto* rescore = app.add_subcommand("rescore", "rescore the HMM N-best lattice of a descriptor file");
  auto* cascade = app.add_subcommand("cascade", "decode with the two-pass cascade");
  auto* align = app.add_subcommand("align", "forced alignment of a descriptor file to a word");
  for (auto* sc : {decode, rescore, cascade, align}) {
    sc->add_option("--model", in.model, "model directory");
    sc->add_option("--in", in.in, "descriptor file");
  }
  align->add_option("--word", in.word, "transcript");
  auto* adapt_cmd = app.add_subcommand("adapt", "adapt a signer-independent model to one signer");
  adapt_cmd->add_option("--model", in.model, "signer-independent model directory");
  adapt_cmd->add_option("--signer", in.signer, "test signer");
  adapt_cmd->add_option("--fold", in.fold, "test fold");
  auto* eval = app.add_subcommand("eval", "run the configured experiment plan");
  auto* report = app.add_subcommand("report", "tables from the result manifests of a run directory");
  report->add_option("--in", in.in, "run directory (default: --out)");

  if (argc > 1 && argv[1][0] != '-') {
    const auto subs = app.get_subcommands([](CLI::App*) { return true; });
    const bool known = std::any_of(subs.begin(), subs.end(), [&](CLI::App* a) { return a->get_name() == argv[1]; });
    if (!known) {
      std::cerr << "segscribe: unknown subcommand '" << argv[1] << "'\n\n" << app.help();
      return 1;
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "segscribe: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    const Context ctx(g);
    if (*synth) return cmd_synth(ctx);
    if (*frontend) return cmd_frontend(ctx, in);
    if (*train_frames) return cmd_train_frames(ctx, in);
    if (*train_lm) return cmd_train_lm(ctx, in);
    if (*train_hmm) return train_and_save(ctx, in, ModelKind::kTandem);
    if (*train_scrf) return cmd_train_scrf(ctx, in);
    if (*decode) return cmd_decode(in);
    if (*rescore) return cmd_rescore(ctx, in);
    if (*cascade) return cmd_cascade(in);
    if (*align) return cmd_align(ctx, in);
    if (*adapt_cmd) return cmd_adapt(ctx, in);
    if (*eval) return cmd_eval(ctx);
    if (*report) return cmd_report(ctx, in);
  } catch (const UsageError& e) {
    std::cerr << "segscribe: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "segscribe: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
