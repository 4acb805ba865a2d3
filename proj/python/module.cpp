#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "segscribe/alphabet.hpp"
#include "segscribe/bigram_lm.hpp"
#include "segscribe/error.hpp"
#include "segscribe/evalx.hpp"
#include "segscribe/run_config.hpp"
#include "segscribe/segmentation.hpp"
#include "segscribe/semimarkov.hpp"
#include "segscribe/synth.hpp"

namespace py = pybind11;
using namespace segscribe;

namespace {

std::vector<Label> letters(const std::string& word) { return LabelAlphabet::standard().letters_of(word); }

Label symbol(const std::string& s) { return LabelAlphabet::standard().label(s); }

SegmentScores chart(const Matrix& unary, const Matrix& trans, int max_len, std::vector<Label> labels) {
  SegmentScores s;
  s.max_len = max_len;
  s.labels = std::move(labels);
  if (max_len < 1 || unary.rows() % max_len != 0) throw UsageError("unary rows must be a multiple of max_len");
  s.num_frames = static_cast<int>(unary.rows() / max_len);
  if (unary.cols() != s.num_labels() || trans.rows() != s.num_labels() + 1 || trans.cols() != s.num_labels())
    throw UsageError("chart shapes do not match the label count");
  s.unary = unary;
  s.trans = trans;
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Segmental fingerspelling recognition core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<UsageError>(m, "UsageError", base.ptr());

  m.def(
      "letter_error_rate",
      [](const std::string& hyp, const std::string& ref) { return letter_error_rate(letters(hyp), letters(ref)); },
      py::arg("hyp"), py::arg("ref"), "Edit errors over reference length; words are letter strings.");
  m.def(
      "edit_distance",
      [](const std::string& hyp, const std::string& ref) { return edit_counts(letters(hyp), letters(ref)).errors(); },
      py::arg("hyp"), py::arg("ref"));

  py::class_<BigramLm>(m, "BigramLm")
      .def_static("fit", &BigramLm::fit, py::arg("words"))
      .def(
          "logprob", [](const BigramLm& lm, const std::string& prev, const std::string& next) {
            return lm.logprob(symbol(prev), symbol(next));
          },
          py::arg("prev"), py::arg("next"), "Symbols are letters or <s> / </s>.")
      .def("perplexity", &BigramLm::perplexity, py::arg("words"))
      .def(
          "word_logprob", [](const BigramLm& lm, const std::string& w) { return lm.word_logprob(letters(w)); },
          py::arg("word"));

  // unary is (T * max_len) x Y with row q * max_len + d - 1; trans is
  // (Y + 1) x Y whose last row scores the first segment.
  m.def(
      "log_partition",
      [](const Matrix& unary, const Matrix& trans, int max_len, std::vector<Label> labels) {
        return log_partition(chart(unary, trans, max_len, std::move(labels)));
      },
      py::arg("unary"), py::arg("trans"), py::arg("max_len"), py::arg("labels"));
  m.def(
      "viterbi",
      [](const Matrix& unary, const Matrix& trans, int max_len, std::vector<Label> labels) {
        const ScoredPath best = viterbi(chart(unary, trans, max_len, std::move(labels)));
        return py::make_tuple(best.path.labels(), best.path.boundaries(), best.score);
      },
      py::arg("unary"), py::arg("trans"), py::arg("max_len"), py::arg("labels"),
      "Returns (labels, boundaries, score) of the best labeled segmentation.");

  m.def(
      "synth_corpus",
      [](const std::string& dir, const std::string& preset_name, int signers, int words, int num_folds,
         std::uint64_t seed) {
        const auto profiles = make_profiles(preset(preset_name), signers, seed);
        const auto vocab = sample_words(words, splitmix64(seed + 1));
        py::gil_scoped_release release;
        write_corpus(dir, generate_corpus(profiles, vocab, FoldSpec{num_folds, splitmix64(seed + 2)}));
      },
      py::arg("dir"), py::arg("preset") = "easy", py::arg("signers") = 4, py::arg("words") = 300,
      py::arg("num_folds") = 10, py::arg("seed") = 1,
      "Writes a synthetic corpus directory, seeded like the command-line synth.");

  m.def(
      "run_plan",
      [](const std::string& config_text, const std::string& corpus_dir) {
        const ExperimentPlan plan = RunConfig::parse(config_text).plan();
        ResultTable table;
        {
          py::gil_scoped_release release;
          table = run_plan(plan, read_corpus(corpus_dir));
        }
        py::dict out;
        out["title"] = table.title;
        out["digest"] = table.digest;
        out["signers"] = table.signers;
        out["signer_ler"] = table.signer_ler;
        out["mean_ler"] = table.mean_ler;
        out["mean_frame_error"] = table.mean_frame_error;
        out["noise_band"] = table.noise_band();
        out["manifest"] = table.manifest();
        return out;
      },
      py::arg("config"), py::arg("corpus_dir"), "Runs an experiment plan given as run-config text.");
}
