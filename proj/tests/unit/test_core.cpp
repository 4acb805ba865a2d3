#include <filesystem>
#include <functional>
#include <map>
#include <random>

#include "doctest.h"
#include "support/oracles.hpp"
#include "segscribe/error.hpp"
#include "segscribe/io.hpp"
#include "segscribe/segmentation.hpp"

using namespace segscribe;
using oracle::all_sequences;
using oracle::edit_oracle;

namespace {

Label L(char c) { return c - 'A'; }

std::vector<Label> word(const std::string& s) {
  std::vector<Label> out;
  for (char c : s) out.push_back(L(c));
  return out;
}

PeakAnnotation make_ann(std::vector<std::pair<int, char>> peaks, int T) {
  std::vector<Peak> ps;
  std::string w;
  for (auto [f, c] : peaks) {
    Peak p;
    p.frame = f;
    p.letter = L(c);
    ps.push_back(p);
    w.push_back(c);
  }
  return PeakAnnotation(w, "s1", T, ps);
}

}  // namespace

TEST_CASE("peaks_to_segmentation applies the midpoint rule") {
  auto seg = peaks_to_segmentation(make_ann({{10, 'A'}, {20, 'B'}}, 30), 30);
  CHECK(seg.boundaries() == std::vector<int>{0, 5, 15, 25, 30});
  CHECK(seg.labels() == std::vector<Label>{kBos, L('A'), L('B'), kEos});

  seg = peaks_to_segmentation(make_ann({{4, 'C'}}, 8), 8);
  CHECK(seg.boundaries() == std::vector<int>{0, 2, 6, 8});
  CHECK(seg.labels() == std::vector<Label>{kBos, L('C'), kEos});

  // Adjacent peaks: ceil(3.5) = 4, BOS ends at ceil(1.5) = 2, EOS at ceil(6.5) = 7.
  seg = peaks_to_segmentation(make_ann({{3, 'A'}, {4, 'B'}}, 10), 10);
  CHECK(seg.boundaries() == std::vector<int>{0, 2, 4, 7, 10});
}

TEST_CASE("peaks_to_segmentation errors") {
  PeakAnnotation empty("", "s1", 5, {});
  CHECK_THROWS_WITH_AS(peaks_to_segmentation(empty, 5), "no peaks", DataError);
  auto ann = make_ann({{6, 'A'}}, 10);
  CHECK_THROWS_WITH_AS(peaks_to_segmentation(ann, 6), "peak out of range", DataError);
}

TEST_CASE("peaks_to_segmentation property: valid and peak-containing") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    const int T = std::uniform_int_distribution<int>(1, 40)(rng);
    const int k = std::uniform_int_distribution<int>(1, std::min(T, 8))(rng);
    std::vector<int> frames(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) frames[static_cast<std::size_t>(t)] = t;
    std::shuffle(frames.begin(), frames.end(), rng);
    frames.resize(static_cast<std::size_t>(k));
    std::sort(frames.begin(), frames.end());
    std::vector<std::pair<int, char>> peaks;
    for (int f : frames) peaks.push_back({f, static_cast<char>('A' + rng() % 26)});
    auto ann = make_ann(peaks, T);
    LabeledSegmentation seg;
    REQUIRE_NOTHROW(seg = peaks_to_segmentation(ann, T));
    CHECK(seg.num_frames() == T);
    CHECK(static_cast<int>(seg.letters().size()) == k);
    int letter_idx = 0;
    for (int i = 0; i < seg.size(); ++i) {
      if (!is_letter(seg.labels()[static_cast<std::size_t>(i)])) continue;
      const int peak = frames[static_cast<std::size_t>(letter_idx++)];
      CHECK(seg.start(i) <= peak);
      CHECK(peak < seg.end(i));
    }
    if (frames.front() > 0) CHECK(seg.labels().front() == kBos);
    if (frames.back() < T - 1) CHECK(seg.labels().back() == kEos);
  }
}

TEST_CASE("letter_error_rate examples") {
  CHECK(letter_error_rate(word("ART"), word("ART")) == 0.0);
  CHECK(letter_error_rate(word("AT"), word("ART")) == doctest::Approx(1.0 / 3.0));
  CHECK(letter_error_rate(word("BA"), word("AB")) == doctest::Approx(1.0));
  auto c = edit_counts(word("AT"), word("ART"));
  CHECK(c.deletions == 1);
  CHECK(c.substitutions == 0);
  CHECK(c.insertions == 0);
  CHECK_THROWS_WITH_AS(letter_error_rate(word("A"), {}), "empty reference", DataError);
  // BOS/EOS are stripped before comparison.
  CHECK(letter_error_rate({kBos, L('A'), kEos}, {L('A')}) == 0.0);
}

TEST_CASE("edit distance matches the recursive oracle and is symmetric") {
  const auto seqs = all_sequences(6, 3);
  // Pairs of length <= 4 exhaustively; longer ones sampled below.
  std::mt19937 rng(3);
  for (const auto& a : seqs) {
    for (int s = 0; s < 8; ++s) {
      const auto& b = seqs[rng() % seqs.size()];
      const auto c = edit_counts(a, b);
      CHECK(c.errors() == edit_oracle(a, b));
      CHECK(c.errors() == edit_counts(b, a).errors());
      CHECK(c.reference_length == static_cast<int>(b.size()));
    }
  }
}

TEST_CASE("label_histogram counts peaks") {
  auto h = label_histogram({make_ann({{1, 'A'}, {3, 'A'}, {5, 'B'}}, 8)});
  CHECK(h.total == 3);
  CHECK(h.entries[L('A')].count == 2);
  CHECK(h.entries[L('A')].frequency == doctest::Approx(2.0 / 3.0));
  CHECK(h.entries[L('B')].frequency == doctest::Approx(1.0 / 3.0));
  double sum = 0.0;
  for (auto& [l, e] : h.entries) sum += e.frequency;
  CHECK(std::abs(sum - 1.0) <= 1e-12);

  auto empty = label_histogram({});
  CHECK(empty.total == 0);
  CHECK(empty.entries.empty());
}

TEST_CASE("annotation records round-trip with flags and digraphs") {
  const std::string line = "GHOST\tsigner2\t60\t10:GH,+ 20:O 31:S,* 40:T,+*";
  auto ann = io::parse_annotation(line);
  CHECK(ann.peaks().size() == 4);
  CHECK(ann.peaks()[0].is_digraph());
  CHECK(ann.peaks()[0].noncanonical);
  CHECK(ann.peaks()[2].undetected);
  CHECK(ann.has_digraph());
  CHECK(io::format_annotation(ann) == line);
  CHECK_THROWS_AS(io::parse_annotation("AB\ts\t10\t5:A"), DataError);
  CHECK_THROWS_AS(io::parse_annotation("AB\ts\t10\t5:A 3:B"), DataError);
}

TEST_CASE("descriptor file round-trip") {
  Matrix m(3, 2);
  m << 1.5, -2.0, 0.25, 4.0, 8.0, -0.125;
  FrameSequence seq(m, 60.0, "s");
  auto path = (std::filesystem::temp_directory_path() / "segscribe_desc.bin").string();
  io::write_descriptors(path, seq);
  auto back = io::read_descriptors(path);
  CHECK(back.frames() == m);
  CHECK(back.frame_rate() == 60.0);
  std::filesystem::remove(path);
}

TEST_CASE("domain type invariants") {
  CHECK_THROWS_AS(LabeledSegmentation({0, 1}, {0, 3, 3}), DataError);
  CHECK_THROWS_AS(LabeledSegmentation({0}, {1, 3}), DataError);
  CHECK_THROWS_AS(FrameSequence(Matrix(0, 3), 60.0, ""), DataError);
  Matrix bad(1, 1);
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(FrameSequence(bad, 60.0, ""), DataError);
  Matrix p(1, 2);
  p << 0.7, 0.2;
  CHECK_THROWS_AS(PosteriorStream(p, "letter"), DataError);

  LabeledSegmentation seg({kBos, 0, kEos}, {0, 2, 5, 6});
  CHECK(seg.frame_labels() == std::vector<Label>{kBos, kBos, 0, 0, 0, kEos});

  LabelAlphabet a;
  CHECK(a.symbol(kBos) == "<s>");
  CHECK(a.label("</s>") == kEos);
  CHECK(io::parse_labels("<s> A R T </s>") == std::vector<Label>{kBos, 0, 17, 19, kEos});
}

TEST_CASE("lattice validation") {
  std::vector<LatticeEdge> edges{{0, 2, 0, -1.0}, {2, 4, 1, -1.0}, {0, 4, 2, -3.0}};
  Lattice lat({0, 2, 4}, edges, {0, 1});
  CHECK(lat.one_best_segmentation().labels() == std::vector<Label>{0, 1});
  CHECK_THROWS_AS(Lattice({0, 2, 4}, edges, {0}), DataError);
  CHECK_THROWS_AS(Lattice({0, 2, 4}, {{0, 2, 0, 0.0}}, {0}), DataError);
}

TEST_CASE("lattice text round-trips bit-exactly") {
  std::vector<LatticeEdge> edges{{0, 2, kBos, -0.1}, {2, 4, 1, 1.0 / 3.0}, {0, 4, 2, -3e-300}, {4, 7, kEos, 2.5}};
  Lattice lat({0, 2, 4, 7}, edges, {0, 1, 3});
  const std::string text = io::format_lattice(lat);
  CHECK(text.rfind("#nodes 4 0 2 4 7\n", 0) == 0);
  Lattice back = io::parse_lattice(text);
  REQUIRE(back.edges().size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(back.edges()[i].score == edges[i].score);
    CHECK(back.edges()[i].label == edges[i].label);
  }
  CHECK(back.one_best() == lat.one_best());
  CHECK(io::format_lattice(back) == text);
  CHECK_THROWS_AS(io::parse_lattice("0 2 A 1.0\n"), DataError);
  CHECK_THROWS_AS(io::parse_lattice("#nodes 2 0 2\n0 2 A x\n"), DataError);
}

TEST_CASE("phonetic table has one row per letter") {
  LabelAlphabet a;
  CHECK(phonetic_table().size() == 26);
  CHECK(phonetic_columns().size() == 14);
  // Index finger MCP takes 90/135/180 plus the silence class.
  CHECK(a.phonetic_classes(0) == 4);
  CHECK(a.phonetic_value(0, kBos) == 0);
  CHECK(phonological_features().size() == 6);
  CHECK(phonological_features()[1].values.size() == 7);
}
