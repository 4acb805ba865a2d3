#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "segscribe/cascade.hpp"
#include "segscribe/error.hpp"
#include "segscribe/segmentation.hpp"
#include "segscribe/synth.hpp"

using namespace segscribe;

namespace {

// Posteriors from distances to each letter's appearance (rest pose for BOS/EOS).
PosteriorStream distance_posteriors(const SignerProfile& p, const FrameSequence& seq, double temperature) {
  Matrix centers(kNumLabels, p.dim());
  for (Label l = 0; l < kNumLetters; ++l) centers.row(l) = p.appearance(l).transpose();
  centers.row(kBos) = p.rest_appearance().transpose();
  centers.row(kEos) = p.rest_appearance().transpose();
  Matrix post(seq.num_frames(), kNumLabels);
  for (int t = 0; t < seq.num_frames(); ++t) {
    Eigen::RowVectorXd z(kNumLabels);
    for (int l = 0; l < kNumLabels; ++l) z(l) = -(seq.frames().row(t) - centers.row(l)).squaredNorm() / temperature;
    z = (z.array() - z.maxCoeff()).exp();
    post.row(t) = z / z.sum();
  }
  return PosteriorStream(post, "letter");
}

struct Data {
  std::vector<FrameSequence> seqs;
  std::vector<LabeledSegmentation> gold;
  std::vector<ScrfExample> examples;
};

Data make_data(const SignerProfile& p, const std::vector<std::string>& words, const BigramLm* lm, std::uint64_t stream0) {
  Data d;
  for (std::size_t i = 0; i < words.size(); ++i) {
    auto [seq, ann] = generate_word(p, words[i], stream0 + i);
    LabeledSegmentation gold = peaks_to_segmentation(ann, seq.num_frames());
    ScrfExample ex;
    ex.inputs = SegmentInputs::make(seq, {distance_posteriors(p, seq, 8.0)}, lm);
    ex.gold = gold;
    d.examples.push_back(std::move(ex));
    d.seqs.push_back(seq);
    d.gold.push_back(gold);
  }
  return d;
}

std::vector<Label> all_labels() {
  std::vector<Label> l;
  for (Label y = 0; y < kNumLabels; ++y) l.push_back(y);
  return l;
}

}  // namespace

TEST_CASE("segment thirds are per-third means") {
  Matrix f(7, 2);
  for (int t = 0; t < 7; ++t) f.row(t) << t, 10.0 * t;
  // Thirds of [1, 8) would be out of range; use [0, 7): frames {0,1}, {2,3}, {4,5,6}.
  Vector v = segment_thirds(f, 0, 7);
  CHECK(v(0) == doctest::Approx(0.5));
  CHECK(v(2) == doctest::Approx(2.5));
  CHECK(v(4) == doctest::Approx(5.0));
  CHECK(v(5) == doctest::Approx(50.0));
  Vector one = segment_thirds(f, 3, 4);
  CHECK(one(0) == 3.0);
  CHECK(one(2) == 3.0);
  CHECK(one(4) == 3.0);
  CHECK_THROWS_AS(segment_thirds(f, 5, 9), DataError);
}

TEST_CASE("cascade degenerate settings and tuning") {
  auto profiles = make_profiles(preset("easy"), 1, 3);
  const auto& p = profiles[0];
  const auto words = sample_words(60, 5);
  const BigramLm lm = BigramLm::fit(words);
  Data train = make_data(p, std::vector<std::string>(words.begin(), words.begin() + 40), &lm, 0);
  Data dev = make_data(p, std::vector<std::string>(words.begin() + 40, words.end()), &lm, 1000);

  ScrfModel init(FeatureRegistry::firstpass(all_labels(), kNumLabels, true), 24);
  ScrfTrainConfig cfg;
  cfg.epochs = 3;
  cfg.step = 0.1;
  ScrfModel first = train_scrf(init, train.examples, {}, cfg);

  TrainConfig dcfg;
  dcfg.hidden = {32};
  dcfg.epochs = 15;
  dcfg.dropout = 0.0;
  dcfg.learning_rate = 0.05;
  SegmentalDnn dnn = SegmentalDnn::train(train.seqs, train.gold, dev.seqs, dev.gold, dcfg);
  CHECK(dnn.static_dim() == p.dim());
  Vector lp = dnn.log_posteriors(dev.seqs[0].frames(), 0, 5);
  double mass = 0.0;
  for (Label c : dnn.classes()) mass += std::exp(lp(c));
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));  // floored classes add at most 1e-8 each

  std::vector<CascadeLattice> lats;
  for (std::size_t i = 0; i < dev.seqs.size(); ++i) {
    const auto& in = dev.examples[i].inputs;
    const auto first_best = decode(first, in);
    CHECK(cascade_decode(first, {1.0, 0.0, 0.0, 0.0}, dnn, in, dev.seqs[i], 20) == first_best);
    CHECK(cascade_decode(first, {0.0, 3.0, -2.0, 1.0}, dnn, in, dev.seqs[i], 1) == first_best);
    lats.push_back(build_cascade_lattice(first, dnn, in, dev.seqs[i], 20));
  }
  CHECK_THROWS_AS(build_cascade_lattice(first, dnn, dev.examples[0].inputs, dev.seqs[0], 0), UsageError);

  const CascadeWeights w = tune_cascade(lats, dev.gold);
  EditCounts base, tuned;
  for (std::size_t i = 0; i < lats.size(); ++i) {
    base += edit_counts(cascade_best(lats[i], {}).labels(), dev.gold[i].labels());
    tuned += edit_counts(cascade_best(lats[i], w).labels(), dev.gold[i].labels());
  }
  CHECK(tuned.rate() <= base.rate());

  const auto path = (std::filesystem::temp_directory_path() / "segscribe_segdnn.bin").string();
  dnn.save(path);
  SegmentalDnn back = SegmentalDnn::load(path);
  CHECK(back.classes() == dnn.classes());
  // Network parameters are stored as f32.
  const Vector a = back.log_posteriors(dev.seqs[1].frames(), 2, 9), b = dnn.log_posteriors(dev.seqs[1].frames(), 2, 9);
  CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-3);
  std::filesystem::remove(path);
}
