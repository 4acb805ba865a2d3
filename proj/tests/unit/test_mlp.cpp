#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "segscribe/error.hpp"
#include "segscribe/mlp.hpp"
#include "segscribe/segmentation.hpp"
#include "segscribe/synth.hpp"

using namespace segscribe;

namespace {

Matrix random_matrix(std::mt19937& rng, int r, int c) {
  std::normal_distribution<double> g;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// Central-difference check of every block in `set` at `per_block` random coordinates.
void check_gradient(Mlp model, const Matrix& x, const std::vector<int>& y, const TrainableSet& set, int per_block,
                    int* checked) {
  Mlp grad;
  mlp_loss_and_gradient(model, x, y, 1e-3, set, &grad, 0.0);
  std::vector<std::pair<double*, long>> params, grads;
  model.for_each_block(set, [&](double* d, long n, bool) { params.emplace_back(d, n); });
  grad.for_each_block(set, [&](double* d, long n, bool) { grads.emplace_back(d, n); });
  REQUIRE(params.size() == grads.size());
  std::mt19937 rng(17);
  const double h = 1e-5;
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (int k = 0; k < per_block; ++k) {
      const long i = static_cast<long>(rng() % static_cast<unsigned>(params[b].second));
      double* p = params[b].first + i;
      const double saved = *p;
      *p = saved + h;
      const double up = mlp_loss_and_gradient(model, x, y, 1e-3, set, nullptr);
      *p = saved - h;
      const double down = mlp_loss_and_gradient(model, x, y, 1e-3, set, nullptr);
      *p = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grads[b].second > i ? grads[b].first[i] : 0.0;
      const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      CHECK(rel <= 1e-4);
      ++*checked;
    }
  }
}

// Two Gaussian blobs in 4-D, separable along the first axis.
FrameDataset separable(std::mt19937& rng, int n) {
  std::normal_distribution<double> g(0.0, 0.3);
  FrameDataset data(4);
  Matrix frames(n, 4);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int y = i % 2;
    labels[static_cast<std::size_t>(i)] = y;
    for (int d = 0; d < 4; ++d) frames(i, d) = g(rng);
    frames(i, 0) += y ? 1.5 : -1.5;
  }
  // One sequence per frame keeps windows from mixing classes.
  for (int i = 0; i < n; ++i) data.add(frames.row(i), {labels[static_cast<std::size_t>(i)]});
  return data;
}

struct SynthFrames {
  FrameDataset train{16}, test{16};
  std::vector<SignerProfile> profiles;
};

FrameDataset signer_frames(const SignerProfile& p, const std::vector<std::string>& words, std::uint64_t first_stream) {
  FrameDataset data(p.dim());
  for (std::size_t i = 0; i < words.size(); ++i) {
    auto [seq, ann] = generate_word(p, words[i], first_stream + i);
    data.add(seq, peaks_to_segmentation(ann, seq.num_frames()).frame_labels());
  }
  return data;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.hidden = {64};
  cfg.window = 3;
  cfg.epochs = 8;
  cfg.batch_size = 50;
  cfg.learning_rate = 0.05;
  cfg.momentum = 0.9;
  cfg.dropout = 0.1;
  return cfg;
}

std::vector<std::string> all_letter_words(int n, std::uint64_t seed) {
  auto words = sample_words(n, seed);
  words.push_back("ABCDEFGHIJKLM");
  words.push_back("NOPQRSTUVWXYZ");
  return words;
}

}  // namespace

TEST_CASE("window_frames replicates edges") {
  Matrix f(4, 2);
  f << 1, 2, 3, 4, 5, 6, 7, 8;
  CHECK(window_frames(f, 1) == f);
  Matrix w = window_frames(f, 3);
  CHECK(w.cols() == 6);
  CHECK(w.row(0) == (Eigen::RowVectorXd(6) << 1, 2, 1, 2, 3, 4).finished());
  CHECK(w.row(3) == (Eigen::RowVectorXd(6) << 5, 6, 7, 8, 7, 8).finished());
  Matrix one(1, 2);
  one << 9, 10;
  CHECK(window_frames(one, 3).row(0) == (Eigen::RowVectorXd(6) << 9, 10, 9, 10, 9, 10).finished());
  CHECK(window_frames(f, 21).cols() == 42);
  CHECK_THROWS_AS(window_frames(f, 2), UsageError);
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937 rng(4);
  Mlp m(3, 4, {7, 6}, 5, 11);
  m.enable_input_map();
  m.enable_lon();
  // Perturb the identity initializations so every block is exercised away from symmetry.
  m.input_map() += 0.1 * random_matrix(rng, 4, 4);
  m.input_shift() = 0.1 * random_matrix(rng, 4, 1).col(0);
  m.lon().weight += 0.1 * random_matrix(rng, 5, 5);
  for (auto& l : m.layers()) l.bias = 0.1 * random_matrix(rng, static_cast<int>(l.bias.size()), 1).col(0);
  const Matrix x = random_matrix(rng, 9, 12);
  const std::vector<int> y{0, 1, 2, 3, 4, 0, 1, 2, 3};
  int checked = 0;
  check_gradient(m, x, y, m.all_trainable(), 4, &checked);
  check_gradient(m, x, y, adapt_trainable(m, AdaptMethod::kLinUp), 4, &checked);
  check_gradient(m, x, y, adapt_trainable(m, AdaptMethod::kLinLon), 4, &checked);
  CHECK(checked >= 10);
}

TEST_CASE("full-batch descent does not increase the objective") {
  std::mt19937 rng(6);
  Mlp m(1, 4, {8}, 3, 2);
  const Matrix x = random_matrix(rng, 30, 4);
  std::vector<int> y;
  for (int i = 0; i < 30; ++i) y.push_back(i % 3);
  const auto set = m.all_trainable();
  double prev = mlp_loss_and_gradient(m, x, y, 1e-3, set, nullptr);
  for (int step = 0; step < 10; ++step) {
    Mlp g;
    mlp_loss_and_gradient(m, x, y, 1e-3, set, &g);
    std::vector<double*> gp;
    g.for_each_block(set, [&](double* d, long, bool) { gp.push_back(d); });
    std::size_t b = 0;
    m.for_each_block(set, [&](double* d, long n, bool) {
      for (long i = 0; i < n; ++i) d[i] -= 0.01 * gp[b][i];
      ++b;
    });
    const double cur = mlp_loss_and_gradient(m, x, y, 1e-3, set, nullptr);
    CHECK(cur <= prev + 1e-12);
    prev = cur;
  }
}

TEST_CASE("separable toy problem is learned") {
  std::mt19937 rng(1);
  auto train = separable(rng, 400), held = separable(rng, 200);
  TrainConfig cfg;
  cfg.hidden = {16};
  cfg.window = 1;
  cfg.epochs = 30;
  cfg.batch_size = 20;
  TrainReport rep;
  auto m = train_mlp(train, held, 2, cfg, &rep);
  CHECK(accuracy(m, held) >= 0.95);
  CHECK(rep.heldout_accuracy.size() == 31);
  CHECK(rep.heldout_accuracy[static_cast<std::size_t>(rep.best_epoch)] == accuracy(m, held));

  cfg.epochs = 0;
  CHECK_THROWS_AS(train_mlp(train, held, 2, cfg), UsageError);
  cfg.epochs = 1;
  CHECK_THROWS_AS(train_mlp(train, held, 3, cfg), DataError);
}

TEST_CASE("posteriors are normalized and deterministic") {
  std::mt19937 rng(3);
  Mlp m(3, 4, {8}, 5, 9);
  FrameSequence seq(random_matrix(rng, 12, 4), 60.0, "s");
  auto a = m.posteriors(seq), b = m.posteriors(seq);
  CHECK(a.probs() == b.probs());
  for (int t = 0; t < a.num_frames(); ++t) CHECK(std::abs(a.probs().row(t).sum() - 1.0) <= 1e-6);

  Mlp zero = m;
  zero.for_each_block(zero.all_trainable(), [](double* d, long n, bool) { std::fill(d, d + n, 0.0); });
  auto u = zero.posteriors(seq);
  CHECK((u.probs().array() - 0.2).abs().maxCoeff() <= 1e-15);
  CHECK_THROWS_AS(m.posteriors(FrameSequence(random_matrix(rng, 3, 5), 60.0, "s")), DataError);
}

TEST_CASE("frame_error conventions") {
  Matrix p(4, 2);
  p << 0.9, 0.1, 0.2, 0.8, 0.5, 0.5, 0.5, 0.5;
  PosteriorStream post(p, "letter");
  CHECK(frame_error(post, {0, 1, 0, 0}) == 0.0);
  CHECK(frame_error(post, {0, 1, 1, 1}) == 0.5);
  Matrix uni = Matrix::Constant(6, 2, 0.5);
  CHECK(frame_error(PosteriorStream(uni, "letter"), {0, 1, 0, 1, 0, 1}) == 0.5);

  std::mt19937 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix q(20, 4);
    std::vector<int> labels;
    for (int t = 0; t < 20; ++t) {
      for (int c = 0; c < 4; ++c) q(t, c) = std::floor(u(rng) * 4.0);  // frequent ties
      q.row(t) /= std::max(1e-9, q.row(t).sum());
      if (q.row(t).sum() == 0.0) q.row(t).setConstant(0.25);
      labels.push_back(static_cast<int>(rng() % 4));
    }
    int wrong = 0;
    for (int t = 0; t < 20; ++t) {
      int best = 0;
      for (int c = 0; c < 4; ++c) {
        if (q(t, c) > q(t, best)) best = c;
      }
      wrong += best != labels[static_cast<std::size_t>(t)];
    }
    CHECK(frame_error(PosteriorStream(q, "letter"), labels) == doctest::Approx(wrong / 20.0));
  }
}

TEST_CASE("letter classifier recognizes noise-free peaks on the easy preset") {
  auto p = make_profiles(preset("easy"), 1, 2).front();
  auto train = signer_frames(p, all_letter_words(80, 3), 0);
  auto held = signer_frames(p, sample_words(20, 4), 1000);
  auto cfg = small_config();
  auto m = train_mlp(train, held, kNumLabels, cfg);
  CHECK(frame_error(m, held) < 0.2);
  auto clean = p;
  clean.sigma = 0.0;
  auto [seq, ann] = generate_word(clean, "ART", 77);
  auto post = m.posteriors(seq);
  for (const auto& pk : ann.peaks()) CHECK(argmax_row(post.probs(), pk.frame) == pk.letter);
}

TEST_CASE("adaptation keeps frozen weights and improves a shifted signer") {
  auto profiles = make_profiles(preset("shifted"), 2, 5);
  auto train = signer_frames(profiles[0], all_letter_words(80, 3), 0);
  auto cfg = small_config();
  auto base = train_mlp(train, FrameDataset{}, kNumLabels, cfg);

  auto adapt_data = signer_frames(profiles[1], all_letter_words(25, 8), 0);
  auto test = signer_frames(profiles[1], sample_words(30, 9), 500);

  AdaptConfig ac;
  ac.epochs = 0;
  auto same = adapt(base, adapt_data, ac);
  CHECK(same.forward(test.all_windows(3)) == base.forward(test.all_windows(3)));

  const int D = base.static_dim();
  const int H = base.layers().back().weight.cols();
  CHECK(same.parameter_count(adapt_trainable(same, AdaptMethod::kLinUp)) == D * (D + 1) + kNumLabels * (H + 1));

  ac.epochs = 10;
  ac.method = AdaptMethod::kLinUp;
  auto up = adapt(base, adapt_data, ac);
  CHECK(up.layers()[0].weight == base.layers()[0].weight);
  CHECK(up.layers()[0].bias == base.layers()[0].bias);
  CHECK(up.layers()[1].weight != base.layers()[1].weight);

  ac.method = AdaptMethod::kLinLon;
  auto lon = adapt(base, adapt_data, ac);
  for (std::size_t l = 0; l < base.layers().size(); ++l) {
    CHECK(lon.layers()[l].weight == base.layers()[l].weight);
    CHECK(lon.layers()[l].bias == base.layers()[l].bias);
  }
  CHECK(lon.has_lon());

  ac.method = AdaptMethod::kFineTune;
  ac.learning_rate = 0.01;
  auto ft = adapt(base, adapt_data, ac);
  CHECK(frame_error(ft, test) <= frame_error(base, test));
  CHECK_THROWS_AS(adapt(base, FrameDataset{}, ac), DataError);
}

TEST_CASE("classifier files round-trip at float precision") {
  LabelAlphabet alphabet;
  std::vector<std::array<int, 6>> table(kNumLetters);
  for (int l = 0; l < kNumLetters; ++l) {
    for (int f = 0; f < 6; ++f) {
      table[static_cast<std::size_t>(l)][static_cast<std::size_t>(f)] =
          1 + (l + f) % (static_cast<int>(phonological_features()[static_cast<std::size_t>(f)].values.size()) - 1);
    }
  }
  alphabet.set_phonological(table);
  CHECK(phonological_labels(alphabet, 2, {kBos, 0, 3}) == std::vector<int>{0, table[0][2], table[3][2]});

  FrameClassifierBank bank;
  bank.heads.emplace_back(3, 4, std::vector<int>{8}, kNumLabels, 1, "letter");
  for (int f = 0; f < 6; ++f) {
    const auto& feat = phonological_features()[static_cast<std::size_t>(f)];
    bank.heads.emplace_back(3, 4, std::vector<int>{8}, static_cast<int>(feat.values.size()), 2 + f, feat.name);
  }
  bank.heads[0].enable_input_map();
  const std::string path = "/tmp/segscribe_bank.bin";
  bank.save(path);
  auto back = FrameClassifierBank::load(path);
  REQUIRE(back.heads.size() == 7);
  for (std::size_t h = 0; h < 7; ++h) {
    CHECK(back.heads[h].input_dim() == bank.heads[0].input_dim());
    CHECK(back.heads[h].num_classes() == bank.heads[h].num_classes());
    CHECK(back.heads[h].head() == bank.heads[h].head());
  }
  std::mt19937 rng(1);
  const Matrix x = random_matrix(rng, 5, 12);
  CHECK((back.heads[0].forward(x) - bank.heads[0].forward(x)).cwiseAbs().maxCoeff() <= 1e-5);
  // Loaded parameters are already float-exact, so a second trip is lossless.
  back.save(path);
  auto again = FrameClassifierBank::load(path);
  for (std::size_t h = 0; h < 7; ++h) CHECK(again.heads[h] == back.heads[h]);
  std::remove(path.c_str());
}
