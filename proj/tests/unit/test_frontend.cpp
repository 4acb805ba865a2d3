#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "segscribe/error.hpp"
#include "segscribe/frontend.hpp"
#include "segscribe/synth.hpp"

using namespace segscribe;

namespace {

RasterSequence easy_raster(const std::string& word, std::uint64_t stream, double texture = 0.25) {
  auto p = make_profiles(preset("easy"), 1, 4).front();
  RasterConfig cfg;
  cfg.background_noise = 2.0;
  cfg.texture_amplitude = texture;
  return render_raster(p, word, cfg, stream);
}

// Stripes whose intensity gradient points along angle theta.
Image stripes(int size, double theta, double period) {
  Image img(size, size, 1);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double v = 128.0 + 100.0 * std::cos(2.0 * std::numbers::pi * (x * std::cos(theta) + y * std::sin(theta)) / period);
      img.at(x, y) = static_cast<std::uint8_t>(std::lround(v));
    }
  }
  return img;
}

BinaryMask full_mask(int w, int h) {
  BinaryMask m(w, h);
  std::fill(m.bits.begin(), m.bits.end(), 1);
  return m;
}

Eigen::VectorXd bin_mass(const Vector& desc, int bins) {
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(bins);
  for (Eigen::Index i = 0; i < desc.size(); ++i) mass(i % bins) += desc(i);
  return mass;
}

}  // namespace

TEST_CASE("Lab conversion reference points") {
  auto white = srgb_to_lab(255, 255, 255);
  CHECK(white[0] == doctest::Approx(100.0).epsilon(1e-4));
  CHECK(std::abs(white[1]) < 1e-3);
  CHECK(std::abs(white[2]) < 1e-3);
  auto black = srgb_to_lab(0, 0, 0);
  CHECK(black[0] == doctest::Approx(0.0));
  // sRGB red: L = 53.24, a = 80.09, b = 67.20.
  auto red = srgb_to_lab(255, 0, 0);
  CHECK(red[0] == doctest::Approx(53.24).epsilon(1e-3));
  CHECK(red[1] == doctest::Approx(80.09).epsilon(1e-3));
  CHECK(red[2] == doctest::Approx(67.20).epsilon(1e-3));
}

TEST_CASE("color models fit the rendered hand and background") {
  auto train = easy_raster("HAND", 1);
  std::vector<Image> frames(train.frames.begin(), train.frames.begin() + 6);
  std::vector<BinaryMask> masks(train.masks.begin(), train.masks.begin() + 6);
  auto model = fit_color_models(frames, masks);

  double expected_prior = 0.0;
  for (const auto& m : masks) expected_prior += static_cast<double>(m.count()) / (m.width * m.height);
  expected_prior /= static_cast<double>(masks.size());
  CHECK(model.prior == expected_prior);
  CHECK(model.hand.weights.sum() == doctest::Approx(1.0));
  CHECK((model.hand.variances.array() > 0.0).all());

  // Untextured hand: the heaviest component sits near the true hand color.
  auto flat = easy_raster("HAND", 1, 0.0);
  const auto flat_model = fit_color_models({flat.frames[0]}, {flat.masks[0]});
  const auto truth = srgb_to_lab(train.hand[0], train.hand[1], train.hand[2]);
  Eigen::Index k;
  flat_model.hand.weights.maxCoeff(&k);
  for (int c = 0; c < 3; ++c) {
    const double sd = std::sqrt(flat_model.hand.variances(k, c));
    CHECK(std::abs(flat_model.hand.means(k, c) - truth[static_cast<std::size_t>(c)]) <= 2.0 * sd + 1e-9);
  }

  auto test = easy_raster("WORLD", 2);
  double worst = 1.0;
  for (std::size_t t = 0; t < test.frames.size(); ++t) {
    auto seg = segment_hand(test.frames[t], model);
    CHECK(seg.found);
    worst = std::min(worst, mask_iou(seg.mask, test.masks[t]));
  }
  CHECK(worst >= 0.9);
}

TEST_CASE("pure background yields an empty mask") {
  auto r = easy_raster("AB", 3);
  auto model = fit_color_models(r.frames, r.masks);
  Image bg(r.frames[0].width, r.frames[0].height, 3);
  for (int y = 0; y < bg.height; ++y) {
    for (int x = 0; x < bg.width; ++x) {
      for (int c = 0; c < 3; ++c) bg.at(x, y, c) = r.background[static_cast<std::size_t>(c)];
    }
  }
  auto seg = segment_hand(bg, model);
  CHECK(!seg.found);
  CHECK(seg.mask.empty());
}

TEST_CASE("uniform single frame fits with the variance floor") {
  Image img(20, 20, 3);
  BinaryMask mask(20, 20);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 20; ++x) {
      const bool hand = x >= 5 && x < 10 && y >= 5 && y < 10;
      mask.set(x, y, hand);
      img.at(x, y, 0) = hand ? 220 : 30;
      img.at(x, y, 1) = hand ? 170 : 60;
      img.at(x, y, 2) = hand ? 140 : 200;
    }
  }
  ColorModel model;
  REQUIRE_NOTHROW(model = fit_color_models({img}, {mask}));
  CHECK(!model.warnings.empty());
  CHECK((model.hand.variances.array() >= 1.0).all());
  CHECK(mask_iou(segment_hand(img, model).mask, mask) == 1.0);
  CHECK_THROWS_AS(fit_color_models({}, {}), DataError);
  CHECK_THROWS_AS(fit_color_models({img}, {BinaryMask(20, 20)}), DataError);
}

TEST_CASE("largest component survives, ROI and exclusion suppress") {
  Image img(30, 20, 3);
  BinaryMask truth(30, 20);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 30; ++x) {
      const bool big = x >= 2 && x < 10 && y >= 2 && y < 10;
      const bool small = x >= 20 && x < 23 && y >= 12 && y < 15;
      truth.set(x, y, big || small);
      img.at(x, y, 0) = (big || small) ? 220 : 30;
      img.at(x, y, 1) = (big || small) ? 170 : 60;
      img.at(x, y, 2) = (big || small) ? 140 : 200;
    }
  }
  auto model = fit_color_models({img}, {truth});
  auto seg = segment_hand(img, model);
  CHECK(seg.mask.count() == 64);
  CHECK(count_components(hand_candidates(img, model)) == 2);

  model.exclusion = Rect{0, 0, 15, 20};
  seg = segment_hand(img, model);
  CHECK(seg.mask.count() == 9);
  model.exclusion = Rect{};
  model.roi = Rect{15, 0, 30, 20};
  CHECK(segment_hand(img, model).mask.count() == 9);
}

TEST_CASE("candidate set grows with the prior") {
  auto r = easy_raster("MONO", 5);
  auto model = fit_color_models({r.frames[0]}, {r.masks[0]});
  for (std::size_t t = 0; t < r.frames.size(); t += 3) {
    auto lo = model, hi = model;
    lo.prior = 0.05;
    hi.prior = 0.6;
    auto a = hand_candidates(r.frames[t], lo), b = hand_candidates(r.frames[t], hi);
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
      if (a.bits[i]) CHECK(b.bits[i]);
    }
  }
}

TEST_CASE("HOG dimensions") {
  CHECK(HogConfig{}.dim() == 2688);
  CHECK(HogConfig::coarse().dim() == 128);
  auto img = stripes(40, 0.3, 7.0);
  CHECK(hog_descriptor(img, full_mask(40, 40)).descriptor.size() == 2688);
  CHECK(hog_descriptor(img, full_mask(40, 40), HogConfig::coarse()).descriptor.size() == 128);
  auto empty = hog_descriptor(img, BinaryMask(40, 40));
  CHECK(!empty.valid);
  CHECK(empty.descriptor.isZero());
}

TEST_CASE("uniform region has zero gradients") {
  Image img(40, 40, 1);
  BinaryMask m(40, 40);
  for (int y = 0; y < 40; ++y) {
    for (int x = 0; x < 40; ++x) {
      const bool in = x >= 10 && x < 30 && y >= 12 && y < 25;
      m.set(x, y, in);
      img.at(x, y) = in ? 180 : 20;
    }
  }
  auto r = hog_descriptor(img, m);
  CHECK(r.valid);
  CHECK(r.descriptor.isZero());
}

TEST_CASE("HOG is translation invariant") {
  auto r = easy_raster("SHIFT", 6);
  const auto& src = r.frames[4];
  const auto& mask = r.masks[4];
  Image moved(src.width + 7, src.height + 5, src.channels);
  BinaryMask mmask(moved.width, moved.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      for (int c = 0; c < src.channels; ++c) moved.at(x + 7, y + 5, c) = src.at(x, y, c);
      mmask.set(x + 7, y + 5, mask.get(x, y));
    }
  }
  CHECK(hog_descriptor(src, mask).descriptor == hog_descriptor(moved, mmask).descriptor);
}

TEST_CASE("rotating stripes by one bin width shifts the histogram") {
  const double width = std::numbers::pi / 8.0;
  for (int k = 0; k < 7; ++k) {
    const double theta = (k + 0.5) * width;
    auto a = bin_mass(hog_descriptor(stripes(64, theta, 9.0), full_mask(64, 64)).descriptor, 8);
    auto b = bin_mass(hog_descriptor(stripes(64, theta + width, 9.0), full_mask(64, 64)).descriptor, 8);
    Eigen::Index ia, ib;
    a.maxCoeff(&ia);
    b.maxCoeff(&ib);
    CHECK(ia == k);
    CHECK(ib == k + 1);
  }
}

TEST_CASE("PCA recovers an exact line") {
  Matrix data(50, 3);
  std::mt19937 rng(2);
  std::normal_distribution<double> g;
  const Eigen::RowVector3d dir(1.0, -2.0, 0.5), off(3.0, 1.0, -1.0);
  for (int i = 0; i < 50; ++i) data.row(i) = off + g(rng) * dir;
  auto pca = pca_fit(data, 1);
  for (int i = 0; i < 50; ++i) {
    const Vector x = data.row(i).transpose();
    CHECK((pca.reconstruct(pca.project(x)) - x).norm() <= 1e-10);
  }
  CHECK(pca.project(pca.mean()).norm() <= 1e-12);
  CHECK_THROWS_AS(pca_fit(data, 4), UsageError);
  CHECK_THROWS_AS(pca_fit(data, 0), UsageError);
}

TEST_CASE("PCA matches an eigen-decomposition oracle") {
  std::mt19937 rng(9);
  std::normal_distribution<double> g;
  Matrix data(200, 6);
  for (int i = 0; i < 200; ++i) {
    for (int j = 0; j < 6; ++j) data(i, j) = g(rng) * (j + 1) + 0.3 * g(rng) * (j == 0 ? 0 : data(i, j - 1));
  }
  const int d = 4;
  auto pca = pca_fit(data, d);
  // Oracle: covariance eigenvalues by explicit loops and a symmetric solver.
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(6, 6);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(6);
  for (int i = 0; i < 200; ++i) mu += data.row(i).transpose();
  mu /= 200.0;
  for (int i = 0; i < 200; ++i) {
    const Eigen::VectorXd c = data.row(i).transpose() - mu;
    cov += c * c.transpose();
  }
  cov /= 200.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Matrix z = pca.project_rows(data);
  for (int k = 0; k < d; ++k) {
    const double oracle = es.eigenvalues()(5 - k);
    CHECK(pca.eigenvalues()(k) == doctest::Approx(oracle).epsilon(1e-9));
    const double var = (z.col(k).array() - z.col(k).mean()).square().mean();
    CHECK(var == doctest::Approx(oracle).epsilon(1e-9));
  }
  const Matrix gram = pca.basis() * pca.basis().transpose();
  CHECK((gram - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() <= 1e-8);
  for (int k = 0; k < d; ++k) {
    Eigen::Index arg;
    pca.basis().row(k).cwiseAbs().maxCoeff(&arg);
    CHECK(pca.basis()(k, arg) > 0.0);
  }

  std::stringstream ss;
  pca.save(ss);
  auto back = PcaProjector::load(ss);
  CHECK(back.basis() == pca.basis());
  CHECK(back.mean() == pca.mean());
}

TEST_CASE("PNM round trip") {
  auto r = easy_raster("AB", 8);
  const auto path = std::string("/tmp/segscribe_test.ppm");
  write_pnm(path, r.frames[0]);
  auto back = read_pnm(path);
  CHECK(back.pixels == r.frames[0].pixels);
  CHECK(back.channels == 3);
  std::remove(path.c_str());
}
