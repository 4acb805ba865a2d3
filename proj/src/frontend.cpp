#include "segscribe/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "segscribe/error.hpp"
#include "segscribe/io.hpp"

namespace segscribe {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double srgb_linear(double c) {
  c /= 255.0;
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double d = 6.0 / 29.0;
  return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
}

std::array<double, 3> pixel_lab(const Image& img, int x, int y) {
  if (img.channels == 1) return srgb_to_lab(img.at(x, y), img.at(x, y), img.at(x, y));
  return srgb_to_lab(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
}

double diag_gauss_log(const std::array<double, 3>& x, const double* mean, const double* var) {
  double s = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double d = x[static_cast<std::size_t>(c)] - mean[c];
    s += d * d / var[c] + std::log(var[c]);
  }
  return -0.5 * (s + 3.0 * kLog2Pi);
}

double log_sum_exp(const double* v, int n) {
  double m = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

ColorMixture fit_mixture(const std::vector<std::array<double, 3>>& pts, const ColorFitConfig& cfg,
                         std::vector<std::string>& warnings) {
  const int n = static_cast<int>(pts.size());
  const int K = std::max(1, std::min(cfg.components, n));
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return pts[static_cast<std::size_t>(a)][0] < pts[static_cast<std::size_t>(b)][0]; });

  ColorMixture m;
  m.weights = Vector::Constant(K, 1.0 / K);
  m.means = Matrix::Zero(K, 3);
  m.variances = Matrix::Zero(K, 3);
  bool floored = false;
  auto floor_var = [&](double v) {
    if (v < cfg.variance_floor) {
      floored = true;
      return cfg.variance_floor;
    }
    return v;
  };
  // Initialize from lightness quantiles.
  for (int k = 0; k < K; ++k) {
    const int lo = static_cast<int>(static_cast<long>(k) * n / K), hi = static_cast<int>(static_cast<long>(k + 1) * n / K);
    for (int i = lo; i < hi; ++i) {
      for (int c = 0; c < 3; ++c) m.means(k, c) += pts[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])][static_cast<std::size_t>(c)];
    }
    m.means.row(k) /= std::max(1, hi - lo);
    for (int i = lo; i < hi; ++i) {
      for (int c = 0; c < 3; ++c) {
        const double d = pts[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])][static_cast<std::size_t>(c)] - m.means(k, c);
        m.variances(k, c) += d * d;
      }
    }
    for (int c = 0; c < 3; ++c) m.variances(k, c) = floor_var(m.variances(k, c) / std::max(1, hi - lo));
  }

  Matrix resp(n, K);
  std::vector<double> lp(static_cast<std::size_t>(K));
  for (int it = 0; it < cfg.em_iterations; ++it) {
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < K; ++k) {
        lp[static_cast<std::size_t>(k)] = std::log(m.weights(k)) +
                                          diag_gauss_log(pts[static_cast<std::size_t>(i)], &m.means(k, 0), &m.variances(k, 0));
      }
      const double z = log_sum_exp(lp.data(), K);
      for (int k = 0; k < K; ++k) resp(i, k) = std::exp(lp[static_cast<std::size_t>(k)] - z);
    }
    for (int k = 0; k < K; ++k) {
      const double nk = resp.col(k).sum();
      if (nk < 1e-9) continue;  // keep the previous parameters of an empty component
      m.weights(k) = nk / n;
      for (int c = 0; c < 3; ++c) {
        double mu = 0.0;
        for (int i = 0; i < n; ++i) mu += resp(i, k) * pts[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
        mu /= nk;
        double var = 0.0;
        for (int i = 0; i < n; ++i) {
          const double d = pts[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] - mu;
          var += resp(i, k) * d * d;
        }
        m.means(k, c) = mu;
        m.variances(k, c) = floor_var(var / nk);
      }
    }
    m.weights /= m.weights.sum();
  }
  if (floored) warnings.push_back("hand color variance floor engaged");
  return m;
}

}  // namespace

std::array<double, 3> srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const double R = srgb_linear(r), G = srgb_linear(g), B = srgb_linear(b);
  const double X = 0.4124564 * R + 0.3575761 * G + 0.1804375 * B;
  const double Y = 0.2126729 * R + 0.7151522 * G + 0.0721750 * B;
  const double Z = 0.0193339 * R + 0.1191920 * G + 0.9503041 * B;
  const double fx = lab_f(X / 0.95047), fy = lab_f(Y / 1.0), fz = lab_f(Z / 1.08883);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

double ColorMixture::log_likelihood(const std::array<double, 3>& lab) const {
  std::array<double, 16> lp{};
  std::vector<double> big;
  double* v = lp.data();
  if (size() > 16) {
    big.resize(static_cast<std::size_t>(size()));
    v = big.data();
  }
  for (int k = 0; k < size(); ++k) v[k] = std::log(weights(k)) + diag_gauss_log(lab, &means(k, 0), &variances(k, 0));
  return log_sum_exp(v, size());
}

double ColorModel::background_log_likelihood(int x, int y, const std::array<double, 3>& lab) const {
  const Eigen::Index i = static_cast<Eigen::Index>(y) * width + x;
  return diag_gauss_log(lab, &background_mean(i, 0), &background_variance(i, 0));
}

ColorModel fit_color_models(const std::vector<Image>& frames, const std::vector<BinaryMask>& masks,
                            const ColorFitConfig& config) {
  if (frames.empty()) throw DataError("no annotated frames");
  if (frames.size() != masks.size()) throw DataError("frame and mask counts differ");
  const int W = frames[0].width, H = frames[0].height;
  ColorModel model;
  model.width = W;
  model.height = H;
  model.roi = config.roi.valid() ? config.roi : Rect{0, 0, W, H};
  model.exclusion = config.exclusion;

  long hand_total = 0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (frames[f].width != W || frames[f].height != H || masks[f].width != W || masks[f].height != H) {
      throw DataError("frame sizes disagree");
    }
    if (masks[f].empty()) throw DataError("empty hand mask");
    hand_total += masks[f].count();
  }
  const long stride = std::max(1L, hand_total / std::max(1, config.max_hand_pixels));

  std::vector<std::array<double, 3>> hand;
  const auto npix = static_cast<Eigen::Index>(W) * H;
  Matrix sum = Matrix::Zero(npix, 3), sumsq = Matrix::Zero(npix, 3);
  Vector cnt = Vector::Zero(npix);
  Eigen::RowVector3d gsum = Eigen::RowVector3d::Zero(), gsumsq = Eigen::RowVector3d::Zero();
  double gcnt = 0.0;
  double prior_sum = 0.0;
  long hand_index = 0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const BinaryMask grown = dilate(masks[f], config.dilation);
    prior_sum += static_cast<double>(masks[f].count()) / static_cast<double>(npix);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const auto lab = pixel_lab(frames[f], x, y);
        if (masks[f].get(x, y)) {
          if (hand_index++ % stride == 0) hand.push_back(lab);
        }
        if (grown.get(x, y)) continue;
        const Eigen::Index i = static_cast<Eigen::Index>(y) * W + x;
        for (int c = 0; c < 3; ++c) {
          sum(i, c) += lab[static_cast<std::size_t>(c)];
          sumsq(i, c) += lab[static_cast<std::size_t>(c)] * lab[static_cast<std::size_t>(c)];
          gsum(c) += lab[static_cast<std::size_t>(c)];
          gsumsq(c) += lab[static_cast<std::size_t>(c)] * lab[static_cast<std::size_t>(c)];
        }
        cnt(i) += 1.0;
        gcnt += 1.0;
      }
    }
  }
  model.prior = prior_sum / static_cast<double>(frames.size());
  if (!(model.prior > 0.0 && model.prior < 1.0)) throw DataError("hand prior must lie in (0, 1)");
  model.hand = fit_mixture(hand, config, model.warnings);

  if (gcnt == 0.0) throw DataError("no background pixels outside the dilated masks");
  const Eigen::RowVector3d gmean = gsum / gcnt;
  const Eigen::RowVector3d gvar = (gsumsq / gcnt - gmean.cwiseProduct(gmean)).cwiseMax(config.variance_floor);
  model.background_mean.resize(npix, 3);
  model.background_variance.resize(npix, 3);
  bool floored = false;
  for (Eigen::Index i = 0; i < npix; ++i) {
    if (cnt(i) == 0.0) {
      model.background_mean.row(i) = gmean;
      model.background_variance.row(i) = gvar;
      continue;
    }
    for (int c = 0; c < 3; ++c) {
      const double mu = sum(i, c) / cnt(i);
      double var = sumsq(i, c) / cnt(i) - mu * mu;
      if (var < config.variance_floor) {
        var = config.variance_floor;
        floored = true;
      }
      model.background_mean(i, c) = mu;
      model.background_variance(i, c) = var;
    }
  }
  if (floored) model.warnings.push_back("background variance floor engaged");

  std::vector<double> ll;
  ll.reserve(hand.size());
  for (const auto& p : hand) ll.push_back(model.hand.log_likelihood(p));
  std::sort(ll.begin(), ll.end());
  const auto idx = static_cast<std::size_t>(std::floor(config.tau_percentile / 100.0 * static_cast<double>(ll.size() - 1)));
  model.tau = ll[idx];
  return model;
}

BinaryMask hand_candidates(const Image& frame, const ColorModel& model) {
  if (frame.width != model.width || frame.height != model.height) throw DataError("frame size differs from model");
  BinaryMask out(frame.width, frame.height);
  const double lp = std::log(model.prior), lq = std::log1p(-model.prior);
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      if (!model.roi.contains(x, y)) continue;
      if (model.exclusion.valid() && model.exclusion.contains(x, y)) continue;
      const auto lab = pixel_lab(frame, x, y);
      const double hand = model.hand.log_likelihood(lab);
      if (hand < model.tau) continue;
      if (hand + lp > model.background_log_likelihood(x, y, lab) + lq) out.set(x, y, true);
    }
  }
  return out;
}

HandMask segment_hand(const Image& frame, const ColorModel& model) {
  HandMask out;
  out.mask = largest_component(hand_candidates(frame, model));
  out.found = !out.mask.empty();
  return out;
}

int HogConfig::dim() const {
  int cells = 0;
  for (int g : grids) cells += g * g;
  return cells * bins;
}

HogResult hog_descriptor(const Image& frame, const BinaryMask& mask, const HogConfig& config) {
  if (frame.width != mask.width || frame.height != mask.height) throw DataError("mask size differs from frame");
  HogResult out;
  out.descriptor = Vector::Zero(config.dim());
  int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.get(x, y)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) return out;
  const int S = config.canonical_size;
  const int bw = x1 - x0 + 1, bh = y1 - y0 + 1;
  // Nearest-neighbour resampling of the tight box.
  std::vector<double> img(static_cast<std::size_t>(S) * S);
  std::vector<std::uint8_t> in(static_cast<std::size_t>(S) * S);
  for (int j = 0; j < S; ++j) {
    const int sy = y0 + std::min(bh - 1, static_cast<int>((j + 0.5) * bh / S));
    for (int i = 0; i < S; ++i) {
      const int sx = x0 + std::min(bw - 1, static_cast<int>((i + 0.5) * bw / S));
      img[static_cast<std::size_t>(j * S + i)] = frame.gray(sx, sy);
      in[static_cast<std::size_t>(j * S + i)] = mask.get(sx, sy) ? 1 : 0;
    }
  }
  auto value = [&](int i, int j, double fallback) {
    if (i < 0 || j < 0 || i >= S || j >= S || !in[static_cast<std::size_t>(j * S + i)]) return fallback;
    return img[static_cast<std::size_t>(j * S + i)];
  };

  const int B = config.bins;
  std::vector<int> offsets;
  int off = 0;
  for (int g : config.grids) {
    offsets.push_back(off);
    off += g * g * B;
  }
  constexpr double pi = std::numbers::pi;
  for (int j = 0; j < S; ++j) {
    for (int i = 0; i < S; ++i) {
      if (!in[static_cast<std::size_t>(j * S + i)]) continue;
      const double c = img[static_cast<std::size_t>(j * S + i)];
      const double gx = value(i + 1, j, c) - value(i - 1, j, c);
      const double gy = value(i, j + 1, c) - value(i, j - 1, c);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double ang = std::atan2(gy, gx);
      if (ang < 0.0) ang += pi;
      if (ang >= pi) ang -= pi;
      const int bin = std::min(B - 1, static_cast<int>(ang / (pi / B)));
      for (std::size_t l = 0; l < config.grids.size(); ++l) {
        const int g = config.grids[l];
        const int cell = (j * g / S) * g + (i * g / S);
        out.descriptor(offsets[l] + cell * B + bin) += mag;
      }
    }
  }
  for (Eigen::Index c = 0; c < out.descriptor.size(); c += B) {
    auto seg = out.descriptor.segment(c, B);
    seg /= seg.norm() + config.epsilon;
  }
  out.valid = true;
  return out;
}

PcaProjector::PcaProjector(Vector mean, Matrix basis, Vector eigenvalues)
    : mean_(std::move(mean)), basis_(std::move(basis)), eigenvalues_(std::move(eigenvalues)) {
  if (basis_.cols() != mean_.size() || basis_.rows() != eigenvalues_.size()) {
    throw DataError("PCA projector dimensions disagree");
  }
}

Vector PcaProjector::project(const Vector& x) const {
  if (x.size() != mean_.size()) throw DataError("PCA input dimension mismatch");
  return basis_ * (x - mean_);
}

Matrix PcaProjector::project_rows(const Matrix& x) const {
  if (x.cols() != mean_.size()) throw DataError("PCA input dimension mismatch");
  return (x.rowwise() - mean_.transpose()) * basis_.transpose();
}

Vector PcaProjector::reconstruct(const Vector& z) const { return mean_ + basis_.transpose() * z; }

void PcaProjector::save(std::ostream& out) const {
  io::write_u32(out, static_cast<std::uint32_t>(input_dim()));
  io::write_u32(out, static_cast<std::uint32_t>(output_dim()));
  for (Eigen::Index i = 0; i < mean_.size(); ++i) io::write_f64(out, mean_(i));
  for (Eigen::Index i = 0; i < basis_.size(); ++i) io::write_f64(out, basis_.data()[i]);
  for (Eigen::Index i = 0; i < eigenvalues_.size(); ++i) io::write_f64(out, eigenvalues_(i));
}

PcaProjector PcaProjector::load(std::istream& in) {
  const auto D = io::read_u32(in), d = io::read_u32(in);
  if (D == 0 || d == 0 || d > D || D > (1u << 20)) throw DataError("bad PCA dimensions");
  Vector mean(D);
  Matrix basis(d, D);
  Vector eig(d);
  for (Eigen::Index i = 0; i < mean.size(); ++i) mean(i) = io::read_f64(in);
  for (Eigen::Index i = 0; i < basis.size(); ++i) basis.data()[i] = io::read_f64(in);
  for (Eigen::Index i = 0; i < eig.size(); ++i) eig(i) = io::read_f64(in);
  return {std::move(mean), std::move(basis), std::move(eig)};
}

PcaProjector pca_fit(const Matrix& data, int d) {
  const auto n = data.rows(), D = data.cols();
  if (d < 1 || d > std::min(n, D)) throw UsageError("PCA dimension must lie in [1, min(rows, cols)]");
  const Vector mean = data.colwise().mean().transpose();
  const Eigen::MatrixXd centered = data.rowwise() - mean.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  Matrix basis = svd.matrixV().leftCols(d).transpose();
  Vector eig(d);
  for (int k = 0; k < d; ++k) {
    eig(k) = s(k) * s(k) / static_cast<double>(n);
    Eigen::Index arg;
    basis.row(k).cwiseAbs().maxCoeff(&arg);
    if (basis(k, arg) < 0.0) basis.row(k) *= -1.0;
  }
  return {mean, std::move(basis), std::move(eig)};
}

}  // namespace segscribe
