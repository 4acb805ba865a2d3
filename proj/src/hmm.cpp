#include "segscribe/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "segscribe/error.hpp"
#include "segscribe/io.hpp"

namespace segscribe {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kMinTransition = 1e-6;

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

double lm_term(const BigramLm* lm, double weight, Label prev, Label next) {
  if (lm == nullptr || weight == 0.0) return 0.0;
  return weight * lm->logprob(prev, next);
}

bool unit_edge_allowed(Label prev, Label next) {
  if (prev == kEos || next == kBos) return false;
  if (prev == kBos && next == kEos) return false;
  return true;
}

void write_matrix_body(std::ostream& out, const Matrix& m) {
  io::write_u32(out, static_cast<std::uint32_t>(m.rows()));
  io::write_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) io::write_f64(out, m.data()[i]);
}

Matrix read_matrix_body(std::istream& in) {
  const auto r = io::read_u32(in), c = io::read_u32(in);
  if (static_cast<std::uint64_t>(r) * c > (1ull << 32)) throw DataError("matrix too large");
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = io::read_f64(in);
  return m;
}

Vector to_vector(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

void stack_rows(const std::vector<Matrix>& parts, Matrix* out) {
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.rows();
  out->resize(rows, parts.empty() ? 0 : parts[0].cols());
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    if (p.cols() != out->cols()) throw DataError("feature dimensions differ between sequences");
    out->middleRows(r, p.rows()) = p;
    r += p.rows();
  }
}

}  // namespace

Matrix log_posterior_block(const std::vector<PosteriorStream>& heads) {
  if (heads.empty()) throw DataError("tandem features need at least one posterior stream");
  const int T = heads[0].num_frames();
  int cols = 0;
  for (const auto& h : heads) {
    if (h.num_frames() != T) throw DataError("posterior streams differ in length");
    cols += h.num_classes();
  }
  Matrix out(T, cols);
  int c = 0;
  for (const auto& h : heads) {
    out.middleCols(c, h.num_classes()) = h.probs().array().max(1e-8).log().matrix();
    c += h.num_classes();
  }
  return out;
}

TandemTransform TandemTransform::fit(const std::vector<std::vector<PosteriorStream>>& heads,
                                     const std::vector<Matrix>& images, const TandemConfig& config) {
  if (heads.empty()) throw DataError("tandem transform needs training sequences");
  if (config.posterior_dim < 1 || config.image_dim < 0) throw UsageError("tandem PCA dimensions out of range");
  std::vector<Matrix> blocks;
  for (const auto& h : heads) blocks.push_back(log_posterior_block(h));
  Matrix post;
  stack_rows(blocks, &post);
  TandemTransform t;
  const auto bound = [](int want, const Matrix& m) {
    return static_cast<int>(std::min<Eigen::Index>({static_cast<Eigen::Index>(want), m.rows(), m.cols()}));
  };
  t.posterior_pca_ = pca_fit(post, bound(config.posterior_dim, post));
  if (config.image_dim > 0) {
    if (images.size() != heads.size()) throw DataError("one descriptor matrix per posterior sequence is required");
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (images[i].rows() != blocks[i].rows()) throw DataError("descriptors and posteriors differ in length");
    }
    Matrix img;
    stack_rows(images, &img);
    t.image_pca_ = pca_fit(img, bound(std::min(config.image_dim, 200), img));
    t.has_images_ = true;
  }
  return t;
}

int TandemTransform::dim() const { return posterior_dim() + image_dim(); }

Matrix TandemTransform::apply(const std::vector<PosteriorStream>& heads, const Matrix* images) const {
  const Matrix block = log_posterior_block(heads);
  if (block.cols() != posterior_pca_.input_dim()) throw DataError("posterior streams differ from the tandem transform");
  Matrix out(block.rows(), dim());
  out.leftCols(posterior_dim()) = posterior_pca_.project_rows(block);
  if (has_images_) {
    if (images == nullptr) throw DataError("tandem transform needs image descriptors");
    if (images->rows() != block.rows()) throw DataError("descriptors and posteriors differ in length");
    out.rightCols(image_dim()) = image_pca_.project_rows(*images);
  }
  return out;
}

void TandemTransform::save(std::ostream& out) const {
  out.write("SGTD", 4);
  io::write_u32(out, 1);
  posterior_pca_.save(out);
  io::write_u32(out, has_images_ ? 1 : 0);
  if (has_images_) image_pca_.save(out);
}

TandemTransform TandemTransform::load(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "SGTD") throw DataError("not a tandem transform");
  if (io::read_u32(in) != 1) throw DataError("unsupported tandem transform version");
  TandemTransform t;
  t.posterior_pca_ = PcaProjector::load(in);
  t.has_images_ = io::read_u32(in) != 0;
  if (t.has_images_) t.image_pca_ = PcaProjector::load(in);
  return t;
}

void write_matrix(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write("SGMX", 4);
  write_matrix_body(out, m);
  if (!out) throw DataError("write failed: " + path);
}

Matrix read_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "SGMX") throw DataError("not a matrix file: " + path);
  return read_matrix_body(in);
}

double DiagGmm::component_log_likelihood(int k, const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  if (weights(k) <= 0.0) return kNegInf;
  const auto v = variances.row(k).array();
  const double q = ((x.array() - means.row(k).array()).square() / v).sum();
  return std::log(weights(k)) - 0.5 * (q + v.log().sum() + kLog2Pi * static_cast<double>(x.size()));
}

double DiagGmm::log_likelihood(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  double total = kNegInf;
  for (int k = 0; k < size(); ++k) total = log_sum_exp(total, component_log_likelihood(k, x));
  return total;
}

TandemHmm::TandemHmm(int dim, int states_per_unit, Vector variance_floor)
    : dim_(dim), states_(states_per_unit), floor_(std::move(variance_floor)) {
  if (dim < 1 || states_per_unit < 1) throw UsageError("HMM needs a positive dimension and state count");
  if (floor_.size() != dim) throw UsageError("variance floor dimension differs from the model");
  gmms_.resize(static_cast<std::size_t>(num_states()));
  for (auto& g : gmms_) {
    g.weights = Vector::Ones(1);
    g.means = Matrix::Zero(1, dim);
    g.variances = Matrix::Ones(1, dim);
  }
  trans_ = Matrix::Constant(num_states(), 2, 0.5);
}

Matrix TandemHmm::emissions(const Matrix& features) const {
  if (features.cols() != dim_) throw DataError("feature dimension differs from the HMM");
  const auto T = features.rows();
  Matrix out(T, num_states());
  for (int g = 0; g < num_states(); ++g) {
    const DiagGmm& m = gmms_[static_cast<std::size_t>(g)];
    Eigen::VectorXd total = Eigen::VectorXd::Constant(T, kNegInf);
    for (int k = 0; k < m.size(); ++k) {
      if (m.weights(k) <= 0.0) continue;
      const Eigen::RowVectorXd inv = m.variances.row(k).cwiseInverse();
      const double c = std::log(m.weights(k)) -
                       0.5 * (m.variances.row(k).array().log().sum() + kLog2Pi * static_cast<double>(dim_));
      const Eigen::VectorXd q =
          ((features.rowwise() - m.means.row(k)).array().square().rowwise() * inv.array()).rowwise().sum();
      for (Eigen::Index t = 0; t < T; ++t) total(t) = log_sum_exp(total(t), c - 0.5 * q(t));
    }
    out.col(g) = total;
  }
  return out;
}

TandemHmm TandemHmm::initialize(const std::vector<Matrix>& features, const std::vector<LabeledSegmentation>& gold,
                                int states_per_unit, std::vector<std::string>* warnings) {
  if (features.empty() || features.size() != gold.size()) throw DataError("HMM initialization needs one segmentation per sequence");
  Matrix all;
  stack_rows(features, &all);
  const Eigen::RowVectorXd mean = all.colwise().mean();
  const Eigen::RowVectorXd var = ((all.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(all.rows())).matrix();
  const Vector floor = (1e-4 * var.transpose()).cwiseMax(1e-10);
  const int D = static_cast<int>(all.cols());
  TandemHmm m(D, states_per_unit, floor);
  const int N = m.num_states();
  Vector count = Vector::Zero(N);
  Matrix sum = Matrix::Zero(N, D), sq = Matrix::Zero(N, D);
  Vector unit_frames = Vector::Zero(kNumLabels), unit_segments = Vector::Zero(kNumLabels);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    const auto& g = gold[i];
    if (g.num_frames() != f.rows()) throw DataError("gold segmentation length differs from the features");
    for (int j = 0; j < g.size(); ++j) {
      const Label u = g.labels()[static_cast<std::size_t>(j)];
      const int q = g.start(j), n = g.end(j) - g.start(j);
      unit_frames(u) += n;
      unit_segments(u) += 1;
      for (int s = 0; s < states_per_unit; ++s) {
        int a = q + s * n / states_per_unit, b = q + (s + 1) * n / states_per_unit;
        if (a == b) {
          a = std::min(a, q + n - 1);
          b = a + 1;
        }
        const int st = m.state(u, s);
        for (int t = a; t < b; ++t) {
          count(st) += 1;
          sum.row(st) += f.row(t);
          sq.row(st) += f.row(t).array().square().matrix();
        }
      }
    }
  }
  for (Label u = 0; u < kNumLabels; ++u) {
    if (unit_segments(u) == 0 && warnings != nullptr) {
      warnings->push_back("unit " + std::string(LabelAlphabet::standard().symbol(u)) + " has no training frames; using global statistics");
    }
    const double per_state = unit_segments(u) > 0 ? unit_frames(u) / (unit_segments(u) * states_per_unit) : 2.0;
    const double stay = std::clamp(1.0 - 1.0 / std::max(per_state, 1.0), 0.05, 0.95);
    for (int s = 0; s < states_per_unit; ++s) {
      const int st = m.state(u, s);
      DiagGmm& gm = m.gmms_[static_cast<std::size_t>(st)];
      if (count(st) > 0) {
        gm.means.row(0) = sum.row(st) / count(st);
        gm.variances.row(0) = (sq.row(st) / count(st) - gm.means.row(0).array().square().matrix()).cwiseMax(floor.transpose());
      } else {
        gm.means.row(0) = mean;
        gm.variances.row(0) = var.cwiseMax(floor.transpose());
      }
      m.trans_(st, 0) = stay;
      m.trans_(st, 1) = 1.0 - stay;
    }
  }
  return m;
}

void TandemHmm::save(std::ostream& out) const {
  out.write("SGHM", 4);
  io::write_u32(out, 1);
  io::write_u32(out, static_cast<std::uint32_t>(dim_));
  io::write_u32(out, static_cast<std::uint32_t>(states_));
  io::write_f64(out, lm_weight);
  io::write_f64(out, penalty);
  write_matrix_body(out, Matrix(floor_.transpose()));
  for (const auto& g : gmms_) {
    write_matrix_body(out, Matrix(g.weights.transpose()));
    write_matrix_body(out, g.means);
    write_matrix_body(out, g.variances);
  }
  write_matrix_body(out, trans_);
}

TandemHmm TandemHmm::load(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "SGHM") throw DataError("not a tandem HMM model");
  if (io::read_u32(in) != 1) throw DataError("unsupported HMM model version");
  const auto dim = static_cast<int>(io::read_u32(in));
  const auto states = static_cast<int>(io::read_u32(in));
  if (dim < 1 || dim > 100000 || states < 1 || states > 100) throw DataError("HMM model header out of range");
  const double lmw = io::read_f64(in), pen = io::read_f64(in);
  const Matrix floor = read_matrix_body(in);
  if (floor.size() != dim) throw DataError("HMM variance floor has the wrong size");
  TandemHmm m(dim, states, to_vector(floor));
  m.lm_weight = lmw;
  m.penalty = pen;
  for (auto& g : m.gmms_) {
    g.weights = to_vector(read_matrix_body(in));
    g.means = read_matrix_body(in);
    g.variances = read_matrix_body(in);
    if (g.means.rows() != g.weights.size() || g.variances.rows() != g.weights.size() || g.means.cols() != dim ||
        g.variances.cols() != dim) {
      throw DataError("HMM mixture shapes are inconsistent");
    }
  }
  m.trans_ = read_matrix_body(in);
  if (m.trans_.rows() != m.num_states() || m.trans_.cols() != 2) throw DataError("HMM transition table has the wrong shape");
  return m;
}

void TandemHmm::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  save(out);
  if (!out) throw DataError("write failed: " + path);
}

TandemHmm TandemHmm::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return load(in);
}

bool TandemHmm::operator==(const TandemHmm& o) const {
  if (dim_ != o.dim_ || states_ != o.states_ || lm_weight != o.lm_weight || penalty != o.penalty) return false;
  if (floor_ != o.floor_ || trans_ != o.trans_ || gmms_.size() != o.gmms_.size()) return false;
  for (std::size_t i = 0; i < gmms_.size(); ++i) {
    const auto &a = gmms_[i], &b = o.gmms_[i];
    if (a.weights != b.weights || a.means != b.means || a.variances != b.variances) return false;
  }
  return true;
}

void split_mixtures(TandemHmm& model, int components) {
  if (components < 1) throw UsageError("mixture size must be positive");
  for (auto& g : model.gmms()) {
    while (g.size() < components) {
      int k = 0;
      for (int j = 1; j < g.size(); ++j) {
        if (g.weights(j) > g.weights(k)) k = j;
      }
      const int K = g.size();
      g.weights.conservativeResize(K + 1);
      g.means.conservativeResize(K + 1, Eigen::NoChange);
      g.variances.conservativeResize(K + 1, Eigen::NoChange);
      const Eigen::RowVectorXd offset = 0.2 * g.variances.row(k).cwiseSqrt();
      g.weights(k) *= 0.5;
      g.weights(K) = g.weights(k);
      g.variances.row(K) = g.variances.row(k);
      g.means.row(K) = g.means.row(k) - offset;
      g.means.row(k) += offset;
    }
  }
}

namespace {

// Forward-backward over the chain of states of the transcript's units.
struct Chain {
  std::vector<int> states;  // global state per chain position
  Matrix alpha, beta;       // T x N
  double log_p = kNegInf;
};

Chain chain_forward_backward(const TandemHmm& m, const Matrix& em, const std::vector<Label>& transcript) {
  Chain c;
  for (Label u : transcript) {
    if (u < 0 || u >= kNumLabels) throw DataError("transcript label out of range");
    for (int s = 0; s < m.states_per_unit(); ++s) c.states.push_back(m.state(u, s));
  }
  const int N = static_cast<int>(c.states.size());
  const auto T = static_cast<int>(em.rows());
  if (N == 0 || T < N) return c;
  Vector ls(N), la(N);
  for (int n = 0; n < N; ++n) {
    ls(n) = safe_log(m.transitions()(c.states[static_cast<std::size_t>(n)], 0));
    la(n) = safe_log(m.transitions()(c.states[static_cast<std::size_t>(n)], 1));
  }
  auto e = [&](int t, int n) { return em(t, c.states[static_cast<std::size_t>(n)]); };
  c.alpha = Matrix::Constant(T, N, kNegInf);
  c.beta = Matrix::Constant(T, N, kNegInf);
  c.alpha(0, 0) = e(0, 0);
  for (int t = 1; t < T; ++t) {
    for (int n = std::max(0, N - T + t); n <= std::min(t, N - 1); ++n) {
      double v = c.alpha(t - 1, n) + ls(n);
      if (n > 0) v = log_sum_exp(v, c.alpha(t - 1, n - 1) + la(n - 1));
      c.alpha(t, n) = v + e(t, n);
    }
  }
  c.log_p = c.alpha(T - 1, N - 1);
  c.beta(T - 1, N - 1) = 0.0;
  for (int t = T - 2; t >= 0; --t) {
    for (int n = std::max(0, N - T + t); n <= std::min(t, N - 1); ++n) {
      double v = ls(n) + e(t + 1, n) + c.beta(t + 1, n);
      if (n + 1 < N) v = log_sum_exp(v, la(n) + e(t + 1, n + 1) + c.beta(t + 1, n + 1));
      c.beta(t, n) = v;
    }
  }
  return c;
}

struct Accumulator {
  std::vector<Vector> occ;   // per state, per component
  std::vector<Matrix> sum;   // per state, K x D
  std::vector<Matrix> sq;
  Matrix trans;              // stay/advance counts

  explicit Accumulator(const TandemHmm& m) {
    for (const auto& g : m.gmms()) {
      occ.push_back(Vector::Zero(g.size()));
      sum.push_back(Matrix::Zero(g.size(), m.dim()));
      sq.push_back(Matrix::Zero(g.size(), m.dim()));
    }
    trans = Matrix::Zero(m.num_states(), 2);
  }
};

void accumulate(const TandemHmm& m, const Matrix& x, const Matrix& em, const Chain& c, Accumulator* acc) {
  const auto T = static_cast<int>(x.rows());
  const int N = static_cast<int>(c.states.size());
  for (int t = 0; t < T; ++t) {
    for (int n = 0; n < N; ++n) {
      const double lg = c.alpha(t, n) + c.beta(t, n) - c.log_p;
      if (lg == kNegInf) continue;
      const double gamma = std::exp(lg);
      const int g = c.states[static_cast<std::size_t>(n)];
      const DiagGmm& gm = m.gmms()[static_cast<std::size_t>(g)];
      const double total = em(t, g);
      for (int k = 0; k < gm.size(); ++k) {
        if (gm.weights(k) <= 0.0) continue;
        const double r = gm.size() == 1 ? gamma : gamma * std::exp(gm.component_log_likelihood(k, x.row(t)) - total);
        if (r == 0.0) continue;
        acc->occ[static_cast<std::size_t>(g)](k) += r;
        acc->sum[static_cast<std::size_t>(g)].row(k) += r * x.row(t);
        acc->sq[static_cast<std::size_t>(g)].row(k) += r * x.row(t).array().square().matrix();
      }
      if (t + 1 < T) {
        const double ls = safe_log(m.transitions()(g, 0)), la = safe_log(m.transitions()(g, 1));
        acc->trans(g, 0) += std::exp(c.alpha(t, n) + ls + em(t + 1, g) + c.beta(t + 1, n) - c.log_p);
        if (n + 1 < N) {
          const int g2 = c.states[static_cast<std::size_t>(n) + 1];
          acc->trans(g, 1) += std::exp(c.alpha(t, n) + la + em(t + 1, g2) + c.beta(t + 1, n + 1) - c.log_p);
        }
      }
    }
  }
}

void maximize(TandemHmm& m, const Accumulator& acc, const Eigen::RowVectorXd& global_mean,
              const Eigen::RowVectorXd& global_var, std::vector<std::string>* warnings) {
  const Eigen::RowVectorXd floor = m.variance_floor().transpose();
  for (int g = 0; g < m.num_states(); ++g) {
    DiagGmm& gm = m.gmms()[static_cast<std::size_t>(g)];
    const Vector& occ = acc.occ[static_cast<std::size_t>(g)];
    const double total = occ.sum();
    if (!(total > 0.0)) {
      const Label u = g / m.states_per_unit();
      if (warnings != nullptr) {
        warnings->push_back("state " + std::to_string(g % m.states_per_unit()) + " of " + std::string(LabelAlphabet::standard().symbol(u)) +
                            " has no occupancy; restarted flat");
      }
      gm.weights.setConstant(1.0 / gm.size());
      for (int k = 0; k < gm.size(); ++k) {
        gm.means.row(k) = global_mean;
        gm.variances.row(k) = global_var.cwiseMax(floor);
      }
      continue;
    }
    for (int k = 0; k < gm.size(); ++k) {
      gm.weights(k) = occ(k) / total;
      if (!(occ(k) > 0.0)) continue;
      const Eigen::RowVectorXd mu = acc.sum[static_cast<std::size_t>(g)].row(k) / occ(k);
      gm.means.row(k) = mu;
      gm.variances.row(k) =
          (acc.sq[static_cast<std::size_t>(g)].row(k) / occ(k) - mu.array().square().matrix()).cwiseMax(floor);
    }
    const double stay = acc.trans(g, 0), adv = acc.trans(g, 1);
    if (stay + adv > 0.0) {
      const double p = std::clamp(stay / (stay + adv), kMinTransition, 1.0 - kMinTransition);
      m.transitions()(g, 0) = p;
      m.transitions()(g, 1) = 1.0 - p;
    }
  }
}

}  // namespace

double sequence_log_likelihood(const TandemHmm& model, const Matrix& features, const std::vector<Label>& transcript) {
  return chain_forward_backward(model, model.emissions(features), transcript).log_p;
}

TandemHmm train_em(TandemHmm model, const std::vector<Matrix>& features,
                   const std::vector<std::vector<Label>>& transcripts, const EmConfig& config, EmReport* report) {
  if (features.size() != transcripts.size()) throw DataError("one transcript per feature sequence is required");
  if (config.iterations < 0 || config.schedule.empty()) throw UsageError("EM schedule is empty");
  for (const auto& t : transcripts) {
    if (t.empty()) throw DataError("EM transcripts must be nonempty");
  }
  EmReport local;
  EmReport& rep = report != nullptr ? *report : local;
  Matrix all;
  stack_rows(features, &all);
  const Eigen::RowVectorXd mean = all.colwise().mean();
  const Eigen::RowVectorXd var =
      ((all.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(std::max<Eigen::Index>(all.rows(), 1))).matrix();
  rep.skipped = 0;
  bool counted = false;
  for (int comps : config.schedule) {
    split_mixtures(model, comps);
    for (int it = 0; it < config.iterations; ++it) {
      Accumulator acc(model);
      double total = 0.0;
      int skipped = 0;
      for (std::size_t i = 0; i < features.size(); ++i) {
        const Matrix em = model.emissions(features[i]);
        const Chain c = chain_forward_backward(model, em, transcripts[i]);
        if (c.log_p == kNegInf) {
          ++skipped;
          continue;
        }
        total += c.log_p;
        accumulate(model, features[i], em, c, &acc);
      }
      if (!counted) {
        rep.skipped = skipped;
        counted = true;
      }
      if (!std::isfinite(total)) throw DataError("HMM training diverged");
      rep.log_likelihood.push_back(total);
      rep.components.push_back(comps);
      maximize(model, acc, mean, var, &rep.warnings);
    }
  }
  return model;
}

HmmDecodeResult viterbi_decode(const TandemHmm& m, const Matrix& em, const BigramLm* lm, double lm_weight,
                               double penalty) {
  const int S = m.states_per_unit(), G = m.num_states();
  const auto T = static_cast<int>(em.rows());
  if (em.cols() != G) throw DataError("emission table has the wrong width");
  if (T < 3 * S) throw DataError("sequence too short to decode");
  Vector ls(G), la(G);
  for (int g = 0; g < G; ++g) {
    ls(g) = safe_log(m.transitions()(g, 0));
    la(g) = safe_log(m.transitions()(g, 1));
  }
  Matrix unit_trans = Matrix::Constant(kNumLabels, kNumLabels, kNegInf);
  for (Label p = 0; p < kNumLabels; ++p) {
    for (Label y = 0; y < kNumLabels; ++y) {
      if (unit_edge_allowed(p, y)) unit_trans(p, y) = la(m.state(p, S - 1)) + lm_term(lm, lm_weight, p, y) + penalty;
    }
  }
  Matrix delta = Matrix::Constant(T, G, kNegInf);
  // back: previous global state * 2 + 1 when the step entered a new unit.
  std::vector<int> back(static_cast<std::size_t>(T) * G, -1);
  delta(0, m.state(kBos, 0)) = em(0, m.state(kBos, 0));
  for (int t = 1; t < T; ++t) {
    for (Label u = 0; u < kNumLabels; ++u) {
      for (int s = 0; s < S; ++s) {
        const int g = m.state(u, s);
        double best = delta(t - 1, g) + ls(g);
        int arg = g * 2;
        if (s > 0) {
          const double v = delta(t - 1, g - 1) + la(g - 1);
          if (v > best) {
            best = v;
            arg = (g - 1) * 2;
          }
        } else {
          for (Label p = 0; p < kNumLabels; ++p) {
            const double v = delta(t - 1, m.state(p, S - 1)) + unit_trans(p, u);
            if (v > best) {
              best = v;
              arg = m.state(p, S - 1) * 2 + 1;
            }
          }
        }
        if (best == kNegInf) continue;
        delta(t, g) = best + em(t, g);
        back[static_cast<std::size_t>(t) * G + g] = arg;
      }
    }
  }
  const int end = m.state(kEos, S - 1);
  if (delta(T - 1, end) == kNegInf) throw DataError("no decoding path has finite score");
  std::vector<Label> labels;
  std::vector<int> starts;
  int g = end;
  for (int t = T - 1; t >= 0; --t) {
    const int code = t > 0 ? back[static_cast<std::size_t>(t) * G + g] : 1;
    if (code % 2 == 1) {
      labels.push_back(g / S);
      starts.push_back(t);
    }
    if (t > 0) g = code / 2;
  }
  std::reverse(labels.begin(), labels.end());
  std::reverse(starts.begin(), starts.end());
  starts.push_back(T);
  return {LabeledSegmentation(std::move(labels), std::move(starts)), delta(T - 1, end)};
}

Alignment forced_align(const TandemHmm& m, const Matrix& em, const std::vector<Label>& transcript) {
  if (em.cols() != m.num_states()) throw DataError("emission table has the wrong width");
  std::vector<Label> units{kBos};
  for (Label l : transcript) {
    if (l < 0 || l >= kNumLetters) throw DataError("forced alignment transcripts hold letters only");
    units.push_back(l);
  }
  units.push_back(kEos);
  const int S = m.states_per_unit();
  const int N = static_cast<int>(units.size()) * S;
  const auto T = static_cast<int>(em.rows());
  if (T < N) throw DataError("transcript too long");
  auto gs = [&](int n) { return m.state(units[static_cast<std::size_t>(n / S)], n % S); };
  Matrix delta = Matrix::Constant(T, N, kNegInf);
  std::vector<char> advanced(static_cast<std::size_t>(T) * N, 0);
  delta(0, 0) = em(0, gs(0));
  for (int t = 1; t < T; ++t) {
    for (int n = std::max(0, N - T + t); n <= std::min(t, N - 1); ++n) {
      double best = delta(t - 1, n) + safe_log(m.transitions()(gs(n), 0));
      if (n > 0) {
        const double v = delta(t - 1, n - 1) + safe_log(m.transitions()(gs(n - 1), 1));
        if (v > best) {
          best = v;
          advanced[static_cast<std::size_t>(t) * N + n] = 1;
        }
      }
      delta(t, n) = best + em(t, gs(n));
    }
  }
  if (delta(T - 1, N - 1) == kNegInf) throw DataError("no alignment path has finite score");
  Alignment a;
  a.score = delta(T - 1, N - 1);
  a.frame_labels.assign(static_cast<std::size_t>(T), kBos);
  std::vector<int> bounds(units.size() + 1, 0);
  bounds.back() = T;
  int n = N - 1;
  for (int t = T - 1; t >= 0; --t) {
    a.frame_labels[static_cast<std::size_t>(t)] = units[static_cast<std::size_t>(n / S)];
    if (t > 0 && advanced[static_cast<std::size_t>(t) * N + n]) {
      if (n % S == 0) bounds[static_cast<std::size_t>(n / S)] = t;
      --n;
    }
  }
  a.segmentation = LabeledSegmentation(units, bounds);
  return a;
}

SegmentScores hmm_segment_scores(const TandemHmm& m, const Matrix& em, const BigramLm* lm, double lm_weight,
                                 double penalty, int max_len) {
  if (max_len < 1) throw UsageError("maximum segment length must be positive");
  const int S = m.states_per_unit();
  const auto T = static_cast<int>(em.rows());
  if (em.cols() != m.num_states()) throw DataError("emission table has the wrong width");
  if (T < 1) throw DataError("empty emission table");
  SegmentScores s;
  s.num_frames = T;
  s.max_len = std::min(max_len, T);
  for (Label l = 0; l < kNumLabels; ++l) s.labels.push_back(l);
  const int L = s.max_len;
  s.unary = Matrix::Constant(static_cast<Eigen::Index>(T) * L, kNumLabels, kNegInf);
  Vector v(S);
  for (Label u = 0; u < kNumLabels; ++u) {
    const double exit = u == kEos ? 0.0 : safe_log(m.transitions()(m.state(u, S - 1), 1));
    for (int q = 0; q < T; ++q) {
      if (u == kBos && q > 0) break;
      v.setConstant(kNegInf);
      for (int t = q; t < std::min(T, q + L); ++t) {
        if (t == q) {
          v(0) = em(t, m.state(u, 0));
        } else {
          for (int st = S - 1; st >= 0; --st) {
            const int g = m.state(u, st);
            double b = v(st) + safe_log(m.transitions()(g, 0));
            if (st > 0) b = std::max(b, v(st - 1) + safe_log(m.transitions()(g - 1, 1)));
            v(st) = b + em(t, g);
          }
        }
        const bool at_end = t + 1 == T;
        if ((u == kEos) != at_end) continue;
        s.unary(s.row(q, t - q + 1), u) = v(S - 1) + exit;
      }
    }
  }
  Matrix trans = Matrix::Constant(kNumLabels + 1, kNumLabels, kNegInf);
  trans(s.start(), kBos) = 0.0;
  for (Label p = 0; p < kNumLabels; ++p) {
    for (Label y = 0; y < kNumLabels; ++y) {
      if (unit_edge_allowed(p, y)) trans(p, y) = lm_term(lm, lm_weight, p, y) + penalty;
    }
  }
  s.trans = constrained_transitions(s.labels, trans);
  return s;
}

HmmNbest nbest_lattice(const TandemHmm& model, const Matrix& em, const BigramLm* lm, int n, int max_len) {
  if (n < 1) throw UsageError("N-best size must be at least 1");
  const SegmentScores s = hmm_segment_scores(model, em, lm, model.lm_weight, model.penalty, max_len);
  HmmNbest out;
  out.paths = kbest(s, n);
  if (out.paths.empty()) throw DataError("no hypothesis fits within the maximum segment length");
  std::vector<LabeledSegmentation> paths;
  std::vector<std::vector<double>> scores;
  for (const auto& p : out.paths) {
    paths.push_back(p.path);
    std::vector<double> es;
    for (int i = 0; i < p.path.size(); ++i) {
      es.push_back(s.unary(s.row(p.path.start(i), p.path.end(i) - p.path.start(i)), p.path.labels()[static_cast<std::size_t>(i)]));
    }
    scores.push_back(std::move(es));
  }
  out.lattice = Lattice::from_paths(paths, scores);
  return out;
}

}  // namespace segscribe
