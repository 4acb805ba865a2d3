#include "segscribe/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <tuple>

#include "segscribe/error.hpp"
#include "segscribe/io.hpp"

namespace segscribe {

namespace {

constexpr char kModelMagic[4] = {'S', 'G', 'M', 'P'};
constexpr char kBankMagic[4] = {'S', 'G', 'M', 'B'};
constexpr std::uint32_t kModelVersion = 1;

using Block = std::tuple<double*, long, bool>;

std::vector<Block> blocks_of(Mlp& m, const TrainableSet& set) {
  std::vector<Block> out;
  m.for_each_block(set, [&](double* d, long n, bool w) { out.emplace_back(d, n, w); });
  return out;
}

Mlp zeros_like(const Mlp& m) {
  Mlp z = m;
  z.for_each_block(m.all_trainable(), [](double* d, long n, bool) { std::fill(d, d + n, 0.0); });
  return z;
}

void softmax_rows(Matrix& z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    z.row(r) = (z.row(r).array() - m).exp();
    z.row(r) /= z.row(r).sum();
  }
}

Matrix apply_input_map(const Mlp& m, const Matrix& raw) {
  if (!m.has_input_map()) return raw;
  const int D = m.static_dim();
  Matrix x(raw.rows(), raw.cols());
  for (int k = 0; k < m.window(); ++k) {
    x.middleCols(k * D, D) = (raw.middleCols(k * D, D) * m.input_map().transpose()).rowwise() +
                             m.input_shift().transpose();
  }
  return x;
}

void check_windows(const Mlp& m, const Matrix& windows) {
  if (windows.cols() != m.input_dim()) throw DataError("classifier input dimension mismatch");
}

}  // namespace

Matrix window_frames(const Matrix& frames, int w) {
  if (w < 1 || w % 2 == 0) throw UsageError("window width must be odd and positive");
  const auto T = frames.rows(), D = frames.cols();
  const int half = w / 2;
  Matrix out(T, w * D);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (int k = 0; k < w; ++k) {
      const Eigen::Index src = std::clamp<Eigen::Index>(t + k - half, 0, T - 1);
      out.block(t, k * D, 1, D) = frames.row(src);
    }
  }
  return out;
}

TrainableSet TrainableSet::all(int num_layers, bool input_map, bool lon) {
  TrainableSet s;
  s.input_map = input_map;
  s.layers.assign(static_cast<std::size_t>(num_layers), true);
  s.lon = lon;
  return s;
}

Mlp::Mlp(int window, int static_dim, const std::vector<int>& hidden, int classes, std::uint64_t seed,
         std::string head)
    : window_(window), static_dim_(static_dim), head_(std::move(head)) {
  if (window < 1 || window % 2 == 0) throw UsageError("window width must be odd and positive");
  if (static_dim < 1 || classes < 2) throw UsageError("classifier needs a positive input and at least two classes");
  std::mt19937_64 rng(seed);
  int in = input_dim();
  std::vector<int> sizes = hidden;
  sizes.push_back(classes);
  for (int out : sizes) {
    if (out < 1) throw UsageError("layer sizes must be positive");
    DenseLayer l;
    l.weight.resize(out, in);
    l.bias = Vector::Zero(out);
    std::uniform_real_distribution<double> u(-std::sqrt(6.0 / in), std::sqrt(6.0 / in));
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = u(rng);
    layers_.push_back(std::move(l));
    in = out;
  }
}

int Mlp::num_classes() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows()); }

void Mlp::enable_input_map() {
  if (has_input_map_) return;
  has_input_map_ = true;
  input_map_ = Matrix::Identity(static_dim_, static_dim_);
  input_shift_ = Vector::Zero(static_dim_);
}

void Mlp::enable_lon() {
  if (has_lon_) return;
  has_lon_ = true;
  const int V = num_classes();
  lon_.weight = Matrix::Identity(V, V);
  lon_.bias = Vector::Zero(V);
}

long Mlp::parameter_count(const TrainableSet& set) const {
  long n = 0;
  const_cast<Mlp*>(this)->for_each_block(set, [&](double*, long size, bool) { n += size; });
  return n;
}

void Mlp::for_each_block(const TrainableSet& set, const std::function<void(double*, long, bool)>& f) {
  if (set.input_map && has_input_map_) {
    f(input_map_.data(), input_map_.size(), false);
    f(input_shift_.data(), input_shift_.size(), false);
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (l < set.layers.size() && set.layers[l]) {
      f(layers_[l].weight.data(), layers_[l].weight.size(), true);
      f(layers_[l].bias.data(), layers_[l].bias.size(), false);
    }
  }
  if (set.lon && has_lon_) {
    f(lon_.weight.data(), lon_.weight.size(), true);
    f(lon_.bias.data(), lon_.bias.size(), false);
  }
}

Matrix Mlp::forward(const Matrix& windows) const {
  check_windows(*this, windows);
  Matrix h = apply_input_map(*this, windows);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix a = (h * layers_[l].weight.transpose()).rowwise() + layers_[l].bias.transpose();
    if (l + 1 < layers_.size()) a = a.cwiseMax(0.0);
    h = std::move(a);
  }
  if (has_lon_) h = Matrix((h * lon_.weight.transpose()).rowwise() + lon_.bias.transpose());
  softmax_rows(h);
  return h;
}

PosteriorStream Mlp::posteriors(const FrameSequence& seq) const {
  if (seq.dim() != static_dim_) throw DataError("classifier input dimension mismatch");
  return {forward(window_frames(seq, window_)), head_};
}

bool Mlp::operator==(const Mlp& o) const {
  if (window_ != o.window_ || static_dim_ != o.static_dim_ || head_ != o.head_ ||
      has_input_map_ != o.has_input_map_ || has_lon_ != o.has_lon_ || layers_.size() != o.layers_.size()) {
    return false;
  }
  auto same = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
  };
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (!same(layers_[l].weight, o.layers_[l].weight) || !same(layers_[l].bias, o.layers_[l].bias)) return false;
  }
  if (has_input_map_ && (!same(input_map_, o.input_map_) || !same(input_shift_, o.input_shift_))) return false;
  if (has_lon_ && (!same(lon_.weight, o.lon_.weight) || !same(lon_.bias, o.lon_.bias))) return false;
  return true;
}

void Mlp::save(std::ostream& out) const {
  out.write(kModelMagic, 4);
  io::write_u32(out, kModelVersion);
  io::write_string(out, head_);
  io::write_u32(out, static_cast<std::uint32_t>(window_));
  io::write_u32(out, static_cast<std::uint32_t>(static_dim_));
  io::write_u32(out, (has_input_map_ ? 1u : 0u) | (has_lon_ ? 2u : 0u));
  io::write_u32(out, static_cast<std::uint32_t>(layers_.size()));
  for (const auto& l : layers_) {
    io::write_u32(out, static_cast<std::uint32_t>(l.weight.rows()));
    io::write_u32(out, static_cast<std::uint32_t>(l.weight.cols()));
  }
  const_cast<Mlp*>(this)->for_each_block(all_trainable(), [&](double* d, long n, bool) {
    for (long i = 0; i < n; ++i) io::write_f32(out, static_cast<float>(d[i]));
  });
  if (!out) throw DataError("failed to write classifier");
}

Mlp Mlp::load(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kModelMagic, 4)) {
    throw DataError("not a classifier model");
  }
  if (io::read_u32(in) != kModelVersion) throw DataError("unsupported classifier model version");
  Mlp m;
  m.head_ = io::read_string(in);
  m.window_ = static_cast<int>(io::read_u32(in));
  m.static_dim_ = static_cast<int>(io::read_u32(in));
  const auto flags = io::read_u32(in);
  const auto n = io::read_u32(in);
  if (m.window_ < 1 || m.window_ % 2 == 0 || m.static_dim_ < 1 || n < 1 || n > 64) {
    throw DataError("bad classifier header");
  }
  int expected_in = m.input_dim();
  for (std::uint32_t l = 0; l < n; ++l) {
    const auto rows = static_cast<int>(io::read_u32(in)), cols = static_cast<int>(io::read_u32(in));
    if (cols != expected_in || rows < 1 || rows > (1 << 20)) throw DataError("classifier layer shapes do not chain");
    m.layers_.push_back({Matrix(rows, cols), Vector(rows)});
    expected_in = rows;
  }
  if (flags & 1u) m.enable_input_map();
  if (flags & 2u) m.enable_lon();
  m.for_each_block(m.all_trainable(), [&](double* d, long cnt, bool) {
    for (long i = 0; i < cnt; ++i) d[i] = io::read_f32(in);
  });
  bool finite = true;
  m.for_each_block(m.all_trainable(), [&](double* d, long cnt, bool) {
    for (long i = 0; i < cnt; ++i) finite = finite && std::isfinite(d[i]);
  });
  if (!finite) throw DataError("classifier parameters are not finite");
  return m;
}

double mlp_loss_and_gradient(const Mlp& model, const Matrix& windows, const std::vector<int>& labels,
                             double weight_decay, const TrainableSet& set, Mlp* gradient, double dropout,
                             std::uint64_t rng_seed) {
  check_windows(model, windows);
  const auto B = windows.rows();
  if (static_cast<Eigen::Index>(labels.size()) != B || B == 0) throw DataError("label count mismatch");
  const auto& layers = model.layers();
  const std::size_t L = layers.size();
  const int V = model.num_classes();
  for (int y : labels) {
    if (y < 0 || y >= V) throw DataError("label out of range");
  }

  std::mt19937_64 rng(rng_seed);
  std::bernoulli_distribution keep(1.0 - dropout);
  const double scale = dropout > 0.0 ? 1.0 / (1.0 - dropout) : 1.0;

  // h[l] is the input of layer l; masks[l] scales the output of hidden layer l.
  std::vector<Matrix> h(L);
  std::vector<Matrix> pre(L);
  std::vector<Matrix> masks(L);
  h[0] = apply_input_map(model, windows);
  for (std::size_t l = 0; l < L; ++l) {
    pre[l] = (h[l] * layers[l].weight.transpose()).rowwise() + layers[l].bias.transpose();
    if (l + 1 < L) {
      Matrix act = pre[l].cwiseMax(0.0);
      if (dropout > 0.0) {
        masks[l].resize(act.rows(), act.cols());
        for (Eigen::Index i = 0; i < act.size(); ++i) masks[l].data()[i] = keep(rng) ? scale : 0.0;
        act = act.cwiseProduct(masks[l]);
      }
      h[l + 1] = std::move(act);
    }
  }
  Matrix logits = pre[L - 1];
  if (model.has_lon()) logits = (pre[L - 1] * model.lon().weight.transpose()).rowwise() + model.lon().bias.transpose();
  Matrix p = logits;
  softmax_rows(p);

  double loss = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) loss -= std::log(std::max(p(i, labels[static_cast<std::size_t>(i)]), 1e-300));
  loss /= static_cast<double>(B);
  auto decay = [&](const Matrix& w) { return 0.5 * weight_decay * w.squaredNorm(); };
  for (std::size_t l = 0; l < L; ++l) {
    if (l < set.layers.size() && set.layers[l]) loss += decay(layers[l].weight);
  }
  if (set.lon && model.has_lon()) loss += decay(model.lon().weight);
  if (!gradient) return loss;

  *gradient = zeros_like(model);
  Matrix d = p;
  for (Eigen::Index i = 0; i < B; ++i) d(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  d /= static_cast<double>(B);
  if (model.has_lon()) {
    if (set.lon) {
      gradient->lon().weight = d.transpose() * pre[L - 1] + weight_decay * model.lon().weight;
      gradient->lon().bias = d.colwise().sum().transpose();
    }
    d = d * model.lon().weight;
  }
  // Lowest block that needs a gradient bounds the backward pass.
  int lowest = static_cast<int>(L);
  for (std::size_t l = 0; l < L; ++l) {
    if (l < set.layers.size() && set.layers[l]) {
      lowest = static_cast<int>(l);
      break;
    }
  }
  const bool need_input = set.input_map && model.has_input_map();
  if (need_input) lowest = -1;
  for (int l = static_cast<int>(L) - 1; l >= 0; --l) {
    const auto ul = static_cast<std::size_t>(l);
    if (ul < set.layers.size() && set.layers[ul]) {
      gradient->layers()[ul].weight = d.transpose() * h[ul] + weight_decay * layers[ul].weight;
      gradient->layers()[ul].bias = d.colwise().sum().transpose();
    }
    if (l <= lowest) break;
    const Matrix dh = d * layers[ul].weight;
    if (l == 0) {
      const int D = model.static_dim();
      for (int k = 0; k < model.window(); ++k) {
        gradient->input_map() += dh.middleCols(k * D, D).transpose() * windows.middleCols(k * D, D);
        gradient->input_shift() += dh.middleCols(k * D, D).colwise().sum().transpose();
      }
      break;
    }
    const auto prev = ul - 1;
    d = dh.cwiseProduct((pre[prev].array() > 0.0).cast<double>().matrix());
    if (dropout > 0.0) d = d.cwiseProduct(masks[prev]);
  }
  return loss;
}

void FrameDataset::add(const Matrix& frames, const std::vector<int>& labels) {
  if (frames.rows() == 0) throw DataError("empty sequence");
  if (static_cast<Eigen::Index>(labels.size()) != frames.rows()) throw DataError("frame label count mismatch");
  if (static_dim_ == 0) static_dim_ = static_cast<int>(frames.cols());
  if (frames.cols() != static_dim_) throw DataError("frame dimension mismatch");
  const auto start = frames_.rows();
  frames_.conservativeResize(start + frames.rows(), static_dim_);
  frames_.bottomRows(frames.rows()) = frames;
  seq_start_.push_back(static_cast<int>(start));
  seq_length_.push_back(static_cast<int>(frames.rows()));
  for (Eigen::Index t = 0; t < frames.rows(); ++t) sample_seq_.push_back(num_sequences() - 1);
  labels_.insert(labels_.end(), labels.begin(), labels.end());
}

Matrix FrameDataset::windows(const std::vector<int>& samples, int w) const {
  if (w < 1 || w % 2 == 0) throw UsageError("window width must be odd and positive");
  const int D = static_dim_, half = w / 2;
  Matrix out(static_cast<Eigen::Index>(samples.size()), w * D);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int idx = samples[i];
    const int s = sample_seq_[static_cast<std::size_t>(idx)];
    const int start = seq_start_[static_cast<std::size_t>(s)], len = seq_length_[static_cast<std::size_t>(s)];
    const int t = idx - start;
    for (int k = 0; k < w; ++k) {
      const int src = start + std::clamp(t + k - half, 0, len - 1);
      out.block(static_cast<Eigen::Index>(i), k * D, 1, D) = frames_.row(src);
    }
  }
  return out;
}

Matrix FrameDataset::all_windows(int w) const {
  std::vector<int> idx(static_cast<std::size_t>(size()));
  for (int i = 0; i < size(); ++i) idx[static_cast<std::size_t>(i)] = i;
  return windows(idx, w);
}

FrameDataset FrameDataset::relabeled(const std::function<int(int)>& map) const {
  FrameDataset out = *this;
  for (auto& l : out.labels_) l = map(l);
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw UsageError("epochs must be at least 1");
  if (batch_size < 1) throw UsageError("batch size must be positive");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw UsageError("learning rate must lie in (0, 1]");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw UsageError("momentum must lie in [0, 1)");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("dropout must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw UsageError("weight decay must be nonnegative");
  if (window < 1 || window % 2 == 0) throw UsageError("window width must be odd and positive");
}

int argmax_row(const Matrix& m, Eigen::Index row) {
  int best = 0;
  for (Eigen::Index c = 1; c < m.cols(); ++c) {
    if (m(row, c) > m(row, best)) best = static_cast<int>(c);
  }
  return best;
}

double accuracy(const Mlp& model, const FrameDataset& data) {
  if (data.empty()) return 0.0;
  constexpr int kChunk = 2048;
  long correct = 0;
  std::vector<int> idx;
  for (int start = 0; start < data.size(); start += kChunk) {
    idx.clear();
    for (int i = start; i < std::min(data.size(), start + kChunk); ++i) idx.push_back(i);
    const Matrix p = model.forward(data.windows(idx, model.window()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      correct += argmax_row(p, static_cast<Eigen::Index>(i)) == data.labels()[static_cast<std::size_t>(idx[i])];
    }
  }
  return static_cast<double>(correct) / data.size();
}

Mlp sgd_train(Mlp model, const TrainableSet& set, const FrameDataset& train, const FrameDataset& heldout,
              const TrainConfig& config, TrainReport* report) {
  if (config.epochs < 0) throw UsageError("epochs must be nonnegative");
  if (train.empty()) throw DataError("empty training set");
  const FrameDataset& select = heldout.empty() ? train : heldout;
  Mlp velocity = zeros_like(model);
  Mlp grad = zeros_like(model);
  auto params = blocks_of(model, set);
  auto vel = blocks_of(velocity, set);

  TrainReport rep;
  double best = accuracy(model, select);
  rep.heldout_accuracy.push_back(best);
  Mlp best_model = model;
  double lr = config.learning_rate;

  std::mt19937_64 rng(config.seed);
  std::vector<int> order(static_cast<std::size_t>(train.size()));
  for (int i = 0; i < train.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::vector<int> batch, labels;
  std::uint64_t step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int s = 0; s < train.size(); s += config.batch_size) {
      batch.assign(order.begin() + s, order.begin() + std::min(train.size(), s + config.batch_size));
      labels.clear();
      for (int i : batch) labels.push_back(train.labels()[static_cast<std::size_t>(i)]);
      const double loss = mlp_loss_and_gradient(model, train.windows(batch, model.window()), labels,
                                                config.weight_decay, set, &grad, config.dropout,
                                                config.seed ^ (0x9e37ull * ++step));
      if (!std::isfinite(loss)) {
        throw Error("non-finite training loss at epoch " + std::to_string(epoch) + ", batch starting at sample " +
                    std::to_string(s) + " (learning rate " + std::to_string(lr) + ")");
      }
      auto gblocks = blocks_of(grad, set);
      for (std::size_t b = 0; b < params.size(); ++b) {
        double* p = std::get<0>(params[b]);
        double* v = std::get<0>(vel[b]);
        const double* g = std::get<0>(gblocks[b]);
        const long n = std::get<1>(params[b]);
        for (long i = 0; i < n; ++i) {
          v[i] = config.momentum * v[i] - lr * g[i];
          p[i] += v[i];
        }
      }
    }
    const double acc = accuracy(model, select);
    rep.heldout_accuracy.push_back(acc);
    if (acc < best + config.halving_threshold) lr *= 0.5;
    if (acc > best) {
      best = acc;
      best_model = model;
      rep.best_epoch = epoch;
    }
  }
  if (report) *report = rep;
  return best_model;
}

Mlp train_mlp(const FrameDataset& train, const FrameDataset& heldout, int classes, const TrainConfig& config,
              TrainReport* report, const std::string& head) {
  config.validate();
  std::vector<int> seen(static_cast<std::size_t>(classes), 0);
  for (int y : train.labels()) {
    if (y < 0 || y >= classes) throw DataError("label out of range");
    seen[static_cast<std::size_t>(y)] = 1;
  }
  for (int c = 0; c < classes; ++c) {
    if (!seen[static_cast<std::size_t>(c)]) throw DataError("class " + std::to_string(c) + " has no training example");
  }
  Mlp init(config.window, train.static_dim(), config.hidden, classes, config.seed, head);
  const TrainableSet set = init.all_trainable();
  return sgd_train(std::move(init), set, train, heldout, config, report);
}

const char* adapt_method_name(AdaptMethod m) {
  switch (m) {
    case AdaptMethod::kLinUp:
      return "lin_up";
    case AdaptMethod::kLinLon:
      return "lin_lon";
    case AdaptMethod::kFineTune:
      return "fine_tune";
  }
  return "?";
}

AdaptMethod parse_adapt_method(const std::string& name) {
  if (name == "lin_up" || name == "LIN_UP") return AdaptMethod::kLinUp;
  if (name == "lin_lon" || name == "LIN_LON") return AdaptMethod::kLinLon;
  if (name == "fine_tune" || name == "FINE_TUNE" || name == "ft") return AdaptMethod::kFineTune;
  throw UsageError("unknown adaptation method: " + name);
}

TrainableSet adapt_trainable(const Mlp& model, AdaptMethod method) {
  TrainableSet s;
  s.layers.assign(static_cast<std::size_t>(model.num_layers()), false);
  switch (method) {
    case AdaptMethod::kLinUp:
      s.input_map = true;
      s.layers.back() = true;
      break;
    case AdaptMethod::kLinLon:
      s.input_map = true;
      s.lon = true;
      break;
    case AdaptMethod::kFineTune:
      s = model.all_trainable();
      break;
  }
  return s;
}

Mlp adapt(const Mlp& base, const FrameDataset& data, const AdaptConfig& config, TrainReport* report) {
  if (data.empty()) throw DataError("empty adaptation set");
  Mlp model = base;
  if (config.method != AdaptMethod::kFineTune) model.enable_input_map();
  if (config.method == AdaptMethod::kLinLon) model.enable_lon();
  TrainConfig tc;
  tc.window = model.window();
  tc.batch_size = config.batch_size;
  tc.epochs = config.epochs;
  tc.learning_rate = config.learning_rate;
  tc.momentum = config.momentum;
  tc.weight_decay = config.weight_decay;
  tc.dropout = config.dropout;
  tc.seed = config.seed;
  const TrainableSet set = adapt_trainable(model, config.method);
  return sgd_train(std::move(model), set, data, data, tc, report);
}

double frame_error(const PosteriorStream& post, const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != post.num_frames()) throw DataError("frame label count mismatch");
  if (labels.empty()) return 0.0;
  long wrong = 0;
  for (int t = 0; t < post.num_frames(); ++t) wrong += argmax_row(post.probs(), t) != labels[static_cast<std::size_t>(t)];
  return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

double frame_error(const Mlp& model, const FrameSequence& seq, const std::vector<int>& labels) {
  return frame_error(model.posteriors(seq), labels);
}

double frame_error(const Mlp& model, const FrameDataset& data) { return 1.0 - accuracy(model, data); }

void FrameClassifierBank::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(kBankMagic, 4);
  io::write_u32(out, kModelVersion);
  io::write_u32(out, static_cast<std::uint32_t>(heads.size()));
  for (const auto& h : heads) h.save(out);
}

FrameClassifierBank FrameClassifierBank::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kBankMagic, 4)) {
    throw DataError(path + ": not a classifier bank");
  }
  if (io::read_u32(in) != kModelVersion) throw DataError(path + ": unsupported classifier bank version");
  const auto n = io::read_u32(in);
  if (n < 1 || n > 64) throw DataError(path + ": bad head count");
  FrameClassifierBank bank;
  for (std::uint32_t i = 0; i < n; ++i) bank.heads.push_back(Mlp::load(in));
  for (const auto& h : bank.heads) {
    if (h.input_dim() != bank.heads[0].input_dim()) throw DataError(path + ": heads disagree on input");
  }
  return bank;
}

std::vector<int> phonological_labels(const LabelAlphabet& alphabet, int feature, const std::vector<int>& letter_labels) {
  std::vector<int> out;
  out.reserve(letter_labels.size());
  for (int l : letter_labels) out.push_back(alphabet.phonological_value(feature, l));
  return out;
}

}  // namespace segscribe
