#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "segscribe/alphabet.hpp"
#include "segscribe/types.hpp"

namespace segscribe {

/// Row t concatenates frames t - w/2 .. t + w/2, replicating the edge frames.
/// Throws UsageError unless w is odd and positive.
Matrix window_frames(const Matrix& frames, int w);
inline Matrix window_frames(const FrameSequence& seq, int w) { return window_frames(seq.frames(), w); }

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

/// Which parameter blocks an optimizer may update.
struct TrainableSet {
  bool input_map = false;
  std::vector<bool> layers;  // one flag per dense layer
  bool lon = false;

  static TrainableSet all(int num_layers, bool input_map, bool lon);
};

/// Feed-forward classifier on windowed static frames.
///
/// Optional pieces used by adaptation: a per-frame affine input map shared
/// across window positions, and an extra square output layer applied to the
/// logits of the last dense layer.
class Mlp {
 public:
  Mlp() = default;
  /// Uniform init in +-sqrt(6 / fan_in), seeded.
  Mlp(int window, int static_dim, const std::vector<int>& hidden, int classes, std::uint64_t seed,
      std::string head = "letter");

  int window() const { return window_; }
  int static_dim() const { return static_dim_; }
  int input_dim() const { return window_ * static_dim_; }
  int num_classes() const;
  int num_layers() const { return static_cast<int>(layers_.size()); }
  const std::string& head() const { return head_; }
  void set_head(std::string head) { head_ = std::move(head); }

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  bool has_input_map() const { return has_input_map_; }
  const Matrix& input_map() const { return input_map_; }
  const Vector& input_shift() const { return input_shift_; }
  Matrix& input_map() { return input_map_; }
  Vector& input_shift() { return input_shift_; }
  /// Adds an identity input map when absent.
  void enable_input_map();

  bool has_lon() const { return has_lon_; }
  const DenseLayer& lon() const { return lon_; }
  DenseLayer& lon() { return lon_; }
  /// Adds an identity output layer on top of the logits when absent.
  void enable_lon();

  TrainableSet all_trainable() const { return TrainableSet::all(num_layers(), has_input_map_, has_lon_); }
  long parameter_count(const TrainableSet& set) const;

  /// Visits every parameter block of `set` in a fixed order. `weight` is
  /// true for blocks subject to weight decay.
  void for_each_block(const TrainableSet& set, const std::function<void(double* data, long size, bool weight)>& f);

  /// Softmax outputs for raw windowed rows (B x w*D).
  Matrix forward(const Matrix& windows) const;
  PosteriorStream posteriors(const FrameSequence& seq) const;

  void save(std::ostream& out) const;
  static Mlp load(std::istream& in);

  bool operator==(const Mlp& other) const;

 private:
  friend struct MlpBackprop;
  int window_ = 1;
  int static_dim_ = 0;
  std::string head_ = "letter";
  bool has_input_map_ = false;
  Matrix input_map_;
  Vector input_shift_;
  std::vector<DenseLayer> layers_;
  bool has_lon_ = false;
  DenseLayer lon_;
};

/// Mean cross-entropy plus (weight_decay / 2) * sum of squared decayed
/// weights in `set`, and its gradient laid out like `model`. Dropout with
/// `dropout` > 0 uses masks drawn from `rng_seed`.
double mlp_loss_and_gradient(const Mlp& model, const Matrix& windows, const std::vector<int>& labels,
                             double weight_decay, const TrainableSet& set, Mlp* gradient, double dropout = 0.0,
                             std::uint64_t rng_seed = 0);

/// Stacked frames of many sequences with one label per frame; windows are
/// built on demand.
class FrameDataset {
 public:
  FrameDataset() = default;
  explicit FrameDataset(int static_dim) : static_dim_(static_dim) {}

  void add(const Matrix& frames, const std::vector<int>& labels);
  void add(const FrameSequence& seq, const std::vector<int>& labels) { add(seq.frames(), labels); }

  int size() const { return static_cast<int>(labels_.size()); }
  bool empty() const { return labels_.empty(); }
  int static_dim() const { return static_dim_; }
  const std::vector<int>& labels() const { return labels_; }
  int num_sequences() const { return static_cast<int>(seq_start_.size()); }

  /// Windowed rows of the given samples.
  Matrix windows(const std::vector<int>& samples, int w) const;
  Matrix all_windows(int w) const;
  /// Copy with every label passed through `map`.
  FrameDataset relabeled(const std::function<int(int)>& map) const;

 private:
  int static_dim_ = 0;
  Matrix frames_;
  std::vector<int> labels_;
  std::vector<int> sample_seq_;
  std::vector<int> seq_start_;
  std::vector<int> seq_length_;
};

struct TrainConfig {
  std::vector<int> hidden{256, 256};
  int window = 5;
  int batch_size = 100;
  int epochs = 30;
  double learning_rate = 0.01;
  double momentum = 0.95;
  double weight_decay = 1e-5;
  double dropout = 0.5;
  double halving_threshold = 0.001;  // absolute held-out accuracy gain
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainReport {
  std::vector<double> heldout_accuracy;  // per epoch, index 0 = before training
  int best_epoch = 0;
};

/// Accuracy of argmax predictions, ties toward the smaller class index.
double accuracy(const Mlp& model, const FrameDataset& data);

/// SGD with momentum, inverted dropout and L2 decay from `init`. Returns the
/// snapshot with the best held-out accuracy; the learning rate halves after
/// an epoch that fails to beat the best accuracy by the threshold. When
/// `heldout` is empty the training set is used for selection.
Mlp sgd_train(Mlp init, const TrainableSet& set, const FrameDataset& train, const FrameDataset& heldout,
              const TrainConfig& config, TrainReport* report = nullptr);

/// Fresh network trained on `train`. Throws DataError when a class in
/// [0, classes) has no example.
Mlp train_mlp(const FrameDataset& train, const FrameDataset& heldout, int classes, const TrainConfig& config,
              TrainReport* report = nullptr, const std::string& head = "letter");

enum class AdaptMethod { kLinUp, kLinLon, kFineTune };
const char* adapt_method_name(AdaptMethod m);
AdaptMethod parse_adapt_method(const std::string& name);

struct AdaptConfig {
  AdaptMethod method = AdaptMethod::kLinUp;
  int epochs = 20;
  double learning_rate = 0.02;
  double momentum = 0.9;
  int batch_size = 100;
  double weight_decay = 0.0;
  double dropout = 0.0;
  std::uint64_t seed = 1;
};

/// Trainable blocks of `model` under the method (after the method's extra
/// layers were added).
TrainableSet adapt_trainable(const Mlp& model, AdaptMethod method);

/// Adapts a copy of `base`; the epoch with the best accuracy on the
/// adaptation data wins (epoch 0 is the initialized model).
Mlp adapt(const Mlp& base, const FrameDataset& data, const AdaptConfig& config, TrainReport* report = nullptr);

/// Fraction of frames whose argmax differs from the label.
double frame_error(const PosteriorStream& post, const std::vector<int>& labels);
double frame_error(const Mlp& model, const FrameSequence& seq, const std::vector<int>& labels);
double frame_error(const Mlp& model, const FrameDataset& data);

/// Argmax with ties toward the smaller index.
int argmax_row(const Matrix& m, Eigen::Index row);

/// One letter head plus optional phonological heads on the same input.
struct FrameClassifierBank {
  std::vector<Mlp> heads;

  const Mlp& letter() const { return heads.at(0); }
  void save(const std::string& path) const;
  static FrameClassifierBank load(const std::string& path);
};

/// Frame labels of a phonological head: letters map to their feature value,
/// BOS/EOS to value 0.
std::vector<int> phonological_labels(const LabelAlphabet& alphabet, int feature, const std::vector<int>& letter_labels);

}  // namespace segscribe
