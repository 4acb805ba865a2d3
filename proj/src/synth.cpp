#include "segscribe/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "segscribe/error.hpp"

namespace segscribe {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

namespace {

using Rng = std::mt19937_64;

double gauss(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

Matrix gaussian_matrix(Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = gauss(rng);
  }
  return m;
}

double min_pairwise_distance(const Matrix& m) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < m.rows(); ++j) best = std::min(best, (m.row(i) - m.row(j)).norm());
  }
  return best;
}

int sample_length(Rng& rng, double mean, double jitter) {
  const double z = std::clamp(gauss(rng), -2.0, 2.0);
  return std::max(1, static_cast<int>(std::lround(mean * (1.0 + jitter * z))));
}

// Pre-affine targets of one word: rest, letters..., rest.
struct Hold {
  Vector target;
  int length;
  Label letter;  // -1 for rest
};

}  // namespace

Vector SignerProfile::appearance(Label letter) const {
  if (!is_letter(letter)) throw DataError("appearance of a non-letter label");
  return affine_matrix * canonical.row(letter).transpose() + affine_shift;
}

Vector SignerProfile::rest_appearance() const { return affine_matrix * rest + affine_shift; }

void SignerProfile::validate() const {
  const int D = dim();
  if (canonical.rows() != kNumLetters || D < 1) throw DataError("profile needs 26 canonical vectors");
  if (rest.size() != D || affine_shift.size() != D || affine_matrix.rows() != D || affine_matrix.cols() != D) {
    throw DataError("profile dimensions disagree");
  }
  if (!(speed >= 3.0)) throw DataError("profile speed must be at least 3 frames per letter");
  if (!(sigma >= 0.0)) throw DataError("profile noise scale must be nonnegative");
  if (!(hold_fraction > 0.0 && hold_fraction < 1.0)) throw DataError("hold fraction must lie in (0, 1)");
  if (!(frame_rate > 0.0)) throw DataError("frame rate must be positive");
  if (!(min_pairwise_distance(canonical) > 0.0)) throw DataError("canonical vectors must be distinct");
}

SynthPreset preset(const std::string& name) {
  SynthPreset p;
  p.name = name;
  if (name == "easy") return p;
  if (name == "hard") {
    p.separation = 2.0;
    p.coarticulation = 0.6;
    p.min_speed = 5.0;
    p.max_speed = 9.0;
    p.letter_jitter = 0.1;
    return p;
  }
  if (name == "shifted") {
    p.separation = 6.0;
    p.letter_jitter = 0.45;
    p.affine_strength = 0.6;
    p.shift_strength = 1.5;
    return p;
  }
  throw UsageError("unknown preset: " + name);
}

std::vector<SignerProfile> make_profiles(const SynthPreset& preset, int num_signers, std::uint64_t seed) {
  if (num_signers < 1) throw UsageError("need at least one signer");
  const int D = preset.dim;
  Rng base(splitmix64(seed));
  Matrix canonical = gaussian_matrix(base, kNumLetters, D);
  Matrix rest = gaussian_matrix(base, 1, D);
  const double sep = preset.separation * preset.sigma;
  const double scale = sep / min_pairwise_distance(canonical);
  canonical *= scale;
  rest *= scale;

  std::vector<SignerProfile> out;
  for (int s = 0; s < num_signers; ++s) {
    Rng rng(splitmix64(seed ^ (0x5157ull * static_cast<std::uint64_t>(s + 1))));
    SignerProfile p;
    p.id = "signer" + std::to_string(s + 1);
    const double root_d = std::sqrt(static_cast<double>(D));
    p.canonical = canonical + gaussian_matrix(rng, kNumLetters, D) * (preset.letter_jitter * sep / root_d);
    p.rest = rest.row(0).transpose();
    p.affine_matrix = Matrix::Identity(D, D) + gaussian_matrix(rng, D, D) * (preset.affine_strength / root_d);
    p.affine_shift = gaussian_matrix(rng, D, 1).col(0) * (preset.shift_strength * sep / root_d);
    p.speed = num_signers == 1 ? 0.5 * (preset.min_speed + preset.max_speed)
                               : preset.min_speed + (preset.max_speed - preset.min_speed) * s / (num_signers - 1);
    p.coarticulation = preset.coarticulation;
    p.sigma = preset.sigma;
    p.seed = splitmix64(seed + 0x1000ull + static_cast<std::uint64_t>(s));
    p.validate();
    out.push_back(std::move(p));
  }
  return out;
}

std::pair<FrameSequence, PeakAnnotation> generate_word(const SignerProfile& profile, const std::string& word,
                                                       std::uint64_t stream) {
  profile.validate();
  if (word.empty()) throw DataError("empty word");
  for (char c : word) {
    if (c < 'A' || c > 'Z') throw DataError(std::string("unknown letter in word: ") + c);
  }
  Rng rng(splitmix64(profile.seed ^ splitmix64(stream)));
  const double hold_mean = profile.speed * profile.hold_fraction;
  const double trans_mean = profile.speed - hold_mean;

  std::vector<Hold> holds;
  holds.push_back({profile.rest, sample_length(rng, 1.5 * hold_mean, profile.duration_jitter), -1});
  std::vector<int> transitions;
  for (char c : word) {
    const Label l = c - 'A';
    transitions.push_back(sample_length(rng, trans_mean, profile.duration_jitter));
    holds.push_back({profile.canonical.row(l).transpose(), sample_length(rng, hold_mean, profile.duration_jitter), l});
  }
  transitions.push_back(sample_length(rng, trans_mean, profile.duration_jitter));
  holds.push_back({profile.rest, sample_length(rng, 1.5 * hold_mean, profile.duration_jitter), -1});

  std::vector<Vector> clean;
  std::vector<Peak> peaks;
  for (std::size_t i = 0; i < holds.size(); ++i) {
    const Hold& h = holds[i];
    if (i > 0) {
      const Vector& from = holds[i - 1].target;
      const int m = transitions[i - 1];
      for (int j = 1; j <= m; ++j) {
        const double a = static_cast<double>(j) / (m + 1);
        clean.push_back((1.0 - a) * from + a * h.target);
      }
    }
    const int center = (h.length - 1) / 2;
    const double half = std::max(center, h.length - 1 - center) + 1.0;
    for (int j = 0; j < h.length; ++j) {
      const int off = j - center;
      Vector x = h.target;
      if (off != 0 && profile.coarticulation > 0.0 && h.letter >= 0) {
        const Vector& nb = off < 0 ? holds[i - 1].target : holds[i + 1].target;
        const double w = 0.5 * profile.coarticulation * std::abs(off) / half;
        x = (1.0 - w) * h.target + w * nb;
      }
      if (off == 0 && h.letter >= 0) {
        Peak p;
        p.frame = static_cast<int>(clean.size());
        p.letter = h.letter;
        peaks.push_back(p);
      }
      clean.push_back(std::move(x));
    }
  }

  const int T = static_cast<int>(clean.size());
  Matrix frames(T, profile.dim());
  for (int t = 0; t < T; ++t) {
    Vector y = profile.affine_matrix * clean[static_cast<std::size_t>(t)] + profile.affine_shift;
    if (profile.sigma > 0.0) {
      for (int d = 0; d < profile.dim(); ++d) y(d) += profile.sigma * gauss(rng);
    }
    frames.row(t) = y.transpose();
  }
  return {FrameSequence(std::move(frames), profile.frame_rate, profile.id),
          PeakAnnotation(word, profile.id, T, std::move(peaks))};
}

io::FoldRole fold_role(int chunk, int fold, int num_folds) {
  if (chunk == fold) return io::FoldRole::kTest;
  if (chunk == (fold + 1) % num_folds) return io::FoldRole::kDev;
  return io::FoldRole::kTrain;
}

std::vector<SynthCorpus> generate_corpus(const std::vector<SignerProfile>& profiles,
                                         const std::vector<std::string>& words, const FoldSpec& split) {
  if (profiles.empty()) throw UsageError("need at least one profile");
  if (words.empty()) throw DataError("empty word list");
  if (split.num_folds < 3) throw UsageError("need at least three folds");
  const int n = static_cast<int>(words.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(splitmix64(split.seed));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> chunk(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    chunk[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] =
        static_cast<int>(static_cast<long>(k) * split.num_folds / n);
  }

  std::vector<SynthCorpus> out;
  for (const auto& profile : profiles) {
    SynthCorpus corpus;
    corpus.profile_id = profile.id;
    corpus.words = words;
    corpus.chunk = chunk;
    for (int i = 0; i < n; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%04d_", i);
      SynthUtterance u;
      u.id = buf + words[static_cast<std::size_t>(i)];
      u.word = words[static_cast<std::size_t>(i)];
      auto [frames, ann] = generate_word(profile, u.word, static_cast<std::uint64_t>(i));
      u.frames = std::move(frames);
      u.annotation = std::move(ann);
      corpus.utterances.push_back(std::move(u));
    }
    for (int f = 0; f < split.num_folds; ++f) {
      for (int i = 0; i < n; ++i) {
        corpus.manifest.push_back({corpus.utterances[static_cast<std::size_t>(i)].id, f,
                                   fold_role(chunk[static_cast<std::size_t>(i)], f, split.num_folds)});
      }
    }
    out.push_back(std::move(corpus));
  }
  return out;
}

const std::vector<double>& reference_letter_counts() {
  // A..Z
  static const std::vector<double> counts{2101, 365, 755,  594,  2411, 432, 501,  483, 1690, 221, 395, 1053, 593,
                                          1458, 1470, 550, 178, 1300, 1055, 1246, 807, 300, 290, 245, 483, 261};
  return counts;
}

std::vector<std::string> sample_words(int count, std::uint64_t seed, int min_len, int max_len) {
  if (count < 0 || min_len < 1 || max_len < min_len) throw UsageError("bad word sampling parameters");
  const auto& freq = reference_letter_counts();
  // Fixed letter-pair affinities give every word list the same bigram structure.
  Rng chain_rng(0x5e6ull);
  std::vector<std::vector<double>> trans(kNumLetters, std::vector<double>(kNumLetters));
  for (int a = 0; a < kNumLetters; ++a) {
    for (int b = 0; b < kNumLetters; ++b) {
      trans[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
          freq[static_cast<std::size_t>(b)] * std::exp(1.2 * gauss(chain_rng));
    }
  }
  Rng rng(splitmix64(seed ^ 0x77ull));
  std::discrete_distribution<int> first(freq.begin(), freq.end());
  std::vector<std::discrete_distribution<int>> next;
  for (const auto& row : trans) next.emplace_back(row.begin(), row.end());
  std::uniform_int_distribution<int> len_dist(min_len, max_len);
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int len = len_dist(rng);
    std::string w;
    int c = first(rng);
    w.push_back(static_cast<char>('A' + c));
    while (static_cast<int>(w.size()) < len) {
      c = next[static_cast<std::size_t>(c)](rng);
      w.push_back(static_cast<char>('A' + c));
    }
    out.push_back(std::move(w));
  }
  return out;
}

RasterSequence render_raster(const SignerProfile& profile, const std::string& word, const RasterConfig& config,
                             std::uint64_t stream) {
  if (config.width < 16 || config.height < 16) throw UsageError("raster too small");
  if (!(config.prior > 0.0 && config.prior < 0.5)) throw UsageError("raster prior must lie in (0, 0.5)");
  auto [seq, ann] = generate_word(profile, word, stream);
  const Matrix& x = seq.frames();
  const int D = seq.dim();
  const double unit = std::max(1e-9, std::sqrt(profile.canonical.squaredNorm() / profile.canonical.size()));
  auto z = [&](int t, int k) { return std::tanh(x(t, k % D) / unit); };

  Rng rng(splitmix64(config.seed ^ splitmix64(stream + 0xabcull)));
  const double W = config.width, H = config.height;
  const double area = config.prior * W * H;
  constexpr double pi = std::numbers::pi;

  RasterSequence out;
  out.background = config.background;
  out.hand = config.hand;
  for (int t = 0; t < seq.num_frames(); ++t) {
    const double aspect = std::exp(0.4 * z(t, 2));
    const double a = std::sqrt(area / pi * aspect), b = std::sqrt(area / pi / aspect);
    const double reach = std::max(a, b) + 1.0;
    const double cx = std::clamp(W / 2 + 0.15 * W * z(t, 0), reach, W - 1 - reach);
    const double cy = std::clamp(H / 2 + 0.15 * H * z(t, 1), reach, H - 1 - reach);
    const double theta = 0.5 * pi * z(t, 3);
    const double phi = pi * z(t, 4);
    const double period = 6.0 + 3.0 * z(t, 5);
    const double ct = std::cos(theta), st = std::sin(theta);

    BinaryMask blob(config.width, config.height);
    for (int py = 0; py < config.height; ++py) {
      for (int px = 0; px < config.width; ++px) {
        const double dx = px - cx, dy = py - cy;
        const double u = dx * ct + dy * st, v = -dx * st + dy * ct;
        if ((u / a) * (u / a) + (v / b) * (v / b) <= 1.0) blob.set(px, py, true);
      }
    }
    blob = largest_component(blob);

    Image img(config.width, config.height, 3);
    for (int py = 0; py < config.height; ++py) {
      for (int px = 0; px < config.width; ++px) {
        if (blob.get(px, py)) {
          const double dx = px - cx, dy = py - cy;
          const double u = dx * ct + dy * st, v = -dx * st + dy * ct;
          const double shade =
              1.0 + config.texture_amplitude * std::cos(2.0 * pi * (u * std::cos(phi) + v * std::sin(phi)) / period);
          for (int c = 0; c < 3; ++c) {
            const double noise = config.hand_noise > 0.0 ? config.hand_noise * gauss(rng) : 0.0;
            img.at(px, py, c) = static_cast<std::uint8_t>(
                std::clamp(std::lround(config.hand[static_cast<std::size_t>(c)] * shade + noise), 0L, 255L));
          }
        } else {
          for (int c = 0; c < 3; ++c) {
            const double noise = config.background_noise > 0.0 ? config.background_noise * gauss(rng) : 0.0;
            img.at(px, py, c) = static_cast<std::uint8_t>(
                std::clamp(std::lround(config.background[static_cast<std::size_t>(c)] + noise), 0L, 255L));
          }
        }
      }
    }
    out.frames.push_back(std::move(img));
    out.masks.push_back(std::move(blob));
  }
  out.annotation = std::move(ann);
  out.descriptors = std::move(seq);
  return out;
}

}  // namespace segscribe
