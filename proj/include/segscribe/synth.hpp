#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "segscribe/image.hpp"
#include "segscribe/io.hpp"
#include "segscribe/types.hpp"

namespace segscribe {

/// Generative model of one synthetic signer.
///
/// A letter is a hold at its appearance vector A * canonical + b followed by a
/// linear transition to the next target. Words start and end at the rest
/// vector. Noise is isotropic Gaussian added after the affine map.
struct SignerProfile {
  std::string id;
  Matrix canonical;          // 26 x D, pre-affine letter vectors
  Vector rest;               // D, pre-affine rest pose
  Matrix affine_matrix;      // D x D
  Vector affine_shift;       // D
  double speed = 8.0;        // mean frames per letter, >= 3
  double hold_fraction = 0.4;
  double duration_jitter = 0.2;  // relative spread of hold/transition lengths
  double coarticulation = 0.0;   // 0..1 blend of off-center hold frames toward neighbors
  double sigma = 0.25;
  double frame_rate = 60.0;
  std::uint64_t seed = 1;

  int dim() const { return static_cast<int>(canonical.cols()); }
  /// Noise-free descriptor of a held letter.
  Vector appearance(Label letter) const;
  Vector rest_appearance() const;
  /// Throws DataError on broken invariants.
  void validate() const;
};

struct SynthPreset {
  std::string name;
  int dim = 16;
  double sigma = 0.25;
  double separation = 6.0;        // min pairwise canonical distance in units of sigma
  double coarticulation = 0.0;
  double min_speed = 6.0;         // fastest signer
  double max_speed = 10.8;        // slowest signer
  double letter_jitter = 0.05;    // per-signer canonical perturbation, fraction of separation
  double affine_strength = 0.1;   // spread of A around identity
  double shift_strength = 0.2;    // spread of b, fraction of separation
};

/// "easy", "hard" or "shifted"; throws UsageError otherwise.
SynthPreset preset(const std::string& name);

/// Signers share base canonical vectors drawn from `seed`; each adds its own
/// letter jitter, affine map and speed.
std::vector<SignerProfile> make_profiles(const SynthPreset& preset, int num_signers, std::uint64_t seed);

/// Deterministic in (profile.seed, stream).
std::pair<FrameSequence, PeakAnnotation> generate_word(const SignerProfile& profile, const std::string& word,
                                                       std::uint64_t stream = 0);

struct SynthUtterance {
  std::string id;  // "0007_ROAD"
  std::string word;
  FrameSequence frames;
  PeakAnnotation annotation;
};

struct FoldSpec {
  int num_folds = 10;
  std::uint64_t seed = 1;
};

struct SynthCorpus {
  std::string profile_id;
  std::vector<std::string> words;
  std::vector<SynthUtterance> utterances;
  /// One entry per (utterance, fold).
  std::vector<io::ManifestEntry> manifest;
  /// Chunk index of every utterance.
  std::vector<int> chunk;
};

/// Role of chunk `c` in fold `f`: test = f, dev = f+1 (mod folds), else train.
io::FoldRole fold_role(int chunk, int fold, int num_folds);

std::vector<SynthCorpus> generate_corpus(const std::vector<SignerProfile>& profiles,
                                         const std::vector<std::string>& words, const FoldSpec& split);

/// Words drawn from a seeded letter Markov chain whose marginals follow the
/// peak-letter frequencies of the reference corpus.
std::vector<std::string> sample_words(int count, std::uint64_t seed, int min_len = 3, int max_len = 8);

/// Peak-letter counts A..Z of the reference corpus.
const std::vector<double>& reference_letter_counts();

struct RasterConfig {
  int width = 64;
  int height = 48;
  double prior = 0.12;  // hand area / image area
  std::array<std::uint8_t, 3> background{40, 90, 200};
  std::array<std::uint8_t, 3> hand{215, 160, 130};
  double background_noise = 0.0;  // gray levels
  double hand_noise = 2.0;
  double texture_amplitude = 0.25;
  std::uint64_t seed = 1;
};

struct RasterSequence {
  std::vector<Image> frames;
  std::vector<BinaryMask> masks;
  std::array<std::uint8_t, 3> background{};
  std::array<std::uint8_t, 3> hand{};
  PeakAnnotation annotation;
  FrameSequence descriptors;
};

/// One textured elliptical blob per frame; its position, aspect, angle and
/// texture follow the descriptor trajectory.
RasterSequence render_raster(const SignerProfile& profile, const std::string& word, const RasterConfig& config,
                             std::uint64_t stream = 0);

/// Deterministic 64-bit mixer.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace segscribe
