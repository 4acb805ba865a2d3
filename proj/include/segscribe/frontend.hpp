#pragma once

#include <array>
#include <string>
#include <vector>

#include "segscribe/image.hpp"
#include "segscribe/types.hpp"

namespace segscribe {

/// CIELAB (D65 white) of an sRGB triple.
std::array<double, 3> srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// Diagonal-covariance Gaussian mixture over Lab colors.
struct ColorMixture {
  Vector weights;    // K
  Matrix means;      // K x 3
  Matrix variances;  // K x 3

  int size() const { return static_cast<int>(weights.size()); }
  double log_likelihood(const std::array<double, 3>& lab) const;
};

struct ColorModel {
  ColorMixture hand;
  Matrix background_mean;      // (H*W) x 3
  Matrix background_variance;  // (H*W) x 3
  int width = 0;
  int height = 0;
  double prior = 0.1;   // hand pixel prior
  double tau = -1e300;  // floor on hand log-likelihood
  Rect roi;             // pixels outside are never hand
  Rect exclusion;       // pixels inside are never hand; ignored when invalid
  std::vector<std::string> warnings;

  double background_log_likelihood(int x, int y, const std::array<double, 3>& lab) const;
};

struct ColorFitConfig {
  int components = 3;
  int em_iterations = 40;
  int dilation = 2;
  double variance_floor = 1.0;  // Lab units squared
  double tau_percentile = 1.0;
  int max_hand_pixels = 20000;
  Rect roi;        // defaults to the full frame when invalid
  Rect exclusion;  // none when invalid
};

/// Throws DataError when there are no frames, sizes disagree or a mask is empty.
ColorModel fit_color_models(const std::vector<Image>& frames, const std::vector<BinaryMask>& masks,
                            const ColorFitConfig& config = {});

/// Pixels passing the log-odds test, the tau floor, the ROI and the
/// exclusion rectangle, before the connected-component step.
BinaryMask hand_candidates(const Image& frame, const ColorModel& model);

struct HandMask {
  BinaryMask mask;
  bool found = false;
};

/// Largest 4-connected component of the candidates; `found` is false when
/// no pixel passes.
HandMask segment_hand(const Image& frame, const ColorModel& model);

struct HogConfig {
  int canonical_size = 128;
  std::vector<int> grids{4, 8, 16};
  int bins = 8;
  double epsilon = 1e-6;

  int dim() const;
  static HogConfig coarse() { return HogConfig{128, {4}, 8, 1e-6}; }
};

struct HogResult {
  Vector descriptor;
  bool valid = false;
};

/// Pyramid HOG of the masked hand resized to the canonical square. Gradients
/// use only in-mask pixels; cells are L2-normalized independently.
HogResult hog_descriptor(const Image& frame, const BinaryMask& mask, const HogConfig& config = {});

class PcaProjector {
 public:
  PcaProjector() = default;
  PcaProjector(Vector mean, Matrix basis, Vector eigenvalues);

  int input_dim() const { return static_cast<int>(mean_.size()); }
  int output_dim() const { return static_cast<int>(basis_.rows()); }
  const Vector& mean() const { return mean_; }
  /// d x D, orthonormal rows.
  const Matrix& basis() const { return basis_; }
  /// Covariance eigenvalues of the kept directions, descending.
  const Vector& eigenvalues() const { return eigenvalues_; }

  Vector project(const Vector& x) const;
  /// Projects every row.
  Matrix project_rows(const Matrix& x) const;
  Vector reconstruct(const Vector& z) const;

  void save(std::ostream& out) const;
  static PcaProjector load(std::istream& in);

 private:
  Vector mean_;
  Matrix basis_;
  Vector eigenvalues_;
};

/// Top-d principal directions of the 1/n covariance of the rows. Each basis
/// row has its largest-magnitude entry positive. Throws UsageError when d is
/// not in [1, min(rows, cols)].
PcaProjector pca_fit(const Matrix& data, int d);

}  // namespace segscribe
