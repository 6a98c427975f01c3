#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lassolab {

namespace detail {

inline void check_levels(Eigen::Index length, int levels, const char* who) {
  if (levels < 0) throw std::invalid_argument(std::string(who) + ": levels must be >= 0");
  if (levels >= 62 || length % (Eigen::Index{1} << levels) != 0)
    throw std::invalid_argument(std::string(who) + ": length " + std::to_string(length) +
                                " is not divisible by 2^" + std::to_string(levels));
}

/// One analysis step on v[0, len): averages to the front, details behind.
template <class Vec>
void haar_step(Vec&& v, Eigen::Index len, std::vector<double>& scratch) {
  const double r = 1.0 / std::sqrt(2.0);
  const Eigen::Index half = len / 2;
  scratch.resize(static_cast<std::size_t>(len));
  for (Eigen::Index i = 0; i < half; ++i) {
    const double a = v[2 * i], b = v[2 * i + 1];
    scratch[static_cast<std::size_t>(i)] = (a + b) * r;
    scratch[static_cast<std::size_t>(half + i)] = (a - b) * r;
  }
  for (Eigen::Index i = 0; i < len; ++i) v[i] = scratch[static_cast<std::size_t>(i)];
}

template <class Vec>
void haar_unstep(Vec&& v, Eigen::Index len, std::vector<double>& scratch) {
  const double r = 1.0 / std::sqrt(2.0);
  const Eigen::Index half = len / 2;
  scratch.resize(static_cast<std::size_t>(len));
  for (Eigen::Index i = 0; i < half; ++i) {
    const double a = v[i], d = v[half + i];
    scratch[static_cast<std::size_t>(2 * i)] = (a + d) * r;
    scratch[static_cast<std::size_t>(2 * i + 1)] = (a - d) * r;
  }
  for (Eigen::Index i = 0; i < len; ++i) v[i] = scratch[static_cast<std::size_t>(i)];
}

}  // namespace detail

/// Largest level count the length supports.
inline int max_haar_levels(Eigen::Index length) {
  int levels = 0;
  while (length > 1 && length % 2 == 0) {
    length /= 2;
    ++levels;
  }
  return levels;
}

/// Orthonormal Haar analysis. Layout: [approx | coarsest details | ... | finest details].
inline Eigen::VectorXd haar1d_forward(const Eigen::VectorXd& x, int levels) {
  detail::check_levels(x.size(), levels, "haar1d_forward");
  Eigen::VectorXd c = x;
  std::vector<double> scratch;
  Eigen::Index len = x.size();
  for (int l = 0; l < levels; ++l, len /= 2) detail::haar_step(c, len, scratch);
  return c;
}

inline Eigen::VectorXd haar1d_inverse(const Eigen::VectorXd& coeffs, int levels) {
  detail::check_levels(coeffs.size(), levels, "haar1d_inverse");
  Eigen::VectorXd x = coeffs;
  std::vector<double> scratch;
  for (int l = levels - 1; l >= 0; --l) detail::haar_unstep(x, coeffs.size() >> l, scratch);
  return x;
}

/// Separable 2D transform: per level, rows then columns of the current
/// approximation block.
inline Eigen::MatrixXd haar2d_forward(const Eigen::MatrixXd& image, int levels) {
  detail::check_levels(image.rows(), levels, "haar2d_forward");
  detail::check_levels(image.cols(), levels, "haar2d_forward");
  Eigen::MatrixXd c = image;
  std::vector<double> scratch;
  Eigen::Index h = image.rows(), w = image.cols();
  for (int l = 0; l < levels; ++l, h /= 2, w /= 2) {
    for (Eigen::Index r = 0; r < h; ++r) detail::haar_step(c.row(r), w, scratch);
    for (Eigen::Index q = 0; q < w; ++q) detail::haar_step(c.col(q), h, scratch);
  }
  return c;
}

inline Eigen::MatrixXd haar2d_inverse(const Eigen::MatrixXd& coeffs, int levels) {
  detail::check_levels(coeffs.rows(), levels, "haar2d_inverse");
  detail::check_levels(coeffs.cols(), levels, "haar2d_inverse");
  Eigen::MatrixXd x = coeffs;
  std::vector<double> scratch;
  for (int l = levels - 1; l >= 0; --l) {
    const Eigen::Index h = coeffs.rows() >> l, w = coeffs.cols() >> l;
    for (Eigen::Index q = 0; q < w; ++q) detail::haar_unstep(x.col(q), h, scratch);
    for (Eigen::Index r = 0; r < h; ++r) detail::haar_unstep(x.row(r), w, scratch);
  }
  return x;
}

/// A signal together with its Haar coefficients.
struct WaveletImage {
  Eigen::MatrixXd pixels;  // N x 1 for 1D signals
  Eigen::MatrixXd coeffs;
  int levels = 0;

  static WaveletImage from_pixels(const Eigen::MatrixXd& pixels, int levels) {
    WaveletImage w;
    w.pixels = pixels;
    w.levels = levels;
    w.coeffs = pixels.cols() == 1 ? Eigen::MatrixXd(haar1d_forward(pixels.col(0), levels))
                                  : haar2d_forward(pixels, levels);
    return w;
  }
  static WaveletImage from_coeffs(const Eigen::MatrixXd& coeffs, int levels) {
    WaveletImage w;
    w.coeffs = coeffs;
    w.levels = levels;
    w.pixels = coeffs.cols() == 1 ? Eigen::MatrixXd(haar1d_inverse(coeffs.col(0), levels))
                                  : haar2d_inverse(coeffs, levels);
    return w;
  }
};

/// Count of entries with magnitude above rel * max magnitude.
inline Eigen::Index effective_sparsity(const Eigen::MatrixXd& coeffs, double rel = 1e-6) {
  const double cutoff = rel * coeffs.cwiseAbs().maxCoeff();
  return (coeffs.array().abs() > cutoff).count();
}

/// Square Shepp-Logan style phantom on [0,1]^2 built from additive
/// axis-aligned rectangles; each pixel is the exact area average, so the
/// image at size 2n block-averages to the image at size n.
inline Eigen::MatrixXd sslp_phantom(int size) {
  if (size < 16) throw std::invalid_argument("sslp_phantom: size must be >= 16");
  struct Rect {
    double r0, r1, c0, c1, value;
  };
  // Rows, then columns, in units of the side length.
  static const Rect rects[] = {
      {0.10, 0.90, 0.15, 0.85, 1.0},    // skull
      {0.15, 0.85, 0.20, 0.80, -0.8},   // brain
      {0.30, 0.70, 0.30, 0.45, -0.2},   // left block
      {0.35, 0.65, 0.55, 0.70, -0.2},   // right block
      {0.20, 0.30, 0.45, 0.55, 0.3},    // top square
      {0.50, 0.55, 0.45, 0.50, 0.2},    // centre square
      {0.75, 0.80, 0.35, 0.40, 0.25},   // bottom squares
      {0.75, 0.80, 0.50, 0.55, 0.25},
      {0.75, 0.80, 0.60, 0.65, 0.25},
      {0.4125, 0.4625, 0.4875, 0.5375, 0.15},  // off-grid details
      {0.6125, 0.6625, 0.2375, 0.2875, 0.1},
      {0.2125, 0.2375, 0.6625, 0.7125, 0.35},
  };
  const double h = 1.0 / size;
  Eigen::MatrixXd img = Eigen::MatrixXd::Zero(size, size);
  auto overlap = [](double a0, double a1, double b0, double b1) {
    return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
  };
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double y0 = r * h, y1 = (r + 1) * h, x0 = c * h, x1 = (c + 1) * h;
      double total = 0.0;
      for (const Rect& q : rects)
        total += q.value * overlap(y0, y1, q.r0, q.r1) * overlap(x0, x1, q.c0, q.c1);
      img(r, c) = std::clamp(total / (h * h), 0.0, 1.0);
    }
  }
  return img;
}

/// ASCII (P2) PGM; values are mapped linearly from [lo, hi] to [0, maxval].
inline void write_pgm(const std::string& path, const Eigen::MatrixXd& image, double lo = 0.0,
                      double hi = 1.0, int maxval = 255) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "P2\n" << image.cols() << ' ' << image.rows() << '\n' << maxval << '\n';
  const double span = hi > lo ? hi - lo : 1.0;
  for (Eigen::Index r = 0; r < image.rows(); ++r) {
    for (Eigen::Index c = 0; c < image.cols(); ++c) {
      const double t = std::clamp((image(r, c) - lo) / span, 0.0, 1.0);
      out << static_cast<int>(std::lround(t * maxval)) << (c + 1 < image.cols() ? ' ' : '\n');
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace lassolab
