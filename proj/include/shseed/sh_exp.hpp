#pragma once

#include "shseed/sh.hpp"
#include "shseed/triple_product.hpp"

#include <memory>
#include <span>
#include <vector>

namespace shseed {

/// Table of optimal linear coefficients (a, b) with exp(g) ~ a + b g for band-limited
/// functions g with zero mean and coefficient norm s. Fitted by least squares over a fixed
/// ensemble of single-cap step functions (target exp of the exact step, regressor its
/// projection) and linearly interpolated between knots.
class ExpLinearTable {
 public:
  static constexpr int kKnots = 1024;
  static constexpr double kMaxNorm = 1.0 / 8.0;

  explicit ExpLinearTable(int band_count);
  static std::shared_ptr<const ExpLinearTable> get(int band_count);

  struct Coefficients {
    double a, b, da, db;  // values and derivatives with respect to s
  };
  /// Beyond kMaxNorm the last segment is extrapolated linearly.
  Coefficients lookup(double s) const;

  std::span<const double> knots_a() const { return a_; }
  std::span<const double> knots_b() const { return b_; }

 private:
  std::vector<double> a_, b_;
};

/// SH exponential by scaling and squaring: the DC term is factored out exactly, the
/// remainder is scaled by 2^-k until its norm is at most kScaleThreshold (k <= kMaxSquarings),
/// approximated linearly, then squared k times with the triple product.
class ShExp {
 public:
  static constexpr double kScaleThreshold = ExpLinearTable::kMaxNorm;
  static constexpr int kMaxSquarings = 12;

  explicit ShExp(int band_count);

  struct Workspace {
    std::vector<double> stages;  // (k + 1) * n^2 values, E_0 .. E_k
    std::vector<double> scratch;
    int squarings = 0;
    double scaled_norm = 0.0;
    double dc_factor = 1.0;
    ExpLinearTable::Coefficients linear{};
  };

  int band_count() const { return band_count_; }
  const TripleProductTensor& tensor() const { return *tensor_; }

  void forward(std::span<const double> v, std::span<double> out, Workspace& ws) const;
  /// Requires the workspace filled by forward() on the same `v`; `out` is its result.
  void backward(std::span<const double> v, std::span<const double> out, Workspace& ws,
                std::span<const double> grad_out, std::span<double> grad_v) const;

 private:
  int band_count_;
  std::shared_ptr<const TripleProductTensor> tensor_;
  std::shared_ptr<const ExpLinearTable> table_;
};

SHVector sh_exp(const SHVector& v);
SHVector sh_exp_vjp(const SHVector& v, const SHVector& grad_out);

}  // namespace shseed
