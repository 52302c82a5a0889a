#include "shseed/sh_exp.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <random>

namespace shseed {

namespace {

constexpr int kEnsembleSize = 32;
constexpr std::uint64_t kEnsembleSeed = 0x5eed5eedULL;

constexpr std::size_t kFitSamples = 4096;

// Single caps: the log-visibility of one blocker, the primitive the renderer sums.
struct Cap {
  Vec3 direction;
  double cos_angle;
};

Cap random_cap(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double angle = (5.0 + 55.0 * uni(rng)) * kPi / 180.0;
  const double z = 1.0 - 2.0 * uni(rng);
  const double phi = 2.0 * kPi * uni(rng);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {Vec3(r * std::cos(phi), r * std::sin(phi), z), std::cos(angle)};
}

struct Ensemble {
  std::vector<Vec3> directions;
  // [member][sample]; `exact` is the cap step function and `projected` its
  // band-limited reconstruction, both with the mean removed and divided by the
  // non-DC coefficient norm of the projection.
  std::vector<double> exact;
  std::vector<double> projected;
};

Ensemble fitting_ensemble(int band_count) {
  const int count = sh_count(band_count);
  Ensemble ens;
  ens.directions = fibonacci_sphere_directions(kFitSamples);
  ens.exact.resize(kEnsembleSize * kFitSamples);
  ens.projected.resize(kEnsembleSize * kFitSamples);
  std::mt19937_64 rng(kEnsembleSeed + static_cast<std::uint64_t>(band_count));
  std::vector<double> y(count), rotated(count), zc(band_count), dd(band_count), dr(band_count);
  for (int member = 0; member < kEnsembleSize; ++member) {
    SHVector f(band_count);
    const Cap cap = random_cap(rng);
    zonal_log_blocker(1.0, std::sqrt(1.0 - cap.cos_angle * cap.cos_angle), 1.0, band_count, zc, dd, dr);
    rotate_zonal(zc, cap.direction, band_count, rotated);
    for (int i = 0; i < count; ++i) f[i] += rotated[i];
    const double mean = f[0] / (2.0 * std::sqrt(kPi));
    f[0] = 0.0;
    const double norm = f.norm();
    for (std::size_t s = 0; s < kFitSamples; ++s) {
      const Vec3& w = ens.directions[s];
      eval_basis(w, band_count, y);
      double value = 0.0;
      for (int i = 1; i < count; ++i) value += f[i] * y[i];
      const double step = w.dot(cap.direction) >= cap.cos_angle ? -1.0 : 0.0;
      ens.projected[member * kFitSamples + s] = value / norm;
      ens.exact[member * kFitSamples + s] = (step - mean) / norm;
    }
  }
  return ens;
}

}  // namespace

ExpLinearTable::ExpLinearTable(int band_count) : a_(kKnots), b_(kKnots) {
  const Ensemble ens = fitting_ensemble(band_count);
  const std::size_t total = ens.exact.size();
  for (int knot = 0; knot < kKnots; ++knot) {
    const double s = kMaxNorm * knot / (kKnots - 1);
    if (knot == 0) {
      a_[0] = 1.0;
      b_[0] = 1.0;
      continue;
    }
    // Least squares over the ensemble of exp(s g) ~ a + b (s P g), where P g is the
    // band-limited projection: the exact exponential is the target, not that of the
    // ringing reconstruction.
    double s11 = 0.0, s1g = 0.0, sgg = 0.0, r1 = 0.0, rg = 0.0;
    for (std::size_t p = 0; p < total; ++p) {
      const double x = s * ens.projected[p];
      const double e = std::exp(s * ens.exact[p]);
      s11 += 1.0;
      s1g += x;
      sgg += x * x;
      r1 += e;
      rg += x * e;
    }
    const double det = s11 * sgg - s1g * s1g;
    a_[knot] = (r1 * sgg - rg * s1g) / det;
    b_[knot] = (s11 * rg - s1g * r1) / det;
  }
}

std::shared_ptr<const ExpLinearTable> ExpLinearTable::get(int band_count) {
  static std::mutex mutex;
  static std::map<int, std::shared_ptr<const ExpLinearTable>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[band_count];
  if (!slot) slot = std::make_shared<const ExpLinearTable>(band_count);
  return slot;
}

ExpLinearTable::Coefficients ExpLinearTable::lookup(double s) const {
  const double step = kMaxNorm / (kKnots - 1);
  const double x = std::max(0.0, s) / step;
  const int seg = std::min(static_cast<int>(x), kKnots - 2);
  const double t = x - seg;
  const double da = (a_[seg + 1] - a_[seg]) / step;
  const double db = (b_[seg + 1] - b_[seg]) / step;
  return {a_[seg] + t * (a_[seg + 1] - a_[seg]), b_[seg] + t * (b_[seg + 1] - b_[seg]), da, db};
}

ShExp::ShExp(int band_count)
    : band_count_(band_count),
      tensor_(TripleProductTensor::get(band_count)),
      table_(ExpLinearTable::get(band_count)) {}

void ShExp::forward(std::span<const double> v, std::span<double> out, Workspace& ws) const {
  const int count = sh_count(band_count_);
  double norm2 = 0.0;
  for (int i = 1; i < count; ++i) norm2 += v[i] * v[i];
  const double norm = std::sqrt(norm2);
  int k = 0;
  double scale = 1.0;
  while (norm * scale > kScaleThreshold && k < kMaxSquarings) {
    ++k;
    scale *= 0.5;
  }
  ws.squarings = k;
  ws.scaled_norm = norm * scale;
  ws.linear = table_->lookup(ws.scaled_norm);
  ws.dc_factor = std::exp(v[0] / (2.0 * std::sqrt(kPi)));
  ws.stages.resize(static_cast<std::size_t>(k + 1) * count);

  double* e0 = ws.stages.data();
  e0[0] = ws.linear.a * 2.0 * std::sqrt(kPi);
  for (int i = 1; i < count; ++i) e0[i] = ws.linear.b * scale * v[i];
  for (int t = 0; t < k; ++t) {
    std::span<const double> cur(ws.stages.data() + t * count, count);
    std::span<double> next(ws.stages.data() + (t + 1) * count, count);
    tensor_->square(cur, next);
  }
  const double* ek = ws.stages.data() + k * count;
  for (int i = 0; i < count; ++i) out[i] = ws.dc_factor * ek[i];
}

void ShExp::backward(std::span<const double> v, std::span<const double> out, Workspace& ws,
                     std::span<const double> grad_out, std::span<double> grad_v) const {
  const int count = sh_count(band_count_);
  const int k = ws.squarings;
  auto& scratch = ws.scratch;
  scratch.resize(2 * static_cast<std::size_t>(count));
  std::span<double> g(scratch.data(), count);
  std::span<double> tmp(scratch.data() + count, count);

  double gdc = 0.0;
  for (int i = 0; i < count; ++i) {
    g[i] = ws.dc_factor * grad_out[i];
    gdc += grad_out[i] * out[i];
  }
  gdc /= 2.0 * std::sqrt(kPi);
  for (int t = k - 1; t >= 0; --t) {
    std::span<const double> stage(ws.stages.data() + t * count, count);
    tensor_->product(g, stage, tmp);
    for (int i = 0; i < count; ++i) g[i] = 2.0 * tmp[i];
  }
  // E_0 = a(s) * one + b(s) * scale * v_hat, with s = scale * |v_hat|.
  const double scale = std::ldexp(1.0, -k);
  double g_s = ws.linear.da * 2.0 * std::sqrt(kPi) * g[0];
  double dot = 0.0;
  for (int i = 1; i < count; ++i) dot += g[i] * v[i];
  g_s += ws.linear.db * scale * dot;
  grad_v[0] = gdc;
  const double norm = ws.scaled_norm / scale;
  for (int i = 1; i < count; ++i) {
    double gi = ws.linear.b * scale * g[i];
    if (norm > 0.0) gi += g_s * scale * v[i] / norm;
    grad_v[i] = gi;
  }
}

SHVector sh_exp(const SHVector& v) {
  ShExp op(v.band_count());
  ShExp::Workspace ws;
  SHVector out(v.band_count());
  op.forward(v.coeffs(), out.coeffs(), ws);
  return out;
}

SHVector sh_exp_vjp(const SHVector& v, const SHVector& grad_out) {
  if (grad_out.band_count() != v.band_count()) throw ConfigError("band count mismatch in sh_exp_vjp");
  ShExp op(v.band_count());
  ShExp::Workspace ws;
  SHVector out(v.band_count());
  op.forward(v.coeffs(), out.coeffs(), ws);
  SHVector grad(v.band_count());
  op.backward(v.coeffs(), out.coeffs(), ws, grad_out.coeffs(), grad.coeffs());
  return grad;
}

}  // namespace shseed
