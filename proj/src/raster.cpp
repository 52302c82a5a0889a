#include "shseed/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>
#include <utility>

namespace shseed {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Pixel index range whose centers lie in [lo, hi], clipped to [0, size).
std::pair<int, int> pixel_range(double lo, double hi, int size) {
  const double first = std::clamp(std::ceil(lo - 0.5), 0.0, static_cast<double>(size));
  const double last = std::clamp(std::floor(hi - 0.5), -1.0, size - 1.0);
  return {static_cast<int>(first), static_cast<int>(last)};
}

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Ray from the camera origin along d against triangle (p0, p1, p2); solves
// p0 + u e1 + v e2 = t d. Returns false when parallel or outside.
bool intersect(const Vec3& d, const Vec3& p0, const Vec3& p1, const Vec3& p2, double& u, double& v, double& t) {
  const Vec3 e1 = p1 - p0, e2 = p2 - p0;
  const Vec3 pvec = d.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) <= 1e-14 * e1.norm() * e2.norm()) return false;
  const double inv = 1.0 / det;
  const Vec3 tvec = -p0;
  u = tvec.dot(pvec) * inv;
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 qvec = tvec.cross(e1);
  v = d.dot(qvec) * inv;
  if (v < 0.0 || u + v > 1.0) return false;
  t = e2.dot(qvec) * inv;
  return true;
}

// d(pixel)/d(camera point) as a 2x3 Jacobian applied transposed to g.
Vec3 project_vjp(const Camera& cam, const Vec3& p, const Vec2& g) {
  const double iz = 1.0 / p.z();
  return Vec3(g.x() * cam.fx * iz, g.y() * cam.fy * iz,
              -(g.x() * cam.fx * p.x() + g.y() * cam.fy * p.y()) * iz * iz);
}

struct Lookup {
  Vec3 value = Vec3::Ones();
  Vec3 d_u = Vec3::Zero(), d_v = Vec3::Zero();
  BilinearTap tap;
};

Lookup texture_lookup(const Image& tex, const Vec2& uv) {
  Lookup l;
  l.tap = bilinear_tap(tex.width, tex.height, uv);
  l.value.setZero();
  for (int k = 0; k < 4; ++k) {
    const std::size_t o = l.tap.pixel[k] * tex.channels;
    for (int c = 0; c < 3; ++c) {
      const double texel = tex.data[o + std::min(c, tex.channels - 1)];
      l.value[c] += l.tap.weight[k] * texel;
      l.d_u[c] += l.tap.d_u[k] * texel;
      l.d_v[c] += l.tap.d_v[k] * texel;
    }
  }
  return l;
}

void scatter_texture(Image* grad, const BilinearTap& tap, const Vec3& g) {
  if (grad == nullptr) return;
  for (int k = 0; k < 4; ++k) {
    const std::size_t o = tap.pixel[k] * grad->channels;
    for (int c = 0; c < grad->channels; ++c) grad->data[o + c] += tap.weight[k] * g[std::min(c, 2)];
  }
}

}  // namespace

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y_degrees, int width,
                       int height) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);
  Camera cam;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -cam.rotation * eye;
  cam.width = width;
  cam.height = height;
  cam.fy = 0.5 * height / std::tan(0.5 * fov_y_degrees * kPi / 180.0);
  cam.fx = cam.fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.validate();
  return cam;
}

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
    throw ConfigError("camera focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) throw ConfigError("camera image size must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy) || !translation.allFinite() || !rotation.allFinite()) {
    throw ConfigError("camera parameters must be finite");
  }
  if ((rotation * rotation.transpose() - Mat3::Identity()).norm() > 1e-6 || rotation.determinant() < 0.0) {
    throw ConfigError("camera rotation is not a proper rotation");
  }
}

double soft_coverage(double signed_distance, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("soft coverage sigma must be positive");
  return sigmoid(signed_distance / sigma);
}

RasterTopology::RasterTopology(std::vector<Triangle> triangles, std::vector<int> weld)
    : triangles_(std::move(triangles)) {
  struct HalfEdge {
    int lo, hi, face, local;
  };
  std::vector<HalfEdge> half;
  half.reserve(triangles_.size() * 3);
  const auto id = [&](int v) { return weld.empty() ? v : weld[v]; };
  for (std::size_t f = 0; f < triangles_.size(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const int a = id(triangles_[f][k]), b = id(triangles_[f][(k + 1) % 3]);
      half.push_back({std::min(a, b), std::max(a, b), static_cast<int>(f), k});
    }
  }
  std::sort(half.begin(), half.end(), [](const HalfEdge& x, const HalfEdge& y) {
    return std::tie(x.lo, x.hi, x.face, x.local) < std::tie(y.lo, y.hi, y.face, y.local);
  });
  for (std::size_t i = 0; i < half.size();) {
    std::size_t j = i;
    while (j < half.size() && half[j].lo == half[i].lo && half[j].hi == half[i].hi) ++j;
    Edge e{};
    e.faces[1] = -1;
    e.manifold = (j - i) <= 2;
    for (std::size_t s = 0; s < std::min<std::size_t>(j - i, 2); ++s) {
      const HalfEdge& h = half[i + s];
      const Triangle& t = triangles_[h.face];
      e.faces[s] = h.face;
      e.corners[s][0] = t[h.local];
      e.corners[s][1] = t[(h.local + 1) % 3];
      e.corners[s][2] = t[(h.local + 2) % 3];
    }
    edges_.push_back(e);
    i = j;
  }
}

std::size_t Framebuffer::covered_count() const {
  return static_cast<std::size_t>(std::count_if(triangle.begin(), triangle.end(), [](int t) { return t >= 0; }));
}

double Rasterizer::band_weight(double distance, double* derivative) const {
  const double sigma = options_.sigma;
  const double edge_weight = 2.0 * sigmoid(-options_.band / sigma);
  const double s = sigmoid(-distance / sigma);
  if (derivative != nullptr) *derivative = -2.0 * s * (1.0 - s) / sigma / (1.0 - edge_weight);
  return (2.0 * s - edge_weight) / (1.0 - edge_weight);
}

void Rasterizer::coverage(const Camera& camera, std::span<const Vec3> positions, const RasterTopology& topology,
                          Framebuffer& fb) const {
  const int w = camera.width, h = camera.height;
  const std::size_t pixels = static_cast<std::size_t>(w) * h;
  fb.width = w;
  fb.height = h;
  fb.triangle.assign(pixels, -1);
  fb.depth.assign(pixels, kInf);
  fb.bary.assign(pixels, Vec3::Zero());
  fb.soft.assign(pixels, {});
  fb.camera_positions.resize(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) fb.camera_positions[i] = camera.to_camera(positions[i]);
  const auto& P = fb.camera_positions;
  const auto& tris = topology.triangles();
  const double near = options_.near;

  std::vector<char> active(tris.size(), 0);
  std::vector<char> front(tris.size(), 0);
  for (std::size_t f = 0; f < tris.size(); ++f) {
    const Vec3 &p0 = P[tris[f][0]], &p1 = P[tris[f][1]], &p2 = P[tris[f][2]];
    if (p0.z() < near || p1.z() < near || p2.z() < near) continue;
    active[f] = 1;
    front[f] = p0.dot((p1 - p0).cross(p2 - p0)) < 0.0;
    const Vec2 s0 = camera.project(p0), s1 = camera.project(p1), s2 = camera.project(p2);
    const double xmin = std::min({s0.x(), s1.x(), s2.x()}), xmax = std::max({s0.x(), s1.x(), s2.x()});
    const double ymin = std::min({s0.y(), s1.y(), s2.y()}), ymax = std::max({s0.y(), s1.y(), s2.y()});
    const auto [x0, x1] = pixel_range(xmin, xmax, w);
    const auto [y0, y1] = pixel_range(ymin, ymax, h);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        double u, v, t;
        if (!intersect(camera.ray(Vec2(x + 0.5, y + 0.5)), p0, p1, p2, u, v, t) || t < near) continue;
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        const int fi = static_cast<int>(f);
        if (fb.triangle[p] < 0 || std::tie(t, fi) < std::tie(fb.depth[p], fb.triangle[p])) {
          fb.depth[p] = t;
          fb.triangle[p] = fi;
          fb.bary[p] = Vec3(1.0 - u - v, u, v);
        }
      }
    }
  }
  if (!options_.soft) return;

  const auto& edges = topology.edges();
  for (std::size_t ei = 0; ei < edges.size(); ++ei) {
    const auto& e = edges[ei];
    const bool a0 = active[e.faces[0]] != 0;
    const bool a1 = e.faces[1] >= 0 && active[e.faces[1]] != 0;
    int owner = -1;
    if (e.faces[1] < 0 || !e.manifold) {
      owner = a0 ? 0 : -1;
    } else if (a0 != a1) {
      owner = a0 ? 0 : 1;
    } else if (a0 && front[e.faces[0]] != front[e.faces[1]]) {
      owner = front[e.faces[0]] ? 0 : 1;
    }
    if (owner < 0) continue;
    const int va = e.corners[owner][0], vb = e.corners[owner][1], vc = e.corners[owner][2];
    const Vec2 pa = camera.project(P[va]), pb = camera.project(P[vb]), pc = camera.project(P[vc]);
    const Vec2 dir = pb - pa;
    const double len2 = dir.squaredNorm();
    const double inner = cross2(dir, pc - pa);
    if (len2 <= 0.0 || inner == 0.0) continue;
    const double band = options_.band;
    const auto [x0, x1] = pixel_range(std::min(pa.x(), pb.x()) - band, std::max(pa.x(), pb.x()) + band, w);
    const auto [y0, y1] = pixel_range(std::min(pa.y(), pb.y()) - band, std::max(pa.y(), pb.y()) + band, h);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 q(x + 0.5, y + 0.5);
        if (cross2(dir, q - pa) * inner >= 0.0) continue;  // not on the outer side
        const double lambda = std::clamp((q - pa).dot(dir) / len2, 0.0, 1.0);
        const double dist = (q - (pa + lambda * dir)).norm();
        if (!(dist < band) || dist == 0.0) continue;
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        const double inv_depth = (1.0 - lambda) / P[va].z() + lambda / P[vb].z();
        if (!(1.0 / inv_depth < fb.depth[p])) continue;
        auto& s = fb.soft[p];
        const int eid = static_cast<int>(ei);
        if (s.edge >= 0 && std::tie(s.distance, s.edge) <= std::tie(dist, eid)) continue;
        s.edge = eid;
        s.triangle = e.faces[owner];
        s.a = va;
        s.b = vb;
        s.lambda = lambda;
        s.distance = dist;
        s.weight = band_weight(dist, nullptr);
      }
    }
  }
}

namespace {

struct Sampled {
  Vec3 attribute, color;
  Vec2 uv = Vec2::Zero();
  Lookup tex;
  bool textured = false;
};

Sampled sample(const RasterMaterial& material, int triangle, const Vec3& attribute, const Vec2& uv) {
  Sampled s;
  s.attribute = attribute;
  s.uv = uv;
  const int t = material.texture_of(triangle);
  if (t >= 0) {
    s.textured = true;
    s.tex = texture_lookup(*material.textures[t], uv);
    s.color = attribute.cwiseProduct(s.tex.value);
  } else {
    s.color = attribute;
  }
  return s;
}

Sampled sample_hard(const Framebuffer& fb, std::size_t p, const RasterTopology& topology,
                    std::span<const Vec3> attributes, const RasterMaterial& material) {
  const int f = fb.triangle[p];
  const Triangle& t = topology.triangles()[f];
  const Vec3& b = fb.bary[p];
  // offset form: a constant attribute is reproduced exactly
  const Vec3& a0 = attributes[t[0]];
  const Vec3 attr = a0 + b[1] * (attributes[t[1]] - a0) + b[2] * (attributes[t[2]] - a0);
  Vec2 uv = Vec2::Zero();
  if (material.texture_of(f) >= 0) {
    const Vec2& u0 = material.uvs[t[0]];
    uv = u0 + b[1] * (material.uvs[t[1]] - u0) + b[2] * (material.uvs[t[2]] - u0);
  }
  return sample(material, f, attr, uv);
}

struct EdgeInterp {
  double alpha, beta, denom;
};

EdgeInterp edge_interp(const Framebuffer& fb, const Framebuffer::Soft& s) {
  const double za = fb.camera_positions[s.a].z(), zb = fb.camera_positions[s.b].z();
  EdgeInterp e{(1.0 - s.lambda) / za, s.lambda / zb, 0.0};
  e.denom = e.alpha + e.beta;
  return e;
}

Sampled sample_edge(const Framebuffer& fb, const Framebuffer::Soft& s, std::span<const Vec3> attributes,
                    const RasterMaterial& material) {
  const EdgeInterp e = edge_interp(fb, s);
  const Vec3 attr = (e.alpha * attributes[s.a] + e.beta * attributes[s.b]) / e.denom;
  Vec2 uv = Vec2::Zero();
  if (material.texture_of(s.triangle) >= 0) uv = (e.alpha * material.uvs[s.a] + e.beta * material.uvs[s.b]) / e.denom;
  return sample(material, s.triangle, attr, uv);
}

}  // namespace

void Rasterizer::shade(const Framebuffer& fb, const RasterTopology& topology, std::span<const Vec3> attributes,
                       const RasterMaterial& material, Image& out) const {
  out = Image(fb.width, fb.height);
  for (int y = 0; y < fb.height; ++y) {
    for (int x = 0; x < fb.width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * fb.width + x;
      Vec3 color = fb.triangle[p] >= 0 ? sample_hard(fb, p, topology, attributes, material).color : options_.background;
      const auto& s = fb.soft[p];
      if (s.edge >= 0) {
        color = s.weight * sample_edge(fb, s, attributes, material).color + (1.0 - s.weight) * color;
      }
      out.set_rgb(x, y, color);
    }
  }
}

Image Rasterizer::render(const Camera& camera, std::span<const Vec3> positions, const RasterTopology& topology,
                         std::span<const Vec3> attributes, const RasterMaterial& material) const {
  Framebuffer fb;
  coverage(camera, positions, topology, fb);
  Image out;
  shade(fb, topology, attributes, material, out);
  return out;
}

void Rasterizer::backward(const Camera& camera, const Framebuffer& fb, const RasterTopology& topology,
                          std::span<const Vec3> attributes, const RasterMaterial& material, const Image& grad_image,
                          std::span<Vec3> grad_attributes, std::span<Image*> grad_textures,
                          std::span<Vec3> grad_positions) const {
  if (grad_image.width != fb.width || grad_image.height != fb.height || grad_image.channels != 3) {
    throw ConfigError("image gradient shape does not match the framebuffer");
  }
  const bool want_attr = !grad_attributes.empty();
  const bool want_pos = !grad_positions.empty();
  std::vector<Vec3> grad_cam;
  if (want_pos) grad_cam.assign(fb.camera_positions.size(), Vec3::Zero());
  const auto& P = fb.camera_positions;

  // Splits dL/dcolor into the attribute and uv adjoints of one sample.
  const auto split = [&](const Sampled& s, const Vec3& g, int triangle, Vec3& g_attr, Vec2& g_uv) {
    if (!s.textured) {
      g_attr = g;
      g_uv.setZero();
      return;
    }
    g_attr = g.cwiseProduct(s.tex.value);
    const Vec3 ge = g.cwiseProduct(s.attribute);
    g_uv = Vec2(ge.dot(s.tex.d_u), ge.dot(s.tex.d_v));
    const int t = material.texture_of(triangle);
    if (t < static_cast<int>(grad_textures.size())) scatter_texture(grad_textures[t], s.tex.tap, ge);
  };

  for (int y = 0; y < fb.height; ++y) {
    for (int x = 0; x < fb.width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * fb.width + x;
      const Vec3 g = grad_image.rgb(x, y);
      if (g.isZero()) continue;
      const auto& s = fb.soft[p];
      const bool hard = fb.triangle[p] >= 0;
      Sampled hard_sample;
      if (hard) hard_sample = sample_hard(fb, p, topology, attributes, material);
      const Vec3 hard_color = hard ? hard_sample.color : options_.background;
      Vec3 g_hard = g;

      if (s.edge >= 0) {
        const Sampled es = sample_edge(fb, s, attributes, material);
        g_hard = (1.0 - s.weight) * g;
        Vec3 g_attr;
        Vec2 g_uv;
        split(es, s.weight * g, s.triangle, g_attr, g_uv);
        const EdgeInterp ei = edge_interp(fb, s);
        if (want_attr) {
          grad_attributes[s.a] += (ei.alpha / ei.denom) * g_attr;
          grad_attributes[s.b] += (ei.beta / ei.denom) * g_attr;
        }
        if (want_pos) {
          const bool textured = material.texture_of(s.triangle) >= 0;
          double g_alpha = g_attr.dot(attributes[s.a] - es.attribute);
          double g_beta = g_attr.dot(attributes[s.b] - es.attribute);
          if (textured) {
            g_alpha += g_uv.dot(material.uvs[s.a] - es.uv);
            g_beta += g_uv.dot(material.uvs[s.b] - es.uv);
          }
          g_alpha /= ei.denom;
          g_beta /= ei.denom;
          const double za = P[s.a].z(), zb = P[s.b].z();
          const double g_lambda = -g_alpha / za + g_beta / zb;
          double g_weight_d = 0.0;
          band_weight(s.distance, &g_weight_d);
          const double g_dist = g.dot(es.color - hard_color) * g_weight_d;

          const Vec2 pa = camera.project(P[s.a]), pb = camera.project(P[s.b]);
          const Vec2 q(x + 0.5, y + 0.5);
          const Vec2 dir = pb - pa, r = q - pa;
          const double len2 = dir.squaredNorm();
          const Vec2 closest = pa + s.lambda * dir;
          const Vec2 n = (closest - q) / s.distance;
          Vec2 g_pa = g_dist * (1.0 - s.lambda) * n;
          Vec2 g_pb = g_dist * s.lambda * n;
          if (s.lambda > 0.0 && s.lambda < 1.0) {
            g_pa += g_lambda * ((2.0 * s.lambda - 1.0) * dir - r) / len2;
            g_pb += g_lambda * (r - 2.0 * s.lambda * dir) / len2;
          }
          grad_cam[s.a] += project_vjp(camera, P[s.a], g_pa);
          grad_cam[s.b] += project_vjp(camera, P[s.b], g_pb);
          grad_cam[s.a].z() += g_alpha * (-(1.0 - s.lambda) / (za * za));
          grad_cam[s.b].z() += g_beta * (-s.lambda / (zb * zb));
        }
      }

      if (!hard) continue;
      const int f = fb.triangle[p];
      const Triangle& t = topology.triangles()[f];
      const Vec3& b = fb.bary[p];
      Vec3 g_attr;
      Vec2 g_uv;
      split(hard_sample, g_hard, f, g_attr, g_uv);
      if (want_attr) {
        for (int k = 0; k < 3; ++k) grad_attributes[t[k]] += b[k] * g_attr;
      }
      if (want_pos) {
        double gu = g_attr.dot(attributes[t[1]] - attributes[t[0]]);
        double gv = g_attr.dot(attributes[t[2]] - attributes[t[0]]);
        if (material.texture_of(f) >= 0) {
          gu += g_uv.dot(material.uvs[t[1]] - material.uvs[t[0]]);
          gv += g_uv.dot(material.uvs[t[2]] - material.uvs[t[0]]);
        }
        Mat3 m;
        m.col(0) = P[t[1]] - P[t[0]];
        m.col(1) = P[t[2]] - P[t[0]];
        m.col(2) = -camera.ray(Vec2(x + 0.5, y + 0.5));
        const Vec3 yv = m.transpose().partialPivLu().solve(Vec3(gu, gv, 0.0));
        for (int k = 0; k < 3; ++k) grad_cam[t[k]] -= b[k] * yv;
      }
    }
  }
  if (want_pos) {
    for (std::size_t i = 0; i < grad_cam.size(); ++i) grad_positions[i] += camera.rotation.transpose() * grad_cam[i];
  }
}

}  // namespace shseed
