#include "shseed/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace shseed {

Aabb bounds(std::span<const Vec3> points) {
  Aabb box;
  for (const Vec3& p : points) box.extend(p);
  return box;
}

void TriangleMesh::validate() const {
  const int n = static_cast<int>(vertices.size());
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    const Triangle& tri = triangles[t];
    for (int idx : tri) {
      if (idx < 0 || idx >= n) {
        throw ConfigError("triangle " + std::to_string(t) + " references vertex " + std::to_string(idx) +
                          " of " + std::to_string(n));
      }
    }
    const double area =
        0.5 * (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]).norm();
    if (!(area > kMinTriangleArea)) throw ConfigError("degenerate triangle " + std::to_string(t));
  }
  if (normals.size() != vertices.size()) throw ConfigError("normal count does not match vertex count");
  for (const Vec3& nrm : normals) {
    if (std::abs(nrm.norm() - 1.0) > 1e-6) throw ConfigError("vertex normal is not unit length");
  }
  if (!uvs.empty() && uvs.size() != vertices.size()) throw ConfigError("uv count does not match vertex count");
  for (const Vec3& v : vertices) {
    if (!v.allFinite()) throw ConfigError("non-finite vertex position");
  }
}

std::vector<int> weld_map(std::span<const Vec3> vertices) {
  std::vector<int> order(vertices.size());
  std::iota(order.begin(), order.end(), 0);
  auto less = [&](int a, int b) {
    const Vec3& p = vertices[a];
    const Vec3& q = vertices[b];
    if (p.x() != q.x()) return p.x() < q.x();
    if (p.y() != q.y()) return p.y() < q.y();
    if (p.z() != q.z()) return p.z() < q.z();
    return a < b;
  };
  std::sort(order.begin(), order.end(), less);
  std::vector<int> weld(vertices.size());
  std::size_t start = 0;
  while (start < order.size()) {
    std::size_t end = start + 1;
    while (end < order.size() && vertices[order[end]] == vertices[order[start]]) ++end;
    for (std::size_t i = start; i < end; ++i) weld[order[i]] = order[start];
    start = end;
  }
  return weld;
}

// ---- Normals ---------------------------------------------------------------------

NormalBuilder::NormalBuilder(std::vector<Triangle> triangles, std::vector<int> weld)
    : triangles_(std::move(triangles)), weld_(std::move(weld)), vertex_count_(weld_.size()) {}

NormalBuilder::NormalBuilder(const TriangleMesh& mesh)
    : NormalBuilder(mesh.triangles, weld_map(mesh.vertices)) {}

void NormalBuilder::forward(std::span<const Vec3> positions, std::span<Vec3> normals) const {
  std::vector<Vec3> sums(vertex_count_, Vec3::Zero());
  for (const Triangle& t : triangles_) {
    const Vec3 c = (positions[t[1]] - positions[t[0]]).cross(positions[t[2]] - positions[t[0]]);
    for (int v : t) sums[weld_[v]] += c;
  }
  for (std::size_t v = 0; v < vertex_count_; ++v) {
    const Vec3& s = sums[weld_[v]];
    const double len = s.norm();
    normals[v] = len > 0.0 ? Vec3(s / len) : Vec3(0, 1, 0);
  }
}

void NormalBuilder::backward(std::span<const Vec3> positions, std::span<const Vec3> grad_normals,
                             std::span<Vec3> grad_positions) const {
  std::vector<Vec3> sums(vertex_count_, Vec3::Zero());
  for (const Triangle& t : triangles_) {
    const Vec3 c = (positions[t[1]] - positions[t[0]]).cross(positions[t[2]] - positions[t[0]]);
    for (int v : t) sums[weld_[v]] += c;
  }
  std::vector<Vec3> grad_sums(vertex_count_, Vec3::Zero());
  for (std::size_t v = 0; v < vertex_count_; ++v) {
    const Vec3& s = sums[weld_[v]];
    const double len = s.norm();
    if (!(len > 0.0)) continue;
    const Vec3 n = s / len;
    grad_sums[weld_[v]] += (grad_normals[v] - n * n.dot(grad_normals[v])) / len;
  }
  for (const Triangle& t : triangles_) {
    const Vec3 g = grad_sums[weld_[t[0]]] + grad_sums[weld_[t[1]]] + grad_sums[weld_[t[2]]];
    const Vec3 a = positions[t[1]] - positions[t[0]];
    const Vec3 b = positions[t[2]] - positions[t[0]];
    const Vec3 ga = b.cross(g);
    const Vec3 gb = g.cross(a);
    grad_positions[t[1]] += ga;
    grad_positions[t[2]] += gb;
    grad_positions[t[0]] -= ga + gb;
  }
}

void compute_normals(TriangleMesh& mesh) {
  mesh.normals.resize(mesh.vertices.size());
  NormalBuilder(mesh).forward(mesh.vertices, mesh.normals);
}

// ---- Primitives --------------------------------------------------------------------

namespace {

// Grid of (nu + 1) x (nv + 1) vertices spanning origin + [0,1] du + [0,1] dv; faces
// oriented along du x dv.
void add_grid(TriangleMesh& mesh, const Vec3& origin, const Vec3& du, const Vec3& dv, int nu, int nv) {
  const int base = static_cast<int>(mesh.vertices.size());
  for (int j = 0; j <= nv; ++j) {
    for (int i = 0; i <= nu; ++i) {
      const double u = static_cast<double>(i) / nu;
      const double v = static_cast<double>(j) / nv;
      mesh.vertices.push_back(origin + u * du + v * dv);
      mesh.uvs.emplace_back(u, v);
    }
  }
  auto at = [&](int i, int j) { return base + j * (nu + 1) + i; };
  for (int j = 0; j < nv; ++j) {
    for (int i = 0; i < nu; ++i) {
      mesh.triangles.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
      mesh.triangles.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
    }
  }
}

void check_segments(int value, int minimum, const char* what) {
  if (value < minimum) throw ConfigError(std::string(what) + " must be at least " + std::to_string(minimum));
}

}  // namespace

TriangleMesh make_plane(double size, int segments) {
  check_segments(segments, 1, "plane segments");
  TriangleMesh mesh;
  const double h = 0.5 * size;
  add_grid(mesh, Vec3(-h, 0, -h), Vec3(0, 0, size), Vec3(size, 0, 0), segments, segments);
  compute_normals(mesh);
  return mesh;
}

TriangleMesh make_uv_sphere(double radius, int rings, int segments) {
  check_segments(rings, 2, "sphere rings");
  check_segments(segments, 3, "sphere segments");
  TriangleMesh mesh;
  for (int r = 0; r <= rings; ++r) {
    const double theta = kPi * r / rings;
    for (int s = 0; s <= segments; ++s) {
      const double phi = 2.0 * kPi * s / segments;
      // Exact poles keep the welded pole vertices identical.
      const double st = (r == 0 || r == rings) ? 0.0 : std::sin(theta);
      const double ct = r == 0 ? 1.0 : (r == rings ? -1.0 : std::cos(theta));
      const double cp = s == segments ? 1.0 : std::cos(phi);
      const double sp = s == segments ? 0.0 : std::sin(phi);
      mesh.vertices.emplace_back(radius * st * cp, radius * ct, radius * st * sp);
      mesh.uvs.emplace_back(static_cast<double>(s) / segments, static_cast<double>(r) / rings);
    }
  }
  auto at = [&](int r, int s) { return r * (segments + 1) + s; };
  for (int r = 0; r < rings; ++r) {
    for (int s = 0; s < segments; ++s) {
      const int a = at(r, s), b = at(r, s + 1), c = at(r + 1, s), d = at(r + 1, s + 1);
      if (r != 0) mesh.triangles.push_back({a, b, c});
      if (r != rings - 1) mesh.triangles.push_back({b, d, c});
    }
  }
  compute_normals(mesh);
  return mesh;
}

TriangleMesh make_box(const Vec3& extents, int segments) {
  check_segments(segments, 1, "box segments");
  TriangleMesh mesh;
  const Vec3 h = 0.5 * extents;
  const Vec3 ex(extents.x(), 0, 0), ey(0, extents.y(), 0), ez(0, 0, extents.z());
  add_grid(mesh, Vec3(h.x(), -h.y(), -h.z()), ey, ez, segments, segments);   // +x
  add_grid(mesh, Vec3(-h.x(), -h.y(), -h.z()), ez, ey, segments, segments);  // -x
  add_grid(mesh, Vec3(-h.x(), h.y(), -h.z()), ez, ex, segments, segments);   // +y
  add_grid(mesh, Vec3(-h.x(), -h.y(), -h.z()), ex, ez, segments, segments);  // -y
  add_grid(mesh, Vec3(-h.x(), -h.y(), h.z()), ex, ey, segments, segments);   // +z
  add_grid(mesh, Vec3(-h.x(), -h.y(), -h.z()), ey, ex, segments, segments);  // -z
  compute_normals(mesh);
  return mesh;
}

TriangleMesh make_torus(double major_radius, double minor_radius, int rings, int segments) {
  check_segments(rings, 3, "torus rings");
  check_segments(segments, 3, "torus segments");
  TriangleMesh mesh;
  for (int i = 0; i <= rings; ++i) {
    const double u = 2.0 * kPi * (i % rings) / rings;
    for (int j = 0; j <= segments; ++j) {
      const double v = 2.0 * kPi * (j % segments) / segments;
      const double w = major_radius + minor_radius * std::cos(v);
      mesh.vertices.emplace_back(w * std::cos(u), minor_radius * std::sin(v), w * std::sin(u));
      mesh.uvs.emplace_back(static_cast<double>(i) / rings, static_cast<double>(j) / segments);
    }
  }
  auto at = [&](int i, int j) { return i * (segments + 1) + j; };
  for (int i = 0; i < rings; ++i) {
    for (int j = 0; j < segments; ++j) {
      const int a = at(i, j), b = at(i + 1, j), c = at(i, j + 1), d = at(i + 1, j + 1);
      mesh.triangles.push_back({a, c, b});
      mesh.triangles.push_back({b, c, d});
    }
  }
  compute_normals(mesh);
  return mesh;
}

void translate(TriangleMesh& mesh, const Vec3& offset) {
  for (Vec3& v : mesh.vertices) v += offset;
}

void scale(TriangleMesh& mesh, double factor) {
  for (Vec3& v : mesh.vertices) v *= factor;
  if (factor < 0.0) {
    for (Vec3& n : mesh.normals) n = -n;
  }
}

// ---- Rotations ------------------------------------------------------------------------

Mat3 quat_to_matrix(const Vec4& q) {
  const double len = q.norm();
  if (!(len > 0.0) || !std::isfinite(len)) throw NumericalError("quaternion has zero or non-finite norm");
  const Vec4 u = q / len;
  const double w = u[0], x = u[1], y = u[2], z = u[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),   //
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Vec4 quat_to_matrix_vjp(const Vec4& q, const Mat3& g) {
  const double len = q.norm();
  const Vec4 u = q / len;
  const double w = u[0], x = u[1], y = u[2], z = u[3];
  Vec4 d;
  d[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  d[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
              w * g(2, 1) - 2 * x * g(2, 2));
  d[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
              z * g(2, 1) - 2 * y * g(2, 2));
  d[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) + y * g(1, 2) +
              x * g(2, 0) + y * g(2, 1));
  return (d - u * u.dot(d)) / len;
}

Vec4 quat_coeffs(const Quat& q) { return Vec4(q.w(), q.x(), q.y(), q.z()); }

Quat quat_from_coeffs(const Vec4& q) { return Quat(q[0], q[1], q[2], q[3]); }

// ---- Sphere sets and rigid poses --------------------------------------------------------

SphereSet SphereSet::from_spheres(std::vector<Vec3> centers, std::vector<double> radii) {
  if (centers.size() != radii.size()) throw ConfigError("sphere center and radius counts differ");
  SphereSet set;
  set.rotations.assign(centers.size(), Quat::Identity());
  set.translations.assign(centers.size(), Vec3::Zero());
  set.centers = std::move(centers);
  set.radii = std::move(radii);
  return set;
}

void SphereSet::validate() const {
  const std::size_t n = centers.size();
  if (radii.size() != n || rotations.size() != n || translations.size() != n) {
    throw ConfigError("sphere set arrays have inconsistent lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(radii[i] > 0.0) || !std::isfinite(radii[i])) throw ConfigError("sphere radius must be positive");
    if (!centers[i].allFinite() || !translations[i].allFinite()) throw ConfigError("non-finite sphere center");
    if (std::abs(rotations[i].norm() - 1.0) > 1e-6) throw ConfigError("sphere node rotation is not unit");
  }
}

SphereSet SphereSet::deformed() const {
  std::vector<Vec3> moved(centers.size());
  for (std::size_t i = 0; i < centers.size(); ++i) moved[i] = centers[i] + translations[i];
  return from_spheres(std::move(moved), radii);
}

Vec3 RigidPose::apply(const Vec3& p, const Vec3& pivot) const {
  const Mat3 r = rotation.normalized().toRotationMatrix();
  return p + (r - Mat3::Identity()) * (p - pivot) + translation;
}

RigidPose RigidPose::inverse() const {
  RigidPose inv;
  inv.rotation = rotation.normalized().conjugate();
  inv.translation = -(inv.rotation.toRotationMatrix() * translation);
  return inv;
}

std::pair<TriangleMesh, SphereSet> apply_rigid(const TriangleMesh& mesh, const SphereSet& spheres,
                                               const RigidPose& pose, const Vec3& pivot) {
  const Quat q = pose.rotation.normalized();
  const Mat3 r = q.toRotationMatrix();
  TriangleMesh out = mesh;
  for (Vec3& v : out.vertices) v = pose.apply(v, pivot);
  for (Vec3& n : out.normals) n = r * n;
  SphereSet s = spheres;
  for (std::size_t i = 0; i < s.size(); ++i) {
    s.centers[i] = pose.apply(s.centers[i], pivot);
    s.translations[i] = r * s.translations[i];
    s.rotations[i] = (q * s.rotations[i] * q.conjugate()).normalized();
  }
  return {std::move(out), std::move(s)};
}

void rigid_points(std::span<const double> params, const Vec3& pivot, std::span<const Vec3> in,
                  std::span<Vec3> out) {
  const Mat3 r = quat_to_matrix(Vec4(params[0], params[1], params[2], params[3]));
  const Mat3 rm = r - Mat3::Identity();
  const Vec3 t(params[4], params[5], params[6]);
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] + rm * (in[i] - pivot) + t;
}

void rigid_points_vjp(std::span<const double> params, const Vec3& pivot, std::span<const Vec3> in,
                      std::span<const Vec3> grad_out, std::span<double> grad_params,
                      std::span<Vec3> grad_in) {
  const Vec4 q(params[0], params[1], params[2], params[3]);
  const Mat3 r = quat_to_matrix(q);
  Mat3 gr = Mat3::Zero();
  Vec3 gt = Vec3::Zero();
  for (std::size_t i = 0; i < in.size(); ++i) {
    gr += grad_out[i] * (in[i] - pivot).transpose();
    gt += grad_out[i];
    if (!grad_in.empty()) grad_in[i] += r.transpose() * grad_out[i];
  }
  const Vec4 gq = quat_to_matrix_vjp(q, gr);
  for (int c = 0; c < 4; ++c) grad_params[c] += gq[c];
  for (int c = 0; c < 3; ++c) grad_params[4 + c] += gt[c];
}

// ---- Embedded deformation graph ------------------------------------------------------

EmbeddedGraph build_graph(const TriangleMesh& mesh, const SphereSet& spheres, int k) {
  const int count = static_cast<int>(spheres.size());
  if (k < 1 || k > count) {
    throw ConfigError("graph K must be in [1, sphere count]; got K=" + std::to_string(k) + " with " +
                      std::to_string(count) + " spheres");
  }
  EmbeddedGraph graph;
  graph.k = k;
  graph.rest_nodes = spheres.centers;
  graph.nodes.resize(mesh.vertex_count() * k);
  graph.weights.resize(mesh.vertex_count() * k);
  std::vector<std::pair<double, int>> dist(count);
  const int keep = std::min(k + 1, count);
  for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
    for (int j = 0; j < count; ++j) dist[j] = {(mesh.vertices[v] - spheres.centers[j]).norm(), j};
    std::partial_sort(dist.begin(), dist.begin() + keep, dist.end());
    const double ref = k < count ? dist[k].first : dist[k - 1].first * (1.0 + 1e-6) + 1e-12;
    double total = 0.0;
    for (int i = 0; i < k; ++i) {
      const double f = ref > 0.0 ? std::max(0.0, 1.0 - dist[i].first / ref) : 0.0;
      graph.nodes[v * k + i] = dist[i].second;
      graph.weights[v * k + i] = f * f;
      total += f * f;
    }
    for (int i = 0; i < k; ++i) {
      graph.weights[v * k + i] = total > 0.0 ? graph.weights[v * k + i] / total : 1.0 / k;
    }
  }
  return graph;
}

std::vector<double> node_params(const SphereSet& spheres) {
  std::vector<double> p(7 * spheres.size());
  for (std::size_t j = 0; j < spheres.size(); ++j) {
    const Quat& q = spheres.rotations[j];
    const Vec3& t = spheres.translations[j];
    p[7 * j + 0] = q.w();
    p[7 * j + 1] = q.x();
    p[7 * j + 2] = q.y();
    p[7 * j + 3] = q.z();
    for (int c = 0; c < 3; ++c) p[7 * j + 4 + c] = t[c];
  }
  return p;
}

void set_node_params(SphereSet& spheres, std::span<const double> params) {
  if (params.size() != 7 * spheres.size()) throw ConfigError("node parameter count mismatch");
  for (std::size_t j = 0; j < spheres.size(); ++j) {
    spheres.rotations[j] =
        Quat(params[7 * j], params[7 * j + 1], params[7 * j + 2], params[7 * j + 3]).normalized();
    spheres.translations[j] = Vec3(params[7 * j + 4], params[7 * j + 5], params[7 * j + 6]);
  }
}

void deform_points(const EmbeddedGraph& graph, std::span<const Vec3> rest, std::span<const double> params,
                   std::span<Vec3> out) {
  const std::size_t nodes = graph.rest_nodes.size();
  std::vector<Mat3> rm(nodes);
  std::vector<Vec3> t(nodes);
  for (std::size_t j = 0; j < nodes; ++j) {
    rm[j] = quat_to_matrix(Vec4(params[7 * j], params[7 * j + 1], params[7 * j + 2], params[7 * j + 3])) -
            Mat3::Identity();
    t[j] = Vec3(params[7 * j + 4], params[7 * j + 5], params[7 * j + 6]);
  }
  const int k = graph.k;
  for (std::size_t v = 0; v < rest.size(); ++v) {
    Vec3 offset = Vec3::Zero();
    for (int i = 0; i < k; ++i) {
      const int j = graph.nodes[v * k + i];
      offset += graph.weights[v * k + i] * (rm[j] * (rest[v] - graph.rest_nodes[j]) + t[j]);
    }
    out[v] = rest[v] + offset;
  }
}

void deform_points_vjp(const EmbeddedGraph& graph, std::span<const Vec3> rest,
                       std::span<const double> params, std::span<const Vec3> grad_out,
                       std::span<double> grad_params) {
  const std::size_t nodes = graph.rest_nodes.size();
  std::vector<Mat3> gr(nodes, Mat3::Zero());
  std::vector<Vec3> gt(nodes, Vec3::Zero());
  const int k = graph.k;
  for (std::size_t v = 0; v < rest.size(); ++v) {
    for (int i = 0; i < k; ++i) {
      const int j = graph.nodes[v * k + i];
      const double w = graph.weights[v * k + i];
      gr[j] += w * grad_out[v] * (rest[v] - graph.rest_nodes[j]).transpose();
      gt[j] += w * grad_out[v];
    }
  }
  for (std::size_t j = 0; j < nodes; ++j) {
    const Vec4 gq =
        quat_to_matrix_vjp(Vec4(params[7 * j], params[7 * j + 1], params[7 * j + 2], params[7 * j + 3]), gr[j]);
    for (int c = 0; c < 4; ++c) grad_params[7 * j + c] += gq[c];
    for (int c = 0; c < 3; ++c) grad_params[7 * j + 4 + c] += gt[j][c];
  }
}

TriangleMesh deform(const TriangleMesh& mesh, const EmbeddedGraph& graph, const SphereSet& spheres) {
  if (graph.vertex_count() != mesh.vertex_count()) throw ConfigError("graph was built for a different mesh");
  if (graph.rest_nodes.size() != spheres.size()) throw ConfigError("graph node count differs from sphere count");
  TriangleMesh out = mesh;
  const std::vector<double> params = node_params(spheres);
  deform_points(graph, mesh.vertices, params, out.vertices);
  compute_normals(out);
  return out;
}

}  // namespace shseed
