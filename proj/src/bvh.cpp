#include "shseed/bvh.hpp"

#include <algorithm>
#include <numeric>

namespace shseed {

namespace {

constexpr int kLeafSize = 4;

bool ray_box(const Ray& ray, const Vec3& inv_dir, const Aabb& box, double t_min, double t_max) {
  for (int a = 0; a < 3; ++a) {
    double t0 = (box.lo[a] - ray.origin[a]) * inv_dir[a];
    double t1 = (box.hi[a] - ray.origin[a]) * inv_dir[a];
    if (t0 > t1) std::swap(t0, t1);
    // NaN from 0 * inf (origin on a slab plane, axis-parallel ray) keeps the interval.
    if (t0 == t0) t_min = std::max(t_min, t0);
    if (t1 == t1) t_max = std::min(t_max, t1);
    if (t_max < t_min) return false;
  }
  return true;
}

double box_distance2(const Aabb& box, const Vec3& p) {
  const Vec3 d = (box.lo - p).cwiseMax(p - box.hi).cwiseMax(0.0);
  return d.squaredNorm();
}

}  // namespace

std::optional<RayHit> intersect_triangle(const Ray& ray, const Vec3& a, const Vec3& b, const Vec3& c,
                                         double t_min, double t_max) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 p = ray.direction.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-300) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = ray.origin - a;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double v = ray.direction.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (t < t_min || t > t_max) return std::nullopt;
  return RayHit{t, -1, u, v};
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

Bvh::Bvh(std::vector<Vec3> vertices, std::vector<Triangle> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
  order_.resize(triangles_.size());
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * triangles_.size() / kLeafSize + 2);
  if (triangles_.empty()) {
    nodes_.push_back(Node{});
    return;
  }
  build(0, static_cast<int>(triangles_.size()));
}

int Bvh::build(int first, int count) {
  const int index = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{});
  Aabb box, centroids;
  for (int i = first; i < first + count; ++i) {
    const Triangle& t = triangles_[order_[i]];
    for (int v : t) box.extend(vertices_[v]);
    centroids.extend((vertices_[t[0]] + vertices_[t[1]] + vertices_[t[2]]) / 3.0);
  }
  nodes_[index].box = box;
  if (count <= kLeafSize) {
    nodes_[index].first = first;
    nodes_[index].count = count;
    return index;
  }
  int axis = 0;
  (centroids.hi - centroids.lo).maxCoeff(&axis);
  const int mid = first + count / 2;
  auto key = [&](int tri) {
    const Triangle& t = triangles_[tri];
    return vertices_[t[0]][axis] + vertices_[t[1]][axis] + vertices_[t[2]][axis];
  };
  std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                   [&](int a, int b) { return key(a) < key(b) || (key(a) == key(b) && a < b); });
  const int left = build(first, mid - first);
  const int right = build(mid, first + count - mid);
  nodes_[index].left = left;
  nodes_[index].right = right;
  return index;
}

template <typename Visit>
void Bvh::traverse_ray(const Ray& ray, double t_min, double& t_max, Visit&& visit) const {
  if (triangles_.empty()) return;
  const Vec3 inv_dir = ray.direction.cwiseInverse();
  int stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (!ray_box(ray, inv_dir, node.box, t_min, t_max)) continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        if (!visit(order_[i])) return;
      }
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
}

std::optional<RayHit> Bvh::intersect(const Ray& ray, double t_min, double t_max) const {
  std::optional<RayHit> best;
  traverse_ray(ray, t_min, t_max, [&](int tri) {
    const Triangle& t = triangles_[tri];
    if (auto hit = intersect_triangle(ray, vertices_[t[0]], vertices_[t[1]], vertices_[t[2]], t_min, t_max)) {
      if (!best || hit->t < best->t || (hit->t == best->t && tri < best->triangle)) {
        best = *hit;
        best->triangle = tri;
        t_max = hit->t;
      }
    }
    return true;
  });
  return best;
}

bool Bvh::occluded(const Ray& ray, double t_min, double t_max) const {
  bool hit = false;
  traverse_ray(ray, t_min, t_max, [&](int tri) {
    const Triangle& t = triangles_[tri];
    hit = intersect_triangle(ray, vertices_[t[0]], vertices_[t[1]], vertices_[t[2]], t_min, t_max).has_value();
    return !hit;
  });
  return hit;
}

int Bvh::count_hits(const Ray& ray, double t_min) const {
  int hits = 0;
  double t_max = std::numeric_limits<double>::infinity();
  traverse_ray(ray, t_min, t_max, [&](int tri) {
    const Triangle& t = triangles_[tri];
    if (intersect_triangle(ray, vertices_[t[0]], vertices_[t[1]], vertices_[t[2]], t_min, t_max)) ++hits;
    return true;
  });
  return hits;
}

ClosestPoint Bvh::closest_point(const Vec3& p) const {
  ClosestPoint best;
  best.distance = std::numeric_limits<double>::infinity();
  if (triangles_.empty()) return best;
  double best2 = std::numeric_limits<double>::infinity();
  int stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (box_distance2(node.box, p) >= best2) continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const Triangle& t = triangles_[order_[i]];
        const Vec3 q = closest_point_on_triangle(p, vertices_[t[0]], vertices_[t[1]], vertices_[t[2]]);
        const double d2 = (q - p).squaredNorm();
        if (d2 < best2) {
          best2 = d2;
          best.point = q;
          best.triangle = order_[i];
        }
      }
    } else {
      // Visit the nearer child first.
      const double dl = box_distance2(nodes_[node.left].box, p);
      const double dr = box_distance2(nodes_[node.right].box, p);
      if (dl < dr) {
        stack[top++] = node.right;
        stack[top++] = node.left;
      } else {
        stack[top++] = node.left;
        stack[top++] = node.right;
      }
    }
  }
  best.distance = std::sqrt(best2);
  return best;
}

bool Bvh::inside(const Vec3& p) const {
  static const Vec3 dirs[3] = {Vec3(0.8727, 0.3142, 0.3737), Vec3(-0.2718, 0.9135, -0.3027),
                               Vec3(0.1414, -0.3606, -0.9219)};
  int votes = 0;
  for (const Vec3& d : dirs) votes += count_hits(Ray{p, d}, 0.0) % 2;
  return votes >= 2;
}

}  // namespace shseed
