#include "exciteid/convex_hull.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <utility>

#include <Eigen/Geometry>

#include "exciteid/error.hpp"

namespace exciteid {

double ConvexHull::signed_distance(const Eigen::Vector3d& p) const {
  double d = -std::numeric_limits<double>::infinity();
  for (const auto& f : facets) d = std::max(d, f.normal.dot(p) - f.offset);
  return d;
}

namespace {

struct Face {
  std::array<int, 3> v;
  Eigen::Vector3d n;
  double off = 0.0;
  std::vector<int> outside;
  bool alive = true;
};

bool lex_less(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
}

class Builder {
 public:
  explicit Builder(const PointCloud& pts) : P_(pts) {
    double scale = 0.0;
    if (P_.rows() > 0) scale = P_.cwiseAbs().maxCoeff();
    eps_ = 1e-11 * std::max(1.0, scale);
  }

  ConvexHull run() {
    const int n = static_cast<int>(P_.rows());
    if (n < 4) throw DegenerateError("convex_hull: need at least 4 points");
    if (!P_.allFinite()) throw DegenerateError("convex_hull: non-finite coordinates");
    initial_simplex();
    for (int i = 0; i < n; ++i) {
      if (std::find(simplex_.begin(), simplex_.end(), i) == simplex_.end()) assign(i);
    }
    for (;;) {
      int fi = -1;
      for (std::size_t k = 0; k < faces_.size(); ++k) {
        if (faces_[k].alive && !faces_[k].outside.empty()) {
          fi = static_cast<int>(k);
          break;
        }
      }
      if (fi < 0) break;
      add_point(farthest(faces_[static_cast<std::size_t>(fi)]));
    }
    ConvexHull hull;
    hull.tolerance = eps_;
    std::set<int> verts;
    for (const auto& f : faces_) {
      if (!f.alive) continue;
      hull.facets.push_back(HullFacet{f.v, f.n, f.off});
      verts.insert(f.v.begin(), f.v.end());
    }
    hull.vertices.assign(verts.begin(), verts.end());
    return hull;
  }

 private:
  Eigen::Vector3d pt(int i) const { return P_.row(i).transpose(); }

  double dist(const Face& f, int i) const { return f.n.dot(pt(i)) - f.off; }

  void make_face(int a, int b, int c) {
    Face f;
    f.v = {a, b, c};
    Eigen::Vector3d n = (pt(b) - pt(a)).cross(pt(c) - pt(a));
    const double len = n.norm();
    f.n = len > 0.0 ? Eigen::Vector3d(n / len) : Eigen::Vector3d::Zero();
    f.off = f.n.dot(pt(a));
    faces_.push_back(std::move(f));
  }

  void initial_simplex() {
    const int n = static_cast<int>(P_.rows());
    // Extreme points along each axis, then the farthest pair among them.
    std::vector<int> ext;
    for (int ax = 0; ax < 3; ++ax) {
      int lo = 0, hi = 0;
      for (int i = 1; i < n; ++i) {
        if (P_(i, ax) < P_(lo, ax)) lo = i;
        if (P_(i, ax) > P_(hi, ax)) hi = i;
      }
      ext.push_back(lo);
      ext.push_back(hi);
    }
    int i0 = ext[0], i1 = ext[1];
    double best = -1.0;
    for (std::size_t a = 0; a < ext.size(); ++a) {
      for (std::size_t b = a + 1; b < ext.size(); ++b) {
        const double d = (pt(ext[a]) - pt(ext[b])).norm();
        if (d > best) {
          best = d;
          i0 = std::min(ext[a], ext[b]);
          i1 = std::max(ext[a], ext[b]);
        }
      }
    }
    if (best <= eps_) throw DegenerateError("convex_hull: all points coincide");
    const Eigen::Vector3d dir = (pt(i1) - pt(i0)).normalized();
    int i2 = -1;
    best = -1.0;
    for (int i = 0; i < n; ++i) {
      const double d = (pt(i) - pt(i0)).cross(dir).norm();
      if (d > best) {
        best = d;
        i2 = i;
      }
    }
    if (best <= eps_) throw DegenerateError("convex_hull: points are collinear");
    const Eigen::Vector3d nrm = (pt(i1) - pt(i0)).cross(pt(i2) - pt(i0)).normalized();
    int i3 = -1;
    best = -1.0;
    for (int i = 0; i < n; ++i) {
      const double d = std::abs(nrm.dot(pt(i) - pt(i0)));
      if (d > best) {
        best = d;
        i3 = i;
      }
    }
    if (best <= eps_) throw DegenerateError("convex_hull: points are coplanar");
    simplex_ = {i0, i1, i2, i3};
    const Eigen::Vector3d centroid = (pt(i0) + pt(i1) + pt(i2) + pt(i3)) / 4.0;
    const std::array<std::array<int, 3>, 4> tri{{{i0, i1, i2}, {i0, i1, i3}, {i0, i2, i3}, {i1, i2, i3}}};
    for (auto t : tri) {
      make_face(t[0], t[1], t[2]);
      if (faces_.back().n.dot(centroid) - faces_.back().off > 0.0) {
        faces_.pop_back();
        make_face(t[0], t[2], t[1]);
      }
    }
  }

  // Attach a point to the alive face it is farthest above, if any.
  void assign(int i) {
    double best = eps_;
    Face* target = nullptr;
    for (auto& f : faces_) {
      if (!f.alive) continue;
      const double d = dist(f, i);
      if (d > best) {
        best = d;
        target = &f;
      }
    }
    if (target) target->outside.push_back(i);
  }

  int farthest(const Face& f) const {
    int best = -1;
    double bd = -1.0;
    for (int i : f.outside) {
      const double d = dist(f, i);
      if (d > bd || (d == bd && lex_less(pt(i), pt(best)))) {
        bd = d;
        best = i;
      }
    }
    return best;
  }

  void add_point(int eye) {
    std::vector<std::size_t> visible;
    for (std::size_t k = 0; k < faces_.size(); ++k) {
      if (faces_[k].alive && dist(faces_[k], eye) > eps_) visible.push_back(k);
    }
    std::set<std::pair<int, int>> edges;
    for (std::size_t k : visible) {
      const auto& v = faces_[k].v;
      for (int e = 0; e < 3; ++e) edges.insert({v[static_cast<std::size_t>(e)], v[static_cast<std::size_t>((e + 1) % 3)]});
    }
    std::vector<std::pair<int, int>> horizon;
    for (const auto& e : edges) {
      if (!edges.count({e.second, e.first})) horizon.push_back(e);
    }
    std::vector<int> orphans;
    for (std::size_t k : visible) {
      faces_[k].alive = false;
      for (int i : faces_[k].outside) {
        if (i != eye) orphans.push_back(i);
      }
      faces_[k].outside.clear();
    }
    for (const auto& e : horizon) make_face(e.first, e.second, eye);
    std::sort(orphans.begin(), orphans.end());
    for (int i : orphans) assign(i);
  }

  const PointCloud& P_;
  double eps_ = 0.0;
  std::vector<Face> faces_;
  std::vector<int> simplex_;
};

}  // namespace

ConvexHull convex_hull(const PointCloud& cloud) { return Builder(cloud).run(); }

PointCloud hull_vertices(const PointCloud& cloud) {
  const ConvexHull h = convex_hull(cloud);
  PointCloud out(static_cast<Eigen::Index>(h.vertices.size()), 3);
  for (std::size_t k = 0; k < h.vertices.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = cloud.row(h.vertices[k]);
  return out;
}

PointCloud read_point_cloud_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open point cloud '" + path + "'");
  std::vector<Eigen::Vector3d> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.find_first_of("xyzXYZ") != std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    Eigen::Vector3d p;
    if (!(ss >> p.x() >> p.y() >> p.z())) {
      throw Error("point cloud '" + path + "' line " + std::to_string(lineno) + ": expected x,y,z");
    }
    if (!p.allFinite()) throw Error("point cloud '" + path + "': non-finite coordinate");
    rows.push_back(p);
  }
  PointCloud cloud(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t k = 0; k < rows.size(); ++k) cloud.row(static_cast<Eigen::Index>(k)) = rows[k].transpose();
  return cloud;
}

}  // namespace exciteid
