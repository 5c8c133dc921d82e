#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace exciteid {

/// N x 3 points in meters.
using PointCloud = Eigen::Matrix<double, Eigen::Dynamic, 3>;

struct HullFacet {
  std::array<int, 3> v;     // indices into the input cloud, counter-clockwise seen from outside
  Eigen::Vector3d normal;   // unit outward normal
  double offset = 0.0;      // normal . x = offset on the facet plane
};

struct ConvexHull {
  std::vector<int> vertices;  // ascending input indices of the extreme points
  std::vector<HullFacet> facets;
  double tolerance = 0.0;     // distance below which a point counts as on the hull

  /// Largest signed distance of p above any facet (<= 0 means inside or on).
  double signed_distance(const Eigen::Vector3d& p) const;
};

/// 3-D quickhull. Points lying on a facet, edge, or inside are not vertices.
/// Throws DegenerateError for fewer than four points or collinear/coplanar input.
ConvexHull convex_hull(const PointCloud& cloud);

/// Rows of `cloud` that are hull vertices, in input order.
PointCloud hull_vertices(const PointCloud& cloud);

PointCloud read_point_cloud_csv(const std::string& path);

}  // namespace exciteid
