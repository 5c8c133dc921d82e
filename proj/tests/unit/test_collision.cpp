#include <doctest.h>

#include <cmath>
#include <numbers>

#include "exciteid/collision.hpp"
#include "exciteid/convex_hull.hpp"
#include "exciteid/error.hpp"
#include "exciteid/gmm.hpp"
#include "helpers.hpp"

using namespace exciteid;

namespace {

PointCloud random_cloud(std::mt19937_64& rng, int n, double scale = 1.0) {
  PointCloud p(n, 3);
  std::normal_distribution<double> g(0.0, scale);
  for (int i = 0; i < n; ++i) p.row(i) << g(rng), g(rng), g(rng);
  return p;
}

PointCloud cluster(std::mt19937_64& rng, const Eigen::Vector3d& c, int n, double sigma) {
  PointCloud p = random_cloud(rng, n, sigma);
  p.rowwise() += c.transpose();
  return p;
}

// planar_unit chain with one ellipsoid on link 1 centred at (0.5, 0, 0)
CollisionModel planar_model(const Eigen::Vector3d& probe) {
  CollisionModel m;
  m.points = probe.transpose();
  m.ellipsoids.emplace_back(0, Eigen::Vector3d(0.5, 0, 0), Eigen::Vector3d(0.2, 0.1, 0.1));
  m.ee_link = 1;
  m.margin = 0.05;
  return m;
}

}  // namespace

TEST_SUITE("collision") {
  TEST_CASE("cube corners plus centroid") {
    PointCloud p(9, 3);
    int k = 0;
    for (int x : {0, 1})
      for (int y : {0, 1})
        for (int z : {0, 1}) p.row(k++) << x, y, z;
    p.row(8) << 0.5, 0.5, 0.5;
    const auto h = convex_hull(p);
    CHECK(h.vertices.size() == 8);
    CHECK(std::find(h.vertices.begin(), h.vertices.end(), 8) == h.vertices.end());
    CHECK(h.signed_distance(Eigen::Vector3d(0.5, 0.5, 0.5)) < 0.0);
  }

  TEST_CASE("points on a sphere are all extreme") {
    std::mt19937_64 rng(1);
    PointCloud p = random_cloud(rng, 50);
    p.rowwise().normalize();
    CHECK(convex_hull(p).vertices.size() == 50);
  }

  TEST_CASE("random cloud containment and idempotence") {
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 5; ++rep) {
      const PointCloud p = random_cloud(rng, 300);
      const auto h = convex_hull(p);
      for (int i = 0; i < p.rows(); ++i) CHECK(h.signed_distance(p.row(i).transpose()) <= 1e-10);
      // every reported vertex lies on some facet plane, and no point is outside any facet
      for (const auto& f : h.facets) {
        for (int i = 0; i < p.rows(); ++i) CHECK(f.normal.dot(p.row(i).transpose()) - f.offset <= 1e-10);
      }
      const PointCloud v = hull_vertices(p);
      CHECK(v.rows() == static_cast<Eigen::Index>(h.vertices.size()));
      CHECK(hull_vertices(v).rows() == v.rows());
      // brute-force extremality: a vertex maximizes some facet normal direction among all points
      for (int vi : h.vertices) {
        bool on_facet = false;
        for (const auto& f : h.facets) on_facet |= (f.v[0] == vi || f.v[1] == vi || f.v[2] == vi);
        CHECK(on_facet);
      }
    }
  }

  TEST_CASE("degenerate input") {
    PointCloud flat(5, 3);
    flat << 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0, 0.3, 0.2, 0;
    CHECK_THROWS_AS(convex_hull(flat), DegenerateError);
    PointCloud line(4, 3);
    line << 0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3;
    CHECK_THROWS_AS(convex_hull(line), DegenerateError);
    CHECK_THROWS_AS(convex_hull(flat.topRows(3)), DegenerateError);
  }

  TEST_CASE("point cloud csv") {
    const PointCloud p = read_point_cloud_csv(testutil::data("rod_cloud.csv"));
    CHECK(p.rows() == 192);
    CHECK(p.col(2).maxCoeff() == doctest::Approx(0.2));
  }

  TEST_CASE("one tight cluster") {
    std::mt19937_64 rng(3);
    const int n = 200;
    const PointCloud p = cluster(rng, Eigen::Vector3d(0.1, -0.2, 0.3), n, 1e-3);
    const auto sel = fit_mfpee(p, 4, 1);
    CHECK(sel.k_star == 1);
    const Eigen::Vector3d centroid = p.colwise().mean().transpose();
    CHECK((sel.model.mu.row(0).transpose() - centroid).norm() < 3e-3 / std::sqrt(n));
    CHECK(sel.model.pi.sum() == doctest::Approx(1.0).epsilon(1e-9));
  }

  TEST_CASE("two separated clusters") {
    std::mt19937_64 rng(4);
    const Eigen::Vector3d c1(0, 0, 0), c2(0.5, 0, 0);
    PointCloud p(120, 3);
    p.topRows(60) = cluster(rng, c1, 60, 0.01);
    p.bottomRows(60) = cluster(rng, c2, 60, 0.01);
    const Eigen::Vector3d m1 = p.topRows(60).colwise().mean().transpose();
    const Eigen::Vector3d m2 = p.bottomRows(60).colwise().mean().transpose();
    const auto sel = fit_mfpee(p, 6, 2);
    REQUIRE(sel.k_star == 2);
    const Eigen::Vector3d a = sel.model.mu.row(0).transpose(), b = sel.model.mu.row(1).transpose();
    const double err = std::min(std::max((a - m1).norm(), (b - m2).norm()), std::max((a - m2).norm(), (b - m1).norm()));
    CHECK(err < 5e-3);
    CHECK(sel.model.pi.sum() == doctest::Approx(1.0).epsilon(1e-9));
  }

  TEST_CASE("EM objective is monotone and fits are deterministic") {
    std::mt19937_64 rng(5);
    const PointCloud p = random_cloud(rng, 150, 0.1);
    for (int K = 1; K <= 5; ++K) {
      const auto fit = fit_gmm(p, K, 9);
      REQUIRE(fit.model.size() == K);
      for (std::size_t i = 1; i < fit.objective_trace.size(); ++i) {
        CHECK(fit.objective_trace[i] >= fit.objective_trace[i - 1] - 1e-12 * std::abs(fit.objective_trace[i - 1]));
      }
      const auto again = fit_gmm(p, K, 9);
      CHECK(again.model.mu == fit.model.mu);
    }
    const auto sel = fit_mfpee(p.topRows(3), 8, 1);
    CHECK(sel.k_star <= 3);
    CHECK(fit_gmm(p.topRows(3), 4, 1).model.size() == 0);
  }

  TEST_CASE("residual examples") {
    const auto c = load_urdf_file(testutil::data("planar_unit.urdf"));
    const Eigen::Vector2d q(0.0, std::numbers::pi);
    // link 2 is folded back: its (d, 0, 0) lands at world (1 - d, 0, 0)
    CHECK(collision_residuals(c, q, planar_model({0.5, 0, 0}))(0) == doctest::Approx(-1.0));
    CHECK(collision_residuals(c, q, planar_model({0.3, 0, 0}))(0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(collision_residuals(c, q, planar_model({0.1, 0, 0}))(0) == doctest::Approx(3.0));
  }

  TEST_CASE("model validation") {
    const auto c = load_urdf_file(testutil::data("planar_unit.urdf"));
    auto m = planar_model({0.5, 0, 0});
    CHECK_NOTHROW(validate_collision_model(c, m));
    m.ee_link = 5;
    CHECK_THROWS(validate_collision_model(c, m));
    m.ee_link = 0;
    CHECK_THROWS(validate_collision_model(c, m));
    CHECK_THROWS(LinkEllipsoid(0, Eigen::Vector3d::Zero(), Eigen::Vector3d(0.1, 0.0, 0.1)));
  }

  TEST_CASE("jacobian, frame invariance and monotonicity") {
    const auto& c = testutil::kuka();
    CollisionModel m;
    m.points = read_point_cloud_csv(testutil::data("rod_cloud.csv")).topRows(6);
    m.ellipsoids.emplace_back(0, Eigen::Vector3d(0, 0, 0.1), Eigen::Vector3d(0.1, 0.1, 0.16));
    m.ellipsoids.emplace_back(2, Eigen::Vector3d(0, 0, 0.1), Eigen::Vector3d(0.09, 0.09, 0.15));
    const auto tool = resolve_frame(c, "tool");
    m.ee_link = tool.parent;
    m.ee_offset = tool.offset;
    std::mt19937_64 rng(6);
    for (int k = 0; k < 5; ++k) {
      const Eigen::VectorXd q = testutil::random_state(c, rng).q;
      Eigen::MatrixXd J;
      const Eigen::VectorXd g = collision_residuals(c, q, m, &J);
      REQUIRE(J.rows() == g.size());
      for (int i = 0; i < 7; ++i) {
        const double h = 1e-6;
        const Eigen::VectorXd e = Eigen::VectorXd::Unit(7, i) * h;
        const Eigen::VectorXd fd = (collision_residuals(c, q + e, m) - collision_residuals(c, q - e, m)) / (2 * h);
        CHECK((J.col(i) - fd).cwiseAbs().maxCoeff() < 1e-5 * (1.0 + fd.cwiseAbs().maxCoeff()));
      }
      KinematicChain moved = c;
      Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
      T.translate(Eigen::Vector3d(0.3, -1.0, 2.0)).rotate(Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()));
      moved.joints[0].origin = T * moved.joints[0].origin;
      CHECK((collision_residuals(moved, q, m) - g).cwiseAbs().maxCoeff() < 1e-10);
      CollisionModel grown = m;
      grown.ellipsoids.clear();
      for (const auto& e : m.ellipsoids) grown.ellipsoids.emplace_back(e.link_index(), e.center_offset(), 1.3 * e.eps());
      CHECK(((collision_residuals(c, q, grown) - g).array() <= 0.0).all());
    }
  }

  TEST_CASE("ellipsoid json") {
    const auto& c = testutil::kuka();
    const nlohmann::json j = nlohmann::json::parse(R"([{"link": "link2", "center": [0, 0.1, 0], "eps": [0.1, 0.2, 0.1]}])");
    const auto e = ellipsoids_from_json(c, j);
    REQUIRE(e.size() == 1);
    CHECK(e[0].link_index() == 1);
    CHECK(e[0].A()(1, 1) == doctest::Approx(25.0));
    CHECK(ellipsoids_from_json(c, ellipsoids_to_json(c, e))[0].eps() == e[0].eps());
    CHECK_THROWS(ellipsoids_from_json(c, nlohmann::json::parse(R"([{"link": "link2", "center": [0,0,0], "eps": [1,1,1], "colour": 1}])")));
    CHECK_THROWS(ellipsoids_from_json(c, nlohmann::json::parse(R"([{"link": "link2", "center": [0,0,0], "eps": [1,-1,1]}])")));
  }
}
