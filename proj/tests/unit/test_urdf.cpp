#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "exciteid/error.hpp"
#include "exciteid/urdf_chain.hpp"
#include "helpers.hpp"

using namespace exciteid;
using testutil::data;

namespace {

const char* kInertial =
    "<inertial><origin xyz=\"0.5 0 0\"/><mass value=\"1.0\"/>"
    "<inertia ixx=\"0.01\" ixy=\"0\" ixz=\"0\" iyy=\"0.02\" iyz=\"0\" izz=\"0.02\"/></inertial>";

std::string revolute(const std::string& name, const std::string& parent, const std::string& child,
                     const std::string& xyz, const std::string& rpy = "0 0 0", const std::string& type = "revolute") {
  return "<joint name=\"" + name + "\" type=\"" + type + "\"><parent link=\"" + parent + "\"/><child link=\"" +
         child + "\"/><origin xyz=\"" + xyz + "\" rpy=\"" + rpy +
         "\"/><axis xyz=\"0 0 1\"/><limit lower=\"-2\" upper=\"2\" velocity=\"1.5\"/></joint>";
}

std::string fixed(const std::string& name, const std::string& parent, const std::string& child, const std::string& xyz,
                  const std::string& rpy = "0 0 0") {
  return "<joint name=\"" + name + "\" type=\"fixed\"><parent link=\"" + parent + "\"/><child link=\"" + child +
         "\"/><origin xyz=\"" + xyz + "\" rpy=\"" + rpy + "\"/></joint>";
}

std::string link(const std::string& name, bool inertial = true) {
  return "<link name=\"" + name + "\">" + (inertial ? std::string(kInertial) : "") + "</link>";
}

std::string robot(const std::string& body) { return "<?xml version=\"1.0\"?><robot name=\"t\">" + body + "</robot>"; }

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("urdf") {
  TEST_CASE("single link echo") {
    const auto c = parse_urdf(robot(link("base", false) + revolute("j1", "base", "l1", "0 0 0") + link("l1")));
    CHECK(c.dof() == 1);
    CHECK(c.links[0].mass == 1.0);
    CHECK(c.links[0].com.isApprox(Eigen::Vector3d(0.5, 0, 0)));
    CHECK(c.joints[0].q_max == 2.0);
    CHECK(c.joints[0].dq_max == 1.5);
  }

  TEST_CASE("fixed joint composed into the next origin") {
    const auto c = parse_urdf(robot(link("base", false) + revolute("j1", "base", "l1", "0 0 0") + link("l1") +
                                    fixed("f", "l1", "mid", "0.3 0 0.1", "0 0 1.5707963267948966") +
                                    link("mid", false) + revolute("j2", "mid", "l2", "0.2 0 0") + link("l2")));
    REQUIRE(c.dof() == 2);
    const Eigen::Vector2d q(0.4, -0.7);
    const auto frames = link_frames(c, q);
    // hand composition: Rz(q1) * [T(0.3,0,0.1) Rz(pi/2)] * T(0.2,0,0) * Rz(q2)
    Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
    T.rotate(Eigen::AngleAxisd(q(0), Eigen::Vector3d::UnitZ()));
    T.translate(Eigen::Vector3d(0.3, 0, 0.1));
    T.rotate(Eigen::AngleAxisd(std::numbers::pi / 2, Eigen::Vector3d::UnitZ()));
    T.translate(Eigen::Vector3d(0.2, 0, 0));
    T.rotate(Eigen::AngleAxisd(q(1), Eigen::Vector3d::UnitZ()));
    CHECK((frames[1].matrix() - T.matrix()).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("rejections") {
    const std::string base = link("base", false) + revolute("j1", "base", "l1", "0 0 0") + link("l1");
    CHECK_THROWS_WITH_AS(parse_urdf(robot(base + revolute("j2", "l1", "a", "1 0 0") + link("a") +
                                          revolute("j3", "l1", "b", "0 1 0") + link("b"))),
                         doctest::Contains("branched chain"), ParseError);
    CHECK_THROWS_AS(parse_urdf(robot(base + revolute("j2", "l1", "a", "1 0 0", "0 0 0", "prismatic") + link("a"))),
                    ParseError);
    CHECK_THROWS_WITH_AS(parse_urdf(robot(base + revolute("j2", "l1", "a", "1 0 0") + link("a", false))),
                         doctest::Contains("missing <inertial>"), ParseError);
    CHECK_THROWS_AS(parse_urdf("<robot name=\"x\"><link name=\"a\"></robot>"), ParseError);
    CHECK_THROWS_AS(load_urdf_file(data("does_not_exist.urdf")), ParseError);
  }

  TEST_CASE("velocity limit defaults to 1 rad/s") {
    const std::string j =
        "<joint name=\"j1\" type=\"revolute\"><parent link=\"base\"/><child link=\"l1\"/>"
        "<axis xyz=\"0 0 1\"/><limit lower=\"-1\" upper=\"1\"/></joint>";
    const auto c = parse_urdf(robot(link("base", false) + j + link("l1")));
    CHECK(c.joints[0].dq_max == 1.0);
    CHECK(c.joints[0].dq_min == -1.0);
  }

  TEST_CASE("zero angles give the cumulative fixed origins") {
    const auto& c = testutil::kuka();
    const auto frames = link_frames(c, Eigen::VectorXd::Zero(7));
    Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
    for (int i = 0; i < 7; ++i) {
      T = T * c.joints[i].origin;
      CHECK((frames[i].matrix() - T.matrix()).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("planar unit two-link tip position") {
    const auto c = load_urdf_file(data("planar_unit.urdf"));
    const Eigen::Vector2d q(std::numbers::pi / 2, 0.0);
    const Eigen::Vector3d tip = frame_pose(c, link_frames(c, q), "tip").translation();
    CHECK((tip - Eigen::Vector3d(0, 2, 0)).norm() < 1e-12);
  }

  TEST_CASE("rotating a joint forth and back restores the frames") {
    const auto& c = testutil::kuka();
    std::mt19937_64 rng(5);
    const Eigen::VectorXd q = testutil::random_state(c, rng).q;
    const auto f0 = link_frames(c, q);
    Eigen::VectorXd q1 = q;
    q1(0) += 0.37;
    q1(0) -= 0.37;
    const auto f1 = link_frames(c, q1);
    for (int i = 0; i < 7; ++i) CHECK((f0[i].matrix() - f1[i].matrix()).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("rotations stay orthonormal") {
    const auto& c = testutil::kuka();
    std::mt19937_64 rng(11);
    for (int k = 0; k < 50; ++k) {
      const auto frames = link_frames(c, testutil::random_state(c, rng).q);
      for (const auto& f : frames) {
        const Eigen::Matrix3d R = f.linear();
        CHECK((R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-10);
      }
    }
  }

  TEST_CASE("json round trip is exact") {
    for (const auto* c : {&testutil::pendulum(), &testutil::kuka()}) {
      const auto j = chain_to_json(*c);
      const auto back = chain_from_json(j);
      CHECK(chain_to_json(back).dump() == j.dump());
      REQUIRE(back.dof() == c->dof());
      for (int i = 0; i < c->dof(); ++i) {
        CHECK(back.joints[i].origin.matrix() == c->joints[i].origin.matrix());
        CHECK(back.links[i].inertia == c->links[i].inertia);
        CHECK(back.links[i].mass == c->links[i].mass);
        CHECK(back.joints[i].q_min == c->joints[i].q_min);
      }
    }
  }

  TEST_CASE("identity fixed joint does not change the frames") {
    std::string text = read_text(data("pendulum2.urdf"));
    const std::string from = "<parent link=\"link1\"/>\n    <child link=\"link2\"/>";
    REQUIRE(text.find(from) != std::string::npos);
    text.replace(text.find(from), from.size(), "<parent link=\"extra\"/>\n    <child link=\"link2\"/>");
    text.replace(text.find("</robot>"), 8,
                 fixed("id", "link1", "extra", "0 0 0") + link("extra", false) + "</robot>");
    const auto c2 = parse_urdf(text);
    const auto& c1 = testutil::pendulum();
    std::mt19937_64 rng(3);
    for (int k = 0; k < 10; ++k) {
      const Eigen::VectorXd q = testutil::random_state(c1, rng).q;
      const auto a = link_frames(c1, q);
      const auto b = link_frames(c2, q);
      for (int i = 0; i < 2; ++i) CHECK((a[i].matrix() - b[i].matrix()).cwiseAbs().maxCoeff() < 1e-14);
    }
  }

  TEST_CASE("attached frames and link lookup") {
    const auto& c = testutil::kuka();
    const auto tool = resolve_frame(c, "tool");
    CHECK(tool.parent == 6);
    CHECK(tool.offset.translation().isApprox(Eigen::Vector3d(0, 0, 0.045)));
    CHECK(c.link_index("base_link") == -1);
    CHECK(c.link_index("link3") == 2);
    CHECK_THROWS(c.link_index("nope"));
    CHECK_THROWS_AS(link_frames(c, Eigen::VectorXd::Zero(3)), DimensionError);
  }
}
