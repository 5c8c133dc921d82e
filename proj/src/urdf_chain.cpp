#include "exciteid/urdf_chain.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <Eigen/Eigenvalues>

#include "exciteid/error.hpp"
#include "exciteid/log.hpp"

namespace pt = boost::property_tree;
using nlohmann::json;

namespace exciteid {
namespace {

constexpr double kDefaultVelocityLimit = 1.0;

struct RawInertial {
  double mass = 0.0;
  Eigen::Vector3d com = Eigen::Vector3d::Zero();
  Eigen::Matrix3d inertia = Eigen::Matrix3d::Zero();
};

struct RawLink {
  std::string name;
  bool has_inertial = false;
  RawInertial inertial;
};

struct RawJoint {
  std::string name;
  std::string type;
  std::string parent;
  std::string child;
  Eigen::Isometry3d origin = Eigen::Isometry3d::Identity();
  Eigen::Vector3d axis = Eigen::Vector3d::UnitX();
  bool has_limit = false;
  bool has_lower_upper = false;
  double lower = 0.0;
  double upper = 0.0;
  bool has_velocity = false;
  double velocity = 0.0;
};

std::vector<double> parse_numbers(const std::string& text, std::size_t expected,
                                  const std::string& context) {
  std::istringstream in(text);
  std::vector<double> out;
  std::string token;
  while (in >> token) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      throw ParseError(context + ": invalid number '" + token + "'");
    }
    if (used != token.size()) throw ParseError(context + ": invalid number '" + token + "'");
    out.push_back(v);
  }
  if (out.size() != expected) {
    throw ParseError(context + ": expected " + std::to_string(expected) + " numbers, got " +
                     std::to_string(out.size()));
  }
  return out;
}

double attr_double(const pt::ptree& node, const std::string& key, const std::string& context) {
  auto v = node.get_optional<std::string>("<xmlattr>." + key);
  if (!v) throw ParseError(context + ": missing attribute '" + key + "'");
  return parse_numbers(*v, 1, context + "." + key)[0];
}

Eigen::Isometry3d parse_origin(const pt::ptree& parent, const std::string& context) {
  Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
  auto origin = parent.get_child_optional("origin");
  if (!origin) return T;
  if (auto xyz = origin->get_optional<std::string>("<xmlattr>.xyz")) {
    auto v = parse_numbers(*xyz, 3, context + ".origin.xyz");
    T.translation() = Eigen::Vector3d(v[0], v[1], v[2]);
  }
  if (auto rpy = origin->get_optional<std::string>("<xmlattr>.rpy")) {
    auto v = parse_numbers(*rpy, 3, context + ".origin.rpy");
    T.linear() = rpy_rotation(v[0], v[1], v[2]);
  }
  return T;
}

class TagWarnings {
 public:
  void note(const std::string& where, const std::string& tag) {
    if (seen_.insert(where + "/" + tag).second) {
      logger()->warn("URDF: ignoring unsupported <{}> inside <{}>", tag, where);
    }
  }

 private:
  std::set<std::string> seen_;
};

RawLink parse_link(const pt::ptree& node, TagWarnings& warnings) {
  RawLink link;
  link.name = node.get<std::string>("<xmlattr>.name", "");
  if (link.name.empty()) throw ParseError("URDF: <link> without name");
  for (const auto& [tag, child] : node) {
    if (tag == "<xmlattr>" || tag == "<xmlcomment>") continue;
    if (tag != "inertial") {
      warnings.note("link", tag);
      continue;
    }
    const std::string ctx = "link '" + link.name + "' inertial";
    link.has_inertial = true;
    auto mass = child.get_child_optional("mass");
    if (!mass) throw ParseError(ctx + ": missing <mass>");
    link.inertial.mass = attr_double(*mass, "value", ctx + ".mass");
    Eigen::Isometry3d origin = parse_origin(child, ctx);
    link.inertial.com = origin.translation();
    Eigen::Matrix3d I = Eigen::Matrix3d::Zero();
    if (auto in = child.get_child_optional("inertia")) {
      const double ixx = attr_double(*in, "ixx", ctx), ixy = attr_double(*in, "ixy", ctx),
                   ixz = attr_double(*in, "ixz", ctx), iyy = attr_double(*in, "iyy", ctx),
                   iyz = attr_double(*in, "iyz", ctx), izz = attr_double(*in, "izz", ctx);
      I << ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz;
    } else {
      throw ParseError(ctx + ": missing <inertia>");
    }
    // The inertial frame may be rotated relative to the link frame.
    link.inertial.inertia = origin.linear() * I * origin.linear().transpose();
  }
  return link;
}

RawJoint parse_joint(const pt::ptree& node, TagWarnings& warnings) {
  RawJoint j;
  j.name = node.get<std::string>("<xmlattr>.name", "");
  j.type = node.get<std::string>("<xmlattr>.type", "");
  if (j.name.empty()) throw ParseError("URDF: <joint> without name");
  const std::string ctx = "joint '" + j.name + "'";
  if (j.type != "revolute" && j.type != "fixed") {
    throw ParseError(ctx + ": unsupported joint type '" + j.type +
                     "' (only revolute and fixed are supported)");
  }
  for (const auto& [tag, child] : node) {
    if (tag == "<xmlattr>" || tag == "<xmlcomment>") continue;
    if (tag == "parent") {
      j.parent = child.get<std::string>("<xmlattr>.link", "");
    } else if (tag == "child") {
      j.child = child.get<std::string>("<xmlattr>.link", "");
    } else if (tag == "origin") {
      // handled below
    } else if (tag == "axis") {
      auto v = parse_numbers(child.get<std::string>("<xmlattr>.xyz", ""), 3, ctx + ".axis");
      j.axis = Eigen::Vector3d(v[0], v[1], v[2]);
    } else if (tag == "limit") {
      j.has_limit = true;
      auto lo = child.get_optional<std::string>("<xmlattr>.lower");
      auto hi = child.get_optional<std::string>("<xmlattr>.upper");
      if (lo && hi) {
        j.has_lower_upper = true;
        j.lower = parse_numbers(*lo, 1, ctx + ".limit.lower")[0];
        j.upper = parse_numbers(*hi, 1, ctx + ".limit.upper")[0];
      }
      if (auto vel = child.get_optional<std::string>("<xmlattr>.velocity")) {
        j.has_velocity = true;
        j.velocity = parse_numbers(*vel, 1, ctx + ".limit.velocity")[0];
      }
    } else {
      warnings.note("joint", tag);
    }
  }
  if (j.parent.empty() || j.child.empty()) throw ParseError(ctx + ": missing parent or child");
  j.origin = parse_origin(node, ctx);
  return j;
}

// Combines body b (expressed in the frame of a through `offset`) into a.
RawInertial merge_bodies(const RawInertial& a, const RawInertial& b,
                         const Eigen::Isometry3d& offset) {
  const double m = a.mass + b.mass;
  if (m <= 0.0) return a;
  const Eigen::Vector3d cb = offset * b.com;
  const Eigen::Matrix3d Ib = offset.linear() * b.inertia * offset.linear().transpose();
  RawInertial out;
  out.mass = m;
  out.com = (a.mass * a.com + b.mass * cb) / m;
  auto shift = [](double mass, const Eigen::Vector3d& d) {
    return (mass * (d.squaredNorm() * Eigen::Matrix3d::Identity() - d * d.transpose())).eval();
  };
  out.inertia = a.inertia + shift(a.mass, a.com - out.com) + Ib + shift(b.mass, cb - out.com);
  return out;
}

void check_inertia(const LinkSpec& link) {
  if (link.mass < 0.0) throw ParseError("link '" + link.name + "': negative mass");
  if ((link.inertia - link.inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw ParseError("link '" + link.name + "': inertia not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(link.inertia);
  const Eigen::Vector3d p = es.eigenvalues();
  const double tol = 1e-12 * std::max(1.0, p.cwiseAbs().maxCoeff());
  if (p.minCoeff() < -tol) {
    logger()->warn("link '{}': nominal inertia is not positive semidefinite", link.name);
  } else if (p(0) + p(1) < p(2) - tol || p(0) + p(2) < p(1) - tol || p(1) + p(2) < p(0) - tol) {
    logger()->warn("link '{}': principal moments violate the triangle inequality", link.name);
  }
}

}  // namespace

Eigen::Matrix3d axis_rotation(const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

Eigen::Matrix3d rpy_rotation(double roll, double pitch, double yaw) {
  return (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

int KinematicChain::link_index(std::string_view link_name) const {
  if (link_name == root_link) return -1;
  for (std::size_t i = 0; i < links.size(); ++i) {
    if (links[i].name == link_name) return static_cast<int>(i);
  }
  throw Error("unknown link '" + std::string(link_name) + "'");
}

KinematicChain parse_urdf(std::string_view xml_text) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(xml_text)};
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(std::string("URDF: malformed XML: ") + e.what());
  }
  auto robot = tree.get_child_optional("robot");
  if (!robot) throw ParseError("URDF: missing <robot> element");

  TagWarnings warnings;
  std::vector<RawLink> raw_links;
  std::vector<RawJoint> raw_joints;
  for (const auto& [tag, node] : *robot) {
    if (tag == "<xmlattr>" || tag == "<xmlcomment>") continue;
    if (tag == "link") {
      raw_links.push_back(parse_link(node, warnings));
    } else if (tag == "joint") {
      raw_joints.push_back(parse_joint(node, warnings));
    } else {
      warnings.note("robot", tag);
    }
  }
  if (raw_links.empty()) throw ParseError("URDF: no links");

  std::map<std::string, std::size_t> link_by_name;
  for (std::size_t i = 0; i < raw_links.size(); ++i) {
    if (!link_by_name.emplace(raw_links[i].name, i).second) {
      throw ParseError("URDF: duplicate link '" + raw_links[i].name + "'");
    }
  }
  std::map<std::string, std::size_t> joint_by_parent;
  std::set<std::string> children;
  for (std::size_t i = 0; i < raw_joints.size(); ++i) {
    const auto& j = raw_joints[i];
    if (!link_by_name.count(j.parent) || !link_by_name.count(j.child)) {
      throw ParseError("joint '" + j.name + "': references unknown link");
    }
    if (!joint_by_parent.emplace(j.parent, i).second) {
      throw ParseError("branched chain: link '" + j.parent + "' has more than one child joint");
    }
    if (!children.insert(j.child).second) {
      throw ParseError("branched chain: link '" + j.child + "' has more than one parent joint");
    }
  }
  std::vector<std::string> roots;
  for (const auto& l : raw_links) {
    if (!children.count(l.name)) roots.push_back(l.name);
  }
  if (roots.size() != 1) {
    throw ParseError("URDF: expected a single root link, found " + std::to_string(roots.size()));
  }

  KinematicChain chain;
  chain.name = robot->get<std::string>("<xmlattr>.name", "");
  chain.root_link = roots.front();

  // Walk root -> tip, folding fixed joints into the next revolute origin and
  // merging rigidly attached bodies into the current moving link.
  int current = -1;  // moving link index, -1 = root
  Eigen::Isometry3d pending = Eigen::Isometry3d::Identity();
  RawInertial current_body;
  std::string link_name = chain.root_link;
  std::size_t visited = 1;
  auto flush_body = [&]() {
    if (current < 0) return;
    auto& l = chain.links[static_cast<std::size_t>(current)];
    l.mass = current_body.mass;
    l.com = current_body.com;
    l.inertia = 0.5 * (current_body.inertia + current_body.inertia.transpose());
  };
  while (true) {
    auto it = joint_by_parent.find(link_name);
    if (it == joint_by_parent.end()) break;
    const RawJoint& rj = raw_joints[it->second];
    const RawLink& child = raw_links[link_by_name.at(rj.child)];
    ++visited;
    if (rj.type == "fixed") {
      pending = pending * rj.origin;
      chain.attached.push_back({child.name, current, pending});
      if (child.has_inertial && current >= 0) {
        current_body = merge_bodies(current_body, child.inertial, pending);
      }
    } else {
      const std::string ctx = "joint '" + rj.name + "'";
      if (!rj.has_limit || !rj.has_lower_upper) {
        throw ParseError(ctx + ": revolute joint requires <limit lower upper>");
      }
      if (!(rj.lower < rj.upper)) throw ParseError(ctx + ": lower limit must be below upper");
      const double n = rj.axis.norm();
      if (!(n > 0.0) || !std::isfinite(n)) throw ParseError(ctx + ": zero joint axis");
      if (std::abs(n - 1.0) > 1e-9) logger()->warn("{}: axis normalized (norm was {})", ctx, n);
      if (!child.has_inertial) {
        throw ParseError("link '" + child.name + "': missing <inertial> on a moving link");
      }
      JointSpec js;
      js.name = rj.name;
      js.kind = JointKind::Revolute;
      js.origin = pending * rj.origin;
      js.axis = rj.axis / n;
      js.q_min = rj.lower;
      js.q_max = rj.upper;
      if (rj.has_velocity && rj.velocity > 0.0) {
        js.dq_min = -rj.velocity;
        js.dq_max = rj.velocity;
      } else {
        logger()->info("{}: no velocity limit, using +/-{} rad/s", ctx, kDefaultVelocityLimit);
        js.dq_min = -kDefaultVelocityLimit;
        js.dq_max = kDefaultVelocityLimit;
      }
      flush_body();
      chain.joints.push_back(js);
      LinkSpec ls;
      ls.name = child.name;
      chain.links.push_back(ls);
      current = chain.dof() - 1;
      current_body = child.inertial;
      pending = Eigen::Isometry3d::Identity();
    }
    link_name = rj.child;
  }
  flush_body();
  if (visited != raw_links.size()) {
    throw ParseError("URDF: links are not connected into a single chain");
  }
  if (chain.dof() == 0) throw ParseError("URDF: no revolute joints");
  for (const auto& l : chain.links) check_inertia(l);
  return chain;
}

KinematicChain load_urdf_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open URDF file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_urdf(ss.str());
}

std::vector<Eigen::Isometry3d> link_frames(const KinematicChain& chain, const Eigen::VectorXd& q) {
  require_size(q.size(), chain.dof(), "link_frames q");
  std::vector<Eigen::Isometry3d> frames;
  frames.reserve(static_cast<std::size_t>(chain.dof()));
  Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
  for (int i = 0; i < chain.dof(); ++i) {
    const auto& j = chain.joints[static_cast<std::size_t>(i)];
    Eigen::Isometry3d joint = Eigen::Isometry3d::Identity();
    joint.linear() = axis_rotation(j.axis, q(i));
    T = T * j.origin * joint;
    frames.push_back(T);
  }
  return frames;
}

AttachedFrame resolve_frame(const KinematicChain& chain, std::string_view frame_name) {
  if (frame_name == chain.root_link) return {std::string(frame_name), -1, Eigen::Isometry3d::Identity()};
  for (std::size_t i = 0; i < chain.links.size(); ++i) {
    if (chain.links[i].name == frame_name) {
      return {std::string(frame_name), static_cast<int>(i), Eigen::Isometry3d::Identity()};
    }
  }
  for (const auto& a : chain.attached) {
    if (a.name == frame_name) return a;
  }
  throw Error("unknown frame '" + std::string(frame_name) + "'");
}

Eigen::Isometry3d frame_pose(const KinematicChain& chain,
                             const std::vector<Eigen::Isometry3d>& frames,
                             std::string_view frame_name) {
  const AttachedFrame f = resolve_frame(chain, frame_name);
  const Eigen::Isometry3d base =
      f.parent < 0 ? Eigen::Isometry3d::Identity() : frames.at(static_cast<std::size_t>(f.parent));
  return base * f.offset;
}

namespace {

json pose_json(const Eigen::Isometry3d& T) {
  json rows = json::array();
  const Eigen::Matrix4d M = T.matrix();
  for (int r = 0; r < 4; ++r) {
    json row = json::array();
    for (int c = 0; c < 4; ++c) row.push_back(M(r, c));
    rows.push_back(row);
  }
  return rows;
}

Eigen::Isometry3d pose_from_json(const json& j) {
  Eigen::Matrix4d M;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) M(r, c) = j.at(r).at(c).get<double>();
  Eigen::Isometry3d T;
  T.matrix() = M;
  return T;
}

json vec3_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }
Eigen::Vector3d vec3_from(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

}  // namespace

json chain_to_json(const KinematicChain& chain) {
  json j;
  j["name"] = chain.name;
  j["root_link"] = chain.root_link;
  j["dof"] = chain.dof();
  j["gravity"] = vec3_json(chain.gravity);
  json joints = json::array();
  for (const auto& jt : chain.joints) {
    joints.push_back({{"name", jt.name},
                      {"type", jt.kind == JointKind::Revolute ? "revolute" : "fixed"},
                      {"origin", pose_json(jt.origin)},
                      {"axis", vec3_json(jt.axis)},
                      {"q_min", jt.q_min},
                      {"q_max", jt.q_max},
                      {"dq_min", jt.dq_min},
                      {"dq_max", jt.dq_max}});
  }
  j["joints"] = joints;
  json links = json::array();
  for (const auto& l : chain.links) {
    json inertia = json::array();
    for (int r = 0; r < 3; ++r) inertia.push_back(vec3_json(l.inertia.row(r).transpose()));
    links.push_back({{"name", l.name}, {"mass", l.mass}, {"com", vec3_json(l.com)}, {"inertia", inertia}});
  }
  j["links"] = links;
  json attached = json::array();
  for (const auto& a : chain.attached) {
    attached.push_back({{"name", a.name}, {"parent", a.parent}, {"offset", pose_json(a.offset)}});
  }
  j["attached_frames"] = attached;
  return j;
}

KinematicChain chain_from_json(const json& j) {
  KinematicChain chain;
  chain.name = j.value("name", "");
  chain.root_link = j.at("root_link").get<std::string>();
  chain.gravity = vec3_from(j.at("gravity"));
  for (const auto& jt : j.at("joints")) {
    JointSpec s;
    s.name = jt.at("name").get<std::string>();
    s.kind = jt.at("type").get<std::string>() == "fixed" ? JointKind::Fixed : JointKind::Revolute;
    s.origin = pose_from_json(jt.at("origin"));
    s.axis = vec3_from(jt.at("axis"));
    s.q_min = jt.at("q_min").get<double>();
    s.q_max = jt.at("q_max").get<double>();
    s.dq_min = jt.at("dq_min").get<double>();
    s.dq_max = jt.at("dq_max").get<double>();
    chain.joints.push_back(s);
  }
  for (const auto& lj : j.at("links")) {
    LinkSpec l;
    l.name = lj.at("name").get<std::string>();
    l.mass = lj.at("mass").get<double>();
    l.com = vec3_from(lj.at("com"));
    for (int r = 0; r < 3; ++r) l.inertia.row(r) = vec3_from(lj.at("inertia").at(r)).transpose();
    chain.links.push_back(l);
  }
  if (j.contains("attached_frames")) {
    for (const auto& aj : j.at("attached_frames")) {
      chain.attached.push_back({aj.at("name").get<std::string>(), aj.at("parent").get<int>(),
                                pose_from_json(aj.at("offset"))});
    }
  }
  if (chain.links.size() != chain.joints.size()) {
    throw ParseError("chain JSON: joints and links differ in length");
  }
  return chain;
}

}  // namespace exciteid
