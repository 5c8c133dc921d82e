#include "exciteid/collision.hpp"

#include <cmath>

#include "exciteid/error.hpp"

namespace exciteid {

using nlohmann::json;

LinkEllipsoid::LinkEllipsoid(int link_index, const Eigen::Vector3d& center_offset,
                             const Eigen::Vector3d& eps)
    : link_(link_index), center_(center_offset), eps_(eps) {
  if (!(eps_.array() > 0.0).all() || !eps_.allFinite()) {
    throw Error("LinkEllipsoid: semi-axes must be positive and finite");
  }
  if (!center_.allFinite()) throw Error("LinkEllipsoid: non-finite center");
}

Eigen::Matrix3d LinkEllipsoid::A() const {
  return eps_.array().square().inverse().matrix().asDiagonal();
}

void validate_collision_model(const KinematicChain& chain, const CollisionModel& model) {
  if (model.ee_link < 0 || model.ee_link >= chain.dof()) {
    throw Error("collision model: end-effector link index " + std::to_string(model.ee_link) +
                " out of range");
  }
  for (const auto& e : model.ellipsoids) {
    if (e.link_index() < -1 || e.link_index() >= chain.dof()) {
      throw Error("collision model: ellipsoid link index out of range");
    }
    if (e.link_index() == model.ee_link) {
      throw Error("collision model: ellipsoid on the end-effector link itself");
    }
  }
}

Eigen::VectorXd collision_residuals(const KinematicChain& chain, const Eigen::VectorXd& q,
                                    const CollisionModel& model) {
  return collision_residuals(chain, q, model, nullptr);
}

Eigen::VectorXd collision_residuals(const KinematicChain& chain, const Eigen::VectorXd& q,
                                    const CollisionModel& model, Eigen::MatrixXd* jacobian) {
  require_size(q.size(), chain.dof(), "collision_residuals q");
  validate_collision_model(chain, model);
  const int n = chain.dof();
  const auto frames = link_frames(chain, q);
  const Eigen::Isometry3d T_ee = frames[static_cast<std::size_t>(model.ee_link)] * model.ee_offset;
  const Eigen::Index K = model.points.rows();
  Eigen::VectorXd g(model.size());
  if (jacobian) jacobian->setZero(model.size(), n);

  // World axes and origins of the joints.
  std::vector<Eigen::Vector3d> w(static_cast<std::size_t>(n)), o(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    w[static_cast<std::size_t>(j)] = frames[static_cast<std::size_t>(j)].linear() * chain.joints[static_cast<std::size_t>(j)].axis;
    o[static_cast<std::size_t>(j)] = frames[static_cast<std::size_t>(j)].translation();
  }

  Eigen::Index row = 0;
  for (const auto& e : model.ellipsoids) {
    const int l = e.link_index();
    const Eigen::Isometry3d T_l = l < 0 ? Eigen::Isometry3d::Identity() : frames[static_cast<std::size_t>(l)];
    const Eigen::Matrix3d Rt = T_l.linear().transpose();
    const Eigen::Matrix3d A = e.A();
    for (Eigen::Index k = 0; k < K; ++k, ++row) {
      const Eigen::Vector3d P = T_ee * Eigen::Vector3d(model.points.row(k).transpose());
      const Eigen::Vector3d x = Rt * (P - T_l.translation()) - e.center_offset();
      const Eigen::Vector3d Ax = A * x;
      g(row) = x.dot(Ax) - 1.0;
      if (!jacobian) continue;
      // Joint j moves the point (j <= ee_link) and/or the ellipsoid link (j <= l);
      // only the relative motion matters.
      for (int j = 0; j < n; ++j) {
        const bool moves_point = j <= model.ee_link;
        const bool moves_link = j <= l;
        if (moves_point == moves_link) continue;
        const double s = moves_point ? 1.0 : -1.0;
        const Eigen::Vector3d dx = s * (Rt * w[static_cast<std::size_t>(j)].cross(P - o[static_cast<std::size_t>(j)]));
        (*jacobian)(row, j) = 2.0 * Ax.dot(dx);
      }
    }
  }
  return g;
}

namespace {

Eigen::Vector3d vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(std::string(what) + ": expected 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

std::vector<LinkEllipsoid> ellipsoids_from_json(const KinematicChain& chain, const json& j) {
  if (!j.is_array()) throw ConfigError("ellipsoids: expected an array");
  std::vector<LinkEllipsoid> out;
  for (const auto& e : j) {
    for (auto it = e.begin(); it != e.end(); ++it) {
      if (it.key() != "link" && it.key() != "center" && it.key() != "eps") {
        throw ConfigError("ellipsoids: unknown key '" + it.key() + "'");
      }
    }
    int link = -1;
    const json& lk = e.at("link");
    if (lk.is_string()) {
      link = chain.link_index(lk.get<std::string>());
    } else {
      link = lk.get<int>();
    }
    const Eigen::Vector3d center = e.contains("center") ? vec3(e["center"], "ellipsoid center")
                                                        : Eigen::Vector3d::Zero();
    out.emplace_back(link, center, vec3(e.at("eps"), "ellipsoid eps"));
  }
  return out;
}

json ellipsoids_to_json(const KinematicChain& chain, const std::vector<LinkEllipsoid>& es) {
  json arr = json::array();
  for (const auto& e : es) {
    const std::string name = e.link_index() < 0 ? chain.root_link
                                                 : chain.links[static_cast<std::size_t>(e.link_index())].name;
    arr.push_back({{"link", name}, {"center", vec_json(e.center_offset())}, {"eps", vec_json(e.eps())}});
  }
  return arr;
}

json mfpee_to_json(const MFPEE& m) {
  json mu = json::array(), sigma = json::array(), pi = json::array();
  for (int k = 0; k < m.size(); ++k) {
    mu.push_back(vec_json(m.mu.row(k).transpose()));
    json s = json::array();
    for (int r = 0; r < 3; ++r) s.push_back(vec_json(m.sigma[static_cast<std::size_t>(k)].row(r).transpose()));
    sigma.push_back(s);
    pi.push_back(m.pi(k));
  }
  return {{"mu", mu}, {"sigma", sigma}, {"pi", pi}};
}

MFPEE mfpee_from_json(const json& j) {
  MFPEE m;
  const auto& mu = j.at("mu");
  const auto& sigma = j.at("sigma");
  const auto& pi = j.at("pi");
  if (sigma.size() != mu.size() || pi.size() != mu.size()) throw Error("mfpee: inconsistent lengths");
  m.mu.resize(static_cast<Eigen::Index>(mu.size()), 3);
  m.pi.resize(static_cast<Eigen::Index>(mu.size()));
  for (std::size_t k = 0; k < mu.size(); ++k) {
    m.mu.row(static_cast<Eigen::Index>(k)) = vec3(mu[k], "mfpee mu").transpose();
    Eigen::Matrix3d S;
    for (int r = 0; r < 3; ++r) S.row(r) = vec3(sigma[k].at(static_cast<std::size_t>(r)), "mfpee sigma").transpose();
    m.sigma.push_back(S);
    m.pi(static_cast<Eigen::Index>(k)) = pi[k].get<double>();
  }
  return m;
}

}  // namespace exciteid
