#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "exciteid/base_params.hpp"
#include "exciteid/bvls.hpp"
#include "exciteid/convex_hull.hpp"
#include "exciteid/dynamics.hpp"
#include "exciteid/error.hpp"
#include "exciteid/excitation.hpp"
#include "exciteid/gmm.hpp"
#include "exciteid/pipeline.hpp"
#include "exciteid/td_filter.hpp"
#include "exciteid/urdf_chain.hpp"

namespace py = pybind11;
using namespace exciteid;

namespace {

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Eigen::VectorXd td_filter_signal(const Eigen::VectorXd& v, double h, double r, double h0_multiple) {
  Eigen::VectorXd x1(v.size());
  if (v.size() == 0) return x1;
  TDState s{v(0), 0.0, h, r, h0_multiple * h};
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    s = td_step(s, v(k));
    x1(k) = s.x1;
  }
  return x1;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Excitation trajectory design and dynamic parameter identification";

  // Every library error derives from exciteid.Error.
  const py::object base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<MissingArtifactError>(m, "MissingArtifactError", base.ptr());
  py::register_exception<DegenerateError>(m, "DegenerateError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());

  py::class_<KinematicChain>(m, "KinematicChain")
      .def_property_readonly("dof", &KinematicChain::dof)
      .def_readonly("name", &KinematicChain::name)
      .def_property_readonly("joint_names",
                             [](const KinematicChain& c) {
                               std::vector<std::string> n;
                               for (const auto& j : c.joints) n.push_back(j.name);
                               return n;
                             })
      .def("to_dict", [](const KinematicChain& c) { return to_py(chain_to_json(c)); });

  m.def("parse_urdf", [](const std::string& xml) { return parse_urdf(xml); }, py::arg("xml"));
  m.def("load_urdf", &load_urdf_file, py::arg("path"));
  m.def("ee_position",
        [](const KinematicChain& c, const Eigen::VectorXd& q, const std::string& frame) {
          return Eigen::Vector3d(frame_pose(c, link_frames(c, q), frame).translation());
        },
        py::arg("chain"), py::arg("q"), py::arg("frame"));

  m.def("std_param_labels", &std_param_labels, py::arg("dof"));
  m.def("nominal_params", py::overload_cast<const KinematicChain&>(&nominal_params), py::arg("chain"));
  m.def("rnea", &rnea, py::arg("chain"), py::arg("q"), py::arg("dq"), py::arg("ddq"), py::arg("theta"));
  m.def("regressor", &regressor, py::arg("chain"), py::arg("q"), py::arg("dq"), py::arg("ddq"));

  py::class_<BaseProjection>(m, "BaseProjection")
      .def_readonly("b_idx", &BaseProjection::b_idx)
      .def_readonly("d_idx", &BaseProjection::d_idx)
      .def_readonly("K", &BaseProjection::K)
      .def_readonly("K_d", &BaseProjection::K_d)
      .def_property_readonly("rank", &BaseProjection::rank);
  m.def("base_projection",
        [](const KinematicChain& c, int n_samples, std::uint64_t seed, double tau_rank) {
          BaseProjectionOptions o;
          o.n_samples = n_samples;
          o.seed = seed;
          o.tau_rank = tau_rank;
          return compute_base_projection(c, o);
        },
        py::arg("chain"), py::arg("n_samples") = 120, py::arg("seed") = 1, py::arg("tau_rank") = 1e-7);
  m.def("project", &project, py::arg("theta"), py::arg("projection"));

  m.def("convex_hull_vertices",
        [](const PointCloud& pts) { return convex_hull(pts).vertices; }, py::arg("points"));
  m.def("fit_mfpee",
        [](const PointCloud& pts, int k_max, std::uint64_t seed) {
          const MfpeeSelection s = fit_mfpee(pts, k_max, seed);
          py::dict d;
          d["k_star"] = s.k_star;
          d["mu"] = Eigen::MatrixXd(s.model.mu);
          d["pi"] = s.model.pi;
          d["sigma"] = s.model.sigma;
          d["bic"] = s.bic;
          d["objective_trace"] = s.fit.objective_trace;
          return d;
        },
        py::arg("points"), py::arg("k_max") = 8, py::arg("seed") = 1);

  m.def("condition_number", &condition_number, py::arg("Y"));
  m.def("td_filter", &td_filter_signal, py::arg("v"), py::arg("h"), py::arg("r") = 100.0,
        py::arg("h0_multiple") = 5.0);
  m.def("solve_bvls",
        [](const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& lb, const Eigen::VectorXd& ub) {
          const BvlsResult r = solve_bvls(A, b, lb, ub);
          py::dict d;
          d["x"] = r.x;
          d["converged"] = r.converged;
          d["kkt_ok"] = r.kkt_ok;
          d["state"] = r.state;
          return d;
        },
        py::arg("A"), py::arg("b"), py::arg("lb"), py::arg("ub"));

  m.def("stage_names", &stage_names);
  m.def("run_stage",
        [](const std::string& name, const std::string& config_path) {
          const StageResult r = run_stage(name, load_config(config_path));
          py::dict d;
          d["exit_code"] = r.exit_code;
          d["written"] = r.written;
          d["summary"] = to_py(r.summary);
          return d;
        },
        py::arg("stage"), py::arg("config"));
}
