import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

import exciteid

DATA = Path(os.environ.get("EXCITEID_TEST_DATA", Path(__file__).resolve().parents[1] / "data"))
TMP = Path(os.environ.get("EXCITEID_TEST_TMP", "/tmp/exciteid_py"))


@pytest.fixture(scope="module")
def pendulum():
    return exciteid.load_urdf(str(DATA / "pendulum2.urdf"))


def test_chain(pendulum):
    assert pendulum.dof == 2
    assert pendulum.joint_names == ["j1", "j2"]
    assert pendulum.to_dict()["joints"][0]["name"] == "j1"
    planar = exciteid.load_urdf(str(DATA / "planar_unit.urdf"))
    np.testing.assert_allclose(exciteid.ee_position(planar, [math.pi / 2, 0.0], "tip"), [0.0, 2.0, 0.0], atol=1e-12)


def test_regressor_is_linear(pendulum):
    rng = np.random.default_rng(1)
    theta = rng.uniform(-1, 1, 24)
    q, dq, ddq = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2), rng.uniform(-3, 3, 2)
    Y = exciteid.regressor(pendulum, q, dq, ddq)
    assert Y.shape == (2, 24)
    np.testing.assert_allclose(Y @ theta, exciteid.rnea(pendulum, q, dq, ddq, theta), atol=1e-10)
    assert len(exciteid.std_param_labels(2)) == 24


def test_base_projection(pendulum):
    p = exciteid.base_projection(pendulum)
    assert p.rank == 10
    assert len(p.b_idx) + len(p.d_idx) == 24
    tb = exciteid.project(exciteid.nominal_params(pendulum), p)
    assert tb.shape == (10,)


def test_errors():
    with pytest.raises(exciteid.ParseError):
        exciteid.parse_urdf("<robot")
    with pytest.raises(exciteid.Error):
        exciteid.load_urdf(str(DATA / "missing.urdf"))
    with pytest.raises(exciteid.DegenerateError):
        exciteid.convex_hull_vertices(np.zeros((5, 3)))


def test_numerics():
    assert exciteid.condition_number(np.diag([2.0, 1.0])) == pytest.approx(2.0)
    v = exciteid.td_filter(np.full(2000, 0.7), 0.01)
    assert abs(v[-1] - 0.7) < 1e-6
    rng = np.random.default_rng(2)
    A = rng.uniform(-1, 1, (20, 3))
    r = exciteid.solve_bvls(A, A @ np.array([0.2, 1.5, -0.1]), -np.ones(3), np.ones(3))
    assert r["converged"] and r["kkt_ok"]
    assert r["x"][1] == 1.0
    pts = np.vstack([rng.normal(0, 0.01, (60, 3)), rng.normal(0, 0.01, (60, 3)) + [0.5, 0, 0]])
    fit = exciteid.fit_mfpee(pts, 6, 2)
    assert fit["k_star"] == 2
    assert np.all(np.diff(fit["objective_trace"]) >= -1e-9)


def test_stages(tmp_path):
    out = TMP / "smoke"
    cfg = {
        "urdf": str(DATA / "pendulum2.urdf"),
        "output_dir": str(out),
        "fourier": {"L": 2},
        "optimizer": {"n_starts": 1, "step1_max_iter": 50, "step2_max_iter": 50},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    assert "optimize" in exciteid.stage_names()
    res = exciteid.run_stage("inspect", str(path))
    assert res["exit_code"] == 0
    assert res["summary"]["dof"] == 2
    assert exciteid.run_stage("base-params", str(path))["summary"]["rank"] == 10
    cfg["fourier"]["LL"] = 3
    path.write_text(json.dumps(cfg))
    with pytest.raises(exciteid.ConfigError):
        exciteid.run_stage("inspect", str(path))
