"""Smoke test for the Python bindings.

Build and install first:
    pip install --no-build-isolation -e crates/py
"""

import math
import pathlib
import tempfile

import finsler_forge_py as ff

ROOT = pathlib.Path(__file__).resolve().parent.parent


def close(a, b, tol):
    assert abs(a - b) <= tol, (a, b)


def test_expression():
    e = ff.Expression("x^2 * sin(y)", ["x", "y"])
    p = [0.7, 0.3]
    close(e.value(p), 0.49 * math.sin(0.3), 1e-15)
    gx, gy = e.gradient(p)
    close(gx, 1.4 * math.sin(0.3), 1e-14)
    close(gy, 0.49 * math.cos(0.3), 1e-14)
    close(e.derivative(p, [2, 1]), 2 * math.cos(0.3), 1e-13)
    try:
        ff.Expression("sin(", ["x"])
    except ff.ParseError as err:
        assert "1:5" in str(err)
    else:
        raise AssertionError("malformed expression accepted")


def test_hessian():
    # Riemannian quadratic form: the Hessian is the metric itself
    g = ff.hessian_metric("(1 + x^2) * u^2 + 2 * u * w + 3 * w^2", ["x", "z", "u", "w"], 2, [0.5, 0.0, 1.0, 2.0])
    for row, want in zip(g, [[1.25, 1.0], [1.0, 3.0]]):
        for a, b in zip(row, want):
            close(a, b, 1e-13)


def test_model():
    src = (ROOT / "configs" / "verify.toml").read_text()
    m = ff.Model.from_toml(src)
    assert m.coords == ["x1", "x2", "v", "y"] and m.horizontal == 2
    point = [0.1, 0.2, 0.9, 0.1]
    g = m.metric(point)
    assert all(abs(g[i][j] - g[j][i]) < 1e-14 for i in range(4) for j in range(4))
    conn = m.connection(point)
    assert set(conn) == {"L_h", "L_v", "C_h", "C_v"}
    curv = m.curvature(point)
    close(curv["scalar"], curv["h_scalar"] + curv["v_scalar"], 1e-10)
    worst = max(r for r, _ in m.verify().values())
    assert worst < 1e-8, worst
    worst = max(r for r, _ in m.verify([point]).values())
    assert worst < 1e-8, worst


def test_cosmology():
    t = ff.critical_thresholds()
    close(t["hplus"], 1 + math.sqrt(2.5), 1e-15)
    close(t["hatt"], -1 + 1 / math.sqrt(2), 1e-15)
    assert ff.gamma_rhs(1.0, 0.7) == 0.0
    label, _, printed = ff.classify_regime(3.0)
    assert label == "accel_then_decel" and label in printed
    traj = ff.evolve(0.5, 0.5, t1=1.0, dt=0.01)
    assert len(traj["t"]) == 101 and traj["blowup"] is None
    omega, residual = ff.kp_line_soliton(1.0, 0.5, 1.0)
    close(omega, 4.25, 1e-10)
    assert residual < 1e-10


def test_run():
    with tempfile.TemporaryDirectory() as out:
        code, files, summary = ff.run("cosmo-classify", ROOT / "configs" / "cosmo-classify.toml", out)
        assert code == 0 and files[0].name == "cosmo-classify.csv", summary
        code, _, summary = ff.run("verify", ROOT / "configs" / "verify_perturbed.toml", out)
        assert code == 1, summary


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            fn()
            print(f"ok  {name}")
