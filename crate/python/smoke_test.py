"""Smoke test for the hessian_spectra extension module.

Build the module first (from the repository root):

    cargo build -p hessian-spectra-py --release --features extension-module
    cp target/release/libhessian_spectra.so python/hessian_spectra.so

then run `python3 python/smoke_test.py`. Alternatively `maturin develop`
inside crates/python installs it into the active environment.
"""

import json
import math
import os
import random
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, HERE)

import hessian_spectra as hs  # noqa: E402

ROOT = os.path.dirname(HERE)


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def check_matrix_functions():
    rng = random.Random(0)
    n = 30
    a = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            a[i][j] = a[j][i] = rng.gauss(0.0, 1.0)
    values, vectors = hs.eigh(a)
    assert len(values) == n and len(vectors) == n
    assert all(values[i] <= values[i + 1] for i in range(n - 1))
    assert close(sum(values), sum(a[i][i] for i in range(n)), 1e-10)

    top = hs.matrix_top_eigenpairs(a, k=2, seed=1)
    want = sorted(values, key=abs, reverse=True)[:2]
    for got, w in zip(top["values"], want):
        assert close(got, w, 1e-6), (got, w)

    ident = [[float(i == j) for j in range(n)] for i in range(n)]
    t = hs.matrix_trace(ident, n_v=10, seed=3)
    assert t["estimate"] == n and all(s == n for s in t["samples"])

    d = hs.matrix_density(a, q=20, n_v=10, seed=4)
    assert abs(d["integral"] - 1.0) < 5e-3, d["integral"]
    assert min(d["values"]) >= 0.0
    print("matrix functions ok: lambda_max %.4f, density integral %.6f" % (top["values"][0], d["integral"]))


def check_quadratic_model():
    diag = [3.0, -2.0, 1.0, 0.5, 0.25]
    cfg = {
        "model": {"kind": "quadratic", "diagonal": diag, "blocks": [{"name": "a", "len": 2}, {"name": "b", "len": 3}]}
    }
    m = hs.Model.from_json(json.dumps(cfg))
    assert m.dim == 5 and m.blocks == [("a", 2), ("b", 3)]
    v = [1.0, 1.0, 1.0, 1.0, 1.0]
    assert m.hvp(v) == diag
    assert m.loss([1.0, 0, 0, 0, 0]) == 1.5
    top = m.top_eigenpairs(k=2)
    assert close(top["values"][0], 3.0, 1e-6) and close(top["values"][1], -2.0, 1e-6)
    assert close(m.trace(n_v=5)["estimate"], sum(diag), 1e-12)
    assert close(m.trace(n_v=5, stage=["b"])["estimate"], 1.75, 1e-12)
    print("quadratic model ok")


def check_network_model():
    m = hs.Model.from_file(os.path.join(ROOT, "configs", "toy_norm.json"))
    assert m.train_losses[-1] < m.train_losses[0]
    theta = m.theta
    g = m.gradient()
    eps = 1e-5
    for i in (0, len(theta) // 2, len(theta) - 1):
        up, down = list(theta), list(theta)
        up[i] += eps
        down[i] -= eps
        fd = (m.loss(up) - m.loss(down)) / (2 * eps)
        assert abs(fd - g[i]) < 1e-6 * max(1.0, max(abs(x) for x in g)), (i, fd, g[i])

    top = m.top_eigenpairs(k=2, seed=7)
    lam = top["values"][0]
    u = top["vectors"][0]
    hu = m.hvp(u)
    assert math.sqrt(sum((a - lam * b) ** 2 for a, b in zip(hu, u))) < 1e-3 * abs(lam)

    t = m.trace(n_v=50, seed=7)
    d = m.density(q=40, n_v=20, seed=7)
    assert abs(d["integral"] - 1.0) < 5e-3
    land = m.landscape(half_width=0.5, resolution=11, seed=7)
    c = len(land["eps1"]) // 2
    assert land["eps1"][c] == 0.0 and close(land["losses"][c][c], land["base_loss"], 1e-12)
    print(
        "network model ok: m = %d, lambda_1 %.4f, trace %.4f +- %.4f, curvature %.4f"
        % (m.dim, lam, t["estimate"], t["stderr"], land["curvature"][0])
    )


if __name__ == "__main__":
    check_matrix_functions()
    check_quadratic_model()
    check_network_model()
    print("all smoke tests passed")
