"""Acceptance criteria, one test (or one faithful sub-test per clause) each.

Every test records a single ``PASS``/``FAIL`` line, printed in the terminal
summary of the run.
"""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from dentlab import (
    PointCloud, ScoredMap, TreeSpec, bour_bound_check, build_renorm, dc_split_check,
    derive_once, dz_index, gen_norm_one_map, gen_sep_metric, gen_standard, gen_tree,
    lancien_check, martingale_run, midpoint_drop_check, moreau_envelope, oscillation,
    ss_density_scan, uniform_error_curve,
)
from dentlab.dcapprox import lipschitz_constant
from dentlab.geometry import slice_indices

pytestmark = pytest.mark.acceptance

TREE_CAP = (16, 200)  # the depth-3 tree has 15 points


def report(name, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# 1 --------------------------------------------------------------------------

def test_c01_sandwich():
    rng = np.random.default_rng(1)
    bad = 0
    start = time.perf_counter()
    for _ in range(200):
        n, d = int(rng.integers(2, 13)), int(rng.integers(1, 4))
        m = int(rng.integers(1, 3))
        f = ScoredMap(PointCloud(rng.random((n, d))), rng.random((n, m)))
        eps = float(rng.uniform(0.05, 1.0))
        ex = set(derive_once(f, None, eps).removed)
        cl = set(derive_once(f, None, eps, "cluster").removed)
        half = set(derive_once(f, None, eps / 2).removed)
        bad += (not cl <= ex) + (not half <= cl)
    elapsed = time.perf_counter() - start
    report("1 sandwich: cluster vs exact removals", bad == 0 and elapsed < 60,
           f"violations={bad}, {elapsed:.1f}s")


# 2 / 3 ----------------------------------------------------------------------

def _convex_instances():
    """Fifty convex maps, rescaled to be 1-Lipschitz, on the densest clouds
    the exact derivation accepts: ten each of a 101-point line grid, a 13x13
    grid, 120 disc samples, 14 ball samples in R^3 and the cube vertices."""
    rng = np.random.default_rng(2)
    out = []
    for j in range(50):
        kind = j % 5
        if kind == 0:
            A = gen_standard("grid", 1, 101)
        elif kind == 1:
            A = gen_standard("grid", 2, 13)
        elif kind == 2:
            A = gen_standard("ball", 2, 120, seed=j)
        elif kind == 3:
            A = gen_standard("ball", 3, 14, seed=j)
        else:
            A = gen_standard("grid", 3, 2)
        X, d = A.points, A.dim
        Q = rng.standard_normal((d, d))
        a = rng.standard_normal((3, d))
        vals = (0.5 * np.einsum("ij,jk,ik->i", X, Q @ Q.T, X) + X @ rng.standard_normal(d)
                + np.max(X @ a.T, axis=1) + np.abs(X[:, 0] - 0.3))
        f = ScoredMap(A, vals[:, None])
        out.append(ScoredMap(A, (vals / lipschitz_constant(f))[:, None]))
    return out


@pytest.fixture(scope="module")
def convex_traces():
    return [(f, eps, dz_index(f, eps)) for f in _convex_instances() for eps in (0.4, 0.2, 0.1)]


def test_c02_convex_dentability(convex_traces):
    finite = all(tr.finite for _, _, tr in convex_traces)
    grid = ScoredMap.identity(gen_standard("grid", 1, 21))
    dz = dz_index(grid, 0.4).dz
    report("2 convex maps have finite Dz; grid Dz(0.4) = 2", finite and dz == 2,
           f"traces={len(convex_traces)}, grid Dz={dz}")


def test_c03_lancien(convex_traces):
    rng = np.random.default_rng(3)
    checked = bad = 0
    by_dim = {}
    for f, eps, tr in convex_traces:
        rep = lancien_check(f, eps, tr, trials=100, rng=rng)
        checked += rep.checked
        bad += len(rep.violations)
        key = (f.domain.dim, eps)
        by_dim[key] = by_dim.get(key, 0) + len(rep.violations)
    detail = ", ".join(f"d{d}/eps{e}:{v}" for (d, e), v in sorted(by_dim.items()))
    report("3 slices missing the derived set oscillate <= 2 eps", bad == 0 and checked > 0,
           f"checked={checked}, violations={bad} ({detail})")


# 4 --------------------------------------------------------------------------

def test_c04a_tree_stall_at_04():
    stalls = {D: dz_index(gen_tree(TreeSpec(depth=D)).identity(), 0.4, capacity=TREE_CAP)
              for D in (2, 3)}
    ok = all(tr.stalled_at is not None for tr in stalls.values())
    report("4a tree derivation stalls at eps 0.4 (D = 2, 3)", ok,
           ", ".join(f"D={D}: Dz={tr.dz}" for D, tr in stalls.items()))


def test_c04b_tree_index_grows_at_06():
    dz = [dz_index(gen_tree(TreeSpec(depth=D)).identity(), 0.6, capacity=TREE_CAP).dz
          for D in (2, 3)]
    ok = None not in dz and dz[0] < dz[1]
    report("4b tree Dz at eps 0.6 increases with D", ok, f"Dz={dz}")


# 5 --------------------------------------------------------------------------

def test_c05_moreau_abs():
    mesh = 1 / 512
    line = PointCloud(np.arange(-512, 513)[:, None] * mesh)
    f = ScoredMap.from_function(line, lambda Y: np.abs(np.atleast_2d(Y)[:, 0]))
    ns = (1, 2, 4, 8, 16)
    rows = uniform_error_curve(f, ns)
    err_ok = all(abs(e - 1 / (4 * n)) <= 2 * mesh for n, e, _ in rows)
    reps = [dc_split_check(moreau_envelope(f, n), 1000, np.random.default_rng(n)) for n in ns]
    split_ok = all(r.passed and not r.midpoint_violations for r in reps)
    report("5 envelope error 1/(4n) and dc split", err_ok and split_ok,
           "errors=" + ",".join(f"{e:.6f}" for _, e, _ in rows))


# 6 --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def renorm_setup():
    f = ScoredMap.identity(PointCloud(np.linspace(-1, 1, 81)[:, None]))
    return f, build_renorm(f, 3)


def test_c06a_midpoint_drop(renorm_setup):
    f, R = renorm_setup
    rep = midpoint_drop_check(R, f, 0.5, trials=1000, rng=np.random.default_rng(6))
    report("6a midpoint drop holds on 1000 pairs", rep.passed and rep.checked == 1000,
           f"violations={len(rep.violations)}, min margin={rep.min_margin:.3g}, "
           f"drop={rep.drop:.3g}")


def test_c06b_scaled_fault_detected(renorm_setup):
    f, R = renorm_setup
    rep = midpoint_drop_check(R.scaled(0.1), f, 0.5, trials=1000,
                              rng=np.random.default_rng(6))
    report("6b 0.1-scaled renorming is flagged", not rep.passed,
           f"violations={len(rep.violations)}, min margin={rep.min_margin:.3g}, "
           f"drop={rep.drop:.3g}")


# 7 --------------------------------------------------------------------------

def test_c07_density_disc():
    A = gen_standard("ball", 2, 500, seed=7)
    f = ScoredMap.identity(A)
    stats = ss_density_scan(f, None, 64, 0.25, seed=7)
    rng = np.random.default_rng(7)
    U = rng.standard_normal((64, 2))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    ok = stats.success_fraction == 1.0
    # rerun each direction to recover y* and re-verify it from scratch
    from dentlab import ss_perturb
    for k, u in enumerate(U):
        res = ss_perturb(f, None, u, 0.25, None, None, np.random.default_rng([7, k]))
        members = slice_indices(A.points, np.arange(len(A)), res.functional, res.depth)
        ok &= np.linalg.norm(u - res.functional) < 0.25
        ok &= oscillation(f, members) < 0.25
    report("7 disc density scan succeeds everywhere", bool(ok),
           f"success={stats.success_fraction}, max |u-y*|={stats.max_perturbation:.3g}")


# 8 --------------------------------------------------------------------------

def test_c08_bour_sweep():
    rng = np.random.default_rng(8)
    checked = bad = 0
    while checked < 10_000:
        u = rng.standard_normal(2)
        u /= np.linalg.norm(u)
        y = rng.uniform(-1, 1, 2)
        v = rng.standard_normal(2)
        if v @ u <= 0:
            v = -v
        x0 = y + rng.uniform(0.01, 1) * v / np.linalg.norm(v)
        if not u @ x0 > u @ y:
            continue
        r = 2 * np.linalg.norm(x0 - y) * rng.uniform(1, 5)
        bound = 2 / r * np.linalg.norm(x0 - y)
        width = min(math.pi, 3 * 2 * math.asin(min(bound / 2, 1)))
        th = np.arctan2(u[1], u[0]) + rng.uniform(-width, width, 20)
        C = np.c_[np.cos(th), np.sin(th)]
        rep = bour_bound_check(u, x0, y, r, C, rng=rng)
        checked += rep.checked
        bad += len(rep.violations)
    report("8 two-over-r bound over 10^4 admissible tuples", bad == 0,
           f"checked={checked}, violations={bad}")


# 9 --------------------------------------------------------------------------

def test_c09_norm_one_map():
    T = gen_tree(TreeSpec(depth=3))
    F = gen_norm_one_map(T.cloud, T.fmap, p=math.inf)
    ulp = np.finfo(float).eps
    norm_ok = np.all(np.abs(np.abs(F.values).sum(axis=1) - 1) <= ulp)
    diam = T.cloud.diameter(math.inf)
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(100):
        S = rng.choice(len(T.cloud), size=int(rng.integers(1, len(T.cloud) + 1)), replace=False)
        a, b = oscillation(F, S), 2 / diam * oscillation(T.fmap, S)
        worst = max(worst, abs(a - b))
    report("9 norm-one map and oscillation factor 2/diam", bool(norm_ok) and worst <= 4 * ulp,
           f"worst identity error={worst:.2g}")


# 10 -------------------------------------------------------------------------

def test_c10_martingale():
    T = gen_tree(TreeSpec(depth=3))
    eps = 0.5
    run = martingale_run(T.identity(), eps, 3, start=0, combos=T.combos())
    conds = all(all(lv.conditions.values()) for lv in run.levels)
    F = T.identity().values
    raw = []
    for n in range(3):
        parent = run.values[n]
        child = run.values[n + 1]
        for q, (lo, hi) in enumerate(run.partitions[n + 1]):
            k = next(k for k, (a, b) in enumerate(run.partitions[n]) if a <= lo and hi <= b)
            raw.append(np.abs(F[child[q]] - F[parent[k]]).sum())
    sep_ok = min(raw) >= eps
    ok = conds and run.residual_sum <= eps / 16 + eps / 8 and sep_ok
    report("10 martingale conditions on the depth-3 tree", ok,
           f"residual sum={run.residual_sum}, min l1 separation={min(raw)}")


# 11 -------------------------------------------------------------------------

def test_c11a_norm_trace_stalls():
    T = gen_tree(TreeSpec(depth=3))
    tr = dz_index(T.identity(), 0.4, capacity=TREE_CAP)
    report("11a norm-metric trace stalls on the depth-3 tree", tr.stalled_at is not None,
           f"Dz={tr.dz}")


def test_c11b_separating_metric_finite():
    T = gen_tree(TreeSpec(depth=3))
    sm = gen_sep_metric(T.cloud, np.eye(T.cloud.dim), p=math.inf)
    f = ScoredMap(T.cloud, None, sm.metric)
    tr = dz_index(f, 0.4, capacity=TREE_CAP)
    report("11b separating-metric trace has finite Dz", sm.separating and tr.finite,
           f"Dz={tr.dz}")


# 12 -------------------------------------------------------------------------

def test_c12_cli_determinism(tmp_path):
    def cli(*args):
        return subprocess.run([sys.executable, "-m", "dentlab", *args],
                              capture_output=True, cwd=tmp_path).stdout

    disc = tmp_path / "disc.json"
    disc.write_bytes(cli("gen-example", "--shape", "ball", "--d", "2", "--n", "120",
                         "--seed", "5"))
    sym = tmp_path / "sym.json"
    sym.write_text(json.dumps({"dim": 1, "points": [{"x": [k / 20 - 1]} for k in range(41)]}))
    runs = [
        ("gen-example", "--shape", "tree", "--map", "norm-one"),
        ("dent-index", "--input", "disc.json", "--eps", "0.3", "--mode", "cluster"),
        ("derive", "--input", "disc.json", "--eps", "0.3"),
        ("ss-scan", "--input", "disc.json", "--n-dirs", "16"),
        ("dc-approx", "--function", "abs", "--n-list", "1,2", "--emit", "json",
         "--trials", "100"),
        ("renorm-check", "--input", "sym.json", "--K", "2", "--trials", "200"),
        ("martingale",),
        ("equi-slice", "--input", "disc.json", "--eps", "0.3"),
    ]
    same = []
    for args in runs:
        a, b = cli(*args, "--seed", "3"), cli(*args, "--seed", "3")
        same.append(bool(a) and a == b)
    report("12 CLI output is byte-identical across runs", all(same),
           f"{sum(same)}/{len(same)} commands identical")
