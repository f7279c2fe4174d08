"""Acceptance suite: one test, and one summary line, per criterion."""

import json
import math

import numpy as np
import pytest

from capillary_abp.capillary import polygonal_cap, verify_theorem1, wedge_droplet
from capillary_abp.cli import main
from capillary_abp.geometry import ConvexBody
from capillary_abp.maingeo import (
    K_SIGMA,
    layer_cake_check,
    lipschitz_profile_check,
    psi_calculus_check,
    reflection_check,
    verify_main_inequality_grid,
)
from capillary_abp.measures import Budget
from capillary_abp.neumann import (
    abp_chain_report,
    cap_mesh,
    check_subdiff_inclusion,
    solve_neumann,
)
from capillary_abp.neumann.fem import lumped_mass
from capillary_abp.scenarios import CHECKS, generate, reproduce
from capillary_abp.subdiff import DiscreteBoundaryFunction, SubdifferentialPartition

KINDS = ("halfspace", "wedge", "ball", "polytope")
DIMS = (2, 3, 4)
LAMS = (-0.7, -0.3, 0.0, 0.3, 0.7)
SAMPLES = 1_000_000
# floating point floor for exact measures, whose half-width is zero
ROUNDING = 1e-12


def scenario(i, samples=SAMPLES):
    """Scenario i of the fixed acceptance family: kind, dimension and site
    count cycle through all combinations."""
    kind = KINDS[i % 4]
    N = DIMS[(i // 4) % 3]
    n = 1 + (i // 12) % 10
    sc = generate(kind, n=n, seed=i, dim=N, samples=samples)
    f = DiscreteBoundaryFunction.from_dict(sc["boundary_fn"], body=ConvexBody.from_dict(sc["body"]))
    return f, Budget.from_dict(sc["budget"]), (kind, N, n)


@pytest.mark.slow
def test_criterion_1_main_inequality(criterion):
    worst = math.inf
    combos = set()
    fails = []
    count = 0
    for i in range(500):
        f, budget, combo = scenario(i)
        combos.add(combo[:2])
        for rep in verify_main_inequality_grid(f, LAMS, budget, "auto"):
            count += 1
            hw = rep.lhs.half_width
            score = rep.margin + K_SIGMA * hw + ROUNDING
            worst = min(worst, score)
            if score < 0 or not all(rep.subchecks.values()):
                fails.append((i, rep.lam, rep.margin, hw))
    ok = not fails and count == 2500 and len(combos) == 12
    criterion(1, "main inequality, 500 scenarios x 5 lambdas", ok, f"{count} margins, {len(fails)} below -3hw, min margin+3hw={worst:.3g}")
    assert ok, fails[:10]


def test_criterion_2_equality_cases(criterion):
    rng = np.random.default_rng(2)
    worst_ratio, worst_exact = 0.0, 0.0
    ok = True
    for N in DIMS:
        e = np.zeros(N)
        e[-1] = 1.0
        flat = ConvexBody.halfspace(e, 0.0)
        for t in range(10):
            n = int(rng.integers(1, 11))
            X = np.column_stack([rng.uniform(-1, 1, (n, N - 1)), np.zeros(n)])
            flat_f = DiscreteBoundaryFunction(X, rng.normal(size=n), np.tile(e, (n, 1)), body=flat)
            body = ConvexBody.ball(np.zeros(N), 1.0)
            x = rng.normal(size=N)
            x /= np.linalg.norm(x)
            single = DiscreteBoundaryFunction([x], [rng.normal()], [x], body=body)
            budget = Budget(SAMPLES, seed=100 * N + t)
            for f in (flat_f, single):
                for rep in verify_main_inequality_grid(f, LAMS, budget, "montecarlo"):
                    ratio = abs(rep.margin) / (K_SIGMA * rep.lhs.half_width)
                    worst_ratio = max(worst_ratio, ratio)
                    ok &= ratio <= 1.0
                if N == 2:
                    for rep in verify_main_inequality_grid(f, LAMS, None, "exact2d"):
                        worst_exact = max(worst_exact, abs(rep.margin))
                        ok &= abs(rep.margin) <= 1e-9
    criterion(2, "flat-face and single-site equality", ok, f"max |margin|/3hw={worst_ratio:.3f}, max exact |margin|={worst_exact:.2g}")
    assert ok


def test_criterion_3_reflection(criterion):
    worst = math.inf
    cells = 0
    for i in range(100):
        kind = KINDS[i % 4]
        sc = generate(kind, n=1 + i % 10, seed=1000 + i, dim=2)
        f = DiscreteBoundaryFunction.from_dict(sc["boundary_fn"], body=ConvexBody.from_dict(sc["body"]))
        for c in reflection_check(f, method="exact2d"):
            worst = min(worst, c["margin"])
            cells += 1
    ok = worst >= -1e-9
    criterion(3, "reflection bound at lambda=0, 100 2D scenarios", ok, f"{cells} cells, min margin={worst:.3g}")
    assert ok


def test_criterion_4_psi_calculus(criterion):
    rows = []
    for lam in (-0.8, -0.4, 0.4, 0.8):
        for N, seed in ((2, 3), (3, 4)):
            sc = generate("polytope", n=8, seed=seed, dim=N)
            f = DiscreteBoundaryFunction.from_dict(sc["boundary_fn"], body=ConvexBody.from_dict(sc["body"]))
            chk = psi_calculus_check(SubdifferentialPartition().fit(f), lam, n=100, seed=seed)
            rows.append(chk)
    ok = all(c.passed and c.n == 100 for c in rows)
    detail = (
        f"max norm err={max(c.norm_error for c in rows):.2g}, "
        f"max jac rel err={max(c.jacobian_rel_error for c in rows):.2g}, "
        f"min preserved={min(c.preserved for c in rows):.3f}"
    )
    criterion(4, "Psi map norm, Jacobian and cell preservation", ok, detail)
    assert ok, [c.to_dict() for c in rows if not c.passed]


def test_criterion_5_layer_cake(criterion):
    grid = np.linspace(-0.95, -0.05, 22)[1:-1]
    reps = [layer_cake_check(lam, N) for N in DIMS for lam in grid]
    excess = max(r.error - (1e-6 + r.bracket) for r in reps)
    ok = len(reps) == 60 and all(r.passed for r in reps)
    criterion(5, "layer-cake identity, 20 lambdas x N=2,3,4", ok, f"max |lhs-rhs| - allowance={excess:.3g}")
    assert ok


@pytest.mark.slow
def test_criterion_6_lipschitz_profile(criterion):
    checks = []
    for i in range(60):
        f, budget, _ = scenario(i)
        checks.append(lipschitz_profile_check(f, LAMS[i % 5], budget=budget))
    worst = max(c.excess for c in checks)
    ok = all(c.passed for c in checks)
    criterion(6, "Lipschitz bound on profile decrements, 60 scenarios", ok, f"max excess={worst:.3g}")
    assert ok


def test_criterion_7_theorem1(criterion):
    floor = ConvexBody.halfspace([0.0, 1.0], 0.0)
    ks = [2**j for j in range(5, 11)]
    details, ok = [], True
    for lam in (-0.5, 0.0, 0.3, 0.7):
        cap = np.array([verify_theorem1(polygonal_cap(lam, k), floor, lam).margin for k in ks])
        wedge = np.array([verify_theorem1(*wedge_droplet(lam, k), lam).margin for k in ks])
        order = np.log2(cap[:-1] / cap[1:])
        ok &= bool(np.all(cap > 0) and np.all(np.diff(cap) < 0) and order.min() >= 1.8)
        stable = abs(wedge[-1] - wedge[-2]) <= 1e-3 * wedge[-1]
        ok &= bool(wedge[-1] > 0 and stable and wedge[-1] > 10 * cap[-1])
        details.append(f"lam={lam}: order>={order.min():.2f}, wedge/cap={wedge[-1] / cap[-1]:.3g}")
    criterion(7, "polygonal caps and wedge droplets", ok, "; ".join(details))
    assert ok


def test_criterion_8_neumann_abp(criterion):
    hs = [0.2, 0.1, 0.05, 0.025]
    ok, details = True, []
    for lam in (-0.5, 0.0, 0.4):
        errs, deltas, gaps = [], [], []
        for h in hs:
            mesh = cap_mesh(lam, h)
            sol = solve_neumann(mesh, lam)
            ok &= abs(sol.c - 2.0) <= 1e-12
            m = lumped_mass(mesh)
            ex = 0.5 * np.sum(mesh.nodes**2, axis=1)
            ex -= m @ ex / mesh.area
            errs.append(math.sqrt(m @ (sol.u - ex) ** 2))
            rec = abp_chain_report(sol)
            ok &= rec.passed
            gaps.append(max(max(link.gap, 0.0) for link in rec.links) / h)
            inc = check_subdiff_inclusion(sol)
            ok &= inc.passed
            deltas.append(inc.delta_max)
        order = np.log2(np.array(errs[:-1]) / errs[1:])
        ratio = np.array(deltas[:-1]) / deltas[1:]
        ok &= bool(order.min() >= 1.8 and np.all(np.abs(ratio - 2) <= 0.6))
        details.append(
            f"lam={lam}: L2 order>={order.min():.2f}, delta ratios {np.round(ratio, 2).tolist()}, max gap/h={max(gaps):.2f}"
        )
    criterion(8, "Neumann solutions and the ABP chain on cap meshes", ok, "; ".join(details))
    assert ok


def _numeric_leaves(x, path=""):
    if isinstance(x, dict):
        for k in sorted(x):
            yield from _numeric_leaves(x[k], f"{path}/{k}")
    elif isinstance(x, list):
        for i, v in enumerate(x):
            yield from _numeric_leaves(v, f"{path}/{i}")
    elif isinstance(x, (int, float)) and not isinstance(x, bool):
        yield path, repr(x)


def test_criterion_9_reproducibility(criterion, tmp_path, capsys):
    cases = [generate(kind, n=5, seed=90 + j, dim=2 + j % 3, samples=50_000) for j, kind in enumerate(KINDS)]
    full = generate("wedge", n=4, seed=99, lambdas=[-0.3, 0.3], samples=20_000, checks=list(CHECKS))
    full["params"] = {"mesh": {"h": 0.2}, "theorem1": {"kind": "disjoint_caps", "k": 64}, "minimize": {"sweeps": 3, "starts": 2}}
    cases.append(full)
    ok, leaves = True, 0
    for j, sc in enumerate(cases):
        src, out = tmp_path / f"s{j}.json", tmp_path / f"r{j}.json"
        src.write_text(json.dumps(sc))
        main(["run", str(src), "-o", str(out)])
        capsys.readouterr()
        report = json.loads(out.read_text())
        again = reproduce(report)
        a = dict(_numeric_leaves({k: v for k, v in report.items() if k != "meta"}))
        b = dict(_numeric_leaves(again))
        leaves += len(a)
        ok &= a == b
        ok &= json.dumps({k: v for k, v in report.items() if k != "meta"}, sort_keys=True) == json.dumps(again, sort_keys=True)
    criterion(9, "reports regenerate byte-identically", ok, f"{len(cases)} reports, {leaves} numeric fields")
    assert ok
