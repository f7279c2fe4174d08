"""Scenario files: generation, parsing and execution of verification checks.

A scenario is a JSON object::

    {
      "body": {...},                       # ConvexBody.to_dict()
      "boundary_fn": {"sites": .., "values": .., "normals": ..}
                  or {"random": {"n": 5, "seed": 0, "value_scale": 1.0}},
      "lambda_grid": [-0.3, 0.3],
      "checks": ["half_line", "main_inequality"],
      "budget": {"samples": 100000, "seed": 0},
      "method": "auto",
      "params": {"theorem1": {...}, "mesh": {...}, "minimize": {...}}
    }

Checks run in a fixed dependency order; each produces one record per
lambda (``half_line`` one in total).
"""

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from ._validation import DomainError, check_lambda
from .capillary import (
    PolytopalSet,
    disjoint_caps,
    polygonal_cap,
    random_star_set,
    verify_theorem1,
    wedge_droplet,
)
from .geometry import KINDS, ConvexBody
from .maingeo import (
    fingerprint,
    layer_cake_check,
    minimize_restricted_measure,
    verify_main_inequality,
    verify_sphere_inequality,
)
from .measures import Budget
from .subdiff import DiscreteBoundaryFunction, verify_half_line

SCHEMA = "capillary-abp/1"
CHECKS = (
    "half_line",
    "main_inequality",
    "sphere_inequality",
    "layer_cake",
    "theorem1",
    "abp_chain",
    "inclusion",
    "viscosity",
    "minimize",
)
NEUMANN_CHECKS = ("abp_chain", "inclusion", "viscosity")


class ScenarioError(ValueError):
    """The scenario file is malformed or out of range."""


# -- generation ---------------------------------------------------------------


def random_polytope(N, rng, n_points=None):
    """Convex hull of Gaussian points, recentred at the origin."""
    n_points = n_points or N + 6
    P = rng.standard_normal((n_points, N))
    return ConvexBody.from_vertices(P - P.mean(axis=0))


def make_body(kind, dim=2, angle=math.pi / 2, rng=None):
    if kind == "halfspace":
        e = np.zeros(dim)
        e[-1] = 1.0
        return ConvexBody.halfspace(e, 0.0)
    if kind == "ball":
        return ConvexBody.ball(np.zeros(dim), 1.0)
    if kind == "wedge":
        return ConvexBody.wedge(angle, dim)
    if kind == "polytope":
        return random_polytope(dim, rng or np.random.default_rng(0))
    raise ScenarioError(f"unknown body kind {kind!r}")


def sample_sites(body, n, rng):
    """Boundary sites and normals, uniform per face or on the sphere.

    Halfspace sites are uniform in [-1, 1]^(N-1) on the plane; wedge sites
    alternate between the two faces, at distance U(0, 1) from the ridge with
    the remaining coordinates in [-1, 1]; polytope sites pick a random facet
    simplex and a uniform point of it; ball sites are uniform on the sphere.
    """
    N = body.dim
    if body.kind == "ball":
        d = rng.standard_normal((n, N))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return body.center + body.radius * d, d
    if body.kind == "halfspace":
        nrm = body.normals[0]
        T = _complement(nrm)
        X = body.offsets[0] * nrm + rng.uniform(-1, 1, (n, N - 1)) @ T
        return X, np.tile(nrm, (n, 1))
    if body.kind == "wedge":
        X, V = [], []
        ridge = _complement(np.vstack(body.normals))
        apex = np.linalg.lstsq(body.normals, body.offsets, rcond=None)[0]
        for i in range(n):
            k = i % 2
            nrm = body.normals[k]
            down = _complement(nrm, ridge)  # in-face direction away from the ridge
            down = down[0] if down[0] @ body.normals[1 - k] < 0 else -down[0]
            x = apex + rng.uniform(0, 1) * down
            if len(ridge):
                x = x + rng.uniform(-1, 1, len(ridge)) @ ridge
            X.append(x)
            V.append(nrm)
        return np.array(X), np.array(V)
    simp = body.facet_simplices
    ids = body.facet_ids
    X, V = [], []
    for _ in range(n):
        s = int(rng.integers(len(simp)))
        w = rng.dirichlet(np.ones(N))
        X.append(w @ simp[s])
        V.append(body.normals[ids[s]])
    return np.array(X), np.array(V)


def _complement(A, also=None):
    """Orthonormal rows spanning the complement of the rows of A (and of ``also``)."""
    A = np.atleast_2d(A)
    if also is not None and len(also):
        A = np.vstack([A, also])
    N = A.shape[1]
    _, s, vt = np.linalg.svd(A)
    rank = int(np.sum(s > 1e-12))
    return vt[rank:N]


def generate(kind, n=5, seed=0, dim=2, angle=math.pi / 2, value_scale=1.0, lambdas=None, checks=None, samples=100_000):
    """Deterministic scenario dictionary for a body kind."""
    if kind not in KINDS:
        raise ScenarioError(f"unknown body kind {kind!r}")
    if n < 1:
        raise ScenarioError("n must be at least 1")
    if dim < 2:
        raise ScenarioError("dimension must be at least 2")
    if kind == "wedge" and not 0 < angle < math.pi:
        raise ScenarioError("wedge opening angle must lie in (0, pi)")
    rng = np.random.default_rng(seed)
    body = make_body(kind, dim, angle, rng)
    X, V = sample_sites(body, n, rng)
    values = value_scale * rng.standard_normal(n)
    return {
        "body": body.to_dict(),
        "boundary_fn": {"sites": X.tolist(), "values": values.tolist(), "normals": V.tolist()},
        "lambda_grid": list(lambdas) if lambdas is not None else [-0.7, -0.3, 0.0, 0.3, 0.7],
        "checks": list(checks) if checks is not None else ["half_line", "main_inequality"],
        "budget": {"samples": samples, "seed": seed},
        "method": "auto",
        "params": {},
    }


# -- parsing ------------------------------------------------------------------


def parse_scenario(d, samples=None, seed=None):
    """Validate and normalise a scenario dict; raises ScenarioError."""
    if not isinstance(d, dict):
        raise ScenarioError("scenario must be a JSON object")
    checks = d.get("checks", ["half_line", "main_inequality"])
    unknown = [c for c in checks if c not in CHECKS]
    if unknown:
        raise ScenarioError(f"unknown checks {unknown}")
    try:
        lams = [check_lambda(x) for x in d.get("lambda_grid", [0.0])]
    except (DomainError, TypeError, ValueError) as exc:
        raise ScenarioError(str(exc)) from exc
    budget = dict(d.get("budget") or {})
    if samples is not None:
        budget["samples"] = int(samples)
    if seed is not None:
        budget["seed"] = int(seed)
    budget = Budget.from_dict(budget).to_dict()
    if budget["samples"] < 1:
        raise ScenarioError("budget.samples must be positive")
    method = d.get("method", "auto")
    if method not in ("auto", "exact2d", "montecarlo"):
        raise ScenarioError(f"unknown method {method!r}")
    try:
        body = ConvexBody.from_dict(d["body"]) if d.get("body") else None
        bf = d.get("boundary_fn")
        if bf is not None and "random" in bf:
            if body is None:
                raise ScenarioError("a random boundary function needs a body")
            r = bf["random"]
            rng = np.random.default_rng(int(r.get("seed", 0)))
            X, V = sample_sites(body, int(r.get("n", 5)), rng)
            vals = float(r.get("value_scale", 1.0)) * rng.standard_normal(len(X))
            bf = {"sites": X.tolist(), "values": vals.tolist(), "normals": V.tolist()}
        if bf is not None:
            f = DiscreteBoundaryFunction.from_dict(bf, body=body)
            bf = f.to_dict()
    except ScenarioError:
        raise
    except (DomainError, KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid body or boundary function: {exc}") from exc
    needs_f = {"half_line", "main_inequality", "sphere_inequality"} & set(checks)
    if needs_f and bf is None:
        raise ScenarioError(f"checks {sorted(needs_f)} need a boundary function")
    if "minimize" in checks and body is None:
        raise ScenarioError("minimize needs a body")
    return {
        "body": None if body is None else body.to_dict(),
        "boundary_fn": bf,
        "lambda_grid": lams,
        "checks": [c for c in CHECKS if c in checks],
        "budget": budget,
        "method": method,
        "params": dict(d.get("params") or {}),
    }


# -- execution ----------------------------------------------------------------


def _boundary_fn(sc):
    body = ConvexBody.from_dict(sc["body"]) if sc["body"] else None
    return DiscreteBoundaryFunction.from_dict(sc["boundary_fn"], body=body), body


def _theorem1_set(sc, lam):
    p = dict(sc["params"].get("theorem1") or {})
    kind = p.get("kind", "cap")
    k = int(p.get("k", 128))
    if kind == "cap":
        return polygonal_cap(lam, k), ConvexBody.halfspace([0.0, 1.0], 0.0)
    if kind == "wedge_droplet":
        return wedge_droplet(lam, k, float(p.get("angle", math.pi / 2)))
    if kind == "disjoint_caps":
        return disjoint_caps(lam, k), ConvexBody.halfspace([0.0, 1.0], 0.0)
    if kind == "random_star":
        body = ConvexBody.from_dict(sc["body"])
        rng = np.random.default_rng(int(p.get("seed", sc["budget"]["seed"])))
        return random_star_set(body, rng, k), body
    if kind == "explicit":
        return PolytopalSet.from_dict(p["set"]), ConvexBody.from_dict(sc["body"])
    raise ScenarioError(f"unknown theorem1 set kind {kind!r}")


def _neumann_solution(sc, lam):
    from .neumann.fem import solve_neumann
    from .neumann.mesh import MixedBoundaryMesh, cap_mesh, dumbbell_mesh, square_mesh

    p = dict(sc["params"].get("mesh") or {})
    kind = p.get("kind", "cap")
    h = float(p.get("h", 0.1))
    if kind == "cap":
        mesh = cap_mesh(lam, h)
    elif kind == "square":
        mesh = square_mesh(h)
    elif kind == "dumbbell":
        mesh = dumbbell_mesh(h, float(p.get("neck", 0.3)))
    elif kind == "explicit":
        mesh = MixedBoundaryMesh.from_dict(p["mesh"]).check()
    else:
        raise ScenarioError(f"unknown mesh kind {kind!r}")
    return solve_neumann(mesh, lam)


def run_check(sc, check, lam):
    """One record for one check at one lambda."""
    budget = Budget.from_dict(sc["budget"])
    method = sc["method"]
    rec = {"check": check, "lambda": lam}
    try:
        if check == "half_line":
            f, _ = _boundary_fn(sc)
            cert = verify_half_line(f)
            rec.update(cert.to_dict())
            rec["pass"] = cert.passed
        elif check == "main_inequality":
            f, _ = _boundary_fn(sc)
            rec.update(verify_main_inequality(f, lam, budget, method).to_dict())
        elif check == "sphere_inequality":
            f, _ = _boundary_fn(sc)
            rec.update(verify_sphere_inequality(f, lam, budget, method).to_dict())
        elif check == "layer_cake":
            if lam >= 0:
                rec.update({"skipped": "layer-cake identity needs lambda < 0", "pass": True})
            else:
                N = int(sc["params"].get("dim", 0)) or (
                    ConvexBody.from_dict(sc["body"]).dim if sc["body"] else 2
                )
                rec.update(layer_cake_check(lam, N).to_dict())
        elif check == "theorem1":
            E, body = _theorem1_set(sc, lam)
            rec.update(verify_theorem1(E, body, lam).to_dict())
        elif check in NEUMANN_CHECKS:
            from .neumann import abp

            sol = _neumann_solution(sc, lam)
            if check == "abp_chain":
                rec.update(abp.abp_chain_report(sol).to_dict())
            elif check == "inclusion":
                rec.update(abp.check_subdiff_inclusion(sol, budget=budget).to_dict())
            else:
                rec.update(abp.check_viscosity_conditions(sol).to_dict())
        elif check == "minimize":
            p = dict(sc["params"].get("minimize") or {})
            body = ConvexBody.from_dict(sc["body"])
            res = minimize_restricted_measure(
                body,
                int(p.get("n_sites", 4)),
                lam,
                n_starts=int(p.get("starts", 4)),
                sweeps=int(p.get("sweeps", 15)),
                seed=budget.seed,
                final_budget=budget,
                method=method,
            )
            rec.update(res.report.to_dict())
            rec["best_f"] = res.f.to_dict()
            rec["evaluations"] = res.evaluations
    except (DomainError, ValueError, RuntimeError) as exc:
        rec["error"] = f"{type(exc).__name__}: {exc}"
        rec["pass"] = False
    return _plain(rec)


def _plain(x):
    """Convert numpy scalars and arrays to JSON-native values."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def _tasks(sc):
    out = []
    for check in sc["checks"]:
        if check == "half_line":
            out.append((check, None))
        else:
            out.extend((check, lam) for lam in sc["lambda_grid"])
    return out


def _run_task(args):
    sc, check, lam = args
    return run_check(sc, check, lam)


def run_scenario(sc, jobs=1):
    """Execute a parsed scenario; returns the report body without timing.

    A failing half-line certificate stops the inequality checks, whose
    hypotheses it is.  Records are ordered by (check, lambda) regardless of
    ``jobs``.
    """
    tasks = _tasks(sc)
    records = []
    if tasks and tasks[0][0] == "half_line":
        records.append(run_check(sc, "half_line", None))
        tasks = tasks[1:]
        if not records[0]["pass"]:
            dependent = {"main_inequality", "sphere_inequality", "minimize"}
            for check, lam in tasks:
                if check in dependent:
                    records.append(
                        {"check": check, "lambda": lam, "pass": False, "error": "half-line certificate failed"}
                    )
            tasks = [t for t in tasks if t[0] not in dependent]
    payload = [(sc, c, lam) for c, lam in tasks]
    if jobs > 1 and len(payload) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            records += list(ex.map(_run_task, payload))
    else:
        records += [_run_task(p) for p in payload]
    order = {c: i for i, c in enumerate(CHECKS)}
    records.sort(key=lambda r: (order[r["check"]], -math.inf if r["lambda"] is None else r["lambda"]))
    return {
        "schema": SCHEMA,
        "scenario": sc,
        "fingerprint": fingerprint(sc),
        "versions": versions(),
        "records": records,
        "pass": all(r["pass"] for r in records),
    }


def versions():
    import scipy
    import sklearn

    return {
        "capillary_abp": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
    }


def reproduce(report, jobs=1):
    """Re-run the scenario embedded in a report; returns the new report."""
    sc = parse_scenario(report["scenario"])
    return run_scenario(sc, jobs)


def csv_rows(report):
    """(check, lambda, margin, half_width, pass) per record."""
    rows = []
    for r in report["records"]:
        lhs = r.get("lhs")
        hw = lhs.get("half_width") if isinstance(lhs, dict) else r.get("half_width")
        rows.append(
            {
                "check": r["check"],
                "lambda": r["lambda"],
                "margin": r.get("margin"),
                "half_width": hw,
                "pass": r["pass"],
            }
        )
    return rows
