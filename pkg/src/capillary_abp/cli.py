"""Command line entry point: ``capillary-abp run`` and ``capillary-abp generate``.

Exit codes: 0 when every record passes, 1 when a check fails, 2 for
malformed input.
"""

import argparse
import csv
import json
import math
import sys
import time

from .scenarios import ScenarioError, csv_rows, generate, parse_scenario, run_scenario

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True)


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def cmd_run(args):
    try:
        with open(args.file) as fh:
            raw = json.load(fh)
        sc = parse_scenario(raw, samples=args.samples, seed=args.seed)
    except (OSError, json.JSONDecodeError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    t0 = time.perf_counter()
    report = run_scenario(sc, jobs=args.jobs)
    report["meta"] = {"wall_time": time.perf_counter() - t0, "jobs": args.jobs}
    out = args.output or raw.get("output")
    _write(dumps(report), out)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["check", "lambda", "margin", "half_width", "pass"])
            w.writeheader()
            w.writerows(csv_rows(report))
    for r in report["records"]:
        if not r["pass"]:
            lam = "" if r["lambda"] is None else f" lambda={r['lambda']}"
            print(f"FAIL {r['check']}{lam}: {r.get('error', r.get('margin'))}", file=sys.stderr)
    return EXIT_OK if report["pass"] else EXIT_FAIL


def cmd_generate(args):
    try:
        lams = None if args.lambdas is None else [float(x) for x in args.lambdas.split(",")]
        checks = None if args.checks is None else args.checks.split(",")
        sc = generate(
            args.kind,
            n=args.n,
            seed=args.seed,
            dim=args.dim,
            angle=args.angle,
            value_scale=args.value_scale,
            lambdas=lams,
            checks=checks,
            samples=args.samples,
        )
        parse_scenario(sc)
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _write(dumps(sc), args.output)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="capillary-abp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute the checks of a scenario file")
    r.add_argument("file")
    r.add_argument("--csv", help="also write a (check, lambda, margin, half_width, pass) table")
    r.add_argument("--samples", type=int, help="override budget.samples")
    r.add_argument("--seed", type=int, help="override budget.seed")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("-o", "--output", help="report path (default: scenario 'output' or stdout)")
    r.set_defaults(func=cmd_run)

    g = sub.add_parser("generate", help="write a random scenario")
    g.add_argument("kind", choices=["wedge", "polytope", "ball", "halfspace"])
    g.add_argument("--n", type=int, default=5, help="number of boundary sites")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--angle", type=float, default=math.pi / 2, help="wedge opening angle in (0, pi)")
    g.add_argument("--value-scale", type=float, default=1.0)
    g.add_argument("--lambdas", help="comma separated lambda grid")
    g.add_argument("--checks", help="comma separated check names")
    g.add_argument("--samples", type=int, default=100_000)
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_generate)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be positive", file=sys.stderr)
        return EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
