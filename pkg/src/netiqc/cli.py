"""Command-line interface: certify, oracle, simulate, structure.

Exit codes for ``certify``: 0 = certified, 1 = not certified, 2 = error.
``oracle`` mirrors that: 0 = all cross checks consistent / no witness,
1 = destabilizing witness found, 2 = error.  The other commands use 0/2.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .certify import certify_network
from .errors import NetIqcError, SpecError
from .lti import FrequencyGrid
from .netspec import build_problem, load_network_spec
from .oracle import destabilization_search, direct_iqc_check, validate_multiplier
from .sim import default_dt, ideal_sample, simulate, write_trace
from . import oracle as oracle_mod


def _parse_grid(text: str) -> FrequencyGrid:
    try:
        lo, hi, pts = text.split(":")
        return FrequencyGrid(omega_min=float(lo), omega_max=float(hi), points=int(pts))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"grid must look like MIN:MAX:POINTS, got {text!r}"
        ) from exc


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text + ("" if text.endswith("\n") else "\n"))
    else:
        print(text)


def _cmd_certify(args) -> int:
    spec = load_network_spec(args.spec)
    report = certify_network(
        spec, grid=args.grid, eps_floor=args.eps_floor, include_traces=args.traces
    )
    _emit(report.to_json(), args.out)
    return 0 if report.certified else 1


def _cmd_structure(args) -> int:
    problem = build_problem(load_network_spec(args.spec))
    st = problem.structure
    lines = [
        f"# vertices: {problem.graph.n}  edges: {problem.graph.m}  coordinates: {st.size}",
        f"# edge order: {list(problem.graph.edge_order)}",
    ]

    def block(name, mat):
        lines.append(f"{name} =")
        for row in np.asarray(mat):
            lines.append("  " + " ".join(f"{int(x):2d}" for x in row))

    block("routing (P)", st.routing)
    block("incidence (B)", st.incidence)
    block("laplacian (L)", st.laplacian)
    for k in range(1, st.n_links + 1):
        diag = " ".join(str(int(x)) for x in st.projector_diag(k))
        lines.append(f"link_projector_{k} = diag({diag})")
    _emit("\n".join(lines), args.out)
    return 0


def _cmd_oracle(args) -> int:
    spec = load_network_spec(args.spec)
    problem = build_problem(spec)
    doc: dict = {"version": __version__, "seed": args.seed, "samples": args.samples}

    try:
        direct = direct_iqc_check(
            problem.structure, problem.agents, problem.multipliers, problem.grid.omegas()
        )
        doc["direct_check"] = direct.to_dict()
    except NetIqcError as exc:
        doc["direct_check"] = {"error": str(exc)}

    validations = []
    for v, mult in enumerate(problem.multipliers, start=1):
        if mult.kind == "gain_bounded":
            res = validate_multiplier(
                mult, mult.radius, trials=args.trials, seed=args.seed + v
            )
            validations.append({"vertex": v, **res.to_dict()})
    doc["multiplier_validation"] = validations

    search = destabilization_search(
        spec, samples=args.samples, seed=args.seed, horizon=args.horizon
    )
    doc["destabilization_search"] = search.to_dict()

    _emit(json.dumps(doc, indent=2), args.out)
    return 1 if search.found else 0


def _cmd_simulate(args) -> int:
    problem = build_problem(load_network_spec(args.spec))
    size = problem.structure.size
    if args.sample == "random":
        rng = np.random.default_rng(args.seed)
        radii = oracle_mod.per_coordinate_radii(problem)
        allow_sector = not any(np.any(ag.d) for ag in problem.agents)
        sample = oracle_mod.random_sample(rng, radii, allow_sector)
    elif args.sample == "corner":
        sample = oracle_mod.corner_sample(oracle_mod.per_coordinate_radii(problem), +1.0)
    else:
        sample = ideal_sample(size)
    dt = args.dt if args.dt is not None else default_dt(problem.agents, sample)
    steps = max(2, int(round(args.horizon / dt)))
    d_v = np.zeros((steps, size))
    d_v[0, :] = args.amplitude
    trace = simulate(
        problem.structure, problem.agents, sample,
        d_v=d_v, dt=dt, horizon=args.horizon,
    )
    if args.out:
        write_trace(trace, args.out)
    else:
        write_trace(trace, sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netiqc",
        description="Certify robust stability of a network with uncertain links.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", help="run the link-wise certificate")
    p.add_argument("spec", help="problem file (YAML)")
    p.add_argument("--grid", type=_parse_grid, default=None, metavar="MIN:MAX:POINTS")
    p.add_argument("--eps-floor", type=float, default=None,
                   help="margin floor below which a link does not certify")
    p.add_argument("--traces", action="store_true",
                   help="include per-frequency margin traces in the report")
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("oracle", help="independent validation of the certificates")
    p.add_argument("spec")
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=float, default=200.0)
    p.add_argument("--trials", type=int, default=200,
                   help="trials per multiplier validation")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("simulate", help="export a closed-loop trajectory")
    p.add_argument("spec")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--horizon", type=float, default=200.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample", choices=["ideal", "random", "corner"], default="ideal")
    p.add_argument("--amplitude", type=float, default=1.0,
                   help="pulse amplitude injected at the agent inputs")
    p.add_argument("--out", default=None, help="write the columnar trace here")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("structure", help="dump the exact structure matrices")
    p.add_argument("spec")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_structure)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SpecError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except NetIqcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
