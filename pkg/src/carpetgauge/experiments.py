"""Named, manifest-driven experiments with CSV artifacts.

Manifests are flat ``key=value`` text (lists comma-separated); every output
table echoes the manifest in its comment header and stamps each row with the
manifest hash.  Rerunning a manifest with the same seed in single-chain mode
reproduces CSV bodies byte for byte (headers carry a timestamp and are
excluded from that contract).

Exit codes: 0 pass, 1 acceptance failure (or inconclusive-when-required),
2 usage or manifest error.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
import time
from pathlib import Path

import numpy as np

__all__ = ["EXPERIMENTS", "parse_manifest", "run_experiment", "main",
           "ManifestError"]


class ManifestError(ValueError):
    pass


# ---------------------------------------------------------------------------
# manifest plumbing


def parse_manifest(text) -> dict:
    """Parse flat key=value lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ManifestError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ManifestError(f"line {lineno}: empty key")
        if key in out:
            raise ManifestError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _conv_int(s):
    return int(s)


def _conv_float(s):
    return float(s)


def _conv_int_list(s):
    items = [t for t in s.split(",") if t.strip()]
    if not items:
        raise ValueError("empty list")
    return [int(t) for t in items]


def _conv_float_list(s):
    items = [t for t in s.split(",") if t.strip()]
    if not items:
        raise ValueError("empty list")
    return [float(t) for t in items]


def _conv_pairs(s):
    out = []
    for tok in s.split(","):
        if not tok.strip():
            continue
        a, b = tok.split(":")
        out.append((int(a), int(b)))
    if not out:
        raise ValueError("empty list")
    return out


def _conv_str(s):
    return s


_CONVERTERS = {
    "int": _conv_int, "float": _conv_float, "str": _conv_str,
    "int_list": _conv_int_list, "float_list": _conv_float_list,
    "pairs": _conv_pairs,
}


class Field:
    def __init__(self, typ, required=False, default=None, help=""):
        self.typ, self.required, self.default, self.help = typ, required, default, help


_COMMON = {
    "seed": Field("int", required=True, help="RNG seed (mandatory)"),
}


def _validate(name, schema, manifest):
    schema = {**schema, **_COMMON}
    unknown = set(manifest) - set(schema)
    if unknown:
        raise ManifestError(f"{name}: unknown keys {sorted(unknown)}")
    out = {}
    for key, fld in schema.items():
        if key in manifest:
            try:
                out[key] = _CONVERTERS[fld.typ](manifest[key])
            except (ValueError, TypeError) as exc:
                raise ManifestError(f"{name}: key {key!r}: {exc}") from None
        elif fld.required:
            raise ManifestError(f"{name}: missing required key {key!r}")
        else:
            out[key] = fld.default
    return out


def manifest_hash(manifest: dict) -> str:
    body = "\n".join(f"{k}={manifest[k]}" for k in sorted(manifest))
    return hashlib.sha256(body.encode()).hexdigest()[:12]


def _write_table(path, manifest, mhash, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(f"# generated: {time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
        for k in sorted(manifest):
            fh.write(f"# manifest: {k}={manifest[k]}\n")
        fh.write(",".join(header + ["manifest_hash"]) + "\n")
        for row in rows:
            cells = [_fmt(c) for c in row] + [mhash]
            fh.write(",".join(cells) + "\n")


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


# ---------------------------------------------------------------------------
# experiment runners; each returns (passed, {table_name: (header, rows)})


def _run_villain_limit(cfg):
    from .actions import density, villain_density
    from .classfun import convolve_power, sup_distance

    beta = cfg["beta"]
    group = cfg["group"]
    target = villain_density(beta, group)
    rows = []
    dists = []
    for N in cfg["N"]:
        p = density(cfg["action"], beta * N * N, group)
        d = sup_distance(convolve_power(p, N * N), target)
        rows.append([N, d])
        dists.append(d)
    decreasing = all(b < a for a, b in zip(dists, dists[1:]))
    passed = decreasing and dists[-1] < cfg["max_final"]
    return passed, {"villain_limit": (["N", "sup_distance"], rows)}


def _run_carpet_equivalence(cfg):
    from .actions import density
    from .classfun import convolve_power
    from .lattice import (build_box, build_carpet, carpet_lifted_loop,
                          plaquette_loop)
    from .mc import estimate, make_chain

    group, beta, N = cfg["group"], cfg["beta"], cfg["N"]
    base = build_box(cfg["d"], cfg["L"])
    carpet = build_carpet(base, N)
    p_N = density(cfg["action"], beta * N * N, group)
    q = convolve_power(p_N, N * N)

    base_loops = [plaquette_loop(base, p) for p in range(base.n_plaquettes)]
    names = [f"plaq{p}" for p in range(base.n_plaquettes)]
    lifted = [carpet_lifted_loop(carpet, lp) for lp in base_loops]

    seeds = np.random.SeedSequence(cfg["seed"]).generate_state(2)
    chain_c = make_chain(group, carpet, p_N, int(seeds[0]))
    chain_b = make_chain(group, base, q, int(seeds[1]))
    rep_c = estimate(chain_c, lifted, cfg["sweeps"], cfg["burn_in"],
                     batches=cfg["batches"], loop_names=names)
    rep_b = estimate(chain_b, base_loops, cfg["sweeps"], cfg["burn_in"],
                     batches=cfg["batches"], loop_names=names)

    rows, ok = [], True
    for rc, rb in zip(rep_c, rep_b):
        diff = rc.estimate - rb.estimate
        sigma = float(np.hypot(rc.stderr, rb.stderr))
        this_ok = abs(diff) <= 3.0 * sigma and sigma <= cfg["max_sigma"]
        ok = ok and this_ok
        rows.append([rc.name, rc.estimate, rc.stderr, rb.estimate, rb.stderr,
                     diff, sigma, "pass" if this_ok else "fail"])
    header = ["observable", "carpet_estimate", "carpet_stderr",
              "base_estimate", "base_stderr", "diff", "sigma_combined", "status"]
    return ok, {"carpet_equivalence": (header, rows)}


def _run_planar_oracle(cfg):
    from .actions import density
    from .planar import evaluate_z, parse_planar_graph, quadrature_z

    path = Path(cfg["graph"])
    if not path.exists():
        raise ManifestError(f"graph file {path} does not exist")
    weight = density(cfg["action"], cfg["beta"], cfg["group"])
    graph = parse_planar_graph(path.read_text(), cfg["group"],
                               weight_for=lambda name: weight)
    z_reduce = evaluate_z(graph)
    z_reduce_rev = evaluate_z(graph, prefer="max")
    z_quad = quadrature_z(graph, n_nodes=cfg["quad_nodes"])
    if isinstance(z_quad, tuple):
        z_quad = z_quad[0]
    rel = abs(z_reduce - z_quad) / max(abs(z_quad), 1e-300)
    merge_inv = abs(z_reduce - z_reduce_rev)
    passed = rel < cfg["tol"] and merge_inv < 1e-12 * max(1.0, abs(z_reduce))
    header = ["z_reduce", "z_quadrature", "rel_diff", "merge_order_diff", "status"]
    rows = [[z_reduce, z_quad, rel, merge_inv, "pass" if passed else "fail"]]
    return passed, {"planar_oracle": (header, rows)}


def _run_ginibre(cfg):
    from .lattice import build_box, plaquette_loop
    from .mc import ginibre_experiment

    base = build_box(cfg["d"], cfg["L"])
    distinguished = cfg["plaquette"]
    if distinguished is None or distinguished < 0:
        distinguished = _central_plaquette(base)
    loop = plaquette_loop(base, distinguished)
    rep = ginibre_experiment(base, loop, cfg["betas"], cfg["beta_fixed"],
                             distinguished, cfg["seed"], sweeps=cfg["sweeps"],
                             burn_in=cfg["burn_in"], batches=cfg["batches"])
    rows = [[b, e, s] for b, e, s in zip(rep.couplings, rep.estimates, rep.stderrs)]
    passed = rep.verdict == "nondecreasing"
    return passed, {
        "ginibre": (["coupling", "estimate", "stderr"], rows),
        "ginibre_verdict": (["verdict"], [[rep.verdict]]),
    }


def _central_plaquette(base):
    corners = base.plaq_corner
    score = np.abs(corners).sum(axis=1)
    return int(np.argmin(score))


def _run_moments(cfg):
    from .rwalk import moment_check

    group = cfg["group"]
    beta = cfg["beta"]
    reports = moment_check(cfg["action"], beta, group, cfg["N"],
                           samples=cfg["samples"], seed=cfg["seed"])
    rows, ok = [], True
    target = np.eye(reports[0].na.shape[0]) / beta
    for rep in reports:
        nb_sig = float(np.max(np.abs(rep.nb) / np.maximum(rep.nb_err, 1e-300))) \
            if rep.method == "mc" else float(np.max(np.abs(rep.nb)))
        rel = float(np.linalg.norm(rep.na - target) / np.linalg.norm(target))
        this_ok = rel < cfg["tol"] and (nb_sig <= 3.0 if rep.method == "mc"
                                        else nb_sig < 1e-10)
        ok = ok and this_ok
        rows.append([rep.N, rep.method, nb_sig, rel, rep.acceptance,
                     rep.samples, "pass" if this_ok else "fail"])
    header = ["N", "method", "nb_max_sigmas", "na_rel_err", "acceptance",
              "samples", "status"]
    return ok, {"moments": (header, rows)}


def _run_gradient_bounds(cfg):
    from .actions import density
    from .rwalk import gradient_scaling_check, weak_harnack_check

    beta = cfg["beta"]
    rows_h, ok = [], True
    for N in cfg["N"]:
        p = density(cfg["action"], beta * N * N, cfg["group"])
        for n, m in cfg["pairs"]:
            rep = weak_harnack_check(p, 1.0 / N, n, m)
            this_ok = rep.status == "PASS"
            ok = ok and this_ok
            rows_h.append([N, n, m, rep.c0, rep.B, rep.sup_lhs, rep.sup_rhs,
                           rep.sup_margin, rep.pointwise_worst_margin, rep.status])
    scal = gradient_scaling_check(cfg["action"], beta, cfg["group"], cfg["N"],
                                  cfg["m"])
    rows_s = [[N, m, scal.grad_norms[(N, m)], scal.constants[(N, m)]]
              for (N, m) in sorted(scal.grad_norms)]
    ok = ok and scal.constant_spread < cfg["max_spread"]
    header_h = ["N", "n", "m", "c0", "B", "sup_lhs", "sup_rhs", "sup_margin",
                "pointwise_margin", "status"]
    header_s = ["N", "m", "grad_norm", "constant"]
    return ok, {"weak_harnack": (header_h, rows_h),
                "gradient_scaling": (header_s, rows_s),
                "scaling_fit": (["fitted_constant", "spread"],
                                [[scal.fitted_constant, scal.constant_spread]])}


def _run_assumption_check(cfg):
    from .actions import check_assumption_b

    rep = check_assumption_b(cfg["action"], cfg["beta"], cfg["group"], cfg["N"],
                             cfg["r"], cfg["theta_low"], cfg["theta_high"],
                             grid=cfg["grid"], raise_on_violation=False)
    rows = [[N, rep.lower_margins[N], rep.upper_margins.get(N, 0.0)]
            for N in cfg["N"]]
    return rep.passed, {"assumption_check":
                        (["N", "lower_margin", "upper_margin"], rows)}


EXPERIMENTS = {
    "villain-limit": {
        "run": _run_villain_limit,
        "help": "sup distance between the N^2-fold refined action and the "
                "heat-kernel density, across N",
        "schema": {
            "group": Field("str", default="U1"),
            "action": Field("str", default="wilson"),
            "beta": Field("float", default=1.0),
            "N": Field("int_list", required=True),
            "max_final": Field("float", default=0.05),
        },
    },
    "carpet-equivalence": {
        "run": _run_carpet_equivalence,
        "help": "Wilson loops from refined-graph MC (projected) vs base MC "
                "under the convolved action",
        "schema": {
            "group": Field("str", default="U1"),
            "action": Field("str", default="wilson"),
            "beta": Field("float", default=1.0),
            "d": Field("int", default=2),
            "L": Field("int", default=1),
            "N": Field("int", default=2),
            "sweeps": Field("int", default=1_000_000),
            "burn_in": Field("int", default=10_000),
            "batches": Field("int", default=32),
            "max_sigma": Field("float", default=0.005),
        },
    },
    "planar-oracle": {
        "run": _run_planar_oracle,
        "help": "face-merge partition function against brute-force quadrature",
        "schema": {
            "graph": Field("str", required=True),
            "group": Field("str", default="U1"),
            "action": Field("str", default="wilson"),
            "beta": Field("float", default=1.0),
            "quad_nodes": Field("int", default=64),
            "tol": Field("float", default=1e-6),
        },
    },
    "ginibre": {
        "run": _run_ginibre,
        "help": "loop-observable monotonicity in one distinguished plaquette "
                "coupling (U(1) heat-kernel action)",
        "schema": {
            "d": Field("int", default=2),
            "L": Field("int", default=2),
            "betas": Field("float_list", default=[0.5, 1.0, 2.0, 4.0]),
            "beta_fixed": Field("float", default=1.0),
            "plaquette": Field("int", default=-1),
            "sweeps": Field("int", default=40_000),
            "burn_in": Field("int", default=4_000),
            "batches": Field("int", default=32),
        },
    },
    "moments": {
        "run": _run_moments,
        "help": "random-walk moment conditions N E[xi] -> 0, N E[xi xi] -> I/beta",
        "schema": {
            "group": Field("str", default="U1"),
            "action": Field("str", default="wilson"),
            "beta": Field("float", default=1.0),
            "N": Field("int_list", required=True),
            "samples": Field("int", default=1_000_000),
            "tol": Field("float", default=0.05),
        },
    },
    "gradient-bounds": {
        "run": _run_gradient_bounds,
        "help": "weak-Harnack inequalities and 2^{-m/2} gradient scaling",
        "schema": {
            "group": Field("str", default="U1"),
            "action": Field("str", default="wilson"),
            "beta": Field("float", default=1.0),
            "N": Field("int_list", default=[2, 4, 8]),
            "pairs": Field("pairs", default=[(2, 4), (4, 8), (8, 16)]),
            "m": Field("int_list", default=[2, 3, 4, 5, 6, 7, 8, 9, 10]),
            "max_spread": Field("float", default=10.0),
        },
    },
    "assumption-check": {
        "run": _run_assumption_check,
        "help": "quadratic action bounds theta N^2 rho^2 <= S_N <= Theta N^2 rho^2",
        "schema": {
            "group": Field("str", default="U1"),
            "action": Field("str", default="wilson"),
            "beta": Field("float", default=1.0),
            "N": Field("int_list", default=[1, 2, 4, 8]),
            "r": Field("float", default=1.0),
            "theta_low": Field("float", required=True),
            "theta_high": Field("float", required=True),
            "grid": Field("int", default=4096),
        },
    },
}


def run_experiment(name, manifest: dict, outdir) -> int:
    """Validate, run, write artifacts; returns the process exit code."""
    if name not in EXPERIMENTS:
        raise ManifestError(f"unknown experiment {name!r}")
    spec = EXPERIMENTS[name]
    cfg = _validate(name, spec["schema"], manifest)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    mhash = manifest_hash(manifest)
    passed, tables = spec["run"](cfg)
    for tname, (header, rows) in tables.items():
        _write_table(outdir / f"{tname}.csv", manifest, mhash, header, rows)
    _write_table(outdir / "summary.csv", manifest, mhash,
                 ["experiment", "status"],
                 [[name, "pass" if passed else "fail"]])
    return 0 if passed else 1


def _describe(name) -> str:
    spec = EXPERIMENTS[name]
    lines = [f"{name}: {spec['help']}", "", "manifest keys:"]
    schema = {**spec["schema"], **_COMMON}
    for key, fld in schema.items():
        req = "required" if fld.required else f"default={fld.default}"
        lines.append(f"  {key} ({fld.typ}, {req}) {fld.help}".rstrip())
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="carpetgauge",
        description="reproducible lattice gauge theory experiments")
    sub = parser.add_subparsers(dest="command")
    sub.add_parser("list", help="list experiment names")
    p_desc = sub.add_parser("describe", help="show an experiment's manifest schema")
    p_desc.add_argument("name")
    p_run = sub.add_parser("run", help="run an experiment")
    p_run.add_argument("name")
    p_run.add_argument("assignments", nargs="*", metavar="key=value")
    p_run.add_argument("--manifest", help="manifest file (key=value lines)")
    p_run.add_argument("-o", "--out", default="out", help="output directory")

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    if args.command == "list":
        for name in sorted(EXPERIMENTS):
            print(name)
        return 0
    if args.command == "describe":
        if args.name not in EXPERIMENTS:
            print(f"unknown experiment {args.name!r}", file=sys.stderr)
            return 2
        print(_describe(args.name))
        return 0
    if args.command == "run":
        try:
            manifest = {}
            if args.manifest:
                path = Path(args.manifest)
                if not path.exists():
                    raise ManifestError(f"manifest file {path} does not exist")
                manifest.update(parse_manifest(path.read_text()))
            for item in args.assignments:
                if "=" not in item:
                    raise ManifestError(f"expected key=value, got {item!r}")
                k, v = item.split("=", 1)
                manifest[k.strip()] = v.strip()
            return run_experiment(args.name, manifest, args.out)
        except ManifestError as exc:
            print(f"manifest error: {exc}", file=sys.stderr)
            return 2
    parser.print_help()
    return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
