"""Experiment runner: builds the constructions, runs the bound checks,
emits deterministic JSON reports plus CSV tables and optional SVG plots.

Usage:
    pblab <subcommand> [--config FILE] [--seed N] [--resolution N]
                       [--threads N] [--out DIR] [--plots]

Subcommands: coarea-check, essential-bound, gen-cover-bound, degree-bound,
sharp-scaling, division-demo, linalg-constant, optimize.

Config files are JSON validated against docs/config-schema.json (unknown
keys are rejected, exit code 2).  CLI flags override config keys.  Exit
code 0 means every check passed, 1 means some check failed.  Reports are
byte-identical for identical (config, seed); wall-clock timing therefore
goes to report_meta.json, not report.json.  PBLAB_OUT overrides --out.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import subprocess
import sys
import time

import numpy as np

from . import __version__, bracket, cover, divisions, levelset, partition, surface
from . import symplinalg as sl
from ._backend import get_backend
from .errors import ConfigError, GenericityFailure

# ---------------------------------------------------------------------------
# configs
# ---------------------------------------------------------------------------

DEFAULTS = {
    "coarea-check": {
        "resolution": 512,
        "quad": 64,
        "window": [-1.0, 1.0, -1.0, 1.0],
        "tolerance": 0.02,
        "seed": 0,
    },
    "essential-bound": {
        "resolution": 512,
        "eps": 0.25,
        "tolerance": 0.05,
        "seed": 0,
    },
    "gen-cover-bound": {
        "resolution": 512,
        "eps": 0.25,
        "tolerance": 0.05,
        "seed": 0,
    },
    "degree-bound": {
        "resolution": 256,
        "eps": 0.125,
        "m_values": [1, 2, 4],
        "tolerance": 0.05,
        "scaling_tolerance": 0.10,
        "seed": 0,
    },
    "sharp-scaling": {
        "resolution": 256,
        "eps_list": [0.25, 0.125, 0.0625],
        "band_factor": 2.0,
        "seed": 0,
    },
    "division-demo": {
        "resolution": 256,
        "area_fraction": 0.125,
        "pairs": 20,
        "max_failure_rate": 0.05,
        "certify_first": 1,
        "seed": None,
    },
    "linalg-constant": {
        "n": 1,
        "instances": 10000,
        "oracle_instances": 500,
        "max_vectors": 10,
        "shear_vectors": 100000,
        "seed": None,
    },
    "optimize": {
        "surface": "sphere",
        "bands": 3,
        "resolution": 128,
        "objective": "supsum",
        "steps": 150,
        "margin": 0.1,
        "commuting_target": 1e-8,
        "seed": None,
    },
}

_TYPES = {int: "integer", float: "number", str: "string", list: "array",
          bool: "boolean", type(None): ["integer", "null"]}


def command_schema() -> dict:
    """The jsonschema document config files are validated against."""
    out = {}
    for cmd, keys in DEFAULTS.items():
        props = {k: {"type": _TYPES[type(v)]} for k, v in keys.items()}
        out[cmd] = {
            "type": "object",
            "properties": props,
            "additionalProperties": False,
        }
    return {"format": "pblab-config-schema", "version": 1, "commands": out}


def load_config(cmd: str, path: str | None, overrides: dict) -> dict:
    import jsonschema

    cfg = dict(DEFAULTS[cmd])
    if path:
        with open(path) as fh:
            user = json.load(fh)
        schema = command_schema()["commands"][cmd]
        try:
            jsonschema.validate(user, schema)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"config for {cmd}: {exc.message}") from exc
        cfg.update(user)
    for k, v in overrides.items():
        if v is not None:
            cfg[k] = v
    if cfg.get("seed") is None:
        raise ConfigError(f"{cmd} is randomized: a seed is required "
                          "(--seed or config key)")
    return cfg


# ---------------------------------------------------------------------------
# experiments; each returns (checks, results, tables, plots)
# checks: list of dicts with name/lhs/rhs/tolerance/pass
# ---------------------------------------------------------------------------


def _check(name, lhs, rhs, tol, ok):
    return {"name": name, "lhs": float(lhs), "rhs": float(rhs),
            "tolerance": float(tol), "pass": bool(ok)}


def _ge(name, lhs, rhs, tol):
    return _check(name, lhs, rhs, tol, lhs >= rhs * (1.0 - tol))


def run_coarea(cfg):
    res = int(cfg["resolution"])
    g = surface.make_torus(res, res, 1.0, 1.0)
    f = surface.field_from_function(g, lambda x, y: np.cos(2 * np.pi * x))
    h = surface.field_from_function(g, lambda x, y: np.cos(2 * np.pi * y))
    rect = tuple(float(v) for v in cfg["window"])
    rep = levelset.coarea_check(f, h, [rect], quad=int(cfg["quad"]))
    tol = float(cfg["tolerance"])
    checks = [
        _check("coarea_rel_err", rep.rel_err, tol, tol, rep.rel_err <= tol),
        _check("lhs_matches_closed_form", rep.lhs, 16.0, tol,
               abs(rep.lhs - 16.0) <= tol * 16.0),
        _check("rhs_matches_closed_form", rep.rhs, 16.0, tol,
               abs(rep.rhs - 16.0) <= tol * 16.0),
        _check("crossing_counts_even", float(rep.crossing_counts_even), 1.0,
               0.0, rep.crossing_counts_even),
    ]
    results = {"lhs": rep.lhs, "rhs": rep.rhs, "rel_err": rep.rel_err,
               "quad": rep.quad}
    tables = {"coarea.csv": "lhs,rhs,rel_err\n%0.17g,%0.17g,%0.17g\n"
              % (rep.lhs, rep.rhs, rep.rel_err)}

    def plot(path):
        cs = [levelset.extract_level(f, s) for s in (-0.5, 0.0, 0.5)]
        cs += [levelset.extract_level(h, t) for t in (-0.5, 0.0, 0.5)]
        levelset.contours_svg(cs, path)

    return checks, results, tables, {"contours.svg": plot}


def run_essential(cfg):
    res = int(cfg["resolution"])
    g = surface.make_torus(res, res, 1.0, 1.0)
    _, P = partition.sharp_cover(float(cfg["eps"]), g)
    tol = float(cfg["tolerance"])
    rep = bracket.essential_bound_check(P, tol=tol)
    checks = [_ge(f"essential_row_{r.index:03d}", r.row_sum, 1.0, tol)
              for r in rep.rows]
    checks.append(_ge("essential_total", rep.total, rep.count_bound, tol))
    checks.append(_ge("essential_sup", rep.sup_sum, rep.sup_bound, tol))
    results = {"rows": [{"index": r.index, "row_sum": r.row_sum} for r in rep.rows],
               "total": rep.total, "count_bound": rep.count_bound,
               "sup_sum": rep.sup_sum, "sup_bound": rep.sup_bound}
    lines = ["index,row_sum"] + [f"{r.index},{r.row_sum:.17g}" for r in rep.rows]
    tables = {"essential_rows.csv": "\n".join(lines) + "\n"}

    def plot(path):
        bracket.heatmap_svg(bracket.bracket_report(P).sum_field, path)

    return checks, results, tables, {"bracket_sum.svg": plot}


def run_gen_cover(cfg):
    res = int(cfg["resolution"])
    g = surface.make_torus(res, res, 1.0, 1.0)
    eps = float(cfg["eps"])
    _, F = partition.sharp_cover(eps, g)
    _, G = partition.sharp_cover(eps, g, offset=(0.5, 0.5))
    rep = bracket.bracket_report(F, G)
    tol = float(cfg["tolerance"])
    bound = rep.bounds["gen_cover_bound"]
    checks = [_ge("gen_cover_l1_total", rep.l1_total(), bound, tol)]
    results = {"l1_total": rep.l1_total(), "area_bound": bound,
               "max_disc_area": g.total_area / (2.0 * bound) if bound else math.inf}
    tables = {"gen_cover.csv": "l1_total,bound\n%0.17g,%0.17g\n"
              % (rep.l1_total(), bound)}

    def plot(path):
        bracket.heatmap_svg(rep.sum_field, path)

    return checks, results, tables, {"bracket_sum_fg.svg": plot}


def run_degree(cfg):
    res = int(cfg["resolution"])
    g = surface.make_torus(res, res, 1.0, 1.0)
    _, P = partition.sharp_cover(float(cfg["eps"]), g)
    tol = float(cfg["tolerance"])
    stol = float(cfg["scaling_tolerance"])
    rows = []
    checks = []
    base = None
    for m in [int(v) for v in cfg["m_values"]]:
        Pm = partition.duplicate(P, m) if m > 1 else P
        db = bracket.degree_bound_check(Pm, tol=tol)
        rows.append((m, db.lhs, db.rhs, db.degree, db.energy))
        checks.append(_check(f"degree_bound_m{m}", db.lhs, db.rhs, tol, db.passed))
        if base is None:
            base = (db.lhs, db.rhs)
        else:
            for tag, v0, v in (("lhs", base[0], db.lhs), ("rhs", base[1], db.rhs)):
                ratio = v0 / (v * m * m) if v > 0 else math.inf
                checks.append(_check(f"degree_scaling_{tag}_m{m}", ratio, 1.0,
                                     stol, abs(ratio - 1.0) <= stol))
    results = {"rows": [{"m": m, "lhs": a, "rhs": b, "degree": d, "energy": e}
                        for m, a, b, d, e in rows]}
    lines = ["m,lhs,rhs,degree,energy"] + [
        f"{m},{a:.17g},{b:.17g},{d},{e:.17g}" for m, a, b, d, e in rows
    ]
    return checks, results, {"degree_bound.csv": "\n".join(lines) + "\n"}, {}


def run_sharp_scaling(cfg):
    res = int(cfg["resolution"])
    g = surface.make_torus(res, res, 1.0, 1.0)
    band = float(cfg["band_factor"])
    rows = []
    checks = []
    for eps in [float(v) for v in cfg["eps_list"]]:
        c, P = partition.sharp_cover(eps, g)
        pb, exact = bracket.pb_upper_detail(P, seed=int(cfg["seed"]))
        lem = bracket.lemma14_lower(P)
        n_ess = len(cover.essential_indices(c))
        max_area = max(s.area for s in c.sets)
        rows.append({"eps": eps, "pb_upper": pb, "pb_exact": exact,
                     "n_essential": n_ess, "max_area": max_area,
                     "pb_eps2": pb * eps * eps,
                     "lemma_lower": lem.lower_bound})
        checks.append(_check(f"essential_density_eps_{eps:g}",
                             n_ess * eps * eps, 1.0, 0.0,
                             n_ess == round(1.0 / eps) ** 2))
        checks.append(_ge(f"sandwich_eps_{eps:g}", pb, lem.lower_bound, 0.0))
    vals = [r["pb_eps2"] for r in rows]
    spread = max(vals) / min(vals)
    checks.append(_check("pb_eps2_band", spread, band, 0.0, spread <= band))
    lines = ["eps,pb_upper,n_essential,max_area,pb_eps2,lemma_lower"] + [
        "%g,%.17g,%d,%.17g,%.17g,%.17g" % (
            r["eps"], r["pb_upper"], r["n_essential"], r["max_area"],
            r["pb_eps2"], r["lemma_lower"])
        for r in rows
    ]
    return checks, {"rows": rows, "pb_eps2_spread": spread}, \
        {"sharp_scaling.csv": "\n".join(lines) + "\n"}, {}


def run_division_demo(cfg):
    res = int(cfg["resolution"])
    g = surface.make_torus(res, res, 1.0, 1.0)
    A = float(cfg["area_fraction"]) * g.total_area
    need = math.ceil(g.total_area / (2.0 * A))
    pairs = int(cfg["pairs"])
    seed = int(cfg["seed"])
    counts = []
    failures = 0
    rows = []
    for k in range(pairs):
        try:
            d1 = divisions.random_disc_division(g, A, seed=seed + 2 * k)
            d2 = divisions.random_disc_division(g, A, seed=seed + 2 * k + 1)
            n = divisions.count_division_intersections(d1, d2)
            counts.append(n)
            rows.append((k, n, ""))
        except GenericityFailure:
            failures += 1
            rows.append((k, -1, "genericity_failure"))
    rate = failures / pairs
    checks = [
        _check("division_min_crossings", float(min(counts)) if counts else 0.0,
               float(need), 0.0, bool(counts) and min(counts) >= need),
        _check("genericity_failure_rate", rate, float(cfg["max_failure_rate"]),
               0.0, rate <= float(cfg["max_failure_rate"])),
    ]
    for k in range(min(int(cfg["certify_first"]), pairs)):
        d = divisions.random_disc_division(g, A, seed=seed + 2 * k)
        ok, cert = divisions.is_A_division(d, A)
        checks.append(_check(f"a_division_certificate_{k}", float(ok), 1.0, 0.0, ok))
    results = {"counts": counts, "failures": failures, "required": need}
    lines = ["pair,crossings,note"] + [f"{k},{n},{note}" for k, n, note in rows]

    def plot(path):
        d1 = divisions.random_disc_division(g, A, seed=seed)
        d2 = divisions.random_disc_division(g, A, seed=seed + 1)
        _divisions_svg([d1, d2], path)

    return checks, results, {"division_counts.csv": "\n".join(lines) + "\n"}, \
        {"division_overlay.svg": plot}


def run_linalg(cfg):
    n = int(cfg["n"])
    seed = int(cfg["seed"])
    rng = np.random.default_rng(seed)
    c_proof = sl.proof_constant(1, math.pi / 30.0)
    checks = []
    # exact-vs-brute oracle equality
    n_oracle = int(cfg["oracle_instances"])
    worst_gap = 0.0
    for _ in range(n_oracle):
        N = int(rng.integers(1, int(cfg["max_vectors"]) + 1))
        vs = sl.random_vector_set(rng, n, N)
        v1, _, _ = sl.max_bilinear_cube(vs)
        X = 1.0 - 2.0 * ((np.arange(1 << N)[:, None] >> np.arange(N)) & 1)
        v2 = float(np.abs(X @ vs.gram @ X.T).max())
        worst_gap = max(worst_gap, abs(v1 - v2) / (1.0 + abs(v2)))
    checks.append(_check("cube_max_oracle_gap", worst_gap, 1e-12, 0.0,
                         worst_gap <= 1e-12))
    # ratio vs the proof constant
    n_inst = int(cfg["instances"])
    min_ratio = math.inf
    worst = None
    for _ in range(n_inst):
        N = int(rng.integers(2, int(cfg["max_vectors"]) + 1))
        vs = sl.random_vector_set(rng, n, N)
        r = sl.corollary_ratio(vs)
        if not r.vacuous and r.ratio < min_ratio:
            min_ratio = r.ratio
            worst = vs.vectors.tolist()
    checks.append(_ge("corollary_ratio_min", min_ratio, c_proof, 0.0))
    # shear battery
    nv = int(cfg["shear_vectors"])
    axis = rng.standard_normal(2 * n)
    axis /= np.linalg.norm(axis)
    S = sl.shear_map(axis)
    U = rng.standard_normal((nv, 2 * n))
    growth = np.linalg.norm(U @ S.T, axis=1) - np.linalg.norm(U, axis=1)
    slack = 3.0 * np.abs(sl.omega0(U, np.broadcast_to(axis, U.shape))) - growth
    checks.append(_check("shear_growth_bound", float(slack.min()), 0.0, 1e-10,
                         float(slack.min()) >= -1e-10))
    theta = math.pi / 30.0
    mix = rng.uniform(0.0, 2.0 * theta, nv)
    W = rng.standard_normal((nv, 2 * n))
    W -= (W @ axis)[:, None] * axis
    Wn = W / np.linalg.norm(W, axis=1)[:, None]
    cone_u = np.cos(mix)[:, None] * axis + np.sin(mix)[:, None] * Wn
    contr = np.linalg.norm(cone_u @ S.T, axis=1)
    checks.append(_check("shear_cone_contraction", float(contr.max()), 2.0 / 3.0,
                         1e-10, float(contr.max()) <= 2.0 / 3.0 + 1e-10))
    checks.append(_check("shear_symplectic_defect",
                         sl.symplectic_defect(S, n), 1e-10, 0.0,
                         sl.symplectic_defect(S, n) <= 1e-10))
    results = {"proof_constant": c_proof, "min_ratio": min_ratio,
               "worst_instance": worst, "instances": n_inst}
    tables = {"linalg.csv": "min_ratio,proof_constant\n%0.17g,%0.17g\n"
              % (min_ratio, c_proof)}
    return checks, results, tables, {}


def _sphere_band_cover(res: int, bands: int):
    g = surface.make_sphere(res, res, 1.0)
    overlap = max(2, int(0.55 * res / bands / 2))
    sets = []
    for b in range(bands):
        lo = 0 if b == 0 else b * res // bands - overlap
        hi = res if b == bands - 1 else (b + 1) * res // bands + overlap
        m = np.zeros(g.shape, bool)
        m[lo:hi, :] = True
        sets.append(cover.CoverSet(g, m, id=b))
    return g, cover.Cover(sets)


def run_optimize(cfg):
    res = int(cfg["resolution"])
    if cfg["surface"] == "sphere":
        g, c = _sphere_band_cover(res, int(cfg["bands"]))
    else:
        g = surface.make_torus(res, res, 1.0, 1.0)
        c, _ = partition.sharp_cover(1.0 / int(cfg["bands"]), g)
    result = partition.optimize_partition(
        c, objective=str(cfg["objective"]), steps=int(cfg["steps"]),
        seed=int(cfg["seed"]), margin=float(cfg["margin"]),
    )
    init = result.trace[0][1]
    checks = [_check("objective_non_increasing", result.objective, init, 0.0,
                     result.objective <= init)]
    if cfg["surface"] == "sphere":
        target = float(cfg["commuting_target"])
        checks.append(_check("commuting_optimum", result.objective, target, 0.0,
                             result.objective <= target))
    lines = ["step,objective"] + [f"{s},{v:.17g}" for s, v in result.trace]
    results = {"initial": init, "final": result.objective,
               "objective": result.objective_name}
    return checks, results, {"optimizer_trace.csv": "\n".join(lines) + "\n"}, {}


def _divisions_svg(ds, path):
    g = ds[0].grid
    W, H = g.extent_x, g.extent_y
    colors = ["#1f77b4", "#d62728", "#2ca02c"]
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="640" height="640" '
        f'viewBox="0 0 {W:.6g} {H:.6g}">',
        f'<rect width="{W:.6g}" height="{H:.6g}" fill="white"/>',
    ]
    for k, d in enumerate(ds):
        segs = d.segs.copy()
        segs[:, 0] *= g.hx
        segs[:, 2] *= g.hx
        segs[:, 1] *= g.hy
        segs[:, 3] *= g.hy
        path_d = " ".join(
            f"M{x1:.4g} {y1:.4g} L{x2:.4g} {y2:.4g}" for x1, y1, x2, y2 in segs
        )
        lines.append(f'<path d="{path_d}" stroke="{colors[k % 3]}" '
                     f'stroke-width="{W/500:.4g}" fill="none"/>')
    lines.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))


EXPERIMENTS = {
    "coarea-check": run_coarea,
    "essential-bound": run_essential,
    "gen-cover-bound": run_gen_cover,
    "degree-bound": run_degree,
    "sharp-scaling": run_sharp_scaling,
    "division-demo": run_division_demo,
    "linalg-constant": run_linalg,
    "optimize": run_optimize,
}


# ---------------------------------------------------------------------------
# report plumbing
# ---------------------------------------------------------------------------


def _git_hash() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True, text=True, timeout=5,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def run_experiment(cmd: str, cfg: dict, out_dir: str, plots: bool = False) -> int:
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    checks, results, tables, plot_fns = EXPERIMENTS[cmd](cfg)
    wall = time.perf_counter() - t0
    report = {
        "experiment": cmd,
        "inputs": {k: cfg[k] for k in sorted(cfg)},
        "checks": checks,
        "results": results,
        "provenance": {
            "git_hash": _git_hash(),
            "package_version": __version__,
            "backend": get_backend(),
            "seed": cfg.get("seed"),
            "resolution": cfg.get("resolution"),
        },
    }
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
        fh.write("\n")
    # wall time is not deterministic, hence kept out of report.json
    with open(os.path.join(out_dir, "report_meta.json"), "w") as fh:
        json.dump({"wall_time_s": wall}, fh)
        fh.write("\n")
    if tables:
        tdir = os.path.join(out_dir, "tables")
        os.makedirs(tdir, exist_ok=True)
        for name, text in tables.items():
            with open(os.path.join(tdir, name), "w") as fh:
                fh.write(text)
    if plots and plot_fns:
        pdir = os.path.join(out_dir, "plots")
        os.makedirs(pdir, exist_ok=True)
        for name, fn in plot_fns.items():
            fn(os.path.join(pdir, name))
    all_ok = all(c["pass"] for c in checks)
    for c in checks:
        print("[%s] %s: lhs=%.6g rhs=%.6g tol=%g"
              % ("PASS" if c["pass"] else "FAIL", c["name"], c["lhs"], c["rhs"],
                 c["tolerance"]))
    print("%s: %d/%d checks passed (%.2fs) -> %s"
          % (cmd, sum(c["pass"] for c in checks), len(checks), wall, out_dir))
    return 0 if all_ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pblab",
        description="bracket-bound experiments on discretized surfaces",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in EXPERIMENTS:
        p = sub.add_parser(cmd)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--resolution", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--plots", action="store_true")
    sub.add_parser("schema").add_argument("--out", default=None)
    args = parser.parse_args(argv)

    if args.command == "schema":
        print(json.dumps(command_schema(), indent=1, sort_keys=True))
        return 0

    if args.threads:
        try:
            import numba

            numba.set_num_threads(args.threads)
        except ImportError:
            pass

    out_dir = os.environ.get("PBLAB_OUT") or args.out or f"pblab-out-{args.command}"
    try:
        overrides = {"seed": args.seed}
        if args.resolution is not None:
            overrides["resolution"] = args.resolution
        cfg = load_config(args.command, args.config, overrides)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return run_experiment(args.command, cfg, out_dir, plots=args.plots)


if __name__ == "__main__":
    sys.exit(main())
