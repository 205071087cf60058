"""Command-line entry point.

    thintube tube --preset bent-tube --out runs/bent
    thintube --preset acc-3 --out runs/acc3
    thintube broken-line --config study.ini --out runs/bl

Every run validates its whole configuration before computing, computes
before writing, and writes into a staging directory that is moved into
place only on success. A malformed config therefore leaves nothing behind.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import shutil
import sys
import tempfile
from pathlib import Path

from . import __version__
from .config import PRESETS, SUBCOMMANDS, StudyConfig, load_config, parse_list, preset, read_config
from .errors import InvalidInput, NumericalFailure

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thintube", description="Thin-tube spectral studies.")
    p.add_argument("subcommand", nargs="?", choices=SUBCOMMANDS,
                   help="study to run; optional when the config names it")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="INI study file")
    src.add_argument("--preset", help="named preset, e.g. acc-1 or straight-tube")
    p.add_argument("--out", type=Path, default=Path("thintube-out"), help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, help="BLAS thread count")
    p.add_argument("--family", choices=("all", "perturbation", "penalization", "oscillation"))
    p.add_argument("--dim", type=int, help="gamma-lab matrix dimension bound")
    p.add_argument("--eps-list", help="comma separated eps values (overrides the config)")
    p.add_argument("--list-presets", action="store_true")
    return p


def _f17(x) -> str:
    return f"{float(x):.17g}"


def _jsonable(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


# -- config -> objects ---------------------------------------------------------

def make_curve(cfg: StudyConfig):
    from . import geometry as geo

    kind = cfg.get("curve", "preset", "bump")
    if kind == "file":
        path = cfg.base_dir / cfg.get("curve", "path")
        try:
            return geo.read_curve(path)
        except OSError as exc:
            raise InvalidInput(f"cannot read curve {path}: {exc}") from None
    length = cfg.number("curve", "length", 10.0, positive=True)
    n = cfg.integer("curve", "n", 100, minimum=4)
    if kind == "straight":
        return geo.straight(length, n)
    if kind == "bump":
        return geo.bump_curvature(cfg.number("curve", "amplitude", 1.0), cfg.number("curve", "center", length / 2),
                                  cfg.number("curve", "halfwidth", length / 5, positive=True), length, n)
    if kind == "twisted":
        return geo.twisted(cfg.number("curve", "amplitude", 1.0), cfg.number("curve", "center", length / 2),
                           cfg.number("curve", "halfwidth", length / 5, positive=True), length, n,
                           kappa_amplitude=cfg.number("curve", "kappa_amplitude", 0.0))
    if kind == "circle":
        return geo.circular_arc(cfg.number("curve", "radius", 1.0, positive=True), length, n)
    if kind == "helix":
        return geo.helix(cfg.number("curve", "kappa", 1.0), cfg.number("curve", "tau", 1.0), length, n)
    raise InvalidInput(f"unknown curve preset {kind!r}")


def make_mesh(cfg: StudyConfig):
    from .cross_section import Shape, build_mesh

    shape = Shape.parse(cfg.get("section", "shape", "rectangle pi pi/sqrt(2)"), cfg.base_dir)
    h = cfg.number("section", "h", 0.1, positive=True)
    return build_mesh(shape, h)


def _eps_list(cfg: StudyConfig, override: str | None) -> list:
    vals = parse_list(override) if override else cfg.numbers("study", "eps_list", "0.2, 0.1, 0.05")
    if any(not v > 0 for v in vals):
        raise InvalidInput("eps values must be positive")
    return vals


def _directions(text: str) -> list:
    out = []
    for chunk in text.split(";"):
        parts = chunk.split()
        if not parts:
            continue
        if len(parts) != 2:
            raise InvalidInput(f"direction needs two components: {chunk!r}")
        from .config import parse_number
        d = (parse_number(parts[0]), parse_number(parts[1]))
        if d == (0.0, 0.0):
            raise InvalidInput("zero direction")
        out.append(d)
    if not out:
        raise InvalidInput("empty direction list")
    return out


# -- subcommands ---------------------------------------------------------------
# each returns a callable writing into a staging directory

def plan_cross_section(cfg: StudyConfig, args):
    from .cross_section import (COMPLEMENTS, curvature_response, dirichlet_eigenpairs,
                                fit_quadratic_coefficient, twist_coefficient)

    mesh = make_mesh(cfg)
    n_modes = cfg.integer("section", "n_modes", 3, minimum=1)
    curv = None
    if cfg.parser.has_section("curvature"):
        xs = cfg.numbers("curvature", "xi_list", "0.02, 0.04, 0.06, 0.08", positive=True)
        dirs = _directions(cfg.get("curvature", "directions", "1 0"))
        comp = cfg.get("curvature", "complement", "minmax")
        if comp not in COMPLEMENTS:
            raise InvalidInput(f"complement must be one of {COMPLEMENTS}")
        curv = (xs, dirs, comp)

    def run(out: Path):
        spec = dirichlet_eigenpairs(mesh, n_modes)
        with open(out / "eigenvalues.csv", "w") as fh:
            fh.write("n,lambda,residual,simple,C_n\n")
            for p in spec.pairs:
                simple = spec.is_simple(p.index)
                cn = twist_coefficient(mesh, p).value if simple else float("nan")
                fh.write(f"{p.index},{_f17(p.lam)},{_f17(p.residual(mesh))},{int(simple)},{_f17(cn)}\n")
        summary = {"shape": mesh.shape_tag, "h": mesh.h, "n_nodes": mesh.n_nodes,
                   "eigenvalues": spec.eigenvalues, "degenerate": spec.degenerate, "gaps": spec.gaps}
        if curv is not None:
            xs, dirs, comp = curv
            rows = []
            for n in range(n_modes):
                if not spec.is_simple(n):
                    continue
                basis = spec.basis(n)
                for d in dirs:
                    g = curvature_response(mesh, n, basis, xs, d, comp)
                    rows.append((n, d, fit_quadratic_coefficient(xs, g)))
            with open(out / "curvature.csv", "w") as fh:
                fh.write("n,dir1,dir2,coefficient\n")
                for n, d, c in rows:
                    fh.write(f"{n},{_f17(d[0])},{_f17(d[1])},{_f17(c)}\n")
            summary["curvature_complement"] = comp
        _dump_json(summary, out / "summary.json")
        p0 = spec.pairs[0]
        with open(out / "mode0.dat", "w") as fh:
            fh.write("# y1 y2 u0\n")
            for (y1, y2), u in zip(mesh.nodes, p0.u):
                fh.write(f"{_f17(y1)} {_f17(y2)} {_f17(u)}\n")
    return run


def plan_effective(cfg: StudyConfig, args):
    from .cross_section import dirichlet_eigenpairs, twist_coefficient
    from .effective_operator import (bound_state_exists, effective_potential, schrodinger_eigen,
                                     write_potential_csv, write_spectrum_csv)

    curve = make_curve(cfg)
    mesh = make_mesh(cfg)
    n = cfg.integer("study", "n", 0, minimum=0)
    j_max = cfg.integer("study", "j_max", 3, minimum=1)
    R = cfg.number("study", "halfwidth", 0.0) if cfg.has("study", "halfwidth") else None

    def run(out: Path):
        spec = dirichlet_eigenpairs(mesh, n + 1)
        cn = twist_coefficient(mesh, spec.pair(n))
        pot = effective_potential(curve, cn)
        sp1 = schrodinger_eigen(pot, j_max)
        write_potential_csv(pot, out / "potential.csv")
        write_spectrum_csv(sp1, out / "spectrum.csv")
        summary = {"n": n, "C_n": cn.value, "lambda_n": spec.pair(n).lam, "mu": sp1.eigenvalues,
                   "flags": list(pot.flags), "integral_V": pot.integral()}
        if R is not None:
            rep = bound_state_exists(pot, R)
            summary["bound_state"] = {"exists": rep.exists, "lowest": rep.lowest,
                                      "lowest_2R": rep.lowest_2r, "halfwidth": rep.halfwidth}
        _dump_json(summary, out / "summary.json")
        with open(out / "modes.dat", "w") as fh:
            fh.write("# s " + " ".join(f"w{j}" for j in range(j_max)) + "\n")
            for i, s in enumerate(sp1.s):
                fh.write(_f17(s) + " " + " ".join(_f17(v) for v in sp1.w[i]) + "\n")
    return run


def plan_tube(cfg: StudyConfig, args):
    from .cross_section import dirichlet_eigenpairs
    from .tube3d import (assemble_form, confinement_study, leak_estimate, richardson_limit,
                         write_study_csv, write_study_json)

    curve = make_curve(cfg)
    mesh = make_mesh(cfg)
    n = cfg.integer("study", "n", 0, minimum=0)
    j_max = cfg.integer("study", "j_max", 3, minimum=1)
    eps_list = _eps_list(cfg, args.eps_list)
    leak_j = cfg.integer("study", "leak_j", 0, minimum=0) if cfg.has("study", "leak_j") else None
    if leak_j is not None and leak_j >= n:
        raise InvalidInput("leak_j must be below the sector index n")

    def run(out: Path):
        import numpy as np

        spec = dirichlet_eigenpairs(mesh, n + 1)
        if leak_j is not None:
            s = curve.s_grid[1:-1]
            w = np.sin(np.pi * (s - curve.s_grid[0]) / curve.length)
            w /= np.sqrt(np.sum(w**2) * curve.h)
            vals = [leak_estimate(assemble_form(curve, mesh, e, n, spec), w, leak_j) for e in eps_list]
            target = spec.pairs[leak_j].lam - spec.pairs[n].lam
            with open(out / "leak.csv", "w") as fh:
                fh.write("eps,leak\n")
                for e, v in zip(eps_list, vals):
                    fh.write(f"{_f17(e)},{_f17(v)}\n")
            _dump_json({"values": vals, "extrapolated": richardson_limit(eps_list, vals),
                        "target": target}, out / "leak.json")
            return
        study = confinement_study(curve, mesh, n, eps_list, j_max, spec)
        write_study_csv(study, out / "study.csv")
        write_study_json(study, out / "study.json")
        with open(out / "convergence.dat", "w") as fh:
            fh.write("# eps " + " ".join(f"absdiff{j}" for j in range(j_max)) + "\n")
            for i, e in enumerate(study.eps_values()):
                fh.write(_f17(e) + " " + " ".join(_f17(study.diffs(j)[i]) for j in range(j_max)) + "\n")
    return run


def plan_broken_line(cfg: StudyConfig, args):
    from . import broken_line as bl

    base = cfg.get("broken_line", "base", "square-well")
    n_cells = cfg.integer("broken_line", "n_cells", 2000, minimum=2)
    deltas = cfg.numbers("broken_line", "delta_list", "0.4, 0.2, 0.1", positive=True)
    ks = cfg.numbers("broken_line", "k_list", "0.1", positive=True)
    if base == "square-well":
        V = bl.LinePotential.square_well(cfg.number("broken_line", "v0", 1.0),
                                         cfg.number("broken_line", "half_width", 1.0, positive=True), n_cells)
    elif base == "curvature-bump":
        V = bl.curvature_bump_potential(cfg.number("broken_line", "amplitude", 2.0),
                                        cfg.number("broken_line", "halfwidth", 1.0, positive=True), n_cells)
    elif base == "zero-mean":
        V = None
    else:
        raise InvalidInput(f"unknown broken-line base {base!r}")

    def run(out: Path):
        pot = V if V is not None else bl.zero_mean_resonant_potential().V
        study = bl.delta_convergence_study(pot, deltas, ks)
        bl.write_delta_csv(study, out / "delta_study.csv")
        bl.write_classification_json(study, out / "classification.json")
        res = study.resonance
        with open(out / "psi_r.dat", "w") as fh:
            fh.write("# s psi\n")
            for s, v in zip(res.s, res.psi_edges):
                fh.write(f"{_f17(s)} {_f17(v)}\n")
    return run


def plan_gamma_lab(cfg: StudyConfig, args):
    from .gamma_forms import FAMILIES, run_lab

    family = args.family or cfg.get("gamma", "family", "all")
    if family != "all" and family not in FAMILIES:
        raise InvalidInput(f"unknown family {family!r}")
    kinds = FAMILIES if family == "all" else (family,)
    n_fam = cfg.integer("gamma", "n_families", 100, minimum=1)
    dim = args.dim if args.dim is not None else cfg.integer("gamma", "dim", 50)
    if dim < 2:
        raise InvalidInput("dim must be at least 2")
    eps_list = None
    if args.eps_list or cfg.has("gamma", "eps_list"):
        eps_list = parse_list(args.eps_list) if args.eps_list else cfg.numbers("gamma", "eps_list")
        if any(not e > 0 for e in eps_list):
            raise InvalidInput("eps values must be positive")
    seed = args.seed

    def run(out: Path):
        s = run_lab(n_fam, seed, dim, kinds=kinds, eps_list=eps_list)
        _dump_json(s.to_dict(), out / "gamma_report.json")
    return run


def plan_invariants(cfg: StudyConfig, args):
    from .acceptance import structural_invariants

    seed = args.seed

    def run(out: Path):
        _dump_json(structural_invariants(seed), out / "invariants.json")
    return run


def plan_acceptance(number: int, args):
    from .acceptance import CRITERIA
    from .tube3d import ConfinementStudy, write_study_csv

    if number not in CRITERIA:
        raise InvalidInput(f"no acceptance criterion {number}")

    def run(out: Path):
        res = CRITERIA[number]()
        measured = dict(res.measured)
        study = measured.pop("study", None)
        if isinstance(study, ConfinementStudy):
            write_study_csv(study, out / "study.csv")
        _dump_json({"criterion": number, "title": res.title, "passed": res.passed,
                    "measured": measured}, out / "acceptance.json")
        print(res.line())
    return run


PLANS = {
    "cross-section": plan_cross_section,
    "effective": plan_effective,
    "tube": plan_tube,
    "broken-line": plan_broken_line,
    "gamma-lab": plan_gamma_lab,
    "invariants": plan_invariants,
}


def _manifest(cfg: StudyConfig, sub: str, args, out: Path) -> dict:
    import numpy
    import scipy

    files = {}
    for p in sorted(out.iterdir()):
        files[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    return {
        "subcommand": sub,
        "preset": cfg.parser.get("run", "preset", fallback=None),
        "config_sha256": cfg.digest,
        "seed": args.seed,
        "versions": {"thintube": __version__, "python": platform.python_version(),
                     "numpy": numpy.__version__, "scipy": scipy.__version__},
        "outputs": files,
    }


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.list_presets:
        for name in sorted(PRESETS):
            print(f"{name:22s} {PRESETS[name][0]}")
        return 0
    if args.threads is not None:
        if args.threads < 1:
            raise InvalidInput("--threads must be positive")
        for var in THREAD_VARS:
            os.environ[var] = str(args.threads)

    if args.preset:
        cfg = preset(args.preset)
        if args.subcommand and args.subcommand != cfg.subcommand:
            raise InvalidInput(f"preset {args.preset!r} is a {cfg.subcommand} study")
    elif args.config:
        cfg = read_config(args.config, args.subcommand)
    elif args.subcommand:
        cfg = load_config("", ".", args.subcommand)
    else:
        raise InvalidInput("give a subcommand, --config or --preset")
    sub = cfg.subcommand
    if sub is None:
        raise InvalidInput("config does not name a subcommand")

    if cfg.has("acceptance", "criterion"):
        job = plan_acceptance(cfg.integer("acceptance", "criterion"), args)
    else:
        job = PLANS[sub](cfg, args)

    out = args.out
    if out.exists() and not out.is_dir():
        raise InvalidInput(f"--out {out} is not a directory")
    with tempfile.TemporaryDirectory(prefix=".thintube-", dir=out.parent if out.parent.exists() else None) as tmp:
        stage = Path(tmp)
        job(stage)
        _dump_json(_manifest(cfg, sub, args, stage), stage / "run_manifest.json")
        out.mkdir(parents=True, exist_ok=True)
        for p in sorted(stage.iterdir()):
            shutil.move(str(p), out / p.name)
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except InvalidInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
