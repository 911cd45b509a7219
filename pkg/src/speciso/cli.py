"""Command-line entry point: ``speciso <command> [options]``.

Exit codes: 0 success, 1 failed internal audit, 2 invalid input,
3 eigensolver non-convergence, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import AmbientSpec, build_report, torus_counterexample
from .errors import AuditError, ConvergenceError, InputError, MeshValidationError, ParameterError
from .mesh_core import load_mesh, make_family, save_mesh, validate
from .spectral import DEFAULT_SEED, MASS_SCHEMES, eigenvalues

log = logging.getLogger("speciso")

EXIT_OK, EXIT_AUDIT, EXIT_INPUT, EXIT_SOLVER, EXIT_USAGE = 0, 1, 2, 3, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive and finite, got {text}")
    return v


@dataclass
class RunConfig:
    command: str
    family: str | None = None
    mesh_path: str | None = None
    k: int = 9
    mass: str = "lumped"
    distance: str = "ambient"
    r0: list = field(default_factory=lambda: [1.0, 10.0, 100.0])
    out: Path = Path(".")
    seed: int = DEFAULT_SEED
    a: float = 0.0
    K: int = 4
    r: float | None = None
    r_override: float | None = None
    n: int = 2
    radius: float = 1.0
    torus_volume: float = 1000.0
    i_max: int = 20

    def load(self):
        if self.family:
            mesh = make_family(self.family)
        else:
            mesh = load_mesh(self.mesh_path)
        problems = validate(mesh)
        if problems:
            raise MeshValidationError(problems)
        return mesh


def build_parser():
    p = _Parser(prog="speciso", description="Laplacian spectra of closed surfaces against isoperimetric bounds.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)

    common = _Parser(add_help=False)
    src = common.add_mutually_exclusive_group(required=True)
    src.add_argument("--family", help="NAME:PARAMS, e.g. icosphere:4, ellipsoid:1,1,2,3, dumbbell:0.5,32")
    src.add_argument("--mesh", dest="mesh_path", help="OFF or OBJ triangle mesh")
    common.add_argument("--mass", choices=MASS_SCHEMES, default="lumped")
    common.add_argument("--distance", choices=("ambient", "intrinsic"), default="ambient")
    common.add_argument("--r0", type=_positive_float, action="append", help="covering scale (repeatable)")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)

    out = _Parser(add_help=False)
    out.add_argument("--out", type=Path, default=Path("."), help="output directory")

    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("spectrum", parents=[common, out], help="lowest k eigenvalues")
    s.add_argument("--k", type=_positive_int, default=9)
    s = sub.add_parser("bounds", parents=[common, out], help="bound report with CSV and SVG")
    s.add_argument("--k", type=_positive_int, default=9)
    s.add_argument("--a", type=float, default=0.0, help="Ricci parameter: Ric >= -n a^2 (0 = Euclidean)")
    s = sub.add_parser("decompose", parents=[common, out], help="K-set ball decomposition of the vertex space")
    s.add_argument("--K", type=_positive_int, default=4)
    s.add_argument("--r", type=_positive_float, default=None, help="radius (default: largest admissible)")
    s = sub.add_parser("certify", parents=[common, out], help="certified upper bound on lambda_k")
    s.add_argument("--k", type=_positive_int, required=True)
    s.add_argument("--r", dest="r_override", type=_positive_float, default=None, help="override r_k")
    s = sub.add_parser("counterexample", parents=[out], help="torus with a shrinking spherical hole")
    s.add_argument("--n", type=_positive_int, default=2)
    s.add_argument("--radius", type=_positive_float, default=1.0)
    s.add_argument("--torus-volume", type=_positive_float, default=1000.0)
    s.add_argument("--i-max", type=_positive_int, default=20)
    return p


def parse_config(argv) -> RunConfig:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(ns.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    cfg = RunConfig(command=ns.command)
    for key, value in vars(ns).items():
        if hasattr(cfg, key) and value is not None:
            setattr(cfg, key, value)
    return cfg


def _stamp(payload, cfg):
    return {"command": cfg.command, "generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            **payload}


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _write_csv(path, rows):
    if not rows:
        Path(path).write_text("")
        return
    cols = list(rows[0])
    for r in rows[1:]:
        cols += [c for c in r if c not in cols]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: (repr(v) if isinstance(v, float) else v) for c, v in r.items()})


def cmd_spectrum(cfg):
    mesh = cfg.load()
    res = eigenvalues(mesh, cfg.k, cfg.mass, seed=cfg.seed)
    payload = {"mesh": mesh.family_tag or str(cfg.mesh_path), "k": cfg.k, "seed": cfg.seed, **res.to_dict()}
    _write_json(cfg.out / "report.json", _stamp(payload, cfg))
    _write_csv(cfg.out / "report.csv",
               [{"k": i + 1, "eigenvalue": float(v), "residual": float(r)}
                for i, (v, r) in enumerate(zip(res.eigenvalues, res.solver_residuals))])
    for i, v in enumerate(res.eigenvalues):
        print(f"{i + 1:4d}  {v:.10g}")


def cmd_bounds(cfg):
    from .plotting import plot_bounds

    mesh = cfg.load()
    if cfg.k < 2:
        raise ParameterError("bounds needs --k >= 2")
    spec = AmbientSpec.euclidean(2) if cfg.a == 0 else AmbientSpec.ricci_lower_bound(2, cfg.a)
    report = build_report(mesh, spec, k_max=cfg.k, r0_list=cfg.r0, mass_scheme=cfg.mass, seed=cfg.seed)
    _write_json(cfg.out / "report.json", _stamp(report.to_dict(), cfg))
    _write_csv(cfg.out / "report.csv", report.csv_rows())
    plot_bounds(report, cfg.out / "plot.svg")
    print(f"{report.mesh}: iso_ratio={report.measures.iso_ratio:.6g} all_hold={report.all_hold}")


def cmd_decompose(cfg):
    from .mm_decomp import admissible_radius, decompose, from_mesh

    mesh = cfg.load()
    space = from_mesh(mesh, cfg.distance)
    r, N = cfg.r, None
    if r is None:
        found = admissible_radius(space, cfg.K)
        if found is None:
            raise ParameterError(f"no admissible radius found for K = {cfg.K}")
        r, N = found
    res = decompose(space, cfg.K, r, N)
    payload = {"mesh": mesh.family_tag or str(cfg.mesh_path), "distance": cfg.distance, **res.to_dict()}
    _write_json(cfg.out / "report.json", _stamp(payload, cfg))
    labels = np.full(mesh.n_vertices, -1)
    for i, a in enumerate(res.sets):
        labels[a] = i
    _write_csv(cfg.out / "report.csv", [{"vertex": v, "set": int(s)} for v, s in enumerate(labels)])
    save_mesh(mesh, cfg.out / "mesh.off")
    print(f"K={res.K} r={res.r:.6g} N={res.N} audit={all(v for k, v in res.audit.items() if k != 'min_separation')}")


def cmd_certify(cfg):
    from .mm_decomp import certify_lambda_k, from_mesh

    mesh = cfg.load()
    space = from_mesh(mesh, cfg.distance)
    cert = certify_lambda_k(mesh, cfg.k, cfg.r_override, cfg.mass, seed=cfg.seed, space=space)
    payload = {"mesh": mesh.family_tag or str(cfg.mesh_path), "distance": cfg.distance, **cert.to_dict()}
    _write_json(cfg.out / "report.json", _stamp(payload, cfg))
    rows = [{"vertex": v, **{f"f{j + 1}": float(cert.functions[j, v]) for j in range(len(cert.functions))}}
            for v in range(mesh.n_vertices)]
    _write_csv(cfg.out / "report.csv", rows)
    save_mesh(mesh, cfg.out / "mesh.off")
    print(f"k={cert.k} branch={cert.branch} bound={cert.upper_bound:.6g} fem={cert.lambda_k:.6g}")


def cmd_counterexample(cfg):
    from .plotting import plot_counterexample

    rows = [torus_counterexample(cfg.n, i, cfg.radius, cfg.torus_volume) for i in range(1, cfg.i_max + 1)]
    payload = {"n": cfg.n, "radius": cfg.radius, "torus_volume": cfg.torus_volume, "rows": rows}
    _write_json(cfg.out / "report.json", _stamp(payload, cfg))
    _write_csv(cfg.out / "report.csv", rows)
    plot_counterexample(rows, cfg.out / "plot.svg")
    for r in rows:
        print(f"{r['i']:4d}  {r['iso_ratio_i']:.8g}  {r['normalized_lambda2']:.10g}")


COMMANDS = {
    "spectrum": cmd_spectrum,
    "bounds": cmd_bounds,
    "decompose": cmd_decompose,
    "certify": cmd_certify,
    "counterexample": cmd_counterexample,
}


def _thread_limit():
    text = os.environ.get("SPECISO_THREADS")
    if not text:
        return None
    try:
        v = int(text)
    except ValueError:
        raise UsageError(f"SPECISO_THREADS must be a positive integer, got {text!r}") from None
    if v < 1:
        raise UsageError(f"SPECISO_THREADS must be a positive integer, got {text!r}")
    return v


def main(argv=None) -> int:
    from threadpoolctl import threadpool_limits

    try:
        cfg = parse_config(argv)
        limit = _thread_limit()
    except UsageError as exc:
        print(f"{exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
        with threadpool_limits(limits=limit):
            COMMANDS[cfg.command](cfg)
    except InputError as exc:
        print(f"speciso: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConvergenceError as exc:
        print(f"speciso: solver did not converge: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except AuditError as exc:
        print(f"speciso: internal audit failed: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    except OSError as exc:
        print(f"speciso: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
