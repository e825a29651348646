"""Command-line front end (``ltlab``).

Exit status: 0 on success, 1 when a point failed to converge or a self-check
failed, 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import constants, elliptic, runner, scf
from .bloch import (
    PotentialField,
    bands_to_csv,
    lowest_bands,
    potential_from_dict,
    potential_lp_integral,
    potential_to_csv,
    riesz_mean,
)
from .lattice import make_lattice

log = logging.getLogger("ltlab")

LAME_TOL = 1e-8

# config-file keys and the attribute they set (file keys mirror the long flags)
COMMON = {
    "gamma": float, "dim": int, "lattice": str, "bands": int, "norm": float, "nc": int, "nb": int,
    "ecut": float, "tol": float, "max-iter": int, "jobs": int, "out": str, "seed": int,
    "mixing": float, "init-width": float, "init-noise": float,
    "gammas": str, "norms": str, "k": str,
    "gamma-bracket": str, "window": str, "gamma-tol": float, "xatol": float,
}


class UsageError(Exception):
    pass


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("_", "-")
            if key not in COMMON and key not in ("resume", "crossing", "warm-start"):
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = val
    return out


def parse_list(text) -> list:
    """``a,b,c`` or ``start:stop:step`` (inclusive of stop)."""
    if isinstance(text, (list, tuple)):
        return [float(t) for t in text]
    text = str(text).strip()
    if ":" in text:
        start, stop, step = (float(t) for t in text.split(":"))
        if step <= 0:
            raise UsageError("range step must be positive")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [float(f"{start + i * step:.12g}") for i in range(n)]
    return [float(t) for t in text.split(",") if t.strip()]


def _bool(val) -> bool:
    return str(val).lower() in ("1", "true", "yes", "on")


def merged(args) -> dict:
    """Flags override config-file values."""
    values = {}
    if getattr(args, "config", None):
        for key, val in read_config(args.config).items():
            if key in COMMON:
                values[key] = COMMON[key](val)
            else:
                values[key] = _bool(val)
    for key in list(COMMON) + ["resume", "crossing", "warm-start"]:
        attr = key.replace("-", "_")
        val = getattr(args, attr, None)
        if val is not None and val is not False:
            values[key] = val
    return values


def out_dir(values) -> Path:
    path = values.get("out") or os.environ.get("LT_LAB_OUT") or "ltlab_out"
    return Path(path)


def build_config(values, need_norm=True) -> scf.ScfConfig:
    lattice = values.get("lattice")
    if lattice is None:
        raise UsageError("--lattice is required")
    try:
        lat = make_lattice(lattice, values.get("dim"))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if "gamma" not in values:
        raise UsageError("--gamma is required")
    if need_norm and "norm" not in values:
        raise UsageError("--norm is required")
    kwargs = dict(gamma=values["gamma"], lattice=lat.kind, norm=values.get("norm", 1.0))
    optional = {"bands": "bands", "nc": "n_c", "nb": "n_b", "ecut": "ecut", "tol": "tol",
                "max-iter": "max_iter", "seed": "seed", "mixing": "mixing",
                "init-width": "init_width", "init-noise": "init_noise", "jobs": "jobs"}
    for key, attr in optional.items():
        if key in values:
            kwargs[attr] = values[key]
    try:
        return scf.ScfConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def emit(text: str, values, name: str | None):
    """Print to stdout; also write under --out when one was requested."""
    sys.stdout.write(text)
    if name and (values.get("out") or os.environ.get("LT_LAB_OUT")):
        path = out_dir(values)
        path.mkdir(parents=True, exist_ok=True)
        runner.atomic_write(path / name, text)


# -- subcommands ----------------------------------------------------------------

def cmd_constants(values) -> int:
    d = values.get("dim", 1)
    if d not in (1, 2):
        raise UsageError("constants are available for d = 1, 2")
    lines = []
    if "gamma" in values:
        g = values["gamma"]
        try:
            constants.check_exponent(g, d)
            lsc = constants.semiclassical_constant(g, d)
            l1 = constants.one_bound_state_constant(g, d)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        lines.append("gamma,d,L_sc,L_1bs,ratio_1bs_sc")
        lines.append(f"{runner.fmt(g)},{d},{runner.fmt(lsc)},{runner.fmt(l1)},{runner.fmt(l1 / lsc)}")
    if values.get("crossing"):
        lines.append("d,gamma_cross")
        lines.append(f"{d},{runner.fmt(constants.crossing_exponent(d))}")
    if not lines:
        raise UsageError("give --gamma and/or --crossing")
    emit("\n".join(lines) + "\n", values, "constants.csv")
    return 0


def cmd_lame(values) -> int:
    if "k" not in values:
        raise UsageError("--k is required (a value, a list a,b,c or a range start:stop:step)")
    ks = parse_list(values["k"])
    rows = [",".join(elliptic.LAME_REPORT_COLUMNS)]
    worst = 0.0
    for k in ks:
        try:
            rep = elliptic.LameModel.from_modulus(k).report()
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        worst = max(worst, abs(rep["deviation"]))
        rows.append(",".join(runner.fmt(rep[c]) for c in elliptic.LAME_REPORT_COLUMNS))
    emit("\n".join(rows) + "\n", values, "lame.csv")
    if worst > LAME_TOL:
        log.error("ratio deviates from 3/16 by %.3e", worst)
        return 1
    return 0


def _bands_potential(values, args):
    lattice = values.get("lattice")
    if args.potential:
        with open(args.potential) as fh:
            obj = json.load(fh)
        return potential_from_dict(obj.get("potential", obj))
    if lattice is None:
        raise UsageError("--lattice is required")
    lat = make_lattice(lattice, values.get("dim"))
    n_c = values.get("nc", 64)
    if args.lame is not None:
        if lat.kind != "line":
            raise UsageError("--lame needs the line lattice")
        k = args.lame
        try:
            ell = elliptic.lame_period(k)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        return PotentialField.from_function(lat, n_c, lambda x: ell * ell * elliptic.lame_potential(ell * x[:, 0], k))
    return PotentialField.constant(lat, n_c, -args.mu)


def cmd_bands(values, args) -> int:
    v = _bands_potential(values, args)
    k = values.get("bands", v.lattice.default_bands)
    b = lowest_bands(v, k, values.get("nb", 32), values.get("ecut"), jobs=values.get("jobs", 1))
    path = out_dir(values)
    path.mkdir(parents=True, exist_ok=True)
    bands_to_csv(b, path / "bands.csv")
    gamma = values.get("gamma", 1.5)
    j = riesz_mean(b, gamma)
    p = gamma + 0.5 * v.lattice.dim
    print("gamma,riesz_mean,potential_integral,negative_bands")
    print(f"{runner.fmt(gamma)},{runner.fmt(j)},{runner.fmt(potential_lp_integral(v, p))},{b.negative_band_count()}")
    return 0


def cmd_optimize(values, args) -> int:
    cfg = build_config(values)
    init = None
    if args.init:
        with open(args.init) as fh:
            obj = json.load(fh)
        init = potential_from_dict(obj.get("potential", obj))
    res = scf.optimize_point(cfg, initial=init)
    rec = runner.result_record(res)
    key = runner.point_key(cfg)
    path = out_dir(values)
    path.mkdir(parents=True, exist_ok=True)
    runner.atomic_write(path / f"optimize_{key}.json", json.dumps(rec, sort_keys=True, indent=1) + "\n")
    row = runner.csv_row(rec)
    runner.atomic_write(path / f"optimize_{key}.csv", ",".join(runner.SWEEP_COLUMNS) + "\n" + row + "\n")
    potential_to_csv(res.potential, path / f"optimize_{key}_absV.csv", absolute=True)
    print(",".join(runner.SWEEP_COLUMNS))
    print(row)
    if not res.converged:
        log.error("not converged after %d iterations (residual %.3e)", res.iterations, res.residual)
        return 1
    return 0


def cmd_sweep(values) -> int:
    if "norms" not in values:
        raise UsageError("--norms is required")
    gammas = parse_list(values["gammas"]) if "gammas" in values else None
    base = build_config({"gamma": gammas[0], **values} if gammas else values, need_norm=False)
    gammas = gammas or [base.gamma]
    norms = parse_list(values["norms"])
    try:
        points = runner.sweep_points(base, gammas, norms)
        for p in points:  # validates every (gamma, I) before any work starts
            scf.ScfConfig(**asdict(p))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    snapshot = {k: v for k, v in values.items() if k not in ("jobs", "resume", "out")}
    jobs = values.get("jobs", os.cpu_count() or 1)
    try:
        out = runner.run_sweep(points, out_dir(values), jobs=jobs, resume=values.get("resume", False), snapshot=snapshot)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    log.info("computed %d points, %d failed; CSV at %s", len(out["computed"]), len(out["failed"]), out["csv"])
    return 1 if out["failed"] else 0


def cmd_critical_gamma(values) -> int:
    base = build_config({"gamma": 1.2, **values}, need_norm=False)
    if base.dim != 2:
        raise UsageError("critical-gamma needs a 2D lattice")
    if "gamma-bracket" not in values or "window" not in values:
        raise UsageError("--gamma-bracket lo,hi and --window lo,hi are required")
    bracket = parse_list(values["gamma-bracket"])
    window = parse_list(values["window"])
    if len(bracket) != 2 or len(window) != 2:
        raise UsageError("--gamma-bracket and --window take two values each")
    try:
        g, i = scf.critical_gamma(base, tuple(bracket), tuple(window), values.get("gamma-tol", 1e-6),
                                  values.get("xatol", 0.05), values.get("warm-start", False))
    except ValueError as exc:
        log.error("%s", exc)
        return 1
    emit(f"lattice,K,gamma_star,I_star\n{base.lattice},{base.bands},{runner.fmt(g)},{runner.fmt(i)}\n",
         values, "critical_gamma.csv")
    return 0


# -- parser -----------------------------------------------------------------------

def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--gamma", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--lattice", choices=("line", "square", "triangular", "honeycomb"))
    p.add_argument("--bands", type=int, help="number of bands K")
    p.add_argument("--norm", type=float, help="constraint level I")
    p.add_argument("--nc", type=int, help="cell grid points per axis N_C")
    p.add_argument("--nb", type=int, help="Brillouin-zone points per axis N_B")
    p.add_argument("--ecut", type=float, help="plane-wave cutoff on |G|^2")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", help="output directory (default $LT_LAB_OUT or ./ltlab_out)")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--mixing", type=float)
    p.add_argument("--init-width", type=float)
    p.add_argument("--init-noise", type=float)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ltlab", description="Periodic Lieb-Thirring laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="semiclassical and one-bound-state constants")
    _common(p)
    p.add_argument("--crossing", action="store_true", help="also report the exponent where they cross")

    p = sub.add_parser("lame", help="Lamé potential report rows")
    _common(p)
    p.add_argument("--k", help="modulus, list a,b,c or range start:stop:step")

    p = sub.add_parser("bands", help="band structure of a potential")
    _common(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--potential", help="potential JSON (a result file or a bare potential object)")
    src.add_argument("--lame", type=float, metavar="K", help="rescaled Lamé potential of modulus K")
    p.add_argument("--mu", type=float, default=0.0, help="constant potential -mu (default)")

    p = sub.add_parser("optimize", help="one fixed-point optimization")
    _common(p)
    p.add_argument("--init", help="start from the potential in this JSON file")

    p = sub.add_parser("sweep", help="resumable sweep over gamma and I")
    _common(p)
    p.add_argument("--gammas")
    p.add_argument("--norms")

    p = sub.add_parser("critical-gamma", help="gamma where max_I ratio_sc crosses 1")
    _common(p)
    p.add_argument("--gamma-bracket")
    p.add_argument("--window")
    p.add_argument("--gamma-tol", type=float)
    p.add_argument("--xatol", type=float)
    p.add_argument("--warm-start", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        values = merged(args)
        if args.command == "constants":
            return cmd_constants(values)
        if args.command == "lame":
            return cmd_lame(values)
        if args.command == "bands":
            return cmd_bands(values, args)
        if args.command == "optimize":
            return cmd_optimize(values, args)
        if args.command == "sweep":
            return cmd_sweep(values)
        return cmd_critical_gamma(values)
    except UsageError as exc:
        parser.error(str(exc))  # exits with status 2
    except (OSError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
