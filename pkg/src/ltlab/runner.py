"""Resumable, deterministic parameter sweeps.

Output layout of a sweep directory::

    manifest.json      run id, config snapshot, completed point keys
    points/<key>.json  one result file per point, written by exactly one worker
    sweep.csv          assembled in canonical point order once all points exist
    timings.csv        wall-clock seconds per point (kept apart so sweep.csv is reproducible)

Points run in freshly spawned worker processes with BLAS limited to one
thread, so a point's numbers depend only on its configuration.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from . import scf
from .bloch import potential_to_dict

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("gamma", "d", "lattice", "K", "I", "objective", "ratio_sc", "ratio_1bs", "iterations", "converged")


def fmt(x) -> str:
    return "%.12e" % x


def round12(x):
    """Round floats (recursively) to 12 significant digits for JSON output."""
    if isinstance(x, float):
        return x if not math.isfinite(x) else float(fmt(x))
    if isinstance(x, dict):
        return {k: round12(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [round12(v) for v in x]
    return x


def point_key(config: scf.ScfConfig) -> str:
    """Stable hash of the physical configuration (worker count excluded)."""
    data = asdict(replace(config, jobs=1))
    blob = json.dumps(data, sort_keys=True, default=float)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    with open(tmp, "w") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def result_record(res: scf.OptimizationResult) -> dict:
    rec = res.summary()
    rec["trace"] = list(res.trace)
    rec["potential"] = potential_to_dict(res.potential)
    return round12(rec)


def csv_row(rec: dict) -> str:
    cfg = rec["config"]
    d = 1 if cfg["lattice"] == "line" else 2
    cells = [
        fmt(cfg["gamma"]), str(d), cfg["lattice"], str(cfg["bands"]), fmt(cfg["norm"]),
        fmt(rec["objective"]), fmt(rec["ratio_sc"]), fmt(rec["ratio_1bs"]),
        str(rec["iterations"]), "true" if rec["converged"] else "false",
    ]
    return ",".join(cells)


def run_point(config: scf.ScfConfig) -> tuple:
    """Optimize one point; returns (record, seconds).  Errors become records."""
    t0 = time.perf_counter()
    try:
        res = scf.optimize_point(config)
        rec = result_record(res)
    except (scf.NoNegativeSpectrumError, scf.MonotonicityError, RuntimeError, ValueError) as exc:
        nan = float("nan")
        rec = {
            "config": asdict(config), "objective": nan, "ratio_sc": nan, "ratio_1bs": nan,
            "iterations": 0, "converged": False, "error": f"{type(exc).__name__}: {exc}",
        }
    return rec, time.perf_counter() - t0


def _worker_init():
    from threadpoolctl import threadpool_limits

    threadpool_limits(1)


def _worker(config: scf.ScfConfig, path: str) -> tuple:
    rec, seconds = run_point(config)
    rec["seconds"] = seconds
    atomic_write(Path(path), json.dumps(rec, sort_keys=True, indent=1) + "\n")
    return point_key(config), not rec["converged"] or "error" in rec


@dataclass
class RunManifest:
    run_id: str
    config: dict
    points: list  # canonical key order
    completed: list = field(default_factory=list)
    layout: dict = field(default_factory=lambda: {"points": "points/<key>.json", "csv": "sweep.csv", "timings": "timings.csv"})

    def save(self, out: Path) -> None:
        atomic_write(out / "manifest.json", json.dumps(asdict(self), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, out: Path) -> "RunManifest":
        with open(out / "manifest.json") as fh:
            return cls(**json.load(fh))


def sweep_points(base: scf.ScfConfig, gammas, norms) -> list:
    """Canonical point order: gamma outer, I inner."""
    return [replace(base, gamma=float(g), norm=float(i), jobs=1) for g in gammas for i in norms]


def run_sweep(points: list, out, jobs: int = 1, resume: bool = False, snapshot: dict | None = None,
              on_point=None) -> dict:
    """Run (or resume) a sweep; returns {"failed": [...], "computed": [...], "csv": path}.

    ``on_point`` is called in the parent after each point is recorded.
    """
    out = Path(out)
    (out / "points").mkdir(parents=True, exist_ok=True)
    keys = [point_key(p) for p in points]
    if len(set(keys)) != len(keys):
        raise ValueError("sweep contains duplicate points")
    run_id = hashlib.sha256("".join(keys).encode()).hexdigest()[:16]

    if resume and (out / "manifest.json").exists():
        man = RunManifest.load(out)
        if man.points != keys:
            raise ValueError("existing manifest describes a different sweep; use a fresh output directory")
        man.completed = [k for k in man.completed if (out / "points" / f"{k}.json").exists()]
    else:
        man = RunManifest(run_id=run_id, config=snapshot or {}, points=keys)
        for k in keys:
            (out / "points" / f"{k}.json").unlink(missing_ok=True)
        for name in ("sweep.csv", "timings.csv"):
            (out / name).unlink(missing_ok=True)
    man.save(out)

    done = set(man.completed)
    todo = [(k, p) for k, p in zip(keys, points) if k not in done]
    computed = []
    if todo:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=max(1, jobs), mp_context=ctx, initializer=_worker_init) as pool:
            futs = [pool.submit(_worker, p, str(out / "points" / f"{k}.json")) for k, p in todo]
            for fut in as_completed(futs):
                key, _ = fut.result()
                done.add(key)
                man.completed = [k for k in keys if k in done]
                man.save(out)
                computed.append(key)
                if on_point is not None:
                    on_point(key)

    failed = []
    rows, timings = [], []
    for k in keys:
        with open(out / "points" / f"{k}.json") as fh:
            rec = json.load(fh)
        if not rec["converged"] or "error" in rec:
            failed.append(k)
        rows.append(csv_row(rec))
        timings.append(f"{k},{rec.get('seconds', float('nan')):.3f}")
    atomic_write(out / "sweep.csv", ",".join(SWEEP_COLUMNS) + "\n" + "".join(r + "\n" for r in rows))
    atomic_write(out / "timings.csv", "key,seconds\n" + "".join(t + "\n" for t in timings))
    return {"failed": failed, "computed": computed, "csv": out / "sweep.csv"}
