"""Acceptance criteria 1-10.  Each test prints one PASS/FAIL line (also collected
into the terminal summary) before asserting."""
import json
import math
import os
import signal
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg

from ltlab import constants, elliptic, scf
from ltlab.bloch import BlochSolver, PotentialField, lowest_bands, potential_lp_integral, riesz_mean
from ltlab.lattice import make_lattice, max_alias_free_ecut
from ltlab.scf import ScfConfig, init_potential, optimize_point, scf_step, sweep_I

KS = [round(0.1 * i, 1) for i in range(1, 10)]


def test_criterion_01_lame_exactness(criterion):
    t0 = time.perf_counter()
    closed = max(abs(elliptic.lame_riesz_mean(k) / elliptic.lame_potential_mean(k) - 3 / 16) for k in KS)
    quad = max(
        abs(elliptic.lame_riesz_mean_quadrature(k) / elliptic.lame_potential_mean_quadrature(k) - 3 / 16) for k in KS
    )
    dt = time.perf_counter() - t0
    ok = closed < 1e-10 and quad < 1e-8 and dt < 1.0
    criterion(1, ok, f"closed-form dev {closed:.1e} (<1e-10), quadrature dev {quad:.1e} (<1e-8), {dt:.2f}s (<1s)")
    assert ok


def test_criterion_02_beta_integrals(criterion):
    t0 = time.perf_counter()
    err = max(
        max(abs(a - b) for a, b in zip(elliptic.beta_integrals(k), elliptic.beta_integrals_quadrature(k)))
        for k in (0.3, 0.6, 0.9)
    )
    dt = time.perf_counter() - t0
    ok = err < 1e-10 and dt < 1.0
    criterion(2, ok, f"max |closed - quadrature| {err:.1e} (<1e-10), {dt:.2f}s (<1s)")
    assert ok


def test_criterion_03_bloch_vs_elliptic(criterion):
    t0 = time.perf_counter()
    k = 0.7
    ell = elliptic.lame_period(k)
    line = make_lattice("line")
    v = PotentialField.from_function(line, 256, lambda x: ell * ell * elliptic.lame_potential(ell * x[:, 0], k))
    ecut = (40 * math.pi) ** 2
    ratios = []
    for e in (ecut, 2 * ecut):
        b = lowest_bands(v, 1, 64, e)
        ratios.append(riesz_mean(b, 1.5) / potential_lp_integral(v, 2.0))
        if e == ecut:
            lo, hi = b.energies[:, 0].min(), b.energies[:, 0].max()
    dt = time.perf_counter() - t0
    edge_err = max(abs(lo + ell**2), abs(hi + ell**2 * k * k))
    ratio_err = abs(ratios[0] - 3 / 16)
    doubling = abs(ratios[1] - ratios[0])
    ok = edge_err < 1e-5 and ratio_err < 1e-5 and doubling < 1e-6 and dt < 30
    criterion(3, ok, f"edge err {edge_err:.1e}, ratio err {ratio_err:.1e} (<1e-5), "
                     f"E_cut doubling {doubling:.1e} (<1e-6), {dt:.1f}s")
    assert ok


def test_criterion_04_semiclassical_identity(criterion):
    t0 = time.perf_counter()
    mu = 0.8 * math.pi**2
    b = lowest_bands(PotentialField.constant(make_lattice("line"), 16, -mu), 1, 512)
    err = abs(riesz_mean(b, 1.5) / mu**2 - constants.semiclassical_constant(1.5, 1))
    dt = time.perf_counter() - t0
    ok = err < 1e-6 and dt < 5
    criterion(4, ok, f"|J/mu^2 - L_sc| = {err:.1e} (<1e-6), {dt:.2f}s")
    assert ok


def test_criterion_05_reference_constants(criterion):
    constants.nls_ground_state.cache_clear()
    t0 = time.perf_counter()
    lsc = abs(constants.semiclassical_constant(1.5, 1) - 3 / 16)
    l1 = abs(constants.one_bound_state_constant(1.5, 1) - 3 / 16)
    cross = constants.crossing_exponent(2)
    dt = time.perf_counter() - t0
    ok = lsc < 1e-12 and l1 < 1e-8 and abs(cross - 1.165378) < 1e-4 and dt < 30
    criterion(5, ok, f"L_sc err {lsc:.1e}, L1 err {l1:.1e}, gamma_cross(2) = {cross:.7f}, {dt:.1f}s")
    assert ok


def _checked_run(cfg, monkeypatch):
    """optimize_point with every step's constraint error recorded."""
    errors = []
    orig = scf.scf_step

    def spy(v, c, solver=None):
        nxt, info = orig(v, c, solver)
        p = c.exponent
        errors.append(abs(potential_lp_integral(nxt, p) - c.norm**p) / c.norm**p)
        return nxt, info

    monkeypatch.setattr(scf, "scf_step", spy)
    try:
        res = optimize_point(cfg)
    finally:
        monkeypatch.setattr(scf, "scf_step", orig)
    return res, errors


def test_criterion_06_scf_contract(criterion, monkeypatch):
    t0 = time.perf_counter()
    details, ok = [], True
    for norm in (5.0, 15.0):
        cfg = ScfConfig(gamma=1.5, lattice="line", norm=norm, bands=1, n_c=64, n_b=128)
        res, errors = _checked_run(cfg, monkeypatch)
        tr = np.array(res.trace)
        mono = bool(np.all(np.diff(tr) >= -1e-10 * (1 + np.abs(tr[:-1]))))
        cons = max(errors)
        good = mono and cons < 1e-10 and res.converged and abs(res.ratio_sc - 1) < 1e-4
        if norm == 15.0:
            good = good and res.gap_above > 0
        ok = ok and good
        details.append(f"I={norm:g}: ratio-1 {res.ratio_sc - 1:.1e}, constraint {cons:.1e}, "
                       f"monotone {mono}, gap {res.gap_above:.3g}")
    dt = time.perf_counter() - t0
    ok = ok and dt < 120
    criterion(6, ok, "; ".join(details) + f"; {dt:.1f}s")
    assert ok


def test_criterion_07_phase_picture_1d(criterion):
    """At gamma = 1.8 and I <= pi^2 the constant potential -I is admissible and
    gives ratio_sc = 1 exactly, so there "< 1" is checked as "<= 1 + 1e-6"
    (Brillouin-zone quadrature error at N_B = 512 is below 2e-7); for I > pi^2
    the strict inequality is required."""
    t0 = time.perf_counter()
    norms = list(range(2, 15))
    low = sweep_I(ScfConfig(gamma=1.2, lattice="line", norm=1.0, n_c=64, n_b=128), norms)
    bound = constants.one_bound_state_constant(1.2, 1) / constants.semiclassical_constant(1.2, 1)
    ok_low = all(r.error is None and r.ratio_sc < bound for r in low)
    high = sweep_I(ScfConfig(gamma=1.8, lattice="line", norm=1.0, n_c=64, n_b=512), norms)
    ok_high = all(
        r.error is None and (r.ratio_sc <= 1 + 1e-6 if r.config.norm <= math.pi**2 else r.ratio_sc < 1)
        for r in high
    )
    strict = sum(r.ratio_sc < 1 for r in high)
    dt = time.perf_counter() - t0
    ok = ok_low and ok_high and dt < 600
    criterion(7, ok, f"gamma=1.2 max ratio {max(r.ratio_sc for r in low):.6f} < L1/Lsc {bound:.6f}; "
                     f"gamma=1.8 max ratio {max(r.ratio_sc for r in high):.9f} "
                     f"(strictly < 1 at {strict}/{len(high)} I; constant optimum for I <= pi^2); {dt:.0f}s")
    assert ok


@pytest.mark.slow
def test_criterion_08_2d_sign(criterion):
    t0 = time.perf_counter()
    lat = make_lattice("triangular")
    emax = max_alias_free_ecut(lat, 24)
    base = ScfConfig(gamma=1.1653, lattice="triangular", norm=28.7, bands=1, n_c=24, n_b=12, ecut=0.5 * emax)
    bound = constants.one_bound_state_constant(1.1653, 2) / constants.semiclassical_constant(1.1653, 2)
    runs = [optimize_point(base), optimize_point(replace(base, ecut=emax))]
    dt = time.perf_counter() - t0
    ok = all(r.converged and r.ratio_sc > 1 and r.ratio_sc > bound and r.negative_bands == 1 for r in runs)
    criterion(8, ok, f"ratio_sc {runs[0].ratio_sc:.7f} / doubled E_cut {runs[1].ratio_sc:.7f} "
                     f"vs L1/Lsc {bound:.7f}; negative bands {runs[1].negative_bands}; {dt:.0f}s")
    assert ok


def _sweep_cmd(out, jobs):
    return [sys.executable, "-m", "ltlab", "sweep", "--lattice", "line", "--gammas", "1.3,1.7",
            "--norms", "4,8,12", "--nc", "32", "--nb", "64", "--jobs", str(jobs), "--out", str(out)]


def test_criterion_09_determinism_resume(criterion, tmp_path):
    t0 = time.perf_counter()
    env = dict(os.environ)
    whole = subprocess.run(_sweep_cmd(tmp_path / "whole", 1), env=env, capture_output=True)
    eight = subprocess.run(_sweep_cmd(tmp_path / "eight", 8), env=env, capture_output=True)

    # start, wait for the first completed point, kill hard, resume
    cut = tmp_path / "cut"
    proc = subprocess.Popen(_sweep_cmd(cut, 1), env=env, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
                            start_new_session=True)
    done_before = 0
    deadline = time.time() + 120
    while time.time() < deadline and proc.poll() is None:
        try:
            done_before = len(json.loads((cut / "manifest.json").read_text())["completed"])
        except (OSError, ValueError, KeyError):
            done_before = 0
        if done_before >= 1:
            os.killpg(proc.pid, signal.SIGKILL)
            break
        time.sleep(0.01)
    proc.wait()
    killed_mid_run = 1 <= done_before < 6 and not (cut / "sweep.csv").exists()
    resumed = subprocess.run(_sweep_cmd(cut, 1) + ["--resume"], env=env, capture_output=True, text=True)

    a = (tmp_path / "whole" / "sweep.csv").read_bytes()
    b = (tmp_path / "eight" / "sweep.csv").read_bytes()
    c = (cut / "sweep.csv").read_bytes()
    dt = time.perf_counter() - t0
    codes = (whole.returncode, eight.returncode, resumed.returncode)
    ok = a == b == c and killed_mid_run and codes == (0, 0, 0) and dt < 300
    criterion(9, ok, f"jobs 1 vs 8 identical {a == b}; killed after {done_before}/6 points, resumed CSV identical "
                     f"{a == c}; exit codes {codes}; {dt:.0f}s")
    assert ok


def test_criterion_10_property_suites(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    results = {}

    herm, trs, shift = 0.0, 0.0, 0.0
    for kind in ("line", "square", "triangular", "honeycomb"):
        lat = make_lattice(kind)
        n_c = 16 if lat.dim == 1 else 10
        solver = BlochSolver(lat, n_c)
        for _ in range(3):
            v = PotentialField(lat, 5 * rng.normal(size=(n_c,) * lat.dim))
            xi = rng.uniform(-0.5, 0.5, lat.dim) @ lat.dual
            h = solver.hamiltonian(v, xi)
            herm = max(herm, np.max(np.abs(h - h.conj().T)))
            ep = scipy.linalg.eigvalsh(h)[:5]
            em = scipy.linalg.eigvalsh(solver.hamiltonian(v, -xi))[:5]
            trs = max(trs, np.max(np.abs(ep - em)))
            s = rng.uniform(-50, 50)
            a = solver.bands(v, 3, 3).energies
            b = solver.bands(v - s, 3, 3).energies
            shift = max(shift, np.max(np.abs(b - (a - s))) / (1 + abs(s)))
    results["hermiticity"] = (herm, herm < 1e-12)
    results["time reversal"] = (trs, trs < 1e-10)
    results["shift covariance"] = (shift, shift < 1e-10)

    equi = 0.0
    for kind, n_c, nb in (("line", 32, 8), ("triangular", 8, 3), ("honeycomb", 8, 3)):
        cfg = ScfConfig(gamma=1.3, lattice=kind, norm=20.0, n_c=n_c, n_b=nb, init_noise=0.5, seed=7)
        v = init_potential(cfg)
        for sh in (1, 3):
            a, _ = scf_step(v, cfg)
            b, _ = scf_step(v.roll(sh), cfg)
            equi = max(equi, np.max(np.abs(b.values - a.roll(sh).values)) / np.max(np.abs(a.values)))
    results["scf translation equivariance"] = (equi, equi < 1e-9)

    dos = 0.0
    for k in (0.2, 0.5, 0.8):
        s = (1 + k * k) / 3
        e = np.concatenate([np.linspace(-1 + 1e-3, -k * k - 1e-3, 15), np.linspace(1e-3, 20, 15)]) + s
        w = elliptic.weierstrass_dos(e, k)
        v = elliptic.lame_dos(e - s, k)
        dos = max(dos, np.max(np.abs(w - v) / np.abs(v)))
    results["DOS shift identity"] = (dos, dos < 1e-10)

    dt = time.perf_counter() - t0
    ok = all(flag for _, flag in results.values()) and dt < 120
    criterion(10, ok, ", ".join(f"{name} {val:.1e}" for name, (val, _) in results.items()) + f"; {dt:.1f}s")
    assert ok
