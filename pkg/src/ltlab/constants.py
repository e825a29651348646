"""Reference Lieb-Thirring constants: semiclassical and one-bound-state.

The one-bound-state constant is read off the positive radial solution of

    -u'' - (d-1)/r u' + u = u^{1+theta},   theta = 2 / (gamma + d/2 - 1).

Maximizing |lambda_1(V)|^gamma / int V_-^{gamma+d/2} gives the stationarity
condition V = -const * psi^theta for the ground state psi.  Fixing the scale so
that V = -u^theta and lambda_1 = -1, ``u`` solves the equation above and the
maximal ratio is ``1 / int u^{theta (gamma + d/2)}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize
from scipy.linalg import eigh_tridiagonal


class ShootingError(RuntimeError):
    pass


def check_exponent(gamma: float, d: int) -> None:
    """Admissible (gamma, d) for the Lieb-Thirring inequality."""
    if d not in (1, 2, 3) and not (isinstance(d, int) and d >= 1):
        raise ValueError(f"dimension must be a positive integer, got {d}")
    ok = gamma >= 0.5 if d == 1 else (gamma > 0 if d == 2 else gamma >= 0)
    if not ok:
        bound = {1: "gamma >= 1/2", 2: "gamma > 0"}.get(d, "gamma >= 0")
        raise ValueError(f"gamma={gamma} not admissible in d={d} (need {bound})")


def semiclassical_constant(gamma: float, d: int) -> float:
    """Gamma(gamma + 1) / (2^d pi^{d/2} Gamma(gamma + d/2 + 1))."""
    if gamma < 0 or d < 1:
        raise ValueError(f"invalid (gamma, d) = ({gamma}, {d})")
    log = math.lgamma(gamma + 1.0) - math.lgamma(gamma + 0.5 * d + 1.0)
    return math.exp(log) / (2.0**d * math.pi ** (0.5 * d))


def semiclassical_constant_quadrature(gamma: float, d: int) -> float:
    """(2 pi)^{-d} int (|p|^2 - 1)_-^gamma dp, by radial quadrature."""
    sphere = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}[d]
    val, _ = integrate.quad(lambda p: (1.0 - p * p) ** gamma * p ** (d - 1), 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)
    return sphere * val / (2.0 * math.pi) ** d


@dataclass(frozen=True, eq=False)
class NlsGroundState:
    gamma: float
    d: int
    theta: float
    u0: float
    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    integral: float  # int_{R^d} u^{theta (gamma + d/2)}
    residual: float  # sup-norm ODE residual on r

    def potential(self, r):
        """V = -u^theta, interpolated (zero beyond the computed range)."""
        return -np.interp(r, self.r, self.u, right=0.0) ** self.theta


def _sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (0.5 * d) / math.gamma(0.5 * d)


class _Shooter:
    def __init__(self, gamma: float, d: int, r_max: float, rtol: float):
        self.d = d
        self.theta = 2.0 / (gamma + 0.5 * d - 1.0)
        self.power = self.theta * (gamma + 0.5 * d)
        self.r_max = r_max
        self.rtol = rtol
        self.r0 = 1e-4

    def rhs(self, r, y):
        u, du, _ = y
        au = abs(u)
        return [du, -(self.d - 1) / r * du + u - au**self.theta * u, au**self.power * r ** (self.d - 1)]

    def start(self, u0):
        a = (u0 - u0 ** (1.0 + self.theta)) / self.d
        r0 = self.r0
        return [u0 + 0.5 * a * r0 * r0, a * r0, u0**self.power * r0**self.d / self.d]

    def run(self, u0, dense=False):
        def crossing(r, y):
            return y[0]

        def turning(r, y):
            return y[1]

        crossing.terminal = True
        crossing.direction = -1
        turning.terminal = True
        turning.direction = 1
        sol = integrate.solve_ivp(
            self.rhs, (self.r0, self.r_max), self.start(u0), method="DOP853",
            rtol=self.rtol, atol=1e-15, events=(crossing, turning), dense_output=dense,
        )
        if sol.status == -1:
            raise ShootingError(f"integration failed for u(0)={u0}: {sol.message}")
        if sol.t_events[0].size:
            return "over", sol
        if sol.t_events[1].size:
            return "under", sol
        return "flat", sol


@lru_cache(maxsize=64)
def nls_ground_state(gamma: float, d: int, r_max: float = 30.0, rtol: float = 1e-12) -> NlsGroundState:
    """Positive radial ground state by shooting on u(0) with bisection."""
    if d not in (1, 2):
        raise ValueError("shooting is supported for d = 1, 2 only")
    if not gamma + 0.5 * d > 1.0:
        raise ValueError(f"need gamma + d/2 > 1, got gamma={gamma}, d={d}")
    sh = _Shooter(gamma, d, r_max, rtol)

    lo, hi = 1.0, 2.0
    for _ in range(60):
        kind, _ = sh.run(hi)
        if kind == "over":
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise ShootingError("no overshooting initial value found")

    best = None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        kind, sol = sh.run(mid)
        if kind == "over":
            hi = mid
        else:
            lo, best = mid, sol
            if kind == "flat":
                break
        if hi - lo <= 1e-14 * hi:
            break
    if best is None:
        raise ShootingError("bisection never produced a non-crossing trajectory")

    kind, sol = sh.run(lo, dense=True)
    r_end = sol.t[-1]
    tail_u = sol.y[0, -1]
    # beyond r_end the true profile decays like exp(-r); add that tail to the integral
    integral_half = sol.y[2, -1] + tail_u**sh.power * r_end ** (d - 1) / sh.power
    integral = _sphere_area(d) * integral_half

    h = 1e-3
    r = np.arange(2.0 * sh.r0 + 2 * h, r_end - 2 * h, h)
    y = sol.sol(r)
    keep = y[0] > 1e-10 * lo
    r, u, du = r[keep], y[0][keep], y[1][keep]
    resid = _residual(sol, r, sh, h)
    return NlsGroundState(
        gamma=gamma, d=d, theta=sh.theta, u0=lo, r=np.concatenate(([0.0], r)),
        u=np.concatenate(([lo], u)), du=np.concatenate(([0.0], du)), integral=integral, residual=resid,
    )


def _residual(sol, r, sh: _Shooter, h: float) -> float:
    """sup |y' - f(r, y)| with y' from a fourth-order central difference of the dense output."""
    ys = [sol.sol(r + s * h) for s in (-2, -1, 1, 2)]
    dy = (ys[0] - 8.0 * ys[1] + 8.0 * ys[2] - ys[3]) / (12.0 * h)
    y = sol.sol(r)
    f = np.array(sh.rhs(r, y))
    return float(np.max(np.abs(dy[:2] - f[:2])))


def one_bound_state_constant(gamma: float, d: int) -> float:
    """L^(1)_{gamma,d} = 1 / int u^{2 (gamma + d/2) / (gamma + d/2 - 1)}."""
    return 1.0 / nls_ground_state(float(gamma), int(d)).integral


def crossing_exponent(d: int, bracket: tuple | None = None, xtol: float = 1e-7) -> float:
    """Exponent where L^(1)_{gamma,d} = L^sc_{gamma,d}, by a bracketing root search."""
    if d not in (1, 2):
        raise ValueError("crossing exponent is available for d = 1, 2")
    if bracket is None:
        bracket = (1.2, 1.8) if d == 1 else (1.1, 1.25)

    def g(gamma):
        return one_bound_state_constant(gamma, d) / semiclassical_constant(gamma, d) - 1.0

    a, b = bracket
    ga, gb = g(a), g(b)
    if ga * gb > 0:
        raise ValueError(f"no sign change of L1 - Lsc on [{a}, {b}]")
    return float(optimize.brentq(g, a, b, xtol=xtol))


def radial_lowest_eigenvalue(potential, d: int, r_max: float = 30.0, h: float = 0.01) -> float:
    """Lowest radial eigenvalue of -Delta + V(|x|) in R^d (d = 1 even sector).

    Cell-centred second-order finite differences with Dirichlet data at r_max,
    Richardson-extrapolated from steps h and h/2.
    """

    def solve(step):
        n = int(round(r_max / step))
        r = (np.arange(1, n + 1) - 0.5) * step
        rp = (r + 0.5 * step) ** (d - 1)
        rm = (r - 0.5 * step) ** (d - 1)
        rm[0] = 0.0  # no flux through the origin
        w = r ** (d - 1)
        diag = (rp + rm) / (w * step * step) + potential(r)
        off = -rp[:-1] / (np.sqrt(w[:-1] * w[1:]) * step * step)
        return eigh_tridiagonal(diag, off, select="i", select_range=(0, 0), eigvals_only=True)[0]

    coarse, fine = solve(h), solve(0.5 * h)
    return float((4.0 * fine - coarse) / 3.0)
