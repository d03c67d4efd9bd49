"""Electron-pair model at the boundary of a charged ball.

At equilibrium a fraction ``t`` of the surface charge sits on the sphere of
radius ``r`` and the rest on the sphere ``r + delta``.  ``t`` is fixed by
requiring zero force on the pair in that configuration; displacing the inner
electron to ``r < R < r + delta`` then produces an inward restoring force,
and the work done against it bounds the photon energy needed to eject the
pair.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .domain import ChargeDistribution, SurfaceSphere, VolumeShell
from .errors import DegenerateDenominator, OutOfInterval, TOutOfRange


def _screening(r: float, k: float) -> float:
    """4 pi k^2 r^2, the ratio 3 k^2 |E| / C for the ball."""
    return 4.0 * math.pi * k**2 * r**2


def pair_parameter_t(r: float, delta: float, k: float) -> float:
    """Solve (3t - 4 pi k^2 r^2)/(3 - 4 pi k^2 r^2) = -(r+delta)^2/(r+2 delta)^2 for t."""
    a = _screening(r, k)
    if not 3.0 - a > 0:
        raise DegenerateDenominator(f"3 - 4 pi k^2 r^2 = {3.0 - a:.6g} <= 0")
    ratio = ((r + delta) / (r + 2.0 * delta)) ** 2
    return (a - (3.0 - a) * ratio) / 3.0


def t_residual(t: float, r: float, delta: float, k: float) -> float:
    a = _screening(r, k)
    return (3.0 * t - a) / (3.0 - a) + ((r + delta) / (r + 2.0 * delta)) ** 2


@dataclass(frozen=True)
class PairModel:
    r: float
    delta: float
    k: float
    q: float = 1.0
    e: float = 1.0
    t: float | None = None

    def __post_init__(self):
        if self.t is None:
            object.__setattr__(self, "t", pair_parameter_t(self.r, self.delta, self.k))

    @property
    def flagged(self) -> bool:
        """True when t is not a physical fraction."""
        return not 0.0 <= self.t <= 1.0

    @property
    def capacity(self) -> float:
        return self.r

    @property
    def volume(self) -> float:
        return 4.0 * math.pi * self.r**3 / 3.0


def _check_interval(R: float, m: PairModel) -> None:
    eps = 1e-12 * (m.r + m.delta)
    if not m.r - eps <= R <= m.r + m.delta + eps:
        raise OutOfInterval(f"R={R} outside [{m.r}, {m.r + m.delta}]")


def _integrand(R: float, r: float, d: float, gap: float | None = None) -> float:
    # 1/(R+d)^2 - (r+d)^2/((r+2d)^2 R^2) with the cancelling factor (R - r - d) pulled out
    if gap is None:
        gap = R - (r + d)
    num = d * gap * (R * (r + 2.0 * d) + (r + d) * (R + d))
    return num / (R**2 * (R + d) ** 2 * (r + 2.0 * d) ** 2)


def _offset_integrand(s: float, r: float, d: float) -> float:
    # R = r + s, so R - r - d = s - d carries no round-off from r
    return _integrand(r + s, r, d, s - d)


def restoring_force(R: float, model: PairModel) -> float:
    """Net radial force on the displaced pair; negative means inward."""
    _check_interval(R, model)
    # qe/R^2 (R^2/(R+d)^2 - (r+d)^2/(r+2d)^2), evaluated in factored form
    return model.q * model.e * _integrand(R, model.r, model.delta)


def pair_total_force_components(R: float, model: PairModel) -> tuple[float, float, float]:
    """(ion_term, surface_term, outer_term) acting on the pair at R.

    The surface term is qetC/(R^2 (C - k^2|E|)), consistent with the total
    qe(tC - k^2|E|)/(R^2 (C - k^2|E|)) used for the balance equation.
    """
    _check_interval(R, model)
    C, V, k = model.capacity, model.volume, model.k
    qe = model.q * model.e
    den = R**2 * (C - k**2 * V)
    ion = -qe * k**2 * V / den
    surface = qe * model.t * C / den
    outer = qe / (R + model.delta) ** 2
    return ion, surface, outer


def threshold_energy_parts(r: float, delta: float, q: float, e: float) -> tuple[float, float]:
    """(closed form, adaptive quadrature) of -qe int_r^{r+delta} integrand dR.

    The antiderivative -1/(R+d) + c/R, c = (r+d)^2/(r+2d)^2, evaluated at both
    limits simplifies to d^3 / (r (r+d) (r+2d)^2), free of cancellation.
    """
    d = delta
    closed = q * e * d**3 / (r * (r + d) * (r + 2.0 * d) ** 2)
    val, _ = quad(_offset_integrand, 0.0, d, args=(r, d), epsabs=0.0, epsrel=1e-13, limit=200)
    return closed, -q * e * val


def threshold_energy(r: float, delta: float, q: float = 1.0, e: float = 1.0) -> float:
    """Minimal photon energy estimate for ejecting the pair."""
    closed, numeric = threshold_energy_parts(r, delta, q, e)
    if abs(closed - numeric) > 1e-10 * abs(closed):
        raise ArithmeticError("closed form and quadrature disagree")
    return closed


def threshold_energy_antiderivative(r: float, delta: float, q: float = 1.0, e: float = 1.0) -> float:
    """Same integral through the raw antiderivative (loses digits for r >> delta)."""
    d = delta
    c = ((r + d) / (r + 2.0 * d)) ** 2

    def F(R):
        return -1.0 / (R + d) + c / R

    return -q * e * (F(r + d) - F(r))


def threshold_scaling(r_values, delta: float, q: float = 1.0, e: float = 1.0) -> float:
    """Least-squares slope of log E_min against log r at fixed delta."""
    r = np.asarray(r_values, dtype=float)
    E = np.array([threshold_energy(x, delta, q, e) for x in r])
    slope, _ = np.polyfit(np.log(r), np.log(E), 1)
    return float(slope)


def joint_scaling(r_values, ratio: float, q: float = 1.0, e: float = 1.0) -> float:
    """Slope of log E_min against log r with delta/r held fixed (expected -1)."""
    r = np.asarray(r_values, dtype=float)
    E = np.array([threshold_energy(x, ratio * x, q, e) for x in r])
    slope, _ = np.polyfit(np.log(r), np.log(E), 1)
    return float(slope)


def pair_distribution(r: float, delta: float, t: float, q_hat: float, Q: float) -> ChargeDistribution:
    """Uniform volume Q, surface t*q_hat at r and (1-t)*q_hat at r+delta."""
    if not 0.0 <= t <= 1.0:
        raise TOutOfRange(f"t={t} is not in [0, 1]")
    return ChargeDistribution(
        (
            VolumeShell(0.0, r, Q),
            SurfaceSphere(r, t * q_hat),
            SurfaceSphere(r + delta, (1.0 - t) * q_hat),
        )
    )


def force_scan(model: PairModel, n: int = 100) -> np.ndarray:
    """Restoring force at ``n`` interior points of (r, r + delta)."""
    R = model.r + model.delta * (np.arange(1, n + 1) / (n + 1))
    return np.array([restoring_force(x, model) for x in R])


def pair_force_table(model: PairModel, n: int = 21) -> str:
    """CSV rows (R, F_total, ion, surface, outer) across [r, r + delta]."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["R", "F_total", "ion", "surface", "outer"])
    for R in np.linspace(model.r, model.r + model.delta, n):
        ion, surf, outer = pair_total_force_components(float(R), model)
        total = restoring_force(float(R), model)
        w.writerow([f"{v:.12g}" for v in (R, total, ion, surf, outer)])
    return buf.getvalue()
