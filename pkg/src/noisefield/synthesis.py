"""Stochastic-field synthesis from a reference trajectory.

The random phase is ``Phi(t, z) = sigma(t) * z`` with ``z`` standard normal,
so a whole ensemble of noise histories is indexed by one scalar. For each
``(t, z)`` the pure state ``(a, b)`` with

    a = sqrt(rho00),   b = sqrt(rho11) * exp(i theta(t)) * exp(i sigma(t) z)

reproduces ``rho(t)`` on average, where ``theta`` is the continuous
coherence phase and ``sigma^2 = -2 ln(|rho10| / sqrt(rho00 rho11))``.
The field driving it is

    Bz = Re[i (a' a* + b'* b)],   B+ = -i (a'* b - b' a*),   B+ = Bx + i By.

Quantities that do not depend on ``z`` (``a``, ``|b|``, ``theta``, ``sigma``
and their rates) are bundled in :class:`Ingredients` so a whole ensemble
shares one evaluation of the trajectory.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .channels import ReferenceTrajectory
from .errors import DomainError, ResolutionError, SingularityError
from .kernels import field_arrays
from .qubit import PureQubitState, validate_arrays

DEFAULT_SIGMA_SQ_MAX = 80.0
# below the knee the variance is used unmodified
KNEE_HEADROOM = 30.0
_TINY = 1e-300

FIELD_CSV_HEADER = ("path_id", "z", "t", "Bx", "By", "Bz")


def default_knee(sigma_sq_max: float) -> float:
    return max(0.5 * sigma_sq_max, sigma_sq_max - KNEE_HEADROOM)


def saturate(s2, ds2, sigma_sq_max=DEFAULT_SIGMA_SQ_MAX, knee=None):
    """Cap a variance smoothly at ``sigma_sq_max``.

    Identity up to ``knee``; above it a tanh tail with matching first and
    second derivatives. ``inf`` maps to ``sigma_sq_max``.
    """
    knee = default_knee(sigma_sq_max) if knee is None else knee
    s2 = np.array(s2, dtype=float, copy=True)
    ds2 = np.array(ds2, dtype=float, copy=True)
    neg = s2 < 0
    s2[neg] = 0.0
    ds2[neg] = 0.0
    width = sigma_sq_max - knee
    over = s2 > knee
    if np.any(over):
        u = (s2[over] - knee) / width
        th = np.tanh(u)
        s2[over] = knee + width * th
        with np.errstate(invalid="ignore"):
            d = ds2[over] * (1.0 - th * th)
        d[~np.isfinite(u)] = 0.0
        ds2[over] = d
    return s2, ds2


def phase_characteristic(sigma_sq: float) -> float:
    """Ensemble mean of ``exp(i Phi)`` for a zero-mean Gaussian phase."""
    if sigma_sq < 0:
        raise DomainError("sigma_sq must be >= 0")
    return math.exp(-0.5 * sigma_sq)


class Ingredients(NamedTuple):
    t: np.ndarray
    a: np.ndarray
    da: np.ndarray
    bm: np.ndarray
    dbm: np.ndarray
    theta: np.ndarray
    dtheta: np.ndarray
    sigma: np.ndarray
    dsigma: np.ndarray


@dataclass(frozen=True)
class FieldSample:
    t: float
    Bx: float
    By: float
    Bz: float
    imag_residue: float = 0.0

    @property
    def magnitude(self) -> float:
        return math.sqrt(self.Bx**2 + self.By**2 + self.Bz**2)


@dataclass(frozen=True)
class AmplitudePair:
    a: complex
    b: complex
    da_dt: complex
    db_dt: complex


@dataclass(frozen=True)
class PathDraw:
    z: float
    weight: float
    path_id: int


def _wrap(x):
    return (np.asarray(x) + np.pi) % (2.0 * np.pi) - np.pi


def _generic_phase_rates(traj: ReferenceTrajectory, t):
    _, _, r10 = traj.components(t)
    _, _, d10 = traj.derivatives(t)
    mod2 = np.abs(r10) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.where(mod2 > _TINY, (d10 * np.conj(r10)).imag / mod2, 0.0)
    return r10, rate


def unwrap_arg(traj: ReferenceTrajectory, grid) -> np.ndarray:
    """Continuous coherence phase on ``grid``.

    Agrees with ``Arg(rho10)`` modulo 2*pi. Where ``rho10`` vanishes the
    last defined value is held (0 before any defined value). Adjacent
    samples are connected by the branch closest to the trapezoid estimate
    of the phase rate; a predicted jump of pi or more, or
    samples inconsistent with the rate, raise :class:`ResolutionError`.
    """
    grid = np.asarray(grid, dtype=float)
    closed = traj.closed_form_phase(grid)
    if closed is not None:
        return closed[0]
    r10, rate = _generic_phase_rates(traj, grid)
    defined = np.abs(r10) > _TINY
    theta = np.zeros_like(grid)
    if not np.any(defined):
        return theta
    idx = np.flatnonzero(defined)
    wrapped = np.angle(r10[idx])
    if idx.size > 1:
        dt = np.diff(grid[idx])
        predicted = 0.5 * (rate[idx][1:] + rate[idx][:-1]) * dt
        bad = np.abs(predicted) >= np.pi
        if np.any(bad):
            k = int(idx[1:][np.argmax(bad)])
            raise ResolutionError(
                f"coherence phase advances by >= pi between samples near t = {grid[k]:.6g}; "
                "use a finer grid"
            )
        step = np.diff(wrapped)
        step += 2.0 * np.pi * np.round((predicted - step) / (2.0 * np.pi))
        # a well-resolved phase agrees with its rate estimate to O(h^3)
        off = np.abs(step - predicted) > 0.5 * np.pi
        if np.any(off):
            k = int(idx[1:][np.argmax(off)])
            raise ResolutionError(
                f"coherence phase samples disagree with their rate near t = {grid[k]:.6g}; "
                "use a finer grid"
            )
        cont = np.concatenate([[wrapped[0]], wrapped[0] + np.cumsum(step)])
    else:
        cont = wrapped
    theta[idx] = cont
    # hold last defined value forward; leading undefined entries stay 0
    fill = np.maximum.accumulate(np.where(defined, np.arange(grid.size), -1))
    held = fill >= 0
    theta[held] = theta[fill[held]]
    return theta


class PhaseProcess:
    """Gaussian phase ``sigma(t) * z`` attached to a reference trajectory."""

    def __init__(self, traj: ReferenceTrajectory, sigma_sq_max: float = DEFAULT_SIGMA_SQ_MAX,
                 knee: float | None = None, table_grid=None):
        if not sigma_sq_max > 0:
            raise DomainError("sigma_sq_max must be positive")
        self.traj = traj
        self.sigma_sq_max = float(sigma_sq_max)
        self.knee = default_knee(self.sigma_sq_max) if knee is None else float(knee)
        if not 0 < self.knee < self.sigma_sq_max:
            raise DomainError("knee must lie in (0, sigma_sq_max)")
        self.t_i = traj.t_i
        self._generic = traj.closed_form_phase(np.array([traj.t_i])) is None
        if self._generic:
            if table_grid is None:
                table_grid = getattr(traj, "t", None)
            if table_grid is None:
                raise DomainError("trajectory without closed-form phase needs a table grid")
            self._grid = np.asarray(table_grid, dtype=float)
            self._theta = unwrap_arg(traj, self._grid)
            self._s2_table = self._fill_degenerate(*self._generic_s2(self._grid)[:2])

    # --- raw variance and phase ------------------------------------------

    def _generic_s2(self, t):
        r00, r11, r10 = self.traj.components(t)
        d00, d11, d10 = self.traj.derivatives(t)
        pop = r00 * r11
        mod2 = np.abs(r10) ** 2
        degenerate = pop <= _TINY
        with np.errstate(divide="ignore", invalid="ignore"):
            s2 = np.log(np.where(degenerate, 1.0, pop)) - np.log(np.where(mod2 > _TINY, mod2, 1.0))
            s2 = np.where(mod2 > _TINY, s2, np.inf)
            ds2 = d00 / r00 + d11 / r11 - 2.0 * (d10 * np.conj(r10)).real / mod2
            ds2 = np.where(np.isfinite(s2) & ~degenerate, ds2, 0.0)
        s2 = np.where(degenerate, np.nan, s2)
        return s2, ds2, degenerate

    @staticmethod
    def _fill_degenerate(s2, ds2):
        s2 = s2.copy()
        bad = np.isnan(s2)
        if np.all(bad):
            s2[:] = 0.0
        elif np.any(bad):
            good = np.flatnonzero(~bad)
            s2[bad] = np.interp(np.flatnonzero(bad), good, s2[good])
        return s2

    def _generic_theta(self, t):
        r10, rate = _generic_phase_rates(self.traj, t)
        k = np.clip(np.searchsorted(self._grid, t) , 0, self._grid.size - 1)
        km = np.clip(k - 1, 0, self._grid.size - 1)
        k = np.where(np.abs(self._grid[km] - t) <= np.abs(self._grid[k] - t), km, k)
        base = self._theta[k]
        defined = np.abs(r10) > _TINY
        theta = np.where(defined, base + _wrap(np.angle(r10) - base), base)
        return theta, rate

    def raw(self, t):
        """``(theta, dtheta, sigma_sq_raw, dsigma_sq_raw)`` before saturation."""
        t = np.asarray(t, dtype=float)
        if not self._generic:
            return self.traj.closed_form_phase(t)
        theta, dtheta = self._generic_theta(t)
        s2, ds2, degenerate = self._generic_s2(t)
        if np.any(degenerate):
            s2[degenerate] = np.interp(t[degenerate], self._grid, self._s2_table)
            slope = np.gradient(self._s2_table, self._grid)
            ds2[degenerate] = np.interp(t[degenerate], self._grid, slope)
        return theta, dtheta, s2, ds2

    def sigma_sq(self, t):
        _, _, s2, ds2 = self.raw(t)
        return saturate(s2, ds2, self.sigma_sq_max, self.knee)

    def _rate_limit(self, t):
        """One-sided ``lim sigma(s)/(s - t)`` where sigma vanishes smoothly."""
        span = self.traj.t_f - self.traj.t_i
        scale = span if math.isfinite(span) and span > 0 else 1.0
        h = 1e-6 * scale
        s1, _ = self.sigma_sq(t + h)
        s2, _ = self.sigma_sq(t + 0.5 * h)
        return 2.0 * np.sqrt(s2) / (0.5 * h) - np.sqrt(s1) / h

    def sigma(self, t):
        """``(sigma, dsigma/dt)``; the rate is ``inf`` where ``sigma ~ sqrt(t)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        s2, ds2 = self.sigma_sq(t)
        sig = np.sqrt(s2)
        with np.errstate(divide="ignore", invalid="ignore"):
            dsig = ds2 / (2.0 * sig)
        zero = sig == 0.0
        if np.any(zero):
            dsig[zero & (ds2 > 0)] = np.inf
            flat = zero & (ds2 == 0)
            if np.any(flat):
                dsig[flat] = self._rate_limit(t[flat])
        return sig, dsig

    def ingredients(self, t) -> Ingredients:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        r00, r11, _ = self.traj.components(t)
        d00, d11, _ = self.traj.derivatives(t)
        theta, dtheta, _, _ = self.raw(t)
        sig, dsig = self.sigma(t)
        a = np.sqrt(np.clip(r00, 0.0, None))
        bm = np.sqrt(np.clip(r11, 0.0, None))
        with np.errstate(divide="ignore", invalid="ignore"):
            da = np.where(d00 == 0, 0.0, d00 / (2.0 * a))
            dbm = np.where(d11 == 0, 0.0, d11 / (2.0 * bm))
        return Ingredients(t, a, da, bm, dbm, theta, dtheta, sig, dsig)

    @property
    def initial_sigma(self) -> float:
        return float(self.sigma(self.t_i)[0][0])

    @property
    def pure_start(self) -> bool:
        r00, r11, _ = self.traj.components(np.array([self.t_i]))
        return self.initial_sigma == 0.0 or r00[0] * r11[0] == 0.0


def as_process(obj, sigma_sq_max: float = DEFAULT_SIGMA_SQ_MAX) -> PhaseProcess:
    if isinstance(obj, PhaseProcess):
        return obj
    return PhaseProcess(obj, sigma_sq_max=sigma_sq_max)


def _check_valid(proc: PhaseProcess, t):
    report = validate_arrays(*proc.traj.components(np.atleast_1d(t)), tol=proc.traj.validity_tol)
    if not report.passed:
        raise DomainError(f"trajectory invalid at t = {t}: {report.failures()}")


def sigma_squared(traj, t, sigma_sq_max: float = DEFAULT_SIGMA_SQ_MAX) -> float:
    """Saturated phase variance at time ``t``."""
    proc = as_process(traj, sigma_sq_max)
    _check_valid(proc, t)
    s2, _ = proc.sigma_sq(np.array([float(t)]))
    return float(s2[0])


def _state_arrays(ing: Ingredients, z):
    phase = ing.theta + ing.sigma * z
    e = np.exp(1j * phase)
    b = ing.bm * e
    db = (ing.dbm + 1j * ing.bm * (ing.dtheta + ing.dsigma * z)) * e
    return ing.a + 0j, b, ing.da + 0j, db


def amplitudes(traj, t, z, sigma_sq_max: float = DEFAULT_SIGMA_SQ_MAX) -> AmplitudePair:
    proc = as_process(traj, sigma_sq_max)
    _check_valid(proc, t)
    ing = proc.ingredients(float(t))
    a, b, da, db = (complex(v[0]) for v in _state_arrays(ing, float(z)))
    return AmplitudePair(a, b, da, db)


def analytic_state(traj, t, z, sigma_sq_max: float = DEFAULT_SIGMA_SQ_MAX) -> PureQubitState:
    proc = as_process(traj, sigma_sq_max)
    ing = proc.ingredients(float(t))
    phase = ing.theta[0] + ing.sigma[0] * float(z)
    return PureQubitState(complex(ing.a[0]), complex(ing.bm[0] * np.exp(1j * phase)))


def analytic_states(proc: PhaseProcess, grid, z) -> np.ndarray:
    """States for every ``(z, t)`` pair as an array of shape ``(len(z), len(grid), 2)``."""
    ing = proc.ingredients(np.asarray(grid, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))[:, None]
    out = np.empty((z.shape[0], ing.t.size, 2), dtype=complex)
    out[:, :, 0] = ing.a[None, :]
    out[:, :, 1] = ing.bm[None, :] * np.exp(1j * (ing.theta[None, :] + ing.sigma[None, :] * z))
    return out


def field_grid(proc: PhaseProcess, times, z):
    """Field components on the outer product of ``z`` (rows) and ``times``.

    Returns ``(Bx, By, Bz, residue)`` arrays of shape ``(len(z), len(times))``;
    ``residue`` is the imaginary part of ``i (a' a* + b'* b)`` discarded
    when projecting ``Bz`` to the reals.
    """
    ing = proc.ingredients(np.asarray(times, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))[:, None]
    cols = [np.broadcast_to(v[None, :], (z.shape[0], v.size)) for v in ing[1:]]
    bx, by, bz, res = field_arrays(*cols, z)
    bad = ~(np.isfinite(bx) & np.isfinite(by) & np.isfinite(bz))
    if np.any(bad):
        p, k = np.argwhere(bad)[0]
        raise SingularityError(
            f"non-finite field at t = {ing.t[k]:.6g} (z = {float(z[p, 0]):.6g})",
            t=float(ing.t[k]), path_id=int(p),
        )
    return bx, by, bz, res


def field(traj, t, z, sigma_sq_max: float = DEFAULT_SIGMA_SQ_MAX) -> FieldSample:
    proc = as_process(traj, sigma_sq_max)
    _check_valid(proc, t)
    bx, by, bz, res = field_grid(proc, [float(t)], [float(z)])
    return FieldSample(float(t), float(bx[0, 0]), float(by[0, 0]), float(bz[0, 0]), float(res[0, 0]))


def write_field_csv(path, draws: Iterable[PathDraw], times, bx, by, bz) -> None:
    """Field traces in ``path_id,z,t,Bx,By,Bz`` rows, one group per path."""
    times = np.asarray(times, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FIELD_CSV_HEADER)
        for p, d in enumerate(draws):
            for k, t in enumerate(times):
                w.writerow([d.path_id, repr(float(d.z)), repr(float(t)),
                            repr(float(bx[p, k]) + 0.0), repr(float(by[p, k]) + 0.0), repr(float(bz[p, k]) + 0.0)])
