"""Reference single-qubit trajectories rho(t).

Three closed-form families are built in: a finite spin-boson bath at zero
temperature (``recurrence``), an ohmic bath at finite temperature
(``ohmic``) and amplitude damping. Arbitrary trajectories can be supplied
as a uniformly sampled CSV table (``tabulated``) and are interpolated with
natural cubic splines.

Every trajectory exposes vectorized ``components(t)`` and
``derivatives(t)`` returning ``(rho00, rho11, rho10)`` arrays. Closed-form
families additionally provide their coherence phase and raw phase variance
analytically so synthesis does not have to differentiate numerically.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from .errors import DomainError, InvalidRowError, LoadError, TimeRangeError
from .qubit import QubitDensityMatrix, validate_arrays

CSV_HEADER = ("t", "rho00", "rho11", "re_rho10", "im_rho10")
CLOSED_FORM_TOL = 1e-10
INTERPOLATED_TOL = 1e-8


@dataclass(frozen=True)
class InitialPureState:
    alpha: complex
    beta: complex

    def __post_init__(self):
        norm = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise DomainError(f"initial state not normalized: |alpha|^2+|beta|^2 = {norm!r}")

    @classmethod
    def normalized(cls, alpha, beta) -> "InitialPureState":
        n = math.sqrt(abs(alpha) ** 2 + abs(beta) ** 2)
        if n == 0:
            raise DomainError("zero vector is not a state")
        return cls(complex(alpha) / n, complex(beta) / n)

    def density(self) -> QubitDensityMatrix:
        a, b = complex(self.alpha), complex(self.beta)
        return QubitDensityMatrix(abs(a) ** 2, abs(b) ** 2, a.conjugate() * b)


@dataclass(frozen=True)
class RecurrenceParams:
    omega0: float = 0.0
    N: int = 30
    P: float = 1.0
    couplings: Optional[tuple] = None

    def __post_init__(self):
        if self.N < 1:
            raise DomainError("N must be >= 1")
        if not self.P > 0:
            raise DomainError("P must be positive")
        if self.couplings is not None and len(self.couplings) != self.N:
            raise DomainError("need exactly N couplings")

    @property
    def frequencies(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(1, self.N + 1) / self.P

    @property
    def coupling_moduli(self) -> np.ndarray:
        if self.couplings is None:
            return self.frequencies
        return np.abs(np.asarray(self.couplings, dtype=complex))


@dataclass(frozen=True)
class OhmicParams:
    J0: float
    Lambda: float
    kBT: float
    omega0: float = 0.0

    def __post_init__(self):
        if self.J0 < 0 or not self.Lambda > 0 or not self.kBT > 0:
            raise DomainError("require J0 >= 0, Lambda > 0, kBT > 0")


@dataclass(frozen=True)
class AmplitudeDampingParams:
    """Decay probability ``gamma(t)``: ``1 - exp(-t/T1)`` or a table.

    A table is given as ``gamma_t``/``gamma_values`` and interpolated with a
    monotone cubic (PCHIP) so the interpolant stays inside ``[0, 1]``.
    """

    T1: Optional[float] = 1.0
    gamma_t: Optional[tuple] = None
    gamma_values: Optional[tuple] = None

    def __post_init__(self):
        if self.gamma_t is None:
            if self.T1 is None or not self.T1 > 0:
                raise DomainError("T1 must be positive")
            return
        t = np.asarray(self.gamma_t, dtype=float)
        g = np.asarray(self.gamma_values, dtype=float)
        if t.shape != g.shape or t.size < 2:
            raise DomainError("gamma table needs matching t and gamma arrays of length >= 2")
        if np.any(np.diff(t) <= 0):
            raise DomainError("gamma table times must be strictly increasing")
        if abs(g[0]) > 0 or np.any(np.diff(g) < 0) or g.min() < 0 or g.max() > 1:
            raise DomainError("tabulated gamma must start at 0, be non-decreasing and stay in [0, 1]")

    def _interp(self):
        return PchipInterpolator(np.asarray(self.gamma_t, float), np.asarray(self.gamma_values, float))

    def gamma(self, t):
        t = np.asarray(t, dtype=float)
        if self.gamma_t is None:
            return -np.expm1(-t / self.T1)
        return np.clip(self._interp()(t), 0.0, 1.0)

    def dgamma(self, t):
        t = np.asarray(t, dtype=float)
        if self.gamma_t is None:
            return np.exp(-t / self.T1) / self.T1
        return self._interp().derivative()(t)

    @property
    def t_max(self) -> float:
        return math.inf if self.gamma_t is None else float(self.gamma_t[-1])


# --- decoherence functions ---------------------------------------------------


def gamma_recurrence(t, p: RecurrenceParams):
    """``sum_n 4|g_n|^2/w_n^2 (1 - cos w_n t)``, written with sin^2 for accuracy."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for w, g in zip(p.frequencies, p.coupling_moduli):
        out += 8.0 * (g / w) ** 2 * np.sin(0.5 * w * t) ** 2
    return out if out.ndim else float(out)


def dgamma_recurrence(t, p: RecurrenceParams):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for w, g in zip(p.frequencies, p.coupling_moduli):
        out += 4.0 * g * g / w * np.sin(w * t)
    return out if out.ndim else float(out)


_SINHC_TERMS = 12
_INV_ODD_FACT = np.array([1.0 / math.factorial(2 * k + 1) for k in range(1, _SINHC_TERMS + 1)])


def log_sinhc(x):
    """``ln(sinh(x)/x)`` for ``x >= 0`` without cancellation or overflow."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 1.0
    large = x > 20.0
    mid = ~small & ~large
    xs = x[small]
    x2 = xs * xs
    # sinh(x)/x - 1 = sum_k x^{2k}/(2k+1)!, all terms positive
    acc = np.zeros_like(xs)
    for c in _INV_ODD_FACT[::-1]:
        acc = (acc + c) * x2
    out[small] = np.log1p(acc)
    xm = x[mid]
    out[mid] = np.log(np.sinh(xm) / xm)
    xl = x[large]
    out[large] = xl + np.log1p(-np.exp(-2.0 * xl)) - math.log(2.0) - np.log(xl)
    return out


def dlog_sinhc(x):
    """Derivative of :func:`log_sinhc`, i.e. ``coth(x) - 1/x``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 1.0
    xs = x[small]
    x2 = xs * xs
    s = np.zeros_like(xs)
    ds = np.zeros_like(xs)
    for k in range(_SINHC_TERMS, 0, -1):
        c = _INV_ODD_FACT[k - 1]
        s = s * x2 + c
        ds = ds * x2 + 2 * k * c
    # s ~ sum c_k x^{2k-2}, ds ~ sum 2k c_k x^{2k-2}
    out[small] = xs * ds / (1.0 + x2 * s)
    xl = x[~small]
    out[~small] = 1.0 / np.tanh(xl) - 1.0 / xl
    return out


def gamma_ohmic(t, p: OhmicParams):
    t = np.asarray(t, dtype=float)
    x = math.pi * p.kBT * t
    g = 0.5 * p.J0 * np.log1p((p.Lambda * t) ** 2) + p.J0 * log_sinhc(np.abs(x))
    return g if g.ndim else float(g)


def dgamma_ohmic(t, p: OhmicParams):
    t = np.asarray(t, dtype=float)
    lt = p.Lambda * t
    x = math.pi * p.kBT * t
    d = p.J0 * p.Lambda * lt / (1.0 + lt * lt) + p.J0 * math.pi * p.kBT * dlog_sinhc(x)
    return d if d.ndim else float(d)


# --- closed-form density matrices -------------------------------------------


def rho_dephasing(t, Gamma, omega0, psi_i: InitialPureState) -> QubitDensityMatrix:
    if Gamma < 0:
        raise DomainError("Gamma must be >= 0")
    a, b = complex(psi_i.alpha), complex(psi_i.beta)
    rho10 = a.conjugate() * b * complex(math.cos(omega0 * t), math.sin(omega0 * t)) * math.exp(-Gamma)
    return QubitDensityMatrix(abs(a) ** 2, abs(b) ** 2, rho10)


def rho_amplitude_damping(t, p: AmplitudeDampingParams, psi_i: InitialPureState) -> QubitDensityMatrix:
    g = float(p.gamma(t))
    return _amplitude_damping_matrix(g, psi_i)


def _amplitude_damping_matrix(gamma: float, psi_i: InitialPureState) -> QubitDensityMatrix:
    if not 0.0 <= gamma <= 1.0:
        raise DomainError(f"gamma = {gamma!r} outside [0, 1]")
    a, b = complex(psi_i.alpha), complex(psi_i.beta)
    pa = abs(a) ** 2
    return QubitDensityMatrix(
        1.0 - (1.0 - gamma) * (1.0 - pa),
        abs(b) ** 2 * (1.0 - gamma),
        a.conjugate() * b * math.sqrt(1.0 - gamma),
    )


# --- trajectories ------------------------------------------------------------


class ReferenceTrajectory:
    """Base class; subclasses implement ``components`` and ``derivatives``."""

    kind = "abstract"
    t_i = 0.0
    t_f = math.inf
    validity_tol = CLOSED_FORM_TOL

    def components(self, t):
        raise NotImplementedError

    def derivatives(self, t):
        raise NotImplementedError

    def closed_form_phase(self, t):
        """``(theta, dtheta, sigma_sq_raw, dsigma_sq_raw)`` or ``None``."""
        return None

    @property
    def initial_density(self) -> QubitDensityMatrix:
        return self.evaluate(self.t_i)

    def check_domain(self, t):
        t = np.asarray(t, dtype=float)
        span = max(1.0, abs(self.t_i), abs(self.t_f) if math.isfinite(self.t_f) else 1.0)
        slack = 1e-12 * span
        if np.any(~np.isfinite(t)) or np.any(t < self.t_i - slack) or np.any(t > self.t_f + slack):
            raise TimeRangeError(
                f"time outside trajectory domain [{self.t_i}, {self.t_f}]"
            )
        return np.clip(t, self.t_i, self.t_f)

    def evaluate(self, t) -> QubitDensityMatrix:
        r00, r11, r10 = self.components(np.array([float(t)]))
        return QubitDensityMatrix(float(r00[0]), float(r11[0]), complex(r10[0]))

    def validate(self, grid, tol=None):
        tol = self.validity_tol if tol is None else tol
        return validate_arrays(*self.components(np.asarray(grid, float)), tol=tol)

    def describe(self) -> dict:
        return {"kind": self.kind}


class _DephasingTrajectory(ReferenceTrajectory):
    """Pure dephasing with populations fixed by the initial state."""

    def __init__(self, psi_i: InitialPureState, omega0: float):
        self.psi_i = psi_i
        self.omega0 = float(omega0)
        a, b = complex(psi_i.alpha), complex(psi_i.beta)
        self._c = a.conjugate() * b
        self._p0 = abs(a) ** 2
        self._p1 = abs(b) ** 2

    def gamma(self, t):
        raise NotImplementedError

    def dgamma(self, t):
        raise NotImplementedError

    def components(self, t):
        t = self.check_domain(t)
        rho10 = self._c * np.exp(1j * self.omega0 * t - self.gamma(t))
        return np.full_like(t, self._p0), np.full_like(t, self._p1), rho10

    def derivatives(self, t):
        t = self.check_domain(t)
        _, _, rho10 = self.components(t)
        z = np.zeros_like(t)
        return z, z.copy(), rho10 * (1j * self.omega0 - self.dgamma(t))

    def closed_form_phase(self, t):
        t = self.check_domain(t)
        theta = np.angle(self._c) + self.omega0 * t
        dtheta = np.full_like(t, self.omega0)
        if self._c == 0:
            s2 = np.full_like(t, np.inf)
            return theta, dtheta, s2, np.zeros_like(t)
        return theta, dtheta, 2.0 * self.gamma(t), 2.0 * self.dgamma(t)


class RecurrenceTrajectory(_DephasingTrajectory):
    kind = "recurrence"

    def __init__(self, params: RecurrenceParams, psi_i: InitialPureState):
        super().__init__(psi_i, params.omega0)
        self.params = params

    def gamma(self, t):
        return np.asarray(gamma_recurrence(t, self.params))

    def dgamma(self, t):
        return np.asarray(dgamma_recurrence(t, self.params))

    def describe(self):
        p = self.params
        return {"kind": self.kind, "omega0": p.omega0, "N": p.N, "P": p.P}


class OhmicTrajectory(_DephasingTrajectory):
    kind = "ohmic"

    def __init__(self, params: OhmicParams, psi_i: InitialPureState):
        super().__init__(psi_i, params.omega0)
        self.params = params

    def gamma(self, t):
        return np.asarray(gamma_ohmic(t, self.params))

    def dgamma(self, t):
        return np.asarray(dgamma_ohmic(t, self.params))

    def describe(self):
        p = self.params
        return {"kind": self.kind, "J0": p.J0, "Lambda": p.Lambda, "kBT": p.kBT, "omega0": p.omega0}


class AmplitudeDampingTrajectory(ReferenceTrajectory):
    kind = "amplitude-damping"

    def __init__(self, params: AmplitudeDampingParams, psi_i: InitialPureState):
        self.params = params
        self.psi_i = psi_i
        self.t_f = params.t_max
        a, b = complex(psi_i.alpha), complex(psi_i.beta)
        self._c = a.conjugate() * b
        self._pa = abs(a) ** 2
        self._pb = abs(b) ** 2

    def components(self, t):
        t = self.check_domain(t)
        g = self.params.gamma(t)
        keep = 1.0 - g
        return 1.0 - keep * self._pb, self._pb * keep, self._c * np.sqrt(keep)

    def derivatives(self, t):
        t = self.check_domain(t)
        g = self.params.gamma(t)
        dg = self.params.dgamma(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            d10 = np.where(self._c == 0, 0j, -self._c * dg / (2.0 * np.sqrt(1.0 - g)))
        return self._pb * dg, -self._pb * dg, d10

    def closed_form_phase(self, t):
        t = self.check_domain(t)
        theta = np.full_like(t, np.angle(self._c))
        dtheta = np.zeros_like(t)
        if self._c == 0:
            return theta, dtheta, np.full_like(t, np.inf), np.zeros_like(t)
        g = self.params.gamma(t)
        ratio = self._pb / self._pa
        # |rho10|^2 / (rho00 rho11) = |alpha|^2 / rho00 = 1 / (1 + gamma |beta|^2/|alpha|^2)
        s2 = np.log1p(g * ratio)
        ds2 = self.params.dgamma(t) * ratio / (1.0 + g * ratio)
        return theta, dtheta, s2, ds2

    def describe(self):
        p = self.params
        d = {"kind": self.kind}
        if p.gamma_t is None:
            d["T1"] = p.T1
        else:
            d["gamma_table_points"] = len(p.gamma_t)
        return d


class TabulatedTrajectory(ReferenceTrajectory):
    """Spline interpolation of a uniformly sampled trajectory."""

    kind = "tabulated"
    validity_tol = INTERPOLATED_TOL

    def __init__(self, t, rho00, rho10, source: str | None = None, tol: float = 1e-12):
        t = np.asarray(t, dtype=float)
        rho00 = np.asarray(rho00, dtype=float)
        rho10 = np.asarray(rho10, dtype=complex)
        if t.ndim != 1 or t.size < 4:
            raise LoadError("need at least 4 samples")
        dt = np.diff(t)
        if np.any(dt <= 0):
            raise LoadError("times must be strictly increasing", row=int(np.argmin(dt)) + 2)
        h = (t[-1] - t[0]) / (t.size - 1)
        bad = np.abs(dt - h) > 1e-9 * max(h, abs(t[-1]))
        if np.any(bad):
            raise LoadError("time grid is not uniform", row=int(np.argmax(bad)) + 2)
        self.t = t
        self.h = h
        self.rho00 = rho00
        self.rho10 = rho10
        self.source = source
        self.t_i = float(t[0])
        self.t_f = float(t[-1])
        self._s00 = CubicSpline(t, rho00, bc_type="natural")
        self._sre = CubicSpline(t, rho10.real, bc_type="natural")
        self._sim = CubicSpline(t, rho10.imag, bc_type="natural")
        self._d00 = self._s00.derivative()
        self._dre = self._sre.derivative()
        self._dim = self._sim.derivative()

    def components(self, t):
        t = self.check_domain(t)
        r00 = self._s00(t)
        return r00, 1.0 - r00, self._sre(t) + 1j * self._sim(t)

    def derivatives(self, t):
        t = self.check_domain(t)
        d00 = self._d00(t)
        return d00, -d00, self._dre(t) + 1j * self._dim(t)

    def describe(self):
        return {"kind": self.kind, "source": self.source, "points": int(self.t.size)}


def evaluate(traj: ReferenceTrajectory, t: float) -> QubitDensityMatrix:
    return traj.evaluate(t)


# --- CSV I/O -----------------------------------------------------------------


def dump_tabulated(traj: ReferenceTrajectory, grid, path) -> None:
    """Write ``traj`` sampled on ``grid`` in the trajectory CSV schema."""
    grid = np.asarray(grid, dtype=float)
    r00, r11, r10 = traj.components(grid)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for row in zip(grid, r00, r11, r10.real, r10.imag):
            w.writerow([repr(float(v)) for v in row])


def _parse_rows(lines: Sequence[str], source: str):
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise LoadError(f"{source}: empty file", row=0)
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise LoadError(f"{source}: header must be {','.join(CSV_HEADER)}", row=0)
    rows = []
    for i, rec in enumerate(reader, start=1):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != len(CSV_HEADER):
            raise LoadError(f"{source}: row {i}: expected {len(CSV_HEADER)} fields, got {len(rec)}", row=i)
        try:
            vals = [float(f) for f in rec]
        except ValueError as exc:
            raise LoadError(f"{source}: row {i}: {exc}", row=i) from None
        if not all(math.isfinite(v) for v in vals):
            raise LoadError(f"{source}: row {i}: non-finite value", row=i)
        rows.append(vals)
    return np.array(rows, dtype=float).reshape(-1, len(CSV_HEADER))


def load_tabulated(source, tol: float = 1e-12) -> TabulatedTrajectory:
    """Read a trajectory CSV; every row must be a valid density matrix.

    Row numbers in errors count data rows from 1 (the header is row 0).
    """
    if isinstance(source, io.TextIOBase):
        lines, name = source.read().splitlines(), getattr(source, "name", "<stream>")
    else:
        path = Path(source)
        try:
            lines, name = path.read_text().splitlines(), str(path)
        except OSError as exc:
            raise LoadError(f"cannot read {path}: {exc}") from None
    data = _parse_rows(lines, name)
    if data.shape[0] < 4:
        raise LoadError(f"{name}: need at least 4 rows, got {data.shape[0]}")
    t, r00, r11, re10, im10 = data.T
    report = validate_arrays(r00, r11, re10 + 1j * im10, tol=tol)
    if not report.passed:
        which = report.failures()[0]
        row = report.index[which] + 1
        raise InvalidRowError(f"{name}: row {row}: invalid density matrix ({which} violated)", row=row)
    return TabulatedTrajectory(t, r00, re10 + 1j * im10, source=name)
