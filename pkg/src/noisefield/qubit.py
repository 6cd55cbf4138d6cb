"""Two-level density matrices, pure states and exact SU(2) steps.

Conventions: basis ordering is (|0>, |1>); only ``rho10`` is stored and
``rho01 = conj(rho10)``. The Bloch vector is ``nx = 2 Re rho10``,
``ny = 2 Im rho10``, ``nz = rho00 - rho11``. The Hamiltonian generated by a
field ``(Bx, By, Bz)`` is ``Bx*sx + By*sy + Bz*sz`` (no factor 1/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class QubitDensityMatrix:
    rho00: float
    rho11: float
    rho10: complex = 0j

    @property
    def rho01(self) -> complex:
        return complex(self.rho10).conjugate()

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.rho00, self.rho01], [self.rho10, self.rho11]], dtype=complex
        )

    @classmethod
    def from_matrix(cls, m) -> "QubitDensityMatrix":
        m = np.asarray(m, dtype=complex)
        if m.shape != (2, 2):
            raise DomainError(f"expected a 2x2 matrix, got shape {m.shape}")
        return cls(float(m[0, 0].real), float(m[1, 1].real), complex(m[1, 0]))

    @classmethod
    def from_state(cls, psi: "PureQubitState") -> "QubitDensityMatrix":
        a, b = psi.a, psi.b
        return cls(abs(a) ** 2, abs(b) ** 2, b * a.conjugate())


@dataclass(frozen=True)
class PureQubitState:
    a: complex
    b: complex

    def vector(self) -> np.ndarray:
        return np.array([self.a, self.b], dtype=complex)

    @property
    def norm(self) -> float:
        return math.sqrt(abs(self.a) ** 2 + abs(self.b) ** 2)


@dataclass(frozen=True)
class BlochVector:
    nx: float
    ny: float
    nz: float

    @property
    def length(self) -> float:
        return math.sqrt(self.nx**2 + self.ny**2 + self.nz**2)


@dataclass(frozen=True)
class ValidityReport:
    """Worst violation of each qubit validity condition.

    ``positivity`` is how far the smaller population dips below zero,
    ``trace`` is ``|rho00 + rho11 - 1|`` and ``coherence`` is how far
    ``|rho10|`` exceeds ``sqrt(rho00*rho11)``. All are clipped at 0.
    """

    tol: float
    positivity: float
    trace: float
    coherence: float
    index: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return max(self.positivity, self.trace, self.coherence) <= self.tol

    def failures(self) -> list[str]:
        return [
            name
            for name in ("positivity", "trace", "coherence")
            if getattr(self, name) > self.tol
        ]

    def as_dict(self) -> dict:
        return {
            "tol": self.tol,
            "passed": self.passed,
            "positivity": self.positivity,
            "trace": self.trace,
            "coherence": self.coherence,
            "worst_index": dict(self.index),
        }


def _violations(rho00, rho11, rho10):
    rho00 = np.asarray(rho00, dtype=float)
    rho11 = np.asarray(rho11, dtype=float)
    mod10 = np.abs(np.asarray(rho10))
    pos = np.maximum(0.0, -np.minimum(rho00, rho11))
    tr = np.abs(rho00 + rho11 - 1.0)
    bound = np.sqrt(np.clip(rho00, 0.0, None) * np.clip(rho11, 0.0, None))
    coh = np.maximum(0.0, mod10 - bound)
    return pos, tr, coh


def validate_density(rho: QubitDensityMatrix, tol: float = DEFAULT_TOL) -> ValidityReport:
    """Check positivity, unit trace and the coherence bound for one state."""
    if not tol > 0:
        raise DomainError("tol must be positive")
    pos, tr, coh = _violations(rho.rho00, rho.rho11, rho.rho10)
    return ValidityReport(tol, float(pos), float(tr), float(coh))


def validate_arrays(rho00, rho11, rho10, tol: float = DEFAULT_TOL) -> ValidityReport:
    """Vectorized :func:`validate_density`; ``index`` holds the worst row per check."""
    if not tol > 0:
        raise DomainError("tol must be positive")
    pos, tr, coh = (np.atleast_1d(v) for v in _violations(rho00, rho11, rho10))
    idx = {
        "positivity": int(np.argmax(pos)),
        "trace": int(np.argmax(tr)),
        "coherence": int(np.argmax(coh)),
    }
    return ValidityReport(tol, float(pos.max()), float(tr.max()), float(coh.max()), idx)


def eigenvalues(rho: QubitDensityMatrix) -> tuple[float, float]:
    r = math.sqrt((rho.rho00 - rho.rho11) ** 2 + 4.0 * abs(rho.rho10) ** 2)
    return 0.5 * (1.0 - r), 0.5 * (1.0 + r)


def _xlogx(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def entropy_arrays(rho00, rho11, rho10) -> np.ndarray:
    """Von Neumann entropy (nats) of many states at once, no validation."""
    rho00 = np.asarray(rho00, dtype=float)
    rho11 = np.asarray(rho11, dtype=float)
    r = np.sqrt((rho00 - rho11) ** 2 + 4.0 * np.abs(rho10) ** 2)
    # eigenvalues of a near-pure state lose precision near 0; clip rounding
    lo = np.clip(0.5 * (1.0 - r), 0.0, 1.0)
    hi = np.clip(0.5 * (1.0 + r), 0.0, 1.0)
    return 0.0 - (_xlogx(lo) + _xlogx(hi))


def von_neumann_entropy(rho: QubitDensityMatrix, tol: float = DEFAULT_TOL) -> float:
    report = validate_density(rho, tol)
    if not report.passed:
        raise DomainError(f"not a valid density matrix: {report.failures()}")
    return float(entropy_arrays(rho.rho00, rho.rho11, rho.rho10))


def to_bloch(rho: QubitDensityMatrix) -> BlochVector:
    c = complex(rho.rho10)
    return BlochVector(2.0 * c.real, 2.0 * c.imag, rho.rho00 - rho.rho11)


def from_bloch(n: BlochVector) -> QubitDensityMatrix:
    return QubitDensityMatrix(0.5 * (1.0 + n.nz), 0.5 * (1.0 - n.nz), complex(0.5 * n.nx, 0.5 * n.ny))


def _field_components(field) -> tuple[float, float, float]:
    if hasattr(field, "Bx"):
        return float(field.Bx), float(field.By), float(field.Bz)
    bx, by, bz = field
    return float(bx), float(by), float(bz)


def su2_step(field, dt: float) -> np.ndarray:
    """Exact propagator ``exp(-i dt (B . sigma))`` for a constant field.

    ``field`` is a :class:`~noisefield.synthesis.FieldSample` or any
    ``(Bx, By, Bz)`` triple.
    """
    bx, by, bz = _field_components(field)
    if not all(math.isfinite(v) for v in (bx, by, bz)):
        raise DomainError("field components must be finite")
    if not dt > 0:
        raise DomainError("dt must be positive")
    bnorm = math.sqrt(bx * bx + by * by + bz * bz)
    theta = dt * bnorm
    c = math.cos(theta)
    # sin(theta)/|B| written as dt*sinc to stay finite at |B| = 0
    s = dt * np.sinc(theta / math.pi)
    return np.array(
        [
            [complex(c, -s * bz), complex(-s * by, -s * bx)],
            [complex(s * by, -s * bx), complex(c, s * bz)],
        ]
    )


def is_unitary(u: np.ndarray, tol: float = 1e-13) -> bool:
    u = np.asarray(u)
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(2))) <= tol)
