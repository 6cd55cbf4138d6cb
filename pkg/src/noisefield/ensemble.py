"""Path averages of the propagated states and comparison with the reference.

Two estimators share the propagator: Gauss-Hermite quadrature over ``z``
(deterministic, the exact-averaging oracle) and Monte Carlo with
counter-based draws. Monte Carlo paths are processed in fixed-size chunks
whose partial moments are merged in chunk order, so results do not depend
on scheduling.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .channels import ReferenceTrajectory
from .errors import DomainError, UsageError
from .integrator import DEFAULT_MAX_ANGLE, build_mesh, propagate_ensemble
from .qubit import QubitDensityMatrix, entropy_arrays
from .rng import standard_normals
from .synthesis import DEFAULT_SIGMA_SQ_MAX, PhaseProcess, analytic_states, as_process

GH_MAX_ANGLE = 5e-4
DEFAULT_NODES = 64
MC_CHUNK = 2048
SE_ATOL = 1e-5

RESULT_CSV_HEADER = (
    "t", "rho00_ref", "rho11_ref", "re10_ref", "im10_ref",
    "rho00_est", "rho11_est", "re10_est", "im10_est",
    "se00", "se_re10", "se_im10", "entropy_ref", "entropy_est",
)


def gauss_hermite_rule(n: int):
    """Nodes and weights for expectations under the standard normal law."""
    if n < 1:
        raise DomainError("need at least one node")
    x, w = np.polynomial.hermite.hermgauss(n)
    return math.sqrt(2.0) * x, w / w.sum()


@dataclass
class EnsembleEstimate:
    grid: np.ndarray
    rho00: np.ndarray
    rho11: np.ndarray
    rho10: np.ndarray
    se00: np.ndarray
    se_re10: np.ndarray
    se_im10: np.ndarray
    kind: str
    size: int
    seed: int | None = None
    diagnostics: dict = field(default_factory=dict)

    def density(self, k: int) -> QubitDensityMatrix:
        return QubitDensityMatrix(float(self.rho00[k]), float(self.rho11[k]), complex(self.rho10[k]))

    @property
    def trace_error(self) -> float:
        return float(np.max(np.abs(self.rho00 + self.rho11 - 1.0)))

    def min_eigenvalue(self) -> np.ndarray:
        r = np.sqrt((self.rho00 - self.rho11) ** 2 + 4.0 * np.abs(self.rho10) ** 2)
        return 0.5 * (self.rho00 + self.rho11 - r)

    def entropy(self) -> np.ndarray:
        return entropy_arrays(self.rho00, self.rho11, self.rho10)

    def metadata(self) -> dict:
        d = {"estimator": self.kind, "size": self.size}
        if self.seed is not None:
            d["seed"] = self.seed
        d.update(self.diagnostics)
        return d


def reference_estimate(traj: ReferenceTrajectory, grid) -> EnsembleEstimate:
    """The exact trajectory dressed as an estimate with zero error bars."""
    grid = np.asarray(grid, dtype=float)
    r00, r11, r10 = traj.components(grid)
    z = np.zeros_like(grid)
    return EnsembleEstimate(grid, r00, r11, r10, z, z.copy(), z.copy(), "reference", 0)


def _diagnostics(trace) -> dict:
    return {
        "substeps": int(trace.mesh.size),
        "max_step_angle": float(trace.max_angle.max()),
        "max_bz_residue": float(trace.max_residue.max()),
        "max_norm_drift": float(trace.norm_drift.max()),
    }


def gh_average(traj, grid, n_nodes: int = DEFAULT_NODES, max_angle: float = GH_MAX_ANGLE,
               substeps: int = 1, sigma_sq_max: float = DEFAULT_SIGMA_SQ_MAX,
               use_numba: bool | None = None) -> EnsembleEstimate:
    """Quadrature average of propagated path projectors."""
    if n_nodes < 2:
        raise DomainError("n_nodes must be >= 2")
    proc = as_process(traj, sigma_sq_max)
    grid = np.asarray(grid, dtype=float)
    z, w = gauss_hermite_rule(n_nodes)
    tr = propagate_ensemble(proc, grid, z, max_angle=max_angle, substeps=substeps, use_numba=use_numba)
    s = tr.states
    rho00 = w @ (np.abs(s[:, :, 0]) ** 2)
    rho11 = w @ (np.abs(s[:, :, 1]) ** 2)
    rho10 = w @ (s[:, :, 1] * np.conj(s[:, :, 0]))
    zero = np.zeros_like(grid)
    diag = _diagnostics(tr)
    diag["max_angle"] = max_angle
    return EnsembleEstimate(grid, rho00, rho11, rho10, zero, zero.copy(), zero.copy(),
                            "gauss-hermite", n_nodes, None, diag)


def _chunk_moments(values: np.ndarray):
    """Count, mean and centered sum of squares over axis 0."""
    n = values.shape[0]
    mean = values.mean(axis=0)
    m2 = ((values - mean) ** 2).sum(axis=0)
    return n, mean, m2


def _merge(a, b):
    na, ma, sa = a
    nb, mb, sb = b
    n = na + nb
    delta = mb - ma
    mean = ma + delta * (nb / n)
    m2 = sa + sb + delta**2 * (na * nb / n)
    return n, mean, m2


def mc_average(traj, grid, M: int, seed: int, max_angle: float = DEFAULT_MAX_ANGLE,
               substeps: int = 1, sigma_sq_max: float = DEFAULT_SIGMA_SQ_MAX,
               chunk: int = MC_CHUNK, use_numba: bool | None = None) -> EnsembleEstimate:
    """Monte Carlo average over ``M`` counter-based draws with standard errors."""
    if M < 2:
        raise DomainError("M must be >= 2")
    proc = as_process(traj, sigma_sq_max)
    grid = np.asarray(grid, dtype=float)
    z_all = standard_normals(seed, 0, M)
    mesh = build_mesh(proc, grid, float(z_all.min()), float(z_all.max()), max_angle, substeps)
    acc = None
    diag = {"substeps": mesh.size, "max_step_angle": 0.0, "max_bz_residue": 0.0, "max_norm_drift": 0.0}
    for start in range(0, M, chunk):
        z = z_all[start:start + chunk]
        tr = propagate_ensemble(proc, grid, z, mesh=mesh, use_numba=use_numba)
        s = tr.states
        pair = s[:, :, 1] * np.conj(s[:, :, 0])
        vals = np.stack([np.abs(s[:, :, 0]) ** 2, np.abs(s[:, :, 1]) ** 2, pair.real, pair.imag], axis=-1)
        mom = _chunk_moments(vals)
        acc = mom if acc is None else _merge(acc, mom)
        d = _diagnostics(tr)
        for key in ("max_step_angle", "max_bz_residue", "max_norm_drift"):
            diag[key] = max(diag[key], d[key])
    n, mean, m2 = acc
    se = np.sqrt(m2 / (n - 1) / n)
    diag["max_angle"] = max_angle
    return EnsembleEstimate(grid, mean[:, 0], mean[:, 1], mean[:, 2] + 1j * mean[:, 3],
                            se[:, 0], se[:, 2], se[:, 3], "monte-carlo", M, int(seed), diag)


@dataclass
class ComparisonReport:
    grid: np.ndarray
    deviation: np.ndarray
    tol: float
    metadata: dict = field(default_factory=dict)

    @property
    def max_deviation(self) -> float:
        return float(self.deviation.max())

    @property
    def worst_time(self) -> float:
        return float(self.grid[int(np.argmax(self.deviation))])

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol

    def summary(self) -> dict:
        return {
            "passed": self.passed,
            "tol": self.tol,
            "max_deviation": self.max_deviation,
            "worst_time": self.worst_time,
            **self.metadata,
        }


def _as_arrays(ref, grid):
    if isinstance(ref, EnsembleEstimate):
        if ref.grid.shape != grid.shape or np.any(ref.grid != grid):
            raise UsageError("estimate and reference are on different grids")
        return ref.rho00, ref.rho11, ref.rho10
    if isinstance(ref, ReferenceTrajectory):
        if grid[0] < ref.t_i or grid[-1] > ref.t_f:
            raise UsageError("estimate grid extends beyond the reference trajectory")
        return ref.components(grid)
    raise UsageError(f"cannot compare against {type(ref).__name__}")


def compare(estimate: EnsembleEstimate, reference, tol: float) -> ComparisonReport:
    """Max-abs entry deviation per grid time between an estimate and a reference."""
    r00, r11, r10 = _as_arrays(reference, estimate.grid)
    dev = np.max(np.stack([
        np.abs(estimate.rho00 - r00),
        np.abs(estimate.rho11 - r11),
        np.abs(estimate.rho10 - r10),
    ]), axis=0)
    return ComparisonReport(estimate.grid, dev, float(tol), estimate.metadata())


def expansion_check_initial(traj, n_nodes: int = DEFAULT_NODES, tol: float = 1e-8,
                            sigma_sq_max: float = DEFAULT_SIGMA_SQ_MAX) -> ComparisonReport:
    """Reconstruct ``rho(t_i)`` from the z-dependent initial pure states."""
    proc = as_process(traj, sigma_sq_max)
    grid = np.array([proc.t_i])
    z, w = gauss_hermite_rule(n_nodes)
    s = analytic_states(proc, grid, z)
    est = EnsembleEstimate(
        grid,
        w @ (np.abs(s[:, :, 0]) ** 2),
        w @ (np.abs(s[:, :, 1]) ** 2),
        w @ (s[:, :, 1] * np.conj(s[:, :, 0])),
        np.zeros(1), np.zeros(1), np.zeros(1), "gauss-hermite", n_nodes,
        diagnostics={"initial_sigma": proc.initial_sigma},
    )
    return compare(est, proc.traj, tol)


def write_result_csv(path, estimate: EnsembleEstimate, traj: ReferenceTrajectory) -> None:
    r00, r11, r10 = traj.components(estimate.grid)
    s_ref = entropy_arrays(r00, r11, r10)
    s_est = estimate.entropy()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_CSV_HEADER)
        for k, t in enumerate(estimate.grid):
            row = [t, r00[k], r11[k], r10[k].real, r10[k].imag,
                   estimate.rho00[k], estimate.rho11[k], estimate.rho10[k].real, estimate.rho10[k].imag,
                   estimate.se00[k], estimate.se_re10[k], estimate.se_im10[k], s_ref[k], s_est[k]]
            w.writerow([repr(float(v)) for v in row])


def se_consistency(estimate: EnsembleEstimate, traj: ReferenceTrajectory, k_sigma: float = 4.0,
                   atol: float = SE_ATOL) -> dict:
    """Fraction of grid times where every component lies within ``k_sigma * SE + atol``.

    ``atol`` covers integrator error, which is all that remains in
    components with no sampling variance (populations, and everything at
    ``t_i`` for a pure start).
    """
    r00, _, r10 = traj.components(estimate.grid)
    comps = [
        (estimate.rho00 - r00, estimate.se00),
        ((estimate.rho10 - r10).real, estimate.se_re10),
        ((estimate.rho10 - r10).imag, estimate.se_im10),
    ]
    ok = np.ones(estimate.grid.size, dtype=bool)
    for dev, se in comps:
        ok &= np.abs(dev) <= k_sigma * se + atol
    return {"k_sigma": k_sigma, "atol": atol, "fraction_within": float(ok.mean()), "times": int(ok.size)}


def write_summary_json(path, report: ComparisonReport, extra: dict | None = None) -> None:
    data = report.summary()
    if extra:
        data.update(extra)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
