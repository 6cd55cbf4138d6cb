"""Per-path propagation by time-ordered products of exact SU(2) steps.

Each grid interval is split into substeps; the field is sampled once per
substep and the exact exponential of that constant field is applied. On
uniform substeps the sample point is the midpoint. When the trajectory
starts from a pure state the first interval is graded quadratically
(``t = t0 + h*s^2``, midpoint in ``s``) because ``sigma(t)`` and the
amplitudes may behave like ``sqrt(t - t_i)`` there, which a uniform
midpoint rule only resolves at order one half.

The number of substeps per interval is the smallest one (after probing)
for which every step rotates by at most ``max_angle`` radians, where the
angle of a step is ``|B| * dt``. Since ``|B|^2`` is a convex quadratic in
``z``, checking the two extreme draws bounds every path in between.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import kernels
from .errors import DomainError, ResolutionError, SingularityError
from .qubit import PureQubitState
from .synthesis import (
    DEFAULT_SIGMA_SQ_MAX,
    FieldSample,
    PathDraw,
    PhaseProcess,
    analytic_states,
    as_process,
    field_grid,
)

DEFAULT_MAX_ANGLE = 0.01
MAX_SUBSTEPS_TOTAL = 50_000_000
STATE_CSV_HEADER = ("path_id", "t", "re_a", "im_a", "re_b", "im_b")


@dataclass
class Mesh:
    grid: np.ndarray
    t_eval: np.ndarray
    dt: np.ndarray
    counts: np.ndarray
    graded_first: bool
    max_angle: float

    @property
    def ends(self) -> np.ndarray:
        return np.cumsum(self.counts) - 1

    @property
    def size(self) -> int:
        return int(self.dt.size)


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise DomainError("grid needs at least two points")
    h = np.diff(grid)
    if np.any(h <= 0):
        raise DomainError("grid must be strictly increasing")
    if np.any(np.abs(h - h.mean()) > 1e-9 * max(abs(grid[-1]), h.mean())):
        raise DomainError("grid must be uniform")
    return grid


def _substep_points(grid, counts, graded_first):
    h = np.diff(grid)
    k = np.repeat(np.arange(counts.size), counts)
    start = np.cumsum(counts) - counts
    j = np.arange(k.size) - start[k]
    n = counts[k].astype(float)
    u = (j + 0.5) / n
    t_eval = grid[k] + h[k] * u
    dt = h[k] / n
    if graded_first:
        first = k == 0
        t_eval[first] = grid[0] + h[0] * u[first] ** 2
        dt[first] = h[0] * (2.0 * j[first] + 1.0) / n[first] ** 2
    return t_eval, dt, k


def _local_error_proxy(b, t):
    """``|B''|/24 + |B x B'|/6`` from finite differences along the probe points.

    Multiplied by ``dt**3`` this estimates the local error of one
    exponential-midpoint step for ``H = B . sigma``.
    """
    if t.size < 3:
        return np.zeros(t.size)
    db = np.gradient(b, t, axis=1)
    d2b = np.gradient(db, t, axis=1)
    cross = np.linalg.norm(np.cross(b, db), axis=-1)
    return (np.linalg.norm(d2b, axis=-1) / 24.0 + cross / 6.0).max(axis=0)


def _mesh_local_errors(b, t_eval, dt, k, counts, grid, graded_first):
    if not graded_first:
        return _local_error_proxy(b, t_eval) * dt**3
    first = k == 0
    out = np.empty(t_eval.size)
    out[~first] = _local_error_proxy(b[:, ~first], t_eval[~first]) * dt[~first] ** 3
    # graded interval: midpoint rule in u with t = t0 + h u^2, field scaled by dt/du
    h = grid[1] - grid[0]
    u = np.sqrt((t_eval[first] - grid[0]) / h)
    g = b[:, first] * (2.0 * h * u)[None, :, None]
    out[first] = _local_error_proxy(g, u) * (1.0 / counts[0]) ** 3
    return out


def build_mesh(proc: PhaseProcess, grid, z_lo: float, z_hi: float,
               max_angle: float = DEFAULT_MAX_ANGLE, substeps: int = 1,
               graded_first: bool | None = None) -> Mesh:
    """Substep mesh valid for every path with ``z`` in ``[z_lo, z_hi]``.

    Each step turns by at most ``max_angle`` and its estimated local error
    stays below ``max_angle**3 / 6`` (the error of a step that turns by
    ``max_angle`` about a direction rotating at the same rate).
    """
    grid = _check_grid(grid)
    if substeps < 1:
        raise DomainError("substeps must be >= 1")
    if not max_angle > 0:
        raise DomainError("max_angle must be positive")
    if graded_first is None:
        graded_first = proc.pure_start
    zs = np.array([z_lo, z_hi], dtype=float)
    local_tol = max_angle**3 / 6.0
    counts = np.full(grid.size - 1, 2, dtype=np.int64)
    for _ in range(60):
        t_eval, dt, k = _substep_points(grid, counts, graded_first)
        try:
            bx, by, bz, _ = field_grid(proc, t_eval, zs)
        except SingularityError as exc:
            raise SingularityError(f"cannot mesh interval: {exc}", t=exc.t) from None
        b = np.stack([bx, by, bz], axis=-1)
        ang = np.linalg.norm(b, axis=-1).max(axis=0) * dt
        local = _mesh_local_errors(b, t_eval, dt, k, counts, grid, graded_first)
        factor = np.maximum(ang / max_angle, np.cbrt(local / local_tol))
        worst = np.zeros(counts.size)
        np.maximum.at(worst, k, factor)
        over = worst > 1.0
        if not np.any(over):
            break
        counts[over] = np.ceil(counts[over] * worst[over] * 1.05).astype(np.int64) + 1
        if counts.sum() * substeps > MAX_SUBSTEPS_TOTAL:
            raise ResolutionError(
                f"more than {MAX_SUBSTEPS_TOTAL} substeps needed; field too strong for max_angle={max_angle}"
            )
    else:  # pragma: no cover
        raise ResolutionError("substep refinement did not converge")
    if substeps > 1:
        counts = counts * substeps
        t_eval, dt, _ = _substep_points(grid, counts, graded_first)
    return Mesh(grid, t_eval, dt, counts, bool(graded_first), float(max_angle))


@dataclass
class EnsembleTrace:
    states: np.ndarray  # (P, G, 2)
    max_residue: np.ndarray
    max_angle: np.ndarray
    norm_drift: np.ndarray
    mesh: Mesh


def propagate_ensemble(proc: PhaseProcess, grid, z, mesh: Mesh | None = None,
                       max_angle: float = DEFAULT_MAX_ANGLE, substeps: int = 1,
                       use_numba: bool | None = None) -> EnsembleTrace:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    grid = _check_grid(grid)
    if mesh is None:
        mesh = build_mesh(proc, grid, float(z.min()), float(z.max()), max_angle, substeps)
    ing = proc.ingredients(mesh.t_eval)
    psi0 = analytic_states(proc, grid[:1], z)[:, 0, :]
    states, res, ang = kernels.propagate(ing[1:], mesh.dt, mesh.ends, z, psi0, use_numba=use_numba)
    drift = np.abs(np.linalg.norm(states, axis=2) - 1.0).max(axis=1)
    return EnsembleTrace(states, res, ang, drift, mesh)


@dataclass
class PathTrace:
    """One propagated noise history.

    ``fields`` holds the field at the midpoint of every grid interval.
    """

    draw: PathDraw
    grid: np.ndarray
    states: list
    fields: list
    norm_drift: float
    max_residue: float
    max_angle: float
    substeps_total: int
    analytic: list = dc_field(default_factory=list)

    def state_array(self) -> np.ndarray:
        return np.array([[s.a, s.b] for s in self.states])

    def infidelities(self) -> np.ndarray:
        return np.array([path_infidelity(p, q) for p, q in zip(self.states, self.analytic)])


def propagate_path(traj, grid, z: float, substeps: int = 1, max_angle: float = DEFAULT_MAX_ANGLE,
                   sigma_sq_max: float = DEFAULT_SIGMA_SQ_MAX, path_id: int = 0,
                   use_numba: bool | None = None) -> PathTrace:
    proc = as_process(traj, sigma_sq_max)
    grid = _check_grid(grid)
    try:
        tr = propagate_ensemble(proc, grid, [z], max_angle=max_angle, substeps=substeps,
                                use_numba=use_numba)
    except SingularityError as exc:
        raise SingularityError(f"path {path_id}: {exc}", t=exc.t, path_id=path_id) from None
    mids = 0.5 * (grid[1:] + grid[:-1])
    bx, by, bz, res = field_grid(proc, mids, [z])
    fields = [FieldSample(float(t), float(x), float(y), float(w), float(r))
              for t, x, y, w, r in zip(mids, bx[0], by[0], bz[0], res[0])]
    states = [PureQubitState(complex(s[0]), complex(s[1])) for s in tr.states[0]]
    exact = analytic_states(proc, grid, [z])[0]
    analytic = [PureQubitState(complex(s[0]), complex(s[1])) for s in exact]
    return PathTrace(PathDraw(float(z), 1.0, path_id), grid, states, fields,
                     float(tr.norm_drift[0]), float(tr.max_residue[0]), float(tr.max_angle[0]),
                     tr.mesh.size, analytic)


def _vec(psi):
    if isinstance(psi, PureQubitState):
        return psi.vector()
    return np.asarray(psi, dtype=complex)


def infidelity_array(s1: np.ndarray, s2: np.ndarray) -> np.ndarray:
    """``1 - |<psi1|psi2>|`` over the last axis, after normalizing both states.

    Evaluated as ``|psi1 - exp(i chi) psi2|^2 / 2`` with the optimal phase
    ``chi`` so values far below machine epsilon are still resolved.
    """
    s1 = np.asarray(s1, dtype=complex)
    s2 = np.asarray(s2, dtype=complex)
    s1 = s1 / np.linalg.norm(s1, axis=-1, keepdims=True)
    s2 = s2 / np.linalg.norm(s2, axis=-1, keepdims=True)
    ov = np.sum(np.conj(s2) * s1, axis=-1)
    mag = np.abs(ov)
    phase = np.where(mag > 0, ov / np.where(mag > 0, mag, 1.0), 1.0)
    diff = s1 - phase[..., None] * s2
    return np.clip(0.5 * np.sum(np.abs(diff) ** 2, axis=-1), 0.0, 1.0)


def path_infidelity(psi1, psi2) -> float:
    """``1 - |<psi1|psi2>|``, insensitive to global phase."""
    return float(infidelity_array(_vec(psi1), _vec(psi2)))


def write_state_csv(path, draws, grid, states) -> None:
    """Per-path state dump ``path_id,t,re_a,im_a,re_b,im_b``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STATE_CSV_HEADER)
        for d, row in zip(draws, states):
            for t, (a, b) in zip(grid, row):
                w.writerow([d.path_id] + [repr(float(v)) for v in (t, a.real, a.imag, b.real, b.imag)])
