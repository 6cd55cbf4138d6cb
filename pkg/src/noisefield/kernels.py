"""Hot loops: field evaluation and SU(2) path propagation.

Two interchangeable backends. The numba backend compiles scalar loops
(outer loop over paths, inner over substeps). The numpy backend loops over
substeps and vectorizes over paths. Set ``NOISEFIELD_DISABLE_NUMBA=1`` to
force the numpy path; it is also used when numba cannot be imported.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

_DISABLED = os.environ.get("NOISEFIELD_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")
HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


def field_arrays(a, da, bm, dbm, theta, dtheta, sigma, dsigma, z):
    """Field ``(Bx, By, Bz, residue)`` with numpy broadcasting.

    ``a`` and ``da`` are real (``a = sqrt(rho00)``); ``b = bm exp(i(theta + sigma z))``.
    """
    # non-finite rates are reported by the caller, not warned about here
    with np.errstate(invalid="ignore", over="ignore"):
        e = np.exp(1j * (theta + sigma * z))
        b = bm * e
        db = (dbm + 1j * bm * (dtheta + dsigma * z)) * e
        inner = 1j * (da * a + np.conj(db) * b)
        bplus = -1j * (da * b - db * a)
    return bplus.real, bplus.imag, inner.real, inner.imag


def _propagate_numpy(a, da, bm, dbm, theta, dtheta, sigma, dsigma, dt, ends, z, psi0):
    n_paths = z.size
    n_nodes = ends.size + 1
    states = np.empty((n_paths, n_nodes, 2), dtype=np.complex128)
    states[:, 0, :] = psi0
    p0 = psi0[:, 0].copy()
    p1 = psi0[:, 1].copy()
    max_res = np.zeros(n_paths)
    max_ang = np.zeros(n_paths)
    node = 0
    for s in range(dt.size):
        bx, by, bz, res = field_arrays(a[s], da[s], bm[s], dbm[s], theta[s], dtheta[s],
                                       sigma[s], dsigma[s], z)
        np.maximum(max_res, np.abs(res), out=max_res)
        bn = np.sqrt(bx * bx + by * by + bz * bz)
        ang = bn * dt[s]
        np.maximum(max_ang, ang, out=max_ang)
        c = np.cos(ang)
        sc = dt[s] * np.sinc(ang / np.pi)
        bp = bx + 1j * by
        q0 = c * p0 - 1j * sc * (bz * p0 + np.conj(bp) * p1)
        q1 = c * p1 - 1j * sc * (bp * p0 - bz * p1)
        p0, p1 = q0, q1
        if s == ends[node]:
            node += 1
            states[:, node, 0] = p0
            states[:, node, 1] = p1
    return states, max_res, max_ang


if HAVE_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def _propagate_numba(a, da, bm, dbm, theta, dtheta, sigma, dsigma, dt, ends, z, psi0):
        n_paths = z.size
        n_sub = dt.size
        n_nodes = ends.size + 1
        states = np.empty((n_paths, n_nodes, 2), dtype=np.complex128)
        max_res = np.zeros(n_paths)
        max_ang = np.zeros(n_paths)
        for p in range(n_paths):
            zp = z[p]
            p0 = psi0[p, 0]
            p1 = psi0[p, 1]
            states[p, 0, 0] = p0
            states[p, 0, 1] = p1
            node = 0
            mres = 0.0
            mang = 0.0
            for s in range(n_sub):
                ph = theta[s] + sigma[s] * zp
                e = complex(np.cos(ph), np.sin(ph))
                b = bm[s] * e
                db = complex(dbm[s], bm[s] * (dtheta[s] + dsigma[s] * zp)) * e
                inner = 1j * (da[s] * a[s] + db.conjugate() * b)
                bplus = -1j * (da[s] * b - db * a[s])
                bx = bplus.real
                by = bplus.imag
                bz = inner.real
                r = abs(inner.imag)
                if r > mres:
                    mres = r
                bn = np.sqrt(bx * bx + by * by + bz * bz)
                ang = bn * dt[s]
                if ang > mang:
                    mang = ang
                c = np.cos(ang)
                if ang > 1e-8:
                    sc = np.sin(ang) / bn
                else:
                    sc = dt[s] * (1.0 - ang * ang / 6.0)
                q0 = c * p0 - 1j * sc * (bz * p0 + complex(bx, -by) * p1)
                q1 = c * p1 - 1j * sc * (complex(bx, by) * p0 - bz * p1)
                p0 = q0
                p1 = q1
                if node < ends.size and s == ends[node]:
                    node += 1
                    states[p, node, 0] = p0
                    states[p, node, 1] = p1
            max_res[p] = mres
            max_ang[p] = mang
        return states, max_res, max_ang


def propagate(ingredients, dt, ends, z, psi0, use_numba: bool | None = None):
    """Advance ``psi0`` (shape ``(P, 2)``) for every ``z`` through the substep mesh.

    ``ingredients`` are z-independent arrays sampled at the substep
    evaluation times; ``ends[k]`` is the index of the last substep of grid
    interval ``k``. Returns node states ``(P, G, 2)``, the per-path maximum
    Bz imaginary residue and the per-path maximum step angle.
    """
    use = USE_NUMBA if use_numba is None else (use_numba and HAVE_NUMBA)
    cols = [np.ascontiguousarray(v, dtype=np.float64) for v in ingredients]
    args = cols + [
        np.ascontiguousarray(dt, dtype=np.float64),
        np.ascontiguousarray(ends, dtype=np.int64),
        np.ascontiguousarray(z, dtype=np.float64),
        np.ascontiguousarray(psi0, dtype=np.complex128),
    ]
    if use:
        return _propagate_numba(*args)
    return _propagate_numpy(*args)
