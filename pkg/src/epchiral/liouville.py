"""Vectorized density-matrix dynamics: the 4x4 Liouvillian, its spectrum,
quasi-steady state, spectral gap, and parameter-space landscapes.

The density matrix is flattened row-major, (rho11, rho12, rho21, rho22).
The Liouvillian is constructed by applying the Lindblad right-hand side to
the four matrix units, which keeps a single source of truth for the dynamics
(including the momentum sector); the hand-derived matrix form serves as a
test fixture, not as the implementation.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from . import smallmat
from .model import ControlParams, lindblad_rhs

# Sheets whose maximal real parts differ by less than this are treated as
# degenerate: the gap is reported as exactly zero and the quasi-steady state
# is ambiguous.
DEGENERACY_TOL = 1e-12

# Minimal eigenvector overlap for sheet continuation in landscape scans;
# below it the point is flagged as a branch crossing and the sorting
# convention restarts.
TRACKING_OVERLAP_MIN = 0.5


def vectorize(rho: np.ndarray) -> np.ndarray:
    """Flatten a 2x2 density matrix row-major."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {rho.shape}")
    return rho.reshape(4).copy()


def devectorize(v: np.ndarray) -> np.ndarray:
    """Inverse of vectorize."""
    v = np.asarray(v, dtype=complex)
    if v.shape != (4,):
        raise ValueError(f"expected a 4-vector, got shape {v.shape}")
    return v.reshape(2, 2).copy()


def build_L(p: ControlParams) -> np.ndarray:
    """4x4 Liouvillian matrix of the leading-order dynamics: columns are the
    vectorized right-hand side on the matrix units."""
    cols = []
    for k in range(4):
        unit = np.zeros(4, dtype=complex)
        unit[k] = 1.0
        cols.append(vectorize(lindblad_rhs(p, devectorize(unit))))
    return np.column_stack(cols)


def spectrum(p: ControlParams) -> smallmat.EigenSystem:
    """Eigensystem of the Liouvillian under the global sorting convention."""
    return smallmat.eig(build_L(p))


@dataclass(frozen=True)
class QuasiSteadyState:
    """Eigenpair of maximal real part.

    When several sheets tie within DEGENERACY_TOL the result is flagged
    degenerate and ``candidates`` carries the full tied set; ``eigenvalue``
    and ``state`` then refer to the first candidate only.
    """

    eigenvalue: complex
    state: np.ndarray
    degenerate: bool
    candidates: tuple


def _unit_trace(v: np.ndarray) -> np.ndarray:
    tr = v[0] + v[3]
    if abs(tr) > 1e-12:
        return v / tr
    return v


def quasi_steady_state(p: ControlParams) -> QuasiSteadyState:
    es = spectrum(p)
    vals = es.eigenvalues
    tied = [i for i in range(4) if vals[0].real - vals[i].real < DEGENERACY_TOL]
    candidates = tuple((vals[i], _unit_trace(es.right(i))) for i in tied)
    return QuasiSteadyState(
        eigenvalue=vals[0],
        state=candidates[0][1],
        degenerate=len(tied) > 1,
        candidates=candidates,
    )


def liouvillian_gap(p: ControlParams) -> float:
    """Distance in Re(lambda) between the quasi-steady sheet and the nearest
    other sheet; exactly zero when the top sheets are degenerate."""
    vals = spectrum(p).eigenvalues
    gap = float(vals[0].real - vals[1].real)
    if gap < DEGENERACY_TOL:
        return 0.0
    return gap


@dataclass(frozen=True)
class LandscapeGrid:
    """Per-point Liouvillian spectra over a parameter grid.

    sheets[i, j, k] is eigenvalue k at (axis1[i], axis2[j]), ordered by
    continuity along the axis2 rows; gap and crossing are per point.
    """

    vary: str
    axis1: np.ndarray
    axis2: np.ndarray
    sheets: np.ndarray
    gap: np.ndarray
    crossing: np.ndarray


def _best_matching(prev_vecs: np.ndarray, es: smallmat.EigenSystem):
    """Permutation of the current eigenpairs maximizing total overlap with
    the previous point's sheet order. Returns (perm, min matched overlap)."""
    overlap = np.abs(prev_vecs.conj().T @ es.right_vectors)
    best, best_total = None, -1.0
    for perm in itertools.permutations(range(4)):
        total = overlap[0, perm[0]] + overlap[1, perm[1]] + overlap[2, perm[2]] + overlap[3, perm[3]]
        if total > best_total:
            best_total = total
            best = perm
    worst = min(overlap[i, best[i]] for i in range(4))
    return best, worst


def scan_landscape(axis1, axis2, p_base: ControlParams, vary: str = "omega1") -> LandscapeGrid:
    """Scan the Liouvillian spectrum over (omega1 or omega2) x delta1.

    Sheets are continued along each axis2 row by maximal eigenvector overlap
    against the previous grid point; a matched overlap below
    TRACKING_OVERLAP_MIN flags the point as a branch crossing and restarts
    the sorting convention there.
    """
    if vary not in ("omega1", "omega2"):
        raise ValueError(f"vary must be 'omega1' or 'omega2', got {vary!r}")
    a1 = np.asarray(axis1, dtype=float)
    a2 = np.asarray(axis2, dtype=float)
    for ax in (a1, a2):
        if ax.size < 2 or not np.all(np.diff(ax) > 0):
            raise ValueError("grid axes must be strictly increasing with at least 2 points")

    sheets = np.empty((a1.size, a2.size, 4), dtype=complex)
    gap = np.empty((a1.size, a2.size))
    crossing = np.zeros((a1.size, a2.size), dtype=bool)

    for i, v1 in enumerate(a1):
        prev_vecs = None
        for j, d1 in enumerate(a2):
            p = ControlParams(
                omega1=v1 if vary == "omega1" else p_base.omega1,
                delta1=d1,
                omega2=v1 if vary == "omega2" else p_base.omega2,
                delta2=p_base.delta2,
                gamma0=p_base.gamma0,
                gamma2=p_base.gamma2,
                qx=p_base.qx,
            )
            es = spectrum(p)
            vals = es.eigenvalues
            gap[i, j] = vals[0].real - vals[1].real
            if gap[i, j] < DEGENERACY_TOL:
                gap[i, j] = 0.0
            if prev_vecs is None:
                order = (0, 1, 2, 3)
            else:
                order, worst = _best_matching(prev_vecs, es)
                if worst < TRACKING_OVERLAP_MIN:
                    crossing[i, j] = True
                    order = (0, 1, 2, 3)
            sheets[i, j] = vals[list(order)]
            prev_vecs = es.right_vectors[:, list(order)]
    return LandscapeGrid(vary=vary, axis1=a1, axis2=a2, sheets=sheets, gap=gap, crossing=crossing)


def write_landscape_csv(grid: LandscapeGrid, path) -> None:
    """Export a landscape scan: one row per grid point with the four tracked
    sheets, the gap, and the crossing flag."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["axis1", "axis2"]
            + [f"re_l{k}" for k in range(1, 5)]
            + [f"im_l{k}" for k in range(1, 5)]
            + ["gap", "crossing_flag"]
        )
        for i, v1 in enumerate(grid.axis1):
            for j, v2 in enumerate(grid.axis2):
                lam = grid.sheets[i, j]
                writer.writerow(
                    [f"{v1:.17g}", f"{v2:.17g}"]
                    + [f"{lam[k].real:.17g}" for k in range(4)]
                    + [f"{lam[k].imag:.17g}" for k in range(4)]
                    + [f"{grid.gap[i, j]:.17g}", int(grid.crossing[i, j])]
                )
