"""Spectral-landscape projections of trajectories, purity, and the
chirality metric.

Projections weight the instantaneous eigenvalues by the state's overlap
with the biorthonormal left eigenvectors (unit-norm right vectors fix the
left-vector scale). All three projections are ratios, hence invariant under
rescaling of the state; the deep decay of long encirclings therefore never
enters here.

The Hamiltonian-landscape projections always use the loss rate computed
with the recycling rate set to zero: the reference landscape is the
postselected non-Hermitian Hamiltonian, even when the dynamics includes
dephasing.

Near an exceptional point the eigenbasis degenerates and the weights become
ill-conditioned: samples with defectiveness below NEAR_EP_DEFECTIVENESS are
flagged and carry NaN, to be bridged by interpolation in the series
assembly. Degenerate-but-diagonalizable points (e.g. the dissipation-free
segments, where the generator is normal) are flagged too, but their weights
are computed by orthogonal projection onto the degenerate eigenspaces and
remain valid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import smallmat
from .liouville import build_L, vectorize
from .model import ControlParams, build_Heff

NEAR_EP_DEFECTIVENESS = 1e-8
DEGENERATE_GROUP_TOL = 1e-10

_NAN = complex(float("nan"), float("nan"))


class ProjectionResult(NamedTuple):
    value: complex
    near_ep: bool


def hamiltonian_eigensystem(p: ControlParams) -> smallmat.EigenSystem:
    """Eigensystem of the reference non-Hermitian Hamiltonian (recycling
    rate zeroed)."""
    return smallmat.eig(build_Heff(p, landscape_gamma2_zero=True))


def liouvillian_eigensystem(p: ControlParams) -> smallmat.EigenSystem:
    return smallmat.eig(build_L(p))


def project_hamiltonian_pure(psi, p: ControlParams | None = None,
                             esys: smallmat.EigenSystem | None = None) -> ProjectionResult:
    """Average Hamiltonian-landscape energy of a pure state: eigenvalues
    weighted by |<left_i|psi>|^2."""
    psi = np.asarray(psi, dtype=complex).reshape(2)
    if np.linalg.norm(psi) <= 1e-15:
        raise ValueError("state norm too small to project")
    es = esys if esys is not None else hamiltonian_eigensystem(p)
    if es.defectiveness < NEAR_EP_DEFECTIVENESS:
        return ProjectionResult(_NAN, True)
    w = np.abs(es.left_vectors.conj().T @ psi) ** 2
    return ProjectionResult(complex(np.dot(w, es.eigenvalues) / w.sum()), False)


def project_hamiltonian_density(rho, p: ControlParams | None = None,
                                esys: smallmat.EigenSystem | None = None) -> ProjectionResult:
    """Average Hamiltonian-landscape energy of a density matrix: eigenvalues
    weighted by <left_i|rho|left_i>. Reduces to the pure-state projection on
    outer products."""
    rho = np.asarray(rho, dtype=complex).reshape(2, 2)
    es = esys if esys is not None else hamiltonian_eigensystem(p)
    if es.defectiveness < NEAR_EP_DEFECTIVENESS:
        return ProjectionResult(_NAN, True)
    lv = es.left_vectors
    w = np.einsum("ij,jk,ki->i", lv.conj().T, rho, lv).real
    total = w.sum()
    if abs(total) < 1e-300:
        raise ValueError("projection weights vanish")
    return ProjectionResult(complex(np.dot(w, es.eigenvalues) / total), False)


def _grouped_weights(es: smallmat.EigenSystem, v: np.ndarray):
    """Projection weights with eigenvalue-degenerate groups handled by
    orthogonal projection onto the group eigenspace."""
    vals = es.eigenvalues
    scale = max(1.0, float(np.abs(vals).max()))
    groups = []
    used = [False] * len(vals)
    for i in range(len(vals)):
        if used[i]:
            continue
        members = [i]
        used[i] = True
        for j in range(i + 1, len(vals)):
            if not used[j] and abs(vals[j] - vals[i]) <= DEGENERATE_GROUP_TOL * scale:
                members.append(j)
                used[j] = True
        groups.append(members)

    weights = []
    lams = []
    degenerate = False
    for members in groups:
        if len(members) == 1:
            i = members[0]
            weights.append(abs(np.vdot(es.left(i), v)) ** 2)
            lams.append(vals[i])
        else:
            degenerate = True
            q, _ = np.linalg.qr(es.right_vectors[:, members])
            weights.append(float(np.linalg.norm(q.conj().T @ v) ** 2))
            lams.append(vals[members].mean())
    return np.array(weights), np.array(lams), degenerate


def project_liouvillian(rho, p: ControlParams | None = None,
                        esys: smallmat.EigenSystem | None = None) -> ProjectionResult:
    """Average Liouvillian eigenvalue of the vectorized density matrix:
    eigenvalues weighted by |<left_i|vec(rho)>|^2."""
    v = vectorize(np.asarray(rho, dtype=complex).reshape(2, 2))
    es = esys if esys is not None else liouvillian_eigensystem(p)
    if es.defectiveness < NEAR_EP_DEFECTIVENESS:
        return ProjectionResult(_NAN, True)
    w, lams, degenerate = _grouped_weights(es, v)
    total = w.sum()
    if total < 1e-300:
        raise ValueError("projection weights vanish")
    return ProjectionResult(complex(np.dot(w, lams) / total), degenerate)


def qss_weight(rho, esys: smallmat.EigenSystem) -> float:
    """Fraction of projection weight on the maximal-Re(lambda) sheet
    (grouped when degenerate); diagnostic for (non-)adiabatic following."""
    v = vectorize(np.asarray(rho, dtype=complex).reshape(2, 2))
    w, lams, _ = _grouped_weights(esys, v)
    top = int(np.argmax(lams.real))
    return float(w[top] / w.sum())


def purity(rho) -> float:
    """Tr(rho_normalized^2); in [1/dim, 1]."""
    rho = np.asarray(rho, dtype=complex)
    tr = rho.trace().real
    if abs(tr) < 1e-300:
        raise ValueError("vanishing trace")
    rn = rho / tr
    return float(np.einsum("ij,ji->", rn, rn).real)


@dataclass(frozen=True)
class ChiralityResult:
    """Distinguishability of the final states of the two encircling
    directions: half the trace norm of the difference of the normalized
    density matrices. 0 = identical, 1 = orthogonal pure states."""

    C: float
    rho_cw: np.ndarray
    rho_ccw: np.ndarray
    T: float | None = None
    v: float | None = None


def chirality(rho_cw, rho_ccw, total_time: float | None = None) -> ChiralityResult:
    rho_cw = np.asarray(rho_cw, dtype=complex)
    rho_ccw = np.asarray(rho_ccw, dtype=complex)
    tr_cw = rho_cw.trace().real
    tr_ccw = rho_ccw.trace().real
    if tr_cw <= 1e-12 or tr_ccw <= 1e-12:
        raise ValueError("fully decayed state: trace too small to normalize")
    a = rho_cw / tr_cw
    b = rho_ccw / tr_ccw
    c = 0.5 * smallmat.trace_norm_hermitian(a - b, tol=1e-9)
    return ChiralityResult(
        C=float(c), rho_cw=a, rho_ccw=b, T=total_time,
        v=(2.0 * math.pi / total_time) if total_time else None,
    )


@dataclass(frozen=True)
class TrajectorySample:
    """One time point of an encircling, merging the pure-state reference run
    and the density-matrix run.

    Ebar0     -- Hamiltonian-landscape projection of the reference pure
                 state (None when no reference run was made)
    Ebar      -- Hamiltonian-landscape projection of the density matrix
    lambdabar -- Liouvillian-landscape projection of the density matrix
    trace     -- true trace of the density matrix (decays; underflows to 0
                 on very long loops)
    purity    -- Tr(rho_normalized^2)
    rho       -- normalized density matrix at the sample
    """

    t: float
    theta: float
    Ebar0: complex | None
    Ebar: complex
    lambdabar: complex
    trace: float
    purity: float
    rho: np.ndarray
    near_ep_flag: bool
