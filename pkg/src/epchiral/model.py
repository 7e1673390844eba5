"""Physical model layer for the dissipative two-level system.

The open system lives in states |1>, |2>. State |2> is coupled to a fast
excited state |3> that decays into a bystander state |4> (rate gamma0,
population leaves the system) and back into |2> (rate gamma2, the recycling
channel responsible for dephasing). Adiabatic elimination of |3> yields the
reduced description used almost everywhere: a non-Hermitian Hamiltonian
H0 - i*Gamma |2><2| plus a dephasing jump operator sqrt(gamma_phi) |2><2|.

Three model tiers are implemented with matching interfaces so they can serve
as mutual oracles:

  full3      -- nine coupled matrix-element equations of the three-level
                master equation (exact within the rotating frame),
  eliminated -- the two-level equations after eliminating |3>, keeping all
                second-order terms,
  lindblad   -- the leading-order two-level Lindblad equation with rates
                gamma_phi and Gamma.

All quantities are dimensionless with hbar = 1. The momentum sector qx
(units of the recoil momentum) shifts the Hermitian part of the |1>,|2>
block only; it is threaded through every tier so they stay comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

HERMITICITY_TOL = 1e-10
PSD_TOL = 1e-10
TRACE_TOL = 1e-10


@dataclass(frozen=True)
class ControlParams:
    """The six control knobs plus the optional momentum sector.

    omega1, omega2 -- coupling rates |1>-|2> and |2>-|3> (may be complex)
    delta1, delta2 -- detunings of the two couplings
    gamma0, gamma2 -- decay rates |3>->|4> and |3>->|2>
    qx             -- momentum sector in recoil units (0 for the momentum-free
                      model)
    """

    omega1: complex
    delta1: float
    omega2: complex
    delta2: float
    gamma0: float
    gamma2: float
    qx: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "omega1", complex(self.omega1))
        object.__setattr__(self, "omega2", complex(self.omega2))
        object.__setattr__(self, "delta1", float(self.delta1))
        object.__setattr__(self, "delta2", float(self.delta2))
        object.__setattr__(self, "gamma0", float(self.gamma0))
        object.__setattr__(self, "gamma2", float(self.gamma2))
        object.__setattr__(self, "qx", float(self.qx))
        values = (
            self.omega1.real, self.omega1.imag, self.delta1,
            self.omega2.real, self.omega2.imag, self.delta2,
            self.gamma0, self.gamma2, self.qx,
        )
        if not all(math.isfinite(v) for v in values):
            raise ValueError("control parameters must be finite")
        if self.gamma0 < 0 or self.gamma2 < 0:
            raise ValueError("decay rates gamma0, gamma2 must be nonnegative")

    def scalars(self) -> tuple:
        """Plain-scalar view (omega1, delta1, omega2, delta2, gamma0, gamma2,
        qx) for the flat derivative kernels."""
        return (self.omega1, self.delta1, self.omega2, self.delta2,
                self.gamma0, self.gamma2, self.qx)


@dataclass(frozen=True)
class DerivedRates:
    """Rates of the eliminated model.

    gamma     -- (gamma0 + gamma2) / 2, total decay rate of |3>
    delta4    -- the quartic denominator of the elimination
    gamma_phi -- dephasing rate of the recycling channel
    Gamma     -- loss rate into the bystander state
    """

    gamma: float
    delta4: float
    gamma_phi: float
    Gamma: float


def _delta4(a1s: float, a2s: float, g: float, d1: float, d2: float) -> float:
    s = d1 + d2
    gg = g * g
    return a1s * (a2s + 2.0 * gg - 2.0 * d2 * s) + (gg + s * s) * (a2s + gg + d2 * d2) + a1s * a1s


def derived_rates(p: ControlParams, delta1_override: float | None = None) -> DerivedRates:
    """Compute the eliminated-model rates from the control parameters.

    ``delta1_override`` substitutes a different detuning into the rate
    expressions only (the caller keeps its own Hermitian part).
    """
    d1 = p.delta1 if delta1_override is None else float(delta1_override)
    g = 0.5 * (p.gamma0 + p.gamma2)
    a1s = abs(p.omega1) ** 2
    a2s = abs(p.omega2) ** 2
    d4 = _delta4(a1s, a2s, g, d1, p.delta2)
    if d4 == 0.0:
        raise ValueError("degenerate model: delta4 vanishes (all control parameters zero)")
    gg = g * g
    gamma_phi = p.gamma2 * gg * a2s / d4
    big_gamma = 0.5 * p.gamma0 * gg * a2s / d4
    return DerivedRates(gamma=g, delta4=d4, gamma_phi=gamma_phi, Gamma=big_gamma)


def build_H0(p: ControlParams) -> np.ndarray:
    """Hermitian part of the two-level Hamiltonian, including the momentum
    shift of the diagonal."""
    a = 0.5 * p.delta1 - 2.0 * p.qx
    return np.array([[a, -p.omega1], [-np.conj(p.omega1), -a]], dtype=complex)


def build_Heff(p: ControlParams, landscape_gamma2_zero: bool = False) -> np.ndarray:
    """Non-Hermitian effective Hamiltonian H0 - i*Gamma |2><2|.

    With ``landscape_gamma2_zero`` the loss rate is computed with gamma2
    replaced by zero. That is the convention used for all spectral
    landscapes: the recycling channel enters the dynamics, never the
    reference spectrum.
    """
    if landscape_gamma2_zero and p.gamma2 != 0.0:
        rates = derived_rates(replace(p, gamma2=0.0))
    else:
        rates = derived_rates(p)
    h = build_H0(p)
    h[1, 1] -= 1j * rates.Gamma
    return h


def heff_entries(omega1: complex, delta1: float, omega2: complex, delta2: float,
                 gamma0: float, gamma2: float, qx: float,
                 landscape_gamma2_zero: bool = False) -> tuple:
    """Scalar counterpart of build_Heff for hot loops: returns
    (h11, h12, h21, h22)."""
    g2 = 0.0 if landscape_gamma2_zero else gamma2
    g = 0.5 * (gamma0 + g2)
    a1s = abs(omega1) ** 2
    a2s = abs(omega2) ** 2
    d4 = _delta4(a1s, a2s, g, delta1, delta2)
    big_gamma = 0.5 * gamma0 * g * g * a2s / d4
    a = 0.5 * delta1 - 2.0 * qx
    return (a + 0j, -omega1, -omega1.conjugate(), -a - 1j * big_gamma)


def build_Lphi(p: ControlParams) -> np.ndarray:
    """Dephasing jump operator sqrt(gamma_phi) |2><2|."""
    rates = derived_rates(p)
    return np.array([[0.0, 0.0], [0.0, math.sqrt(rates.gamma_phi)]], dtype=complex)


# ---------------------------------------------------------------------------
# Right-hand sides of the three tiers.
#
# The public functions take and return dense matrices. The *_deriv_flat
# kernels are the same maps over flattened row-major components, written in
# scalar arithmetic for the integrator's hot loop; their agreement with the
# public functions is pinned by tests.
# ---------------------------------------------------------------------------

def lindblad_rhs(p: ControlParams, rho: np.ndarray) -> np.ndarray:
    """Leading-order Lindblad right-hand side,
    -i(H_eff rho - rho H_eff^dag) + L rho L^dag - (1/2){L^dag L, rho}."""
    rho = np.asarray(rho, dtype=complex)
    heff = build_Heff(p)
    lphi = build_Lphi(p)
    drho = -1j * (heff @ rho - rho @ heff.conj().T)
    ll = lphi.conj().T @ lphi
    drho += lphi @ rho @ lphi.conj().T - 0.5 * (ll @ rho + rho @ ll)
    return drho


def lindblad_deriv_flat(c: tuple, y) -> list:
    """Flat kernel of lindblad_rhs over (rho11, rho12, rho21, rho22)."""
    o1, d1, o2, d2, g0, g2, qx = c
    g = 0.5 * (g0 + g2)
    a1s = (o1 * o1.conjugate()).real
    a2s = (o2 * o2.conjugate()).real
    d4 = _delta4(a1s, a2s, g, d1, d2)
    gg = g * g
    gphi = g2 * gg * a2s / d4
    gam = 0.5 * g0 * gg * a2s / d4
    # unrolled products with H = [[a, b], [conj(b), -a - i*gam]], b = -o1
    a2q = d1 - 4.0 * qx  # twice the diagonal element of H0
    b = -o1
    bc = b.conjugate()
    r11, r12, r21, r22 = y
    decay = gam + 0.5 * gphi
    return [
        -1j * (b * r21 - bc * r12),
        -1j * (a2q * r12 + b * (r22 - r11)) - decay * r12,
        1j * (a2q * r21 + bc * (r22 - r11)) - decay * r21,
        -1j * (bc * r12 - b * r21) - 2.0 * gam * r22,
    ]


def eliminated_rhs(p: ControlParams, rho: np.ndarray) -> np.ndarray:
    """Second-order eliminated two-level right-hand side (keeps the cross
    terms the leading-order Lindblad equation drops)."""
    rho = np.asarray(rho, dtype=complex)
    d = eliminated_deriv_flat(p.scalars(), (rho[0, 0], rho[0, 1], rho[1, 0], rho[1, 1]))
    return np.array(d, dtype=complex).reshape(2, 2)


def eliminated_deriv_flat(c: tuple, y) -> list:
    o1, d1, o2, d2, g0, g2, qx = c
    g = 0.5 * (g0 + g2)
    if g == 0.0:
        raise ValueError("adiabatic elimination invalid at gamma = 0")
    a1s = (o1 * o1.conjugate()).real
    a2s = (o2 * o2.conjugate()).real
    d4 = _delta4(a1s, a2s, g, d1, d2)
    if d4 == 0.0:
        raise ValueError("degenerate model: delta4 vanishes (all control parameters zero)")
    o1c = o1.conjugate()
    r11, r12, r21, r22 = y
    big = a2s + g * g + d2 * d2
    gm = g - 1j * (d1 + d2)
    gp = gm.conjugate()
    two_g_d4 = 2.0 * g * d4
    n12 = 2.0 * g * gm * big + a1s * (a2s + 2.0 * g * (g + 1j * d2))
    m12 = a1s + (g - 1j * d2) * gm
    m21 = m12.conjugate()
    d12 = (
        -1j * r12 * (d1 - 1j * a2s * n12 / two_g_d4)
        + 1j * o1 * r22 * (1.0 - a2s * m12 / d4)
        + (o1 * o1 * a2s * a2s / two_g_d4) * r21
        - 1j * o1 * r11
    )
    d21 = (
        1j * r21 * (d1 + 1j * a2s * n12.conjugate() / two_g_d4)
        - 1j * o1c * r22 * (1.0 - a2s * m21 / d4)
        + (a2s * a2s * o1c * o1c / two_g_d4) * r12
        + 1j * r11 * o1c
    )
    s = d1 + d2
    d22 = (
        -g0 * r22 * a2s * (a1s + g * g + s * s) / d4
        + 1j * o1 * r21 * (-1.0 + (2.0 * g - g2) * a2s * m21 / two_g_d4)
        - 1j * r12 * o1c * (-1.0 + (2.0 * g - g2) * a2s * m12 / two_g_d4)
    )
    d11 = -1j * r12 * o1c + 1j * o1 * r21
    if qx != 0.0:
        d12 += 4j * qx * r12
        d21 -= 4j * qx * r21
    return [d11, d12, d21, d22]


def full3_rhs(p: ControlParams, rho: np.ndarray) -> np.ndarray:
    """Full three-level right-hand side over the basis {|1>, |2>, |3>}.

    The trace leaks at rate gamma0 * rho33 into the projected-out bystander
    state; everything else is norm-conserving.
    """
    rho = np.asarray(rho, dtype=complex)
    d = full3_deriv_flat(p.scalars(), tuple(rho.reshape(9)))
    return np.array(d, dtype=complex).reshape(3, 3)


def full3_deriv_flat(c: tuple, y) -> list:
    o1, d1, o2, d2, g0, g2, qx = c
    g = 0.5 * (g0 + g2)
    o1c = o1.conjugate()
    o2c = o2.conjugate()
    r11, r12, r13, r21, r22, r23, r31, r32, r33 = y
    d11 = 1j * o1 * r21 - 1j * r12 * o1c
    d12 = -1j * (r13 * o2c + d1 * r12 + o1 * (r11 - r22))
    d13 = -r13 * (g + 1j * d1 + 1j * d2) - 1j * o2 * r12 + 1j * o1 * r23
    d21 = 1j * (r31 * o2 + d1 * r21 + o1c * (r11 - r22))
    d22 = g2 * r33 + 1j * (r12 * o1c - r23 * o2c - o1 * r21 + o2 * r32)
    d23 = 1j * (1j * r23 * (g + 1j * d2) + r13 * o1c + o2 * (r33 - r22))
    d31 = -r31 * (g - 1j * d1 - 1j * d2) + 1j * o2c * r21 - 1j * o1c * r32
    d32 = -1j * (-1j * r32 * (g - 1j * d2) + r31 * o1 + o2c * (r33 - r22))
    d33 = 1j * (2j * g * r33 + r23 * o2c - o2 * r32)
    if qx != 0.0:
        # momentum shift acts on the open two-level block only
        d12 += 4j * qx * r12
        d21 -= 4j * qx * r21
    return [d11, d12, d13, d21, d22, d23, d31, d32, d33]


TIER_FLAT_KERNELS = {
    "lindblad": (lindblad_deriv_flat, 2),
    "eliminated": (eliminated_deriv_flat, 2),
    "full3": (full3_deriv_flat, 3),
}


# ---------------------------------------------------------------------------
# Density-matrix validation and embedding helpers.
# ---------------------------------------------------------------------------

def check_density(rho: np.ndarray, tol_scale: float = 1.0) -> np.ndarray:
    """Validate the density-matrix invariants: Hermitian, positive
    semidefinite, and 0 <= trace <= 1 (up to tolerance). Returns the input
    as a complex ndarray."""
    rho = np.asarray(rho, dtype=complex)
    n = rho.shape[0]
    if rho.shape != (n, n) or n not in (2, 3):
        raise ValueError(f"density matrix must be 2x2 or 3x3, got shape {rho.shape}")
    dev = float(np.abs(rho - rho.conj().T).max())
    if dev > HERMITICITY_TOL * tol_scale:
        raise ValueError(f"density matrix not Hermitian (deviation {dev:.3e})")
    evals = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if evals.min() < -PSD_TOL * tol_scale:
        raise ValueError(f"density matrix not positive semidefinite (min eigenvalue {evals.min():.3e})")
    tr = float(rho.trace().real)
    if tr < -TRACE_TOL * tol_scale or tr > 1.0 + TRACE_TOL * tol_scale:
        raise ValueError(f"density matrix trace {tr!r} outside [0, 1]")
    return rho


def embed_two_level(rho2: np.ndarray) -> np.ndarray:
    """Embed a 2x2 density matrix into the three-level space with the
    excited state unpopulated."""
    rho3 = np.zeros((3, 3), dtype=complex)
    rho3[:2, :2] = np.asarray(rho2, dtype=complex)
    return rho3


def project_two_level(rho3: np.ndarray) -> np.ndarray:
    """Project a 3x3 density matrix onto the open two-level block."""
    return np.asarray(rho3, dtype=complex)[:2, :2].copy()
