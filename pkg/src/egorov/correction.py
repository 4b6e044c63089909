"""Propagation of the second-order correction tensors alongside the flow.

The correction to the classically transported observable is

    a2(t) = -1/4 ( (D3a o Phi^t)_ijk L^t_kji + 3 (D2a o Phi^t)_ij G^t_ji
                   + (Da o Phi^t)_i X^t_i ),

where the 3-tensor L, matrix G, and vector X start from zero and satisfy a
linear ODE system driven by the flow.  For kinetic-plus-potential
Hamiltonians the third and fourth derivatives of h vanish on momentum
indices, so splitting each tensor by position/momentum index pattern leaves
a sparse block system: with the state grouped as

    Psi1 = q
    Psi2 = (p, L-blocks with one momentum index, all-momentum L-block,
            G-blocks with one momentum index, momentum X-block)
    Psi3 = (all-position L-block, L-blocks with two momentum indices,
            position G-block, momentum-momentum G-block, position X-block)

the derivative of Psi2 depends only on (Psi1, Psi3) and vice versa, plus an
inhomogeneity depending on Psi1 alone.  Each of the three sub-flows is
therefore exact (its right-hand side is frozen along it), and their
symmetric composition gives the second-order step :func:`f2_step`; the
Yoshida triple jump gives :func:`f4_step`.

All states are batched: every field carries leading sample axes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .flow import step_count, yoshida_coefficients
from .observables import Observable
from .potentials import Hamiltonian, Potential
from .tensor_ops import apply_J_triple, j_contract_axis, tilde_d3

__all__ = [
    "CorrectionState",
    "GeneralCorrectionState",
    "sub_flow_psi1",
    "sub_flow_psi2",
    "sub_flow_psi3",
    "f2_step",
    "f4_step",
    "evolve_correction",
    "evolve_correction_snapshots",
    "a2_eval",
    "assemble_blocks",
    "general_rhs",
    "evolve_general",
]


@dataclass(frozen=True)
class CorrectionState:
    """Trajectory-attached correction tensors in the reordered block layout.

    Block naming: ``lam1`` is the all-position 3-tensor block; ``lam21/22/23``
    carry one momentum index (in slot 1/2/3), ``lam31/32/33`` two momentum
    indices (complement slot 1/2/3), ``lam4`` all momentum.  ``gam21/gam22``
    are the momentum-row / momentum-column matrix blocks, ``gam1/gam3`` the
    pure blocks; ``xi1/xi2`` are the position/momentum vector parts.
    Shapes: ``q, p, xi1, xi2`` are (..., d); lam blocks (..., d, d, d);
    gam blocks (..., d, d).
    """

    q: np.ndarray
    p: np.ndarray
    lam1: np.ndarray
    lam21: np.ndarray
    lam22: np.ndarray
    lam23: np.ndarray
    lam31: np.ndarray
    lam32: np.ndarray
    lam33: np.ndarray
    lam4: np.ndarray
    gam1: np.ndarray
    gam21: np.ndarray
    gam22: np.ndarray
    gam3: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    t: float = 0.0

    @classmethod
    def initial(cls, z0: np.ndarray) -> "CorrectionState":
        """Zero correction tensors attached to phase points z0 (..., 2d)."""
        z0 = np.asarray(z0, dtype=float)
        d = z0.shape[-1] // 2
        batch = z0.shape[:-1]
        t3 = np.zeros(batch + (d, d, d))
        t2 = np.zeros(batch + (d, d))
        t1 = np.zeros(batch + (d,))
        return cls(
            q=z0[..., :d].copy(),
            p=z0[..., d:].copy(),
            lam1=t3, lam21=t3.copy(), lam22=t3.copy(), lam23=t3.copy(),
            lam31=t3.copy(), lam32=t3.copy(), lam33=t3.copy(), lam4=t3.copy(),
            gam1=t2, gam21=t2.copy(), gam22=t2.copy(), gam3=t2.copy(),
            xi1=t1, xi2=t1.copy(),
        )

    @property
    def d(self) -> int:
        return self.q.shape[-1]

    @property
    def z(self) -> np.ndarray:
        """Phase point(s) (..., 2d)."""
        return np.concatenate((self.q, self.p), axis=-1)

    # -- conversions between the block layout and full phase-space tensors --

    def lambda_full(self) -> np.ndarray:
        """Reassembled 3-tensor over phase-space indices, (..., 2d, 2d, 2d)."""
        d = self.d
        out = np.zeros(self.q.shape[:-1] + (2 * d,) * 3)
        out[..., :d, :d, :d] = self.lam1
        out[..., d:, :d, :d] = self.lam21
        out[..., :d, d:, :d] = self.lam22
        out[..., :d, :d, d:] = self.lam23
        out[..., :d, d:, d:] = self.lam31
        out[..., d:, :d, d:] = self.lam32
        out[..., d:, d:, :d] = self.lam33
        out[..., d:, d:, d:] = self.lam4
        return out

    def gamma_full(self) -> np.ndarray:
        d = self.d
        out = np.zeros(self.q.shape[:-1] + (2 * d, 2 * d))
        out[..., :d, :d] = self.gam1
        out[..., d:, :d] = self.gam21
        out[..., :d, d:] = self.gam22
        out[..., d:, d:] = self.gam3
        return out

    def xi_full(self) -> np.ndarray:
        return np.concatenate((self.xi1, self.xi2), axis=-1)

    @classmethod
    def from_full(cls, z, lam, gam, xi, t: float = 0.0) -> "CorrectionState":
        """Split full phase-space tensors into the block layout."""
        z = np.asarray(z, dtype=float)
        d = z.shape[-1] // 2
        return cls(
            q=z[..., :d].copy(), p=z[..., d:].copy(),
            lam1=lam[..., :d, :d, :d].copy(),
            lam21=lam[..., d:, :d, :d].copy(),
            lam22=lam[..., :d, d:, :d].copy(),
            lam23=lam[..., :d, :d, d:].copy(),
            lam31=lam[..., :d, d:, d:].copy(),
            lam32=lam[..., d:, :d, d:].copy(),
            lam33=lam[..., d:, d:, :d].copy(),
            lam4=lam[..., d:, d:, d:].copy(),
            gam1=gam[..., :d, :d].copy(),
            gam21=gam[..., d:, :d].copy(),
            gam22=gam[..., :d, d:].copy(),
            gam3=gam[..., d:, d:].copy(),
            xi1=xi[..., :d].copy(), xi2=xi[..., d:].copy(),
            t=t,
        )

    # -- documented flat layouts (used by the dense block matrices) --

    def psi2_vector(self) -> np.ndarray:
        """Concatenation (p, lam21, lam22, lam23, lam4, gam21, gam22, xi2),
        each tensor vec'd row-major; length 4d^3 + 2d^2 + 2d."""
        batch = self.q.shape[:-1]
        parts = (self.p, self.lam21, self.lam22, self.lam23, self.lam4,
                 self.gam21, self.gam22, self.xi2)
        return np.concatenate([p.reshape(batch + (-1,)) for p in parts], axis=-1)

    def psi3_vector(self) -> np.ndarray:
        """Concatenation (lam1, lam31, lam32, lam33, gam1, gam3, xi1);
        length 4d^3 + 2d^2 + d."""
        batch = self.q.shape[:-1]
        parts = (self.lam1, self.lam31, self.lam32, self.lam33,
                 self.gam1, self.gam3, self.xi1)
        return np.concatenate([p.reshape(batch + (-1,)) for p in parts], axis=-1)


def _mode1(w: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.einsum("...ia,...ajk->...ijk", w, t)


def _mode2(w: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.einsum("...ja,...iak->...ijk", w, t)


def _mode3(w: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.einsum("...ka,...ija->...ijk", w, t)


def sub_flow_psi1(t: float, state: CorrectionState) -> CorrectionState:
    """Exact drift: q += t p; everything else untouched."""
    return replace(state, q=state.q + t * state.p)


def sub_flow_psi2(t: float, state: CorrectionState, potential: Potential) -> CorrectionState:
    """Exact sub-flow updating the momentum-type blocks from the frozen
    position-type blocks (plus the inhomogeneity at q)."""
    q = state.q
    w2 = potential.hessian(q)
    w3 = potential.third(q)
    w4 = potential.fourth(q)
    return replace(
        state,
        p=state.p - t * potential.gradient(q),
        lam21=state.lam21 + t * (-_mode1(w2, state.lam1) + state.lam33 + state.lam32),
        lam22=state.lam22 + t * (-_mode2(w2, state.lam1) + state.lam33 + state.lam31),
        lam23=state.lam23 + t * (-_mode3(w2, state.lam1) + state.lam32 + state.lam31),
        lam4=state.lam4 + t * (
            -_mode1(w2, state.lam31) - _mode2(w2, state.lam32)
            - _mode3(w2, state.lam33) - tilde_d3(w3)
        ),
        gam21=state.gam21 + t * (
            -np.einsum("...ikl,...lkj->...ij", w3, state.lam1)
            - w2 @ state.gam1 + state.gam3
        ),
        gam22=state.gam22 + t * (-state.gam1 @ w2 + state.gam3),
        xi2=state.xi2 + t * (
            -np.einsum("...ijkl,...lkj->...i", w4, state.lam1)
            - 3.0 * np.einsum("...ijk,...kj->...i", w3, state.gam1)
            - np.einsum("...ij,...j->...i", w2, state.xi1)
        ),
    )


def sub_flow_psi3(t: float, state: CorrectionState, potential: Potential) -> CorrectionState:
    """Exact sub-flow updating the position-type blocks from the frozen
    momentum-type blocks."""
    w2 = potential.hessian(state.q)
    w3 = potential.third(state.q)
    return replace(
        state,
        lam1=state.lam1 + t * (state.lam21 + state.lam22 + state.lam23),
        lam31=state.lam31 + t * (
            state.lam4 - _mode2(w2, state.lam23) - _mode3(w2, state.lam22)
        ),
        lam32=state.lam32 + t * (
            state.lam4 - _mode1(w2, state.lam23) - _mode3(w2, state.lam21)
        ),
        lam33=state.lam33 + t * (
            state.lam4 - _mode1(w2, state.lam22) - _mode2(w2, state.lam21)
        ),
        gam1=state.gam1 + t * (state.gam21 + state.gam22),
        gam3=state.gam3 + t * (
            -np.einsum("...ikl,...lkj->...ij", w3, state.lam23)
            - w2 @ state.gam22 - state.gam21 @ w2
        ),
        xi1=state.xi1 + t * state.xi2,
    )


def f2_step(tau: float, state: CorrectionState, potential: Potential) -> CorrectionState:
    """Symmetric second-order step (Strang composition of the sub-flows)."""
    state = sub_flow_psi2(0.5 * tau, state, potential)
    state = sub_flow_psi1(0.5 * tau, state)
    state = sub_flow_psi3(tau, state, potential)
    state = sub_flow_psi1(0.5 * tau, state)
    state = sub_flow_psi2(0.5 * tau, state, potential)
    return replace(state, t=state.t + tau)


_F4_COEFFS = yoshida_coefficients(4)


def f4_step(tau: float, state: CorrectionState, potential: Potential) -> CorrectionState:
    """Fourth-order triple jump of :func:`f2_step`."""
    for c in _F4_COEFFS:
        state = f2_step(c * tau, state, potential)
    return state


def evolve_correction(
    z0: np.ndarray, t: float, tau: float, potential: Potential
) -> CorrectionState:
    """Correction state at time t from zero initial tensors at z0, composed
    fourth-order steps of nominal size tau."""
    state = CorrectionState.initial(z0)
    n = step_count(t, tau)
    if n == 0:
        return state
    tau_eff = t / n
    for _ in range(n):
        state = f4_step(tau_eff, state, potential)
    return state


def evolve_correction_snapshots(
    z0: np.ndarray, times, tau: float, potential: Potential
) -> list[CorrectionState]:
    """Correction states at each snapshot time, from one continuous run."""
    state = CorrectionState.initial(z0)
    out = []
    t_prev = 0.0
    for t_snap in times:
        seg = t_snap - t_prev
        if seg < 0:
            raise ValueError("snapshot times must be nondecreasing")
        n = step_count(seg, tau)
        if n:
            tau_eff = seg / n
            for _ in range(n):
                state = f4_step(tau_eff, state, potential)
        t_prev = t_snap
        out.append(state)
    return out


def a2_eval(observable: Observable, state: CorrectionState) -> np.ndarray:
    """Second-order correction value(s) for one observable.

    Contracts the observable's derivative tensors at the transported phase
    point against the reassembled correction tensors, with the reversed
    index order (kji / ji) of the defining formula.
    """
    z = state.z
    lam = state.lambda_full()
    gam = state.gamma_full()
    xi = state.xi_full()
    d3a = observable.third(z)
    d2a = observable.hess(z)
    da = observable.grad(z)
    return -0.25 * (
        np.einsum("...ijk,...kji->...", d3a, lam)
        + 3.0 * np.einsum("...ij,...ji->...", d2a, gam)
        + np.einsum("...i,...i->...", da, xi)
    )


def assemble_blocks(potential: Potential, q: np.ndarray):
    """Dense block operators (A2, A3, b2) of the split system at position q.

    A2 maps a Psi3-layout vector to a Psi2-layout derivative, A3 the
    reverse, and b2 is the Psi2 inhomogeneity.  This materialization exists
    for validation; production stepping contracts the blocks implicitly.
    """
    q = np.asarray(q, dtype=float)
    d = potential.d
    w2 = potential.hessian(q)
    w3m = potential.third(q).reshape(d, d * d)  # rows i, columns (j, k)
    w4m = potential.fourth(q).reshape(d, d * d * d)
    eye = np.eye(d)
    eye2 = np.eye(d * d)
    eye3 = np.eye(d**3)
    zero3 = np.zeros((d**3, d**3))

    m1 = -np.kron(np.kron(w2, eye), eye)
    m2 = -np.kron(np.kron(eye, w2), eye)
    m3 = -np.kron(np.kron(eye, eye), w2)

    n2, n3 = 4 * d**3 + 2 * d**2 + 2 * d, 4 * d**3 + 2 * d**2 + d
    a2 = np.zeros((n2, n3))
    a3 = np.zeros((n3, n2))

    # Psi2 layout offsets: p, lam21, lam22, lam23, lam4, gam21, gam22, xi2
    o2 = np.cumsum([0, d, d**3, d**3, d**3, d**3, d*d, d*d])
    # Psi3 layout offsets: lam1, lam31, lam32, lam33, gam1, gam3, xi1
    o3 = np.cumsum([0, d**3, d**3, d**3, d**3, d*d, d*d])

    def put(mat, ro, co, block):
        mat[ro[0]:ro[1], co[0]:co[1]] = block

    s2 = [(o2[i], o2[i] + n) for i, n in enumerate([d, d**3, d**3, d**3, d**3, d*d, d*d, d])]
    s3 = [(o3[i], o3[i] + n) for i, n in enumerate([d**3, d**3, d**3, d**3, d*d, d*d, d])]

    # rows lam21/22/23: mode contraction on lam1 plus pairs of lam3 blocks
    for row, mode_block, pair in (
        (1, m1, (2, 3)),   # lam21 <- lam32 + lam33
        (2, m2, (1, 3)),   # lam22 <- lam31 + lam33
        (3, m3, (1, 2)),   # lam23 <- lam31 + lam32
    ):
        put(a2, s2[row], s3[0], mode_block)
        for col in pair:
            put(a2, s2[row], s3[col], eye3)
    # row lam4: modes on lam31/32/33
    put(a2, s2[4], s3[1], m1)
    put(a2, s2[4], s3[2], m2)
    put(a2, s2[4], s3[3], m3)
    # rows gam21/gam22
    put(a2, s2[5], s3[0], -np.kron(w3m, eye))
    put(a2, s2[5], s3[4], -np.kron(w2, eye))
    put(a2, s2[5], s3[5], eye2)
    put(a2, s2[6], s3[4], -np.kron(eye, w2))
    put(a2, s2[6], s3[5], eye2)
    # row xi2 (the Xi coupling block is -D2V, matching the Xi equation)
    put(a2, s2[7], s3[0], -w4m)
    put(a2, s2[7], s3[4], -3.0 * w3m)
    put(a2, s2[7], s3[6], -w2)

    # rows lam1 and lam31/32/33 of A3
    for col in (1, 2, 3):
        put(a3, s3[0], s2[col], eye3)
    put(a3, s3[1], s2[2], m3)
    put(a3, s3[1], s2[3], m2)
    put(a3, s3[2], s2[1], m3)
    put(a3, s3[2], s2[3], m1)
    put(a3, s3[3], s2[1], m2)
    put(a3, s3[3], s2[2], m1)
    for row in (1, 2, 3):
        put(a3, s3[row], s2[4], eye3)
    # rows gam1, gam3, xi1
    put(a3, s3[4], s2[5], eye2)
    put(a3, s3[4], s2[6], eye2)
    put(a3, s3[5], s2[3], -np.kron(w3m, eye))
    put(a3, s3[5], s2[5], -np.kron(eye, w2))
    put(a3, s3[5], s2[6], -np.kron(w2, eye))
    put(a3, s3[6], s2[7], eye)

    b2 = np.zeros(n2)
    b2[s2[0][0]:s2[0][1]] = -potential.gradient(q)
    b2[s2[4][0]:s2[4][1]] = -tilde_d3(potential.third(q)).ravel()
    return a2, a3, b2


def _state_from_layout(q, psi2, psi3, t):
    """Rebuild a CorrectionState from the flat Psi2/Psi3 layout vectors."""
    d = q.shape[-1]
    c3, c2 = d**3, d * d

    def cut(vec, sizes):
        offs = np.cumsum([0] + sizes)
        return [vec[a:b] for a, b in zip(offs[:-1], offs[1:])]

    p, lam21, lam22, lam23, lam4, gam21, gam22, xi2 = cut(
        psi2, [d, c3, c3, c3, c3, c2, c2, d])
    lam1, lam31, lam32, lam33, gam1, gam3, xi1 = cut(
        psi3, [c3, c3, c3, c3, c2, c2, d])
    t3, t2 = (d, d, d), (d, d)
    return CorrectionState(
        q=q.copy(), p=p.copy(),
        lam1=lam1.reshape(t3), lam21=lam21.reshape(t3),
        lam22=lam22.reshape(t3), lam23=lam23.reshape(t3),
        lam31=lam31.reshape(t3), lam32=lam32.reshape(t3),
        lam33=lam33.reshape(t3), lam4=lam4.reshape(t3),
        gam1=gam1.reshape(t2), gam21=gam21.reshape(t2),
        gam22=gam22.reshape(t2), gam3=gam3.reshape(t2),
        xi1=xi1.copy(), xi2=xi2.copy(), t=t,
    )


def evolve_correction_dense(
    z0: np.ndarray, t: float, tau: float, potential: Potential
) -> CorrectionState:
    """Correction state computed through the materialized block matrices.

    Same composition as :func:`evolve_correction`, but every sub-flow applies
    the dense operators from :func:`assemble_blocks` to the flat layout
    vectors.  Single trajectory only; exists so that a fault in any assembled
    coupling block changes the result and gets caught by the cross-checks.
    """
    z0 = np.asarray(z0, dtype=float)
    if z0.ndim != 1:
        raise ValueError("dense evolution handles a single phase point")
    d = z0.shape[0] // 2
    state0 = CorrectionState.initial(z0)
    q = state0.q.copy()
    psi2 = state0.psi2_vector().copy()
    psi3 = state0.psi3_vector().copy()
    n = step_count(t, tau)
    if n == 0:
        return state0
    tau_eff = t / n

    def half_psi2(s):
        a2, _, b2 = assemble_blocks(potential, q)
        return psi2 + s * (a2 @ psi3 + b2)

    for _ in range(n):
        for c in _F4_COEFFS:
            s = c * tau_eff
            psi2 = half_psi2(0.5 * s)
            q = q + 0.5 * s * psi2[:d]
            _, a3, _ = assemble_blocks(potential, q)
            psi3 = psi3 + s * (a3 @ psi2)
            q = q + 0.5 * s * psi2[:d]
            psi2 = half_psi2(0.5 * s)
    return _state_from_layout(q, psi2, psi3, t)


# ---------------------------------------------------------------------------
# Unreordered phase-space form, kept as an independent cross-check.  It works
# with the full (2d)-index tensors and a generic one-step integrator, sharing
# no code path with the split-step blocks above.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneralCorrectionState:
    """Correction tensors in flat phase-space form.

    ``lam_vec`` and ``gam_vec`` hold the row-major vectorizations of the full
    (2d)^3 tensor and (2d)^2 matrix; ``xi`` is the 2d-vector.  Batched like
    :class:`CorrectionState`.
    """

    z: np.ndarray
    lam_vec: np.ndarray
    gam_vec: np.ndarray
    xi: np.ndarray
    t: float = 0.0

    @classmethod
    def initial(cls, z0: np.ndarray) -> "GeneralCorrectionState":
        z0 = np.asarray(z0, dtype=float)
        n = z0.shape[-1]
        batch = z0.shape[:-1]
        return cls(
            z=z0.copy(),
            lam_vec=np.zeros(batch + (n**3,)),
            gam_vec=np.zeros(batch + (n**2,)),
            xi=np.zeros(batch + (n,)),
        )

    @property
    def lam(self) -> np.ndarray:
        n = self.z.shape[-1]
        return self.lam_vec.reshape(self.z.shape[:-1] + (n, n, n))

    @property
    def gam(self) -> np.ndarray:
        n = self.z.shape[-1]
        return self.gam_vec.reshape(self.z.shape[:-1] + (n, n))

    def to_block(self) -> CorrectionState:
        return CorrectionState.from_full(self.z, self.lam, self.gam, self.xi, self.t)

    @classmethod
    def from_block(cls, s: CorrectionState) -> "GeneralCorrectionState":
        batch = s.q.shape[:-1]
        return cls(
            z=s.z,
            lam_vec=s.lambda_full().reshape(batch + (-1,)),
            gam_vec=s.gamma_full().reshape(batch + (-1,)),
            xi=s.xi_full(),
            t=s.t,
        )


def general_rhs(state: GeneralCorrectionState, h: Hamiltonian):
    """Time derivative (dz, dlam_vec, dgam_vec, dxi) of the flat-form system.

    The tensor equations, with M the symplectic contraction of the Hessian
    of h at z and the inhomogeneities built from third/fourth derivatives:

        dLam = M on each of the three modes of Lam + tilde-weighted,
               triply contracted third-derivative source
        dGam = (single-contraction third-derivative source) : Lam
               + M Gam + Gam M^T
        dXi  = (fourth-derivative source) : Lam + 3 source : Gam + M Xi
    """
    z = state.z
    lam, gam, xi = state.lam, state.gam, state.xi
    batch = z.shape[:-1]

    dh = h.gradient(z)
    m = j_contract_axis(h.hessian(z), axis=-2)
    c1 = apply_J_triple(tilde_d3(h.third(z)))
    c2 = j_contract_axis(h.third(z), axis=-3)
    c3 = j_contract_axis(h.fourth(z), axis=-4)

    dz = j_contract_axis(dh, axis=-1)
    dlam = (
        np.einsum("...il,...ljk->...ijk", m, lam)
        + np.einsum("...jl,...ilk->...ijk", m, lam)
        + np.einsum("...kl,...ijl->...ijk", m, lam)
        + c1
    )
    dgam = (
        np.einsum("...ikl,...lkj->...ij", c2, lam)
        + np.einsum("...il,...lj->...ij", m, gam)
        + np.einsum("...jl,...il->...ij", m, gam)
    )
    dxi = (
        np.einsum("...ijkl,...lkj->...i", c3, lam)
        + 3.0 * np.einsum("...ijk,...kj->...i", c2, gam)
        + np.einsum("...il,...l->...i", m, xi)
    )
    return dz, dlam.reshape(batch + (-1,)), dgam.reshape(batch + (-1,)), dxi


def _general_axpy(s: GeneralCorrectionState, c: float, rhs) -> GeneralCorrectionState:
    dz, dlam, dgam, dxi = rhs
    return GeneralCorrectionState(
        z=s.z + c * dz,
        lam_vec=s.lam_vec + c * dlam,
        gam_vec=s.gam_vec + c * dgam,
        xi=s.xi + c * dxi,
        t=s.t,
    )


def evolve_general(
    z0: np.ndarray, t: float, tau: float, h: Hamiltonian
) -> GeneralCorrectionState:
    """Classic fixed-step RK4 integration of the flat-form system.

    Deliberately not the splitting integrator, so that agreement with
    :func:`evolve_correction` validates both.
    """
    state = GeneralCorrectionState.initial(z0)
    n = step_count(t, tau)
    if n == 0:
        return state
    dt = t / n
    for i in range(n):
        k1 = general_rhs(state, h)
        k2 = general_rhs(_general_axpy(state, 0.5 * dt, k1), h)
        k3 = general_rhs(_general_axpy(state, 0.5 * dt, k2), h)
        k4 = general_rhs(_general_axpy(state, dt, k3), h)
        combo = tuple(
            (a + 2.0 * b + 2.0 * c + e) / 6.0
            for a, b, c, e in zip(k1, k2, k3, k4)
        )
        state = _general_axpy(state, dt, combo)
        state = replace(state, t=(i + 1) * dt)
    return state
