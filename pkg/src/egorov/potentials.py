"""Smooth potentials with analytic derivative tensors up to fourth order.

Every evaluator is batched: positions have shape ``(..., d)`` and the
order-k derivative tensor comes back with shape ``(..., d, ..., d)`` (k
trailing axes).  Derivatives are supplied analytically because the
correction dynamics consume third and fourth derivatives at every step;
finite differences exist only as a test aid (:func:`finite_difference_check`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Potential",
    "TorsionalPotential",
    "HarmonicPotential",
    "FreePotential",
    "torsional_potential",
    "harmonic_potential",
    "free_potential",
    "Hamiltonian",
    "finite_difference_check",
]


class Potential:
    """Base class bundling a potential's value and derivative tensors.

    Subclasses set ``d`` and implement ``value`` through ``fourth``.
    Evaluators are pure and re-entrant; instances carry no mutable state.
    """

    d: int

    def value(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def third(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def fourth(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, q: np.ndarray, order: int) -> np.ndarray:
        """Order-k derivative tensor, k = 0..4."""
        evaluators = (self.value, self.gradient, self.hessian, self.third, self.fourth)
        if not 0 <= order < len(evaluators):
            raise ValueError(f"derivative order {order} not available")
        return evaluators[order](q)


def _diagonal_tensor(diag: np.ndarray, order: int) -> np.ndarray:
    """Dense order-k tensor with ``diag`` on the main diagonal, batched."""
    diag = np.asarray(diag)
    d = diag.shape[-1]
    out = np.zeros(diag.shape[:-1] + (d,) * order)
    idx = np.arange(d)
    out[(..., *([idx] * order))] = diag
    return out


@dataclass(frozen=True)
class TorsionalPotential(Potential):
    """V(q) = d - sum_j cos(q_j).

    All derivative tensors are diagonal: the order-k diagonal cycles through
    sin, cos, -sin, -cos.
    """

    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be at least 1")

    def value(self, q):
        q = np.asarray(q)
        return self.d - np.sum(np.cos(q), axis=-1)

    def gradient(self, q):
        return np.sin(np.asarray(q))

    def hessian(self, q):
        return _diagonal_tensor(np.cos(q), 2)

    def third(self, q):
        return _diagonal_tensor(-np.sin(q), 3)

    def fourth(self, q):
        return _diagonal_tensor(-np.cos(q), 4)


@dataclass(frozen=True)
class HarmonicPotential(Potential):
    """V(q) = 1/2 sum_j omega_j^2 q_j^2; third and fourth derivatives vanish,
    so the flow is exactly linear and all correction sources are zero."""

    omega: np.ndarray
    d: int = field(init=False)

    def __post_init__(self):
        omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        if omega.ndim != 1 or np.any(omega <= 0):
            raise ValueError("stiffness must be a vector of positive entries")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "d", omega.shape[0])

    def value(self, q):
        q = np.asarray(q)
        return 0.5 * np.sum(self.omega**2 * q**2, axis=-1)

    def gradient(self, q):
        return self.omega**2 * np.asarray(q)

    def hessian(self, q):
        q = np.asarray(q)
        hess = np.diag(self.omega**2)
        return np.broadcast_to(hess, q.shape[:-1] + hess.shape).copy()

    def third(self, q):
        q = np.asarray(q)
        return np.zeros(q.shape[:-1] + (self.d,) * 3)

    def fourth(self, q):
        q = np.asarray(q)
        return np.zeros(q.shape[:-1] + (self.d,) * 4)


@dataclass(frozen=True)
class FreePotential(Potential):
    """V = 0: free motion.  Useful as a reference case with exact dynamics."""

    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be at least 1")

    def value(self, q):
        q = np.asarray(q)
        return np.zeros(q.shape[:-1])

    def gradient(self, q):
        return np.zeros_like(np.asarray(q, dtype=float))

    def hessian(self, q):
        q = np.asarray(q)
        return np.zeros(q.shape[:-1] + (self.d,) * 2)

    def third(self, q):
        q = np.asarray(q)
        return np.zeros(q.shape[:-1] + (self.d,) * 3)

    def fourth(self, q):
        q = np.asarray(q)
        return np.zeros(q.shape[:-1] + (self.d,) * 4)


def torsional_potential(d: int) -> TorsionalPotential:
    """Torsional test potential in d dimensions."""
    return TorsionalPotential(d)


def harmonic_potential(d: int, stiffness) -> HarmonicPotential:
    """Harmonic potential with per-axis stiffness (d entries or a scalar)."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    omega = np.broadcast_to(np.asarray(stiffness, dtype=float), (d,))
    return HarmonicPotential(omega)


def free_potential(d: int) -> FreePotential:
    """Zero potential in d dimensions."""
    return FreePotential(d)


@dataclass(frozen=True)
class Hamiltonian:
    """h(q, p) = |p|^2 / 2 + V(q) with phase-space derivative tensors.

    Third and fourth derivatives vanish on any index touching the momentum
    block; only the position block carries the potential's tensors.
    """

    potential: Potential

    @property
    def d(self) -> int:
        return self.potential.d

    def value(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z)
        d = self.d
        q, p = z[..., :d], z[..., d:]
        return 0.5 * np.sum(p**2, axis=-1) + self.potential.value(q)

    def gradient(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z)
        d = self.d
        out = np.empty_like(z, dtype=float)
        out[..., :d] = self.potential.gradient(z[..., :d])
        out[..., d:] = z[..., d:]
        return out

    def hessian(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z)
        d = self.d
        out = np.zeros(z.shape[:-1] + (2 * d, 2 * d))
        out[..., :d, :d] = self.potential.hessian(z[..., :d])
        out[..., d:, d:] = np.eye(d)
        return out

    def third(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z)
        d = self.d
        out = np.zeros(z.shape[:-1] + (2 * d,) * 3)
        out[..., :d, :d, :d] = self.potential.third(z[..., :d])
        return out

    def fourth(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z)
        d = self.d
        out = np.zeros(z.shape[:-1] + (2 * d,) * 4)
        out[..., :d, :d, :d, :d] = self.potential.fourth(z[..., :d])
        return out


def finite_difference_check(
    potential: Potential, q: np.ndarray, order: int, step: float = 1e-5
) -> float:
    """Max absolute difference between the analytic order-k derivative and a
    central difference of the order-(k-1) evaluator.  O(step^2) accurate."""
    if step <= 0:
        raise ValueError("step must be positive")
    if not 1 <= order <= 4:
        raise ValueError("order must be between 1 and 4")
    q = np.asarray(q, dtype=float)
    analytic = potential.derivative(q, order)
    fd = np.empty_like(analytic)
    for j in range(potential.d):
        dq = np.zeros_like(q)
        dq[..., j] = step
        plus = potential.derivative(q + dq, order - 1)
        minus = potential.derivative(q - dq, order - 1)
        fd[..., j] = (plus - minus) / (2.0 * step)
    return float(np.max(np.abs(analytic - fd)))
