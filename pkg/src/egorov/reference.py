"""Grid-based reference dynamics: split-step Fourier propagation.

Solves i eps d_t psi = (-eps^2/2 Laplace + V) psi on a periodic tensor grid
with Strang splitting: a half step of the potential phase, a full kinetic
step applied in Fourier space, another half step of the potential.  Position
observables are quadratures of |psi|^2 on the grid; momentum observables use
Fourier multipliers (the momentum operator is eps k after transforming).

Steps are unitary, so the discrete norm is conserved to roundoff; the
boundary shell of the (formally periodic) domain is monitored because the
packet must stay essentially inside for the periodification to be harmless.

Expectation tables are cached as CSV keyed by a hash of the full
configuration, since reference runs dominate the cost of comparisons.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.fft import fftn, ifftn
from scipy.special import erfc

from .flow import step_count
from .potentials import Potential
from .sampling import GaussianPacket

__all__ = [
    "GridSpec",
    "WaveFunctionGrid",
    "init_packet",
    "schrodinger_step",
    "expectation",
    "reference_expectations",
]

_BOUNDARY_INIT_TOL = 1e-12
_BOUNDARY_RUN_TOL = 1e-8
_SHELL_WIDTH = 2


@dataclass(frozen=True)
class GridSpec:
    """Tensor-product collocation grid, the same on every axis."""

    d: int
    n: int
    x_min: float = -3.0
    x_max: float = 3.0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be positive, got {self.d}")
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError(f"points per axis must be a power of two, got {self.n}")
        if not self.x_max > self.x_min:
            raise ValueError("empty grid interval")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n

    def axis(self) -> np.ndarray:
        """Collocation points along one axis (right endpoint excluded)."""
        return self.x_min + self.dx * np.arange(self.n)

    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    def mesh_value(self, potential: Potential) -> np.ndarray:
        axes = np.meshgrid(*[self.axis()] * self.d, indexing="ij")
        return potential.value(np.stack(axes, axis=-1))


@dataclass
class WaveFunctionGrid:
    psi: np.ndarray
    spec: GridSpec
    epsilon: float
    t: float = 0.0

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.psi) ** 2) * self.spec.dx**self.spec.d))

    def boundary_mass(self) -> float:
        """Fraction of discrete mass in the outer shell of the domain."""
        density = np.abs(self.psi) ** 2
        total = density.sum()
        inner = density
        for axis in range(self.spec.d):
            sl = [slice(None)] * self.spec.d
            sl[axis] = slice(_SHELL_WIDTH, self.spec.n - _SHELL_WIDTH)
            inner = inner[tuple(sl)]
        return float((total - inner.sum()) / total)


def _outside_mass(spec: GridSpec, packet: GaussianPacket) -> float:
    """Analytic |psi0|^2 mass outside the computational box."""
    q0 = packet.center[: packet.d]
    scale = np.sqrt(packet.epsilon)
    upper = 0.5 * erfc((spec.x_max - q0) / scale)
    lower = 0.5 * erfc((q0 - spec.x_min) / scale)
    return float(1.0 - np.prod(1.0 - upper - lower))


def init_packet(spec: GridSpec, packet: GaussianPacket) -> WaveFunctionGrid:
    """Sample the Gaussian packet on the grid and renormalize to norm one."""
    if packet.d != spec.d:
        raise ValueError("packet dimension does not match the grid")
    outside = _outside_mass(spec, packet)
    if outside > _BOUNDARY_INIT_TOL:
        raise ValueError(
            f"packet mass outside the domain is {outside:.3e}, "
            f"exceeds {_BOUNDARY_INIT_TOL}"
        )
    eps = packet.epsilon
    x = spec.axis()
    q0 = packet.center[: spec.d]
    p0 = packet.center[spec.d :]
    psi = np.array((np.pi * eps) ** (-spec.d / 4.0), dtype=complex)
    for j in range(spec.d):
        dq = x - q0[j]
        factor = np.exp(-(dq**2) / (2.0 * eps) + 1j * p0[j] * dq / eps)
        shape = [1] * spec.d
        shape[j] = spec.n
        psi = psi * factor.reshape(shape)
    grid = WaveFunctionGrid(psi=psi, spec=spec, epsilon=eps)
    grid.psi /= grid.norm()
    return grid


def _phases(spec: GridSpec, potential: Potential, eps: float, tau: float):
    v = spec.mesh_value(potential)
    half_potential = np.exp(-1j * v * tau / (2.0 * eps))
    k = spec.wavenumbers()
    k2 = np.zeros((spec.n,) * spec.d)
    for j in range(spec.d):
        shape = [1] * spec.d
        shape[j] = spec.n
        k2 = k2 + (k**2).reshape(shape)
    kinetic = np.exp(-1j * eps * k2 * tau / 2.0)
    return half_potential, kinetic


def schrodinger_step(
    grid: WaveFunctionGrid, tau: float, potential: Potential, workers: int | None = None
) -> WaveFunctionGrid:
    """One Strang split step (potential half, kinetic full, potential half)."""
    half_potential, kinetic = _phases(grid.spec, potential, grid.epsilon, tau)
    psi = half_potential * grid.psi
    psi = ifftn(kinetic * fftn(psi, workers=workers), workers=workers)
    psi = half_potential * psi
    return WaveFunctionGrid(psi=psi, spec=grid.spec, epsilon=grid.epsilon, t=grid.t + tau)


def _fourier_weights(grid: WaveFunctionGrid, workers: int | None = None):
    psi_hat = fftn(grid.psi, workers=workers)
    w = np.abs(psi_hat) ** 2
    return w / w.sum()


def expectation(
    grid: WaveFunctionGrid, obs_name: str, potential: Potential, workers: int | None = None
) -> float:
    """Expectation value of a built-in observable in the current state."""
    spec = grid.spec
    name = obs_name.strip().lower()
    if name in ("kinetic", "total") or (name.startswith("p") and name[1:].isdigit()):
        w = _fourier_weights(grid, workers)
        k = spec.wavenumbers()

        def k_moment(axis_values, axis):
            shape = [1] * spec.d
            shape[axis] = spec.n
            return float(np.sum(axis_values.reshape(shape) * w))

        if name.startswith("p") and name[1:].isdigit():
            j = int(name[1:])
            if not 1 <= j <= spec.d:
                raise ValueError(f"momentum index out of range: {obs_name}")
            return grid.epsilon * k_moment(k, j - 1)
        kinetic = 0.5 * grid.epsilon**2 * sum(
            k_moment(k**2, axis) for axis in range(spec.d)
        )
        if name == "kinetic":
            return kinetic
        return kinetic + expectation(grid, "potential", potential, workers)

    density = np.abs(grid.psi) ** 2
    density = density / density.sum()
    if name.startswith("q") and name[1:].isdigit():
        j = int(name[1:])
        if not 1 <= j <= spec.d:
            raise ValueError(f"position index out of range: {obs_name}")
        shape = [1] * spec.d
        shape[j - 1] = spec.n
        return float(np.sum(spec.axis().reshape(shape) * density))
    if name == "potential":
        return float(np.sum(spec.mesh_value(potential) * density))
    raise ValueError(f"unknown observable: {obs_name}")


def _cache_key(spec, packet, potential, times, tau, names) -> str:
    parts = [
        type(potential).__name__,
        repr(sorted(vars(potential).items())),
        repr(packet.epsilon),
        repr(packet.center.tolist()),
        repr((spec.d, spec.n, spec.x_min, spec.x_max)),
        repr(float(tau)),
        repr([float(t) for t in times]),
        repr(list(names)),
    ]
    return hashlib.sha256("|".join(parts).encode()).hexdigest()


def _write_cache(path, names, times, table):
    lines = ["time,observable,value"]
    for i, t in enumerate(times):
        for name in names:
            lines.append(f"{float(t)!r},{name},{float(table[name][i])!r}")
    path.write_text("\n".join(lines) + "\n")


def _read_cache(path, names, times):
    table = {name: np.empty(len(times)) for name in names}
    lines = path.read_text().strip().splitlines()[1:]
    expect = [(i, name) for i in range(len(times)) for name in names]
    if len(lines) != len(expect):
        raise ValueError(f"corrupt reference cache file: {path}")
    for line, (i, name) in zip(lines, expect):
        t_str, obs, value = line.split(",")
        if obs != name:
            raise ValueError(f"corrupt reference cache file: {path}")
        table[name][i] = float(value)
    return table


def reference_expectations(
    spec: GridSpec,
    packet: GaussianPacket,
    potential: Potential,
    times,
    tau: float,
    observable_names,
    cache_dir=None,
    workers: int | None = None,
):
    """Expectation table {name: values over `times`} from one propagation.

    Snapshot times must be nondecreasing and commensurate with tau.  With
    ``cache_dir`` set, a previous run with the identical configuration is
    reused from disk.
    """
    times = [float(t) for t in times]
    names = list(observable_names)
    if any(t2 < t1 for t1, t2 in zip(times, times[1:])):
        raise ValueError("snapshot times must be nondecreasing")

    cache_path = None
    if cache_dir is not None:
        from pathlib import Path

        cache_path = Path(cache_dir) / (
            _cache_key(spec, packet, potential, times, tau, names) + ".csv"
        )
        if cache_path.exists():
            return _read_cache(cache_path, names, times)

    grid = init_packet(spec, packet)
    half_potential, kinetic = _phases(spec, potential, grid.epsilon, tau)
    table = {name: np.empty(len(times)) for name in names}
    t_prev = 0.0
    psi = grid.psi
    for i, t_snap in enumerate(times):
        n_steps = step_count(t_snap - t_prev, tau)
        for _ in range(n_steps):
            psi = half_potential * psi
            psi = ifftn(kinetic * fftn(psi, workers=workers), workers=workers)
            psi = half_potential * psi
        t_prev = t_snap
        grid = WaveFunctionGrid(psi=psi, spec=spec, epsilon=grid.epsilon, t=t_snap)
        drift = abs(grid.norm() - 1.0)
        if drift > 1e-10:
            raise RuntimeError(f"unitarity lost: norm drift {drift:.3e} at t={t_snap}")
        shell = grid.boundary_mass()
        if shell > _BOUNDARY_RUN_TOL:
            raise RuntimeError(
                f"boundary mass {shell:.3e} at t={t_snap}: packet reached the domain edge"
            )
        for name in names:
            table[name][i] = expectation(grid, name, potential, workers)

    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        _write_cache(cache_path, names, times, table)
    return table
