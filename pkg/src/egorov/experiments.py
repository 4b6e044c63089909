"""Configuration-driven experiment runner.

Turns a flat key=value config into trajectory ensembles: the plain
classical-transport estimate from N0 samples under the order-8 flow, the
second-order correction from N2 samples of the split correction dynamics,
their combination, and optionally the grid reference.  Also provides
comparison tables (per-time errors plus mean/max summaries), parameter
sweeps with log-log slope estimates, and a self-test battery.

Determinism contract: no RNG anywhere; sampling is Halton with a fixed
skip, samples are processed in fixed chunks of 65536, each chunk is reduced
by numpy's pairwise summation, and chunk totals are combined pairwise in
chunk order.  Two runs with the same config produce byte-identical CSV;
wall-clock data lives only in the metadata file.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import correction as _correction
from .correction import a2_eval, evolve_correction_snapshots
from .flow import propagate_snapshots
from .observables import make_observable
from .potentials import (
    Potential,
    free_potential,
    harmonic_potential,
    torsional_potential,
)
from .reference import GridSpec, reference_expectations
from .sampling import GaussianPacket, QmcSampler, sample_points

__all__ = [
    "CHUNK_SIZE",
    "CSV_HEADER",
    "CheckResult",
    "ResultRow",
    "RunConfig",
    "SweepResult",
    "build_potential",
    "compare",
    "load_config",
    "parse_config",
    "read_rows_csv",
    "run_corrected",
    "run_egorov",
    "run_reference",
    "selftest",
    "snapshot_times",
    "sweep",
    "table_row_config",
    "write_metadata",
    "write_rows_csv",
    "write_sweep_csv",
]

CHUNK_SIZE = 65536
CSV_HEADER = (
    "time,observable,egorov,correction,corrected,reference,"
    "err_egorov,err_corrected"
)

_POTENTIALS = ("torsional", "harmonic", "free")
_SWEEP_AXES = ("epsilon", "N2", "tau2")


def _is_multiple(a: float, b: float) -> bool:
    """True when a is a whole multiple of b (up to rounding slack)."""
    ratio = a / b
    return abs(ratio - round(ratio)) <= 1e-9 * max(1.0, abs(ratio))


@dataclass(frozen=True)
class RunConfig:
    """One experiment: packet, potential, sampling and stepping parameters.

    ``n_samples`` and ``tau_flow`` drive the plain transport term,
    ``n_correction`` and ``tau_correction`` the correction term; snapshot
    times must land on whole steps of both.  ``tau_reference`` of zero means
    "pick epsilon/800", the ratio of the reference tables.
    """

    epsilon: float
    dimension: int
    potential: str
    center: tuple[float, ...]
    n_samples: int
    tau_flow: float
    n_correction: int
    tau_correction: float
    t_final: float = 15.0
    snapshot_stride: float = 0.1
    flow_order: int = 8
    stiffness: tuple[float, ...] = (1.0,)
    observables: tuple[str, ...] = ()
    grid_points: int = 256
    grid_lo: float = -3.0
    grid_hi: float = 3.0
    tau_reference: float = 0.0
    halton_skip: int = 64
    output_dir: str = "results"
    sweep_axis: str = ""
    sweep_values: tuple[float, ...] = ()

    def __post_init__(self):
        d = self.dimension
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if d < 1:
            raise ValueError("dimension must be at least 1")
        if self.potential not in _POTENTIALS:
            raise ValueError(
                f"unknown potential {self.potential!r}; choose from {_POTENTIALS}"
            )
        if len(self.center) != 2 * d:
            raise ValueError(
                f"center needs {2 * d} entries (q then p), got {len(self.center)}"
            )
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.n_correction < 0:
            raise ValueError("n_correction must be nonnegative")
        if self.n_correction > self.n_samples:
            raise ValueError("n_correction must not exceed n_samples")
        for name, value in (
            ("tau_flow", self.tau_flow),
            ("tau_correction", self.tau_correction),
            ("snapshot_stride", self.snapshot_stride),
        ):
            if value <= 0:
                raise ValueError(f"{name} must be positive")
        if self.t_final <= 0:
            raise ValueError("t_final must be positive")
        if self.tau_reference < 0:
            raise ValueError("tau_reference must be nonnegative")
        if self.flow_order not in (2, 4, 6, 8):
            raise ValueError("flow_order must be one of 2, 4, 6, 8")
        if self.halton_skip < 0:
            raise ValueError("halton_skip must be nonnegative")
        if not _is_multiple(self.t_final, self.snapshot_stride):
            raise ValueError("t_final must be a whole number of snapshot strides")
        if not _is_multiple(self.snapshot_stride, self.tau_flow):
            raise ValueError(
                "snapshot stride must be a whole multiple of tau_flow"
            )
        if self.n_correction and not _is_multiple(
            self.snapshot_stride, self.tau_correction
        ):
            raise ValueError(
                "snapshot stride must be a whole multiple of tau_correction"
            )
        n = self.grid_points
        if n < 2 or n & (n - 1):
            raise ValueError("grid_points must be a power of two, at least 2")
        if self.grid_hi <= self.grid_lo:
            raise ValueError("grid_hi must exceed grid_lo")
        if self.sweep_axis and self.sweep_axis not in _SWEEP_AXES:
            raise ValueError(
                f"sweep_axis must be one of {_SWEEP_AXES}, got {self.sweep_axis!r}"
            )
        names = self.observables or _default_observables(d)
        for name in names:
            _check_observable_name(name, d)
        object.__setattr__(self, "observables", tuple(names))
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(
            self, "stiffness", tuple(float(s) for s in self.stiffness)
        )
        object.__setattr__(
            self, "sweep_values", tuple(float(v) for v in self.sweep_values)
        )

    @property
    def tau_reference_effective(self) -> float:
        return self.tau_reference if self.tau_reference > 0 else self.epsilon / 800.0


def _default_observables(d: int) -> tuple[str, ...]:
    names = [f"q{j}" for j in range(1, d + 1)]
    names += [f"p{j}" for j in range(1, d + 1)]
    names += ["kinetic", "potential", "total"]
    return tuple(names)


def _check_observable_name(name: str, d: int) -> None:
    if name in ("kinetic", "potential", "total"):
        return
    if name[:1] in ("q", "p") and name[1:].isdigit():
        if 1 <= int(name[1:]) <= d:
            return
        raise ValueError(f"observable {name!r} out of range for dimension {d}")
    raise ValueError(f"unknown observable {name!r}")


def build_potential(config: RunConfig) -> Potential:
    """The potential object a config describes."""
    if config.potential == "torsional":
        return torsional_potential(config.dimension)
    if config.potential == "harmonic":
        stiffness = config.stiffness
        if len(stiffness) == 1:
            return harmonic_potential(config.dimension, stiffness[0])
        if len(stiffness) != config.dimension:
            raise ValueError(
                "stiffness needs one entry or one per dimension, got "
                f"{len(stiffness)}"
            )
        return harmonic_potential(config.dimension, np.array(stiffness))
    return free_potential(config.dimension)


def snapshot_times(config: RunConfig) -> list[float]:
    """Snapshot times 0, stride, 2*stride, ..., t_final."""
    n = round(config.t_final / config.snapshot_stride)
    return [i * config.snapshot_stride for i in range(n + 1)]


# ---------------------------------------------------------------------------
# Config file parsing: flat key=value lines, '#' comments, blank lines.
# ---------------------------------------------------------------------------


def _parse_int(value: str) -> int:
    number = float(value)
    rounded = round(number)
    if number != rounded:
        raise ValueError(f"expected an integer, got {value!r}")
    return int(rounded)


def _parse_floats(value: str) -> tuple[float, ...]:
    return tuple(float(part) for part in value.split(",") if part.strip())


def _parse_names(value: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in value.split(",") if part.strip())


_CONFIG_PARSERS = {
    "epsilon": float,
    "dimension": _parse_int,
    "potential": str,
    "center": _parse_floats,
    "n_samples": _parse_int,
    "tau_flow": float,
    "n_correction": _parse_int,
    "tau_correction": float,
    "t_final": float,
    "snapshot_stride": float,
    "flow_order": _parse_int,
    "stiffness": _parse_floats,
    "observables": _parse_names,
    "grid_points": _parse_int,
    "grid_lo": float,
    "grid_hi": float,
    "tau_reference": float,
    "halton_skip": _parse_int,
    "output_dir": str,
    "sweep_axis": str,
    "sweep_values": _parse_floats,
}

_REQUIRED_KEYS = (
    "epsilon",
    "dimension",
    "potential",
    "center",
    "n_samples",
    "tau_flow",
    "n_correction",
    "tau_correction",
)


def parse_config(text: str) -> RunConfig:
    """Parse flat key=value config text into a validated RunConfig."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_PARSERS:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        if key in values:
            raise ValueError(f"line {lineno}: duplicate config key {key!r}")
        try:
            values[key] = _CONFIG_PARSERS[key](value)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad value for {key}: {exc}") from exc
    missing = [key for key in _REQUIRED_KEYS if key not in values]
    if missing:
        raise ValueError(f"missing required config keys: {', '.join(missing)}")
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def config_to_dict(config: RunConfig) -> dict:
    out = {}
    for field in dataclasses.fields(config):
        value = getattr(config, field.name)
        out[field.name] = list(value) if isinstance(value, tuple) else value
    return out


def table_row_config(row: int, **overrides) -> RunConfig:
    """Default experiment rows: the shipped (epsilon, N0, tau0, N2, tau2) sets.

    Row 1 through 4: (0.1, 1e5, 0.1, 500, 2^-2), (0.05, 1e6, 0.1, 1e3, 2^-3),
    (0.02, 1e7, 0.1, 1e4, 2^-5), (0.01, 1e8, 0.1, 1e4, 2^-5), torsional d=2,
    packet center (1, 0.5, 0, 0).  The snapshot stride defaults to 0.5 here,
    the smallest value commensurate with every row's step sizes.
    """
    rows = {
        1: (0.1, 100_000, 0.1, 500, 0.25),
        2: (0.05, 1_000_000, 0.1, 1_000, 0.125),
        3: (0.02, 10_000_000, 0.1, 10_000, 0.03125),
        4: (0.01, 100_000_000, 0.1, 10_000, 0.03125),
    }
    if row not in rows:
        raise ValueError(f"row must be 1..4, got {row}")
    epsilon, n0, tau0, n2, tau2 = rows[row]
    settings = dict(
        epsilon=epsilon,
        dimension=2,
        potential="torsional",
        center=(1.0, 0.5, 0.0, 0.0),
        n_samples=n0,
        tau_flow=tau0,
        n_correction=n2,
        tau_correction=tau2,
        snapshot_stride=0.5,
    )
    settings.update(overrides)
    return RunConfig(**settings)


# ---------------------------------------------------------------------------
# Result rows and CSV round-trip.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResultRow:
    """One (time, observable) cell of a run; missing fields stay None."""

    time: float
    observable: str
    egorov: float | None = None
    correction: float | None = None
    corrected: float | None = None
    reference: float | None = None
    err_egorov: float | None = None
    err_corrected: float | None = None


def _format_cell(value) -> str:
    return "" if value is None else repr(float(value))


def write_rows_csv(rows, path) -> None:
    lines = [CSV_HEADER]
    for row in rows:
        lines.append(
            ",".join(
                [repr(float(row.time)), row.observable]
                + [
                    _format_cell(getattr(row, name))
                    for name in (
                        "egorov",
                        "correction",
                        "corrected",
                        "reference",
                        "err_egorov",
                        "err_corrected",
                    )
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_rows_csv(path) -> list[ResultRow]:
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"unrecognized results file: {path}")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 8:
            raise ValueError(f"malformed results row: {line!r}")
        cells = [None if cell == "" else float(cell) for cell in parts[2:]]
        rows.append(ResultRow(float(parts[0]), parts[1], *cells))
    return rows


def write_metadata(out_dir, config: RunConfig | None, elapsed: dict) -> None:
    """Wall-clock info and the config echo; the only place timestamps go."""
    payload = {
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "elapsed_seconds": {key: float(val) for key, val in elapsed.items()},
    }
    if config is not None:
        payload["config"] = config_to_dict(config)
    path = Path(out_dir) / "metadata.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Ensemble runs.
# ---------------------------------------------------------------------------


def _chunk_ranges(n: int) -> list[tuple[int, int]]:
    return [(a, min(a + CHUNK_SIZE, n)) for a in range(0, n, CHUNK_SIZE)]


def _pairwise_combine(stack: np.ndarray) -> np.ndarray:
    """Reduce axis 0 by adjacent pairing; order-stable, thread-independent."""
    while stack.shape[0] > 1:
        even = stack.shape[0] // 2 * 2
        stack = np.concatenate(
            [stack[0:even:2] + stack[1:even:2], stack[even:]], axis=0
        )
    return stack[0]


def _chunk_points(config: RunConfig, start: int, stop: int) -> np.ndarray:
    packet = GaussianPacket(
        center=np.array(config.center), epsilon=config.epsilon
    )
    sampler = QmcSampler(count=stop - start, skip=config.halton_skip + start)
    return sample_points(packet, sampler)


def _egorov_chunk_sums(config, potential, observables, times, start, stop):
    points = _chunk_points(config, start, stop)
    snapshots = propagate_snapshots(
        points, times, config.tau_flow, config.flow_order, potential
    )
    sums = np.empty((len(times), len(observables)))
    for i, z in enumerate(snapshots):
        for j, obs in enumerate(observables):
            sums[i, j] = np.sum(obs.value(z))
    return sums


def _correction_chunk_sums(config, potential, observables, times, start, stop):
    points = _chunk_points(config, start, stop)
    states = evolve_correction_snapshots(
        points, times, config.tau_correction, potential
    )
    sums = np.empty((len(times), len(observables)))
    for i, state in enumerate(states):
        for j, obs in enumerate(observables):
            sums[i, j] = np.sum(a2_eval(obs, state))
    return sums


def _ensemble_mean(config, potential, observables, times, n, chunk_fn, threads):
    if n == 0:
        return np.zeros((len(times), len(observables)))
    ranges = _chunk_ranges(n)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        sums = list(
            pool.map(
                lambda rng: chunk_fn(
                    config, potential, observables, times, rng[0], rng[1]
                ),
                ranges,
            )
        )
    return _pairwise_combine(np.stack(sums)) / n


def run_corrected(config: RunConfig, threads: int | None = None) -> list[ResultRow]:
    """Transport term from N0 samples plus correction term from N2 samples.

    The correction samples are the leading N2 points of the same Halton
    stream, so shrinking N2 never perturbs the transport term.  Row identity:
    corrected = egorov + epsilon^2 * correction, exactly as stored.
    """
    potential = build_potential(config)
    observables = [make_observable(name, potential) for name in config.observables]
    times = snapshot_times(config)
    egorov_mean = _ensemble_mean(
        config, potential, observables, times, config.n_samples,
        _egorov_chunk_sums, threads,
    )
    correction_mean = _ensemble_mean(
        config, potential, observables, times, config.n_correction,
        _correction_chunk_sums, threads,
    )
    eps2 = config.epsilon**2
    rows = []
    for i, t in enumerate(times):
        for j, obs in enumerate(observables):
            egorov = float(egorov_mean[i, j])
            corr = float(correction_mean[i, j])
            rows.append(
                ResultRow(
                    time=t,
                    observable=obs.name,
                    egorov=egorov,
                    correction=corr,
                    corrected=egorov + eps2 * corr,
                )
            )
    return rows


def run_egorov(config: RunConfig, threads: int | None = None) -> list[ResultRow]:
    """Plain transport estimate; the correction term is the empty sum 0."""
    return run_corrected(
        dataclasses.replace(config, n_correction=0), threads=threads
    )


def run_reference(config: RunConfig, cache_dir=None) -> list[ResultRow]:
    """Grid-solver expectations on the config's snapshot grid."""
    potential = build_potential(config)
    spec = GridSpec(
        d=config.dimension,
        n=config.grid_points,
        x_min=config.grid_lo,
        x_max=config.grid_hi,
    )
    packet = GaussianPacket(center=np.array(config.center), epsilon=config.epsilon)
    times = snapshot_times(config)
    table = reference_expectations(
        spec,
        packet,
        potential,
        times,
        config.tau_reference_effective,
        config.observables,
        cache_dir=cache_dir,
    )
    return [
        ResultRow(time=t, observable=name, reference=float(table[name][i]))
        for i, t in enumerate(times)
        for name in config.observables
    ]


# ---------------------------------------------------------------------------
# Comparison and sweeps.
# ---------------------------------------------------------------------------


def _baseline(row: ResultRow, column: str):
    value = getattr(row, column)
    return row.reference if value is None else value


def compare(rows_a, rows_b):
    """Per-(time, observable) absolute errors of A against B, plus summaries.

    Each error column compares like with like: A's egorov against B's egorov
    and A's corrected against B's corrected, falling back to B's reference
    column when B lacks the method columns (the run-vs-reference case).
    Returns (merged rows, per-observable summary dicts with mean/max over
    time).  Comparing a run against itself yields all-zero errors.
    """
    by_key_b = {(row.time, row.observable): row for row in rows_b}
    keys_a = [(row.time, row.observable) for row in rows_a]
    if len(by_key_b) != len(rows_b) or len(set(keys_a)) != len(keys_a):
        raise ValueError("duplicate (time, observable) rows")
    if set(keys_a) != set(by_key_b):
        raise ValueError("snapshot grids or observable sets differ")
    merged = []
    errors = {}
    for row in rows_a:
        other = by_key_b[(row.time, row.observable)]
        err_e = err_c = None
        base_e = _baseline(other, "egorov")
        base_c = _baseline(other, "corrected")
        val_e = _baseline(row, "egorov")
        val_c = _baseline(row, "corrected")
        if val_e is not None and base_e is not None:
            err_e = abs(val_e - base_e)
        if val_c is not None and base_c is not None:
            err_c = abs(val_c - base_c)
        merged.append(
            dataclasses.replace(
                row, reference=base_c, err_egorov=err_e, err_corrected=err_c
            )
        )
        errors.setdefault(row.observable, []).append((err_e, err_c))
    summaries = []
    for observable, pairs in errors.items():
        es = [e for e, _ in pairs if e is not None]
        cs = [c for _, c in pairs if c is not None]
        summaries.append(
            {
                "observable": observable,
                "mean_err_egorov": float(np.mean(es)) if es else None,
                "max_err_egorov": float(np.max(es)) if es else None,
                "mean_err_corrected": float(np.mean(cs)) if cs else None,
                "max_err_corrected": float(np.max(cs)) if cs else None,
            }
        )
    return merged, summaries


def _config_for_value(config: RunConfig, axis: str, value: float) -> RunConfig:
    if axis == "epsilon":
        # Sampling sizes follow the 1/epsilon^2 scaling of the shipped rows.
        scale = (config.epsilon / value) ** 2
        return dataclasses.replace(
            config,
            epsilon=value,
            n_samples=max(1, round(config.n_samples * scale)),
            n_correction=round(config.n_correction * scale),
        )
    if axis == "N2":
        if value != round(value):
            raise ValueError(f"N2 sweep values must be integers, got {value}")
        return dataclasses.replace(config, n_correction=int(round(value)))
    return dataclasses.replace(config, tau_correction=value)


@dataclass(frozen=True)
class SweepResult:
    axis: str
    values: tuple[float, ...]
    rows: tuple[dict, ...]
    slopes: tuple[dict, ...]


def _loglog_slope(xs, ys) -> float | None:
    pairs = [(x, y) for x, y in zip(xs, ys) if y is not None and y > 0]
    if len(pairs) < 2:
        return None
    lx = np.log([p[0] for p in pairs])
    ly = np.log([p[1] for p in pairs])
    return float(np.polyfit(lx, ly, 1)[0])


def sweep(
    config: RunConfig,
    axis: str,
    values,
    threads: int | None = None,
    cache_dir=None,
    baseline_rows=None,
) -> SweepResult:
    """Corrected runs across one axis, each compared to a baseline.

    The baseline defaults to the grid reference (recomputed per value for the
    epsilon axis, shared otherwise); pass ``baseline_rows`` to compare against
    a fixed run instead, e.g. a high-resolution correction run.  Summary rows
    carry mean/max errors per (value, observable); slopes are least-squares
    log-log fits of the errors against the axis values.
    """
    if axis not in _SWEEP_AXES:
        raise ValueError(f"sweep axis must be one of {_SWEEP_AXES}, got {axis!r}")
    values = [float(v) for v in values]
    if not values:
        raise ValueError("sweep needs at least one value")
    if values != sorted(values):
        raise ValueError("sweep values must be sorted ascending")
    shared_baseline = baseline_rows
    if shared_baseline is None and axis != "epsilon":
        shared_baseline = run_reference(config, cache_dir=cache_dir)
    summary_rows = []
    for value in values:
        cfg = _config_for_value(config, axis, value)
        rows = run_corrected(cfg, threads=threads)
        baseline = shared_baseline
        if baseline is None:
            baseline = run_reference(cfg, cache_dir=cache_dir)
        _, summaries = compare(rows, baseline)
        for summary in summaries:
            summary_rows.append({"axis": axis, "value": value, **summary})
    slopes = []
    observables = list(dict.fromkeys(row["observable"] for row in summary_rows))
    for observable in observables:
        rows_for = [r for r in summary_rows if r["observable"] == observable]
        slopes.append(
            {
                "observable": observable,
                "slope_mean_corrected": _loglog_slope(
                    [r["value"] for r in rows_for],
                    [r["mean_err_corrected"] for r in rows_for],
                ),
                "slope_max_corrected": _loglog_slope(
                    [r["value"] for r in rows_for],
                    [r["max_err_corrected"] for r in rows_for],
                ),
            }
        )
    return SweepResult(
        axis=axis,
        values=tuple(values),
        rows=tuple(summary_rows),
        slopes=tuple(slopes),
    )


_SWEEP_HEADER = (
    "axis,value,observable,mean_err_egorov,max_err_egorov,"
    "mean_err_corrected,max_err_corrected,slope_mean_corrected,"
    "slope_max_corrected"
)


def write_sweep_csv(result: SweepResult, path) -> None:
    lines = [_SWEEP_HEADER]
    for row in result.rows:
        lines.append(
            ",".join(
                [
                    result.axis,
                    repr(float(row["value"])),
                    row["observable"],
                    _format_cell(row["mean_err_egorov"]),
                    _format_cell(row["max_err_egorov"]),
                    _format_cell(row["mean_err_corrected"]),
                    _format_cell(row["max_err_corrected"]),
                    "",
                    "",
                ]
            )
        )
    for slope in result.slopes:
        lines.append(
            ",".join(
                [
                    result.axis,
                    "",
                    slope["observable"],
                    "",
                    "",
                    "",
                    "",
                    _format_cell(slope["slope_mean_corrected"]),
                    _format_cell(slope["slope_max_corrected"]),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Self-test battery.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _check(name, fn) -> CheckResult:
    try:
        detail = fn()
        return CheckResult(name, True, detail)
    except AssertionError as exc:
        return CheckResult(name, False, str(exc))
    except Exception as exc:  # noqa: BLE001 - report, don't crash the battery
        return CheckResult(name, False, f"{type(exc).__name__}: {exc}")


def _selftest_oracle_equivalence() -> str:
    from .oracle import a2_quadrature

    pot = torsional_potential(2)
    z0 = np.array([1.0, 0.5, 0.0, 0.0])
    names = ("q1", "p1", "kinetic", "potential")
    observables = [make_observable(name, pot) for name in names]
    state = _correction.evolve_correction_dense(z0, 1.0, 1e-3, pot)
    block_vals = [float(a2_eval(obs, state)) for obs in observables]
    quad_vals = a2_quadrature(observables, z0, 1.0, 128, pot, tau_var=1e-3)
    worst = 0.0
    for name, block, quad in zip(names, block_vals, quad_vals):
        rel = abs(block - quad) / max(abs(quad), 1e-30)
        worst = max(worst, rel)
        assert rel <= 1e-5, (
            f"{name}: split {block:.6e} vs quadrature {quad:.6e} (rel {rel:.2e})"
        )
    return f"4 observables, worst relative difference {worst:.2e}"


def _selftest_split_matches_dense() -> str:
    pot = torsional_potential(2)
    z0 = np.array([1.0, 0.5, 0.0, 0.0])
    split = _correction.evolve_correction(z0, 1.0, 1e-2, pot)
    dense = _correction.evolve_correction_dense(z0, 1.0, 1e-2, pot)
    gap = max(
        float(np.max(np.abs(split.lambda_full() - dense.lambda_full()))),
        float(np.max(np.abs(split.gamma_full() - dense.gamma_full()))),
        float(np.max(np.abs(split.xi_full() - dense.xi_full()))),
    )
    assert gap <= 1e-12, f"split vs dense tensors differ by {gap:.2e}"
    return f"tensor gap {gap:.2e}"


def _selftest_block_general() -> str:
    from .potentials import Hamiltonian

    pot = torsional_potential(2)
    z0 = np.array([1.0, 0.5, 0.0, 0.0])
    block = _correction.evolve_correction(z0, 1.0, 1e-3, pot)
    general = _correction.evolve_general(z0, 1.0, 1e-3, Hamiltonian(pot))
    gap = max(
        float(np.max(np.abs(block.lambda_full() - general.lam))),
        float(np.max(np.abs(block.gamma_full() - general.gam))),
        float(np.max(np.abs(block.xi_full() - general.xi))),
    )
    assert gap <= 1e-8, f"block vs general tensors differ by {gap:.2e}"
    return f"tensor gap {gap:.2e}"


def _selftest_symmetry() -> str:
    from .tensor_ops import apply_J_triple, tilde_d3

    raw = np.linspace(-1.0, 1.0, 200 * 64).reshape(200, 4, 4, 4)
    sym = (
        raw
        + raw.transpose(0, 1, 3, 2)
        + raw.transpose(0, 2, 1, 3)
        + raw.transpose(0, 2, 3, 1)
        + raw.transpose(0, 3, 1, 2)
        + raw.transpose(0, 3, 2, 1)
    )
    weighted = tilde_d3(sym)
    lifted = apply_J_triple(weighted)
    for tensor in (weighted, lifted):
        for perm in ((0, 1, 3, 2), (0, 2, 1, 3), (0, 3, 2, 1)):
            gap = float(np.max(np.abs(tensor - tensor.transpose(perm))))
            assert gap <= 1e-12, f"symmetry broken by {gap:.2e}"
    return "200 tensors, both maps preserve symmetry"


def _selftest_vectorization() -> str:
    from .tensor_ops import kron, mode_matrix, mode_multiply, vec

    base = np.linspace(0.2, 1.8, 9).reshape(3, 3)
    other = np.linspace(-1.0, 1.0, 9).reshape(3, 3)[::-1].copy()
    mat = np.linspace(0.5, 2.0, 9).reshape(3, 3)
    ten = np.linspace(-2.0, 2.0, 27).reshape(3, 3, 3)
    worst = 0.0
    for order, tensor in ((2, mat), (3, ten)):
        for mode in range(order):
            direct = vec(mode_multiply(base, tensor, mode))
            via = mode_matrix(base, order, mode) @ vec(tensor)
            worst = max(worst, float(np.max(np.abs(direct - via))))
    gap = float(
        np.max(np.abs(kron(base, other) @ vec(mat) - vec(base @ mat @ other.T)))
    )
    worst = max(worst, gap)
    assert worst <= 1e-12, f"vectorization identities off by {worst:.2e}"
    return f"orders 2-3, all modes, worst gap {worst:.2e}"


def _selftest_bracket_antisymmetry() -> str:
    from .oracle import JetFunction, poisson_k

    def f(z):
        return np.sin(z[..., 0]) * z[..., 2] + 0.3 * z[..., 1] * z[..., 3] ** 2

    def g(z):
        return np.cos(z[..., 1]) + z[..., 0] ** 2 * z[..., 3]

    jet_f = JetFunction.from_callable(f, 4)
    jet_g = JetFunction.from_callable(g, 4)
    z = np.array([0.4, -0.3, 0.8, 0.6])
    worst = 0.0
    for k, sign in ((1, 1.0), (2, -1.0), (3, 1.0)):
        fg = poisson_k(jet_f, jet_g, k, z)
        gf = poisson_k(jet_g, jet_f, k, z)
        gap = abs(fg + sign * gf)
        worst = max(worst, gap)
        assert gap <= 1e-5, f"order-{k} bracket symmetry off by {gap:.2e}"
    return f"k=1,2,3 worst residual {worst:.2e}"


def _selftest_flow_integral() -> str:
    from .oracle import flow_integral

    pot = torsional_potential(2)
    z0 = np.array([0.8, 0.3, 0.2, -0.4])

    def integrand(s, z):
        return np.sin(z[..., 0]) * np.cos(s) + z[..., 2] ** 2

    t, dt = 1.0, 1e-3
    plus = flow_integral(integrand, z0, t + dt, 128, pot)
    minus = flow_integral(integrand, z0, t - dt, 128, pot)
    derivative = (plus - minus) / (2 * dt)

    def integrand_ds(s, z):
        return -np.sin(z[..., 0]) * np.sin(s)

    from .flow import propagate

    inner = flow_integral(integrand_ds, z0, t, 128, pot)
    z_t = propagate(z0, t, 1e-3, 8, pot)
    boundary = float(integrand(0.0, z_t))
    gap = abs(derivative - (inner + boundary))
    assert gap <= 1e-4, f"transport-derivative identity off by {gap:.2e}"
    return f"residual {gap:.2e}"


def _selftest_flow_orders() -> str:
    from .flow import propagate
    from .potentials import Hamiltonian

    pot = torsional_potential(2)
    z0 = np.array([1.0, 0.5, 0.0, 0.0])
    fine = propagate(z0, 1.0, 1e-4, 2, pot)
    errs = [
        float(np.max(np.abs(propagate(z0, 1.0, tau, 2, pot) - fine)))
        for tau in (2e-2, 1e-2)
    ]
    ratio = errs[0] / errs[1]
    assert 3.0 <= ratio <= 5.0, f"second-order ratio {ratio:.2f} outside [3, 5]"
    ham = Hamiltonian(pot)
    drift = abs(float(ham.value(propagate(z0, 15.0, 0.1, 8, pot)) - ham.value(z0)))
    assert drift <= 5e-10, f"order-8 energy drift {drift:.2e}"
    fine_c = _correction.evolve_correction(z0, 1.0, 1e-4, pot)
    errs_c = []
    for tau in (2e-2, 1e-2):
        state = _correction.evolve_correction(z0, 1.0, tau, pot)
        errs_c.append(
            float(np.max(np.abs(state.lambda_full() - fine_c.lambda_full())))
        )
    ratio_c = errs_c[0] / errs_c[1]
    assert 12.0 <= ratio_c <= 20.0, (
        f"fourth-order ratio {ratio_c:.2f} outside [12, 20]"
    )
    return f"order ratios {ratio:.2f} (transport), {ratio_c:.2f} (correction)"


def _selftest_harmonic_zero() -> str:
    pot = harmonic_potential(2, (1.0, 2.0))
    z0 = np.array([0.7, -0.2, 0.1, 0.5])
    state = _correction.evolve_correction(z0, 1.0, 0.05, pot)
    peak = max(
        float(np.max(np.abs(state.lambda_full()))),
        float(np.max(np.abs(state.gamma_full()))),
        float(np.max(np.abs(state.xi_full()))),
    )
    assert peak == 0.0, f"harmonic correction tensors reach {peak:.2e}"
    values = [
        float(a2_eval(make_observable(name, pot), state))
        for name in ("q1", "p2", "kinetic", "potential", "total")
    ]
    assert all(v == 0.0 for v in values), f"harmonic corrections {values}"
    return "all correction tensors and values exactly zero"


def selftest() -> list[CheckResult]:
    """Named numerical cross-checks; all must pass on a healthy build."""
    battery = (
        ("oracle-equivalence", _selftest_oracle_equivalence),
        ("split-matches-dense", _selftest_split_matches_dense),
        ("block-general-equivalence", _selftest_block_general),
        ("symmetry-preservation", _selftest_symmetry),
        ("vectorization-identities", _selftest_vectorization),
        ("bracket-antisymmetry", _selftest_bracket_antisymmetry),
        ("transport-integral-identity", _selftest_flow_integral),
        ("integrator-orders", _selftest_flow_orders),
        ("harmonic-zero-correction", _selftest_harmonic_zero),
    )
    return [_check(name, fn) for name, fn in battery]
