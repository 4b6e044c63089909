"""Acceptance battery: one test per release criterion.

Each test prints a single verdict line (criterion number, PASS/FAIL, measured
numbers, elapsed time) directly to the real stdout so the lines survive
pytest's capture, then asserts the stated bounds.  Budgets are asserted too;
they are generous against measured runtimes on a desktop core.

Two criteria fail by measurement, not by implementation error, and are left
red on purpose:

* criterion 3: the corrected method's epsilon-ratio band [8, 32] is not
  reachable at T=5 with the scaled-down transport ensembles (1e5 / 4e5
  samples); the quasi-Monte Carlo floor of the larger ensemble is ~87% of
  its measured error, capping the ratio near 5.  The same run with the
  full-size 1e6-sample ensemble lands at 10.3, inside the band.
* criterion 6: energy conservation of the corrected expectation holds for
  the correction ODEs exactly, but the tau2=2^-2 production step size leaves
  an O(tau2^4) splitting residual on a2(h) (measured 1.8e-2 per trajectory,
  3.8e-5 after averaging and the eps^2 weight) far above the stated 1e-8 /
  1e-6 bounds; those bounds are met only for tau2 <= 2^-8.
"""

import time

import numpy as np

from egorov.correction import (
    a2_eval,
    evolve_correction,
    evolve_correction_snapshots,
    evolve_general,
)
from egorov.experiments import compare, run_corrected, run_egorov, run_reference
from egorov.experiments import RunConfig, table_row_config
from egorov.observables import make_observable
from egorov.oracle import JetFunction, a2_quadrature, flow_integral, poisson_k
from egorov.potentials import (
    Hamiltonian,
    free_potential,
    harmonic_potential,
    torsional_potential,
)
from egorov.reference import GridSpec, expectation, init_packet, schrodinger_step
from egorov.sampling import GaussianPacket, QmcSampler, sample_points
from egorov.tensor_ops import apply_J_triple, kron, mode_matrix, mode_multiply, tilde_d3, vec

Z0 = np.array([1.0, 0.5, 0.0, 0.0])
OBS6 = ("q1", "q2", "p1", "p2", "kinetic", "potential")


def _verdict(capsys, num, name, passed, detail):
    status = "PASS" if passed else "FAIL"
    with capsys.disabled():
        print(f"\ncriterion {num} ({name}): {status} {detail}", flush=True)


def test_criterion_1_correction_matches_quadrature_oracle(capsys):
    """Split-step correction tensors against the bracket-quadrature oracle."""
    t0 = time.perf_counter()
    pot = torsional_potential(2)
    names = ("q1", "p1", "kinetic", "potential")
    observables = [make_observable(n, pot) for n in names]
    state = evolve_correction(Z0, 1.0, 1e-3, pot)
    tensor_vals = [float(a2_eval(obs, state)) for obs in observables]
    quad_vals = a2_quadrature(observables, Z0, 1.0, 256, pot, tau_var=1e-3)
    rels = [
        abs(t - q) / abs(q) for t, q in zip(tensor_vals, quad_vals)
    ]
    worst = max(rels)
    elapsed = time.perf_counter() - t0
    detail = f"worst rel diff {worst:.2e} (tol 1e-5) over {names} [{elapsed:.1f}s/30s]"
    _verdict(capsys, 1, "oracle equivalence", worst <= 1e-5 and elapsed <= 30.0, detail)
    for name, rel in zip(names, rels):
        assert rel <= 1e-5, f"{name}: relative difference {rel:.2e} > 1e-5"
    assert elapsed <= 30.0, f"runtime {elapsed:.1f}s over 30s budget"


def test_criterion_2_harmonic_exactness(capsys):
    """Quadratic Hamiltonian: zero correction, transport matches the rotation."""
    t0 = time.perf_counter()
    pot = harmonic_potential(2, (1.0, 2.0))
    omega = np.array([1.0, 2.0])

    # Correction tensors must vanish identically, not just smally.
    points = [Z0, np.array([0.7, -0.2, 0.1, 0.5]), np.array([-0.3, 1.1, -0.6, 0.2])]
    peak = 0.0
    for z in points:
        state = evolve_correction(z, 1.0, 0.05, pot)
        peak = max(
            peak,
            float(np.max(np.abs(state.lambda_full()))),
            float(np.max(np.abs(state.gamma_full()))),
            float(np.max(np.abs(state.xi_full()))),
        )
        for name in ("q1", "p2", "kinetic", "total"):
            peak = max(peak, abs(float(a2_eval(make_observable(name, pot), state))))

    # Transported q/p expectations against the exact normal-mode rotation,
    # within the quasi-Monte Carlo allowance per coordinate, for two epsilons.
    n0 = 10_000
    worst_ratio = 0.0
    for eps in (0.1, 0.4):
        cfg = RunConfig(
            epsilon=eps,
            dimension=2,
            potential="harmonic",
            stiffness=(1.0, 2.0),
            center=(1.0, 0.5, 0.0, 0.0),
            n_samples=n0,
            tau_flow=0.05,
            n_correction=0,
            tau_correction=0.25,
            t_final=1.0,
            snapshot_stride=0.25,
            observables=("q1", "q2", "p1", "p2"),
        )
        bound = 3.0 * np.sqrt(eps / 2.0) / np.sqrt(n0)
        q0, p0 = np.array([1.0, 0.5]), np.array([0.0, 0.0])
        for row in run_egorov(cfg):
            wt = omega * row.time
            j = int(row.observable[1]) - 1
            if row.observable.startswith("q"):
                exact = np.cos(wt[j]) * q0[j] + np.sin(wt[j]) * p0[j] / omega[j]
            else:
                exact = -omega[j] * np.sin(wt[j]) * q0[j] + np.cos(wt[j]) * p0[j]
            worst_ratio = max(worst_ratio, abs(row.egorov - exact) / bound)

    elapsed = time.perf_counter() - t0
    detail = (
        f"tensor peak {peak:.1e} (must be 0), worst rotation error "
        f"{worst_ratio:.2f}x the QMC allowance [{elapsed:.1f}s/10s]"
    )
    _verdict(capsys, 2, "harmonic exactness", peak == 0.0 and worst_ratio <= 1.0 and elapsed <= 10.0, detail)
    assert peak == 0.0, f"harmonic correction tensors reach {peak:.2e}"
    assert worst_ratio <= 1.0, f"rotation mismatch {worst_ratio:.2f}x QMC allowance"
    assert elapsed <= 10.0, f"runtime {elapsed:.1f}s over 10s budget"


def test_criterion_3_epsilon_order(capsys, tmp_path):
    """Error ratios between eps=0.1 and eps=0.05 against the grid reference.

    Expected red on the corrected band: with the scaled ensembles (1e5, 4e5)
    the eps=0.05 corrected error is dominated by the transport sampling
    floor, so the measured ratio sits near 5 instead of inside [8, 32].
    """
    t0 = time.perf_counter()
    errs = {}
    for row_num, n0 in ((1, 100_000), (2, 400_000)):
        cfg = table_row_config(
            row_num,
            n_samples=n0,
            t_final=5.0,
            snapshot_stride=0.5,
            observables=OBS6,
        )
        rows = run_corrected(cfg)
        ref = run_reference(cfg, cache_dir=tmp_path)
        _, summaries = compare(rows, ref)
        errs[cfg.epsilon] = (
            max(s["max_err_corrected"] for s in summaries),
            max(s["max_err_egorov"] for s in summaries),
        )
    ratio_corr = errs[0.1][0] / errs[0.05][0]
    ratio_ego = errs[0.1][1] / errs[0.05][1]
    elapsed = time.perf_counter() - t0
    detail = (
        f"egorov ratio {ratio_ego:.2f} (band [2,8]), corrected ratio "
        f"{ratio_corr:.2f} (band [8,32]; QMC floor-limited at 4e5 samples) "
        f"[{elapsed:.0f}s/900s]"
    )
    passed = 2.0 <= ratio_ego <= 8.0 and 8.0 <= ratio_corr <= 32.0 and elapsed <= 900.0
    _verdict(capsys, 3, "epsilon order", passed, detail)
    assert 2.0 <= ratio_ego <= 8.0, f"egorov ratio {ratio_ego:.2f} outside [2, 8]"
    assert 8.0 <= ratio_corr <= 32.0, f"corrected ratio {ratio_corr:.2f} outside [8, 32]"
    assert elapsed <= 900.0, f"runtime {elapsed:.0f}s over 15min budget"


def test_criterion_4_correction_step_order(capsys):
    """Fourth-order convergence of the correction integrator in tau2."""
    t0 = time.perf_counter()
    base = dict(n_samples=1000, n_correction=1000, t_final=2.0, observables=OBS6)
    ref = run_corrected(table_row_config(1, **base, tau_correction=2.0**-8))
    taus = [2.0**-2, 2.0**-3, 2.0**-4]
    errs = []
    for tau2 in taus:
        rows = run_corrected(table_row_config(1, **base, tau_correction=tau2))
        _, summaries = compare(rows, ref)
        errs.append(max(s["max_err_corrected"] for s in summaries))
    order = float(np.polyfit(np.log(taus), np.log(errs), 1)[0])
    elapsed = time.perf_counter() - t0
    detail = f"observed order {order:.2f} (need >= 3.5) [{elapsed:.0f}s/300s]"
    _verdict(capsys, 4, "tau2 order", order >= 3.5 and elapsed <= 300.0, detail)
    assert order >= 3.5, f"observed tau2 order {order:.2f} < 3.5"
    assert elapsed <= 300.0, f"runtime {elapsed:.0f}s over 5min budget"


def test_criterion_5_correction_sample_decay(capsys):
    """QMC decay of the correction term as the correction ensemble grows."""
    t0 = time.perf_counter()
    base = dict(
        n_samples=100_000, t_final=1.0, tau_correction=2.0**-4, observables=OBS6
    )
    ref = run_corrected(table_row_config(1, **base, n_correction=100_000))
    counts = [100, 1000, 10_000]
    errs = []
    for n2 in counts:
        rows = run_corrected(table_row_config(1, **base, n_correction=n2))
        _, summaries = compare(rows, ref)
        errs.append(max(s["max_err_corrected"] for s in summaries))
    slope = float(np.polyfit(np.log(counts), np.log(errs), 1)[0])
    elapsed = time.perf_counter() - t0
    detail = f"log-log slope {slope:.3f} (need <= -0.7) [{elapsed:.0f}s/300s]"
    _verdict(capsys, 5, "correction QMC decay", slope <= -0.7 and elapsed <= 300.0, detail)
    assert slope <= -0.7, f"decay slope {slope:.3f} > -0.7"
    assert elapsed <= 300.0, f"runtime {elapsed:.0f}s over 5min budget"


def test_criterion_6_energy_conservation(capsys):
    """Corrected total energy over [0, 15] with production row-1 parameters.

    Expected red: the tau2=2^-2 step leaves an O(tau2^4) splitting residual
    on a2(h), which the stated 1e-8 per-trajectory and 1e-6 ensemble bounds
    do not absorb (they hold only for tau2 <= 2^-8).
    """
    t0 = time.perf_counter()
    cfg = table_row_config(1, observables=("total",))
    rows = run_corrected(cfg)
    base = next(r for r in rows if r.time == 0.0)
    dev = max(abs(r.corrected - base.corrected) for r in rows)
    floor = max(abs(r.egorov - base.egorov) for r in rows)

    pot = torsional_potential(2)
    obs_h = make_observable("total", pot)
    packet = GaussianPacket(np.asarray(cfg.center), cfg.epsilon)
    points = sample_points(packet, QmcSampler(100, skip=cfg.halton_skip))
    per_traj = 0.0
    for z in points:
        for state in evolve_correction_snapshots(z, (5.0, 10.0, 15.0), cfg.tau_correction, pot):
            per_traj = max(per_traj, abs(float(a2_eval(obs_h, state))))

    elapsed = time.perf_counter() - t0
    bound = 1e-6 + floor
    detail = (
        f"corrected-energy deviation {dev:.2e} (bound {bound:.2e}), "
        f"per-trajectory a2(h) {per_traj:.2e} (bound 1e-8) [{elapsed:.0f}s/120s]"
    )
    passed = dev <= bound and per_traj <= 1e-8 and elapsed <= 120.0
    _verdict(capsys, 6, "energy conservation", passed, detail)
    assert dev <= bound, f"corrected-energy deviation {dev:.2e} > {bound:.2e}"
    assert per_traj <= 1e-8, f"per-trajectory a2(h) reaches {per_traj:.2e} > 1e-8"
    assert elapsed <= 120.0, f"runtime {elapsed:.0f}s over 2min budget"


def test_criterion_7_identity_suites(capsys):
    """Symmetry, vectorization, bracket exchange, and transport-integral identities."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(20260825)

    # Symmetry preservation on 200 random symmetric 3-tensors.
    raw = rng.standard_normal((200, 4, 4, 4))
    sym = sum(
        raw.transpose((0,) + perm)
        for perm in (
            (1, 2, 3), (1, 3, 2), (2, 1, 3), (2, 3, 1), (3, 1, 2), (3, 2, 1),
        )
    )
    sym_gap = 0.0
    for tensor in (tilde_d3(sym), apply_J_triple(tilde_d3(sym))):
        for perm in ((0, 1, 3, 2), (0, 2, 1, 3), (0, 3, 2, 1)):
            sym_gap = max(sym_gap, float(np.max(np.abs(tensor - tensor.transpose(perm)))))

    # Vectorization identities for random matrices, orders 2 and 3, all modes.
    base, other = rng.standard_normal((3, 3)), rng.standard_normal((3, 3))
    mat, ten = rng.standard_normal((3, 3)), rng.standard_normal((3, 3, 3))
    vec_gap = float(
        np.max(np.abs(kron(base, other) @ vec(mat) - vec(base @ mat @ other.T)))
    )
    for order, tensor in ((2, mat), (3, ten)):
        for mode in range(order):
            direct = vec(mode_multiply(base, tensor, mode))
            via = mode_matrix(base, order, mode) @ vec(tensor)
            vec_gap = max(vec_gap, float(np.max(np.abs(direct - via))))

    # Bracket exchange: antisymmetric for odd k, symmetric for even k.
    def f(z):
        return np.sin(z[..., 0]) * z[..., 2] + 0.3 * z[..., 1] * z[..., 3] ** 2

    def g(z):
        return np.cos(z[..., 1]) + z[..., 0] ** 2 * z[..., 3]

    jet_f, jet_g = JetFunction.from_callable(f, 4), JetFunction.from_callable(g, 4)
    zpt = np.array([0.4, -0.3, 0.8, 0.6])
    bracket_gap = 0.0
    for k, sign in ((1, 1.0), (2, -1.0), (3, 1.0)):
        fg = poisson_k(jet_f, jet_g, k, zpt)
        gf = poisson_k(jet_g, jet_f, k, zpt)
        bracket_gap = max(bracket_gap, abs(fg + sign * gf))

    # Transport-integral differentiation identity.
    pot = torsional_potential(2)
    zflow = np.array([0.8, 0.3, 0.2, -0.4])

    def integrand(s, z):
        return np.sin(z[..., 0]) * np.cos(s) + z[..., 2] ** 2

    def integrand_ds(s, z):
        return -np.sin(z[..., 0]) * np.sin(s)

    from egorov.flow import propagate

    t, dt = 1.0, 1e-3
    derivative = (
        flow_integral(integrand, zflow, t + dt, 128, pot)
        - flow_integral(integrand, zflow, t - dt, 128, pot)
    ) / (2 * dt)
    boundary = float(integrand(0.0, propagate(zflow, t, 1e-3, 8, pot)))
    transport_gap = abs(
        derivative - (flow_integral(integrand_ds, zflow, t, 128, pot) + boundary)
    )

    elapsed = time.perf_counter() - t0
    detail = (
        f"symmetry {sym_gap:.1e}<=1e-12, vectorization {vec_gap:.1e}<=1e-12, "
        f"brackets {bracket_gap:.1e}<=1e-5, transport {transport_gap:.1e}<=1e-4 "
        f"[{elapsed:.1f}s/60s]"
    )
    passed = (
        sym_gap <= 1e-12
        and vec_gap <= 1e-12
        and bracket_gap <= 1e-5
        and transport_gap <= 1e-4
        and elapsed <= 60.0
    )
    _verdict(capsys, 7, "identity suites", passed, detail)
    assert sym_gap <= 1e-12, f"symmetry preservation off by {sym_gap:.2e}"
    assert vec_gap <= 1e-12, f"vectorization identities off by {vec_gap:.2e}"
    assert bracket_gap <= 1e-5, f"bracket exchange off by {bracket_gap:.2e}"
    assert transport_gap <= 1e-4, f"transport identity off by {transport_gap:.2e}"
    assert elapsed <= 60.0, f"runtime {elapsed:.1f}s over 1min budget"


def test_criterion_8_block_general_equivalence(capsys):
    """Reordered block evolution equals the general flat-form evolution."""
    t0 = time.perf_counter()
    pot = torsional_potential(2)
    block = evolve_correction(Z0, 1.0, 1e-3, pot)
    general = evolve_general(Z0, 1.0, 1e-3, Hamiltonian(pot))
    gap = max(
        float(np.max(np.abs(block.lambda_full() - general.lam))),
        float(np.max(np.abs(block.gamma_full() - general.gam))),
        float(np.max(np.abs(block.xi_full() - general.xi))),
    )
    elapsed = time.perf_counter() - t0
    detail = f"tensor gap {gap:.2e} (tol 1e-8) [{elapsed:.1f}s/60s]"
    _verdict(capsys, 8, "block/general equivalence", gap <= 1e-8 and elapsed <= 60.0, detail)
    assert gap <= 1e-8, f"block vs general tensors differ by {gap:.2e}"
    assert elapsed <= 60.0, f"runtime {elapsed:.1f}s over 1min budget"


def test_criterion_9_reference_solver_sanity(capsys):
    """Unitarity, Ehrenfest checks, and Strang self-convergence at 256^2."""
    t0 = time.perf_counter()
    spec = GridSpec(2, 256)
    eps = 0.1

    # Norm preservation over 1000 torsional steps.
    pot = torsional_potential(2)
    grid = init_packet(spec, GaussianPacket(Z0, eps))
    for _ in range(1000):
        grid = schrodinger_step(grid, 1e-3, pot)
    unitarity = abs(grid.norm() - 1.0)

    # Free packet: <q> rides the straight line, <p> frozen.
    free = free_potential(2)
    center = np.array([0.5, 0.25, 0.5, -0.25])
    fgrid = init_packet(spec, GaussianPacket(center, eps))
    for _ in range(500):
        fgrid = schrodinger_step(fgrid, 2e-3, free)
    ehrenfest = 0.0
    for j in range(2):
        ehrenfest = max(
            ehrenfest,
            abs(expectation(fgrid, f"q{j + 1}", free) - (center[j] + center[2 + j])),
            abs(expectation(fgrid, f"p{j + 1}", free) - center[2 + j]),
        )

    # Harmonic packet: exact normal-mode rotation of <q>, <p>.
    omega = np.array([1.0, 2.0])
    harm = harmonic_potential(2, (1.0, 2.0))
    hgrid = init_packet(spec, GaussianPacket(Z0, eps))
    for _ in range(2000):
        hgrid = schrodinger_step(hgrid, 5e-4, harm)
    for j in range(2):
        wt = omega[j] * 1.0
        ehrenfest = max(
            ehrenfest,
            abs(expectation(hgrid, f"q{j + 1}", harm) - np.cos(wt) * Z0[j]),
            abs(expectation(hgrid, f"p{j + 1}", harm) + omega[j] * np.sin(wt) * Z0[j]),
        )

    # Strang self-convergence on <q1> at t = 0.5.
    vals = []
    for tau in (4e-3, 2e-3, 1e-3):
        sgrid = init_packet(spec, GaussianPacket(Z0, eps))
        for _ in range(round(0.5 / tau)):
            sgrid = schrodinger_step(sgrid, tau, pot)
        vals.append(expectation(sgrid, "q1", pot))
    ratio = (vals[0] - vals[1]) / (vals[1] - vals[2])

    elapsed = time.perf_counter() - t0
    detail = (
        f"unitarity drift {unitarity:.1e}<=1e-10, Ehrenfest {ehrenfest:.1e}<=1e-6, "
        f"Strang ratio {ratio:.2f} in [2.8,5.2] [{elapsed:.0f}s/180s]"
    )
    passed = (
        unitarity <= 1e-10
        and ehrenfest <= 1e-6
        and 2.8 <= ratio <= 5.2
        and elapsed <= 180.0
    )
    _verdict(capsys, 9, "reference sanity", passed, detail)
    assert unitarity <= 1e-10, f"norm drift {unitarity:.2e} > 1e-10"
    assert ehrenfest <= 1e-6, f"Ehrenfest error {ehrenfest:.2e} > 1e-6"
    assert 2.8 <= ratio <= 5.2, f"Strang self-convergence ratio {ratio:.2f}"
    assert elapsed <= 180.0, f"runtime {elapsed:.0f}s over 3min budget"
