"""Acceptance criteria, one test per criterion, each at its stated tolerance.

Every test records a PASS/FAIL line through the ``acceptance`` fixture; the
summary is printed at the end of the run.  Criteria 5, 6 (simulated part) and
8 (preset at fock dimension 10) are physically or numerically unattainable as
stated and are expected to be red; supplementary tests below each show what
does hold.
"""
import math
import time

import numpy as np
import pytest

from feedbacksim.expr import evaluate_expr
from feedbacksim.feedback import (
    channel_generator,
    compose_feedback,
    cross_channels,
    generator_distance,
    kossakowski_min_eigenvalue,
    oracle_generator,
    povm_outcome_moments,
    squeeze_feedback,
)
from feedbacksim.lindblad import (
    LindbladSpec,
    coherent_ket,
    evolve,
    fock_state,
    product_state,
    steady_state,
    superoperator_matrix,
    vacuum,
)
from feedbacksim.operators import build_generator, embed, fock_pair, random_hermitian, zero
from feedbacksim.report import express_dissipators, jump_candidates
from feedbacksim.separability import (
    BilinearDephasingProblem,
    bilinear_verdict,
    duan_witness,
    max_witness_coupling,
)
from feedbacksim.squeeze import (
    SQUEEZE_PHASE,
    SqueezeParams,
    crossing,
    joint_moments,
    simulated_stationary_variance,
    stationary_variance,
    threshold_scan,
)
from feedbacksim.verify import oracle_dt, random_channel, random_density

# diagnostics from every run, checked by criterion 9
HYGIENE: list[tuple[str, dict]] = []


def _record_run(name, diag):
    HYGIENE.append((name, dict(diag)))


def test_criterion_1_operator_forms(acceptance):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        ch = random_channel(rng, int(rng.integers(3, 7)), gain_range=3.0, rate_range=(1e-9, 2.0))
        a = channel_generator(ch, "compact").superoperator()
        b = channel_generator(ch, "expanded").superoperator()
        worst = max(worst, np.linalg.norm(a - b) / np.linalg.norm(b))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 1
    acceptance(1, ok, f"max relative Frobenius error {worst:.2e} (bound 1e-12), {dt:.2f} s")
    assert ok


def test_criterion_2_discrete_map_oracle(acceptance):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst_gen = 0.0
    for _ in range(10):
        ch = random_channel(rng, 4)
        rho = random_density(rng, 4)
        est = oracle_generator(ch, rho, oracle_dt(ch))
        gen = channel_generator(ch).apply(rho)
        worst_gen = max(worst_gen, np.linalg.norm(est - gen, 2) / np.linalg.norm(gen, 2))
    worst_var = 0.0
    for _ in range(3):
        ch = random_channel(rng, 4)
        _, V = np.linalg.eigh(ch.X.mat)
        for dt_ in (1e-3, 1e-2):
            for k in range(4):
                rho = np.outer(V[:, k], V[:, k].conj())
                _, var = povm_outcome_moments(ch, rho, dt_)
                expect = 1 / (4 * ch.meas_rate * dt_)
                worst_var = max(worst_var, abs(var - expect) / expect)
    dt = time.perf_counter() - t0
    ok = worst_gen <= 1e-6 and worst_var <= 1e-6 and dt < 30
    acceptance(2, ok, f"generator error {worst_gen:.2e}, POVM variance error {worst_var:.2e} "
                      f"(bounds 1e-6), {dt:.2f} s")
    assert ok


def test_criterion_3_two_system_composition(acceptance):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    sp = fock_pair(3, ("A", "B"))
    pairs = [(build_generator(sp, "A", "x"), build_generator(sp, "B", "x")),
             (embed(sp, "A", random_hermitian(3, rng)), embed(sp, "B", random_hermitian(3, rng)))]
    worst_rate = worst_h = worst_dist = 0.0
    min_k = np.inf
    for XA, XB in pairs:
        for gamma in (0.1, 1.0, 10.0):
            chans = cross_channels(XA, XB, gamma)
            spec = compose_feedback(LindbladSpec(sp, zero(sp)), chans)
            rates = {d.name: d.rate for d in spec.dissipators}
            worst_rate = max(worst_rate, abs(rates["X_A"] - 2 * gamma) / (2 * gamma),
                             abs(rates["X_B"] - 2 * gamma) / (2 * gamma), float(len(rates) != 2))
            target_h = 2 * gamma * np.linalg.norm((XA @ XB).mat, 2)
            worst_h = max(worst_h, abs(np.linalg.norm(spec.hamiltonian.mat, 2) - target_h) / target_h)
            target = LindbladSpec(sp, -2 * gamma * (XA @ XB), ((2 * gamma, XA), (2 * gamma, XB)))
            worst_dist = max(worst_dist, generator_distance(spec, target))
            min_k = min(min_k, min(d.rate for d in spec.dissipators) / gamma)
    dt = time.perf_counter() - t0
    ok = worst_rate <= 1e-12 and worst_h <= 1e-12 and worst_dist <= 1e-12 and min_k >= 0 and dt < 1
    acceptance(3, ok, f"rate error {worst_rate:.1e}, coupling error {worst_h:.1e}, "
                      f"generator distance {worst_dist:.1e}, min rate/gamma {min_k:.3g}, {dt:.2f} s")
    assert ok


def test_criterion_4_preset_structure(acceptance):
    t0 = time.perf_counter()
    worst_h = worst_r = worst_l = 0.0
    for kappa in (0.5, 1.0, 2.0):
        spec = squeeze_feedback(kappa, 6)
        sp = spec.space
        a1, a2 = build_generator(sp, "1", "a"), build_generator(sp, "2", "a")
        H_ref = kappa * (a1 @ a2 + a1.dag() @ a2.dag())
        worst_h = max(worst_h, float(np.max(np.abs(spec.hamiltonian.interior() - H_ref.interior()))) / kappa)
        stage = jump_candidates(sp)[0]
        named, _ = express_dissipators(spec, [(e, evaluate_expr(e, sp)) for e in stage])
        rates = {n.name: n.rate for n in named}
        want = {"a_1": 3 * kappa, "a_2": 3 * kappa, "adag_1": kappa, "adag_2": kappa}
        worst_r = max(worst_r, max(abs(rates.get(k, 0) - v) / v for k, v in want.items()),
                      float(set(rates) != set(want)))
        ref = LindbladSpec(sp, H_ref, tuple((r, evaluate_expr(k, sp)) for k, r in want.items()))
        worst_l = max(worst_l, generator_distance(spec, ref))
    dt = time.perf_counter() - t0
    ok = max(worst_h, worst_r, worst_l) <= 1e-12 and dt < 1
    acceptance(4, ok, f"Hamiltonian interior error {worst_h:.1e}, rate error {worst_r:.1e}, "
                      f"generator distance {worst_l:.1e}, {dt:.2f} s")
    assert ok


@pytest.fixture(scope="module")
def preset_steady_12():
    t0 = time.perf_counter()
    rho = steady_state(squeeze_feedback(1.0, 12))
    return rho, time.perf_counter() - t0


def test_criterion_5_steady_state_anchor(acceptance, preset_steady_12):
    # expected red: the preset sits exactly at the stability boundary, so the
    # truncated "steady state" is an artifact of the Fock cutoff
    rho, dt = preset_steady_12
    _record_run("criterion 5 steady state", rho.diagnostics())
    vx, vy = joint_moments(rho, phase=0.0)
    sq = joint_moments(rho)
    duan = vx + vy
    ok = abs(vx - 0.5) <= 1e-3 and abs(vy - 0.5) <= 1e-3 and abs(duan - 1) <= 2e-3 and dt < 60
    acceptance(5, ok, f"<(x1-x2)^2>={vx:.4f} <(y1+y2)^2>={vy:.4f} Duan={duan:.4f}; squeezed pair "
                      f"({sq[0]:.4f}, {sq[1]:.4f}); top-level population "
                      f"{rho.top_level_population():.1e}, {dt:.2f} s")
    assert ok


def test_preset_squeezed_pair_holds_vacuum_level_transiently():
    # the physically meaningful part of criterion 5: from vacuum the squeezed
    # pair stays at 1/2 while the Fock cutoff is not yet reached
    spec = squeeze_feedback(1.0, 12)
    traj = evolve(spec, vacuum(spec.space), 0.3, 0.01, stride=5)
    _record_run("preset transient fock 12", traj.diagnostics)
    for s in traj.states:
        vm, vp = joint_moments(s)
        assert abs(vm - 0.5) <= 1e-3 and abs(vp - 0.5) <= 1e-3


def test_stable_steady_state_hits_closed_form():
    p = SqueezeParams(1.0, 5.0, 1.0)
    rows = threshold_scan([p.g], p.gamma_minus, p.gamma_plus, fock_dim=12)
    assert rows[0]["sim_duan_sum"] == pytest.approx(2 * stationary_variance(1.0, 5.0, 1.0), abs=2e-3)


def _threshold_scan(gm, gp, fock_dim, g_values):
    rows = threshold_scan(g_values, gm, gp, fock_dim=fock_dim)
    return np.array([r["V_ss"] for r in rows]), np.array([r["sim_duan_sum"] for r in rows]), rows


def test_criterion_6_threshold(acceptance):
    t0 = time.perf_counter()
    gm, gp = 3.0, 1.0
    gs = np.linspace(0.5, 1.5, 11)
    v_closed, sim, _ = _threshold_scan(gm, gp, 10, gs)
    for g in gs:
        _, _, _, rho = simulated_stationary_variance(SqueezeParams(float(g), gm, gp), 10)
        _record_run(f"criterion 6 steady g={g:.2f}", rho.diagnostics())
    closed_x = crossing(gs, v_closed, 0.5)
    sim_x = crossing(gs, sim, 1.0)
    dt = time.perf_counter() - t0
    closed_ok = closed_x == 1.0
    sim_ok = sim_x is not None and abs(sim_x - 1.0) <= 0.01
    ok = closed_ok and sim_ok and dt < 120
    sims = " ".join(f"{s:.3f}" for s in sim)
    acceptance(6, ok, f"closed-form crossing g={closed_x} ({'ok' if closed_ok else 'off'}); "
                      f"simulated crossing {sim_x} (Duan sums {sims}); "
                      f"stability boundary g=(gm-gp)/2={(gm - gp) / 2:g}, {dt:.1f} s")
    assert ok


def test_threshold_crossing_in_stable_regime():
    # supplementary: with (5, 1) the crossing at g = 1 lies inside the stable range
    gs = np.linspace(0.5, 1.5, 11)
    v_closed, sim, rows = _threshold_scan(5.0, 1.0, 14, gs)
    assert crossing(gs, v_closed, 0.5) == 1.0
    x = crossing(gs, sim, 1.0)
    assert x is not None and abs(x - 1.0) <= 0.01
    assert all(r["truncation"] < 1e-3 for r in rows)


def test_criterion_7_separability(acceptance):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst_g = worst_d = 0.0
    sp = fock_pair(3, ("A", "B"))
    for _ in range(100):
        ga, gb = rng.uniform(0.01, 10, size=2)
        lo, hi = 0.0, 2 * math.sqrt(ga * gb) + 1
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if bilinear_verdict(BilinearDephasingProblem(mid, ga, gb)).separable else (lo, mid)
            if hi - lo <= 1e-13 * hi:
                break
        target = math.sqrt(ga * gb)
        worst_g = max(worst_g, abs(lo - target) / target, abs(max_witness_coupling(ga, gb) - target) / target)
        XA = embed(sp, "A", random_hermitian(3, rng))
        XB = embed(sp, "B", random_hermitian(3, rng))
        for g in (float(rng.uniform(-1, 1)) * target, target):
            p = BilinearDephasingProblem(g, ga, gb)
            w = bilinear_verdict(p).witness
            worst_d = max(worst_d, generator_distance(w.compose(XA, XB), p.spec(XA, XB)))
    dt = time.perf_counter() - t0
    ok = worst_g <= 1e-9 and worst_d <= 1e-10 and dt < 10
    acceptance(7, ok, f"max-coupling error {worst_g:.1e} (bound 1e-9), recomposition "
                      f"{worst_d:.1e} (bound 1e-10), {dt:.2f} s")
    assert ok


def _product_states(space, d):
    return {
        "vacuum": vacuum(space),
        "coherent": product_state(space, {"1": coherent_ket(d, 0.5), "2": coherent_ket(d, -0.3j)}),
        "fock(1,0)": fock_state(space, {"1": 1}),
    }


def _locc_runs(fock_dim, t_final=1.0, dt=0.01, stride=5, record=True,
               specs=("preset", "two-line"), states=("vacuum", "coherent", "fock(1,0)")):
    """Minimum Duan sum (both pairs) over time for the preset and the two-line spec."""
    sp = fock_pair(fock_dim)
    x1, x2 = build_generator(sp, "1", "x"), build_generator(sp, "2", "x")
    build = {
        "preset": lambda: squeeze_feedback(1.0, fock_dim),
        "two-line": lambda: compose_feedback(LindbladSpec(sp, zero(sp)), cross_channels(x1, x2, 1.0)),
    }
    out = {}
    for sname in specs:
        spec = build[sname]()
        for iname, rho0 in _product_states(sp, fock_dim).items():
            if iname not in states:
                continue
            traj = evolve(spec, rho0, t_final, dt, stride=stride)
            if record:
                _record_run(f"criterion 8 {sname} {iname}", traj.diagnostics)
            duan = min(min(duan_witness(s, phase=ph) for ph in (0.0, SQUEEZE_PHASE)) for s in traj.states)
            out[(sname, iname)] = (duan, traj.diagnostics["truncation_metric"])
    return out


def test_criterion_8_locc_ceiling(acceptance):
    # expected red for the preset at fock 10: it saturates the bound exactly and
    # truncation error there is a few 1e-6
    t0 = time.perf_counter()
    res = _locc_runs(10)
    dt = time.perf_counter() - t0
    worst = min(v[0] for v in res.values())
    ok = worst >= 1 - 1e-6 and dt < 60
    detail = "; ".join(f"{s}/{i} min={d:.8f} trunc={tr:.1e}" for (s, i), (d, tr) in res.items())
    acceptance(8, ok, f"min Duan sum {worst:.8f} (bound {1 - 1e-6}); {detail}; {dt:.1f} s")
    assert ok


def test_locc_ceiling_with_converged_truncation():
    # supplementary: the preset's deficit at fock 10 is truncation error; by
    # fock 12 it is below the tolerance (about 2.5e-7 for the coherent start)
    res = _locc_runs(12, record=False, specs=("preset",), states=("vacuum", "coherent"))
    for key, (duan, _) in res.items():
        assert duan >= 1 - 1e-6, key


def test_criterion_9_engine_hygiene(acceptance):
    # a 10^4-step run plus the diagnostics collected from the runs above
    spec = squeeze_feedback(1.0, 8)
    traj = evolve(spec, vacuum(spec.space), 10.0, 1e-3, stride=100, converge=False)
    steps = int(round(traj.times[-1] / traj.dt))
    _record_run("criterion 9 long run", traj.diagnostics)
    sp = fock_pair(6)
    x1, x2 = build_generator(sp, "1", "x"), build_generator(sp, "2", "x")
    pair = compose_feedback(LindbladSpec(sp, zero(sp)), cross_channels(x1, x2, 0.5))
    traj2 = evolve(pair, product_state(sp, {"1": coherent_ket(6, 0.4)}), 10.0, 1e-3, stride=100,
                   converge=False)
    _record_run("criterion 9 long two-line run", traj2.diagnostics)
    bad = []
    worst = {"trace": 0.0, "herm": 0.0, "mineig": np.inf}
    for name, d in HYGIENE:
        tr = d.get("trace_drift", d.get("trace_error", 0.0))
        worst["trace"] = max(worst["trace"], tr)
        worst["herm"] = max(worst["herm"], d["hermiticity_defect"])
        worst["mineig"] = min(worst["mineig"], d["min_eigenvalue"])
        if tr > 1e-9 or d["hermiticity_defect"] > 1e-10 or d["min_eigenvalue"] < -1e-8:
            bad.append(name)
    ok = steps >= 10_000 and not bad
    acceptance(9, ok, f"{len(HYGIENE)} runs, long run {steps} steps; max trace drift {worst['trace']:.1e}, "
                      f"max Hermiticity defect {worst['herm']:.1e}, min eigenvalue {worst['mineig']:.1e}"
                      + (f"; violations: {bad}" if bad else ""))
    assert ok


def test_generators_are_dissipative():
    # the superoperator spectrum of composed specs never has positive real part
    for spec in (squeeze_feedback(1.0, 5),):
        ev = np.linalg.eigvals(superoperator_matrix(spec))
        assert ev.real.max() <= 1e-10
    sp = fock_pair(3, ("A", "B"))
    chans = cross_channels(build_generator(sp, "A", "x"), build_generator(sp, "B", "x"), 1.0)
    assert kossakowski_min_eigenvalue([c.X for c in chans] + [c.Y for c in chans],
                                      np.eye(4, dtype=complex)) >= -1e-12
