import numpy as np
import pytest

from markovmirror import (
    BoxGeometry,
    ChainCursor,
    InputError,
    MamdSchedule,
    MlmcConfig,
    MinProblem,
    ScheduleError,
    ViProblem,
    err_vi,
    make_min_instance,
    mamd_batched,
    mamd_batched_schedule,
    mamd_unbatched,
    mamd_unbatched_schedule,
    matching_pennies,
    mmp_batched,
    mmp_batched_params,
    mmp_unbatched,
    mmp_unbatched_stepsize,
    subopt_gap,
)


def cursor_for(problem, seed=0):
    return ChainCursor(problem.kernel, np.random.default_rng(seed))


def one_dim_quadratic(kernel):
    geo = BoxGeometry(1, -1.0, 1.0)
    return MinProblem(geo, np.eye(1), np.zeros(1), np.zeros((kernel.n_states, 1)),
                      kernel, x_star=np.zeros(1), f_star=0.0)


# ---------------------------------------------------------------------------
# schedules


def test_warmup_schedule_values():
    sched = mamd_unbatched_schedule(L=1.0, D=1.0, sigma=0.0, tau_mix=2, T=10)
    assert sched.tau == 2
    # flat during warmup, then (t - tau)/2 + 1
    assert sched.beta(0) == sched.beta(1) == sched.beta(2) == 1.0
    assert sched.beta(5) == pytest.approx(2.5)
    assert sched.gamma(5) == pytest.approx(1.25)  # beta * 1/(2L)
    sched.validate(1.0, 10)


def test_batched_schedule_values():
    sched, cfg = mamd_batched_schedule(L=2.0, D=1.0, sigma=0.0, tau_mix=1, T=64)
    assert sched.tau == 0
    assert sched.beta(0) == 1.0
    assert sched.beta(6) == pytest.approx(4.0)
    assert sched.gamma(0) == pytest.approx(0.25)
    assert cfg == MlmcConfig(B=1, M=64)
    sched.validate(2.0, 64)


def test_noise_constant_shrinks_stepsize():
    quiet = mamd_unbatched_schedule(1.0, 1.0, 0.0, 4, 100)
    noisy = mamd_unbatched_schedule(1.0, 1.0, 5.0, 4, 100)
    assert noisy.gamma(10) < quiet.gamma(10)
    # mmp stepsizes cap at 1/(2L) and shrink with noise
    assert mmp_unbatched_stepsize(1.0, 1.0, 0.0, 4, 100) == pytest.approx(0.5)
    g_noisy = mmp_unbatched_stepsize(1.0, 1.0, 5.0, 4, 100)
    assert g_noisy < 0.5
    g_b, cfg = mmp_batched_params(1.0, 1.0, 5.0, 4, 100)
    assert 0 < g_b <= 0.5 and cfg.M == 100


def test_factory_schedules_satisfy_invariants(rng):
    for _ in range(10):
        L = float(rng.uniform(0.2, 5.0))
        D = float(rng.uniform(0.5, 3.0))
        sigma = float(rng.choice([0.0, rng.uniform(0.1, 4.0)]))
        tau = int(rng.integers(1, 20))
        T = int(rng.integers(tau + 1, 1000))
        mamd_unbatched_schedule(L, D, sigma, tau, T).validate(L, T)
        sched, _ = mamd_batched_schedule(L, D, sigma, tau, T)
        sched.validate(L, T)


def test_schedule_violations_raise():
    # beta(tau) != 1
    with pytest.raises(ScheduleError):
        MamdSchedule(beta=lambda t: 2.0, gamma=lambda t: 0.1, tau=0).validate(1.0, 10)
    # nonpositive stepsize
    with pytest.raises(ScheduleError):
        MamdSchedule(beta=lambda t: 1.0, gamma=lambda t: 0.0).validate(1.0, 10)
    # telescoping monotonicity broken: (beta_1 - 1) gamma_1 > beta_0 gamma_0
    with pytest.raises(ScheduleError):
        MamdSchedule(beta=lambda t: 1.0 + 10.0 * t, gamma=lambda t: 0.1).validate(0.1, 10)
    # beta < 2 gamma L
    with pytest.raises(ScheduleError):
        MamdSchedule(beta=lambda t: 1.0, gamma=lambda t: 1.0).validate(5.0, 10)


def test_parameter_validation():
    with pytest.raises(InputError):
        mamd_unbatched_schedule(0.0, 1.0, 1.0, 2, 10)  # L = 0
    with pytest.raises(InputError):
        mamd_unbatched_schedule(1.0, -1.0, 1.0, 2, 10)  # D < 0
    with pytest.raises(InputError):
        mamd_unbatched_schedule(1.0, 1.0, 1.0, 0, 10)  # tau < 1 with noise
    with pytest.raises(InputError):
        mamd_unbatched_schedule(1.0, 1.0, 1.0, 12, 10)  # T <= tau
    mamd_unbatched_schedule(1.0, 1.0, 0.0, 0, 10)  # noiseless tau-0 is fine


def test_run_shorter_than_warmup_rejected(two_state):
    p = one_dim_quadratic(two_state)
    sched = mamd_unbatched_schedule(p.L, 1.0, 0.0, 5, 100)
    with pytest.raises(ScheduleError):
        mamd_unbatched(p, sched, cursor_for(p), 3)


def test_mmp_stepsize_cap_enforced(two_state):
    p = matching_pennies(two_state)
    with pytest.raises(ScheduleError):
        mmp_unbatched(p, 0.51 / p.L_tilde, cursor_for(p), 50)
    with pytest.raises(ScheduleError):
        mmp_batched(p, 0.51 / p.L, cursor_for(p), 50, MlmcConfig(1, 50),
                    np.random.default_rng(0))
    with pytest.raises(ScheduleError):
        # empty averaging window
        mmp_unbatched(p, 0.1, cursor_for(p), 2, avg_start=5)


# ---------------------------------------------------------------------------
# hand-traced dynamics


def test_mamd_hand_trace(two_state):
    # f(x) = x^2/2 on [-1, 1] from x0 = 1 with beta = 1, gamma = 1/2:
    # x_g = x, x <- x - x/2, so the iterate halves each step
    p = one_dim_quadratic(two_state)
    sched = MamdSchedule(beta=lambda t: 1.0, gamma=lambda t: 0.5)
    rec = mamd_unbatched(p, sched, cursor_for(p), 3, keep_iterates=True,
                         x0=np.array([1.0]))
    xs = [k[0][0] for k in rec.iterates]
    fs = [k[1][0] for k in rec.iterates]
    np.testing.assert_allclose(xs, [0.5, 0.25, 0.125], atol=1e-15)
    np.testing.assert_allclose(fs, [0.5, 0.25, 0.125], atol=1e-15)
    np.testing.assert_allclose(rec.x_out, [0.125], atol=1e-15)


def test_mmp_hand_trace(two_state):
    # F(x) = x on [-1, 1] from x0 = 1 with gamma = 1/2:
    # x_half = 1 - 1/2 = 0.5, x = 1 - 0.5 * F(0.5) = 0.75
    geo = BoxGeometry(1, -1.0, 1.0)
    p = ViProblem(geo, np.array([[1.0]]), np.zeros(1), np.zeros((2, 1)), two_state,
                  x_star=np.zeros(1))
    rec = mmp_unbatched(p, 0.5, cursor_for(p), 1, keep_iterates=True,
                        avg_start=0, x0=np.array([1.0]))
    x_half, x_full = rec.iterates[0]
    assert x_half[0] == pytest.approx(0.5, abs=1e-15)
    assert x_full[0] == pytest.approx(0.75, abs=1e-15)
    np.testing.assert_allclose(rec.x_out, [0.5], atol=1e-15)  # average of halves
    np.testing.assert_allclose(rec.x_last, [0.75], atol=1e-15)


def test_mmp_equilibrium_is_fixed_point(two_state):
    p = matching_pennies(two_state)  # noiseless, x* = uniform
    rec = mmp_unbatched(p, 0.25, cursor_for(p), 10, avg_start=0, x0=p.x_star)
    np.testing.assert_allclose(rec.x_out, p.x_star, atol=1e-6)
    assert err_vi(p, rec.x_out) <= 1e-6


def test_momentum_blend_identity(dense8):
    # x_f^{t+1} = beta^{-1} x^{t+1} + (1 - beta^{-1}) x_f^t, recomputable
    # from the kept iterates alone
    p = make_min_instance(4, dense8, noise_scale=0.5, seed=8)
    sched, cfg = mamd_batched_schedule(p.L, np.sqrt(p.geometry.diameter_sq()),
                                       p.sigma, 3, 40)
    rec = mamd_batched(p, sched, cursor_for(p, 5), 40, cfg,
                       np.random.default_rng(6), keep_iterates=True)
    x_f_prev = p.geometry.center()
    for t, (x_t, x_f_t) in enumerate(rec.iterates):
        inv = 1.0 / sched.beta(t)
        np.testing.assert_allclose(x_f_t, inv * x_t + (1 - inv) * x_f_prev, atol=1e-12)
        x_f_prev = x_f_t
    np.testing.assert_array_equal(rec.x_out, rec.iterates[-1][1])
    np.testing.assert_array_equal(rec.x_last, rec.iterates[-1][0])


def test_mmp_average_identity(dense8):
    p = make_vi = matching_pennies(dense8, noise_scale=0.4, seed=3)
    rec = mmp_unbatched(p, 0.2, cursor_for(p, 9), 30, keep_iterates=True, avg_start=4)
    halves = np.array([k[0] for k in rec.iterates])
    np.testing.assert_allclose(rec.x_out, halves[4:].mean(axis=0), atol=1e-12)


# ---------------------------------------------------------------------------
# accounting and feasibility


def test_budget_accounting_batched(dense8):
    p = make_min_instance(4, dense8, noise_scale=1.0, seed=1)
    sched, cfg = mamd_batched_schedule(p.L, 1.0, p.sigma, 2, 64)
    cur = cursor_for(p, 17)
    rec = mamd_batched(p, sched, cur, 64, cfg, np.random.default_rng(2), stride=1)
    assert cur.n_consumed == rec.chain_steps[-1]
    assert np.all(np.diff(rec.oracle_calls) >= 1)
    assert np.all(rec.chain_steps >= rec.oracle_calls)
    assert rec.t[-1] == 64 and len(rec.t) == 64


def test_budget_accounting_mmp_batched(dense8):
    p = matching_pennies(dense8, noise_scale=0.5, seed=2)
    gamma, cfg = mmp_batched_params(p.L, 1.0, p.sigma, 2, 32)
    cur = cursor_for(p, 23)
    rec = mmp_batched(p, gamma, cur, 32, cfg, np.random.default_rng(3), stride=1)
    assert cur.n_consumed == rec.chain_steps[-1]
    # extrapolation costs B calls, update at least B more
    assert rec.oracle_calls[-1] >= 2 * cfg.B * 32


def test_unbatched_costs(two_state):
    p = one_dim_quadratic(two_state)
    sched = mamd_unbatched_schedule(p.L, 1.0, 0.0, 2, 20)
    cur = cursor_for(p)
    rec = mamd_unbatched(p, sched, cur, 20, stride=1)
    np.testing.assert_array_equal(rec.oracle_calls, np.arange(1, 21))
    np.testing.assert_array_equal(rec.chain_steps, np.arange(1, 21))
    g = matching_pennies(two_state)
    cur2 = cursor_for(g)
    rec2 = mmp_unbatched(g, 0.3, cur2, 20, stride=1, avg_start=0)
    np.testing.assert_array_equal(rec2.oracle_calls, 2 * np.arange(1, 21))
    np.testing.assert_array_equal(rec2.chain_steps, np.arange(1, 21))
    assert cur2.n_consumed == 20


def test_iterates_stay_feasible(dense8, rng):
    p = make_min_instance(5, dense8, geometry_kind="simplex", noise_scale=1.0, seed=4)
    sched, cfg = mamd_batched_schedule(p.L, np.sqrt(p.geometry.diameter_sq()),
                                       p.sigma, 3, 50)
    rec = mamd_batched(p, sched, cursor_for(p, 31), 50, cfg,
                       np.random.default_rng(7), keep_iterates=True)
    for x_t, x_f_t in rec.iterates:
        assert p.geometry.contains(x_t)
        assert p.geometry.contains(x_f_t)


# ---------------------------------------------------------------------------
# determinism and reductions


def test_zero_noise_runs_are_seed_invariant(two_state):
    p = make_min_instance(3, two_state, noise_scale=0.0, seed=5)
    sched, cfg = mamd_batched_schedule(p.L, 1.0, 0.0, 1, 30)
    a = mamd_batched(p, sched, cursor_for(p, 1), 30, cfg, np.random.default_rng(10))
    b = mamd_batched(p, sched, cursor_for(p, 2), 30, cfg, np.random.default_rng(20))
    np.testing.assert_array_equal(a.x_out, b.x_out)


def test_batched_reduces_to_unbatched_when_noiseless(two_state):
    p = make_min_instance(3, two_state, noise_scale=0.0, seed=6)
    sched, _ = mamd_batched_schedule(p.L, 1.0, 0.0, 1, 25)
    a = mamd_unbatched(p, sched, cursor_for(p, 1), 25, keep_iterates=True)
    b = mamd_batched(p, sched, cursor_for(p, 2), 25, MlmcConfig(B=1, M=1),
                     np.random.default_rng(0), keep_iterates=True)
    for (xa, fa), (xb, fb) in zip(a.iterates, b.iterates):
        np.testing.assert_array_equal(xa, xb)
        np.testing.assert_array_equal(fa, fb)


def test_mmp_batched_reduces_to_unbatched_when_noiseless(two_state):
    p = matching_pennies(two_state)
    a = mmp_unbatched(p, 0.25, cursor_for(p, 1), 25, keep_iterates=True, avg_start=0)
    b = mmp_batched(p, 0.25, cursor_for(p, 2), 25, MlmcConfig(B=1, M=1),
                    np.random.default_rng(0), keep_iterates=True)
    for (ha, xa), (hb, xb) in zip(a.iterates, b.iterates):
        np.testing.assert_array_equal(ha, hb)
        np.testing.assert_array_equal(xa, xb)
    np.testing.assert_array_equal(a.x_out, b.x_out)


def test_deterministic_mamd_gap_quarters_when_T_doubles(two_state):
    # flat log-spaced spectrum keeps the smooth (quadratic-in-T) term
    # dominant; strongly convex instances decay faster and leave the window
    p = make_min_instance(20, two_state, noise_scale=0.0, seed=7,
                          eigenvalues=np.logspace(-4, 0, 20))
    D = np.sqrt(p.geometry.diameter_sq())
    gaps = {}
    for T in (64, 128):
        sched, cfg = mamd_batched_schedule(p.L, D, 0.0, 1, T)
        rec = mamd_batched(p, sched, cursor_for(p), T, cfg, np.random.default_rng(0),
                           gap_fn=lambda x: subopt_gap(p, x))
        gaps[T] = rec.gap[-1]
    assert 2.5 <= gaps[64] / gaps[128] <= 6.0


def test_deterministic_mmp_gap_halves_when_T_doubles(two_state):
    p = matching_pennies(two_state, block_dim=3, seed=1)
    x0 = p.geometry.renormalize(np.array([0.7, 0.2, 0.1, 0.1, 0.2, 0.7]))
    rec = mmp_batched(p, 0.5 / p.L, cursor_for(p), 256, MlmcConfig(1, 256),
                      np.random.default_rng(0), stride=128,
                      gap_fn=lambda x: err_vi(p, x), x0=x0)
    g128 = rec.gap[rec.t == 128][0]
    g256 = rec.gap[rec.t == 256][0]
    assert 1.3 <= g128 / g256 <= 3.0


# ---------------------------------------------------------------------------
# recorder


def test_stride_controls_rows(two_state):
    p = one_dim_quadratic(two_state)
    sched = MamdSchedule(beta=lambda t: 1.0, gamma=lambda t: 0.25)
    rec = mamd_unbatched(p, sched, cursor_for(p), 50, stride=7)
    np.testing.assert_array_equal(rec.t, [7, 14, 21, 28, 35, 42, 49, 50])
    rec1 = mamd_unbatched(p, sched, cursor_for(p), 50)
    np.testing.assert_array_equal(rec1.t, [50])
    assert np.isnan(rec1.gap[0])  # no gap_fn attached


def test_gap_column_uses_gap_fn(two_state):
    p = one_dim_quadratic(two_state)
    sched = MamdSchedule(beta=lambda t: 1.0, gamma=lambda t: 0.25)
    rec = mamd_unbatched(p, sched, cursor_for(p), 10, stride=1,
                         gap_fn=lambda x: subopt_gap(p, x), x0=np.array([1.0]))
    assert np.all(np.isfinite(rec.gap))
    assert np.all(np.diff(rec.gap) <= 1e-15)  # deterministic run: monotone here
    assert rec.config["algorithm"] == "mamd_unbatched"
