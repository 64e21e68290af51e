import numpy as np
import pytest

from markovmirror import (
    ChainCursor,
    ErgodicityError,
    InputError,
    TransitionKernel,
    diagnose,
    lazy_for_mixing_time,
    make_lazy,
    mixing_time,
    random_ergodic,
    sample_paths,
    stationary,
)


def eigen_stationary(P):
    """Independent oracle: left eigenvector of eigenvalue 1."""
    w, vl = np.linalg.eig(P.T)
    i = int(np.argmin(np.abs(w - 1.0)))
    pi = np.real(vl[:, i])
    return pi / pi.sum()


def brute_mixing_time(P, threshold=0.25):
    """Independent oracle: explicit matrix powers."""
    pi = eigen_stationary(P)
    Pt = np.eye(P.shape[0])
    for t in range(1, 10_000):
        Pt = Pt @ P
        if 0.5 * np.max(np.abs(Pt - pi).sum(axis=1)) <= threshold:
            return t
    raise AssertionError("no mixing within 10k steps")


# ---------------------------------------------------------------------------
# kernel construction


def test_kernel_validation_rejects_bad_rows():
    with pytest.raises(InputError):
        TransitionKernel(np.array([[0.9, 0.2], [0.2, 0.8]]))  # row sum 1.1
    with pytest.raises(InputError):
        TransitionKernel(np.array([[1.1, -0.1], [0.2, 0.8]]))  # negative entry
    with pytest.raises(InputError):
        TransitionKernel(np.ones((2, 3)) / 3.0)  # not square


def test_kernel_matrix_is_readonly(two_state):
    with pytest.raises(ValueError):
        two_state.P[0, 0] = 0.5


def test_periodic_kernel_fails_ergodicity_checks():
    flip = TransitionKernel(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert not flip.is_primitive()
    with pytest.raises(ErgodicityError):
        flip.ensure_ergodic()
    with pytest.raises(ErgodicityError):
        diagnose(flip)


def test_reducible_kernel_rejected():
    block = TransitionKernel(np.eye(3))
    assert not block.is_primitive()


# ---------------------------------------------------------------------------
# stationary distribution


def test_stationary_two_state(two_state):
    np.testing.assert_allclose(stationary(two_state), [2 / 3, 1 / 3], atol=1e-10)


def test_stationary_uniform_three_state():
    k = TransitionKernel(np.full((3, 3), 1 / 3))
    np.testing.assert_allclose(stationary(k), [1 / 3, 1 / 3, 1 / 3], atol=1e-12)


def test_stationary_matches_eigen_oracle(dense8):
    pi = stationary(dense8)
    np.testing.assert_allclose(pi, eigen_stationary(dense8.P), atol=1e-9)
    # fixed-point residual contract
    assert np.abs(pi @ dense8.P - pi).sum() <= 1e-10
    assert pi.sum() == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# mixing diagnostics


def test_mixing_time_two_state(two_state):
    assert mixing_time(two_state) == 3
    assert mixing_time(two_state) == brute_mixing_time(two_state.P)


def test_mixing_time_uniform_rows():
    k = TransitionKernel(np.full((4, 4), 0.25))
    assert mixing_time(k) == 1


def test_mixing_time_matches_brute_force(dense8):
    assert mixing_time(dense8) == brute_mixing_time(dense8.P)


def test_diagnose_curve_properties(two_state):
    diag = diagnose(two_state)
    assert diag.tau_mix == 3
    curve = np.asarray(diag.tv_curve)
    assert len(curve) >= 2 * diag.tau_mix
    assert np.all(np.diff(curve) <= 1e-12)  # nonincreasing
    # submultiplicativity: d(s+t) <= dbar(s) dbar(t) and dbar <= 2 d
    assert curve[2 * diag.tau_mix - 1] <= 4 * curve[diag.tau_mix - 1] ** 2 + 1e-12


def test_diagnose_pi_consistency(dense8):
    diag = diagnose(dense8)
    np.testing.assert_allclose(diag.pi, stationary(dense8), atol=1e-12)


# ---------------------------------------------------------------------------
# laziness


def test_make_lazy_alpha_zero_is_identity(two_state):
    same = make_lazy(two_state, 0.0)
    np.testing.assert_allclose(same.P, two_state.P, atol=0)


def test_make_lazy_second_eigenvalue(two_state):
    # alpha + (1 - alpha) * lambda_2: 0.5 + 0.5 * 0.7 = 0.85
    lazy = make_lazy(two_state, 0.5)
    eig = np.sort(np.linalg.eigvals(lazy.P).real)
    np.testing.assert_allclose(eig[0], 0.85, atol=1e-12)
    assert mixing_time(lazy) >= mixing_time(two_state)


def test_make_lazy_preserves_stationary(dense8):
    lazy = make_lazy(dense8, 0.7)
    np.testing.assert_allclose(stationary(lazy), stationary(dense8), atol=1e-9)


def test_make_lazy_alpha_near_one_rows_near_identity(two_state):
    lazy = make_lazy(two_state, 0.999)
    assert np.min(np.diag(lazy.P)) > 0.99


def test_make_lazy_rejects_bad_alpha(two_state):
    for alpha in (-0.1, 1.0, 1.5):
        with pytest.raises(InputError):
            make_lazy(two_state, alpha)


def test_lazy_for_mixing_time_hits_target(dense8):
    lazy, alpha, tau = lazy_for_mixing_time(dense8, 25)
    assert tau >= 25
    assert 0.0 < alpha < 1.0
    assert mixing_time(lazy) == tau
    # already-slow chains come back unchanged
    same, alpha0, tau0 = lazy_for_mixing_time(lazy, 5)
    assert alpha0 == 0.0 and tau0 == tau


# ---------------------------------------------------------------------------
# cursor sampling


def test_cursor_deterministic_two_cycle():
    flip = TransitionKernel(np.array([[0.0, 1.0], [1.0, 0.0]]))
    cur = ChainCursor(flip, np.random.default_rng(0), start=0)
    np.testing.assert_array_equal(cur.advance(3), [1, 0, 1])
    assert cur.n_consumed == 3
    assert cur.state == 1


def test_cursor_same_seed_same_sequence(dense8):
    a = ChainCursor(dense8, np.random.default_rng(42))
    b = ChainCursor(dense8, np.random.default_rng(42))
    np.testing.assert_array_equal(a.advance(500), b.advance(500))
    assert a.n_consumed == b.n_consumed == 500


def test_cursor_schedule_independence(dense8):
    a = ChainCursor(dense8, np.random.default_rng(9))
    b = ChainCursor(dense8, np.random.default_rng(9))
    chunks = np.concatenate([a.advance(3), a.advance(2), a.advance(7)])
    np.testing.assert_array_equal(chunks, b.advance(12))


def test_cursor_empirical_frequencies_match_pi(dense8):
    pi = stationary(dense8)
    cur = ChainCursor(dense8, np.random.default_rng(3))
    n = 100_000
    states = cur.advance(n)
    freq = np.bincount(states, minlength=dense8.n_states) / n
    se = np.sqrt(pi * (1 - pi) / n)
    assert np.all(np.abs(freq - pi) <= 3 * se + 1e-12)


def test_cursor_invalid_start(dense8):
    with pytest.raises(InputError):
        ChainCursor(dense8, np.random.default_rng(0), start=8)
    with pytest.raises(InputError):
        ChainCursor(dense8, np.random.default_rng(0), start=-1)


def test_cursor_skip_counts_and_marginal_law(two_state):
    cur = ChainCursor(two_state, np.random.default_rng(0), start=0)
    cur.skip(10)
    assert cur.n_consumed == 10
    # endpoint marginal after skip(k) must follow the k-step transition row
    k = 4
    row = np.linalg.matrix_power(two_state.P, k)[0]
    trials = 20_000
    hits = 0
    rng = np.random.default_rng(7)
    for _ in range(trials):
        c = ChainCursor(two_state, rng, start=0)
        c.skip(k)
        hits += c.state == 0
    p_hat = hits / trials
    se = np.sqrt(row[0] * (1 - row[0]) / trials)
    assert abs(p_hat - row[0]) <= 3.5 * se


def test_power_row_matches_matrix_power(dense8):
    for steps in (1, 2, 5, 17, 64):
        expect = np.linalg.matrix_power(dense8.P, steps)[2]
        np.testing.assert_allclose(dense8.power_row(2, steps), expect, atol=1e-12)


# ---------------------------------------------------------------------------
# generators


def test_random_ergodic_properties():
    for n in (2, 8, 40):
        k = random_ergodic(n, seed=7)
        assert np.min(k.P) >= 0.01 - 1e-15
        np.testing.assert_allclose(k.P.sum(axis=1), 1.0, atol=1e-12)
        assert k.is_primitive()
        assert stationary(k).sum() == pytest.approx(1.0, abs=1e-12)
    # deterministic in the seed
    np.testing.assert_array_equal(random_ergodic(5, seed=3).P, random_ergodic(5, seed=3).P)


def test_random_ergodic_mixes_fast():
    # entry floor 0.01 forces TV contraction by (1 - 0.01 n) per step
    k = random_ergodic(10, seed=1)
    bound = int(np.ceil(np.log(4.0) / -np.log(1 - 0.01 * 10)))
    assert mixing_time(k) <= bound


def test_random_ergodic_bounds():
    with pytest.raises(InputError):
        random_ergodic(1, seed=0)
    with pytest.raises(InputError):
        random_ergodic(101, seed=0)


def test_sample_paths_shape_and_determinism(dense8):
    a = sample_paths(dense8, 50, 6, np.random.default_rng(11))
    b = sample_paths(dense8, 50, 6, np.random.default_rng(11))
    assert a.shape == (6, 50)
    np.testing.assert_array_equal(a, b)
    assert a.min() >= 0 and a.max() < dense8.n_states
