"""Finite-state Markov kernels, mixing diagnostics, and sample cursors.

Kernels are row-stochastic matrices over states {0, ..., n-1}.  A
cursor wraps a kernel with a seeded generator and hands out successive
states; estimators consume exactly the states they account for, so the
cursor's sample counter is the ground truth for chain-step bookkeeping.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .errors import ErgodicityError, InputError

_STATIONARY_TOL = 1e-12
_STATIONARY_RESIDUAL = 1e-10
_MAX_POWER_STEPS = 10**6


class TransitionKernel:
    """Validated row-stochastic transition matrix.

    Construction checks stochasticity only; ergodicity (irreducible +
    aperiodic) is checked by the procedures that require it, so that
    defective kernels can still be constructed and diagnosed.
    """

    def __init__(self, matrix):
        P = np.array(matrix, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
            raise InputError(f"kernel must be a square matrix, got shape {P.shape}")
        if np.min(P) < 0.0:
            raise InputError("kernel has negative entries")
        rows = P.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > 1e-12:
            raise InputError("kernel rows must sum to 1 within 1e-12")
        P.flags.writeable = False
        self.P = P
        self.n_states = P.shape[0]
        self._cum_lists = None
        self._cum = None
        self._pow2 = {0: P}
        self._pi = None

    def is_primitive(self):
        """True iff some power P^k (k <= n^2) has all entries positive."""
        B = self.P > 0.0
        k = 1
        # positivity is monotone in k for stochastic P, so doubling suffices
        while k < self.n_states**2:
            if B.all():
                return True
            B = (B.astype(np.uint8) @ B.astype(np.uint8)) > 0
            k *= 2
        return bool(B.all())

    def ensure_ergodic(self):
        if not self.is_primitive():
            raise ErgodicityError(
                "kernel is not irreducible and aperiodic (no power <= n^2 is positive)"
            )

    # -- sampling support ----------------------------------------------
    def _cum_rows(self):
        if self._cum is None:
            self._cum = np.cumsum(self.P, axis=1)
            self._cum_lists = [row.tolist() for row in self._cum]
        return self._cum

    def step(self, states, rng):
        """Advance a vector of states by one transition (vectorized)."""
        cum = self._cum_rows()
        states = np.asarray(states)
        u = rng.random(states.shape[0])
        nxt = np.sum(cum[states] <= u[:, None], axis=1)
        return np.minimum(nxt, self.n_states - 1)

    def power_row(self, state, steps):
        """Row of P^steps for the given start state, by binary exponentiation."""
        if steps < 0:
            raise InputError("steps must be nonnegative")
        row = np.zeros(self.n_states)
        row[state] = 1.0
        bit = 0
        while steps:
            if bit not in self._pow2:
                prev = self._pow2[bit - 1]
                self._pow2[bit] = prev @ prev
            if steps & 1:
                row = row @ self._pow2[bit]
            steps >>= 1
            bit += 1
        return row

    def sample_stationary(self, rng, n=None):
        pi = stationary(self)
        cum = np.cumsum(pi)
        u = rng.random() if n is None else rng.random(n)
        idx = np.searchsorted(cum, u, side="right")
        return np.minimum(idx, self.n_states - 1)

    def __repr__(self):
        return f"TransitionKernel(n_states={self.n_states})"


def stationary(kernel, tol=_STATIONARY_TOL, max_iter=_MAX_POWER_STEPS):
    """Stationary distribution by power iteration on the distribution vector."""
    if kernel._pi is not None:
        return kernel._pi
    kernel.ensure_ergodic()
    mu = np.full(kernel.n_states, 1.0 / kernel.n_states)
    for _ in range(max_iter):
        nxt = mu @ kernel.P
        if np.abs(nxt - mu).sum() <= tol:
            mu = nxt
            break
        mu = nxt
    else:
        raise ErgodicityError(f"power iteration did not converge in {max_iter} steps")
    mu = mu / mu.sum()
    if np.abs(mu @ kernel.P - mu).sum() > _STATIONARY_RESIDUAL:
        raise ErgodicityError("stationary residual above 1e-10 after power iteration")
    kernel._pi = mu
    return mu


def mixing_time(kernel, threshold=0.25):
    """Smallest t with max-over-starts TV(P^t(z, .), pi) <= threshold."""
    return diagnose(kernel, threshold=threshold).tau_mix


@dataclass
class ChainDiagnostics:
    pi: np.ndarray
    tau_mix: int
    tv_curve: np.ndarray  # worst-case TV at t = 1, 2, ..., len(curve)
    threshold: float


def diagnose(kernel, threshold=0.25, horizon_factor=2):
    """Stationary distribution, mixing time, and the worst-start TV decay curve.

    The curve is extended to horizon_factor * tau_mix so callers can
    check submultiplicative decay past the threshold crossing.
    """
    if not 0.0 < threshold < 1.0:
        raise InputError(f"threshold must lie in (0, 1), got {threshold}")
    pi = stationary(kernel)
    Pt = kernel.P.copy()
    curve = []
    tau = None
    t = 0
    while True:
        t += 1
        tv = 0.5 * np.max(np.abs(Pt - pi).sum(axis=1))
        curve.append(tv)
        if tau is None and tv <= threshold:
            tau = t
        if tau is not None and t >= horizon_factor * tau:
            break
        if t >= _MAX_POWER_STEPS:
            raise ErgodicityError(f"TV did not drop below {threshold} in {t} steps")
        Pt = Pt @ kernel.P
    return ChainDiagnostics(pi=pi, tau_mix=tau, tv_curve=np.array(curve), threshold=threshold)


def make_lazy(kernel, alpha):
    """Lazy variant alpha * I + (1 - alpha) * P; slows mixing, keeps pi."""
    alpha = float(alpha)
    if not 0.0 <= alpha < 1.0:
        raise InputError(f"laziness alpha must lie in [0, 1), got {alpha}")
    n = kernel.n_states
    return TransitionKernel(alpha * np.eye(n) + (1.0 - alpha) * kernel.P)


def lazy_for_mixing_time(kernel, target_tau, max_alpha=0.9999):
    """Smallest-laziness variant whose mixing time reaches target_tau.

    Bisects on alpha; returns (lazy_kernel, alpha, achieved_tau).
    """
    base_tau = mixing_time(kernel)
    if base_tau >= target_tau:
        return kernel, 0.0, base_tau
    lo, hi = 0.0, max_alpha
    if mixing_time(make_lazy(kernel, hi)) < target_tau:
        raise InputError(f"target mixing time {target_tau} unreachable below alpha={max_alpha}")
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if mixing_time(make_lazy(kernel, mid)) >= target_tau:
            hi = mid
        else:
            lo = mid
    lazy = make_lazy(kernel, hi)
    return lazy, hi, mixing_time(lazy)


def random_ergodic(n_states, seed):
    """Random dense kernel with every entry >= 0.01 (hence ergodic)."""
    if n_states < 2:
        raise InputError(f"need at least 2 states, got {n_states}")
    if n_states > 100:
        raise InputError("entry floor 0.01 is infeasible beyond 100 states")
    rng = np.random.default_rng(seed)
    raw = rng.uniform(size=(n_states, n_states))
    raw /= raw.sum(axis=1, keepdims=True)
    c = 0.01 * n_states
    return TransitionKernel((1.0 - c) * raw + c / n_states)


class ChainCursor:
    """Sequential state sampler with exact consumed-sample accounting.

    Same seed and same advance schedule reproduce the same state
    sequence bit for bit.  Start state is drawn from the stationary
    distribution unless an explicit state is given.
    """

    def __init__(self, kernel, rng, start="stationary"):
        self.kernel = kernel
        self.rng = np.random.default_rng(rng)
        if start == "stationary":
            self.state = int(kernel.sample_stationary(self.rng))
        else:
            state = int(start)
            if not 0 <= state < kernel.n_states:
                raise InputError(f"start state {start} outside [0, {kernel.n_states})")
            self.state = state
        self.n_consumed = 0

    def advance(self, steps):
        """Sample the next `steps` states; returns them and moves the cursor."""
        steps = int(steps)
        if steps < 1:
            raise InputError(f"advance needs steps >= 1, got {steps}")
        kernel = self.kernel
        kernel._cum_rows()
        cum = kernel._cum_lists
        last = kernel.n_states - 1
        u = self.rng.random(steps).tolist()
        out = np.empty(steps, dtype=np.int64)
        s = self.state
        for i, ui in enumerate(u):
            s = bisect_right(cum[s], ui)
            if s > last:
                s = last
            out[i] = s
        self.state = s
        self.n_consumed += steps
        return out

    def skip(self, steps):
        """Advance the counter by `steps` without materializing the states.

        The end state is drawn from the exact `steps`-step transition law
        (binary matrix powers), so the joint distribution of everything a
        caller ever observes is unchanged; only the intermediate states,
        which the caller is discarding anyway, are never instantiated.
        """
        steps = int(steps)
        if steps < 0:
            raise InputError(f"skip needs steps >= 0, got {steps}")
        if steps == 0:
            return
        row = self.kernel.power_row(self.state, steps)
        cum = np.cumsum(row)
        idx = int(np.searchsorted(cum, self.rng.random(), side="right"))
        self.state = min(idx, self.kernel.n_states - 1)
        self.n_consumed += steps


def sample_paths(kernel, n_steps, n_paths, rng, start="stationary"):
    """Simulate n_paths independent trajectories of length n_steps (vectorized).

    Returns an (n_paths, n_steps) int matrix.  Memory-heavy for very long
    paths; reduction-style consumers should iterate kernel.step directly.
    """
    rng = np.random.default_rng(rng)
    if start == "stationary":
        states = kernel.sample_stationary(rng, n_paths)
    else:
        states = np.full(n_paths, int(start))
    out = np.empty((n_paths, n_steps), dtype=np.int16 if kernel.n_states < 2**15 else np.int64)
    for t in range(n_steps):
        states = kernel.step(states, rng)
        out[:, t] = states
    return out
