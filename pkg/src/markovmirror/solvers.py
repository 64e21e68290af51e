"""Mirror-descent and mirror-prox solvers driven by a Markov chain cursor.

Two families:

* accelerated stochastic mirror descent for smooth minimization
  (`mamd_unbatched` / `mamd_batched`), with momentum/stepsize schedules
  built by the factory functions below;
* stochastic mirror prox for monotone VIs and matrix games
  (`mmp_unbatched` / `mmp_batched`) with a constant stepsize.

The unbatched variants consume one correlated chain state per oracle
evaluation; the batched variants replace the single draw with a batch
mean and a truncated-geometric multilevel estimate, which restores
clean stepsize constants at the price of more oracle calls per
iteration.  With B = M = 1 the batched loops reduce exactly to the
unbatched ones on the same stream.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .chain import mixing_time
from .errors import InputError, ScheduleError
from .estimators import MlmcConfig, batch_mean, mlmc_geometric, single_sample

__all__ = [
    "MamdSchedule",
    "RunRecord",
    "mamd_unbatched",
    "mamd_batched",
    "mmp_unbatched",
    "mmp_batched",
    "mamd_unbatched_schedule",
    "mamd_batched_schedule",
    "mmp_unbatched_stepsize",
    "mmp_batched_params",
]


@dataclass
class MamdSchedule:
    """Momentum/stepsize schedule for accelerated mirror descent.

    beta(t) is the momentum parameter and gamma(t) the mirror stepsize
    at iteration t; tau is the warmup offset baked into them (0 for the
    batched variant).
    """

    beta: object
    gamma: object
    tau: int = 0

    def arrays(self, T):
        ts = np.arange(int(T) + 1)
        betas = np.array([float(self.beta(int(t))) for t in ts])
        gammas = np.array([float(self.gamma(int(t))) for t in ts])
        return betas, gammas

    def validate(self, L, T):
        """Check the invariants the convergence analysis rests on.

        Raises ScheduleError if beta(tau) != 1, any stepsize is
        nonpositive, beta_t < 2 gamma_t L, or the telescoping condition
        (beta_{t+1} - 1) gamma_{t+1} <= beta_t gamma_t fails on [0, T].
        """
        betas, gammas = self.arrays(T)
        if not (np.all(np.isfinite(betas)) and np.all(np.isfinite(gammas))):
            raise ScheduleError("schedule produced non-finite beta/gamma")
        if np.any(gammas <= 0):
            raise ScheduleError("gamma(t) must be positive")
        if np.any(betas < 1.0 - 1e-12):
            raise ScheduleError("beta(t) must be >= 1")
        if self.tau <= T and abs(float(self.beta(self.tau)) - 1.0) > 1e-9:
            raise ScheduleError(
                f"beta(tau) must equal 1, got beta({self.tau}) = {self.beta(self.tau)}"
            )
        lhs = (betas[1:] - 1.0) * gammas[1:]
        rhs = betas[:-1] * gammas[:-1]
        bad = lhs > rhs * (1 + 1e-9) + 1e-12
        if np.any(bad):
            t = int(np.argmax(bad)) + 1
            raise ScheduleError(
                f"(beta_t - 1) gamma_t decreased below beta gamma at t = {t}"
            )
        bad = betas < 2.0 * gammas * L * (1 - 1e-9) - 1e-12
        if np.any(bad):
            t = int(np.argmax(bad))
            raise ScheduleError(f"beta_t < 2 gamma_t L at t = {t}")


@dataclass
class RunRecord:
    """Everything a solver run produced.

    Row arrays are aligned: rows[i] describes the state after `t[i]`
    completed iterations.  `x_out` is the point the method reports
    (averaged/accelerated iterate), `x_last` the raw final iterate.
    """

    t: np.ndarray
    oracle_calls: np.ndarray
    chain_steps: np.ndarray
    gap: np.ndarray
    wall_ms: np.ndarray
    x_out: np.ndarray
    x_last: np.ndarray
    config: dict = field(default_factory=dict)
    iterates: list | None = None


class _Recorder:
    def __init__(self, T, stride, gap_fn):
        self.T = int(T)
        self.stride = None if stride in (None, 0) else int(stride)
        self.gap_fn = gap_fn
        self.t0 = time.perf_counter()
        self.rows = []

    def maybe(self, t, calls, steps, point):
        if t != self.T and (self.stride is None or t % self.stride != 0):
            return
        if self.gap_fn is None or point is None:
            gap = np.nan
        else:
            gap = float(self.gap_fn(point))
        wall = (time.perf_counter() - self.t0) * 1e3
        self.rows.append((t, calls, steps, gap, wall))

    def finish(self, x_out, x_last, config, iterates):
        cols = list(zip(*self.rows)) if self.rows else [[], [], [], [], []]
        return RunRecord(
            t=np.asarray(cols[0], dtype=np.int64),
            oracle_calls=np.asarray(cols[1], dtype=np.int64),
            chain_steps=np.asarray(cols[2], dtype=np.int64),
            gap=np.asarray(cols[3], dtype=float),
            wall_ms=np.asarray(cols[4], dtype=float),
            x_out=np.array(x_out, dtype=float),
            x_last=np.array(x_last, dtype=float),
            config=config,
            iterates=iterates,
        )


def _check_T(T):
    T = int(T)
    if T < 1:
        raise InputError(f"T must be >= 1, got {T}")
    return T


def mamd_unbatched(problem, schedule, cursor, T, *, gap_fn=None, stride=None,
                   keep_iterates=False, x0=None):
    """Accelerated mirror descent, one chain state per iteration.

    Requires T to reach past the schedule's warmup offset; reports the
    accelerated average x_f after T iterations.
    """
    T = _check_T(T)
    schedule.validate(problem.L, T)
    if T < schedule.tau:
        raise ScheduleError(f"T = {T} is shorter than the warmup tau = {schedule.tau}")
    geo = problem.geometry
    oracle = problem.grad_oracle
    x = geo.center() if x0 is None else np.array(x0, dtype=float)
    x_f = x.copy()
    calls = steps = 0
    rec = _Recorder(T, stride, gap_fn)
    kept = [] if keep_iterates else None
    for t in range(T):
        inv = 1.0 / float(schedule.beta(t))
        x_g = inv * x + (1.0 - inv) * x_f
        est = single_sample(oracle, x_g, cursor)
        x = geo.prox(x, float(schedule.gamma(t)) * est.g)
        x_f = inv * x + (1.0 - inv) * x_f
        calls += est.oracle_calls
        steps += est.chain_steps
        if kept is not None:
            kept.append((x.copy(), x_f.copy()))
        rec.maybe(t + 1, calls, steps, x_f)
    config = {"algorithm": "mamd_unbatched", "T": T, "tau": schedule.tau}
    return rec.finish(x_f, x, config, kept)


def mamd_batched(problem, schedule, cursor, T, mlmc, level_rng, *, gap_fn=None,
                 stride=None, keep_iterates=False, x0=None):
    """Accelerated mirror descent with multilevel gradient estimates.

    `mlmc` is an MlmcConfig; `level_rng` draws the geometric levels and
    must be independent of the cursor's stream.
    """
    T = _check_T(T)
    schedule.validate(problem.L, T)
    geo = problem.geometry
    oracle = problem.grad_oracle
    x = geo.center() if x0 is None else np.array(x0, dtype=float)
    x_f = x.copy()
    calls = steps = 0
    rec = _Recorder(T, stride, gap_fn)
    kept = [] if keep_iterates else None
    for t in range(T):
        inv = 1.0 / float(schedule.beta(t))
        x_g = inv * x + (1.0 - inv) * x_f
        est = mlmc_geometric(oracle, x_g, cursor, mlmc, level_rng)
        x = geo.prox(x, float(schedule.gamma(t)) * est.g)
        x_f = inv * x + (1.0 - inv) * x_f
        calls += est.oracle_calls
        steps += est.chain_steps
        if kept is not None:
            kept.append((x.copy(), x_f.copy()))
        rec.maybe(t + 1, calls, steps, x_f)
    config = {
        "algorithm": "mamd_batched", "T": T, "tau": schedule.tau,
        "B": mlmc.B, "M": mlmc.M,
    }
    return rec.finish(x_f, x, config, kept)


def _vi_oracle(problem):
    op = getattr(problem, "op_oracle", None)
    return op if op is not None else problem.grad_oracle


def mmp_unbatched(problem, gamma, cursor, T, *, gap_fn=None, stride=None,
                  keep_iterates=False, avg_start=None, x0=None):
    """Mirror prox, one chain state reused for both half and full step.

    Averages the half-step iterates from `avg_start` (default: the
    kernel's mixing time) to T-1; each iteration costs two oracle
    evaluations but a single chain step.
    """
    T = _check_T(T)
    gamma = float(gamma)
    L_tilde = float(getattr(problem, "L_tilde", problem.L))
    if gamma <= 0:
        raise ScheduleError(f"gamma must be positive, got {gamma}")
    if gamma > 0.5 / L_tilde * (1 + 1e-9):
        raise ScheduleError(f"gamma = {gamma} exceeds 1/(2 L) = {0.5 / L_tilde}")
    if avg_start is None:
        avg_start = mixing_time(cursor.kernel)
    avg_start = int(avg_start)
    if T <= avg_start:
        raise ScheduleError(
            f"T = {T} leaves an empty averaging window starting at {avg_start}"
        )
    geo = problem.geometry
    oracle = _vi_oracle(problem)
    x = geo.center() if x0 is None else np.array(x0, dtype=float)
    x_hat = None
    n_avg = 0
    calls = steps = 0
    rec = _Recorder(T, stride, gap_fn)
    kept = [] if keep_iterates else None
    for t in range(T):
        z = int(cursor.advance(1)[0])
        x_half = geo.prox(x, gamma * np.asarray(oracle(x, z), dtype=float))
        x = geo.prox(x, gamma * np.asarray(oracle(x_half, z), dtype=float))
        calls += 2
        steps += 1
        if t >= avg_start:
            n_avg += 1
            if x_hat is None:
                x_hat = x_half.copy()
            else:
                x_hat += (x_half - x_hat) / n_avg
        if kept is not None:
            kept.append((x_half.copy(), x.copy()))
        rec.maybe(t + 1, calls, steps, x_hat)
    config = {
        "algorithm": "mmp_unbatched", "T": T, "gamma": gamma,
        "avg_start": avg_start,
    }
    return rec.finish(x_hat, x, config, kept)


def mmp_batched(problem, gamma, cursor, T, mlmc, level_rng, *, gap_fn=None,
                stride=None, keep_iterates=False, x0=None):
    """Mirror prox with a batch-mean extrapolation and multilevel update.

    Fresh chain states for each half: the extrapolation step averages B
    draws at x, the update applies the multilevel estimate at the
    half-step point.  Averages all half-step iterates from t = 0.
    """
    T = _check_T(T)
    gamma = float(gamma)
    L = float(problem.L)
    if gamma <= 0:
        raise ScheduleError(f"gamma must be positive, got {gamma}")
    if gamma > 0.5 / L * (1 + 1e-9):
        raise ScheduleError(f"gamma = {gamma} exceeds 1/(2 L) = {0.5 / L}")
    geo = problem.geometry
    oracle = _vi_oracle(problem)
    x = geo.center() if x0 is None else np.array(x0, dtype=float)
    x_hat = None
    calls = steps = 0
    rec = _Recorder(T, stride, gap_fn)
    kept = [] if keep_iterates else None
    for t in range(T):
        est_half = batch_mean(oracle, x, cursor, mlmc.B)
        x_half = geo.prox(x, gamma * est_half.g)
        est_full = mlmc_geometric(oracle, x_half, cursor, mlmc, level_rng)
        x = geo.prox(x, gamma * est_full.g)
        calls += est_half.oracle_calls + est_full.oracle_calls
        steps += est_half.chain_steps + est_full.chain_steps
        if x_hat is None:
            x_hat = x_half.copy()
        else:
            x_hat += (x_half - x_hat) / (t + 1)
        if kept is not None:
            kept.append((x_half.copy(), x.copy()))
        rec.maybe(t + 1, calls, steps, x_hat)
    config = {
        "algorithm": "mmp_batched", "T": T, "gamma": gamma,
        "B": mlmc.B, "M": mlmc.M,
    }
    return rec.finish(x_hat, x, config, kept)


# ---------------------------------------------------------------------------
# schedule / stepsize factories


def _check_params(L, D, sigma, tau_mix, T):
    if not (L > 0 and np.isfinite(L)):
        raise InputError(f"L must be positive and finite, got {L}")
    if not (D > 0 and np.isfinite(D)):
        raise InputError(f"D must be positive and finite, got {D}")
    if sigma < 0:
        raise InputError(f"sigma must be >= 0, got {sigma}")
    tau_mix = int(tau_mix)
    if sigma > 0 and tau_mix < 1:
        raise InputError(f"tau_mix must be >= 1 when sigma > 0, got {tau_mix}")
    T = int(T)
    if T < 1:
        raise InputError(f"T must be >= 1, got {T}")
    return float(L), float(D), float(sigma), tau_mix, T


def mamd_unbatched_schedule(L, D, sigma, tau_mix, T):
    """Warmup schedule for single-sample accelerated mirror descent.

    Momentum stays flat (beta = 1) for the first tau_mix iterations,
    then grows linearly; the stepsize scales beta by a constant that
    balances the smoothness term against the noise accumulated over
    the effective horizon T - tau_mix.
    """
    L, D, sigma, tau, T = _check_params(L, D, sigma, tau_mix, T)
    if T <= tau:
        raise InputError(f"T = {T} must exceed tau_mix = {tau}")
    c = 0.5 / L
    if sigma > 0:
        c = min(c, D / ((T - tau) ** 1.5 * sigma * tau**1.5))

    def beta(t):
        return max((t - tau) / 2.0 + 1.0, 1.0)

    def gamma(t):
        return beta(t) * c

    return MamdSchedule(beta=beta, gamma=gamma, tau=tau)


def mamd_batched_schedule(L, D, sigma, tau_mix, T):
    """Schedule plus estimator config for batched accelerated mirror descent.

    No warmup: beta_t = t/2 + 1 from the start, with the noise constant
    paying only a sqrt(tau_mix) factor.  Returns (schedule, MlmcConfig)
    with B = 1 and truncation cap M = T.
    """
    L, D, sigma, tau, T = _check_params(L, D, sigma, tau_mix, T)
    c = 0.5 / L
    if sigma > 0:
        c = min(c, D / (T**1.5 * sigma * tau**0.5))

    def beta(t):
        return t / 2.0 + 1.0

    def gamma(t):
        return beta(t) * c

    return MamdSchedule(beta=beta, gamma=gamma, tau=0), MlmcConfig(B=1, M=T)


def mmp_unbatched_stepsize(L_tilde, D, sigma, tau_mix, T):
    """Constant stepsize for single-sample mirror prox."""
    L_tilde, D, sigma, tau, T = _check_params(L_tilde, D, sigma, tau_mix, T)
    if T <= tau:
        raise InputError(f"T = {T} must exceed tau_mix = {tau}")
    gamma = 0.5 / L_tilde
    if sigma > 0:
        gamma = min(gamma, D / ((T - tau) ** 0.5 * sigma * tau))
    return gamma


def mmp_batched_params(L, D, sigma, tau_mix, T):
    """Constant stepsize plus estimator config for batched mirror prox."""
    L, D, sigma, tau, T = _check_params(L, D, sigma, tau_mix, T)
    gamma = 0.5 / L
    if sigma > 0:
        gamma = min(gamma, D / (T**0.5 * sigma * tau**0.5))
    return gamma, MlmcConfig(B=1, M=T)
