"""Adaptive random-walk Metropolis sampling.

The proposal is a mixture kernel: with probability ``mixture_weight`` a
Gaussian step scaled by (2.38^2 / d) times the running sample covariance,
otherwise a fixed Gaussian step with covariance (0.1^2 / d) I.  The fixed
component is used exclusively for the first ``adapt_start`` iterations
(default 2d) while the covariance estimate accumulates.  Running moments
follow the single-pass recursion

    mean'  = mean  + (theta - mean) / (j + 1)
    cov'   = cov   + ((theta - mean)(theta - mean)^T - cov) / (j + 1)

absorbing the post-accept/reject chain state every iteration.  Both kernel
components are symmetric, so the acceptance probability reduces to
min(1, exp(candidate log posterior - current log posterior)).
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

FIXED_SCALE = 0.1
ADAPTIVE_SCALE = 2.38
CHOLESKY_JITTER = 1e-10


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 50_000
    burn_in: int = 10_000
    thinning: int = 10
    mixture_weight: float = 0.95
    adapt_start: int | None = None  # None -> 2 * dimension
    window: int = 1000  # acceptance-rate reporting window

    def __post_init__(self):
        if self.iterations <= 0 or self.thinning <= 0 or self.window <= 0:
            raise ValueError("iterations, thinning and window must be positive")
        if not (0 <= self.burn_in < self.iterations):
            raise ValueError("burn_in must lie inside [0, iterations)")
        if not (0.0 <= self.mixture_weight <= 1.0):
            raise ValueError("mixture_weight must be in [0, 1]")
        if self.adapt_start is not None and self.adapt_start < 0:
            raise ValueError("adapt_start must be non-negative")

    def resolve_adapt_start(self, dim: int) -> int:
        return 2 * dim if self.adapt_start is None else self.adapt_start


@dataclass
class ChainState:
    """Current position plus running proposal moments.

    ``iteration`` counts states absorbed into the moments (the initial
    state counts as one), so the next update divides by iteration + 1.
    """

    theta: np.ndarray
    log_post: float
    mean: np.ndarray
    cov: np.ndarray
    iteration: int = 1

    @classmethod
    def initial(cls, theta: np.ndarray, log_post: float) -> "ChainState":
        theta = np.asarray(theta, float).copy()
        d = theta.size
        return cls(theta=theta, log_post=float(log_post), mean=theta.copy(),
                   cov=np.zeros((d, d)), iteration=1)


def update_moments(mean: np.ndarray, cov: np.ndarray, count: int,
                   theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One step of the running mean/covariance recursion.

    ``count`` is the number of states already absorbed; the update divides
    by count + 1.  The outer product uses the pre-update mean.
    """
    delta = theta - mean
    new_mean = mean + delta / (count + 1)
    new_cov = cov + (np.outer(delta, delta) - cov) / (count + 1)
    return new_mean, new_cov


def propose(state: ChainState, config: SamplerConfig,
            rng: np.random.Generator) -> np.ndarray:
    """Draw one candidate from the mixture kernel."""
    d = state.theta.size
    adapt_start = config.resolve_adapt_start(d)
    use_adaptive = (state.iteration >= adapt_start
                    and rng.uniform() < config.mixture_weight)
    if use_adaptive:
        scaled = (ADAPTIVE_SCALE ** 2 / d) * state.cov
        try:
            chol = np.linalg.cholesky(scaled)
        except np.linalg.LinAlgError:
            try:
                chol = np.linalg.cholesky(
                    scaled + CHOLESKY_JITTER * np.eye(d))
            except np.linalg.LinAlgError:
                warnings.warn("adaptive covariance not positive definite; "
                              "falling back to the fixed kernel")
                chol = None
        if chol is not None:
            return state.theta + chol @ rng.standard_normal(d)
    return state.theta + (FIXED_SCALE / np.sqrt(d)) * rng.standard_normal(d)


def accept_prob(current_log_post: float, candidate_log_post: float) -> float:
    """Metropolis acceptance probability for a symmetric kernel."""
    if candidate_log_post == -np.inf:
        return 0.0
    if current_log_post == -np.inf:
        warnings.warn("chain sits at an impossible state; accepting any "
                      "finite candidate")
        return 1.0
    return min(1.0, float(np.exp(min(0.0, candidate_log_post
                                     - current_log_post))))


@dataclass
class SampleRun:
    """Retained draws plus diagnostics from one chain."""

    samples: np.ndarray           # (n_kept, d)
    log_posts: np.ndarray         # (n_kept,)
    iterations: np.ndarray        # (n_kept,) 1-based iteration ids
    payloads: list                # per-kept-draw payload (terminal states)
    acceptance_rate: float
    window_acceptance: list[dict]
    n_invalid: int
    final_state: ChainState
    runtime_seconds: float
    extra: dict = field(default_factory=dict)

    def diagnostics(self) -> dict:
        return {
            "acceptance_rate": self.acceptance_rate,
            "window_acceptance": self.window_acceptance,
            "n_invalid_proposals": self.n_invalid,
            "n_kept": int(self.samples.shape[0]),
            "final_covariance": self.final_state.cov.tolist(),
            "runtime_seconds": self.runtime_seconds,
            **self.extra,
        }


def sample(log_post_fn, theta0: np.ndarray, config: SamplerConfig,
           rng: np.random.Generator) -> SampleRun:
    """Run one adaptive Metropolis chain.

    log_post_fn maps a vector to either a float or a (float, payload)
    pair; payloads of retained draws are kept (terminal ODE states during
    calibration).  The initial point must have a finite log posterior;
    otherwise a ValueError asks for re-initialization from prior draws.
    """
    started = time.perf_counter()
    theta0 = np.asarray(theta0, float)

    def evaluate(vec):
        out = log_post_fn(vec)
        if isinstance(out, tuple):
            return float(out[0]), out[1]
        return float(out), None

    lp0, payload = evaluate(theta0)
    if not np.isfinite(lp0):
        raise ValueError(
            "initial point has non-finite log posterior; re-draw the "
            "initial state from the priors and try again")
    state = ChainState.initial(theta0, lp0)

    kept_theta, kept_lp, kept_iter, kept_payload = [], [], [], []
    n_accept = 0
    n_invalid = 0
    window_acc: list[dict] = []
    window_count = 0

    for j in range(1, config.iterations + 1):
        candidate = propose(state, config, rng)
        cand_lp, cand_payload = evaluate(candidate)
        if cand_lp == -np.inf:
            n_invalid += 1
        alpha = accept_prob(state.log_post, cand_lp)
        if alpha >= 1.0 or rng.uniform() < alpha:
            state.theta = np.asarray(candidate, float).copy()
            state.log_post = cand_lp
            payload = cand_payload
            n_accept += 1
            window_count += 1
        state.mean, state.cov = update_moments(
            state.mean, state.cov, state.iteration, state.theta)
        state.iteration += 1

        if j > config.burn_in and (j - config.burn_in) % config.thinning == 0:
            kept_theta.append(state.theta.copy())
            kept_lp.append(state.log_post)
            kept_iter.append(j)
            kept_payload.append(payload)
        if j % config.window == 0:
            window_acc.append({"iteration": j,
                               "acceptance": window_count / config.window})
            window_count = 0

    return SampleRun(
        samples=np.array(kept_theta).reshape(len(kept_theta), theta0.size),
        log_posts=np.array(kept_lp),
        iterations=np.array(kept_iter, dtype=int),
        payloads=kept_payload,
        acceptance_rate=n_accept / config.iterations,
        window_acceptance=window_acc,
        n_invalid=n_invalid,
        final_state=state,
        runtime_seconds=time.perf_counter() - started,
    )


def run_chain(theta0: np.ndarray, log_post_fn, config: SamplerConfig,
              rng: np.random.Generator) -> SampleRun:
    """Alias of sample() with the calibration argument order."""
    return sample(log_post_fn, theta0, config, rng)
