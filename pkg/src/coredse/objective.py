"""Rewards, advantages, and the clipped-ratio surrogate objective.

Reward shaping: a valid design scores the weighted metric sum minus
alpha_c times the summed positive constraint residuals.  A design the
evaluator could not score (anomalous) gets a reward derived from the
previous batch mean, the running reward, and the current batch mean --
or the floor value r_ano on the first episode and whenever those means
are unavailable.

The surrogate combines the importance-ratio-weighted advantages with a
forward-KL trust term against the sampling snapshot and a decaying
entropy bonus.  Log-ratios are clamped to +-RATIO_BOUND before
exponentiation; a clamped sample contributes no gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, polygamma

from . import policy
from .policy import CompoundAction, DistributionSet

__all__ = [
    "RATIO_BOUND",
    "Violation",
    "EvalOutcome",
    "RewardConfig",
    "scalar_reward",
    "penalty_reward",
    "anomalous_reward",
    "update_running",
    "advantages",
    "raw_objective",
    "surrogate_objective",
    "surrogate_gradients",
]

RATIO_BOUND = 20.0


@dataclass(frozen=True)
class Violation:
    """One positive normalized constraint residual: (value - budget) / budget."""

    name: str
    residual: float

    def __post_init__(self):
        if not (self.residual > 0.0):
            raise ValueError(f"violation {self.name!r} needs residual > 0, got {self.residual}")


@dataclass(frozen=True)
class EvalOutcome:
    metrics: tuple[float, ...] | None
    violations: tuple[Violation, ...] = ()
    anomalous: bool = False
    note: str = ""

    def __post_init__(self):
        if self.anomalous:
            if self.metrics is not None:
                raise ValueError("anomalous outcomes carry no metrics")
        else:
            if self.metrics is None or not all(np.isfinite(m) for m in self.metrics):
                raise ValueError(f"valid outcome needs finite metrics, got {self.metrics}")

    @staticmethod
    def ok(metrics, violations=()) -> "EvalOutcome":
        return EvalOutcome(metrics=tuple(float(m) for m in metrics), violations=tuple(violations))

    @staticmethod
    def failed(note: str = "") -> "EvalOutcome":
        return EvalOutcome(metrics=None, anomalous=True, note=note)

    @property
    def feasible(self) -> bool:
        return not self.anomalous and not self.violations

    def violation_sum(self) -> float:
        return float(sum(v.residual for v in self.violations))


@dataclass(frozen=True)
class RewardConfig:
    weights: tuple[float, ...] = (-1.0, 0.0)  # latency-only objective
    alpha_c: float = 1.0  # constraint penalty rate
    alpha_p: float = 1.0  # anomalous batch-mean rate
    alpha_r: float = 0.2  # running-reward EMA rate
    beta_r: float = 1.0  # KL trust weight
    beta_e_start: float = 1.0  # entropy bonus schedule
    beta_e_end: float = 0.02
    r_ano: float = -1e9  # anomalous floor reward
    shaping: bool = True
    no_shaping_penalty: float = -1e9

    def __post_init__(self):
        if not self.weights:
            raise ValueError("RewardConfig needs at least one metric weight")
        if not 0.0 <= self.alpha_r <= 1.0:
            raise ValueError(f"alpha_r must be in [0, 1], got {self.alpha_r}")


def _weighted(metrics, weights) -> float:
    if len(metrics) != len(weights):
        raise ValueError(f"{len(metrics)} metrics vs {len(weights)} weights")
    return float(np.dot(np.asarray(metrics, dtype=float), np.asarray(weights, dtype=float)))


def scalar_reward(outcome: EvalOutcome, cfg: RewardConfig) -> float:
    """Weighted metrics minus alpha_c * sum of positive residuals."""
    if outcome.anomalous:
        raise ValueError("scalar_reward is only defined for valid outcomes")
    return _weighted(outcome.metrics, cfg.weights) - cfg.alpha_c * outcome.violation_sum()


def penalty_reward(outcome: EvalOutcome, cfg: RewardConfig) -> float:
    """Shaping-disabled scoring: any violation collapses to the fixed penalty."""
    if outcome.anomalous:
        raise ValueError("penalty_reward is only defined for valid outcomes")
    if outcome.violations:
        return cfg.no_shaping_penalty
    return _weighted(outcome.metrics, cfg.weights)


def anomalous_reward(
    prev_batch_mean: float | None,
    running_prev: float,
    cur_batch_mean: float | None,
    t: int,
    cfg: RewardConfig,
) -> float:
    """Reward for a design the evaluator rejected, at 1-based episode t."""
    if t < 1:
        raise ValueError(f"episode index must be >= 1, got {t}")
    if t == 1 or prev_batch_mean is None or cur_batch_mean is None:
        return cfg.r_ano
    return min(prev_batch_mean, running_prev) - cfg.alpha_p * cur_batch_mean


def update_running(running_prev: float, rewards, alpha_r: float) -> float:
    """EMA step: alpha_r * batch_mean + (1 - alpha_r) * previous."""
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size == 0:
        raise ValueError("cannot update the running reward from an empty batch")
    return float(alpha_r * rewards.mean() + (1.0 - alpha_r) * running_prev)


def advantages(rewards, running: float) -> np.ndarray:
    return np.asarray(rewards, dtype=float) - running


def raw_objective(outcome: EvalOutcome, weights) -> float:
    """Positive minimization objective: negated weighted metric sum."""
    if outcome.anomalous:
        raise ValueError("raw_objective is only defined for valid outcomes")
    return -_weighted(outcome.metrics, weights)


# ---------------------------------------------------------------------------
# Surrogate objective

def _log_probs(dists: DistributionSet, actions) -> np.ndarray:
    return np.array([policy.log_prob(dists, a) for a in actions])


def surrogate_objective(
    dists: DistributionSet,
    snapshot: DistributionSet,
    actions,
    advs,
    beta_r: float,
    beta_e: float,
    ratio_bound: float = RATIO_BOUND,
) -> float:
    advs = np.asarray(advs, dtype=float)
    if len(actions) != advs.size:
        raise ValueError(f"{len(actions)} actions vs {advs.size} advantages")
    if len(actions) == 0:
        raise ValueError("surrogate objective needs a non-empty batch")
    delta = _log_probs(dists, actions) - _log_probs(snapshot, actions)
    ratio = np.exp(np.clip(delta, -ratio_bound, ratio_bound))
    return (
        float(np.mean(ratio * advs))
        - beta_r * policy.kl(dists, snapshot)
        + beta_e * policy.entropy(dists)
    )


def surrogate_gradients(
    dists: DistributionSet,
    snapshot: DistributionSet,
    actions,
    advs,
    beta_r: float,
    beta_e: float,
    ratio_bound: float = RATIO_BOUND,
):
    """Value and closed-form gradients wrt head parameters.

    Returns (value, d_alpha, d_beta, d_logits) where d_logits is one array
    per categorical head, already chained through the softmax.
    """
    layout = dists.layout
    advs = np.asarray(advs, dtype=float)
    E = len(actions)
    if E == 0 or advs.size != E:
        raise ValueError("batch of actions and advantages must match and be non-empty")

    a, b = dists.alphas, dists.betas
    ab = a + b
    dg_a, dg_b, dg_ab = digamma(a), digamma(b), digamma(ab)

    delta = _log_probs(dists, actions) - _log_probs(snapshot, actions)
    ratio = np.exp(np.clip(delta, -ratio_bound, ratio_bound))
    active = np.abs(delta) < ratio_bound
    coef = advs * ratio * active / E  # (E,)

    value = float(np.mean(ratio * advs))
    d_alpha = np.zeros_like(a)
    d_beta = np.zeros_like(b)
    d_logits = [np.zeros_like(p) for p in dists.cat_probs]

    if layout.n_beta:
        X = np.stack([act.raw[layout.beta_params] for act in actions])  # (E, n_beta)
        d_alpha += coef @ (np.log(X) - dg_a + dg_ab)
        d_beta += coef @ (np.log1p(-X) - dg_b + dg_ab)
    for j, pi in enumerate(layout.cat_params):
        p = dists.cat_probs[j]
        idx = np.array([int(act.raw[pi]) for act in actions])
        g = -np.outer(coef, p)
        g[np.arange(E), idx] += coef
        d_logits[j] += g.sum(axis=0)

    # Forward KL against the snapshot.
    tg_a, tg_b, tg_ab = polygamma(1, a), polygamma(1, b), polygamma(1, ab)
    da, db = a - snapshot.alphas, b - snapshot.betas
    kl_total = policy.kl(dists, snapshot)
    value -= beta_r * kl_total
    d_alpha -= beta_r * (da * tg_a - (da + db) * tg_ab)
    d_beta -= beta_r * (db * tg_b - (da + db) * tg_ab)
    for j, (p, q) in enumerate(zip(dists.cat_probs, snapshot.cat_probs)):
        safe_p = np.where(p > 0.0, p, 1.0)
        safe_q = np.where(q > 0.0, q, 1.0)  # p = 0 rows are masked; q = 0 with p > 0 diverges
        logpq = np.where(p > 0.0, np.log(safe_p) - np.log(safe_q) + np.where(q > 0.0, 0.0, np.inf), 0.0)
        kl_head = float(np.sum(p * logpq))
        d_logits[j] -= beta_r * p * (logpq - kl_head)

    # Entropy bonus.
    ent_total = policy.entropy(dists)
    value += beta_e * ent_total
    d_alpha += beta_e * (-(a - 1.0) * tg_a + (ab - 2.0) * tg_ab)
    d_beta += beta_e * (-(b - 1.0) * tg_b + (ab - 2.0) * tg_ab)
    for j, p in enumerate(dists.cat_probs):
        safe_p = np.where(p > 0.0, p, 1.0)
        logp = np.log(safe_p)
        h_head = -float(np.sum(p * np.where(p > 0.0, logp, 0.0)))
        d_logits[j] += beta_e * p * (-logp - h_head)

    return value, d_alpha, d_beta, d_logits
