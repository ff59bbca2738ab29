"""One-step policy-gradient search loop.

Every episode draws a fresh batch of compound actions from the policy
conditioned on a fixed context, evaluates the decoded designs, shapes
rewards, and takes exactly one Adam ascent step on the clipped surrogate.
Determinism contract: results are byte-identical across reruns and across
worker counts, because each sample's randomness comes from a generator
seeded by (seed, episode, slot) rather than from shared stream state.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .objective import (
    EvalOutcome,
    RewardConfig,
    advantages,
    anomalous_reward,
    penalty_reward,
    raw_objective,
    scalar_reward,
    surrogate_gradients,
    update_running,
)
from .policy import (
    CompoundAction,
    PolicyParams,
    context_vector,
    forward_cached,
    head_backward,
    init_params,
    layout_for_space,
    mlp_backward,
    sample,
)
from .problems import Problem

__all__ = [
    "PolicyConfig",
    "TrainConfig",
    "SampleRecord",
    "EpisodeReport",
    "BestDesign",
    "TrainResult",
    "entropy_coefficient",
    "evaluate_batch",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class PolicyConfig:
    input_width: int = 512
    hidden_width: int = 4096

    def __post_init__(self):
        if self.input_width < 1 or self.hidden_width < 1:
            raise ValueError("policy widths must be positive")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_episodes: int = 2000
    sample_budget: int = 40000
    target_objective: float | None = None
    learning_rate: float = 1e-5
    seed: int = 0
    workers: int = 1
    reward: RewardConfig = field(default_factory=RewardConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_episodes < 0:
            raise ValueError("max_episodes must be >= 0")
        if self.sample_budget < 0:
            raise ValueError("sample_budget must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def episode_count(self) -> int:
        return min(self.max_episodes, self.sample_budget // self.batch_size)


@dataclass(frozen=True)
class SampleRecord:
    episode: int
    index: int
    reward: float
    valid: bool
    violation_sum: float
    action_hash: str


@dataclass(frozen=True)
class EpisodeReport:
    episode: int
    beta_e: float
    running_reward: float
    best_reward: float
    mean_reward: float
    n_valid: int
    records: tuple[SampleRecord, ...]


@dataclass
class BestDesign:
    reward: float
    objective: float
    design: Any
    raw: np.ndarray
    episode: int


@dataclass
class TrainResult:
    status: str
    episodes_run: int
    samples_used: int
    best: BestDesign | None
    best_feasible: BestDesign | None
    history: list[EpisodeReport]
    params: PolicyParams
    state: Any = field(default=None, repr=False)

    def history_rows(self):
        """Flat per-sample rows matching the run log schema."""
        for report in self.history:
            for rec in report.records:
                yield {
                    "episode": rec.episode,
                    "sample_index": rec.index,
                    "reward": rec.reward,
                    "valid": int(rec.valid),
                    "violation_sum": rec.violation_sum,
                    "running_reward": report.running_reward,
                    "best_reward": report.best_reward,
                }


def entropy_coefficient(episode: int, cfg: TrainConfig) -> float:
    """Linear decay across the configured horizon; episode is 0-based."""
    r = cfg.reward
    if cfg.max_episodes <= 1:
        return r.beta_e_start
    frac = episode / (cfg.max_episodes - 1)
    return r.beta_e_start + (r.beta_e_end - r.beta_e_start) * frac


def _action_hash(raw: np.ndarray) -> str:
    return hashlib.blake2b(np.ascontiguousarray(raw, dtype=np.float64).tobytes(), digest_size=8).hexdigest()


def _decode_and_eval(problem: Problem, raw: np.ndarray) -> tuple[Any, EvalOutcome]:
    try:
        design = problem.decode(raw)
    except Exception as exc:
        return None, EvalOutcome.failed(f"decode: {exc}")
    try:
        return design, problem.evaluate(design)
    except Exception as exc:
        return design, EvalOutcome.failed(f"evaluate: {exc}")


def evaluate_batch(problem: Problem, raws: Sequence[np.ndarray], workers: int = 1):
    """Decode+evaluate a batch, results in slot order regardless of worker count."""
    if workers <= 1 or len(raws) <= 1:
        return [_decode_and_eval(problem, r) for r in raws]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda r: _decode_and_eval(problem, r), raws))


@dataclass
class _LoopState:
    params: PolicyParams
    adam_m: list[np.ndarray]
    adam_v: list[np.ndarray]
    adam_step: int
    episode: int
    running: float
    prev_valid_mean: float | None
    samples_used: int
    best: BestDesign | None
    best_feasible: BestDesign | None


def _fresh_state(problem: Problem, cfg: TrainConfig) -> _LoopState:
    layout = layout_for_space(problem.space)
    rng = np.random.default_rng([cfg.seed])
    params = init_params(
        rng, cfg.policy.input_width, cfg.policy.hidden_width, layout.out_width
    )
    zeros = [np.zeros_like(a) for a in params.arrays()]
    return _LoopState(
        params=params,
        adam_m=zeros,
        adam_v=[np.zeros_like(a) for a in params.arrays()],
        adam_step=0,
        episode=0,
        running=0.0,
        prev_valid_mean=None,
        samples_used=0,
        best=None,
        best_feasible=None,
    )


def _adam_ascend(state: _LoopState, grads: list[np.ndarray], lr: float) -> None:
    state.adam_step += 1
    t = state.adam_step
    arrays = state.params.arrays()
    for i, g in enumerate(grads):
        state.adam_m[i] = ADAM_BETA1 * state.adam_m[i] + (1 - ADAM_BETA1) * g
        state.adam_v[i] = ADAM_BETA2 * state.adam_v[i] + (1 - ADAM_BETA2) * g * g
        mhat = state.adam_m[i] / (1 - ADAM_BETA1**t)
        vhat = state.adam_v[i] / (1 - ADAM_BETA2**t)
        arrays[i] += lr * mhat / (np.sqrt(vhat) + ADAM_EPS)


def _shaped_reward(
    outcome: EvalOutcome,
    cfg: RewardConfig,
    episode_1b: int,
    prev_valid_mean: float | None,
    running_prev: float,
    cur_valid_mean: float | None,
) -> float:
    if outcome.anomalous:
        if not cfg.shaping:
            return cfg.no_shaping_penalty
        return anomalous_reward(prev_valid_mean, running_prev, cur_valid_mean, episode_1b, cfg)
    if cfg.shaping:
        return scalar_reward(outcome, cfg)
    return penalty_reward(outcome, cfg)


def train(
    problem: Problem,
    cfg: TrainConfig = TrainConfig(),
    state: _LoopState | None = None,
    history: list[EpisodeReport] | None = None,
) -> TrainResult:
    """Run the search loop to completion; pass a restored state to resume."""
    layout = layout_for_space(problem.space)
    if state is None:
        state = _fresh_state(problem, cfg)
    history = list(history) if history else []
    context = context_vector(cfg.policy.input_width)
    episodes = cfg.episode_count()
    rcfg = cfg.reward
    status = "max_episodes" if episodes >= cfg.max_episodes else "budget_exhausted"

    while state.episode < episodes:
        ep = state.episode
        beta_e = entropy_coefficient(ep, cfg)

        dists, cache = forward_cached(state.params, context, layout)
        actions: list[CompoundAction] = []
        for slot in range(cfg.batch_size):
            rng = np.random.default_rng([cfg.seed, ep, slot])
            actions.append(sample(dists, rng))

        results = evaluate_batch(problem, [a.raw for a in actions], cfg.workers)
        state.samples_used += cfg.batch_size

        outcomes = [r[1] for r in results]
        valid_rewards = [scalar_reward(o, rcfg) for o in outcomes if not o.anomalous]
        cur_valid_mean = float(np.mean(valid_rewards)) if valid_rewards else None

        shaped = np.array(
            [
                _shaped_reward(o, rcfg, ep + 1, state.prev_valid_mean, state.running, cur_valid_mean)
                for o in outcomes
            ]
        )

        for k, (design, outcome) in enumerate(results):
            if outcome.anomalous:
                continue
            if state.best is None or shaped[k] > state.best.reward:
                state.best = BestDesign(
                    float(shaped[k]), raw_objective(outcome, rcfg.weights), design, actions[k].raw.copy(), ep
                )
            if outcome.feasible:
                obj = raw_objective(outcome, rcfg.weights)
                if state.best_feasible is None or obj < state.best_feasible.objective:
                    state.best_feasible = BestDesign(
                        float(shaped[k]), obj, design, actions[k].raw.copy(), ep
                    )

        hit_target = (
            cfg.target_objective is not None
            and state.best_feasible is not None
            and state.best_feasible.objective <= cfg.target_objective
        )
        if not hit_target:
            state.running = update_running(state.running, shaped, rcfg.alpha_r)

        best_reward = state.best.reward if state.best is not None else float("nan")
        records = tuple(
            SampleRecord(
                episode=ep,
                index=k,
                reward=float(shaped[k]),
                valid=not outcomes[k].anomalous,
                violation_sum=outcomes[k].violation_sum(),
                action_hash=_action_hash(actions[k].raw),
            )
            for k in range(cfg.batch_size)
        )
        history.append(
            EpisodeReport(
                episode=ep,
                beta_e=beta_e,
                running_reward=state.running,
                best_reward=best_reward,
                mean_reward=float(shaped.mean()),
                n_valid=sum(1 for o in outcomes if not o.anomalous),
                records=records,
            )
        )

        if hit_target:
            state.episode += 1
            status = "target_reached"
            break

        advs = advantages(shaped, state.running)
        _, d_alpha, d_beta, d_logits = surrogate_gradients(
            dists, dists, actions, advs, rcfg.beta_r, beta_e
        )
        g_out = head_backward(dists, d_alpha, d_beta, d_logits)
        g_w, g_b = mlp_backward(state.params, cache, g_out)
        grads = [None] * (2 * len(g_w))
        grads[0::2] = g_w
        grads[1::2] = g_b
        _adam_ascend(state, grads, cfg.learning_rate)

        state.prev_valid_mean = cur_valid_mean
        state.episode += 1

    return TrainResult(
        status=status,
        episodes_run=state.episode,
        samples_used=state.samples_used,
        best=state.best,
        best_feasible=state.best_feasible,
        history=history,
        params=state.params,
        state=state,
    )


def save_checkpoint(path, state: _LoopState) -> None:
    """Everything needed to resume mid-run; sample RNG is derived, not saved."""
    payload: dict[str, np.ndarray] = {}
    for i, w in enumerate(state.params.weights):
        payload[f"w{i}"] = w
    for i, b in enumerate(state.params.biases):
        payload[f"b{i}"] = b
    for i, a in enumerate(state.adam_m):
        payload[f"m{i}"] = a
    for i, a in enumerate(state.adam_v):
        payload[f"v{i}"] = a
    payload["scalars"] = np.array(
        [
            float(state.adam_step),
            float(state.episode),
            state.running,
            np.nan if state.prev_valid_mean is None else state.prev_valid_mean,
            float(state.samples_used),
        ]
    )
    for label, best in (("best", state.best), ("feas", state.best_feasible)):
        if best is not None:
            payload[f"{label}_raw"] = best.raw
            payload[f"{label}_meta"] = np.array([best.reward, best.objective, float(best.episode)])
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path, problem: Problem) -> _LoopState:
    with np.load(path) as data:
        n_layers = sum(1 for k in data.files if k.startswith("w"))
        params = PolicyParams(
            weights=[data[f"w{i}"] for i in range(n_layers)],
            biases=[data[f"b{i}"] for i in range(n_layers)],
        )
        adam_m = [data[f"m{i}"] for i in range(2 * n_layers)]
        adam_v = [data[f"v{i}"] for i in range(2 * n_layers)]
        s = data["scalars"]

        def read_best(label: str) -> BestDesign | None:
            if f"{label}_raw" not in data.files:
                return None
            raw = data[f"{label}_raw"]
            meta = data[f"{label}_meta"]
            return BestDesign(
                reward=float(meta[0]),
                objective=float(meta[1]),
                design=problem.decode(raw),
                raw=raw,
                episode=int(meta[2]),
            )

        return _LoopState(
            params=params,
            adam_m=adam_m,
            adam_v=adam_v,
            adam_step=int(s[0]),
            episode=int(s[1]),
            running=float(s[2]),
            prev_valid_mean=None if np.isnan(s[3]) else float(s[3]),
            samples_used=int(s[4]),
            best=read_best("best"),
            best_feasible=read_best("feas"),
        )
