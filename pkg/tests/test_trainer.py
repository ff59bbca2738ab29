import dataclasses

import numpy as np
import pytest

from coredse.objective import EvalOutcome, RewardConfig
from coredse.problems import Problem, toy_line_problem
from coredse.space import ParameterSpace, ParamSpec, Ranged
from coredse.trainer import (
    PolicyConfig,
    TrainConfig,
    entropy_coefficient,
    evaluate_batch,
    load_checkpoint,
    save_checkpoint,
    train,
)

SMALL_POLICY = PolicyConfig(input_width=16, hidden_width=32)

WEIGHTS1 = RewardConfig(weights=(-1.0,))


def line_cfg(**kw) -> TrainConfig:
    base = dict(
        batch_size=8,
        max_episodes=30,
        sample_budget=10_000,
        learning_rate=1e-2,
        seed=0,
        reward=WEIGHTS1,
        policy=SMALL_POLICY,
    )
    base.update(kw)
    return TrainConfig(**base)


def failing_problem() -> Problem:
    space = ParameterSpace((ParamSpec("v", Ranged(0, 15)),))
    return Problem(
        "always-fails",
        space,
        decode=lambda raw: raw,
        evaluate=lambda d: EvalOutcome.failed("no such design"),
    )


# ---------------------------------------------------------------------------
# configs


def test_train_config_validation():
    for kw in (
        dict(batch_size=0),
        dict(max_episodes=-1),
        dict(sample_budget=-1),
        dict(learning_rate=0.0),
        dict(workers=0),
    ):
        with pytest.raises(ValueError):
            line_cfg(**kw)
    with pytest.raises(ValueError):
        PolicyConfig(input_width=0)


def test_episode_count_is_min_of_caps():
    assert line_cfg(max_episodes=30, sample_budget=10_000, batch_size=8).episode_count() == 30
    assert line_cfg(max_episodes=30, sample_budget=20, batch_size=8).episode_count() == 2
    assert line_cfg(max_episodes=0).episode_count() == 0


def test_entropy_coefficient_schedule():
    cfg = line_cfg(max_episodes=3)
    assert entropy_coefficient(0, cfg) == 1.0
    assert abs(entropy_coefficient(1, cfg) - 0.51) < 1e-12
    assert abs(entropy_coefficient(2, cfg) - 0.02) < 1e-12
    assert entropy_coefficient(0, line_cfg(max_episodes=1)) == 1.0


# ---------------------------------------------------------------------------
# evaluate_batch


def test_evaluate_batch_preserves_slot_order():
    p = toy_line_problem()
    raws = [np.array([x]) for x in (0.01, 0.99, 0.5, 0.25)]
    serial = evaluate_batch(p, raws, workers=1)
    pooled = evaluate_batch(p, raws, workers=4)
    assert [d for d, _ in serial] == [d for d, _ in pooled] == [0, 15, 8, 4]


def test_evaluate_batch_wraps_decode_errors():
    space = ParameterSpace((ParamSpec("v", Ranged(0, 15)),))

    def decode(raw):
        if raw[0] > 0.5:
            raise ValueError("raw too large")
        return 1

    p = Problem("half-broken", space, decode, lambda d: EvalOutcome.ok((1.0,)))
    (d0, o0), (d1, o1) = evaluate_batch(p, [np.array([0.1]), np.array([0.9])])
    assert not o0.anomalous
    assert d1 is None and o1.anomalous and o1.note.startswith("decode:")


def test_evaluate_batch_wraps_evaluator_errors():
    space = ParameterSpace((ParamSpec("v", Ranged(0, 15)),))

    def evaluate(design):
        raise RuntimeError("model blew up")

    p = Problem("hot", space, lambda raw: 3, evaluate)
    ((design, outcome),) = evaluate_batch(p, [np.array([0.2])])
    assert design == 3
    assert outcome.anomalous and outcome.note == "evaluate: model blew up"


# ---------------------------------------------------------------------------
# train loop bookkeeping


def test_zero_episodes_returns_clean_result():
    res = train(toy_line_problem(), line_cfg(max_episodes=0))
    assert res.status == "max_episodes"
    assert res.episodes_run == 0 and res.samples_used == 0
    assert res.best is None and res.best_feasible is None and res.history == []


def test_budget_caps_episodes():
    res = train(toy_line_problem(), line_cfg(sample_budget=20))
    assert res.status == "budget_exhausted"
    assert res.episodes_run == 2 and res.samples_used == 16
    assert len(res.history) == 2


def test_history_schema_and_hashes():
    res = train(toy_line_problem(), line_cfg(max_episodes=3))
    assert [r.episode for r in res.history] == [0, 1, 2]
    rows = list(res.history_rows())
    assert len(rows) == 24
    assert list(rows[0]) == [
        "episode",
        "sample_index",
        "reward",
        "valid",
        "violation_sum",
        "running_reward",
        "best_reward",
    ]
    hashes = {rec.action_hash for rep in res.history for rec in rep.records}
    assert all(len(h) == 16 for h in hashes)
    assert len(hashes) > 1  # distinct actions hash apart


def test_first_episode_running_reward_ema():
    # running starts at 0; after one batch it is alpha_r * mean(shaped)
    res = train(toy_line_problem(), line_cfg(max_episodes=1))
    rep = res.history[0]
    assert abs(rep.running_reward - 0.2 * rep.mean_reward) < 1e-12


def test_all_anomalous_batch_uses_floor_reward():
    res = train(failing_problem(), line_cfg(max_episodes=2))
    first = res.history[0]
    assert first.n_valid == 0
    assert all(rec.reward == -1e9 for rec in first.records)
    assert abs(first.running_reward - 0.2 * -1e9) < 1e-3
    # later all-anomalous batches have no valid means to lean on: still the floor
    assert all(rec.reward == -1e9 for rec in res.history[1].records)
    assert res.best is None and res.best_feasible is None


def test_target_stops_early_and_freezes_running():
    # half the line sits within distance 3 of the target: the very first
    # batch should hit it
    cfg = line_cfg(max_episodes=50, target_objective=3.0)
    res = train(toy_line_problem(), cfg)
    assert res.status == "target_reached"
    assert res.episodes_run == 1 and len(res.history) == 1
    assert res.best_feasible is not None and res.best_feasible.objective <= 3.0
    # the stop happens before the EMA update, so the logged value is untouched
    assert res.history[0].running_reward == 0.0


def test_best_feasible_tracks_minimum_objective():
    res = train(toy_line_problem(), line_cfg(max_episodes=10))
    rewards = [
        rec.reward for rep in res.history for rec in rep.records
    ]
    assert res.best is not None
    assert abs(res.best.reward - max(rewards)) < 1e-12
    # for this problem objective = -reward, so the two trackers agree
    assert abs(res.best_feasible.objective + res.best.reward) < 1e-12
    assert res.best_feasible.design == res.best.design


def test_rerun_is_byte_identical():
    p = toy_line_problem()
    a = train(p, line_cfg(max_episodes=5))
    b = train(p, line_cfg(max_episodes=5))
    assert list(a.history_rows()) == list(b.history_rows())
    for wa, wb in zip(a.params.arrays(), b.params.arrays()):
        assert np.array_equal(wa, wb)


def test_worker_count_does_not_change_results():
    p = toy_line_problem()
    a = train(p, line_cfg(max_episodes=5, workers=1))
    b = train(p, line_cfg(max_episodes=5, workers=4))
    assert list(a.history_rows()) == list(b.history_rows())
    for wa, wb in zip(a.params.arrays(), b.params.arrays()):
        assert np.array_equal(wa, wb)


def test_policy_improves_on_toy_line():
    wins = 0
    for seed in range(10):
        res = train(
            toy_line_problem(), line_cfg(seed=seed, max_episodes=30, learning_rate=3e-2)
        )
        # single-episode means are noisy at batch 8, so compare 5-episode windows
        first = np.mean([r.mean_reward for r in res.history[:5]])
        last = np.mean([r.mean_reward for r in res.history[-5:]])
        wins += int(last > first)
    assert wins >= 9


# ---------------------------------------------------------------------------
# checkpoint / resume


def test_resume_matches_straight_run(tmp_path):
    p = toy_line_problem()
    full = line_cfg(max_episodes=10, sample_budget=80)
    straight = train(p, full)

    first_leg = dataclasses.replace(full, sample_budget=40)
    r1 = train(p, first_leg)
    assert r1.episodes_run == 5 and r1.status == "budget_exhausted"

    path = tmp_path / "ck.npz"
    save_checkpoint(path, r1.state)
    state = load_checkpoint(path, p)
    r2 = train(p, full, state=state, history=r1.history)

    assert r2.episodes_run == straight.episodes_run == 10
    assert list(r2.history_rows()) == list(straight.history_rows())
    for wa, wb in zip(r2.params.arrays(), straight.params.arrays()):
        assert np.array_equal(wa, wb)
    assert r2.best.reward == straight.best.reward
    assert r2.best_feasible.objective == straight.best_feasible.objective


def test_checkpoint_restores_best_designs(tmp_path):
    p = toy_line_problem()
    res = train(p, line_cfg(max_episodes=4))
    path = tmp_path / "ck.npz"
    save_checkpoint(path, res.state)
    state = load_checkpoint(path, p)
    assert state.episode == 4 and state.samples_used == 32
    assert state.best_feasible.objective == res.best_feasible.objective
    assert state.best_feasible.design == res.best_feasible.design
    assert state.running == res.state.running
    assert state.adam_step == res.state.adam_step


def test_checkpoint_handles_missing_best(tmp_path):
    res = train(failing_problem(), line_cfg(max_episodes=1))
    path = tmp_path / "ck.npz"
    save_checkpoint(path, res.state)
    state = load_checkpoint(path, failing_problem())
    assert state.best is None and state.best_feasible is None
    assert state.prev_valid_mean is None
