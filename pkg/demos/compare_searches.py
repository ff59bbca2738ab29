"""
Three searches, one evaluation budget
======================================

The trainer, the genetic algorithm, and random search all consume the same
per-design evaluator and the same budget, so their best-found designs are
directly comparable. This is the comparison the package exists to make;
here it runs at 1/5 scale so it finishes in under a minute.
"""

import math

from coredse.baselines import ga_run, random_search
from coredse.costmodel import platform_by_name
from coredse.design import Layer, SpaceOptions, Workload
from coredse.objective import RewardConfig
from coredse.problems import accelerator_problem
from coredse.trainer import PolicyConfig, TrainConfig, train

workload = Workload(
    "resnetish",
    (
        Layer(K=64, C=64, X=56, Y=56, R=3, S=3),
        Layer(K=128, C=128, X=28, Y=28, R=3, S=3),
        Layer(K=256, C=256, X=14, Y=14, R=3, S=3),
    ),
)
options = SpaceOptions(
    n_pe=(2, 128, 2),
    l1_bytes=(256, 1024, 256),
    l2_bytes=(16384, 131072, 16384),
    vary_level1=False,
)
# Metric weights put rewards at O(1..100) so the entropy schedule and the
# constraint penalty act on comparable scales.
reward = RewardConfig(weights=(-1e-6, 0.0), alpha_c=3.0)
problem = accelerator_problem(workload, platform_by_name("edge"), options)

BUDGET = 2000
SEED = 0


def latency_us(result) -> float:
    return result.best_feasible.objective * 1e6 if result.best_feasible else math.inf


cfg = TrainConfig(
    batch_size=16,
    max_episodes=BUDGET // 16,
    sample_budget=BUDGET,
    learning_rate=3e-3,
    seed=SEED,
    reward=reward,
    policy=PolicyConfig(input_width=64, hidden_width=256),
)
runs = {
    "policy": train(problem, cfg),
    "ga": ga_run(problem, reward, pop_size=25, generations=BUDGET // 25 - 1, seed=SEED),
    "random": random_search(problem, reward, budget=BUDGET, seed=SEED),
}

print(f"budget {BUDGET} evaluations, seed {SEED}, edge platform (0.2 mm^2)")
for name, result in runs.items():
    best = result.best_feasible
    print(
        f"  {name:7s}: best mean latency {latency_us(result):12.0f} cycles  "
        f"(n_pe={best.design.n_pe}, area residuals clear, {result.samples_used} samples)"
    )

base = latency_us(runs["random"])
print(f"\nspeedup over random: policy {base / latency_us(runs['policy']):.2f}x, "
      f"ga {base / latency_us(runs['ga']):.2f}x")
