"""
Training on a space small enough to enumerate
==============================================

A single-layer space with coarse tile steps has only a few thousand designs,
so exhaustive search gives the exact optimum. One-step policy training should
land on or near it within a few hundred episodes.
"""

from coredse.costmodel import platform_by_name
from coredse.design import Layer, SpaceOptions, Workload
from coredse.objective import RewardConfig
from coredse.problems import accelerator_problem, enumerate_designs
from coredse.trainer import PolicyConfig, TrainConfig, train

workload = Workload("toy", (Layer(K=25, C=13, X=11, Y=11, R=3, S=3),))
options = SpaceOptions(
    n_pe=64,
    l1_bytes=4096,
    l2_bytes=8192,
    tile_dims=("K", "C"),
    tile_step=4,
    vary_level1=False,
    include_order=False,
    vary_parallel_dim=False,
)
reward = RewardConfig(weights=(-1.0, 0.0), alpha_c=5e4)
problem = accelerator_problem(workload, platform_by_name("cloud"), options)

# Exhaustive pass first: the space declares its own cardinality.
print(f"enumerating {problem.cardinality()} designs...")
best = min(
    (out.metrics[0] for _, out in enumerate_designs(problem) if not out.anomalous and out.feasible),
)
print(f"exact optimum: {best:.0f} cycles mean latency")

# Now learn it. Policy output width is set by the space; only the trunk
# widths are free here.
cfg = TrainConfig(
    batch_size=16,
    max_episodes=300,
    sample_budget=4800,
    learning_rate=3e-3,
    seed=1,
    reward=reward,
    policy=PolicyConfig(input_width=64, hidden_width=256),
)
result = train(problem, cfg)
found = result.best_feasible
print(
    f"trained {result.episodes_run} episodes ({result.samples_used} samples): "
    f"best feasible {found.objective:.0f} cycles, found at episode {found.episode}"
)
print(f"gap to optimum: {100.0 * (found.objective - best) / best:.2f}%")

# The history carries per-episode aggregates; show the exploration decay.
for report in result.history[:: len(result.history) // 5]:
    print(
        f"  episode {report.episode:3d}: beta_e {report.beta_e:.2f}, "
        f"mean reward {report.mean_reward:11.1f}, valid {report.n_valid}/16"
    )
