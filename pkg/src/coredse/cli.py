"""Command line front end.

Verbs:
    run       search a workload's co-design space with one method
    oracle    exhaustively score a small space and dump the full table
    report    summarize finished run directories side by side
    defaults  print a complete default config as JSON

All knobs live in a JSON config file (see ``defaults``); the only
command line overrides are --seed and --workers. Outputs are plain
CSV/JSON with no timestamps, so rerunning a command reproduces its
output byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

from .baselines import ga_run, random_search
from .costmodel import CostConstants, platform_by_name
from .design import SpaceOptions, parse_workload
from .objective import RewardConfig, raw_objective
from .policy import save_params
from .problems import accelerator_problem, enumerate_designs
from .trainer import PolicyConfig, TrainConfig, train

METHODS = ("core", "core-no-shaping", "core-no-scaling", "ga", "random")

HISTORY_COLUMNS = (
    "episode",
    "sample_index",
    "reward",
    "valid",
    "violation_sum",
    "running_reward",
    "best_reward",
)

_TRAIN_KEYS = (
    "batch_size",
    "max_episodes",
    "sample_budget",
    "target_objective",
    "learning_rate",
    "seed",
    "workers",
)
_GA_KEYS = ("pop_size", "tournament_k", "crossover_rate", "mutation_rate", "mutation_sigma", "elitism")
_TOP_KEYS = ("workload", "platform", "method", "space", "cost", "reward", "policy", "train", "ga", "random")


class CliError(Exception):
    pass


def default_config() -> dict:
    t = TrainConfig()
    return {
        "workload": "workload.txt",
        "platform": "edge",
        "method": "core",
        "space": asdict(SpaceOptions()),
        "cost": asdict(CostConstants()),
        "reward": asdict(RewardConfig()),
        "policy": asdict(PolicyConfig()),
        "train": {k: getattr(t, k) for k in _TRAIN_KEYS},
        "ga": {
            "pop_size": 32,
            "tournament_k": 3,
            "crossover_rate": 0.9,
            "mutation_rate": 0.1,
            "mutation_sigma": 0.1,
            "elitism": 1,
        },
        "random": {"chunk": 32},
    }


def _check_keys(section: str, data: dict, allowed) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise CliError(f"config section {section!r}: unknown key(s) {', '.join(unknown)}")


def _section(config: dict, name: str) -> dict:
    part = config.get(name, {})
    if not isinstance(part, dict):
        raise CliError(f"config section {name!r} must be an object")
    return part


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise CliError("config root must be a JSON object")
    _check_keys("top level", data, _TOP_KEYS)
    return data


class Setup:
    """Config resolved into constructed objects, ready for dispatch."""

    def __init__(self, config: dict, config_dir: Path, seed: int | None, workers: int | None):
        self.method = config.get("method", "core")
        if self.method not in METHODS:
            raise CliError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")

        wl = config.get("workload")
        if not wl:
            raise CliError("config is missing 'workload' (path to a layer table)")
        wl_path = Path(wl)
        if not wl_path.is_absolute():
            wl_path = config_dir / wl_path
        if not wl_path.exists():
            raise CliError(f"workload file not found: {wl_path}")
        self.workload = parse_workload(wl_path)

        self.platform = platform_by_name(config.get("platform", "edge"))
        try:
            self.options = SpaceOptions.from_dict(_section(config, "space"))
        except Exception as exc:
            raise CliError(str(exc)) from None

        cost = _section(config, "cost")
        _check_keys("cost", cost, [f.name for f in fields(CostConstants)])
        self.consts = CostConstants(**cost)

        rw = dict(_section(config, "reward"))
        _check_keys("reward", rw, [f.name for f in fields(RewardConfig)])
        if "weights" in rw:
            rw["weights"] = tuple(rw["weights"])
        self.reward = RewardConfig(**rw)
        if self.method == "core-no-shaping":
            self.reward = replace(self.reward, shaping=False)

        pol = _section(config, "policy")
        _check_keys("policy", pol, [f.name for f in fields(PolicyConfig)])
        self.policy = PolicyConfig(**pol)

        tr = dict(_section(config, "train"))
        _check_keys("train", tr, _TRAIN_KEYS)
        if seed is not None:
            tr["seed"] = seed
        if workers is not None:
            tr["workers"] = workers
        elif "workers" not in tr and os.environ.get("CORE_DSE_WORKERS"):
            tr["workers"] = int(os.environ["CORE_DSE_WORKERS"])
        self.train_cfg = TrainConfig(reward=self.reward, policy=self.policy, **tr)

        ga = _section(config, "ga")
        _check_keys("ga", ga, _GA_KEYS)
        self.ga = {**default_config()["ga"], **ga}

        rnd = _section(config, "random")
        _check_keys("random", rnd, ("chunk",))
        self.chunk = int(rnd.get("chunk", 32))

    def problem(self):
        return accelerator_problem(
            self.workload,
            self.platform,
            self.options,
            self.consts,
            use_scaling=self.method != "core-no-scaling",
        )


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_history(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in HISTORY_COLUMNS])


def _objective_log10(obj: float | None):
    if obj is None or obj <= 0:
        return None
    return math.log10(obj)


def _best_payload(result) -> dict:
    best_obj = result.best_feasible.objective if result.best_feasible else None
    return {
        "best_reward": result.best.reward if result.best else None,
        "best_objective": best_obj,
        "best_objective_log10": _objective_log10(best_obj),
        "best_episode": result.best_feasible.episode if result.best_feasible else None,
    }


def cmd_run(args) -> int:
    config = load_config(args.config)
    setup = Setup(config, Path(args.config).resolve().parent, args.seed, args.workers)
    problem = setup.problem()
    tcfg = setup.train_cfg
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if setup.method.startswith("core"):
        result = train(problem, tcfg)
        save_params(result.params, out / "policy.bin")
    elif setup.method == "ga":
        pop = int(setup.ga["pop_size"])
        generations = tcfg.sample_budget // pop - 1
        if generations < 0:
            raise CliError(f"sample_budget {tcfg.sample_budget} below one population of {pop}")
        result = ga_run(
            problem,
            setup.reward,
            pop_size=pop,
            generations=generations,
            seed=tcfg.seed,
            workers=tcfg.workers,
            tournament_k=int(setup.ga["tournament_k"]),
            crossover_rate=float(setup.ga["crossover_rate"]),
            mutation_rate=float(setup.ga["mutation_rate"]),
            mutation_sigma=float(setup.ga["mutation_sigma"]),
            elitism=int(setup.ga["elitism"]),
        )
    else:
        result = random_search(
            problem,
            setup.reward,
            budget=tcfg.sample_budget,
            seed=tcfg.seed,
            workers=tcfg.workers,
            chunk=setup.chunk,
        )

    _write_history(out / "history.csv", result.history_rows())
    summary = {
        "method": setup.method,
        "status": result.status,
        "samples_used": result.samples_used,
        "seed": tcfg.seed,
        **_best_payload(result),
        "best_design": problem.describe(result.best_feasible.design) if result.best_feasible else None,
    }
    _write_json(out / "summary.json", summary)
    obj = summary["best_objective"]
    print(
        f"{setup.method}: {result.status}, {result.samples_used} samples, "
        f"best objective {obj if obj is not None else 'none (no feasible design)'}"
    )
    return 0


def cmd_oracle(args) -> int:
    config = load_config(args.config)
    setup = Setup(config, Path(args.config).resolve().parent, args.seed, args.workers)
    problem = setup.problem()

    count = problem.cardinality(limit=args.limit)
    if count is None:
        raise CliError(
            f"design space exceeds the enumeration limit of {args.limit}; "
            "shrink the space or raise --limit"
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    best_obj = None
    best_design = None
    with open(out / "oracle.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "latency", "area_um2", "feasible", "violation_sum", "objective", "config"])
        for i, (design, outcome) in enumerate(enumerate_designs(problem)):
            if outcome.anomalous:
                writer.writerow([i, "", "", 0, "", "", json.dumps(problem.describe(design), sort_keys=True)])
                continue
            obj = raw_objective(outcome, setup.reward.weights)
            if outcome.feasible and (best_obj is None or obj < best_obj):
                best_obj = obj
                best_design = design
            writer.writerow(
                [
                    i,
                    _fmt(outcome.metrics[0]),
                    _fmt(outcome.metrics[1]),
                    int(outcome.feasible),
                    _fmt(outcome.violation_sum()),
                    _fmt(obj),
                    json.dumps(problem.describe(design), sort_keys=True),
                ]
            )

    summary = {
        "method": "oracle",
        "count": count,
        "best_objective": best_obj,
        "best_objective_log10": _objective_log10(best_obj),
        "best_design": problem.describe(best_design) if best_design is not None else None,
    }
    _write_json(out / "summary.json", summary)
    print(f"oracle: {count} designs, best objective {best_obj if best_obj is not None else 'none'}")
    return 0


def _best_curve(history_path: Path):
    """(samples, best objective so far) from feasible rows; reward negates to objective."""
    curve = []
    best = None
    with open(history_path, newline="") as fh:
        for i, row in enumerate(csv.DictReader(fh)):
            if int(row["valid"]) and float(row["violation_sum"]) == 0.0:
                obj = -float(row["reward"])
                if best is None or obj < best:
                    best = obj
                    curve.append((i + 1, best))
    return curve


def cmd_report(args) -> int:
    rows = []
    curves = {}
    for d in args.runs:
        run = Path(d)
        summary_path = run / "summary.json"
        if not summary_path.exists():
            raise CliError(f"no summary.json in {run}")
        with open(summary_path) as fh:
            s = json.load(fh)
        rows.append(
            (
                run.name,
                s.get("method", "?"),
                s.get("status", s.get("count", "?")),
                s.get("samples_used", ""),
                s.get("best_objective"),
                s.get("best_objective_log10"),
            )
        )
        history = run / "history.csv"
        if history.exists():
            curves[run.name] = _best_curve(history)

    header = ("run", "method", "status", "samples", "best_objective", "log10")
    widths = [max(len(str(r[i])) for r in rows + [header]) for i in range(len(header))]
    for r in [header] + rows:
        print("  ".join(str(v).ljust(w) for v, w in zip(r, widths)).rstrip())

    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["run", "samples", "best_objective"])
            for name, curve in sorted(curves.items()):
                for samples, best in curve:
                    writer.writerow([name, samples, _fmt(best)])
        print(f"curves written to {out}")
    return 0


def cmd_defaults(args) -> int:
    print(json.dumps(default_config(), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="core-dse", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="search a co-design space with one method")
    run.add_argument("--config", required=True, help="JSON config file")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--workers", type=int, default=None, help="evaluation threads")
    run.add_argument("--out", default="out", help="output directory")
    run.set_defaults(fn=cmd_run)

    oracle = sub.add_parser("oracle", help="exhaustively score a small space")
    oracle.add_argument("--config", required=True)
    oracle.add_argument("--seed", type=int, default=None)
    oracle.add_argument("--workers", type=int, default=None)
    oracle.add_argument("--out", default="out")
    oracle.add_argument("--limit", type=int, default=100000, help="refuse spaces larger than this")
    oracle.set_defaults(fn=cmd_oracle)

    report = sub.add_parser("report", help="summarize finished run directories")
    report.add_argument("runs", nargs="+", help="run directories with summary.json")
    report.add_argument("--out", default=None, help="write best-so-far curves to this CSV")
    report.set_defaults(fn=cmd_report)

    defaults = sub.add_parser("defaults", help="print the default config")
    defaults.set_defaults(fn=cmd_defaults)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
