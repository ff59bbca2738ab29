"""Problem bundles: a parameter space plus decode and evaluate callables.

The trainer and the baseline searchers only ever see this interface, so
swapping the accelerator model for a toy function needs no changes on
their side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Sequence

import numpy as np

from .costmodel import CostConstants, Platform, make_evaluator
from .design import CoDesignSpace, DesignConfig, SpaceOptions, Workload
from .objective import EvalOutcome
from .space import ParameterSpace, decode_values, space_cardinality


@dataclass(frozen=True)
class Problem:
    """A searchable design problem.

    decode: raw vector in [0,1)^n -> design object
    evaluate: design object -> EvalOutcome
    """

    name: str
    space: ParameterSpace
    decode: Callable[[Sequence[float]], Any]
    evaluate: Callable[[Any], EvalOutcome]
    describe: Callable[[Any], dict] = field(default=lambda d: {"design": repr(d)})
    codesign: CoDesignSpace | None = None

    @property
    def n_raw(self) -> int:
        return len(self.space.params)

    def cardinality(self, limit: int | None = None) -> int | None:
        return space_cardinality(self.space, limit=limit)


def accelerator_problem(
    workload: Workload,
    platform: Platform,
    options: SpaceOptions = SpaceOptions(),
    consts: CostConstants = CostConstants(),
    use_scaling: bool = True,
    name: str = "accelerator",
) -> Problem:
    """Hardware/mapping co-design over a fixed workload.

    With use_scaling=False raw values decode against declared bounds only,
    so cross-parameter consistency is left to the evaluator's validator.
    """
    codesign = CoDesignSpace(workload, options)
    evaluate = make_evaluator(workload, platform, consts)

    def decode(raw: Sequence[float]) -> DesignConfig:
        return codesign.decode(raw, use_scaling=use_scaling)

    def describe(config: DesignConfig) -> dict:
        return config.to_dict()

    return Problem(name, codesign.space, decode, evaluate, describe, codesign=codesign)


def enumerate_designs(problem: Problem) -> Iterator[tuple[Any, EvalOutcome]]:
    """Walk every design in a finite space. Caller should gate on cardinality()."""
    if problem.codesign is None:
        raise ValueError(f"problem {problem.name!r} does not support enumeration")
    for config in problem.codesign.enumerate_configs():
        yield config, problem.evaluate(config)


def toy_line_problem(target: int = 7, low: int = 0, up: int = 15) -> Problem:
    """One integer on a line; metric is distance to ``target``.

    Smallest end-to-end training testbed: a single Beta head must learn
    to place its mass on one bucket of the decoded range.
    """
    from .space import ParamSpec, Ranged

    space = ParameterSpace((ParamSpec("v", Ranged(low, up)),))

    def decode(raw: Sequence[float]) -> int:
        return decode_values(space, np.asarray(raw, dtype=float))["v"]

    def evaluate(v: int) -> EvalOutcome:
        return EvalOutcome.ok((float(abs(v - target)),), [])

    return Problem("toy-line", space, decode, evaluate, lambda v: {"v": v})
