"""Black-box maximizers: (mu + lambda) evolutionary search and forward-difference ascent."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .filters import Kernel, ParamSchema

__all__ = [
    "BudgetError",
    "FitnessFunction",
    "GAConfig",
    "GAResult",
    "KernelTrainConfig",
    "KernelTrainResult",
    "ga_optimize",
    "fd_gradient",
    "train_kernel",
    "history_csv",
]


class BudgetError(ValueError):
    pass


class FitnessFunction:
    """Wraps an evaluator ``vector -> float`` with an evaluation budget and counter.

    ``workers > 1`` evaluates batches on a thread pool; results are always
    returned in submission order, so callers see the same values as a
    sequential run.
    """

    def __init__(self, evaluator: Callable[[np.ndarray], float], budget: int | None = None, workers: int = 1):
        self.evaluator = evaluator
        self.budget = budget
        self.workers = max(1, int(workers))
        self.evaluations = 0

    @property
    def remaining(self) -> float:
        return math.inf if self.budget is None else self.budget - self.evaluations

    def _one(self, x: np.ndarray) -> float:
        value = float(self.evaluator(np.array(x, dtype=float)))
        if not math.isfinite(value):
            raise ValueError(f"fitness returned non-finite value {value} at {list(x)}")
        return value

    def evaluate_many(self, xs: Sequence[np.ndarray]) -> list[float]:
        if len(xs) > self.remaining:
            raise BudgetError(f"{len(xs)} evaluations requested, {self.remaining} left in budget")
        self.evaluations += len(xs)
        if self.workers == 1 or len(xs) < 2:
            return [self._one(x) for x in xs]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(self._one, xs))

    def __call__(self, x) -> float:
        return self.evaluate_many([np.asarray(x, dtype=float)])[0]


@dataclass(frozen=True)
class GAConfig:
    mu: int = 8
    lambda_: int = 16
    generations: int = 25
    mutation_sigma: float = 0.1
    crossover_rate: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.mu < 1 or self.lambda_ < 1:
            raise ValueError("mu and lambda must be >= 1")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if not 0 < self.mutation_sigma <= 1:
            raise ValueError("mutation_sigma must be in (0, 1]")
        if not 0 <= self.crossover_rate <= 1:
            raise ValueError("crossover_rate must be in [0, 1]")

    @property
    def evaluations(self) -> int:
        return self.mu + self.generations * self.lambda_

    @classmethod
    def from_json(cls, obj: dict) -> "GAConfig":
        obj = dict(obj)
        if "lambda" in obj:
            obj["lambda_"] = obj.pop("lambda")
        return cls(**obj)

    def to_json(self) -> dict:
        return {
            "mu": self.mu, "lambda": self.lambda_, "generations": self.generations,
            "mutation_sigma": self.mutation_sigma, "crossover_rate": self.crossover_rate, "seed": self.seed,
        }


@dataclass
class GAResult:
    best: np.ndarray
    best_fitness: float
    history: list[float]
    evaluations: int
    evaluated: list[np.ndarray] = field(default_factory=list, repr=False)


def _snap(x: np.ndarray, schema: ParamSchema) -> np.ndarray:
    x = np.clip(x, schema.lower, schema.upper)
    mask = schema.integer_mask
    if mask.any():
        x = x.copy()
        x[mask] = np.round(x[mask])
    return x


def _select(pop: list[np.ndarray], fit: list[float], mu: int):
    # best fitness first; equal fitness falls back to lexicographic parameter order
    order = sorted(range(len(pop)), key=lambda i: (-fit[i], tuple(pop[i])))[:mu]
    return [pop[i] for i in order], [fit[i] for i in order]


def ga_optimize(schema: ParamSchema, fitness: FitnessFunction | Callable, config: GAConfig = GAConfig()) -> GAResult:
    """Elitist (mu + lambda) search maximizing ``fitness`` over the schema's box.

    Individual 0 is the schema defaults; the rest of the initial population
    is uniform within bounds. Each offspring copies a uniformly chosen
    parent, optionally mixes in a second parent by uniform crossover, then
    every gene gets Gaussian noise of ``mutation_sigma`` times its range and
    is clamped back into bounds. Integer parameters are rounded.
    """
    if len(schema) == 0:
        raise ValueError("schema has no parameters to optimize")
    if not isinstance(fitness, FitnessFunction):
        fitness = FitnessFunction(fitness)
    if fitness.remaining < config.mu:
        raise BudgetError(f"budget {fitness.budget} cannot cover the initial population of {config.mu}")

    rng = np.random.default_rng(config.seed)
    lo, hi = schema.lower, schema.upper
    span = hi - lo
    n = len(schema)

    pop = [_snap(schema.defaults, schema)]
    pop += [_snap(rng.uniform(lo, hi), schema) for _ in range(config.mu - 1)]
    fit = fitness.evaluate_many(pop)
    evaluated = list(pop)
    pop, fit = _select(pop, fit, config.mu)
    history = [fit[0]]

    for _ in range(config.generations):
        count = int(min(config.lambda_, fitness.remaining))
        if count <= 0:
            break
        children = []
        for _ in range(config.lambda_):
            child = pop[rng.integers(len(pop))].copy()
            if rng.random() < config.crossover_rate:
                other = pop[rng.integers(len(pop))]
                child = np.where(rng.random(n) < 0.5, child, other)
            child = _snap(child + rng.normal(0.0, config.mutation_sigma * span), schema)
            children.append(child)
        children = children[:count]
        child_fit = fitness.evaluate_many(children)
        evaluated += children
        pop, fit = _select(pop + children, fit + child_fit, config.mu)
        history.append(fit[0])

    return GAResult(pop[0], fit[0], history, fitness.evaluations, evaluated)


def _fd(fitness: FitnessFunction, w: np.ndarray, epsilon: float) -> tuple[np.ndarray, float]:
    w = np.asarray(w, dtype=float)
    probes = [w]
    for i in range(w.size):
        p = w.copy()
        p[i] += epsilon
        probes.append(p)
    values = fitness.evaluate_many(probes)
    f0 = values[0]
    return (np.array(values[1:]) - f0) / epsilon, f0


def fd_gradient(fitness: FitnessFunction | Callable, w, epsilon: float) -> np.ndarray:
    """Right-difference gradient, using exactly ``len(w) + 1`` evaluations."""
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    if not isinstance(fitness, FitnessFunction):
        fitness = FitnessFunction(fitness)
    return _fd(fitness, w, epsilon)[0]


@dataclass(frozen=True)
class KernelTrainConfig:
    size: int = 3
    epsilon: float = 1e-3
    learning_rate: float = 0.1
    iterations: int = 20
    # the ascent is deterministic; seed is carried so configs round-trip with GA ones
    seed: int = 0

    def __post_init__(self):
        if self.size not in (3, 5):
            raise ValueError("kernel size must be 3 or 5")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")

    @classmethod
    def from_json(cls, obj: dict) -> "KernelTrainConfig":
        return cls(**obj)

    def to_json(self) -> dict:
        return {
            "size": self.size, "epsilon": self.epsilon, "learning_rate": self.learning_rate,
            "iterations": self.iterations, "seed": self.seed,
        }


@dataclass
class KernelTrainResult:
    kernel: Kernel
    best_fitness: float
    history: list[float]
    best_so_far: list[float]


def train_kernel(fitness: FitnessFunction | Callable, config: KernelTrainConfig = KernelTrainConfig()) -> KernelTrainResult:
    """Gradient ascent on kernel weights from the identity (delta) kernel.

    ``history[k]`` is the fitness of iterate k; the best iterate is returned.
    """
    if not isinstance(fitness, FitnessFunction):
        fitness = FitnessFunction(fitness)
    w = Kernel.delta(config.size).weights.ravel().copy()
    history: list[float] = []
    best_so_far: list[float] = []
    best_w, best_f = w.copy(), -math.inf

    def record(x, f):
        nonlocal best_w, best_f
        history.append(f)
        if f > best_f:
            best_w, best_f = x.copy(), f
        best_so_far.append(best_f)

    for _ in range(config.iterations):
        g, f0 = _fd(fitness, w, config.epsilon)
        record(w, f0)
        w = w + config.learning_rate * g
    record(w, fitness(w))
    return KernelTrainResult(Kernel(best_w.reshape(config.size, config.size)), best_f, history, best_so_far)


def history_csv(history: Sequence[float], header: str = "generation,best_fitness") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header.split(","))
    for i, f in enumerate(history):
        writer.writerow([i, repr(float(f))])
    return buf.getvalue()
