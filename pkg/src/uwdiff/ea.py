"""Evolutionary search over sampling sequences.

Genes are fixed-length descending step lists ``[T, ..., 0]``. The population
is an elitist queue holding the ``K`` best-scoring sequences seen so far;
offspring that are not strictly descending (or that lose an endpoint) are
dropped before they are ever scored.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .schedule import format_sequence, validate_sequence

Fitness = Callable[[List[int]], float]

__all__ = [
    "EAConfig",
    "PopulationEntry",
    "Population",
    "random_genes",
    "random_init",
    "crossover",
    "mutation",
    "update",
    "search",
    "SearchLog",
]


@dataclass(frozen=True)
class EAConfig:
    Lg: int = 11
    pc: float = 0.5
    pm: float = 0.1
    epochs: int = 50
    K: int = 10
    seed: int = 0
    init_size: Optional[int] = None  # candidates drawn at start; defaults to K

    def __post_init__(self):
        if self.Lg < 2:
            raise ValueError("gene length must be >= 2")
        if not (0.0 <= self.pc <= 1.0 and 0.0 <= self.pm <= 1.0):
            raise ValueError("pc and pm must lie in [0, 1]")
        if self.K < 2:
            raise ValueError("queue capacity K must be >= 2")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.init_size is not None and self.init_size < 1:
            raise ValueError("init_size must be >= 1")


@dataclass(frozen=True)
class PopulationEntry:
    genes: Tuple[int, ...]
    score: float


@dataclass
class Population:
    """Score-sorted (best first) queue of at most ``K`` distinct sequences."""

    K: int
    entries: List[PopulationEntry] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def best(self) -> PopulationEntry:
        return self.entries[0]

    def genes(self) -> List[Tuple[int, ...]]:
        return [e.genes for e in self.entries]


def update(pop: Population, candidate: PopulationEntry, K: Optional[int] = None) -> Population:
    """Offer ``candidate`` to the queue, keeping the ``K`` best.

    Ties keep earlier arrivals ahead. A sequence already present is ignored.
    """
    K = pop.K if K is None else K
    if any(e.genes == candidate.genes for e in pop.entries):
        return pop
    keys = [-e.score for e in pop.entries]
    pos = bisect.bisect_right(keys, -candidate.score)
    if pos < K:
        pop.entries.insert(pos, candidate)
        del pop.entries[K:]
    return pop


class SearchLog:
    """Collects one row per scored candidate: ``(epoch, genes, score)``."""

    def __init__(self):
        self.rows: List[Tuple[int, Tuple[int, ...], float]] = []

    def __call__(self, epoch: int, genes, score: float) -> None:
        self.rows.append((epoch, tuple(genes), float(score)))

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("epoch,genes,score\n")
            for epoch, genes, score in self.rows:
                f.write(f"{epoch},{format_sequence(genes, ';')},{score!r}\n")


class _Scorer:
    # memoises fitness so revisited sequences are not re-evaluated
    def __init__(self, fitness: Fitness, T: int, on_score=None):
        self.fitness, self.T, self.on_score = fitness, T, on_score
        self.cache: Dict[Tuple[int, ...], float] = {}
        self.epoch = 0

    def __call__(self, genes: Tuple[int, ...]) -> float:
        if genes not in self.cache:
            if not validate_sequence(genes, self.T):
                raise AssertionError(f"attempted to score illegal sequence {genes}")
            score = float(self.fitness(list(genes)))
            self.cache[genes] = score
            if self.on_score is not None:
                self.on_score(self.epoch, genes, score)
        return self.cache[genes]


def _as_scorer(fitness, T) -> _Scorer:
    return fitness if isinstance(fitness, _Scorer) else _Scorer(fitness, T)


def random_genes(rng: np.random.Generator, Lg: int, T: int) -> Tuple[int, ...]:
    """``T``, ``Lg - 2`` distinct interior steps, ``0``; descending."""
    if Lg - 2 > T - 1:
        raise ValueError(f"cannot draw {Lg - 2} distinct interior steps from (0, {T})")
    interior = rng.choice(T - 1, size=Lg - 2, replace=False) + 1
    return (T, *sorted((int(v) for v in interior), reverse=True), 0)


def random_init(cfg: EAConfig, T: int, fitness, rng: Optional[np.random.Generator] = None) -> Population:
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    if T < cfg.Lg - 1:
        raise ValueError(f"T={T} too small for gene length {cfg.Lg}")
    score = _as_scorer(fitness, T)
    pop = Population(cfg.K)
    for _ in range(cfg.init_size or cfg.K):
        g = random_genes(rng, cfg.Lg, T)
        update(pop, PopulationEntry(g, score(g)))
    return pop


def crossover(pop: Population, cfg: EAConfig, fitness, rng: np.random.Generator, T: Optional[int] = None) -> Population:
    """Uniform crossover of two distinct queue members.

    Gene ``i`` comes from the father when ``U(0, 1) > pc``, else from the
    mother. Parents stay in the queue.
    """
    if len(pop) < 2:
        raise ValueError("crossover needs at least two entries")
    T = pop.best.genes[0] if T is None else T
    i, j = rng.choice(len(pop), size=2, replace=False)
    father, mother = pop.entries[i].genes, pop.entries[j].genes
    draws = rng.random(len(father))
    child = tuple(int(f) if p > cfg.pc else int(m) for f, m, p in zip(father, mother, draws))
    if validate_sequence(child, T):
        update(pop, PopulationEntry(child, _as_scorer(fitness, T)(child)))
    return pop


def mutation(pop: Population, cfg: EAConfig, T: int, fitness, rng: np.random.Generator) -> Population:
    """Resample interior genes of one random member with probability ``pm`` each."""
    if len(pop) == 0:
        raise ValueError("mutation needs a non-empty population")
    parent = pop.entries[rng.integers(len(pop))].genes
    genes = list(parent)
    hits = rng.random(len(genes)) < cfg.pm
    for i in range(1, len(genes) - 1):
        if hits[i]:
            genes[i] = int(rng.integers(1, T))
    child = tuple(genes)
    if child != parent and validate_sequence(child, T):
        update(pop, PopulationEntry(child, _as_scorer(fitness, T)(child)))
    return pop


def search(
    cfg: EAConfig,
    T: int,
    fitness: Fitness,
    *,
    on_score: Optional[Callable[[int, Tuple[int, ...], float], None]] = None,
    history: Optional[List[Population]] = None,
) -> List[int]:
    """Run the full search and return the best sequence found.

    ``on_score(epoch, genes, score)`` fires once per newly scored sequence
    (epoch 0 is initialisation). ``history`` receives a snapshot of the queue
    after initialisation and after every epoch.
    """
    rng = np.random.default_rng(cfg.seed)
    scorer = _Scorer(fitness, T, on_score)
    pop = random_init(cfg, T, scorer, rng)
    if history is not None:
        history.append(Population(pop.K, list(pop.entries)))
    for epoch in range(1, cfg.epochs + 1):
        scorer.epoch = epoch
        mutation(pop, cfg, T, scorer, rng)
        if len(pop) >= 2:
            crossover(pop, cfg, scorer, rng, T)
        if history is not None:
            history.append(Population(pop.K, list(pop.entries)))
    return list(pop.best.genes)


def target_distance_fitness(target: Sequence[int]) -> Fitness:
    """Negative L1 distance to ``target``; a synthetic landscape for testing."""
    tgt = np.asarray(target, dtype=np.float64)

    def fitness(genes):
        return -float(np.abs(np.asarray(genes, dtype=np.float64) - tgt).sum())

    return fitness
