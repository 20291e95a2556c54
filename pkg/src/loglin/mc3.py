"""MC3 search over hierarchical, graphical or decomposable log-linear models.

Each chain proposes uniformly from the neighbourhood of the current model
and accepts with the Metropolis-Hastings probability

    min{1, P(t|J') #nbd(J) / (P(t|J) #nbd(J'))}.

Models are handled by their canonical bracket string throughout the chain,
so scores and neighbourhoods are memoized on plain dict lookups.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .graph import (Graph, clique_class, interaction_graph, is_decomposable,
                    is_decomposable_model, is_graphical)
from .model import GeneratingClass, PriorSpec, format_model, maximal_sets
from .score import MODES, ModelScorer
from .table import ContingencyTable


class InvalidModelError(ValueError):
    """Initial model not admissible for the search mode."""


@dataclass
class SearchConfig:
    mode: str = "decomposable"
    alpha: float = 1.0
    iterations: int = 5000
    replicates: int = 1
    seed: int = 0
    init_model: GeneratingClass | None = None
    threads: int | None = None
    score_neighbourhoods: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {', '.join(MODES)}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


@dataclass
class ModelRecord:
    model: str
    log_score: float
    visit_count: int
    first_seen_iteration: int

    def to_dict(self) -> dict:
        return asdict(self)


def neighbors_hierarchical(gc: GeneratingClass) -> list[GeneratingClass]:
    """Add one dual generator or delete one generator of size >= 2."""
    closure = gc.closure()
    V = gc.variables
    out = []
    for k in range(2, len(V) + 1):
        for s in itertools.combinations(V, k):
            s = frozenset(s)
            if s in closure:
                continue
            if all(s - {v} in closure for v in s):
                out.append(GeneratingClass(maximal_sets(gc.generators | {s}), V))
    for g in sorted(gc.generators, key=lambda g: sorted(g)):
        if len(g) < 2:
            continue
        rest = (gc.generators - {g}) | {g - {v} for v in g}
        out.append(GeneratingClass(maximal_sets(rest), V))
    return out


def neighbors_graphical(g: Graph) -> list[Graph]:
    """Every single-edge toggle."""
    return [g.toggle(u, v) for u, v in g.vertex_pairs()]


def neighbors_decomposable(g: Graph) -> list[Graph]:
    """Single-edge toggles that keep the graph chordal."""
    if not is_decomposable(g):
        raise InvalidModelError("graph is not decomposable")
    return [h for h in neighbors_graphical(g) if is_decomposable(h)]


def neighbors(gc: GeneratingClass, mode: str) -> list[GeneratingClass]:
    if mode == "hierarchical":
        return neighbors_hierarchical(gc)
    g = interaction_graph(gc)
    if mode == "graphical":
        return [clique_class(h) for h in neighbors_graphical(g)]
    if mode == "decomposable":
        return [clique_class(h) for h in neighbors_decomposable(g)]
    raise ValueError(f"unknown mode {mode!r}")


def check_admissible(gc: GeneratingClass, mode: str) -> None:
    if mode == "graphical" and not is_graphical(gc):
        raise InvalidModelError(f"{format_model(gc)} is not a graphical model")
    if mode == "decomposable" and not is_decomposable_model(gc):
        raise InvalidModelError(f"{format_model(gc)} is not a decomposable model")


class ModelSpace:
    """Memoized neighbourhoods and scores over canonical model strings."""

    def __init__(self, mode: str, scorer):
        self.mode = mode
        self.scorer = scorer
        self.models: dict[str, GeneratingClass] = {}
        self._nbd: dict[str, tuple[str, ...]] = {}
        self._score: dict[str, float] = {}

    def add(self, gc: GeneratingClass) -> str:
        key = format_model(gc)
        self.models.setdefault(key, gc)
        return key

    def neighbourhood(self, key: str) -> tuple[str, ...]:
        nb = self._nbd.get(key)
        if nb is None:
            nb = tuple(self.add(h) for h in neighbors(self.models[key], self.mode))
            if not nb:
                raise AssertionError(f"empty neighbourhood for {key}")
            self._nbd[key] = nb
        return nb

    def score(self, key: str) -> float:
        s = self._score.get(key)
        if s is None:
            s = self._score[key] = float(self.scorer(self.models[key]))
        return s


def run_chain(space: ModelSpace, init: GeneratingClass, iterations: int,
              rng: np.random.Generator, score_neighbourhoods: bool = True) -> dict[str, list]:
    """Run one chain; returns {model: [visits, first iteration seen]}.

    With `score_neighbourhoods`, every neighbour of a newly visited model is
    scored and reported (with zero visits until the chain lands on it).  The
    transition kernel is unaffected.
    """
    history: dict[str, list] = {}
    expanded: set[str] = set()

    def enter(key, it, visit=True):
        rec = history.setdefault(key, [0, it])
        if score_neighbourhoods and key not in expanded:
            expanded.add(key)
            for q in space.neighbourhood(key):
                space.score(q)
                history.setdefault(q, [0, it])
        if visit:
            rec[0] += 1

    cur = space.add(init)
    cur_score = space.score(cur)
    cur_nbd = space.neighbourhood(cur)
    if score_neighbourhoods:
        enter(cur, 0, visit=False)
    chunk = 65536
    for start in range(0, iterations, chunk):
        n = min(chunk, iterations - start)
        picks = rng.random(n)
        log_u = np.log(rng.random(n))
        for k in range(n):
            prop = cur_nbd[int(picks[k] * len(cur_nbd))]
            prop_nbd = space.neighbourhood(prop)
            prop_score = space.score(prop)
            log_ratio = (prop_score - cur_score
                         + math.log(len(cur_nbd)) - math.log(len(prop_nbd)))
            if log_ratio >= 0 or log_u[k] < log_ratio:
                cur, cur_score, cur_nbd = prop, prop_score, prop_nbd
            enter(cur, start + k + 1)
    return history


def mc3_run(config: SearchConfig, table: ContingencyTable,
            prior: PriorSpec | None = None) -> list[ModelRecord]:
    """Run `config.replicates` chains and merge them into ranked records."""
    prior = prior or PriorSpec.uniform(config.alpha, table.n_cells)
    init = config.init_model or GeneratingClass.independence(table.names)
    if set(init.variables) != set(table.names):
        raise InvalidModelError("initial model variables do not match the table")
    check_admissible(init, config.mode)
    scorer = ModelScorer(table, prior, config.mode)
    streams = np.random.SeedSequence(config.seed).spawn(config.replicates)

    def one(ss):
        space = ModelSpace(config.mode, scorer)
        rng = np.random.default_rng(ss)
        return run_chain(space, init, config.iterations, rng,
                         config.score_neighbourhoods), space

    workers = config.threads or os.cpu_count() or 1
    if config.replicates == 1 or workers == 1:
        results = [one(ss) for ss in streams]
    else:
        with ThreadPoolExecutor(max_workers=min(workers, config.replicates)) as pool:
            results = list(pool.map(one, streams))

    merged: dict[str, ModelRecord] = {}
    for history, space in results:
        for key, (visits, first) in history.items():
            rec = merged.get(key)
            if rec is None:
                merged[key] = ModelRecord(key, space.score(key), visits, first)
            else:
                rec.visit_count += visits
                rec.first_seen_iteration = min(rec.first_seen_iteration, first)
                rec.log_score = max(rec.log_score, space.score(key))
    return sorted(merged.values(), key=lambda r: (-r.log_score, r.model))
