"""Planted-model source data generators.

A planted model is a set of disjoint attribute cliques, each with an
explicit joint table; attributes outside every clique are uniform and
independent. Records are sampled i.i.d. from the model, and the model
itself serves as the ground-truth oracle (true joints, true dependency
graph) for evaluation runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from lopub.reduce import DependencyGraph, dependency_threshold, mutual_information
from lopub.schema import AttributeDomain, Dataset, Schema


class GeneratorError(ValueError):
    pass


@dataclass
class PlantedClique:
    attrs: tuple[int, ...]
    probs: np.ndarray = field(repr=False)


@dataclass
class PlantedModel:
    schema: Schema
    cliques: list[PlantedClique]

    def __post_init__(self):
        seen: set[int] = set()
        for cl in self.cliques:
            cl.attrs = tuple(sorted(int(a) for a in cl.attrs))
            if not cl.attrs or cl.attrs[0] < 0 or cl.attrs[-1] >= self.schema.d:
                raise GeneratorError(f"clique {cl.attrs} out of range")
            if seen & set(cl.attrs):
                raise GeneratorError("planted cliques must be disjoint")
            seen.update(cl.attrs)
            cards = tuple(self.schema.attributes[a].cardinality for a in cl.attrs)
            probs = np.asarray(cl.probs, dtype=np.float64)
            if probs.shape != cards:
                raise GeneratorError(
                    f"clique {cl.attrs} table shape {probs.shape} != domain shape {cards}"
                )
            if (probs < 0).any():
                raise GeneratorError(f"clique {cl.attrs} table has negative entries")
            if abs(float(probs.sum()) - 1.0) > 1e-9:
                raise GeneratorError(f"planted joint for clique {cl.attrs} is not normalized")
            cl.probs = probs

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        """Draw n i.i.d. records from the planted model."""
        d = self.schema.d
        rows = np.zeros((n, d), dtype=np.int64)
        covered = set()
        for cl in self.cliques:
            cards = cl.probs.shape
            flat = rng.choice(cl.probs.size, size=n, p=cl.probs.reshape(-1))
            for ax, a in enumerate(cl.attrs):
                rows[:, a] = np.unravel_index(flat, cards)[ax]
            covered.update(cl.attrs)
        for a in range(d):
            if a not in covered:
                rows[:, a] = rng.integers(self.schema.attributes[a].cardinality, size=n)
        return Dataset(schema=self.schema, rows=rows)

    def true_joint(self, cluster) -> np.ndarray:
        """Exact joint table over any cluster, using clique independence."""
        cluster = tuple(sorted(int(a) for a in cluster))
        owner = {}
        for ci, cl in enumerate(self.cliques):
            for a in cl.attrs:
                owner[a] = ci
        groups: dict[object, list[int]] = {}
        for a in cluster:
            groups.setdefault(owner.get(a, ("u", a)), []).append(a)
        tables, axes = [], []
        for key, attrs in groups.items():
            if isinstance(key, tuple):  # uncovered attribute: uniform
                card = self.schema.attributes[attrs[0]].cardinality
                tables.append(np.full(card, 1.0 / card))
            else:
                cl = self.cliques[key]
                drop = tuple(i for i, a in enumerate(cl.attrs) if a not in attrs)
                tables.append(cl.probs.sum(axis=drop) if drop else cl.probs)
            axes.extend(attrs)
        out = tables[0]
        for t in tables[1:]:
            out = np.multiply.outer(out, t)
        perm = np.argsort(axes)
        return np.ascontiguousarray(np.transpose(out, perm))

    def true_graph(self, phi: float) -> DependencyGraph:
        """Dependency graph implied by the model at threshold level phi."""
        d = self.schema.d
        adjacency = np.zeros((d, d), dtype=bool)
        np.fill_diagonal(adjacency, True)
        mi = np.full((d, d), np.nan)
        for m in range(d):
            for n in range(m + 1, d):
                value = mutual_information(self.true_joint((m, n)))
                mi[m, n] = mi[n, m] = value
                tau = dependency_threshold(self.schema.attributes[m].cardinality,
                                           self.schema.attributes[n].cardinality, phi)
                adjacency[m, n] = adjacency[n, m] = value >= tau
        return DependencyGraph(adjacency=adjacency, phi=phi, mi=mi)

    def to_config(self) -> dict:
        return {
            "attributes": self.schema.to_config()["attributes"],
            "cliques": [
                {"attributes": [self.schema.attributes[a].name for a in cl.attrs],
                 "probs": cl.probs.tolist()}
                for cl in self.cliques
            ],
        }


def model_from_config(config: str | dict) -> PlantedModel:
    """Parse a generator config (JSON text or dict) into a PlantedModel.

    Attributes may give explicit ``values`` or just a ``cardinality`` (value
    labels v0, v1, ... are then generated).
    """
    if isinstance(config, str):
        config = json.loads(config)
    domains = []
    for entry in config["attributes"]:
        if "values" in entry:
            values = tuple(str(v) for v in entry["values"])
        else:
            values = tuple(f"v{i}" for i in range(int(entry["cardinality"])))
        domains.append(AttributeDomain(name=str(entry["name"]), values=values))
    schema = Schema(attributes=tuple(domains))
    cliques = []
    for cl in config.get("cliques", []):
        attrs = tuple(schema.attribute_index(str(nm)) for nm in cl["attributes"])
        cliques.append(PlantedClique(attrs=attrs, probs=np.asarray(cl["probs"])))
    return PlantedModel(schema=schema, cliques=cliques)


def generate_synthetic_source(model, n: int, rng: np.random.Generator) -> Dataset:
    """Sample a source dataset from a planted model (or its config)."""
    if not isinstance(model, PlantedModel):
        model = model_from_config(model)
    return model.sample(n, rng)


def coupled_joint(card: int, strength: float) -> np.ndarray:
    """Pair table where both attributes agree with the given probability.

    strength = 1 is a perfect copy; strength = 0 is independence.
    """
    if not (0.0 <= strength <= 1.0):
        raise GeneratorError("strength must be in [0,1]")
    table = np.full((card, card), (1.0 - strength) / (card * card))
    table[np.diag_indices(card)] += strength / card
    return table


def random_joint(cards, rng: np.random.Generator, concentration: float = 1.0) -> np.ndarray:
    """Dirichlet-random joint table over the given domain sizes."""
    cards = tuple(int(c) for c in cards)
    flat = rng.dirichlet(np.full(int(np.prod(cards)), concentration))
    return flat.reshape(cards)


def sparse_joint(cards, n_support: int, rng: np.random.Generator) -> np.ndarray:
    """Joint table with mass on exactly n_support randomly chosen cells."""
    cards = tuple(int(c) for c in cards)
    n_cells = int(np.prod(cards))
    if not (1 <= n_support <= n_cells):
        raise GeneratorError("n_support out of range")
    support = rng.choice(n_cells, size=n_support, replace=False)
    weights = rng.dirichlet(np.full(n_support, 2.0))
    flat = np.zeros(n_cells)
    flat[support] = weights
    return flat.reshape(cards)
