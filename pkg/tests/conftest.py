"""Shared fixtures and independent oracle helpers.

Oracle helpers here deliberately avoid the library's own code paths
(Counter-based counting, direct arithmetic) so tests check against an
independent computation.
"""

from collections import Counter

import numpy as np
import pytest

from lopub.encode import encode_dataset, params_for_schema
from lopub.schema import AttributeDomain, Schema, Dataset


def count_joint(rows, cluster, cards):
    """Brute-force frequency table over a cluster (independent oracle)."""
    rows = np.asarray(rows)
    table = np.zeros(tuple(cards), dtype=float)
    for key, c in Counter(tuple(r) for r in rows[:, list(cluster)]).items():
        table[key] = c
    return table / table.sum()


def make_schema(cards, prefix="A"):
    return Schema(attributes=tuple(
        AttributeDomain(f"{prefix}{j + 1}", tuple(f"v{i}" for i in range(c)))
        for j, c in enumerate(cards)
    ))


def sample_rows(joint, n, rng):
    """Draw n rows from an explicit joint table."""
    joint = np.asarray(joint, dtype=float)
    flat = rng.choice(joint.size, size=n, p=joint.reshape(-1))
    return np.stack(np.unravel_index(flat, joint.shape), axis=1)


def encoded_pair(joint, n, f, seed, p=1 / 16):
    """Dataset + reports for a 2-attribute planted joint."""
    schema = make_schema(joint.shape)
    rows = sample_rows(joint, n, np.random.default_rng(seed))
    dataset = Dataset(schema=schema, rows=rows)
    params = params_for_schema(schema, p=p)
    reports = encode_dataset(dataset, params, f, seed + 1)
    return dataset, reports


@pytest.fixture(scope="session")
def census_schema():
    return Schema(attributes=(
        AttributeDomain("Age", tuple(str(a) for a in range(25, 60))),
        AttributeDomain("Gender", ("M", "F")),
        AttributeDomain("Education", ("college", "master", "phd")),
        AttributeDomain("Income", ("working", "low-middle", "up-middle", "affluent")),
    ))
