"""Shared fixtures: packaged data paths and a seeded random network corpus."""

from __future__ import annotations

from importlib import resources

import numpy as np
import pytest

from gridstrength.network import NetworkSpec, reduce_network
from gridstrength.strength import gscr


def data_path(*parts) -> str:
    return str(resources.files("gridstrength").joinpath("data", *parts))


@pytest.fixture(scope="session")
def fig3_path() -> str:
    return data_path("networks", "fig3.yaml")


@pytest.fixture(scope="session")
def smib_path() -> str:
    return data_path("networks", "smib.yaml")


@pytest.fixture(scope="session")
def device_path() -> str:
    return data_path("devices", "calibrated_gfl.yaml")


@pytest.fixture(scope="session")
def golden_path() -> str:
    return data_path("devices", "calibrated_gfl.golden.json")


def random_network(rng: np.random.Generator) -> NetworkSpec:
    """A random connected network: ``n`` farms (1..6), ``m`` interior
    buses (0..4), one infinite bus.  A random spanning tree guarantees
    connectivity; a few extra edges add meshing.  All susceptances are
    rescaled so the resulting gSCR lands in [0.9, 2.5]."""
    n = int(rng.integers(1, 7))
    m = int(rng.integers(0, 5))
    farm_ids = tuple(f"f{i}" for i in range(n))
    interior_ids = tuple(f"n{i}" for i in range(m))
    ids = list(farm_ids) + list(interior_ids) + ["inf"]

    edges: dict[tuple[str, str], float] = {}

    def add_edge(a: str, b: str, b_pu: float) -> None:
        key = (a, b) if a < b else (b, a)
        edges[key] = edges.get(key, 0.0) + b_pu

    # spanning tree grown from the infinite bus
    connected = ["inf"]
    pending = list(rng.permutation(ids[:-1]))
    for node in pending:
        other = connected[int(rng.integers(0, len(connected)))]
        add_edge(node, other, float(rng.uniform(1.0, 8.0)))
        connected.append(node)
    for _ in range(int(rng.integers(0, 4))):
        a, b = rng.choice(ids, size=2, replace=False)
        if a != b:
            add_edge(str(a), str(b), float(rng.uniform(0.5, 4.0)))

    def make(scale: float) -> NetworkSpec:
        return NetworkSpec(
            s_global_mva=100.0,
            farm_ids=farm_ids,
            interior_ids=interior_ids,
            infinite_ids=("inf",),
            farm_capacity_mva=tuple(
                float(c) for c in rng_caps
            ),
            branches=tuple(
                (pair, b * scale) for pair, b in sorted(edges.items())
            ),
        )

    rng_caps = rng.uniform(20.0, 200.0, size=n)
    base = make(1.0)
    target = float(rng.uniform(0.9, 2.5))
    # gSCR is homogeneous of degree 1 in the susceptances
    return make(target / gscr(reduce_network(base)))


@pytest.fixture(scope="session")
def network_corpus() -> list[NetworkSpec]:
    rng = np.random.default_rng(20260826)
    return [random_network(rng) for _ in range(20)]
