"""Shared fixtures.  Expensive objects (graphs, annuli) are built once per session."""

import functools
import math

import numpy as np
import pytest

from resonance_lab.nonlinearity import constant_nonlinearity, tanh_nonlinearity, zero_nonlinearity
from resonance_lab.reduced import GraphDensity, graph_at, invariant_annulus
from resonance_lab.spectral import DomainSpec, basis_for_level, build_basis

R_PHI1 = 2.0 * math.sqrt(2.0 / math.pi)  # |phi_1|_{L^1} on (0, pi)


@pytest.fixture(scope="session")
def interval():
    return basis_for_level(DomainSpec("interval"), 1)


@pytest.fixture(scope="session")
def interval16():
    return build_basis(DomainSpec("interval"), 16)


@pytest.fixture(scope="session")
def square():
    return build_basis(DomainSpec("square", quadrature_points_per_dim=16), 12)


@pytest.fixture(scope="session")
def tanh02():
    return tanh_nonlinearity(0.2)


@pytest.fixture(scope="session")
def tanh01():
    return tanh_nonlinearity(0.1)


@pytest.fixture(scope="session")
def zero():
    return zero_nonlinearity()


@pytest.fixture(scope="session")
def const():
    return constant_nonlinearity(0.3)


@functools.lru_cache(maxsize=None)
def interval_graph(c: float, lam: float, orientation: str = "standard"):
    basis = basis_for_level(DomainSpec("interval"), 1)
    spec = tanh_nonlinearity(c, orientation)
    split, graph = graph_at(basis, spec, 1, lam)
    return basis, spec, split, graph


@functools.lru_cache(maxsize=None)
def interval_annulus(c: float, lam: float, orientation: str = "standard"):
    basis, spec, split, graph = interval_graph(c, lam, orientation)
    return invariant_annulus(split, spec, graph)


@functools.lru_cache(maxsize=None)
def square_graph(c: float = 0.25, lam: float = 4.95):
    from resonance_lab.manifold import LPConfig

    basis = basis_for_level(DomainSpec("square", quadrature_points_per_dim=16), 2)
    spec = tanh_nonlinearity(c)
    split, graph = graph_at(basis, spec, 2, lam, LPConfig(window=16 / 3, nodes_per_unit=20), GraphDensity(24, 48))
    return basis, spec, split, graph


def rng(seed=0):
    return np.random.default_rng(seed)
