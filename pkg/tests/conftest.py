"""Shared fixtures.  Equilibrium construction is the slow part of most
tests, so dimensionless solutions and scaled profiles are memoized for
the whole session."""

import pytest

from star_sim import scale_to_mass, solve_dimensionless


@pytest.fixture(scope="session")
def dimensionless():
    cache = {}

    def get(n):
        if n not in cache:
            cache[n] = solve_dimensionless(n)
        return cache[n]

    return get


@pytest.fixture(scope="session")
def profile_factory(dimensionless):
    cache = {}

    def get(gamma=1.5, total_mass=1.0, n_nodes=512):
        key = (gamma, total_mass, n_nodes)
        if key not in cache:
            cache[key] = scale_to_mass(
                dimensionless(1.0 / (gamma - 1.0)),
                gamma=gamma, total_mass=total_mass, n_nodes=n_nodes)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def profile(profile_factory):
    """The workhorse star: gamma 3/2, unit mass, 512 cells."""
    return profile_factory(1.5, 1.0, 512)
