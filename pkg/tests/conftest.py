# tests/conftest.py
import pytest

from core.profiles import build_profile

_CACHE = {}


def _profile(N):
    if N not in _CACHE:
        _CACHE[N] = build_profile(N)
    return _CACHE[N]


@pytest.fixture(scope="session")
def profile2():
    return _profile(2)


@pytest.fixture(scope="session")
def profile3():
    return _profile(3)


@pytest.fixture(scope="session")
def profile4():
    return _profile(4)


@pytest.fixture(scope="session")
def profiles(profile2, profile3, profile4):
    return {2: profile2, 3: profile3, 4: profile4}
