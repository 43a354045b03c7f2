import pytest

from bpre.envmodel import reference_model


@pytest.fixture(scope="session")
def m0():
    return reference_model("M0")


@pytest.fixture(scope="session")
def dirac2():
    return reference_model("dirac2")


@pytest.fixture(scope="session")
def d23_half():
    return reference_model("d23_half")


@pytest.fixture(scope="session")
def d23_quarter():
    return reference_model("d23_quarter")
