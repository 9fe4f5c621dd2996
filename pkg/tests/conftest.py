import pytest

from decpg.domains import get_domain
from decpg.model import uniform_policies
from decpg.visitation import compute_visitation

# verdict lines collected by the acceptance tests; shown as a closing
# section so they survive pytest's output capture
acceptance_verdicts: list = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_verdicts:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_verdicts:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def climb():
    return get_domain("climb")


@pytest.fixture(scope="session")
def morning():
    return get_domain("morning")


@pytest.fixture(scope="session")
def guess():
    return get_domain("guess")


@pytest.fixture(scope="session")
def beverage():
    return get_domain("beverage")


@pytest.fixture(scope="session")
def dectiger():
    return get_domain("dectiger")


@pytest.fixture(scope="session")
def chain():
    return get_domain("chain")


@pytest.fixture(scope="session")
def observable_climb():
    return get_domain("observable-climb")


@pytest.fixture(scope="session")
def dectiger_vis(dectiger):
    """Visitation of Dec-Tiger under its bundled reference policy."""
    return compute_visitation(dectiger.model, dectiger.reference_policies)


@pytest.fixture(scope="session")
def climb_uniform(climb):
    pol = uniform_policies(climb.model)
    return pol, compute_visitation(climb.model, pol)
