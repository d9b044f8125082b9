import pytest

from hinrep.data_io import SynthConfig, gen_synthetic

_ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = {}


@pytest.fixture(scope="session")
def synthetic_small():
    """A 38-node synthetic graph with labels (no splits)."""
    return gen_synthetic(SynthConfig(n_legislators=16, n_states=4, n_terms=2, n_governors=4,
                                     n_presidents=2, n_justices=4, feature_dim=8, seed=0))


@pytest.fixture
def record_criterion(request):
    """Store ``(passed, detail)`` for an acceptance criterion number."""
    store = request.config.stash[_ACCEPTANCE_KEY]

    def record(number, passed, detail):
        store[number] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_ACCEPTANCE_KEY, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        passed, detail = store[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
