import numpy as np
import pytest

from ledgerlearn import ingest, ledger, simnet
from ledgerlearn.contracts import account_id
from ledgerlearn.ledger import Entry
from ledgerlearn.metrics import ConfusionMatrix, derive_metrics


def make_entry(i=0, fnr_shift=0.0):
    cm = ConfusionMatrix(tp=40 + i, tn=50, fp=5, fn=5 + i)
    metrics = derive_metrics(cm).with_accuracies(0.9, 0.9)
    return Entry(account_id(f"org-{i}"), metrics, account_id(f"model-{i}"), float(i))


def build_chain(n_blocks, difficulty=1):
    chain = ledger.Chain(difficulty)
    for i in range(n_blocks):
        block = ledger.make_block(chain.next_number(), chain.tip_hash(), [make_entry(i)],
                                  1_700_000_000 + 60 * i)
        sealed, _ = ledger.mine(block, difficulty)
        ledger.append(chain, sealed)
    return chain


@pytest.fixture
def small_chain():
    return build_chain(3)


@pytest.fixture(scope="session")
def genesis_csv():
    return ingest.synthetic_csv(4000, 0.03, seed=11, noise=0.3)


@pytest.fixture
def network(genesis_csv, tmp_path):
    cfg = simnet.SimConfig(difficulty=1, seed=3)
    train, test = simnet.prepare_initial(ingest.parse_csv(genesis_csv), cfg)
    state = simnet.init_network(cfg, train, test, workdir=tmp_path / "net")
    return state


@pytest.fixture
def rng():
    return np.random.default_rng(1234)





@pytest.fixture(scope="session")
def scenario(tmp_path_factory):
    """Seeded 15-contribution run with its journals on disk."""
    workdir = tmp_path_factory.mktemp("scenario")
    cfg = simnet.SimConfig(difficulty=2, seed=42)
    report = simnet.run_scenario(cfg, 15, workdir=workdir)
    return cfg, report, workdir


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
