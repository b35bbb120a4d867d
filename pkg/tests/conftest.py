import numpy as np
import pytest

from sparsedet.dictionary import ChirpSpec, build_chirp_dictionary
from sparsedet.harness import paper_config

PAPER_POSITIONS = (100, 104, 133)
PAPER_GAMMAS = (0.8272, 0.8332, 0.8338)
PAPER_SNR_DB = (19, 22, 25, 28, 31, 33)
# Published minimum-h table, rows K = 1, 2, 3.
PAPER_H_TABLE = {
    1: (2.6798, 1.8972, 1.3431, 0.9508, 0.6731, 0.5347),
    2: (2.7754, 1.9648, 1.3910, 0.9847, 0.6971, 0.5538),
    3: (2.7843, 1.9712, 1.3955, 0.9879, 0.6994, 0.5555),
}


@pytest.fixture(scope="session")
def paper_dict():
    return build_chirp_dictionary(ChirpSpec(25, 1, True), 108, 250)


@pytest.fixture(scope="session")
def paper_cfg():
    return paper_config()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_orthonormal(rng, n, complex_valued=False):
    z = rng.standard_normal((n, n))
    if complex_valued:
        z = z + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


# One summary line per acceptance criterion, filled in by test_acceptance.
ACCEPTANCE_LINES = {}


def record_criterion(key, ok, detail):
    status = "PASS" if ok is True else ("FAIL" if ok is False else ok)
    line = f"criterion {key}: {status}  {detail}"
    ACCEPTANCE_LINES[key] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(str(k).rstrip("abcdefghijklmnopqrstuvwxyz")), str(k))):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
