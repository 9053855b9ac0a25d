import numpy as np
import pytest

from hybrid_eeg.synthetic import synthetic_recording


def raw_edf_bytes(labels, codes, spr, *, record_duration=1, pmin=-500.0, pmax=500.0,
                  dmin=-2048, dmax=2047, n_records_field=None, unit="uV"):
    """Hand-rolled EDF writer, independent of the package writer.

    ``codes`` is ``(channels, n_records * spr)`` of integer digital values.
    """
    ns = len(labels)
    n_rec = codes.shape[1] // spr

    def f(v, w):
        return str(v).ljust(w)[:w].encode("ascii")

    head = (f("0", 8) + f("test", 80) + f("test", 80) + f("01.01.01", 8) + f("00.00.00", 8)
            + f(256 * (ns + 1), 8) + f("", 44)
            + f(n_rec if n_records_field is None else n_records_field, 8)
            + f(record_duration, 8) + f(ns, 4))
    sig = b"".join(f(l, 16) for l in labels) + f("", 80) * ns + f(unit, 8) * ns
    sig += f(pmin, 8) * ns + f(pmax, 8) * ns + f(dmin, 8) * ns + f(dmax, 8) * ns
    sig += f("", 80) * ns + f(spr, 8) * ns + f("", 32) * ns
    body = codes.astype("<i2").reshape(ns, n_rec, spr).transpose(1, 0, 2).tobytes()
    return head + sig + body


@pytest.fixture(scope="session")
def normal_rec():
    return synthetic_recording("normal", duration_s=240, seed=1)


@pytest.fixture(scope="session")
def focal_rec():
    return synthetic_recording("focal_left_temporal", duration_s=240, seed=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance_lines():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
