import numpy as np
import pytest

from jprcsim.model import Allocation, Scenario, Scheme


def make_scenario(gain, serving, noise=1e-14, min_rate=5.0, peak=1.0):
    """Hand-built scenario from a (B, U, C) gain tensor; positions are dummies."""
    gain = np.asarray(gain, dtype=float)
    B, U, C = gain.shape
    serving = np.asarray(serving, dtype=int)
    return Scenario(
        bs_positions=np.column_stack((np.arange(B) * 500.0 + 250, np.full(B, 250.0))),
        user_positions=np.column_stack((serving * 500.0 + 100, np.full(U, 100.0))),
        serving_bs=serving,
        path_gain=gain,
        noise=np.broadcast_to(np.asarray(noise, dtype=float), (B,)),
        min_rate=np.broadcast_to(np.asarray(min_rate, dtype=float), (U,)),
        peak_power=np.broadcast_to(np.asarray(peak, dtype=float), (U, C)),
    )


def full_allocation(scenario, scheme=Scheme.NOMA):
    return Allocation(scheme=Scheme.parse(scheme),
                      assign=np.ones((scenario.num_users, scenario.num_subchannels), dtype=bool))


def random_scenario(rng, B, users_per_cell, C, *, min_rate=2.0, peak=1e-6, noise=1e-14,
                    spread=(1e-9, 1e-7)):
    """Random gains with own-cell links stronger on average than cross links."""
    U = B * users_per_cell
    serving = np.repeat(np.arange(B), users_per_cell)
    lo, hi = np.log10(spread[0]), np.log10(spread[1])
    gain = 10 ** rng.uniform(lo, hi, size=(B, U, C))
    gain[serving, np.arange(U), :] *= 10
    return make_scenario(gain, serving, noise=noise, min_rate=min_rate, peak=peak)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


#: one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
