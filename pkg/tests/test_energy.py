import numpy as np
import pytest

from uavmec import energy as en
from uavmec.config import EnergyParams
from uavmec.runner import run_reference
from uavmec.tasking import PathRecord


@pytest.fixture
def p():
    return EnergyParams()


def test_flight_power_examples(p):
    assert en.flight_power(0.0, p) == 80.0
    # 0.5 * 1.225 * 0.1 * 0.3 = 0.018375; * 20^3 = 147
    assert en.flight_power(20.0, p) == pytest.approx(227.0, rel=1e-14)
    assert en.flight_power(10.0, p) == pytest.approx(98.375, rel=1e-14)


def test_trajectory_energy_examples(p):
    assert en.trajectory_energy([(0.0, 10.0)], p) == pytest.approx(800.0)
    assert en.trajectory_energy([], p) == 0.0
    assert en.trajectory_energy([(0.0, 5.0), (20.0, 5.0)], p) == pytest.approx(1535.0, rel=1e-14)


def test_compute_energy_examples(p):
    assert en.compute_energy(2e9, 0.0, p) == 0.0
    # 1e-28 * (2e9)^2 * 1e8
    assert en.compute_energy(2e9, 1e8, p) == pytest.approx(0.04, rel=1e-12)
    assert en.compute_energy(4e9, 1e8, p) == pytest.approx(4 * en.compute_energy(2e9, 1e8, p))


def test_kappa_is_configurable():
    p = EnergyParams(kappa=1e-18)
    assert en.compute_energy(2e9, 1e8, p) == pytest.approx(4e8, rel=1e-12)


class _Powers:
    p_tx, p_rx, freq = 0.5, 0.1, 2e9


def _rec(path, hop_times, t_up=0.8):
    return PathRecord(0, tuple(path), t_up, 0.02, sum(h[0] for h in hop_times), 0.0, 0.05,
                      sum(h[1] for h in hop_times), 0.1, 0.0, True, deadline=10.0, cycles=1e8,
                      t_decision_each=0.01, hop_times=tuple(hop_times))


def test_task_energy_local_has_no_relay_terms(p):
    split = en.task_energy(_rec([0], []), (), _Powers, p)
    assert split[0].get("forward", 0.0) == 0.0
    assert split[0].get("return", 0.0) == 0.0
    assert split[0]["uplink"] == pytest.approx(0.08)


def test_task_energy_forward_split(p):
    split = en.task_energy(_rec([0, 1], [(0.5, 0.0)]), [(0.5, 0.0)], _Powers, p)
    assert split[0]["forward"] == pytest.approx(0.25)
    assert split[1]["forward"] == pytest.approx(0.05)


def test_ledger_rejects_negative():
    led = en.EnergyLedger(0)
    with pytest.raises(ValueError):
        led.add("uplink", -1.0)


def test_ledger_closure_and_bounds_over_episodes():
    from uavmec.config import make_config

    cfg = make_config("desk", {"episode_len": 60.0})
    out = run_reference(cfg, 3, "random", episodes=3)
    assert len(out.ledger_rows) == 3 * cfg.n_uavs
    for _, led in out.ledger_rows:
        assert led.total == pytest.approx(led.component_sum(), rel=1e-9)
        for comp in ("trajectory", "uplink", "decision", "forward", "process", "ret", "downlink"):
            assert getattr(led, comp) >= 0.0
        assert led.total <= cfg.battery
