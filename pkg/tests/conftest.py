import pytest

from uavmec.config import make_config

# small networks keep learning tests quick; physics stays at defaults
SMALL_LEARN = {"gat_hidden": [8, 4], "gat_heads": 2, "gru_hidden": 6, "spatial_dim": 5,
               "shared_dim": 7, "actor_hidden": [6, 6], "critic_hidden": [6, 4], "window": 8}


@pytest.fixture
def cfg():
    return make_config("desk")


@pytest.fixture
def short_cfg():
    """Desk profile with 30 s episodes and small networks."""
    return make_config("desk", {"episode_len": 30.0, "episodes": 2, "learn": dict(SMALL_LEARN)})


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
