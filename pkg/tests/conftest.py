import numpy as np
import pytest

from tpddpg.config import SystemConfig
from tpddpg.environment import ClientState


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def cfg():
    return SystemConfig()


def make_client(n=0, battery=3.0, harvest=0.5, c_n=40.0, tau=0, cfg=None, position=(50.0, 0.0)):
    cfg = cfg or SystemConfig()
    return ClientState(id=n, position=position, battery=battery, battery_end_on=battery,
                       harvest_mean=harvest, c_n=c_n, u_n=cfg.u_n, f_max=cfg.f_max,
                       p_max=cfg.p_max, tau=tau)


def central_diff(fn, params, eps=1e-6):
    """Central finite differences of scalar ``fn()`` w.r.t. every array in ``params`` (in place)."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + eps
            up = fn()
            p[i] = old - eps
            down = fn()
            p[i] = old
            g[i] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


def rel_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)
