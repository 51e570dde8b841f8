from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pytest

from edgefl import tasks

DATA = Path(__file__).parent / "data"

verdicts_key = pytest.StashKey[list]()


def read_rows(name: str) -> list[dict]:
    with (DATA / name).open(newline="") as fh:
        return list(csv.DictReader(fh))


def quadratic_task(optima, curvatures=None, n_samples: int = 100) -> tasks.Task:
    """Hand-built quadratic task; identity curvature when none is given."""
    optima = np.atleast_2d(np.asarray(optima, dtype=float))
    k, d = optima.shape
    if curvatures is None:
        curvatures = np.broadcast_to(np.eye(d), (k, d, d)).copy()
    return tasks.Task(kind="quadratic", dim=d, n_clients=k, heterogeneity=0.0, seed=0,
                      n_samples=n_samples, optima=optima, curvatures=np.asarray(curvatures, float))


def pytest_configure(config):
    config.stash[verdicts_key] = []


@pytest.fixture
def verdict(request):
    """Record one acceptance line; the terminal summary prints them all."""
    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"acceptance {number}: {'PASS' if ok else 'FAIL'} {title}"
        if detail:
            line += f" ({detail})"
        request.config.stash[verdicts_key].append((number, line))
        return ok
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(verdicts_key, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
