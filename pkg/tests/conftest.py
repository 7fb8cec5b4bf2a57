from pathlib import Path

import pytest

from src.core import Event, EventKind, Trace
from src.scenario import Scenario
from src.utils import Config

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("logging:\n  level: WARNING\n  dir: null\n"
                    f"output:\n  trace_dir: {tmp_path / 'traces'}\n  report_dir: {tmp_path / 'reports'}\n")
    return Config(str(path))


@pytest.fixture
def scenario(config):
    def load(name: str) -> Scenario:
        return Scenario.load(SCENARIOS / f"{name}.scn", config)
    return load


@pytest.fixture
def from_yaml(config):
    def build(text: str) -> Scenario:
        return Scenario.from_yaml(text, config)
    return build


def make_trace(provers, events, flags=("sw",), **header) -> Trace:
    """Trace from (tick, kind, args) triples."""
    header = {"provers": list(provers), "adversary": {"flags": list(flags)}, **header}
    return Trace(header, [Event(at, kind, dict(args)) for at, kind, args in events])


def claim(at, start, end, **statuses):
    return (at, EventKind.CLAIM_INDIVIDUAL, {"statuses": statuses, "interval": [start, end]})


def group_claim(at, start, end, *groups):
    return (at, EventKind.CLAIM_GROUP, {"groups": [[sorted(g), s] for g, s in groups],
                                        "interval": [start, end]})


def compromise(at, p):
    return (at, EventKind.COMPROMISE, {"prover": p})


def restore(at, p):
    return (at, EventKind.RESTORE, {"prover": p})
