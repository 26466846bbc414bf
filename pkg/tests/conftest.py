"""Shared fixtures: small simulated corpora reused across test modules."""

import pytest

from microids import simulate
from microids.graphs import load_skeletons


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """Five short attack trials (one per scenario), plus the run-spec rows."""
    out = tmp_path_factory.mktemp("tiny_corpus")
    plan = [
        simulate.ScenarioConfig(
            scenario=scenario,
            duration_s=40,
            normal_rps=2.0,
            attack_rps=simulate.DEFAULT_ATTACK_RPS[scenario] / 2,
            seed=11,
            run_id=f"{scenario}_t0",
        )
        for scenario in simulate.ATTACK_LABELS
    ]
    specs = simulate.simulate_corpus(plan, out)
    return specs


@pytest.fixture(scope="session")
def tiny_skeletons(tiny_corpus):
    return load_skeletons(tiny_corpus)
