import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hgattack.attack import AttackConfig, run_attacks
from hgattack.experiment import select_targets
from hgattack.surrogate import SurrogateConfig, init_model, train
from hgattack.synthetic import default_benchmark_spec, generate_synthetic
from hgattack.victims import VictimKind, train_victim

SURROGATE_SEED = 0
VICTIM_SEEDS = {VictimKind.METAPATH_ATTENTION: 101,
                VictimKind.RELATION_ONEHOP: 202}
TARGET_SEED = 7
ATTACK_SEED = 13

# Wall-clock cost of building each session fixture, keyed by fixture name;
# the acceptance suite charges these against its runtime budgets.
TIMINGS: dict[str, float] = {}


def _timed(name, fn):
    t0 = time.perf_counter()
    result = fn()
    TIMINGS[name] = time.perf_counter() - t0
    return result


@pytest.fixture(scope="session")
def benchmark_graph():
    return _timed("generate", lambda: generate_synthetic(
        default_benchmark_spec(seed=0)))


@pytest.fixture(scope="session")
def benchmark_surrogate(benchmark_graph):
    def build():
        model = init_model(benchmark_graph, SurrogateConfig(seed=SURROGATE_SEED))
        report = train(model, benchmark_graph)
        return model, report
    return _timed("train-surrogate", build)


@pytest.fixture(scope="session")
def benchmark_targets(benchmark_graph):
    return select_targets(benchmark_graph, 50, TARGET_SEED)


@pytest.fixture(scope="session")
def benchmark_victims(benchmark_graph):
    return _timed("train-victims", lambda: {
        kind: train_victim(kind, benchmark_graph, seed)
        for kind, seed in VICTIM_SEEDS.items()})


@pytest.fixture(scope="session")
def benchmark_attacks(benchmark_graph, benchmark_surrogate, benchmark_targets):
    """Budget-3 attack results for every variant over the 50 targets."""
    model, _ = benchmark_surrogate

    def build():
        results = {}
        for variant in ("semantics_aware", "info", "random", "fga_baseline"):
            cfg = AttackConfig(budget=3, variant=variant, seed=ATTACK_SEED)
            results[variant] = run_attacks(model, benchmark_graph,
                                           benchmark_targets, cfg)
        return results
    return _timed("attack", build)
