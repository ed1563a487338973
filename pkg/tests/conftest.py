from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from egmgraph.pipeline import SimulationConfig, cached_segment, segment_seed
from egmgraph.sim import ElectrodeArraySpec, FociSchedule, TissueConfig, default_foci

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []

REPRO_ACLS = (160.0, 180.0)
REPRO_SEGMENTS = 6
REPRO_SEED = 0


def record_criterion(name: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS.append((name, bool(passed), detail))
    print(f"[{'PASS' if passed else 'FAIL'}] {name} {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_config(duration_s: float = 1.5, seed: int = 1) -> SimulationConfig:
    """60x60 sheet under a 4x4 array at 1 mm pitch; a few seconds of compute."""
    tissue = TissueConfig(nx=60, ny=60)
    return SimulationConfig(tissue=tissue, foci=FociSchedule(sources=default_foci(60, 60), cycle_jitter_ms=10.0),
                            array=ElectrodeArraySpec(rows=4, cols=4, pitch_mm=1.0), duration_s=duration_s,
                            warmup_s=0.2, seed=seed)


@pytest.fixture(scope="session")
def segment_cache(request):
    return request.config.cache.mkdir("egm-segments")


@pytest.fixture(scope="session")
def small_segment(segment_cache):
    return cached_segment(small_config(), segment_cache)


@pytest.fixture(scope="session")
def repro_segments(segment_cache):
    """Six 10 s segments per cycle length at the default configuration, cached on disk."""
    base = SimulationConfig()
    out = {}
    for acl in REPRO_ACLS:
        out[acl] = [cached_segment(replace(base.with_acl(acl), seed=segment_seed(REPRO_SEED, acl, s)), segment_cache)
                    for s in range(REPRO_SEGMENTS)]
    return out
