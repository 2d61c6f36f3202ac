"""Example payload scripts and the harness that runs them on targets."""

from .scenarios import (
    SCENARIOS, SUPPORTED, VARIANTS, ScenarioFixture, ScenarioResult, default_fixture, jitrop_fixture,
    lev_fixture, relocator_fixture, run_scenario, script_source, ssl_fixture,
)

__all__ = [
    "SCENARIOS", "SUPPORTED", "VARIANTS", "ScenarioFixture", "ScenarioResult", "default_fixture",
    "jitrop_fixture", "lev_fixture", "relocator_fixture", "run_scenario", "script_source",
    "ssl_fixture",
]
