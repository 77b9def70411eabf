"""Bundled protocol specs and the scenario harness."""
from .catalog import (
    DEFAULT_ORDER,
    GIGYA_SPEC,
    OAUTH_PATHS,
    PROVIDERS,
    SAML_SPEC,
    builtin_names,
    builtin_spec,
    builtin_specs,
    builtin_xml,
    resolve_spec,
    resolve_specs,
)
from .scenario import (
    Scenario,
    ScenarioReport,
    ScenarioStep,
    StepResult,
    build_automaton,
    builtin_scenarios,
    load_scenario,
    parse_scenario,
    run_scenario,
)

__all__ = [
    "DEFAULT_ORDER", "GIGYA_SPEC", "OAUTH_PATHS", "PROVIDERS", "SAML_SPEC",
    "builtin_names", "builtin_spec", "builtin_specs", "builtin_xml", "resolve_spec", "resolve_specs",
    "Scenario", "ScenarioReport", "ScenarioStep", "StepResult", "build_automaton",
    "builtin_scenarios", "load_scenario", "parse_scenario", "run_scenario",
]
