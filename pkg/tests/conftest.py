from __future__ import annotations

import pytest

from reflexsim.core import FlowSpec, Scheme, SimConfig, Topology, validate_scenario

GBIT = 1e9 / 8  # bytes per Gbit


def single_link_scenario(flows, scheme=None, efficiency=1.0, conv_tau=0.0, duration=10.0, **sim):
    topo = Topology.single_link(10e9, efficiency)
    return validate_scenario(
        topo, flows, scheme or Scheme.reflex(), SimConfig(duration=duration, conv_tau=conv_tau, **sim)
    )


def flexible(flow_id, size, alpha=0.9, r=1.0, at=0.0):
    return FlowSpec(flow_id, "h0", "h1", size, alpha, r, at)


def regular(flow_id, size, at=0.0):
    return FlowSpec(flow_id, "h0", "h1", size, arrival_time=at)


@pytest.fixture
def unit_link():
    return Topology.single_link(1.0, 1.0)


# Criterion number -> (passed, detail); filled by test_acceptance.py.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
