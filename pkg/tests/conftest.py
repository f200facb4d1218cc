from __future__ import annotations

import pytest
from hypothesis import strategies as st

from hybrid_contracts import contract_model as cm
from hybrid_contracts.contract_model import (ABNORMAL_END, NORMAL_END, ContractGraph, Modality,
                                             Operation, ORExecNode, Venue)


@pytest.fixture
def ref():
    return cm.build_reference_contract()


@st.composite
def contract_graphs(draw, max_nodes: int = 5):
    """Valid, acyclic graphs whose timeouts lead straight to an end."""
    parties = ("alice", "bob")
    k = draw(st.integers(1, max_nodes))
    nchoices = [draw(st.integers(1, 2)) for _ in range(k)]
    # every node after the first hangs off a free choice slot of an earlier node
    targets: list[list[str | None]] = [[None] * c for c in nchoices]
    kept = 1
    for i in range(1, k):
        free = [(p, c) for p in range(i) for c in range(nchoices[p]) if targets[p][c] is None]
        if not free:
            break
        p, c = draw(st.sampled_from(free))
        targets[p][c] = f"N{i}"
        kept = i + 1
    ops = []
    nodes = []
    for i in range(kept):
        names = [f"Op{i}{chr(97 + c)}" for c in range(nchoices[i])]
        for c, name in enumerate(names):
            venue = draw(st.sampled_from([Venue.OFF_CHAIN, Venue.OFF_CHAIN, Venue.ON_CHAIN]))
            ops.append(Operation(name, venue))
            if targets[i][c] is None:
                later = [f"N{j}" for j in range(i + 1, kept)]
                targets[i][c] = draw(st.sampled_from(later + [NORMAL_END, NORMAL_END]))
        modality = draw(st.sampled_from([Modality.OBLIGATION, Modality.RIGHT]))
        holder = draw(st.sampled_from(parties))
        other = parties[1] if holder == parties[0] else parties[0]
        nodes.append(ORExecNode(
            f"N{i}", holder, other, modality, tuple(names), draw(st.integers(1, 9)),
            dict(zip(names, targets[i])),
            ABNORMAL_END if modality is Modality.OBLIGATION else NORMAL_END))
    init_holder = draw(st.sampled_from(parties))
    init_other = parties[1] if init_holder == parties[0] else parties[0]
    return ContractGraph("random", parties, (Operation("Start"), *ops), "Start",
                         init_holder, init_other, "N0", tuple(nodes))


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion."""
    def record(name: str, ok: bool, detail: str = "") -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
        _CRITERIA.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
