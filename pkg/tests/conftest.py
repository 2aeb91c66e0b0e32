"""Shared fixtures. One-based names P1.. and N1.. map to ids 0.. here."""

from __future__ import annotations

import pytest

from lion.model import PlacementMap, TxnMeta


def P(i: int) -> int:
    return i - 1


def N(i: int) -> int:
    return i - 1


def txn(txn_id, *ops, at=0.0):
    """``txn(1, ("W", P(1), 0), ("R", P(2), 3))`` -> TxnMeta."""
    return TxnMeta(txn_id, tuple((v, key, kind) for kind, v, key in ops), at)


def pair_txn(txn_id, u, v, at=0.0):
    return txn(txn_id, ("R", u, 0), ("R", v, 0), at=at)


@pytest.fixture
def two_node_layout():
    # P1 primary on N1 with its secondary on N2; P2 the other way round
    return PlacementMap.from_text("0,0,1\n1,1,0\n", n_nodes=2, k=2)


@pytest.fixture
def three_node_layout():
    # P1: N1 (sec N2); P2: N3 (sec N1); P3: N2 (sec N1); P4: N3 (sec N1); P5: N1 (sec N2)
    return PlacementMap.from_text("0,0,1\n1,2,0\n2,1,0\n3,2,0\n4,0,1\n", n_nodes=3, k=2)


# criterion number -> (ok, detail), filled by the acceptance suite
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
