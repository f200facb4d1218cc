"""Stateful compliance checker around the pure transition function.

One checker owns one contract instance. Events, chain confirmations and
clock firings all pass through a single lock and are ruled in arrival
order; every ruling is appended to the instance's audit log.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, replace
from typing import Any

from . import contract_model as cm
from .audit_log import LogChain, VerdictRecord
from .chain_sim import ChainSimulator, Confirmation, LatencyPolicy
from .contract_model import (ChainConfirmation, ContractGraph, EventRecord, ForwardOnChain,
                             TimeoutFiring, Verdict)

LATE = "late"
UNMATCHED = "unmatched"


class ContractEnded(cm.InputAfterEnd):
    pass


@dataclass(frozen=True)
class CheckerConfig:
    contract: ContractGraph
    latency: LatencyPolicy = LatencyPolicy.immediate()
    pay_amount: int = 100

    def __post_init__(self):
        report = cm.validate_graph(self.contract)
        if not report.ok:
            raise cm.InvalidGraph(report)
        if self.pay_amount < 0:
            raise ValueError("pay_amount must be >= 0")


@dataclass(frozen=True)
class VerdictResponse:
    verdict: Verdict
    record: VerdictRecord

    @property
    def contract_compliant(self) -> bool:
        return self.verdict is Verdict.COMPLIANT


class Checker:
    def __init__(self, config: CheckerConfig | ContractGraph,
                 chain: ChainSimulator | None = None):
        if isinstance(config, ContractGraph):
            config = CheckerConfig(config)
        self.config = config
        self.graph = config.contract
        self.chain = chain or ChainSimulator(config.latency)
        self.address = self.chain.deploy(latency=config.latency)
        self.chain.set_listener(self.address, self._on_chain)
        self.log = LogChain.for_contract(self.graph)
        self._state = cm.initial_state(self.graph)
        self._lock = threading.RLock()
        self._inbox: deque[Confirmation] = deque()
        self._busy = False
        self.last_tx: int | None = None

    # -- snapshots ---------------------------------------------------------

    def get_state(self) -> cm.ROPState:
        with self._lock:
            return self._state

    def get_log(self) -> list[VerdictRecord]:
        with self._lock:
            return list(self.log.records)

    @property
    def now(self) -> int:
        return self._state.now

    @property
    def ended(self) -> bool:
        return self._state.ended

    # -- inputs ------------------------------------------------------------

    def submit_event(self, e: EventRecord) -> VerdictResponse:
        e.validate()
        with self._lock:
            self._drain()
            if self._state.ended:
                raise ContractEnded(f"contract already at {self._state.phase}")
            self._busy = True
            try:
                r = cm.step(self.graph, self._state, e)
                self._state = r.next_state
                rec = self._record("event", e, r)
                for eff in r.effects:
                    if isinstance(eff, ForwardOnChain):
                        # the listener only queues; delivery is ruled after this record
                        self.last_tx, _ = self.chain.submit_payment(
                            self.address, self.config.pay_amount, eff.op)
            finally:
                self._busy = False
            self._drain()
            return VerdictResponse(r.verdict, rec)

    def on_confirmation(self, c: ChainConfirmation) -> VerdictRecord:
        """Apply a confirmation directly; raises UnknownConfirmation if nothing waits for it."""
        with self._lock:
            self._drain()
            return self._confirm(c, strict=True)

    def advance_clock(self, days: int) -> list[TimeoutFiring]:
        if days < 1:
            raise ValueError("days must be >= 1")
        fired = []
        with self._lock:
            self._drain()
            for _ in range(days):
                self._state = replace(self._state, now=self._state.now + 1)
                for t in cm.due_timeouts(self.graph, self._state):
                    r = cm.step(self.graph, self._state, t)
                    self._state = r.next_state
                    self._record("timeout", t, r)
                    fired.append(t)
        return fired

    def receipt(self) -> str | None:
        if self.last_tx is None:
            return None
        return self.chain.get_receipt(self.address, self.last_tx)

    # -- internals ---------------------------------------------------------

    def _on_chain(self, conf: Confirmation) -> None:
        with self._lock:
            self._inbox.append(conf)
            if not self._busy:
                self._drain()

    def _drain(self) -> None:
        while self._inbox:
            conf = self._inbox.popleft()
            self._confirm(ChainConfirmation(conf.op, conf.tx_num, conf.result), strict=False)

    def _confirm(self, c: ChainConfirmation, strict: bool) -> VerdictRecord:
        if self._state.ended:
            return self.log.append("confirmation", c, Verdict.INFO.value, (),
                                   self._state.now, (LATE,), "confirmation after end")
        try:
            r = cm.step(self.graph, self._state, c)
        except cm.UnknownConfirmation:
            if strict:
                raise
            return self.log.append("confirmation", c, Verdict.INFO.value, (),
                                   self._state.now, (UNMATCHED,), "no pending forward")
        self._state = r.next_state
        return self._record("confirmation", c, r)

    def _record(self, kind: str, inp: Any, r: cm.StepResult) -> VerdictRecord:
        return self.log.append(kind, inp, r.verdict.value,
                               [cm.describe_effect(x) for x in r.effects], self._state.now,
                               detail=self._state.phase)


# ---------------------------------------------------------------------------
# log replay

_INPUT_TYPES = {"EventRecord": EventRecord, "TimeoutFiring": TimeoutFiring,
                "ChainConfirmation": ChainConfirmation}


def input_from_fields(fields: dict) -> cm.Input:
    fields = dict(fields)
    cls = _INPUT_TYPES[fields.pop("__type__")]
    return cls(**fields)


@dataclass(frozen=True)
class ReplayMismatch:
    seq_no: int
    logged: str
    replayed: str


def replay_log(g: ContractGraph, records: list[VerdictRecord] | list[dict]) -> list[ReplayMismatch]:
    """Re-rule every logged input from the initial state; return disagreements.

    Accepts in-memory records or decoded record bodies.
    """
    s = cm.initial_state(g)
    out = []
    for rec in records:
        f = rec if isinstance(rec, dict) else rec.body()
        flags = tuple(f["flags"])
        if LATE in flags or UNMATCHED in flags:
            continue
        inp = rec.input if isinstance(rec, VerdictRecord) else input_from_fields(f["input"])
        if isinstance(inp, dict):
            inp = input_from_fields(inp)
        if isinstance(inp, TimeoutFiring):
            s = replace(s, now=inp.day)
        else:
            s = replace(s, now=f["timestamp"])
        try:
            r = cm.step(g, s, inp)
            got = r.verdict.value
            s = r.next_state
        except cm.ContractError as exc:
            got = type(exc).__name__
        if got != f["verdict"]:
            out.append(ReplayMismatch(f["seq_no"], f["verdict"], got))
    return out
