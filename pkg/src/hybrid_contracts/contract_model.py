"""Deontic contract graphs and the pure transition function.

A contract is a chain of OR-exec nodes. At each node one party holds a
right or an obligation to execute one of one or two operations before a
deadline. :func:`step` is the only place where verdicts are decided; the
checker, the sequence generator and the log replayer all go through it.
"""

from __future__ import annotations

import enum
import hashlib
from collections import deque
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Union

from .encoding import encode

NORMAL_END = "NormalEnd"
ABNORMAL_END = "AbnormalEnd"
ENDS = (NORMAL_END, ABNORMAL_END)
INIT = "Init"


class Modality(str, enum.Enum):
    RIGHT = "Right"
    OBLIGATION = "Obligation"
    PROHIBITION = "Prohibition"


class Venue(str, enum.Enum):
    OFF_CHAIN = "OffChain"
    ON_CHAIN = "OnChain"


class Completion(str, enum.Enum):
    NORMAL = "Normal"
    ABNORMAL = "Abnormal"


class Verdict(str, enum.Enum):
    COMPLIANT = "Compliant"
    NON_COMPLIANT = "NonCompliant"
    INFO = "Info"


SUCCESS = "success"
BIZFAIL = "bizfail"
STATUSES = (SUCCESS, BIZFAIL)


class ContractError(Exception):
    pass


class InputAfterEnd(ContractError):
    pass


class InvalidGraph(ContractError):
    def __init__(self, report: "ValidationReport"):
        super().__init__("; ".join(str(f) for f in report.findings))
        self.report = report


class UnknownConfirmation(ContractError):
    pass


class MalformedEvent(ContractError):
    pass


def completion_of(end_marker: str) -> Completion:
    return Completion.NORMAL if end_marker == NORMAL_END else Completion.ABNORMAL


# ---------------------------------------------------------------------------
# graph

@dataclass(frozen=True)
class Operation:
    name: str
    venue: Venue = Venue.OFF_CHAIN


@dataclass(frozen=True)
class ORExecNode:
    name: str
    holder: str
    counterparty: str
    modality: Modality
    choices: tuple[str, ...]
    deadline: int
    on_success: tuple[tuple[str, str], ...]
    on_timeout: str | None

    def __post_init__(self):
        object.__setattr__(self, "choices", tuple(self.choices))
        succ = self.on_success
        if isinstance(succ, Mapping):
            succ = tuple(succ.items())
        object.__setattr__(self, "on_success", tuple(tuple(p) for p in succ))

    def target(self, op: str) -> str:
        for name, tgt in self.on_success:
            if name == op:
                return tgt
        raise KeyError(op)

    @property
    def timeout_name(self) -> str:
        return "".join(self.choices) + "TO"

    @property
    def timeout_completion(self) -> Completion:
        if self.modality is Modality.OBLIGATION:
            return Completion.ABNORMAL
        return Completion.NORMAL


@dataclass(frozen=True)
class ContractGraph:
    name: str
    parties: tuple[str, str]
    operations: tuple[Operation, ...]
    initial_op: str
    initial_holder: str
    initial_counterparty: str
    start: str
    nodes: tuple[ORExecNode, ...]

    def node(self, name: str) -> ORExecNode:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)

    def has_node(self, name: str) -> bool:
        return any(n.name == name for n in self.nodes)

    def operation(self, name: str) -> Operation | None:
        for op in self.operations:
            if op.name == name:
                return op
        return None

    @property
    def alphabet(self) -> tuple[str, ...]:
        return tuple(op.name for op in self.operations)

    def roles(self, op: str) -> tuple[str, str]:
        """(originator, responder) of the first place ``op`` is offered."""
        if op == self.initial_op:
            return self.initial_holder, self.initial_counterparty
        for n in self.nodes:
            if op in n.choices:
                return n.holder, n.counterparty
        return self.parties

    def successors(self, name: str) -> list[str]:
        if name == INIT:
            return [self.start]
        n = self.node(name)
        out = [t for _, t in n.on_success]
        if n.on_timeout is not None:
            out.append(n.on_timeout)
        return out

    def canonical_bytes(self) -> bytes:
        return encode(self)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()


def build_reference_contract() -> ContractGraph:
    """The buyer/store data-selling contract."""
    buyer, store = "buyer", "store"
    return ContractGraph(
        name="dataseller",
        parties=(buyer, store),
        operations=(
            Operation("BuyReq"),
            Operation("Rej"),
            Operation("Conf"),
            Operation("Pay", Venue.ON_CHAIN),
            Operation("Canc"),
            Operation("GetVou"),
        ),
        initial_op="BuyReq",
        initial_holder=buyer,
        initial_counterparty=store,
        start="N1",
        nodes=(
            ORExecNode("N1", store, buyer, Modality.OBLIGATION, ("Rej", "Conf"), 3,
                       {"Rej": NORMAL_END, "Conf": "N2"}, ABNORMAL_END),
            ORExecNode("N2", buyer, store, Modality.OBLIGATION, ("Pay", "Canc"), 7,
                       {"Pay": "N3", "Canc": NORMAL_END}, ABNORMAL_END),
            ORExecNode("N3", buyer, store, Modality.RIGHT, ("GetVou",), 5,
                       {"GetVou": NORMAL_END}, NORMAL_END),
        ),
    )


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Finding:
    kind: str
    node: str | None
    message: str

    def __str__(self):
        where = f"[{self.node}] " if self.node else ""
        return f"{self.kind}: {where}{self.message}"


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.findings

    def kinds(self) -> set[str]:
        return {f.kind for f in self.findings}


def validate_graph(g: ContractGraph) -> ValidationReport:
    found: list[Finding] = []
    add = lambda kind, node, msg: found.append(Finding(kind, node, msg))

    if len(g.parties) != 2 or g.parties[0] == g.parties[1] or not all(g.parties):
        add("parties", None, f"need two distinct non-empty parties, got {g.parties!r}")
    names = [n.name for n in g.nodes]
    dupes = {n for n in names if names.count(n) > 1}
    for d in sorted(dupes):
        add("duplicate-node", d, "node name used more than once")
    for reserved in (INIT, *ENDS):
        if reserved in names:
            add("reserved-name", reserved, "node name collides with a phase marker")
    alphabet = set(g.alphabet)
    if g.initial_op not in alphabet:
        add("unknown-operation", None, f"initial operation {g.initial_op!r} not declared")
    if g.initial_holder == g.initial_counterparty:
        add("parties", None, "initial right holder equals counterparty")
    known = set(names) | set(ENDS)
    if g.start not in known:
        add("missing-start", None, f"start {g.start!r} is not a node or end")

    for n in g.nodes:
        if not n.choices:
            add("no-choices", n.name, "node offers no operations")
        if len(set(n.choices)) != len(n.choices):
            add("duplicate-choice", n.name, "choices are not distinct")
        if len(n.choices) > 2:
            add("too-many-choices", n.name, "an OR-exec node offers at most two operations")
        for c in n.choices:
            if c not in alphabet:
                add("unknown-operation", n.name, f"choice {c!r} not declared")
        if n.deadline <= 0:
            add("bad-deadline", n.name, "deadline must be a positive number of days")
        if n.holder == n.counterparty or {n.holder, n.counterparty} - set(g.parties):
            add("parties", n.name, "holder/counterparty must be the two contract parties")
        succ_ops = [op for op, _ in n.on_success]
        if sorted(succ_ops) != sorted(n.choices):
            add("success-edges", n.name, "on_success must map each choice exactly once")
        for _, tgt in n.on_success:
            if tgt not in known:
                add("dangling-edge", n.name, f"success edge to unknown {tgt!r}")
        if n.on_timeout is None:
            add("missing-timeout", n.name, "node has no timeout edge")
        else:
            if n.on_timeout not in known:
                add("dangling-edge", n.name, f"timeout edge to unknown {n.on_timeout!r}")
            if n.modality is Modality.OBLIGATION and n.on_timeout == NORMAL_END:
                add("timeout-completion", n.name, "obligation timeout must end abnormally")
            if n.modality is Modality.RIGHT and n.on_timeout == ABNORMAL_END:
                add("timeout-completion", n.name, "right timeout must end normally")
        if n.modality is Modality.PROHIBITION:
            add("prohibition-node", n.name, "prohibitions cannot drive an OR-exec node")

    if dupes or g.start not in known:
        return ValidationReport(tuple(found))

    def edges(name):
        if name in ENDS:
            return []
        n = g.node(name)
        out = [t for _, t in n.on_success if t in known]
        if n.on_timeout in known:
            out.append(n.on_timeout)
        return out

    reachable = _closure([g.start], edges)
    for n in g.nodes:
        if n.name not in reachable:
            add("unreachable", n.name, "not reachable from start")
    reverse: dict[str, list[str]] = {k: [] for k in known}
    for n in g.nodes:
        for t in edges(n.name):
            reverse[t].append(n.name)
    reaches_end = _closure(list(ENDS), lambda x: reverse.get(x, []))
    for n in g.nodes:
        if n.name not in reaches_end:
            add("no-path-to-end", n.name, "no path from this node to an end")
    return ValidationReport(tuple(found))


def _closure(seeds: Iterable[str], edges) -> set[str]:
    seen = set(seeds)
    todo = deque(seen)
    while todo:
        cur = todo.popleft()
        for nxt in edges(cur):
            if nxt not in seen:
                seen.add(nxt)
                todo.append(nxt)
    return seen


def is_acyclic(g: ContractGraph) -> bool:
    color: dict[str, int] = {}

    def visit(name: str) -> bool:
        if name in ENDS:
            return True
        state = color.get(name, 0)
        if state == 1:
            return False
        if state == 2:
            return True
        color[name] = 1
        ok = all(visit(t) for t in g.successors(name))
        color[name] = 2
        return ok

    return visit(g.start)


# ---------------------------------------------------------------------------
# runtime state

@dataclass(frozen=True)
class ROPEntry:
    modality: Modality
    operations: tuple[str, ...]
    holder: str
    counterparty: str
    node: str
    granted_at: int
    expires_at: int | None  # None: no deadline

    def live_at(self, day: int) -> bool:
        return self.expires_at is None or day <= self.expires_at

    @property
    def key(self) -> tuple:
        return (self.modality, self.operations, self.holder)


@dataclass(frozen=True)
class PendingForward:
    op: str
    holder: str
    counterparty: str
    target: str


@dataclass(frozen=True)
class ROPState:
    entries: tuple[ROPEntry, ...]
    now: int
    phase: str
    pending_onchain: tuple[PendingForward, ...] = ()

    @property
    def ended(self) -> bool:
        return self.phase in ENDS

    @property
    def completion(self) -> Completion | None:
        return completion_of(self.phase) if self.ended else None

    def held_by(self, party: str) -> list[ROPEntry]:
        return [e for e in self.entries if e.holder == party]


# inputs

@dataclass(frozen=True)
class EventRecord:
    originator: str
    responder: str
    op_type: str
    status: str = SUCCESS

    def validate(self) -> None:
        for name in ("originator", "responder", "op_type", "status"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value.strip():
                raise MalformedEvent(f"{name} must be a non-empty string")
        if self.originator == self.responder:
            raise MalformedEvent("originator and responder must differ")
        if self.status not in STATUSES:
            raise MalformedEvent(f"status must be one of {STATUSES}, got {self.status!r}")

    def business_event(self) -> str:
        return (f"BusinessEvent{{originator='{self.originator}', responder='{self.responder}', "
                f"type='{self.op_type}', status='{self.status}'}}")


@dataclass(frozen=True)
class TimeoutFiring:
    node: str
    name: str
    day: int


@dataclass(frozen=True)
class ChainConfirmation:
    op: str
    tx_num: int
    result: str = ""


Input = Union[EventRecord, TimeoutFiring, ChainConfirmation]


# effects

@dataclass(frozen=True)
class Grant:
    entry: ROPEntry


@dataclass(frozen=True)
class Revoke:
    entry: ROPEntry


@dataclass(frozen=True)
class ForwardOnChain:
    op: str
    event: EventRecord


@dataclass(frozen=True)
class Complete:
    kind: Completion


Effect = Union[Grant, Revoke, ForwardOnChain, Complete]


def describe_effect(e: Effect) -> str:
    if isinstance(e, Grant):
        x = e.entry
        return f"grant {x.modality.value}{{{','.join(x.operations)}}} to {x.holder} until {x.expires_at}"
    if isinstance(e, Revoke):
        x = e.entry
        return f"revoke {x.modality.value}{{{','.join(x.operations)}}} from {x.holder}"
    if isinstance(e, ForwardOnChain):
        return f"forward {e.op} on-chain"
    return f"complete {e.kind.value}"


@dataclass(frozen=True)
class StepResult:
    verdict: Verdict
    effects: tuple[Effect, ...]
    next_state: ROPState


# ---------------------------------------------------------------------------
# transitions

def initial_state(g: ContractGraph) -> ROPState:
    report = validate_graph(g)
    if not report.ok:
        raise InvalidGraph(report)
    right = ROPEntry(Modality.RIGHT, (g.initial_op,), g.initial_holder,
                     g.initial_counterparty, INIT, 0, None)
    return ROPState(entries=(right,), now=0, phase=INIT)


def node_entries(g: ContractGraph, node: str, now: int) -> tuple[ROPEntry, ...]:
    n = g.node(node)
    return (ROPEntry(n.modality, n.choices, n.holder, n.counterparty, n.name,
                     now, now + n.deadline),)


def _enter(g: ContractGraph, s: ROPState, target: str) -> tuple[list[Effect], ROPState]:
    if target in ENDS:
        return [Complete(completion_of(target))], replace(s, phase=target)
    grants = node_entries(g, target, s.now)
    entries = s.entries + tuple(e for e in grants if e.key not in {x.key for x in s.entries})
    return [Grant(e) for e in grants], replace(s, entries=entries, phase=target)


def _no_change(s: ROPState, verdict=Verdict.NON_COMPLIANT) -> StepResult:
    return StepResult(verdict, (), s)


def step(g: ContractGraph, s: ROPState, inp: Input) -> StepResult:
    """Rule on one input. Pure: the same (state, input) always gives the same result."""
    if s.ended:
        raise InputAfterEnd(f"contract already at {s.phase}")
    if isinstance(inp, EventRecord):
        return _on_event(g, s, inp)
    if isinstance(inp, TimeoutFiring):
        return _on_timeout(g, s, inp)
    if isinstance(inp, ChainConfirmation):
        return _on_confirmation(g, s, inp)
    raise TypeError(f"unsupported input {type(inp).__name__}")


def _matching_entry(s: ROPState, e: EventRecord) -> ROPEntry | None:
    for entry in s.entries:
        if (e.op_type in entry.operations and entry.holder == e.originator
                and entry.counterparty == e.responder):
            if entry.modality is Modality.PROHIBITION:
                return None
            if entry.live_at(s.now):
                return entry
    return None


def _on_event(g: ContractGraph, s: ROPState, e: EventRecord) -> StepResult:
    if e.status not in STATUSES or g.operation(e.op_type) is None:
        return _no_change(s)
    entry = _matching_entry(s, e)
    if entry is None or entry.node != s.phase:
        return _no_change(s)
    if e.status == BIZFAIL:
        return StepResult(Verdict.COMPLIANT, (), s)

    target = g.start if s.phase == INIT else g.node(s.phase).target(e.op_type)
    consumed = tuple(x for x in s.entries if x.node == s.phase)
    effects: list[Effect] = [Revoke(x) for x in consumed]
    s2 = replace(s, entries=tuple(x for x in s.entries if x.node != s.phase))

    if g.operation(e.op_type).venue is Venue.ON_CHAIN:
        fwd = PendingForward(e.op_type, e.originator, e.responder, target)
        effects.append(ForwardOnChain(e.op_type, e))
        # the phase moves on only when the confirmation arrives
        s2 = replace(s2, pending_onchain=s2.pending_onchain + (fwd,))
        return StepResult(Verdict.COMPLIANT, tuple(effects), s2)

    more, s3 = _enter(g, s2, target)
    return StepResult(Verdict.COMPLIANT, tuple(effects + more), s3)


def due_timeouts(g: ContractGraph, s: ROPState) -> list[TimeoutFiring]:
    """Timeouts that have passed at ``s.now`` for the active node."""
    if s.ended or s.phase == INIT or not g.has_node(s.phase):
        return []
    mine = [x for x in s.entries if x.node == s.phase]
    if not mine or any(x.live_at(s.now) for x in mine):
        return []
    return [TimeoutFiring(s.phase, g.node(s.phase).timeout_name, s.now)]


def _on_timeout(g: ContractGraph, s: ROPState, t: TimeoutFiring) -> StepResult:
    if not any(d.node == t.node and d.name == t.name for d in due_timeouts(g, s)):
        return _no_change(s)
    n = g.node(s.phase)
    expired = tuple(x for x in s.entries if x.node == n.name)
    effects: list[Effect] = [Revoke(x) for x in expired]
    s2 = replace(s, entries=tuple(x for x in s.entries if x.node != n.name))
    more, s3 = _enter(g, s2, n.on_timeout)
    return StepResult(Verdict.INFO, tuple(effects + more), s3)


def _on_confirmation(g: ContractGraph, s: ROPState, c: ChainConfirmation) -> StepResult:
    for i, fwd in enumerate(s.pending_onchain):
        if fwd.op == c.op:
            break
    else:
        raise UnknownConfirmation(f"no pending on-chain {c.op!r}")
    rest = s.pending_onchain[:i] + s.pending_onchain[i + 1:]
    s2 = replace(s, pending_onchain=rest)
    more, s3 = _enter(g, s2, fwd.target)
    return StepResult(Verdict.INFO, tuple(more), s3)


def quiescent(s: ROPState) -> bool:
    """True when only rights remain, so letting the clock run ends normally."""
    if s.ended:
        return True
    if s.pending_onchain:
        return False
    return all(x.modality is not Modality.OBLIGATION for x in s.entries) and s.phase != INIT


def canonical_result(r: StepResult) -> bytes:
    return encode(r)

