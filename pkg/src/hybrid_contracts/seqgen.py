"""Exhaustive execution-sequence generation over acyclic contract graphs.

At every OR-exec node an attempt picks one of the node's choices and either
succeeds (the contract moves on) or fails with a business failure (the node
is retried). Failures share one counter per node. Once the counter reaches
the retry bound only a successful attempt or the node's timeout remain.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import contract_model as cm
from .contract_model import (BIZFAIL, SUCCESS, ChainConfirmation, Completion, ContractGraph,
                             EventRecord, ForwardOnChain, Modality, TimeoutFiring, Verdict)
from .eventxml import MalformedEventFile, RawEvent, parse_event, render_event

TIMEOUT = "timeout"
STEP_STATUSES = (SUCCESS, BIZFAIL, TIMEOUT)

EXPLICIT = "explicit"  # right expiry written out as <choices>TO
IMPLICIT = "implicit"  # right expiry leaves no token; the sequence just stops
MERGED = "merged"  # as implicit, and expiry after failed attempts is the same as never trying
CONVENTIONS = (EXPLICIT, IMPLICIT, MERGED)

# Smallest shared-counter bound admitting two failures before success at a
# node. See derive_retry_bound for why it is not derived from a target count.
DEFAULT_RETRY_BOUND = 2
SEARCH_RANGE = range(1, 7)


class SeqgenError(Exception):
    pass


class IllegalSequence(SeqgenError):
    pass


class UnsupportedGraph(SeqgenError):
    pass


class NoUniqueN(SeqgenError):
    def __init__(self, target: int, counts: dict[int, int]):
        table = ", ".join(f"N={n}: {c}" for n, c in counts.items())
        super().__init__(f"no unique retry bound gives {target} sequences ({table})")
        self.target = target
        self.counts = counts


@dataclass(frozen=True)
class FailureModel:
    max_bizfails: int = 0  # 0 means no business failures at all

    def __post_init__(self):
        if self.max_bizfails < 0:
            raise ValueError("max_bizfails must be >= 0")

    @classmethod
    def none(cls) -> "FailureModel":
        return cls(0)

    @classmethod
    def bizfail(cls, n: int) -> "FailureModel":
        if n < 1:
            raise ValueError("Bizfail needs N >= 1")
        return cls(n)

    @property
    def label(self) -> str:
        return "NoFailures" if self.max_bizfails == 0 else f"Bizfail({self.max_bizfails})"


def normalize_token(name: str) -> str:
    # "RejConfTo" and "RejConfTO" name the same timeout
    return name[:-2] + "TO" if name.endswith("To") and len(name) > 2 else name


@dataclass(frozen=True, order=True)
class Step:
    name: str
    status: str = SUCCESS

    def __post_init__(self):
        if self.status not in STEP_STATUSES:
            raise ValueError(f"bad step status {self.status!r}")
        if not self.name:
            raise ValueError("step name must be non-empty")

    @property
    def is_timeout(self) -> bool:
        return self.status == TIMEOUT

    def token(self) -> str:
        if self.is_timeout:
            return self.name
        return f"{self.name}({'S' if self.status == SUCCESS else 'BF'})"


_TOKEN = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\(\s*(S|BF)\s*\))?\s*$")


def parse_step(text: str, timeouts: Iterable[str] = ()) -> Step:
    """``Pay(BF)``, ``Pay(S)``, ``Pay`` or a timeout name such as ``PayCancTo``."""
    m = _TOKEN.match(text)
    if not m:
        raise ValueError(f"cannot parse step {text!r}")
    name, mark = m.groups()
    norm = normalize_token(name)
    if mark is None and (norm in set(timeouts) or (norm != name) or norm.endswith("TO")):
        return Step(norm, TIMEOUT)
    return Step(name, BIZFAIL if mark == "BF" else SUCCESS)


def parse_steps(text: str, timeouts: Iterable[str] = ()) -> tuple[Step, ...]:
    """Parse ``{BuyReq(S), Rej(BF), ...}`` or ``BuyReq,Rej``."""
    body = text.strip().strip("{}")
    timeouts = tuple(timeouts)
    return tuple(parse_step(t, timeouts) for t in body.split(",") if t.strip())


@dataclass(frozen=True)
class ExecutionSequence:
    steps: tuple[Step, ...]
    completion: Completion

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        timeouts = [i for i, s in enumerate(self.steps) if s.is_timeout]
        if len(timeouts) > 1 or (timeouts and timeouts[0] != len(self.steps) - 1):
            raise ValueError("at most one timeout step, and only as the final step")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.steps)

    def sort_key(self) -> tuple:
        return tuple((s.name, s.status) for s in self.steps)

    def render(self) -> str:
        return "{" + ", ".join(s.token() for s in self.steps) + "}"

    @property
    def has_bizfail(self) -> bool:
        return any(s.status == BIZFAIL for s in self.steps)


@dataclass(frozen=True)
class SequenceSet:
    contract: str
    graph_digest: str
    sequences: tuple[ExecutionSequence, ...] = field(default=())

    def __len__(self):
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    def __getitem__(self, i):
        return self.sequences[i]

    def find(self, steps: Sequence[Step]) -> int | None:
        """1-based index of the sequence with exactly these steps."""
        steps = tuple(steps)
        for i, s in enumerate(self.sequences, start=1):
            if s.steps == steps:
                return i
        return None


# ---------------------------------------------------------------------------
# enumeration

def _check_enumerable(g: ContractGraph) -> None:
    report = cm.validate_graph(g)
    if not report.ok:
        raise cm.InvalidGraph(report)
    if not cm.is_acyclic(g):
        raise UnsupportedGraph("cyclic graphs have unboundedly many sequences")
    for n in g.nodes:
        if n.on_timeout not in cm.ENDS:
            raise UnsupportedGraph(f"timeout of {n.name} must lead to an end marker")


def _implicit_expiry(n, convention: str) -> bool:
    return (convention != EXPLICIT and n.modality is Modality.RIGHT
            and n.on_timeout == cm.NORMAL_END)


def enumerate_sequences(g: ContractGraph, fm: FailureModel | None = None,
                        convention: str = EXPLICIT) -> SequenceSet:
    fm = fm or FailureModel.none()
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    _check_enumerable(g)
    out: list[ExecutionSequence] = []

    def at(target: str, prefix: tuple[Step, ...]) -> None:
        if target in cm.ENDS:
            out.append(ExecutionSequence(prefix, cm.completion_of(target)))
        else:
            attempt(g.node(target), 0, prefix)

    def attempt(n, fails: int, prefix: tuple[Step, ...]) -> None:
        for op in n.choices:
            at(n.target(op), prefix + (Step(op, SUCCESS),))
            if fails < fm.max_bizfails:
                attempt(n, fails + 1, prefix + (Step(op, BIZFAIL),))
        if _implicit_expiry(n, convention):
            if convention == IMPLICIT or fails == 0:
                out.append(ExecutionSequence(prefix, n.timeout_completion))
        else:
            out.append(ExecutionSequence(prefix + (Step(n.timeout_name, TIMEOUT),),
                                         n.timeout_completion))

    at(g.start, (Step(g.initial_op, SUCCESS),))
    out.sort(key=ExecutionSequence.sort_key)
    return SequenceSet(g.name, g.digest(), tuple(out))


def count_sequences(g: ContractGraph, n: int, convention: str = EXPLICIT) -> int:
    fm = FailureModel.bizfail(n) if n else FailureModel.none()
    return len(enumerate_sequences(g, fm, convention))


def derive_retry_bound(g: ContractGraph, target_count: int,
                       search: Iterable[int] = SEARCH_RANGE,
                       convention: str = EXPLICIT) -> int:
    if target_count <= 0:
        raise ValueError("target_count must be positive")
    counts = {n: count_sequences(g, n, convention) for n in search}
    hits = [n for n, c in counts.items() if c == target_count]
    if len(hits) != 1:
        raise NoUniqueN(target_count, counts)
    return hits[0]


# ---------------------------------------------------------------------------
# symbolic replay

@dataclass(frozen=True)
class ReplayStep:
    step: Step
    input: cm.Input
    result: cm.StepResult


def _event_for(g: ContractGraph, s: cm.ROPState, step: Step) -> EventRecord:
    for e in s.entries:
        if e.node == s.phase and step.name in e.operations:
            return EventRecord(e.holder, e.counterparty, step.name, step.status)
    orig, resp = g.roles(step.name)
    return EventRecord(orig, resp, step.name, step.status)


def expiry_day(s: cm.ROPState) -> int | None:
    """First day on which the active node's entries have all expired."""
    mine = [e.expires_at for e in s.entries if e.node == s.phase]
    if not mine or any(x is None for x in mine):
        return None
    return max(mine) + 1


def symbolic_replay(g: ContractGraph, seq: ExecutionSequence | Sequence[Step],
                    on_forward: Callable[[ForwardOnChain], bool] = lambda f: True
                    ) -> tuple[cm.ROPState, list[ReplayStep]]:
    """Drive ``seq`` through :func:`step` with immediate confirmations.

    Raises :class:`IllegalSequence` at the first step that is not accepted.
    """
    steps = seq.steps if isinstance(seq, ExecutionSequence) else tuple(seq)
    s = cm.initial_state(g)
    trace: list[ReplayStep] = []
    tx = 0
    for i, st in enumerate(steps, start=1):
        if s.ended:
            raise IllegalSequence(f"step {i} {st.token()} after {s.phase}")
        if st.is_timeout:
            day = expiry_day(s)
            if day is None:
                raise IllegalSequence(f"step {i} {st.token()}: nothing can time out")
            s = cm.ROPState(s.entries, max(s.now, day), s.phase, s.pending_onchain)
            due = [t for t in cm.due_timeouts(g, s) if t.name == normalize_token(st.name)]
            if not due:
                raise IllegalSequence(f"step {i} {st.token()} is not the due timeout")
            r = cm.step(g, s, due[0])
            trace.append(ReplayStep(st, due[0], r))
            s = r.next_state
            continue
        ev = _event_for(g, s, st)
        r = cm.step(g, s, ev)
        trace.append(ReplayStep(st, ev, r))
        if r.verdict is not Verdict.COMPLIANT:
            raise IllegalSequence(f"step {i} {st.token()} is not compliant in phase {s.phase}")
        s = r.next_state
        for eff in r.effects:
            if isinstance(eff, ForwardOnChain) and on_forward(eff):
                tx += 1
                conf = ChainConfirmation(eff.op, tx)
                rc = cm.step(g, s, conf)
                trace.append(ReplayStep(st, conf, rc))
                s = rc.next_state
    return s, trace


def classify(seq: ExecutionSequence | Sequence[Step], g: ContractGraph) -> Completion:
    s, _ = symbolic_replay(g, seq)
    if s.ended:
        return s.completion
    if cm.quiescent(s) and g.has_node(s.phase):
        n = g.node(s.phase)
        if n.modality is Modality.RIGHT and n.on_timeout == cm.NORMAL_END:
            return Completion.NORMAL
    raise IllegalSequence(f"sequence stops in phase {s.phase} without completing")


# ---------------------------------------------------------------------------
# reference labels

_NAMED_SEQUENCES = {
    "seq1": "{BuyReq, Rej}",
    "seq2": "{BuyReq, Conf, Canc}",
    "seq3": "{BuyReq, Conf, Pay}",
    "seq4": "{BuyReq, RejConfTo}",
    "seq5": "{BuyReq, Conf, PayCancTo}",
    "seq6": "{BuyReq, Conf, Pay, GetVou}",
    "seq130": "{BuyReq(S), Rej(BF), Conf(BF), Conf(S), Pay(BF), Canc(BF), Pay(S), GetVou(S)}",
    "seq150": "{BuyReq(S), Rej(BF), Conf(BF), Conf(S), Pay(BF), Canc(BF), PayCancTO}",
}


def reference_labels() -> dict[str, tuple[Step, ...]]:
    """Named sequences of the data-selling contract, keyed seq1..seq6, seq130, seq150."""
    return {k: parse_steps(v) for k, v in _NAMED_SEQUENCES.items()}


def right_expiry_names(g: ContractGraph) -> set[str]:
    return {n.timeout_name for n in g.nodes
            if n.modality is Modality.RIGHT and n.on_timeout == cm.NORMAL_END}


def short_steps(g: ContractGraph, seq: ExecutionSequence) -> tuple[Step, ...]:
    """Steps with any trailing right-expiry token dropped."""
    steps = seq.steps
    if steps and steps[-1].is_timeout and steps[-1].name in right_expiry_names(g):
        steps = steps[:-1]
    return steps


def resolve_label(sset: SequenceSet, g: ContractGraph, label: str) -> int:
    """1-based index of a named or numbered sequence in ``sset``."""
    if label.isdigit():
        i = int(label)
        if not 1 <= i <= len(sset):
            raise KeyError(f"sequence {i} out of range 1..{len(sset)}")
        return i
    wanted = reference_labels().get(label)
    if wanted is None:
        raise KeyError(f"unknown sequence label {label!r}")
    exact = sset.find(wanted)
    if exact is not None:
        return exact
    for i, s in enumerate(sset, start=1):
        if short_steps(g, s) == wanted:
            return i
    raise KeyError(f"{label} is not in this sequence set")


# ---------------------------------------------------------------------------
# folder export / import

_SEQ_DIR = re.compile(r"^(?P<contract>.+)\.pmlExecSeq(?P<i>[1-9][0-9]*)$")
_EVENT_FILE = re.compile(r"^event(?P<j>[1-9][0-9]*)\.xml$")


def _raw_steps(g: ContractGraph, seq: ExecutionSequence) -> list[RawEvent]:
    s = cm.initial_state(g)
    out = []
    for st in seq.steps:
        if st.is_timeout:
            n = g.node(s.phase)
            out.append(RawEvent(n.holder, n.counterparty, st.name, TIMEOUT))
            break
        ev = _event_for(g, s, st)
        out.append(RawEvent(ev.originator, ev.responder, ev.op_type, ev.status))
        r = cm.step(g, s, ev)
        s = r.next_state
        for eff in r.effects:
            if isinstance(eff, ForwardOnChain):
                s = cm.step(g, s, ChainConfirmation(eff.op, 0)).next_state
    return out


def export_sequences(sset: SequenceSet, g: ContractGraph, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, seq in enumerate(sset, start=1):
        d = out / f"{sset.contract}.pmlExecSeq{i}"
        d.mkdir(exist_ok=True)
        for stale in d.glob("event*.xml"):
            stale.unlink()
        for j, raw in enumerate(_raw_steps(g, seq), start=1):
            (d / f"event{j}.xml").write_bytes(render_event(raw).encode("utf-8"))
        written.append(d)
    return written


def read_sequence_dir(d: str | Path) -> list[RawEvent]:
    d = Path(d)
    files = []
    for p in d.iterdir():
        m = _EVENT_FILE.match(p.name)
        if m:
            files.append((int(m["j"]), p))
    files.sort()
    if [j for j, _ in files] != list(range(1, len(files) + 1)):
        raise MalformedEventFile(f"{d}: event files must be numbered 1..n without gaps")
    out = []
    for _, p in files:
        try:
            out.append(parse_event(p.read_bytes()))
        except MalformedEventFile as exc:
            raise MalformedEventFile(f"{p}: {exc}") from None
    return out


def raw_to_steps(raws: Iterable[RawEvent]) -> tuple[Step, ...]:
    steps = []
    for r in raws:
        if r.status == TIMEOUT or (r.status not in (SUCCESS, BIZFAIL)
                                   and normalize_token(r.type) != r.type):
            steps.append(Step(normalize_token(r.type), TIMEOUT))
        elif r.status in (SUCCESS, BIZFAIL):
            steps.append(Step(r.type, r.status))
        else:
            raise MalformedEventFile(f"bad status {r.status!r} for {r.type}")
    return tuple(steps)


def list_sequence_dirs(root: str | Path) -> list[tuple[str, int, Path]]:
    found = []
    for p in Path(root).iterdir():
        m = _SEQ_DIR.match(p.name)
        if m and p.is_dir():
            found.append((m["contract"], int(m["i"]), p))
    found.sort(key=lambda t: (t[0], t[1]))
    return found


def import_sequences(root: str | Path, g: ContractGraph) -> SequenceSet:
    dirs = [t for t in list_sequence_dirs(root) if t[0] == g.name]
    if not dirs:
        raise FileNotFoundError(f"no {g.name}.pmlExecSeq<i> folders under {root}")
    seqs = []
    for _, _, d in dirs:
        steps = raw_to_steps(read_sequence_dir(d))
        seqs.append(ExecutionSequence(steps, classify(steps, g)))
    return SequenceSet(g.name, g.digest(), tuple(seqs))


# ---------------------------------------------------------------------------
# contract registry

CONTRACTS: dict[str, Callable[[], ContractGraph]] = {
    "dataseller": cm.build_reference_contract,
}


def load_contract(name: str) -> ContractGraph:
    try:
        return CONTRACTS[name]()
    except KeyError:
        raise KeyError(f"unknown contract {name!r}; known: {', '.join(sorted(CONTRACTS))}") from None
