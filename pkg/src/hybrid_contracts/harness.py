"""Replay exported sequences against a checker and report what came back.

Time model: between two consecutive events the chain advances ``gap``
ticks; a timeout step advances the checker clock day by day according to
the clock schedule, with one chain tick per day.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from . import contract_model as cm
from .chain_sim import LatencyPolicy
from .checker import Checker, CheckerConfig, ContractEnded
from .contract_model import ContractGraph, EventRecord, Verdict
from .eventxml import RawEvent, parse_verdict, render_event, verdict_body
from .seqgen import TIMEOUT, classify, raw_to_steps

REQ_BEGIN = "-------- Begin Request to CCC service ----------"
REQ_END = "-------- End Request to CCC service ----------"
RESP_BEGIN = "-------- Begin Response from CCC service ----------"
RESP_END = "-------- End Response from CCC service ----------"

EXIT_OK, EXIT_MISMATCH, EXIT_ERROR = 0, 1, 2


def default_schedule(g: ContractGraph) -> dict[str, int]:
    """One day past each node's deadline."""
    return {n.timeout_name: n.deadline + 1 for n in g.nodes}


@dataclass(frozen=True)
class ReplayPlan:
    source: Path | None = None
    target: str = "inprocess"  # or a base URL
    latency: LatencyPolicy = LatencyPolicy.immediate()
    schedule: dict[str, int] = field(default_factory=dict)
    gap: int = 1
    retry_ticks: int | None = None  # re-submit a denied event after this many ticks

    def check_schedule(self, names) -> None:
        missing = sorted(set(names) - set(self.schedule))
        if missing:
            raise ValueError(f"clock schedule has no entry for {', '.join(missing)}")


class Target(Protocol):
    def submit(self, e: EventRecord) -> bool: ...
    def advance(self, days: int) -> list[str]: ...
    def tick(self, n: int) -> None: ...
    def phase(self) -> str: ...


class InProcessTarget:
    def __init__(self, g: ContractGraph, latency: LatencyPolicy, pay_amount: int = 100):
        self.checker = Checker(CheckerConfig(g, latency, pay_amount))

    def submit(self, e: EventRecord) -> bool:
        return self.checker.submit_event(e).contract_compliant

    def advance(self, days: int) -> list[str]:
        return [t.name for t in self.checker.advance_clock(days)]

    def tick(self, n: int) -> None:
        self.checker.chain.tick(n)

    def phase(self) -> str:
        return self.checker.get_state().phase


class TargetError(Exception):
    pass


class HttpTarget:
    """Talks to the verdict service; ``client`` is any httpx-style client."""

    def __init__(self, client, contract: str, latency: LatencyPolicy):
        self.client = client
        r = client.post("/contracts", json={"contract": contract, "latency": latency.describe()})
        if r.status_code != 201:
            raise TargetError(f"create failed: {r.status_code} {r.text}")
        self.id = r.json()["id"]

    def _url(self, tail: str) -> str:
        return f"/contracts/{self.id}/{tail}"

    def submit(self, e: EventRecord) -> bool:
        raw = RawEvent(e.originator, e.responder, e.op_type, e.status)
        r = self.client.post(self._url("events"), content=render_event(raw),
                             headers={"content-type": "application/xml"})
        if r.status_code == 409:
            raise ContractEnded(r.text)
        if r.status_code != 200:
            raise TargetError(f"event rejected: {r.status_code} {r.text}")
        return parse_verdict(r.text)

    def advance(self, days: int) -> list[str]:
        r = self.client.post(self._url("clock"), json={"days": days})
        if r.status_code != 200:
            raise TargetError(f"clock failed: {r.status_code} {r.text}")
        return r.json()["fired"]

    def tick(self, n: int) -> None:
        r = self.client.post(self._url("chain/tick"), json={"ticks": n})
        if r.status_code != 200:
            raise TargetError(f"tick failed: {r.status_code} {r.text}")

    def phase(self) -> str:
        return self.client.get(self._url("state")).json()["phase"]


@dataclass
class Exchange:
    index: int  # 1-based step number
    request: str
    verdict: bool | None = None  # None for clock advances and refused events
    fired: tuple[str, ...] = ()
    note: str = ""
    retry: bool = False


@dataclass
class Transcript:
    label: str
    exchanges: list[Exchange] = field(default_factory=list)
    expected_completion: str = ""
    observed_phase: str = ""
    divergences: list[str] = field(default_factory=list)

    @property
    def verdicts(self) -> list[bool]:
        return [x.verdict for x in self.exchanges if x.verdict is not None and not x.retry]

    @property
    def ok(self) -> bool:
        return not self.divergences

    def render(self) -> str:
        blocks = []
        for x in self.exchanges:
            if x.verdict is None:
                blocks.append(f"# {x.request}: {x.note}")
                continue
            blocks.append("\n".join([
                REQ_BEGIN, x.request, REQ_END, "",
                RESP_BEGIN, verdict_body(x.verdict), RESP_END,
            ]))
        summary = (f"# {self.label}: phase {self.observed_phase}, expected "
                   f"{self.expected_completion}, "
                   + ("no divergence" if self.ok else "divergent: " + "; ".join(self.divergences)))
        return "\n\n\n".join(blocks + [summary]) + "\n"


_END_PHASE = {cm.Completion.NORMAL: cm.NORMAL_END, cm.Completion.ABNORMAL: cm.ABNORMAL_END}


def replay_events(target: Target, g: ContractGraph, raws: list[RawEvent], plan: ReplayPlan,
                  label: str = "") -> Transcript:
    steps = raw_to_steps(raws)
    plan.check_schedule(s.name for s in steps if s.is_timeout)
    expected = classify(steps, g)
    tr = Transcript(label, expected_completion=expected.value)
    for j, raw in enumerate(raws, start=1):
        st = steps[j - 1]
        if st.is_timeout:
            fired: list[str] = []
            days = plan.schedule[st.name]
            for _ in range(days):
                target.tick(1)
                fired += target.advance(1)
            tr.exchanges.append(Exchange(j, f"advance {days} days", None, tuple(fired),
                                         note="fired " + (", ".join(fired) or "nothing")))
            if st.name not in fired:
                tr.divergences.append(f"step {j}: {st.name} did not fire")
            continue
        if j > 1 and plan.gap:
            target.tick(plan.gap)
        e = EventRecord(raw.originator, raw.responder, raw.type, raw.status)
        try:
            ok = target.submit(e)
        except ContractEnded:
            tr.exchanges.append(Exchange(j, e.business_event(), None, note="refused: contract ended"))
            tr.divergences.append(f"step {j}: {e.op_type} refused after end")
            continue
        tr.exchanges.append(Exchange(j, e.business_event(), ok))
        if not ok and plan.retry_ticks is not None:
            target.tick(plan.retry_ticks)
            ok = target.submit(e)
            tr.exchanges.append(Exchange(j, e.business_event(), ok, retry=True))
            if ok:
                continue
        if not ok:
            tr.divergences.append(f"step {j}: {e.op_type} ruled non-compliant")
    tr.observed_phase = target.phase()
    if tr.observed_phase != _END_PHASE[expected] and not _open_right(g, tr.observed_phase, expected):
        tr.divergences.append(f"ended in {tr.observed_phase}, expected {expected.value}")
    return tr


def _open_right(g: ContractGraph, phase: str, expected: cm.Completion) -> bool:
    # a sequence may stop while only a right is held; that counts as normal
    if expected is not cm.Completion.NORMAL or not g.has_node(phase):
        return False
    n = g.node(phase)
    return n.modality is cm.Modality.RIGHT and n.on_timeout == cm.NORMAL_END


# ---------------------------------------------------------------------------
# race report

@dataclass(frozen=True)
class RaceRow:
    index: int
    op: str
    verdicts: tuple[str, ...]  # one per latency: true, false, refused or -

    @property
    def divergent(self) -> bool:
        seen = {v for v in self.verdicts if v != "-"}
        return len(seen) > 1


def _cell(v: bool | None) -> str:
    return "-" if v is None else ("true" if v else "false")


def race_report(g: ContractGraph, raws: list[RawEvent], latencies: list[LatencyPolicy],
                plan: ReplayPlan) -> tuple[list[RaceRow], list[Transcript]]:
    transcripts = []
    for lat in latencies:
        p = ReplayPlan(plan.source, plan.target, lat, plan.schedule, plan.gap, None)
        transcripts.append(replay_events(InProcessTarget(g, lat), g, raws, p,
                                         label=f"latency {lat.describe()}"))
    rows = []
    for j, raw in enumerate(raws, start=1):
        if raw.status == TIMEOUT:
            continue
        cells = []
        for tr in transcripts:
            x = next((x for x in tr.exchanges if x.index == j and not x.retry), None)
            if x is None:
                cells.append("-")
            elif x.verdict is None:
                cells.append("refused")
            else:
                cells.append(_cell(x.verdict))
        rows.append(RaceRow(j, raw.type, tuple(cells)))
    return rows, transcripts


def race_table(rows: list[RaceRow], latencies: list[LatencyPolicy], sep: str = "\t") -> str:
    head = ["step", "op"] + [f"latency={l.describe()}" for l in latencies] + ["divergent"]
    lines = [sep.join(head)]
    for r in rows:
        lines.append(sep.join([str(r.index), r.op, *r.verdicts, "yes" if r.divergent else "no"]))
    return "\n".join(lines) + "\n"


def expected_verdicts(raws: list[RawEvent]) -> list[bool]:
    return [True for r in raws if r.status != TIMEOUT]


def load_raws(path: str | Path) -> list[RawEvent]:
    from .seqgen import read_sequence_dir
    return read_sequence_dir(path)
