"""In-process stand-in for the on-chain ``collectPayment`` contract.

Transactions are confirmed after a configurable number of ticks. The tick
clock is independent of the checker's day clock; whoever drives the
simulation decides how the two relate.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

COLLECT_PAYMENT = "collectPayment"
KNOWN_CODE = (COLLECT_PAYMENT,)


class ChainError(Exception):
    pass


class UnknownCode(ChainError):
    pass


class NoSuchContract(ChainError):
    pass


def submit_payment_result(pay: int) -> str:
    if pay < 0:
        raise ValueError("payment must be non-negative")
    return f"{pay}Received"


def receipt_string(tx_num: int) -> str:
    if tx_num < 1:
        raise ValueError("transaction numbers start at 1")
    return f"Receipt 4 Tx{tx_num}"


@dataclass(frozen=True)
class LatencyPolicy:
    """How many ticks each transaction waits before confirmation.

    ``None`` anywhere means the confirmation never arrives.
    """

    mode: str = "immediate"
    ticks: int | None = 0
    script: tuple[int | None, ...] = ()

    @classmethod
    def immediate(cls) -> "LatencyPolicy":
        return cls("immediate", 0)

    @classmethod
    def fixed(cls, n: int) -> "LatencyPolicy":
        if n < 0:
            raise ValueError("latency must be >= 0")
        return cls("fixed", n)

    @classmethod
    def scripted(cls, ticks: Sequence[int | None]) -> "LatencyPolicy":
        ticks = tuple(ticks)
        if not ticks or any(t is not None and t < 0 for t in ticks):
            raise ValueError("scripted latencies must be a non-empty list of ticks >= 0")
        return cls("scripted", None, ticks)

    @classmethod
    def never(cls) -> "LatencyPolicy":
        return cls("never", None)

    @classmethod
    def parse(cls, text: str) -> "LatencyPolicy":
        """Accepts ``0``/``immediate``, an integer, ``never`` or ``a,b,c``."""
        text = text.strip().lower()
        if text in ("0", "immediate"):
            return cls.immediate()
        if text in ("never", "inf"):
            return cls.never()
        if "," in text or text.startswith("script:"):
            body = text.removeprefix("script:")
            vals = [None if v.strip() in ("never", "inf") else int(v) for v in body.split(",") if v.strip()]
            return cls.scripted(vals)
        return cls.fixed(int(text))

    def latency_for(self, index: int) -> int | None:
        """Latency of the ``index``-th transaction (0-based)."""
        if self.mode == "scripted":
            return self.script[min(index, len(self.script) - 1)]
        return self.ticks

    def describe(self) -> str:
        if self.mode == "scripted":
            return ",".join("never" if t is None else str(t) for t in self.script)
        if self.mode == "never":
            return "never"
        return str(self.ticks)


@dataclass
class PendingTx:
    tx_num: int
    op: str
    payload: int
    result: str
    submitted_at: int
    ready_at: int | None
    delivered_at: int | None = None


@dataclass(frozen=True)
class Confirmation:
    address: str
    tx_num: int
    op: str
    result: str
    delivered_at: int


@dataclass
class DeployedContract:
    address: str
    code_id: str
    latency: LatencyPolicy
    txs: list[PendingTx] = field(default_factory=list)
    listener: Callable[[Confirmation], None] | None = None

    @property
    def pending(self) -> list[PendingTx]:
        return [t for t in self.txs if t.delivered_at is None]


class ChainSimulator:
    """Single-threaded simulator; only :meth:`tick` moves time."""

    def __init__(self, latency: LatencyPolicy | None = None):
        self.default_latency = latency or LatencyPolicy.immediate()
        self.tick_count = 0
        self._contracts: dict[str, DeployedContract] = {}
        self._ids = itertools.count(1)

    def deploy(self, code_id: str = COLLECT_PAYMENT, latency: LatencyPolicy | None = None) -> str:
        if code_id not in KNOWN_CODE:
            raise UnknownCode(code_id)
        address = f"0x{next(self._ids):040x}"
        self._contracts[address] = DeployedContract(address, code_id, latency or self.default_latency)
        return address

    def contract(self, address: str) -> DeployedContract:
        try:
            return self._contracts[address]
        except KeyError:
            raise NoSuchContract(address) from None

    def set_listener(self, address: str, listener: Callable[[Confirmation], None]) -> None:
        self.contract(address).listener = listener

    def submit_payment(self, address: str, pay: int, op: str = "Pay") -> tuple[int, str]:
        c = self.contract(address)
        result = submit_payment_result(pay)
        index = len(c.txs)
        lat = c.latency.latency_for(index)
        ready = None if lat is None else self.tick_count + lat
        tx = PendingTx(index + 1, op, pay, result, self.tick_count, ready)
        c.txs.append(tx)
        self._deliver(c)
        return tx.tx_num, result

    def get_receipt(self, address: str, tx_num: int) -> str:
        self.contract(address)
        return receipt_string(tx_num)

    def tick(self, n: int = 1) -> list[Confirmation]:
        if n < 1:
            raise ValueError("tick count must be >= 1")
        out: list[Confirmation] = []
        for _ in range(n):
            self.tick_count += 1
            for c in self._contracts.values():
                out.extend(self._deliver(c))
        return out

    def _deliver(self, c: DeployedContract) -> list[Confirmation]:
        # in tx_num order; a later tx waits for every earlier one
        out = []
        for tx in c.txs:
            if tx.delivered_at is not None:
                continue
            if tx.ready_at is None or tx.ready_at > self.tick_count:
                break
            tx.delivered_at = self.tick_count
            conf = Confirmation(c.address, tx.tx_num, tx.op, tx.result, self.tick_count)
            out.append(conf)
            if c.listener is not None:
                c.listener(conf)
        return out

    def dump(self, address: str) -> str:
        lines = []
        for tx in self.contract(address).txs:
            ready = "never" if tx.ready_at is None else str(tx.ready_at)
            delivered = "-" if tx.delivered_at is None else str(tx.delivered_at)
            lines.append(f"{tx.tx_num}\t{ready}\t{delivered}")
        return "\n".join(lines) + ("\n" if lines else "")
