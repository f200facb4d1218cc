"""Append-only, hash-chained log of checker rulings.

Each record's digest covers the previous digest and the record's canonical
bytes, so editing, dropping, inserting or reordering records breaks the
chain at the first affected position. The genesis record names the hash
function and binds the log to one contract graph.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable

from .encoding import DecodeError, decode, encode

HASH_ALG = "sha256"
MAGIC = b"HCLOG1\n"
_LEN = struct.Struct(">I")


def _digest(alg: str, data: bytes) -> str:
    return hashlib.new(alg, data).hexdigest()


@dataclass(frozen=True)
class Genesis:
    hash_alg: str
    contract: str
    contract_digest: str

    def digest(self) -> str:
        return _digest(self.hash_alg, encode(self))


@dataclass(frozen=True)
class VerdictRecord:
    seq_no: int
    kind: str  # "event" | "timeout" | "confirmation"
    input: Any
    verdict: str
    effects: tuple[str, ...]
    timestamp: int
    flags: tuple[str, ...] = ()
    detail: str = ""
    prev_hash: str = ""
    this_hash: str = ""

    def body(self) -> dict:
        """Everything the digest covers (all fields but the two hashes)."""
        return {
            "seq_no": self.seq_no,
            "kind": self.kind,
            "input": self.input,
            "verdict": self.verdict,
            "effects": list(self.effects),
            "timestamp": self.timestamp,
            "flags": list(self.flags),
            "detail": self.detail,
        }

    def body_bytes(self) -> bytes:
        return encode(self.body())


@dataclass(frozen=True)
class Ok:
    def __bool__(self):
        return True


@dataclass(frozen=True)
class TamperedAt:
    seq_no: int
    reason: str = ""

    def __bool__(self):
        return False


def chain_hash(alg: str, prev_hash: str, body: bytes) -> str:
    return _digest(alg, bytes.fromhex(prev_hash) + body)


@dataclass
class LogChain:
    genesis: Genesis
    records: list[VerdictRecord] = field(default_factory=list)

    @classmethod
    def for_contract(cls, graph, hash_alg: str = HASH_ALG) -> "LogChain":
        return cls(Genesis(hash_alg, graph.name, graph.digest()))

    @property
    def head(self) -> str:
        return self.records[-1].this_hash if self.records else self.genesis.digest()

    def append(self, kind: str, input: Any, verdict: str, effects: Iterable[str],
               timestamp: int, flags: Iterable[str] = (), detail: str = "") -> VerdictRecord:
        rec = VerdictRecord(len(self.records) + 1, kind, input, verdict, tuple(effects),
                            timestamp, tuple(flags), detail)
        prev = self.head
        rec = replace(rec, prev_hash=prev,
                      this_hash=chain_hash(self.genesis.hash_alg, prev, rec.body_bytes()))
        self.records.append(rec)
        return rec

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    # -- persistence -------------------------------------------------------

    def to_bytes(self) -> bytes:
        parts = [MAGIC, _frame(encode(self.genesis))]
        for r in self.records:
            parts.append(_frame(encode([r.body_bytes(), r.prev_hash, r.this_hash])))
        return b"".join(parts)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())


def _frame(payload: bytes) -> bytes:
    return _LEN.pack(len(payload)) + payload


def verify_log(chain: LogChain) -> Ok | TamperedAt:
    alg = chain.genesis.hash_alg
    try:
        prev = chain.genesis.digest()
    except (ValueError, TypeError) as exc:
        return TamperedAt(0, f"bad genesis: {exc}")
    for i, r in enumerate(chain.records, start=1):
        if r.seq_no != i:
            return TamperedAt(i, f"seq_no {r.seq_no} where {i} expected")
        if r.prev_hash != prev:
            return TamperedAt(i, "prev_hash does not match predecessor")
        try:
            expected = chain_hash(alg, prev, r.body_bytes())
        except (ValueError, TypeError) as exc:
            return TamperedAt(i, f"unencodable record: {exc}")
        if r.this_hash != expected:
            return TamperedAt(i, "digest mismatch")
        prev = r.this_hash
    return Ok()


@dataclass(frozen=True)
class RawRecord:
    """A persisted record: the exact body bytes plus both digests."""

    body: bytes
    prev_hash: str
    this_hash: str

    def fields(self) -> dict:
        return decode(self.body)


def _read_frames(data: bytes) -> tuple[bytes, list[bytes], str | None]:
    if not data.startswith(MAGIC):
        return b"", [], "bad magic"
    pos = len(MAGIC)
    frames = []
    while pos < len(data):
        if pos + 4 > len(data):
            frames.append(None)
            return frames[0] if frames else b"", frames[1:], "truncated length prefix"
        (n,) = _LEN.unpack_from(data, pos)
        pos += 4
        if pos + n > len(data):
            frames.append(None)
            break
        frames.append(data[pos:pos + n])
        pos += n
    if not frames:
        return b"", [], "missing genesis"
    return frames[0], frames[1:], None


def verify_bytes(data: bytes, contract_digest: str | None = None) -> Ok | TamperedAt:
    """Verify a persisted log without trusting any of its structure.

    With ``contract_digest`` the genesis must also name that contract.
    """
    genesis_raw, frames, err = _read_frames(data)
    if err == "bad magic" or err == "missing genesis" or genesis_raw is None:
        return TamperedAt(0, err or "truncated genesis")
    try:
        g = decode(genesis_raw)
        genesis = Genesis(g["hash_alg"], g["contract"], g["contract_digest"])
        if g.get("__type__") != "Genesis" or encode(genesis) != genesis_raw:
            return TamperedAt(0, "non-canonical genesis")
        prev = genesis.digest()
    except (DecodeError, KeyError, TypeError, ValueError) as exc:
        return TamperedAt(0, f"bad genesis: {exc}")
    if contract_digest is not None and genesis.contract_digest != contract_digest:
        return TamperedAt(0, "log belongs to a different contract")
    for i, frame in enumerate(frames, start=1):
        if frame is None:
            return TamperedAt(i, "truncated record")
        try:
            body, prev_hash, this_hash = decode(frame)
            fields = decode(body)
            if encode([body, prev_hash, this_hash]) != frame:
                return TamperedAt(i, "non-canonical frame")
            if fields.get("seq_no") != i:
                return TamperedAt(i, f"seq_no {fields.get('seq_no')!r} where {i} expected")
            if prev_hash != prev:
                return TamperedAt(i, "prev_hash does not match predecessor")
            if this_hash != chain_hash(genesis.hash_alg, prev, body):
                return TamperedAt(i, "digest mismatch")
        except (DecodeError, ValueError, TypeError, AttributeError) as exc:
            return TamperedAt(i, f"unreadable record: {exc}")
        prev = this_hash
    if err is not None:
        return TamperedAt(len(frames) + 1, err)
    return Ok()


def load_raw(data: bytes) -> tuple[Genesis, list[RawRecord]]:
    genesis_raw, frames, err = _read_frames(data)
    if err is not None or any(f is None for f in frames):
        raise DecodeError(err or "truncated log")
    g = decode(genesis_raw)
    genesis = Genesis(g["hash_alg"], g["contract"], g["contract_digest"])
    out = []
    for frame in frames:
        body, prev_hash, this_hash = decode(frame)
        out.append(RawRecord(body, prev_hash, this_hash))
    return genesis, out


def render_value(v: Any) -> str:
    if isinstance(v, dict):
        name = v.get("__type__")
        inner = ", ".join(f"{k}={render_value(x)}" for k, x in v.items() if k != "__type__")
        return f"{name}({inner})" if name else "{" + inner + "}"
    if isinstance(v, list):
        return "[" + ", ".join(render_value(x) for x in v) + "]"
    if v is None:
        return "-"
    return str(v)


def dump_text(data: bytes) -> str:
    """One line per record: seq, day, kind, verdict, input, effects, digest prefix."""
    genesis, records = load_raw(data)
    lines = [f"# genesis alg={genesis.hash_alg} contract={genesis.contract} "
             f"digest={genesis.contract_digest}"]
    for r in records:
        f = r.fields()
        flags = ",".join(f["flags"]) or "-"
        lines.append("\t".join([
            str(f["seq_no"]), str(f["timestamp"]), f["kind"], f["verdict"],
            render_value(f["input"]), "; ".join(f["effects"]) or "-", flags,
            r.this_hash[:16],
        ]))
    return "\n".join(lines) + "\n"


def dump_chain(chain: LogChain) -> str:
    return dump_text(chain.to_bytes())
