"""Verdict-gated access to a stub data repository."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

from .contract_model import EventRecord

DATA_ITEMS = {"D1": "personal data item 1", "D2": "personal data item 2",
              "D3": "personal data item 3"}


class GatewayError(Exception):
    pass


class Ruler(Protocol):
    def rule(self, e: EventRecord) -> bool: ...


@dataclass(frozen=True)
class GatewayResult:
    granted: bool
    item: str | None = None
    data: str | None = None


class Gateway:
    """Opens for one request at a time, only on a compliant ruling."""

    def __init__(self, ruler: Ruler, repository: dict[str, str] | None = None):
        self.ruler = ruler
        self.repository = dict(DATA_ITEMS if repository is None else repository)

    def request(self, e: EventRecord, item: str = "D1") -> GatewayResult:
        try:
            ok = self.ruler.rule(e)
        except (OSError, ConnectionError) as exc:
            raise GatewayError(f"checker unreachable: {exc}") from exc
        if not ok:
            return GatewayResult(False)
        if item not in self.repository:
            raise GatewayError(f"no such data item {item!r}")
        return GatewayResult(True, item, self.repository[item])
