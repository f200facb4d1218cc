"""Event files and verdict bodies.

Event grammar, one tag per line, UTF-8, LF endings::

    <event>
        <originator>buyer</originator>
        <responder>store</responder>
        <type>BuyReq</type>
        <status>success</status>
    </event>

``origin``/``respond`` are accepted as spellings of ``originator``/``responder``.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass
from xml.sax.saxutils import escape

ALIASES = {"origin": "originator", "respond": "responder"}
FIELDS = ("originator", "responder", "type", "status")


class MalformedEventFile(ValueError):
    pass


@dataclass(frozen=True)
class RawEvent:
    """Parsed but not yet validated: status may be success, bizfail or timeout."""

    originator: str
    responder: str
    type: str
    status: str


def render_event(ev: RawEvent) -> str:
    lines = ["<event>"]
    for name in FIELDS:
        lines.append(f"    <{name}>{escape(getattr(ev, name))}</{name}>")
    lines.append("</event>")
    return "\n".join(lines) + "\n"


def parse_event(text: str | bytes) -> RawEvent:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise MalformedEventFile(f"not well-formed XML: {exc}") from None
    if root.tag != "event":
        raise MalformedEventFile(f"root element must be <event>, got <{root.tag}>")
    seen: dict[str, str] = {}
    for child in root:
        name = ALIASES.get(child.tag, child.tag)
        if name not in FIELDS:
            raise MalformedEventFile(f"unexpected element <{child.tag}>")
        if name in seen:
            raise MalformedEventFile(f"duplicate element <{child.tag}>")
        if len(child):
            raise MalformedEventFile(f"<{child.tag}> must contain text only")
        seen[name] = (child.text or "").strip()
    missing = [f for f in FIELDS if f not in seen]
    if missing:
        raise MalformedEventFile(f"missing elements: {', '.join(missing)}")
    return RawEvent(**seen)


def verdict_body(compliant: bool) -> str:
    """The result element returned for every ruled event (no trailing newline)."""
    value = "true" if compliant else "false"
    return f"<result>\n    <contractCompliant>{value}</contractCompliant>\n</result>"


def parse_verdict(body: str) -> bool:
    root = ET.fromstring(body)
    node = root.find("contractCompliant")
    if root.tag != "result" or node is None or node.text not in ("true", "false"):
        raise ValueError(f"not a verdict body: {body!r}")
    return node.text == "true"
