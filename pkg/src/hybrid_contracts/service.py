"""HTTP facade over a registry of checker instances."""

from __future__ import annotations

import sys
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Body, FastAPI, HTTPException, Request, Response

from . import contract_model as cm
from .audit_log import dump_chain
from .chain_sim import LatencyPolicy
from .checker import Checker, CheckerConfig, ContractEnded
from .eventxml import MalformedEventFile, parse_event, verdict_body
from .seqgen import load_contract

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

XML = "application/xml"


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    contract: str = "dataseller"
    latency: str = "0"
    pay_amount: int = 100

    @classmethod
    def load(cls, path: str | Path | None = None, **overrides) -> "ServiceConfig":
        values: dict = {}
        if path is not None:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
            values.update(data.get("service", data))
        values.update({k: v for k, v in overrides.items() if v is not None})
        known = set(cls.__dataclass_fields__)
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls(**values)
        LatencyPolicy.parse(str(cfg.latency))
        load_contract(cfg.contract)
        return cfg


@dataclass
class Registry:
    config: ServiceConfig
    instances: dict[str, Checker] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def create(self, contract: str | None, latency: str | None) -> str:
        g = load_contract(contract or self.config.contract)
        lat = LatencyPolicy.parse(str(latency if latency is not None else self.config.latency))
        checker = Checker(CheckerConfig(g, lat, self.config.pay_amount))
        iid = uuid.uuid4().hex[:16]
        with self.lock:
            self.instances[iid] = checker
        return iid

    def get(self, iid: str) -> Checker:
        with self.lock:
            c = self.instances.get(iid)
        if c is None:
            raise HTTPException(404, f"no contract instance {iid}")
        return c


def _int_field(body: dict | None, name: str, default: int | None = None) -> int:
    value = (body or {}).get(name, default)
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise HTTPException(400, f"{name} must be a positive integer")
    return value


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    reg = Registry(config or ServiceConfig())
    app = FastAPI(title="contract compliance checker")
    app.state.registry = reg

    @app.post("/contracts", status_code=201)
    def create(body: dict | None = Body(default=None)):
        body = body or {}
        try:
            iid = reg.create(body.get("contract"), body.get("latency"))
        except KeyError as exc:
            raise HTTPException(400, str(exc.args[0]))
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        return {"id": iid}

    @app.post("/contracts/{iid}/events")
    async def submit(iid: str, request: Request):
        checker = reg.get(iid)
        try:
            raw = parse_event(await request.body())
            e = cm.EventRecord(raw.originator, raw.responder, raw.type, raw.status)
            e.validate()
        except (MalformedEventFile, cm.MalformedEvent) as exc:
            raise HTTPException(400, str(exc))
        try:
            resp = checker.submit_event(e)
        except ContractEnded as exc:
            raise HTTPException(409, str(exc))
        return Response(verdict_body(resp.contract_compliant), media_type=XML)

    @app.get("/contracts/{iid}/log")
    def log(iid: str):
        checker = reg.get(iid)
        return Response(dump_chain(checker.log), media_type="text/plain")

    @app.get("/contracts/{iid}/log.bin")
    def log_bin(iid: str):
        return Response(reg.get(iid).log.to_bytes(), media_type="application/octet-stream")

    @app.get("/contracts/{iid}/state")
    def state(iid: str):
        s = reg.get(iid).get_state()
        return {
            "phase": s.phase,
            "now": s.now,
            "ended": s.ended,
            "entries": [cm.describe_effect(cm.Grant(e)) for e in s.entries],
            "pending": [p.op for p in s.pending_onchain],
        }

    @app.post("/contracts/{iid}/clock")
    def clock(iid: str, body: dict | None = Body(default=None)):
        checker = reg.get(iid)
        fired = checker.advance_clock(_int_field(body, "days"))
        s = checker.get_state()
        return {"fired": [t.name for t in fired], "now": s.now, "phase": s.phase}

    @app.post("/contracts/{iid}/chain/tick")
    def tick(iid: str, body: dict | None = Body(default=None)):
        checker = reg.get(iid)
        delivered = checker.chain.tick(_int_field(body, "ticks", 1))
        return {"delivered": [c.tx_num for c in delivered if c.address == checker.address],
                "tick": checker.chain.tick_count}

    return app


def serve(config: ServiceConfig) -> None:
    import uvicorn
    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")
