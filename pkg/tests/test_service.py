import pytest
from fastapi.testclient import TestClient

from hybrid_contracts.eventxml import RawEvent, render_event, verdict_body
from hybrid_contracts.service import ServiceConfig, create_app

TRUE_BODY = "<result>\n    <contractCompliant>true</contractCompliant>\n</result>"
FALSE_BODY = "<result>\n    <contractCompliant>false</contractCompliant>\n</result>"


@pytest.fixture
def client():
    return TestClient(create_app(ServiceConfig()))


def new(client, **body):
    r = client.post("/contracts", json=body or {"contract": "dataseller"})
    assert r.status_code == 201
    return r.json()["id"]


def send(client, iid, orig, resp, op, status="success"):
    return client.post(f"/contracts/{iid}/events",
                       content=render_event(RawEvent(orig, resp, op, status)),
                       headers={"content-type": "application/xml"})


def test_buyreq_true(client):
    iid = new(client)
    r = send(client, iid, "buyer", "store", "BuyReq")
    assert r.status_code == 200
    assert r.headers["content-type"].startswith("application/xml")
    assert r.text == TRUE_BODY == verdict_body(True)
    assert not r.content.endswith(b"\n")


def test_getvou_before_confirmation_false(client):
    iid = new(client, contract="dataseller", latency="5")
    for o, p, op in [("buyer", "store", "BuyReq"), ("store", "buyer", "Conf"), ("buyer", "store", "Pay")]:
        assert send(client, iid, o, p, op).text == TRUE_BODY
    assert send(client, iid, "buyer", "store", "GetVou").text == FALSE_BODY
    r = client.post(f"/contracts/{iid}/chain/tick", json={"ticks": 5})
    assert r.json()["delivered"] == [1]
    assert send(client, iid, "buyer", "store", "GetVou").text == TRUE_BODY


def test_errors(client):
    assert send(client, "nope", "buyer", "store", "BuyReq").status_code == 404
    iid = new(client)
    assert send(client, iid, "buyer", "buyer", "BuyReq").status_code == 400
    assert client.post(f"/contracts/{iid}/events", content="<event>").status_code == 400
    assert send(client, iid, "buyer", "store", "BuyReq", "timeout").status_code == 400
    send(client, iid, "buyer", "store", "BuyReq")
    send(client, iid, "store", "buyer", "Rej")
    assert send(client, iid, "buyer", "store", "BuyReq").status_code == 409
    assert client.post("/contracts", json={"contract": "nosuch"}).status_code == 400
    assert client.post(f"/contracts/{iid}/clock", json={"days": 0}).status_code == 400
    assert client.get("/contracts/nope/log").status_code == 404


def test_clock(client):
    iid = new(client)
    send(client, iid, "buyer", "store", "BuyReq")
    r = client.post(f"/contracts/{iid}/clock", json={"days": 4})
    assert r.json()["fired"] == ["RejConfTO"]
    assert r.json()["phase"] == "AbnormalEnd"


def test_log_after_seq1(client):
    iid = new(client)
    send(client, iid, "buyer", "store", "BuyReq")
    send(client, iid, "store", "buyer", "Rej")
    lines = client.get(f"/contracts/{iid}/log").text.splitlines()
    assert len(lines) == 3
    assert [l.split("\t")[3] for l in lines[1:]] == ["Compliant", "Compliant"]
    from hybrid_contracts.audit_log import verify_bytes
    assert verify_bytes(client.get(f"/contracts/{iid}/log.bin").content)


def test_short_tag_spelling(client):
    iid = new(client)
    body = ("<event><origin>buyer</origin><respond>store</respond><type>BuyReq</type>"
            "<status>success</status></event>")
    assert client.post(f"/contracts/{iid}/events", content=body).text == TRUE_BODY


def test_service_matches_library(client, ref):
    from hybrid_contracts.checker import Checker
    from hybrid_contracts.contract_model import EventRecord
    stream = [("buyer", "store", "BuyReq"), ("buyer", "store", "Pay"), ("store", "buyer", "Conf"),
              ("buyer", "store", "GetVou"), ("buyer", "store", "Pay"), ("buyer", "store", "GetVou")]
    iid = new(client)
    lib = Checker(ref)
    for o, p, op in stream:
        body = send(client, iid, o, p, op).text
        assert body == verdict_body(lib.submit_event(EventRecord(o, p, op)).contract_compliant)


def test_config_file(tmp_path):
    f = tmp_path / "svc.toml"
    f.write_text('[service]\nport = 9001\nlatency = "3"\n')
    cfg = ServiceConfig.load(f, host="0.0.0.0")
    assert (cfg.port, cfg.latency, cfg.host) == (9001, "3", "0.0.0.0")
    f.write_text('[service]\ncolour = "red"\n')
    with pytest.raises(ValueError):
        ServiceConfig.load(f)
