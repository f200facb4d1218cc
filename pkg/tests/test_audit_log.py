import random
from dataclasses import replace

import pytest

from hybrid_contracts import audit_log as al
from hybrid_contracts.contract_model import EventRecord


def make_chain(ref, n=10):
    chain = al.LogChain.for_contract(ref)
    for i in range(n):
        chain.append("event", EventRecord("buyer", "store", f"Op{i}"), "Compliant",
                     [f"effect {i}"], i)
    return chain


def test_linking(ref):
    chain = make_chain(ref, 2)
    a, b = chain.records
    assert a.prev_hash == chain.genesis.digest()
    assert b.prev_hash == a.this_hash
    assert [r.seq_no for r in chain] == [1, 2]
    assert chain.genesis.hash_alg == "sha256"
    assert chain.genesis.contract_digest == ref.digest()


def test_ok(ref):
    assert al.verify_log(make_chain(ref)) == al.Ok()
    assert al.verify_bytes(make_chain(ref).to_bytes(), ref.digest()) == al.Ok()


def test_edit_detected(ref):
    chain = make_chain(ref)
    r = chain.records[3]
    chain.records[3] = replace(r, input=EventRecord("buyer", "store", "Evil"))
    assert al.verify_log(chain) == al.TamperedAt(4, "digest mismatch")


def test_delete_and_reindex_detected(ref):
    chain = make_chain(ref)
    del chain.records[6]
    chain.records = [replace(r, seq_no=i) for i, r in enumerate(chain.records, start=1)]
    res = al.verify_log(chain)
    assert not res and res.seq_no == 7


def test_reorder_and_insert_detected(ref):
    chain = make_chain(ref)
    recs = chain.records
    recs[2], recs[3] = recs[3], recs[2]
    assert al.verify_log(chain).seq_no == 3
    chain = make_chain(ref)
    fake = replace(chain.records[0], seq_no=5)
    chain.records.insert(4, fake)
    assert al.verify_log(chain).seq_no == 5


def test_append_after_detection_still_chains(ref):
    chain = make_chain(ref, 3)
    tampered = al.LogChain(chain.genesis, list(chain.records))
    tampered.records[1] = replace(tampered.records[1], verdict="NonCompliant")
    assert not al.verify_log(tampered)
    chain.append("event", "x", "Info", [], 9)
    assert al.verify_log(chain)


def test_byte_level_mutations(ref):
    data = make_chain(ref).to_bytes()
    rng = random.Random(7)
    for _ in range(300):
        buf = bytearray(data)
        pos = rng.randrange(len(buf))
        buf[pos] ^= rng.randrange(1, 256)
        assert not al.verify_bytes(bytes(buf)), pos


def test_structural_mutations(ref):
    data = make_chain(ref).to_bytes()
    assert not al.verify_bytes(data[:-1])
    assert not al.verify_bytes(data + b"\x00")
    assert not al.verify_bytes(b"")
    assert al.verify_bytes(b"XX" + data[2:]).seq_no == 0
    other = make_chain(ref)
    other.genesis = replace(other.genesis, contract_digest="0" * 64)
    assert al.verify_bytes(data, "0" * 64).seq_no == 0


def test_dump_text(ref):
    chain = make_chain(ref, 2)
    lines = al.dump_chain(chain).splitlines()
    assert lines[0].startswith("# genesis alg=sha256 contract=dataseller")
    assert len(lines) == 3
    fields = lines[1].split("\t")
    assert fields[:4] == ["1", "0", "event", "Compliant"]
    assert "op_type=Op0" in fields[4]


def test_load_raw_rejects_truncation(ref):
    data = make_chain(ref, 2).to_bytes()
    with pytest.raises(al.DecodeError):
        al.load_raw(data[:-3])
