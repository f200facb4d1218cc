import itertools

import pytest
from hypothesis import HealthCheck, given, settings

from hybrid_contracts import contract_model as cm
from hybrid_contracts import seqgen as sg
from hybrid_contracts.contract_model import Completion, Modality
from hybrid_contracts.eventxml import MalformedEventFile, RawEvent, parse_event, render_event

from .conftest import contract_graphs


def test_no_failure_set(ref):
    sset = sg.enumerate_sequences(ref)
    labels = sg.reference_labels()
    assert len(sset) == 6
    short = {sg.short_steps(ref, s) for s in sset}
    assert short == {labels[f"seq{i}"] for i in range(1, 7)}
    by_short = {sg.short_steps(ref, s): s.completion for s in sset}
    assert by_short[labels["seq4"]] is Completion.ABNORMAL
    assert by_short[labels["seq5"]] is Completion.ABNORMAL
    assert by_short[labels["seq1"]] is Completion.NORMAL


def test_implicit_convention_matches_tokens_exactly(ref):
    sset = sg.enumerate_sequences(ref, convention=sg.IMPLICIT)
    labels = sg.reference_labels()
    assert {s.steps for s in sset} == {labels[f"seq{i}"] for i in range(1, 7)}


def test_bizfail_members(ref):
    sset = sg.enumerate_sequences(ref, sg.FailureModel.bizfail(sg.DEFAULT_RETRY_BOUND))
    labels = sg.reference_labels()
    assert sset.find(labels["seq130"]) is not None
    assert sset.find(labels["seq150"]) is not None
    with_one = sg.enumerate_sequences(ref, sg.FailureModel.bizfail(1))
    assert with_one.find(labels["seq130"]) is None


def test_counts_grow_with_bound(ref):
    counts = [sg.count_sequences(ref, n) for n in range(0, 5)]
    assert counts[0] == 6
    assert counts == sorted(counts) and len(set(counts)) == len(counts)


def test_bizfail_structure(ref):
    sset = sg.enumerate_sequences(ref, sg.FailureModel.bizfail(2))
    seen_mixed_retry = False
    for seq in sset:
        run = 0
        prev = None
        for s in seq.steps:
            if s.status == "bizfail":
                run += 1
                assert run <= 2
                seen_mixed_retry |= prev is not None and prev.status == "bizfail" and prev.name != s.name
            else:
                run = 0
            prev = s
        assert seq.steps[0] == sg.Step("BuyReq")
    assert seen_mixed_retry


def test_single_right_node():
    g = cm.ContractGraph("one", ("a", "b"), (cm.Operation("Go"), cm.Operation("Use")), "Go", "a", "b",
                         "N0", (cm.ORExecNode("N0", "a", "b", Modality.RIGHT, ("Use",), 2,
                                              {"Use": cm.NORMAL_END}, cm.NORMAL_END),))
    sset = sg.enumerate_sequences(g)
    assert [s.render() for s in sset] == ["{Go(S), Use(S)}", "{Go(S), UseTO}"]


def test_rejects_bad_inputs(ref):
    with pytest.raises(ValueError):
        sg.FailureModel.bizfail(0)
    bad = cm.ContractGraph(**{**ref.__dict__, "start": "nowhere"})
    with pytest.raises(cm.InvalidGraph):
        sg.enumerate_sequences(bad)


def test_derive_retry_bound(ref):
    assert sg.derive_retry_bound(ref, 60) == 1
    assert sg.derive_retry_bound(ref, 406) == 2
    with pytest.raises(sg.NoUniqueN) as info:
        sg.derive_retry_bound(ref, 10**9)
    assert set(info.value.counts) == set(range(1, 7))
    with pytest.raises(ValueError):
        sg.derive_retry_bound(ref, 0)


def test_classify(ref):
    labels = sg.reference_labels()
    assert sg.classify(labels["seq4"], ref) is Completion.ABNORMAL
    assert sg.classify(labels["seq1"], ref) is Completion.NORMAL
    assert sg.classify(labels["seq3"], ref) is Completion.NORMAL
    with pytest.raises(sg.IllegalSequence):
        sg.classify((sg.Step("GetVou"),), ref)
    with pytest.raises(sg.IllegalSequence):
        sg.classify(sg.parse_steps("{BuyReq, Conf}"), ref)
    with pytest.raises(sg.IllegalSequence):
        sg.classify(sg.parse_steps("{BuyReq, PayCancTO}"), ref)


def test_parse_steps():
    assert sg.parse_steps("{BuyReq(S), Rej(BF), RejConfTo}") == (
        sg.Step("BuyReq"), sg.Step("Rej", "bizfail"), sg.Step("RejConfTO", "timeout"))
    with pytest.raises(ValueError):
        sg.parse_step("Pay(X)")


def test_sequence_invariant():
    with pytest.raises(ValueError):
        sg.ExecutionSequence((sg.Step("XTO", "timeout"), sg.Step("A")), Completion.NORMAL)


def test_canonical_order_and_stability(ref, tmp_path):
    a = sg.enumerate_sequences(ref, sg.FailureModel.bizfail(2))
    b = sg.enumerate_sequences(ref, sg.FailureModel.bizfail(2))
    assert a == b
    keys = [s.sort_key() for s in a]
    assert keys == sorted(keys) and len(set(keys)) == len(keys)
    sg.export_sequences(a, ref, tmp_path / "x")
    sg.export_sequences(b, ref, tmp_path / "y")
    for d in (tmp_path / "x").iterdir():
        for f in d.iterdir():
            assert f.read_bytes() == (tmp_path / "y" / d.name / f.name).read_bytes()


def test_export_layout(ref, tmp_path):
    sset = sg.enumerate_sequences(ref)
    sg.export_sequences(sset, ref, tmp_path)
    i = sg.resolve_label(sset, ref, "seq1")
    text = (tmp_path / f"dataseller.pmlExecSeq{i}" / "event1.xml").read_text()
    assert text == ("<event>\n    <originator>buyer</originator>\n    <responder>store</responder>\n"
                    "    <type>BuyReq</type>\n    <status>success</status>\n</event>\n")
    assert sorted(p.name for p in (tmp_path / f"dataseller.pmlExecSeq{i}").iterdir()) == [
        "event1.xml", "event2.xml"]


@pytest.mark.parametrize("fm", [sg.FailureModel.none(), sg.FailureModel.bizfail(1)])
def test_round_trip(ref, tmp_path, fm):
    sset = sg.enumerate_sequences(ref, fm)
    sg.export_sequences(sset, ref, tmp_path)
    assert sg.import_sequences(tmp_path, ref) == sset


def test_import_accepts_short_tag_spelling(ref, tmp_path):
    d = tmp_path / "dataseller.pmlExecSeq1"
    d.mkdir()
    (d / "event1.xml").write_text("<event><origin>buyer</origin><respond>store</respond>"
                                  "<type>BuyReq</type><status>success</status></event>")
    (d / "event2.xml").write_text("<event><origin>store</origin><respond>buyer</respond>"
                                  "<type>RejConfTo</type><status>timeout</status></event>")
    sset = sg.import_sequences(tmp_path, ref)
    assert sset[0].steps == sg.reference_labels()["seq4"]
    assert sset[0].completion is Completion.ABNORMAL


@pytest.mark.parametrize("body", ["<event><type>A</type></event>", "<evnt/>", "<event><originator>a",
                                  "<event><originator>a</originator><originator>b</originator></event>",
                                  "<event><colour>red</colour></event>"])
def test_malformed_event_files(body):
    with pytest.raises(MalformedEventFile):
        parse_event(body)


def test_import_rejects_gaps(ref, tmp_path):
    d = tmp_path / "dataseller.pmlExecSeq1"
    d.mkdir()
    (d / "event2.xml").write_text(render_event(RawEvent("buyer", "store", "BuyReq", "success")))
    with pytest.raises(MalformedEventFile):
        sg.import_sequences(tmp_path, ref)


def test_resolve_label(ref):
    nf = sg.enumerate_sequences(ref)
    for k in ("seq1", "seq2", "seq3", "seq4", "seq5", "seq6"):
        i = sg.resolve_label(nf, ref, k)
        assert sg.short_steps(ref, nf[i - 1]) == sg.reference_labels()[k]
    assert sg.resolve_label(nf, ref, "2") == 2
    with pytest.raises(KeyError):
        sg.resolve_label(nf, ref, "seq130")
    with pytest.raises(KeyError):
        sg.resolve_label(nf, ref, "99")


# -- the small-instance completeness oracle ----------------------------------

def _brute_force(ref, max_len=4, with_timeouts=False):
    alphabet = list(ref.alphabet)
    if with_timeouts:
        alphabet += [n.timeout_name for n in ref.nodes]
    found = set()
    for n in range(1, max_len + 1):
        for word in itertools.product(alphabet, repeat=n):
            steps = tuple(sg.Step(w, "timeout") if w.endswith("TO") else sg.Step(w) for w in word)
            try:
                s, _ = sg.symbolic_replay(ref, steps)
            except (sg.IllegalSequence, ValueError):
                continue
            if s.ended or cm.quiescent(s):
                found.add(steps)
    return found


def test_brute_force_matches_success_paths(ref):
    sset = sg.enumerate_sequences(ref)
    success_paths = {sg.short_steps(ref, s) for s in sset if s.completion is Completion.NORMAL}
    assert _brute_force(ref) == success_paths


def test_brute_force_with_timeouts_matches_all(ref):
    sset = sg.enumerate_sequences(ref)
    assert _brute_force(ref, with_timeouts=True) == {s.steps for s in sset} | {
        sg.short_steps(ref, s) for s in sset}


# -- properties on random graphs ----------------------------------------------

@settings(max_examples=500, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(contract_graphs(max_nodes=4))
def test_soundness_and_prefix_closure(g):
    for fm in (sg.FailureModel.none(), sg.FailureModel.bizfail(1)):
        sset = sg.enumerate_sequences(g, fm)
        assert len({s.steps for s in sset}) == len(sset)
        for seq in sset:
            assert sg.classify(seq, g) is seq.completion
            for k in range(1, len(seq.steps)):
                sg.symbolic_replay(g, seq.steps[:k])  # raises if any step is refused
    nf = sg.enumerate_sequences(g)
    assert len(nf) == _count_paths(g)


def _count_paths(g):
    """Independent count: successes per choice plus one timeout per node."""
    def paths(name):
        if name in cm.ENDS:
            return 1
        n = g.node(name)
        return sum(paths(n.target(op)) for op in n.choices) + 1
    return paths(g.start)


@settings(max_examples=100, deadline=None)
@given(contract_graphs(max_nodes=3))
def test_round_trip_random(g):
    import tempfile
    sset = sg.enumerate_sequences(g, sg.FailureModel.bizfail(1))
    with tempfile.TemporaryDirectory() as d:
        sg.export_sequences(sset, g, d)
        assert sg.import_sequences(d, g) == sset


def test_merged_convention_drops_expiry_after_failures(ref):
    merged = sg.enumerate_sequences(ref, sg.FailureModel.bizfail(1), sg.MERGED)
    implicit = sg.enumerate_sequences(ref, sg.FailureModel.bizfail(1), sg.IMPLICIT)
    assert {s.steps for s in merged} < {s.steps for s in implicit}
    assert all(s.steps[-1] != sg.Step("GetVou", "bizfail") for s in merged)
    assert len(sg.enumerate_sequences(ref, convention=sg.MERGED)) == 6
    for s in merged:
        assert sg.classify(s, ref) is s.completion


@pytest.mark.parametrize("conv", sg.CONVENTIONS)
def test_round_trip_each_convention(ref, tmp_path, conv):
    sset = sg.enumerate_sequences(ref, sg.FailureModel.bizfail(1), conv)
    sg.export_sequences(sset, ref, tmp_path)
    assert sg.import_sequences(tmp_path, ref) == sset
