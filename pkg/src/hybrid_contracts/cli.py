"""``hybridcc`` command line.

Exit codes: 0 everything as expected, 1 observed verdicts differ from the
sequence's expectation, 2 operational error (bad arguments, I/O, network).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import seqgen
from .audit_log import dump_text, verify_bytes
from .chain_sim import LatencyPolicy
from .checker import ContractEnded
from .contract_model import EventRecord, MalformedEvent
from .harness import (EXIT_ERROR, EXIT_MISMATCH, EXIT_OK, HttpTarget, InProcessTarget,
                      ReplayPlan, TargetError, default_schedule, race_report, race_table,
                      replay_events)

log = logging.getLogger("hybridcc")


class UsageError(Exception):
    pass


def _latency(text: str) -> LatencyPolicy:
    try:
        return LatencyPolicy.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _schedule(g, overrides: list[str]) -> dict[str, int]:
    sched = default_schedule(g)
    for item in overrides or ():
        name, _, days = item.partition("=")
        if not days.isdigit() or int(days) < 1:
            raise UsageError(f"bad --clock entry {item!r}; expected NAME=DAYS")
        sched[seqgen.normalize_token(name)] = int(days)
    return sched


def _selected(root: Path, g, which: str) -> list[tuple[str, Path]]:
    dirs = [t for t in seqgen.list_sequence_dirs(root) if t[0] == g.name]
    if not dirs:
        raise UsageError(f"no {g.name}.pmlExecSeq<i> folders under {root}")
    if which == "all":
        return [(f"ExecSeq{i}", d) for _, i, d in dirs]
    by_index = {i: d for _, i, d in dirs}
    if which.isdigit():
        i = int(which)
    else:
        sset = seqgen.import_sequences(root, g)
        try:
            i = seqgen.resolve_label(sset, g, which)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
        i = sorted(by_index)[i - 1]
    if i not in by_index:
        raise UsageError(f"no sequence folder {g.name}.pmlExecSeq{i}")
    return [(which if not which.isdigit() else f"ExecSeq{i}", by_index[i])]


# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    g = seqgen.load_contract(args.contract)
    fm = (seqgen.FailureModel.bizfail(args.bound) if args.failures == "bizfail"
          else seqgen.FailureModel.none())
    sset = seqgen.enumerate_sequences(g, fm, args.convention)
    if args.out:
        seqgen.export_sequences(sset, g, args.out)
    print(len(sset))
    if args.list:
        for i, s in enumerate(sset, start=1):
            print(f"{i}\t{s.completion.value}\t{s.render()}")
    return EXIT_OK


def _target(args, g, lat):
    if args.url:
        import httpx
        return HttpTarget(httpx.Client(base_url=args.url, timeout=10.0), g.name, lat)
    return InProcessTarget(g, lat, args.pay)


def cmd_replay(args) -> int:
    g = seqgen.load_contract(args.contract)
    plan = ReplayPlan(Path(args.dir), args.url or "inprocess", args.latency,
                      _schedule(g, args.clock), args.gap, args.retry)
    report = open(args.report, "w") if args.report else None
    worst = EXIT_OK
    try:
        for label, d in _selected(Path(args.dir), g, args.seq):
            raws = seqgen.read_sequence_dir(d)
            target = _target(args, g, args.latency)
            tr = replay_events(target, g, raws, plan, label)
            if args.log and isinstance(target, InProcessTarget):
                path = Path(args.log.replace("{label}", label))
                target.checker.log.save(path)
            sys.stdout.write(tr.render())
            if not tr.ok:
                worst = EXIT_MISMATCH
            if report:
                report.write(json.dumps({
                    "sequence": label, "folder": d.name, "latency": args.latency.describe(),
                    "verdicts": tr.verdicts, "phase": tr.observed_phase,
                    "expected": tr.expected_completion, "divergences": tr.divergences,
                }) + "\n")
    finally:
        if report:
            report.close()
    return worst


def cmd_race_report(args) -> int:
    from .plotting import plot_race
    g = seqgen.load_contract(args.contract)
    [(label, d)] = _selected(Path(args.dir), g, args.seq)
    raws = seqgen.read_sequence_dir(d)
    lats = args.latencies
    plan = ReplayPlan(Path(args.dir), "inprocess", lats[0], _schedule(g, args.clock), args.gap)
    rows, _ = race_report(g, raws, lats, plan)
    sep = "," if args.format == "csv" else "\t"
    table = race_table(rows, lats, sep)
    sys.stdout.write(table)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.with_suffix("." + args.format).write_text(table)
        plot_race(rows, lats, out.with_suffix(".png"), title=f"{label} verdicts by latency")
    divergent = [r for r in rows if r.divergent]
    print(f"# divergent events: {', '.join(f'{r.index}:{r.op}' for r in divergent) or 'none'}",
          file=sys.stderr)
    return EXIT_OK


def cmd_gateway(args) -> int:
    from .gateway import Gateway
    from .harness import InProcessTarget
    g = seqgen.load_contract(args.contract)
    target = InProcessTarget(g, args.latency, args.pay)

    class _Ruler:
        def rule(self, e):
            return target.submit(e)

    gw = Gateway(_Ruler())
    status = EXIT_OK
    for item in args.events:
        orig, resp, op = item.split(":") if item.count(":") == 2 else (None, None, item)
        if orig is None:
            orig, resp = g.roles(op)
        if args.ticks:
            target.tick(args.ticks)
        res = gw.request(EventRecord(orig, resp, op), args.item)
        if res.granted:
            print(f"{op}\tgranted\t{res.item}\t{res.data}")
        else:
            print(f"{op}\tdenied")
            status = EXIT_MISMATCH
    return status


def cmd_serve(args) -> int:
    from .service import ServiceConfig, serve
    cfg = ServiceConfig.load(args.config, host=args.host, port=args.port,
                             contract=args.contract, latency=args.latency)
    serve(cfg)
    return EXIT_OK


def cmd_log_dump(args) -> int:
    sys.stdout.write(dump_text(Path(args.file).read_bytes()))
    return EXIT_OK


def cmd_verify_log(args) -> int:
    res = verify_bytes(Path(args.file).read_bytes())
    if res:
        print("Ok")
        return EXIT_OK
    print(f"TamperedAt({res.seq_no}): {res.reason}")
    return EXIT_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridcc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--contract", default="dataseller")

    sp = sub.add_parser("generate", help="enumerate execution sequences")
    common(sp)
    sp.add_argument("--failures", choices=("none", "bizfail"), default="none")
    sp.add_argument("--bound", type=int, default=seqgen.DEFAULT_RETRY_BOUND,
                    help="retry bound N for --failures bizfail (default %(default)s)")
    sp.add_argument("--convention", choices=seqgen.CONVENTIONS, default=seqgen.EXPLICIT)
    sp.add_argument("--out", help="directory to write <contract>.pmlExecSeq<i>/ folders")
    sp.add_argument("--list", action="store_true", help="also print every sequence")
    sp.set_defaults(func=cmd_generate)

    def replay_args(sp):
        common(sp)
        sp.add_argument("--dir", required=True)
        sp.add_argument("--seq", default="all", help="folder index, label (seq6) or all")
        sp.add_argument("--gap", type=int, default=1, help="chain ticks between events")
        sp.add_argument("--clock", action="append", metavar="NAME=DAYS",
                        help="override the day advance for a timeout step")

    sp = sub.add_parser("replay", help="replay sequences against a checker")
    replay_args(sp)
    sp.add_argument("--latency", type=_latency, default=LatencyPolicy.immediate())
    sp.add_argument("--retry", type=int, metavar="TICKS",
                    help="re-submit a denied event once after TICKS chain ticks")
    sp.add_argument("--url", help="service base URL; in-process checker if omitted")
    sp.add_argument("--pay", type=int, default=100)
    sp.add_argument("--report", help="write a JSON-lines summary here")
    sp.add_argument("--log", help="save the in-process audit log; {label} is substituted")
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("race-report", help="tabulate verdicts across latencies")
    replay_args(sp)
    sp.add_argument("--latencies", type=lambda s: [_latency(x) for x in s.split(",")],
                    default=[LatencyPolicy.immediate(), LatencyPolicy.fixed(10)])
    sp.add_argument("--out", help="path prefix for the table and PNG")
    sp.add_argument("--format", choices=("tsv", "csv"), default="tsv")
    sp.set_defaults(func=cmd_race_report)

    sp = sub.add_parser("gateway", help="request data through the verdict gate")
    common(sp)
    sp.add_argument("events", nargs="+", help="OP or ORIGINATOR:RESPONDER:OP")
    sp.add_argument("--item", default="D1")
    sp.add_argument("--latency", type=_latency, default=LatencyPolicy.immediate())
    sp.add_argument("--ticks", type=int, default=0, help="chain ticks before each request")
    sp.add_argument("--pay", type=int, default=100)
    sp.set_defaults(func=cmd_gateway)

    sp = sub.add_parser("serve", help="run the HTTP verdict service")
    sp.add_argument("--config")
    sp.add_argument("--host")
    sp.add_argument("--port", type=int)
    sp.add_argument("--contract")
    sp.add_argument("--latency")
    sp.set_defaults(func=cmd_serve)

    sp = sub.add_parser("log-dump", help="print a persisted audit log")
    sp.add_argument("file")
    sp.set_defaults(func=cmd_log_dump)

    sp = sub.add_parser("verify-log", help="check an audit log's hash chain")
    sp.add_argument("file")
    sp.set_defaults(func=cmd_verify_log)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, OSError, ValueError, KeyError, TargetError, ContractEnded,
            MalformedEvent, seqgen.SeqgenError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"hybridcc: error: {msg}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # network failures from httpx and the like
        log.debug("unexpected failure", exc_info=True)
        print(f"hybridcc: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
