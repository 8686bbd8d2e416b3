"""Command-line driver.

A session is a directory of plain-text artifacts::

    kb.kb           copy of the knowledge base
    frames.json     argument frames the net was compiled from
    net.net         compiled network (textual network format)
    evidence.ev     evidence asserted so far
    transcript.log  append-only revision transcript
    config.json     threshold, acceptance ratio, candidate cap
    report.txt      last conflict report

Exit codes: 0 success, 2 usage, 3 input/parse, 4 argument or compile,
5 inference, 6 revision, 7 session state.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from prenv import errors
from prenv.argument import construct_arguments, frame_from_dict, frame_to_dict
from prenv.inference import dumps_evidence, parse_evidence, posteriors
from prenv.monitor import DEFAULT_THRESHOLD, surprise_index
from prenv.network import compile_network, dumps_net, loads_net, to_dot
from prenv.revision import (
    DEFAULT_ACCEPTANCE_RATIO,
    DEFAULT_MAX_CANDIDATES,
    RevisionConfig,
    restrict,
    run_revision,
)
from prenv.schema_kb import activate_backward, activate_forward, load_kb

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_COMPILE = 4
EXIT_INFERENCE = 5
EXIT_REVISION = 6
EXIT_SESSION = 7

DEFAULT_SESSION = ".prenv-session"


class SessionError(errors.PreError):
    pass


def exit_code(exc: errors.PreError) -> int:
    if isinstance(exc, errors.InputError):
        return EXIT_INPUT
    if isinstance(exc, (errors.ArgumentError, errors.CompileError)):
        return EXIT_COMPILE
    if isinstance(exc, errors.InferenceError):
        return EXIT_INFERENCE
    if isinstance(exc, errors.RevisionError):
        return EXIT_REVISION
    return EXIT_SESSION


@dataclass
class Session:
    root: Path
    config: dict = field(default_factory=dict)

    KB = "kb.kb"
    FRAMES = "frames.json"
    NET = "net.net"
    EVIDENCE = "evidence.ev"
    TRANSCRIPT = "transcript.log"
    CONFIG = "config.json"
    REPORT = "report.txt"

    @classmethod
    def open(cls, root: Path) -> "Session":
        s = cls(root)
        cfg = root / cls.CONFIG
        if cfg.exists():
            s.config = json.loads(cfg.read_text())
        return s

    def path(self, name: str) -> Path:
        return self.root / name

    def write(self, name: str, text: str) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        self.path(name).write_text(text)

    def kb(self):
        if not self.path(self.KB).exists():
            raise SessionError(f"no knowledge base in session {self.root}; run 'build' first")
        return load_kb(self.path(self.KB))

    def frames(self):
        if not self.path(self.FRAMES).exists():
            raise SessionError(f"no network in session {self.root}; run 'build' first")
        return [frame_from_dict(d) for d in json.loads(self.path(self.FRAMES).read_text())]

    def net(self):
        if not self.path(self.NET).exists():
            raise SessionError(f"no network in session {self.root}; run 'build' first")
        return loads_net(self.path(self.NET).read_text())

    def evidence(self) -> dict[str, bool]:
        p = self.path(self.EVIDENCE)
        return parse_evidence(p.read_text()) if p.exists() else {}

    def save_model(self, frames, net) -> None:
        data = [frame_to_dict(f) for f in sorted(frames, key=lambda f: f.id)]
        self.write(self.FRAMES, json.dumps(data, indent=2) + "\n")
        self.write(self.NET, dumps_net(net))

    def append_transcript(self, lines) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        with self.path(self.TRANSCRIPT).open("a") as fh:
            for line in lines:
                fh.write(line + "\n")

    def setting(self, args, name: str, default):
        value = getattr(args, name, None)
        if value is None:
            value = self.config.get(name, default)
        return value


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _report_block(net, evidence, threshold, given=None):
    """(posterior lines, report or None) for the model part of ``evidence``."""
    obs = restrict(evidence, net)
    post = posteriors(net, obs)
    report = None
    if given is not None:
        given = restrict(given, net)
        new = {k: v for k, v in obs.items() if k not in given}
        if new:
            report = surprise_index(net, new, threshold, given=given)
    elif obs:
        report = surprise_index(net, obs, threshold)
    return post, report


def _print_state(net, evidence, threshold, as_json: bool, given=None, session=None):
    post, report = _report_block(net, evidence, threshold, given)
    held = sorted(k for k in evidence if k not in net)
    if as_json:
        print(json.dumps({
            "posteriors": post,
            "held_evidence": {k: evidence[k] for k in held},
            "report": report.to_dict() if report else None,
        }, indent=2, sort_keys=True))
    else:
        print("posteriors:")
        for nid, p in post.items():
            mark = " (observed)" if nid in evidence else ""
            print(f"  {nid}: {_fmt(p)}{mark}")
        if held:
            print("held evidence (not in model): " + ", ".join(
                f"{k}={'true' if evidence[k] else 'false'}" for k in held))
        if report is None:
            print("conflict: no observations on model nodes")
        else:
            print("conflict:")
            for line in report.to_text().splitlines():
                print("  " + line)
            if report.triggered:
                print("TRIGGERED")
    if session is not None:
        session.write(Session.REPORT, report.to_text() if report else "")
    return report


# --------------------------------------------------------------------------
# commands


def cmd_build(args, session: Session) -> int:
    kb_path = Path(args.kb)
    try:
        text = kb_path.read_text()
    except OSError as exc:
        raise errors.InputError(f"cannot read {kb_path}: {exc}") from None
    kb = load_kb(text)
    if not args.claim and not args.grounds:
        raise errors.InputError("give --claim and/or --grounds")
    activations = []
    if args.grounds:
        grounds = [g.strip() for g in args.grounds.split(",") if g.strip()]
        activations += activate_forward(kb, grounds, depth=args.depth)
    if args.claim:
        activations += activate_backward(kb, args.claim, depth=args.depth)
    frames = {f.id: f for a in activations for f in construct_arguments(a, kb)}
    net = compile_network(list(frames.values()), kb)

    session.config = {}
    session.config = {
        "threshold": session.setting(args, "threshold", DEFAULT_THRESHOLD),
        "acceptance_ratio": session.setting(args, "acceptance_ratio", DEFAULT_ACCEPTANCE_RATIO),
        "max_candidates": session.setting(args, "max_candidates", DEFAULT_MAX_CANDIDATES),
    }
    session.write(Session.KB, text)
    session.save_model(frames.values(), net)
    session.write(Session.EVIDENCE, "")
    session.write(Session.TRANSCRIPT, "")
    session.write(Session.CONFIG, json.dumps(session.config, indent=2, sort_keys=True) + "\n")

    print(f"nodes: {len(net)}")
    print(f"arcs: {len(net.arcs())}")
    print(f"arguments: {len(frames)}")
    for fid in sorted(frames):
        f = frames[fid]
        print(f"  {fid} [{f.direction}] {f.qualifier}")
    return EXIT_OK


def cmd_assert(args, session: Session) -> int:
    kb, net = session.kb(), session.net()
    try:
        new = parse_evidence(Path(args.evidence).read_text())
    except OSError as exc:
        raise errors.InputError(f"cannot read {args.evidence}: {exc}") from None
    for node in new:
        kb.require(node)
    previous = session.evidence()
    merged = {**previous, **new}
    threshold = session.setting(args, "threshold", DEFAULT_THRESHOLD)
    given = previous if args.incremental else None
    _print_state(net, merged, threshold, args.json, given=given, session=session)
    session.write(Session.EVIDENCE, dumps_evidence(merged))
    return EXIT_OK


def cmd_report(args, session: Session) -> int:
    net = session.net()
    threshold = session.setting(args, "threshold", DEFAULT_THRESHOLD)
    _print_state(net, session.evidence(), threshold, args.json, session=session)
    return EXIT_OK


def cmd_revise(args, session: Session) -> int:
    kb, frames, net = session.kb(), session.frames(), session.net()
    evidence = session.evidence()
    if not restrict(evidence, net):
        raise SessionError("no evidence on model nodes; run 'assert' first")
    config = RevisionConfig(
        threshold=session.setting(args, "threshold", DEFAULT_THRESHOLD),
        acceptance_ratio=session.setting(args, "acceptance_ratio", DEFAULT_ACCEPTANCE_RATIO),
        max_candidates=session.setting(args, "max_candidates", DEFAULT_MAX_CANDIDATES),
    )
    outcome = run_revision(kb, frames, net, evidence, config, force=args.force)
    for line in outcome.transcript:
        print(line)
    session.append_transcript(outcome.transcript)
    if outcome.adopted is not None:
        session.save_model(outcome.adopted.frames, outcome.adopted.net)
        session.write(Session.REPORT, outcome.after.to_text())
    return EXIT_OK


def cmd_export(args, session: Session) -> int:
    net = session.net()
    text = to_dot(net) if args.format == "dot" else dumps_net(net)
    if args.path == "-":
        sys.stdout.write(text)
    else:
        Path(args.path).write_text(text)
    return EXIT_OK


def cmd_session(args, session: Session) -> int:
    print(f"session: {session.root}")
    if not session.path(Session.NET).exists():
        print("network: none")
        return EXIT_OK
    net = session.net()
    frames = session.frames()
    evidence = session.evidence()
    print(f"network: {len(net)} nodes, {len(net.arcs())} arcs")
    print(f"arguments: {len(frames)}")
    print(f"evidence: {len(evidence)} assignments")
    for key in sorted(session.config):
        print(f"{key}: {session.config[key]}")
    return EXIT_OK


# --------------------------------------------------------------------------


def _global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--session", default=argparse.SUPPRESS if suppress else DEFAULT_SESSION,
                        help=f"session directory (default: {DEFAULT_SESSION})")
    parser.add_argument("--threshold", type=float, default=default,
                        help=f"conflict threshold on lr_star (default {DEFAULT_THRESHOLD})")
    parser.add_argument("--acceptance-ratio", type=float, default=default,
                        help=f"likelihood ratio needed to adopt (default {DEFAULT_ACCEPTANCE_RATIO})")
    parser.add_argument("--max-candidates", type=int, default=default,
                        help=f"revision candidates per pass (default {DEFAULT_MAX_CANDIDATES})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prenv", description=__doc__.split("\n")[0])
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        _global_options(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = add("build", cmd_build, "activate schemata and compile a network")
    p.add_argument("kb")
    p.add_argument("--claim", help="backward chaining from this claim")
    p.add_argument("--grounds", help="forward chaining from these comma-separated grounds")
    p.add_argument("--depth", type=int, default=1, help="activation depth (default 1)")

    p = add("assert", cmd_assert, "add evidence and report posteriors and conflict")
    p.add_argument("evidence")
    p.add_argument("--incremental", action="store_true",
                   help="score only the new observations, given earlier ones")
    p.add_argument("--json", action="store_true")

    p = add("report", cmd_report, "report posteriors and conflict for the session")
    p.add_argument("--json", action="store_true")

    p = add("revise", cmd_revise, "run one monitor/suspect/propose/evaluate pass")
    p.add_argument("--force", action="store_true", help="revise even without conflict")

    p = add("export", cmd_export, "write the network as DOT or textual network format")
    p.add_argument("--format", choices=("dot", "net"), required=True)
    p.add_argument("path", help="output file, or - for stdout")

    add("session", cmd_session, "show session state")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    session = Session.open(Path(args.session))
    try:
        return args.func(args, session)
    except errors.PreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
