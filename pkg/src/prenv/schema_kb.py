"""Schema knowledge base: storage, parsing, and forward/backward activation.

A knowledge base is the deepest level of the engine. Schemata carry causal
links with numeric strengths, tiered exception lists and an optional backing
model; arguments are built by activating them.

File format (line oriented, ``#`` starts a comment)::

    [propositions]
    <id> <tier> [label words ...]

    [schema <id>]
    link <cause> -> <effect> [<effect> ...] : <p_given_cause> <p_given_not_cause>
    table <effect> | <cause> [<cause> ...] : <v_1> ... <v_2^m>
    prior <id> : <p>
    precondition <id>
    implicit_exception <id> [exportable] : link ...
    implicit_exception <id> [exportable] : table ...
    backing <schema-set-or-schema-id>

    [schema_set <id>]
    member <schema-id>

A ``link`` line naming several effects declares one shared (tied) strength
for all of them. ``table`` rows enumerate cause assignments with the first
listed cause most significant and True before False.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Union

from prenv.errors import (
    DanglingReferenceError,
    KBValidationError,
    NoBackingError,
    ParseError,
    StrengthRangeError,
    TierViolationError,
    UnknownPropositionError,
)

CAUSAL = "causal"
DIAGNOSTIC = "diagnostic"

IMPLICIT = "implicit"
BACKGROUND = "background"


@dataclass(frozen=True)
class Proposition:
    id: str
    label: str
    causal_tier: int


@dataclass(frozen=True)
class CausalLink:
    """A cause->effect dependency with P(effect|cause) and P(effect|~cause).

    ``statement`` identifies the KB statement the link came from. Links
    sharing a statement share one strength parameter.
    """

    cause: str
    effect: str
    strength_given_cause: float
    strength_given_not_cause: float
    statement: int = 0

    @property
    def likelihood_ratio(self) -> float:
        if self.strength_given_not_cause == 0:
            return float("inf")
        return self.strength_given_cause / self.strength_given_not_cause

    @property
    def causes(self) -> tuple[str, ...]:
        return (self.cause,)

    def __str__(self) -> str:
        return (
            f"link {self.cause} -> {self.effect} : "
            f"{self.strength_given_cause!r} {self.strength_given_not_cause!r}"
        )


@dataclass(frozen=True)
class JointTable:
    """P(effect=True | causes) for every cause assignment.

    Causes are stored sorted; rows follow ``itertools.product((True, False))``
    over them, first cause most significant.
    """

    effect: str
    causes: tuple[str, ...]
    values: tuple[float, ...]
    statement: int = 0

    def __str__(self) -> str:
        vals = " ".join(repr(v) for v in self.values)
        return f"table {self.effect} | {' '.join(self.causes)} : {vals}"


Fragment = Union[CausalLink, JointTable]


def fragment_propositions(fragment: Fragment) -> tuple[str, ...]:
    return (*fragment.causes, fragment.effect)


@dataclass(frozen=True)
class ExceptionDescriptor:
    proposition: str
    fragments: tuple[Fragment, ...]
    tier: str = IMPLICIT
    exportable: bool = False
    source: str = ""


@dataclass(frozen=True)
class Schema:
    id: str
    links: tuple[CausalLink, ...] = ()
    tables: tuple[JointTable, ...] = ()
    implicit_exceptions: tuple[ExceptionDescriptor, ...] = ()
    backing: str | None = None
    prior_assignments: Mapping[str, float] = field(default_factory=dict)
    preconditions: tuple[str, ...] = ()

    def dependencies(self) -> tuple[Fragment, ...]:
        return (*self.links, *self.tables)

    def propositions(self) -> frozenset[str]:
        return frozenset(p for d in self.dependencies() for p in fragment_propositions(d))

    @property
    def rebuttals(self) -> tuple[str, ...]:
        return tuple(e.proposition for e in self.implicit_exceptions if e.exportable)

    def exception(self, prop_id: str) -> ExceptionDescriptor | None:
        for exc in self.implicit_exceptions:
            if exc.proposition == prop_id:
                return exc
        return None


@dataclass(frozen=True)
class SchemaSet:
    id: str
    members: tuple[str, ...]


@dataclass(frozen=True)
class KBIndex:
    forward: Mapping[str, tuple[str, ...]]
    backward: Mapping[str, tuple[str, ...]]


def build_index(schemata: Mapping[str, Schema]) -> KBIndex:
    forward: dict[str, set[str]] = {}
    backward: dict[str, set[str]] = {}
    for sid, schema in schemata.items():
        for dep in schema.dependencies():
            for cause in dep.causes:
                forward.setdefault(cause, set()).add(sid)
            backward.setdefault(dep.effect, set()).add(sid)
    return KBIndex(
        forward={k: tuple(sorted(v)) for k, v in sorted(forward.items())},
        backward={k: tuple(sorted(v)) for k, v in sorted(backward.items())},
    )


@dataclass(frozen=True)
class KnowledgeBase:
    propositions: Mapping[str, Proposition] = field(default_factory=dict)
    schemata: Mapping[str, Schema] = field(default_factory=dict)
    schema_sets: Mapping[str, SchemaSet] = field(default_factory=dict)
    index: KBIndex = field(default_factory=lambda: KBIndex({}, {}))

    def require(self, prop_id: str) -> Proposition:
        try:
            return self.propositions[prop_id]
        except KeyError:
            raise UnknownPropositionError(prop_id) from None

    def tier(self, prop_id: str) -> int:
        return self.require(prop_id).causal_tier

    def schema(self, schema_id: str) -> Schema:
        try:
            return self.schemata[schema_id]
        except KeyError:
            raise KBValidationError(f"unknown schema {schema_id!r}") from None

    def prior(self, prop_id: str) -> float | None:
        for sid in sorted(self.schemata):
            p = self.schemata[sid].prior_assignments.get(prop_id)
            if p is not None:
                return p
        return None

    def resolve_backing(self, backing_id: str) -> tuple[Schema, ...]:
        if backing_id in self.schema_sets:
            return tuple(self.schemata[m] for m in self.schema_sets[backing_id].members)
        return (self.schema(backing_id),)


@dataclass(frozen=True)
class SchemaActivation:
    schema_id: str
    direction: str
    trigger: tuple[str, ...]
    links: tuple[CausalLink, ...] = ()
    tables: tuple[JointTable, ...] = ()

    def dependencies(self) -> tuple[Fragment, ...]:
        return (*self.links, *self.tables)


# --------------------------------------------------------------------------
# activation


def _require_all(kb: KnowledgeBase, ids: Iterable[str]) -> None:
    for pid in ids:
        kb.require(pid)


def _sort_deps(deps):
    return tuple(sorted(deps, key=lambda d: (d.effect, d.causes, d.statement)))


def activate_forward(
    kb: KnowledgeBase, grounds: Iterable[str], depth: int = 1
) -> list[SchemaActivation]:
    """Find consequences of ``grounds``.

    A schema is activated when one of its dependencies has a cause among the
    grounds; the activation matches every dependency of that schema pointing
    at the same effects, so co-causes come along. With ``depth > 1`` the
    effects found are used as grounds for a further round.
    """
    frontier = set(grounds)
    _require_all(kb, frontier)
    seen = set(frontier)
    found: dict[str, tuple[set, set]] = {}
    for _ in range(depth):
        reached: set[str] = set()
        for g in sorted(frontier):
            for sid in kb.index.forward.get(g, ()):
                deps = kb.schemata[sid].dependencies()
                effects = {d.effect for d in deps if g in d.causes}
                matched, trigger = found.setdefault(sid, (set(), set()))
                matched.update(d for d in deps if d.effect in effects)
                trigger.add(g)
                reached |= effects
        frontier = reached - seen
        seen |= reached
        if not frontier:
            break
    return [_activation(sid, CAUSAL, trig, deps) for sid, (deps, trig) in sorted(found.items())]


def activate_backward(kb: KnowledgeBase, claim: str, depth: int = 1) -> list[SchemaActivation]:
    """Find schemata that can explain ``claim`` (effect-to-cause search)."""
    kb.require(claim)
    frontier = {claim}
    seen = {claim}
    found: dict[str, tuple[set, set]] = {}
    for _ in range(depth):
        reached: set[str] = set()
        for c in sorted(frontier):
            for sid in kb.index.backward.get(c, ()):
                deps = [d for d in kb.schemata[sid].dependencies() if d.effect == c]
                matched, trigger = found.setdefault(sid, (set(), set()))
                matched.update(deps)
                trigger.add(c)
                reached.update(cause for d in deps for cause in d.causes)
        frontier = reached - seen
        seen |= reached
        if not frontier:
            break
    return [
        _activation(sid, DIAGNOSTIC, trig, deps) for sid, (deps, trig) in sorted(found.items())
    ]


def _activation(sid, direction, trigger, deps) -> SchemaActivation:
    return SchemaActivation(
        schema_id=sid,
        direction=direction,
        trigger=tuple(sorted(trigger)),
        links=_sort_deps(d for d in deps if isinstance(d, CausalLink)),
        tables=_sort_deps(d for d in deps if isinstance(d, JointTable)),
    )


def expand_exceptions(
    kb: KnowledgeBase,
    schema_id: str,
    tier: str,
    present: Iterable[str] = (),
    depth: int = 1,
) -> list[ExceptionDescriptor]:
    """Recover exceptions that were summarised away when ``schema_id`` fired.

    ``implicit`` returns the schema's own exception list. ``background``
    activates the backing model (following nested backings up to ``depth``)
    and returns every proposition it mentions that is neither in the schema
    nor in ``present``, with the dependencies that mention it.
    """
    schema = kb.schema(schema_id)
    if tier == IMPLICIT:
        return list(schema.implicit_exceptions)
    if tier != BACKGROUND:
        raise ValueError(f"unknown exception tier {tier!r}")
    if schema.backing is None:
        raise NoBackingError(f"schema {schema_id!r} has no backing")

    known = set(present) | schema.propositions()
    deps: list[Fragment] = []
    visited: set[str] = {schema_id}
    pending = [schema.backing]
    for _ in range(depth):
        next_pending: list[str] = []
        for backing_id in pending:
            for member in kb.resolve_backing(backing_id):
                if member.id in visited:
                    continue
                visited.add(member.id)
                deps.extend(member.dependencies())
                if member.backing is not None:
                    next_pending.append(member.backing)
        pending = next_pending

    out = []
    candidates = sorted({p for d in deps for p in fragment_propositions(d)} - known)
    for prop in candidates:
        frags = _sort_deps(set(d for d in deps if prop in fragment_propositions(d)))
        out.append(
            ExceptionDescriptor(prop, frags, tier=BACKGROUND, source=schema.backing)
        )
    return out


# --------------------------------------------------------------------------
# parsing

_SECTION = re.compile(r"^\[\s*(propositions|schema_set|schema)(?:\s+(\S+))?\s*\]$")
_NUMBER = re.compile(r"^(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?$")
_IDENT = re.compile(r"^[A-Za-z_][\w\-.]*$")


class _Line:
    """Token cursor over one source line, tracking columns for errors."""

    def __init__(self, text: str, lineno: int):
        self.lineno = lineno
        self.tokens = [(m.group(), m.start() + 1) for m in re.finditer(r"\S+", text)]
        self.pos = 0

    def error(self, msg: str, col: int | None = None) -> ParseError:
        if col is None:
            col = self.tokens[self.pos][1] if self.pos < len(self.tokens) else self._end()
        return ParseError(msg, self.lineno, col)

    def _end(self) -> int:
        if not self.tokens:
            return 1
        tok, col = self.tokens[-1]
        return col + len(tok)

    def done(self) -> bool:
        return self.pos >= len(self.tokens)

    def peek(self) -> str | None:
        return None if self.done() else self.tokens[self.pos][0]

    def take(self, what: str = "token") -> tuple[str, int]:
        if self.done():
            raise self.error(f"expected {what}")
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, literal: str) -> None:
        tok, col = self.take(repr(literal))
        if tok != literal:
            raise self.error(f"expected {literal!r}, found {tok!r}", col)

    def ident(self, what: str = "identifier") -> str:
        tok, col = self.take(what)
        if not _IDENT.match(tok):
            raise self.error(f"invalid {what} {tok!r}", col)
        return tok

    def prob(self) -> float:
        tok, col = self.take("probability")
        if not _NUMBER.match(tok):
            raise self.error(f"invalid number {tok!r}", col)
        value = float(tok)
        if not 0.0 <= value <= 1.0:
            raise StrengthRangeError(
                f"line {self.lineno}, column {col}: probability {tok} outside [0, 1]"
            )
        return value

    def end(self) -> None:
        if not self.done():
            raise self.error(f"unexpected token {self.peek()!r}")


@dataclass
class _SchemaDraft:
    id: str
    line: int
    links: list = field(default_factory=list)
    tables: list = field(default_factory=list)
    exceptions: dict = field(default_factory=dict)
    backing: str | None = None
    priors: dict = field(default_factory=dict)
    preconditions: list = field(default_factory=list)
    refs: list = field(default_factory=list)
    statements: int = 0


def _parse_dependency(ln: _Line, statement: int, multi_effect: bool) -> list[Fragment]:
    kind, col = ln.take("'link' or 'table'")
    if kind == "link":
        cause = ln.ident("cause")
        ln.expect("->")
        effects = [ln.ident("effect")]
        while multi_effect and ln.peek() not in (None, ":"):
            effects.append(ln.ident("effect"))
        ln.expect(":")
        p1, p0 = ln.prob(), ln.prob()
        ln.end()
        return [CausalLink(cause, e, p1, p0, statement) for e in effects]
    if kind == "table":
        effect = ln.ident("effect")
        ln.expect("|")
        causes = []
        while ln.peek() not in (None, ":"):
            causes.append(ln.ident("cause"))
        if not causes:
            raise ln.error("table needs at least one cause")
        if len(set(causes)) != len(causes):
            raise ln.error("repeated cause in table", col)
        ln.expect(":")
        n = 2 ** len(causes)
        values = [ln.prob() for _ in range(n)]
        ln.end()
        return [_sorted_table(effect, causes, values, statement)]
    raise ln.error(f"expected 'link' or 'table', found {kind!r}", col)


def _sorted_table(effect, causes, values, statement) -> JointTable:
    order = sorted(causes)
    configs = itertools.product((True, False), repeat=len(causes))
    rows = dict(zip(configs, values))
    new_values = tuple(
        rows[tuple(cfg[order.index(c)] for c in causes)]
        for cfg in itertools.product((True, False), repeat=len(order))
    )
    return JointTable(effect, tuple(order), new_values, statement)


def parse_kb(source: str) -> KnowledgeBase:
    """Parse and validate knowledge-base text."""
    props: dict[str, Proposition] = {}
    prop_lines: dict[str, int] = {}
    drafts: dict[str, _SchemaDraft] = {}
    sets: dict[str, tuple[list[str], int]] = {}
    section: tuple[str, str | None] | None = None

    for lineno, raw in enumerate(source.splitlines(), start=1):
        text = raw.split("#", 1)[0].rstrip()
        if not text.strip():
            continue
        stripped = text.strip()
        if stripped.startswith("["):
            m = _SECTION.match(stripped)
            if not m:
                raise ParseError(f"malformed section header {stripped!r}", lineno, 1)
            kind, name = m.group(1), m.group(2)
            if kind == "propositions":
                if name:
                    raise ParseError("[propositions] takes no name", lineno, 1)
            else:
                if not name or not _IDENT.match(name):
                    raise ParseError(f"[{kind}] needs a valid id", lineno, 1)
                if name in drafts or name in sets:
                    raise ParseError(f"duplicate schema id {name!r}", lineno, 1)
                if kind == "schema":
                    drafts[name] = _SchemaDraft(name, lineno)
                else:
                    sets[name] = ([], lineno)
            section = (kind, name)
            continue

        ln = _Line(text, lineno)
        if section is None:
            raise ln.error("statement outside of any section")
        kind, name = section

        if kind == "propositions":
            pid = ln.ident("proposition id")
            tier_tok, col = ln.take("tier")
            if not tier_tok.isdigit():
                raise ln.error(f"tier must be a non-negative integer, found {tier_tok!r}", col)
            label = " ".join(t for t, _ in ln.tokens[ln.pos:]) or pid
            if pid in props:
                raise ParseError(f"duplicate proposition {pid!r}", lineno, 1)
            props[pid] = Proposition(pid, label, int(tier_tok))
            prop_lines[pid] = lineno
            continue

        if kind == "schema_set":
            ln.expect("member")
            sets[name][0].append(ln.ident("schema id"))
            ln.end()
            continue

        draft = drafts[name]
        keyword = ln.peek()
        if keyword in ("link", "table"):
            draft.statements += 1
            deps = _parse_dependency(ln, draft.statements, multi_effect=True)
            for d in deps:
                (draft.links if isinstance(d, CausalLink) else draft.tables).append((d, lineno))
        elif keyword == "prior":
            ln.take()
            pid = ln.ident("proposition id")
            ln.expect(":")
            p = ln.prob()
            ln.end()
            if pid in draft.priors:
                raise ParseError(f"duplicate prior for {pid!r}", lineno, 1)
            draft.priors[pid] = p
            draft.refs.append((pid, lineno))
        elif keyword == "precondition":
            ln.take()
            pid = ln.ident("proposition id")
            ln.end()
            draft.preconditions.append(pid)
            draft.refs.append((pid, lineno))
        elif keyword == "backing":
            ln.take()
            bid = ln.ident("backing id")
            ln.end()
            if draft.backing is not None:
                raise ParseError(f"schema {name!r} already has a backing", lineno, 1)
            draft.backing = bid
        elif keyword == "implicit_exception":
            ln.take()
            pid = ln.ident("exception proposition")
            exportable = False
            if ln.peek() == "exportable":
                ln.take()
                exportable = True
            ln.expect(":")
            deps = _parse_dependency(ln, 0, multi_effect=False)
            frags, flag, _ = draft.exceptions.get(pid, ([], False, lineno))
            frags.extend(deps)
            draft.exceptions[pid] = (frags, flag or exportable, lineno)
        else:
            raise ln.error(f"unknown statement {keyword!r}")

    return _validate(props, drafts, sets)


def _validate(props, drafts, sets) -> KnowledgeBase:
    def check_ref(pid, lineno, context):
        if pid not in props:
            raise DanglingReferenceError(
                f"line {lineno}: {context} references undeclared proposition {pid!r}"
            )

    def check_order(dep, lineno, sid):
        for cause in dep.causes:
            if props[cause].causal_tier >= props[dep.effect].causal_tier:
                raise TierViolationError(
                    f"line {lineno}: schema {sid!r}: {dep} violates causal order "
                    f"(tier {props[cause].causal_tier} of {cause!r} >= tier "
                    f"{props[dep.effect].causal_tier} of {dep.effect!r})",
                    link=dep,
                )

    priors_seen: dict[str, tuple[float, str]] = {}
    schemata: dict[str, Schema] = {}
    for sid, d in drafts.items():
        for dep, lineno in d.links + d.tables:
            for pid in fragment_propositions(dep):
                check_ref(pid, lineno, f"schema {sid!r}")
            check_order(dep, lineno, sid)
        pairs = [(l.cause, l.effect) for l, _ in d.links]
        for (pair, (link, lineno)) in zip(pairs, d.links):
            if pairs.count(pair) > 1:
                raise KBValidationError(f"line {lineno}: schema {sid!r}: duplicate {link}")
        table_effects = [t.effect for t, _ in d.tables]
        for t, lineno in d.tables:
            if table_effects.count(t.effect) > 1 or t.effect in {l.effect for l, _ in d.links}:
                raise KBValidationError(
                    f"line {lineno}: schema {sid!r}: effect {t.effect!r} has both a table and "
                    "other dependencies"
                )
        for pid, lineno in d.refs:
            check_ref(pid, lineno, f"schema {sid!r}")
        link_props = {p for dep, _ in d.links + d.tables for p in fragment_propositions(dep)}
        exceptions = []
        for pid, (frags, exportable, lineno) in sorted(d.exceptions.items()):
            check_ref(pid, lineno, f"schema {sid!r}")
            if pid in link_props:
                raise KBValidationError(
                    f"line {lineno}: schema {sid!r}: exception {pid!r} already appears in its links"
                )
            for frag in frags:
                for p in fragment_propositions(frag):
                    check_ref(p, lineno, f"schema {sid!r} exception {pid!r}")
                check_order(frag, lineno, sid)
                if pid not in fragment_propositions(frag):
                    raise KBValidationError(
                        f"line {lineno}: exception {pid!r} fragment {frag} does not mention it"
                    )
            exceptions.append(
                ExceptionDescriptor(pid, _sort_deps(frags), IMPLICIT, exportable, sid)
            )
        if d.backing is not None and d.backing not in drafts and d.backing not in sets:
            raise DanglingReferenceError(
                f"schema {sid!r} backing {d.backing!r} is not a schema or schema set"
            )
        for pid, p in d.priors.items():
            if pid in priors_seen and priors_seen[pid][0] != p:
                raise KBValidationError(
                    f"conflicting priors for {pid!r}: {priors_seen[pid][0]!r} in schema "
                    f"{priors_seen[pid][1]!r}, {p!r} in schema {sid!r}"
                )
            priors_seen.setdefault(pid, (p, sid))
        schemata[sid] = Schema(
            id=sid,
            links=_sort_deps(l for l, _ in d.links),
            tables=_sort_deps(t for t, _ in d.tables),
            implicit_exceptions=tuple(exceptions),
            backing=d.backing,
            prior_assignments=dict(sorted(d.priors.items())),
            preconditions=tuple(sorted(set(d.preconditions))),
        )

    schema_sets = {}
    for set_id, (members, lineno) in sets.items():
        for m in members:
            if m not in drafts:
                raise DanglingReferenceError(
                    f"line {lineno}: schema set {set_id!r} member {m!r} is not a schema"
                )
        schema_sets[set_id] = SchemaSet(set_id, tuple(members))

    return KnowledgeBase(
        propositions=dict(sorted(props.items())),
        schemata=dict(sorted(schemata.items())),
        schema_sets=dict(sorted(schema_sets.items())),
        index=build_index(schemata),
    )


def load_kb(source: str | Path) -> KnowledgeBase:
    """Load a knowledge base from a path or from raw text."""
    if isinstance(source, Path):
        return parse_kb(source.read_text())
    return parse_kb(source)


def dumps_kb(kb: KnowledgeBase) -> str:
    """Canonical text for ``kb``; ``parse_kb(dumps_kb(kb))`` rebuilds it."""
    out = ["[propositions]"]
    for p in kb.propositions.values():
        out.append(f"{p.id} {p.causal_tier} {p.label}")
    for schema in kb.schemata.values():
        out += ["", f"[schema {schema.id}]"]
        by_statement: dict[int, list[CausalLink]] = {}
        for link in schema.links:
            by_statement.setdefault(link.statement, []).append(link)
        deps = [(links[0].statement, links) for links in by_statement.values()]
        deps += [(t.statement, t) for t in schema.tables]
        for _, dep in sorted(deps, key=lambda x: x[0]):
            if isinstance(dep, JointTable):
                out.append(str(dep))
            else:
                effects = " ".join(l.effect for l in dep)
                l = dep[0]
                out.append(
                    f"link {l.cause} -> {effects} : "
                    f"{l.strength_given_cause!r} {l.strength_given_not_cause!r}"
                )
        for pid, p in schema.prior_assignments.items():
            out.append(f"prior {pid} : {p!r}")
        for pid in schema.preconditions:
            out.append(f"precondition {pid}")
        for exc in schema.implicit_exceptions:
            flag = " exportable" if exc.exportable else ""
            for frag in exc.fragments:
                out.append(f"implicit_exception {exc.proposition}{flag} : {frag}")
        if schema.backing is not None:
            out.append(f"backing {schema.backing}")
    for sset in kb.schema_sets.values():
        out += ["", f"[schema_set {sset.id}]"]
        out += [f"member {m}" for m in sset.members]
    return "\n".join(out) + "\n"
