"""Toulmin-style argument frames built from schema activations.

A frame has six slots: grounds, claim(s), qualifier, warrant, backing and
rebuttals. Whatever the argument direction, the qualifier always
parameterises the causal direction: P(effect=True | causes), with the
causes taken in sorted order.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

from prenv.errors import ArgumentError, InfeasibleRatioError
from prenv.schema_kb import (
    CAUSAL,
    DIAGNOSTIC,
    CausalLink,
    JointTable,
    KnowledgeBase,
    SchemaActivation,
)

FULL_TABLE = "full_table"
NOISY_OR = "noisy_or"

LEAK_TOLERANCE = 1e-6


class LeakDivergenceWarning(UserWarning):
    """Links for one effect disagree on P(effect | no modelled cause)."""


def _check_prob(value: float, what: str) -> None:
    if not (0.0 <= value <= 1.0):
        raise ArgumentError(f"{what} {value!r} outside [0, 1]")


def configurations(n: int):
    """Parent assignments in table order: first parent most significant, True first."""
    return itertools.product((True, False), repeat=n)


def noisy_or_table(probs: Sequence[float], leak: float) -> tuple[float, ...]:
    rows = []
    for config in configurations(len(probs)):
        fail = 1.0 - leak
        for on, p in zip(config, probs):
            if on:
                fail *= 1.0 - p
        rows.append(1.0 - fail)
    return tuple(rows)


@dataclass(frozen=True)
class Qualifier:
    kind: str
    table: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()
    leak: float = 0.0
    likelihood_ratio: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind == FULL_TABLE:
            n = len(self.table)
            if n == 0 or n & (n - 1):
                raise ArgumentError(f"full table needs 2^m entries, got {n}")
            for v in self.table:
                _check_prob(v, "table entry")
        elif self.kind == NOISY_OR:
            for p in self.probs:
                _check_prob(p, "noisy-or link probability")
            _check_prob(self.leak, "noisy-or leak")
        else:
            raise ArgumentError(f"unknown qualifier kind {self.kind!r}")

    @classmethod
    def full_table(cls, values, likelihood_ratio: float | None = None) -> "Qualifier":
        return cls(FULL_TABLE, table=tuple(float(v) for v in values),
                   likelihood_ratio=likelihood_ratio)

    @classmethod
    def noisy_or(cls, probs, leak: float) -> "Qualifier":
        return cls(NOISY_OR, probs=tuple(float(p) for p in probs), leak=float(leak))

    @property
    def arity(self) -> int:
        if self.kind == FULL_TABLE:
            return len(self.table).bit_length() - 1
        return len(self.probs)

    def expand(self) -> tuple[float, ...]:
        """The equivalent full table (2^arity rows)."""
        if self.kind == FULL_TABLE:
            return self.table
        return noisy_or_table(self.probs, self.leak)

    def prob_true(self, config: Sequence[bool]) -> float:
        if len(config) != self.arity:
            raise ArgumentError(f"expected {self.arity} parent values, got {len(config)}")
        if self.kind == NOISY_OR:
            fail = 1.0 - self.leak
            for on, p in zip(config, self.probs):
                if on:
                    fail *= 1.0 - p
            return 1.0 - fail
        index = 0
        for on in config:
            index = (index << 1) | (0 if on else 1)
        return self.table[index]

    def parameters(self) -> tuple[float, ...]:
        """Scalar entries, in a fixed order, that revision may perturb."""
        if self.kind == FULL_TABLE:
            return self.table
        return (*self.probs, self.leak)

    def with_parameter(self, i: int, value: float) -> "Qualifier":
        params = list(self.parameters())
        params[i] = value
        if self.kind == FULL_TABLE:
            return Qualifier.full_table(params)
        return Qualifier.noisy_or(params[:-1], params[-1])

    def isclose(self, other: "Qualifier", tol: float = 1e-9) -> bool:
        if self.kind != other.kind:
            return False
        a, b = self.parameters(), other.parameters()
        return len(a) == len(b) and all(abs(x - y) <= tol for x, y in zip(a, b))

    def __str__(self) -> str:
        if self.kind == FULL_TABLE:
            return "full_table " + " ".join(repr(v) for v in self.table)
        return f"noisy_or {self.leak!r} " + " ".join(repr(p) for p in self.probs)


@dataclass(frozen=True)
class ArgumentFrame:
    """Six-slot argument frame.

    ``claims`` usually holds one proposition. Several claims appear only when
    one KB statement ties the same strength to several effects; they share
    the qualifier.
    """

    grounds: tuple[str, ...]
    claims: tuple[str, ...]
    qualifier: Qualifier
    warrant: str
    backing: str | None = None
    rebuttals: tuple[str, ...] = ()
    direction: str = CAUSAL

    def __post_init__(self):
        object.__setattr__(self, "grounds", tuple(sorted(self.grounds)))
        object.__setattr__(self, "claims", tuple(sorted(self.claims)))
        object.__setattr__(self, "rebuttals", tuple(sorted(self.rebuttals)))
        if not self.grounds or not self.claims:
            raise ArgumentError("a frame needs grounds and a claim")
        if self.direction not in (CAUSAL, DIAGNOSTIC):
            raise ArgumentError(f"unknown direction {self.direction!r}")
        if self.direction == DIAGNOSTIC and len(self.grounds) != 1:
            raise ArgumentError("diagnostic frames argue from a single effect")
        if set(self.grounds) & set(self.claims):
            raise ArgumentError("grounds and claims overlap")
        if set(self.rebuttals) & (set(self.grounds) | set(self.claims)):
            raise ArgumentError("rebuttals must be disjoint from grounds and claims")
        if self.qualifier.arity != len(self.causes):
            raise ArgumentError(
                f"qualifier arity {self.qualifier.arity} does not match "
                f"{len(self.causes)} causes"
            )

    @property
    def causes(self) -> tuple[str, ...]:
        return self.grounds if self.direction == CAUSAL else self.claims

    @property
    def effects(self) -> tuple[str, ...]:
        return self.claims if self.direction == CAUSAL else self.grounds

    @property
    def claim(self) -> str:
        if len(self.claims) != 1:
            raise ArgumentError(f"frame {self.id} has {len(self.claims)} claims")
        return self.claims[0]

    @property
    def propositions(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.grounds) | set(self.claims)))

    @property
    def id(self) -> str:
        return f"{self.warrant}:{','.join(self.grounds)}=>{','.join(self.claims)}"

    def with_qualifier(self, qualifier: Qualifier) -> "ArgumentFrame":
        return replace(self, qualifier=qualifier)


def check_frame(frame: ArgumentFrame, kb: KnowledgeBase) -> None:
    """Reject frames whose causes are not strictly below their effects."""
    for cause in frame.causes:
        for effect in frame.effects:
            if kb.tier(cause) >= kb.tier(effect):
                raise ArgumentError(
                    f"frame {frame.id}: {frame.direction} argument mixes directions "
                    f"({cause!r} tier {kb.tier(cause)} vs {effect!r} tier {kb.tier(effect)})"
                )


def reconcile_leak(values: Sequence[float], tolerance: float = LEAK_TOLERANCE) -> float:
    """Single leak from several baselines: the maximum, warning on divergence."""
    if not values:
        raise ArgumentError("no baselines to reconcile")
    hi, lo = max(values), min(values)
    if hi - lo > tolerance:
        warnings.warn(
            f"baselines {sorted(set(values))} diverge; using leak {hi!r}",
            LeakDivergenceWarning,
            stacklevel=2,
        )
    return hi


def qualifier_from_causal_strength(
    links: Sequence[CausalLink], leak: float | None = None
) -> Qualifier:
    """Qualifier for one effect from the causal links pointing at it.

    One link gives a two-row table read straight off the link. Several links
    give a noisy-or whose per-cause probabilities are the links'
    P(effect|cause); the leak defaults to the reconciled P(effect|~cause).
    """
    if not links:
        raise ArgumentError("no links to build a qualifier from")
    effects = {l.effect for l in links}
    if len(effects) != 1:
        raise ArgumentError(f"links point at different effects: {sorted(effects)}")
    if len(links) == 1:
        l = links[0]
        return Qualifier.full_table((l.strength_given_cause, l.strength_given_not_cause))
    ordered = sorted(links, key=lambda l: l.cause)
    causes = [l.cause for l in ordered]
    if len(set(causes)) != len(causes):
        raise ArgumentError(f"repeated cause among links: {causes}")
    if leak is None:
        leak = reconcile_leak([l.strength_given_not_cause for l in ordered])
    return Qualifier.noisy_or([l.strength_given_cause for l in ordered], leak)


def qualifier_from_likelihood_ratio(lr: float, baseline: float) -> tuple[float, float]:
    """(P(effect|cause), P(effect|~cause)) from a likelihood ratio and baseline."""
    if not lr > 0 or math.isinf(lr):
        raise ArgumentError(f"likelihood ratio must be positive and finite, got {lr!r}")
    if not 0.0 < baseline <= 1.0:
        raise ArgumentError(f"baseline must lie in (0, 1], got {baseline!r}")
    p = lr * baseline
    if p > 1.0:
        # tolerate rounding from ratios that were computed as p1 / p0
        if p - 1.0 > 1e-12:
            raise InfeasibleRatioError(lr, baseline)
        p = 1.0
    return p, baseline


def _diagnostic_qualifier(link: CausalLink) -> Qualifier:
    """Table for a diagnostic frame, kept as likelihood ratio plus baseline.

    The pair is checked through ``qualifier_from_likelihood_ratio`` but the
    stored entries are the link's own, so no rounding creeps in.
    """
    lr = link.likelihood_ratio
    if 0 < lr < float("inf"):
        p1, _ = qualifier_from_likelihood_ratio(lr, link.strength_given_not_cause)
        assert abs(p1 - link.strength_given_cause) <= 1e-12
    return Qualifier.full_table(
        (link.strength_given_cause, link.strength_given_not_cause), likelihood_ratio=lr
    )


def _dependency_key(deps) -> tuple:
    return tuple(sorted((d.causes, d.statement) for d in deps))


def construct_arguments(activation: SchemaActivation, kb: KnowledgeBase) -> list[ArgumentFrame]:
    """All frames exported by one activation, sorted by id."""
    deps = activation.dependencies()
    if not deps:
        raise ArgumentError(f"activation of {activation.schema_id!r} matched no links")
    schema = kb.schema(activation.schema_id)
    for d in deps:
        for pid in (*d.causes, d.effect):
            kb.require(pid)

    def frame(grounds, claims, qualifier):
        rebuttals = tuple(r for r in schema.rebuttals if r not in grounds and r not in claims)
        f = ArgumentFrame(
            grounds=tuple(grounds),
            claims=tuple(claims),
            qualifier=qualifier,
            warrant=schema.id,
            backing=schema.backing,
            rebuttals=rebuttals,
            direction=activation.direction,
        )
        check_frame(f, kb)
        return f

    frames = []
    if activation.direction == CAUSAL:
        by_effect: dict[str, list] = {}
        for d in deps:
            by_effect.setdefault(d.effect, []).append(d)
        groups: dict[tuple, list[str]] = {}
        for effect, ds in sorted(by_effect.items()):
            groups.setdefault(_dependency_key(ds), []).append(effect)
        for effects in groups.values():
            ds = by_effect[effects[0]]
            if len(ds) == 1 and isinstance(ds[0], JointTable):
                qual = Qualifier.full_table(ds[0].values)
                causes = ds[0].causes
            else:
                qual = qualifier_from_causal_strength(ds)
                causes = tuple(sorted(l.cause for l in ds))
            frames.append(frame(causes, effects, qual))
    else:
        for d in deps:
            if isinstance(d, JointTable):
                frames.append(frame((d.effect,), d.causes, Qualifier.full_table(d.values)))
            else:
                frames.append(frame((d.effect,), (d.cause,), _diagnostic_qualifier(d)))
    return sorted(frames, key=lambda f: f.id)


def construct_argument(activation: SchemaActivation, kb: KnowledgeBase) -> ArgumentFrame:
    """The single frame an activation exports; error if it exports several."""
    frames = construct_arguments(activation, kb)
    if len(frames) != 1:
        raise ArgumentError(
            f"activation of {activation.schema_id!r} exports {len(frames)} frames; "
            "use construct_arguments"
        )
    return frames[0]


def fragment_frames(fragments, warrant: str, backing: str | None) -> list[ArgumentFrame]:
    """Causal frames for exception fragments being promoted into the model."""
    out = []
    for frag in fragments:
        if isinstance(frag, JointTable):
            qual = Qualifier.full_table(frag.values)
        else:
            qual = Qualifier.full_table((frag.strength_given_cause, frag.strength_given_not_cause))
        out.append(ArgumentFrame(frag.causes, (frag.effect,), qual, warrant, backing))
    return out


def frame_to_dict(frame: ArgumentFrame) -> dict:
    q = frame.qualifier
    qual = {"kind": q.kind}
    if q.kind == FULL_TABLE:
        qual["table"] = list(q.table)
    else:
        qual["probs"] = list(q.probs)
        qual["leak"] = q.leak
    if q.likelihood_ratio is not None:
        qual["likelihood_ratio"] = q.likelihood_ratio
    return {
        "grounds": list(frame.grounds),
        "claims": list(frame.claims),
        "qualifier": qual,
        "warrant": frame.warrant,
        "backing": frame.backing,
        "rebuttals": list(frame.rebuttals),
        "direction": frame.direction,
    }


def frame_from_dict(data: dict) -> ArgumentFrame:
    q = data["qualifier"]
    if q["kind"] == FULL_TABLE:
        qual = Qualifier.full_table(q["table"], q.get("likelihood_ratio"))
    else:
        qual = Qualifier.noisy_or(q["probs"], q["leak"])
    return ArgumentFrame(
        grounds=tuple(data["grounds"]),
        claims=tuple(data["claims"]),
        qualifier=qual,
        warrant=data["warrant"],
        backing=data.get("backing"),
        rebuttals=tuple(data.get("rebuttals", ())),
        direction=data["direction"],
    )
