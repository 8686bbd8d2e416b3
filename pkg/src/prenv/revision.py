"""Conflict-driven model revision.

One pass: measure conflict, rank suspect arguments, propose candidate
models from rebuttals, implicit and background exceptions or a qualifier
adjustment, and adopt at most one candidate by likelihood ratio.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from prenv.argument import ArgumentFrame, LeakDivergenceWarning, fragment_frames
from prenv.errors import (
    CompileError,
    IncomparableModelsError,
    InferenceError,
    PreError,
    RevisionError,
)
from prenv.inference import Evidence, posterior
from prenv.monitor import DEFAULT_THRESHOLD, ConflictReport, model_likelihood_ratio, surprise_index
from prenv.network import BayesNet, compile_network, dumps_net
from prenv.schema_kb import BACKGROUND, KnowledgeBase, expand_exceptions

log = logging.getLogger(__name__)

DEFAULT_GRID = (0.01, *(round(0.05 * k, 2) for k in range(1, 20)), 0.99)
DEFAULT_ACCEPTANCE_RATIO = 10.0
DEFAULT_MAX_CANDIDATES = 5
DEFAULT_REBUTTAL_CUTOFF = 0.5

PROMOTE_REBUTTAL = "promote_rebuttal"
PROMOTE_IMPLICIT = "promote_implicit_exception"
PROMOTE_BACKGROUND = "promote_background_exception"
ADJUST_QUALIFIER = "adjust_qualifier"


def restrict(evidence: Evidence, net: BayesNet) -> dict[str, bool]:
    return {k: v for k, v in sorted(evidence.items()) if k in net}


@dataclass(frozen=True)
class SuspicionScore:
    argument: str
    sensitivity: float
    rebuttal_posterior: float
    warrant_invalid: bool
    base_lr_star: float | None = None
    best_lr_star: float | None = None
    best_parameter: int | None = None
    best_value: float | None = None
    rebuttal_probable: bool = False

    def rank_key(self):
        return (not self.warrant_invalid, -self.rebuttal_posterior, -self.sensitivity,
                self.argument)


@dataclass(frozen=True)
class RevisionCandidate:
    kind: str
    target: str
    frames: tuple[ArgumentFrame, ...]
    description: str
    net: BayesNet = field(repr=False, compare=False)


@dataclass(frozen=True)
class Decision:
    adopt: bool
    ratio: float
    compared_on: tuple[str, ...]
    candidate: RevisionCandidate


@dataclass(frozen=True)
class RevisionConfig:
    threshold: float = DEFAULT_THRESHOLD
    acceptance_ratio: float = DEFAULT_ACCEPTANCE_RATIO
    max_candidates: int = DEFAULT_MAX_CANDIDATES
    rebuttal_cutoff: float = DEFAULT_REBUTTAL_CUTOFF
    grid: tuple[float, ...] = DEFAULT_GRID


def _replace_frame(frames, target: ArgumentFrame, new: ArgumentFrame):
    return [new if f.id == target.id else f for f in frames]


def _lr_star(frames, kb, evidence) -> float | None:
    net = compile_network(frames, kb)
    obs = restrict(evidence, net)
    if not obs:
        return None
    return surprise_index(net, obs).lr_star


def _warrant_invalid(frame: ArgumentFrame, kb: KnowledgeBase, evidence: Evidence) -> bool:
    schemata = [kb.schema(frame.warrant)]
    if frame.backing is not None:
        schemata.extend(kb.resolve_backing(frame.backing))
    return any(evidence.get(p) is False for s in schemata for p in s.preconditions)


def _rebuttal_posterior(frame, frames, kb, net, evidence, rebuttal) -> float:
    if rebuttal in evidence:
        return 1.0 if evidence[rebuttal] else 0.0
    if rebuttal in net:
        return posterior(net, rebuttal, restrict(evidence, net))
    exc = kb.schema(frame.warrant).exception(rebuttal)
    if exc is None:
        return 0.0
    try:
        extended = compile_network(
            list(frames) + fragment_frames(exc.fragments, frame.warrant, frame.backing), kb
        )
        return posterior(extended, rebuttal, restrict(evidence, extended))
    except (CompileError, InferenceError) as exc_:
        log.info("cannot score rebuttal %s of %s: %s", rebuttal, frame.id, exc_)
        return 0.0


def suspect_arguments(
    net: BayesNet,
    frames: Sequence[ArgumentFrame],
    kb: KnowledgeBase,
    evidence: Evidence,
    grid: Sequence[float] = DEFAULT_GRID,
    rebuttal_cutoff: float = DEFAULT_REBUTTAL_CUTOFF,
) -> list[SuspicionScore]:
    """Score and rank every frame as a possible source of conflict.

    Ranking is lexicographic: invalidated warrants first, then the most
    probable rebuttal, then the largest surprise-index gain available by
    changing one qualifier entry.
    """
    obs = restrict(evidence, net)
    base = surprise_index(net, obs).lr_star if obs else None
    scores = []
    for frame in sorted(frames, key=lambda f: f.id):
        best, best_param, best_value = base, None, None
        if base is not None:
            params = frame.qualifier.parameters()
            for i, current in enumerate(params):
                for value in grid:
                    if value == current:
                        continue
                    trial = frame.with_qualifier(frame.qualifier.with_parameter(i, value))
                    try:
                        with warnings.catch_warnings():
                            warnings.simplefilter("ignore", LeakDivergenceWarning)
                            lr = _lr_star(_replace_frame(frames, frame, trial), kb, evidence)
                    except PreError:
                        continue
                    if lr is not None and lr > best:
                        best, best_param, best_value = lr, i, value
        rebuttal_post = max(
            (_rebuttal_posterior(frame, frames, kb, net, evidence, r) for r in frame.rebuttals),
            default=0.0,
        )
        scores.append(
            SuspicionScore(
                argument=frame.id,
                sensitivity=0.0 if base is None else max(0.0, best - base),
                rebuttal_posterior=rebuttal_post,
                warrant_invalid=_warrant_invalid(frame, kb, evidence),
                base_lr_star=base,
                best_lr_star=best,
                best_parameter=best_param,
                best_value=best_value,
                rebuttal_probable=rebuttal_post > rebuttal_cutoff,
            )
        )
    return sorted(scores, key=SuspicionScore.rank_key)


def propose_revisions(
    kb: KnowledgeBase,
    suspects: Sequence[SuspicionScore],
    frames: Sequence[ArgumentFrame],
    max_candidates: int = DEFAULT_MAX_CANDIDATES,
) -> list[RevisionCandidate]:
    """Candidate models for the ranked suspects, at most ``max_candidates`` in total.

    Per suspect, in order: promote its rebuttals, promote the warrant's
    remaining implicit exceptions, promote background exceptions from the
    backing, then move the qualifier entry to its best grid value. Candidates
    that fail to compile are dropped.
    """
    if max_candidates <= 0:
        return []
    by_id = {f.id: f for f in frames}
    present = {p for f in frames for p in f.propositions}
    out: list[RevisionCandidate] = []
    seen: set[str] = set()

    def offer(kind, target, new_frames, description):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", LeakDivergenceWarning)
                net = compile_network(new_frames, kb)
        except PreError as exc:
            log.info("dropping %s candidate for %s: %s", kind, target, exc)
            return
        key = dumps_net(net)
        if key in seen:
            return
        seen.add(key)
        frames_out = tuple(sorted(new_frames, key=lambda f: f.id))
        out.append(RevisionCandidate(kind, target, frames_out, description, net))

    for score in suspects:
        frame = by_id.get(score.argument)
        if frame is None:
            raise RevisionError(f"suspect {score.argument!r} is not among the frames")
        schema = kb.schema(frame.warrant)
        promotions = []
        for r in frame.rebuttals:
            exc = schema.exception(r)
            if exc is not None and r not in present:
                promotions.append((PROMOTE_REBUTTAL, exc))
        for exc in schema.implicit_exceptions:
            if not exc.exportable and exc.proposition not in present:
                promotions.append((PROMOTE_IMPLICIT, exc))
        if schema.backing is not None:
            for exc in expand_exceptions(kb, schema.id, BACKGROUND, present):
                promotions.append((PROMOTE_BACKGROUND, exc))

        for kind, exc in promotions:
            if len(out) >= max_candidates:
                return out
            added = fragment_frames(exc.fragments, frame.warrant, frame.backing)
            offer(kind, frame.id, list(frames) + added,
                  f"add {exc.proposition} with " + "; ".join(str(f) for f in exc.fragments))

        if score.best_parameter is not None and len(out) < max_candidates:
            i, value = score.best_parameter, score.best_value
            old = frame.qualifier.parameters()[i]
            trial = frame.with_qualifier(frame.qualifier.with_parameter(i, value))
            offer(ADJUST_QUALIFIER, frame.id, _replace_frame(frames, frame, trial),
                  f"qualifier entry {i}: {old!r} -> {value!r}")
        if len(out) >= max_candidates:
            break
    return out


def evaluate_revision(
    current: BayesNet,
    candidate: RevisionCandidate,
    evidence: Evidence,
    acceptance_ratio: float = DEFAULT_ACCEPTANCE_RATIO,
) -> Decision:
    """Adopt iff P(e | candidate) / P(e | current) exceeds ``acceptance_ratio``.

    Only observations on nodes present in both models are compared.
    """
    common = {k: v for k, v in sorted(evidence.items()) if k in current and k in candidate.net}
    if not common:
        raise IncomparableModelsError("models share no observed node")
    ratio = model_likelihood_ratio(candidate.net, current, common)
    return Decision(ratio > acceptance_ratio, ratio, tuple(common), candidate)


# --------------------------------------------------------------------------
# one full pass


@dataclass
class RevisionOutcome:
    report: ConflictReport
    suspects: list[SuspicionScore] = field(default_factory=list)
    candidates: list[RevisionCandidate] = field(default_factory=list)
    decisions: list[Decision] = field(default_factory=list)
    adopted: RevisionCandidate | None = None
    after: ConflictReport | None = None
    transcript: list[str] = field(default_factory=list)


def _g(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, bool):
        return "true" if x else "false"
    return f"{x:.6g}"


def run_revision(
    kb: KnowledgeBase,
    frames: Sequence[ArgumentFrame],
    net: BayesNet,
    evidence: Mapping[str, bool],
    config: RevisionConfig = RevisionConfig(),
    force: bool = False,
) -> RevisionOutcome:
    """Monitor, and if conflict is triggered (or ``force``), attempt one revision."""
    obs = restrict(evidence, net)
    if not obs:
        raise RevisionError("no evidence on the current model's nodes")
    report = surprise_index(net, obs, config.threshold)
    out = RevisionOutcome(report)
    t = out.transcript
    t.append(
        f"trigger lr_star={_g(report.lr_star)} threshold={_g(report.threshold)} "
        f"triggered={_g(report.triggered)}"
    )
    if not report.triggered and not force:
        t.append("no revision needed")
        return out

    out.suspects = suspect_arguments(net, frames, kb, evidence, config.grid,
                                     config.rebuttal_cutoff)
    for rank, s in enumerate(out.suspects, start=1):
        t.append(
            f"suspect {rank} {s.argument} warrant_invalid={_g(s.warrant_invalid)} "
            f"rebuttal_posterior={_g(s.rebuttal_posterior)} sensitivity={_g(s.sensitivity)} "
            f"best_lr_star={_g(s.best_lr_star)}"
        )
    out.candidates = propose_revisions(kb, out.suspects, frames, config.max_candidates)
    for k, c in enumerate(out.candidates, start=1):
        t.append(f"candidate {k} {c.kind} target={c.target} {c.description}")
    for k, c in enumerate(out.candidates, start=1):
        d = evaluate_revision(net, c, evidence, config.acceptance_ratio)
        out.decisions.append(d)
        t.append(f"evaluate {k} ratio={_g(d.ratio)} {'adopt' if d.adopt else 'retain'}")
    for k, d in enumerate(out.decisions, start=1):
        if d.adopt:
            out.adopted = d.candidate
            t.append(f"decision adopt candidate={k}")
            after_obs = restrict(evidence, d.candidate.net)
            out.after = surprise_index(d.candidate.net, after_obs, config.threshold)
            t.append(
                f"after lr_star={_g(out.after.lr_star)} triggered={_g(out.after.triggered)}"
            )
            break
    else:
        t.append("decision retain")
    return out
