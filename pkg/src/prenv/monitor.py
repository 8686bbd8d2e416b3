"""Model adequacy: the surprise index and the inter-model likelihood ratio.

The surprise index compares how likely the observed data are under the model
with how likely the model expected its own data to be:

    lr_star = P(d_obs) / E[P(d)],   E[P(d)] = sum_d P(d)^2

where d ranges over every joint realisation of the observed nodes. Under the
model, E[lr_star] = 1, so values far below 1 mean the data surprised it.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable

from prenv.errors import (
    DegenerateModelError,
    ImpossibleEvidenceError,
    NetTooLargeError,
    UnknownNodeError,
)
from prenv.inference import Evidence, evidence_probability, marginal_table
from prenv.network import BayesNet

DEFAULT_THRESHOLD = 0.1
MAX_OBSERVED = 20

CUMULATIVE = "cumulative"
INCREMENTAL = "incremental"


@dataclass(frozen=True)
class ConflictReport:
    evidence_probability: float
    expected_evidence_probability: float
    lr_star: float
    triggered: bool
    threshold: float
    observed: tuple[str, ...] = ()
    mode: str = CUMULATIVE

    def to_text(self) -> str:
        rows = [
            ("observed", " ".join(self.observed)),
            ("mode", self.mode),
            ("evidence_probability", f"{self.evidence_probability:.12g}"),
            ("expected_evidence_probability", f"{self.expected_evidence_probability:.12g}"),
            ("lr_star", f"{self.lr_star:.12g}"),
            ("threshold", f"{self.threshold:.12g}"),
            ("triggered", "true" if self.triggered else "false"),
        ]
        return "".join(f"{k}: {v}\n" for k, v in rows)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["observed"] = list(self.observed)
        return d


def expected_evidence_probability(
    net: BayesNet, observed: Iterable[str], given: Evidence = {}
) -> float:
    """Prior expectation of the probability of the data on ``observed``.

    With ``given``, both the realisations and their probabilities are
    conditioned on it.
    """
    observed = tuple(sorted(set(observed)))
    if not observed:
        raise ValueError("observed set is empty")
    if len(observed) > MAX_OBSERVED:
        raise NetTooLargeError(
            f"{len(observed)} observed nodes exceeds the exact-expectation cap {MAX_OBSERVED}"
        )
    table = marginal_table(net, observed, given).values
    if given:
        z = float(table.sum())
        if z <= 0.0:
            raise ImpossibleEvidenceError(f"conditioning evidence {dict(given)} is impossible")
        table = table / z
    return float((table * table).sum())


def surprise_index(
    net: BayesNet,
    evidence: Evidence,
    threshold: float = DEFAULT_THRESHOLD,
    given: Evidence | None = None,
) -> ConflictReport:
    """Surprise index of ``evidence`` under ``net``.

    With ``given`` (incremental mode) the new observations are scored
    against the model already conditioned on the earlier ones.
    """
    if not evidence:
        raise ValueError("surprise index needs at least one observation")
    given = dict(given or {})
    clash = set(given) & set(evidence)
    if clash:
        raise ValueError(f"nodes {sorted(clash)} appear in both evidence and given")
    if given:
        p_given = evidence_probability(net, given)
        if p_given <= 0.0:
            raise ImpossibleEvidenceError(f"conditioning evidence {given} is impossible")
        p_data = evidence_probability(net, {**given, **evidence}) / p_given
    else:
        p_data = evidence_probability(net, evidence)
    expected = expected_evidence_probability(net, evidence, given)
    if expected <= 0.0:
        raise DegenerateModelError("expected evidence probability is zero")
    lr_star = p_data / expected
    return ConflictReport(
        evidence_probability=p_data,
        expected_evidence_probability=expected,
        lr_star=lr_star,
        triggered=lr_star < threshold,
        threshold=threshold,
        observed=tuple(sorted(evidence)),
        mode=INCREMENTAL if given else CUMULATIVE,
    )


def model_likelihood_ratio(net1: BayesNet, net2: BayesNet, evidence: Evidence) -> float:
    """P(evidence | net1) / P(evidence | net2); ``inf`` when only net2 rules it out."""
    for node in evidence:
        for net in (net1, net2):
            if node not in net:
                raise UnknownNodeError(node)
    p1 = evidence_probability(net1, evidence)
    p2 = evidence_probability(net2, evidence)
    if p2 == 0.0:
        if p1 == 0.0:
            raise ImpossibleEvidenceError("evidence is impossible under both models")
        return math.inf
    return p1 / p2
