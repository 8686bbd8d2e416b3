"""Probabilistic reasoning environment.

Builds Bayesian networks from schema knowledge through argument frames,
monitors them with a surprise index, and revises them under conflict.
"""

from prenv.argument import (
    ArgumentFrame,
    Qualifier,
    construct_argument,
    construct_arguments,
    qualifier_from_causal_strength,
    qualifier_from_likelihood_ratio,
)
from prenv.inference import (
    enumerate_oracle,
    evidence_probability,
    joint_probability,
    parse_evidence,
    posterior,
)
from prenv.monitor import (
    ConflictReport,
    expected_evidence_probability,
    model_likelihood_ratio,
    surprise_index,
)
from prenv.network import (
    BayesNet,
    Node,
    check_causal_order,
    compile_network,
    merge_arguments_noisy_or,
    reverse_arc,
)
from prenv.revision import (
    evaluate_revision,
    propose_revisions,
    run_revision,
    suspect_arguments,
)
from prenv.schema_kb import (
    KnowledgeBase,
    activate_backward,
    activate_forward,
    expand_exceptions,
    load_kb,
)

__version__ = "0.1.0"
