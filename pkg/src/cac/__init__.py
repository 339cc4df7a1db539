"""Black-box adversarial attack with a provable alternation bound.

A query-budgeted attacker distills the target model into a tiny dense
surrogate, runs momentum-FGSM against the surrogate inside an l-inf ball,
and contracts the ball around every rejected candidate. The contraction
factor, the surrogate's margin on its distillation set, and a bound on its
jacobian norm combine into a certificate for the number of alternations.
"""

from .bench import (
    ExperimentReport,
    ExperimentSpec,
    MetricsRow,
    SyntheticTask,
    compute_metrics,
    gen_synthetic_task,
    random_baseline,
    run_experiment,
)
from .engine import (
    AttackConfig,
    AttackResult,
    AttackTrace,
    attack_with_restarts,
    cac_attack,
    cac_attack_batch,
)
from .guarantee import Certificate, iteration_bound
from .net import Surrogate, load_weights, save_weights
from .oracle import InProcessOracle, OracleSession, QueryLedger, RemoteOracle

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "AttackResult",
    "AttackTrace",
    "Certificate",
    "ExperimentReport",
    "ExperimentSpec",
    "InProcessOracle",
    "MetricsRow",
    "OracleSession",
    "QueryLedger",
    "RemoteOracle",
    "Surrogate",
    "SyntheticTask",
    "attack_with_restarts",
    "cac_attack",
    "cac_attack_batch",
    "compute_metrics",
    "gen_synthetic_task",
    "iteration_bound",
    "load_weights",
    "random_baseline",
    "run_experiment",
    "__version__",
]
