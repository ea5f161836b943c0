"""Laboratory for a K-repetition grant-free access protocol.

A device population contends for resource blocks by sending erasure-coded
packet replicas; the receiver decodes exclusive blocks and iteratively
cancels the interference of whatever it recovered.  The package models
that system three ways and cross-checks them against each other:

- ``decoder``: oracle set-level decoder over explicit access maps;
- ``branching``: a generic interference canceller that materializes
  residual-matrix hypotheses and meters its own work;
- ``analytics``: exact, log-domain and scale-free closed forms for the
  access probability, plus the message-delay identity;
- ``montecarlo``: vectorized reproducible trial engine;
- ``cli``: experiment front end (also installed as the ``kgfa`` script).
"""

from .analytics import (
    AccessProbability,
    ProbabilityValue,
    access_probability,
    approx_access_probability,
    approx_p_d1,
    approx_p_d2,
    message_delay,
    p_d1,
    p_d2,
    resolve_rb_count,
)
from .branching import (
    MaiSignal,
    MatrixSet,
    ResidualMatrix,
    build_near_exclusive_map,
    dec_crc,
    ic_apply,
    mai_generate,
    run_generic_iic,
)
from .combinatorics import (
    BigRational,
    FiniteEventSpace,
    SignedLog,
    binomial,
    binomial_int,
)
from .core import (
    AccessMap,
    DecodeOutcome,
    OperationCounters,
    PacketReplica,
    SystemConfig,
    build_access_map,
    generate_access_map,
    parse_access_map,
)
from .decoder import decode_stf, du_success, rs_recoverable
from .errors import ResourceBudgetError
from .montecarlo import (
    TrialReport,
    derive_seed,
    estimate_access_probability,
    estimate_message_delay,
    sweep,
)

__version__ = "0.1.0"

__all__ = [
    "AccessMap",
    "AccessProbability",
    "BigRational",
    "DecodeOutcome",
    "FiniteEventSpace",
    "MaiSignal",
    "MatrixSet",
    "OperationCounters",
    "PacketReplica",
    "ProbabilityValue",
    "ResidualMatrix",
    "ResourceBudgetError",
    "SignedLog",
    "SystemConfig",
    "TrialReport",
    "access_probability",
    "approx_access_probability",
    "approx_p_d1",
    "approx_p_d2",
    "binomial",
    "binomial_int",
    "build_access_map",
    "build_near_exclusive_map",
    "dec_crc",
    "decode_stf",
    "derive_seed",
    "du_success",
    "estimate_access_probability",
    "estimate_message_delay",
    "generate_access_map",
    "ic_apply",
    "mai_generate",
    "message_delay",
    "p_d1",
    "p_d2",
    "parse_access_map",
    "resolve_rb_count",
    "rs_recoverable",
    "run_generic_iic",
    "sweep",
]
