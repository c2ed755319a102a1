"""Balance identity-labelled image datasets over a demographic score space.

The package works on manifests: CSV files mapping images to identities,
group labels and per-group membership scores. From there it computes
per-identity and per-group score aggregates, removes identities greedily
until the group diagonal balances, relabels identities by their dominant
score, and reports fairness metrics over the result.
"""

from .errors import (
    DataError,
    InternalInvariantError,
    ManifestError,
    MetricsError,
    SamplingError,
    ScoringError,
    SynthError,
)
from .manifest import (
    DEFAULT_GROUPS,
    GroupSet,
    IdentityRecord,
    ImageRecord,
    Manifest,
    load_manifest,
    summarize,
    write_manifest,
)
from .metrics import (
    FairnessReport,
    PairRecord,
    RunPoint,
    fairness_report,
    group_accuracy,
    pareto_frontier,
    read_pairs_csv,
    read_runs_csv,
    runs_to_points,
    write_frontier_csv,
)
from .rng import SplitMix64
from .sampling import (
    RemovalEvent,
    RemovalTrace,
    equilibrium_step,
    read_diag_series,
    sample_naive,
    sample_protocol,
    sample_random,
    sample_single_group,
    write_evolution,
    write_removal_log,
)
from .scoring import (
    EsMatrix,
    IdsTable,
    Protocol,
    ScatterResult,
    compute_es,
    compute_ids,
    relabel,
    score_scatter,
    write_es_csv,
    write_ids_csv,
    write_scatter_csv,
)
from .synth import SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "DEFAULT_GROUPS",
    "EsMatrix",
    "FairnessReport",
    "GroupSet",
    "IdentityRecord",
    "IdsTable",
    "ImageRecord",
    "InternalInvariantError",
    "Manifest",
    "ManifestError",
    "MetricsError",
    "PairRecord",
    "Protocol",
    "RemovalEvent",
    "RemovalTrace",
    "RunPoint",
    "SamplingError",
    "ScatterResult",
    "ScoringError",
    "SplitMix64",
    "SynthConfig",
    "SynthError",
    "compute_es",
    "compute_ids",
    "equilibrium_step",
    "fairness_report",
    "generate",
    "group_accuracy",
    "load_manifest",
    "pareto_frontier",
    "read_diag_series",
    "read_pairs_csv",
    "read_runs_csv",
    "relabel",
    "runs_to_points",
    "sample_naive",
    "sample_protocol",
    "sample_random",
    "sample_single_group",
    "score_scatter",
    "summarize",
    "write_es_csv",
    "write_evolution",
    "write_frontier_csv",
    "write_ids_csv",
    "write_manifest",
    "write_removal_log",
    "write_scatter_csv",
    "__version__",
]
