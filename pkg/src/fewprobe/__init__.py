"""Few-shot classification probes over fixed embedding vectors."""

from .core import (
    BinaryFingerprint,
    EmbeddingSet,
    Episode,
    LabelledSample,
    TrainConfig,
    normalize_embedding,
)
from .probes import (
    FreeOptParams,
    LinearProbeParams,
    QuadraticProbeParams,
    TrainTrace,
    free_opt_fit,
    linear_probe_fit,
    linear_probe_predict,
    loss_decomposition,
    modified_loss,
    prototype_predict,
    quadratic_probe_fit,
    quadratic_probe_predict,
    simsearch_score,
    knn_score,
    tanimoto,
)
from .metrics import (
    EvalReport,
    ScoredQuery,
    aggregate,
    average_precision,
    delta_aucpr,
    hitrate_at_percent,
)
from .episodes import (
    EpisodeSpec,
    TaskRecord,
    TaskSample,
    binarize_by_clipped_median,
    deduplicate_measurements,
    filter_tasks,
    sample_episode,
    subsample_screening_task,
)

__version__ = "0.1.0"
