"""pcmsel: rank a zoo of pre-trained models for a target task without fine-tuning.

Probe features in, ranked models out: proxy classifiers (kNN / linear / SVM),
distribution scorers (PARC / H-Score), metadata baselines, budgeted
selection, and NDCG@k / Rel@k evaluation against an ingested ground-truth
accuracy table.
"""

from .distribution import LabelEncoding, one_hot_labels, score_hscore, score_parc
from .engine import (
    ALL_METHODS,
    BASELINE_METHODS,
    DISTRIBUTION_METHODS,
    LEARNING_METHODS,
    PROXY_METHODS,
    RankedList,
    SelectionRun,
    baseline_dataset_size,
    baseline_model_size,
    rank_models,
    run_from_dict,
    run_to_dict,
    score_zoo,
    select_top_b,
    truth_ordering,
)
from .errors import NumericalError, PcmselError, ValidationError
from .metrics import (
    EvaluationResult,
    dcg_at_k,
    evaluate_selection,
    evaluation_to_dict,
    format_evaluation_table,
    ndcg_at_k,
    rel_at_k,
)
from .proxies import (
    LinearParams,
    ProxyConfig,
    SvmParams,
    TransferabilityScore,
    score_knn,
    score_linear,
    score_svm,
)
from .stats import (
    DissimilarityMatrix,
    class_conditional_means,
    covariance_matrix,
    pairwise_dissimilarity,
    pearson,
    rank_with_ties,
    regularized_inverse,
    spearman,
)
from .synth import GeneratedZoo, ZooSpec, generate_zoo
from .zoo import (
    GroundTruthTable,
    ModelRecord,
    ProbeDataset,
    ZooManifest,
    load_features,
    load_manifest,
    load_truth,
    read_fmx,
    sample_indices,
    sample_probe,
    save_features,
    save_manifest,
    save_truth,
    stratified_split,
)

__version__ = "0.1.0"
