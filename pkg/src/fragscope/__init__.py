from ._version import __version__
from .attribution import (
    AttributionMatrix,
    KernelConfig,
    brute_force_shapley,
    explain,
    kernel_shap,
    linear_shap,
    taylor_attribution,
)
from .audit import (
    AuditReport,
    CorrelationMatrix,
    VifTable,
    audit,
    correlation_clusters,
    correlation_matrix,
    prune_by_audit,
    vif,
)
from .caa import (
    ClusterMapping,
    FilteredAttributionMatrix,
    caa_filter,
    cluster_importance_ranking,
    filtered_stability,
)
from .data import (
    BootstrapPlan,
    DatasetSchema,
    FeatureMatrix,
    LabelVector,
    bootstrap_indices,
    load_csv,
    standardize,
    train_test_split,
    write_csv,
)
from .fragility import (
    FragilityReport,
    StabilityReport,
    bootstrap_attributions,
    fragile_rank_stability,
    fragility_scores,
    kendall_tau,
    stability_report,
    top_fragile,
)
from .fragscope import (
    Attributes,
    FragscopeError,
    InputError,
    NumericalError,
    Study,
    ValidationError,
)
from .models import (
    MetricSet,
    ModelParams,
    ModelSpec,
    TrainConfig,
    evaluate,
    fit_logistic,
    fit_mlp,
    fit_ols,
    predict_proba,
)
from .pipeline import PipelineReport, percentage_drop_table, run_pipeline
from .sharp import AblationResult, SharpConfig, lambda_ablation, train_sharp
from .theorem import (
    SyntheticSpec,
    TheoremCheckReport,
    generate_synthetic,
    gram_vif,
    non_identifiability_check,
    ols_variance_identity_check,
    variance_bound_experiment,
)

__all__ = [
    # classes and exceptions
    "Study",
    "Attributes",
    "FragscopeError",
    "InputError",
    "ValidationError",
    "NumericalError",
    "FeatureMatrix",
    "LabelVector",
    "BootstrapPlan",
    "DatasetSchema",
    "CorrelationMatrix",
    "VifTable",
    "AuditReport",
    "ModelParams",
    "ModelSpec",
    "TrainConfig",
    "MetricSet",
    "AttributionMatrix",
    "KernelConfig",
    "FragilityReport",
    "StabilityReport",
    "ClusterMapping",
    "FilteredAttributionMatrix",
    "SharpConfig",
    "AblationResult",
    "SyntheticSpec",
    "TheoremCheckReport",
    "PipelineReport",
    # version
    "__version__",
    # data
    "load_csv",
    "write_csv",
    "standardize",
    "bootstrap_indices",
    "train_test_split",
    # audit
    "correlation_matrix",
    "correlation_clusters",
    "vif",
    "audit",
    "prune_by_audit",
    # models
    "fit_ols",
    "fit_logistic",
    "fit_mlp",
    "predict_proba",
    "evaluate",
    # attribution
    "linear_shap",
    "taylor_attribution",
    "kernel_shap",
    "brute_force_shapley",
    "explain",
    # fragility
    "bootstrap_attributions",
    "fragility_scores",
    "kendall_tau",
    "stability_report",
    "fragile_rank_stability",
    "top_fragile",
    # filter and regulariser
    "caa_filter",
    "cluster_importance_ranking",
    "filtered_stability",
    "train_sharp",
    "lambda_ablation",
    # synthetic checks
    "generate_synthetic",
    "gram_vif",
    "ols_variance_identity_check",
    "variance_bound_experiment",
    "non_identifiability_check",
    # pipeline
    "run_pipeline",
    "percentage_drop_table",
]
