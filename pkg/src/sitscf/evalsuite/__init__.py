from .ablation import AblationReport, VariantResult, ablation_run, ablation_variants
from .iforest import (IsolationForest, NotFittedError, anomaly_score, c_factor, harmonic, iforest_fit,
                      iforest_score)
from .metrics import (AveragePerturbation, PerturbationStats, PlausibilityReport, TransitionMatrix,
                      average_perturbation, entropy, localization_curve, mutual_information,
                      normalized_mutual_information, perturbation_stats, plausibility_report,
                      transition_matrix, write_average_perturbation)

nmi = normalized_mutual_information

__all__ = [
    "AblationReport", "AveragePerturbation", "IsolationForest", "NotFittedError", "PerturbationStats",
    "PlausibilityReport", "TransitionMatrix", "VariantResult", "ablation_run", "ablation_variants",
    "anomaly_score", "average_perturbation", "c_factor", "entropy", "harmonic", "iforest_fit",
    "iforest_score", "localization_curve", "mutual_information", "nmi", "normalized_mutual_information",
    "perturbation_stats", "plausibility_report", "transition_matrix", "write_average_perturbation",
]
