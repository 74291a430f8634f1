//! Retrieval metrics over simulation logs, plus interpretability and fairness
//! measures over representations.

mod dci;
mod distribution;
mod fairness;
mod retrieval;

pub use dci::{
    dci, dci_report, fit_importance, informativeness, normalized_entropy, split_indices, DciConfig, DciReport,
    DciScores, ImportanceMatrix, Informativeness, Regressor,
};
pub use distribution::{distribution_similarity, total_variation, AttributeDistribution};
pub use fairness::{fairness, knn_predict, Attribute, FairnessConfig, FairnessReport, Heatmap};
pub use retrieval::{
    average_convergent_iterations, average_relevance, convergence_score, percentile_at, percentile_rank,
    retrieval_metrics, RetrievalMetrics,
};
