//! Fog resource-provisioning simulator.
//!
//! A desk-scale, fully seeded model of an ML-driven provisioning loop for fog
//! computing: workload requests are clustered with a two-phase k-means scheme
//! (offline fit plus silhouette-gated online classification), each cluster is
//! matched to a VM offer sized for its corner demand, and service is played
//! out on FCFS queues to produce resource-utilization and task-drop metrics.
//!
//! On top of the legitimate pipeline the crate implements a multiphase
//! black-box attack (label probing, boundary refinement, projected-gradient
//! evasion, causative poisoning of the online stream) and a proactive defense
//! (adversarial training of the centroid classifier), so that the four
//! scenario kinds — `vm-fixed`, `dispatcher`, `attacked`, `hardened` — can be
//! compared on paired seeds.
//!
//! All randomness flows from a single master seed through named substreams;
//! identical `(config, seed)` inputs reproduce byte-identical reports.

pub mod attack;
pub mod cluster;
pub mod config;
pub mod dispatch;
pub mod domain;
pub mod error;
pub mod harden;
pub mod sim;

pub use attack::{
    causative_inject, craft_evasions, find_boundary_pairs, probe_labels, refine_boundary,
    AttackConfig, AttackRecon, BoundaryEstimate, BoundaryPair, CountingOracle, EvasionResult,
    LabelOracle,
};
pub use cluster::{
    classify_online, kmeans_offline, level_init, random_init, silhouette_score, ClassifyPath,
    ClusterModel, OnlineConfig, OnlineOutcome,
};
pub use config::ExperimentConfig;
pub use dispatch::{
    alpha_tilde, cluster_demand_point, match_offers, per_to_ebn0, ClusterPlan, Ebn0Table,
    MatchPlan, VmCatalog,
};
pub use domain::{
    fit_normalizer, generate_workloads, FeatureRanges, FeatureNormalizer, NormalizedPoint,
    VmOffer, Workload, FEATURES,
};
pub use error::{Error, Result};
pub use harden::{
    adversarial_train, robust_accuracy, soft_assign, training_cost_estimate,
    worst_case_perturbation, CostEstimate, HardeningConfig, HardeningOutcome, SoftClassifier,
};
pub use sim::{
    resource_utilization, run_scenario, simulate_service, task_drop_ratio, AttackStats,
    DefenseStats, ScenarioKind, ScenarioReport, ServiceOutcome,
};
