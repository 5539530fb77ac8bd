//! Post-hoc auditing of a trained model: subgroup discrimination and the
//! wealth gradient across regions, survey-design bootstrap intervals,
//! permutation importance and kernel SHAP attributions.

mod bootstrap;
mod importance;
mod shap;
mod subgroup;

pub use bootstrap::{design_bootstrap, BootstrapCI, BootstrapConfig, BootstrapMetric, LonelyPsu};
pub use importance::{group_importance, permutation_importance, Importance};
pub use shap::{
    kernel_shap, sample_background, shap_ranking, write_shap_csv, RankedAttribution, ShapConfig, ShapExplanation,
    ShapOutput, ShapRanking,
};
pub use subgroup::{equity_gradient, subgroup_eval, subgroup_eval_scores, GroupMetrics, Grouping, SubgroupReport};
