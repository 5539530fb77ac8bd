//! Comparator models trained under the same temporal protocol as the
//! network: L2-regularized logistic regression and gradient-boosted trees,
//! each tuned with the shared genetic search.

mod gbdt;
mod logreg;
mod tune;

pub use gbdt::{train_gbdt, GbdtHyperparams, Node, Tree, TreeEnsemble, MIN_CHILD_WEIGHT};
pub use logreg::{train_logreg, LinearModel, LogRegConfig, LogRegFit};
pub use tune::{
    tune_gbdt, tune_ga, tune_logreg, GbdtGenome, LogRegGenome, GBDT_L1_RANGE, GBDT_L2_RANGE, LOGREG_L2_RANGE,
};
