//! Learning a dynamic VCG mechanism on episodic linear MDPs.
//!
//! The crate is `no_std` with `alloc`. It holds the pure algorithmic parts:
//! instance generators and samplers, regularized Gram/ridge machinery,
//! reward-free exploration, optimistic/pessimistic planning and policy
//! evaluation, the online mechanism loop, an exact dynamic-programming
//! oracle for the Markov VCG benchmark, and regret accounting.
//!
//! IO, configuration files, experiment orchestration and the CLI live in the
//! `vcg-sim` crate.
#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod dataset;
pub mod exploitation;
pub mod exploration;
pub mod instance;
pub mod mechanism;
pub mod oracle;
pub mod policy;
pub mod regression;
pub mod regret;
pub mod rng;

mod error;

pub use error::{Error, Result};

pub use dataset::{DataSummary, Dataset, Episode, StepSummary};
pub use exploitation::{
    evaluate_policy, index_set, plan, truncation_alpha, Estimate, LsviParams, PlanResult,
    Planner, RewardSelector, Schedule,
};
pub use exploration::{explore, explore_with_trace, BetaForm, ExplorationTrace, ExploreParams, Explorer};
pub use instance::{
    make_hard_instance, make_onehot_tabular, HardVariant, InstanceTables, LinearMdpInstance,
    NoiseModel, TabularSpec, TransitionKind,
};
pub use mechanism::{
    reported_reward, run_vcg_linmdp, MechanismConfig, Phase, ReportingStrategy, RoundRecord,
    RunLog, Transform,
};
pub use oracle::{exact_eval, exact_plan, vcg_benchmark, AgentBenchmark, ValueTable, VcgBenchmark};
pub use policy::PolicyTable;
pub use regression::{GramState, MomentVector};
pub use regret::{compute_regrets, fit_exponent, synthetic_log, ExponentFit, RegretReport, RoundRegret};
pub use rng::SimRng;
