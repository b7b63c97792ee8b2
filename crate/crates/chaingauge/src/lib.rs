//! Worst-case chain growth and commitment rate of chained BFT protocols.
//!
//! The toolkit models one adversary-controlled validator set fraction
//! playing against four chained consensus protocols (three-phase and
//! two-phase HotStuff-style voting, a responsive two-phase variant, and
//! Streamlet), finds the policy minimizing chain growth or commitment rate
//! by solving the induced Markov decision process, and cross-checks the
//! optimum with a view-level Monte Carlo simulator plus an independent
//! trace replay.
//!
//! The usual flow is [`mdp::build_mdp`] to enumerate a model,
//! [`solver::solve_min_metric`] to find the worst case,
//! [`analysis::evaluate_policy`] and [`analysis::deviation_certificate`]
//! to validate it, and [`sim::replicate`] to confirm the level empirically.

pub mod analysis;
pub mod error;
pub mod mdp;
pub mod policy;
pub mod replay;
pub mod report;
pub mod rules;
pub mod sim;
pub mod solver;
pub mod state;

pub use analysis::{
    deviation_certificate, evaluate_policy, no_attack_reference, stationary_distribution,
    CertificateReport, PolicyValue,
};
pub use error::Error;
pub use mdp::{build_mdp, validate_mdp, MdpInstance};
pub use policy::{load_policy, save_policy, Policy, PolicyHeader};
pub use replay::{replay_verify, ReplayReport};
pub use report::{parse_csv, write_csv, Method, ReportRow};
pub use rules::{legal_actions, step_effect, time_legs, LegProfile, StepEffect};
pub use sim::{
    derive_rep_seed, replicate, simulate_views, summarize, DelayModel, ReplicationReport,
    SimConfig, SimSample, ViewRecord,
};
pub use solver::{solve_min_metric, Metric, SolveOptions, SolveResult};
pub use state::{Action, Leader, Protocol, State, StateSpace};
