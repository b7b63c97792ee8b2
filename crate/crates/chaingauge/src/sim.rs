//! View-level Monte Carlo simulator. Each view draws the next leader and
//! the realized network delays, applies the policy's action through the same
//! per-view dynamics the model uses, and accumulates rewards and elapsed
//! time. Two independent ChaCha streams (leaders, delays) make runs that
//! differ only in delay amplitude consume identical randomness, so their
//! estimates are coupled.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::Error;
use crate::mdp::{check_alpha, check_k};
use crate::policy::Policy;
use crate::rules::{step_effect, time_legs, LegProfile};
use crate::state::{Action, Leader, Protocol, State, StateSpace};

/// Per-message-leg delay distribution. The delay bound used for timeouts
/// stays `k * nominal` regardless of fluctuation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayModel {
    Fixed { nominal: f64 },
    /// Delays drawn uniformly from `nominal * [1 - amplitude, 1 + amplitude]`.
    Uniform { nominal: f64, amplitude: f64 },
}

impl DelayModel {
    pub fn nominal(&self) -> f64 {
        match *self {
            DelayModel::Fixed { nominal } => nominal,
            DelayModel::Uniform { nominal, .. } => nominal,
        }
    }

    pub fn amplitude(&self) -> f64 {
        match *self {
            DelayModel::Fixed { .. } => 0.0,
            DelayModel::Uniform { amplitude, .. } => amplitude,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let nominal = self.nominal();
        if !(nominal.is_finite() && nominal > 0.0) {
            return Err(Error::Config(format!(
                "nominal delay must be positive, got {nominal}"
            )));
        }
        let amplitude = self.amplitude();
        if !(0.0..1.0).contains(&amplitude) {
            return Err(Error::Config(format!(
                "delay amplitude must be in [0,1), got {amplitude}"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for DelayModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DelayModel::Fixed { nominal } => write!(f, "fixed:{nominal}"),
            DelayModel::Uniform { nominal, amplitude } => {
                write!(f, "uniform:{nominal}:{amplitude}")
            }
        }
    }
}

impl FromStr for DelayModel {
    type Err = Error;

    /// Accepts `fixed:<nominal>` and `uniform:<nominal>:<amplitude>`.
    fn from_str(s: &str) -> Result<Self, Error> {
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default();
        let mut number = |name: &str| -> Result<f64, Error> {
            let text = parts
                .next()
                .ok_or_else(|| Error::Parse(format!("delay model {s:?} is missing {name}")))?;
            text.parse::<f64>()
                .map_err(|e| Error::Parse(format!("delay model {name}: {e}")))
        };
        let model = match kind {
            "fixed" => DelayModel::Fixed {
                nominal: number("nominal")?,
            },
            "uniform" => DelayModel::Uniform {
                nominal: number("nominal")?,
                amplitude: number("amplitude")?,
            },
            _ => {
                return Err(Error::Parse(format!(
                    "unknown delay model {kind:?}, expected fixed or uniform"
                )))
            }
        };
        if parts.next().is_some() {
            return Err(Error::Parse(format!(
                "trailing fields in delay model {s:?}"
            )));
        }
        model.validate()?;
        Ok(model)
    }
}

/// Everything one replication needs besides the policy and the seed.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub alpha: f64,
    pub k: f64,
    pub lh_cap: Option<u8>,
    pub views: u64,
    /// Views dropped from the front before estimates start accumulating;
    /// traces still include them.
    pub warmup: u64,
    pub delay: DelayModel,
}

pub const DEFAULT_WARMUP_VIEWS: u64 = 100;

impl SimConfig {
    pub fn new(protocol: Protocol, alpha: f64, k: f64, views: u64, delay: DelayModel) -> Self {
        SimConfig {
            protocol,
            alpha,
            k,
            lh_cap: None,
            views,
            warmup: DEFAULT_WARMUP_VIEWS,
            delay,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        check_alpha(self.alpha)?;
        check_k(self.k)?;
        self.delay.validate()?;
        if self.views <= self.warmup {
            return Err(Error::Config(format!(
                "need more than {} views to outlast the warmup, got {}",
                self.warmup, self.views
            )));
        }
        Ok(())
    }
}

/// One simulated view, as written to trace files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewRecord {
    pub view: u64,
    pub state: State,
    pub action: Action,
    pub next_leader: Leader,
    pub legs: LegProfile,
    pub b_h: u32,
    pub c: u32,
    pub t: f64,
}

impl fmt::Display for ViewRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {},{} {} {} {}",
            self.view,
            self.state,
            self.action,
            self.next_leader,
            self.legs.actual,
            self.legs.bound,
            self.b_h,
            self.c,
            self.t
        )
    }
}

impl FromStr for ViewRecord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let fields: Vec<&str> = s.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(Error::Parse(format!(
                "trace record needs 8 fields, got {}: {s:?}",
                fields.len()
            )));
        }
        let parse_num = |text: &str, name: &str| -> Result<u64, Error> {
            text.parse()
                .map_err(|e| Error::Parse(format!("trace {name}: {e}")))
        };
        let (actual_text, bound_text) = fields[4]
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("malformed legs field {:?}", fields[4])))?;
        Ok(ViewRecord {
            view: parse_num(fields[0], "view")?,
            state: fields[1].parse()?,
            action: fields[2].parse()?,
            next_leader: fields[3].parse()?,
            legs: LegProfile::new(
                parse_num(actual_text, "actual legs")? as u32,
                parse_num(bound_text, "bound legs")? as u32,
            ),
            b_h: parse_num(fields[5], "b_h")? as u32,
            c: parse_num(fields[6], "c")? as u32,
            t: fields[7]
                .parse()
                .map_err(|e| Error::Parse(format!("trace t: {e}")))?,
        })
    }
}

/// Totals from one replication, post warmup.
#[derive(Debug, Clone, Copy)]
pub struct SimSample {
    pub growth: f64,
    pub rate: f64,
    pub blocks: u64,
    pub commits: u64,
    pub time: f64,
    pub views_counted: u64,
}

/// Seeds for the two independent streams of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepSeed {
    pub leader: u64,
    pub delay: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Expands (master seed, replication index) into the two stream seeds.
/// Multiplying the index by an odd constant keeps distinct replications on
/// distinct splitmix trajectories.
pub fn derive_rep_seed(master: u64, rep: u32) -> RepSeed {
    let mut state = master ^ u64::from(rep).wrapping_mul(0xA076_1D64_78BD_642F);
    let leader = splitmix64(&mut state);
    let delay = splitmix64(&mut state);
    RepSeed { leader, delay }
}

/// Runs one replication of `cfg.views` views under `policy`. When `trace`
/// is given, every view (warmup included) is appended to it.
pub fn simulate_views(
    cfg: &SimConfig,
    policy: &Policy,
    seed: RepSeed,
    mut trace: Option<&mut Vec<ViewRecord>>,
) -> Result<SimSample, Error> {
    cfg.validate()?;
    let space = StateSpace::new(cfg.protocol, cfg.lh_cap)?;
    if policy.len() != space.len() {
        return Err(Error::Validation(format!(
            "policy covers {} states, space has {}",
            policy.len(),
            space.len()
        )));
    }

    let mut leader_rng = ChaCha12Rng::seed_from_u64(seed.leader);
    let mut delay_rng = ChaCha12Rng::seed_from_u64(seed.delay);
    let nominal = cfg.delay.nominal();
    let amplitude = cfg.delay.amplitude();
    let bound = cfg.k * nominal;

    let mut state = space.initial_state();
    let mut blocks = 0u64;
    let mut commits = 0u64;
    let mut time = 0.0f64;
    let mut counted = 0u64;
    for view in 0..cfg.views {
        let action = policy.action(space.index_of(&state));
        let effect = step_effect(&space, &state, action)?;
        let next_leader = if leader_rng.random::<f64>() < cfg.alpha {
            Leader::Adversarial
        } else {
            Leader::Honest
        };
        let legs = time_legs(cfg.protocol, state.leader, action, next_leader);
        // One draw per actual leg even at amplitude zero, so runs differing
        // only in amplitude see the same stream.
        let mut t = legs.bound as f64 * bound;
        for _ in 0..legs.actual {
            let u = 2.0 * delay_rng.random::<f64>() - 1.0;
            t += nominal * (1.0 + amplitude * u);
        }
        if view >= cfg.warmup {
            blocks += u64::from(effect.b_h);
            commits += u64::from(effect.c);
            time += t;
            counted += 1;
        }
        if let Some(records) = trace.as_deref_mut() {
            records.push(ViewRecord {
                view,
                state,
                action,
                next_leader,
                legs,
                b_h: effect.b_h,
                c: effect.c,
                t,
            });
        }
        state = effect.next_state(next_leader);
    }
    if !(time > 0.0) {
        return Err(Error::Solver("simulation accumulated no time".into()));
    }
    Ok(SimSample {
        growth: blocks as f64 / time,
        rate: commits as f64 / time,
        blocks,
        commits,
        time,
        views_counted: counted,
    })
}

/// Spread of one metric across replications.
#[derive(Debug, Clone, Copy)]
pub struct MetricStats {
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl MetricStats {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        let se = sd / n.sqrt();
        MetricStats {
            mean,
            sd,
            se,
            ci_low: mean - 1.96 * se,
            ci_high: mean + 1.96 * se,
        }
    }
}

/// Replicated run: per-rep samples plus summary statistics per metric.
#[derive(Debug, Clone)]
pub struct ReplicationReport {
    pub master_seed: u64,
    pub samples: Vec<SimSample>,
    pub growth: MetricStats,
    pub rate: MetricStats,
}

/// Folds per-replication samples into summary statistics. At least two
/// samples are needed for a standard error.
pub fn summarize(samples: Vec<SimSample>, master_seed: u64) -> Result<ReplicationReport, Error> {
    if samples.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 replications for error bars, got {}",
            samples.len()
        )));
    }
    let growths: Vec<f64> = samples.iter().map(|s| s.growth).collect();
    let rates: Vec<f64> = samples.iter().map(|s| s.rate).collect();
    Ok(ReplicationReport {
        master_seed,
        samples,
        growth: MetricStats::from_values(&growths),
        rate: MetricStats::from_values(&rates),
    })
}

/// Runs `reps` independent replications seeded from `master_seed`.
pub fn replicate(
    cfg: &SimConfig,
    policy: &Policy,
    reps: u32,
    master_seed: u64,
) -> Result<ReplicationReport, Error> {
    if reps < 2 {
        return Err(Error::Config(format!(
            "need at least 2 replications for error bars, got {reps}"
        )));
    }
    let mut samples = Vec::with_capacity(reps as usize);
    for rep in 0..reps {
        samples.push(simulate_views(
            cfg,
            policy,
            derive_rep_seed(master_seed, rep),
            None,
        )?);
    }
    summarize(samples, master_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::build_mdp;
    use approx::assert_abs_diff_eq;

    fn fixed_cfg(protocol: Protocol, alpha: f64, views: u64) -> SimConfig {
        SimConfig::new(protocol, alpha, 5.0, views, DelayModel::Fixed { nominal: 1.0 })
    }

    #[test]
    fn delay_model_strings_round_trip() {
        for text in ["fixed:1", "uniform:1:0.25", "uniform:2:0.5"] {
            let model: DelayModel = text.parse().unwrap();
            assert_eq!(model.to_string(), text);
        }
        assert!("poisson:1".parse::<DelayModel>().is_err());
        assert!("uniform:1".parse::<DelayModel>().is_err());
        assert!("uniform:1:1.5".parse::<DelayModel>().is_err());
        assert!("fixed:0".parse::<DelayModel>().is_err());
    }

    #[test]
    fn honest_fixed_run_matches_theory_exactly() {
        // At alpha=0 every view is the honest happy path; with fixed unit
        // delays the sample ratio equals the stationary ratio.
        let mdp = build_mdp(Protocol::Chs, 0.0, 5.0, None).unwrap();
        let policy = Policy::all_adopt(&mdp);
        let cfg = fixed_cfg(Protocol::Chs, 0.0, 2_000);
        let sample = simulate_views(&cfg, &policy, derive_rep_seed(7, 0), None).unwrap();
        assert_abs_diff_eq!(sample.growth, 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sample.rate, 1.0 / 3.0, epsilon = 1e-12);
        assert_eq!(sample.views_counted, 1_900);
    }

    #[test]
    fn same_seed_reproduces_the_run() {
        let mdp = build_mdp(Protocol::Fhs, 0.25, 5.0, None).unwrap();
        let policy = Policy::all_silent(&mdp);
        let cfg = fixed_cfg(Protocol::Fhs, 0.25, 3_000);
        let seed = derive_rep_seed(42, 3);
        let mut trace_a = Vec::new();
        let a = simulate_views(&cfg, &policy, seed, Some(&mut trace_a)).unwrap();
        let mut trace_b = Vec::new();
        let b = simulate_views(&cfg, &policy, seed, Some(&mut trace_b)).unwrap();
        assert_eq!(trace_a, trace_b);
        assert_eq!(a.blocks, b.blocks);
        assert_eq!(a.time, b.time);
        let other = simulate_views(&cfg, &policy, derive_rep_seed(42, 4), None).unwrap();
        assert_ne!(a.time, other.time);
    }

    #[test]
    fn coupled_streams_align_leaders_across_amplitudes() {
        // Same seed, different amplitude: identical leader sequences, so
        // identical block and commit counts.
        let mdp = build_mdp(Protocol::TwoChs, 0.3, 5.0, None).unwrap();
        let policy = Policy::all_silent(&mdp);
        let seed = derive_rep_seed(11, 0);
        let mut fixed = fixed_cfg(Protocol::TwoChs, 0.3, 5_000);
        let a = simulate_views(&fixed, &policy, seed, None).unwrap();
        fixed.delay = DelayModel::Uniform {
            nominal: 1.0,
            amplitude: 0.5,
        };
        let b = simulate_views(&fixed, &policy, seed, None).unwrap();
        assert_eq!(a.blocks, b.blocks);
        assert_eq!(a.commits, b.commits);
        assert_ne!(a.time, b.time);
    }

    #[test]
    fn trace_records_round_trip() {
        let mdp = build_mdp(Protocol::Streamlet, 0.2, 5.0, None).unwrap();
        let policy = Policy::all_silent(&mdp);
        let cfg = fixed_cfg(Protocol::Streamlet, 0.2, 200);
        let mut trace = Vec::new();
        simulate_views(&cfg, &policy, derive_rep_seed(1, 0), Some(&mut trace)).unwrap();
        assert_eq!(trace.len(), 200);
        for record in trace {
            let parsed: ViewRecord = record.to_string().parse().unwrap();
            assert_eq!(parsed, record);
        }
    }

    #[test]
    fn replication_stats_center_on_theory() {
        let mdp = build_mdp(Protocol::Chs, 0.15, 5.0, None).unwrap();
        let policy = Policy::all_adopt(&mdp);
        let cfg = fixed_cfg(Protocol::Chs, 0.15, 20_000);
        let report = replicate(&cfg, &policy, 4, 99).unwrap();
        let theory = crate::analysis::evaluate_policy(&mdp, &policy).unwrap();
        assert!((report.growth.mean - theory.growth).abs() < 4.0 * report.growth.se.max(1e-9));
        assert!(report.growth.ci_low <= report.growth.mean);
        assert!(report.growth.ci_high >= report.growth.mean);
        assert!(replicate(&cfg, &policy, 1, 99).is_err());
    }
}
