//! Worst-case metric solver. The adversary minimizes a ratio of accumulated
//! rewards (settled blocks or commitments over elapsed time), which is not
//! directly an average-reward objective; substituting the scalarized reward
//! w(s,a) = (1-rho) * t(s,a) - reward(s,a) turns it into one whose optimal
//! gain crosses zero exactly at rho = 1 - (minimum achievable ratio). An
//! outer binary search on rho brackets that root; the inner solver is
//! relative value iteration on the average-reward problem.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::mdp::MdpInstance;
use crate::policy::Policy;
use crate::state::{Action, Protocol};

/// Which ratio is being minimized: settled honest blocks per time, or
/// commitment events per time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Growth,
    Rate,
}

impl Metric {
    pub const BOTH: [Metric; 2] = [Metric::Growth, Metric::Rate];
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Growth => "growth",
            Metric::Rate => "rate",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "growth" => Ok(Metric::Growth),
            "rate" => Ok(Metric::Rate),
            _ => Err(Error::Parse(format!("unknown metric {s:?}"))),
        }
    }
}

/// Compact numeric view of an instance for one metric: per state and action,
/// the numerator reward, the expected view duration, and the two weighted
/// successors.
pub struct RatioMdp {
    pub num: Vec<Vec<f64>>,
    pub t: Vec<Vec<f64>>,
    pub trans: Vec<Vec<[(usize, f64); 2]>>,
}

impl RatioMdp {
    pub fn from_instance(mdp: &MdpInstance, metric: Metric) -> Self {
        let mut num = Vec::with_capacity(mdp.num_states());
        let mut t = Vec::with_capacity(mdp.num_states());
        let mut trans = Vec::with_capacity(mdp.num_states());
        for per_state in &mdp.choices {
            num.push(
                per_state
                    .iter()
                    .map(|ch| match metric {
                        Metric::Growth => ch.b_h() as f64,
                        Metric::Rate => ch.c() as f64,
                    })
                    .collect(),
            );
            t.push(per_state.iter().map(|ch| ch.expected_t()).collect());
            trans.push(
                per_state
                    .iter()
                    .map(|ch| {
                        [
                            (ch.entries[0].next, ch.entries[0].prob),
                            (ch.entries[1].next, ch.entries[1].prob),
                        ]
                    })
                    .collect(),
            );
        }
        RatioMdp { num, t, trans }
    }

    pub fn num_states(&self) -> usize {
        self.num.len()
    }
}

/// Inner solver output: the optimal average of the scalarized reward, the
/// bias vector, the greedy action index per state, and the sweeps used.
pub struct GainSolution {
    pub gain: f64,
    pub bias: Vec<f64>,
    pub greedy: Vec<usize>,
    pub iterations: usize,
}

/// Damping factor that removes periodicity: each sweep mixes the Bellman
/// image with the current value. The stationary behavior, and therefore the
/// gain, is unchanged.
const APERIODICITY_TAU: f64 = 0.5;

/// Relative value iteration for the average-reward problem with scalarized
/// reward w(s,a) = (1-rho) * t - num. Converges when the span of successive
/// differences falls below `tol`; ties between actions resolve to the
/// earliest action in legal order.
pub fn gain_value_iteration(
    m: &RatioMdp,
    rho: f64,
    tol: f64,
    max_iterations: usize,
) -> Result<GainSolution, Error> {
    let n = m.num_states();
    let tau = APERIODICITY_TAU;
    let mut h = vec![0.0f64; n];
    let mut th = vec![0.0f64; n];
    let mut greedy = vec![0usize; n];
    for iteration in 1..=max_iterations {
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for (a, outcomes) in m.trans[s].iter().enumerate() {
                let w = (1.0 - rho) * m.t[s][a] - m.num[s][a];
                let mut q = w + (1.0 - tau) * h[s];
                for &(next, prob) in outcomes {
                    q += tau * prob * h[next];
                }
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            th[s] = best;
            greedy[s] = best_a;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in 0..n {
            let d = th[s] - h[s];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if hi - lo < tol {
            let gain = (hi + lo) / 2.0;
            return Ok(GainSolution {
                gain,
                bias: th,
                greedy,
                iterations: iteration,
            });
        }
        // Re-anchor at state 0 so the values stay bounded.
        let anchor = th[0];
        for s in 0..n {
            h[s] = th[s] - anchor;
        }
    }
    Err(Error::Solver(format!(
        "value iteration did not reach span {tol:e} within {max_iterations} sweeps (rho={rho})"
    )))
}

/// Tolerances for the two solver loops. The defaults match the shipped
/// configuration: outer interval 1e-4, inner span 1e-9 within 100k sweeps.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub eps: f64,
    pub inner_tol: f64,
    pub max_inner_iterations: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            eps: 1e-4,
            inner_tol: 1e-9,
            max_inner_iterations: 100_000,
        }
    }
}

/// Result of the outer search: the bracketed root and the policy achieving
/// it. `metric_value` = 1 - rho_bar is the worst (minimum) achievable value
/// of the chosen metric, up to eps/2 plus inner-solver error.
pub struct SolveResult {
    pub protocol: Protocol,
    pub alpha: f64,
    pub k: f64,
    pub lh_cap: u8,
    pub metric: Metric,
    pub rho_bar: f64,
    pub metric_value: f64,
    pub policy: Policy,
    pub outer_iterations: usize,
    /// Gain at rho = 0; positive whenever views take time.
    pub gain_at_zero: f64,
    /// Gain at rho = 1; non-positive, and strictly negative unless some
    /// policy suppresses the numerator forever.
    pub gain_at_one: f64,
}

/// Minimizes the metric over adversarial policies by binary search on rho.
/// A positive optimal gain at the midpoint means the adversary can still
/// push the metric below 1 - mid, so the root lies above.
pub fn solve_min_metric(
    mdp: &MdpInstance,
    metric: Metric,
    opts: SolveOptions,
) -> Result<SolveResult, Error> {
    if !(opts.eps > 0.0 && opts.eps < 1.0) {
        return Err(Error::Config(format!("eps must be in (0,1), got {}", opts.eps)));
    }
    let m = RatioMdp::from_instance(mdp, metric);
    let gain_at = |rho: f64| -> Result<GainSolution, Error> {
        gain_value_iteration(&m, rho, opts.inner_tol, opts.max_inner_iterations)
    };

    let gain_at_zero = gain_at(0.0)?.gain;
    let gain_at_one = gain_at(1.0)?.gain;
    if gain_at_zero <= 0.0 {
        log::warn!("gain at rho=0 is {gain_at_zero}, expected positive");
    }
    if gain_at_one > opts.inner_tol {
        return Err(Error::Solver(format!(
            "gain at rho=1 is {gain_at_one}, the root is not bracketed"
        )));
    }

    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let mut outer_iterations = 0;
    while hi - lo > opts.eps {
        let mid = (lo + hi) / 2.0;
        let sol = gain_at(mid)?;
        if sol.gain > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        outer_iterations += 1;
        log::debug!(
            "outer iteration {outer_iterations}: rho in [{lo}, {hi}], gain {}",
            sol.gain
        );
    }
    let rho_bar = (lo + hi) / 2.0;
    let at_root = gain_at(rho_bar)?;
    let actions = at_root
        .greedy
        .iter()
        .enumerate()
        .map(|(s, &a)| mdp.choices[s][a].action)
        .collect::<Vec<Action>>();
    Ok(SolveResult {
        protocol: mdp.protocol(),
        alpha: mdp.alpha,
        k: mdp.k,
        lh_cap: mdp.space.lh_cap,
        metric,
        rho_bar,
        metric_value: 1.0 - rho_bar,
        policy: Policy::new(actions),
        outer_iterations,
        gain_at_zero,
        gain_at_one,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::build_mdp;
    use approx::assert_abs_diff_eq;

    /// One state, two self-loop actions with chosen rewards and durations.
    fn toy(nums: [f64; 2], ts: [f64; 2]) -> RatioMdp {
        RatioMdp {
            num: vec![nums.to_vec()],
            t: vec![ts.to_vec()],
            trans: vec![vec![[(0, 1.0), (0, 0.0)], [(0, 1.0), (0, 0.0)]]],
        }
    }

    #[test]
    fn toy_gain_picks_the_better_self_loop() {
        // w = (1-rho) * t - num at rho=0: action 0 yields 1, action 1 yields 2.
        let m = toy([1.0, 0.0], [2.0, 2.0]);
        let sol = gain_value_iteration(&m, 0.0, 1e-12, 10_000).unwrap();
        assert_abs_diff_eq!(sol.gain, 2.0, epsilon = 1e-9);
        assert_eq!(sol.greedy[0], 1);
    }

    #[test]
    fn honest_cycle_gain_matches_closed_form() {
        // At alpha=0 the steady view settles one block in three time units,
        // so w = (1-rho)*3 - 1 per view.
        let mdp = build_mdp(Protocol::Chs, 0.0, 5.0, None).unwrap();
        let m = RatioMdp::from_instance(&mdp, Metric::Growth);
        let at_third = gain_value_iteration(&m, 2.0 / 3.0, 1e-10, 100_000).unwrap();
        assert_abs_diff_eq!(at_third.gain, 0.0, epsilon = 1e-7);
        let at_half = gain_value_iteration(&m, 0.5, 1e-10, 100_000).unwrap();
        assert_abs_diff_eq!(at_half.gain, 0.5, epsilon = 1e-7);
    }

    #[test]
    fn binary_search_hits_the_honest_growth_endpoint() {
        let mdp = build_mdp(Protocol::Chs, 0.0, 5.0, None).unwrap();
        let sol = solve_min_metric(&mdp, Metric::Growth, SolveOptions::default()).unwrap();
        assert_abs_diff_eq!(sol.metric_value, 1.0 / 3.0, epsilon = 1e-4);
        assert!(sol.outer_iterations <= 15);
        assert!(sol.gain_at_zero > 0.0);
        assert!(sol.gain_at_one <= 0.0);
    }

    #[test]
    fn ties_resolve_to_the_earliest_action() {
        let m = toy([1.0, 1.0], [2.0, 2.0]);
        let sol = gain_value_iteration(&m, 0.25, 1e-12, 10_000).unwrap();
        assert_eq!(sol.greedy[0], 0);
    }

    #[test]
    fn metric_names_round_trip() {
        assert_eq!("growth".parse::<Metric>().unwrap(), Metric::Growth);
        assert_eq!(Metric::Rate.to_string(), "rate");
        assert!("both".parse::<Metric>().is_err());
    }
}
