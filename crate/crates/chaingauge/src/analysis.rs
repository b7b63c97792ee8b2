//! Exact evaluation of a fixed policy. The policy induces a Markov chain
//! over the state space; its stationary distribution gives the long-run
//! settled-block and commitment ratios directly, without simulation. The
//! deviation certificate then checks first-order optimality by re-evaluating
//! every single-state deviation from the policy.

use crate::error::Error;
use crate::mdp::{build_mdp, MdpInstance};
use crate::policy::Policy;
use crate::solver::Metric;
use crate::state::{Action, Protocol, State};

/// Long-run per-time averages of a policy, from the stationary distribution
/// of the chain it induces.
#[derive(Debug, Clone, Copy)]
pub struct PolicyValue {
    pub growth: f64,
    pub rate: f64,
    /// Settled honest blocks per view.
    pub blocks_per_view: f64,
    /// Commitments per view.
    pub commits_per_view: f64,
    /// Expected view duration in network-delay units.
    pub time_per_view: f64,
}

impl PolicyValue {
    pub fn metric(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Growth => self.growth,
            Metric::Rate => self.rate,
        }
    }
}

/// Strongly connected components by Kosaraju's two-pass sweep, iterative so
/// deep chains cannot overflow the stack. Returns a component id per vertex.
fn strongly_connected_components(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for start in 0..n {
        if seen[start] {
            continue;
        }
        // Stack entries hold the vertex and how many successors were expanded.
        let mut stack = vec![(start, 0usize)];
        seen[start] = true;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if *next < adj[v].len() {
                let w = adj[v][*next];
                *next += 1;
                if !seen[w] {
                    seen[w] = true;
                    stack.push((w, 0));
                }
            } else {
                order.push(v);
                stack.pop();
            }
        }
    }

    let mut radj = vec![Vec::new(); n];
    for (v, outs) in adj.iter().enumerate() {
        for &w in outs {
            radj[w].push(v);
        }
    }

    let mut component = vec![usize::MAX; n];
    let mut count = 0;
    for &root in order.iter().rev() {
        if component[root] != usize::MAX {
            continue;
        }
        let mut queue = vec![root];
        component[root] = count;
        while let Some(v) = queue.pop() {
            for &w in &radj[v] {
                if component[w] == usize::MAX {
                    component[w] = count;
                    queue.push(w);
                }
            }
        }
        count += 1;
    }
    component
}

/// Positive-probability successor lists under the policy.
fn policy_adjacency(mdp: &MdpInstance, policy: &Policy) -> Result<Vec<Vec<usize>>, Error> {
    policy.validate(mdp)?;
    let mut adj = Vec::with_capacity(mdp.num_states());
    for (s, state) in mdp.states.iter().enumerate() {
        let action = policy.action(s);
        let choice = mdp.choice(s, action).ok_or_else(|| Error::IllegalAction {
            state: state.to_string(),
            action: action.to_string(),
        })?;
        let mut outs = Vec::with_capacity(2);
        for entry in &choice.entries {
            if entry.prob > 0.0 {
                outs.push(entry.next);
            }
        }
        adj.push(outs);
    }
    Ok(adj)
}

/// Solves pi P = pi, sum pi = 1 on the index set `members` by Gaussian
/// elimination with partial pivoting. `prob` gives P restricted to members.
fn solve_stationary_on(
    members: &[usize],
    prob: impl Fn(usize, usize) -> f64,
) -> Result<Vec<f64>, Error> {
    let m = members.len();
    // Rows 0..m-1: (P^T - I) pi = 0 with the last equation replaced by the
    // normalization sum(pi) = 1.
    let mut a = vec![vec![0.0f64; m + 1]; m];
    for (j, &sj) in members.iter().enumerate() {
        for (i, &si) in members.iter().enumerate() {
            a[i][j] = prob(sj, si);
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] -= 1.0;
    }
    for v in a[m - 1].iter_mut().take(m) {
        *v = 1.0;
    }
    a[m - 1][m] = 1.0;

    for col in 0..m {
        let mut pivot = col;
        for row in col + 1..m {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-14 {
            return Err(Error::Solver(
                "singular system while solving for the stationary distribution".into(),
            ));
        }
        a.swap(col, pivot);
        for row in col + 1..m {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for j in col..=m {
                    a[row][j] -= factor * a[col][j];
                }
            }
        }
    }
    let mut x = vec![0.0f64; m];
    for col in (0..m).rev() {
        let mut acc = a[col][m];
        for j in col + 1..m {
            acc -= a[col][j] * x[j];
        }
        x[col] = acc / a[col][col];
    }
    // Roundoff can leave tiny negative mass; clamp and renormalize.
    for v in x.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-9 {
                return Err(Error::Solver(format!(
                    "stationary solve produced negative mass {v}"
                )));
            }
            *v = 0.0;
        }
    }
    let total: f64 = x.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Solver("stationary solve produced zero mass".into()));
    }
    for v in x.iter_mut() {
        *v /= total;
    }
    Ok(x)
}

/// Stationary distribution of the chain induced by `policy`, as a vector
/// over the full state space. Fails with `Reducible` unless exactly one
/// recurrent class is reachable from the initial state; mass outside that
/// class is zero.
pub fn stationary_distribution(mdp: &MdpInstance, policy: &Policy) -> Result<Vec<f64>, Error> {
    let n = mdp.num_states();
    let adj = policy_adjacency(mdp, policy)?;

    let mut reachable = vec![false; n];
    let mut queue = vec![mdp.initial_index()];
    reachable[mdp.initial_index()] = true;
    while let Some(v) = queue.pop() {
        for &w in &adj[v] {
            if !reachable[w] {
                reachable[w] = true;
                queue.push(w);
            }
        }
    }

    let component = strongly_connected_components(&adj);
    let num_components = component.iter().copied().max().map_or(0, |c| c + 1);
    let mut escapes = vec![false; num_components];
    for (v, outs) in adj.iter().enumerate() {
        for &w in outs {
            if component[w] != component[v] {
                escapes[component[v]] = true;
            }
        }
    }
    let mut recurrent_reachable: Vec<usize> = (0..num_components)
        .filter(|&c| {
            !escapes[c] && (0..n).any(|v| component[v] == c && reachable[v])
        })
        .collect();
    recurrent_reachable.sort_unstable();
    if recurrent_reachable.len() != 1 {
        return Err(Error::Reducible(format!(
            "{} recurrent classes reachable from {}, need exactly one",
            recurrent_reachable.len(),
            mdp.states[mdp.initial_index()]
        )));
    }
    let class = recurrent_reachable[0];
    let members: Vec<usize> = (0..n).filter(|&v| component[v] == class).collect();

    let index_in = |s: usize| members.binary_search(&s).ok();
    let prob = |from: usize, to: usize| {
        let action = policy.action(from);
        let choice = mdp.choice(from, action).expect("validated above");
        choice
            .entries
            .iter()
            .filter(|e| e.next == to)
            .map(|e| e.prob)
            .sum::<f64>()
    };
    // Transitions out of a recurrent class are impossible by construction.
    for &s in &members {
        for &w in &adj[s] {
            debug_assert!(index_in(w).is_some());
        }
    }
    let local = solve_stationary_on(&members, prob)?;

    let mut pi = vec![0.0f64; n];
    for (i, &s) in members.iter().enumerate() {
        pi[s] = local[i];
    }

    // Residual check: pi must be invariant under one step of the chain.
    let mut image = vec![0.0f64; n];
    for (s, &mass) in pi.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let choice = mdp.choice(s, policy.action(s)).expect("validated");
        for entry in &choice.entries {
            image[entry.next] += mass * entry.prob;
        }
    }
    let residual = pi
        .iter()
        .zip(&image)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    if residual > 1e-10 {
        return Err(Error::Solver(format!(
            "stationary residual {residual:e} exceeds tolerance"
        )));
    }
    Ok(pi)
}

/// Exact long-run averages of a fixed policy via its stationary distribution.
pub fn evaluate_policy(mdp: &MdpInstance, policy: &Policy) -> Result<PolicyValue, Error> {
    let pi = stationary_distribution(mdp, policy)?;
    let mut blocks = 0.0f64;
    let mut commits = 0.0f64;
    let mut time = 0.0f64;
    for (s, &mass) in pi.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let choice = mdp.choice(s, policy.action(s)).expect("validated");
        blocks += mass * choice.b_h() as f64;
        commits += mass * choice.c() as f64;
        time += mass * choice.expected_t();
    }
    if !(time > 0.0) {
        return Err(Error::Solver("zero expected time per view".into()));
    }
    Ok(PolicyValue {
        growth: blocks / time,
        rate: commits / time,
        blocks_per_view: blocks,
        commits_per_view: commits,
        time_per_view: time,
    })
}

/// Long-run averages with no adversary at all: alpha = 0 and the nominal
/// always-release behavior in every state. This is the denominator for
/// relative degradation figures.
pub fn no_attack_reference(
    protocol: Protocol,
    k: f64,
    lh_cap: Option<u8>,
) -> Result<PolicyValue, Error> {
    let mdp = build_mdp(protocol, 0.0, k, lh_cap)?;
    let policy = Policy::all_adopt(&mdp);
    evaluate_policy(&mdp, &policy)
}

/// One profitable single-state deviation found by the certificate.
#[derive(Debug, Clone)]
pub struct Deviation {
    pub state: State,
    pub action: Action,
    pub value: f64,
}

/// Outcome of the optimality check: the policy's own value and every
/// single-state deviation that achieves a strictly lower metric (beyond
/// `tol`).
#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub metric: Metric,
    pub base_value: f64,
    pub deviations_checked: usize,
    pub violations: Vec<Deviation>,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-evaluates every policy that differs from `policy` in exactly one
/// state. For a minimizing adversary, no such deviation may achieve a
/// metric below the policy's own value minus `tol`.
pub fn deviation_certificate(
    mdp: &MdpInstance,
    policy: &Policy,
    metric: Metric,
    tol: f64,
) -> Result<CertificateReport, Error> {
    let base = evaluate_policy(mdp, policy)?.metric(metric);
    let mut violations = Vec::new();
    let mut checked = 0;
    for (s, state) in mdp.states.iter().enumerate() {
        for choice in &mdp.choices[s] {
            if choice.action == policy.action(s) {
                continue;
            }
            checked += 1;
            let mut deviant = policy.clone();
            deviant.set_action(s, choice.action);
            let value = evaluate_policy(mdp, &deviant)?.metric(metric);
            if value < base - tol {
                violations.push(Deviation {
                    state: *state,
                    action: choice.action,
                    value,
                });
            }
        }
    }
    Ok(CertificateReport {
        metric,
        base_value: base,
        deviations_checked: checked,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::build_mdp;
    use crate::policy::Policy;
    use crate::solver::{solve_min_metric, SolveOptions};
    use crate::state::Protocol;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scc_splits_a_chain_with_a_tail() {
        // 0 -> 1 <-> 2, 0 is its own transient component.
        let adj = vec![vec![1], vec![2], vec![1]];
        let comp = strongly_connected_components(&adj);
        assert_ne!(comp[0], comp[1]);
        assert_eq!(comp[1], comp[2]);
    }

    #[test]
    fn honest_chs_pins_growth_at_one_third() {
        let mdp = build_mdp(Protocol::Chs, 0.0, 5.0, None).unwrap();
        let policy = Policy::all_adopt(&mdp);
        let value = evaluate_policy(&mdp, &policy).unwrap();
        assert_abs_diff_eq!(value.growth, 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(value.rate, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn honest_two_chs_pins_growth_at_one_seventh() {
        let mdp = build_mdp(Protocol::TwoChs, 0.0, 5.0, None).unwrap();
        let policy = Policy::all_adopt(&mdp);
        let value = evaluate_policy(&mdp, &policy).unwrap();
        assert_abs_diff_eq!(value.growth, 1.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn no_attack_levels_match_the_happy_paths() {
        // One block per 2 delta under responsive two-phase voting, one per
        // 2 Delta under fixed-length views.
        let fhs = no_attack_reference(Protocol::Fhs, 5.0, None).unwrap();
        assert_abs_diff_eq!(fhs.growth, 0.5, epsilon = 1e-12);
        let streamlet = no_attack_reference(Protocol::Streamlet, 5.0, None).unwrap();
        assert_abs_diff_eq!(streamlet.growth, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(streamlet.rate, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn stationary_mass_sums_to_one() {
        let mdp = build_mdp(Protocol::Streamlet, 0.2, 5.0, None).unwrap();
        let policy = Policy::all_silent(&mdp);
        let pi = stationary_distribution(&mdp, &policy).unwrap();
        let total: f64 = pi.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        assert!(pi.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn certificate_rejects_a_plainly_suboptimal_policy() {
        // All-adopt leaves growth at its honest level, far above optimum at
        // alpha = 0.3, so many single deviations must beat it.
        let mdp = build_mdp(Protocol::Chs, 0.3, 5.0, None).unwrap();
        let policy = Policy::all_adopt(&mdp);
        let report = deviation_certificate(&mdp, &policy, Metric::Growth, 1e-9).unwrap();
        assert!(!report.passed());
    }

    #[test]
    fn certificate_accepts_the_solved_policy() {
        let mdp = build_mdp(Protocol::Chs, 0.3, 5.0, None).unwrap();
        let sol = solve_min_metric(&mdp, Metric::Growth, SolveOptions::default()).unwrap();
        let report = deviation_certificate(&mdp, &sol.policy, Metric::Growth, 1e-6).unwrap();
        assert!(report.passed(), "violations: {:?}", report.violations);
        assert_abs_diff_eq!(report.base_value, sol.metric_value, epsilon = 2e-4);
    }
}
