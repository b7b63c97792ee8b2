//! Independent trace verification. The replay tracks the protocol through
//! block bookkeeping rather than the model's state table: a queue of
//! uncertified honest blocks with their creation views, a hidden-block flag,
//! and an uncapped consecutive-run counter with a deferred-commitment flag.
//! Every view of a trace is re-derived from that bookkeeping and diffed
//! against what the simulator recorded.

use std::collections::VecDeque;
use std::fmt;

use crate::error::Error;
use crate::mdp::check_k;
use crate::sim::{DelayModel, ViewRecord};
use crate::state::{Action, Leader, Protocol, State, StateSpace};

/// One disagreement between the replay and the trace.
#[derive(Debug, Clone)]
pub struct Discrepancy {
    pub view: u64,
    pub what: String,
}

impl fmt::Display for Discrepancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "view {}: {}", self.view, self.what)
    }
}

/// Replay outcome. `truncated` means verification stopped early (an illegal
/// action or too many discrepancies); a clean report is neither truncated
/// nor carries discrepancies.
#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub views_checked: u64,
    pub discrepancies: Vec<Discrepancy>,
    pub truncated: bool,
}

const MAX_DISCREPANCIES: usize = 64;

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.discrepancies.is_empty() && !self.truncated
    }

    pub fn to_result(&self) -> Result<(), Error> {
        if let Some(first) = self.discrepancies.first() {
            return Err(Error::Replay {
                count: self.discrepancies.len(),
                first_view: first.view,
                first: first.what.clone(),
            });
        }
        if self.truncated {
            return Err(Error::Replay {
                count: 0,
                first_view: self.views_checked,
                first: "verification stopped early".into(),
            });
        }
        Ok(())
    }
}

/// Sentinel creation view for blocks whose origin is unknown (resync after
/// a mismatch); guaranteed to never look like the previous view.
const UNKNOWN_CREATION: i64 = i64::MIN / 2;

/// Block-level bookkeeping of one chain.
struct Chain {
    cap: u64,
    lh_cap: usize,
    /// Consecutive certified run behind the tip, uncapped.
    run: u64,
    /// A commitment armed at the cap survived a break and pays on the next
    /// public extension. Never used by Streamlet.
    deferred: bool,
    /// The adversary holds an unpublished block.
    hidden: bool,
    /// Creation views of uncertified honest blocks, oldest first.
    pending: VecDeque<i64>,
}

impl Chain {
    fn from_state(space: &StateSpace, s: &State) -> Self {
        let (run, deferred) = if s.primed {
            (0, true)
        } else {
            (u64::from(s.cs), false)
        };
        Chain {
            cap: u64::from(space.protocol.consec_cap()),
            lh_cap: usize::from(space.lh_cap),
            run,
            deferred,
            hidden: s.la == 1,
            pending: (0..s.lh).map(|_| UNKNOWN_CREATION).collect(),
        }
    }

    /// The model-state components this bookkeeping corresponds to.
    fn components(&self) -> (u8, bool, u8, u8) {
        let (cs, primed) = if self.deferred {
            (self.cap as u8, true)
        } else {
            (self.run.min(self.cap) as u8, false)
        };
        (cs, primed, u8::from(self.hidden), self.pending.len() as u8)
    }

    /// Public extension by `n` blocks with at most one commitment per view:
    /// a deferred commitment or a run at the cap pays, then the run restarts
    /// behind the paying block or keeps growing.
    fn extend(&mut self, n: u64) -> u32 {
        let commit = self.deferred || self.run >= self.cap;
        if self.deferred {
            self.run = n;
            self.deferred = false;
        } else {
            self.run += n;
        }
        u32::from(commit)
    }

    /// The run breaks with no new public block; a commitment armed at the
    /// cap is deferred instead of lost, a deferred one dies unpaid.
    fn break_run(&mut self) {
        if self.deferred {
            self.deferred = false;
        } else if self.run >= self.cap {
            self.deferred = true;
        }
        self.run = 0;
    }

    /// The run restarts at `n` with nothing owed (fork rows).
    fn reset_run(&mut self, n: u64) {
        self.run = n;
        self.deferred = false;
    }

    /// Per-block commitment: each appended block commits its grandparent
    /// when it closes a three-block window.
    fn append_blocks(&mut self, n: u32) -> u32 {
        let mut commits = 0;
        for _ in 0..n {
            if self.run >= 2 {
                commits += 1;
            }
            self.run += 1;
        }
        commits
    }

    /// All pending blocks get certified and settle; returns the credit.
    fn settle_pending(&mut self) -> u32 {
        let n = self.pending.len() as u32;
        self.pending.clear();
        n
    }

    /// All pending blocks are forked away uncredited.
    fn destroy_pending(&mut self) {
        self.pending.clear();
    }

    /// A new uncertified honest block joins the queue. Past the cap the
    /// oldest one leaves: settled for good (credited) under the chained
    /// locking rule, dropped from the model uncredited under Streamlet.
    fn push_pending(&mut self, view: i64, credit_overflow: bool) -> u32 {
        self.pending.push_back(view);
        if self.pending.len() > self.lh_cap {
            self.pending.pop_front();
            u32::from(credit_overflow)
        } else {
            0
        }
    }
}

/// One view of the chained protocols (run-cap commitment, pay-once
/// deferral). Returns (settled honest blocks, commitments).
fn chained_view(chain: &mut Chain, leader: Leader, action: Action, view: i64) -> (u32, u32) {
    use Action::{Adopt, Release, Silent, Wait};
    use Leader::{Adversarial as A, Honest as H};
    match (leader, action, chain.hidden) {
        (H, Adopt, false) => {
            let b = chain.settle_pending();
            let c = chain.extend(1);
            chain.pending.push_back(view);
            (b, c)
        }
        (H, Wait | Silent, false) => {
            let b = chain.push_pending(view, true);
            let c = chain.extend(1);
            (b, c)
        }
        // The abandoned hidden block cost the new honest block its certified
        // ancestry: the run restarts and nothing commits.
        (H, Adopt, true) => {
            chain.hidden = false;
            let b = chain.settle_pending();
            chain.reset_run(1);
            chain.pending.push_back(view);
            (b, 0)
        }
        (H, Wait | Silent, true) => {
            chain.hidden = false;
            let b = chain.push_pending(view, true);
            chain.reset_run(1);
            (b, 0)
        }
        (H, Release, true) => {
            chain.hidden = false;
            if chain.pending.is_empty() {
                let c = chain.extend(2);
                chain.pending.push_back(view);
                (0, c)
            } else {
                chain.destroy_pending();
                chain.reset_run(2);
                chain.pending.push_back(view);
                (0, 0)
            }
        }
        // A private proposal leaves the public chain alone; adopting first
        // certifies everything pending.
        (A, Adopt, false) => {
            let b = chain.settle_pending();
            chain.hidden = true;
            (b, 0)
        }
        (A, Adopt, true) => {
            let b = chain.settle_pending();
            chain.break_run();
            chain.hidden = true;
            (b, 0)
        }
        (A, Wait, false) => {
            chain.break_run();
            chain.hidden = true;
            (0, 0)
        }
        (A, Wait | Release, true) => {
            if chain.pending.is_empty() {
                let c = chain.extend(1);
                (0, c)
            } else {
                chain.destroy_pending();
                chain.reset_run(1);
                (0, 0)
            }
        }
        // The timeout view certifies nothing: the run dies outright, and the
        // block proposed in the immediately preceding view (if still
        // pending) misses its certification votes.
        (A, Silent, _) => {
            if chain.pending.back() == Some(&(view - 1)) {
                chain.pending.pop_back();
            }
            chain.hidden = false;
            chain.reset_run(0);
            (0, 0)
        }
        _ => unreachable!("legality checked by the caller"),
    }
}

/// One Streamlet view (per-block commitment, longest-chain settling).
fn streamlet_view(chain: &mut Chain, leader: Leader, action: Action, view: i64) -> (u32, u32) {
    use Action::{Adopt, Release, Silent, Wait, Withhold};
    use Leader::{Adversarial as A, Honest as H};
    match (leader, action, chain.hidden) {
        (H, Adopt, false) => {
            let b = chain.settle_pending();
            let c = chain.append_blocks(1);
            chain.pending.push_back(view);
            (b, c)
        }
        (H, Adopt, true) => {
            chain.hidden = false;
            let b = chain.settle_pending();
            chain.reset_run(0);
            let c = chain.append_blocks(1);
            chain.pending.push_back(view);
            (b, c)
        }
        (A, Adopt, false) => {
            let b = chain.settle_pending();
            chain.hidden = true;
            (b, 0)
        }
        (A, Adopt, true) => {
            let b = chain.settle_pending();
            chain.reset_run(0);
            chain.hidden = true;
            (b, 0)
        }
        (H, Wait | Silent, false) => {
            let b = chain.push_pending(view, false);
            let c = chain.append_blocks(1);
            (b, c)
        }
        (H, Wait | Silent, true) => {
            chain.hidden = false;
            let b = chain.push_pending(view, false);
            chain.reset_run(0);
            let c = chain.append_blocks(1);
            (b, c)
        }
        (A, Wait, false) => {
            chain.reset_run(0);
            (0, 0)
        }
        // Extending the hidden block reveals it; the longest-chain rule then
        // certifies everything pending beneath it.
        (A, Wait | Withhold | Release, true) => {
            let b = chain.settle_pending();
            let c = chain.append_blocks(1);
            (b, c)
        }
        (H, Release, true) => {
            chain.hidden = false;
            let b = chain.settle_pending();
            let c = chain.append_blocks(2);
            chain.pending.push_back(view);
            (b, c)
        }
        // Preemptive fork: the reveal orphans the new proposal, the chain
        // holding the pending blocks wins.
        (H, Withhold, true) => {
            chain.hidden = false;
            let b = chain.settle_pending();
            chain.reset_run(0);
            (b, 0)
        }
        (A, Silent, _) => {
            chain.destroy_pending();
            chain.hidden = false;
            chain.reset_run(0);
            (0, 0)
        }
        _ => unreachable!("legality checked by the caller"),
    }
}

fn action_is_legal(protocol: Protocol, hidden: bool, action: Action) -> bool {
    match action {
        Action::Adopt | Action::Wait | Action::Silent => true,
        Action::Release => hidden,
        Action::Withhold => protocol == Protocol::Streamlet && hidden,
    }
}

/// Re-derives every view of `trace` from block-level bookkeeping and diffs
/// states, rewards, delay legs, and durations against the recorded values.
pub fn replay_verify(
    protocol: Protocol,
    lh_cap: Option<u8>,
    k: f64,
    delay: DelayModel,
    trace: &[ViewRecord],
) -> Result<ReplayReport, Error> {
    let space = StateSpace::new(protocol, lh_cap)?;
    check_k(k)?;
    delay.validate()?;

    let mut report = ReplayReport {
        views_checked: 0,
        discrepancies: Vec::new(),
        truncated: false,
    };
    let Some(first) = trace.first() else {
        return Ok(report);
    };
    let note = |report: &mut ReplayReport, view: u64, what: String| {
        if report.discrepancies.len() < MAX_DISCREPANCIES {
            report.discrepancies.push(Discrepancy { view, what });
            false
        } else {
            report.truncated = true;
            true
        }
    };

    if first.state != space.initial_state() {
        note(
            &mut report,
            first.view,
            format!(
                "trace starts at {}, expected {}",
                first.state,
                space.initial_state()
            ),
        );
    }
    let mut chain = Chain::from_state(&space, &first.state);
    let mut expected_leader = first.state.leader;

    let nominal = delay.nominal();
    let amplitude = delay.amplitude();
    for (i, rec) in trace.iter().enumerate() {
        if report.truncated {
            break;
        }
        report.views_checked = i as u64 + 1;
        if rec.view != i as u64 {
            if note(&mut report, rec.view, format!("record {i} carries view {}", rec.view)) {
                break;
            }
        }

        if rec.state.leader != expected_leader {
            if note(
                &mut report,
                rec.view,
                format!(
                    "leader {} does not continue the previous view's draw {}",
                    rec.state.leader, expected_leader
                ),
            ) {
                break;
            }
        }
        let tracked = chain.components();
        let recorded = (rec.state.cs, rec.state.primed, rec.state.la, rec.state.lh);
        if tracked != recorded {
            let (cs, primed, la, lh) = tracked;
            if note(
                &mut report,
                rec.view,
                format!(
                    "state {} disagrees with replay ({}{},{},{},{})",
                    rec.state,
                    cs,
                    if primed { "p" } else { "" },
                    la,
                    lh,
                    rec.state.leader
                ),
            ) {
                break;
            }
            // Resync to the recorded state so later views stay comparable.
            chain = Chain::from_state(&space, &rec.state);
        }

        if !action_is_legal(protocol, chain.hidden, rec.action) {
            note(
                &mut report,
                rec.view,
                format!("action {} is illegal in {}", rec.action, rec.state),
            );
            report.truncated = true;
            break;
        }

        let (b, c) = match protocol {
            Protocol::Streamlet => {
                streamlet_view(&mut chain, rec.state.leader, rec.action, rec.view as i64)
            }
            _ => chained_view(&mut chain, rec.state.leader, rec.action, rec.view as i64),
        };
        if b != rec.b_h {
            if note(
                &mut report,
                rec.view,
                format!("recorded b_h {} but the replay settles {b}", rec.b_h),
            ) {
                break;
            }
        }
        if c != rec.c {
            if note(
                &mut report,
                rec.view,
                format!("recorded c {} but the replay commits {c}", rec.c),
            ) {
                break;
            }
        }

        let legs = crate::rules::time_legs(protocol, rec.state.leader, rec.action, rec.next_leader);
        if legs != rec.legs {
            if note(
                &mut report,
                rec.view,
                format!(
                    "recorded legs {},{} but the view decomposes as {},{}",
                    rec.legs.actual, rec.legs.bound, legs.actual, legs.bound
                ),
            ) {
                break;
            }
        }
        let fixed_part = rec.legs.bound as f64 * k * nominal;
        let spread = rec.legs.actual as f64 * nominal * amplitude;
        let center = fixed_part + rec.legs.actual as f64 * nominal;
        let slack = 1e-9 * center.max(1.0);
        if rec.t < center - spread - slack || rec.t > center + spread + slack {
            if note(
                &mut report,
                rec.view,
                format!(
                    "duration {} outside [{}, {}] allowed by the delay model",
                    rec.t,
                    center - spread,
                    center + spread
                ),
            ) {
                break;
            }
        }

        expected_leader = rec.next_leader;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::build_mdp;
    use crate::policy::Policy;
    use crate::sim::{derive_rep_seed, simulate_views, SimConfig};
    use crate::state::Protocol;

    fn run_trace(protocol: Protocol, alpha: f64, policy: &Policy, views: u64) -> Vec<ViewRecord> {
        let cfg = SimConfig::new(
            protocol,
            alpha,
            5.0,
            views,
            DelayModel::Fixed { nominal: 1.0 },
        );
        let mut trace = Vec::new();
        simulate_views(&cfg, policy, derive_rep_seed(123, 0), Some(&mut trace)).unwrap();
        trace
    }

    #[test]
    fn clean_traces_replay_without_discrepancies() {
        for protocol in Protocol::ALL {
            let mdp = build_mdp(protocol, 0.3, 5.0, None).unwrap();
            for policy in [Policy::all_silent(&mdp), Policy::all_adopt(&mdp)] {
                let trace = run_trace(protocol, 0.3, &policy, 3_000);
                let report = replay_verify(
                    protocol,
                    None,
                    5.0,
                    DelayModel::Fixed { nominal: 1.0 },
                    &trace,
                )
                .unwrap();
                assert!(
                    report.is_clean(),
                    "{protocol}: {:?}",
                    report.discrepancies.first()
                );
                assert_eq!(report.views_checked, 3_000);
                assert!(report.to_result().is_ok());
            }
        }
    }

    #[test]
    fn tampered_rewards_are_caught() {
        let mdp = build_mdp(Protocol::Chs, 0.2, 5.0, None).unwrap();
        let mut trace = run_trace(Protocol::Chs, 0.2, &Policy::all_adopt(&mdp), 500);
        trace[137].b_h += 1;
        let report = replay_verify(
            Protocol::Chs,
            None,
            5.0,
            DelayModel::Fixed { nominal: 1.0 },
            &trace,
        )
        .unwrap();
        assert!(!report.is_clean());
        assert!(report.discrepancies.iter().any(|d| d.view == 137));
        assert!(report.to_result().is_err());
    }

    #[test]
    fn tampered_durations_are_caught() {
        let mdp = build_mdp(Protocol::TwoChs, 0.1, 5.0, None).unwrap();
        let mut trace = run_trace(Protocol::TwoChs, 0.1, &Policy::all_silent(&mdp), 400);
        trace[50].t += 0.5;
        let report = replay_verify(
            Protocol::TwoChs,
            None,
            5.0,
            DelayModel::Fixed { nominal: 1.0 },
            &trace,
        )
        .unwrap();
        assert!(report.discrepancies.iter().any(|d| d.view == 50));
    }

    #[test]
    fn tampered_state_resyncs_and_reports_once() {
        let mdp = build_mdp(Protocol::Fhs, 0.25, 5.0, None).unwrap();
        let mut trace = run_trace(Protocol::Fhs, 0.25, &Policy::all_silent(&mdp), 600);
        // Flip one recorded lh; the replay flags that view, resyncs, and the
        // tail stays comparable (the flip may also skew that view's rewards).
        trace[200].state.lh = (trace[200].state.lh + 1) % 2;
        let report = replay_verify(
            Protocol::Fhs,
            None,
            5.0,
            DelayModel::Fixed { nominal: 1.0 },
            &trace,
        )
        .unwrap();
        assert!(!report.is_clean());
        assert!(report.discrepancies.iter().any(|d| d.view == 200));
        assert!(report
            .discrepancies
            .iter()
            .all(|d| (200..=201).contains(&d.view)));
    }

    #[test]
    fn uniform_delay_traces_replay_clean() {
        let mdp = build_mdp(Protocol::Streamlet, 0.3, 5.0, None).unwrap();
        let policy = Policy::all_silent(&mdp);
        let delay = DelayModel::Uniform {
            nominal: 1.0,
            amplitude: 0.5,
        };
        let mut cfg = SimConfig::new(Protocol::Streamlet, 0.3, 5.0, 2_000, delay);
        cfg.warmup = 100;
        let mut trace = Vec::new();
        simulate_views(&cfg, &policy, derive_rep_seed(5, 1), Some(&mut trace)).unwrap();
        let report = replay_verify(Protocol::Streamlet, None, 5.0, delay, &trace).unwrap();
        assert!(report.is_clean(), "{:?}", report.discrepancies.first());
    }
}
