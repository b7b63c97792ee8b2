//! Per-protocol dynamics: legal actions, one-view state effects, reward
//! allocation, and the timing decomposition of a view into delay legs.

use crate::error::Error;
use crate::state::{Action, Leader, Protocol, State, StateSpace};

/// How a view's duration decomposes: `actual` legs take the realized network
/// delay, `bound` legs take the delay upper bound (timeouts and adversarial
/// pacing always run to the bound).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LegProfile {
    pub actual: u32,
    pub bound: u32,
}

impl LegProfile {
    pub fn new(actual: u32, bound: u32) -> Self {
        LegProfile { actual, bound }
    }

    /// View duration in delay units when every actual leg takes exactly one
    /// unit and the bound is `k` units.
    pub fn duration(&self, k: f64) -> f64 {
        self.actual as f64 + self.bound as f64 * k
    }
}

/// Leader-independent outcome of one view: the next state's first four
/// components plus the rewards earned in the view. Only the next leader
/// (drawn afterwards) is missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepEffect {
    pub cs: u8,
    pub primed: bool,
    pub la: u8,
    pub lh: u8,
    /// Honest blocks permanently settled on the chain this view.
    pub b_h: u32,
    /// Commitment events triggered this view.
    pub c: u32,
}

impl StepEffect {
    pub fn next_state(&self, next_leader: Leader) -> State {
        State::new(self.cs, self.primed, self.la, self.lh, next_leader)
    }
}

/// Actions available to the adversary in `state`, in tie-break order.
/// Release needs a hidden block; Withhold additionally only exists in
/// Streamlet (its preemptive fork).
pub fn legal_actions(protocol: Protocol, state: &State) -> Vec<Action> {
    let mut out = vec![Action::Adopt, Action::Wait];
    if state.la == 1 {
        out.push(Action::Release);
    }
    out.push(Action::Silent);
    if protocol == Protocol::Streamlet && state.la == 1 {
        out.push(Action::Withhold);
    }
    out
}

/// Applies one view of `action` in `state` and returns the next-state
/// components and rewards. Fails on actions outside `legal_actions`.
pub fn step_effect(space: &StateSpace, state: &State, action: Action) -> Result<StepEffect, Error> {
    if !legal_actions(space.protocol, state).contains(&action) {
        return Err(Error::IllegalAction {
            state: state.to_string(),
            action: action.to_string(),
        });
    }
    let effect = match space.protocol {
        Protocol::Streamlet => streamlet_effect(space.lh_cap, state, action),
        _ => chained_effect(space.protocol.consec_cap(), space.lh_cap, state, action),
    };
    Ok(effect)
}

/// Dynamics shared by the two-chain and three-chain protocols; `cap` is the
/// run length that arms a commitment, `lh_cap` the pending-block bound fixed
/// by the locking rule.
fn chained_effect(cap: u8, lh_cap: u8, s: &State, action: Action) -> StepEffect {
    // Run continues: a deferred commitment pays out and the run restarts
    // behind the paying block; otherwise the run grows toward the cap.
    let ext1 = |n: u8| -> (u8, bool) {
        if s.primed {
            (n, false)
        } else {
            ((s.cs + n).min(cap), false)
        }
    };
    // Run breaks without a new public block: an unpaid commitment at the cap
    // stays owed (primed); a primed value dies unpaid.
    let broken = if !s.primed && s.cs == cap {
        (cap, true)
    } else {
        (0, false)
    };
    // A commitment pays on run-extending views whose pre-state run is at the
    // cap, primed or not.
    let commit = u32::from(s.cs == cap);
    // The view that pushes pending blocks past the cap locks the oldest one
    // for good.
    let saturated = u32::from(s.lh == lh_cap);

    let ((cs, primed), la, lh, b_h, c) = match (s.leader, action, s.la) {
        // Honest leader, no hidden block: the new block extends the run and
        // the adversary's stance does not disturb it.
        (Leader::Honest, Action::Adopt, 0) => (ext1(1), 0, 1, u32::from(s.lh), commit),
        (Leader::Honest, Action::Wait | Action::Silent, 0) => {
            (ext1(1), 0, (s.lh + 1).min(lh_cap), saturated, commit)
        }
        // Honest leader, hidden block abandoned: pending blocks are accepted
        // and credited, but the abandonment breaks the run down to the new
        // block alone.
        (Leader::Honest, Action::Adopt, 1) => ((1, false), 0, 1, u32::from(s.lh), 0),
        (Leader::Honest, Action::Wait | Action::Silent, 1) => {
            ((1, false), 0, (s.lh + 1).min(lh_cap), saturated, 0)
        }
        // Honest leader, hidden block released: with nothing pending the
        // released block and the new honest block both extend the run;
        // otherwise the release forks the pending blocks away uncredited.
        (Leader::Honest, Action::Release, _) => {
            if s.lh == 0 {
                (ext1(2), 0, 1, 0, commit)
            } else {
                ((2, false), 0, 1, 0, 0)
            }
        }
        // Adversarial leader proposing in private: the public run is
        // untouched; pending blocks are accepted and credited.
        (Leader::Adversarial, Action::Adopt, 0) => ((s.cs, s.primed), 1, 0, u32::from(s.lh), 0),
        // Swapping the hidden block for a fresh one; an armed commitment at
        // the cap is deferred, a deferred one dies.
        (Leader::Adversarial, Action::Adopt, 1) => (broken, 1, 0, u32::from(s.lh), 0),
        (Leader::Adversarial, Action::Wait, 0) => (broken, 1, s.lh, 0, 0),
        // Extending the hidden block reveals it; with pending blocks the
        // reveal forks them away, otherwise it extends the run publicly.
        (Leader::Adversarial, Action::Wait | Action::Release, 1) => {
            if s.lh == 0 {
                (ext1(1), 1, 0, 0, commit)
            } else {
                ((1, false), 1, 0, 0, 0)
            }
        }
        // Silent adversarial leader: the view times out blockless. The
        // pending block from the immediately preceding view (present exactly
        // when the run is live) misses certification and is excluded.
        (Leader::Adversarial, Action::Silent, _) => {
            let excluded = s.la == 0 && s.lh > 0 && s.cs != 0 && !s.primed;
            let lh = if excluded { s.lh - 1 } else { s.lh };
            ((0, false), 0, lh, 0, 0)
        }
        _ => unreachable!("legality already checked"),
    };
    StepEffect {
        cs,
        primed,
        la,
        lh,
        b_h,
        c,
    }
}

/// Streamlet dynamics. Runs break on any blockless view (consecutiveness is
/// per-view), commitment pays per extending block (the honest release of a
/// hidden block can pay twice), and pending blocks beyond `lh_cap` fall out
/// of the model uncredited.
fn streamlet_effect(lh_cap: u8, s: &State, action: Action) -> StepEffect {
    let ext1 = (s.cs + 1).min(3);
    let commit = u32::from(s.cs >= 2);
    let (cs, la, lh, b_h, c) = match (s.leader, action, s.la) {
        (Leader::Honest, Action::Adopt, 0) => (ext1, 0, 1, s.lh as u32, commit),
        (Leader::Honest, Action::Adopt, 1) => (1, 0, 1, s.lh as u32, 0),
        (Leader::Adversarial, Action::Adopt, 0) => (s.cs, 1, 0, s.lh as u32, 0),
        (Leader::Adversarial, Action::Adopt, 1) => (0, 1, 0, s.lh as u32, 0),
        (Leader::Honest, Action::Wait | Action::Silent, 0) => {
            (ext1, 0, (s.lh + 1).min(lh_cap), 0, commit)
        }
        (Leader::Honest, Action::Wait | Action::Silent, 1) => (1, 0, (s.lh + 1).min(lh_cap), 0, 0),
        (Leader::Adversarial, Action::Wait, 0) => (0, 0, s.lh, 0, 0),
        (Leader::Adversarial, Action::Wait | Action::Withhold, 1) => {
            (ext1, 1, 0, s.lh as u32, commit)
        }
        // Released block and the new honest block both extend: one
        // commitment per block whose three-block window completes.
        (Leader::Honest, Action::Release, 1) => {
            let c = match s.cs {
                0 => 0,
                1 => 1,
                _ => 2,
            };
            ((s.cs + 2).min(3), 0, 1, s.lh as u32, c)
        }
        (Leader::Adversarial, Action::Release, 1) => (ext1, 1, 0, s.lh as u32, commit),
        // Preemptive fork: the revealed block kills the new proposal; the
        // pending blocks stay canonical and settle.
        (Leader::Honest, Action::Withhold, 1) => (0, 0, 0, s.lh as u32, 0),
        (Leader::Adversarial, Action::Silent, _) => (0, 0, 0, 0, 0),
        _ => unreachable!("legality already checked"),
    };
    StepEffect {
        cs,
        primed: false,
        la,
        lh,
        b_h,
        c,
    }
}

/// Delay-leg decomposition of one view, by protocol, current leader, action,
/// and next leader.
pub fn time_legs(
    protocol: Protocol,
    leader: Leader,
    action: Action,
    next_leader: Leader,
) -> LegProfile {
    use Leader::{Adversarial as A, Honest as H};
    // A silent adversarial leader skips vote collection: the proposal slot
    // times out and the view change begins directly.
    let silent_leader = leader == A && action == Action::Silent;
    match protocol {
        // Uniform views: proposal slot plus local vote tally, both at the
        // bound.
        Protocol::Streamlet => LegProfile::new(0, 2),
        Protocol::Chs | Protocol::Fhs => {
            let happy = protocol == Protocol::Fhs;
            match (leader, next_leader) {
                // Proposal, vote collection, and the responsive view change
                // all run at network speed; the fast happy path folds the
                // view change into vote collection.
                (H, H) => LegProfile::new(if happy { 2 } else { 3 }, 0),
                (H, A) => LegProfile::new(1, 2),
                (A, H) if silent_leader => LegProfile::new(1, 1),
                (A, A) if silent_leader => LegProfile::new(0, 2),
                (A, H) => LegProfile::new(1, 2),
                (A, A) => LegProfile::new(0, 3),
            }
        }
        Protocol::TwoChs => match (leader, next_leader) {
            // Non-responsive: the view change always waits out the bound.
            (H, H) => LegProfile::new(2, 1),
            (H, A) => LegProfile::new(1, 2),
            (A, _) if silent_leader => LegProfile::new(0, 2),
            (A, _) => LegProfile::new(0, 3),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(p: Protocol) -> StateSpace {
        StateSpace::new(p, None).unwrap()
    }

    fn effect(p: Protocol, state: &str, action: Action) -> StepEffect {
        let s: State = state.parse().unwrap();
        step_effect(&space(p), &s, action).unwrap()
    }

    #[test]
    fn legal_actions_gate_release_and_withhold() {
        let held = "(2,1,1,A)".parse().unwrap();
        let free = "(2,0,1,H)".parse().unwrap();
        assert_eq!(
            legal_actions(Protocol::Chs, &free),
            vec![Action::Adopt, Action::Wait, Action::Silent]
        );
        assert_eq!(
            legal_actions(Protocol::Chs, &held),
            vec![Action::Adopt, Action::Wait, Action::Release, Action::Silent]
        );
        assert_eq!(
            legal_actions(Protocol::Streamlet, &"(1,1,0,H)".parse().unwrap()),
            vec![
                Action::Adopt,
                Action::Wait,
                Action::Release,
                Action::Silent,
                Action::Withhold
            ]
        );
        assert_eq!(
            legal_actions(Protocol::Streamlet, &free),
            vec![Action::Adopt, Action::Wait, Action::Silent]
        );
    }

    #[test]
    fn illegal_actions_are_rejected() {
        let s: State = "(1,0,0,H)".parse().unwrap();
        assert!(step_effect(&space(Protocol::Chs), &s, Action::Release).is_err());
        assert!(step_effect(&space(Protocol::Chs), &s, Action::Withhold).is_err());
        assert!(step_effect(&space(Protocol::Streamlet), &s, Action::Withhold).is_err());
    }

    #[test]
    fn adopt_credits_pending_blocks() {
        let e = effect(Protocol::Chs, "(2,0,1,H)", Action::Adopt);
        assert_eq!((e.cs, e.primed, e.la, e.lh), (3, false, 0, 1));
        assert_eq!((e.b_h, e.c), (1, 0));

        // Abandoning the hidden block still credits both pending blocks but
        // the broken run pays no commitment.
        let e = effect(Protocol::Chs, "(3,1,2,H)", Action::Adopt);
        assert_eq!((e.cs, e.primed, e.la, e.lh), (1, false, 0, 1));
        assert_eq!((e.b_h, e.c), (2, 0));
    }

    #[test]
    fn saturated_wait_locks_a_block_and_an_armed_run_commits() {
        let e = effect(Protocol::Chs, "(3,0,2,H)", Action::Wait);
        assert_eq!((e.cs, e.primed, e.la, e.lh), (3, false, 0, 2));
        assert_eq!((e.b_h, e.c), (1, 1));

        let e = effect(Protocol::TwoChs, "(1,0,1,H)", Action::Silent);
        assert_eq!((e.cs, e.primed, e.la, e.lh), (2, false, 0, 1));
        assert_eq!((e.b_h, e.c), (1, 0));

        let e = effect(Protocol::TwoChs, "(2,0,1,H)", Action::Wait);
        assert_eq!((e.b_h, e.c), (1, 1));
    }

    #[test]
    fn passive_release_forks_pending_blocks_away() {
        let e = effect(Protocol::Chs, "(2,1,1,A)", Action::Wait);
        assert_eq!((e.cs, e.primed, e.la, e.lh), (1, false, 1, 0));
        assert_eq!((e.b_h, e.c), (0, 0));
    }

    #[test]
    fn primed_run_pays_once_then_restarts() {
        // Hiding a block in front of an armed run defers the commitment.
        let e = effect(Protocol::Chs, "(3,0,0,A)", Action::Wait);
        assert_eq!((e.cs, e.primed), (3, true));
        // The next public extension pays it and restarts the run.
        let e = effect(Protocol::Chs, "(3p,1,0,A)", Action::Wait);
        assert_eq!((e.cs, e.primed, e.c), (1, false, 1));
        // Breaking again instead kills the deferred commitment.
        let e = effect(Protocol::Chs, "(3p,1,0,A)", Action::Adopt);
        assert_eq!((e.cs, e.primed, e.c), (0, false, 0));
    }

    #[test]
    fn honest_release_of_an_armed_run_commits_once() {
        let e = effect(Protocol::Chs, "(3,1,0,H)", Action::Release);
        assert_eq!((e.cs, e.primed, e.la, e.lh), (3, false, 0, 1));
        assert_eq!((e.b_h, e.c), (0, 1));

        let e = effect(Protocol::Chs, "(3p,1,0,H)", Action::Release);
        assert_eq!((e.cs, e.primed, e.c), (2, false, 1));

        // A fork destroys the pending block instead.
        let e = effect(Protocol::Chs, "(3,1,1,H)", Action::Release);
        assert_eq!((e.cs, e.primed, e.lh), (2, false, 1));
        assert_eq!((e.b_h, e.c), (0, 0));
    }

    #[test]
    fn silent_excludes_only_the_previous_views_block() {
        let e = effect(Protocol::Chs, "(2,0,2,A)", Action::Silent);
        assert_eq!((e.cs, e.la, e.lh), (0, 0, 1));
        // After the run is dead the remaining pending blocks are older than
        // one view and stay.
        let e = effect(Protocol::Chs, "(0,0,1,A)", Action::Silent);
        assert_eq!((e.cs, e.la, e.lh), (0, 0, 1));
        let e = effect(Protocol::Chs, "(3p,0,1,A)", Action::Silent);
        assert_eq!(e.lh, 1);
    }

    #[test]
    fn streamlet_effects_match_the_row_semantics() {
        let e = effect(Protocol::Streamlet, "(2,1,1,H)", Action::Release);
        assert_eq!((e.cs, e.la, e.lh), (3, 0, 1));
        assert_eq!((e.b_h, e.c), (1, 2));

        let e = effect(Protocol::Streamlet, "(1,1,1,H)", Action::Release);
        assert_eq!((e.b_h, e.c), (1, 1));

        let e = effect(Protocol::Streamlet, "(1,0,2,A)", Action::Silent);
        assert_eq!((e.cs, e.la, e.lh), (0, 0, 0));
        assert_eq!((e.b_h, e.c), (0, 0));

        // Preemptive fork settles the pending blocks and zeroes the run.
        let e = effect(Protocol::Streamlet, "(2,1,3,H)", Action::Withhold);
        assert_eq!((e.cs, e.la, e.lh), (0, 0, 0));
        assert_eq!((e.b_h, e.c), (3, 0));

        // Blockless wait keeps pending blocks but kills consecutiveness.
        let e = effect(Protocol::Streamlet, "(3,0,2,A)", Action::Wait);
        assert_eq!((e.cs, e.la, e.lh), (0, 0, 2));

        // Pending blocks past the cap fall out uncredited.
        let e = effect(Protocol::Streamlet, "(3,0,4,H)", Action::Wait);
        assert_eq!((e.lh, e.b_h, e.c), (4, 0, 1));
    }

    #[test]
    fn leg_profiles_match_the_view_timing() {
        use Action::*;
        use Leader::{Adversarial as A, Honest as H};
        let t = |p, l, a, n| time_legs(p, l, a, n);

        assert_eq!(t(Protocol::Chs, H, Wait, H), LegProfile::new(3, 0));
        assert_eq!(t(Protocol::Chs, H, Adopt, A), LegProfile::new(1, 2));
        assert_eq!(t(Protocol::Chs, A, Release, H), LegProfile::new(1, 2));
        assert_eq!(t(Protocol::Chs, A, Wait, A), LegProfile::new(0, 3));
        assert_eq!(t(Protocol::Chs, A, Silent, H), LegProfile::new(1, 1));
        assert_eq!(t(Protocol::Chs, A, Silent, A), LegProfile::new(0, 2));

        assert_eq!(t(Protocol::Fhs, H, Adopt, H), LegProfile::new(2, 0));
        assert_eq!(t(Protocol::Fhs, H, Adopt, A), LegProfile::new(1, 2));
        assert_eq!(t(Protocol::Fhs, A, Silent, H), LegProfile::new(1, 1));

        assert_eq!(t(Protocol::TwoChs, H, Wait, H), LegProfile::new(2, 1));
        assert_eq!(t(Protocol::TwoChs, H, Wait, A), LegProfile::new(1, 2));
        assert_eq!(t(Protocol::TwoChs, A, Adopt, H), LegProfile::new(0, 3));
        assert_eq!(t(Protocol::TwoChs, A, Silent, H), LegProfile::new(0, 2));

        assert_eq!(t(Protocol::Streamlet, A, Silent, H), LegProfile::new(0, 2));
        assert_eq!(t(Protocol::Streamlet, H, Adopt, H), LegProfile::new(0, 2));
    }

    #[test]
    fn durations_scale_with_the_bound() {
        assert_eq!(LegProfile::new(1, 2).duration(5.0), 11.0);
        assert_eq!(LegProfile::new(3, 0).duration(5.0), 3.0);
        assert_eq!(LegProfile::new(0, 2).duration(5.0), 10.0);
    }
}
