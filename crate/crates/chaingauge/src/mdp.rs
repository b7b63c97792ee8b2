//! Assembles the per-view dynamics into an explicit finite MDP: one pair of
//! outcomes (next leader adversarial or honest) per state and legal action.

use crate::error::Error;
use crate::rules::{legal_actions, step_effect, time_legs, LegProfile};
use crate::state::{Action, Leader, Protocol, State, StateSpace};

/// One weighted outcome of playing an action: the successor state (keyed by
/// index), its probability, the rewards earned, and the view's timing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionEntry {
    pub next: usize,
    pub next_state: State,
    pub prob: f64,
    pub b_h: u32,
    pub c: u32,
    pub legs: LegProfile,
    pub t: f64,
}

/// A legal action in some state together with its two outcomes, adversarial
/// next leader first.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChoice {
    pub action: Action,
    pub entries: [TransitionEntry; 2],
}

impl ActionChoice {
    /// Expected view duration over the next-leader draw.
    pub fn expected_t(&self) -> f64 {
        self.entries[0].prob * self.entries[0].t + self.entries[1].prob * self.entries[1].t
    }

    /// Rewards do not depend on the next leader.
    pub fn b_h(&self) -> u32 {
        self.entries[0].b_h
    }

    pub fn c(&self) -> u32 {
        self.entries[0].c
    }
}

/// The fully enumerated model for one (protocol, alpha, k) instance.
/// Immutable after construction; states are indexed per `StateSpace` order.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpInstance {
    pub space: StateSpace,
    pub alpha: f64,
    pub k: f64,
    pub states: Vec<State>,
    pub choices: Vec<Vec<ActionChoice>>,
}

impl MdpInstance {
    pub fn protocol(&self) -> Protocol {
        self.space.protocol
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn initial_index(&self) -> usize {
        self.space.index_of(&self.space.initial_state())
    }

    pub fn choice(&self, state: usize, action: Action) -> Option<&ActionChoice> {
        self.choices[state].iter().find(|ch| ch.action == action)
    }
}

/// Guards shared by every entry point that takes a Byzantine fraction.
pub fn check_alpha(alpha: f64) -> Result<(), Error> {
    if !alpha.is_finite() || !(0.0..1.0 / 3.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    Ok(())
}

pub fn check_k(k: f64) -> Result<(), Error> {
    if !k.is_finite() || k < 1.0 {
        return Err(Error::Config(format!(
            "delay ratio k must be at least 1, got {k}"
        )));
    }
    Ok(())
}

/// Enumerates the full model. `lh_cap` only applies to Streamlet (the other
/// protocols fix it); `None` takes the protocol default.
pub fn build_mdp(
    protocol: Protocol,
    alpha: f64,
    k: f64,
    lh_cap: Option<u8>,
) -> Result<MdpInstance, Error> {
    check_alpha(alpha)?;
    check_k(k)?;
    let space = StateSpace::new(protocol, lh_cap)?;
    let states = space.states();
    let mut choices = Vec::with_capacity(states.len());
    for state in &states {
        let mut per_state = Vec::new();
        for action in legal_actions(protocol, state) {
            let effect = step_effect(&space, state, action)?;
            let entry = |next_leader: Leader, prob: f64| {
                let next_state = effect.next_state(next_leader);
                let legs = time_legs(protocol, state.leader, action, next_leader);
                TransitionEntry {
                    next: space.index_of(&next_state),
                    next_state,
                    prob,
                    b_h: effect.b_h,
                    c: effect.c,
                    legs,
                    t: legs.duration(k),
                }
            };
            per_state.push(ActionChoice {
                action,
                entries: [
                    entry(Leader::Adversarial, alpha),
                    entry(Leader::Honest, 1.0 - alpha),
                ],
            });
        }
        choices.push(per_state);
    }
    Ok(MdpInstance {
        space,
        alpha,
        k,
        states,
        choices,
    })
}

/// Structural checks over a built instance. Returns one line per violation;
/// an empty report means the instance is sound.
pub fn validate_mdp(mdp: &MdpInstance) -> Vec<String> {
    let mut report = Vec::new();
    let n = mdp.num_states();
    if mdp.states.len() != mdp.choices.len() {
        report.push("state and choice tables differ in length".to_string());
        return report;
    }
    for (i, state) in mdp.states.iter().enumerate() {
        if mdp.space.index_of(state) != i {
            report.push(format!("state {state} stored at index {i}"));
        }
        let legal = legal_actions(mdp.protocol(), state);
        let found: Vec<Action> = mdp.choices[i].iter().map(|ch| ch.action).collect();
        if legal != found {
            report.push(format!("state {state}: action set {found:?} != {legal:?}"));
        }
        for ch in &mdp.choices[i] {
            let ctx = format!("({state}, {})", ch.action);
            // Probabilities are the two leader-draw branches and must sum to
            // one exactly, not approximately.
            let sum = ch.entries[0].prob + ch.entries[1].prob;
            if sum != 1.0 {
                report.push(format!("{ctx}: probabilities sum to {sum}, not 1"));
            }
            if ch.entries[0].next_state.leader != Leader::Adversarial
                || ch.entries[1].next_state.leader != Leader::Honest
            {
                report.push(format!("{ctx}: entries out of leader order"));
            }
            if ch.entries[0].b_h != ch.entries[1].b_h || ch.entries[0].c != ch.entries[1].c {
                report.push(format!("{ctx}: rewards differ across the leader draw"));
            }
            for e in &ch.entries {
                if e.next >= n {
                    report.push(format!("{ctx}: successor index {} out of range", e.next));
                    continue;
                }
                if !(0.0..=1.0).contains(&e.prob) {
                    report.push(format!("{ctx}: probability {} out of range", e.prob));
                }
                if mdp.space.index_of(&e.next_state) != e.next {
                    report.push(format!("{ctx}: successor state/index disagree"));
                }
                if !mdp.space.contains(&e.next_state) {
                    report.push(format!("{ctx}: successor {} leaves the space", e.next_state));
                }
                if e.t <= 0.0 {
                    report.push(format!("{ctx}: non-positive duration {}", e.t));
                }
                if e.t != e.legs.duration(mdp.k) {
                    report.push(format!("{ctx}: duration {} != leg decomposition", e.t));
                }
                if e.b_h > mdp.space.lh_cap as u32 {
                    report.push(format!(
                        "{ctx}: settles {} blocks, above the pending cap {}",
                        e.b_h, mdp.space.lh_cap
                    ));
                }
                if e.c > 2 {
                    report.push(format!("{ctx}: {} commitments breach the c <= 2 bound", e.c));
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_are_validated_clean() {
        for protocol in Protocol::ALL {
            for alpha in [0.0, 0.15, 0.33] {
                let mdp = build_mdp(protocol, alpha, 5.0, None).unwrap();
                assert_eq!(validate_mdp(&mdp), Vec::<String>::new());
            }
        }
    }

    #[test]
    fn sizes_and_outcome_counts() {
        let mdp = build_mdp(Protocol::Chs, 0.1, 5.0, None).unwrap();
        assert_eq!(mdp.num_states(), 60);
        for per_state in &mdp.choices {
            for ch in per_state {
                assert_eq!(ch.entries.len(), 2);
            }
        }
        assert_eq!(build_mdp(Protocol::TwoChs, 0.1, 5.0, None).unwrap().num_states(), 32);
        assert_eq!(
            build_mdp(Protocol::Streamlet, 0.1, 5.0, Some(8)).unwrap().num_states(),
            144
        );
    }

    #[test]
    fn alpha_zero_zeroes_adversarial_branches() {
        let mdp = build_mdp(Protocol::TwoChs, 0.0, 5.0, None).unwrap();
        for per_state in &mdp.choices {
            for ch in per_state {
                assert_eq!(ch.entries[0].prob, 0.0);
                assert_eq!(ch.entries[1].prob, 1.0);
            }
        }
    }

    #[test]
    fn alpha_guard_rejects_the_fault_bound() {
        assert!(build_mdp(Protocol::Fhs, 0.34, 5.0, None).is_err());
        assert!(build_mdp(Protocol::Fhs, 1.0 / 3.0, 5.0, None).is_err());
        assert!(build_mdp(Protocol::Fhs, -0.01, 5.0, None).is_err());
        assert!(build_mdp(Protocol::Fhs, 0.33, 5.0, None).is_ok());
        assert!(build_mdp(Protocol::Fhs, 0.33, 0.5, None).is_err());
    }

    #[test]
    fn worked_transition_example_holds() {
        let mdp = build_mdp(Protocol::Chs, 0.1, 5.0, None).unwrap();
        let s = mdp.space.index_of(&"(2,0,1,H)".parse().unwrap());
        let ch = mdp.choice(s, Action::Adopt).unwrap();
        let a = &ch.entries[0];
        assert_eq!(a.next_state, "(3,0,1,A)".parse().unwrap());
        assert_eq!(a.prob, 0.1);
        assert_eq!((a.b_h, a.c), (1, 0));
        assert_eq!(a.legs, LegProfile::new(1, 2));
        assert_eq!(a.t, 11.0);
        let h = &ch.entries[1];
        assert_eq!(h.next_state, "(3,0,1,H)".parse().unwrap());
        assert_eq!(h.prob, 0.9);
        assert_eq!(h.legs, LegProfile::new(3, 0));
        assert_eq!(h.t, 3.0);
    }

    #[test]
    fn injected_faults_are_reported() {
        let mut mdp = build_mdp(Protocol::Chs, 0.15, 5.0, None).unwrap();
        mdp.choices[4][0].entries[0].prob = 0.2;
        mdp.choices[9][1].entries[0].c = 3;
        let report = validate_mdp(&mdp);
        assert!(report.iter().any(|l| l.contains("probabilities sum")));
        assert!(report.iter().any(|l| l.contains("c <= 2")));
    }
}
