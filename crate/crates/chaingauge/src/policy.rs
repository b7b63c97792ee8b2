//! Deterministic stationary policies and their on-disk format. A policy
//! file carries enough header context (protocol, alpha, k, cap, metric,
//! solved ratio) to detect loading it against a mismatched model.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Error;
use crate::mdp::MdpInstance;
use crate::rules::legal_actions;
use crate::solver::Metric;
use crate::state::{Action, Protocol, StateSpace};

/// One action per state, indexed by the state space order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    actions: Vec<Action>,
}

impl Policy {
    pub fn new(actions: Vec<Action>) -> Self {
        Policy { actions }
    }

    pub fn action(&self, state_index: usize) -> Action {
        self.actions[state_index]
    }

    pub fn set_action(&mut self, state_index: usize, action: Action) {
        self.actions[state_index] = action;
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    /// Release everything and mine on the public tip in every state.
    pub fn all_adopt(mdp: &MdpInstance) -> Self {
        Policy {
            actions: vec![Action::Adopt; mdp.num_states()],
        }
    }

    /// Never vote, never publish: the crash-silent baseline.
    pub fn all_silent(mdp: &MdpInstance) -> Self {
        Policy {
            actions: vec![Action::Silent; mdp.num_states()],
        }
    }

    /// Checks the length and the legality of every chosen action.
    pub fn validate(&self, mdp: &MdpInstance) -> Result<(), Error> {
        if self.actions.len() != mdp.num_states() {
            return Err(Error::Validation(format!(
                "policy covers {} states, model has {}",
                self.actions.len(),
                mdp.num_states()
            )));
        }
        for (s, state) in mdp.states.iter().enumerate() {
            let action = self.actions[s];
            if !legal_actions(mdp.protocol(), state).contains(&action) {
                return Err(Error::IllegalAction {
                    state: state.to_string(),
                    action: action.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Context stored alongside the action table.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyHeader {
    pub protocol: Protocol,
    pub alpha: f64,
    pub k: f64,
    pub lh_cap: u8,
    pub metric: Metric,
    pub rho_bar: f64,
    pub version: String,
}

/// Renders a policy file: a `key: value` header, a blank line, then one
/// `state action` row per state in index order. Floats use the shortest
/// representation that parses back to the identical bits.
pub fn render_policy_file(header: &PolicyHeader, policy: &Policy, space: &StateSpace) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "protocol: {}", header.protocol);
    let _ = writeln!(out, "alpha: {}", header.alpha);
    let _ = writeln!(out, "k: {}", header.k);
    let _ = writeln!(out, "lh_cap: {}", header.lh_cap);
    let _ = writeln!(out, "metric: {}", header.metric);
    let _ = writeln!(out, "rho_bar: {}", header.rho_bar);
    let _ = writeln!(out, "version: {}", header.version);
    out.push('\n');
    for (i, state) in space.states().iter().enumerate() {
        let _ = writeln!(out, "{} {}", state, policy.action(i));
    }
    out
}

pub fn save_policy(
    path: &Path,
    header: &PolicyHeader,
    policy: &Policy,
    space: &StateSpace,
) -> Result<(), Error> {
    std::fs::write(path, render_policy_file(header, policy, space))?;
    Ok(())
}

fn header_field<'a>(line: &'a str, key: &str) -> Result<&'a str, Error> {
    let (k, v) = line
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("malformed header line {line:?}")))?;
    if k.trim() != key {
        return Err(Error::Parse(format!(
            "expected header key {key:?}, found {:?}",
            k.trim()
        )));
    }
    Ok(v.trim())
}

/// Parses a policy file into its header and action table. The table must
/// cover the state space of the (protocol, lh_cap) named in the header,
/// exactly once per state, in index order.
pub fn parse_policy_file(text: &str) -> Result<(PolicyHeader, Policy), Error> {
    let mut lines = text.lines();
    let mut next_line = || {
        lines
            .next()
            .ok_or_else(|| Error::Parse("policy file truncated inside the header".into()))
    };
    let protocol: Protocol = header_field(next_line()?, "protocol")?.parse()?;
    let alpha: f64 = header_field(next_line()?, "alpha")?
        .parse()
        .map_err(|e| Error::Parse(format!("alpha: {e}")))?;
    let k: f64 = header_field(next_line()?, "k")?
        .parse()
        .map_err(|e| Error::Parse(format!("k: {e}")))?;
    let lh_cap: u8 = header_field(next_line()?, "lh_cap")?
        .parse()
        .map_err(|e| Error::Parse(format!("lh_cap: {e}")))?;
    let metric: Metric = header_field(next_line()?, "metric")?.parse()?;
    let rho_bar: f64 = header_field(next_line()?, "rho_bar")?
        .parse()
        .map_err(|e| Error::Parse(format!("rho_bar: {e}")))?;
    let version = header_field(next_line()?, "version")?.to_string();
    let blank = next_line()?;
    if !blank.trim().is_empty() {
        return Err(Error::Parse(format!(
            "expected a blank line after the header, found {blank:?}"
        )));
    }

    let space = StateSpace::new(protocol, Some(lh_cap))?;
    let mut actions = Vec::with_capacity(space.len());
    for (i, state) in space.states().iter().enumerate() {
        let line = lines.next().ok_or_else(|| {
            Error::Parse(format!("policy table ends early, missing state {state}"))
        })?;
        let (state_text, action_text) = line
            .trim()
            .split_once(' ')
            .ok_or_else(|| Error::Parse(format!("malformed policy row {line:?}")))?;
        let row_state: crate::state::State = state_text.parse()?;
        if row_state != *state {
            return Err(Error::Parse(format!(
                "row {i} names state {row_state}, expected {state}"
            )));
        }
        actions.push(action_text.trim().parse::<Action>()?);
    }
    if let Some(extra) = lines.find(|l| !l.trim().is_empty()) {
        return Err(Error::Parse(format!(
            "unexpected trailing content {extra:?}"
        )));
    }

    let header = PolicyHeader {
        protocol,
        alpha,
        k,
        lh_cap,
        metric,
        rho_bar,
        version,
    };
    Ok((header, Policy::new(actions)))
}

/// Loads a policy file and checks it against the model it will drive.
/// Mismatched protocol, alpha, k, or cap is an error; actions are checked
/// for legality state by state.
pub fn load_policy(path: &Path, mdp: &MdpInstance) -> Result<(PolicyHeader, Policy), Error> {
    let text = std::fs::read_to_string(path)?;
    let (header, policy) = parse_policy_file(&text)?;
    if header.protocol != mdp.protocol() {
        return Err(Error::HeaderMismatch(format!(
            "policy is for {}, model is {}",
            header.protocol,
            mdp.protocol()
        )));
    }
    if header.alpha != mdp.alpha {
        return Err(Error::HeaderMismatch(format!(
            "policy solved at alpha={}, model has alpha={}",
            header.alpha, mdp.alpha
        )));
    }
    if header.k != mdp.k {
        return Err(Error::HeaderMismatch(format!(
            "policy solved at k={}, model has k={}",
            header.k, mdp.k
        )));
    }
    if header.lh_cap != mdp.space.lh_cap {
        return Err(Error::HeaderMismatch(format!(
            "policy uses lh_cap={}, model has {}",
            header.lh_cap, mdp.space.lh_cap
        )));
    }
    policy.validate(mdp)?;
    Ok((header, policy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::build_mdp;
    use crate::state::Protocol;

    fn header(protocol: Protocol, alpha: f64) -> PolicyHeader {
        PolicyHeader {
            protocol,
            alpha,
            k: 5.0,
            lh_cap: StateSpace::new(protocol, None).unwrap().lh_cap,
            metric: Metric::Growth,
            rho_bar: 0.95380859375,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    #[test]
    fn render_and_parse_round_trip_exactly() {
        let mdp = build_mdp(Protocol::Chs, 0.3, 5.0, None).unwrap();
        let mut policy = Policy::all_silent(&mdp);
        policy.set_action(5, Action::Adopt);
        let h = header(Protocol::Chs, 0.3);
        let text = render_policy_file(&h, &policy, &mdp.space);
        let (h2, p2) = parse_policy_file(&text).unwrap();
        assert_eq!(h, h2);
        assert_eq!(policy, p2);
        let text2 = render_policy_file(&h2, &p2, &mdp.space);
        assert_eq!(text, text2);
    }

    #[test]
    fn load_rejects_mismatched_alpha() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.policy");
        let mdp = build_mdp(Protocol::Fhs, 0.2, 5.0, None).unwrap();
        save_policy(&path, &header(Protocol::Fhs, 0.2), &Policy::all_adopt(&mdp), &mdp.space)
            .unwrap();
        let other = build_mdp(Protocol::Fhs, 0.25, 5.0, None).unwrap();
        let err = load_policy(&path, &other).unwrap_err();
        assert!(matches!(err, Error::HeaderMismatch(_)), "{err}");
    }

    #[test]
    fn parse_rejects_an_illegal_action_via_validate() {
        let mdp = build_mdp(Protocol::Chs, 0.1, 5.0, None).unwrap();
        // Withhold is never legal outside Streamlet.
        let policy = Policy::new(vec![Action::Withhold; mdp.num_states()]);
        assert!(policy.validate(&mdp).is_err());
    }

    #[test]
    fn parse_rejects_reordered_rows() {
        let mdp = build_mdp(Protocol::TwoChs, 0.1, 5.0, None).unwrap();
        let h = header(Protocol::TwoChs, 0.1);
        let text = render_policy_file(&h, &Policy::all_adopt(&mdp), &mdp.space);
        let mut lines: Vec<&str> = text.lines().collect();
        lines.swap(9, 10);
        let err = parse_policy_file(&lines.join("\n")).unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err}");
    }
}
