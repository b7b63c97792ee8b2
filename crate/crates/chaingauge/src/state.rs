//! Protocol identifiers, per-view adversary state, and the action set.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// The four chained BFT protocols the model covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    /// Three-phase, responsive (chained HotStuff).
    Chs,
    /// Two-phase, non-responsive.
    TwoChs,
    /// Two-phase, responsive, with a fast happy path.
    Fhs,
    /// Longest-certified-chain rule, uniform view length.
    Streamlet,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [
        Protocol::Chs,
        Protocol::TwoChs,
        Protocol::Fhs,
        Protocol::Streamlet,
    ];

    /// Length of the consecutive-block run that arms a commitment.
    pub fn consec_cap(self) -> u8 {
        match self {
            Protocol::Chs | Protocol::Streamlet => 3,
            Protocol::TwoChs | Protocol::Fhs => 2,
        }
    }

    /// Whether the state space carries a primed (deferred-commitment) value
    /// at the run cap.
    pub fn has_primed(self) -> bool {
        !matches!(self, Protocol::Streamlet)
    }

    /// Default bound on tracked pending honest blocks. For Streamlet this is
    /// a configurable truncation; for the others it is intrinsic to the
    /// locking rule.
    pub fn default_lh_cap(self) -> u8 {
        match self {
            Protocol::Chs => 2,
            Protocol::TwoChs | Protocol::Fhs => 1,
            Protocol::Streamlet => 4,
        }
    }

    /// Whether view changes complete at network speed behind an honest leader.
    pub fn responsive(self) -> bool {
        match self {
            Protocol::Chs | Protocol::Fhs => true,
            Protocol::TwoChs | Protocol::Streamlet => false,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Protocol::Chs => "chs",
            Protocol::TwoChs => "2chs",
            Protocol::Fhs => "fhs",
            Protocol::Streamlet => "streamlet",
        };
        f.write_str(s)
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "chs" => Ok(Protocol::Chs),
            "2chs" => Ok(Protocol::TwoChs),
            "fhs" => Ok(Protocol::Fhs),
            "streamlet" => Ok(Protocol::Streamlet),
            _ => Err(Error::Parse(format!("unknown protocol {s:?}"))),
        }
    }
}

/// Who leads the view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Leader {
    Honest,
    Adversarial,
}

impl Leader {
    fn symbol(self) -> char {
        match self {
            Leader::Honest => 'H',
            Leader::Adversarial => 'A',
        }
    }
}

impl fmt::Display for Leader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

impl FromStr for Leader {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "H" => Ok(Leader::Honest),
            "A" => Ok(Leader::Adversarial),
            _ => Err(Error::Parse(format!("unknown leader {s:?}"))),
        }
    }
}

/// Adversary actions. Declaration order is the deterministic tie-break order
/// used whenever two actions score equally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    /// Give up any hidden block and accept the public chain.
    Adopt,
    /// Keep quiet and let the view play out; a hidden block stays hidden
    /// unless extending it reveals it.
    Wait,
    /// Publish the hidden block, overriding pending honest blocks.
    Release,
    /// Produce nothing as leader / suppress the previous proposal.
    Silent,
    /// Reveal the hidden block only after the next proposal, killing it
    /// (Streamlet's preemptive fork).
    Withhold,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::Adopt,
        Action::Wait,
        Action::Release,
        Action::Silent,
        Action::Withhold,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Action::Adopt => "Adopt",
            Action::Wait => "Wait",
            Action::Release => "Release",
            Action::Silent => "Silent",
            Action::Withhold => "Withhold",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Action::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown action {s:?}")))
    }
}

/// One MDP state: consecutive-run value `cs` (with `primed` marking a
/// deferred commitment at the cap), hidden adversarial block count `la`
/// (0 or 1), pending honest block count `lh`, and the current leader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct State {
    pub cs: u8,
    pub primed: bool,
    pub la: u8,
    pub lh: u8,
    pub leader: Leader,
}

impl State {
    pub fn new(cs: u8, primed: bool, la: u8, lh: u8, leader: Leader) -> Self {
        State {
            cs,
            primed,
            la,
            lh,
            leader,
        }
    }

    /// The run is at the cap, primed or not; the next extension commits.
    pub fn at_cap(&self, cap: u8) -> bool {
        self.cs == cap
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = if self.primed { "p" } else { "" };
        write!(
            f,
            "({}{},{},{},{})",
            self.cs,
            p,
            self.la,
            self.lh,
            self.leader.symbol()
        )
    }
}

impl FromStr for State {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let bad = || Error::Parse(format!("malformed state {s:?}"));
        let inner = s
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .ok_or_else(bad)?;
        let parts: Vec<&str> = inner.split(',').collect();
        if parts.len() != 4 {
            return Err(bad());
        }
        let (cs_part, primed) = match parts[0].strip_suffix('p') {
            Some(base) => (base, true),
            None => (parts[0], false),
        };
        let cs: u8 = cs_part.parse().map_err(|_| bad())?;
        let la: u8 = parts[1].parse().map_err(|_| bad())?;
        let lh: u8 = parts[2].parse().map_err(|_| bad())?;
        let leader = match parts[3] {
            "H" => Leader::Honest,
            "A" => Leader::Adversarial,
            _ => return Err(bad()),
        };
        Ok(State::new(cs, primed, la, lh, leader))
    }
}

/// Enumerates and indexes the full state space of one protocol instance.
///
/// Order is lexicographic over (cs with primed sorted after its base value,
/// la, lh, leader with H first), so index 0 is the initial state (0,0,0,H).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    pub protocol: Protocol,
    pub lh_cap: u8,
}

impl StateSpace {
    pub fn new(protocol: Protocol, lh_cap: Option<u8>) -> Result<Self, Error> {
        let lh_cap = lh_cap.unwrap_or_else(|| protocol.default_lh_cap());
        if protocol != Protocol::Streamlet && lh_cap != protocol.default_lh_cap() {
            return Err(Error::Config(format!(
                "pending-block cap is fixed at {} for {protocol}",
                protocol.default_lh_cap()
            )));
        }
        if lh_cap == 0 {
            return Err(Error::Config("pending-block cap must be positive".into()));
        }
        Ok(StateSpace { protocol, lh_cap })
    }

    /// Number of distinct cs values, counting the primed variant.
    fn cs_values(&self) -> usize {
        self.protocol.consec_cap() as usize + 1 + usize::from(self.protocol.has_primed())
    }

    pub fn len(&self) -> usize {
        self.cs_values() * 2 * (self.lh_cap as usize + 1) * 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn cs_rank(&self, cs: u8, primed: bool) -> usize {
        // Primed sorts directly after its base value (the cap).
        cs as usize + usize::from(primed)
    }

    pub fn index_of(&self, s: &State) -> usize {
        debug_assert!(self.contains(s), "state {s} outside the space");
        let mut idx = self.cs_rank(s.cs, s.primed);
        idx = idx * 2 + s.la as usize;
        idx = idx * (self.lh_cap as usize + 1) + s.lh as usize;
        idx * 2 + usize::from(s.leader == Leader::Adversarial)
    }

    pub fn contains(&self, s: &State) -> bool {
        s.cs <= self.protocol.consec_cap()
            && (!s.primed || (self.protocol.has_primed() && s.cs == self.protocol.consec_cap()))
            && s.la <= 1
            && s.lh <= self.lh_cap
    }

    pub fn states(&self) -> Vec<State> {
        let cap = self.protocol.consec_cap();
        let mut out = Vec::with_capacity(self.len());
        for cs in 0..=cap {
            for primed in [false, true] {
                if primed && !(self.protocol.has_primed() && cs == cap) {
                    continue;
                }
                for la in 0..=1u8 {
                    for lh in 0..=self.lh_cap {
                        for leader in [Leader::Honest, Leader::Adversarial] {
                            out.push(State::new(cs, primed, la, lh, leader));
                        }
                    }
                }
            }
        }
        out
    }

    pub fn initial_state(&self) -> State {
        State::new(0, false, 0, 0, Leader::Honest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn space_sizes_match_the_cross_products() {
        assert_eq!(StateSpace::new(Protocol::Chs, None).unwrap().len(), 60);
        assert_eq!(StateSpace::new(Protocol::TwoChs, None).unwrap().len(), 32);
        assert_eq!(StateSpace::new(Protocol::Fhs, None).unwrap().len(), 32);
        assert_eq!(StateSpace::new(Protocol::Streamlet, None).unwrap().len(), 80);
        assert_eq!(
            StateSpace::new(Protocol::Streamlet, Some(8)).unwrap().len(),
            4 * 2 * 9 * 2
        );
    }

    #[test]
    fn enumeration_is_dense_and_index_matches() {
        for protocol in Protocol::ALL {
            let space = StateSpace::new(protocol, None).unwrap();
            let states = space.states();
            assert_eq!(states.len(), space.len());
            for (i, s) in states.iter().enumerate() {
                assert!(space.contains(s));
                assert_eq!(space.index_of(s), i, "state {s}");
            }
        }
    }

    #[test]
    fn initial_state_is_index_zero() {
        for protocol in Protocol::ALL {
            let space = StateSpace::new(protocol, None).unwrap();
            assert_eq!(space.index_of(&space.initial_state()), 0);
        }
    }

    #[test]
    fn rendering_round_trips() {
        let s = State::new(3, true, 1, 0, Leader::Adversarial);
        assert_eq!(s.to_string(), "(3p,1,0,A)");
        assert_eq!("(3p,1,0,A)".parse::<State>().unwrap(), s);
        assert_eq!(
            "(0,0,2,H)".parse::<State>().unwrap(),
            State::new(0, false, 0, 2, Leader::Honest)
        );
        assert!("(4,0,0,X)".parse::<State>().is_err());
        assert!("3p,1,0,A".parse::<State>().is_err());
    }

    #[test]
    fn fixed_caps_reject_overrides() {
        assert!(StateSpace::new(Protocol::Chs, Some(3)).is_err());
        assert!(StateSpace::new(Protocol::Chs, Some(2)).is_ok());
        assert!(StateSpace::new(Protocol::Streamlet, Some(0)).is_err());
    }
}
