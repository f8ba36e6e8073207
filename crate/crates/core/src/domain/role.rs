use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RoleKind {
    Senior,
    Junior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Power {
    High,
    Low,
}

/// A participant's role. Power is always derived from the kind, so the
/// senior/high and junior/low pairing cannot be broken by construction or by
/// deserialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RoleRepr", into = "RoleRepr")]
pub struct ParticipantRole {
    kind: RoleKind,
}

impl ParticipantRole {
    pub const SENIOR: Self = Self { kind: RoleKind::Senior };
    pub const JUNIOR: Self = Self { kind: RoleKind::Junior };

    pub fn new(kind: RoleKind) -> Self {
        Self { kind }
    }

    pub fn kind(&self) -> RoleKind {
        self.kind
    }

    pub fn power(&self) -> Power {
        match self.kind {
            RoleKind::Senior => Power::High,
            RoleKind::Junior => Power::Low,
        }
    }

    pub fn is_senior(&self) -> bool {
        self.kind == RoleKind::Senior
    }
}

#[derive(Serialize, Deserialize)]
struct RoleRepr {
    kind: RoleKind,
    power: Power,
}

impl From<ParticipantRole> for RoleRepr {
    fn from(role: ParticipantRole) -> Self {
        RoleRepr {
            kind: role.kind,
            power: role.power(),
        }
    }
}

impl TryFrom<RoleRepr> for ParticipantRole {
    type Error = String;

    fn try_from(repr: RoleRepr) -> Result<Self, Self::Error> {
        let role = ParticipantRole::new(repr.kind);
        if role.power() != repr.power {
            return Err(format!("{:?} role cannot carry {:?} power", repr.kind, repr.power));
        }
        Ok(role)
    }
}

/// Experimental condition of one task. Agent messages exist only under `Treatment`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    Baseline,
    Treatment,
}

impl Condition {
    pub fn allows_agent(self) -> bool {
        self == Condition::Treatment
    }

    pub fn other(self) -> Self {
        match self {
            Condition::Baseline => Condition::Treatment,
            Condition::Treatment => Condition::Baseline,
        }
    }
}
