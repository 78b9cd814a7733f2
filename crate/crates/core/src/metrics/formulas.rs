//! Closed-form effort, edit-distance and element-count estimates.

use serde::{Deserialize, Serialize};

/// Edit distance of an HFSM built from a tree, given how many condition,
/// action and control containers were added or removed.
pub fn ged_hfsm_formula(d_condition: u64, d_action: u64, d_control: u64) -> u64 {
    3 * d_condition + 4 * d_action + 5 * d_control
}

/// Operations turning a sequential machine with `m_s` sequential and `m_fc`
/// fully connected states into the fault-tolerant design.
pub fn effort(m_s: u64, m_fc: u64) -> u64 {
    3 * (m_s + 1) + m_fc * ((m_s + m_fc).saturating_sub(1) + 3)
}

/// `effort` rewritten over the total state count `m = m_s + m_fc`.
pub fn effort_m(m: u64, m_fc: u64) -> u64 {
    3 * (m + 1) + m_fc * m.saturating_sub(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Bt,
    Fsm,
    Hfsm,
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bt" => Ok(PolicyKind::Bt),
            "fsm" => Ok(PolicyKind::Fsm),
            "hfsm" => Ok(PolicyKind::Hfsm),
            _ => Err(format!("unknown policy kind `{s}`")),
        }
    }
}

/// Approximate element counts for a policy with `m` actions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub graphical: f64,
    pub active: f64,
    /// Elements of the fully connected alternative, for machines only.
    pub fully_connected: Option<f64>,
    /// The closed forms are rules of thumb, not exact counts.
    pub approximate: bool,
}

pub fn formula_estimates(m: u64, m_fc: u64, kind: PolicyKind) -> Estimate {
    let mf = m as f64;
    let t_fc = (m_fc * m.saturating_sub(1)) as f64;
    let (graphical, active, fully_connected) = match kind {
        PolicyKind::Bt => (7.0 * mf - 1.0, 3.5 * mf, None),
        PolicyKind::Fsm => {
            let s = 5.0 * mf + 4.0 + t_fc;
            (s, s, Some(mf * (mf - 1.0)))
        }
        PolicyKind::Hfsm => (36.0 * mf - 3.0, 29.0 * mf - 3.0, None),
    };
    Estimate {
        graphical,
        active,
        fully_connected,
        approximate: true,
    }
}

/// Structural counts behind the estimates: `n` nodes, `t` transitions and
/// `s = n + t` (plus the outcome state for machines).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureCounts {
    pub m: u64,
    pub m_s: u64,
    pub m_fc: u64,
    pub t_fc: u64,
    pub n: f64,
    pub t: f64,
    pub s: f64,
}

impl StructureCounts {
    pub fn new(kind: PolicyKind, m: u64, m_fc: u64) -> Self {
        let mf = m as f64;
        let t_fc = m_fc * m.saturating_sub(1);
        let (n, t, s) = match kind {
            PolicyKind::Bt => {
                let n = 3.5 * mf;
                (n, n - 1.0, 2.0 * n - 1.0)
            }
            PolicyKind::Fsm => {
                let n = mf + 1.0;
                let t = n + 3.0 * mf + 1.0;
                (n, t, t + n + 1.0 + t_fc as f64)
            }
            PolicyKind::Hfsm => (3.5 * mf, 32.5 * mf - 3.0, 36.0 * mf - 3.0),
        };
        StructureCounts {
            m,
            m_s: m.saturating_sub(m_fc),
            m_fc,
            t_fc,
            n,
            t,
            s,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.m_s + self.m_fc == self.m && self.t_fc == self.m_fc * self.m.saturating_sub(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effort_values() {
        assert_eq!(effort(4, 0), 15);
        assert_eq!(effort(0, 0), 3);
        assert_eq!(effort(4, 1), 22);
        assert_eq!(effort_m(5, 1), 22);
        for s in 0..=20 {
            for f in 0..=20 {
                assert_eq!(effort(s, f), effort_m(s + f, f));
            }
        }
    }

    #[test]
    fn hfsm_formula() {
        assert_eq!(ged_hfsm_formula(1, 1, 1), 12);
        assert_eq!(ged_hfsm_formula(0, 0, 0), 0);
        assert_eq!(ged_hfsm_formula(1, 1, 2), 17);
    }

    #[test]
    fn estimates() {
        let bt = formula_estimates(4, 0, PolicyKind::Bt);
        assert_eq!((bt.graphical, bt.active), (27.0, 14.0));
        let fsm = formula_estimates(4, 0, PolicyKind::Fsm);
        assert_eq!((fsm.graphical, fsm.active), (24.0, 24.0));
        assert_eq!(fsm.fully_connected, Some(12.0));
        assert_eq!(formula_estimates(5, 1, PolicyKind::Fsm).graphical, 33.0);
        let h = formula_estimates(2, 0, PolicyKind::Hfsm);
        assert_eq!((h.graphical, h.active), (69.0, 55.0));
    }

    #[test]
    fn structure_counts() {
        let c = StructureCounts::new(PolicyKind::Fsm, 5, 1);
        assert!(c.is_consistent());
        assert_eq!(c.t_fc, 4);
        assert_eq!(c.t, 22.0);
        assert_eq!(c.s, 33.0);
        assert_eq!(StructureCounts::new(PolicyKind::Bt, 4, 0).s, 27.0);
    }
}
