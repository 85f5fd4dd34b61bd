use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// Budget arithmetic runs on integer pico-epsilons: every Epsilon is a whole
// number of units, so ledger sums are exact and `spent <= budget` holds
// without any float tolerance.
const UNITS_PER_EPSILON: f64 = 1e12;

/// Largest accepted epsilon; beyond it pico resolution no longer round-trips
/// through `f64`.
pub const MAX_EPSILON: f64 = 1e6;

fn from_units(u: u128) -> f64 {
    u as f64 / UNITS_PER_EPSILON
}

/// A positive, finite privacy-loss bound, held at a resolution of 1e-12.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Epsilon(f64);

impl Epsilon {
    /// Rounds `value` to the nearest multiple of 1e-12.
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0 && value <= MAX_EPSILON) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in (0, {MAX_EPSILON}], got {value}"
            )));
        }
        Self::from_units((value * UNITS_PER_EPSILON).round() as u128)
    }

    fn from_units(units: u128) -> Result<Self> {
        if units == 0 {
            return Err(Error::InvalidArgument(
                "epsilon is below the accounting resolution of 1e-12".into(),
            ));
        }
        Ok(Epsilon(from_units(units)))
    }

    fn units(self) -> u128 {
        (self.0 * UNITS_PER_EPSILON).round() as u128
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Even share for `parts` sequential uses, rounded down so that `parts`
    /// charges of it never exceed `self`.
    pub fn split(self, parts: usize) -> Result<Self> {
        if parts == 0 {
            return Err(Error::InvalidArgument("cannot split epsilon into zero parts".into()));
        }
        Self::from_units(self.units() / parts as u128)
    }
}

impl TryFrom<f64> for Epsilon {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Epsilon::new(v)
    }
}

impl From<Epsilon> for f64 {
    fn from(e: Epsilon) -> f64 {
        e.0
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub description: String,
    pub epsilon: Epsilon,
}

/// Total budget plus an append-only ledger of charges.
///
/// Single writer: callers that charge from several threads must serialize
/// access (e.g. behind a `Mutex`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AccountantRepr", into = "AccountantRepr")]
pub struct PrivacyAccountant {
    budget: Epsilon,
    budget_units: u128,
    ledger: Vec<LedgerEntry>,
    spent_units: u128,
}

impl PrivacyAccountant {
    pub fn new(budget: Epsilon) -> Self {
        PrivacyAccountant {
            budget,
            budget_units: budget.units(),
            ledger: Vec::new(),
            spent_units: 0,
        }
    }

    pub fn budget(&self) -> Epsilon {
        self.budget
    }

    pub fn spent(&self) -> f64 {
        from_units(self.spent_units)
    }

    pub fn remaining(&self) -> f64 {
        from_units(self.budget_units - self.spent_units)
    }

    pub fn ledger(&self) -> &[LedgerEntry] {
        &self.ledger
    }

    /// Whether a charge of `epsilon` would be accepted right now.
    pub fn can_afford(&self, epsilon: Epsilon) -> bool {
        let units = epsilon.units();
        self.spent_units + units <= self.budget_units
    }

    /// Appends `(description, epsilon)` iff it fits in the remaining budget.
    /// A refusal leaves the accountant untouched.
    pub fn charge(&mut self, description: impl Into<String>, epsilon: Epsilon) -> Result<()> {
        let units = epsilon.units();
        if self.spent_units + units > self.budget_units {
            return Err(Error::BudgetExhausted {
                requested: epsilon.value(),
                remaining: self.remaining(),
            });
        }
        self.spent_units += units;
        self.ledger.push(LedgerEntry {
            description: description.into(),
            epsilon,
        });
        Ok(())
    }

    /// Plain-text ledger: one `key: value` line per fact, then one line per
    /// entry with its running total.
    pub fn report(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("budget: {}\n", self.budget));
        out.push_str(&format!("spent: {}\n", self.spent()));
        out.push_str(&format!("remaining: {}\n", self.remaining()));
        out.push_str(&format!("entries: {}\n", self.ledger.len()));
        let mut cumulative = 0u128;
        for (i, e) in self.ledger.iter().enumerate() {
            cumulative += e.epsilon.units();
            out.push_str(&format!(
                "entry.{}: description={:?} epsilon={} cumulative={}\n",
                i + 1,
                e.description,
                e.epsilon,
                from_units(cumulative)
            ));
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct AccountantRepr {
    budget: Epsilon,
    ledger: Vec<LedgerEntry>,
}

impl From<PrivacyAccountant> for AccountantRepr {
    fn from(a: PrivacyAccountant) -> Self {
        AccountantRepr {
            budget: a.budget,
            ledger: a.ledger,
        }
    }
}

impl TryFrom<AccountantRepr> for PrivacyAccountant {
    type Error = Error;
    fn try_from(r: AccountantRepr) -> Result<Self> {
        let mut acc = PrivacyAccountant::new(r.budget);
        for e in r.ledger {
            acc.charge(e.description, e.epsilon)?;
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eps(v: f64) -> Epsilon {
        Epsilon::new(v).unwrap()
    }

    #[test]
    fn epsilon_validation() {
        assert!(Epsilon::new(0.0).is_err());
        assert!(Epsilon::new(-1.0).is_err());
        assert!(Epsilon::new(f64::NAN).is_err());
        assert!(Epsilon::new(f64::INFINITY).is_err());
        assert!(eps(1.0).split(0).is_err());
        assert_eq!(eps(1.0).split(4).unwrap().value(), 0.25);
        assert!(Epsilon::new(1e-13).is_err());
        assert_eq!(eps(0.1).value(), 0.1);
        assert_eq!(eps(1.0 / 3.0).value(), 0.333333333333);
    }

    #[test]
    fn two_full_charges() {
        let mut a = PrivacyAccountant::new(eps(2.0));
        a.charge("a", eps(1.0)).unwrap();
        a.charge("b", eps(1.0)).unwrap();
        assert_eq!(a.remaining(), 0.0);
        assert_eq!(a.spent(), 2.0);
    }

    #[test]
    fn refusal_leaves_ledger() {
        let mut a = PrivacyAccountant::new(eps(2.0));
        a.charge("a", eps(1.5)).unwrap();
        let err = a.charge("b", eps(1.0)).unwrap_err();
        match err {
            Error::BudgetExhausted { requested, remaining } => {
                assert_eq!(requested, 1.0);
                assert!((remaining - 0.5).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(a.ledger().len(), 1);
    }

    #[test]
    fn many_small_charges_sum_to_budget() {
        for n in [3usize, 7, 10, 49, 1000] {
            let total = eps(1.0);
            let share = total.split(n).unwrap();
            let mut a = PrivacyAccountant::new(total);
            for i in 0..n {
                a.charge(format!("q{i}"), share).unwrap();
            }
            assert!((a.spent() - 1.0).abs() < 1e-9, "n={n} spent={}", a.spent());
        }
    }

    #[test]
    fn json_round_trip_revalidates() {
        let mut a = PrivacyAccountant::new(eps(1.0));
        a.charge("x", eps(0.25)).unwrap();
        let text = serde_json::to_string(&a).unwrap();
        let back: PrivacyAccountant = serde_json::from_str(&text).unwrap();
        assert_eq!(a, back);

        let overspent = r#"{"budget":1.0,"ledger":[{"description":"x","epsilon":0.8},{"description":"y","epsilon":0.8}]}"#;
        assert!(serde_json::from_str::<PrivacyAccountant>(overspent).is_err());
        let bad_eps = r#"{"budget":-1.0,"ledger":[]}"#;
        assert!(serde_json::from_str::<PrivacyAccountant>(bad_eps).is_err());
    }

    #[test]
    fn report_lists_running_total() {
        let mut a = PrivacyAccountant::new(eps(1.0));
        a.charge("first", eps(0.25)).unwrap();
        a.charge("second", eps(0.5)).unwrap();
        let r = a.report();
        assert!(r.contains("spent: 0.75\n"));
        assert!(r.contains("entry.2: description=\"second\" epsilon=0.5 cumulative=0.75\n"));
    }
}
