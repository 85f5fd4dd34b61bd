use rand::Rng;

use crate::error::{Error, Result};
use crate::marginal::{axes_within, project, ContingencyTable, MarginalSpec};
use crate::privacy::laplace::draw;
use crate::privacy::{Epsilon, PrivacyAccountant};
use crate::query::RangeIndex;

/// Laplace-noised counts of a marginal and the epsilon paid for them.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyMarginal {
    pub(crate) spec: MarginalSpec,
    pub(crate) dims: Vec<usize>,
    pub(crate) noisy_counts: Vec<f64>,
    pub(crate) epsilon_charged: Epsilon,
    pub(crate) sensitivity: f64,
}

impl NoisyMarginal {
    /// Wraps counts that were noised elsewhere, e.g. loaded from a release.
    pub fn from_parts(
        spec: MarginalSpec,
        dims: Vec<usize>,
        noisy_counts: Vec<f64>,
        epsilon_charged: Epsilon,
        sensitivity: f64,
    ) -> Result<Self> {
        if dims.len() != spec.arity() || dims.iter().product::<usize>() != noisy_counts.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} noisy counts do not fit dims {dims:?}",
                noisy_counts.len()
            )));
        }
        if !(sensitivity > 0.0 && sensitivity.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sensitivity must be positive and finite, got {sensitivity}"
            )));
        }
        Ok(NoisyMarginal {
            spec,
            dims,
            noisy_counts,
            epsilon_charged,
            sensitivity,
        })
    }

    pub fn spec(&self) -> &MarginalSpec {
        &self.spec
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// May contain negative values.
    pub fn noisy_counts(&self) -> &[f64] {
        &self.noisy_counts
    }

    pub fn epsilon_charged(&self) -> Epsilon {
        self.epsilon_charged
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    /// Laplace scale used per bin.
    pub fn scale(&self) -> f64 {
        self.sensitivity / self.epsilon_charged.value()
    }

    /// Sums the noisy counts down to `target`'s columns. Post-processing:
    /// costs nothing further.
    pub fn project(&self, target: &MarginalSpec) -> Result<NoisyMarginal> {
        let keep = axes_within(&self.spec, target)?;
        let (dims, noisy_counts) = project(&self.dims, &self.noisy_counts, &keep);
        Ok(NoisyMarginal {
            spec: target.clone(),
            dims,
            noisy_counts,
            epsilon_charged: self.epsilon_charged,
            sensitivity: self.sensitivity,
        })
    }
}

/// Adds independent Laplace(1/epsilon) noise to every bin of `table`.
///
/// Bins partition the rows, so by parallel composition one charge of
/// `epsilon` covers the whole table no matter how many cells it has. The
/// charge is made before any noise is drawn; a refusal draws nothing.
pub fn privatize_marginal<R: Rng + ?Sized>(
    table: &ContingencyTable,
    epsilon: Epsilon,
    accountant: &mut PrivacyAccountant,
    rng: &mut R,
) -> Result<NoisyMarginal> {
    privatize_with_sensitivity(table, epsilon, 1.0, accountant, rng)
}

pub(crate) fn privatize_with_sensitivity<R: Rng + ?Sized>(
    table: &ContingencyTable,
    epsilon: Epsilon,
    sensitivity: f64,
    accountant: &mut PrivacyAccountant,
    rng: &mut R,
) -> Result<NoisyMarginal> {
    if !(sensitivity > 0.0 && sensitivity.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sensitivity must be positive and finite, got {sensitivity}"
        )));
    }
    accountant.charge(format!("laplace marginal [{}]", table.spec()), epsilon)?;
    let scale = sensitivity / epsilon.value();
    let noisy_counts = table
        .counts()
        .iter()
        .map(|&c| c as f64 + draw(scale, rng))
        .collect();
    Ok(NoisyMarginal {
        spec: table.spec().clone(),
        dims: table.dims().to_vec(),
        noisy_counts,
        epsilon_charged: epsilon,
        sensitivity,
    })
}

/// Laplace-noised answer to an inclusive range count, charged to `accountant`.
pub fn noisy_range_query<R: Rng + ?Sized>(
    index: &RangeIndex,
    lo: i64,
    hi: i64,
    epsilon: Epsilon,
    accountant: &mut PrivacyAccountant,
    rng: &mut R,
) -> Result<f64> {
    let exact = index.count(lo, hi)?;
    accountant.charge(format!("laplace range count [{lo}, {hi}]"), epsilon)?;
    Ok(exact as f64 + draw(1.0 / epsilon.value(), rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::stream_rng;

    fn table(counts: Vec<u64>) -> ContingencyTable {
        let n = counts.len();
        ContingencyTable::from_counts(MarginalSpec::new(["x"]).unwrap(), vec![n], counts).unwrap()
    }

    fn eps(v: f64) -> Epsilon {
        Epsilon::new(v).unwrap()
    }

    #[test]
    fn one_charge_per_marginal() {
        let t = table(vec![5; 100]);
        let mut acc = PrivacyAccountant::new(eps(3.0));
        let noisy = privatize_marginal(&t, eps(1.0), &mut acc, &mut stream_rng(1, 0)).unwrap();
        assert_eq!(noisy.noisy_counts().len(), 100);
        assert_eq!(acc.ledger().len(), 1);
        assert_eq!(acc.ledger()[0].epsilon.value(), 1.0);
        assert_eq!(noisy.epsilon_charged().value(), 1.0);
        assert_eq!(noisy.scale(), 1.0);
    }

    #[test]
    fn refusal_draws_nothing() {
        let t = table(vec![1, 2]);
        let mut acc = PrivacyAccountant::new(eps(1.0));
        acc.charge("earlier", eps(0.8)).unwrap();
        let mut rng = stream_rng(2, 0);
        let before = rng.clone();
        let err = privatize_marginal(&t, eps(0.5), &mut acc, &mut rng).unwrap_err();
        assert!(matches!(err, Error::BudgetExhausted { .. }));
        assert_eq!(acc.ledger().len(), 1);
        assert_eq!(rng, before);
    }

    #[test]
    fn zero_table_is_pure_noise_centered_at_zero() {
        let t = table(vec![0; 20_000]);
        let mut acc = PrivacyAccountant::new(eps(2.0));
        let noisy = privatize_marginal(&t, eps(2.0), &mut acc, &mut stream_rng(3, 0)).unwrap();
        let mean = noisy.noisy_counts().iter().sum::<f64>() / 20_000.0;
        let mad = noisy.noisy_counts().iter().map(|x| x.abs()).sum::<f64>() / 20_000.0;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((mad - 0.5).abs() < 0.02, "mad {mad}");
    }

    #[test]
    fn noisy_query_charges_and_refuses() {
        let schema = crate::schema::Schema::new(vec![
            crate::schema::ColumnDomain::integer("Age", 0, 100).unwrap(),
        ])
        .unwrap();
        let rows: Vec<Vec<usize>> = [21usize, 25, 33, 40].iter().map(|&a| vec![a]).collect();
        let ds = crate::dataset::TabularDataset::from_bins("t", schema, &rows).unwrap();
        let index = RangeIndex::new(&ds, "Age").unwrap();
        let mut acc = PrivacyAccountant::new(eps(1.0));
        let mut rng = stream_rng(4, 0);
        noisy_range_query(&index, 21, 33, eps(1.0), &mut acc, &mut rng).unwrap();
        let err = noisy_range_query(&index, 21, 33, eps(1.0), &mut acc, &mut rng).unwrap_err();
        assert!(matches!(err, Error::BudgetExhausted { .. }));
        assert_eq!(acc.ledger().len(), 1);
    }
}
