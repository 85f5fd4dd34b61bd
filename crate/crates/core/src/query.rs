use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::marginal::{build_marginal, MarginalSpec};
use crate::schema::DomainKind;

/// Prefix sums over the one-way marginal of an integer column, answering
/// inclusive range counts in constant time.
#[derive(Debug, Clone)]
pub struct RangeIndex {
    lo: i64,
    hi: i64,
    // prefix[i] = rows with bin < i
    prefix: Vec<u64>,
}

impl RangeIndex {
    pub fn new(dataset: &TabularDataset, column: &str) -> Result<Self> {
        let domain = dataset.schema().column(column)?;
        let (lo, hi) = match domain.kind {
            DomainKind::Integer { lo, hi } => (lo, hi),
            DomainKind::Categorical { .. } => {
                return Err(Error::UnsupportedQuery {
                    column: column.to_owned(),
                    reason: "range queries need an integer column".into(),
                })
            }
        };
        let table = build_marginal(dataset, &MarginalSpec::new([column])?)?;
        let mut prefix = Vec::with_capacity(table.cells() + 1);
        prefix.push(0);
        let mut acc = 0;
        for &c in table.counts() {
            acc += c;
            prefix.push(acc);
        }
        Ok(RangeIndex { lo, hi, prefix })
    }

    /// Rows with `lo <= value <= hi`.
    pub fn count(&self, lo: i64, hi: i64) -> Result<u64> {
        if lo > hi {
            return Err(Error::InvalidArgument(format!("empty range [{lo}, {hi}]")));
        }
        let a = lo.max(self.lo);
        let b = hi.min(self.hi);
        if a > b {
            return Ok(0);
        }
        let start = (a - self.lo) as usize;
        let end = (b - self.lo) as usize + 1;
        Ok(self.prefix[end] - self.prefix[start])
    }

    pub fn total(&self) -> u64 {
        *self.prefix.last().unwrap()
    }
}

/// Exact number of rows whose `column` value lies in `[lo, hi]`.
pub fn range_query(dataset: &TabularDataset, column: &str, lo: i64, hi: i64) -> Result<u64> {
    if lo > hi {
        return Err(Error::InvalidArgument(format!("empty range [{lo}, {hi}]")));
    }
    RangeIndex::new(dataset, column)?.count(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{adult_schema, ColumnDomain, Schema, Value};

    fn ages(values: &[i64]) -> TabularDataset {
        let schema = Schema::new(vec![ColumnDomain::integer("Age", 0, 100).unwrap()]).unwrap();
        TabularDataset::from_rows("a", schema, values.iter().map(|&v| vec![Value::Int(v)])).0
    }

    #[test]
    fn toy_range() {
        let ds = ages(&[21, 25, 33, 40]);
        assert_eq!(range_query(&ds, "Age", 21, 33).unwrap(), 3);
        assert_eq!(range_query(&ds, "Age", 0, 100).unwrap(), 4);
        assert_eq!(range_query(&ds, "Age", -50, 500).unwrap(), 4);
        assert_eq!(range_query(&ds, "Age", 41, 99).unwrap(), 0);
        assert_eq!(range_query(&ds, "Age", 200, 300).unwrap(), 0);
    }

    #[test]
    fn errors() {
        let ds = ages(&[1]);
        assert!(matches!(
            range_query(&ds, "Age", 5, 4),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            range_query(&ds, "Height", 0, 4),
            Err(Error::UnknownColumn(_))
        ));
        let adult = TabularDataset::empty("a", adult_schema());
        assert!(matches!(
            range_query(&adult, "Occupation", 0, 4),
            Err(Error::UnsupportedQuery { .. })
        ));
    }
}
