//! k-way marginals over a dataset: specs, exact contingency tables, and
//! the dense row-major index arithmetic shared by the noisy and
//! probability tables.

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::schema::{ColumnDomain, Schema, Value};

/// Default upper bound on the number of cells in a dense table.
pub const DEFAULT_CELL_CAP: usize = 10_000_000;

const COUNT_CHUNK_ROWS: usize = 1 << 14;
const PARALLEL_COUNT_MAX_CELLS: usize = 1 << 16;

/// Ordered, distinct column names selecting a k-way marginal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MarginalSpec {
    columns: Vec<String>,
}

impl MarginalSpec {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Result<Self> {
        let columns: Vec<String> = columns.into_iter().map(Into::into).collect();
        if columns.is_empty() {
            return Err(Error::InvalidArgument("marginal needs at least one column".into()));
        }
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].contains(c) {
                return Err(Error::InvalidArgument(format!("column `{c}` repeated in marginal")));
            }
        }
        Ok(MarginalSpec { columns })
    }

    /// Parses a comma-joined column list such as `Age,Occupation`.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(text.split(',').map(str::trim).filter(|s| !s.is_empty()))
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    /// Schema positions of the spec's columns.
    pub fn positions(&self, schema: &Schema) -> Result<Vec<usize>> {
        self.columns
            .iter()
            .map(|c| schema.position(c).ok_or_else(|| Error::UnknownColumn(c.clone())))
            .collect()
    }

    pub fn domains<'a>(&self, schema: &'a Schema) -> Result<Vec<&'a ColumnDomain>> {
        self.columns.iter().map(|c| schema.column(c)).collect()
    }

    /// Per-column bin counts, checked against `cap`.
    pub fn dims(&self, schema: &Schema, cap: usize) -> Result<Vec<usize>> {
        let dims: Vec<usize> = self
            .domains(schema)?
            .iter()
            .map(|d| d.bin_count())
            .collect();
        let cells = dims.iter().map(|&d| d as u128).product::<u128>();
        if cells > cap as u128 {
            return Err(Error::Capacity {
                columns: self.columns.clone(),
                cells,
                cap,
            });
        }
        Ok(dims)
    }

    /// File-name friendly label, e.g. `Age_Occupation`.
    pub fn slug(&self) -> String {
        self.columns
            .iter()
            .map(|c| {
                c.chars()
                    .map(|ch| if ch.is_ascii_alphanumeric() || ch == '-' { ch } else { '_' })
                    .collect::<String>()
            })
            .collect::<Vec<_>>()
            .join("_")
    }
}

impl std::fmt::Display for MarginalSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.columns.join(","))
    }
}

/// Row-major flat index of a bin tuple.
pub fn ravel(tuple: &[usize], dims: &[usize]) -> usize {
    debug_assert_eq!(tuple.len(), dims.len());
    tuple.iter().zip(dims).fold(0, |acc, (&t, &d)| {
        debug_assert!(t < d);
        acc * d + t
    })
}

/// Bin tuple of a row-major flat index.
pub fn unravel(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut tuple = vec![0; dims.len()];
    for (slot, &d) in tuple.iter_mut().zip(dims).rev() {
        *slot = flat % d;
        flat /= d;
    }
    tuple
}

/// Sums a dense table down to the axes in `keep` (in the given order).
pub fn project<T>(dims: &[usize], values: &[T], keep: &[usize]) -> (Vec<usize>, Vec<T>)
where
    T: Copy + Default + AddAssign,
{
    let out_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let mut out = vec![T::default(); out_dims.iter().product()];
    let mut tuple = vec![0usize; dims.len()];
    let mut sub = vec![0usize; keep.len()];
    for &v in values {
        for (s, &k) in sub.iter_mut().zip(keep) {
            *s = tuple[k];
        }
        out[ravel(&sub, &out_dims)] += v;
        // advance the row-major odometer
        for axis in (0..dims.len()).rev() {
            tuple[axis] += 1;
            if tuple[axis] < dims[axis] {
                break;
            }
            tuple[axis] = 0;
        }
    }
    (out_dims, out)
}

/// Resolves `target`'s columns to axis positions within `spec`.
pub(crate) fn axes_within(spec: &MarginalSpec, target: &MarginalSpec) -> Result<Vec<usize>> {
    target
        .columns()
        .iter()
        .map(|c| {
            spec.columns()
                .iter()
                .position(|s| s == c)
                .ok_or_else(|| Error::UnknownColumn(c.clone()))
        })
        .collect()
}

/// Exact counts of a k-way marginal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    spec: MarginalSpec,
    dims: Vec<usize>,
    counts: Vec<u64>,
    total: u64,
}

impl ContingencyTable {
    /// Wraps precomputed counts; `total` is derived.
    pub fn from_counts(spec: MarginalSpec, dims: Vec<usize>, counts: Vec<u64>) -> Result<Self> {
        if dims.len() != spec.arity() || dims.iter().product::<usize>() != counts.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} counts do not fit dims {dims:?}",
                counts.len()
            )));
        }
        let total = counts.iter().sum();
        Ok(ContingencyTable {
            spec,
            dims,
            counts,
            total,
        })
    }

    pub fn spec(&self) -> &MarginalSpec {
        &self.spec
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn cells(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, tuple: &[usize]) -> u64 {
        self.counts[ravel(tuple, &self.dims)]
    }

    /// Count at the cell addressed by typed values, e.g. `(17, "Sales")`.
    pub fn get_values(&self, schema: &Schema, values: &[Value]) -> Result<u64> {
        let domains = self.spec.domains(schema)?;
        if values.len() != domains.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {}-way table",
                values.len(),
                domains.len()
            )));
        }
        let tuple = values
            .iter()
            .zip(&domains)
            .map(|(v, d)| {
                d.bin_index(v).ok_or_else(|| {
                    Error::InvalidArgument(format!("{v} is outside column `{}`", d.name))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.get(&tuple))
    }

    /// Sums out every column not in `target`.
    pub fn project(&self, target: &MarginalSpec) -> Result<ContingencyTable> {
        let keep = axes_within(&self.spec, target)?;
        let (dims, counts) = project(&self.dims, &self.counts, &keep);
        Ok(ContingencyTable {
            spec: target.clone(),
            dims,
            counts,
            total: self.total,
        })
    }
}

/// Exact k-way contingency table with the default cell cap.
pub fn build_marginal(dataset: &TabularDataset, spec: &MarginalSpec) -> Result<ContingencyTable> {
    build_marginal_with(dataset, spec, DEFAULT_CELL_CAP, Exec::default())
}

pub fn build_marginal_with(
    dataset: &TabularDataset,
    spec: &MarginalSpec,
    cap: usize,
    exec: Exec,
) -> Result<ContingencyTable> {
    let schema = dataset.schema();
    let dims = spec.dims(schema, cap)?;
    let positions = spec.positions(schema)?;
    let cells: usize = dims.iter().product();

    let count_rows = |rows: &[&[u32]]| {
        let mut counts = vec![0u64; cells];
        for row in rows {
            let flat = positions
                .iter()
                .zip(&dims)
                .fold(0usize, |acc, (&p, &d)| acc * d + row[p] as usize);
            counts[flat] += 1;
        }
        counts
    };

    let rows: Vec<&[u32]> = dataset.rows_bins().collect();
    let counts = if cells <= PARALLEL_COUNT_MAX_CELLS && rows.len() > COUNT_CHUNK_ROWS {
        exec.chunked_reduce(
            &rows,
            COUNT_CHUNK_ROWS,
            || vec![0u64; cells],
            count_rows,
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
    } else {
        count_rows(&rows)
    };

    let total = dataset.len() as u64;
    debug_assert_eq!(counts.iter().sum::<u64>(), total);
    Ok(ContingencyTable {
        spec: spec.clone(),
        dims,
        counts,
        total,
    })
}
