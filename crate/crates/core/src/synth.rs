//! From noisy marginals to synthetic rows.
//!
//! Everything here is post-processing of already-privatized counts, so
//! sampling any number of rows costs no further budget.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::exec::{stream_rng, Exec};
use crate::marginal::{build_marginal_with, unravel, MarginalSpec, DEFAULT_CELL_CAP};
use crate::privacy::{privatize_marginal, Epsilon, NoisyMarginal, PrivacyAccountant};
use crate::schema::{ColumnDomain, Schema};

/// Nonnegative weights summing to one over a marginal's cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable {
    spec: MarginalSpec,
    dims: Vec<usize>,
    weights: Vec<f64>,
    // cumulative[i] = weights[0..=i].sum()
    cumulative: Vec<f64>,
}

impl ProbabilityTable {
    /// Validates and wraps explicit weights.
    pub fn new(spec: MarginalSpec, dims: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if dims.len() != spec.arity() || dims.iter().product::<usize>() != weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights do not fit dims {dims:?}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self::from_parts(spec, dims, weights))
    }

    fn from_parts(spec: MarginalSpec, dims: Vec<usize>, weights: Vec<f64>) -> Self {
        let cumulative = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        ProbabilityTable {
            spec,
            dims,
            weights,
            cumulative,
        }
    }

    pub fn spec(&self) -> &MarginalSpec {
        &self.spec
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Flat cell index for a uniform draw `u` in [0, 1): the first cell whose
    /// cumulative weight exceeds `u`.
    pub fn cell_for(&self, u: f64) -> usize {
        let i = self.cumulative.partition_point(|&c| c <= u);
        if i < self.weights.len() {
            i
        } else {
            // rounding left the final cumulative weight just below u
            self.weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
        }
    }
}

/// Clips negative noisy counts to zero and normalizes to sum one. When every
/// clipped count is zero the uniform table is returned.
pub fn postprocess(noisy: &NoisyMarginal) -> ProbabilityTable {
    normalize_clipped(noisy.spec().clone(), noisy.dims().to_vec(), noisy.noisy_counts())
}

pub(crate) fn normalize_clipped(spec: MarginalSpec, dims: Vec<usize>, raw: &[f64]) -> ProbabilityTable {
    let clipped: Vec<f64> = raw.iter().map(|&c| if c > 0.0 { c } else { 0.0 }).collect();
    let mass: f64 = clipped.iter().sum();
    let weights = if mass > 0.0 && mass.is_finite() {
        clipped.iter().map(|c| c / mass).collect()
    } else {
        vec![1.0 / raw.len() as f64; raw.len()]
    };
    ProbabilityTable::from_parts(spec, dims, weights)
}

/// Fraction of the noisy table's absolute mass removed by clipping.
pub fn clipped_mass_fraction(noisy: &NoisyMarginal) -> f64 {
    let (neg, abs) = noisy
        .noisy_counts()
        .iter()
        .fold((0.0, 0.0), |(n, a), &c| (n + (-c).max(0.0), a + c.abs()));
    if abs > 0.0 {
        neg / abs
    } else {
        0.0
    }
}

/// `n` independent flat cell indices drawn with probability equal to weight.
pub fn sample_cells<R: Rng + ?Sized>(table: &ProbabilityTable, n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| table.cell_for(rng.random::<f64>())).collect()
}

/// Where a synthetic table came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Provenance {
    pub source: String,
    pub spec: String,
    pub epsilon: f64,
    pub seed: Option<u64>,
}

/// Rows sampled from one probability table, restricted to its columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    columns: Vec<ColumnDomain>,
    cells: Vec<Vec<usize>>,
    pub provenance: Provenance,
}

impl SyntheticDataset {
    pub fn columns(&self) -> &[ColumnDomain] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Bin tuple of row `i`.
    pub fn row_bins(&self, i: usize) -> &[usize] {
        &self.cells[i]
    }

    /// The rows as a dataset over the sampled columns, e.g. to feed back
    /// into `build_marginal`.
    pub fn to_dataset(&self) -> TabularDataset {
        let schema = Schema::new(self.columns.clone()).expect("columns come from a valid schema");
        let name = format!("synthetic[{}]", self.provenance.spec);
        TabularDataset::from_bins(name, schema, &self.cells).expect("sampled bins are in range")
    }

    /// CSV with a header of the sampled column names.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for row in &self.cells {
            w.write_record(
                row.iter()
                    .zip(&self.columns)
                    .map(|(&b, col)| col.decode(b).to_string()),
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Draws `n` synthetic rows from `table`, decoding bins through `schema`.
pub fn sample_rows<R: Rng + ?Sized>(
    table: &ProbabilityTable,
    schema: &Schema,
    n: usize,
    rng: &mut R,
) -> Result<SyntheticDataset> {
    let columns: Vec<ColumnDomain> = table.spec().domains(schema)?.into_iter().cloned().collect();
    let dims: Vec<usize> = columns.iter().map(|c| c.bin_count()).collect();
    if dims != table.dims() {
        return Err(Error::ShapeMismatch(format!(
            "table dims {:?} do not match schema dims {dims:?}",
            table.dims()
        )));
    }
    let cells = sample_cells(table, n, rng)
        .into_iter()
        .map(|flat| unravel(flat, &dims))
        .collect();
    Ok(SyntheticDataset {
        columns,
        cells,
        provenance: Provenance {
            spec: table.spec().to_string(),
            ..Provenance::default()
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecReport {
    pub spec: String,
    pub cells: usize,
    pub epsilon: f64,
    pub laplace_scale: f64,
    pub clipped_mass_fraction: f64,
    /// Expected total absolute noise, `cells * scale`. Computed from public
    /// parameters only, so it reveals nothing about the data.
    pub expected_l1_noise: f64,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisReport {
    pub source: String,
    pub seed: u64,
    pub total_epsilon: f64,
    pub epsilon_spent: f64,
    pub rows_per_spec: usize,
    pub specs: Vec<SpecReport>,
    pub ledger: PrivacyAccountant,
}

impl SynthesisReport {
    /// `key: value` lines, one per fact.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("source: {}\n", self.source));
        out.push_str(&format!("seed: {}\n", self.seed));
        out.push_str(&format!("total_epsilon: {}\n", self.total_epsilon));
        out.push_str(&format!("epsilon_spent: {}\n", self.epsilon_spent));
        out.push_str(&format!("rows_per_spec: {}\n", self.rows_per_spec));
        out.push_str(&format!("specs: {}\n", self.specs.len()));
        for (i, s) in self.specs.iter().enumerate() {
            let k = i + 1;
            out.push_str(&format!("spec.{k}.columns: {}\n", s.spec));
            out.push_str(&format!("spec.{k}.cells: {}\n", s.cells));
            out.push_str(&format!("spec.{k}.epsilon: {}\n", s.epsilon));
            out.push_str(&format!("spec.{k}.laplace_scale: {}\n", s.laplace_scale));
            out.push_str(&format!("spec.{k}.clipped_mass_fraction: {}\n", s.clipped_mass_fraction));
            out.push_str(&format!("spec.{k}.expected_l1_noise: {}\n", s.expected_l1_noise));
            out.push_str(&format!("spec.{k}.rows: {}\n", s.rows));
        }
        for line in self.ledger.report().lines() {
            out.push_str("ledger.");
            out.push_str(line);
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Output of [`generate`].
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub datasets: Vec<SyntheticDataset>,
    pub tables: Vec<ProbabilityTable>,
    pub report: SynthesisReport,
}

/// End-to-end synthesis: one synthetic table of `n` rows per spec.
///
/// `total_epsilon` is split evenly across the specs. Each spec's noise and
/// sampling draw from their own streams under `seed`, so the output does
/// not depend on whether specs are processed in parallel.
pub fn generate(
    dataset: &TabularDataset,
    specs: &[MarginalSpec],
    total_epsilon: Epsilon,
    n: usize,
    seed: u64,
) -> Result<Synthesis> {
    generate_with(dataset, specs, total_epsilon, n, seed, Exec::default())
}

pub fn generate_with(
    dataset: &TabularDataset,
    specs: &[MarginalSpec],
    total_epsilon: Epsilon,
    n: usize,
    seed: u64,
    exec: Exec,
) -> Result<Synthesis> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("no marginals requested".into()));
    }
    // fail on bad specs before touching the budget
    for spec in specs {
        spec.dims(dataset.schema(), DEFAULT_CELL_CAP)?;
    }
    let share = total_epsilon.split(specs.len())?;
    let mut accountant = PrivacyAccountant::new(total_epsilon);

    let tables = exec
        .map(specs.len(), |i| {
            build_marginal_with(dataset, &specs[i], DEFAULT_CELL_CAP, Exec::Sequential)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut noisy = Vec::with_capacity(specs.len());
    for (i, table) in tables.iter().enumerate() {
        let mut rng = stream_rng(seed, 2 * i as u64);
        noisy.push(privatize_marginal(table, share, &mut accountant, &mut rng)?);
    }

    let sampled = exec
        .map(noisy.len(), |i| {
            let probs = postprocess(&noisy[i]);
            let mut rng = stream_rng(seed, 2 * i as u64 + 1);
            sample_rows(&probs, dataset.schema(), n, &mut rng).map(|mut synth| {
                synth.provenance = Provenance {
                    source: dataset.name().to_owned(),
                    spec: specs[i].to_string(),
                    epsilon: share.value(),
                    seed: Some(seed),
                };
                (synth, probs)
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let spec_reports = noisy
        .iter()
        .zip(&sampled)
        .map(|(nm, (synth, _))| SpecReport {
            spec: nm.spec().to_string(),
            cells: nm.noisy_counts().len(),
            epsilon: nm.epsilon_charged().value(),
            laplace_scale: nm.scale(),
            clipped_mass_fraction: clipped_mass_fraction(nm),
            expected_l1_noise: nm.noisy_counts().len() as f64 * nm.scale(),
            rows: synth.len(),
        })
        .collect();

    let report = SynthesisReport {
        source: dataset.name().to_owned(),
        seed,
        total_epsilon: total_epsilon.value(),
        epsilon_spent: accountant.spent(),
        rows_per_spec: n,
        specs: spec_reports,
        ledger: accountant,
    };
    let (datasets, tables) = sampled.into_iter().unzip();
    Ok(Synthesis {
        datasets,
        tables,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginal::build_marginal;
    use crate::schema::{adult_schema, Value};

    fn noisy(counts: &[f64]) -> NoisyMarginal {
        NoisyMarginal {
            spec: MarginalSpec::new(["x"]).unwrap(),
            dims: vec![counts.len()],
            noisy_counts: counts.to_vec(),
            epsilon_charged: Epsilon::new(1.0).unwrap(),
            sensitivity: 1.0,
        }
    }

    #[test]
    fn clip_then_normalize() {
        assert_eq!(postprocess(&noisy(&[-1.0, 3.0, 2.0])).weights(), &[0.0, 0.6, 0.4]);
        assert_eq!(postprocess(&noisy(&[-1.0, -2.0])).weights(), &[0.5, 0.5]);
        assert_eq!(postprocess(&noisy(&[5.0])).weights(), &[1.0]);
        assert_eq!(postprocess(&noisy(&[0.0, 0.0, 0.0, 0.0])).weights(), &[0.25; 4]);
    }

    #[test]
    fn clipped_fraction() {
        assert_eq!(clipped_mass_fraction(&noisy(&[-1.0, 3.0])), 0.25);
        assert_eq!(clipped_mass_fraction(&noisy(&[0.0])), 0.0);
    }

    #[test]
    fn cell_lookup_skips_zero_weights_and_breaks_ties_low() {
        let t = ProbabilityTable::new(
            MarginalSpec::new(["x"]).unwrap(),
            vec![4],
            vec![0.25, 0.0, 0.75, 0.0],
        )
        .unwrap();
        assert_eq!(t.cell_for(0.0), 0);
        assert_eq!(t.cell_for(0.2499), 0);
        assert_eq!(t.cell_for(0.25), 2);
        assert_eq!(t.cell_for(0.999_999), 2);
        assert_eq!(t.cell_for(1.0), 2);
    }

    #[test]
    fn table_validation() {
        let spec = MarginalSpec::new(["x"]).unwrap();
        assert!(ProbabilityTable::new(spec.clone(), vec![2], vec![0.5, 0.6]).is_err());
        assert!(ProbabilityTable::new(spec.clone(), vec![2], vec![1.5, -0.5]).is_err());
        assert!(ProbabilityTable::new(spec, vec![3], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn single_cell_gives_identical_rows() {
        let schema = Schema::new(vec![ColumnDomain::integer("x", 4, 4).unwrap()]).unwrap();
        let t = postprocess(&noisy(&[3.0]));
        let s = sample_rows(&t, &schema, 10, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s.to_csv_string(), format!("x\n{}", "4\n".repeat(10)));
    }

    #[test]
    fn zero_rows() {
        let schema = Schema::new(vec![ColumnDomain::integer("x", 0, 1).unwrap()]).unwrap();
        let t = postprocess(&noisy(&[1.0, 1.0]));
        let s = sample_rows(&t, &schema, 0, &mut stream_rng(0, 0)).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.to_csv_string(), "x\n");
    }

    #[test]
    fn decoding_two_way_cells() {
        let schema = adult_schema();
        let spec = MarginalSpec::parse("Occupation,Age").unwrap();
        let mut weights = vec![0.0; 14 * 74];
        weights[11 * 74 + 1] = 1.0; // Sales, 18
        let t = ProbabilityTable::new(spec, vec![14, 74], weights).unwrap();
        let s = sample_rows(&t, &schema, 2, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(s.to_csv_string(), "Occupation,Age\nSales,18\nSales,18\n");
        let back = s.to_dataset();
        assert_eq!(back.row_values(0), vec![Value::from("Sales"), Value::Int(18)]);
    }

    fn adult_toy() -> TabularDataset {
        let mut rows = Vec::new();
        for i in 0..500i64 {
            let occ = crate::schema::ADULT_OCCUPATIONS[(i % 14) as usize];
            rows.push(vec![Value::Int(17 + i % 74), Value::from(occ)]);
        }
        TabularDataset::from_rows("toy", adult_schema(), rows).0
    }

    #[test]
    fn generate_splits_budget_evenly() {
        let ds = adult_toy();
        let specs = [
            MarginalSpec::parse("Age").unwrap(),
            MarginalSpec::parse("Age,Occupation").unwrap(),
        ];
        let out = generate(&ds, &specs, Epsilon::new(1.0).unwrap(), 50, 9).unwrap();
        assert_eq!(out.datasets.len(), 2);
        assert_eq!(out.report.ledger.ledger().len(), 2);
        for e in out.report.ledger.ledger() {
            assert_eq!(e.epsilon.value(), 0.5);
        }
        assert!((out.report.epsilon_spent - 1.0).abs() < 1e-9);
        assert_eq!(out.datasets[1].columns().len(), 2);
        assert!(out.datasets.iter().all(|d| d.len() == 50));
        let text = out.report.to_text();
        assert!(text.contains("spec.2.columns: Age,Occupation\n"));
        assert!(text.contains("spec.1.expected_l1_noise: 148\n"));
    }

    #[test]
    fn generate_zero_rows_still_reports() {
        let ds = adult_toy();
        let specs = [MarginalSpec::parse("Age").unwrap()];
        let out = generate(&ds, &specs, Epsilon::new(1.0).unwrap(), 0, 1).unwrap();
        assert!(out.datasets[0].is_empty());
        assert_eq!(out.report.epsilon_spent, 1.0);
        assert!(out.report.to_json().contains("\"rows_per_spec\": 0"));
    }

    #[test]
    fn generate_errors_before_spending() {
        let ds = adult_toy();
        let specs = [MarginalSpec::parse("Age").unwrap(), MarginalSpec::parse("Nope").unwrap()];
        assert!(matches!(
            generate(&ds, &specs, Epsilon::new(1.0).unwrap(), 1, 1),
            Err(Error::UnknownColumn(_))
        ));
        assert!(generate(&ds, &[], Epsilon::new(1.0).unwrap(), 1, 1).is_err());
    }

    #[test]
    fn generate_matches_sequential_execution() {
        let ds = adult_toy();
        let specs = [
            MarginalSpec::parse("Age").unwrap(),
            MarginalSpec::parse("Occupation").unwrap(),
        ];
        let eps = Epsilon::new(2.0).unwrap();
        let a = generate_with(&ds, &specs, eps, 200, 5, Exec::default()).unwrap();
        let b = generate_with(&ds, &specs, eps, 200, 5, Exec::Sequential).unwrap();
        assert_eq!(a.datasets, b.datasets);
        assert_eq!(a.report, b.report);
        let _ = build_marginal(&a.datasets[0].to_dataset(), &specs[0]).unwrap();
    }
}
