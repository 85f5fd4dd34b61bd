//! Differentially private synthetic tabular data.
//!
//! Exact k-way marginals of a private dataset are noised with the Laplace
//! mechanism, clipped and normalized into probability tables, and sampled
//! to produce synthetic rows. An auditor estimates the privacy-loss ratio
//! on neighboring datasets by Monte Carlo to catch miscalibrated noise.
//!
//! ```
//! use dpsynth::{generate, ColumnDomain, Epsilon, MarginalSpec, Schema, TabularDataset, Value};
//!
//! let schema = Schema::new(vec![ColumnDomain::integer("Age", 0, 100)?])?;
//! let rows = [21, 25, 33, 40].map(|a| vec![Value::Int(a)]);
//! let (data, rejected) = TabularDataset::from_rows("ages", schema, rows);
//! assert_eq!(rejected, 0);
//!
//! let out = generate(&data, &[MarginalSpec::new(["Age"])?], Epsilon::new(1.0)?, 10, 42)?;
//! assert_eq!(out.datasets[0].len(), 10);
//! assert_eq!(out.report.epsilon_spent, 1.0);
//! # Ok::<(), dpsynth::Error>(())
//! ```

pub mod audit;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod marginal;
pub mod privacy;
pub mod query;
pub mod schema;
pub mod synth;

pub use audit::{audit_dp, estimate_event_probability, utility_l1, DpAuditReport, OutputEvent};
pub use dataset::{ingest_csv, CsvOptions, TabularDataset};
pub use error::{Error, Result};
pub use exec::Exec;
pub use marginal::{build_marginal, ContingencyTable, MarginalSpec};
pub use privacy::{laplace_mech, laplace_sample, privatize_marginal, Epsilon, NoisyMarginal, PrivacyAccountant};
pub use query::{range_query, RangeIndex};
pub use schema::{bin_index, ColumnDomain, DomainKind, Schema, Value};
pub use synth::{generate, postprocess, sample_rows, ProbabilityTable, SyntheticDataset, SynthesisReport};
