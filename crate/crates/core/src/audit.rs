//! Statistical checks of the ε-DP inequality
//! `Pr[M(D) ∈ S] <= exp(ε) · Pr[M(D') ∈ S]` on neighboring datasets, and
//! utility metrics for noisy marginals.
//!
//! The audit is a falsifier: it estimates event probabilities by Monte
//! Carlo on both datasets and fails if the lower confidence bound of some
//! probability ratio clears `exp(ε) · (1 + slack)`. A pass means no
//! violation was detected for the chosen event family, not a proof.

use rand::Rng;
use serde::Serialize;

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::exec::{stream_rng, Exec, StreamRng};
use crate::marginal::{build_marginal_with, ContingencyTable, MarginalSpec, DEFAULT_CELL_CAP};
use crate::privacy::mechanism::privatize_with_sensitivity;
use crate::privacy::{Epsilon, NoisyMarginal, PrivacyAccountant};
use crate::synth::ProbabilityTable;

/// Two-sided 99% standard normal quantile.
pub const Z_99: f64 = 2.575_829_303_548_900_4;

/// Minimum trials accepted by the estimators.
pub const MIN_TRIALS: usize = 10_000;

const TRIALS_PER_CHUNK: usize = 1 << 14;

/// A measurable set of mechanism outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum EventKind {
    Always,
    /// `output[bin] <= threshold`
    AtMost { bin: usize, threshold: f64 },
    /// `lo <= output[bin] < hi`
    Interval { bin: usize, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputEvent {
    pub description: String,
    pub kind: EventKind,
}

impl OutputEvent {
    pub fn always() -> Self {
        OutputEvent {
            description: "always".into(),
            kind: EventKind::Always,
        }
    }

    pub fn at_most(bin: usize, threshold: f64) -> Self {
        OutputEvent {
            description: format!("out[{bin}] <= {threshold}"),
            kind: EventKind::AtMost { bin, threshold },
        }
    }

    pub fn interval(bin: usize, lo: f64, hi: f64) -> Self {
        OutputEvent {
            description: format!("{lo} <= out[{bin}] < {hi}"),
            kind: EventKind::Interval { bin, lo, hi },
        }
    }

    /// Left-tail events for every bin and threshold.
    pub fn left_tails(bins: usize, thresholds: &[f64]) -> Vec<Self> {
        (0..bins)
            .flat_map(|b| thresholds.iter().map(move |&t| OutputEvent::at_most(b, t)))
            .collect()
    }

    /// Outputs that lack the addressed bin never satisfy the event.
    pub fn contains(&self, output: &[f64]) -> bool {
        match self.kind {
            EventKind::Always => true,
            EventKind::AtMost { bin, threshold } => output.get(bin).is_some_and(|&x| x <= threshold),
            EventKind::Interval { bin, lo, hi } => {
                output.get(bin).is_some_and(|&x| lo <= x && x < hi)
            }
        }
    }
}

/// A randomized algorithm under audit.
pub trait Mechanism: Sync {
    fn describe(&self) -> String;

    fn release(&self, data: &TabularDataset, rng: &mut StreamRng) -> Result<Vec<f64>>;
}

/// The Laplace marginal release: exact counts of `spec`, then
/// `privatize_marginal` at `epsilon`.
///
/// `noise_multiplier` rescales the noise without changing the charged
/// epsilon. Anything below 1 is a miscalibrated mechanism that the audit
/// should catch.
#[derive(Debug, Clone)]
pub struct LaplaceMarginalMechanism {
    pub spec: MarginalSpec,
    pub epsilon: Epsilon,
    pub sensitivity: f64,
    pub noise_multiplier: f64,
}

impl LaplaceMarginalMechanism {
    pub fn new(spec: MarginalSpec, epsilon: Epsilon) -> Self {
        LaplaceMarginalMechanism {
            spec,
            epsilon,
            sensitivity: 1.0,
            noise_multiplier: 1.0,
        }
    }

    pub fn with_noise_multiplier(mut self, m: f64) -> Self {
        self.noise_multiplier = m;
        self
    }
}

impl Mechanism for LaplaceMarginalMechanism {
    fn describe(&self) -> String {
        format!(
            "laplace marginal [{}] epsilon={} sensitivity={} noise_multiplier={}",
            self.spec, self.epsilon, self.sensitivity, self.noise_multiplier
        )
    }

    fn release(&self, data: &TabularDataset, rng: &mut StreamRng) -> Result<Vec<f64>> {
        let table = build_marginal_with(data, &self.spec, DEFAULT_CELL_CAP, Exec::Sequential)?;
        let mut accountant = PrivacyAccountant::new(self.epsilon);
        let noisy = privatize_with_sensitivity(
            &table,
            self.epsilon,
            self.sensitivity * self.noise_multiplier,
            &mut accountant,
            rng,
        )?;
        Ok(noisy.noisy_counts)
    }
}

/// Monte-Carlo estimate of an event probability with a 99% Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbabilityEstimate {
    pub hits: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ProbabilityEstimate {
    pub fn from_counts(hits: u64, trials: u64) -> Self {
        let (lower, upper) = wilson_interval(hits, trials, Z_99);
        ProbabilityEstimate {
            hits,
            trials,
            estimate: hits as f64 / trials as f64,
            lower,
            upper,
        }
    }

    pub fn covers(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(hits: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Estimates every event from one shared batch of `trials` releases.
///
/// Trials are split into fixed chunks, each with its own RNG stream under a
/// base seed drawn from `rng`, so results are the same sequential or parallel.
pub fn estimate_events<M: Mechanism + ?Sized, R: Rng + ?Sized>(
    mechanism: &M,
    data: &TabularDataset,
    events: &[OutputEvent],
    trials: usize,
    rng: &mut R,
    exec: Exec,
) -> Result<Vec<ProbabilityEstimate>> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    let base_seed: u64 = rng.random();
    let chunks = trials.div_ceil(TRIALS_PER_CHUNK);
    let partial = exec.map(chunks, |c| -> Result<Vec<u64>> {
        let mut rng = stream_rng(base_seed, c as u64);
        let len = TRIALS_PER_CHUNK.min(trials - c * TRIALS_PER_CHUNK);
        let mut hits = vec![0u64; events.len()];
        for _ in 0..len {
            let out = mechanism.release(data, &mut rng)?;
            for (h, e) in hits.iter_mut().zip(events) {
                *h += u64::from(e.contains(&out));
            }
        }
        Ok(hits)
    });
    let mut hits = vec![0u64; events.len()];
    for chunk in partial {
        for (h, c) in hits.iter_mut().zip(chunk?) {
            *h += c;
        }
    }
    Ok(hits
        .into_iter()
        .map(|h| ProbabilityEstimate::from_counts(h, trials as u64))
        .collect())
}

pub fn estimate_event_probability<M: Mechanism + ?Sized, R: Rng + ?Sized>(
    mechanism: &M,
    data: &TabularDataset,
    event: &OutputEvent,
    trials: usize,
    rng: &mut R,
) -> Result<ProbabilityEstimate> {
    let mut v = estimate_events(
        mechanism,
        data,
        std::slice::from_ref(event),
        trials,
        rng,
        Exec::default(),
    )?;
    Ok(v.remove(0))
}

/// Checks that `a` and `b` are equal or differ by adding/removing one row.
pub fn check_neighbors(a: &TabularDataset, b: &TabularDataset) -> Result<()> {
    if a.schema() != b.schema() {
        return Err(Error::NotNeighbors("schemas differ".into()));
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    match large.len() - small.len() {
        0 => {
            if small.sorted_rows() == large.sorted_rows() {
                Ok(())
            } else {
                Err(Error::NotNeighbors("same size but different rows".into()))
            }
        }
        1 => {
            let s = small.sorted_rows();
            let l = large.sorted_rows();
            let mut skipped = false;
            let mut j = 0;
            for row in &l {
                if j < s.len() && s[j] == *row {
                    j += 1;
                } else if !skipped {
                    skipped = true;
                } else {
                    return Err(Error::NotNeighbors(
                        "more than one row differs between the datasets".into(),
                    ));
                }
            }
            Ok(())
        }
        d => Err(Error::NotNeighbors(format!("row counts differ by {d}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventAudit {
    pub event: OutputEvent,
    pub p_d: ProbabilityEstimate,
    pub p_d_prime: ProbabilityEstimate,
    /// Larger of the two point-estimate ratios.
    pub ratio: f64,
    /// Larger of the two conservative ratios `lower(num) / upper(den)`.
    pub ratio_lower: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DpAuditReport {
    pub mechanism: String,
    pub epsilon: f64,
    pub trials: usize,
    pub slack: f64,
    pub bound: f64,
    pub events: Vec<EventAudit>,
    pub pass: bool,
}

impl DpAuditReport {
    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "pass"
        } else {
            "fail"
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("mechanism: {}\n", self.mechanism));
        out.push_str(&format!("epsilon: {}\n", self.epsilon));
        out.push_str(&format!("trials_per_side: {}\n", self.trials));
        out.push_str(&format!("slack: {}\n", self.slack));
        out.push_str(&format!("bound: {:.6}\n", self.bound));
        for (i, e) in self.events.iter().enumerate() {
            out.push_str(&format!(
                "event.{}: {:?} p_d={:.6} [{:.6}, {:.6}] p_d_prime={:.6} [{:.6}, {:.6}] ratio={:.4} ratio_lower={:.4} verdict={}\n",
                i + 1,
                e.event.description,
                e.p_d.estimate,
                e.p_d.lower,
                e.p_d.upper,
                e.p_d_prime.estimate,
                e.p_d_prime.lower,
                e.p_d_prime.upper,
                e.ratio,
                e.ratio_lower,
                if e.pass { "pass" } else { "fail" }
            ));
        }
        out.push_str(&format!("verdict: {}\n", self.verdict()));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

/// Audits `mechanism` on the neighboring pair `(d, d_prime)` for each event,
/// in both directions.
#[allow(clippy::too_many_arguments)]
pub fn audit_dp<M: Mechanism + ?Sized, R: Rng + ?Sized>(
    mechanism: &M,
    d: &TabularDataset,
    d_prime: &TabularDataset,
    events: &[OutputEvent],
    epsilon: Epsilon,
    trials: usize,
    slack: f64,
    rng: &mut R,
    exec: Exec,
) -> Result<DpAuditReport> {
    if !(slack > 0.0 && slack <= 0.5) {
        return Err(Error::InvalidArgument(format!("slack must lie in (0, 0.5], got {slack}")));
    }
    if events.is_empty() {
        return Err(Error::InvalidArgument("no events to audit".into()));
    }
    check_neighbors(d, d_prime)?;

    let on_d = estimate_events(mechanism, d, events, trials, rng, exec)?;
    let on_d_prime = estimate_events(mechanism, d_prime, events, trials, rng, exec)?;
    let bound = epsilon.value().exp() * (1.0 + slack);

    let audits: Vec<EventAudit> = events
        .iter()
        .zip(on_d.into_iter().zip(on_d_prime))
        .map(|(event, (p, q))| {
            let point = ratio(p.estimate, q.estimate).max(ratio(q.estimate, p.estimate));
            let conservative = ratio(p.lower, q.upper).max(ratio(q.lower, p.upper));
            EventAudit {
                event: event.clone(),
                p_d: p,
                p_d_prime: q,
                ratio: point,
                ratio_lower: conservative,
                pass: conservative <= bound,
            }
        })
        .collect();

    let pass = audits.iter().all(|a| a.pass);
    Ok(DpAuditReport {
        mechanism: mechanism.describe(),
        epsilon: epsilon.value(),
        trials,
        slack,
        bound,
        events: audits,
        pass,
    })
}

/// Something that can be compared cell-by-cell against exact counts.
#[derive(Debug, Clone, Copy)]
pub enum MarginalEstimate<'a> {
    Noisy(&'a NoisyMarginal),
    /// Probabilities scaled by a row total.
    Scaled(&'a ProbabilityTable, f64),
}

/// Total absolute error between exact counts and an estimate.
pub fn utility_l1(truth: &ContingencyTable, estimate: MarginalEstimate<'_>) -> Result<f64> {
    let (spec, dims) = match estimate {
        MarginalEstimate::Noisy(n) => (n.spec(), n.dims()),
        MarginalEstimate::Scaled(p, _) => (p.spec(), p.dims()),
    };
    if spec != truth.spec() || dims != truth.dims() {
        return Err(Error::ShapeMismatch(format!(
            "estimate [{spec}] {dims:?} vs truth [{}] {:?}",
            truth.spec(),
            truth.dims()
        )));
    }
    let err = match estimate {
        MarginalEstimate::Noisy(n) => truth
            .counts()
            .iter()
            .zip(n.noisy_counts())
            .map(|(&t, &e)| (t as f64 - e).abs())
            .sum(),
        MarginalEstimate::Scaled(p, total) => truth
            .counts()
            .iter()
            .zip(p.weights())
            .map(|(&t, &w)| (t as f64 - w * total).abs())
            .sum(),
    };
    Ok(err)
}

/// L1 error of the `target` marginal recovered from a freshly noised `table`,
/// once per seed.
///
/// With `target` equal to the table's own spec this is the direct noise
/// error; with fewer columns it measures what summing a higher-way noisy
/// table does to a lower-way marginal.
pub fn noise_l1_over_seeds(
    table: &ContingencyTable,
    target: &MarginalSpec,
    epsilon: Epsilon,
    seeds: std::ops::Range<u64>,
    exec: Exec,
) -> Result<Vec<f64>> {
    let truth = table.project(target)?;
    let start = seeds.start;
    let count = seeds.end.saturating_sub(seeds.start) as usize;
    exec.map(count, |i| {
        let mut rng = stream_rng(start + i as u64, 0);
        let mut accountant = PrivacyAccountant::new(epsilon);
        let noisy = crate::privacy::privatize_marginal(table, epsilon, &mut accountant, &mut rng)?;
        utility_l1(&truth, MarginalEstimate::Noisy(&noisy.project(target)?))
    })
    .into_iter()
    .collect()
}

/// Median of a non-empty sample.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}
