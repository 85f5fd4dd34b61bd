//! Download, normalize, and validate the UCI Adult census file.
//!
//! The upstream `adult.data` has no header row and pads fields with a
//! leading space. The normalized copy gets the header below so it can be
//! ingested like any other CSV. A `<file>.sha256` sidecar records the hash
//! of the normalized copy; a later fetch that finds a matching, valid file
//! skips the download.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use dpsynth::schema::ADULT_OCCUPATIONS;
use sha2::{Digest, Sha256};

pub const ADULT_URL: &str =
    "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/adult.data";

pub const ADULT_COLUMNS: [&str; 15] = [
    "Age",
    "Workclass",
    "fnlwgt",
    "Education",
    "Education-Num",
    "Marital Status",
    "Occupation",
    "Relationship",
    "Race",
    "Sex",
    "Capital Gain",
    "Capital Loss",
    "Hours per week",
    "Country",
    "Target",
];

/// A failed sanity check on the census file.
#[derive(Debug, PartialEq, Eq)]
pub struct ValidationError {
    pub check: &'static str,
    pub detail: String,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "census file failed the `{}` check: {}", self.check, self.detail)
    }
}

impl std::error::Error for ValidationError {}

fn fail(check: &'static str, detail: impl Into<String>) -> ValidationError {
    ValidationError {
        check,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    pub rows: usize,
    pub missing_occupation: usize,
}

/// Prepends the header when `raw` is the headerless upstream file and drops
/// blank lines.
pub fn normalize(raw: &str) -> String {
    let mut lines = raw.lines().filter(|l| !l.trim().is_empty()).peekable();
    let mut out = String::with_capacity(raw.len() + 256);
    let has_header = lines
        .peek()
        .and_then(|l| l.split(',').next())
        .is_some_and(|first| first.trim().parse::<i64>().is_err());
    if !has_header {
        out.push_str(&ADULT_COLUMNS.join(","));
        out.push('\n');
    }
    for line in lines {
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// Checks a normalized census CSV: header, ages in 17..=90, occupations from
/// the known list (or `?`), all 14 occupations present, and a minimum row
/// count.
pub fn validate(text: &str, min_rows: usize) -> Result<Summary, ValidationError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| fail("header", e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| fail("header", format!("no `{name}` column")))
    };
    let (age_at, occ_at) = (col("Age")?, col("Occupation")?);

    let mut rows = 0;
    let mut missing = 0;
    let mut seen = BTreeSet::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| fail("csv", e.to_string()))?;
        let line = i + 2;
        let age = rec
            .get(age_at)
            .and_then(|a| a.parse::<i64>().ok())
            .ok_or_else(|| fail("age", format!("line {line}: unparseable age")))?;
        if !(17..=90).contains(&age) {
            return Err(fail("age", format!("line {line}: age {age} outside 17..=90")));
        }
        let occ = rec
            .get(occ_at)
            .ok_or_else(|| fail("occupation", format!("line {line}: missing field")))?;
        if occ == "?" {
            missing += 1;
        } else if let Some(known) = ADULT_OCCUPATIONS.iter().find(|&&o| o == occ) {
            seen.insert(*known);
        } else {
            return Err(fail("occupation", format!("line {line}: unknown occupation `{occ}`")));
        }
        rows += 1;
    }
    if seen.len() != ADULT_OCCUPATIONS.len() {
        let absent: Vec<_> = ADULT_OCCUPATIONS.iter().filter(|o| !seen.contains(*o)).collect();
        return Err(fail(
            "occupation categories",
            format!("expected 14 occupations, missing {absent:?}"),
        ));
    }
    if rows < min_rows {
        return Err(fail("row count", format!("{rows} rows, expected at least {min_rows}")));
    }
    Ok(Summary {
        rows,
        missing_occupation: missing,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".sha256");
    PathBuf::from(s)
}

/// True when `path` exists, its hash matches the sidecar, and it validates.
pub fn is_current(path: &Path, min_rows: usize) -> bool {
    let (Ok(bytes), Ok(recorded)) = (std::fs::read(path), std::fs::read_to_string(sidecar(path)))
    else {
        return false;
    };
    if sha256_hex(&bytes) != recorded.trim() {
        return false;
    }
    std::str::from_utf8(&bytes).is_ok_and(|t| validate(t, min_rows).is_ok())
}

pub fn download(url: &str) -> Result<String, String> {
    let mut resp = ureq::get(url).call().map_err(|e| e.to_string())?;
    resp.body_mut()
        .with_config()
        .limit(64 * 1024 * 1024)
        .read_to_string()
        .map_err(|e| e.to_string())
}
