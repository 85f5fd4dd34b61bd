//! Column domains and the schema file format.
//!
//! A schema file is TOML with one `[[column]]` table per column:
//!
//! ```toml
//! [[column]]
//! name = "Age"
//! kind = "integer"
//! lo = 17
//! hi = 90
//!
//! [[column]]
//! name = "Occupation"
//! kind = "categorical"
//! categories = ["Adm-clerical", "Armed-Forces"]
//! ```
//!
//! Integer columns use bins of width one, so `lo..=hi` yields `hi - lo + 1`
//! bins. Categorical columns get one bin per label, in listed order.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kind and extent of a column's domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainKind {
    Integer { lo: i64, hi: i64 },
    Categorical { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDomain {
    pub name: String,
    #[serde(flatten)]
    pub kind: DomainKind,
}

/// A single cell, either an integer or a category label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Label(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Label(s) => f.write_str(s),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Label(s.to_owned())
    }
}

impl ColumnDomain {
    pub fn integer(name: impl Into<String>, lo: i64, hi: i64) -> Result<Self> {
        let col = ColumnDomain {
            name: name.into(),
            kind: DomainKind::Integer { lo, hi },
        };
        col.validate()?;
        Ok(col)
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let col = ColumnDomain {
            name: name.into(),
            kind: DomainKind::Categorical {
                categories: categories.into_iter().map(Into::into).collect(),
            },
        };
        col.validate()?;
        Ok(col)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Schema("column name is empty".into()));
        }
        match &self.kind {
            DomainKind::Integer { lo, hi } => {
                if lo > hi {
                    return Err(Error::Schema(format!(
                        "column `{}`: lo {lo} exceeds hi {hi}",
                        self.name
                    )));
                }
                if hi.abs_diff(*lo) >= u32::MAX as u64 {
                    return Err(Error::Schema(format!(
                        "column `{}`: range {lo}..={hi} is too wide",
                        self.name
                    )));
                }
            }
            DomainKind::Categorical { categories } => {
                if categories.is_empty() {
                    return Err(Error::Schema(format!(
                        "column `{}` has no categories",
                        self.name
                    )));
                }
                for (i, label) in categories.iter().enumerate() {
                    if label.is_empty() {
                        return Err(Error::Schema(format!(
                            "column `{}` has an empty category label",
                            self.name
                        )));
                    }
                    if categories[..i].contains(label) {
                        return Err(Error::Schema(format!(
                            "column `{}` lists category `{label}` twice",
                            self.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        match &self.kind {
            DomainKind::Integer { lo, hi } => (hi - lo) as usize + 1,
            DomainKind::Categorical { categories } => categories.len(),
        }
    }

    pub fn is_integer(&self) -> bool {
        matches!(self.kind, DomainKind::Integer { .. })
    }

    /// Bin of `value`, or `None` when the value lies outside the domain.
    pub fn bin_index(&self, value: &Value) -> Option<usize> {
        match (&self.kind, value) {
            (DomainKind::Integer { lo, hi }, Value::Int(v)) => {
                (lo..=hi).contains(&v).then(|| (v - lo) as usize)
            }
            (DomainKind::Categorical { categories }, Value::Label(s)) => {
                categories.iter().position(|c| c == s)
            }
            _ => None,
        }
    }

    /// Parses a raw text cell and bins it in one step.
    pub fn bin_of_str(&self, raw: &str) -> Option<usize> {
        let raw = raw.trim();
        match &self.kind {
            DomainKind::Integer { .. } => {
                let v: i64 = raw.parse().ok()?;
                self.bin_index(&Value::Int(v))
            }
            DomainKind::Categorical { categories } => categories.iter().position(|c| c == raw),
        }
    }

    /// Inverse of [`bin_index`](Self::bin_index).
    ///
    /// # Panics
    /// If `bin` is not below [`bin_count`](Self::bin_count).
    pub fn decode(&self, bin: usize) -> Value {
        assert!(bin < self.bin_count(), "bin {bin} out of range");
        match &self.kind {
            DomainKind::Integer { lo, .. } => Value::Int(lo + bin as i64),
            DomainKind::Categorical { categories } => Value::Label(categories[bin].clone()),
        }
    }
}

/// Free-function form of [`ColumnDomain::bin_index`].
pub fn bin_index(value: &Value, domain: &ColumnDomain) -> Option<usize> {
    domain.bin_index(value)
}

/// Ordered list of column domains with unique names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(rename = "column")]
    columns: Vec<ColumnDomain>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnDomain>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Schema("schema has no columns".into()));
        }
        for (i, col) in columns.iter().enumerate() {
            col.validate()?;
            if columns[..i].iter().any(|c| c.name == col.name) {
                return Err(Error::Schema(format!("duplicate column `{}`", col.name)));
            }
        }
        Ok(Schema { columns })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: Schema = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        Schema::new(raw.columns)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema always serializes")
    }

    pub fn columns(&self) -> &[ColumnDomain] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Result<&ColumnDomain> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_owned()))
    }
}

/// Occupation labels of the UCI Adult census data, in the order the
/// crosstab lists them.
pub const ADULT_OCCUPATIONS: [&str; 14] = [
    "Adm-clerical",
    "Armed-Forces",
    "Craft-repair",
    "Exec-managerial",
    "Farming-fishing",
    "Handlers-cleaners",
    "Machine-op-inspct",
    "Other-service",
    "Priv-house-serv",
    "Prof-specialty",
    "Protective-serv",
    "Sales",
    "Tech-support",
    "Transport-moving",
];

/// Age (17..=90) and Occupation schema for the UCI Adult census data.
pub fn adult_schema() -> Schema {
    Schema::new(vec![
        ColumnDomain::integer("Age", 17, 90).unwrap(),
        ColumnDomain::categorical("Occupation", ADULT_OCCUPATIONS).unwrap(),
    ])
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ages() -> ColumnDomain {
        ColumnDomain::integer("Age", 0, 100).unwrap()
    }

    #[test]
    fn integer_bins() {
        let age = ages();
        assert_eq!(age.bin_count(), 101);
        assert_eq!(bin_index(&Value::Int(21), &age), Some(21));
        assert_eq!(bin_index(&Value::Int(0), &age), Some(0));
        assert_eq!(bin_index(&Value::Int(100), &age), Some(100));
        assert_eq!(bin_index(&Value::Int(101), &age), None);
        assert_eq!(bin_index(&Value::Int(-1), &age), None);
        assert_eq!(bin_index(&Value::from("21"), &age), None);
    }

    #[test]
    fn occupation_bins_follow_listed_order() {
        let schema = adult_schema();
        let occ = schema.column("Occupation").unwrap();
        assert_eq!(occ.bin_count(), 14);
        assert_eq!(occ.bin_index(&Value::from("Sales")), Some(11));
        assert_eq!(occ.bin_index(&Value::from("Adm-clerical")), Some(0));
        assert_eq!(occ.bin_index(&Value::from("?")), None);
        assert_eq!(occ.bin_of_str(" Sales "), Some(11));
    }

    #[test]
    fn decode_inverts_bin_index() {
        let age = ColumnDomain::integer("Age", 17, 90).unwrap();
        for b in 0..age.bin_count() {
            assert_eq!(age.bin_index(&age.decode(b)), Some(b));
        }
    }

    #[test]
    fn rejects_bad_domains() {
        assert!(ColumnDomain::integer("x", 5, 4).is_err());
        assert!(ColumnDomain::categorical("c", Vec::<String>::new()).is_err());
        assert!(ColumnDomain::categorical("c", ["a", "a"]).is_err());
        assert!(ColumnDomain::categorical("c", ["a", ""]).is_err());
        assert!(Schema::new(vec![ages(), ages()]).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            [[column]]
            name = "Age"
            kind = "integer"
            lo = 17
            hi = 90

            [[column]]
            name = "Sex"
            kind = "categorical"
            categories = ["Female", "Male"]
        "#;
        let schema = Schema::from_toml_str(text).unwrap();
        assert_eq!(schema.len(), 2);
        assert_eq!(schema.column("Age").unwrap().bin_count(), 74);
        let again = Schema::from_toml_str(&schema.to_toml_string()).unwrap();
        assert_eq!(schema, again);
    }

    #[test]
    fn toml_errors_surface() {
        assert!(Schema::from_toml_str("[[column]]\nname = \"a\"\nkind = \"float\"\n").is_err());
        let bad = "[[column]]\nname = \"a\"\nkind = \"integer\"\nlo = 3\nhi = 1\n";
        assert!(matches!(Schema::from_toml_str(bad), Err(Error::Schema(_))));
    }
}
