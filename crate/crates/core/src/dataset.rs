use std::io::Read;

use crate::error::{Error, Result};
use crate::schema::{Schema, Value};

/// Options for reading delimiter-separated text.
#[derive(Debug, Clone, Copy)]
pub struct CsvOptions {
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions { delimiter: b',' }
    }
}

/// The private input: rows of in-domain cells under a schema.
///
/// Cells are stored as bin indices, row-major. Every stored bin is valid for
/// its column, so each row contributes to exactly one bin of any marginal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TabularDataset {
    name: String,
    schema: Schema,
    bins: Vec<u32>,
}

impl TabularDataset {
    pub fn empty(name: impl Into<String>, schema: Schema) -> Self {
        TabularDataset {
            name: name.into(),
            schema,
            bins: Vec::new(),
        }
    }

    /// Builds a dataset from typed rows, returning it together with the
    /// number of rows dropped for having a wrong arity or an out-of-domain
    /// cell.
    pub fn from_rows<I, R>(name: impl Into<String>, schema: Schema, rows: I) -> (Self, usize)
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[Value]>,
    {
        let mut ds = TabularDataset::empty(name, schema);
        let mut rejected = 0;
        let mut scratch = Vec::with_capacity(ds.schema.len());
        for row in rows {
            let row = row.as_ref();
            scratch.clear();
            let ok = row.len() == ds.schema.len()
                && row.iter().zip(ds.schema.columns()).all(|(v, col)| match col.bin_index(v) {
                    Some(b) => {
                        scratch.push(b as u32);
                        true
                    }
                    None => false,
                });
            if ok {
                ds.bins.extend_from_slice(&scratch);
            } else {
                rejected += 1;
            }
        }
        (ds, rejected)
    }

    /// Builds a dataset directly from bin tuples.
    pub fn from_bins(name: impl Into<String>, schema: Schema, rows: &[Vec<usize>]) -> Result<Self> {
        let mut ds = TabularDataset::empty(name, schema);
        for row in rows {
            if row.len() != ds.schema.len() {
                return Err(Error::InvalidArgument(format!(
                    "row has {} cells, schema has {} columns",
                    row.len(),
                    ds.schema.len()
                )));
            }
            for (&b, col) in row.iter().zip(ds.schema.columns()) {
                if b >= col.bin_count() {
                    return Err(Error::InvalidArgument(format!(
                        "bin {b} out of range for column `{}`",
                        col.name
                    )));
                }
                ds.bins.push(b as u32);
            }
        }
        Ok(ds)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        if self.schema.is_empty() {
            0
        } else {
            self.bins.len() / self.schema.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Bin indices of row `i`.
    pub fn row_bins(&self, i: usize) -> &[u32] {
        let w = self.schema.len();
        &self.bins[i * w..(i + 1) * w]
    }

    pub fn rows_bins(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.bins.chunks_exact(self.schema.len())
    }

    pub fn row_values(&self, i: usize) -> Vec<Value> {
        self.row_bins(i)
            .iter()
            .zip(self.schema.columns())
            .map(|(&b, col)| col.decode(b as usize))
            .collect()
    }

    /// A copy with row `i` removed, i.e. a neighbor under add/remove-one.
    pub fn without_row(&self, i: usize) -> Self {
        let w = self.schema.len();
        let mut bins = self.bins.clone();
        bins.drain(i * w..(i + 1) * w);
        TabularDataset {
            name: format!("{}-minus-{i}", self.name),
            schema: self.schema.clone(),
            bins,
        }
    }

    /// A copy with one extra row given by bin indices.
    pub fn with_row(&self, row: &[usize]) -> Result<Self> {
        let mut out = TabularDataset::from_bins(
            format!("{}-plus", self.name),
            self.schema.clone(),
            &[row.to_vec()],
        )?;
        let mut bins = self.bins.clone();
        bins.append(&mut out.bins);
        out.bins = bins;
        Ok(out)
    }

    /// Sorted row multiset, used for the neighbor check.
    pub(crate) fn sorted_rows(&self) -> Vec<&[u32]> {
        let mut rows: Vec<&[u32]> = self.rows_bins().collect();
        rows.sort_unstable();
        rows
    }
}

/// Reads delimiter-separated text with a header row.
///
/// Header columns absent from the schema are ignored. A row is rejected
/// (and counted) when it has any unparseable or out-of-domain cell in a
/// schema column.
pub fn ingest_csv<R: Read>(
    source: R,
    schema: &Schema,
    name: impl Into<String>,
    opts: CsvOptions,
) -> Result<(TabularDataset, usize)> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers = reader.headers()?.clone();
    let positions = schema
        .columns()
        .iter()
        .map(|col| {
            headers
                .iter()
                .position(|h| h == col.name)
                .ok_or_else(|| Error::MissingColumn(col.name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ds = TabularDataset::empty(name, schema.clone());
    let mut rejected = 0;
    let mut scratch = Vec::with_capacity(schema.len());
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record)? {
        // a lone blank field is what csv yields for a whitespace-only line
        if record.len() == 1 && record[0].is_empty() && schema.len() > 1 {
            continue;
        }
        scratch.clear();
        let ok = positions.iter().zip(schema.columns()).all(|(&pos, col)| {
            match record.get(pos).and_then(|raw| col.bin_of_str(raw)) {
                Some(b) => {
                    scratch.push(b as u32);
                    true
                }
                None => false,
            }
        });
        if ok {
            ds.bins.extend_from_slice(&scratch);
        } else {
            rejected += 1;
        }
    }
    Ok((ds, rejected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{adult_schema, ColumnDomain};

    fn age_schema() -> Schema {
        Schema::new(vec![ColumnDomain::integer("Age", 0, 100).unwrap()]).unwrap()
    }

    #[test]
    fn ingests_simple_ages() {
        let (ds, rejected) =
            ingest_csv("Age\n21\n33\n".as_bytes(), &age_schema(), "t", CsvOptions::default())
                .unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(rejected, 0);
        assert_eq!(ds.row_values(1), vec![Value::Int(33)]);
    }

    #[test]
    fn out_of_domain_rows_are_dropped_and_counted() {
        let (ds, rejected) = ingest_csv(
            "Age\n21\n101\nabc\n\n40\n".as_bytes(),
            &age_schema(),
            "t",
            CsvOptions::default(),
        )
        .unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(rejected, 2);
    }

    #[test]
    fn extra_columns_dropped_and_delimiter_configurable() {
        let text = "Name;Age;Occupation\nann;17; Sales\nbob;30;?\ncy;91;Sales\n";
        let (ds, rejected) =
            ingest_csv(text.as_bytes(), &adult_schema(), "t", CsvOptions { delimiter: b';' })
                .unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(rejected, 2);
        assert_eq!(ds.row_values(0), vec![Value::Int(17), Value::from("Sales")]);
    }

    #[test]
    fn missing_header_column_is_an_error() {
        let err = ingest_csv("Years\n3\n".as_bytes(), &age_schema(), "t", CsvOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "Age"));
    }

    #[test]
    fn short_rows_rejected() {
        let text = "Age,Occupation\n17\n18,Sales\n";
        let (ds, rejected) =
            ingest_csv(text.as_bytes(), &adult_schema(), "t", CsvOptions::default()).unwrap();
        assert_eq!((ds.len(), rejected), (1, 1));
    }

    #[test]
    fn from_rows_counts_rejections() {
        let rows = vec![
            vec![Value::Int(20), Value::from("Sales")],
            vec![Value::Int(200), Value::from("Sales")],
            vec![Value::Int(20)],
        ];
        let (ds, rejected) = TabularDataset::from_rows("t", adult_schema(), rows);
        assert_eq!((ds.len(), rejected), (1, 2));
    }

    #[test]
    fn neighbors_by_removal_and_addition() {
        let ds = TabularDataset::from_bins("t", age_schema(), &[vec![1], vec![2], vec![3]]).unwrap();
        let minus = ds.without_row(1);
        assert_eq!(minus.len(), 2);
        assert_eq!(minus.row_bins(1), &[3]);
        let plus = ds.with_row(&[7]).unwrap();
        assert_eq!(plus.len(), 4);
        assert!(ds.with_row(&[101]).is_err());
    }
}
