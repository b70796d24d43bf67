//! CSV ingest for regression data.
//!
//! Columns are matched by header: `y` is the response, `n_trials` the
//! optional binomial trial count, and every other column is a covariate in
//! file order. Current data must lead with a `treat` column. Missing cells
//! (empty or `NA`) are an error; nothing is imputed.

use std::path::Path;

use nalgebra::DMatrix;
use ppd_core::model::{GlmData, Violation};
use ppd_core::Family;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvRole {
    /// Current trial data: response plus `treat` and covariates.
    Current,
    /// Historical data: response plus covariates, no treatment column.
    Historical,
    /// Covariate rows to resample in a design; no response.
    Covariates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub data: GlmData,
    /// Covariate column names in order (`treat` first for current data).
    pub covariates: Vec<String>,
}

impl Ingested {
    pub fn rows(&self) -> usize {
        self.data.rows()
    }
}

pub fn read_csv(path: &Path, role: CsvRole, family: Family) -> Result<Ingested, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    parse_csv_str(&text, role, family).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na")
}

fn row_list(rows: &[usize]) -> String {
    const SHOWN: usize = 20;
    let mut s = rows.iter().take(SHOWN).map(|r| r.to_string()).collect::<Vec<_>>().join(", ");
    if rows.len() > SHOWN {
        s.push_str(&format!(" and {} more", rows.len() - SHOWN));
    }
    s
}

/// Parses CSV text. Row numbers in errors count data rows from 1.
pub fn parse_csv_str(text: &str, role: CsvRole, family: Family) -> Result<Ingested, CliError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(CliError::Data("missing header row".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for h in &header {
        if h.is_empty() {
            return Err(CliError::Data("empty column name in header".into()));
        }
        if !seen.insert(h.as_str()) {
            return Err(CliError::Data(format!("duplicate column `{h}`")));
        }
    }
    let y_col = header.iter().position(|h| h == "y");
    let trials_col = header.iter().position(|h| h == "n_trials");
    let covariates: Vec<usize> = (0..header.len()).filter(|&j| Some(j) != y_col && Some(j) != trials_col).collect();
    let names: Vec<String> = covariates.iter().map(|&j| header[j].clone()).collect();
    match role {
        CsvRole::Covariates => {
            if y_col.is_some() || trials_col.is_some() {
                return Err(CliError::Data("covariate samples take no `y` or `n_trials` column".into()));
            }
            if names.iter().any(|n| n == "treat") {
                return Err(CliError::Data("covariate samples carry no `treat` column".into()));
            }
        }
        CsvRole::Current | CsvRole::Historical => {
            if y_col.is_none() {
                return Err(CliError::Data("missing response column `y`".into()));
            }
            if role == CsvRole::Current && names.first().map(String::as_str) != Some("treat") {
                return Err(CliError::Data("first covariate column of current data must be `treat`".into()));
            }
            if role == CsvRole::Historical && names.iter().any(|n| n == "treat") {
                return Err(CliError::Data("historical data carry no `treat` column".into()));
            }
        }
    }
    if trials_col.is_some() && family != Family::Binomial {
        return Err(CliError::Data("`n_trials` only applies to the binomial family".into()));
    }
    if trials_col.is_none() && family == Family::Binomial && role != CsvRole::Covariates {
        return Err(CliError::Data("binomial data need an `n_trials` column".into()));
    }

    let mut y = Vec::new();
    let mut trials = Vec::new();
    let mut x: Vec<f64> = Vec::new();
    let mut missing = Vec::new();
    let mut bad = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CliError::Data(format!("row {row}: {e}")))?;
        if record.len() != header.len() {
            return Err(CliError::Data(format!("row {row}: {} fields, header has {}", record.len(), header.len())));
        }
        if record.iter().any(is_missing) {
            missing.push(row);
            continue;
        }
        let num = |j: usize| -> Option<f64> { record[j].parse::<f64>().ok().filter(|v| v.is_finite()) };
        if let Some(j) = y_col {
            match num(j) {
                Some(v) => y.push(v),
                None => {
                    bad.push(format!("row {row} column `y`: `{}`", &record[j]));
                    continue;
                }
            }
        }
        if let Some(j) = trials_col {
            match record[j].parse::<u64>() {
                Ok(m) => trials.push(m),
                Err(_) => bad.push(format!("row {row} column `n_trials`: `{}`", &record[j])),
            }
        }
        for &j in &covariates {
            match num(j) {
                Some(v) => x.push(v),
                None => {
                    bad.push(format!("row {row} column `{}`: `{}`", header[j], &record[j]));
                    x.push(f64::NAN);
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(CliError::Data(format!("missing values in row(s) {}", row_list(&missing))));
    }
    if !bad.is_empty() {
        let shown: Vec<String> = bad.iter().take(20).cloned().collect();
        return Err(CliError::Data(format!("non-numeric cells: {}", shown.join("; "))));
    }
    let rows = x.len().checked_div(names.len()).unwrap_or(y.len());
    if rows == 0 {
        return Err(CliError::Data("no data rows".into()));
    }
    let x = DMatrix::from_row_slice(rows, names.len(), &x);
    let data = match role {
        CsvRole::Covariates => GlmData::new(vec![0.0; rows], x),
        _ if trials_col.is_some() => GlmData::with_trials(y, x, trials),
        _ => GlmData::new(y, x),
    };
    if role != CsvRole::Covariates {
        let violations: Vec<Violation> = data
            .violations(family, "csv", role == CsvRole::Current)
            .into_iter()
            .map(|v| relabel(v, &names))
            .collect();
        if !violations.is_empty() {
            return Err(CliError::DataValidation(violations));
        }
    }
    Ok(Ingested { data, covariates: names })
}

/// Rewrites engine paths (`csv.y[i]`, `csv.x[j]`) as 1-based rows and
/// column names.
fn relabel(v: Violation, names: &[String]) -> Violation {
    let index = |prefix: &str| v.path.strip_prefix(prefix).and_then(|r| r.strip_suffix(']')).and_then(|r| r.parse::<usize>().ok());
    if let Some(i) = index("csv.y[") {
        return Violation::new(format!("row {}", i + 1), v.message);
    }
    if let Some(j) = index("csv.x[") {
        if let Some(name) = names.get(j) {
            return Violation::new(format!("column `{name}`"), v.message);
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_logistic_with_treatment() {
        let got = parse_csv_str("y,treat,age\n1,1,0.5\n0,0,-0.2\n1,0,1.1\n", CsvRole::Current, Family::Bernoulli).unwrap();
        assert_eq!(got.rows(), 3);
        assert_eq!(got.covariates, vec!["treat", "age"]);
        assert_eq!(got.data.x[(0, 0)], 1.0);
        assert_eq!(got.data.x[(2, 1)], 1.1);
    }

    #[test]
    fn missing_cells_list_rows() {
        let err = parse_csv_str("y,x1\n1,0.5\n0,NA\n1,\n", CsvRole::Historical, Family::Bernoulli).unwrap_err();
        assert_eq!(err.to_string(), "data error: missing values in row(s) 2, 3");
    }

    #[test]
    fn binomial_counts_are_checked_per_row() {
        let err = parse_csv_str("y,n_trials,x1\n2,5,0.1\n7,5,0.3\n", CsvRole::Historical, Family::Binomial).unwrap_err();
        match err {
            CliError::DataValidation(v) => assert_eq!(v[0].path, "row 2"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn current_data_need_treat_first() {
        assert!(parse_csv_str("y,age,treat\n1,2,1\n", CsvRole::Current, Family::Bernoulli).is_err());
        assert!(parse_csv_str("y,treat\n1,1\n", CsvRole::Historical, Family::Bernoulli).is_err());
    }

    #[test]
    fn non_numeric_cells_are_rejected() {
        let err = parse_csv_str("y,x1\n1,abc\n", CsvRole::Historical, Family::Normal).unwrap_err();
        assert!(err.to_string().contains("row 1 column `x1`"), "{err}");
    }

    #[test]
    fn covariate_samples_have_no_response() {
        let got = parse_csv_str("x1,x2\n0.1,2\n0.3,4\n", CsvRole::Covariates, Family::Bernoulli).unwrap();
        assert_eq!(got.data.x.shape(), (2, 2));
        assert!(parse_csv_str("y,x1\n1,2\n", CsvRole::Covariates, Family::Bernoulli).is_err());
    }

    #[test]
    fn intercept_only_files_parse() {
        let got = parse_csv_str("y\n1\n0\n", CsvRole::Historical, Family::Bernoulli).unwrap();
        assert_eq!(got.data.x.shape(), (2, 0));
    }
}
