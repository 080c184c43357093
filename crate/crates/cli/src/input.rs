use std::path::Path;

use pubbias::{MetaDataset, Study};

use crate::CliError;

/// Reads a `label,y,u` CSV file into a dataset, keeping file order.
pub fn parse_csv(path: impl AsRef<Path>) -> Result<MetaDataset, CliError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_csv_str(&text)
}

pub fn parse_csv_str(text: &str) -> Result<MetaDataset, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        Some(Ok(h)) if h.iter().any(|f| !f.is_empty()) => h,
        Some(Err(e)) => return Err(CliError::Input(format!("missing header: {e}"))),
        _ => return Err(CliError::Input("missing header".into())),
    };
    let fields: Vec<&str> = header.iter().collect();
    if fields != ["label", "y", "u"] {
        return Err(CliError::Input(format!(
            "missing header: expected \"label,y,u\", found \"{}\"",
            fields.join(",")
        )));
    }

    let mut studies = Vec::new();
    for (idx, rec) in records.enumerate() {
        // header is line 1
        let line = idx + 2;
        let rec = rec.map_err(|e| CliError::Input(format!("row {line}: {e}")))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 3 {
            return Err(CliError::Input(format!(
                "row {line}: expected 3 fields, found {}",
                rec.len()
            )));
        }
        let num = |name: &str, s: &str| -> Result<f64, CliError> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    CliError::Input(format!(
                        "row {line}: {name} = \"{s}\" is not a finite number"
                    ))
                })
        };
        let y = num("y", &rec[1])?;
        let u = num("u", &rec[2])?;
        if u <= 0.0 {
            return Err(CliError::Input(format!(
                "row {line}: u must be positive, got {u}"
            )));
        }
        studies.push(
            Study::new(rec[0].to_string(), y, u)
                .map_err(|e| CliError::Input(format!("row {line}: {e}")))?,
        );
    }
    if studies.len() < pubbias::model::MIN_STUDIES {
        return Err(CliError::Input(format!(
            "n >= {} required, found {} studies",
            pubbias::model::MIN_STUDIES,
            studies.len()
        )));
    }
    Ok(MetaDataset::new(studies)?)
}
