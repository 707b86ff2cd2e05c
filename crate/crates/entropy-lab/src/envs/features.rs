//! Audio-feature CSV ingestion.
//!
//! Schema: header row `name,f1,...,f10`, then one row per genre or track with
//! a name followed by ten decimal features, each in `[0,1]`. UTF-8 only.

use super::EnvError;

pub const FEATURE_COLUMNS: usize = 10;

const EXPECTED_HEADER: &str = "name,f1,f2,f3,f4,f5,f6,f7,f8,f9,f10";

/// Named rows of ten features each.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub rows: Vec<[f64; FEATURE_COLUMNS]>,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Parses the feature CSV. `expected_rows`, when given, pins the row count
/// (20 for genres, 50 for tracks).
pub fn parse_feature_csv(text: &str, expected_rows: Option<usize>) -> Result<FeatureTable, EnvError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(EnvError::Csv {
        line: 1,
        detail: "empty file; expected header row".into(),
    })?;
    if header.trim_end_matches('\r') != EXPECTED_HEADER {
        return Err(EnvError::Csv {
            line: 1,
            detail: format!("header must be `{EXPECTED_HEADER}`, got `{header}`"),
        });
    }

    let mut names = Vec::new();
    let mut rows = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != FEATURE_COLUMNS + 1 {
            return Err(EnvError::Csv {
                line: line_no,
                detail: format!("expected {} columns, got {}", FEATURE_COLUMNS + 1, fields.len()),
            });
        }
        if fields[0].is_empty() {
            return Err(EnvError::Csv {
                line: line_no,
                detail: "empty name column".into(),
            });
        }
        let mut row = [0.0; FEATURE_COLUMNS];
        for (j, field) in fields[1..].iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| EnvError::Csv {
                line: line_no,
                detail: format!("column f{}: `{field}` is not a decimal", j + 1),
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(EnvError::Csv {
                    line: line_no,
                    detail: format!("column f{}: value {v} outside [0,1]", j + 1),
                });
            }
            row[j] = v;
        }
        names.push(fields[0].to_string());
        rows.push(row);
    }

    if let Some(expected) = expected_rows {
        if rows.len() != expected {
            return Err(EnvError::Csv {
                line: rows.len() + 1,
                detail: format!("expected {expected} feature rows, got {}", rows.len()),
            });
        }
    }
    Ok(FeatureTable { names, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_csv(rows: usize) -> String {
        let mut text = String::from("name,f1,f2,f3,f4,f5,f6,f7,f8,f9,f10\n");
        for i in 0..rows {
            text.push_str(&format!(
                "row{i},0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0\n"
            ));
        }
        text
    }

    #[test]
    fn parses_valid_table() {
        let table = parse_feature_csv(&sample_csv(3), Some(3)).unwrap();
        assert_eq!(table.names, vec!["row0", "row1", "row2"]);
        assert_eq!(table.rows[0][9], 1.0);
    }

    #[test]
    fn rejects_wrong_header() {
        let err = parse_feature_csv("name,a,b\nx,1,2\n", None).unwrap_err();
        assert!(matches!(err, EnvError::Csv { line: 1, .. }));
    }

    #[test]
    fn rejects_out_of_range_and_non_decimal() {
        let mut bad = sample_csv(1);
        bad.push_str("oops,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.5\n");
        let err = parse_feature_csv(&bad, None).unwrap_err();
        assert!(matches!(err, EnvError::Csv { line: 3, .. }), "{err}");

        let mut bad = sample_csv(1);
        bad.push_str("oops,x,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0\n");
        assert!(parse_feature_csv(&bad, None).is_err());
    }

    #[test]
    fn enforces_expected_row_count() {
        let err = parse_feature_csv(&sample_csv(3), Some(20)).unwrap_err();
        assert!(err.to_string().contains("expected 20 feature rows"));
    }

    #[test]
    fn rejects_wrong_column_count() {
        let mut bad = sample_csv(0);
        bad.push_str("short,0.1,0.2\n");
        let err = parse_feature_csv(&bad, None).unwrap_err();
        assert!(err.to_string().contains("expected 11 columns"));
    }
}
