//! CSV artifact schemas and the readers that round-trip them. Every file
//! the studies emit re-parses through this module, which the test suite
//! exercises, so downstream plotting scripts get stable columns.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::embedding::{ClusterDistanceMatrix, Normalize};

/// One annotation run's alignment with the human gold labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityRow {
    /// "persona" or "baseline".
    pub arm: String,
    pub run_id: String,
    /// Empty for baseline runs.
    pub persona_id: String,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub weighted_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    /// "lowest", "median", or "highest".
    pub stratum: String,
    pub persona_id: String,
    pub repeat: usize,
    pub macro_f1: f64,
}

/// One point of one crowd trajectory. `order_id` distinguishes permutations
/// of the same crowd; the main trajectories use order 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub crowd_id: String,
    pub order_id: usize,
    pub size: usize,
    pub mavg_f1: f64,
    pub accuracy: f64,
    pub precision_toxic: f64,
    pub recall_toxic: f64,
    pub f1_toxic: f64,
    pub precision_not_toxic: f64,
    pub recall_not_toxic: f64,
    pub f1_not_toxic: f64,
    pub weighted_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub persona_id: String,
    /// False when a constant distance profile left rho undefined.
    pub defined: bool,
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRow {
    pub cluster_id: String,
    pub persona_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRow {
    pub cluster_id: String,
    pub rank: usize,
    pub term: String,
    pub weight: f64,
}

/// Marker-injection effect for one template, group, and subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    pub template_id: String,
    /// "black" or "conservative".
    pub group: String,
    /// "aae" or "anti_black".
    pub subset: String,
    pub neutral_level: f64,
    pub variant_level: f64,
    /// variant_level - neutral_level.
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffRow {
    pub subset: String,
    pub instance_id: String,
    pub text: String,
    pub mu_black: f64,
    pub mu_conservative: f64,
    /// mu_black - mu_conservative.
    pub diff: f64,
}

fn open_writer(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn open_reader(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_writer(open_writer(path)?);
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    }
    writer
        .flush()
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut reader = csv::Reader::from_reader(open_reader(path)?);
    reader
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::Runtime(format!("cannot parse {}: {e}", path.display())))
}

/// Matrix layout: `cluster_id` column, then one column per cluster id.
pub fn write_matrix(path: &Path, matrix: &ClusterDistanceMatrix) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_writer(open_writer(path)?);
    let fail = |e: csv::Error| CliError::Runtime(format!("cannot write {}: {e}", path.display()));
    let mut header = vec!["cluster_id".to_string()];
    header.extend(matrix.cluster_ids.iter().cloned());
    writer.write_record(&header).map_err(fail)?;
    for (id, row) in matrix.cluster_ids.iter().zip(&matrix.values) {
        let mut record = vec![id.clone()];
        record.extend(row.iter().map(|v| format_f64(*v)));
        writer.write_record(&record).map_err(fail)?;
    }
    writer
        .flush()
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn read_matrix(path: &Path, normalized: Normalize) -> Result<ClusterDistanceMatrix, CliError> {
    let mut reader = csv::Reader::from_reader(open_reader(path)?);
    let fail = |m: String| CliError::Runtime(format!("cannot parse {}: {m}", path.display()));
    let headers = reader.headers().map_err(|e| fail(e.to_string()))?.clone();
    let cluster_ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| fail(e.to_string()))?;
        let row: Vec<f64> = record
            .iter()
            .skip(1)
            .map(|cell| cell.parse::<f64>().map_err(|e| fail(e.to_string())))
            .collect::<Result<_, _>>()?;
        if row.len() != cluster_ids.len() {
            return Err(fail(format!("ragged matrix row of width {}", row.len())));
        }
        values.push(row);
    }
    if values.len() != cluster_ids.len() {
        return Err(fail(format!("{} rows for {} clusters", values.len(), cluster_ids.len())));
    }
    Ok(ClusterDistanceMatrix { cluster_ids, values, normalized })
}

/// Vector table layout: an id column followed by one column per dimension.
/// Dimension names are caller-chosen (counter names for description
/// embeddings, instance ids for label vectors).
pub fn write_vector_table(
    path: &Path,
    id_header: &str,
    dimension_names: &[String],
    rows: &[(String, Vec<f64>)],
) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_writer(open_writer(path)?);
    let fail = |e: csv::Error| CliError::Runtime(format!("cannot write {}: {e}", path.display()));
    let mut header = vec![id_header.to_string()];
    header.extend(dimension_names.iter().cloned());
    writer.write_record(&header).map_err(fail)?;
    for (id, vector) in rows {
        debug_assert_eq!(vector.len(), dimension_names.len());
        let mut record = vec![id.clone()];
        record.extend(vector.iter().map(|v| format_f64(*v)));
        writer.write_record(&record).map_err(fail)?;
    }
    writer
        .flush()
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn read_vector_table(
    path: &Path,
) -> Result<(Vec<String>, Vec<(String, Vec<f64>)>), CliError> {
    let mut reader = csv::Reader::from_reader(open_reader(path)?);
    let fail = |m: String| CliError::Runtime(format!("cannot parse {}: {m}", path.display()));
    let headers = reader.headers().map_err(|e| fail(e.to_string()))?.clone();
    let dimension_names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| fail(e.to_string()))?;
        let id = record.get(0).unwrap_or_default().to_string();
        let vector: Vec<f64> = record
            .iter()
            .skip(1)
            .map(|cell| cell.parse::<f64>().map_err(|e| fail(e.to_string())))
            .collect::<Result<_, _>>()?;
        rows.push((id, vector));
    }
    Ok((dimension_names, rows))
}

/// Shortest representation that parses back to the identical f64, matching
/// what serde-based rows emit.
fn format_f64(v: f64) -> String {
    let mut buffer = ryu_format(v);
    // ryu writes "1.0" for integral values; keep that, it stays parseable.
    if buffer == "-0.0" {
        buffer = "0.0".into();
    }
    buffer
}

fn ryu_format(v: f64) -> String {
    // csv serializes f64 through ryu internally; mirror it via serde_json,
    // which uses the same shortest-round-trip algorithm.
    serde_json::to_string(&v).expect("finite f64 serializes")
}

/// Typed JSON summary writer: pretty, newline-terminated, deterministic
/// field order.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut writer = open_writer(path)?;
    serde_json::to_writer_pretty(&mut writer, value)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    writer
        .write_all(b"\n")
        .and_then(|_| writer.flush())
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let reader = open_reader(path)?;
    serde_json::from_reader(reader)
        .map_err(|e| CliError::Runtime(format!("cannot parse {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diversity_rows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let rows = vec![
            DiversityRow {
                arm: "persona".into(),
                run_id: "s1p:p1".into(),
                persona_id: "p1".into(),
                macro_f1: 0.7321428571428572,
                accuracy: 0.75,
                weighted_f1: 0.7516,
            },
            DiversityRow {
                arm: "baseline".into(),
                run_id: "s1b:0".into(),
                persona_id: String::new(),
                macro_f1: 1.0 / 3.0,
                accuracy: 0.5,
                weighted_f1: 0.25,
            },
        ];
        write_rows(&path, &rows).unwrap();
        let back: Vec<DiversityRow> = read_rows(&path).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn trajectory_and_stability_rows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("t.csv");
        let rows = vec![TrajectoryRow {
            crowd_id: "persona:0".into(),
            order_id: 3,
            size: 17,
            mavg_f1: 0.9183,
            accuracy: 0.92,
            precision_toxic: 1.0,
            recall_toxic: 0.8,
            f1_toxic: 8.0 / 9.0,
            precision_not_toxic: 0.875,
            recall_not_toxic: 1.0,
            f1_not_toxic: 14.0 / 15.0,
            weighted_f1: 0.91,
        }];
        write_rows(&t, &rows).unwrap();
        assert_eq!(read_rows::<TrajectoryRow>(&t).unwrap(), rows);
        let s = dir.path().join("s.csv");
        let rows = vec![StabilityRow {
            stratum: "median".into(),
            persona_id: "p9".into(),
            repeat: 29,
            macro_f1: 0.5,
        }];
        write_rows(&s, &rows).unwrap();
        assert_eq!(read_rows::<StabilityRow>(&s).unwrap(), rows);
    }

    #[test]
    fn optional_cells_round_trip_empty_for_undefined() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let rows = vec![
            CorrelationRow {
                persona_id: "p1".into(),
                defined: true,
                rho: Some(0.8),
                p_value: Some(0.10416666666666667),
                n: 4,
            },
            CorrelationRow { persona_id: "p2".into(), defined: false, rho: None, p_value: None, n: 4 },
        ];
        write_rows(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(2).unwrap().contains("p2,false,,,4"));
        assert_eq!(read_rows::<CorrelationRow>(&path).unwrap(), rows);
    }

    #[test]
    fn matrix_round_trips_with_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let matrix = ClusterDistanceMatrix {
            cluster_ids: vec!["c0".into(), "c1".into()],
            values: vec![vec![0.0, 0.37], vec![0.37, 0.012345678901234567]],
            normalized: Normalize::None,
        };
        write_matrix(&path, &matrix).unwrap();
        let back = read_matrix(&path, Normalize::None).unwrap();
        assert_eq!(back.cluster_ids, matrix.cluster_ids);
        assert_eq!(back.values, matrix.values);
    }

    #[test]
    fn vector_table_round_trips_exact_floats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        let rows = vec![
            ("p1".to_string(), vec![0.1, -0.000001234, 3.0]),
            ("p2".to_string(), vec![1.0 / 3.0, f64::MIN_POSITIVE, 0.0]),
        ];
        let names = vec!["d0".into(), "d1".into(), "d2".into()];
        write_vector_table(&path, "persona_id", &names, &rows).unwrap();
        let (back_names, back_rows) = read_vector_table(&path).unwrap();
        assert_eq!(back_names, names);
        assert_eq!(back_rows, rows);
    }

    #[test]
    fn shift_and_diff_rows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let rows = vec![ShiftRow {
            template_id: "t1".into(),
            group: "black".into(),
            subset: "aae".into(),
            neutral_level: 3.5,
            variant_level: 2.5,
            shift: -1.0,
        }];
        write_rows(&path, &rows).unwrap();
        assert_eq!(read_rows::<ShiftRow>(&path).unwrap(), rows);
        let path = dir.path().join("d.csv");
        let rows = vec![DiffRow {
            subset: "anti_black".into(),
            instance_id: "i3".into(),
            text: "text with, commas and \"quotes\"".into(),
            mu_black: 4.2,
            mu_conservative: 4.5,
            diff: -0.2999999999999998,
        }];
        write_rows(&path, &rows).unwrap();
        assert_eq!(read_rows::<DiffRow>(&path).unwrap(), rows);
    }

    #[test]
    fn json_summaries_round_trip() {
        #[derive(Debug, PartialEq, Serialize, Deserialize)]
        struct Summary {
            w: f64,
            n: usize,
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let value = Summary { w: 12.25, n: 400 };
        write_json(&path, &value).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.ends_with('\n'));
        assert_eq!(read_json::<Summary>(&path).unwrap(), value);
    }
}
