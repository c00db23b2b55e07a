//! Toxicity datasets: instances with subset tags, human ratings, and the
//! binary / multi-label structures derived from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Content-based subset a post can belong to.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum SubsetTag {
    Vulgar,
    AntiBlack,
    Aae,
}

impl fmt::Display for SubsetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SubsetTag::Vulgar => "vulgar",
            SubsetTag::AntiBlack => "anti_black",
            SubsetTag::Aae => "aae",
        };
        f.write_str(s)
    }
}

impl FromStr for SubsetTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vulgar" => Ok(SubsetTag::Vulgar),
            "anti_black" => Ok(SubsetTag::AntiBlack),
            "aae" => Ok(SubsetTag::Aae),
            other => Err(format!("unknown subset tag {other:?}")),
        }
    }
}

/// One text post to be annotated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub instance_id: String,
    pub text: String,
    pub subsets: BTreeSet<SubsetTag>,
}

/// Binary toxicity decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryLabel {
    Toxic,
    NotToxic,
}

/// One human rating of one instance on the 1..=5 scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanAnnotation {
    pub instance_id: String,
    pub annotator_id: String,
    pub rating: u8,
}

/// Instances paired with a single binary reference label each.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SingleLabelDataset {
    pub instances: Vec<(Instance, BinaryLabel)>,
}

/// Instances in a fixed, recorded order plus a sparse (annotator, instance)
/// rating matrix. The instance order defines label-space dimensions downstream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MultiLabelDataset {
    pub instances: Vec<Instance>,
    /// Sorted unique annotator ids; column order of the conceptual matrix.
    pub annotator_ids: Vec<String>,
    ratings: BTreeMap<(String, String), u8>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: rating {rating} outside [1,5]")]
    RatingOutOfRange {
        path: String,
        line: usize,
        rating: i64,
    },
    #[error("{path}:{line}: duplicate rating for annotator {annotator:?} on instance {instance:?}")]
    DuplicateCell {
        path: String,
        line: usize,
        annotator: String,
        instance: String,
    },
    #[error("{path}:{line}: instance {instance:?} reappears with different text or subsets")]
    ConflictingInstance {
        path: String,
        line: usize,
        instance: String,
    },
    #[error("cannot binarize an empty rating list")]
    EmptyRatings,
    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

/// Collapse 1..=5 ratings to a binary label: strictly above an average of 2.5
/// is toxic, an average of exactly 2.5 is not. Computed in integers so the
/// boundary is exact.
pub fn binarize(ratings: &[u8]) -> Result<BinaryLabel, DatasetError> {
    if ratings.is_empty() {
        return Err(DatasetError::EmptyRatings);
    }
    let sum: u64 = ratings.iter().map(|&r| u64::from(r)).sum();
    // mean > 2.5  <=>  2*sum > 5*len
    if 2 * sum > 5 * ratings.len() as u64 {
        Ok(BinaryLabel::Toxic)
    } else {
        Ok(BinaryLabel::NotToxic)
    }
}

fn parse_subsets(raw: &str, path: &str, line: usize) -> Result<BTreeSet<SubsetTag>, DatasetError> {
    let mut subsets = BTreeSet::new();
    for part in raw.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let tag = part.parse().map_err(|e: String| DatasetError::Parse {
            path: path.to_string(),
            line,
            message: e,
        })?;
        subsets.insert(tag);
    }
    Ok(subsets)
}

fn subsets_to_string(subsets: &BTreeSet<SubsetTag>) -> String {
    subsets
        .iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

#[derive(Debug, Deserialize, Serialize)]
struct LongRow {
    instance_id: String,
    annotator_id: String,
    rating: i64,
    text: String,
    subsets: String,
}

impl MultiLabelDataset {
    /// A dataset shell fixing only the instance order, with no annotations.
    /// Useful when the instances define downstream vector dimensions but the
    /// human ratings are not needed.
    pub fn from_instances(instances: Vec<Instance>) -> MultiLabelDataset {
        MultiLabelDataset { instances, annotator_ids: Vec::new(), ratings: BTreeMap::new() }
    }

    pub fn rating(&self, annotator_id: &str, instance_id: &str) -> Option<u8> {
        self.ratings
            .get(&(annotator_id.to_string(), instance_id.to_string()))
            .copied()
    }

    /// All ratings for one instance, in annotator-id order.
    pub fn instance_ratings(&self, instance_id: &str) -> Vec<u8> {
        self.annotator_ids
            .iter()
            .filter_map(|a| self.rating(a, instance_id))
            .collect()
    }

    /// (instance count, annotator count).
    pub fn shape(&self) -> (usize, usize) {
        (self.instances.len(), self.annotator_ids.len())
    }

    pub fn annotation_count(&self) -> usize {
        self.ratings.len()
    }

    pub fn annotations(&self) -> impl Iterator<Item = HumanAnnotation> + '_ {
        self.ratings
            .iter()
            .map(|((annotator_id, instance_id), &rating)| HumanAnnotation {
                instance_id: instance_id.clone(),
                annotator_id: annotator_id.clone(),
                rating,
            })
    }

    /// Binarized majority view per instance, in instance order. Instances
    /// without any rating are skipped.
    pub fn binarized(&self) -> Vec<(Instance, BinaryLabel)> {
        self.instances
            .iter()
            .filter_map(|inst| {
                let ratings = self.instance_ratings(&inst.instance_id);
                binarize(&ratings).ok().map(|label| (inst.clone(), label))
            })
            .collect()
    }
}

/// Parse a long-format rating CSV with columns
/// `instance_id, annotator_id, rating, text, subsets`.
///
/// Instance order is first appearance; an instance reappearing with different
/// text or subsets is rejected, as is a duplicate (annotator, instance) cell.
/// `origin` names the source in error messages.
pub fn parse_long_csv(content: &str, origin: &str) -> Result<MultiLabelDataset, DatasetError> {
    let path_str = origin.to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(content.as_bytes());
    let headers = reader
        .headers()
        .map_err(|source| DatasetError::Csv {
            path: path_str.clone(),
            source,
        })?
        .clone();
    let mut dataset = MultiLabelDataset::default();
    let mut annotators: BTreeSet<String> = BTreeSet::new();
    let mut by_id: BTreeMap<String, usize> = BTreeMap::new();
    for result in reader.records() {
        let record = result.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or_default();
            DatasetError::Parse {
                path: path_str.clone(),
                line,
                message: e.to_string(),
            }
        })?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or_default();
        let row: LongRow =
            record
                .deserialize(Some(&headers))
                .map_err(|e| DatasetError::Parse {
                    path: path_str.clone(),
                    line,
                    message: e.to_string(),
                })?;
        if !(1..=5).contains(&row.rating) {
            return Err(DatasetError::RatingOutOfRange {
                path: path_str,
                line,
                rating: row.rating,
            });
        }
        let subsets = parse_subsets(&row.subsets, &path_str, line)?;
        match by_id.get(&row.instance_id) {
            Some(&idx) => {
                let existing = &dataset.instances[idx];
                if existing.text != row.text || existing.subsets != subsets {
                    return Err(DatasetError::ConflictingInstance {
                        path: path_str,
                        line,
                        instance: row.instance_id,
                    });
                }
            }
            None => {
                by_id.insert(row.instance_id.clone(), dataset.instances.len());
                dataset.instances.push(Instance {
                    instance_id: row.instance_id.clone(),
                    text: row.text.clone(),
                    subsets,
                });
            }
        }
        let key = (row.annotator_id.clone(), row.instance_id.clone());
        if dataset.ratings.contains_key(&key) {
            return Err(DatasetError::DuplicateCell {
                path: path_str,
                line,
                annotator: row.annotator_id,
                instance: row.instance_id,
            });
        }
        dataset.ratings.insert(key, row.rating as u8);
        annotators.insert(row.annotator_id);
    }
    dataset.annotator_ids = annotators.into_iter().collect();
    Ok(dataset)
}

/// Load a long-format rating CSV from a file. See [`parse_long_csv`].
pub fn load_long_csv(path: &Path) -> Result<MultiLabelDataset, DatasetError> {
    let path_str = path.display().to_string();
    let content = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path_str.clone(),
        source,
    })?;
    parse_long_csv(&content, &path_str)
}

/// Serialize back to the long CSV layout: instance-major, annotators in sorted
/// order, so that load / save / load is the identity.
pub fn save_long_csv(dataset: &MultiLabelDataset, path: &Path) -> Result<(), DatasetError> {
    let path_str = path.display().to_string();
    let mut writer = csv::Writer::from_path(path).map_err(|source| DatasetError::Csv {
        path: path_str.clone(),
        source,
    })?;
    for inst in &dataset.instances {
        for annotator in &dataset.annotator_ids {
            if let Some(rating) = dataset.rating(annotator, &inst.instance_id) {
                writer
                    .serialize(LongRow {
                        instance_id: inst.instance_id.clone(),
                        annotator_id: annotator.clone(),
                        rating: i64::from(rating),
                        text: inst.text.clone(),
                        subsets: subsets_to_string(&inst.subsets),
                    })
                    .map_err(|source| DatasetError::Csv {
                        path: path_str.clone(),
                        source,
                    })?;
            }
        }
    }
    writer.flush().map_err(|source| DatasetError::Io {
        path: path_str,
        source,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct SingleLabelRow {
    instance_id: String,
    text: String,
    subsets: Vec<SubsetTag>,
    label: BinaryLabel,
}

impl SingleLabelDataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instance_ids(&self) -> Vec<String> {
        self.instances
            .iter()
            .map(|(i, _)| i.instance_id.clone())
            .collect()
    }

    pub fn gold(&self, instance_id: &str) -> Option<BinaryLabel> {
        self.instances
            .iter()
            .find(|(i, _)| i.instance_id == instance_id)
            .map(|&(_, l)| l)
    }
}

/// Parse a single-label dataset from JSONL records
/// `{instance_id, text, subsets, label}`. `origin` names the source in error
/// messages.
pub fn parse_single_label(content: &str, origin: &str) -> Result<SingleLabelDataset, DatasetError> {
    let path_str = origin.to_string();
    let mut dataset = SingleLabelDataset::default();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (idx, line) in content.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: SingleLabelRow =
            serde_json::from_str(line).map_err(|e| DatasetError::Parse {
                path: path_str.clone(),
                line: lineno,
                message: e.to_string(),
            })?;
        if row.text.is_empty() {
            return Err(DatasetError::Parse {
                path: path_str.clone(),
                line: lineno,
                message: format!("instance {:?} has empty text", row.instance_id),
            });
        }
        if !seen.insert(row.instance_id.clone()) {
            return Err(DatasetError::Parse {
                path: path_str.clone(),
                line: lineno,
                message: format!("duplicate instance id {:?}", row.instance_id),
            });
        }
        dataset.instances.push((
            Instance {
                instance_id: row.instance_id,
                text: row.text,
                subsets: row.subsets.into_iter().collect(),
            },
            row.label,
        ));
    }
    Ok(dataset)
}

/// Load a single-label dataset from a JSONL file. See [`parse_single_label`].
pub fn load_single_label(path: &Path) -> Result<SingleLabelDataset, DatasetError> {
    let path_str = path.display().to_string();
    let content = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path_str.clone(),
        source,
    })?;
    parse_single_label(&content, &path_str)
}

/// Write a single-label dataset as JSONL.
pub fn save_single_label(dataset: &SingleLabelDataset, path: &Path) -> Result<(), DatasetError> {
    let mut out = String::new();
    for (inst, label) in &dataset.instances {
        let row = SingleLabelRow {
            instance_id: inst.instance_id.clone(),
            text: inst.text.clone(),
            subsets: inst.subsets.iter().copied().collect(),
            label: *label,
        };
        out.push_str(&serde_json::to_string(&row).expect("row serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Instances carrying the given tag, in dataset order.
pub fn subset(dataset: &SingleLabelDataset, tag: SubsetTag) -> SingleLabelDataset {
    SingleLabelDataset {
        instances: dataset
            .instances
            .iter()
            .filter(|(inst, _)| inst.subsets.contains(&tag))
            .cloned()
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn binarize_maximal_is_toxic() {
        assert_eq!(binarize(&[5, 5, 5, 5, 5, 5]).unwrap(), BinaryLabel::Toxic);
    }

    #[test]
    fn binarize_boundary_is_not_toxic() {
        // Mean exactly 2.5: strictly-greater rule keeps it non-toxic.
        assert_eq!(
            binarize(&[3, 3, 3, 2, 2, 2]).unwrap(),
            BinaryLabel::NotToxic
        );
        assert_eq!(binarize(&[2, 3]).unwrap(), BinaryLabel::NotToxic);
    }

    #[test]
    fn binarize_just_above_boundary_is_toxic() {
        // 16/6 = 2.667 > 2.5.
        assert_eq!(binarize(&[1, 2, 3, 4, 5, 1]).unwrap(), BinaryLabel::Toxic);
        // 1,001 ratings averaging a hair over 2.5.
        let mut ratings = vec![2u8; 500];
        ratings.extend(vec![3u8; 501]);
        assert_eq!(binarize(&ratings).unwrap(), BinaryLabel::Toxic);
    }

    #[test]
    fn binarize_empty_errors() {
        assert!(matches!(binarize(&[]), Err(DatasetError::EmptyRatings)));
    }

    proptest::proptest! {
        #[test]
        fn prop_binarize_permutation_invariant(mut ratings in proptest::collection::vec(1u8..=5, 1..40)) {
            let forward = binarize(&ratings).unwrap();
            ratings.reverse();
            proptest::prop_assert_eq!(forward, binarize(&ratings).unwrap());
            ratings.sort_unstable();
            proptest::prop_assert_eq!(forward, binarize(&ratings).unwrap());
        }
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const LONG_HEADER: &str = "instance_id,annotator_id,rating,text,subsets\n";

    #[test]
    fn loads_small_long_csv() {
        let f = write_temp(&format!(
            "{LONG_HEADER}i1,a1,3,first post,aae\ni1,a2,4,first post,aae\ni1,a3,5,first post,aae\n\
             i2,a1,1,second post,\ni2,a2,2,second post,\ni2,a3,1,second post,\n"
        ));
        let d = load_long_csv(f.path()).unwrap();
        assert_eq!(d.shape(), (2, 3));
        assert_eq!(d.annotation_count(), 6);
        assert_eq!(d.rating("a2", "i1"), Some(4));
        assert_eq!(d.instances[0].subsets.len(), 1);
        assert!(d.instances[1].subsets.is_empty());
    }

    #[test]
    fn rejects_out_of_range_rating_with_line() {
        let f = write_temp(&format!("{LONG_HEADER}i1,a1,3,post,\ni1,a2,7,post,\n"));
        match load_long_csv(f.path()).unwrap_err() {
            DatasetError::RatingOutOfRange { line, rating, .. } => {
                assert_eq!(rating, 7);
                assert_eq!(line, 3);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn rejects_duplicate_cell() {
        let f = write_temp(&format!("{LONG_HEADER}i1,a1,3,post,\ni1,a1,4,post,\n"));
        assert!(matches!(
            load_long_csv(f.path()),
            Err(DatasetError::DuplicateCell { .. })
        ));
    }

    #[test]
    fn rejects_conflicting_instance_text() {
        let f = write_temp(&format!("{LONG_HEADER}i1,a1,3,post,\ni1,a2,4,different,\n"));
        assert!(matches!(
            load_long_csv(f.path()),
            Err(DatasetError::ConflictingInstance { .. })
        ));
    }

    #[test]
    fn full_matrix_product_count() {
        // 12 instances x 641 annotators fully populated.
        let mut content = String::from(LONG_HEADER);
        for i in 0..12 {
            for a in 0..641 {
                content.push_str(&format!("i{i},a{a},{},post {i},\n", 1 + (i + a) % 5));
            }
        }
        let f = write_temp(&content);
        let d = load_long_csv(f.path()).unwrap();
        assert_eq!(d.shape(), (12, 641));
        assert_eq!(d.annotation_count(), 7692);
    }

    #[test]
    fn long_csv_round_trips() {
        let f = write_temp(&format!(
            "{LONG_HEADER}i1,a1,3,first post,aae;vulgar\ni2,a2,2,second post,\ni1,a2,4,first post,aae;vulgar\n"
        ));
        let d1 = load_long_csv(f.path()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("roundtrip.csv");
        save_long_csv(&d1, &out).unwrap();
        let d2 = load_long_csv(&out).unwrap();
        assert_eq!(d1, d2);
    }

    fn sample_single_label() -> SingleLabelDataset {
        let mk = |id: &str, tags: &[SubsetTag], label| {
            (
                Instance {
                    instance_id: id.into(),
                    text: format!("text {id}"),
                    subsets: tags.iter().copied().collect(),
                },
                label,
            )
        };
        SingleLabelDataset {
            instances: vec![
                mk("i1", &[SubsetTag::Aae], BinaryLabel::Toxic),
                mk("i2", &[], BinaryLabel::NotToxic),
                mk(
                    "i3",
                    &[SubsetTag::Aae, SubsetTag::Vulgar],
                    BinaryLabel::Toxic,
                ),
            ],
        }
    }

    #[test]
    fn subset_filters_and_preserves_order() {
        let d = sample_single_label();
        let aae = subset(&d, SubsetTag::Aae);
        assert_eq!(aae.len(), 2);
        assert_eq!(aae.instances[0].0.instance_id, "i1");
        assert_eq!(aae.instances[1].0.instance_id, "i3");
        assert!(aae
            .instances
            .iter()
            .all(|(i, _)| i.subsets.contains(&SubsetTag::Aae)));
    }

    #[test]
    fn subset_empty_and_idempotent() {
        let d = sample_single_label();
        assert!(subset(&d, SubsetTag::AntiBlack).is_empty());
        let once = subset(&d, SubsetTag::Aae);
        assert_eq!(subset(&once, SubsetTag::Aae), once);
    }

    #[test]
    fn single_label_jsonl_round_trips() {
        let d = sample_single_label();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("single.jsonl");
        save_single_label(&d, &path).unwrap();
        let loaded = load_single_label(&path).unwrap();
        assert_eq!(loaded, d);
    }

    #[test]
    fn single_label_rejects_duplicates() {
        let f = write_temp(
            "{\"instance_id\":\"i1\",\"text\":\"x\",\"subsets\":[],\"label\":\"toxic\"}\n\
             {\"instance_id\":\"i1\",\"text\":\"y\",\"subsets\":[],\"label\":\"toxic\"}\n",
        );
        assert!(load_single_label(f.path()).is_err());
    }
}
