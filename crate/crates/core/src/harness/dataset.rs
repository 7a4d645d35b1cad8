use std::fs;
use std::path::Path;

use crate::dense::FeatureMatrix;
use crate::error::{Error, Result};
use crate::graph::{node_homophily, SparseGraph};
use crate::synthetic::SyntheticDataset;

pub const EDGES_FILE: &str = "edges.txt";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.txt";

/// A graph, node features and dense class ids.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub graph: SparseGraph,
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub name: Option<String>,
}

impl DatasetBundle {
    pub fn new(graph: SparseGraph, features: FeatureMatrix, labels: Vec<usize>, name: Option<String>) -> Result<Self> {
        let n = graph.n();
        if features.rows() != n || labels.len() != n {
            return Err(Error::input(format!(
                "graph has {n} nodes, features {} rows, labels {} entries",
                features.rows(),
                labels.len()
            )));
        }
        let classes = check_dense_labels(&labels)?;
        Ok(Self {
            graph,
            features,
            labels,
            classes,
            name,
        })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn from_synthetic(ds: SyntheticDataset, name: Option<String>) -> Result<Self> {
        Self::new(ds.graph, ds.x, ds.community, name)
    }
}

/// Number of classes, or an error when some id in `[0, max]` is unused.
fn check_dense_labels(labels: &[usize]) -> Result<usize> {
    let Some(&max) = labels.iter().max() else {
        return Err(Error::input("dataset has no nodes"));
    };
    let mut seen = vec![false; max + 1];
    for &y in labels {
        seen[y] = true;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::input(format!(
            "class ids are not dense: {missing} is unused but {max} appears"
        )));
    }
    Ok(max + 1)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses one comma-separated row of reals per node.
pub fn parse_features(text: &str) -> Result<FeatureMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| Error::format(format!("features: {e}")))?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        if width.is_some_and(|w| w != record.len()) {
            return Err(Error::format(format!(
                "features line {line}: {} values, earlier rows have {}",
                record.len(),
                width.unwrap()
            )));
        }
        width = Some(record.len());
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::format(format!("features line {line}: `{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(Error::format(format!("features line {line}: non-finite value `{field}`")));
            }
            data.push(v);
        }
        rows += 1;
    }
    FeatureMatrix::from_vec(rows, width.unwrap_or(0), data)
}

pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| Error::format(format!("labels line {}: `{}` is not a class id", i + 1, l.trim())))
        })
        .collect()
}

/// Reads `edges.txt`, `features.csv` and `labels.txt` from `dir`.
pub fn load_dataset(dir: &Path) -> Result<DatasetBundle> {
    let features = parse_features(&read(&dir.join(FEATURES_FILE))?)?;
    let labels = parse_labels(&read(&dir.join(LABELS_FILE))?)?;
    if labels.len() != features.rows() {
        return Err(Error::format(format!(
            "{} has {} entries, {} has {} rows",
            LABELS_FILE,
            labels.len(),
            FEATURES_FILE,
            features.rows()
        )));
    }
    let graph = SparseGraph::read_edge_list(&dir.join(EDGES_FILE), features.rows())?;
    let name = dir.file_name().map(|s| s.to_string_lossy().into_owned());
    DatasetBundle::new(graph, features, labels, name)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the three dataset files; reals use shortest round-trip form.
pub fn save_dataset(dir: &Path, bundle: &DatasetBundle) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join(EDGES_FILE), &bundle.graph.to_edge_list())?;
    let mut features = String::new();
    for i in 0..bundle.n() {
        let row: Vec<String> = bundle.features.row(i).iter().map(|v| v.to_string()).collect();
        features.push_str(&row.join(","));
        features.push('\n');
    }
    write(&dir.join(FEATURES_FILE), &features)?;
    let labels: String = bundle.labels.iter().map(|y| format!("{y}\n")).collect();
    write(&dir.join(LABELS_FILE), &labels)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetStats {
    pub nodes: usize,
    pub edges: usize,
    pub classes: usize,
    pub features: usize,
    pub homophily: f64,
}

pub fn dataset_stats(bundle: &DatasetBundle) -> Result<DatasetStats> {
    Ok(DatasetStats {
        nodes: bundle.n(),
        edges: bundle.graph.edge_count(),
        classes: bundle.classes,
        features: bundle.features.cols(),
        homophily: node_homophily(&bundle.graph, &bundle.labels)?.graph_level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DatasetBundle {
        let g = SparseGraph::from_edges(&[(0, 1), (1, 2), (2, 3)], 4).unwrap();
        let x = FeatureMatrix::from_rows(&[vec![0.1, -2.0], vec![1.0 / 3.0, 5e-300], vec![0.0, 1.0], vec![7.5, -0.0]])
            .unwrap();
        DatasetBundle::new(g, x, vec![0, 1, 1, 0], Some("tiny".into())).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let b = tiny();
        save_dataset(dir.path(), &b).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.graph, b.graph);
        assert_eq!(back.labels, b.labels);
        assert_eq!(back.classes, 2);
        let bits = |m: &FeatureMatrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.features), bits(&b.features));
    }

    #[test]
    fn ragged_rows_name_the_line() {
        let err = parse_features("1,2\n3,4\n5\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let err = parse_features("1,2\n3,x\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn labels_must_be_dense() {
        let g = SparseGraph::from_edges(&[(0, 1)], 3).unwrap();
        let x = FeatureMatrix::zeros(3, 1);
        let err = DatasetBundle::new(g, x, vec![0, 2, 2], None).unwrap_err();
        assert!(err.to_string().contains("dense"));
        assert!(parse_labels("0\n-1\n").is_err());
    }

    #[test]
    fn missing_files_are_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Io { .. })));
    }

    #[test]
    fn stats_of_tiny() {
        let s = dataset_stats(&tiny()).unwrap();
        assert_eq!((s.nodes, s.edges, s.classes, s.features), (4, 3, 2, 2));
        // per-node homophily: 0, 1/2, 1/2, 0
        assert!((s.homophily - 0.25).abs() < 1e-15);
    }
}
