//! Graph datasets: the on-disk CSV directory format and the built-in
//! `synth200` two-community generator.
//!
//! A dataset directory holds four header-less CSV files:
//!
//! * `edges.csv`: one `src,dst` pair of zero-based node ids per line
//!   (treated as undirected),
//! * `features.csv`: `N` rows of `F` reals,
//! * `labels.csv`: one class id per node,
//! * `splits.csv`: one of `train`, `val`, `test` per node.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseAdjacency;
use crate::rng::SeededRng;
use crate::tensor::DenseMatrix;

pub const SYNTH200: &str = "synth200";
/// Dataset seed for `synth200`, independent of any training seed.
pub const SYNTH_SEED: u64 = 42;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug)]
pub struct GraphDataset {
    pub name: String,
    pub adjacency: SparseAdjacency,
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub splits: Vec<Split>,
}

impl GraphDataset {
    pub fn new(
        name: impl Into<String>,
        adjacency: SparseAdjacency,
        features: DenseMatrix,
        labels: Vec<usize>,
        splits: Vec<Split>,
    ) -> Result<Self> {
        let n = adjacency.n();
        if features.rows() != n || labels.len() != n || splits.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} nodes but {} feature rows, {} labels, {} splits",
                features.rows(),
                labels.len(),
                splits.len()
            )));
        }
        if !splits.contains(&Split::Train) {
            return Err(Error::InvalidArgument("no training nodes".into()));
        }
        Ok(Self {
            name: name.into(),
            adjacency,
            features,
            labels,
            splits,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.n()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m + 1)
    }

    pub fn nodes_in(&self, split: Split) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Loads a dataset directory, or generates `synth200` when `path` is
    /// that name and no such directory exists.
    pub fn open(path: &Path) -> Result<Self> {
        if !path.exists() && path.as_os_str() == SYNTH200 {
            return synth200();
        }
        load_graph_dir(path)
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

fn parse_rows<T>(path: &Path, mut f: impl FnMut(&csv::StringRecord) -> std::result::Result<T, String>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (line, rec) in reader(path)?.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        out.push(f(&rec).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            message: format!("line {}: {message}", line + 1),
        })?);
    }
    Ok(out)
}

fn field<T: FromStr>(rec: &csv::StringRecord, i: usize) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    let s = rec.get(i).ok_or_else(|| format!("missing column {}", i + 1))?;
    s.parse().map_err(|e| format!("{s:?}: {e}"))
}

pub fn load_graph_dir(dir: &Path) -> Result<GraphDataset> {
    if !dir.is_dir() {
        return Err(Error::Parse {
            path: dir.to_path_buf(),
            message: "dataset directory not found".into(),
        });
    }
    let features = parse_rows(&dir.join("features.csv"), |r| {
        (0..r.len()).map(|i| field::<f32>(r, i)).collect::<std::result::Result<Vec<_>, _>>()
    })?;
    let n = features.len();
    let f = features.first().map_or(0, Vec::len);
    if n == 0 || f == 0 {
        return Err(Error::Parse {
            path: dir.join("features.csv"),
            message: "no features".into(),
        });
    }
    if let Some(i) = features.iter().position(|row| row.len() != f) {
        return Err(Error::Parse {
            path: dir.join("features.csv"),
            message: format!("line {}: expected {f} columns", i + 1),
        });
    }
    let features = DenseMatrix::from_vec(n, f, features.concat())?;
    let edges = parse_rows(&dir.join("edges.csv"), |r| Ok((field::<usize>(r, 0)?, field::<usize>(r, 1)?)))?;
    let labels = parse_rows(&dir.join("labels.csv"), |r| field::<usize>(r, 0))?;
    let splits = parse_rows(&dir.join("splits.csv"), |r| field::<Split>(r, 0))?;
    let adjacency = SparseAdjacency::undirected(n, &edges)?;
    let name = dir.file_name().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
    GraphDataset::new(name, adjacency, features, labels, splits)
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes `ds` in the directory format; each undirected edge is written once.
pub fn write_graph_dir(ds: &GraphDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join("edges.csv");
    let mut w = writer(&p)?;
    for (i, j, _) in ds.adjacency.edges().filter(|&(i, j, _)| i < j) {
        w.write_record([i.to_string(), j.to_string()]).map_err(csv_err(&p))?;
    }
    w.flush()?;
    let p = dir.join("features.csv");
    let mut w = writer(&p)?;
    for i in 0..ds.num_nodes() {
        w.write_record(ds.features.row(i).iter().map(f32::to_string)).map_err(csv_err(&p))?;
    }
    w.flush()?;
    let p = dir.join("labels.csv");
    let mut w = writer(&p)?;
    for l in &ds.labels {
        w.write_record([l.to_string()]).map_err(csv_err(&p))?;
    }
    w.flush()?;
    let p = dir.join("splits.csv");
    let mut w = writer(&p)?;
    for s in &ds.splits {
        w.write_record([s.to_string()]).map_err(csv_err(&p))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SbmConfig {
    pub nodes: usize,
    pub features: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Per-feature offset of the community means (`±signal`, unit noise).
    pub signal: f32,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            nodes: 200,
            features: 64,
            p_in: 0.08,
            p_out: 0.02,
            signal: 0.2,
            seed: SYNTH_SEED,
        }
    }
}

/// Two-community stochastic block model with community-dependent feature
/// means and a shuffled 60/20/20 train/val/test split.
pub fn generate_sbm(cfg: &SbmConfig) -> Result<GraphDataset> {
    if cfg.nodes < 10 || cfg.features == 0 {
        return Err(Error::InvalidArgument("need at least 10 nodes and 1 feature".into()));
    }
    let mut rng = SeededRng::new(cfg.seed);
    let n = cfg.nodes;
    let labels: Vec<usize> = (0..n).map(|i| usize::from(i >= n / 2)).collect();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] { cfg.p_in } else { cfg.p_out };
            if rng.uniform() < p {
                pairs.push((i, j));
            }
        }
    }
    let direction: Vec<f32> = (0..cfg.features).map(|_| if rng.below(2) == 0 { -1.0 } else { 1.0 }).collect();
    let features = DenseMatrix::from_fn(n, cfg.features, |i, j| {
        let sign = if labels[i] == 0 { -1.0 } else { 1.0 };
        sign * cfg.signal * direction[j] + rng.standard_normal() as f32
    });
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut splits = vec![Split::Test; n];
    let (n_train, n_val) = (n * 3 / 5, n / 5);
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    let adjacency = SparseAdjacency::undirected(n, &pairs)?;
    GraphDataset::new(SYNTH200, adjacency, features, labels, splits)
}

pub fn synth200() -> Result<GraphDataset> {
    generate_sbm(&SbmConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_shape_and_splits() {
        let ds = synth200().unwrap();
        assert_eq!(ds.num_nodes(), 200);
        assert_eq!(ds.num_features(), 64);
        assert_eq!(ds.num_classes(), 2);
        assert_eq!(ds.nodes_in(Split::Train).len(), 120);
        assert_eq!(ds.nodes_in(Split::Val).len(), 40);
        assert_eq!(ds.nodes_in(Split::Test).len(), 40);
        assert!(ds.adjacency.is_symmetric(0.0));
        let intra = ds.adjacency.edges().filter(|&(i, j, _)| ds.labels[i] == ds.labels[j]).count();
        assert!(intra as f64 > 0.7 * ds.adjacency.nnz() as f64);
    }

    #[test]
    fn synth_is_deterministic() {
        let (a, b) = (synth200().unwrap(), synth200().unwrap());
        assert_eq!(a.features, b.features);
        assert_eq!(a.splits, b.splits);
        assert_eq!(a.adjacency.nnz(), b.adjacency.nnz());
    }

    #[test]
    fn split_parsing() {
        assert_eq!(" val ".parse::<Split>().unwrap(), Split::Val);
        assert!("dev".parse::<Split>().is_err());
    }
}
