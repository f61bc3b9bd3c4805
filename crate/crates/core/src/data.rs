//! Datasets on disk, synthetic generators and the results table.
//!
//! A dataset directory holds five UTF-8 files with LF line endings and
//! 0-indexed node ids:
//!
//! * `edges.tsv`: `i<TAB>j` per undirected edge, optionally `<TAB>weight`
//! * `features.tsv`: header `N<TAB>D`, then `i<TAB>j<TAB>value` per nonzero entry
//! * `labels.tsv`: `i<TAB>class` per node
//! * `split.json`: `{"train":[..],"val":[..],"test":[..]}`
//! * `meta`: `key<TAB>value` lines for `name`, `nodes`, `edges`, `features`, `classes`

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::DenseMatrix;
use crate::model::Split;
use crate::rng::rng_from_seed;

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const SPLIT_FILE: &str = "split.json";
pub const META_FILE: &str = "meta";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graph: Graph,
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub split: Split,
    pub class_count: usize,
}

impl Dataset {
    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.graph.num_nodes();
        if self.features.rows() != n || self.labels.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{n} nodes but {} feature rows and {} labels",
                self.features.rows(),
                self.labels.len()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&c| c >= self.class_count) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside {} classes",
                self.class_count
            )));
        }
        self.split.validate(n)
    }

    /// Identity matrix in place of the features.
    pub fn identity_features(&self) -> DenseMatrix {
        DenseMatrix::identity(self.num_nodes())
    }
}

struct Lines {
    file: PathBuf,
    text: String,
}

impl Lines {
    fn read(dir: &Path, name: &str) -> Result<Self> {
        let file = dir.join(name);
        let text = fs::read_to_string(&file).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(file.clone()),
            _ => Error::Io(e),
        })?;
        Ok(Self { file, text })
    }

    /// Non-empty lines with their 1-based line numbers.
    fn iter(&self) -> impl Iterator<Item = (usize, &str)> {
        self.text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
            .filter(|(_, l)| !l.trim().is_empty())
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            file: self.file.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn fields<'a>(&self, line: usize, text: &'a str, allowed: &[usize]) -> Result<Vec<&'a str>> {
        let f: Vec<&str> = text.split('\t').collect();
        if !allowed.contains(&f.len()) {
            return Err(self.err(line, format!("expected {allowed:?} tab-separated fields, found {}", f.len())));
        }
        Ok(f)
    }

    fn index(&self, line: usize, s: &str, bound: usize, what: &str) -> Result<usize> {
        let v: usize = s
            .trim()
            .parse()
            .map_err(|_| self.err(line, format!("{what} `{s}` is not a non-negative integer")))?;
        if v >= bound {
            return Err(self.err(line, format!("{what} {v} out of range (< {bound})")));
        }
        Ok(v)
    }

    fn real(&self, line: usize, s: &str) -> Result<f64> {
        let v: f64 = s.trim().parse().map_err(|_| self.err(line, format!("`{s}` is not a number")))?;
        if !v.is_finite() {
            return Err(self.err(line, "non-finite value"));
        }
        Ok(v)
    }
}

struct Meta {
    name: String,
    nodes: usize,
    edges: usize,
    features: usize,
    classes: usize,
}

fn read_meta(dir: &Path) -> Result<Meta> {
    let lines = Lines::read(dir, META_FILE)?;
    let mut name = None;
    let mut counts = [None; 4];
    const KEYS: [&str; 4] = ["nodes", "edges", "features", "classes"];
    for (ln, text) in lines.iter() {
        let f = lines.fields(ln, text, &[2])?;
        match f[0] {
            "name" => name = Some(f[1].to_string()),
            key => {
                let slot = KEYS
                    .iter()
                    .position(|k| *k == key)
                    .ok_or_else(|| lines.err(ln, format!("unknown key `{key}`")))?;
                counts[slot] = Some(lines.index(ln, f[1], usize::MAX, key)?);
            }
        }
    }
    let last = lines.iter().last().map_or(0, |(l, _)| l);
    let get = |i: usize| counts[i].ok_or_else(|| lines.err(last, format!("missing `{}`", KEYS[i])));
    Ok(Meta {
        name: name.ok_or_else(|| lines.err(last, "missing `name`"))?,
        nodes: get(0)?,
        edges: get(1)?,
        features: get(2)?,
        classes: get(3)?,
    })
}

fn mismatch(dir: &Path, file: &str, what: &'static str, declared: usize, parsed: usize) -> Error {
    Error::CountMismatch {
        file: dir.join(file),
        what,
        declared,
        parsed,
    }
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let meta = read_meta(dir)?;
    let n = meta.nodes;

    let lines = Lines::read(dir, FEATURES_FILE)?;
    let mut it = lines.iter();
    let (hl, header) = it.next().ok_or_else(|| lines.err(1, "missing `N<TAB>D` header"))?;
    let h: Vec<&str> = header.split(['\t', ' ']).filter(|s| !s.is_empty()).collect();
    if h.len() != 2 {
        return Err(lines.err(hl, "header must be `N<TAB>D`"));
    }
    let (hn, hd) = (lines.index(hl, h[0], usize::MAX, "N")?, lines.index(hl, h[1], usize::MAX, "D")?);
    if hn != n {
        return Err(mismatch(dir, FEATURES_FILE, "nodes", n, hn));
    }
    if hd != meta.features {
        return Err(mismatch(dir, FEATURES_FILE, "features", meta.features, hd));
    }
    let mut features = DenseMatrix::zeros(n, hd);
    let mut seen = HashSet::new();
    for (ln, text) in it {
        let f = lines.fields(ln, text, &[3])?;
        let i = lines.index(ln, f[0], n, "node")?;
        let j = lines.index(ln, f[1], hd, "feature")?;
        if !seen.insert((i, j)) {
            return Err(lines.err(ln, format!("duplicate entry ({i}, {j})")));
        }
        features.set(i, j, lines.real(ln, f[2])?);
    }

    let lines = Lines::read(dir, EDGES_FILE)?;
    let mut edges = Vec::new();
    let mut weights = Vec::new();
    let mut seen = HashSet::new();
    for (ln, text) in lines.iter() {
        let f = lines.fields(ln, text, &[2, 3])?;
        let i = lines.index(ln, f[0], n, "node")?;
        let j = lines.index(ln, f[1], n, "node")?;
        if i == j {
            return Err(lines.err(ln, format!("self-loop at node {i}")));
        }
        if !seen.insert((i.min(j), i.max(j))) {
            return Err(lines.err(ln, format!("duplicate edge {i}-{j}")));
        }
        if f.len() == 3 {
            if weights.len() != edges.len() {
                return Err(lines.err(ln, "weights must be given for every edge or none"));
            }
            let w = lines.real(ln, f[2])?;
            if w <= 0.0 {
                return Err(lines.err(ln, "edge weight must be positive"));
            }
            weights.push(w);
        } else if !weights.is_empty() {
            return Err(lines.err(ln, "weights must be given for every edge or none"));
        }
        edges.push((i, j));
    }
    if edges.len() != meta.edges {
        return Err(mismatch(dir, EDGES_FILE, "edges", meta.edges, edges.len()));
    }
    let graph = if weights.is_empty() {
        Graph::new(n, edges)?
    } else {
        Graph::with_weights(n, edges, weights)?
    };

    let lines = Lines::read(dir, LABELS_FILE)?;
    let mut labels = vec![None; n];
    let mut count = 0;
    for (ln, text) in lines.iter() {
        let f = lines.fields(ln, text, &[2])?;
        let i = lines.index(ln, f[0], n, "node")?;
        let c = lines.index(ln, f[1], meta.classes, "class")?;
        if labels[i].replace(c).is_some() {
            return Err(lines.err(ln, format!("node {i} labelled twice")));
        }
        count += 1;
    }
    if count != n {
        return Err(mismatch(dir, LABELS_FILE, "labels", n, count));
    }
    let labels: Vec<usize> = labels.into_iter().map(|c| c.expect("every node labelled")).collect();

    let split_path = dir.join(SPLIT_FILE);
    let text = fs::read_to_string(&split_path).map_err(|_| Error::MissingFile(split_path.clone()))?;
    let split: Split = serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: split_path.clone(),
        line: e.line(),
        msg: e.to_string(),
    })?;

    let ds = Dataset {
        name: meta.name,
        graph,
        features,
        labels,
        split,
        class_count: meta.classes,
    };
    ds.validate()?;
    Ok(ds)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(body.as_bytes())?;
    Ok(())
}

/// Writes the canonical files, creating `dir` if needed.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    fs::create_dir_all(dir)?;
    let (n, d) = ds.features.shape();

    let mut s = String::new();
    for (e, &(i, j)) in ds.graph.edges().iter().enumerate() {
        match ds.graph.weights() {
            Some(w) => writeln!(s, "{i}\t{j}\t{}", w[e]),
            None => writeln!(s, "{i}\t{j}"),
        }
        .expect("writing to a String");
    }
    write_file(&dir.join(EDGES_FILE), &s)?;

    let mut s = format!("{n}\t{d}\n");
    for i in 0..n {
        for (j, &v) in ds.features.row(i).iter().enumerate() {
            if v != 0.0 {
                writeln!(s, "{i}\t{j}\t{v}").expect("writing to a String");
            }
        }
    }
    write_file(&dir.join(FEATURES_FILE), &s)?;

    let mut s = String::new();
    for (i, c) in ds.labels.iter().enumerate() {
        writeln!(s, "{i}\t{c}").expect("writing to a String");
    }
    write_file(&dir.join(LABELS_FILE), &s)?;

    write_file(&dir.join(SPLIT_FILE), &(serde_json::to_string(&ds.split)? + "\n"))?;

    let meta = format!(
        "name\t{}\nnodes\t{n}\nedges\t{}\nfeatures\t{d}\nclasses\t{}\n",
        ds.name,
        ds.graph.num_edges(),
        ds.class_count
    );
    write_file(&dir.join(META_FILE), &meta)
}

/// Stochastic-block-model graph with noisy cluster-indicator features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub nodes: usize,
    pub clusters: usize,
    /// Feature `j` indicates cluster `j mod clusters`; must be ≥ `clusters`.
    pub feature_dim: usize,
    pub intra_p: f64,
    pub inter_p: f64,
    /// Standard deviation of the Gaussian noise added to every feature.
    pub feature_noise: f64,
    pub seed: u64,
    pub train_per_class: usize,
    pub val_per_class: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            nodes: 300,
            clusters: 3,
            feature_dim: 30,
            intra_p: 0.1,
            inter_p: 0.01,
            feature_noise: 0.5,
            seed: 0,
            train_per_class: 20,
            val_per_class: 30,
        }
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    let bad = |msg: String| Err(Error::InvalidArgument(msg));
    if spec.clusters < 2 {
        return bad("synthetic data needs at least 2 clusters".into());
    }
    if spec.feature_dim < spec.clusters {
        return bad(format!("feature_dim {} < clusters {}", spec.feature_dim, spec.clusters));
    }
    for p in [spec.intra_p, spec.inter_p] {
        if !(0.0..=1.0).contains(&p) {
            return bad(format!("edge probability {p} not in [0, 1]"));
        }
    }
    if !(spec.feature_noise >= 0.0) {
        return bad("feature_noise must be >= 0".into());
    }
    let smallest = spec.nodes / spec.clusters;
    if smallest < spec.train_per_class + spec.val_per_class + 1 {
        return bad(format!(
            "clusters of {smallest} nodes cannot hold {} train + {} val + 1 test node",
            spec.train_per_class, spec.val_per_class
        ));
    }

    let mut rng = rng_from_seed(spec.seed);
    let n = spec.nodes;
    let labels: Vec<usize> = (0..n).map(|i| i % spec.clusters).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { spec.intra_p } else { spec.inter_p };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let features = DenseMatrix::from_fn(n, spec.feature_dim, |i, j| {
        let base = if j % spec.clusters == labels[i] { 1.0 } else { 0.0 };
        let noise: f64 = StandardNormal.sample(&mut rng);
        base + spec.feature_noise * noise
    });

    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for c in 0..spec.clusters {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        let (train, rest) = members.split_at(spec.train_per_class);
        let (val, test) = rest.split_at(spec.val_per_class);
        split.train.extend(train);
        split.val.extend(val);
        split.test.extend(test);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();

    let ds = Dataset {
        name: format!("sbm-{}x{}-s{}", spec.nodes, spec.clusters, spec.seed),
        graph: Graph::new(n, edges)?,
        features,
        labels,
        split,
        class_count: spec.clusters,
    };
    ds.validate()?;
    Ok(ds)
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    /// Missing pattern, or `none` for methods that ignore it.
    pub pattern: String,
    pub mr: f64,
    pub method: String,
    pub seed: u64,
    /// Test accuracy; empty when the run failed.
    pub accuracy: Option<f64>,
    pub wall_time_s: f64,
    pub epochs: usize,
}

pub const RESULTS_HEADER: [&str; 8] = ["dataset", "pattern", "mr", "method", "seed", "accuracy", "wall_time_s", "epochs"];

pub fn write_results<W: std::io::Write>(w: W, rows: &[ResultRow]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(RESULTS_HEADER)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_results<R: std::io::Read>(r: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RESULTS_HEADER {
        return Err(Error::InvalidArgument(format!("unexpected results header {header:?}")));
    }
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}
