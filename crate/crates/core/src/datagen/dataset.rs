use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Feature matrix with class labels, optional subclass tags and stable ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    n_classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    subclasses: Vec<Option<usize>>,
    ids: Vec<u64>,
}

impl LabeledDataset {
    /// Builds a full dataset: `n ≥ C`, every class present, unique ids.
    pub fn new(
        dim: usize,
        n_classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
        subclasses: Vec<Option<usize>>,
        ids: Vec<u64>,
    ) -> Result<Self> {
        let ds = Self::from_parts(dim, n_classes, features, labels, subclasses, ids)?;
        if ds.len() < n_classes {
            return Err(Error::InvalidDataset(format!(
                "{} samples for {} classes",
                ds.len(),
                n_classes
            )));
        }
        let counts = ds.class_counts();
        if let Some(missing) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidDataset(format!(
                "class {missing} has no sample"
            )));
        }
        Ok(ds)
    }

    /// Like [`new`](Self::new) but allows absent classes; used for subsets
    /// such as a retain set after class forgetting.
    fn from_parts(
        dim: usize,
        n_classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
        subclasses: Vec<Option<usize>>,
        ids: Vec<u64>,
    ) -> Result<Self> {
        let n = labels.len();
        if dim == 0 || n_classes == 0 {
            return Err(Error::InvalidDataset(
                "zero dimension or class count".into(),
            ));
        }
        if features.len() != n * dim {
            return Err(Error::DimensionMismatch {
                expected: n * dim,
                got: features.len(),
            });
        }
        if subclasses.len() != n || ids.len() != n {
            return Err(Error::InvalidDataset("column lengths differ".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::InvalidDataset(format!("label {bad} out of range")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features"));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(*id) {
                return Err(Error::InvalidDataset(format!("duplicate sample id {id}")));
            }
        }
        Ok(Self {
            dim,
            n_classes,
            features,
            labels,
            subclasses,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn subclass(&self, i: usize) -> Option<usize> {
        self.subclasses[i]
    }

    pub fn id(&self, i: usize) -> u64 {
        self.ids[i]
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    pub fn index_by_id(&self) -> HashMap<u64, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i))
            .collect()
    }

    /// Rows at `indices`, in that order. Classes may end up absent.
    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        LabeledDataset {
            dim: self.dim,
            n_classes: self.n_classes,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            subclasses: indices.iter().map(|&i| self.subclasses[i]).collect(),
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
        }
    }

    /// Rows whose id satisfies `keep`, in dataset order.
    pub fn filter_ids(&self, mut keep: impl FnMut(u64) -> bool) -> LabeledDataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(self.ids[i])).collect();
        self.select(&idx)
    }

    /// Same rows with features replaced (e.g. after a sketch).
    pub fn with_features(&self, dim: usize, features: Vec<f64>) -> Result<LabeledDataset> {
        Self::from_parts(
            dim,
            self.n_classes,
            features,
            self.labels.clone(),
            self.subclasses.clone(),
            self.ids.clone(),
        )
    }

    /// Same rows with labels replaced.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<LabeledDataset> {
        Self::from_parts(
            self.dim,
            self.n_classes,
            self.features.clone(),
            labels,
            self.subclasses.clone(),
            self.ids.clone(),
        )
    }

    /// Concatenation; ids must stay unique.
    pub fn concat(&self, other: &LabeledDataset) -> Result<LabeledDataset> {
        if other.dim != self.dim || other.n_classes != self.n_classes {
            return Err(Error::InvalidDataset("incompatible datasets".into()));
        }
        let mut features = self.features.clone();
        features.extend_from_slice(&other.features);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let mut subclasses = self.subclasses.clone();
        subclasses.extend_from_slice(&other.subclasses);
        let mut ids = self.ids.clone();
        ids.extend_from_slice(&other.ids);
        Self::from_parts(self.dim, self.n_classes, features, labels, subclasses, ids)
    }

    /// Text form: header `n d C`, then `id label subclass f_1 .. f_d` per row.
    /// A missing subclass is written as `-`. Floats use the shortest
    /// representation that round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.len() * (16 + 24 * self.dim));
        let _ = writeln!(out, "{} {} {}", self.len(), self.dim, self.n_classes);
        for i in 0..self.len() {
            let _ = write!(out, "{} {} ", self.ids[i], self.labels[i]);
            match self.subclasses[i] {
                Some(s) => {
                    let _ = write!(out, "{s}");
                }
                None => out.push('-'),
            }
            for v in self.row(i) {
                let _ = write!(out, " {v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let ctx = "dataset";
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(ctx, "missing header"))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(ctx, format!("header: {e}")))?;
        let [n, d, c] = head[..] else {
            return Err(Error::parse(ctx, "header must be `n d C`"));
        };
        let mut features = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        let mut subclasses = Vec::with_capacity(n);
        let mut ids = Vec::with_capacity(n);
        for (lineno, line) in lines.enumerate() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 3 + d {
                return Err(Error::parse(
                    ctx,
                    format!(
                        "row {lineno}: expected {} fields, got {}",
                        3 + d,
                        toks.len()
                    ),
                ));
            }
            let bad = |what: &str| Error::parse(ctx, format!("row {lineno}: bad {what}"));
            ids.push(toks[0].parse().map_err(|_| bad("id"))?);
            labels.push(toks[1].parse().map_err(|_| bad("label"))?);
            subclasses.push(match toks[2] {
                "-" => None,
                s => Some(s.parse().map_err(|_| bad("subclass"))?),
            });
            for t in &toks[3..] {
                features.push(t.parse::<f64>().map_err(|_| bad("feature"))?);
            }
        }
        if labels.len() != n {
            return Err(Error::parse(
                ctx,
                format!("header says {n} rows, found {}", labels.len()),
            ));
        }
        Self::new(d, c, features, labels, subclasses, ids)
    }

    /// SHA-256 of the text form, hex encoded.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
