//! Directed-dyad panel data model.
//!
//! A [`DyadDataset`] holds one outcome `y_ij >= 0` and one regressor vector
//! `r_ij` for every ordered pair of distinct nodes. Panels must be complete:
//! every one of the `N(N-1)` ordered pairs is present exactly once.
//!
//! Storage is dense (`N x N` outcomes, `N x N x p` regressors) with the
//! diagonal left unused, so `(i, j)` lookup is O(1).

use std::collections::HashMap;

use thiserror::Error;

/// Name given to the all-ones column prepended by [`DyadDataset::with_intercept`].
pub const INTERCEPT: &str = "intercept";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("a dyadic panel needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("duplicate node label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown node label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate record for dyad ({ego}, {alter})")]
    DuplicateDyad { ego: String, alter: String },
    #[error("self-loop record for node `{0}`")]
    SelfLoop(String),
    #[error("incomplete panel: missing record for dyad ({ego}, {alter}); {missing} ordered pair(s) missing in total")]
    IncompletePanel {
        ego: String,
        alter: String,
        missing: usize,
    },
    #[error("negative outcome {value} for dyad ({ego}, {alter})")]
    NegativeOutcome {
        ego: String,
        alter: String,
        value: f64,
    },
    #[error("non-finite value in {field} for dyad ({ego}, {alter})")]
    NonFiniteValue {
        ego: String,
        alter: String,
        field: String,
    },
    #[error("regressor vector for dyad ({ego}, {alter}) has length {found}, expected {expected}")]
    DimensionMismatch {
        ego: String,
        alter: String,
        expected: usize,
        found: usize,
    },
    #[error("no row for node `{0}` in the node table")]
    MissingNodeRow(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
}

/// Coefficient vector aligned with a dataset's regressor names.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta(Vec<f64>);

impl Theta {
    /// Returns `None` if any coefficient is not finite.
    pub fn new(coefficients: Vec<f64>) -> Option<Self> {
        coefficients
            .iter()
            .all(|v| v.is_finite())
            .then_some(Theta(coefficients))
    }

    pub fn zeros(p: usize) -> Self {
        Theta(vec![0.0; p])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for Theta {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

/// One input record for [`build_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct DyadRecord {
    pub ego: String,
    pub alter: String,
    pub y: f64,
    pub r: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DyadDataset {
    node_labels: Vec<String>,
    regressor_names: Vec<String>,
    y: Vec<f64>,
    r: Vec<f64>,
}

impl DyadDataset {
    /// Builds a dataset from dense index-ordered storage.
    ///
    /// `y` has length `N*N` and `r` length `N*N*p`, both indexed by
    /// `i*N + j`; diagonal entries are ignored (and zeroed).
    pub fn from_dense(
        node_labels: Vec<String>,
        regressor_names: Vec<String>,
        mut y: Vec<f64>,
        mut r: Vec<f64>,
    ) -> Result<Self, DataError> {
        let n = node_labels.len();
        check_labels(&node_labels)?;
        let p = regressor_names.len();
        assert_eq!(y.len(), n * n, "outcome storage must be N*N");
        assert_eq!(r.len(), n * n * p, "regressor storage must be N*N*p");
        for i in 0..n {
            y[i * n + i] = 0.0;
            r[(i * n + i) * p..(i * n + i + 1) * p].fill(0.0);
            for j in (0..n).filter(|&j| j != i) {
                let idx = i * n + j;
                validate_values(
                    &node_labels[i],
                    &node_labels[j],
                    y[idx],
                    &r[idx * p..(idx + 1) * p],
                    &regressor_names,
                )?;
            }
        }
        Ok(DyadDataset {
            node_labels,
            regressor_names,
            y,
            r,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_labels.len()
    }

    /// Number of ordered pairs, `N(N-1)`.
    pub fn n_dyads(&self) -> usize {
        let n = self.n_nodes();
        n * (n - 1)
    }

    /// Number of regressors `p`.
    pub fn n_regressors(&self) -> usize {
        self.regressor_names.len()
    }

    pub fn node_labels(&self) -> &[String] {
        &self.node_labels
    }

    pub fn regressor_names(&self) -> &[String] {
        &self.regressor_names
    }

    pub fn node_index(&self, label: &str) -> Option<usize> {
        self.node_labels.iter().position(|l| l == label)
    }

    /// Outcome of the ordered pair `(i, j)`, `i != j`.
    #[inline]
    pub fn y(&self, i: usize, j: usize) -> f64 {
        debug_assert_ne!(i, j);
        self.y[i * self.n_nodes() + j]
    }

    /// Regressor vector of the ordered pair `(i, j)`, `i != j`.
    #[inline]
    pub fn r(&self, i: usize, j: usize) -> &[f64] {
        debug_assert_ne!(i, j);
        let p = self.n_regressors();
        let idx = i * self.n_nodes() + j;
        &self.r[idx * p..(idx + 1) * p]
    }

    /// Ordered pairs in lexicographic `(i, j)` index order.
    pub fn dyads(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n_nodes();
        (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
    }

    /// Records in lexicographic index order; inverse of [`build_dataset`].
    pub fn records(&self) -> impl Iterator<Item = DyadRecord> + '_ {
        self.dyads().map(|(i, j)| DyadRecord {
            ego: self.node_labels[i].clone(),
            alter: self.node_labels[j].clone(),
            y: self.y(i, j),
            r: self.r(i, j).to_vec(),
        })
    }

    pub fn mean_outcome(&self) -> f64 {
        self.dyads().map(|(i, j)| self.y(i, j)).sum::<f64>() / self.n_dyads() as f64
    }

    /// Returns a copy with every outcome multiplied by `factor`.
    pub fn scale_outcomes(&self, factor: f64) -> Result<Self, DataError> {
        let y = self.y.iter().map(|v| v * factor).collect();
        DyadDataset::from_dense(
            self.node_labels.clone(),
            self.regressor_names.clone(),
            y,
            self.r.clone(),
        )
    }

    /// Index of the intercept column, if the first regressor is one.
    pub fn intercept_column(&self) -> Option<usize> {
        (self.regressor_names.first().map(String::as_str) == Some(INTERCEPT)).then_some(0)
    }

    /// Prepends an all-ones regressor named `intercept`.
    pub fn with_intercept(&self) -> Self {
        let n = self.n_nodes();
        let p = self.n_regressors();
        let mut names = Vec::with_capacity(p + 1);
        names.push(INTERCEPT.to_string());
        names.extend(self.regressor_names.iter().cloned());
        let mut r = vec![0.0; n * n * (p + 1)];
        for (i, j) in self.dyads() {
            let idx = i * n + j;
            let dst = &mut r[idx * (p + 1)..(idx + 1) * (p + 1)];
            dst[0] = 1.0;
            dst[1..].copy_from_slice(self.r(i, j));
        }
        DyadDataset {
            node_labels: self.node_labels.clone(),
            regressor_names: names,
            y: self.y.clone(),
            r,
        }
    }

    /// Rebuilds the dataset with node `i` moved to position `perm[i]`.
    ///
    /// Labels travel with their node, so the result describes the same panel
    /// under a different internal index order.
    pub fn permute_nodes(&self, perm: &[usize]) -> Self {
        let n = self.n_nodes();
        let p = self.n_regressors();
        assert_eq!(perm.len(), n);
        let mut labels = vec![String::new(); n];
        for (i, &pi) in perm.iter().enumerate() {
            labels[pi] = self.node_labels[i].clone();
        }
        let mut y = vec![0.0; n * n];
        let mut r = vec![0.0; n * n * p];
        for (i, j) in self.dyads() {
            let idx = perm[i] * n + perm[j];
            y[idx] = self.y(i, j);
            r[idx * p..(idx + 1) * p].copy_from_slice(self.r(i, j));
        }
        DyadDataset {
            node_labels: labels,
            regressor_names: self.regressor_names.clone(),
            y,
            r,
        }
    }
}

fn check_labels(labels: &[String]) -> Result<HashMap<&str, usize>, DataError> {
    if labels.len() < 2 {
        return Err(DataError::TooFewNodes(labels.len()));
    }
    let mut index = HashMap::with_capacity(labels.len());
    for (k, label) in labels.iter().enumerate() {
        if index.insert(label.as_str(), k).is_some() {
            return Err(DataError::DuplicateLabel(label.clone()));
        }
    }
    Ok(index)
}

fn validate_values(
    ego: &str,
    alter: &str,
    y: f64,
    r: &[f64],
    names: &[String],
) -> Result<(), DataError> {
    let non_finite = |field: &str| DataError::NonFiniteValue {
        ego: ego.to_string(),
        alter: alter.to_string(),
        field: field.to_string(),
    };
    if !y.is_finite() {
        return Err(non_finite("outcome"));
    }
    if y < 0.0 {
        return Err(DataError::NegativeOutcome {
            ego: ego.to_string(),
            alter: alter.to_string(),
            value: y,
        });
    }
    if let Some(k) = r.iter().position(|v| !v.is_finite()) {
        return Err(non_finite(&names[k]));
    }
    Ok(())
}

/// Validates records against the node labels and assembles a complete panel.
///
/// Node indices follow the order of `node_labels`.
pub fn build_dataset<I>(
    node_labels: Vec<String>,
    regressor_names: Vec<String>,
    records: I,
) -> Result<DyadDataset, DataError>
where
    I: IntoIterator<Item = DyadRecord>,
{
    let index = check_labels(&node_labels)?;
    let n = node_labels.len();
    let p = regressor_names.len();
    let mut seen = vec![false; n * n];
    let mut y = vec![0.0; n * n];
    let mut r = vec![0.0; n * n * p];

    for rec in records {
        let lookup = |label: &str| {
            index
                .get(label)
                .copied()
                .ok_or_else(|| DataError::UnknownLabel(label.to_string()))
        };
        let i = lookup(&rec.ego)?;
        let j = lookup(&rec.alter)?;
        if i == j {
            return Err(DataError::SelfLoop(rec.ego));
        }
        if rec.r.len() != p {
            return Err(DataError::DimensionMismatch {
                ego: rec.ego,
                alter: rec.alter,
                expected: p,
                found: rec.r.len(),
            });
        }
        let idx = i * n + j;
        if seen[idx] {
            return Err(DataError::DuplicateDyad {
                ego: rec.ego,
                alter: rec.alter,
            });
        }
        validate_values(&rec.ego, &rec.alter, rec.y, &rec.r, &regressor_names)?;
        seen[idx] = true;
        y[idx] = rec.y;
        r[idx * p..(idx + 1) * p].copy_from_slice(&rec.r);
    }

    let missing: Vec<usize> = (0..n * n)
        .filter(|&idx| idx / n != idx % n && !seen[idx])
        .collect();
    if let Some(&first) = missing.first() {
        return Err(DataError::IncompletePanel {
            ego: node_labels[first / n].clone(),
            alter: node_labels[first % n].clone(),
            missing: missing.len(),
        });
    }

    Ok(DyadDataset {
        node_labels,
        regressor_names,
        y,
        r,
    })
}

/// Numeric node attributes keyed by node label.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable {
    columns: Vec<String>,
    labels: Vec<String>,
    rows: HashMap<String, Vec<f64>>,
}

impl NodeTable {
    pub fn new(columns: Vec<String>) -> Self {
        NodeTable {
            columns,
            labels: Vec::new(),
            rows: HashMap::new(),
        }
    }

    /// Adds a row; fails on a repeated label.
    pub fn insert(&mut self, label: String, values: Vec<f64>) -> Result<(), DataError> {
        assert_eq!(values.len(), self.columns.len(), "row width must match columns");
        if self.rows.contains_key(&label) {
            return Err(DataError::DuplicateLabel(label));
        }
        self.labels.push(label.clone());
        self.rows.insert(label, values);
        Ok(())
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    /// Labels in insertion order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, label: &str) -> Option<&[f64]> {
        self.rows.get(label).map(Vec::as_slice)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Appends ego values of `ego_cols` then alter values of `alter_cols` to every
/// regressor vector. New columns are named `<col>_ego` and `<col>_alter`.
pub fn expand_node_covariates(
    dataset: &DyadDataset,
    table: &NodeTable,
    ego_cols: &[String],
    alter_cols: &[String],
) -> Result<DyadDataset, DataError> {
    let resolve = |cols: &[String]| -> Result<Vec<usize>, DataError> {
        cols.iter()
            .map(|c| {
                table
                    .column_index(c)
                    .ok_or_else(|| DataError::UnknownColumn(c.clone()))
            })
            .collect()
    };
    let ego_idx = resolve(ego_cols)?;
    let alter_idx = resolve(alter_cols)?;

    let node_rows = dataset
        .node_labels()
        .iter()
        .map(|l| table.row(l).ok_or_else(|| DataError::MissingNodeRow(l.clone())))
        .collect::<Result<Vec<_>, _>>()?;

    let mut names = dataset.regressor_names().to_vec();
    names.extend(ego_cols.iter().map(|c| format!("{c}_ego")));
    names.extend(alter_cols.iter().map(|c| format!("{c}_alter")));

    let n = dataset.n_nodes();
    let q = names.len();
    let mut y = vec![0.0; n * n];
    let mut r = vec![0.0; n * n * q];
    for (i, j) in dataset.dyads() {
        let idx = i * n + j;
        y[idx] = dataset.y(i, j);
        let dst = &mut r[idx * q..(idx + 1) * q];
        let base = dataset.r(i, j);
        dst[..base.len()].copy_from_slice(base);
        let extra = ego_idx
            .iter()
            .map(|&c| node_rows[i][c])
            .chain(alter_idx.iter().map(|&c| node_rows[j][c]));
        for (slot, v) in dst[base.len()..].iter_mut().zip(extra) {
            *slot = v;
        }
    }
    DyadDataset::from_dense(dataset.node_labels().to_vec(), names, y, r)
}
