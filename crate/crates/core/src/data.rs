//! Regression inputs: datasets, group partitions, lag matrices, MIDAS
//! dictionaries and standardization.

use std::collections::HashSet;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Response vector and time-aligned design matrix.
///
/// Rows are ordered oldest first. All entries are finite and column names are
/// unique; both are checked on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    y: Array1<f64>,
    x: Array2<f64>,
    column_names: Vec<String>,
    dates: Option<Vec<String>>,
}

impl TimeSeriesDataset {
    pub fn new(y: Array1<f64>, x: Array2<f64>, column_names: Vec<String>) -> Result<Self> {
        let (t, p) = x.dim();
        if t == 0 || p == 0 {
            return Err(Error::EmptyInput(format!("design matrix is {t}x{p}")));
        }
        if y.len() != t {
            return Err(Error::Dimension(format!(
                "response has length {} but design has {t} rows",
                y.len()
            )));
        }
        if column_names.len() != p {
            return Err(Error::Dimension(format!(
                "{} column names for {p} columns",
                column_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidData(format!(
                    "duplicate column name '{name}'"
                )));
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "response row {i} is not finite"
            )));
        }
        for ((i, j), v) in x.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::InvalidData(format!(
                    "entry ({i}, '{}') is not finite",
                    column_names[j]
                )));
            }
        }
        Ok(Self {
            y,
            x,
            column_names,
            dates: None,
        })
    }

    /// Attach row timestamps (ISO-8601 strings); they must be strictly increasing.
    pub fn with_dates(mut self, dates: Vec<String>) -> Result<Self> {
        if dates.len() != self.n_obs() {
            return Err(Error::Dimension(format!(
                "{} dates for {} rows",
                dates.len(),
                self.n_obs()
            )));
        }
        for (i, w) in dates.windows(2).enumerate() {
            if w[0] >= w[1] {
                return Err(Error::InvalidData(format!(
                    "rows not strictly time-ordered at row {}: '{}' then '{}'",
                    i + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        self.dates = Some(dates);
        Ok(self)
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn dates(&self) -> Option<&[String]> {
        self.dates.as_deref()
    }

    /// Sample size T.
    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    /// Number of covariates p.
    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    /// Rows `range` as a new dataset.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_obs() {
            return Err(Error::Dimension(format!(
                "row range {start}..{end} invalid for {} rows",
                self.n_obs()
            )));
        }
        let mut out = Self::new(
            self.y.slice(s![start..end]).to_owned(),
            self.x.slice(s![start..end, ..]).to_owned(),
            self.column_names.clone(),
        )?;
        if let Some(d) = &self.dates {
            out.dates = Some(d[start..end].to_vec());
        }
        Ok(out)
    }
}

/// A named set of column indices (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub name: String,
    pub indices: Vec<usize>,
}

/// Partition of the columns `0..p` into named, nonempty groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStructure {
    groups: Vec<Group>,
    p: usize,
}

impl GroupStructure {
    pub fn new(groups: Vec<Group>, p: usize) -> Result<Self> {
        let mut owner: Vec<Option<usize>> = vec![None; p];
        let mut names = HashSet::new();
        for (g, group) in groups.iter().enumerate() {
            if group.indices.is_empty() {
                return Err(Error::InvalidGroups(format!(
                    "group '{}' is empty",
                    group.name
                )));
            }
            if !names.insert(group.name.as_str()) {
                return Err(Error::InvalidGroups(format!(
                    "group name '{}' used twice",
                    group.name
                )));
            }
            for &j in &group.indices {
                if j >= p {
                    return Err(Error::InvalidGroups(format!(
                        "index {j} in group '{}' is out of range for p = {p}",
                        group.name
                    )));
                }
                if let Some(prev) = owner[j] {
                    return Err(Error::InvalidGroups(format!(
                        "index {j} appears in both '{}' and '{}'",
                        groups[prev].name, group.name
                    )));
                }
                owner[j] = Some(g);
            }
        }
        if let Some(j) = owner.iter().position(Option::is_none) {
            return Err(Error::InvalidGroups(format!(
                "index {j} is not in any group"
            )));
        }
        Ok(Self { groups, p })
    }

    /// Every column in its own group (plain LASSO structure).
    pub fn singletons(p: usize) -> Self {
        let groups = (0..p)
            .map(|j| Group {
                name: format!("x{j}"),
                indices: vec![j],
            })
            .collect();
        Self { groups, p }
    }

    /// Consecutive groups of the given sizes.
    pub fn contiguous(sizes: &[usize]) -> Result<Self> {
        let mut start = 0;
        let mut groups = Vec::with_capacity(sizes.len());
        for (g, &size) in sizes.iter().enumerate() {
            groups.push(Group {
                name: format!("g{g}"),
                indices: (start..start + size).collect(),
            });
            start += size;
        }
        Self::new(groups, start)
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.p
    }

    pub fn by_name(&self, name: &str) -> Option<&Group> {
        self.groups.iter().find(|g| g.name == name)
    }
}

/// Discrete Legendre lag dictionary: an `L x (d+1)` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MidasDictionary {
    weights: Array2<f64>,
    degree: usize,
}

impl MidasDictionary {
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn lag_count(&self) -> usize {
        self.weights.nrows()
    }
}

/// Build the shifted-Legendre dictionary on the grid `u_l = (l-1)/(L-1)`.
///
/// The raw polynomials `P_k(2u - 1)` are orthogonalized on the grid in order
/// of degree and scaled so every column has squared norm `L` (unit mean
/// square). Column 0 therefore stays all ones and column 1 is exactly the
/// scaled `2u - 1`.
pub fn legendre_dictionary(degree: usize, lag_count: usize) -> Result<MidasDictionary> {
    if lag_count < degree + 1 {
        return Err(Error::RankDeficient(format!(
            "{lag_count} lags cannot support a degree-{degree} dictionary"
        )));
    }
    let l = lag_count;
    let mut w = Array2::<f64>::zeros((l, degree + 1));
    for row in 0..l {
        let u = if l == 1 {
            0.0
        } else {
            row as f64 / (l - 1) as f64
        };
        let x = 2.0 * u - 1.0;
        let (mut prev, mut cur) = (1.0, x);
        w[[row, 0]] = 1.0;
        if degree >= 1 {
            w[[row, 1]] = x;
        }
        for n in 1..degree {
            let next = ((2 * n + 1) as f64 * x * cur - n as f64 * prev) / (n + 1) as f64;
            prev = cur;
            cur = next;
            w[[row, n + 1]] = next;
        }
    }
    let target = (l as f64).sqrt();
    for k in 0..=degree {
        // two passes of modified Gram-Schmidt for stability
        for _ in 0..2 {
            for prev in 0..k {
                let proj = w.column(k).dot(&w.column(prev)) / l as f64;
                let basis = w.column(prev).to_owned();
                w.column_mut(k).scaled_add(-proj, &basis);
            }
        }
        let norm = w.column(k).dot(&w.column(k)).sqrt();
        if norm <= 1e-12 * target {
            return Err(Error::RankDeficient(format!(
                "dictionary column {k} vanished on a {l}-point grid"
            )));
        }
        w.column_mut(k).mapv_inplace(|v| v * target / norm);
    }
    Ok(MidasDictionary { weights: w, degree })
}

/// Aggregate a block of high-frequency lags: `lag_block * weights / L`.
pub fn aggregate_midas(lag_block: ArrayView2<f64>, dict: &MidasDictionary) -> Result<Array2<f64>> {
    if lag_block.ncols() != dict.lag_count() {
        return Err(Error::Dimension(format!(
            "lag block has {} columns but dictionary expects {}",
            lag_block.ncols(),
            dict.lag_count()
        )));
    }
    Ok(lag_block.dot(&dict.weights) / dict.lag_count() as f64)
}

/// Lag matrix of a single series.
///
/// Row `i` holds `series[i + lags - 1 - j]` in column `j`, so column 0 is the
/// most recent lag of target `series[i + lags]`.
pub fn build_lag_matrix(series: ArrayView1<f64>, lags: usize) -> Result<Array2<f64>> {
    let t = series.len();
    if lags == 0 || lags >= t {
        return Err(Error::Dimension(format!(
            "cannot take {lags} lags of a series of length {t}"
        )));
    }
    Ok(Array2::from_shape_fn((t - lags, lags), |(i, j)| {
        series[i + lags - 1 - j]
    }))
}

/// Targets aligned with [`build_lag_matrix`] rows.
pub fn lag_targets(series: ArrayView1<f64>, lags: usize) -> Result<Array1<f64>> {
    if lags == 0 || lags >= series.len() {
        return Err(Error::Dimension(format!(
            "cannot take {lags} lags of a series of length {}",
            series.len()
        )));
    }
    Ok(series.slice(s![lags..]).to_owned())
}

/// Statistics removed by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationRecord {
    pub response_mean: f64,
    pub column_means: Vec<f64>,
    pub column_sds: Vec<f64>,
}

impl StandardizationRecord {
    /// Undo the transform.
    pub fn invert(&self, data: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
        self.check_width(data)?;
        let y = data.y().mapv(|v| v + self.response_mean);
        let mut x = data.x().clone();
        for (j, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
            let (m, sd) = (self.column_means[j], self.column_sds[j]);
            col.mapv_inplace(|v| v * sd + m);
        }
        rebuild(data, y, x)
    }

    /// Apply recorded statistics to another dataset (e.g. a held-out period).
    pub fn apply(&self, data: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
        self.check_width(data)?;
        let y = data.y().mapv(|v| v - self.response_mean);
        let mut x = data.x().clone();
        for (j, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
            let (m, sd) = (self.column_means[j], self.column_sds[j]);
            col.mapv_inplace(|v| (v - m) / sd);
        }
        rebuild(data, y, x)
    }

    fn check_width(&self, data: &TimeSeriesDataset) -> Result<()> {
        if data.n_features() != self.column_means.len() {
            return Err(Error::Dimension(format!(
                "record covers {} columns, dataset has {}",
                self.column_means.len(),
                data.n_features()
            )));
        }
        Ok(())
    }
}

fn rebuild(data: &TimeSeriesDataset, y: Array1<f64>, x: Array2<f64>) -> Result<TimeSeriesDataset> {
    let out = TimeSeriesDataset::new(y, x, data.column_names().to_vec())?;
    match data.dates() {
        Some(d) => out.with_dates(d.to_vec()),
        None => Ok(out),
    }
}

/// Column means and population standard deviations; errors on a constant column.
pub fn column_moments(x: ArrayView2<f64>, names: &[String]) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = x.nrows() as f64;
    let mut means = Vec::with_capacity(x.ncols());
    let mut sds = Vec::with_capacity(x.ncols());
    for (j, col) in x.axis_iter(Axis(1)).enumerate() {
        let m = col.sum() / t;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / t;
        let sd = var.sqrt();
        if !(sd > 1e-12 * (1.0 + m.abs())) {
            let name = names.get(j).cloned().unwrap_or_else(|| format!("#{j}"));
            return Err(Error::DegenerateColumn { name });
        }
        means.push(m);
        sds.push(sd);
    }
    Ok((means, sds))
}

/// Demean the response and scale every column to mean 0 and unit
/// population standard deviation.
pub fn standardize(data: &TimeSeriesDataset) -> Result<(TimeSeriesDataset, StandardizationRecord)> {
    let (column_means, column_sds) = column_moments(data.x().view(), data.column_names())?;
    let record = StandardizationRecord {
        response_mean: data.y().sum() / data.n_obs() as f64,
        column_means,
        column_sds,
    };
    let out = record.apply(data)?;
    Ok((out, record))
}

/// Scale a bare matrix column-wise to mean 0 and unit population sd.
pub fn standardize_columns(x: ArrayView2<f64>, names: &[String]) -> Result<Array2<f64>> {
    let (means, sds) = column_moments(x, names)?;
    let mut out = x.to_owned();
    for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        col.mapv_inplace(|v| (v - means[j]) / sds[j]);
    }
    Ok(out)
}
