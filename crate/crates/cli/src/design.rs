//! From a CSV table to a standardized regression design with groups.

use std::collections::BTreeMap;
use std::path::Path;

use hdgranger::data::{
    aggregate_midas, legendre_dictionary, standardize, standardize_columns, Group,
};
use hdgranger::io::CsvTable;
use hdgranger::{GroupStructure, StandardizationRecord, TimeSeriesDataset};
use ndarray::{s, Array1, Array2};

use crate::config::DesignConfig;
use crate::error::{CliError, CliResult};

/// Standardized design with its group partition.
#[derive(Debug, Clone)]
pub struct Design {
    pub data: TimeSeriesDataset,
    pub groups: GroupStructure,
    pub record: StandardizationRecord,
    /// Leading rows consumed by lags.
    pub dropped_rows: usize,
}

impl Design {
    /// Column indices of a named group.
    pub fn group_indices(&self, name: &str) -> CliResult<Vec<usize>> {
        self.groups
            .by_name(name)
            .map(|g| g.indices.clone())
            .ok_or_else(|| {
                let known: Vec<&str> = self
                    .groups
                    .groups()
                    .iter()
                    .map(|g| g.name.as_str())
                    .collect();
                CliError::config(format!(
                    "unknown group '{name}'; available: {}",
                    known.join(", ")
                ))
            })
    }

    pub fn column_names(&self, indices: &[usize]) -> Vec<String> {
        indices
            .iter()
            .map(|&j| self.data.column_names()[j].clone())
            .collect()
    }
}

/// Groups sidecar: group name to series or column names.
pub fn read_group_file(path: &Path) -> CliResult<BTreeMap<String, Vec<String>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::config(format!(
            "{}: line {}, column {}: expected an object of name -> [columns]: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

fn hf_block(table: &CsvTable, prefix: &str) -> CliResult<Vec<usize>> {
    let mut found: Vec<(usize, usize)> = table
        .names
        .iter()
        .enumerate()
        .filter_map(|(c, n)| {
            n.strip_prefix(prefix)
                .and_then(|rest| rest.strip_prefix('_'))
                .and_then(|k| k.parse::<usize>().ok())
                .map(|k| (k, c))
        })
        .collect();
    if found.is_empty() {
        return Err(CliError::config(format!(
            "no columns '{prefix}_1', '{prefix}_2', ... for high-frequency block '{prefix}'"
        )));
    }
    found.sort();
    for (i, (k, _)) in found.iter().enumerate() {
        if *k != i + 1 {
            return Err(CliError::config(format!(
                "high-frequency block '{prefix}' must have lags 1..L without gaps; missing '{prefix}_{}'",
                i + 1
            )));
        }
    }
    Ok(found.into_iter().map(|(_, c)| c).collect())
}

struct Columns {
    names: Vec<String>,
    groups: Vec<String>,
    values: Vec<Array1<f64>>,
}

impl Columns {
    fn push(&mut self, name: String, group: &str, values: Array1<f64>) {
        self.names.push(name);
        self.groups.push(group.to_string());
        self.values.push(values);
    }
}

/// Build lags, aggregate high-frequency blocks, demean the response,
/// standardize covariates and resolve groups.
pub fn build_design(
    table: &CsvTable,
    cfg: &DesignConfig,
    user_groups: Option<&BTreeMap<String, Vec<String>>>,
) -> CliResult<Design> {
    let resp = table.column(&cfg.response).ok_or_else(|| {
        CliError::config(format!(
            "response '{}' is not a column of the data",
            cfg.response
        ))
    })?;
    let mut hf_blocks = Vec::new();
    let mut in_block = vec![false; table.names.len()];
    for prefix in &cfg.hf {
        let cols = hf_block(table, prefix)?;
        if cols.len() < cfg.legendre_degree + 1 {
            return Err(CliError::config(format!(
                "high-frequency block '{prefix}' has {} lags, degree {} needs at least {}",
                cols.len(),
                cfg.legendre_degree,
                cfg.legendre_degree + 1
            )));
        }
        for &c in &cols {
            if c == resp {
                return Err(CliError::config(format!(
                    "response '{}' is inside block '{prefix}'",
                    cfg.response
                )));
            }
            if in_block[c] {
                return Err(CliError::config(format!(
                    "column '{}' is in two blocks",
                    table.names[c]
                )));
            }
            in_block[c] = true;
        }
        hf_blocks.push((prefix.clone(), cols));
    }

    let t_raw = table.values.nrows();
    let offset = cfg.lags.max(cfg.ar_lags);
    if offset + 2 > t_raw {
        return Err(CliError::config(format!(
            "{offset} lags leave fewer than 2 of {t_raw} rows"
        )));
    }
    let rows = offset..t_raw;
    let lagged = |c: usize, k: usize| {
        table
            .values
            .slice(s![rows.start - k..rows.end - k, c])
            .to_owned()
    };

    let mut cols = Columns {
        names: Vec::new(),
        groups: Vec::new(),
        values: Vec::new(),
    };
    for k in 1..=cfg.ar_lags {
        cols.push(
            format!("{}_lag{k}", cfg.response),
            &cfg.response,
            lagged(resp, k),
        );
    }
    for (c, name) in table.names.iter().enumerate() {
        if c == resp || in_block[c] {
            continue;
        }
        if cfg.lags == 0 {
            cols.push(name.clone(), name, lagged(c, 0));
        } else {
            for k in 1..=cfg.lags {
                cols.push(format!("{name}_lag{k}"), name, lagged(c, k));
            }
        }
    }
    for (prefix, block) in &hf_blocks {
        let raw = Array2::from_shape_fn((rows.len(), block.len()), |(i, l)| {
            table.values[[rows.start + i, block[l]]]
        });
        let names: Vec<String> = block.iter().map(|&c| table.names[c].clone()).collect();
        let scaled = standardize_columns(raw.view(), &names)?;
        let dict = legendre_dictionary(cfg.legendre_degree, block.len())?;
        let agg = aggregate_midas(scaled.view(), &dict)?;
        for d in 0..agg.ncols() {
            cols.push(format!("{prefix}_L{d}"), prefix, agg.column(d).to_owned());
        }
    }
    if cols.names.is_empty() {
        return Err(CliError::config("the design has no covariates"));
    }

    let p = cols.names.len();
    let mut x = Array2::zeros((rows.len(), p));
    for (j, v) in cols.values.iter().enumerate() {
        x.column_mut(j).assign(v);
    }
    let y = table.values.slice(s![rows.clone(), resp]).to_owned();
    let raw = TimeSeriesDataset::new(y, x, cols.names.clone())?
        .with_dates(table.dates[rows.clone()].to_vec())?;
    let (data, record) = standardize(&raw)?;
    let groups = resolve_groups(&cols.names, &cols.groups, user_groups)?;
    Ok(Design {
        data,
        groups,
        record,
        dropped_rows: offset,
    })
}

/// User groups claim columns (a series name claims all of its columns);
/// every unclaimed column stays in the group of its source series.
pub fn resolve_groups(
    names: &[String],
    series: &[String],
    user: Option<&BTreeMap<String, Vec<String>>>,
) -> CliResult<GroupStructure> {
    let p = names.len();
    let mut owner: Vec<Option<String>> = vec![None; p];
    if let Some(user) = user {
        for (gname, members) in user {
            if members.is_empty() {
                return Err(CliError::config(format!("group '{gname}' is empty")));
            }
            for m in members {
                let hits: Vec<usize> = match names.iter().position(|n| n == m) {
                    Some(j) => vec![j],
                    None => (0..p).filter(|&j| &series[j] == m).collect(),
                };
                if hits.is_empty() {
                    return Err(CliError::config(format!(
                        "group '{gname}' references unknown column '{m}'"
                    )));
                }
                for j in hits {
                    if let Some(prev) = &owner[j] {
                        return Err(CliError::config(format!(
                            "column '{}' is in groups '{prev}' and '{gname}'",
                            names[j]
                        )));
                    }
                    owner[j] = Some(gname.clone());
                }
            }
        }
    }
    let user_names: Vec<&String> = user.map(|u| u.keys().collect()).unwrap_or_default();
    let mut order: Vec<String> = Vec::new();
    let mut members: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for j in 0..p {
        let g = match &owner[j] {
            Some(g) => g.clone(),
            None => {
                if user_names.contains(&&series[j]) {
                    return Err(CliError::config(format!(
                        "group '{}' does not cover column '{}' of the series with the same name",
                        series[j], names[j]
                    )));
                }
                series[j].clone()
            }
        };
        if !members.contains_key(&g) {
            order.push(g.clone());
        }
        members.entry(g).or_default().push(j);
    }
    let groups = order
        .into_iter()
        .map(|name| {
            let indices = members.remove(&name).unwrap_or_default();
            Group { name, indices }
        })
        .collect();
    Ok(GroupStructure::new(groups, p)?)
}
