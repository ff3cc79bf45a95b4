use std::path::{Path, PathBuf};

use hdgranger::hac::{default_bandwidth, KernelSpec};
use hdgranger::inference::GroupReport;
use hdgranger::io::read_csv_path;
use hdgranger::montecarlo::{run_experiment, DgpConfig, ExperimentConfig};
use hdgranger::nodewise::identity_defect;
use hdgranger::pipeline::{check_test_group, infer_group, FitConfig, ModelFit, Workspace};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::args::{GrangerArgs, ModelArgs, NodewiseArgs, SimulateArgs};
use crate::config::{
    check_out_path, check_threads, parse_kernels, resolve_fit, resolve_model, FileConfig,
    ModelConfig,
};
use crate::design::{build_design, read_group_file, Design};
use crate::error::{CliError, CliResult};

/// Files produced by a command, written only after everything succeeded.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(PathBuf, String)>,
}

impl Outputs {
    pub fn write(&self) -> CliResult<()> {
        for (path, body) in &self.files {
            std::fs::write(path, body)
                .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report values serialize");
    s.push('\n');
    s
}

/// Run `f` on a pool of `threads` workers (the global pool if `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn load_design(cfg: &ModelConfig) -> CliResult<Design> {
    let user = cfg
        .design
        .groups
        .as_deref()
        .map(read_group_file)
        .transpose()?;
    let table = read_csv_path(&cfg.design.data)?;
    let design = build_design(&table, &cfg.design, user.as_ref())?;
    // fold sizes depend on the usable sample
    hdgranger::sglasso::fold_boundaries(design.data.n_obs(), cfg.fit.n_folds)?;
    Ok(design)
}

fn data_summary(design: &Design) -> Value {
    let data = &design.data;
    let dates = data.dates().unwrap_or(&[]);
    let mut groups = Map::new();
    for g in design.groups.groups() {
        groups.insert(g.name.clone(), json!(design.column_names(&g.indices)));
    }
    json!({
        "n_obs": data.n_obs(),
        "n_features": data.n_features(),
        "dropped_rows": design.dropped_rows,
        "first_date": dates.first(),
        "last_date": dates.last(),
        "groups": groups,
        "standardization": design.record,
    })
}

fn fit_summary(design: &Design, model: &ModelFit) -> Value {
    let names = design.data.column_names();
    let mut beta = Map::new();
    for (j, b) in model.fit.beta.iter().enumerate() {
        if *b != 0.0 {
            beta.insert(names[j].clone(), json!(b));
        }
    }
    let cv_curve = model.cv.as_ref().map(|cv| {
        cv.lambda_grid
            .iter()
            .zip(&cv.mean_errors)
            .map(|(l, e)| json!({"lambda": l, "mean_error": e}))
            .collect::<Vec<_>>()
    });
    json!({
        "selected_lambda": model.fit.penalty.lambda,
        "lambda_source": if model.cv.is_some() { "cross_validation" } else { "fixed" },
        "cv_curve": cv_curve,
        "beta": beta,
        "sigma2_hat": model.fit.sigma2_hat,
        "objective_value": model.fit.objective_value,
        "iterations": model.fit.iterations,
        "converged": model.fit.converged,
        "kkt_violation": model.kkt_violation,
    })
}

pub fn cmd_fit(args: &ModelArgs) -> CliResult<Outputs> {
    let (cfg, _) = resolve_model(args)?;
    let design = load_design(&cfg)?;
    let model = with_threads(cfg.threads, || {
        let ws = Workspace::new(&design.data, cfg.fit.n_folds)?;
        ws.fit(&design.groups, &cfg.fit)
    })??;
    let report = json!({
        "command": "fit",
        "config": cfg,
        "data": data_summary(&design),
        "fit": fit_summary(&design, &model),
    });
    Ok(Outputs {
        files: vec![(cfg.out.clone(), to_json(&report))],
    })
}

/// Resolved bandwidth/kernel grid.
#[derive(Debug, Clone, Serialize)]
pub struct TestGrid {
    pub test_groups: Vec<String>,
    pub mt_grid: Vec<usize>,
    pub kernels: Vec<String>,
    pub table: PathBuf,
}

/// Plain decimal in a readable range, scientific notation outside it.
fn number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e9).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn check_mt(mt: &[usize], t: usize) -> CliResult<()> {
    for &m in mt {
        if m == 0 || m >= t {
            return Err(CliError::config(format!(
                "bandwidth {m} must be a positive integer below T = {t}"
            )));
        }
    }
    Ok(())
}

pub fn cmd_granger(args: &GrangerArgs) -> CliResult<Outputs> {
    let (cfg, file) = resolve_model(&args.model)?;
    let kernel_names = if args.kernel.is_empty() {
        file.kernels().unwrap_or_else(|| vec!["parzen".into()])
    } else {
        args.kernel.clone()
    };
    let kernels = parse_kernels(&kernel_names)?;
    let table_path = args
        .table
        .clone()
        .unwrap_or_else(|| cfg.out.with_extension("csv"));
    check_out_path(&table_path)?;
    if table_path == cfg.out {
        return Err(CliError::config(
            "the p-value table and the report need different paths",
        ));
    }
    let design = load_design(&cfg)?;
    let t = design.data.n_obs();
    let mt_grid = if !args.mt.is_empty() {
        args.mt.clone()
    } else {
        file.mt_grid
            .clone()
            .unwrap_or_else(|| vec![default_bandwidth(t) as usize])
    };
    check_mt(&mt_grid, t)?;
    let mut tests = Vec::new();
    for name in &args.test_group {
        let idx = design.group_indices(name)?;
        check_test_group(&idx, design.data.n_features()).map_err(|_| {
            CliError::config(format!(
                "test group '{name}' covers every column; no controls left"
            ))
        })?;
        tests.push((name.clone(), idx));
    }
    let specs: Vec<KernelSpec> = kernels
        .iter()
        .flat_map(|&k| mt_grid.iter().map(move |&m| KernelSpec::new(k, m as f64)))
        .collect::<hdgranger::Result<_>>()?;
    let grid = TestGrid {
        test_groups: args.test_group.clone(),
        mt_grid: mt_grid.clone(),
        kernels: kernels.iter().map(|k| k.name().to_string()).collect(),
        table: table_path.clone(),
    };

    let (model, reports) = with_threads(cfg.threads, || -> CliResult<_> {
        let ws = Workspace::new(&design.data, cfg.fit.n_folds)?;
        let model = ws.fit(&design.groups, &cfg.fit)?;
        let mut reports = Vec::new();
        for (name, idx) in &tests {
            let prec = ws.precision(idx, &cfg.fit.nodewise_lambda(), &cfg.fit.solver)?;
            let inf = infer_group(&design.data, &model.fit, &prec, &specs)?;
            let names = design.column_names(idx);
            for test in &inf.tests {
                reports.push(GroupReport::new(name, &names, &inf.estimate, test, t));
            }
        }
        Ok((model, reports))
    })??;

    let mut csv = String::from(
        "group,kernel,M_T,wald,dof,restrictions,p_value,significant_1pct,significant_5pct\n",
    );
    for r in &reports {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.group_name,
            r.kernel,
            r.bandwidth,
            number(r.wald),
            r.dof,
            r.restrictions,
            number(r.p_value),
            r.significant_1pct,
            r.significant_5pct
        ));
    }
    let report = json!({
        "command": "granger",
        "config": cfg,
        "tests_config": grid,
        "data": data_summary(&design),
        "fit": fit_summary(&design, &model),
        "tests": reports,
    });
    Ok(Outputs {
        files: vec![(cfg.out.clone(), to_json(&report)), (table_path, csv)],
    })
}

pub fn cmd_nodewise(args: &NodewiseArgs) -> CliResult<Outputs> {
    let (cfg, _) = resolve_model(&args.model)?;
    let design = load_design(&cfg)?;
    let p = design.data.n_features();
    let requested: Vec<usize> = if args.test_group.is_empty() {
        (0..p).collect()
    } else {
        let mut all = Vec::new();
        for name in &args.test_group {
            for j in design.group_indices(name)? {
                if !all.contains(&j) {
                    all.push(j);
                }
            }
        }
        all
    };
    if p < 2 {
        return Err(CliError::config(
            "nodewise regressions need at least 2 columns",
        ));
    }
    let prec = with_threads(cfg.threads, || {
        let ws = Workspace::new(&design.data, cfg.fit.n_folds)?;
        ws.precision(&requested, &cfg.fit.nodewise_lambda(), &cfg.fit.solver)
    })??;
    let names = design.data.column_names();
    let rows: Vec<Value> = requested
        .iter()
        .map(|j| {
            let node = &prec.nodes[j];
            let row = &prec.rows[j];
            let mut theta = Map::new();
            for (k, v) in row.iter().enumerate() {
                if *v != 0.0 {
                    theta.insert(names[k].clone(), json!(v));
                }
            }
            json!({
                "column": names[*j],
                "lambda": node.lambda_j,
                "sigma2": node.sigma2_j,
                "converged": node.converged,
                "kkt_violation": node.kkt_violation,
                "theta": theta,
            })
        })
        .collect();
    let report = json!({
        "command": "nodewise",
        "config": cfg,
        "data": data_summary(&design),
        "rows": rows,
        "identity_defect": identity_defect(&prec, &design.data),
    });
    Ok(Outputs {
        files: vec![(cfg.out.clone(), to_json(&report))],
    })
}

/// Resolve simulation knobs: flags, then config file, then defaults.
pub fn resolve_simulation(args: &SimulateArgs) -> CliResult<(ExperimentConfig, Option<usize>)> {
    let f = FileConfig::load(args.config.as_deref())?;
    let dd = DgpConfig::default();
    let de = ExperimentConfig::default();
    let fit: FitConfig = resolve_fit(
        args.alpha,
        None,
        args.folds,
        args.grid_size,
        args.grid_min_ratio,
        args.tol,
        args.max_cycles,
        None,
        &f,
    )?;
    if f.lambda.is_some() {
        return Err(CliError::config(
            "simulate always cross-validates lambda; remove 'lambda'",
        ));
    }
    let kernel_names = match (&args.kernel, f.kernels()) {
        (Some(k), _) => vec![k.clone()],
        (None, Some(v)) => v,
        (None, None) => vec![de.kernel.name().to_string()],
    };
    let kernels = parse_kernels(&kernel_names)?;
    if kernels.len() != 1 {
        return Err(CliError::config("simulate takes exactly one kernel"));
    }
    let dgp = DgpConfig {
        t: args.t.or(f.t).unwrap_or(dd.t),
        p: args.p.or(f.p).unwrap_or(dd.p),
        rho: args.rho.or(f.rho).unwrap_or(dd.rho),
        n_active: args.n_active.or(f.n_active).unwrap_or(dd.n_active),
        beta_low: args.beta_low.or(f.beta_low).unwrap_or(dd.beta_low),
        beta_high: args.beta_high.or(f.beta_high).unwrap_or(dd.beta_high),
        noise_sd: args.noise_sd.or(f.noise_sd).unwrap_or(dd.noise_sd),
        seed: args.seed.or(f.seed).unwrap_or(dd.seed),
    };
    let mt: Vec<usize> = if !args.mt.is_empty() {
        args.mt.clone()
    } else {
        f.mt_grid
            .clone()
            .unwrap_or_else(|| de.mt_grid.iter().map(|m| *m as usize).collect())
    };
    check_mt(&mt, dgp.t)?;
    let cfg = ExperimentConfig {
        dgp,
        n_reps: args.n.or(f.n).unwrap_or(de.n_reps),
        mt_grid: mt.iter().map(|m| *m as f64).collect(),
        kernel: kernels[0],
        fit,
        freeze_beta: args.freeze_beta || f.freeze_beta.unwrap_or(false),
        standardize: args.standardize || f.standardize.unwrap_or(false),
        critical_value: de.critical_value,
    };
    cfg.validate()?;
    let threads = args.threads.or(f.threads);
    check_threads(threads)?;
    Ok((cfg, threads))
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<Outputs> {
    let (cfg, threads) = resolve_simulation(args)?;
    check_out_path(&args.out)?;
    let meta_path = sidecar_path(&args.out);
    if meta_path == args.out {
        return Err(CliError::config("the table path must not end in .json"));
    }
    let result = with_threads(threads, || run_experiment(&cfg))??;
    let meta = json!({
        "command": "simulate",
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "threads": threads,
        "master_seed": cfg.dgp.seed,
        "replication_seeding": "ChaCha8 generator seeded with the master seed, stream = replication index",
        "beta_mode": if cfg.freeze_beta { "frozen" } else { "redrawn_per_replication" },
        "frozen_beta": result.frozen_beta,
        "group_structure": "singletons",
        "n_completed": result.outcomes.len(),
        "failures": result.failures,
        "nonconverged_replications": result.nonconverged,
        "max_kkt_violation": result.outcomes.iter().map(|o| o.max_kkt_violation).fold(0.0f64, f64::max),
        "table": result.table,
    });
    Ok(Outputs {
        files: vec![
            (args.out.clone(), result.table.to_csv()),
            (meta_path, to_json(&meta)),
        ],
    })
}
