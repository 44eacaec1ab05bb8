//! Subcommand bodies.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use kanmat_core::dataset::{read_csv, CsvOptions, Dataset, DatasetError, TransformSpec, DEFAULT_LOG_FLOOR};
use kanmat_core::matrix::{compute, AssociationMatrix, MatrixError, MatrixKind, MatrixRequest};
use kanmat_core::ranking::{
    evaluate_topk, multi_target_ranking, rank_by_baseline, ranking_csv, topk_csv, Aggregate, RankingError,
};
use kanmat_core::render::{export_json, render_svg};
use kanmat_core::synth::{generate, Experiment, Ordering, SynthSpec};
use kanmat_service::{AppState, ServiceConfig};
use serde_json::json;

use crate::config::CliConfig;
use crate::error::CliError;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn load(path: &Path) -> Result<Dataset, CliError> {
    read_csv(path, CsvOptions::default())
        .map(|(d, _)| d)
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn matrix_err(e: MatrixError) -> CliError {
    match e {
        MatrixError::UnknownColumn(_) | MatrixError::InvalidConfig(_) | MatrixError::TooFewColumns(_) => {
            CliError::Usage(e.to_string())
        }
        _ => CliError::Runtime(e.to_string()),
    }
}

fn ranking_err(e: RankingError) -> CliError {
    match e {
        RankingError::Matrix(m) => matrix_err(m),
        RankingError::ConstantTarget(_) | RankingError::Forest(_) => CliError::Runtime(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn synth(
    experiment: Experiment,
    n: usize,
    seed: u64,
    shift: usize,
    ordering: Ordering,
    drop_wrapped: bool,
    output: &Path,
) -> Result<(), CliError> {
    let spec = SynthSpec {
        shift,
        ordering,
        drop_wrapped,
        ..SynthSpec::new(experiment, n, seed)
    };
    let d = generate(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    write_file(output, &d.to_csv_string())?;
    println!("wrote {} rows to {}", d.n_rows(), output.display());
    println!("{:<12} {:>10} {:>10} {:>10} {:>10}", "column", "mean", "sd", "min", "max");
    for c in d.columns() {
        let (mean, sd) = mean_sd(&c.values);
        let min = c.values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = c.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!("{:<12} {mean:>10.4} {sd:>10.4} {min:>10.4} {max:>10.4}", c.name);
    }
    Ok(())
}

/// Strength grid: one line per row, columns in label order.
pub fn text_grid(m: &AssociationMatrix) -> String {
    let width = m.labels.iter().map(String::len).max().unwrap_or(0).max(6);
    let mut out = format!("{:<width$}", m.kind.as_str());
    for l in &m.labels {
        out.push_str(&format!(" {l:>width$}"));
    }
    out.push('\n');
    for row in m.row_labels() {
        out.push_str(&format!("{row:<width$}"));
        for col in &m.labels {
            match m.strength(&row, col) {
                Some(s) => out.push_str(&format!(" {s:>width$.3}")),
                None => out.push_str(&format!(" {:>width$}", "-")),
            }
        }
        out.push('\n');
    }
    out
}

pub fn matrix(
    kind: MatrixKind,
    input: &Path,
    targets: Option<Vec<String>>,
    excluded_targets: Vec<String>,
    cfg: &CliConfig,
    out: &Path,
) -> Result<(), CliError> {
    let d = load(input)?;
    let req = MatrixRequest {
        targets,
        excluded_targets,
        inputs: None,
    };
    let m = compute(&d, kind, &req, &cfg.matrix, None).map_err(matrix_err)?;
    let svg = render_svg(&m, &cfg.style).map_err(|e| CliError::Usage(e.to_string()))?;
    write_file(&out.join(format!("{}.json", kind.as_str())), &export_json(&m))?;
    write_file(&out.join(format!("{}.svg", kind.as_str())), &svg)?;
    print!("{}", text_grid(&m));
    Ok(())
}

fn default_ks(n_inputs: usize) -> Vec<usize> {
    let evens: Vec<usize> = (2..=n_inputs).step_by(2).collect();
    if evens.is_empty() {
        vec![n_inputs]
    } else {
        evens
    }
}

pub fn rank(
    input: &Path,
    targets: &[String],
    methods: &[MatrixKind],
    topk: Option<Vec<usize>>,
    log_targets: bool,
    cfg: &CliConfig,
    out: &Path,
) -> Result<(), CliError> {
    let mut d = load(input)?;
    for t in targets {
        if d.column(t).is_none() {
            return Err(CliError::Usage(format!("unknown target column {t:?}")));
        }
    }
    let n_inputs = d.names().iter().filter(|c| !targets.contains(c)).count();
    if n_inputs == 0 {
        return Err(CliError::Usage("no input columns remain after removing targets".into()));
    }
    let ks = topk.unwrap_or_else(|| default_ks(n_inputs));
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > n_inputs) {
        return Err(CliError::Usage(format!("top-k {k} must be in 1..={n_inputs}")));
    }
    if methods.contains(&MatrixKind::Pkan) {
        return Err(CliError::Usage("ranking methods are mkan, pearson and nmi".into()));
    }
    if log_targets {
        let ops: Vec<TransformSpec> = targets
            .iter()
            .map(|t| TransformSpec::Log {
                column: t.clone(),
                floor: DEFAULT_LOG_FLOOR,
            })
            .collect();
        d = d.replay(&ops).map_err(|e: DatasetError| CliError::Usage(e.to_string()))?;
    }

    let mut rankings = Vec::new();
    let mut tables = Vec::new();
    for &method in methods {
        let ranking = match method {
            MatrixKind::Mkan => multi_target_ranking(&d, targets, &cfg.matrix),
            other => rank_by_baseline(&d, targets, other, &cfg.matrix),
        }
        .map_err(ranking_err)?;
        let table = evaluate_topk(&d, &ranking, targets, &ks, &cfg.topk).map_err(ranking_err)?;
        write_file(&out.join(format!("ranking_{}.csv", method.as_str())), &ranking_csv(&ranking))?;
        rankings.push(ranking);
        tables.push(table);
    }
    let mean = topk_csv(&tables, Aggregate::Mean);
    let pooled = topk_csv(&tables, Aggregate::Pooled);
    write_file(&out.join("topk_mean.csv"), &mean)?;
    write_file(&out.join("topk_pooled.csv"), &pooled)?;
    let report = json!({ "rankings": rankings, "topk": tables, "log_targets": log_targets });
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&out.join("rank_report.json"), &(text + "\n"))?;
    println!("mean test NSE by top-k inputs");
    print!("{mean}");
    println!("pooled test NSE by top-k inputs");
    print!("{pooled}");
    Ok(())
}

/// Sidecar path next to the transformed CSV.
pub fn history_path(output: &Path) -> PathBuf {
    output.with_extension("history.json")
}

pub fn transform(
    input: &Path,
    ops: Option<&str>,
    history: Option<&Path>,
    output: &Path,
) -> Result<(), CliError> {
    let specs: Vec<TransformSpec> = match (ops, history) {
        (Some(ops), _) => TransformSpec::parse_ops(ops).map_err(CliError::Usage)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        (None, None) => return Err(CliError::Usage("one of --ops or --history is required".into())),
    };
    let d = load(input)?;
    let result = d.replay(&specs).map_err(|e| CliError::Usage(e.to_string()))?;
    write_file(output, &result.to_csv_string())?;
    let sidecar = serde_json::to_string_pretty(result.history()).map_err(|e| CliError::Runtime(e.to_string()))?;
    let sidecar_path = history_path(output);
    write_file(&sidecar_path, &(sidecar + "\n"))?;
    println!(
        "wrote {} rows x {} columns to {} (history {})",
        result.n_rows(),
        result.n_cols(),
        output.display(),
        sidecar_path.display()
    );
    Ok(())
}

pub fn serve(host: &str, port: u16, data_dir: Option<PathBuf>) -> Result<(), CliError> {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime.block_on(async move {
        let addr = format!("{host}:{port}");
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Runtime(format!("cannot bind {addr}: {e}")))?;
        let state = Arc::new(AppState::new(ServiceConfig {
            data_dir,
            ..ServiceConfig::default()
        }));
        let loaded = state.load_data_dir().map_err(|e| CliError::Runtime(e.to_string()))?;
        let local = listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
        println!("listening on http://{local}");
        for id in loaded {
            println!("loaded dataset {id}");
        }
        let _ = std::io::stdout().flush();
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        kanmat_service::serve(listener, state, shutdown)
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))
    })
}
