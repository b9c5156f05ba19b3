//! `gdpcast`: batch front end for the forecasting toolkit.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage or config error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gdpcast::diagnostics::{default_eps, gradcheck_family, GradcheckOptions, GRADCHECK_TOL};
use gdpcast::embeddings::{save_embeddings, stub_embedding, write_embeddings_csv, EmbeddingRecord, STATIC_KEY};
use gdpcast::experiment::{rerender_reports, run_experiment, ExperimentConfig, ExperimentError};
use gdpcast::lights::{lights_from_dirs, load_light_csv, write_light_csv, LightMode};
use gdpcast::models::Family;
use gdpcast::panel::{light_column_names, load_panel_inferred, merge_light_features};

#[derive(Parser)]
#[command(name = "gdpcast", version, about = "GDP-growth forecasting benchmark toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Mlp,
    Lstm,
    Patch,
    Rt,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Mlp => Family::Mlp,
            FamilyArg::Lstm => Family::Lstm,
            FamilyArg::Patch => Family::Patch,
            FamilyArg::Rt => Family::Rt,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LightArg {
    None,
    SumMeanStd,
    Mean,
    EveryMonthMean,
}

impl From<LightArg> for LightMode {
    fn from(l: LightArg) -> Self {
        match l {
            LightArg::None => LightMode::None,
            LightArg::SumMeanStd => LightMode::SumMeanStd,
            LightArg::Mean => LightMode::Mean,
            LightArg::EveryMonthMean => LightMode::EveryMonthMean,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a panel CSV, optionally merge light features, and store it
    /// under its schema fingerprint.
    Ingest {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        lights: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "none")]
        light_mode: LightArg,
        /// Store directory; the panel is written as panel-<fingerprint>.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Zonal statistics for every raster/mask pair, as a monthly light CSV.
    Lights {
        #[arg(long)]
        rasters: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment config: split, scale, grid search, evaluate, report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for the grid search; results do not depend on it.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Finite-difference gradient check of a model family at small sizes.
    Gradcheck {
        #[arg(value_enum)]
        family: FamilyArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Re-render the reports of a finished run from its manifest.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deterministic stand-in embeddings for every indicator of a panel,
    /// including the light feature columns of each mode.
    EmbedStub {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the CSV debug form.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// Error with its exit code.
struct Failure {
    code: u8,
    msg: String,
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        msg: e.to_string(),
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        msg: e.to_string(),
    }
}

fn experiment(e: ExperimentError) -> Failure {
    if e.is_config() {
        usage(e)
    } else {
        runtime(e)
    }
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| runtime(format!("{}: {e}", path.display()))
}

fn cmd_ingest(panel: &Path, lights: Option<&Path>, mode: LightMode, out: Option<&Path>) -> Result<(), Failure> {
    let mut p = load_panel_inferred(panel).map_err(runtime)?;
    match (mode, lights) {
        (LightMode::None, _) => {}
        (m, Some(path)) => {
            let table = load_light_csv(path).map_err(runtime)?;
            p = merge_light_features(&p, &table, m).map_err(runtime)?;
        }
        (_, None) => return Err(usage("--light-mode needs --lights")),
    }
    let fp = p.schema.fingerprint();
    println!("countries: {}", p.countries.len());
    println!(
        "periods: {} ({}..{}, {:?})",
        p.periods.len(),
        p.periods.first().map(|x| x.to_string()).unwrap_or_default(),
        p.periods.last().map(|x| x.to_string()).unwrap_or_default(),
        p.schema.frequency
    );
    println!("dims: {}", p.dims());
    println!("target: {}", p.schema.target_name);
    println!(
        "present cells: {} of {}",
        p.present_cells(),
        p.countries.len() * p.periods.len() * p.width()
    );
    println!("fingerprint: {fp}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(io_at(dir))?;
        let csv_path = dir.join(format!("panel-{fp}.csv"));
        let file = std::fs::File::create(&csv_path).map_err(io_at(&csv_path))?;
        p.write_csv(file).map_err(runtime)?;
        let schema_path = dir.join(format!("panel-{fp}.schema.json"));
        let text = serde_json::to_string_pretty(&p.schema).map_err(runtime)?;
        std::fs::write(&schema_path, text + "\n").map_err(io_at(&schema_path))?;
        println!("wrote {}", csv_path.display());
    }
    Ok(())
}

fn cmd_lights(rasters: &Path, masks: &Path, out: &Path) -> Result<(), Failure> {
    let records = lights_from_dirs(rasters, masks).map_err(runtime)?;
    let file = std::fs::File::create(out).map_err(io_at(out))?;
    write_light_csv(file, &records).map_err(runtime)?;
    println!("wrote {} records to {}", records.len(), out.display());
    Ok(())
}

fn cmd_run(config: &Path, jobs: usize) -> Result<(), Failure> {
    if jobs == 0 {
        return Err(usage("--jobs must be >= 1"));
    }
    let cfg = ExperimentConfig::from_file(config).map_err(experiment)?;
    let outcome = run_experiment(&cfg, jobs).map_err(experiment)?;
    let m = &outcome.manifest;
    println!("config hash: {}", m.config_hash);
    println!("samples: {} train, {} test", m.n_train, m.n_test);
    println!(
        "winner: grid point {} of {} (mean fold loss {:.6}), best fold {}",
        m.winner,
        m.grid.len(),
        m.grid[m.winner].mean_loss.unwrap_or(f64::NAN),
        m.best_fold
    );
    for (name, s) in &m.results[0].models {
        println!("{name}: MAE {:.4} MSE {:.4} RMSE {:.4}", s.mae, s.mse, s.rmse);
    }
    println!("manifest: {}", outcome.manifest_path.display());
    for r in &outcome.reports {
        println!("report: {}", r.display());
    }
    Ok(())
}

fn cmd_gradcheck(family: Family, seed: u64, eps: Option<f64>) -> Result<bool, Failure> {
    let opts = GradcheckOptions {
        eps,
        seed,
        ..Default::default()
    };
    let report = gradcheck_family(family, &opts).map_err(usage)?;
    for (name, err) in &report.per_param {
        println!("{name}: {err:.3e}");
    }
    let worst = report.max_rel_err();
    let pass = report.passes(GRADCHECK_TOL);
    println!(
        "{family:?}: max relative error {worst:.3e} (eps {:e}, {} entries, {} excluded) {}",
        eps.unwrap_or_else(|| default_eps(family)),
        report.checked,
        report.excluded,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}

fn cmd_embed_stub(panel: &Path, dim: usize, seed: u64, out: &Path, csv: Option<&Path>) -> Result<(), Failure> {
    if dim == 0 {
        return Err(usage("--dim must be >= 1"));
    }
    let p = load_panel_inferred(panel).map_err(runtime)?;
    let mut ids: Vec<String> = p.schema.indicator_names.clone();
    for mode in [LightMode::SumMeanStd, LightMode::Mean, LightMode::EveryMonthMean] {
        for name in light_column_names(mode, p.schema.frequency) {
            if !ids.contains(&name) {
                ids.push(name);
            }
        }
    }
    let records: Vec<EmbeddingRecord> = ids
        .iter()
        .map(|id| EmbeddingRecord {
            id: id.clone(),
            key: STATIC_KEY.into(),
            vector: stub_embedding(id, dim, seed),
        })
        .collect();
    save_embeddings(out, &records).map_err(runtime)?;
    if let Some(path) = csv {
        let file = std::fs::File::create(path).map_err(io_at(path))?;
        write_embeddings_csv(file, &records).map_err(runtime)?;
    }
    println!("wrote {} embeddings of width {dim} to {}", records.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.cmd {
        Cmd::Ingest {
            panel,
            lights,
            light_mode,
            out,
        } => cmd_ingest(panel, lights.as_deref(), (*light_mode).into(), out.as_deref()),
        Cmd::Lights { rasters, masks, out } => cmd_lights(rasters, masks, out),
        Cmd::Run { config, jobs } => cmd_run(config, *jobs),
        Cmd::Gradcheck { family, seed, eps } => match cmd_gradcheck((*family).into(), *seed, *eps) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
        Cmd::Report { manifest, out } => rerender_reports(manifest, out.as_deref())
            .map(|paths| paths.iter().for_each(|p| println!("report: {}", p.display())))
            .map_err(experiment),
        Cmd::EmbedStub {
            panel,
            dim,
            seed,
            out,
            csv,
        } => cmd_embed_stub(panel, *dim, *seed, out, csv.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
