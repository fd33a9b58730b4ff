//! Command-line front end. Every subcommand reads one scenario file (or the
//! built-in defaults), applies `--set` overrides, and writes plot-ready
//! artifacts with full provenance headers. Exit codes: 0 success, 2 config
//! problem, 3 numerical failure, 4 sweep finished with failed members.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wignerflow::chaos::{ensemble_lyapunov, max_lyapunov, LyapunovResult};
use wignerflow::config::{self, ScenarioConfig};
use wignerflow::experiments::{analyze, run_sweep, ScalingGroup, SweepResult, SweepRun};
use wignerflow::grid::Grid;
use wignerflow::io::{
    fmt_float, read_diagnostics_csv, save_json, write_checkpoint, write_diagnostics_csv,
};
use wignerflow::oracle::{
    gaussian_chi2_p, gaussian_purity, propagate_moments, GaussianMoments, LinearDynamics,
};
use wignerflow::propagator::evolve;
use wignerflow::states::gaussian_wigner;
use wignerflow::{Error, Result};

#[derive(Parser)]
#[command(
    name = "wignerflow",
    version,
    about = "Phase-space solver for the open driven Duffing oscillator"
)]
struct Cli {
    /// Scenario file; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a scenario key, e.g. --set evolution.hbar=0.2 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory; defaults to the scenario's output.dir.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Sweep worker threads; overrides sweep.workers.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate one evolution and write its diagnostics series.
    Run,
    /// Run every scaling-group member and write per-run series plus a
    /// group-level summary.
    Sweep,
    /// Re-analyze an existing sweep directory (different windows, no
    /// re-integration).
    Collapse {
        /// Directory holding run_*.csv from a sweep.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Classical maximal Lyapunov exponent at the scenario's working point.
    Lyapunov,
    /// Integrate linear dynamics and compare against the Gaussian moment
    /// oracle; fails when the solver drifts off the closed form.
    OracleCheck,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            let (kind, code) = match &e {
                Error::Blowup { .. } | Error::Consistency { .. } => ("numerical", 3),
                _ => ("config", 2),
            };
            let report = serde_json::json!({
                "error": { "kind": kind, "message": e.to_string() }
            });
            eprintln!("{report}");
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    let cfg = match &cli.config {
        Some(path) => config::load(path, &cli.set)?,
        None => config::from_toml_with_overrides("", &cli.set)?,
    };
    let out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    std::fs::create_dir_all(&out_dir)?;
    match &cli.cmd {
        Cmd::Run => cmd_run(&cfg, &out_dir),
        Cmd::Sweep => cmd_sweep(&cfg, &out_dir, cli.workers),
        Cmd::Collapse { data } => cmd_collapse(&cli.set, cli.config.as_deref(), data, &out_dir),
        Cmd::Lyapunov => cmd_lyapunov(&cfg, &out_dir),
        Cmd::OracleCheck => cmd_oracle_check(&cfg, &out_dir),
    }
}

fn provenance(cfg: &ScenarioConfig) -> Result<(String, String)> {
    Ok((cfg.content_hash()?, cfg.canonical_toml()?))
}

fn cmd_run(cfg: &ScenarioConfig, out_dir: &Path) -> Result<ExitCode> {
    let params = cfg.duffing();
    let evo = cfg.evolution_params()?;
    let grid = Grid::shared(cfg.grid_spec())?;
    let init = gaussian_wigner(&cfg.gaussian(), evo.hbar, &grid)?;
    let output = evolve(&init, &params, &evo, |_, _| {})?;

    let (hash, canon) = provenance(cfg)?;
    let keys = [
        ("config_hash", hash.clone()),
        ("hbar", fmt_float(evo.hbar)),
        ("d", fmt_float(evo.d)),
        ("dt", fmt_float(evo.dt)),
        ("t_final", fmt_float(evo.t_final)),
        ("mode", format!("{:?}", evo.mode).to_lowercase()),
        ("dealias_active", output.dealias_active.to_string()),
    ];
    let csv_path = out_dir.join("run.csv");
    let mut w = BufWriter::new(File::create(&csv_path)?);
    write_diagnostics_csv(&mut w, &keys, Some(&canon), &output.records)?;
    w.flush()?;

    if cfg.output.checkpoint_final {
        let ck_path = out_dir.join("final.wgrchk");
        let mut w = BufWriter::new(File::create(&ck_path)?);
        write_checkpoint(&mut w, &output.final_field, evo.t_final)?;
        w.flush()?;
    }

    let last = output.records.last().expect("series is never empty");
    println!(
        "run [{hash}]: {} samples -> {}; final purity {:.6}, S2 {:.6}",
        output.records.len(),
        csv_path.display(),
        last.purity,
        last.s2
    );
    Ok(ExitCode::SUCCESS)
}

fn run_keys(hash: &str, run: &SweepRun) -> Vec<(&'static str, String)> {
    let mut keys = vec![
        ("config_hash", hash.to_string()),
        ("group", run.group.to_string()),
        ("zeta0", fmt_float(run.zeta0)),
        ("hbar", fmt_float(run.hbar)),
        ("d", fmt_float(run.d)),
    ];
    if let Some(msg) = &run.error {
        keys.push(("error", msg.replace('\n', " ")));
    }
    keys
}

fn cmd_sweep(cfg: &ScenarioConfig, out_dir: &Path, workers: Option<usize>) -> Result<ExitCode> {
    let mut spec = cfg.sweep_spec()?;
    if let Some(w) = workers {
        spec.workers = w;
    }
    let result = run_sweep(&spec)?;

    let (hash, canon) = provenance(cfg)?;
    for (i, run) in result.runs.iter().enumerate() {
        let path = out_dir.join(format!("run_{i:02}.csv"));
        let mut w = BufWriter::new(File::create(&path)?);
        write_diagnostics_csv(&mut w, &run_keys(&hash, run), Some(&canon), &run.series)?;
        w.flush()?;
    }

    let summary = analyze(&result, &cfg.analysis_windows()?)?;
    save_json(&out_dir.join("summary.json"), &summary)?;

    for g in &summary.groups {
        println!(
            "group zeta0 = {:>6}: regime {:?}, collapse {:.4} (threshold {}), \
             late spread {:.4}, median purity(t*) {:.4}",
            g.zeta0,
            g.regime,
            g.collapse,
            cfg.sweep.collapse_threshold,
            g.late_spread,
            g.median_normalized_purity
        );
    }
    if !summary.failures.is_empty() {
        for (hbar, d, msg) in &summary.failures {
            eprintln!("member (hbar = {hbar}, D = {d}) failed: {msg}");
        }
        println!(
            "sweep [{hash}]: {} runs, {} failed -> {}",
            result.runs.len(),
            summary.failures.len(),
            out_dir.display()
        );
        return Ok(ExitCode::from(4));
    }
    println!(
        "sweep [{hash}]: {} runs -> {}",
        result.runs.len(),
        out_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// Rebuild a `SweepResult` from a sweep output directory. The scenario is
/// taken from `--config` when given, else from the header of the first run
/// file; `--set` overrides apply on top either way, so windows can be
/// changed without re-running anything.
fn cmd_collapse(
    overrides: &[String],
    config_path: Option<&Path>,
    data_dir: &Path,
    out_dir: &Path,
) -> Result<ExitCode> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(data_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("run_") && n.ends_with(".csv"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!(
            "no run_*.csv files under {}",
            data_dir.display()
        )));
    }

    let mut parsed = Vec::new();
    for path in &paths {
        let (meta, records) = read_diagnostics_csv(BufReader::new(File::open(path)?))?;
        parsed.push((meta, records));
    }

    let cfg = match config_path {
        Some(p) => config::load(p, overrides)?,
        None => {
            let embedded = parsed[0].0.config_toml.as_deref().ok_or_else(|| {
                Error::Parse(format!(
                    "{} embeds no scenario; pass --config",
                    paths[0].display()
                ))
            })?;
            config::from_toml_with_overrides(embedded, overrides)?
        }
    };

    // Group indices in the files may be sparse if runs were pruned; compact
    // them in (group, zeta0) order.
    let mut zeta_by_group: BTreeMap<usize, f64> = BTreeMap::new();
    for (meta, _) in &parsed {
        zeta_by_group.insert(meta.require_usize("group")?, meta.require_f64("zeta0")?);
    }
    let index_of: BTreeMap<usize, usize> = zeta_by_group
        .keys()
        .enumerate()
        .map(|(new, &old)| (old, new))
        .collect();

    let mut members: Vec<Vec<(f64, f64)>> = vec![Vec::new(); index_of.len()];
    let mut runs = Vec::with_capacity(parsed.len());
    for (meta, records) in &parsed {
        let group = index_of[&meta.require_usize("group")?];
        let (hbar, d) = (meta.require_f64("hbar")?, meta.require_f64("d")?);
        members[group].push((hbar, d));
        runs.push(SweepRun {
            group,
            hbar,
            d,
            zeta0: meta.require_f64("zeta0")?,
            series: records.clone(),
            error: meta.keys.get("error").cloned(),
        });
    }
    let thresholds = cfg.regime_thresholds();
    let groups = zeta_by_group
        .values()
        .zip(members)
        .map(|(&zeta0, m)| ScalingGroup::new(zeta0, m, &thresholds))
        .collect::<Result<Vec<_>>>()?;

    let evo_dt = cfg.evolution_params()?;
    let result = SweepResult {
        groups,
        runs,
        params: cfg.duffing(),
        grid: cfg.grid_spec(),
        dt: evo_dt.dt,
        t_final: evo_dt.t_final,
        record_every: evo_dt.record_every,
        config_hash: parsed[0]
            .0
            .keys
            .get("config_hash")
            .cloned()
            .unwrap_or_default(),
    };

    let summary = analyze(&result, &cfg.analysis_windows()?)?;
    let path = out_dir.join("collapse.json");
    save_json(&path, &summary)?;
    for g in &summary.groups {
        println!(
            "group zeta0 = {:>6}: regime {:?}, collapse {:.4}, late spread {:.4}",
            g.zeta0, g.regime, g.collapse, g.late_spread
        );
    }
    println!(
        "collapse: {} runs from {} -> {}",
        result.runs.len(),
        data_dir.display(),
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn write_lyapunov_csv(
    path: &Path,
    hash: &str,
    members: &[&LyapunovResult],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# wignerflow lyapunov v1")?;
    writeln!(w, "# config_hash = {hash}")?;
    writeln!(w, "member,t,lambda")?;
    for (i, m) in members.iter().enumerate() {
        for &(t, lambda) in &m.finite_time {
            writeln!(w, "{i},{},{}", fmt_float(t), fmt_float(lambda))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_lyapunov(cfg: &ScenarioConfig, out_dir: &Path) -> Result<ExitCode> {
    let params = cfg.duffing();
    params.validate()?;
    let ly = &cfg.lyapunov;
    let dt = params.drive_period() / ly.steps_per_period as f64;
    let (hash, _) = provenance(cfg)?;
    let csv_path = out_dir.join("lyapunov.csv");

    if ly.ensemble {
        let sigma_x = cfg.initial.var_x.sqrt();
        let sigma_p = cfg
            .gaussian()
            .resolved_var_p(cfg.evolution.hbar)
            .sqrt();
        let ens = ensemble_lyapunov(
            &params,
            ly.x0,
            ly.p0,
            sigma_x,
            sigma_p,
            ly.t_total,
            ly.renorm_interval,
            dt,
        )?;
        write_lyapunov_csv(&csv_path, &hash, &ens.members.iter().collect::<Vec<_>>())?;
        save_json(&out_dir.join("lyapunov.json"), &ens)?;
        println!(
            "lambda_max = {:.4} +- {:.4} over {} initial conditions -> {}",
            ens.mean,
            ens.std,
            ens.members.len(),
            csv_path.display()
        );
    } else {
        let res = max_lyapunov(
            &params,
            ly.x0,
            ly.p0,
            0.0,
            ly.t_total,
            ly.renorm_interval,
            dt,
        )?;
        write_lyapunov_csv(&csv_path, &hash, &[&res])?;
        save_json(&out_dir.join("lyapunov.json"), &res)?;
        println!(
            "lambda_max = {:.4} (tail std {:.4}) -> {}",
            res.lambda_max,
            res.tail_std,
            csv_path.display()
        );
    }
    Ok(ExitCode::SUCCESS)
}

/// PDE vs closed-form moments tolerance; generous next to the observed
/// agreement (~1e-4 relative) but tight enough to catch a wrong multiplier.
const ORACLE_TOLERANCE: f64 = 5e-3;

fn cmd_oracle_check(cfg: &ScenarioConfig, out_dir: &Path) -> Result<ExitCode> {
    let params = cfg.duffing();
    let dynamics = LinearDynamics::from_duffing(&params)?;
    let evo = cfg.evolution_params()?;
    let grid = Grid::shared(cfg.grid_spec())?;
    let init = cfg.gaussian();
    let field = gaussian_wigner(&init, evo.hbar, &grid)?;
    let output = evolve(&field, &params, &evo, |_, _| {})?;

    let m0 = GaussianMoments::from_init(&init, evo.hbar);
    let (hash, _) = provenance(cfg)?;
    let csv_path = out_dir.join("oracle_check.csv");
    let mut w = BufWriter::new(File::create(&csv_path)?);
    writeln!(w, "# wignerflow oracle check v1")?;
    writeln!(w, "# config_hash = {hash}")?;
    writeln!(w, "t,purity,purity_oracle,purity_rel_err,chi2_p,chi2_p_oracle")?;
    let mut worst = 0.0f64;
    for rec in &output.records {
        let m = propagate_moments(&dynamics, evo.d, &m0, rec.t)?;
        let purity_oracle = gaussian_purity(&m, evo.hbar)?;
        let chi2_oracle = gaussian_chi2_p(&m)?;
        let rel = (rec.purity - purity_oracle).abs() / purity_oracle;
        worst = worst.max(rel);
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_float(rec.t),
            fmt_float(rec.purity),
            fmt_float(purity_oracle),
            fmt_float(rel),
            fmt_float(rec.chi2_p),
            fmt_float(chi2_oracle)
        )?;
    }
    w.flush()?;

    println!(
        "oracle check [{hash}]: max purity deviation {worst:.3e} over {} samples -> {}",
        output.records.len(),
        csv_path.display()
    );
    if worst > ORACLE_TOLERANCE {
        return Err(Error::Consistency {
            step: output.records.len() as u64,
            t: evo.t_final,
            what: format!(
                "solver drifted {worst:.3e} from the moment oracle \
                 (tolerance {ORACLE_TOLERANCE:.0e})"
            ),
        });
    }
    Ok(ExitCode::SUCCESS)
}
