//! `phipsim`: simulate PHIP transfer sequences, sweep single errors, rebuild the
//! overview table and inspect toggling-frame diagnostics.

mod config;
mod output;

use clap::{Parser, Subcommand};
use config::{ConfigError, Format, RunConfig};
use output::{num, opt_num, out_path, slug, Chart, Series};
use phip_core::aht;
use phip_core::catalog::{self, NAMES};
use phip_core::propagator::{evolve, transfer_curve_fit};
use phip_core::robustness::{overview_table, sweep, ErrorKind, SweepSpec};
use phip_core::sequence::schedule;
use serde_json::json;
use std::f64::consts::{PI, TAU};
use std::path::PathBuf;
use std::process::ExitCode;

const UNITS: &str = "Frequencies are plain Hz at the command line and in files (converted to angular frequency, \
2π·Hz, internally). Phases (phi_pi, phi_i_pi) and j_tau_pi are in units of π.";

#[derive(Parser, Debug)]
#[command(name = "phipsim", version, about = "PHIP polarisation-transfer sequence simulator", after_help = UNITS)]
struct Cli {
    /// JSON run configuration; command-line options override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Molecule preset (pyruvate).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Override a configuration key, e.g. --set d0_hz=1000 or --set evolve.dt_max=5e-5.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps and tables.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Evolve one sequence and write its trajectory.
    Simulate {
        #[arg(long)]
        seq: Option<String>,
    },
    /// Sweep one error amplitude and extract the 90 % threshold.
    Sweep {
        #[arg(long)]
        seq: Option<String>,
        /// dDF, d0, d1, dCS or dRD.
        #[arg(long)]
        error: Option<String>,
    },
    /// Regenerate overview-table rows.
    Table {
        /// `all` or a comma-separated list of sequence names.
        #[arg(long)]
        rows: Option<String>,
    },
    /// Toggling-frame trace, effective coupling, net precession and dipolar residual.
    Aht {
        #[arg(long)]
        seq: Option<String>,
        /// Print one quantity: alpha, astar or residual.
        #[arg(long)]
        report: Option<String>,
    },
    /// List catalog sequences.
    List,
    /// Print the resolved configuration as JSON.
    Config,
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(format!("write failed: {e}"))
    }
}

fn run_err<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Run(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &cli.preset {
        cfg.apply_preset(p)?;
    }
    for kv in &cli.sets {
        cfg.set(kv)?;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    match &cli.cmd {
        Cmd::Simulate { seq } | Cmd::Aht { seq, .. } => {
            if seq.is_some() {
                cfg.seq = seq.clone();
            }
        }
        Cmd::Sweep { seq, error } => {
            if seq.is_some() {
                cfg.seq = seq.clone();
            }
            if let Some(e) = error {
                cfg.error = Some(ErrorKind::parse(e).ok_or_else(|| Failure::Usage(format!("unknown error kind {e:?}")))?);
            }
        }
        Cmd::Table { rows } => {
            if rows.is_some() {
                cfg.rows = rows.clone();
            }
        }
        Cmd::List | Cmd::Config => return Ok(cfg),
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Failure::Usage(format!("output directory: {e}")))?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli)?;
    match cli.cmd {
        Cmd::Simulate { .. } => simulate(&cfg),
        Cmd::Sweep { .. } => cmd_sweep(&cfg),
        Cmd::Table { .. } => table(&cfg),
        Cmd::Aht { ref report, .. } => cmd_aht(&cfg, report.as_deref()),
        Cmd::List => {
            for n in NAMES {
                println!("{n}\t{}", catalog::category(n).label());
            }
            Ok(())
        }
        Cmd::Config => {
            print!("{}", cfg.to_json());
            Ok(())
        }
    }
}

fn adapts(name: &str) -> bool {
    matches!(name, "SLIC*" | "PulsePol*" | "amp swept SLIC")
}

fn simulate(cfg: &RunConfig) -> Result<(), Failure> {
    let name = cfg.sequence()?;
    let params = cfg.params()?;
    let errors = cfg.errors();
    let mut opts = cfg.build_options();
    if adapts(name) && opts.design_df.is_none() && errors.delta_df != 0.0 {
        opts.design_df = Some(errors.delta_df);
    }
    let prog = catalog::build(name, &params, &opts).map_err(|e| Failure::Usage(e.to_string()))?;
    let sch = schedule(&prog, &params).map_err(|e| Failure::Usage(e.to_string()))?;
    let tr = evolve(&sch, &errors, &cfg.evolve).map_err(run_err)?;
    let stem = slug(name);
    let csv_path = out_path(&cfg.out_dir, &format!("{stem}_traj.csv"));
    let rows: Vec<Vec<String>> = tr
        .times
        .iter()
        .zip(&tr.records)
        .map(|(t, e)| [*t, e.sx, e.sy, e.sz, e.ix_ps, e.iy_ps, e.iz_ps, e.transfer()].map(num).to_vec())
        .collect();
    let header = ["t_s", "Sx", "Sy", "Sz", "Ix_ps", "Iy_ps", "Iz_ps", "p"];
    if cfg.wants(Format::Csv) || cfg.wants(Format::Svg) {
        output::write_csv(&csv_path, &header, &rows)?;
    }
    let fit = transfer_curve_fit(&tr);
    let p_final = tr.final_transfer();
    let summary = json!({
        "sequence": name,
        "category": catalog::category(name).label(),
        "p_final": p_final,
        "p_max": tr.transfer().into_iter().fold(f64::NEG_INFINITY, f64::max),
        "astar_over_a_fit": fit.as_ref().ok().map(|a| a / params.a),
        "fit_error": fit.as_ref().err().map(|e| e.to_string()),
        "t_total_s": sch.t_total,
        "reps": prog.reps,
        "path": tr.path,
        "steps": tr.stats.steps,
        "max_midpoint_residual": tr.stats.max_residual,
        "errors_hz": errors_hz(cfg),
        "params_hz": params_hz(cfg),
    });
    if cfg.wants(Format::Json) {
        output::write_json(&out_path(&cfg.out_dir, &format!("{stem}_simulate.json")), &summary)?;
    }
    if cfg.wants(Format::Svg) {
        let cols = output::read_columns(&csv_path, &header)?;
        let series = (3..7)
            .map(|k| Series { label: header[k].to_string(), points: cols[0].iter().copied().zip(cols[k].iter().copied()).collect() })
            .collect();
        let chart = Chart { title: format!("{name} trajectory"), x_label: "t (s)".into(), y_label: "expectation".into(), series, ..Default::default() };
        std::fs::write(out_path(&cfg.out_dir, &format!("{stem}_traj.svg")), chart.to_svg())?;
        if !cfg.wants(Format::Csv) {
            std::fs::remove_file(&csv_path)?;
        }
    }
    println!("{name}: p_final = {p_final:.6}");
    Ok(())
}

fn errors_hz(cfg: &RunConfig) -> serde_json::Value {
    json!({ "d0_hz": cfg.d0_hz, "d1_hz": cfg.d1_hz, "ddf_hz": cfg.ddf_hz, "drd_hz": cfg.drd_hz, "dcs_hz": cfg.dcs_hz })
}

fn params_hz(cfg: &RunConfig) -> serde_json::Value {
    json!({ "a_hz": cfg.a_hz, "a_sigma_hz": cfg.a_sigma_hz, "j_hz": cfg.j_hz, "omega_hz": cfg.omega_hz, "omega_i_hz": cfg.omega_i_hz })
}

fn reference_lines(spec: &SweepSpec) -> Vec<(f64, String)> {
    let p = &spec.params;
    vec![(p.a / TAU, "A".into()), (p.j / TAU, "J".into()), (p.omega / TAU, "Ω".into())]
}

fn cmd_sweep(cfg: &RunConfig) -> Result<(), Failure> {
    let spec = cfg.sweep_spec()?;
    let r = sweep(&spec).map_err(run_err)?;
    let stem = format!("{}_sweep_{}", slug(&spec.sequence), spec.error.key());
    let csv_path = out_path(&cfg.out_dir, &format!("{stem}.csv"));
    let rows: Vec<Vec<String>> = r.values.iter().zip(&r.p).map(|(v, p)| vec![num(v / TAU), opt_num(*p)]).collect();
    if cfg.wants(Format::Csv) || cfg.wants(Format::Svg) {
        output::write_csv(&csv_path, &["error_Hz", "p_final"], &rows)?;
    }
    let hz = |x: Option<f64>| x.map(|v| v / TAU);
    let summary = json!({
        "sequence": spec.sequence,
        "error": spec.error,
        "p0": r.p0,
        "threshold90_Hz": hz(r.threshold90),
        "threshold80_Hz": hz(r.threshold80),
        "non_monotonic": r.non_monotonic,
        "grid_spacing": r.grid_spacing,
        "points": r.values.len(),
        "baseline_df_Hz": if spec.error == ErrorKind::DeltaDf { 0.0 } else { spec.point_setup(1.0).1.delta_df / TAU },
        "failures": r.failures.iter().map(|(i, m)| json!({ "index": i, "error_Hz": r.values[*i] / TAU, "message": m })).collect::<Vec<_>>(),
    });
    if cfg.wants(Format::Json) {
        output::write_json(&out_path(&cfg.out_dir, &format!("{stem}.json")), &summary)?;
    }
    if cfg.wants(Format::Svg) {
        let cols = output::read_columns(&csv_path, &["error_Hz", "p_final"])?;
        let mut vlines = reference_lines(&spec);
        if let Some(t) = hz(r.threshold90) {
            vlines.push((t, "90 %".into()));
        }
        let chart = Chart {
            title: format!("{} vs {}", spec.sequence, spec.error.key()),
            x_label: format!("{} (Hz)", spec.error.key()),
            y_label: "p(final)".into(),
            log_x: true,
            series: vec![Series { label: "p".into(), points: cols[0].iter().copied().zip(cols[1].iter().copied()).collect() }],
            vlines,
            hlines: vec![(0.9 * r.p0, "0.9·p(0)".into())],
        };
        std::fs::write(out_path(&cfg.out_dir, &format!("{stem}.svg")), chart.to_svg())?;
        if !cfg.wants(Format::Csv) {
            std::fs::remove_file(&csv_path)?;
        }
    }
    match hz(r.threshold90) {
        Some(t) => println!("{} {}: threshold90 = {t:.3} Hz (grid factor {:.4})", spec.sequence, spec.error.key(), r.grid_spacing),
        None => println!("{} {}: threshold90 below grid", spec.sequence, spec.error.key()),
    }
    Ok(())
}

fn table(cfg: &RunConfig) -> Result<(), Failure> {
    let rows = cfg.rows.as_deref().unwrap_or("all");
    let names: Vec<&str> = if rows.trim().eq_ignore_ascii_case("all") {
        NAMES.to_vec()
    } else {
        rows.split(',')
            .map(|s| catalog::canonical(s).ok_or_else(|| Failure::Usage(format!("unknown sequence {:?}", s.trim()))))
            .collect::<Result<_, _>>()?
    };
    let base = SweepSpec {
        params: cfg.params()?,
        per_decade: cfg.per_decade,
        grid_min: cfg.grid_min_hz.map(|x| x * TAU),
        grid_max: cfg.grid_max_hz.map(|x| x * TAU),
        evolve: cfg.evolve,
        threads: cfg.threads,
        ..SweepSpec::new("SLIC", ErrorKind::DeltaDf)
    };
    let table = overview_table(&names, &base);
    let header = ["name", "category", "Astar_over_A", "dDF_Hz", "d0_Hz", "d1_Hz", "dCS_Hz", "dRD_Hz", "grid_spacing"];
    let csv_rows: Vec<Vec<String>> = table
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                r.category.clone(),
                r.astar_over_a.map(|a| format!("{a:.3}")).unwrap_or_default(),
                opt_num(r.ddf_hz),
                opt_num(r.d0_hz),
                opt_num(r.d1_hz),
                opt_num(r.dcs_hz),
                opt_num(r.drd_hz),
                format!("{:.5}", r.grid_spacing),
            ]
        })
        .collect();
    if cfg.wants(Format::Csv) {
        output::write_csv(&out_path(&cfg.out_dir, "table.csv"), &header, &csv_rows)?;
    }
    if cfg.wants(Format::Json) {
        output::write_json(&out_path(&cfg.out_dir, "table.json"), &table)?;
    }
    let failures: Vec<_> = table.iter().filter(|r| !r.notes.is_empty()).map(|r| json!({ "name": r.name, "notes": r.notes })).collect();
    if !failures.is_empty() {
        output::write_json(&out_path(&cfg.out_dir, "table_failures.json"), &failures)?;
    }
    println!("{}", header.join("\t"));
    for r in &csv_rows {
        println!("{}", r.join("\t"));
    }
    Ok(())
}

fn cmd_aht(cfg: &RunConfig, report: Option<&str>) -> Result<(), Failure> {
    let name = cfg.sequence()?;
    let params = cfg.params()?;
    let opts = cfg.build_options();
    let prog = catalog::build(name, &params, &opts).map_err(|e| Failure::Usage(e.to_string()))?;
    let trace = aht::toggling_trace(&prog, &params).map_err(run_err)?;
    let coupling = aht::effective_coupling(&trace, params.j).map_err(run_err)?;
    let alpha = aht::net_precession(&prog, &params).ok();
    let (cert, window) = catalog::certificate(name, &params, &opts).map_err(run_err)?;
    let ct = aht::toggling_trace(&cert, &params).map_err(run_err)?;
    let tensor = aht::dipolar_average_tensor(&ct, ct.core_start, window).map_err(run_err)?;
    let status = if tensor.residual <= 1e-6 { "suppressing" } else { "not suppressing" };
    let stem = format!("{}_aht", slug(name));
    let stride = trace.times.len().div_ceil(20_000).max(1);
    let header = ["t_s", "fx", "fy", "fz", "fxx", "fxy", "fxz", "fyy", "fyz", "fzz"];
    let rows: Vec<Vec<String>> = (0..trace.times.len())
        .step_by(stride)
        .map(|k| {
            let f = trace.f[k];
            let q = trace.quad[k];
            [trace.times[k], f[0], f[1], f[2], q[0], q[1], q[2], q[3], q[4], q[5]].map(num).to_vec()
        })
        .collect();
    let csv_path = out_path(&cfg.out_dir, &format!("{stem}.csv"));
    if cfg.wants(Format::Csv) || cfg.wants(Format::Svg) {
        output::write_csv(&csv_path, &header, &rows)?;
    }
    let summary = json!({
        "sequence": name,
        "astar_over_a": coupling.astar_over_a,
        "coupling": coupling,
        "alpha_rad": alpha,
        "alpha_pi": alpha.map(|a| a / PI),
        "period_s": trace.period,
        "window_s": window,
        "dipolar_residual": tensor.residual,
        "dipolar_tensor": tensor.m,
        "status": status,
    });
    if cfg.wants(Format::Json) {
        output::write_json(&out_path(&cfg.out_dir, &format!("{stem}.json")), &summary)?;
    }
    if cfg.wants(Format::Svg) {
        let cols = output::read_columns(&csv_path, &header)?;
        let panel = |ks: std::ops::Range<usize>, title: &str| Chart {
            title: format!("{name}: {title}"),
            x_label: "t (s)".into(),
            y_label: "toggling frame".into(),
            series: ks
                .map(|k| Series { label: header[k].to_string(), points: cols[0].iter().copied().zip(cols[k].iter().copied()).collect() })
                .collect(),
            ..Default::default()
        };
        std::fs::write(out_path(&cfg.out_dir, &format!("{stem}_f.svg")), panel(1..4, "S_z in the rotating frame").to_svg())?;
        std::fs::write(out_path(&cfg.out_dir, &format!("{stem}_quad.svg")), panel(4..10, "quadratic products").to_svg())?;
        if !cfg.wants(Format::Csv) {
            std::fs::remove_file(&csv_path)?;
        }
    }
    match report.map(str::to_ascii_lowercase).as_deref() {
        None => println!(
            "{name}: A*/A = {:.4}, alpha = {}, dipolar residual = {:.3e} ({status})",
            coupling.astar_over_a,
            alpha.map_or("n/a".into(), |a| format!("{:.4}π", a / PI)),
            tensor.residual
        ),
        Some("alpha") => match alpha {
            Some(a) => println!("alpha = {:.6}π ({a:.6} rad)", a / PI),
            None => println!("alpha = n/a (a repetition is not a z rotation)"),
        },
        Some("astar") => println!("A*/A = {:.6}", coupling.astar_over_a),
        Some("residual") => println!("residual = {:.3e} ({status})", tensor.residual),
        Some(other) => return Err(Failure::Usage(format!("unknown report {other:?} (alpha, astar, residual)"))),
    }
    Ok(())
}
