//! `qns`: filter dumps, campaign simulation, spectrum reconstruction, Monte-Carlo checks and the
//! bandwidth study, all driven by a JSON experiment file.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use qns_core::config::{ExperimentConfig, NoiseSection, ProtocolKind, MHZ, US};
use qns_core::dynamics::{
    expectation_value, monte_carlo_oracle, q_quantities, second_cumulant_spherical_all, Axis, CumulantOptions, McOptions,
    MeasurementSetting, QRoute,
};
use qns_core::filters::{generalized_filters, FilterKernel};
use qns_core::pulse_control::{switching_matrix, Basis};
use qns_core::reconstruction::{
    bandwidth_study, run_protocol_large_splitting, run_protocol_zero_splitting, AssemblyDiagnostics, ReconstructionResult,
    Regularization, SIGNIFICANT_FRACTION,
};
use qns_core::QnsError;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "qns", version, about = "Multiaxis comb-based qubit noise spectroscopy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump generalized and Cartesian G⁺ filters of the configured sequences.
    Filters(Common),
    /// Q_p and cumulant coefficients per sequence; Monte-Carlo comparison when configured.
    Simulate(Common),
    /// Simulate the protocol campaign and reconstruct the spectra.
    Reconstruct(Common),
    /// Monte-Carlo trajectories against the second-order cumulant.
    Oracle(Common),
    /// Reconstruction error versus noise bandwidth at a fixed window.
    BandwidthStudy(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment file; the 27 GHz three-Gaussian setup when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shots per expectation value, or "inf" for exact values.
    #[arg(long, default_value = "inf", value_parser = parse_shots)]
    shots: Shots,
    /// Fixed Tikhonov λ; automatic when omitted.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Clone, Copy)]
struct Shots(Option<u64>);

fn parse_shots(s: &str) -> std::result::Result<Shots, String> {
    if s.eq_ignore_ascii_case("inf") {
        return Ok(Shots(None));
    }
    match s.parse::<u64>() {
        Ok(n) if n > 0 => Ok(Shots(Some(n))),
        _ => Err(format!("expected a positive integer or \"inf\", got {s:?}")),
    }
}

const DEFAULT_CONFIG: &str = r#"{"system": {"splitting_hz": 27e9}, "noise": {"type": "gaussian_triple"}}"#;

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let text = match &self.config {
            Some(p) => fs::read_to_string(p).map_err(|e| QnsError::InvalidInput(format!("cannot read {}: {e}", p.display())))?,
            None => DEFAULT_CONFIG.to_string(),
        };
        let mut cfg = ExperimentConfig::from_json(&text)?;
        if cfg.noise.is_none() {
            cfg.noise = Some(ExperimentConfig::from_json(DEFAULT_CONFIG)?.noise.expect("default noise"));
        }
        Ok(cfg)
    }

    fn regularization(&self) -> Result<Regularization> {
        match self.lambda {
            None => Ok(Regularization::Auto),
            Some(l) if l.is_finite() && l >= 0.0 => Ok(Regularization::Fixed(l)),
            Some(l) => Err(QnsError::InvalidInput(format!("λ must be finite and non-negative, got {l}")).into()),
        }
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    info!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

#[derive(Serialize)]
struct FilterRow {
    sequence_id: String,
    filter: String,
    omega_rad_s: f64,
    re: f64,
    im: f64,
}

fn axis_label(i: usize) -> &'static str {
    ["x", "y", "z"][i]
}

fn cartesian_index(label: &str) -> Result<usize> {
    ["x", "y", "z"]
        .iter()
        .position(|&s| s == label.trim().to_lowercase())
        .ok_or_else(|| QnsError::InvalidInput(format!("filter entry axis {label:?} is not x, y or z")).into())
}

fn run_filters(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let section = cfg.filters.as_ref().ok_or_else(|| QnsError::InvalidInput("config has no filters section".into()))?;
    let omegas = section.grid.omegas()?;
    if let Some(&p) = section.p.iter().find(|&&p| !(1..=4).contains(&p)) {
        return Err(QnsError::InvalidInput(format!("generalized filter index {p} not in 1..4")).into());
    }
    let entries: Vec<((usize, usize), (usize, usize))> = section
        .entries
        .iter()
        .map(|e| Ok(((cartesian_index(&e[0])?, cartesian_index(&e[1])?), (cartesian_index(&e[2])?, cartesian_index(&e[3])?))))
        .collect::<Result<_>>()?;
    let splitting = cfg.system_config()?.splitting;
    let mut rows = Vec::new();
    for (id, seq) in cfg.sequences()? {
        let t = seq.duration();
        let sph = FilterKernel::new(&switching_matrix(&seq, Basis::Spherical), t)?;
        let cart = FilterKernel::new(&switching_matrix(&seq, Basis::Cartesian), t)?;
        for &w in &omegas {
            let g = generalized_filters(&sph, w, splitting);
            for &p in &section.p {
                for j in 0..3 {
                    for l in 0..3 {
                        let v = g[p - 1][j][l];
                        let filter = format!("G{p}_{{{},{}}}", j as i32 - 1, l as i32 - 1);
                        rows.push(FilterRow { sequence_id: id.clone(), filter, omega_rad_s: w, re: v.re, im: v.im });
                    }
                }
            }
            for &(ea, eb) in &entries {
                let v = cart.g_entry(ea, eb, w, -w).0;
                let filter =
                    format!("G+_{{{}{};{}{}}}", axis_label(ea.0), axis_label(ea.1), axis_label(eb.0), axis_label(eb.1));
                rows.push(FilterRow { sequence_id: id.clone(), filter, omega_rad_s: w, re: v.re, im: v.im });
            }
        }
    }
    write_csv(&c.out_dir()?.join("filters.csv"), &rows)
}

#[derive(Serialize)]
struct QuantityRow {
    sequence_id: String,
    #[serde(rename = "T_c")]
    t_c: f64,
    #[serde(rename = "M")]
    m: usize,
    quantity: String,
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct McRow {
    sequence_id: String,
    prep: String,
    observable: String,
    mc_mean: f64,
    mc_std_err: f64,
    halving_shift: f64,
    analytic: f64,
    deviation: f64,
    within_tolerance: bool,
}

const COEFF_LABELS: [&str; 4] = ["0", "x", "y", "z"];

fn run_simulate(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let noise = cfg.noise_model()?;
    let sys = cfg.system_config()?;
    let mut rows = Vec::new();
    for (id, seq) in cfg.sequences()? {
        info!("simulating {id}");
        let row = |quantity: String, z: num_complex::Complex64| QuantityRow {
            sequence_id: id.clone(),
            t_c: seq.cycle_time(),
            m: seq.repetitions(),
            quantity,
            re: z.re,
            im: z.im,
        };
        let q = q_quantities(&seq, &noise, &sys, QRoute::Cumulant, false)?;
        for (p, z) in q.iter().enumerate() {
            rows.push(row(format!("Q{}", p + 1), *z));
        }
        for cg in second_cumulant_spherical_all(&seq, &noise, &sys, CumulantOptions::default())? {
            for (b, z) in cg.c.iter().enumerate() {
                rows.push(row(format!("C_{}{}", cg.gamma.label(), COEFF_LABELS[b]), *z));
            }
        }
    }
    let out = c.out_dir()?;
    write_csv(&out.join("quantities.csv"), &rows)?;
    if cfg.monte_carlo.is_some() {
        write_csv(&out.join("monte_carlo.csv"), &monte_carlo_rows(&cfg, c.seed)?)?;
    }
    Ok(())
}

fn monte_carlo_rows(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<McRow>> {
    let noise = cfg.noise_model()?;
    let sys = cfg.system_config()?;
    let mut rows = Vec::new();
    for (i, (id, seq)) in cfg.sequences()?.into_iter().enumerate() {
        let (trajectories, dt) = match &cfg.monte_carlo {
            Some(m) => (m.trajectories, m.dt_us * US),
            None => (2000, seq.cycle_time() / 200.0),
        };
        info!("Monte-Carlo for {id}: {trajectories} trajectories, dt = {dt:e} s");
        let c = second_cumulant_spherical_all(&seq, &noise, &sys, CumulantOptions::default())?;
        let settings: Vec<MeasurementSetting> = Axis::ALL.iter().flat_map(|&g| MeasurementSetting::all_for(g)).collect();
        let opts = McOptions::new(trajectories, dt, seed.wrapping_add(i as u64));
        for e in monte_carlo_oracle(&seq, &noise, &sys, &settings, &opts)? {
            let analytic = expectation_value(&e.setting.rho(), &c[e.setting.observable.index()])?;
            let deviation = e.mean - analytic;
            let sign = if e.setting.sign.value() > 0.0 { "+" } else { "-" };
            rows.push(McRow {
                sequence_id: id.clone(),
                prep: format!("{sign}{}", e.setting.prep.label()),
                observable: e.setting.observable.label().to_string(),
                mc_mean: e.mean,
                mc_std_err: e.std_err,
                halving_shift: e.halving_shift,
                analytic,
                deviation,
                within_tolerance: deviation.abs() < (3.0 * e.std_err).max(1e-2),
            });
        }
    }
    Ok(rows)
}

fn run_oracle(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let rows = monte_carlo_rows(&cfg, c.seed)?;
    let failed = rows.iter().filter(|r| !r.within_tolerance).count();
    write_csv(&c.out_dir()?.join("monte_carlo.csv"), &rows)?;
    println!("{} settings, {failed} outside max(3·SE, 1e-2)", rows.len());
    Ok(())
}

#[derive(Serialize)]
struct SpectrumRow<'a> {
    spectrum_id: &'a str,
    omega_rad_s: f64,
    s_true_re: Option<f64>,
    s_true_im: Option<f64>,
    s_hat_re: f64,
    s_hat_im: f64,
}

#[derive(Serialize)]
struct SpectrumError {
    spectrum_id: String,
    relative_rms: Option<f64>,
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    protocol: &'static str,
    shots: Option<u64>,
    seed: u64,
    condition_number: f64,
    residual_norm: f64,
    /// ‖Ax − b‖/‖b‖ of the equilibrated system.
    relative_residual: f64,
    lambda: f64,
    qr_discrepancy: Option<f64>,
    assembly: &'a AssemblyDiagnostics,
    significant_fraction: f64,
    errors: Vec<SpectrumError>,
}

fn write_reconstruction(out: &Path, result: &ReconstructionResult, diag: Diagnostics) -> Result<()> {
    let mut rows = Vec::new();
    for e in &result.estimates {
        for (i, (&w, s)) in e.omega.iter().zip(&e.s_hat).enumerate() {
            let t = e.s_true.as_ref().map(|t| t[i]);
            rows.push(SpectrumRow {
                spectrum_id: &e.id,
                omega_rad_s: w,
                s_true_re: t.map(|z| z.re),
                s_true_im: t.map(|z| z.im),
                s_hat_re: s.re,
                s_hat_im: s.im,
            });
        }
    }
    write_csv(&out.join("spectra.csv"), &rows)?;
    let path = out.join("diagnostics.json");
    fs::write(&path, serde_json::to_string_pretty(&diag)?).with_context(|| format!("writing {}", path.display()))?;
    for e in &diag.errors {
        match e.relative_rms {
            Some(r) => println!("{}: relative RMS {:.4}", e.spectrum_id, r),
            None => println!("{}: no ground truth", e.spectrum_id),
        }
    }
    Ok(())
}

fn errors_of(result: &ReconstructionResult) -> Vec<SpectrumError> {
    result
        .estimates
        .iter()
        .map(|e| SpectrumError { spectrum_id: e.id.clone(), relative_rms: e.relative_rms(SIGNIFICANT_FRACTION) })
        .collect()
}

fn run_reconstruct(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let noise = cfg.noise_model()?;
    let reg = c.regularization()?;
    let out = c.out_dir()?;
    match cfg.protocol.kind {
        ProtocolKind::LargeSplitting => {
            let params = cfg.large_splitting_params(c.shots.0, c.seed, reg)?;
            let o = run_protocol_large_splitting(&noise, &params)?;
            let diag = Diagnostics {
                protocol: "large_splitting",
                shots: c.shots.0,
                seed: c.seed,
                condition_number: o.result.condition_number,
                residual_norm: o.result.residual_norm,
                relative_residual: o.result.residual_norm / o.system.b.norm(),
                lambda: o.result.lambda,
                qr_discrepancy: o.result.qr_discrepancy,
                assembly: &o.system.diagnostics,
                significant_fraction: SIGNIFICANT_FRACTION,
                errors: errors_of(&o.result),
            };
            write_reconstruction(out, &o.result, diag)
        }
        ProtocolKind::ZeroSplitting => {
            if c.shots.0.is_some() {
                return Err(QnsError::InvalidInput("the zero-splitting protocol works with exact coefficients; use --shots inf".into()).into());
            }
            let params = cfg.zero_splitting_params(reg)?;
            let o = run_protocol_zero_splitting(&noise, &params)?;
            let diag = Diagnostics {
                protocol: "zero_splitting",
                shots: None,
                seed: c.seed,
                condition_number: o.result.condition_number,
                residual_norm: o.result.residual_norm,
                relative_residual: o.result.residual_norm / o.system.b.norm(),
                lambda: o.result.lambda,
                qr_discrepancy: o.result.qr_discrepancy,
                assembly: &o.system.diagnostics,
                significant_fraction: SIGNIFICANT_FRACTION,
                errors: errors_of(&o.result),
            };
            write_reconstruction(out, &o.result, diag)
        }
    }
}

#[derive(Serialize)]
struct BandwidthCsvRow {
    width_mhz: f64,
    error: f64,
    masked_error: f64,
    tail_bound: Option<f64>,
    support_edge_rad_s: f64,
    tail_warning: bool,
}

fn run_bandwidth(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let base = match &cfg.noise {
        Some(NoiseSection::GaussianTriple { .. }) => cfg.gaussian_params().expect("gaussian section"),
        _ => return Err(QnsError::InvalidInput("the bandwidth study needs a gaussian_triple noise section".into()).into()),
    };
    let params = cfg.large_splitting_params(c.shots.0, c.seed, c.regularization()?)?;
    let rows: Vec<BandwidthCsvRow> = bandwidth_study(&base, &cfg.study_widths(), &params)?
        .into_iter()
        .map(|r| BandwidthCsvRow {
            width_mhz: r.width / MHZ,
            error: r.error,
            masked_error: r.masked_error,
            tail_bound: r.tail_bound,
            support_edge_rad_s: r.support_edge,
            tail_warning: r.tail_warning,
        })
        .collect();
    for r in &rows {
        let warn = if r.tail_warning { " (tail warning)" } else { "" };
        println!("Δ/2π = {:.2} MHz: error {:.4}{warn}", r.width_mhz, r.error);
    }
    write_csv(&c.out_dir()?.join("bandwidth.csv"), &rows)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<QnsError>() {
        Some(QnsError::SolverFailure(_)) => 2,
        Some(QnsError::InvalidInput(_)) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Filters(c) => run_filters(c),
        Command::Simulate(c) => run_simulate(c),
        Command::Reconstruct(c) => run_reconstruct(c),
        Command::Oracle(c) => run_oracle(c),
        Command::BandwidthStudy(c) => run_bandwidth(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
