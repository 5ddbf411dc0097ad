//! Command-line front end: compose a scenario from defaults, an optional
//! preset, an optional flat config file and command-line flags (in that
//! order, later layers winning), run it, and report where the results went.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use fmo_dynamics::model::{site_index, Monomer};
use fmo_dynamics::scenarios::{
    compare_markovian, default_phase_grid, parse_kv_text, phase_sweep, preset_pairs,
    preset_table, run_scenario_cached, BathCache, Mode, ScenarioRun,
};
use fmo_dynamics::{Error, Result, ScenarioConfig64};

/// Excitation-energy transfer through the 24-site FMO trimer coupled to a
/// non-Markovian vibrational environment.
#[derive(Parser)]
#[command(name = "fmo-dynamics", version, about, long_about = None)]
struct Cli {
    /// Start from a named preset (see --list-presets)
    #[arg(long)]
    preset: Option<String>,

    /// Flat "key = value" config file, applied on top of the preset
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Site energies: "olb", "sab", or a path to an eight-entry table
    #[arg(long)]
    energies: Option<String>,

    /// Initial state, e.g. "A1:1" or "A1:1,B1:1@90" (normalized)
    #[arg(long)]
    init: Option<String>,

    /// Temperature in kelvin
    #[arg(long, value_name = "K")]
    temp: Option<String>,

    /// Propagation length in picoseconds
    #[arg(long, value_name = "PS")]
    tmax: Option<String>,

    /// Integrator step in femtoseconds
    #[arg(long, value_name = "FS")]
    dt: Option<String>,

    /// Overall factor on the spectral density
    #[arg(long, value_name = "FACTOR")]
    bath_scale: Option<String>,

    /// Propagator: zofe, markovian, or unitary
    #[arg(long)]
    mode: Option<String>,

    /// Exponential terms available to the bath fit
    #[arg(long, value_name = "K")]
    terms: Option<String>,

    /// Reorganization energy of the spectral density (1/cm)
    #[arg(long, value_name = "CM")]
    bath_lambda: Option<String>,

    /// Inverse correlation time of the spectral density (1/cm)
    #[arg(long, value_name = "CM")]
    bath_gamma: Option<String>,

    /// Acceptable relative residual of the bath fit
    #[arg(long, value_name = "TOL")]
    fit_tol: Option<String>,

    /// Keep every k-th integrator sample
    #[arg(long, value_name = "K")]
    record_every: Option<String>,

    /// Coherence elements to record, e.g. "A1:A2,B3:C4"
    #[arg(long, value_name = "LIST")]
    watch: Option<String>,

    /// Output directory (populations.csv, metadata.txt, bath_expansion.txt)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Also write a static SVG plot of the populations
    #[arg(long)]
    plot: bool,

    /// List the available presets and exit
    #[arg(long)]
    list_presets: bool,

    /// Run the non-Markovian vs memoryless comparison and print the
    /// final-time BChl-3 population ratio
    #[arg(long)]
    compare_markovian: bool,

    /// Sweep the relative phase of a multi-site initial state over N evenly
    /// spaced angles and print the largest population deviation
    #[arg(long, value_name = "N")]
    phase_sweep: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn list_presets() {
    println!("available presets:");
    for (name, pairs) in preset_table() {
        let desc: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("  {name:<24} {}", desc.join(" "));
    }
}

fn compose_config(cli: &Cli) -> Result<ScenarioConfig64> {
    let mut cfg = ScenarioConfig64::default();

    if let Some(name) = &cli.preset {
        for (k, v) in preset_pairs(name)? {
            cfg.apply_key(k, &v)?;
        }
    }

    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)?;
        for (k, v) in parse_kv_text(&text)? {
            cfg.apply_key(&k, &v)
                .map_err(|e| prefix_config_error(e, &format!("{}", path.display())))?;
        }
    }

    let flag_pairs: [(&str, &Option<String>); 13] = [
        ("energies", &cli.energies),
        ("init", &cli.init),
        ("temp", &cli.temp),
        ("tmax", &cli.tmax),
        ("dt", &cli.dt),
        ("bath_scale", &cli.bath_scale),
        ("mode", &cli.mode),
        ("terms", &cli.terms),
        ("bath_lambda", &cli.bath_lambda),
        ("bath_gamma", &cli.bath_gamma),
        ("fit_tol", &cli.fit_tol),
        ("record_every", &cli.record_every),
        ("watch", &cli.watch),
    ];
    for (key, value) in flag_pairs {
        if let Some(v) = value {
            cfg.apply_key(key, v)?;
        }
    }
    if let Some(dir) = &cli.out {
        cfg.out_dir = Some(dir.clone());
    }
    if cli.plot {
        cfg.plot = true;
    }

    cfg.validate()?;
    Ok(cfg)
}

fn prefix_config_error(e: Error, context: &str) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{context}: {m}")),
        other => other,
    }
}

fn summarize(run: &ScenarioRun<f64>) {
    let cfg = &run.config;
    println!(
        "mode {} | init {} | T {} K | tmax {} ps | dt {} fs | bath scale {}",
        cfg.mode.name(),
        cfg.init,
        cfg.temperature_k,
        cfg.t_max_ps,
        cfg.dt_fs,
        cfg.bath_scale,
    );
    if let Some(r) = run.fit_residual {
        println!(
            "bath fit: {} term(s), relative residual {r:.2e}",
            run.expansion.as_ref().map_or(0, |e| e.n_terms()),
        );
    }
    if let Some(g) = run.markov_rate {
        println!("memoryless dephasing rate: {g:.4} 1/ps");
    }
    let traj = &run.trajectory;
    let last = traj.times_ps.len() - 1;
    let worst_trace = traj
        .trace_err
        .iter()
        .fold(0.0f64, |acc, &e| acc.max(e.abs()));
    println!(
        "steps {} | max |trace - 1| {:.2e} | max hermiticity defect {:.2e}",
        traj.n_steps, worst_trace, traj.max_herm_defect,
    );
    for m in Monomer::ALL {
        let total = traj.monomer_population(m, last);
        let p3 = traj.populations[last][site_index(m, 3)];
        println!(
            "final monomer {}: population {:.4} (BChl 3: {:.4})",
            m.label(),
            total,
            p3,
        );
    }
    println!("config hash: {}", run.config_hash);
    for path in &run.emitted {
        println!("wrote {}", path.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.list_presets {
        list_presets();
        return Ok(());
    }

    let cfg = compose_config(&cli)?;
    let mut cache = BathCache::new();

    if cli.compare_markovian {
        if cfg.mode != Mode::Zofe {
            return Err(Error::Config(
                "--compare-markovian needs mode zofe as the baseline".into(),
            ));
        }
        let ratio = compare_markovian(&cfg, &mut cache)?;
        println!("BChl-3 population ratio (non-Markovian / memoryless): {ratio:.4}");
        return Ok(());
    }

    if let Some(n) = cli.phase_sweep {
        if n < 2 {
            return Err(Error::Config("--phase-sweep needs at least 2 angles".into()));
        }
        let grid = default_phase_grid::<f64>(n);
        let deviation = phase_sweep(&cfg, &grid, &mut cache)?;
        println!("largest population deviation across {n} relative phases: {deviation:.6}");
        return Ok(());
    }

    let run = run_scenario_cached(&cfg, &mut cache)?;
    summarize(&run);
    Ok(())
}
