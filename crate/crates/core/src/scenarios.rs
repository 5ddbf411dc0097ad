//! Experiment front end: scenario configuration (defaults, presets, flat
//! key = value config text), bath-fit caching, trajectory analysis
//! (oscillation detection, leakage, phase sweeps, propagator comparison),
//! and file emission (CSV, metadata sidecar, bath expansion, SVG plot).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::bath::{
    expand_correlation, BathExpansion, CorrelationSettings, DrudeLorentzTerm, SpectralDensity,
    DEFAULT_GAMMA_CM, DEFAULT_LAMBDA_CM,
};
use crate::linalg::CMat;
use crate::model::{
    builtin_site_energies, builtin_table_checksums, fnv1a64, parse_site_energies,
    parse_site_label, site_label, EnergySet, Monomer, StateSpec, TrimerHamiltonian, N_SITES,
};
use crate::propagator::{
    lindblad_propagate, zofe_propagate, PropagationOptions, Trajectory,
};
use crate::{Error, Real, Result};

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

/// Which master equation drives the run.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Non-Markovian auxiliary-operator propagation (the default).
    Zofe,
    /// Memoryless comparison run; dephasing rate derived from the fitted bath.
    Markovian,
    /// No environment at all.
    Unitary,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zofe" => Ok(Mode::Zofe),
            "markovian" => Ok(Mode::Markovian),
            "unitary" => Ok(Mode::Unitary),
            other => Err(Error::Config(format!(
                "mode {other:?}: expected zofe, markovian or unitary"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Zofe => "zofe",
            Mode::Markovian => "markovian",
            Mode::Unitary => "unitary",
        }
    }
}

/// Where site energies come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EnergyChoice {
    Builtin(EnergySet),
    File(PathBuf),
}

impl EnergyChoice {
    pub fn parse(s: &str) -> EnergyChoice {
        match s.trim().to_ascii_lowercase().as_str() {
            "olb" => EnergyChoice::Builtin(EnergySet::Olb),
            "sab" => EnergyChoice::Builtin(EnergySet::Sab),
            _ => EnergyChoice::File(PathBuf::from(s.trim())),
        }
    }
}

/// One complete experiment description. Build it from [`Default::default`],
/// then layer presets, config-file pairs, and command-line flags on top via
/// [`ScenarioConfig::apply_key`]; later layers win.
#[derive(Clone, Debug)]
pub struct ScenarioConfig<T> {
    pub energies: EnergyChoice,
    /// Initial state in the `Mn:amp[@phase_deg]` mini-grammar.
    pub init: String,
    pub temperature_k: T,
    pub t_max_ps: T,
    pub dt_fs: T,
    /// Overall factor on the spectral density.
    pub bath_scale: T,
    pub mode: Mode,
    /// Exponential terms the bath fit may use.
    pub n_terms: usize,
    /// Reorganization energy of the (single-term) spectral density, 1/cm.
    pub bath_lambda_cm: T,
    /// Inverse correlation time of the spectral density, 1/cm.
    pub bath_gamma_cm: T,
    /// Acceptable relative residual of the bath fit.
    pub fit_tol: T,
    /// Keep every k-th integrator sample.
    pub record_every: usize,
    /// Coherence elements to record, as site-index pairs.
    pub watch: Vec<(usize, usize)>,
    /// Output directory; nothing is written when absent.
    pub out_dir: Option<PathBuf>,
    /// Also emit a vector plot of the populations.
    pub plot: bool,
}

impl<T: Real> Default for ScenarioConfig<T> {
    fn default() -> Self {
        ScenarioConfig {
            energies: EnergyChoice::Builtin(EnergySet::Olb),
            init: "A1:1".to_string(),
            temperature_k: T::of(77.0),
            t_max_ps: T::one(),
            dt_fs: T::of(0.5),
            bath_scale: T::one(),
            mode: Mode::Zofe,
            n_terms: 4,
            bath_lambda_cm: T::of(DEFAULT_LAMBDA_CM),
            bath_gamma_cm: T::of(DEFAULT_GAMMA_CM),
            fit_tol: T::of(0.02),
            record_every: 1,
            watch: Vec::new(),
            out_dir: None,
            plot: false,
        }
    }
}

/// The config keys [`ScenarioConfig::apply_key`] accepts.
pub const CONFIG_KEYS: [&str; 15] = [
    "energies",
    "init",
    "temp",
    "tmax",
    "dt",
    "bath_scale",
    "mode",
    "terms",
    "bath_lambda",
    "bath_gamma",
    "fit_tol",
    "record_every",
    "watch",
    "out",
    "plot",
];

fn parse_num<T: Real>(key: &str, value: &str) -> Result<T> {
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got {value:?}")))?;
    Ok(T::of(v))
}

fn parse_count(key: &str, value: &str) -> Result<usize> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected a positive integer, got {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::Config(format!(
            "{key}: expected true or false, got {other:?}"
        ))),
    }
}

/// Parse a watch list like `A1:A2, B3:C4` into site-index pairs.
pub fn parse_watch_list(value: &str) -> Result<Vec<(usize, usize)>> {
    let value = value.trim();
    if value.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for pair in value.split(',') {
        let (a, b) = pair
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("watch entry {pair:?}: expected SITE:SITE")))?;
        out.push((parse_site_label(a)?, parse_site_label(b)?));
    }
    Ok(out)
}

impl<T: Real> ScenarioConfig<T> {
    /// Set one configuration key from its text value.
    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "energies" => self.energies = EnergyChoice::parse(value),
            "init" => {
                StateSpec::<T>::parse(value)?; // surface grammar errors eagerly
                self.init = value.trim().to_string();
            }
            "temp" => self.temperature_k = parse_num("temp", value)?,
            "tmax" => self.t_max_ps = parse_num("tmax", value)?,
            "dt" => self.dt_fs = parse_num("dt", value)?,
            "bath_scale" => self.bath_scale = parse_num("bath_scale", value)?,
            "mode" => self.mode = Mode::parse(value)?,
            "terms" => self.n_terms = parse_count("terms", value)?,
            "bath_lambda" => self.bath_lambda_cm = parse_num("bath_lambda", value)?,
            "bath_gamma" => self.bath_gamma_cm = parse_num("bath_gamma", value)?,
            "fit_tol" => self.fit_tol = parse_num("fit_tol", value)?,
            "record_every" => self.record_every = parse_count("record_every", value)?,
            "watch" => self.watch = parse_watch_list(value)?,
            "out" => self.out_dir = Some(PathBuf::from(value.trim())),
            "plot" => self.plot = parse_bool("plot", value)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown config key {other:?}; known keys: {}",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Apply several key = value pairs in order.
    pub fn apply_pairs<'a>(
        &mut self,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<()> {
        for (k, v) in pairs {
            self.apply_key(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max_ps > T::zero()) {
            return Err(Error::Config("tmax must be > 0".into()));
        }
        if !(self.temperature_k >= T::zero()) {
            return Err(Error::Config("temp must be >= 0".into()));
        }
        if !(self.bath_scale > T::zero()) {
            return Err(Error::Config("bath_scale must be > 0".into()));
        }
        if !(self.dt_fs > T::zero()) {
            return Err(Error::Config("dt must be > 0".into()));
        }
        if self.n_terms == 0 {
            return Err(Error::Config("terms must be >= 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be >= 1".into()));
        }
        if !(self.bath_lambda_cm >= T::zero()) {
            return Err(Error::Config("bath_lambda must be >= 0".into()));
        }
        if !(self.bath_gamma_cm > T::zero()) {
            return Err(Error::Config("bath_gamma must be > 0".into()));
        }
        if !(self.fit_tol > T::zero()) {
            return Err(Error::Config("fit_tol must be > 0".into()));
        }
        for &(r, c) in &self.watch {
            if r >= N_SITES || c >= N_SITES {
                return Err(Error::Config("watch entry outside the site space".into()));
            }
        }
        StateSpec::<T>::parse(&self.init)?;
        Ok(())
    }

    /// The spectral density this configuration describes.
    pub fn spectral_density(&self) -> SpectralDensity<T> {
        SpectralDensity {
            terms: vec![DrudeLorentzTerm {
                lambda_cm: self.bath_lambda_cm,
                gamma_cm: self.bath_gamma_cm,
            }],
            scale: self.bath_scale,
        }
    }
}

/// Parse flat `key = value` config text: one pair per line, `#` starts a
/// comment, blank lines are skipped. Returns the pairs in file order.
pub fn parse_kv_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "config line {}: expected key = value, got {raw:?}",
                lineno + 1
            ))
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// Presets.
// ---------------------------------------------------------------------------

/// Named experiment presets: population transfer for each built-in energy set,
/// starting BChl and benchmark temperature, plus comparison variants.
pub fn preset_table() -> Vec<(String, Vec<(&'static str, String)>)> {
    let mut table = Vec::new();
    for set in ["olb", "sab"] {
        for bchl in ["a1", "a6", "a8"] {
            for (suffix, kelvin) in [("77k", "77"), ("300k", "300")] {
                let name = format!("{set}-{bchl}-{suffix}");
                let overrides = vec![
                    ("energies", set.to_string()),
                    ("init", format!("{}:1", bchl.to_uppercase())),
                    ("temp", kelvin.to_string()),
                ];
                table.push((name, overrides));
            }
        }
    }
    table.push((
        "olb-a1-77k-markovian".to_string(),
        vec![
            ("energies", "olb".to_string()),
            ("init", "A1:1".to_string()),
            ("temp", "77".to_string()),
            ("mode", "markovian".to_string()),
        ],
    ));
    table.push((
        "olb-a1-77k-x4".to_string(),
        vec![
            ("energies", "olb".to_string()),
            ("init", "A1:1".to_string()),
            ("temp", "77".to_string()),
            ("bath_scale", "4".to_string()),
        ],
    ));
    // Cross-monomer superposition used by the relative-phase sweep.
    table.push((
        "olb-a1b1-77k".to_string(),
        vec![
            ("energies", "olb".to_string()),
            ("init", "A1:1,B1:1".to_string()),
            ("temp", "77".to_string()),
        ],
    ));
    // Excitation shared equally by the same BChl of all three monomers.
    table.push((
        "olb-a1-abc-77k".to_string(),
        vec![
            ("energies", "olb".to_string()),
            ("init", "A1:1,B1:1,C1:1".to_string()),
            ("temp", "77".to_string()),
        ],
    ));
    table
}

pub fn preset_names() -> Vec<String> {
    preset_table().into_iter().map(|(n, _)| n).collect()
}

/// The key = value pairs a preset layers onto the defaults.
pub fn preset_pairs(name: &str) -> Result<Vec<(&'static str, String)>> {
    preset_table()
        .into_iter()
        .find(|(n, _)| n == name)
        .map(|(_, p)| p)
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown preset {name:?}; available: {}",
                preset_names().join(", ")
            ))
        })
}

impl<T: Real> ScenarioConfig<T> {
    /// Layer a named preset onto this configuration.
    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        for (k, v) in preset_pairs(name)? {
            self.apply_key(k, &v)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Bath-fit cache and scenario execution.
// ---------------------------------------------------------------------------

fn bits<T: Real>(x: T) -> u64 {
    x.to_f64().map(f64::to_bits).unwrap_or(u64::MAX)
}

/// Memoizes bath fits across runs that share (spectral density, temperature,
/// term count, tolerance, quadrature settings).
#[derive(Default)]
pub struct BathCache<T> {
    map: HashMap<Vec<u64>, (BathExpansion<T>, T)>,
}

impl<T: Real> BathCache<T> {
    pub fn new() -> Self {
        BathCache { map: HashMap::new() }
    }

    pub fn get_or_fit(
        &mut self,
        j: &SpectralDensity<T>,
        temperature_k: T,
        n_terms: usize,
        fit_tol: T,
        settings: &CorrelationSettings<T>,
    ) -> Result<(BathExpansion<T>, T)> {
        let mut key = Vec::with_capacity(2 * j.terms.len() + 6);
        for t in &j.terms {
            key.push(bits(t.lambda_cm));
            key.push(bits(t.gamma_cm));
        }
        key.push(bits(j.scale));
        key.push(bits(temperature_k));
        key.push(n_terms as u64);
        key.push(bits(fit_tol));
        key.push(bits(settings.cutoff_mult));
        key.push(bits(settings.quad_tol));
        if let Some(hit) = self.map.get(&key) {
            return Ok(hit.clone());
        }
        let fit = expand_correlation(j, temperature_k, n_terms, fit_tol, settings)?;
        let entry = (fit.expansion, fit.relative_residual);
        self.map.insert(key, entry.clone());
        Ok(entry)
    }
}

enum Engine<T> {
    Zofe(Vec<BathExpansion<T>>),
    Lindblad(Vec<T>),
}

/// A scenario resolved up to the initial state: Hamiltonian, bath engine, and
/// stepping, reusable across initial conditions (phase sweeps).
pub struct PreparedScenario<T> {
    h: TrimerHamiltonian<T>,
    engine: Engine<T>,
    opts: PropagationOptions<T>,
    expansion: Option<BathExpansion<T>>,
    fit_residual: Option<T>,
    markov_rate: Option<T>,
    energies_canonical: String,
    energies_checksum: String,
}

fn resolve_energies<T: Real>(choice: &EnergyChoice) -> Result<([T; 8], String, String)> {
    match choice {
        EnergyChoice::Builtin(set) => {
            let checksum = builtin_table_checksums()
                .into_iter()
                .find(|(name, _)| name.ends_with(set.name()))
                .map(|(_, sum)| sum)
                .expect("builtin checksum present");
            Ok((builtin_site_energies(*set), set.name().to_string(), checksum))
        }
        EnergyChoice::File(path) => {
            let text = std::fs::read_to_string(path)?;
            let energies = parse_site_energies(&text)?;
            let checksum = format!("fnv1a64:{:016x}", fnv1a64(text.as_bytes()));
            Ok((energies, format!("file:{checksum}"), checksum))
        }
    }
}

/// Resolve everything about a configuration except its initial state.
pub fn prepare_scenario<T: Real>(
    cfg: &ScenarioConfig<T>,
    cache: &mut BathCache<T>,
) -> Result<PreparedScenario<T>> {
    cfg.validate()?;
    let (energies, energies_canonical, energies_checksum) = resolve_energies(&cfg.energies)?;
    let h = TrimerHamiltonian::with_energies(&energies);

    let opts = PropagationOptions {
        dt_fs: cfg.dt_fs,
        t_max_ps: cfg.t_max_ps,
        record_every: cfg.record_every,
        watch: cfg.watch.clone(),
        ..Default::default()
    };

    let (engine, expansion, fit_residual, markov_rate) = match cfg.mode {
        Mode::Unitary => (Engine::Lindblad(vec![T::zero()]), None, None, None),
        Mode::Zofe => {
            let (exp, residual) = cache.get_or_fit(
                &cfg.spectral_density(),
                cfg.temperature_k,
                cfg.n_terms,
                cfg.fit_tol,
                &CorrelationSettings::default(),
            )?;
            (
                Engine::Zofe(vec![exp.clone()]),
                Some(exp),
                Some(residual),
                None,
            )
        }
        Mode::Markovian => {
            let (exp, residual) = cache.get_or_fit(
                &cfg.spectral_density(),
                cfg.temperature_k,
                cfg.n_terms,
                cfg.fit_tol,
                &CorrelationSettings::default(),
            )?;
            let rate = exp.markovian_dephasing_rate();
            if !(rate >= T::zero()) {
                return Err(Error::Numerics(format!(
                    "fitted bath gives a negative memoryless dephasing rate ({rate})"
                )));
            }
            (
                Engine::Lindblad(vec![rate]),
                Some(exp),
                Some(residual),
                Some(rate),
            )
        }
    };

    Ok(PreparedScenario {
        h,
        engine,
        opts,
        expansion,
        fit_residual,
        markov_rate,
        energies_canonical,
        energies_checksum,
    })
}

/// Propagate a prepared scenario from one initial density matrix.
pub fn execute_prepared<T: Real>(
    prep: &PreparedScenario<T>,
    rho0: &CMat<T>,
) -> Result<Trajectory<T>> {
    match &prep.engine {
        Engine::Zofe(baths) => zofe_propagate(&prep.h, baths, rho0, &prep.opts),
        Engine::Lindblad(rates) => lindblad_propagate(&prep.h, rates, rho0, &prep.opts),
    }
}

/// A completed scenario: the executed configuration, its trajectory, bath
/// details, and any files written.
pub struct ScenarioRun<T> {
    pub config: ScenarioConfig<T>,
    pub init: StateSpec<T>,
    pub trajectory: Trajectory<T>,
    pub expansion: Option<BathExpansion<T>>,
    pub fit_residual: Option<T>,
    pub markov_rate: Option<T>,
    pub config_hash: String,
    pub emitted: Vec<PathBuf>,
}

impl<T: Real> ScenarioRun<T> {
    /// The monomer holding the whole initial excitation, when there is one.
    pub fn home_monomer(&self) -> Option<Monomer> {
        Monomer::ALL.into_iter().find(|&m| self.init.is_confined_to(m))
    }
}

/// Run one scenario end to end, reusing bath fits from `cache`, and emit the
/// configured output files.
pub fn run_scenario_cached<T: Real>(
    cfg: &ScenarioConfig<T>,
    cache: &mut BathCache<T>,
) -> Result<ScenarioRun<T>> {
    let prep = prepare_scenario(cfg, cache)?;
    let init = StateSpec::parse(&cfg.init)?;
    let trajectory = execute_prepared(&prep, &init.density_matrix())?;
    let config_hash = config_hash(cfg, &prep.energies_canonical, &init);
    let mut run = ScenarioRun {
        config: cfg.clone(),
        init,
        trajectory,
        expansion: prep.expansion,
        fit_residual: prep.fit_residual,
        markov_rate: prep.markov_rate,
        config_hash,
        emitted: Vec::new(),
    };
    if cfg.out_dir.is_some() {
        emit_outputs(&mut run, &prep.energies_checksum)?;
    }
    Ok(run)
}

/// [`run_scenario_cached`] with a fresh cache.
pub fn run_scenario<T: Real>(cfg: &ScenarioConfig<T>) -> Result<ScenarioRun<T>> {
    run_scenario_cached(cfg, &mut BathCache::new())
}

// ---------------------------------------------------------------------------
// Canonical form, hashing, and emission.
// ---------------------------------------------------------------------------

/// Canonical text of a parsed initial state (stable across spelling variants).
fn canonical_init<T: Real>(spec: &StateSpec<T>) -> String {
    let mut parts = Vec::new();
    for &(site, amp) in spec.components() {
        let mag = amp.norm();
        let deg = amp.arg().to_degrees();
        if deg.abs() > T::of(1e-12) {
            parts.push(format!("{}:{}@{}", site_label(site), mag, deg));
        } else {
            parts.push(format!("{}:{}", site_label(site), mag));
        }
    }
    parts.join(",")
}

fn canonical_watch(watch: &[(usize, usize)]) -> String {
    watch
        .iter()
        .map(|&(r, c)| format!("{}:{}", site_label(r), site_label(c)))
        .collect::<Vec<_>>()
        .join(",")
}

/// The physics-relevant configuration as ordered key = value lines (output
/// location and plotting do not change results and are excluded).
fn canonical_pairs<T: Real>(
    cfg: &ScenarioConfig<T>,
    energies_canonical: &str,
    init: &StateSpec<T>,
) -> Vec<(&'static str, String)> {
    vec![
        ("energies", energies_canonical.to_string()),
        ("init", canonical_init(init)),
        ("temp", format!("{}", cfg.temperature_k)),
        ("tmax", format!("{}", cfg.t_max_ps)),
        ("dt", format!("{}", cfg.dt_fs)),
        ("bath_scale", format!("{}", cfg.bath_scale)),
        ("mode", cfg.mode.name().to_string()),
        ("terms", format!("{}", cfg.n_terms)),
        ("bath_lambda", format!("{}", cfg.bath_lambda_cm)),
        ("bath_gamma", format!("{}", cfg.bath_gamma_cm)),
        ("fit_tol", format!("{}", cfg.fit_tol)),
        ("record_every", format!("{}", cfg.record_every)),
        ("watch", canonical_watch(&cfg.watch)),
    ]
}

fn config_hash<T: Real>(
    cfg: &ScenarioConfig<T>,
    energies_canonical: &str,
    init: &StateSpec<T>,
) -> String {
    let mut text = String::new();
    for (k, v) in canonical_pairs(cfg, energies_canonical, init) {
        let _ = writeln!(text, "{k} = {v}");
    }
    format!("fnv1a64:{:016x}", fnv1a64(text.as_bytes()))
}

/// CSV column header shared by every emitted population table.
pub fn csv_header() -> String {
    let mut h = String::from("t_ps");
    for site in 0..N_SITES {
        let _ = write!(h, ", P_{}", site_label(site));
    }
    h.push_str(", trace_err");
    h
}

/// Render a trajectory as CSV text: the fixed header, then one row per
/// recorded sample with full round-trip precision.
pub fn csv_string<T: Real>(traj: &Trajectory<T>) -> String {
    let mut out = csv_header();
    out.push('\n');
    for (i, &t) in traj.times_ps.iter().enumerate() {
        let _ = write!(out, "{t}");
        for n in 0..N_SITES {
            let _ = write!(out, ", {}", traj.populations[i][n]);
        }
        let _ = writeln!(out, ", {}", traj.trace_err[i]);
    }
    out
}

pub fn emit_csv<T: Real>(traj: &Trajectory<T>, path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(traj))?;
    Ok(())
}

/// Parsed-back form of an emitted CSV.
pub struct CsvData<T> {
    pub times_ps: Vec<T>,
    pub populations: Vec<[T; N_SITES]>,
    pub trace_err: Vec<T>,
}

pub fn parse_csv<T: Real>(text: &str) -> Result<CsvData<T>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("CSV is empty".into()))?;
    if header != csv_header() {
        return Err(Error::Config(format!("unexpected CSV header {header:?}")));
    }
    let mut data = CsvData {
        times_ps: Vec::new(),
        populations: Vec::new(),
        trace_err: Vec::new(),
    };
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != N_SITES + 2 {
            return Err(Error::Config(format!(
                "CSV row {}: expected {} fields, got {}",
                lineno + 2,
                N_SITES + 2,
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<T> {
            s.parse::<f64>()
                .map(T::of)
                .map_err(|_| Error::Config(format!("CSV row {}: bad number {s:?}", lineno + 2)))
        };
        data.times_ps.push(num(fields[0])?);
        let mut pops = [T::zero(); N_SITES];
        for (n, p) in pops.iter_mut().enumerate() {
            *p = num(fields[n + 1])?;
        }
        data.populations.push(pops);
        data.trace_err.push(num(fields[N_SITES + 1])?);
    }
    Ok(data)
}

/// Sidecar text describing a finished run: tool and format versions, the
/// canonical configuration with its hash, data-table checksums, and run
/// health numbers.
pub fn metadata_string<T: Real>(run: &ScenarioRun<T>, energies_checksum: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# run metadata");
    let _ = writeln!(out, "tool_version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "format = populations-csv/1");
    let _ = writeln!(out, "config_hash = {}", run.config_hash);
    let canonical = canonical_pairs(
        &run.config,
        match &run.config.energies {
            EnergyChoice::Builtin(set) => set.name(),
            EnergyChoice::File(_) => "file",
        },
        &run.init,
    );
    for (k, v) in canonical {
        let _ = writeln!(out, "{k} = {v}");
    }
    let _ = writeln!(out, "site_energies_checksum = {energies_checksum}");
    for (name, sum) in builtin_table_checksums() {
        if name.starts_with("intra") || name.starts_with("inter") {
            let _ = writeln!(out, "table_checksum_{name} = {sum}");
        }
    }
    if let Some(r) = run.fit_residual {
        let _ = writeln!(out, "bath_fit_residual = {r}");
    }
    if let Some(g) = run.markov_rate {
        let _ = writeln!(out, "markov_rate_per_ps = {g}");
    }
    let _ = writeln!(out, "n_steps = {}", run.trajectory.n_steps);
    let _ = writeln!(out, "max_herm_defect = {}", run.trajectory.max_herm_defect);
    let _ = writeln!(
        out,
        "final_trace_err = {}",
        run.trajectory.trace_err.last().copied().unwrap_or(T::zero())
    );
    out
}

fn emit_outputs<T: Real>(run: &mut ScenarioRun<T>, energies_checksum: &str) -> Result<()> {
    let dir = run.config.out_dir.clone().expect("caller checked out_dir");
    std::fs::create_dir_all(&dir)?;

    let csv_path = dir.join("populations.csv");
    emit_csv(&run.trajectory, &csv_path)?;
    run.emitted.push(csv_path);

    let meta_path = dir.join("metadata.txt");
    std::fs::write(&meta_path, metadata_string(run, energies_checksum))?;
    run.emitted.push(meta_path);

    if let Some(exp) = &run.expansion {
        let bath_path = dir.join("bath_expansion.txt");
        std::fs::write(&bath_path, exp.export_table())?;
        run.emitted.push(bath_path);
    }

    if run.config.plot {
        let svg_path = dir.join("populations.svg");
        let title = format!(
            "{} | init {} | {} K | {}",
            run.config.mode.name(),
            canonical_init(&run.init),
            run.config.temperature_k,
            match &run.config.energies {
                EnergyChoice::Builtin(set) => set.name().to_string(),
                EnergyChoice::File(p) => p.display().to_string(),
            },
        );
        std::fs::write(&svg_path, crate::plot::populations_svg(&run.trajectory, &title))?;
        run.emitted.push(svg_path);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Trajectory analysis.
// ---------------------------------------------------------------------------

/// Knobs for [`detect_oscillations`]. The prominence threshold (0.01
/// population units) sits below the smallest visible beat but above
/// integrator noise; the 0.1 ps transient covers the initial coherent swing.
#[derive(Copy, Clone, Debug)]
pub struct OscillationSettings<T> {
    /// Minimum prominence (absolute population) for a maximum to count.
    pub prominence: T,
    /// Samples at or before this time are excluded from counting and from the
    /// monotonicity verdict.
    pub transient_ps: T,
    /// Largest sample-to-sample rise still considered monotone decay.
    pub rise_tol: T,
}

impl<T: Real> Default for OscillationSettings<T> {
    fn default() -> Self {
        OscillationSettings {
            prominence: T::of(0.01),
            transient_ps: T::of(0.1),
            rise_tol: T::of(1e-4),
        }
    }
}

/// One strict local maximum accepted by [`detect_oscillations`].
#[derive(Clone, Copy, Debug)]
pub struct PeakInfo<T> {
    pub time_ps: T,
    pub value: T,
    /// Height over the higher of the two valley floors separating the peak
    /// from the nearest higher ground on each side.
    pub prominence: T,
}

/// What [`detect_oscillations`] found in one population series.
#[derive(Clone, Debug)]
pub struct OscillationReport<T> {
    pub series: String,
    /// Each strict local maximum with sufficient prominence, inside
    /// (transient, window].
    pub maxima: Vec<PeakInfo<T>>,
    /// No sample-to-sample rise above `rise_tol` after the transient.
    pub monotone_after_transient: bool,
    /// Best-fit amplitude of `A exp(-k t) + c` over the post-transient tail.
    pub decay_amplitude: T,
    /// Best-fit rate `k` (1/ps) of the tail fit.
    pub decay_rate: T,
    /// Best-fit asymptote `c` the tail relaxes toward.
    pub decay_offset: T,
    /// Relative L2 residual of the tail fit.
    pub fit_residual: T,
}

impl<T: Real> OscillationReport<T> {
    pub fn maxima_count(&self) -> usize {
        self.maxima.len()
    }

    pub fn last_maximum_time(&self) -> Option<T> {
        self.maxima.last().map(|p| p.time_ps)
    }

    /// Largest prominence among the accepted maxima (zero when none).
    pub fn max_prominence(&self) -> T {
        self.maxima
            .iter()
            .map(|p| p.prominence)
            .fold(T::zero(), |a, b| a.max(b))
    }
}

/// Prominence of a strict local maximum at `i`: its height over the higher of
/// the two valley floors separating it from the nearest higher ground (or the
/// series edge) on each side.
fn peak_prominence<T: Real>(values: &[T], i: usize) -> T {
    let peak = values[i];
    let mut left_floor = peak;
    for j in (0..i).rev() {
        if values[j] > peak {
            break;
        }
        if values[j] < left_floor {
            left_floor = values[j];
        }
    }
    let mut right_floor = peak;
    for &v in &values[i + 1..] {
        if v > peak {
            break;
        }
        if v < right_floor {
            right_floor = v;
        }
    }
    peak - left_floor.max(right_floor)
}

/// Scan one uniformly sampled population series for oscillation evidence:
/// prominent strict local maxima inside `(transient, window_ps]`, a
/// monotonicity verdict for the post-transient part, and an exponential fit
/// of that tail.
pub fn detect_oscillations<T: Real>(
    series_id: &str,
    times_ps: &[T],
    values: &[T],
    window_ps: T,
    settings: &OscillationSettings<T>,
) -> Result<OscillationReport<T>> {
    if times_ps.len() != values.len() || times_ps.len() < 3 {
        return Err(Error::Config(
            "oscillation detection needs >= 3 aligned samples".into(),
        ));
    }
    if times_ps.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("sample times must ascend".into()));
    }
    let t_end = *times_ps.last().unwrap();
    if window_ps > t_end + T::of(1e-12) {
        return Err(Error::Config(format!(
            "series ends at {t_end} ps, shorter than the {window_ps} ps window"
        )));
    }
    if !(window_ps > settings.transient_ps) {
        return Err(Error::Config(
            "window must extend beyond the transient".into(),
        ));
    }

    let mut maxima = Vec::new();
    for i in 1..values.len() - 1 {
        if !(values[i] > values[i - 1] && values[i] > values[i + 1]) {
            continue;
        }
        let t = times_ps[i];
        if t <= settings.transient_ps || t > window_ps + T::of(1e-12) {
            continue;
        }
        let prominence = peak_prominence(values, i);
        if prominence > settings.prominence {
            maxima.push(PeakInfo {
                time_ps: t,
                value: values[i],
                prominence,
            });
        }
    }

    let tail_start = times_ps
        .iter()
        .position(|&t| t > settings.transient_ps)
        .unwrap_or(times_ps.len().saturating_sub(2));
    let tail_t = &times_ps[tail_start..];
    let tail_y = &values[tail_start..];
    let mut monotone = true;
    for w in tail_y.windows(2) {
        if w[1] - w[0] > settings.rise_tol {
            monotone = false;
            break;
        }
    }
    let (amp, rate, offset, residual) = fit_exponential_decay(tail_t, tail_y);

    Ok(OscillationReport {
        series: series_id.to_string(),
        maxima,
        monotone_after_transient: monotone,
        decay_amplitude: amp,
        decay_rate: rate,
        decay_offset: offset,
        fit_residual: residual,
    })
}

/// Least-squares fit of `A exp(-k t) + c`: the offset lets the tail relax
/// toward a nonzero quasi-equilibrium instead of forcing decay to zero.
/// Initialized by a log-linear fit of `ln(y - min)` against `t`, then refined
/// with a damped Gauss-Newton pass on (A, k, c) at the original scale.
/// Returns (A, k, c, relative L2 residual).
fn fit_exponential_decay<T: Real>(times: &[T], values: &[T]) -> (T, T, T, T) {
    let n = times.len();
    let norm = values.iter().map(|&v| v * v).sum::<T>().sqrt();
    if n < 2 || norm == T::zero() {
        return (T::zero(), T::zero(), T::zero(), T::zero());
    }

    // ln (y - c0) = ln A - k t on samples clearly above the provisional
    // asymptote c0 = min(y).
    let mut c = values.iter().fold(values[0], |m, &v| m.min(v));
    let floor = T::of(1e-12);
    let (mut sx, mut sy, mut sxx, mut sxy, mut cnt) =
        (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
    for (&t, &y) in times.iter().zip(values) {
        if y - c > floor {
            let ly = (y - c).ln();
            sx += t;
            sy += ly;
            sxx += t * t;
            sxy += t * ly;
            cnt += T::one();
        }
    }
    let (mut a, mut k) = if cnt >= T::of(2.0) {
        let det = cnt * sxx - sx * sx;
        if det.abs() > T::of(1e-30) {
            let slope = (cnt * sxy - sx * sy) / det;
            let intercept = (sy - slope * sx) / cnt;
            (intercept.exp(), -slope)
        } else {
            (values[0] - c, T::zero())
        }
    } else {
        // Essentially flat series: the offset carries it all.
        (values[0] - c, T::zero())
    };

    let sum_sq = |a: T, k: T, c: T| -> T {
        times
            .iter()
            .zip(values)
            .map(|(&t, &y)| {
                let r = a * (-k * t).exp() + c - y;
                r * r
            })
            .sum()
    };
    let mut best = sum_sq(a, k, c);
    let mut mu = T::of(1e-3);
    for _ in 0..60 {
        // Normal equations for the three parameters, damped.
        let (mut jaa, mut jak, mut jac, mut jkk, mut jkc, mut jcc) = (
            T::zero(),
            T::zero(),
            T::zero(),
            T::zero(),
            T::zero(),
            T::zero(),
        );
        let (mut ga, mut gk, mut gc) = (T::zero(), T::zero(), T::zero());
        for (&t, &y) in times.iter().zip(values) {
            let e = (-k * t).exp();
            let r = a * e + c - y;
            let da = e;
            let dk = -a * t * e;
            jaa += da * da;
            jak += da * dk;
            jac += da;
            jkk += dk * dk;
            jkc += dk;
            jcc += T::one();
            ga += da * r;
            gk += dk * r;
            gc += r;
        }
        let paa = jaa + mu * (T::one() + jaa);
        let pkk = jkk + mu * (T::one() + jkk);
        let pcc = jcc + mu * (T::one() + jcc);
        let det = paa * (pkk * pcc - jkc * jkc) - jak * (jak * pcc - jkc * jac)
            + jac * (jak * jkc - pkk * jac);
        if det.abs() < T::of(1e-30) {
            break;
        }
        // Cramer solve of the damped system P s = -g.
        let (b1, b2, b3) = (-ga, -gk, -gc);
        let step_a = (b1 * (pkk * pcc - jkc * jkc) - jak * (b2 * pcc - jkc * b3)
            + jac * (b2 * jkc - pkk * b3))
            / det;
        let step_k = (paa * (b2 * pcc - jkc * b3) - b1 * (jak * pcc - jkc * jac)
            + jac * (jak * b3 - b2 * jac))
            / det;
        let step_c = (paa * (pkk * b3 - b2 * jkc) - jak * (jak * b3 - b2 * jac)
            + b1 * (jak * jkc - pkk * jac))
            / det;
        let (na, nk, nc) = (a + step_a, k + step_k, c + step_c);
        let cand = sum_sq(na, nk, nc);
        if cand.is_finite() && cand < best {
            a = na;
            k = nk;
            c = nc;
            best = cand;
            mu = (mu * T::of(0.3)).max(T::of(1e-12));
            if best.sqrt() < T::of(1e-14) * norm {
                break;
            }
        } else {
            mu *= T::of(10.0);
            if mu > T::of(1e8) {
                break;
            }
        }
    }
    (a, k, c, best.sqrt() / norm)
}

/// Largest population found outside the given monomer at any recorded time.
pub fn inter_monomer_leakage<T: Real>(traj: &Trajectory<T>, home: Monomer) -> T {
    let mut worst = T::zero();
    for i in 0..traj.times_ps.len() {
        let mut away = T::zero();
        for m in Monomer::ALL {
            if m != home {
                away += traj.monomer_population(m, i);
            }
        }
        if away > worst {
            worst = away;
        }
    }
    worst
}

/// The initial density matrices of a relative-phase sweep: the base state
/// with each component after the first rotated by `phi` degrees, for every
/// `phi` in `phases_deg`. Errors on single-component states.
pub fn phase_rotated_states<T: Real>(
    base: &StateSpec<T>,
    phases_deg: &[T],
) -> Result<Vec<CMat<T>>> {
    if base.components().len() < 2 {
        return Err(Error::Config(
            "phase sweep needs an initial state with at least two components".into(),
        ));
    }
    if phases_deg.len() < 2 {
        return Err(Error::Config("phase sweep needs at least two phases".into()));
    }
    let mut states = Vec::with_capacity(phases_deg.len());
    for &phi in phases_deg {
        let mut parts = Vec::new();
        for (k, &(site, amp)) in base.components().iter().enumerate() {
            let mag = amp.norm();
            let mut deg = amp.arg().to_degrees();
            if k > 0 {
                deg += phi;
            }
            parts.push(format!("{}:{}@{}", site_label(site), mag, deg));
        }
        let spec = StateSpec::<T>::parse(&parts.join(","))?;
        states.push(spec.density_matrix());
    }
    Ok(states)
}

/// Largest absolute population difference between any two trajectories at
/// any recorded time and site.
pub fn max_population_deviation<T: Real>(trajectories: &[Trajectory<T>]) -> T {
    let mut worst = T::zero();
    for a in 0..trajectories.len() {
        for b in a + 1..trajectories.len() {
            let (ta, tb) = (&trajectories[a], &trajectories[b]);
            for i in 0..ta.populations.len().min(tb.populations.len()) {
                for n in 0..N_SITES {
                    let d = (ta.populations[i][n] - tb.populations[i][n]).abs();
                    if d > worst {
                        worst = d;
                    }
                }
            }
        }
    }
    worst
}

/// Rerun a multi-site scenario with the relative phase of the initial state
/// rotated through `phases_deg` (applied to every component after the first)
/// and return the largest population difference any two phases produce at any
/// site and time.
pub fn phase_sweep<T: Real>(
    cfg: &ScenarioConfig<T>,
    phases_deg: &[T],
    cache: &mut BathCache<T>,
) -> Result<T> {
    let base = StateSpec::<T>::parse(&cfg.init)?;
    let initial_states = phase_rotated_states(&base, phases_deg)?;
    let prep = prepare_scenario(cfg, cache)?;
    let trajectories: Vec<Trajectory<T>> = initial_states
        .par_iter()
        .map(|rho0| execute_prepared(&prep, rho0))
        .collect::<Result<_>>()?;
    Ok(max_population_deviation(&trajectories))
}

/// Evenly spaced relative phases covering the circle.
pub fn default_phase_grid<T: Real>(n: usize) -> Vec<T> {
    (0..n).map(|k| T::of(360.0 * k as f64 / n as f64)).collect()
}

/// Population of the home monomer's BChl 3 at the end of the run under the
/// non-Markovian propagator divided by the same quantity under the
/// memoryless one (rate taken from the same fitted bath).
pub fn compare_markovian<T: Real>(
    cfg: &ScenarioConfig<T>,
    cache: &mut BathCache<T>,
) -> Result<T> {
    if cfg.mode != Mode::Zofe {
        return Err(Error::Config(
            "propagator comparison starts from a zofe-mode configuration".into(),
        ));
    }
    let init = StateSpec::<T>::parse(&cfg.init)?;
    let home = Monomer::ALL
        .into_iter()
        .find(|&m| init.is_confined_to(m))
        .ok_or_else(|| {
            Error::Config(
                "propagator comparison needs an initial state confined to one monomer".into(),
            )
        })?;
    let site3 = crate::model::site_index(home, 3);

    let full = run_scenario_cached(cfg, cache)?;
    let mut cfg_m = cfg.clone();
    cfg_m.mode = Mode::Markovian;
    cfg_m.out_dir = None;
    cfg_m.plot = false;
    let memoryless = run_scenario_cached(&cfg_m, cache)?;

    let end_f = full.trajectory.populations.len() - 1;
    let end_m = memoryless.trajectory.populations.len() - 1;
    let p_full = full.trajectory.populations[end_f][site3];
    let p_memoryless = memoryless.trajectory.populations[end_m][site3];
    if p_memoryless < T::of(1e-6) {
        return Err(Error::Numerics(format!(
            "memoryless BChl-3 population {p_memoryless:e} too small for a ratio"
        )));
    }
    Ok(p_full / p_memoryless)
}
