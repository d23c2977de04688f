//! `modedec` command line: JSON run configuration, subcommands and report
//! writers. Frequencies in the configuration are kHz unless
//! `frequency_unit` says `rad_s`; they are converted once, here.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::cascade::{alpha_fixed_point, build_cascade, FrameCascade, ModeDesign};
use crate::error::{Error, Result};
use crate::resonance::{gap_report, min_gap_with_threshold};
use crate::spinsim::{
    efficiency, inhomogeneity_sweep, offset_sweep, propagate, uniform_grid, Engine, SimConfig,
    SpinSystem,
};
use crate::units::{hz_to_rad_s, khz_to_rad_s, rad_s_to_hz, rad_s_to_khz};
use crate::waveform::{
    export_shape, make_cw, make_tppm, max_amplitude, mode_rms_limit, phase_degrees,
    rms_amplitude, synthesize_mode, ShapeFormat, Waveform,
};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Bisection steps allowed when equalizing RMS power across sequences.
pub const RMS_BISECTION_STEPS: usize = 50;
/// Relative RMS mismatch accepted after equalization.
pub const RMS_MATCH_TOLERANCE: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyUnit {
    #[default]
    Khz,
    RadS,
}

impl FrequencyUnit {
    fn to_rad_s(self, value: f64) -> f64 {
        match self {
            FrequencyUnit::Khz => khz_to_rad_s(value),
            FrequencyUnit::RadS => value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSection {
    pub n_frames: usize,
    /// Common amplitude of every level; ignored when `w_levels` is given.
    pub w0: f64,
    pub w_levels: Option<Vec<f64>>,
    pub c0: f64,
    pub delta_design: f64,
}

impl Default for DesignSection {
    fn default() -> Self {
        DesignSection {
            n_frames: 6,
            w0: 4.8,
            w_levels: None,
            c0: 22.5,
            delta_design: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub j_hz: f64,
    /// Defaults to twelve coupling periods.
    pub duration_ms: Option<f64>,
    pub dt_us: f64,
    pub record_us: f64,
    /// Offset used by `simulate`.
    pub omega0: f64,
    /// Offset grid for `sweep` and `compare`; defaults to 41 points over `[−c0, c0]`.
    pub offsets: Option<OffsetGrid>,
    pub epsilon: Vec<f64>,
    pub engine: Engine,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            j_hz: 140.0,
            duration_ms: None,
            dt_us: 0.5,
            record_us: 10.0,
            omega0: 6.25,
            offsets: None,
            epsilon: vec![1.0],
            engine: Engine::Factorized2x2,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    #[default]
    Mode,
    Tppm,
    Cw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TppmSection {
    /// Defaults to a 165° pulse at the TPPM amplitude.
    pub tip_us: Option<f64>,
    pub phase_deg: f64,
}

impl Default for TppmSection {
    fn default() -> Self {
        TppmSection {
            tip_us: None,
            phase_deg: 15.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapSection {
    pub threshold_hz: f64,
}

impl Default for GapSection {
    fn default() -> Self {
        GapSection { threshold_hz: 500.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    /// MODE sequences with `1..=max_frames` modulations are compared.
    pub max_frames: usize,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection { max_frames: 6 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
    Bruker,
}

impl From<OutputFormat> for ShapeFormat {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Csv => ShapeFormat::Csv,
            OutputFormat::Json => ShapeFormat::Json,
            OutputFormat::Bruker => ShapeFormat::BrukerText,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            format: OutputFormat::Csv,
        }
    }
}

/// Complete run configuration as read from JSON.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub frequency_unit: FrequencyUnit,
    pub design: DesignSection,
    pub sim: SimSection,
    pub baseline: Baseline,
    pub tppm: TppmSection,
    pub gap: GapSection,
    pub compare: CompareSection,
    pub output: OutputSection,
}

/// The configuration after unit conversion, in SI and rad/s.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub design: ModeDesign,
    pub j_hz: f64,
    pub duration: f64,
    pub dt: f64,
    pub record_interval: f64,
    pub omega0: f64,
    pub offsets: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub engine: Engine,
    pub tppm_tip: Option<f64>,
    pub tppm_phase: f64,
    pub gap_threshold: f64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid("config", e.to_string()))
    }

    /// Fills defaults that depend on other fields so the echoed
    /// configuration is fully explicit.
    pub fn fill_defaults(&mut self) {
        if self.sim.duration_ms.is_none() && self.sim.j_hz > 0.0 {
            self.sim.duration_ms = Some(12.0 / self.sim.j_hz * 1e3);
        }
        if self.sim.offsets.is_none() {
            let c0 = self.design.c0;
            self.sim.offsets = Some(OffsetGrid {
                min: -c0,
                max: c0,
                count: 41,
            });
        }
        if self.design.w_levels.is_none() {
            self.design.w_levels = Some(vec![self.design.w0; self.design.n_frames + 1]);
        }
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let mut cfg = self.clone();
        cfg.fill_defaults();
        let unit = cfg.frequency_unit;
        let levels = cfg.design.w_levels.clone().unwrap_or_default();
        if levels.len() != cfg.design.n_frames + 1 {
            return Err(Error::invalid(
                "design.w_levels",
                format!(
                    "{} levels given, n_frames = {} needs {}",
                    levels.len(),
                    cfg.design.n_frames,
                    cfg.design.n_frames + 1
                ),
            ));
        }
        let design = ModeDesign::new(
            levels.into_iter().map(|w| unit.to_rad_s(w)).collect(),
            unit.to_rad_s(cfg.design.c0),
            cfg.design.delta_design,
        )?;
        let sim = &cfg.sim;
        if !(sim.j_hz.is_finite() && sim.j_hz >= 0.0) {
            return Err(Error::invalid("sim.j_hz", format!("{} must be >= 0", sim.j_hz)));
        }
        let duration = sim
            .duration_ms
            .ok_or_else(|| Error::invalid("sim.duration_ms", "required when j_hz = 0"))?
            * 1e-3;
        let dt = sim.dt_us * 1e-6;
        let record_interval = sim.record_us * 1e-6;
        SimConfig::new(duration, dt, 1.0, sim.engine)?
            .with_record_interval(record_interval)
            .validate()?;
        if sim.epsilon.is_empty() {
            return Err(Error::invalid("sim.epsilon", "empty list"));
        }
        if let Some(e) = sim.epsilon.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(Error::invalid("sim.epsilon", format!("{e} must be positive")));
        }
        let grid = sim.offsets.clone().expect("filled above");
        if grid.count == 0 || !(grid.min.is_finite() && grid.max.is_finite()) {
            return Err(Error::invalid("sim.offsets", "need a finite range and count >= 1"));
        }
        let offsets = uniform_grid(unit.to_rad_s(grid.min), unit.to_rad_s(grid.max), grid.count);
        if let Some(tip) = cfg.tppm.tip_us {
            if !(tip.is_finite() && tip > 0.0) {
                return Err(Error::invalid("tppm.tip_us", format!("{tip} must be positive")));
            }
        }
        if !(cfg.gap.threshold_hz.is_finite() && cfg.gap.threshold_hz >= 0.0) {
            return Err(Error::invalid("gap.threshold_hz", "must be >= 0"));
        }
        if cfg.compare.max_frames == 0 {
            return Err(Error::invalid("compare.max_frames", "must be >= 1"));
        }
        Ok(Resolved {
            design,
            j_hz: sim.j_hz,
            duration,
            dt,
            record_interval,
            omega0: unit.to_rad_s(sim.omega0),
            offsets,
            epsilons: sim.epsilon.clone(),
            engine: sim.engine,
            tppm_tip: cfg.tppm.tip_us.map(|t| t * 1e-6),
            tppm_phase: cfg.tppm.phase_deg.to_radians(),
            gap_threshold: hz_to_rad_s(cfg.gap.threshold_hz),
        })
    }
}

impl Resolved {
    pub fn sim_config(&self, epsilon: f64) -> Result<SimConfig> {
        Ok(SimConfig::new(self.duration, self.dt, epsilon, self.engine)?
            .with_record_interval(self.record_interval))
    }

    pub fn system(&self) -> SpinSystem {
        SpinSystem::new(self.j_hz, self.omega0)
    }

    pub fn mode_waveform(&self) -> Result<Waveform> {
        let cascade = build_cascade(&self.design);
        synthesize_mode(&self.design, &cascade, self.duration, self.dt)
    }

    /// Waveform selected by `baseline`; TPPM and CW run at the MODE RMS.
    pub fn baseline_waveform(&self, baseline: Baseline) -> Result<Waveform> {
        let mode = self.mode_waveform()?;
        match baseline {
            Baseline::Mode => Ok(mode),
            Baseline::Cw => make_cw(rms_amplitude(&mode), self.duration, self.dt),
            Baseline::Tppm => self.tppm_waveform(rms_amplitude(&mode)),
        }
    }

    fn tppm_waveform(&self, amplitude: f64) -> Result<Waveform> {
        let tip = self
            .tppm_tip
            .unwrap_or_else(|| (165.0 / 360.0) / rad_s_to_hz(amplitude));
        make_tppm(amplitude, tip, self.tppm_phase, self.duration, self.dt)
    }
}

#[derive(Debug, Parser)]
#[command(name = "modedec", version, about = "Design and verify multiply-modulated decoupling fields")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Default, clap::Args)]
pub struct Overrides {
    /// JSON run configuration; defaults apply to missing fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long = "dt-us", global = true)]
    pub dt_us: Option<f64>,
    #[arg(long = "duration-ms", global = true)]
    pub duration_ms: Option<f64>,
    /// Comma-separated RF scale factors, e.g. `0.9,1,1.1`.
    #[arg(long, global = true)]
    pub epsilon: Option<String>,
    /// Offset grid `min:max:count` in kHz.
    #[arg(long, global = true)]
    pub offsets: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub baseline: Option<Baseline>,
    /// Echo the fully resolved configuration and exit.
    #[arg(long = "print-config", global = true)]
    pub print_config: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Frame cascade table.
    Design,
    /// Sample the field and write a shape file.
    Synth,
    /// Minimum resonance gap.
    Gap,
    /// S_x(t) trace at one offset.
    Simulate,
    /// Decoupling efficiency over the offset grid and ε list.
    Sweep,
    /// MODE N = 1.. against TPPM and CW at equal RMS power.
    Compare,
}

fn parse_epsilons(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| Error::invalid("--epsilon", format!("{p:?}: {e}")))
        })
        .collect()
}

fn parse_offsets(s: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::invalid("--offsets", format!("{s:?} is not min:max:count")));
    }
    let num = |p: &str| {
        p.trim()
            .parse::<f64>()
            .map_err(|e| Error::invalid("--offsets", format!("{p:?}: {e}")))
    };
    let count = parts[2]
        .trim()
        .parse::<usize>()
        .map_err(|e| Error::invalid("--offsets", format!("{:?}: {e}", parts[2])))?;
    Ok((num(parts[0])?, num(parts[1])?, count))
}

impl Overrides {
    pub fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json(&fs::read_to_string(path)?)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if let Some(f) = self.format {
            cfg.output.format = f;
        }
        if let Some(dt) = self.dt_us {
            cfg.sim.dt_us = dt;
        }
        if let Some(d) = self.duration_ms {
            cfg.sim.duration_ms = Some(d);
        }
        if let Some(e) = &self.epsilon {
            cfg.sim.epsilon = parse_epsilons(e)?;
        }
        if let Some(o) = &self.offsets {
            let (min, max, count) = parse_offsets(o)?;
            let k = match cfg.frequency_unit {
                FrequencyUnit::Khz => 1.0,
                FrequencyUnit::RadS => khz_to_rad_s(1.0),
            };
            cfg.sim.offsets = Some(OffsetGrid {
                min: min * k,
                max: max * k,
                count,
            });
        }
        if let Some(b) = self.baseline {
            cfg.baseline = b;
        }
        cfg.fill_defaults();
        Ok(cfg)
    }
}

/// Maps an error onto the documented exit codes.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidInput { .. } | Error::Json(_) => EXIT_CONFIG,
        Error::NumericalGuard(_) => EXIT_NUMERICAL,
        Error::Parse { .. } | Error::Io(_) => EXIT_FAILURE,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.overrides.load()?;
    if cli.overrides.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    if let Some(n) = cli.overrides.threads {
        // a second initialization in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let resolved = cfg.resolve()?;
    fs::create_dir_all(&cfg.output.dir)?;
    let summary = match cli.command {
        Command::Design => cmd_design(&cfg, &resolved)?,
        Command::Synth => cmd_synth(&cfg, &resolved)?,
        Command::Gap => cmd_gap(&cfg, &resolved)?,
        Command::Simulate => cmd_simulate(&cfg, &resolved)?,
        Command::Sweep => cmd_sweep(&cfg, &resolved)?,
        Command::Compare => cmd_compare(&cfg, &resolved)?,
    };
    print!("{summary}");
    Ok(())
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, bytes)?;
    Ok(path)
}

#[derive(Debug, Serialize)]
struct FrameRow {
    k: usize,
    wbar_khz: f64,
    c_khz: f64,
    upsilon_khz: Option<f64>,
    alpha: f64,
}

#[derive(Debug, Serialize)]
struct DesignReport<'a> {
    config: &'a RunConfig,
    frames: Vec<FrameRow>,
    alpha_fixed_point: Option<f64>,
    cascade_rad_s: &'a FrameCascade,
}

fn frame_rows(cascade: &FrameCascade) -> Vec<FrameRow> {
    (0..=cascade.n_frames())
        .map(|k| FrameRow {
            k,
            wbar_khz: rad_s_to_khz(cascade.wbar[k]),
            c_khz: rad_s_to_khz(cascade.c[k]),
            upsilon_khz: (k > 0).then(|| rad_s_to_khz(cascade.upsilon[k - 1])),
            alpha: cascade.alpha[k],
        })
        .collect()
}

pub fn cmd_design(cfg: &RunConfig, r: &Resolved) -> Result<String> {
    let cascade = build_cascade(&r.design);
    let fixed = if r.design.delta_design() > 0.0 {
        Some(alpha_fixed_point(r.design.delta_design())?)
    } else {
        None
    };
    let rows = frame_rows(&cascade);
    let report = DesignReport {
        config: cfg,
        frames: rows,
        alpha_fixed_point: fixed,
        cascade_rad_s: &cascade,
    };
    write(
        &cfg.output.dir,
        "design.json",
        &serde_json::to_vec_pretty(&report)?,
    )?;

    let mut out = String::new();
    let _ = writeln!(out, " k   wbar_kHz      c_kHz   upsilon_kHz     alpha");
    for row in &report.frames {
        let u = row
            .upsilon_khz
            .map_or_else(|| "-".to_string(), |u| format!("{u:.4}"));
        let _ = writeln!(
            out,
            "{:>2} {:>10.4} {:>10.4} {:>13} {:>9.4}",
            row.k, row.wbar_khz, row.c_khz, u, row.alpha
        );
    }
    if let Some(ap) = fixed {
        let _ = writeln!(out, "alpha fixed point: {ap:.4}");
    }
    Ok(out)
}

fn amp_phase_csv(wf: &Waveform) -> String {
    let mut out = String::from("t_s,amp_khz,phase_deg\n");
    for (i, s) in wf.samples().iter().enumerate() {
        let _ = writeln!(
            out,
            "{:.9e},{:.9e},{:.9e}",
            wf.sample_time(i),
            rad_s_to_khz(s.amplitude()),
            phase_degrees(s)
        );
    }
    out
}

pub fn cmd_synth(cfg: &RunConfig, r: &Resolved) -> Result<String> {
    let wf = r.baseline_waveform(cfg.baseline)?;
    let format: ShapeFormat = cfg.output.format.into();
    let name = format!("{}.{}", wf.meta().generator, format.extension());
    let shape = write(&cfg.output.dir, &name, &export_shape(&wf, format)?)?;
    write(&cfg.output.dir, "amp_phase.csv", amp_phase_csv(&wf).as_bytes())?;
    let mut out = String::new();
    let _ = writeln!(out, "wrote {}", shape.display());
    let _ = writeln!(out, "samples: {}", wf.len());
    let _ = writeln!(out, "rms amplitude: {:.4} kHz", rad_s_to_khz(rms_amplitude(&wf)));
    let _ = writeln!(out, "max amplitude: {:.4} kHz", rad_s_to_khz(max_amplitude(&wf)));
    if cfg.baseline == Baseline::Mode {
        let _ = writeln!(
            out,
            "long-time rms limit: {:.4} kHz",
            rad_s_to_khz(mode_rms_limit(&r.design))
        );
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct GapReport<'a> {
    config: &'a RunConfig,
    upsilon_khz: Vec<f64>,
    delta_min_hz: f64,
    k: usize,
    coefficients: Vec<i8>,
    threshold_hz: f64,
    near_resonances: usize,
}

pub fn cmd_gap(cfg: &RunConfig, r: &Resolved) -> Result<String> {
    let cascade = build_cascade(&r.design);
    let result = min_gap_with_threshold(&cascade.upsilon, r.gap_threshold)?;
    let report = GapReport {
        config: cfg,
        upsilon_khz: cascade.upsilon.iter().map(|u| rad_s_to_khz(*u)).collect(),
        delta_min_hz: rad_s_to_hz(result.delta_min),
        k: result.assignment.k,
        coefficients: result.assignment.coeffs.clone(),
        threshold_hz: cfg.gap.threshold_hz,
        near_resonances: result.near_resonances,
    };
    write(&cfg.output.dir, "gap.json", &serde_json::to_vec_pretty(&report)?)?;

    let mut csv = String::from("k,coefficients,delta_hz\n");
    for e in gap_report(&cascade.upsilon, r.gap_threshold)? {
        let coeffs: Vec<String> = e.assignment.coeffs.iter().map(i8::to_string).collect();
        let _ = writeln!(csv, "{},{},{:.6}", e.assignment.k, coeffs.join(" "), rad_s_to_hz(e.delta));
    }
    write(&cfg.output.dir, "gap_report.csv", csv.as_bytes())?;

    let mut out = String::new();
    let _ = writeln!(out, "minimum gap: {:.4} Hz", report.delta_min_hz);
    let _ = writeln!(out, "pivot frame k = {}, coefficients {:?}", report.k, report.coefficients);
    let _ = writeln!(
        out,
        "lattice points below {} Hz: {}",
        cfg.gap.threshold_hz, report.near_resonances
    );
    Ok(out)
}

pub fn cmd_simulate(cfg: &RunConfig, r: &Resolved) -> Result<String> {
    let wf = r.baseline_waveform(cfg.baseline)?;
    let sim = r.sim_config(r.epsilons[0])?;
    let trace = propagate(&r.system(), &wf, &sim)?;
    let mut csv = String::from("t_s,sx\n");
    for (t, s) in trace.times.iter().zip(&trace.sx) {
        let _ = writeln!(csv, "{t:.9e},{s:.12e}");
    }
    write(&cfg.output.dir, "trace.csv", csv.as_bytes())?;
    Ok(format!(
        "eta at {:.4} kHz, epsilon {}: {:.6}\n",
        rad_s_to_khz(r.omega0),
        r.epsilons[0],
        efficiency(&trace)
    ))
}

pub fn cmd_sweep(cfg: &RunConfig, r: &Resolved) -> Result<String> {
    let wf = r.baseline_waveform(cfg.baseline)?;
    let rows = inhomogeneity_sweep(&r.system(), &wf, &r.sim_config(1.0)?, &r.epsilons, &r.offsets)?;
    let mut csv = String::from("omega0_khz,epsilon,eta\n");
    let mut out = String::new();
    for row in &rows {
        for e in row {
            let _ = writeln!(csv, "{:.9e},{},{:.12e}", rad_s_to_khz(e.omega0), e.epsilon, e.eta);
        }
        let worst = row.iter().map(|e| e.eta).fold(f64::INFINITY, f64::min);
        let mean = row.iter().map(|e| e.eta).sum::<f64>() / row.len() as f64;
        let _ = writeln!(
            out,
            "epsilon {}: mean eta {mean:.4}, worst eta {worst:.4}",
            row[0].epsilon
        );
    }
    write(&cfg.output.dir, "efficiency.csv", csv.as_bytes())?;
    Ok(out)
}

/// Finds the amplitude scale `s` for which `make(s)` has RMS `target`.
pub fn equalize_rms(
    target: f64,
    guess: f64,
    mut make: impl FnMut(f64) -> Result<Waveform>,
) -> Result<Waveform> {
    let (mut lo, mut hi) = (0.5 * guess, 2.0 * guess);
    let rms_at = |s: f64, make: &mut dyn FnMut(f64) -> Result<Waveform>| -> Result<(f64, Waveform)> {
        let wf = make(s)?;
        Ok((rms_amplitude(&wf), wf))
    };
    let (rms_lo, _) = rms_at(lo, &mut make)?;
    let (rms_hi, _) = rms_at(hi, &mut make)?;
    if !(rms_lo <= target && target <= rms_hi) {
        return Err(Error::NumericalGuard(format!(
            "rms target {target} not bracketed by [{rms_lo}, {rms_hi}]"
        )));
    }
    for _ in 0..RMS_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let (rms, wf) = rms_at(mid, &mut make)?;
        if ((rms - target) / target).abs() < 1e-6 {
            return Ok(wf);
        }
        if rms < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (rms, wf) = rms_at(0.5 * (lo + hi), &mut make)?;
    if ((rms - target) / target).abs() <= RMS_MATCH_TOLERANCE {
        Ok(wf)
    } else {
        Err(Error::NumericalGuard(format!(
            "rms equalization stalled at {rms} for target {target}"
        )))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub sequence: String,
    pub rms_khz: f64,
    pub worst_eta: f64,
    pub mean_eta: f64,
    pub eta: Vec<f64>,
}

/// Equal-power comparison of MODE `N = 1..=max_frames`, TPPM and CW over
/// the offset grid, sorted by worst-case η (best first).
pub fn compare_sequences(r: &Resolved, max_frames: usize) -> Result<Vec<CompareRow>> {
    let reference = r.mode_waveform()?;
    let target = rms_amplitude(&reference);
    let mut waveforms: Vec<(String, Waveform)> = Vec::new();
    for n in 1..=max_frames {
        let unit = ModeDesign::uniform(n, 1.0, r.design.c0(), r.design.delta_design())?;
        let guess = target / mode_rms_limit(&unit);
        let wf = equalize_rms(target, guess, |s| {
            let d = unit.scaled(s)?;
            synthesize_mode(&d, &build_cascade(&d), r.duration, r.dt)
        })?;
        waveforms.push((format!("mode_n{n}"), wf));
    }
    waveforms.push(("tppm".into(), r.tppm_waveform(target)?));
    waveforms.push(("cw".into(), make_cw(target, r.duration, r.dt)?));

    let sim = r.sim_config(r.epsilons[0])?;
    let system = r.system();
    let mut rows = waveforms
        .into_iter()
        .map(|(name, wf)| {
            let eta: Vec<f64> = offset_sweep(&system, &wf, &sim, &r.offsets)?
                .into_iter()
                .map(|e| e.eta)
                .collect();
            Ok(CompareRow {
                sequence: name,
                rms_khz: rad_s_to_khz(rms_amplitude(&wf)),
                worst_eta: eta.iter().copied().fold(f64::INFINITY, f64::min),
                mean_eta: eta.iter().sum::<f64>() / eta.len() as f64,
                eta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.worst_eta.total_cmp(&a.worst_eta));
    Ok(rows)
}

pub fn cmd_compare(cfg: &RunConfig, r: &Resolved) -> Result<String> {
    let rows = compare_sequences(r, cfg.compare.max_frames)?;
    let mut summary = String::from("sequence,rms_khz,worst_eta,mean_eta\n");
    for row in &rows {
        let _ = writeln!(
            summary,
            "{},{:.6},{:.6},{:.6}",
            row.sequence, row.rms_khz, row.worst_eta, row.mean_eta
        );
    }
    write(&cfg.output.dir, "compare.csv", summary.as_bytes())?;

    let mut table = String::from("omega0_khz");
    for row in &rows {
        let _ = write!(table, ",eta_{}", row.sequence);
    }
    table.push('\n');
    for (i, w) in r.offsets.iter().enumerate() {
        let _ = write!(table, "{:.9e}", rad_s_to_khz(*w));
        for row in &rows {
            let _ = write!(table, ",{:.12e}", row.eta[i]);
        }
        table.push('\n');
    }
    write(&cfg.output.dir, "compare_eta.csv", table.as_bytes())?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_to_paper_design() {
        let r = RunConfig::default().resolve().unwrap();
        assert_eq!(r.design.n_frames(), 6);
        assert!((rad_s_to_khz(r.design.w0()) - 4.8).abs() < 1e-12);
        assert!((r.duration - 12.0 / 140.0).abs() < 1e-15);
        assert_eq!(r.offsets.len(), 41);
        assert!((rad_s_to_khz(r.offsets[0]) + 22.5).abs() < 1e-12);
    }

    #[test]
    fn config_errors_name_the_field() {
        let cfg = RunConfig::from_json(r#"{"design": {"w0": -1.0}}"#).unwrap();
        match cfg.resolve() {
            Err(Error::InvalidInput { field, .. }) => assert_eq!(field, "w_levels"),
            other => panic!("{other:?}"),
        }
        let cfg = RunConfig::from_json(r#"{"design": {"n_frames": 2, "w_levels": [1, 1]}}"#).unwrap();
        assert!(matches!(
            cfg.resolve(),
            Err(Error::InvalidInput { field: "design.w_levels", .. })
        ));
        assert!(RunConfig::from_json(r#"{"desing": {}}"#).is_err());
        let cfg = RunConfig::from_json(r#"{"sim": {"epsilon": []}}"#).unwrap();
        assert!(matches!(
            cfg.resolve(),
            Err(Error::InvalidInput { field: "sim.epsilon", .. })
        ));
    }

    #[test]
    fn flag_parsing() {
        assert_eq!(parse_epsilons("0.9, 1,1.1").unwrap(), vec![0.9, 1.0, 1.1]);
        assert!(parse_epsilons("a").is_err());
        assert_eq!(parse_offsets("-22.5:22.5:41").unwrap(), (-22.5, 22.5, 41));
        assert!(parse_offsets("1:2").is_err());
        assert!(parse_offsets("1:2:x").is_err());
    }

    #[test]
    fn rad_s_config_matches_khz_config() {
        let khz = RunConfig::default();
        let mut rad = RunConfig {
            frequency_unit: FrequencyUnit::RadS,
            ..RunConfig::default()
        };
        rad.design.w0 = khz_to_rad_s(4.8);
        rad.design.c0 = khz_to_rad_s(22.5);
        rad.sim.omega0 = khz_to_rad_s(6.25);
        let a = khz.resolve().unwrap();
        let b = rad.resolve().unwrap();
        assert_eq!(a.design, b.design);
        assert_eq!(a.offsets, b.offsets);
        assert_eq!(a.omega0, b.omega0);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::invalid("x", "y")), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::NumericalGuard("z".into())), EXIT_NUMERICAL);
    }

    #[test]
    fn equalize_rms_finds_cw_amplitude() {
        let wf = equalize_rms(3.0, 2.5, |s| make_cw(s, 1e-4, 1e-6)).unwrap();
        assert!((rms_amplitude(&wf) - 3.0).abs() < 3e-6);
        assert!(matches!(
            equalize_rms(30.0, 2.5, |s| make_cw(s, 1e-4, 1e-6)),
            Err(Error::NumericalGuard(_))
        ));
    }
}
