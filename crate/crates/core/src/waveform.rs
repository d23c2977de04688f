//! Sampled RF fields on the decoupled spin and their shape-file exports.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cascade::{FrameCascade, ModeDesign};
use crate::error::{Error, Result};

/// Minimum number of samples per period of the fastest modulation.
pub const MIN_SAMPLES_PER_PERIOD: f64 = 20.0;

/// One piecewise-constant step of the RF field, in rad/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RfSample {
    pub wx: f64,
    pub wy: f64,
}

impl RfSample {
    pub fn new(wx: f64, wy: f64) -> Self {
        RfSample { wx, wy }
    }

    pub fn amplitude(&self) -> f64 {
        self.wx.hypot(self.wy)
    }

    pub fn to_amp_phase(self) -> AmpPhaseSample {
        // + 0.0 folds a negative zero into the positive one
        let phase = self.wy.atan2(self.wx).rem_euclid(TAU) + 0.0;
        AmpPhaseSample {
            amplitude: self.amplitude(),
            phase: if phase >= TAU { 0.0 } else { phase },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmpPhaseSample {
    pub amplitude: f64,
    /// Radians in `[0, 2π)`, measured from the x axis.
    pub phase: f64,
}

impl AmpPhaseSample {
    pub fn to_cartesian(self) -> RfSample {
        let (s, c) = self.phase.sin_cos();
        RfSample::new(self.amplitude * c, self.amplitude * s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveformMeta {
    pub generator: String,
    pub duration: f64,
    /// SHA-256 of the serialized design for generated MODE fields.
    pub design_hash: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    dt: f64,
    samples: Vec<RfSample>,
    meta: WaveformMeta,
}

impl Waveform {
    pub fn new(dt: f64, samples: Vec<RfSample>, generator: impl Into<String>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", format!("{dt} must be positive")));
        }
        if samples.is_empty() {
            return Err(Error::invalid("samples", "waveform has no samples"));
        }
        let duration = dt * samples.len() as f64;
        Ok(Waveform {
            dt,
            samples,
            meta: WaveformMeta {
                generator: generator.into(),
                duration,
                design_hash: None,
            },
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn samples(&self) -> &[RfSample] {
        &self.samples
    }

    pub fn meta(&self) -> &WaveformMeta {
        &self.meta
    }

    pub fn duration(&self) -> f64 {
        self.meta.duration
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Midpoint time of sample `i`.
    pub fn sample_time(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dt
    }

    pub fn amp_phase(&self) -> impl Iterator<Item = AmpPhaseSample> + '_ {
        self.samples.iter().map(|s| s.to_amp_phase())
    }

    /// Same waveform with every component multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Waveform {
        Waveform {
            dt: self.dt,
            samples: self
                .samples
                .iter()
                .map(|s| RfSample::new(s.wx * factor, s.wy * factor))
                .collect(),
            meta: self.meta.clone(),
        }
    }
}

fn sample_count(duration: f64, dt: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", format!("{dt} must be positive")));
    }
    if !(duration.is_finite() && duration >= dt) {
        return Err(Error::invalid(
            "duration",
            format!("{duration} s is shorter than one step of {dt} s"),
        ));
    }
    Ok((duration / dt).round() as usize)
}

/// The y component of a MODE field at time `t`:
/// `Σ_k w_k · cos(υ_1 t)···cos(υ_{k−1} t) · sin(υ_k t)`.
pub fn mode_field_y(w_levels: &[f64], upsilon: &[f64], t: f64) -> f64 {
    let mut envelope = 1.0;
    let mut wy = 0.0;
    for (w, u) in w_levels[1..].iter().zip(upsilon) {
        let (s, c) = (u * t).sin_cos();
        wy += w * envelope * s;
        envelope *= c;
    }
    wy
}

pub fn mode_field(design: &ModeDesign, cascade: &FrameCascade, t: f64) -> RfSample {
    RfSample::new(
        design.w0(),
        mode_field_y(design.w_levels(), &cascade.upsilon, t),
    )
}

pub fn design_hash(design: &ModeDesign) -> String {
    let bytes = serde_json::to_vec(design).expect("design serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Samples the MODE field at the midpoints `(i + 1/2)·dt`.
pub fn synthesize_mode(
    design: &ModeDesign,
    cascade: &FrameCascade,
    duration: f64,
    dt: f64,
) -> Result<Waveform> {
    if cascade.n_frames() != design.n_frames() {
        return Err(Error::invalid(
            "cascade",
            format!(
                "{} frames, design has {}",
                cascade.n_frames(),
                design.n_frames()
            ),
        ));
    }
    let n = sample_count(duration, dt)?;
    if let Some(&fastest) = cascade.upsilon.first() {
        let limit = TAU / (MIN_SAMPLES_PER_PERIOD * fastest);
        if dt > limit {
            return Err(Error::NumericalGuard(format!(
                "dt = {dt:e} s undersamples the {:.3} kHz modulation (need dt <= {limit:e} s)",
                fastest / TAU / 1e3
            )));
        }
    }
    let samples = (0..n)
        .map(|i| mode_field(design, cascade, (i as f64 + 0.5) * dt))
        .collect();
    let mut wf = Waveform::new(dt, samples, format!("mode_n{}", design.n_frames()))?;
    wf.meta.design_hash = Some(design_hash(design));
    Ok(wf)
}

pub fn make_cw(amplitude: f64, duration: f64, dt: f64) -> Result<Waveform> {
    let n = sample_count(duration, dt)?;
    Waveform::new(dt, vec![RfSample::new(amplitude, 0.0); n], "cw")
}

/// Two-pulse phase modulation: constant amplitude, phase `+φ/2` and `−φ/2`
/// alternating every `tip_duration`.
pub fn make_tppm(
    amplitude: f64,
    tip_duration: f64,
    phase_offset: f64,
    duration: f64,
    dt: f64,
) -> Result<Waveform> {
    let n = sample_count(duration, dt)?;
    if !(tip_duration.is_finite() && tip_duration >= dt) {
        return Err(Error::invalid(
            "tip_duration",
            format!("{tip_duration} s is shorter than dt = {dt} s"),
        ));
    }
    let plus = AmpPhaseSample {
        amplitude,
        phase: 0.5 * phase_offset,
    }
    .to_cartesian();
    let minus = RfSample::new(plus.wx, -plus.wy);
    let samples = (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) * dt;
            if ((t / tip_duration).floor() as u64).is_multiple_of(2) {
                plus
            } else {
                minus
            }
        })
        .collect();
    Waveform::new(dt, samples, "tppm")
}

pub fn rms_amplitude(waveform: &Waveform) -> f64 {
    let sum: f64 = waveform
        .samples
        .iter()
        .map(|s| s.wx * s.wx + s.wy * s.wy)
        .sum();
    (sum / waveform.samples.len() as f64).sqrt()
}

pub fn max_amplitude(waveform: &Waveform) -> f64 {
    waveform
        .samples
        .iter()
        .map(RfSample::amplitude)
        .fold(0.0, f64::max)
}

/// Long-time RMS of an equal-or-unequal level MODE field,
/// `√(w_0² + Σ_k w_k² 2^{−k})`.
pub fn mode_rms_limit(design: &ModeDesign) -> f64 {
    let w = design.w_levels();
    let modulated: f64 = w[1..]
        .iter()
        .enumerate()
        .map(|(i, wk)| wk * wk * 0.5f64.powi(i as i32 + 1))
        .sum();
    (w[0] * w[0] + modulated).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFormat {
    BrukerText,
    Csv,
    Json,
}

impl ShapeFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ShapeFormat::BrukerText => "bruker",
            ShapeFormat::Csv => "csv",
            ShapeFormat::Json => "json",
        }
    }
}

pub const CSV_HEADER: &str = "t_s,wx_rad_s,wy_rad_s,amp_rad_s,phase_rad";

#[derive(Serialize, Deserialize)]
struct JsonShape {
    dt: f64,
    duration: f64,
    generator: String,
    samples: Vec<[f64; 2]>,
}

pub fn export_shape(waveform: &Waveform, format: ShapeFormat) -> Result<Vec<u8>> {
    match format {
        ShapeFormat::BrukerText => export_bruker(waveform),
        ShapeFormat::Csv => Ok(export_csv(waveform).into_bytes()),
        ShapeFormat::Json => {
            let doc = JsonShape {
                dt: waveform.dt,
                duration: waveform.duration(),
                generator: waveform.meta.generator.clone(),
                samples: waveform.samples.iter().map(|s| [s.wx, s.wy]).collect(),
            };
            Ok(serde_json::to_vec_pretty(&doc)?)
        }
    }
}

pub fn write_shape<W: std::io::Write>(
    waveform: &Waveform,
    format: ShapeFormat,
    mut out: W,
) -> Result<()> {
    out.write_all(&export_shape(waveform, format)?)?;
    Ok(())
}

/// Formats an angle in degrees with six decimals, wrapped into `[0, 360)`.
fn format_phase_deg(phase: f64) -> String {
    let s = format!("{:.6}", phase.to_degrees());
    if s == "360.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

fn export_bruker(waveform: &Waveform) -> Result<Vec<u8>> {
    let max = max_amplitude(waveform);
    if max <= 0.0 {
        return Err(Error::invalid(
            "waveform",
            "all-zero field cannot be normalized to a shape file",
        ));
    }
    let mut out = String::with_capacity(32 * waveform.len() + 64);
    let _ = writeln!(out, "##TITLE= {}", waveform.meta.generator);
    let _ = writeln!(out, "##NPOINTS= {}", waveform.len());
    out.push_str("##XYPOINTS= (XY..XY)\n");
    for ap in waveform.amp_phase() {
        let amp = (100.0 * ap.amplitude / max).min(100.0);
        let _ = writeln!(out, "{amp:.6}, {}", format_phase_deg(ap.phase));
    }
    out.push_str("##END=\n");
    Ok(out.into_bytes())
}

fn export_csv(waveform: &Waveform) -> String {
    let mut out = String::with_capacity(100 * waveform.len() + 64);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (i, s) in waveform.samples.iter().enumerate() {
        let ap = s.to_amp_phase();
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            waveform.sample_time(i),
            s.wx,
            s.wy,
            ap.amplitude,
            ap.phase
        );
    }
    out
}

pub fn import_csv(text: &str) -> Result<Waveform> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(Error::parse(
                "csv",
                format!("expected header {CSV_HEADER:?}, found {other:?}"),
            ))
        }
    }
    let mut first_t = None;
    let mut samples = Vec::new();
    for (lineno, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse("csv", format!("row {}: {e}", lineno + 2)))?;
        if fields.len() != 5 {
            return Err(Error::parse(
                "csv",
                format!("row {}: expected 5 columns, got {}", lineno + 2, fields.len()),
            ));
        }
        first_t.get_or_insert(fields[0]);
        samples.push(RfSample::new(fields[1], fields[2]));
    }
    let t0 = first_t.ok_or_else(|| Error::parse("csv", "no samples"))?;
    Waveform::new(2.0 * t0, samples, "csv_import")
}

pub fn import_json(text: &str) -> Result<Waveform> {
    let doc: JsonShape = serde_json::from_str(text)?;
    let samples = doc
        .samples
        .into_iter()
        .map(|[wx, wy]| RfSample::new(wx, wy))
        .collect();
    Waveform::new(doc.dt, samples, doc.generator)
}

/// Reads a bruker_text shape back as normalized amplitude (percent) and
/// phase (degrees) pairs.
pub fn parse_bruker(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut points = Vec::new();
    let mut declared = None;
    let mut ended = false;
    for line in text.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("##") {
            if let Some(n) = rest.strip_prefix("NPOINTS=") {
                declared = Some(
                    n.trim()
                        .parse::<usize>()
                        .map_err(|e| Error::parse("bruker", e.to_string()))?,
                );
            } else if rest.starts_with("END=") {
                ended = true;
                break;
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (a, p) = line
            .split_once(',')
            .ok_or_else(|| Error::parse("bruker", format!("bad point line {line:?}")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::parse("bruker", e.to_string()))
        };
        points.push((parse(a)?, parse(p)?));
    }
    if !ended {
        return Err(Error::parse("bruker", "missing ##END="));
    }
    if declared != Some(points.len()) {
        return Err(Error::parse(
            "bruker",
            format!("NPOINTS {declared:?} but {} points", points.len()),
        ));
    }
    Ok(points)
}

/// Phase of a sample in degrees, `[0, 360)`; used for amplitude/phase plots.
pub fn phase_degrees(s: &RfSample) -> f64 {
    s.to_amp_phase().phase * 180.0 / PI
}
