//! JSON experiment files. Frequencies are given as f in Hz or MHz and converted to ω = 2πf;
//! times are given in μs.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use num_rational::Ratio;
use serde::Deserialize;

use crate::dynamics::SystemConfig;
use crate::error::{invalid, Result};
use crate::noise::{gaussian_triple, GaussianTripleParams, Shape, SpectrumSet, Table};
use crate::pulse_control::{apply_frame_tilt, builtin_by_name, compose_pulse, Basis, Pulse, PulseSequence};
use crate::reconstruction::{LargeSplittingParams, Regularization, ZeroSplittingParams};

pub const MHZ: f64 = 2.0 * PI * 1e6;
pub const HZ: f64 = 2.0 * PI;
pub const US: f64 = 1e-6;

/// A number or a rational string such as "3/4".
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Fraction {
    Number(f64),
    Text(String),
}

impl Fraction {
    pub fn value(&self) -> Result<f64> {
        match self {
            Fraction::Number(x) => Ok(*x),
            Fraction::Text(s) => {
                let s = s.trim();
                if let Ok(r) = s.parse::<Ratio<i64>>() {
                    return Ok(*r.numer() as f64 / *r.denom() as f64);
                }
                s.parse::<f64>().or_else(|_| invalid(format!("cannot parse pulse time {s:?}")))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseDescriptor {
    #[serde(alias = "t_over_Tc")]
    pub t_over_tc: Fraction,
    pub theta_xyz: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TiltDescriptor {
    pub theta_xyz: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceDescriptor {
    #[serde(default)]
    pub id: Option<String>,
    pub cycle_time_us: f64,
    pub repetitions: usize,
    pub pulses: Vec<PulseDescriptor>,
    #[serde(default)]
    pub tilt: Option<TiltDescriptor>,
}

impl SequenceDescriptor {
    /// The cycle template; `cycle_time` and `repetitions` override the stored values when given.
    pub fn build(&self, cycle_time: Option<f64>, repetitions: Option<usize>) -> Result<PulseSequence> {
        let pulses = self.pulses.iter().map(|p| Pulse::new(p.theta_xyz, p.t_over_tc.value()?)).collect::<Result<Vec<_>>>()?;
        let seq = PulseSequence::new(pulses, cycle_time.unwrap_or(self.cycle_time_us * US), repetitions.unwrap_or(self.repetitions))?;
        match &self.tilt {
            Some(t) => apply_frame_tilt(&seq, &compose_pulse(t.theta_xyz)?),
            None => Ok(seq),
        }
    }
}

/// "U1".."U6" or an explicit descriptor.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SequenceRef {
    Builtin(String),
    Custom(SequenceDescriptor),
}

impl SequenceRef {
    pub fn id(&self, index: usize) -> String {
        match self {
            SequenceRef::Builtin(n) => n.trim().to_uppercase(),
            SequenceRef::Custom(d) => d.id.clone().unwrap_or_else(|| format!("custom{index}")),
        }
    }

    /// Built-ins take the given cycle time and repetitions; descriptors keep their own unless overridden.
    pub fn build(&self, cycle_time: f64, repetitions: usize, override_custom: bool) -> Result<PulseSequence> {
        match self {
            SequenceRef::Builtin(n) => builtin_by_name(n, cycle_time, repetitions),
            SequenceRef::Custom(d) if override_custom => d.build(Some(cycle_time), Some(repetitions)),
            SequenceRef::Custom(d) => d.build(None, None),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// Ω/2π in Hz.
    #[serde(default)]
    pub splitting_hz: f64,
    /// Ω_cut/2π in Hz.
    #[serde(default)]
    pub cutoff_hz: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    /// Axis labels "x", "y", "z" (Cartesian) or "-1", "0", "1" (spherical).
    pub a: String,
    pub b: String,
    /// [f_hz, re, im] rows, f = ω/2π.
    pub rows: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSection {
    GaussianTriple {
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        /// Δ/2π.
        #[serde(default = "default_width")]
        width_mhz: f64,
        /// Dephasing peak ω_0c/2π.
        #[serde(default = "default_width")]
        center_mhz: f64,
        /// Transverse peaks sit at ∓(Ω − 2π·offset).
        #[serde(default = "default_offset")]
        offset_mhz: f64,
        #[serde(default = "default_weights")]
        weights: [f64; 3],
    },
    Table {
        #[serde(default = "default_basis")]
        basis: String,
        entries: Vec<TableEntry>,
    },
}

fn default_amplitude() -> f64 {
    332.0
}
fn default_width() -> f64 {
    0.8
}
fn default_offset() -> f64 {
    0.81
}
fn default_weights() -> [f64; 3] {
    [1.0, 0.7, 0.5]
}
fn default_basis() -> String {
    "cartesian".into()
}

fn axis_index(label: &str, basis: Basis) -> Result<usize> {
    let l = label.trim().to_lowercase();
    let i = match basis {
        Basis::Cartesian => ["x", "y", "z"].iter().position(|&s| s == l),
        Basis::Spherical => ["-1", "0", "1"].iter().position(|&s| s == l).or_else(|| (l == "+1").then_some(2)),
    };
    i.ok_or_else(|| crate::QnsError::InvalidInput(format!("unknown axis label {label:?} for {basis:?} tables")))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub points: usize,
}

impl Grid {
    /// ω values (rad/s).
    pub fn omegas(&self) -> Result<Vec<f64>> {
        if self.points < 1 || !self.start_hz.is_finite() || !self.stop_hz.is_finite() {
            return invalid("frequency grid needs finite bounds and at least one point");
        }
        if self.points == 1 {
            return Ok(vec![HZ * self.start_hz]);
        }
        let step = (self.stop_hz - self.start_hz) / (self.points - 1) as f64;
        Ok((0..self.points).map(|i| HZ * (self.start_hz + step * i as f64)).collect())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub grid: Grid,
    /// Generalized-filter indices to dump.
    #[serde(default = "all_p")]
    pub p: Vec<usize>,
    /// Cartesian G⁺_{aa';bb'}(ω, −ω) entries to dump, as ["x","x","z","z"].
    #[serde(default)]
    pub entries: Vec<[String; 4]>,
}

fn all_p() -> Vec<usize> {
    vec![1, 2, 3, 4]
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    LargeSplitting,
    ZeroSplitting,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub kind: ProtocolKind,
    #[serde(default = "default_t_max")]
    pub t_max_us: f64,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default = "default_eight")]
    pub n_max: usize,
    #[serde(default = "default_eight")]
    pub k_max: usize,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self { kind: ProtocolKind::LargeSplitting, t_max_us: default_t_max(), repetitions: default_reps(), n_max: 8, k_max: 8 }
    }
}

fn default_t_max() -> f64 {
    2.4
}
fn default_reps() -> usize {
    20
}
fn default_eight() -> usize {
    8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    pub trajectories: usize,
    pub dt_us: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandwidthSection {
    #[serde(default = "default_study_widths_mhz")]
    pub widths_mhz: Vec<f64>,
}

impl Default for BandwidthSection {
    fn default() -> Self {
        Self { widths_mhz: default_study_widths_mhz() }
    }
}

fn default_study_widths_mhz() -> Vec<f64> {
    vec![2.4, 4.0, 8.0]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub noise: Option<NoiseSection>,
    #[serde(default)]
    pub sequences: Vec<SequenceRef>,
    /// Cycle time for built-in sequences outside a protocol.
    #[serde(default = "default_t_max")]
    pub cycle_time_us: f64,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default)]
    pub filters: Option<FilterSection>,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub monte_carlo: Option<MonteCarloSection>,
    #[serde(default)]
    pub bandwidth: BandwidthSection,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).or_else(|e| invalid(format!("config: {e}")))
    }

    pub fn system_config(&self) -> Result<SystemConfig> {
        let s = SystemConfig::new(HZ * self.system.splitting_hz)?;
        match self.system.cutoff_hz {
            Some(c) => s.with_cutoff(HZ * c),
            None => Ok(s),
        }
    }

    /// Three-Gaussian parameters when the noise section is of that type.
    pub fn gaussian_params(&self) -> Option<GaussianTripleParams> {
        match self.noise.as_ref()? {
            NoiseSection::GaussianTriple { amplitude, width_mhz, center_mhz, offset_mhz, weights } => {
                let om = HZ * self.system.splitting_hz;
                Some(GaussianTripleParams {
                    amplitude: *amplitude,
                    width: MHZ * width_mhz,
                    centers: [-om + MHZ * offset_mhz, MHZ * center_mhz, om - MHZ * offset_mhz],
                    weights: *weights,
                })
            }
            NoiseSection::Table { .. } => None,
        }
    }

    pub fn noise_model(&self) -> Result<SpectrumSet> {
        match &self.noise {
            None => invalid("config has no noise section"),
            Some(NoiseSection::GaussianTriple { .. }) => gaussian_triple(&self.gaussian_params().expect("gaussian section")),
            Some(NoiseSection::Table { basis, entries }) => {
                let basis = match basis.to_lowercase().as_str() {
                    "cartesian" => Basis::Cartesian,
                    "spherical" => Basis::Spherical,
                    other => return invalid(format!("unknown basis {other:?}")),
                };
                let mut set = SpectrumSet::zero(basis);
                for e in entries {
                    let (a, b) = (axis_index(&e.a, basis)?, axis_index(&e.b, basis)?);
                    let omega = e.rows.iter().map(|r| HZ * r[0]).collect();
                    let values = e.rows.iter().map(|r| C64::new(r[1], r[2])).collect();
                    let table = Table::new(omega, values)?;
                    set.entry_mut(a, b).terms.push((C64::new(1.0, 0.0), Shape::Table(Arc::new(table))));
                }
                Ok(set)
            }
        }
    }

    /// Listed sequences at the top-level cycle time and repetitions (built-ins) or their own (descriptors).
    pub fn sequences(&self) -> Result<Vec<(String, PulseSequence)>> {
        let refs: Vec<SequenceRef> = if self.sequences.is_empty() {
            (1..=6).map(|i| SequenceRef::Builtin(format!("U{i}"))).collect()
        } else {
            self.sequences.clone()
        };
        refs.iter()
            .enumerate()
            .map(|(i, r)| Ok((r.id(i), r.build(self.cycle_time_us * US, self.repetitions, false)?)))
            .collect()
    }

    pub fn large_splitting_params(&self, shots: Option<u64>, seed: u64, regularization: Regularization) -> Result<LargeSplittingParams> {
        let p = &self.protocol;
        Ok(LargeSplittingParams {
            splitting: self.system_config()?.splitting,
            t_max: p.t_max_us * US,
            repetitions: p.repetitions,
            n_max: p.n_max,
            k_max: p.k_max,
            shots,
            seed,
            regularization,
        })
    }

    /// Uses the listed sequences as cycle templates when given, else the default diagonal set.
    pub fn zero_splitting_params(&self, regularization: Regularization) -> Result<ZeroSplittingParams> {
        let p = &self.protocol;
        let mut z = ZeroSplittingParams::with_default_sequences(p.t_max_us * US, p.repetitions, p.n_max, p.k_max)?;
        if !self.sequences.is_empty() {
            z.sequences = self
                .sequences
                .iter()
                .enumerate()
                .map(|(i, r)| Ok((r.id(i), r.build(p.t_max_us * US, 1, true)?)))
                .collect::<Result<_>>()?;
        }
        z.system = self.system_config()?;
        z.regularization = regularization;
        Ok(z)
    }

    pub fn study_widths(&self) -> Vec<f64> {
        self.bandwidth.widths_mhz.iter().map(|w| MHZ * w).collect()
    }
}

/// Sequence descriptor file on its own.
pub fn parse_sequence(text: &str) -> Result<PulseSequence> {
    let d: SequenceDescriptor = serde_json::from_str(text).or_else(|e| invalid(format!("sequence: {e}")))?;
    d.build(None, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulse_control::builtin_sequence;

    #[test]
    fn rational_pulse_times() {
        assert_eq!(Fraction::Text("3/4".into()).value().unwrap(), 0.75);
        assert_eq!(Fraction::Text(" 1 ".into()).value().unwrap(), 1.0);
        assert_eq!(Fraction::Text("0.125".into()).value().unwrap(), 0.125);
        assert_eq!(Fraction::Number(0.5).value().unwrap(), 0.5);
        assert!(Fraction::Text("a/b".into()).value().is_err());
    }

    #[test]
    fn descriptor_matches_builtin() {
        let text = r#"{"cycle_time_us": 2.4, "repetitions": 20, "pulses": [
            {"t_over_tc": "1/4", "theta_xyz": [0, 0, 3.141592653589793]},
            {"t_over_tc": 0.75, "theta_xyz": [0, 0, 3.141592653589793]}]}"#;
        let seq = parse_sequence(text).unwrap();
        assert_eq!(seq, builtin_sequence(1, 2.4e-6, 20).unwrap());
    }

    #[test]
    fn tilted_descriptor_matches_u6() {
        let z = r#"{"t_over_tc": "PLACE", "theta_xyz": [0, 0, 3.141592653589793]}"#;
        let pulses: Vec<String> = ["1/4", "1/2", "3/4", "1"].iter().map(|t| z.replace("PLACE", t)).collect();
        let text = format!(
            r#"{{"cycle_time_us": 1, "repetitions": 2, "pulses": [{}], "tilt": {{"theta_xyz": [0.7853981633974483, 0, 0]}}}}"#,
            pulses.join(",")
        );
        let seq = parse_sequence(&text).unwrap();
        let u6 = builtin_sequence(6, 1e-6, 2).unwrap();
        assert_eq!(seq.pulses().len(), u6.pulses().len());
        for (a, b) in seq.pulses().iter().zip(u6.pulses()) {
            assert!((a.at() - b.at()).abs() < 1e-15);
            assert!((a.unitary() - b.unitary()).norm() < 1e-12);
        }
    }

    #[test]
    fn reference_noise_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"system": {"splitting_hz": 27e9}, "noise": {"type": "gaussian_triple"}}"#).unwrap();
        let p = cfg.gaussian_params().unwrap();
        assert_eq!(p, GaussianTripleParams::reference_setup(2.0 * PI * 27e9));
        assert!(cfg.noise_model().is_ok());
        assert_eq!(cfg.sequences().unwrap().len(), 6);
    }

    #[test]
    fn table_noise_in_hz() {
        let cfg = ExperimentConfig::from_json(
            r#"{"noise": {"type": "table", "entries": [{"a": "z", "b": "z", "rows": [[-1, 0, 0], [0, 2, 0], [1, 0, 0]]}]}}"#,
        )
        .unwrap();
        let n = cfg.noise_model().unwrap();
        let v = n.evaluate(2, 2, PI, crate::noise::Part::Full).unwrap();
        assert!((v.re - 1.0).abs() < 1e-12);
        assert!(ExperimentConfig::from_json(r#"{"noise": {"type": "table", "entries": [{"a": "q", "b": "z", "rows": []}]}}"#)
            .unwrap()
            .noise_model()
            .is_err());
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        assert!(ExperimentConfig::from_json(r#"{"sistem": {}}"#).is_err());
        let cfg = ExperimentConfig::from_json(r#"{"system": {"splitting_hz": -1}}"#).unwrap();
        assert!(cfg.system_config().is_err());
        let cfg = ExperimentConfig::from_json(r#"{"sequences": ["U9"]}"#).unwrap();
        assert!(cfg.sequences().is_err());
    }
}
