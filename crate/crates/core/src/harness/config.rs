//! Experiment configuration: one TOML file with named sections mirroring
//! the library modules. Unknown keys are hard errors so a typo cannot
//! silently corrupt a sweep, and every cross-field constraint is checked
//! before any trial runs.

use serde::Deserialize;

use crate::arrays::UlaGeometry;
use crate::channel::{
    ChannelSampler, ConventionalSystem, FixedPath, MpddSystem, PathSampling, RisSurface,
    SamplingGrid,
};
use crate::metasurfaces::{SimGeometry, SimSide, SimStack};
use crate::pda::{DelayDopplerGrid, RadarMapping, SPEED_OF_LIGHT};
use crate::simopt::GainKnowledge;
use crate::waveforms::{FrameKind, FrameSpec};
use crate::{C64, Error, Result};

fn default_true() -> bool {
    true
}

fn default_symbol_energy() -> f64 {
    2.0
}

fn default_afdm_c2() -> f64 {
    0.0
}

fn default_atom_spacing() -> f64 {
    0.5
}

fn default_layer_spacing() -> f64 {
    5.0
}

fn default_opt_iterations() -> usize {
    200
}

fn default_decay() -> f64 {
    0.99
}

fn default_comm_gains() -> String {
    "genie".into()
}

fn default_sensing_gains() -> String {
    "unity".into()
}

fn default_det_iterations() -> usize {
    50
}

fn default_damping() -> f64 {
    0.5
}

fn default_est_iterations() -> usize {
    30
}

fn default_threshold() -> f64 {
    0.5
}

fn default_seed() -> u64 {
    1
}

fn default_trials() -> usize {
    50
}

fn default_out() -> String {
    "results.csv".into()
}

fn default_arms() -> Vec<String> {
    vec!["no-sim".into(), "sim-unopt".into(), "sim-comm".into()]
}

fn default_waveforms() -> Vec<String> {
    vec!["ofdm".into(), "otfs".into(), "afdm".into()]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n_t: usize,
    pub n_r: usize,
    pub d_s: Option<usize>,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    pub n: usize,
    #[serde(default = "default_waveforms")]
    pub waveforms: Vec<String>,
    pub otfs_rows: Option<usize>,
    pub afdm_c1: Option<f64>,
    #[serde(default = "default_afdm_c2")]
    pub afdm_c2: f64,
    #[serde(default = "default_symbol_energy")]
    pub symbol_energy: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPathConfig {
    pub delay_taps: usize,
    pub doppler_cycles: Option<f64>,
    pub doppler_hz: Option<f64>,
    /// Doppler given as a radar radial velocity (round-trip convention).
    pub radar_velocity_mps: Option<f64>,
    /// Complex gain `[re, im]`; drawn randomly per trial when absent.
    pub gain: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RisConfig {
    pub jx: usize,
    pub jz: usize,
    pub tx_paths: usize,
    pub rx_paths: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub paths: usize,
    pub max_delay_taps: usize,
    pub max_doppler_hz: Option<f64>,
    pub max_doppler_cycles: Option<f64>,
    pub max_speed_mps: Option<f64>,
    #[serde(default)]
    pub fixed: Vec<FixedPathConfig>,
    #[serde(default)]
    pub ris: Vec<RisConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    pub layers: usize,
    pub mx: usize,
    pub mz: usize,
    #[serde(default = "default_atom_spacing")]
    pub atom_spacing_wavelengths: f64,
    #[serde(default = "default_layer_spacing")]
    pub layer_spacing_wavelengths: f64,
    /// Gap between each antenna array and its innermost layer.
    #[serde(default = "default_layer_spacing")]
    pub antenna_gap_wavelengths: f64,
    #[serde(default = "default_true")]
    pub normal_incidence: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_opt_iterations")]
    pub iterations: usize,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default = "default_comm_gains")]
    pub comm_gains: String,
    #[serde(default = "default_sensing_gains")]
    pub sensing_gains: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorBlock {
    #[serde(default = "default_det_iterations")]
    pub iterations: usize,
    #[serde(default = "default_damping")]
    pub damping: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub delay_bins: usize,
    pub doppler_bins: usize,
    pub doppler_span_cycles: Option<f64>,
    pub doppler_span_mps: Option<f64>,
    #[serde(default = "default_est_iterations")]
    pub iterations: usize,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_true")]
    pub known_paths: bool,
    #[serde(default = "default_threshold")]
    pub activity_threshold: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    pub snr_db: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_arms")]
    pub arms: Vec<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: String,
}

/// Root of the experiment configuration file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub system: SystemConfig,
    pub frame: FrameConfig,
    pub channel: ChannelConfig,
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub optimizer: Option<OptimizerConfig>,
    #[serde(default)]
    pub detector: Option<DetectorBlock>,
    #[serde(default)]
    pub estimator: Option<EstimatorConfig>,
    pub experiment: ExperimentBlock,
}

/// Detector defaults used when the block is omitted.
impl Default for DetectorBlock {
    fn default() -> Self {
        Self {
            iterations: default_det_iterations(),
            damping: default_damping(),
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            iterations: default_opt_iterations(),
            decay: default_decay(),
            comm_gains: default_comm_gains(),
            sensing_gains: default_sensing_gains(),
        }
    }
}

/// Applies `--override key.path=value` pairs onto a raw TOML document.
/// Values parse as TOML literals first and fall back to strings.
pub fn apply_overrides(text: &str, overrides: &[String]) -> Result<String> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| Error::Config(format!("config is not valid TOML: {e}")))?;
    for entry in overrides {
        let (path, raw) = entry
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{entry}' is not KEY=VALUE")))?;
        let value = parse_toml_value(raw.trim());
        let keys: Vec<&str> = path.trim().split('.').collect();
        if keys.is_empty() || keys.iter().any(|k| k.is_empty()) {
            return Err(Error::Config(format!("override path '{path}' is malformed")));
        }
        let mut node = &mut table;
        for key in &keys[..keys.len() - 1] {
            node = node
                .entry(key.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| {
                    Error::Config(format!("override path '{path}' crosses a non-table value"))
                })?;
        }
        node.insert(keys[keys.len() - 1].to_string(), value);
    }
    toml::to_string(&table).map_err(|e| Error::Config(format!("override serialization: {e}")))
}

fn parse_toml_value(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match probe.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("probe key exists"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<Config> {
    let cfg: Config =
        toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Config(msg));
        if self.system.n_t == 0 || self.system.n_r == 0 {
            return err("antenna counts must be positive".into());
        }
        let d_s = self.d_s();
        if d_s == 0 || d_s > self.system.n_t {
            return err(format!(
                "d_s = {d_s} must lie in 1..=n_t ({})",
                self.system.n_t
            ));
        }
        if !(self.system.carrier_hz > 0.0) || !(self.system.bandwidth_hz > 0.0) {
            return err("carrier and bandwidth must be positive".into());
        }
        if self.frame.n == 0 {
            return err("frame length must be positive".into());
        }
        if self.frame.waveforms.is_empty() {
            return err("at least one waveform is required".into());
        }
        for w in &self.frame.waveforms {
            if !matches!(w.as_str(), "ofdm" | "otfs" | "afdm") {
                return err(format!("unknown waveform '{w}'"));
            }
        }
        if let Some(rows) = self.frame.otfs_rows {
            if rows == 0 || self.frame.n % rows != 0 {
                return err(format!(
                    "otfs_rows = {rows} does not divide the frame length {}",
                    self.frame.n
                ));
            }
        } else if self.frame.waveforms.iter().any(|w| w == "otfs") {
            let k = (self.frame.n as f64).sqrt() as usize;
            if k * k != self.frame.n {
                return err(format!(
                    "frame length {} is not a perfect square; set frame.otfs_rows explicitly",
                    self.frame.n
                ));
            }
        }
        let doppler_fields = [
            self.channel.max_doppler_hz.is_some(),
            self.channel.max_doppler_cycles.is_some(),
            self.channel.max_speed_mps.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count();
        if doppler_fields > 1 {
            return err("give at most one of max_doppler_hz / max_doppler_cycles / max_speed_mps".into());
        }
        if self.channel.paths == 0 && self.channel.fixed.is_empty() {
            return err("channel needs at least one path".into());
        }
        if !self.channel.fixed.is_empty() && self.channel.fixed.len() != self.channel.paths {
            return err(format!(
                "channel.paths = {} disagrees with {} fixed paths",
                self.channel.paths,
                self.channel.fixed.len()
            ));
        }
        for (i, f) in self.channel.fixed.iter().enumerate() {
            if f.delay_taps >= self.frame.n {
                return err(format!(
                    "fixed path {i} delay {} does not fit the frame of {}",
                    f.delay_taps, self.frame.n
                ));
            }
            let fields = [
                f.doppler_cycles.is_some(),
                f.doppler_hz.is_some(),
                f.radar_velocity_mps.is_some(),
            ]
            .iter()
            .filter(|&&b| b)
            .count();
            if fields > 1 {
                return err(format!("fixed path {i} gives more than one Doppler field"));
            }
        }
        if self.channel.max_delay_taps >= self.frame.n {
            return err(format!(
                "max delay of {} taps does not fit the frame of {}",
                self.channel.max_delay_taps, self.frame.n
            ));
        }
        if let Some(sim) = &self.sim {
            if sim.enabled && (sim.layers == 0 || sim.mx == 0 || sim.mz == 0) {
                return err("SIM geometry must have positive layer and atom counts".into());
            }
        }
        if let Some(opt) = &self.optimizer {
            if !(opt.decay > 0.0 && opt.decay < 1.0) {
                return err(format!("optimizer.decay = {} must lie in (0, 1)", opt.decay));
            }
            for g in [&opt.comm_gains, &opt.sensing_gains] {
                if !matches!(g.as_str(), "genie" | "unity") {
                    return err(format!("unknown gain knowledge '{g}'"));
                }
            }
        }
        if let Some(det) = &self.detector {
            if det.iterations == 0 || !(det.damping > 0.0 && det.damping < 1.0) {
                return err("detector needs iterations >= 1 and damping in (0, 1)".into());
            }
        }
        if let Some(est) = &self.estimator {
            if est.delay_bins == 0 || est.doppler_bins == 0 {
                return err("estimator grid needs positive bin counts".into());
            }
            if est.delay_bins > self.frame.n {
                return err("estimator delay bins exceed the frame length".into());
            }
            let span_fields = [
                est.doppler_span_cycles.is_some(),
                est.doppler_span_mps.is_some(),
            ]
            .iter()
            .filter(|&&b| b)
            .count();
            if est.doppler_bins > 1 && span_fields != 1 {
                return err("give exactly one of doppler_span_cycles / doppler_span_mps".into());
            }
        }
        if self.experiment.snr_db.is_empty() {
            return err("experiment needs at least one SNR point".into());
        }
        if self.experiment.snr_db.iter().any(|s| !s.is_finite()) {
            return err("SNR points must be finite".into());
        }
        if self.experiment.trials == 0 {
            return err("experiment needs at least one trial".into());
        }
        for arm in &self.experiment.arms {
            if !matches!(
                arm.as_str(),
                "no-sim" | "sim-unopt" | "sim-comm" | "sim-sensing"
            ) {
                return err(format!("unknown experiment arm '{arm}'"));
            }
        }
        if self
            .experiment
            .arms
            .iter()
            .any(|a| a != "no-sim")
        {
            let enabled = self.sim.as_ref().map(|s| s.enabled).unwrap_or(false);
            if !enabled {
                return err("SIM arms are configured but the [sim] block is missing or disabled".into());
            }
        }
        Ok(())
    }

    pub fn d_s(&self) -> usize {
        self.system
            .d_s
            .unwrap_or_else(|| self.system.n_t.min(self.system.n_r))
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.system.carrier_hz
    }

    pub fn sampling_grid(&self) -> SamplingGrid {
        SamplingGrid::new(self.frame.n, self.system.bandwidth_hz)
            .expect("validated frame length and bandwidth")
    }

    pub fn radar_mapping(&self) -> RadarMapping {
        RadarMapping {
            carrier_hz: self.system.carrier_hz,
            sample_rate_hz: self.system.bandwidth_hz,
            frame_len: self.frame.n,
        }
    }

    /// Maximum Doppler in Hz for the random channel draw.
    pub fn max_doppler_hz(&self) -> f64 {
        let grid = self.sampling_grid();
        let mapping = self.radar_mapping();
        if let Some(hz) = self.channel.max_doppler_hz {
            hz
        } else if let Some(cycles) = self.channel.max_doppler_cycles {
            grid.doppler_hz(cycles)
        } else if let Some(speed) = self.channel.max_speed_mps {
            // One-way mobile Doppler for the communication channel draw.
            speed * self.system.carrier_hz / SPEED_OF_LIGHT
        } else {
            let _ = mapping;
            0.0
        }
    }

    /// Largest normalized Doppler the channel can produce, folding in the
    /// fixed path overrides.
    pub fn max_doppler_cycles(&self) -> f64 {
        let grid = self.sampling_grid();
        let mut f_max = grid.doppler_cycles(self.max_doppler_hz()).abs();
        for fixed in self.resolve_fixed_paths() {
            f_max = f_max.max(fixed.doppler_cycles.abs());
        }
        f_max
    }

    fn resolve_fixed_paths(&self) -> Vec<FixedPath> {
        let grid = self.sampling_grid();
        let mapping = self.radar_mapping();
        self.channel
            .fixed
            .iter()
            .map(|f| {
                let doppler_cycles = if let Some(c) = f.doppler_cycles {
                    c
                } else if let Some(hz) = f.doppler_hz {
                    grid.doppler_cycles(hz)
                } else if let Some(v) = f.radar_velocity_mps {
                    mapping.doppler_cycles(v)
                } else {
                    0.0
                };
                FixedPath {
                    delay_taps: f.delay_taps,
                    doppler_cycles,
                    gain: f.gain.map(|[re, im]| C64::new(re, im)),
                }
            })
            .collect()
    }

    pub fn channel_sampler(&self) -> ChannelSampler {
        let max_doppler_hz = self.max_doppler_hz();
        let direct = PathSampling {
            count: self.channel.paths,
            max_delay_taps: self.channel.max_delay_taps,
            max_doppler_hz,
        };
        let fixed = if self.channel.fixed.is_empty() {
            None
        } else {
            Some(self.resolve_fixed_paths())
        };
        let ris = self
            .channel
            .ris
            .iter()
            .map(|r| {
                (
                    PathSampling {
                        count: r.tx_paths,
                        max_delay_taps: self.channel.max_delay_taps / 2,
                        max_doppler_hz: max_doppler_hz / 2.0,
                    },
                    PathSampling {
                        count: r.rx_paths,
                        max_delay_taps: self.channel.max_delay_taps / 2,
                        max_doppler_hz: max_doppler_hz / 2.0,
                    },
                )
            })
            .collect();
        ChannelSampler {
            direct,
            fixed_direct: fixed,
            ris,
        }
    }

    /// One frame spec per configured waveform, in config order.
    pub fn frame_specs(&self) -> Result<Vec<FrameSpec>> {
        let n = self.frame.n;
        let d_s = self.d_s();
        let mut specs = Vec::new();
        for w in &self.frame.waveforms {
            let kind = match w.as_str() {
                "ofdm" => FrameKind::Ofdm,
                "otfs" => {
                    let rows = self
                        .frame
                        .otfs_rows
                        .unwrap_or_else(|| (n as f64).sqrt() as usize);
                    FrameKind::Otfs {
                        rows,
                        cols: n / rows,
                    }
                }
                "afdm" => {
                    let c1 = self.frame.afdm_c1.unwrap_or_else(|| {
                        let f_max = self.max_doppler_cycles();
                        (2.0 * f_max.ceil() + 1.0) / (2.0 * n as f64)
                    });
                    FrameKind::Afdm {
                        c1,
                        c2: self.frame.afdm_c2,
                    }
                }
                other => return Err(Error::Config(format!("unknown waveform '{other}'"))),
            };
            specs.push(FrameSpec::new(kind, n, d_s, self.frame.symbol_energy)?);
        }
        Ok(specs)
    }

    /// Builds the metasurface-equipped link from the `[sim]` block.
    pub fn build_mpdd_system(&self) -> Result<MpddSystem> {
        let sim = self
            .sim
            .as_ref()
            .filter(|s| s.enabled)
            .ok_or_else(|| Error::Config("the [sim] block is missing or disabled".into()))?;
        let lambda = self.wavelength_m();
        let tx_geom = SimGeometry::new(
            sim.layers,
            sim.mx,
            sim.mz,
            sim.atom_spacing_wavelengths,
            sim.layer_spacing_wavelengths,
            sim.antenna_gap_wavelengths,
            lambda,
            self.system.n_t,
            sim.normal_incidence,
        )?;
        let rx_geom = SimGeometry::new(
            sim.layers,
            sim.mx,
            sim.mz,
            sim.atom_spacing_wavelengths,
            sim.layer_spacing_wavelengths,
            sim.antenna_gap_wavelengths,
            lambda,
            self.system.n_r,
            sim.normal_incidence,
        )?;
        let tx = SimStack::new(tx_geom, SimSide::Transmit)?;
        let rx = SimStack::new(rx_geom, SimSide::Receive)?;
        let ris = self
            .channel
            .ris
            .iter()
            .map(|r| RisSurface::identity(r.jx, r.jz, lambda))
            .collect::<Result<Vec<_>>>()?;
        MpddSystem::new(tx, rx, ris, Some(self.d_s()))
    }

    /// Conventional (no-surface) link over λ/2 ULAs.
    pub fn build_conventional_system(&self) -> Result<ConventionalSystem> {
        let lambda = self.wavelength_m();
        let tx = UlaGeometry::half_wavelength(self.system.n_t, lambda)?;
        let rx = UlaGeometry::half_wavelength(self.system.n_r, lambda)?;
        ConventionalSystem::identity(tx, rx, self.d_s())
    }

    pub fn detector_block(&self) -> DetectorBlock {
        self.detector.clone().unwrap_or_default()
    }

    pub fn optimizer_block(&self) -> OptimizerConfig {
        self.optimizer.clone().unwrap_or_default()
    }

    pub fn comm_gain_knowledge(&self) -> GainKnowledge {
        match self.optimizer_block().comm_gains.as_str() {
            "unity" => GainKnowledge::Unity,
            _ => GainKnowledge::Genie,
        }
    }

    pub fn sensing_gain_knowledge(&self) -> GainKnowledge {
        match self.optimizer_block().sensing_gains.as_str() {
            "genie" => GainKnowledge::Genie,
            _ => GainKnowledge::Unity,
        }
    }

    /// Estimator search grid from the `[estimator]` block.
    pub fn estimator_grid(&self) -> Result<DelayDopplerGrid> {
        let est = self
            .estimator
            .as_ref()
            .ok_or_else(|| Error::Config("the [estimator] block is required here".into()))?;
        let span = if let Some(c) = est.doppler_span_cycles {
            c
        } else if let Some(v) = est.doppler_span_mps {
            self.radar_mapping().doppler_cycles(v)
        } else {
            0.0
        };
        DelayDopplerGrid::regular(est.delay_bins, est.doppler_bins, span)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        [system]
        n_t = 1
        n_r = 2
        carrier_hz = 28e9
        bandwidth_hz = 20e6

        [frame]
        n = 64
        waveforms = ["ofdm", "otfs", "afdm"]

        [channel]
        paths = 3
        max_delay_taps = 9
        max_doppler_cycles = 2.0

        [sim]
        layers = 2
        mx = 3
        mz = 3

        [experiment]
        snr_db = [0.0, 5.0]
        trials = 4
    "#;

    #[test]
    fn base_config_parses_with_defaults() {
        let cfg = parse_config(BASE).unwrap();
        assert_eq!(cfg.d_s(), 1);
        assert_eq!(cfg.experiment.seed, 1);
        assert_eq!(cfg.detector_block().iterations, 50);
        let specs = cfg.frame_specs().unwrap();
        assert_eq!(specs.len(), 3);
        match specs[1].kind {
            FrameKind::Otfs { rows, cols } => assert_eq!((rows, cols), (8, 8)),
            _ => panic!("expected OTFS"),
        }
        // Default c1 = (2·⌈f_max⌉ + 1)/(2N) with f_max = 2 cycles.
        match specs[2].kind {
            FrameKind::Afdm { c1, c2 } => {
                assert!((c1 - 5.0 / 128.0).abs() < 1e-12);
                assert_eq!(c2, 0.0);
            }
            _ => panic!("expected AFDM"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = BASE.replace("[experiment]", "[experiment]\nbogus_key = 3");
        let e = parse_config(&text).unwrap_err();
        assert!(matches!(e, Error::Config(_)), "got {e:?}");
    }

    #[test]
    fn unknown_section_is_rejected() {
        let text = format!("{BASE}\n[nonsense]\na = 1\n");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn cross_field_validation_catches_inconsistencies() {
        // OTFS needs a square-compatible frame.
        let text = BASE.replace("n = 64", "n = 60");
        assert!(parse_config(&text).is_err());
        // Fixed path count must match channel.paths.
        let text = format!(
            "{}\n[[channel.fixed]]\ndelay_taps = 2\n",
            BASE.replace("paths = 3", "paths = 2")
        );
        assert!(parse_config(&text).is_err());
        // Two Doppler spreads at once.
        let text = BASE.replace(
            "max_doppler_cycles = 2.0",
            "max_doppler_cycles = 2.0\nmax_doppler_hz = 100.0",
        );
        assert!(parse_config(&text).is_err());
        // SIM arm without a [sim] block.
        let text = BASE.replace("[sim]\n        layers = 2\n        mx = 3\n        mz = 3", "");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn overrides_reach_nested_keys_and_array_values() {
        let patched = apply_overrides(
            BASE,
            &[
                "experiment.trials=9".into(),
                "experiment.snr_db=[1.0, 2.0, 3.0]".into(),
                "frame.waveforms=[\"ofdm\"]".into(),
                "experiment.out=custom.csv".into(),
            ],
        )
        .unwrap();
        let cfg = parse_config(&patched).unwrap();
        assert_eq!(cfg.experiment.trials, 9);
        assert_eq!(cfg.experiment.snr_db, vec![1.0, 2.0, 3.0]);
        assert_eq!(cfg.frame.waveforms, vec!["ofdm".to_string()]);
        // Bare word falls back to a string value.
        assert_eq!(cfg.experiment.out, "custom.csv");
    }

    #[test]
    fn override_with_bad_shape_is_rejected() {
        assert!(apply_overrides(BASE, &["no_equals_sign".into()]).is_err());
        // Overriding through a scalar is a config error.
        assert!(apply_overrides(BASE, &["frame.n.sub=1".into()]).is_err());
    }

    #[test]
    fn fixed_paths_resolve_velocity_to_cycles() {
        let text = format!(
            "{}\n[[channel.fixed]]\ndelay_taps = 5\nradar_velocity_mps = -54.0\n\
             [[channel.fixed]]\ndelay_taps = 13\nradar_velocity_mps = 54.0\ngain = [1.0, 0.0]\n",
            BASE.replace("paths = 3", "paths = 2").replace("n = 64", "n = 144")
        );
        let cfg = parse_config(&text).unwrap();
        let sampler = cfg.channel_sampler();
        let fixed = sampler.fixed_direct.unwrap();
        assert_eq!(fixed.len(), 2);
        assert!((fixed[0].doppler_cycles + 0.072576).abs() < 1e-9);
        assert!((fixed[1].doppler_cycles - 0.072576).abs() < 1e-9);
        assert_eq!(fixed[1].gain, Some(C64::new(1.0, 0.0)));
    }
}
