//! Monte-Carlo experiment drivers.
//!
//! Every random draw comes from a substream keyed by (master seed,
//! experiment tag, SNR index, trial index, purpose), so a sweep is fully
//! reproducible, any single trial can be replayed in isolation, and the
//! result cannot depend on the thread count: trials run in parallel but
//! their outputs are folded in trial order.
//!
//! Within a trial all compared arms and waveforms share one channel draw,
//! one payload and one unit-variance noise draw (scaled to each arm's noise
//! level), and every arm's effective channel is normalized to the same
//! Frobenius norm before detection — plain paired comparison with no power
//! advantage beyond the metasurface configuration itself.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use super::config::Config;
use super::csvout::CurveRow;
use crate::channel::{
    assemble_td_channel, conventional_mimo_channel, sample_paths, Channel, ChannelSampler,
    ConventionalSystem, CpPhase, MpddSystem, PathSet, SamplingGrid,
};
use crate::gabp;
use crate::pda::{self, PdaConfig};
use crate::rng::{complex_gaussian, substream};
use crate::simopt::{optimize_system, AscentConfig, Objective};
use crate::waveforms::{effective_channel, qpsk_map, FrameSpec};
use crate::{C64, Error, Result};

const STREAM_CHANNEL: u64 = 0;
const STREAM_BITS: u64 = 1;
const STREAM_NOISE: u64 = 2;

/// Stable FNV-1a tag of an experiment label, used to decorrelate the random
/// streams of different experiment kinds under one master seed.
fn experiment_tag(label: &str) -> u64 {
    label
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
}

/// One compared configuration of the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    NoSim,
    SimUnoptimized,
    SimCommOptimized,
    SimSensingOptimized,
}

impl Arm {
    pub fn parse(label: &str) -> Result<Self> {
        match label {
            "no-sim" => Ok(Arm::NoSim),
            "sim-unopt" => Ok(Arm::SimUnoptimized),
            "sim-comm" => Ok(Arm::SimCommOptimized),
            "sim-sensing" => Ok(Arm::SimSensingOptimized),
            other => Err(Error::Config(format!("unknown experiment arm '{other}'"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Arm::NoSim => "no-sim",
            Arm::SimUnoptimized => "sim-unopt",
            Arm::SimCommOptimized => "sim-comm",
            Arm::SimSensingOptimized => "sim-sensing",
        }
    }
}

/// Noise variance realizing a per-symbol SNR under the channel-norm
/// convention `SNR = E_S·(‖H̄‖_F²/M̄)/σ_w²`.
pub fn noise_variance(snr_db: f64, symbol_energy: f64, chan_norm_sq: f64, m_bar: f64) -> f64 {
    symbol_energy * chan_norm_sq / (m_bar * 10f64.powf(snr_db / 10.0))
}

/// Circularly-symmetric AWGN at the configured SNR; returns the samples and
/// the variance they were drawn with.
pub fn awgn<R: Rng + ?Sized>(
    len: usize,
    snr_db: f64,
    symbol_energy: f64,
    chan_norm_sq: f64,
    m_bar: f64,
    rng: &mut R,
) -> (DVector<C64>, f64) {
    let var = noise_variance(snr_db, symbol_energy, chan_norm_sq, m_bar);
    (
        DVector::from_fn(len, |_, _| complex_gaussian(rng, var)),
        var,
    )
}

enum ArmLink<'a> {
    Conventional(&'a ConventionalSystem),
    Mpdd(Box<MpddSystem>),
}

fn prepare_arm<'a>(
    arm: Arm,
    cfg: &Config,
    base: Option<&MpddSystem>,
    conventional: &'a ConventionalSystem,
    paths: &PathSet,
    ascent: &AscentConfig,
) -> Result<ArmLink<'a>> {
    let need_base = || {
        base.cloned()
            .ok_or_else(|| Error::Config("SIM arm requested without a [sim] block".into()))
    };
    match arm {
        Arm::NoSim => Ok(ArmLink::Conventional(conventional)),
        Arm::SimUnoptimized => Ok(ArmLink::Mpdd(Box::new(need_base()?))),
        Arm::SimCommOptimized => {
            let mut sys = need_base()?;
            optimize_system(
                &mut sys,
                &paths.direct,
                Objective::Communication,
                cfg.comm_gain_knowledge(),
                ascent,
            )?;
            Ok(ArmLink::Mpdd(Box::new(sys)))
        }
        Arm::SimSensingOptimized => {
            let mut sys = need_base()?;
            optimize_system(
                &mut sys,
                &paths.direct,
                Objective::Sensing,
                cfg.sensing_gain_knowledge(),
                ascent,
            )?;
            Ok(ArmLink::Mpdd(Box::new(sys)))
        }
    }
}

fn assemble_link(link: &ArmLink, paths: &PathSet, n: usize, cp: CpPhase) -> Result<Channel> {
    match link {
        ArmLink::Conventional(sys) => conventional_mimo_channel(sys, paths, n, cp),
        ArmLink::Mpdd(sys) => assemble_td_channel(sys, paths, n, cp),
    }
}

fn count_bit_errors(a: &[u8], b: &[u8]) -> u64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u64
}

struct RunContext {
    specs: Vec<FrameSpec>,
    arms: Vec<Arm>,
    sampler: ChannelSampler,
    grid: SamplingGrid,
    base_mpdd: Option<MpddSystem>,
    conventional: ConventionalSystem,
    ascent: AscentConfig,
    tag: u64,
}

impl RunContext {
    fn new(cfg: &Config, label: &str) -> Result<Self> {
        let specs = cfg.frame_specs()?;
        let arms = cfg
            .experiment
            .arms
            .iter()
            .map(|a| Arm::parse(a))
            .collect::<Result<Vec<_>>>()?;
        let needs_sim = arms.iter().any(|a| *a != Arm::NoSim);
        let base_mpdd = if needs_sim {
            Some(cfg.build_mpdd_system()?)
        } else {
            None
        };
        if arms.contains(&Arm::NoSim) && !cfg.channel.ris.is_empty() {
            return Err(Error::Config(
                "the no-sim arm cannot model RIS paths; drop the arm or the [channel.ris] blocks"
                    .into(),
            ));
        }
        let opt = cfg.optimizer_block();
        Ok(Self {
            specs,
            arms,
            sampler: cfg.channel_sampler(),
            grid: cfg.sampling_grid(),
            base_mpdd,
            conventional: cfg.build_conventional_system()?,
            ascent: AscentConfig::new(opt.iterations, opt.decay)?,
            tag: experiment_tag(label),
        })
    }

    fn rx_streams(&self, arm: Arm) -> usize {
        match arm {
            Arm::NoSim => self.conventional.u.ncols(),
            _ => self
                .base_mpdd
                .as_ref()
                .map(|s| s.rx_streams())
                .unwrap_or(1),
        }
    }
}

/// Bit-error-rate sweep: for every SNR point and trial, draw one channel,
/// then push the same payload through every (arm, waveform) pair and count
/// errors after GaBP detection.
pub fn run_ber(cfg: &Config, label: &str) -> Result<Vec<CurveRow>> {
    let ctx = RunContext::new(cfg, label)?;
    let det = cfg.detector_block();
    let e_s = cfg.frame.symbol_energy;
    let n = cfg.frame.n;
    let d_s = cfg.d_s();
    let m_bar = n * d_s;
    // All arms expose the same observation count.
    let n_bar = n * ctx.rx_streams(ctx.arms[0]);
    for &arm in &ctx.arms {
        if n * ctx.rx_streams(arm) != n_bar {
            return Err(Error::Config(
                "compared arms must expose the same receive dimensions".into(),
            ));
        }
    }
    let snrs = &cfg.experiment.snr_db;
    let trials = cfg.experiment.trials;

    // errors/bits indexed [arm][waveform][snr].
    let mut errors = vec![vec![vec![0u64; snrs.len()]; ctx.specs.len()]; ctx.arms.len()];
    let mut bits_total = vec![vec![vec![0u64; snrs.len()]; ctx.specs.len()]; ctx.arms.len()];

    for (si, &snr_db) in snrs.iter().enumerate() {
        let per_trial: Vec<Vec<(usize, usize, u64, u64)>> = (0..trials)
            .into_par_iter()
            .map(|ti| ber_trial(cfg, &ctx, snr_db, si as u64, ti as u64, e_s, n_bar, m_bar, &det))
            .collect::<Result<Vec<_>>>()?;
        for trial in per_trial {
            for (ai, wi, err, bits) in trial {
                errors[ai][wi][si] += err;
                bits_total[ai][wi][si] += bits;
            }
        }
    }

    let mut rows = Vec::new();
    for (ai, arm) in ctx.arms.iter().enumerate() {
        for (wi, spec) in ctx.specs.iter().enumerate() {
            for (si, &snr_db) in snrs.iter().enumerate() {
                let bits = bits_total[ai][wi][si];
                let p = errors[ai][wi][si] as f64 / bits as f64;
                let ci95 = 1.96 * (p * (1.0 - p) / bits as f64).sqrt();
                rows.push(CurveRow {
                    experiment: label.to_string(),
                    waveform: spec.kind.label().to_string(),
                    arm: arm.label().to_string(),
                    snr_db,
                    metric: "ber".to_string(),
                    value: p,
                    trials: trials as u64,
                    count: bits,
                    ci95,
                });
            }
        }
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn ber_trial(
    cfg: &Config,
    ctx: &RunContext,
    snr_db: f64,
    si: u64,
    ti: u64,
    e_s: f64,
    n_bar: usize,
    m_bar: usize,
    det: &super::config::DetectorBlock,
) -> Result<Vec<(usize, usize, u64, u64)>> {
    let seed = cfg.experiment.seed;
    let mut chan_rng = substream(seed, &[ctx.tag, si, ti, STREAM_CHANNEL]);
    let paths = sample_paths(&ctx.sampler, &ctx.grid, &mut chan_rng);
    let mut bit_rng = substream(seed, &[ctx.tag, si, ti, STREAM_BITS]);
    let bits: Vec<u8> = (0..2 * m_bar).map(|_| bit_rng.random_range(0..=1) as u8).collect();
    let x = qpsk_map(&bits, e_s)?;
    let mut noise_rng = substream(seed, &[ctx.tag, si, ti, STREAM_NOISE]);
    let unit_noise = DVector::from_fn(n_bar, |_, _| complex_gaussian(&mut noise_rng, 1.0));

    let mut out = Vec::with_capacity(ctx.arms.len() * ctx.specs.len());
    for (ai, &arm) in ctx.arms.iter().enumerate() {
        let link = prepare_arm(
            arm,
            cfg,
            ctx.base_mpdd.as_ref(),
            &ctx.conventional,
            &paths,
            &ctx.ascent,
        )?;
        for (wi, spec) in ctx.specs.iter().enumerate() {
            let td = assemble_link(&link, &paths, cfg.frame.n, spec.cp_phase())?;
            let (td, _) = td.normalized(n_bar as f64)?;
            let h = effective_channel(&td, spec)?.dense();
            let norm_sq = h.norm_squared();
            // Equal-power fairness across every compared arm.
            if (norm_sq - n_bar as f64).abs() > 1e-9 * n_bar as f64 {
                return Err(Error::Numerical(format!(
                    "normalization drifted: ‖H‖² = {norm_sq}, target {n_bar}"
                )));
            }
            let nv = noise_variance(snr_db, e_s, norm_sq, m_bar as f64);
            let y = &h * &x + &unit_noise * C64::new(nv.sqrt(), 0.0);
            let det_cfg = gabp::DetectorConfig::new(det.iterations, det.damping, e_s, nv)?;
            let detection = gabp::detect(&y, &h, &det_cfg)?;
            out.push((ai, wi, count_bit_errors(&detection.bits, &bits), bits.len() as u64));
        }
    }
    Ok(out)
}

/// Greedy globally-nearest pairing of estimates to ground truth in grid
/// units (delay taps, Doppler bins).
fn match_targets(
    estimates: &[(f64, f64)],
    truth: &[(f64, f64)],
    doppler_bin: f64,
) -> Vec<(usize, usize)> {
    let df = if doppler_bin.abs() > 0.0 { doppler_bin } else { 1.0 };
    let mut pairs = Vec::new();
    let mut est_used = vec![false; estimates.len()];
    let mut truth_used = vec![false; truth.len()];
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for (e, &(et, ef)) in estimates.iter().enumerate() {
            if est_used[e] {
                continue;
            }
            for (t, &(tt, tf)) in truth.iter().enumerate() {
                if truth_used[t] {
                    continue;
                }
                let d = (et - tt).powi(2) + ((ef - tf) / df).powi(2);
                if best.map(|(bd, _, _)| d < bd).unwrap_or(true) {
                    best = Some((d, e, t));
                }
            }
        }
        match best {
            Some((_, e, t)) => {
                est_used[e] = true;
                truth_used[t] = true;
                pairs.push((e, t));
            }
            None => break,
        }
    }
    pairs
}

/// Radar range/velocity MSE sweep over fixed targets (single-antenna,
/// single-stream link). Emits per-waveform curves for every arm plus the
/// grid's quantization floor as a `resolution-limit` pseudo-arm.
pub fn run_mse(cfg: &Config) -> Result<Vec<CurveRow>> {
    if cfg.system.n_t != 1 || cfg.system.n_r != 1 {
        return Err(Error::Config(
            "the mse experiment models a single-antenna sensing link (n_t = n_r = 1)".into(),
        ));
    }
    if cfg.channel.fixed.is_empty() {
        return Err(Error::Config(
            "the mse experiment needs fixed targets in [channel].fixed".into(),
        ));
    }
    let est_cfg = cfg
        .estimator
        .as_ref()
        .ok_or_else(|| Error::Config("the mse experiment needs an [estimator] block".into()))?
        .clone();
    let ctx = RunContext::new(cfg, "mse")?;
    let est_grid = cfg.estimator_grid()?;
    let mapping = cfg.radar_mapping();
    let e_s = cfg.frame.symbol_energy;
    let n = cfg.frame.n;
    let p_count = cfg.channel.paths;

    // Ground truth in physical units, fixed across trials.
    let sampler_fixed = ctx.sampler.fixed_direct.clone().unwrap();
    let truth_physical: Vec<(f64, f64)> = sampler_fixed
        .iter()
        .map(|f| {
            (
                mapping.range_m(f.delay_taps as f64),
                mapping.velocity_mps(f.doppler_cycles),
            )
        })
        .collect();
    let truth_grid_units: Vec<(f64, f64)> = sampler_fixed
        .iter()
        .map(|f| (f.delay_taps as f64, f.doppler_cycles))
        .collect();
    let doppler_bin = if est_grid.doppler_cycles.len() > 1 {
        est_grid.doppler_cycles[1] - est_grid.doppler_cycles[0]
    } else {
        1.0
    };
    let (floor_range, floor_vel) = pda::resolution_floor(&truth_physical, &est_grid, &mapping);

    let snrs = &cfg.experiment.snr_db;
    let trials = cfg.experiment.trials;

    // Accumulators indexed [arm][waveform][snr]: Σe², Σe⁴ and counts for
    // both metrics.
    #[derive(Clone, Default)]
    struct Acc {
        range_sq: f64,
        range_quad: f64,
        vel_sq: f64,
        vel_quad: f64,
        matched: u64,
    }
    let mut acc = vec![vec![vec![Acc::default(); snrs.len()]; ctx.specs.len()]; ctx.arms.len()];

    for (si, &snr_db) in snrs.iter().enumerate() {
        let per_trial: Vec<Vec<(usize, usize, f64, f64, f64, f64, u64)>> = (0..trials)
            .into_par_iter()
            .map(|ti| {
                mse_trial(
                    cfg,
                    &ctx,
                    &est_cfg,
                    &est_grid,
                    &truth_grid_units,
                    &truth_physical,
                    doppler_bin,
                    &mapping,
                    snr_db,
                    si as u64,
                    ti as u64,
                    e_s,
                    n,
                    p_count,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        for trial in per_trial {
            for (ai, wi, rsq, rquad, vsq, vquad, matched) in trial {
                let a = &mut acc[ai][wi][si];
                a.range_sq += rsq;
                a.range_quad += rquad;
                a.vel_sq += vsq;
                a.vel_quad += vquad;
                a.matched += matched;
            }
        }
    }

    let mut rows = Vec::new();
    for (ai, arm) in ctx.arms.iter().enumerate() {
        for (wi, spec) in ctx.specs.iter().enumerate() {
            for (si, &snr_db) in snrs.iter().enumerate() {
                let a = &acc[ai][wi][si];
                let count = a.matched.max(1) as f64;
                for (metric, sum, quad) in [
                    ("mse_range_m2", a.range_sq, a.range_quad),
                    ("mse_velocity_mps2", a.vel_sq, a.vel_quad),
                ] {
                    let mean = sum / count;
                    let var = (quad / count - mean * mean).max(0.0);
                    rows.push(CurveRow {
                        experiment: "mse".into(),
                        waveform: spec.kind.label().into(),
                        arm: arm.label().into(),
                        snr_db,
                        metric: metric.into(),
                        value: mean,
                        trials: trials as u64,
                        count: a.matched,
                        ci95: 1.96 * (var / count).sqrt(),
                    });
                }
            }
        }
    }
    // The analytic quantization floor, one line per waveform and metric.
    for spec in &ctx.specs {
        for (si, &snr_db) in snrs.iter().enumerate() {
            let _ = si;
            for (metric, value) in [
                ("mse_range_m2", floor_range),
                ("mse_velocity_mps2", floor_vel),
            ] {
                rows.push(CurveRow {
                    experiment: "mse".into(),
                    waveform: spec.kind.label().into(),
                    arm: "resolution-limit".into(),
                    snr_db,
                    metric: metric.into(),
                    value,
                    trials: 1,
                    count: truth_physical.len() as u64,
                    ci95: 0.0,
                });
            }
        }
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn mse_trial(
    cfg: &Config,
    ctx: &RunContext,
    est_cfg: &super::config::EstimatorConfig,
    est_grid: &pda::DelayDopplerGrid,
    truth_grid_units: &[(f64, f64)],
    truth_physical: &[(f64, f64)],
    doppler_bin: f64,
    mapping: &pda::RadarMapping,
    snr_db: f64,
    si: u64,
    ti: u64,
    e_s: f64,
    n: usize,
    p_count: usize,
) -> Result<Vec<(usize, usize, f64, f64, f64, f64, u64)>> {
    let seed = cfg.experiment.seed;
    let mut chan_rng = substream(seed, &[ctx.tag, si, ti, STREAM_CHANNEL]);
    let paths = sample_paths(&ctx.sampler, &ctx.grid, &mut chan_rng);
    let mut bit_rng = substream(seed, &[ctx.tag, si, ti, STREAM_BITS]);
    let bits: Vec<u8> = (0..2 * n).map(|_| bit_rng.random_range(0..=1) as u8).collect();
    let x = qpsk_map(&bits, e_s)?;
    let mut noise_rng = substream(seed, &[ctx.tag, si, ti, STREAM_NOISE]);
    let unit_noise = DVector::from_fn(n, |_, _| complex_gaussian(&mut noise_rng, 1.0));

    // The dictionary depends only on the pilot and the waveform.
    let mut dictionaries = Vec::with_capacity(ctx.specs.len());
    for spec in &ctx.specs {
        dictionaries.push(pda::build_dictionary(est_grid, &x, spec)?);
    }

    let mut out = Vec::new();
    for (ai, &arm) in ctx.arms.iter().enumerate() {
        let link = prepare_arm(
            arm,
            cfg,
            ctx.base_mpdd.as_ref(),
            &ctx.conventional,
            &paths,
            &ctx.ascent,
        )?;
        for (wi, spec) in ctx.specs.iter().enumerate() {
            let td = assemble_link(&link, &paths, n, spec.cp_phase())?;
            let (td, _) = td.normalized(n as f64)?;
            let eff = effective_channel(&td, spec)?;
            let nv = noise_variance(snr_db, e_s, n as f64, n as f64);
            let y = eff.apply(&x)? + &unit_noise * C64::new(nv.sqrt(), 0.0);
            let pda_cfg = PdaConfig {
                iterations: est_cfg.iterations,
                damping: est_cfg.damping,
                noise_var: nv,
                path_count: p_count,
                known_paths: est_cfg.known_paths.then_some(p_count),
                activity_threshold: est_cfg.activity_threshold,
            };
            let estimate = pda::estimate(&y, &dictionaries[wi], &pda_cfg)?;
            let est_units: Vec<(f64, f64)> = estimate
                .atoms
                .iter()
                .map(|a| (a.delay_taps as f64, a.doppler_cycles))
                .collect();
            let pairs = match_targets(&est_units, truth_grid_units, doppler_bin);
            let mut rsq = 0.0;
            let mut rquad = 0.0;
            let mut vsq = 0.0;
            let mut vquad = 0.0;
            for &(e, t) in &pairs {
                let atom = &estimate.atoms[e];
                let (range, velocity) = pda::grid_to_radar(atom, mapping);
                let re = (range - truth_physical[t].0).powi(2);
                let ve = (velocity - truth_physical[t].1).powi(2);
                rsq += re;
                rquad += re * re;
                vsq += ve;
                vquad += ve * ve;
            }
            out.push((ai, wi, rsq, rquad, vsq, vquad, pairs.len() as u64));
        }
    }
    Ok(out)
}

/// Magnitude heat-map dump of each waveform's effective channel for one
/// fixed channel draw (the first configured arm).
pub fn run_channel_dump(cfg: &Config) -> Result<Vec<(String, DMatrix<f64>)>> {
    let ctx = RunContext::new(cfg, "channel-dump")?;
    let seed = cfg.experiment.seed;
    let mut chan_rng = substream(seed, &[ctx.tag, 0, 0, STREAM_CHANNEL]);
    let paths = sample_paths(&ctx.sampler, &ctx.grid, &mut chan_rng);
    let arm = *ctx.arms.first().unwrap_or(&Arm::SimUnoptimized);
    let link = prepare_arm(
        arm,
        cfg,
        ctx.base_mpdd.as_ref(),
        &ctx.conventional,
        &paths,
        &ctx.ascent,
    )?;
    let n_bar = cfg.frame.n * ctx.rx_streams(arm);
    let mut grids = Vec::new();
    for spec in &ctx.specs {
        let td = assemble_link(&link, &paths, cfg.frame.n, spec.cp_phase())?;
        let (td, _) = td.normalized(n_bar as f64)?;
        let h = effective_channel(&td, spec)?.dense();
        grids.push((spec.kind.label().to_string(), h.map(|v| v.norm())));
    }
    Ok(grids)
}

/// Single-channel ascent diagnostics: one trajectory per objective, emitted
/// as (iteration, objective value) rows.
pub fn run_optimize(cfg: &Config) -> Result<Vec<CurveRow>> {
    let ctx = RunContext::new(cfg, "optimize")?;
    let base = ctx
        .base_mpdd
        .as_ref()
        .ok_or_else(|| Error::Config("optimize needs a [sim] block".into()))?;
    let seed = cfg.experiment.seed;
    let mut chan_rng = substream(seed, &[ctx.tag, 0, 0, STREAM_CHANNEL]);
    let paths = sample_paths(&ctx.sampler, &ctx.grid, &mut chan_rng);
    let mut rows = Vec::new();
    for (objective, gains, label) in [
        (
            Objective::Communication,
            cfg.comm_gain_knowledge(),
            "comm-objective",
        ),
        (
            Objective::Sensing,
            cfg.sensing_gain_knowledge(),
            "sensing-objective",
        ),
    ] {
        let mut sys = base.clone();
        let trace = optimize_system(&mut sys, &paths.direct, objective, gains, &ctx.ascent)?;
        for (i, &value) in trace.objective.iter().enumerate() {
            rows.push(CurveRow {
                experiment: "optimize".into(),
                waveform: "-".into(),
                arm: label.into(),
                snr_db: i as f64,
                metric: "objective".into(),
                value,
                trials: 1,
                count: i as u64,
                ci95: 0.0,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;
    use approx::assert_abs_diff_eq;

    fn tiny_ber_config(extra: &str) -> String {
        format!(
            r#"
            [system]
            n_t = 1
            n_r = 2
            carrier_hz = 28e9
            bandwidth_hz = 20e6

            [frame]
            n = 16
            waveforms = ["ofdm"]

            [channel]
            paths = 2
            max_delay_taps = 3
            max_doppler_cycles = 1.0

            [sim]
            layers = 2
            mx = 2
            mz = 2

            [optimizer]
            iterations = 10

            [detector]
            iterations = 8

            [experiment]
            snr_db = [10.0]
            trials = 3
            arms = ["no-sim", "sim-unopt", "sim-comm"]
            {extra}
            "#
        )
    }

    #[test]
    fn noise_variance_convention() {
        // SNR → ∞ drives the variance to zero.
        assert!(noise_variance(300.0, 2.0, 16.0, 16.0) < 1e-25);
        // ‖H‖² = M̄ gives σ_w² = E_S/snr.
        assert_abs_diff_eq!(noise_variance(10.0, 2.0, 64.0, 64.0), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn awgn_statistics() {
        let mut rng = substream(9, &[1]);
        let (samples, var) = awgn(1_000_000, 7.0, 2.0, 32.0, 16.0, &mut rng);
        let expected = noise_variance(7.0, 2.0, 32.0, 16.0);
        assert_abs_diff_eq!(var, expected, epsilon = 1e-15);
        let emp: f64 = samples.iter().map(|v| v.norm_sqr()).sum::<f64>() / samples.len() as f64;
        assert!(
            (emp - var).abs() < 0.01 * var,
            "empirical variance {emp} vs {var}"
        );
        // Independent real/imag parts, each at half the variance.
        let re_var: f64 = samples.iter().map(|v| v.re * v.re).sum::<f64>() / samples.len() as f64;
        let im_var: f64 = samples.iter().map(|v| v.im * v.im).sum::<f64>() / samples.len() as f64;
        let cross: f64 = samples.iter().map(|v| v.re * v.im).sum::<f64>() / samples.len() as f64;
        assert!((re_var - var / 2.0).abs() < 0.01 * var);
        assert!((im_var - var / 2.0).abs() < 0.01 * var);
        assert!(cross.abs() < 0.01 * var);
    }

    #[test]
    fn demodulated_noise_keeps_its_energy() {
        // The demodulation transforms are unitary, so generating noise in
        // the decision domain is statistically identical to pushing
        // time-domain noise through the receiver; per frame the energy is
        // preserved exactly.
        use crate::waveforms::{demodulate, FrameKind, FrameSpec};
        let spec = FrameSpec::new(FrameKind::Afdm { c1: 0.02, c2: 0.01 }, 32, 1, 2.0).unwrap();
        let mut rng = substream(11, &[2]);
        for _ in 0..20 {
            let w = DVector::from_fn(32, |_, _| complex_gaussian(&mut rng, 0.7));
            let demod = demodulate(&spec, &w).unwrap();
            assert_abs_diff_eq!(demod.norm(), w.norm(), epsilon = 1e-10);
        }
    }

    #[test]
    fn ber_runner_is_deterministic_and_thread_invariant() {
        let cfg = parse_config(&tiny_ber_config("")).unwrap();
        let run_with_threads = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| run_ber(&cfg, "ber").unwrap())
        };
        let a = run_with_threads(1);
        let b = run_with_threads(4);
        let c = run_with_threads(2);
        assert_eq!(a, b);
        assert_eq!(a, c);
        let text_a = crate::harness::csvout::csv_string(&a).unwrap();
        let text_b = crate::harness::csvout::csv_string(&b).unwrap();
        assert_eq!(text_a, text_b, "CSV must be byte-identical across thread counts");
    }

    #[test]
    fn ber_rows_cover_every_arm_waveform_snr_combination() {
        let cfg = parse_config(&tiny_ber_config("")).unwrap();
        let rows = run_ber(&cfg, "ber").unwrap();
        assert_eq!(rows.len(), 3 * 1 * 1);
        assert!(rows.iter().all(|r| r.metric == "ber"));
        assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.value)));
        assert!(rows.iter().all(|r| r.count == 3 * 2 * 16));
    }

    #[test]
    fn flat_channel_at_huge_snr_is_error_free() {
        // Single zero-delay zero-Doppler path on a single-antenna link:
        // after normalization the channel is a unit-modulus identity, so a
        // near-noiseless run must produce zero errors.
        let text = r#"
            [system]
            n_t = 1
            n_r = 1
            carrier_hz = 28e9
            bandwidth_hz = 20e6

            [frame]
            n = 16
            waveforms = ["ofdm", "otfs", "afdm"]

            [channel]
            paths = 1
            max_delay_taps = 1

            [[channel.fixed]]
            delay_taps = 0
            doppler_cycles = 0.0

            [experiment]
            snr_db = [120.0]
            trials = 2
            arms = ["no-sim"]
        "#;
        let cfg = parse_config(text).unwrap();
        let rows = run_ber(&cfg, "ber").unwrap();
        for row in rows {
            assert_eq!(row.value, 0.0, "waveform {} had errors", row.waveform);
        }
    }

    #[test]
    fn channel_dump_emits_one_grid_per_waveform() {
        let cfg = parse_config(&tiny_ber_config("")).unwrap();
        let grids = run_channel_dump(&cfg).unwrap();
        assert_eq!(grids.len(), 1);
        let (label, grid) = &grids[0];
        assert_eq!(label, "ofdm");
        // First arm is no-sim on a 1×2 link: 2 receive streams, 1 transmit.
        assert_eq!((grid.nrows(), grid.ncols()), (32, 16));
        assert!(grid.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn optimize_runner_traces_both_objectives() {
        let cfg = parse_config(&tiny_ber_config("")).unwrap();
        let rows = run_optimize(&cfg).unwrap();
        let comm: Vec<&CurveRow> = rows.iter().filter(|r| r.arm == "comm-objective").collect();
        let sens: Vec<&CurveRow> = rows.iter().filter(|r| r.arm == "sensing-objective").collect();
        // 1 initial + 10 iterations (comm); sensing runs (P+1)·10 steps.
        assert_eq!(comm.len(), 11);
        assert_eq!(sens.len(), 1 + 3 * 10);
        assert!(rows.iter().all(|r| r.value.is_finite() && r.value >= 0.0));
    }

    #[test]
    fn match_targets_pairs_nearest_first() {
        let est = [(5.0, 0.08), (13.0, -0.08)];
        let truth = [(13.0, -0.0726), (5.0, 0.0726)];
        let pairs = match_targets(&est, &truth, 0.04);
        assert_eq!(pairs.len(), 2);
        for &(e, t) in &pairs {
            assert_abs_diff_eq!(est[e].0, truth[t].0, epsilon = 1e-12);
        }
    }
}
