//! Sparse delay-Doppler channel recovery for radar parameter estimation.
//!
//! A fine grid over the delay-Doppler region turns estimation into sparse
//! recovery: the receive frame is `y = E·h + w` where each dictionary column
//! is the known pilot frame pushed through one grid point's channel block,
//! and `h` is nonzero only where targets sit. The recovery loop is
//! probabilistic data association under a vector Gaussian approximation:
//! per-atom soft interference cancellation, extrinsic beliefs through one
//! shared covariance solve (`Σ = Σ_ǩ σ̂²_ǩ e_ǩ e_ǩ^H + σ_w² I`, reused
//! across atoms via the matrix inversion lemma), a Bernoulli-Gaussian
//! denoiser with zero prior mean, damping, and EM updates of the sparsity
//! rate and prior variance.
//!
//! Recovered support maps back to ranges and velocities through the
//! round-trip conventions `R = c·τ/2` and `v = ν·c/(2·f_c)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::waveforms::{demodulate, modulate, FrameSpec};
use crate::channel::PathBlock;
use crate::{C64, Error, Result};

/// Wave propagation speed for the radar conversions. The customary 3·10⁸
/// keeps tap/velocity grids on round numbers.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Search grid: integer delay taps × Doppler bins in cycles per frame,
/// flattened delay-major (`index = k̄·D_ν + d̄`).
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDopplerGrid {
    pub delay_taps: Vec<usize>,
    pub doppler_cycles: Vec<f64>,
}

impl DelayDopplerGrid {
    /// Taps `0..delay_bins` crossed with `doppler_bins` points spread
    /// uniformly over `±doppler_span_cycles`.
    pub fn regular(delay_bins: usize, doppler_bins: usize, doppler_span_cycles: f64) -> Result<Self> {
        if delay_bins == 0 || doppler_bins == 0 {
            return Err(Error::InvalidInput("grid needs at least one bin per axis".into()));
        }
        if doppler_span_cycles < 0.0 {
            return Err(Error::InvalidInput("Doppler span must be nonnegative".into()));
        }
        let doppler_cycles = if doppler_bins == 1 {
            vec![0.0]
        } else {
            (0..doppler_bins)
                .map(|d| {
                    -doppler_span_cycles
                        + 2.0 * doppler_span_cycles * d as f64 / (doppler_bins - 1) as f64
                })
                .collect()
        };
        Ok(Self {
            delay_taps: (0..delay_bins).collect(),
            doppler_cycles,
        })
    }

    pub fn len(&self) -> usize {
        self.delay_taps.len() * self.doppler_cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(delay, doppler)` of a flat delay-major index.
    pub fn point(&self, index: usize) -> (usize, f64) {
        let d_nu = self.doppler_cycles.len();
        (
            self.delay_taps[index / d_nu],
            self.doppler_cycles[index % d_nu],
        )
    }
}

/// Dictionary of per-grid-point responses to a known pilot frame.
#[derive(Debug, Clone)]
pub struct Dictionary {
    pub columns: DMatrix<C64>,
    pub grid: DelayDopplerGrid,
}

/// Builds the dictionary in the waveform's decision domain: column
/// `(k̄, d̄)` is `T·G_{ℓ,f}·T^H·x` for the pilot `x`, i.e. the grid point's
/// effective channel applied to the frame.
pub fn build_dictionary(
    grid: &DelayDopplerGrid,
    pilot: &DVector<C64>,
    spec: &FrameSpec,
) -> Result<Dictionary> {
    if spec.streams != 1 {
        return Err(Error::InvalidInput(
            "dictionary estimation runs on single-stream frames".into(),
        ));
    }
    let n = spec.frame_len;
    if let Some(&tap) = grid.delay_taps.iter().find(|&&t| t >= n) {
        return Err(Error::DelaySpread {
            delay: tap,
            frame: n,
        });
    }
    let cp = spec.cp_phase();
    let td_pilot = modulate(spec, pilot)?;
    let mut columns = DMatrix::zeros(n, grid.len());
    let mut idx = 0;
    for &tap in &grid.delay_taps {
        for &doppler in &grid.doppler_cycles {
            let block = PathBlock::new(n, tap, doppler, &cp)?;
            let col = demodulate(spec, &block.apply(&td_pilot))?;
            columns.set_column(idx, &col);
            idx += 1;
        }
    }
    Ok(Dictionary {
        columns,
        grid: grid.clone(),
    })
}

/// Bernoulli-Gaussian prior hyperparameters. Inference keeps the mean
/// pinned to zero; the EM-updated mean is reported for diagnostics only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BgHyper {
    pub sparsity: f64,
    pub mean: C64,
    pub variance: f64,
}

/// PDA loop knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdaConfig {
    pub iterations: usize,
    pub damping: f64,
    pub noise_var: f64,
    /// Expected path count used to initialize the prior.
    pub path_count: usize,
    /// When set, the support is the strongest `k` atoms by activity;
    /// otherwise every atom above the activity threshold is kept.
    pub known_paths: Option<usize>,
    pub activity_threshold: f64,
}

impl PdaConfig {
    pub fn new(iterations: usize, damping: f64, noise_var: f64, path_count: usize) -> Result<Self> {
        if iterations == 0 {
            return Err(Error::InvalidInput("PDA needs at least one iteration".into()));
        }
        if !(damping > 0.0 && damping <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "PDA damping must lie in (0, 1], got {damping}"
            )));
        }
        if !(noise_var > 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise variance must be positive, got {noise_var}"
            )));
        }
        if path_count == 0 {
            return Err(Error::InvalidInput("expected path count must be positive".into()));
        }
        Ok(Self {
            iterations,
            damping,
            noise_var,
            path_count,
            known_paths: Some(path_count),
            activity_threshold: 0.5,
        })
    }
}

/// Per-atom soft replicas, variances and activity probabilities plus the
/// shared prior hyperparameters.
///
/// `scores` carries the activity log-odds `ln(ρ̂/(1−ρ̂))`. Ranking atoms by
/// score is exactly ranking by `ρ̂`, but stays informative at high SNR where
/// the probabilities of several atoms saturate to 1 within machine
/// precision.
#[derive(Debug, Clone)]
pub struct PdaState {
    pub replicas: DVector<C64>,
    pub vars: DVector<f64>,
    pub activity: DVector<f64>,
    pub scores: DVector<f64>,
    pub hyper: BgHyper,
}

impl PdaState {
    /// Zero replicas; `ρ⁰ = P/Ǩ`, `σ̄⁰ = 1/P`, per-atom power `1/Ǩ`.
    pub fn initial(atoms: usize, path_count: usize) -> Self {
        let rho = path_count as f64 / atoms as f64;
        Self {
            replicas: DVector::zeros(atoms),
            vars: DVector::from_element(atoms, 1.0 / atoms as f64),
            activity: DVector::from_element(atoms, rho),
            scores: DVector::from_element(atoms, (rho / (1.0 - rho)).ln()),
            hyper: BgHyper {
                sparsity: rho,
                mean: C64::new(0.0, 0.0),
                variance: 1.0 / path_count as f64,
            },
        }
    }
}

/// Shared conditional covariance `Σ = E·diag(σ̂²)·E^H + σ_w²·I`.
pub fn pda_covariance(
    dictionary: &DMatrix<C64>,
    vars: &DVector<f64>,
    noise_var: f64,
) -> Result<DMatrix<C64>> {
    if !(noise_var > 0.0) {
        return Err(Error::InvalidInput(
            "covariance needs a positive noise variance".into(),
        ));
    }
    if vars.len() != dictionary.ncols() {
        return Err(Error::Dimension("one variance per dictionary atom".into()));
    }
    if vars.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidInput("atom variances must be finite and nonnegative".into()));
    }
    let n = dictionary.nrows();
    let mut scaled = dictionary.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        let s = vars[k].sqrt();
        for v in col.iter_mut() {
            *v *= s;
        }
    }
    let mut sigma = &scaled * scaled.adjoint();
    for i in 0..n {
        sigma[(i, i)] += C64::new(noise_var, 0.0);
    }
    Ok(sigma)
}

fn cholesky(sigma: DMatrix<C64>) -> Result<Cholesky<C64, Dyn>> {
    Cholesky::new(sigma).ok_or_else(|| {
        Error::Numerical("PDA covariance factorization failed (matrix not positive definite)".into())
    })
}

/// `1/(1 + e^{−x})` without overflow at either tail.
fn stable_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// EM update of the Bernoulli-Gaussian hyperparameters from the damped
/// soft replicas. The variance update keeps the zero-mean model
/// (`σ̄ = Σ ρ̂(|ĥ|² + σ̂²)/(Ǩρ)`); the reported mean is diagnostic.
pub fn em_update(
    activity: &DVector<f64>,
    replicas: &DVector<C64>,
    vars: &DVector<f64>,
    previous: &BgHyper,
) -> BgHyper {
    let atoms = activity.len() as f64;
    let rho_sum: f64 = activity.iter().sum();
    if rho_sum <= 0.0 {
        return *previous;
    }
    let sparsity = rho_sum / atoms;
    let mean = (0..activity.len())
        .map(|k| replicas[k] * activity[k])
        .fold(C64::new(0.0, 0.0), |a, b| a + b)
        / rho_sum;
    let variance = (0..activity.len())
        .map(|k| activity[k] * (replicas[k].norm_sqr() + vars[k]))
        .sum::<f64>()
        / rho_sum;
    BgHyper {
        sparsity,
        mean,
        variance,
    }
}

/// One PDA sweep over every atom: soft-IC residual, extrinsic belief via
/// the shared solve, Bernoulli-Gaussian denoising, damping and the EM
/// hyperparameter refresh.
pub fn pda_iteration(
    y: &DVector<C64>,
    dictionary: &DMatrix<C64>,
    state: &mut PdaState,
    cfg: &PdaConfig,
) -> Result<()> {
    let atoms = dictionary.ncols();
    if y.len() != dictionary.nrows() {
        return Err(Error::Dimension("observation length must match dictionary rows".into()));
    }
    let sigma = pda_covariance(dictionary, &state.vars, cfg.noise_var)?;
    let chol = cholesky(sigma)?;
    // One factorization serves every atom: Σ⁻¹E and Σ⁻¹r.
    let solved_dict = chol.solve(dictionary);
    let residual = y - dictionary * &state.replicas;
    let solved_residual = chol.solve(&residual);

    let rho = state.hyper.sparsity.clamp(1e-12, 1.0 - 1e-12);
    let prior_var = state.hyper.variance.max(1e-18);
    let mut new_replicas = DVector::zeros(atoms);
    let mut new_vars = DVector::zeros(atoms);
    let mut new_activity = DVector::zeros(atoms);
    let mut new_scores = DVector::zeros(atoms);
    for k in 0..atoms {
        let e_k = dictionary.column(k);
        let eta = e_k.dotc(&solved_dict.column(k)).re;
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::Numerical(format!(
                "PDA normalization factor η = {eta} for atom {k}"
            )));
        }
        // Soft-IC folds back the atom's own replica:
        // e^H Σ⁻¹ ỹ_k = e^H Σ⁻¹ r + η·ĥ_k.
        let belief_num = e_k.dotc(&solved_residual) + C64::new(eta, 0.0) * state.replicas[k];
        let belief = belief_num / eta;
        let belief_var = ((1.0 - eta * state.vars[k]) / eta).max(1e-18);

        // Bernoulli posterior (zero-mean prior) in log-odds form, so the
        // ordering of near-certain atoms survives at high SNR.
        let total_var = belief_var + prior_var;
        let exponent = -belief.norm_sqr() * prior_var / (belief_var * total_var);
        let log_odds_off = ((1.0 - rho) / rho).ln() + (total_var / belief_var).ln() + exponent;
        let score = -log_odds_off;
        let activity = stable_logistic(score);

        // Gaussian product with the prior component.
        let gauss_mean = belief * (prior_var / total_var);
        let gauss_var = prior_var * belief_var / total_var;

        let posterior_mean = gauss_mean * activity;
        let posterior_var = (1.0 - activity) * activity * gauss_mean.norm_sqr() + activity * gauss_var;
        new_replicas[k] = posterior_mean * cfg.damping + state.replicas[k] * (1.0 - cfg.damping);
        new_vars[k] = posterior_var * cfg.damping + state.vars[k] * (1.0 - cfg.damping);
        new_activity[k] = activity;
        new_scores[k] = score;
    }
    state.replicas = new_replicas;
    state.vars = new_vars;
    state.activity = new_activity;
    state.scores = new_scores;
    state.hyper = em_update(&state.activity, &state.replicas, &state.vars, &state.hyper);
    Ok(())
}

/// One detected atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomEstimate {
    pub index: usize,
    pub delay_taps: usize,
    pub doppler_cycles: f64,
    pub gain: C64,
    pub activity: f64,
}

/// Full estimator output: the detected support plus the final loop state.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub atoms: Vec<AtomEstimate>,
    pub state: PdaState,
}

/// Runs the PDA loop and extracts the detected support. An empty detection
/// (nothing crosses the threshold) is a valid outcome, not an error.
///
/// With a known path count the support comes from a peak-picking pass:
/// Doppler bins far below one cycle per frame make same-delay columns
/// nearly collinear, so the loop may legitimately represent one scatterer
/// by a pair of bracketing Doppler atoms. Ranking raw per-atom activity
/// would then return the split pair of the strongest scatterer instead of
/// one atom per scatterer. The extraction therefore picks delay taps by
/// their best activity score, cancels every other tap's soft replicas, and
/// refines each picked tap's Doppler bin by matched-filtering the isolated
/// residual (the channel paths are assumed to occupy distinct grid points,
/// which is what makes the path count identifiable in the first place).
pub fn estimate(y: &DVector<C64>, dictionary: &Dictionary, cfg: &PdaConfig) -> Result<Estimate> {
    let atoms = dictionary.columns.ncols();
    let mut state = PdaState::initial(atoms, cfg.path_count);
    for _ in 0..cfg.iterations {
        pda_iteration(y, &dictionary.columns, &mut state, cfg)?;
    }
    let detected = match cfg.known_paths {
        Some(count) => extract_peaks(y, dictionary, &state, count),
        None => {
            let mut order: Vec<usize> = (0..atoms).collect();
            // Rank by the activity log-odds: identical to ranking by ρ̂ but
            // immune to probability saturation near certainty.
            order.sort_by(|&a, &b| {
                state.scores[b]
                    .partial_cmp(&state.scores[a])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            order
                .into_iter()
                .filter(|&k| state.activity[k] > cfg.activity_threshold)
                .map(|k| atom_estimate(dictionary, &state, k, state.replicas[k]))
                .collect()
        }
    };
    let mut detected = detected;
    detected.sort_by_key(|a| a.index);
    Ok(Estimate {
        atoms: detected,
        state,
    })
}

fn atom_estimate(
    dictionary: &Dictionary,
    state: &PdaState,
    index: usize,
    gain: C64,
) -> AtomEstimate {
    let (delay_taps, doppler_cycles) = dictionary.grid.point(index);
    AtomEstimate {
        index,
        delay_taps,
        doppler_cycles,
        gain,
        activity: state.activity[index],
    }
}

/// Known-count support extraction: `count` delay-tap peaks ranked by the
/// loop's activity scores, each refined in Doppler against the residual
/// with all other taps' replicas cancelled. Falls back to plain atom
/// ranking once taps are exhausted (more targets than occupied taps).
fn extract_peaks(
    y: &DVector<C64>,
    dictionary: &Dictionary,
    state: &PdaState,
    count: usize,
) -> Vec<AtomEstimate> {
    let d_nu = dictionary.grid.doppler_cycles.len();
    let tap_count = dictionary.grid.delay_taps.len();
    let atoms = dictionary.columns.ncols();
    let mut tap_used = vec![false; tap_count];
    let mut picked = Vec::with_capacity(count);

    for _ in 0..count.min(tap_count) {
        // Strongest remaining tap by its best atom score.
        let mut best: Option<(f64, usize)> = None;
        for k in 0..atoms {
            if tap_used[k / d_nu] {
                continue;
            }
            if best.map(|(s, _)| state.scores[k] > s).unwrap_or(true) {
                best = Some((state.scores[k], k));
            }
        }
        let Some((_, seed_atom)) = best else { break };
        let tap_idx = seed_atom / d_nu;
        tap_used[tap_idx] = true;

        // Isolate this tap: subtract every other tap's soft replicas.
        let mut residual = y.clone();
        for k in 0..atoms {
            if k / d_nu != tap_idx && state.replicas[k] != C64::new(0.0, 0.0) {
                residual -= dictionary.columns.column(k) * state.replicas[k];
            }
        }
        // Matched-filter refinement across the tap's Doppler bins.
        let mut best_bin = 0;
        let mut best_stat = f64::NEG_INFINITY;
        for d in 0..d_nu {
            let col = dictionary.columns.column(tap_idx * d_nu + d);
            let stat = col.dotc(&residual).norm() / col.norm().max(1e-30);
            if stat > best_stat {
                best_stat = stat;
                best_bin = d;
            }
        }
        let index = tap_idx * d_nu + best_bin;
        let col = dictionary.columns.column(index);
        let gain = col.dotc(&residual) / col.norm_squared().max(1e-30);
        picked.push((index, gain));
    }

    // More targets than occupied taps: top up with the best remaining atoms.
    if picked.len() < count {
        let mut order: Vec<usize> = (0..atoms)
            .filter(|k| !picked.iter().any(|(i, _)| i == k))
            .collect();
        order.sort_by(|&a, &b| {
            state.scores[b]
                .partial_cmp(&state.scores[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        for k in order.into_iter().take(count - picked.len()) {
            picked.push((k, state.replicas[k]));
        }
    }

    picked
        .into_iter()
        .map(|(k, gain)| atom_estimate(dictionary, state, k, gain))
        .collect()
}

/// Physical constants tying the sampled grid to ranges and velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarMapping {
    pub carrier_hz: f64,
    pub sample_rate_hz: f64,
    pub frame_len: usize,
}

impl RadarMapping {
    /// Round-trip range of a delay in taps: `R = c·τ/2`.
    pub fn range_m(&self, delay_taps: f64) -> f64 {
        SPEED_OF_LIGHT * delay_taps / self.sample_rate_hz / 2.0
    }

    /// Radial velocity of a normalized Doppler: `v = ν·c/(2·f_c)`.
    pub fn velocity_mps(&self, doppler_cycles: f64) -> f64 {
        let doppler_hz = doppler_cycles * self.sample_rate_hz / self.frame_len as f64;
        doppler_hz * SPEED_OF_LIGHT / (2.0 * self.carrier_hz)
    }

    /// Inverse of [`RadarMapping::velocity_mps`].
    pub fn doppler_cycles(&self, velocity_mps: f64) -> f64 {
        let doppler_hz = 2.0 * velocity_mps * self.carrier_hz / SPEED_OF_LIGHT;
        doppler_hz * self.frame_len as f64 / self.sample_rate_hz
    }
}

/// Range and velocity of one detected grid point.
pub fn grid_to_radar(atom: &AtomEstimate, mapping: &RadarMapping) -> (f64, f64) {
    (
        mapping.range_m(atom.delay_taps as f64),
        mapping.velocity_mps(atom.doppler_cycles),
    )
}

/// Quantization floor of the grid for given true targets: the squared
/// range/velocity error of a perfect estimator that can only answer on
/// grid points (mean over targets).
pub fn resolution_floor(
    truth: &[(f64, f64)],
    grid: &DelayDopplerGrid,
    mapping: &RadarMapping,
) -> (f64, f64) {
    let mut range_acc = 0.0;
    let mut vel_acc = 0.0;
    for &(range, velocity) in truth {
        let best_range = grid
            .delay_taps
            .iter()
            .map(|&t| (mapping.range_m(t as f64) - range).powi(2))
            .fold(f64::INFINITY, f64::min);
        let best_vel = grid
            .doppler_cycles
            .iter()
            .map(|&f| (mapping.velocity_mps(f) - velocity).powi(2))
            .fold(f64::INFINITY, f64::min);
        range_acc += best_range;
        vel_acc += best_vel;
    }
    let n = truth.len().max(1) as f64;
    (range_acc / n, vel_acc / n)
}
