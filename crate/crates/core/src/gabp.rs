//! Gaussian belief propagation detection over `y = H̄x + w̄`.
//!
//! The detector keeps one soft replica and one variance per matrix edge and
//! cycles three stages: soft interference cancellation (subtract every other
//! symbol's replica from each observation), extrinsic Gaussian combining
//! across observations (excluding the edge's own row), and a Bayes-optimal
//! QPSK denoiser. Damping on both means and variances guards against limit
//! cycles, and a final consensus combine over all rows produces the symbol
//! estimates.
//!
//! Every stage is computed through row/column aggregate sums, so one
//! iteration costs `O(N̄·M̄)` rather than the naive `O(N̄²·M̄)`. The matrix
//! may be rectangular: extra receive observations (e.g. more antennas than
//! streams) simply add rows.

use nalgebra::{DMatrix, DVector};

use crate::waveforms::qpsk_demap;
use crate::{C64, Error, Result};

/// Detector knobs. The variance floor guards the divisions at very high
/// SNR; it sits far below any operating noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub iterations: usize,
    pub damping: f64,
    pub symbol_energy: f64,
    pub noise_var: f64,
    pub variance_floor: f64,
}

impl DetectorConfig {
    pub fn new(iterations: usize, damping: f64, symbol_energy: f64, noise_var: f64) -> Result<Self> {
        if iterations == 0 {
            return Err(Error::InvalidInput("detector needs at least one iteration".into()));
        }
        if !(damping > 0.0 && damping < 1.0) {
            return Err(Error::InvalidInput(format!(
                "damping factor must lie strictly inside (0, 1), got {damping}"
            )));
        }
        if !(symbol_energy > 0.0) {
            return Err(Error::InvalidInput("symbol energy must be positive".into()));
        }
        if noise_var < 0.0 {
            return Err(Error::InvalidInput(format!(
                "noise variance must be nonnegative, got {noise_var}"
            )));
        }
        Ok(Self {
            iterations,
            damping,
            symbol_energy,
            noise_var,
            variance_floor: 1e-12,
        })
    }
}

/// Per-edge soft replicas and their mean-square errors.
#[derive(Debug, Clone)]
pub struct EdgeState {
    pub means: DMatrix<C64>,
    pub vars: DMatrix<f64>,
}

impl EdgeState {
    /// Zero replicas with full prior uncertainty `E_S` on every edge.
    pub fn initial(n_bar: usize, m_bar: usize, symbol_energy: f64) -> Self {
        Self {
            means: DMatrix::zeros(n_bar, m_bar),
            vars: DMatrix::from_element(n_bar, m_bar, symbol_energy),
        }
    }
}

/// Soft interference cancellation: per edge `(n̄, m̄)`,
/// `ỹ = y_n̄ − Σ_{e≠m̄} h_{n̄,e}·x̂_{n̄,e}` with variance
/// `σ̃² = Σ_{e≠m̄} |h_{n̄,e}|²·σ̂²_{n̄,e} + σ_w²`.
pub fn sic_signals(
    y: &DVector<C64>,
    h: &DMatrix<C64>,
    state: &EdgeState,
    noise_var: f64,
) -> Result<(DMatrix<C64>, DMatrix<f64>)> {
    let (n_bar, m_bar) = h.shape();
    if y.len() != n_bar || state.means.shape() != (n_bar, m_bar) {
        return Err(Error::Dimension(
            "soft-IC state does not match the channel dimensions".into(),
        ));
    }
    if noise_var < 0.0 {
        return Err(Error::InvalidInput("negative noise variance".into()));
    }
    let mut ytilde = DMatrix::zeros(n_bar, m_bar);
    let mut vartilde = DMatrix::zeros(n_bar, m_bar);
    for i in 0..n_bar {
        let mut mean_sum = C64::new(0.0, 0.0);
        let mut var_sum = 0.0;
        for e in 0..m_bar {
            mean_sum += h[(i, e)] * state.means[(i, e)];
            var_sum += h[(i, e)].norm_sqr() * state.vars[(i, e)];
        }
        for m in 0..m_bar {
            ytilde[(i, m)] = y[i] - (mean_sum - h[(i, m)] * state.means[(i, m)]);
            vartilde[(i, m)] = (var_sum - h[(i, m)].norm_sqr() * state.vars[(i, m)]).max(0.0)
                + noise_var;
        }
    }
    Ok((ytilde, vartilde))
}

/// Extrinsic Gaussian combining: per edge, all rows except the edge's own
/// vote on the symbol. Returns the extrinsic means and variances.
///
/// A symbol whose column carries no energy is undetectable; its extrinsic
/// variance saturates at `1/floor` instead of dividing by zero.
pub fn extrinsic_beliefs(
    h: &DMatrix<C64>,
    ytilde: &DMatrix<C64>,
    vartilde: &DMatrix<f64>,
    floor: f64,
) -> (DMatrix<C64>, DMatrix<f64>) {
    let (n_bar, m_bar) = h.shape();
    let mut xbar = DMatrix::zeros(n_bar, m_bar);
    let mut varbar = DMatrix::zeros(n_bar, m_bar);
    for m in 0..m_bar {
        let mut precision_sum = 0.0;
        let mut weighted_sum = C64::new(0.0, 0.0);
        for e in 0..n_bar {
            let var = vartilde[(e, m)].max(floor);
            precision_sum += h[(e, m)].norm_sqr() / var;
            weighted_sum += h[(e, m)].conj() * ytilde[(e, m)] / var;
        }
        for i in 0..n_bar {
            let var = vartilde[(i, m)].max(floor);
            let precision = (precision_sum - h[(i, m)].norm_sqr() / var).max(floor);
            let numerator = weighted_sum - h[(i, m)].conj() * ytilde[(i, m)] / var;
            let v = 1.0 / precision;
            varbar[(i, m)] = v;
            xbar[(i, m)] = numerator * v;
        }
    }
    (xbar, varbar)
}

/// Bayes-optimal QPSK denoiser applied per edge:
/// `x̂ = c·tanh(2c·Re{x̄}/σ̄²) + j·c·tanh(2c·Im{x̄}/σ̄²)` with
/// `c = √(E_S/2)`, and `σ̂² = E_S − |x̂|²`.
pub fn qpsk_denoise(
    xbar: &DMatrix<C64>,
    varbar: &DMatrix<f64>,
    symbol_energy: f64,
    floor: f64,
) -> (DMatrix<C64>, DMatrix<f64>) {
    let c = (symbol_energy / 2.0).sqrt();
    let (n_bar, m_bar) = xbar.shape();
    let mut means = DMatrix::zeros(n_bar, m_bar);
    let mut vars = DMatrix::zeros(n_bar, m_bar);
    for i in 0..n_bar {
        for m in 0..m_bar {
            let v = varbar[(i, m)].max(floor);
            let re = c * (2.0 * c * xbar[(i, m)].re / v).tanh();
            let im = c * (2.0 * c * xbar[(i, m)].im / v).tanh();
            let est = C64::new(re, im);
            means[(i, m)] = est;
            vars[(i, m)] = symbol_energy - est.norm_sqr();
        }
    }
    (means, vars)
}

/// Damped convex update `β·new + (1−β)·old`, used on both means and
/// variances.
pub fn damp_means(new: &DMatrix<C64>, old: &DMatrix<C64>, beta: f64) -> DMatrix<C64> {
    new * C64::new(beta, 0.0) + old * C64::new(1.0 - beta, 0.0)
}

pub fn damp_vars(new: &DMatrix<f64>, old: &DMatrix<f64>, beta: f64) -> DMatrix<f64> {
    new * beta + old * (1.0 - beta)
}

/// Final consensus combine over all rows (no exclusion): the posterior mean
/// of each symbol given the last soft-IC pass. Returns the estimates and the
/// indices of undetectable symbols (all-zero columns).
pub fn consensus(
    h: &DMatrix<C64>,
    ytilde: &DMatrix<C64>,
    vartilde: &DMatrix<f64>,
    floor: f64,
) -> (DVector<C64>, Vec<usize>) {
    let (n_bar, m_bar) = h.shape();
    let mut estimates = DVector::zeros(m_bar);
    let mut undetectable = Vec::new();
    for m in 0..m_bar {
        let mut precision = 0.0;
        let mut weighted = C64::new(0.0, 0.0);
        for i in 0..n_bar {
            let var = vartilde[(i, m)].max(floor);
            precision += h[(i, m)].norm_sqr() / var;
            weighted += h[(i, m)].conj() * ytilde[(i, m)] / var;
        }
        if precision <= floor {
            undetectable.push(m);
            estimates[m] = C64::new(0.0, 0.0);
        } else {
            estimates[m] = weighted / precision;
        }
    }
    (estimates, undetectable)
}

/// Detector output: consensus symbol estimates, hard bits and any symbols
/// the channel cannot resolve.
#[derive(Debug, Clone)]
pub struct Detection {
    pub symbols: DVector<C64>,
    pub bits: Vec<u8>,
    pub undetectable: Vec<usize>,
}

/// Runs the full GaBP loop and slices the consensus means to bits.
pub fn detect(y: &DVector<C64>, h: &DMatrix<C64>, cfg: &DetectorConfig) -> Result<Detection> {
    let (n_bar, m_bar) = h.shape();
    if y.len() != n_bar {
        return Err(Error::Dimension(format!(
            "observation length {} does not match {} channel rows",
            y.len(),
            n_bar
        )));
    }
    let mut state = EdgeState::initial(n_bar, m_bar, cfg.symbol_energy);
    let mut last_sic = None;
    for _ in 0..cfg.iterations {
        let (ytilde, vartilde) = sic_signals(y, h, &state, cfg.noise_var)?;
        let (xbar, varbar) = extrinsic_beliefs(h, &ytilde, &vartilde, cfg.variance_floor);
        let (means, vars) = qpsk_denoise(&xbar, &varbar, cfg.symbol_energy, cfg.variance_floor);
        state.means = damp_means(&means, &state.means, cfg.damping);
        state.vars = damp_vars(&vars, &state.vars, cfg.damping);
        last_sic = Some((ytilde, vartilde));
    }
    // Consensus combines the soft-IC quantities of the final iteration.
    let (ytilde, vartilde) = last_sic.expect("at least one iteration");
    let (symbols, undetectable) = consensus(h, &ytilde, &vartilde, cfg.variance_floor);
    let bits = qpsk_demap(&symbols);
    Ok(Detection {
        symbols,
        bits,
        undetectable,
    })
}
