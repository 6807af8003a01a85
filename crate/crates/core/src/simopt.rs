//! Gradient-ascent tuning of the stacked-metasurface phases.
//!
//! The objective is built from the per-path spatial factors
//! `O_p = h̃_p · Υ_R · R_RX^{1/2} · B_p · R_TX^{1/2} · Υ_T` with
//! `h̃_p = h_p·√(M·M̃/P)`: the communication objective maximizes
//! `Σ_p ‖O_p‖_F²` (total coupled path power), the sensing objective
//! maximizes `‖O_{p_min}‖_F²` for the currently weakest path, reselected
//! greedily over `P+1` rounds.
//!
//! The analytic gradients come from linearizing the cascade in one layer's
//! phase vector: column `n_t` of `O_p` satisfies `o = Υ̃_{q,p,n_t}·ψ_q`
//! exactly, where `Υ̃` chains the downstream propagation, the rank-1 path
//! coupling and the diagonal of the upstream activation. The gradient of
//! `‖o‖²` with respect to the layer phases is then `2·Im{Ψ_q^H Υ̃^H o}`.
//! Updates are normalized so the largest per-entry step is `π`, shrink with
//! a decaying rate `λ^i`, and wrap back into `[−π, π]`.
//!
//! Path gains are generally unknown to a receiver before estimation, so the
//! problem can be posed with all gains set to one (`GainKnowledge::Unity`);
//! a genie mode uses the true complex gains.

use nalgebra::{DMatrix, DVector};

use crate::arrays;
use crate::channel::{MpddSystem, Path};
use crate::{C64, Error, Result};

/// What the ascent maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Total receive power summed over every path.
    Communication,
    /// Power of the weakest path, reselected each greedy round.
    Sensing,
}

/// Gain information available to the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainKnowledge {
    /// True complex gains (simulation-side genie).
    Genie,
    /// All gains set to one; only geometry is known.
    Unity,
}

/// Iteration budget and learning-rate decay of one ascent run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentConfig {
    pub iterations: usize,
    pub decay: f64,
}

impl AscentConfig {
    pub fn new(iterations: usize, decay: f64) -> Result<Self> {
        if !(decay > 0.0 && decay < 1.0) {
            return Err(Error::InvalidInput(format!(
                "learning-rate decay must lie strictly inside (0, 1), got {decay}"
            )));
        }
        Ok(Self { iterations, decay })
    }
}

/// Objective values recorded before the run and after every iteration.
#[derive(Debug, Clone)]
pub struct AscentTrace {
    pub objective: Vec<f64>,
}

impl AscentTrace {
    pub fn initial(&self) -> f64 {
        *self.objective.first().expect("trace never empty")
    }

    pub fn last(&self) -> f64 {
        *self.objective.last().expect("trace never empty")
    }
}

fn unit_phasors(phases: &DVector<f64>) -> DVector<C64> {
    phases.map(|p| C64::from_polar(1.0, p))
}

fn hadamard(a: &DVector<C64>, b: &DVector<C64>) -> DVector<C64> {
    DVector::from_fn(a.len(), |i, _| a[i] * b[i])
}

fn wrap_phase(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    x - two_pi * (x / two_pi).round()
}

/// Forward quantities of one evaluation: upstream activations, cascade
/// columns and the per-path receive couplings.
struct Forward {
    /// `s_{q,n_t}` before the phase of layer `q`; indexed `[q][n_t]`.
    tx_acts: Vec<Vec<DVector<C64>>>,
    /// `W_q̃ · a_p`, the receive-side upstream chains; indexed `[p][q̃]`.
    w_chains: Vec<Vec<DVector<C64>>>,
    /// `g_p = Υ_R · a_p`.
    g: Vec<DVector<C64>>,
    /// `β_{p,n_t} = t_p^H · υ_T(n_t)`, entry `(p, n_t)`.
    beta: DMatrix<C64>,
}

/// One phase-optimization problem over a fixed channel realization.
pub struct SimOptProblem {
    layers_tx: usize,
    layers_rx: usize,
    n_t: usize,
    gamma1: DMatrix<C64>,
    gamma: DMatrix<C64>,
    gamma_h: DMatrix<C64>,
    xi1: DMatrix<C64>,
    xi1_h: DMatrix<C64>,
    xi: DMatrix<C64>,
    xi_h: DMatrix<C64>,
    gains: Vec<C64>,
    /// `a_p = R_RX^{1/2} · b_R(p)`.
    rx_vecs: Vec<DVector<C64>>,
    /// `t_p = R_TX^{1/2} · b_T(p)`.
    tx_vecs: Vec<DVector<C64>>,
    tx_phases: Vec<DVector<f64>>,
    rx_phases: Vec<DVector<f64>>,
}

impl SimOptProblem {
    /// Snapshots the cascade geometry and per-path couplings of a system.
    /// The starting phases are copied from the stacks (all zero unless the
    /// system was already tuned).
    pub fn new(system: &MpddSystem, paths: &[Path], gains: GainKnowledge) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::InvalidInput(
                "phase optimization needs at least one path".into(),
            ));
        }
        let tx_upa = system.tx_upa();
        let rx_upa = system.rx_upa();
        let m = system.tx_sim.atoms() as f64;
        let m_tilde = system.rx_sim.atoms() as f64;
        let scale = (m * m_tilde / paths.len() as f64).sqrt();
        let mut gain_scalars = Vec::with_capacity(paths.len());
        let mut rx_vecs = Vec::with_capacity(paths.len());
        let mut tx_vecs = Vec::with_capacity(paths.len());
        for path in paths {
            let g = match gains {
                GainKnowledge::Genie => path.gain,
                GainKnowledge::Unity => C64::new(1.0, 0.0),
            };
            gain_scalars.push(g * scale);
            let b_r =
                arrays::upa_response(&rx_upa, path.angles.azimuth_in, path.angles.elevation_in)?;
            let b_t =
                arrays::upa_response(&tx_upa, path.angles.azimuth_out, path.angles.elevation_out)?;
            rx_vecs.push(&system.r_rx_sqrt * b_r);
            tx_vecs.push(&system.r_tx_sqrt * b_t);
        }
        let gamma1 = system.tx_sim.interface().entries.clone();
        let gamma = system.tx_sim.layer_link().entries.clone();
        let xi1 = system.rx_sim.interface().entries.clone();
        let xi = system.rx_sim.layer_link().entries.clone();
        Ok(Self {
            layers_tx: system.tx_sim.layers(),
            layers_rx: system.rx_sim.layers(),
            n_t: system.n_t,
            gamma_h: gamma.adjoint(),
            xi1_h: xi1.adjoint(),
            xi_h: xi.adjoint(),
            gamma1,
            gamma,
            xi1,
            xi,
            gains: gain_scalars,
            rx_vecs,
            tx_vecs,
            tx_phases: system.tx_sim.phases().to_vec(),
            rx_phases: system.rx_sim.phases().to_vec(),
        })
    }

    pub fn path_count(&self) -> usize {
        self.gains.len()
    }

    pub fn tx_phases(&self) -> &[DVector<f64>] {
        &self.tx_phases
    }

    pub fn rx_phases(&self) -> &[DVector<f64>] {
        &self.rx_phases
    }

    pub fn set_phases(&mut self, tx: Vec<DVector<f64>>, rx: Vec<DVector<f64>>) -> Result<()> {
        if tx.len() != self.layers_tx || rx.len() != self.layers_rx {
            return Err(Error::Dimension("phase vector count mismatch".into()));
        }
        self.tx_phases = tx;
        self.rx_phases = rx;
        Ok(())
    }

    /// Writes the current phases back into a system's stacks.
    pub fn store_phases(&self, system: &mut MpddSystem) -> Result<()> {
        system.tx_sim.set_phases(self.tx_phases.clone())?;
        system.rx_sim.set_phases(self.rx_phases.clone())
    }

    fn forward(&self) -> Forward {
        let q_tx = self.layers_tx;
        let q_rx = self.layers_rx;
        let psi: Vec<DVector<C64>> = self.tx_phases.iter().map(unit_phasors).collect();
        let delta: Vec<DVector<C64>> = self.rx_phases.iter().map(unit_phasors).collect();

        // Transmit-side activations: s_1 = Γ_1 e_nt, s_{q+1} = Γ·(ψ_q ∘ s_q).
        let mut tx_acts: Vec<Vec<DVector<C64>>> = Vec::with_capacity(q_tx);
        let first: Vec<DVector<C64>> = (0..self.n_t)
            .map(|nt| self.gamma1.column(nt).into_owned())
            .collect();
        tx_acts.push(first);
        for q in 1..q_tx {
            let prev = &tx_acts[q - 1];
            let next: Vec<DVector<C64>> = prev
                .iter()
                .map(|s| &self.gamma * hadamard(&psi[q - 1], s))
                .collect();
            tx_acts.push(next);
        }
        let upsilon_cols: Vec<DVector<C64>> = tx_acts[q_tx - 1]
            .iter()
            .map(|s| hadamard(&psi[q_tx - 1], s))
            .collect();

        // Receive-side upstream chains per path: w_{Q̃} = a_p and
        // w_{q̃} = Ξ·(δ_{q̃+1} ∘ w_{q̃+1}).
        let mut w_chains: Vec<Vec<DVector<C64>>> = Vec::with_capacity(self.gains.len());
        let mut g = Vec::with_capacity(self.gains.len());
        for a_p in &self.rx_vecs {
            let mut chain = vec![DVector::zeros(a_p.len()); q_rx];
            chain[q_rx - 1] = a_p.clone();
            for idx in (0..q_rx.saturating_sub(1)).rev() {
                chain[idx] = &self.xi * hadamard(&delta[idx + 1], &chain[idx + 1]);
            }
            g.push(&self.xi1 * hadamard(&delta[0], &chain[0]));
            w_chains.push(chain);
        }

        let beta = DMatrix::from_fn(self.gains.len(), self.n_t, |p, nt| {
            self.tx_vecs[p].dotc(&upsilon_cols[nt])
        });

        Forward {
            tx_acts,
            w_chains,
            g,
            beta,
        }
    }

    /// `‖O_p‖_F²` for every path under the current phases.
    pub fn path_powers(&self) -> Vec<f64> {
        let fwd = self.forward();
        self.path_powers_from(&fwd)
    }

    fn path_powers_from(&self, fwd: &Forward) -> Vec<f64> {
        (0..self.gains.len())
            .map(|p| {
                let beta_sq: f64 = (0..self.n_t).map(|nt| fwd.beta[(p, nt)].norm_sqr()).sum();
                self.gains[p].norm_sqr() * fwd.g[p].norm_squared() * beta_sq
            })
            .collect()
    }

    /// Objective value under the current phases.
    pub fn objective_value(&self, objective: Objective) -> f64 {
        let powers = self.path_powers();
        match objective {
            Objective::Communication => powers.iter().sum(),
            Objective::Sensing => powers.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }

    /// Index of the weakest path (`argmin_p ‖O_p‖_F`), ties resolved to the
    /// lowest index.
    pub fn select_min_path(&self) -> usize {
        let powers = self.path_powers();
        let mut best = 0;
        for (p, &v) in powers.iter().enumerate() {
            if v < powers[best] {
                best = p;
            }
        }
        best
    }

    /// Analytic gradients of `Σ_{p ∈ subset} ‖O_p‖_F²` with respect to every
    /// layer's phases, transmit side then receive side.
    pub fn gradients(&self, subset: &[usize]) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let fwd = self.forward();
        self.gradients_from(&fwd, subset)
    }

    fn gradients_from(
        &self,
        fwd: &Forward,
        subset: &[usize],
    ) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let q_tx = self.layers_tx;
        let q_rx = self.layers_rx;
        let m_tx = self.gamma1.nrows();
        let m_rx = self.xi1.ncols();
        let psi: Vec<DVector<C64>> = self.tx_phases.iter().map(unit_phasors).collect();
        let delta: Vec<DVector<C64>> = self.rx_phases.iter().map(unit_phasors).collect();
        let mut grad_tx = vec![DVector::<f64>::zeros(m_tx); q_tx];
        let mut grad_rx = vec![DVector::<f64>::zeros(m_rx); q_rx];

        for &p in subset {
            let weight = self.gains[p].norm_sqr();
            // Transmit side: v_q = D_q^H·(|h̃|²‖g‖²·t_p), then per antenna
            // the β-scaled imaginary parts accumulate into the gradient.
            let mut v = vec![DVector::<C64>::zeros(m_tx); q_tx];
            v[q_tx - 1] = &self.tx_vecs[p] * C64::new(weight * fwd.g[p].norm_squared(), 0.0);
            for idx in (1..q_tx).rev() {
                let scaled = DVector::from_fn(m_tx, |i, _| psi[idx][i].conj() * v[idx][i]);
                v[idx - 1] = &self.gamma_h * scaled;
            }
            for idx in 0..q_tx {
                for nt in 0..self.n_t {
                    let beta = fwd.beta[(p, nt)];
                    let s = &fwd.tx_acts[idx][nt];
                    for i in 0..m_tx {
                        let term = psi[idx][i].conj() * s[i].conj() * (beta * v[idx][i]);
                        grad_tx[idx][i] += 2.0 * term.im;
                    }
                }
            }

            // Receive side: τ_q̃ = L_q̃^H·g_p, combined with the upstream
            // chains; the antenna sum collapses into Σ_nt |β|².
            let beta_sq: f64 = (0..self.n_t).map(|nt| fwd.beta[(p, nt)].norm_sqr()).sum();
            let mut tau = vec![DVector::<C64>::zeros(m_rx); q_rx];
            tau[0] = &self.xi1_h * &fwd.g[p];
            for idx in 1..q_rx {
                let scaled = DVector::from_fn(m_rx, |i, _| delta[idx - 1][i].conj() * tau[idx - 1][i]);
                tau[idx] = &self.xi_h * scaled;
            }
            let factor = weight * beta_sq;
            for idx in 0..q_rx {
                let w = &fwd.w_chains[p][idx];
                for i in 0..m_rx {
                    let term = delta[idx][i].conj() * w[i].conj() * tau[idx][i] * factor;
                    grad_rx[idx][i] += 2.0 * term.im;
                }
            }
        }
        (grad_tx, grad_rx)
    }

    /// Dense transmit-side linearization `Υ̃_{t:q,p,n_t}` (test oracle for
    /// the reconstruction identity `o = Υ̃·ψ_q`); `q` is 1-based.
    pub fn tx_layer_linearization(&self, q: usize, p: usize, nt: usize) -> Result<DMatrix<C64>> {
        if q == 0 || q > self.layers_tx || p >= self.gains.len() || nt >= self.n_t {
            return Err(Error::InvalidInput("linearization index out of range".into()));
        }
        let fwd = self.forward();
        let psi: Vec<DVector<C64>> = self.tx_phases.iter().map(unit_phasors).collect();
        let m = self.gamma1.nrows();
        // Downstream chain D_q = Ψ_Q Γ … Ψ_{q+1} Γ.
        let mut downstream = DMatrix::<C64>::identity(m, m);
        for idx in (q..self.layers_tx).rev() {
            let step = DMatrix::from_diagonal(&psi[idx]) * &self.gamma;
            downstream = if idx == self.layers_tx - 1 {
                step
            } else {
                downstream * step
            };
        }
        // Rank-1 coupling C_p = h̃_p · g_p · t_p^H.
        let coupling = &fwd.g[p] * self.tx_vecs[p].adjoint() * self.gains[p];
        Ok(coupling * downstream * DMatrix::from_diagonal(&fwd.tx_acts[q - 1][nt]))
    }

    /// Dense receive-side linearization `Υ̃_{r:q̃,p,n_t}`; `q` is 1-based.
    pub fn rx_layer_linearization(&self, q: usize, p: usize, nt: usize) -> Result<DMatrix<C64>> {
        if q == 0 || q > self.layers_rx || p >= self.gains.len() || nt >= self.n_t {
            return Err(Error::InvalidInput("linearization index out of range".into()));
        }
        let fwd = self.forward();
        let delta: Vec<DVector<C64>> = self.rx_phases.iter().map(unit_phasors).collect();
        // Downstream-to-antennas chain L_q̃ = Ξ_1 Δ_1 Ξ … Δ_{q̃−1} Ξ.
        let mut downstream = self.xi1.clone();
        for idx in 0..(q - 1) {
            downstream = downstream * DMatrix::from_diagonal(&delta[idx]) * &self.xi;
        }
        let s_tilde = &fwd.w_chains[p][q - 1] * fwd.beta[(p, nt)];
        Ok(downstream * DMatrix::from_diagonal(&s_tilde) * self.gains[p])
    }

    /// Column `n_t` of `O_p` under the current phases.
    pub fn path_column(&self, p: usize, nt: usize) -> DVector<C64> {
        let fwd = self.forward();
        &fwd.g[p] * (self.gains[p] * fwd.beta[(p, nt)])
    }

    /// One normalized ascent update: each side scales its gradient so the
    /// largest entry moves by `λ^i·π`; an all-zero gradient skips its side.
    pub fn ascent_step(
        &mut self,
        grad_tx: &[DVector<f64>],
        grad_rx: &[DVector<f64>],
        iteration: usize,
        decay: f64,
    ) {
        let rate = decay.powi(iteration as i32);
        let max_abs = |grads: &[DVector<f64>]| {
            grads
                .iter()
                .flat_map(|g| g.iter().map(|x| x.abs()))
                .fold(0.0_f64, f64::max)
        };
        let g_tx = max_abs(grad_tx);
        if g_tx > 0.0 {
            let rho = std::f64::consts::PI / g_tx;
            for (phase, grad) in self.tx_phases.iter_mut().zip(grad_tx) {
                for i in 0..phase.len() {
                    phase[i] = wrap_phase(phase[i] + rate * rho * grad[i]);
                }
            }
        }
        let g_rx = max_abs(grad_rx);
        if g_rx > 0.0 {
            let rho = std::f64::consts::PI / g_rx;
            for (phase, grad) in self.rx_phases.iter_mut().zip(grad_rx) {
                for i in 0..phase.len() {
                    phase[i] = wrap_phase(phase[i] + rate * rho * grad[i]);
                }
            }
        }
    }

    /// Runs the configured ascent. The communication objective follows all
    /// paths for `iterations` steps; the sensing objective runs `P+1` greedy
    /// rounds, each reselecting the weakest path before `iterations` steps.
    pub fn optimize(&mut self, objective: Objective, cfg: &AscentConfig) -> AscentTrace {
        let mut trace = AscentTrace {
            objective: vec![self.objective_value(objective)],
        };
        match objective {
            Objective::Communication => {
                let all: Vec<usize> = (0..self.path_count()).collect();
                for i in 1..=cfg.iterations {
                    let fwd = self.forward();
                    let (gtx, grx) = self.gradients_from(&fwd, &all);
                    self.ascent_step(&gtx, &grx, i, cfg.decay);
                    trace.objective.push(self.objective_value(objective));
                }
            }
            Objective::Sensing => {
                for round in 0..=self.path_count() {
                    let mut p_min = self.select_min_path();
                    for i in 1..=cfg.iterations {
                        let fwd = self.forward();
                        let (gtx, grx) = self.gradients_from(&fwd, &[p_min]);
                        let global_i = round * cfg.iterations + i;
                        self.ascent_step(&gtx, &grx, global_i, cfg.decay);
                        let value = self.objective_value(objective);
                        trace.objective.push(value);
                        p_min = self.select_min_path();
                    }
                }
            }
        }
        trace
    }
}

/// Convenience wrapper: optimizes a system's phases in place and returns the
/// trace.
pub fn optimize_system(
    system: &mut MpddSystem,
    paths: &[Path],
    objective: Objective,
    gains: GainKnowledge,
    cfg: &AscentConfig,
) -> Result<AscentTrace> {
    let mut problem = SimOptProblem::new(system, paths, gains)?;
    let trace = problem.optimize(objective, cfg);
    problem.store_phases(system)?;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_paths, ChannelSampler, PathSampling, SamplingGrid};
    use crate::metasurfaces::{SimGeometry, SimSide, SimStack};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use std::f64::consts::PI;

    fn build_system(layers: usize, mx: usize, n_t: usize, n_r: usize) -> MpddSystem {
        let lambda = 0.0107;
        let tx = SimStack::new(
            SimGeometry::new(layers, mx, mx, 0.5, 5.0, 5.0, lambda, n_t, true).unwrap(),
            SimSide::Transmit,
        )
        .unwrap();
        let rx = SimStack::new(
            SimGeometry::new(layers, mx, mx, 0.5, 5.0, 5.0, lambda, n_r, true).unwrap(),
            SimSide::Receive,
        )
        .unwrap();
        MpddSystem::new(tx, rx, Vec::new(), None).unwrap()
    }

    fn draw_paths(count: usize, seed: u64) -> Vec<crate::channel::Path> {
        let grid = SamplingGrid::new(64, 20e6).unwrap();
        let sampler = ChannelSampler {
            direct: PathSampling {
                count,
                max_delay_taps: 9,
                max_doppler_hz: 20e3,
            },
            fixed_direct: None,
            ris: Vec::new(),
        };
        sample_paths(&sampler, &grid, &mut crate::rng::substream(seed, &[0])).direct
    }

    fn randomize_phases(problem: &mut SimOptProblem, seed: u64) {
        let mut rng = crate::rng::substream(seed, &[5]);
        let tx: Vec<DVector<f64>> = problem
            .tx_phases()
            .iter()
            .map(|v| DVector::from_fn(v.len(), |_, _| rng.random_range(-PI..PI)))
            .collect();
        let rx: Vec<DVector<f64>> = problem
            .rx_phases()
            .iter()
            .map(|v| DVector::from_fn(v.len(), |_, _| rng.random_range(-PI..PI)))
            .collect();
        problem.set_phases(tx, rx).unwrap();
    }

    /// Objective evaluated through the metasurfaces cascade machinery, kept
    /// independent of the optimizer's internal forward pass.
    fn objective_via_cascades(
        system: &MpddSystem,
        paths: &[crate::channel::Path],
        problem: &SimOptProblem,
    ) -> f64 {
        let mut sys = system.clone();
        sys.tx_sim.set_phases(problem.tx_phases().to_vec()).unwrap();
        sys.rx_sim.set_phases(problem.rx_phases().to_vec()).unwrap();
        let upsilon_t = sys.tx_sim.cascade();
        let upsilon_r = sys.rx_sim.cascade();
        let scale = ((sys.tx_sim.atoms() * sys.rx_sim.atoms()) as f64 / paths.len() as f64).sqrt();
        paths
            .iter()
            .map(|p| {
                let b_r = crate::arrays::upa_response(
                    &sys.rx_upa(),
                    p.angles.azimuth_in,
                    p.angles.elevation_in,
                )
                .unwrap();
                let b_t = crate::arrays::upa_response(
                    &sys.tx_upa(),
                    p.angles.azimuth_out,
                    p.angles.elevation_out,
                )
                .unwrap();
                let b = crate::arrays::path_outer_product(&b_r, &b_t);
                let o = &upsilon_r
                    * &sys.r_rx_sqrt
                    * b
                    * &sys.r_tx_sqrt
                    * &upsilon_t
                    * (p.gain * scale);
                o.norm_squared()
            })
            .sum()
    }

    #[test]
    fn forward_objective_matches_cascade_oracle() {
        let system = build_system(3, 3, 2, 2);
        let paths = draw_paths(3, 1);
        let mut problem = SimOptProblem::new(&system, &paths, GainKnowledge::Genie).unwrap();
        randomize_phases(&mut problem, 2);
        let via_forward = problem.objective_value(Objective::Communication);
        let via_cascade = objective_via_cascades(&system, &paths, &problem);
        assert_abs_diff_eq!(via_forward, via_cascade, epsilon = 1e-9 * via_cascade.abs());
    }

    #[test]
    fn reconstruction_identity_holds_on_both_sides() {
        // o_{p,n_t} = Υ̃·(phase vector) exactly, for every layer and path.
        let system = build_system(3, 3, 2, 2);
        let paths = draw_paths(2, 3);
        let mut problem = SimOptProblem::new(&system, &paths, GainKnowledge::Genie).unwrap();
        randomize_phases(&mut problem, 4);
        for p in 0..2 {
            for nt in 0..2 {
                let o = problem.path_column(p, nt);
                for q in 1..=3 {
                    let lin_tx = problem.tx_layer_linearization(q, p, nt).unwrap();
                    let psi = unit_phasors(&problem.tx_phases()[q - 1]);
                    let rebuilt = &lin_tx * psi;
                    assert!(
                        (rebuilt - &o).norm() < 1e-10 * o.norm().max(1.0),
                        "tx layer {q}, path {p}, antenna {nt}"
                    );
                    let lin_rx = problem.rx_layer_linearization(q, p, nt).unwrap();
                    let delta = unit_phasors(&problem.rx_phases()[q - 1]);
                    let rebuilt = &lin_rx * delta;
                    assert!(
                        (rebuilt - &o).norm() < 1e-10 * o.norm().max(1.0),
                        "rx layer {q}, path {p}, antenna {nt}"
                    );
                }
            }
        }
    }

    #[test]
    fn single_layer_tx_linearization_uses_interface_columns() {
        // Q = 1: the downstream chain is empty, so Υ̃ is the rank-1 coupling
        // times diag of the interface column.
        let system = build_system(1, 2, 2, 1);
        let paths = draw_paths(1, 5);
        let problem = SimOptProblem::new(&system, &paths, GainKnowledge::Genie).unwrap();
        let lin = problem.tx_layer_linearization(1, 0, 1).unwrap();
        let fwd_g = problem.path_column(0, 1);
        // ψ = 1 (zero phases), so Υ̃·1 must already be o.
        let ones = DVector::from_element(lin.ncols(), C64::new(1.0, 0.0));
        assert!((lin * ones - fwd_g).norm() < 1e-12);
    }

    #[test]
    fn zero_gain_paths_contribute_nothing() {
        let system = build_system(2, 2, 1, 1);
        let mut paths = draw_paths(2, 6);
        paths[0].gain = C64::new(0.0, 0.0);
        let problem = SimOptProblem::new(&system, &paths, GainKnowledge::Genie).unwrap();
        let lin = problem.tx_layer_linearization(1, 0, 0).unwrap();
        assert!(lin.norm() < 1e-30);
        let (gtx, _) = problem.gradients(&[0]);
        assert!(gtx.iter().all(|g| g.norm() < 1e-30));
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let system = build_system(2, 3, 2, 2);
        let paths = draw_paths(3, 7);
        for (objective, subset) in [
            (Objective::Communication, (0..3).collect::<Vec<_>>()),
            (Objective::Sensing, vec![]),
        ] {
            let mut problem = SimOptProblem::new(&system, &paths, GainKnowledge::Genie).unwrap();
            randomize_phases(&mut problem, 8);
            let subset = if subset.is_empty() {
                vec![problem.select_min_path()]
            } else {
                subset
            };
            let (gtx, grx) = problem.gradients(&subset);
            let value = |problem: &SimOptProblem| -> f64 {
                problem
                    .path_powers()
                    .iter()
                    .enumerate()
                    .filter(|(p, _)| subset.contains(p))
                    .map(|(_, v)| v)
                    .sum()
            };
            let step = 1e-6;
            for side in 0..2 {
                let layers = if side == 0 { 2 } else { 2 };
                for q in 0..layers {
                    let len = if side == 0 { gtx[q].len() } else { grx[q].len() };
                    let mut fd = DVector::zeros(len);
                    for i in 0..len {
                        let mut plus = SimOptProblem::new(&system, &paths, GainKnowledge::Genie).unwrap();
                        plus.set_phases(problem.tx_phases().to_vec(), problem.rx_phases().to_vec())
                            .unwrap();
                        let mut minus = SimOptProblem::new(&system, &paths, GainKnowledge::Genie).unwrap();
                        minus
                            .set_phases(problem.tx_phases().to_vec(), problem.rx_phases().to_vec())
                            .unwrap();
                        if side == 0 {
                            let mut tx = plus.tx_phases().to_vec();
                            tx[q][i] += step;
                            plus.set_phases(tx, plus.rx_phases().to_vec()).unwrap();
                            let mut tx = minus.tx_phases().to_vec();
                            tx[q][i] -= step;
                            minus.set_phases(tx, minus.rx_phases().to_vec()).unwrap();
                        } else {
                            let mut rx = plus.rx_phases().to_vec();
                            rx[q][i] += step;
                            plus.set_phases(plus.tx_phases().to_vec(), rx).unwrap();
                            let mut rx = minus.rx_phases().to_vec();
                            rx[q][i] -= step;
                            minus.set_phases(minus.tx_phases().to_vec(), rx).unwrap();
                        }
                        fd[i] = (value(&plus) - value(&minus)) / (2.0 * step);
                    }
                    let analytic = if side == 0 { &gtx[q] } else { &grx[q] };
                    let rel = (analytic - &fd).norm() / fd.norm().max(1e-12);
                    assert!(
                        rel < 1e-5,
                        "{objective:?} side {side} layer {q}: relative error {rel}"
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_scales_quadratically_with_gains() {
        let system = build_system(2, 2, 1, 1);
        let paths = draw_paths(2, 9);
        let mut scaled = paths.clone();
        for p in &mut scaled {
            p.gain *= 2.0;
        }
        let mut a = SimOptProblem::new(&system, &paths, GainKnowledge::Genie).unwrap();
        let mut b = SimOptProblem::new(&system, &scaled, GainKnowledge::Genie).unwrap();
        randomize_phases(&mut a, 10);
        b.set_phases(a.tx_phases().to_vec(), a.rx_phases().to_vec())
            .unwrap();
        let (ga, _) = a.gradients(&[0, 1]);
        let (gb, _) = b.gradients(&[0, 1]);
        for (va, vb) in ga.iter().zip(&gb) {
            assert!((vb - va * 4.0).norm() < 1e-9 * vb.norm().max(1.0));
        }
        assert_abs_diff_eq!(
            b.objective_value(Objective::Communication),
            4.0 * a.objective_value(Objective::Communication),
            epsilon = 1e-9 * b.objective_value(Objective::Communication)
        );
    }

    #[test]
    fn scalar_stack_is_stationary_everywhere() {
        // One atom per layer: every phase only rotates the scalar output,
        // so the objective is flat and the gradient vanishes.
        let system = build_system(1, 1, 1, 1);
        let paths = draw_paths(1, 11);
        let mut problem = SimOptProblem::new(&system, &paths, GainKnowledge::Genie).unwrap();
        randomize_phases(&mut problem, 12);
        let (gtx, grx) = problem.gradients(&[0]);
        assert!(gtx[0].amax() < 1e-10);
        assert!(grx[0].amax() < 1e-10);
        // And the ascent step leaves phases untouched on a zero gradient.
        let before = problem.tx_phases().to_vec();
        let (gtx, grx) = (vec![DVector::zeros(1)], vec![DVector::zeros(1)]);
        problem.ascent_step(&gtx, &grx, 1, 0.99);
        assert_eq!(problem.tx_phases(), before.as_slice());
    }

    #[test]
    fn global_layer_phase_shift_leaves_objective_unchanged() {
        let system = build_system(3, 3, 2, 2);
        let paths = draw_paths(2, 13);
        let mut problem = SimOptProblem::new(&system, &paths, GainKnowledge::Genie).unwrap();
        randomize_phases(&mut problem, 14);
        let before = problem.objective_value(Objective::Communication);
        let mut tx = problem.tx_phases().to_vec();
        for v in tx[1].iter_mut() {
            *v += 0.37;
        }
        problem.set_phases(tx, problem.rx_phases().to_vec()).unwrap();
        let after = problem.objective_value(Objective::Communication);
        assert_abs_diff_eq!(before, after, epsilon = 1e-10 * before.abs());
    }

    #[test]
    fn normalized_step_moves_largest_entry_by_decayed_pi() {
        let system = build_system(1, 2, 1, 1);
        let paths = draw_paths(1, 15);
        let mut problem = SimOptProblem::new(&system, &paths, GainKnowledge::Genie).unwrap();
        let grad = vec![DVector::from_vec(vec![0.5, -2.0, 1.0, 0.25])];
        let decay = 0.9;
        problem.ascent_step(&grad, &[], 1, decay);
        let moved = problem.tx_phases()[0].clone();
        // Largest |entry| moves by λ¹·π, others proportionally.
        assert_abs_diff_eq!(moved[1], wrap_phase(-decay * PI), epsilon = 1e-12);
        assert_abs_diff_eq!(moved[0], decay * PI * 0.25, epsilon = 1e-12);
    }

    #[test]
    fn min_path_selection_prefers_weakest_and_breaks_ties_low() {
        let system = build_system(2, 2, 1, 1);
        let mut paths = draw_paths(3, 16);
        // Identical geometry across paths isolates the gain ordering.
        let shared_angles = paths[0].angles;
        for p in &mut paths {
            p.angles = shared_angles;
        }
        paths[0].gain = C64::new(1.0, 0.0);
        paths[1].gain = C64::new(0.1, 0.0);
        paths[2].gain = C64::new(1.0, 0.0);
        let problem = SimOptProblem::new(&system, &paths, GainKnowledge::Genie).unwrap();
        assert_eq!(problem.select_min_path(), 1);
        // Exact tie: lowest index wins.
        let mut tied = paths.clone();
        tied[1].gain = C64::new(1.0, 0.0);
        let problem = SimOptProblem::new(&system, &tied, GainKnowledge::Genie).unwrap();
        assert_eq!(problem.select_min_path(), 0);
        // Single path: trivially index 0.
        let single = SimOptProblem::new(&system, &paths[..1].to_vec(), GainKnowledge::Genie).unwrap();
        assert_eq!(single.select_min_path(), 0);
    }

    #[test]
    fn zero_iterations_keep_the_unoptimized_baseline() {
        let mut system = build_system(2, 3, 1, 1);
        let paths = draw_paths(2, 17);
        let cfg = AscentConfig::new(0, 0.99).unwrap();
        let trace = optimize_system(
            &mut system,
            &paths,
            Objective::Communication,
            GainKnowledge::Genie,
            &cfg,
        )
        .unwrap();
        assert_eq!(trace.objective.len(), 1);
        assert!(system.tx_sim.phases().iter().all(|v| v.amax() == 0.0));
    }

    #[test]
    fn ascent_improves_the_communication_objective() {
        let mut system = build_system(3, 3, 1, 2);
        let paths = draw_paths(4, 18);
        let cfg = AscentConfig::new(120, 0.99).unwrap();
        let trace = optimize_system(
            &mut system,
            &paths,
            Objective::Communication,
            GainKnowledge::Genie,
            &cfg,
        )
        .unwrap();
        assert!(
            trace.last() > trace.initial(),
            "objective went from {} to {}",
            trace.initial(),
            trace.last()
        );
    }

    #[test]
    fn sensing_run_matches_communication_run_for_single_path() {
        // With one path the two objectives coincide, so the first greedy
        // round of the sensing optimizer retraces the communication ascent.
        let paths = draw_paths(1, 19);
        let cfg = AscentConfig::new(25, 0.98).unwrap();
        let system = build_system(2, 3, 1, 1);

        let mut comm = SimOptProblem::new(&system, &paths, GainKnowledge::Genie).unwrap();
        let comm_trace = comm.optimize(Objective::Communication, &cfg);

        let mut sens = SimOptProblem::new(&system, &paths, GainKnowledge::Genie).unwrap();
        let sens_trace = sens.optimize(Objective::Sensing, &cfg);

        for (a, b) in comm_trace.objective.iter().zip(&sens_trace.objective) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn optimizer_is_deterministic() {
        let paths = draw_paths(3, 20);
        let cfg = AscentConfig::new(40, 0.99).unwrap();
        let run = || {
            let mut system = build_system(2, 3, 1, 1);
            optimize_system(
                &mut system,
                &paths,
                Objective::Communication,
                GainKnowledge::Genie,
                &cfg,
            )
            .unwrap()
            .objective
        };
        assert_eq!(run(), run());
    }
}
