//! Multipath delay-Doppler channel assembly.
//!
//! A channel realization is a set of paths, each with a complex gain, an
//! integer delay in taps and a (possibly fractional) Doppler shift in cycles
//! per frame. Under a cyclic prefix the sampled frame sees each path as the
//! unitary `N × N` block `G = Θ · Ω^f · Π^ℓ`: a CP phase correction, a
//! per-sample Doppler rotation and a cyclic shift. The full transfer matrix
//! stacks streams through Kronecker products, `H̄ = Σ_p Ȟ_p ⊗ G_p`, where
//! the small `Ȟ_p` carries the spatial factors (arrays, metasurface
//! cascades, correlation square roots, beamformers).
//!
//! Delays are quantized to the tap grid; Doppler is kept fractional. The
//! received-sample rotation `exp(+j2πf·n/N)` is the authoritative sign
//! convention, matching the continuous-time model `exp(+j2πνt)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::arrays::{self, PathAngles, UlaGeometry, UpaGeometry};
use crate::metasurfaces::{ris_phase_matrix, SimStack};
use crate::rng::complex_gaussian;
use crate::{C64, Error, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Frame length and sample rate; fixes the delay tap grid and the
/// cycles-per-frame Doppler normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingGrid {
    pub frame_len: usize,
    pub sample_rate_hz: f64,
}

impl SamplingGrid {
    pub fn new(frame_len: usize, sample_rate_hz: f64) -> Result<Self> {
        if frame_len == 0 || !(sample_rate_hz > 0.0) {
            return Err(Error::InvalidInput(
                "sampling grid needs a positive frame length and sample rate".into(),
            ));
        }
        Ok(Self {
            frame_len,
            sample_rate_hz,
        })
    }

    pub fn sample_period_s(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    /// Doppler in Hz → cycles per frame (`f = N·ν/F_s`).
    pub fn doppler_cycles(&self, doppler_hz: f64) -> f64 {
        self.frame_len as f64 * doppler_hz / self.sample_rate_hz
    }

    pub fn doppler_hz(&self, cycles: f64) -> f64 {
        cycles * self.sample_rate_hz / self.frame_len as f64
    }
}

/// One resolvable propagation path.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub gain: C64,
    pub delay_taps: usize,
    pub doppler_cycles: f64,
    pub delay_s: f64,
    pub doppler_hz: f64,
    pub angles: PathAngles,
}

/// Cascaded path segments bouncing off one RIS: transmitter-side legs into
/// the surface and receiver-side legs out of it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RisPathGroup {
    pub tx_paths: Vec<Path>,
    pub rx_paths: Vec<Path>,
}

/// All paths of one channel realization.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PathSet {
    pub direct: Vec<Path>,
    pub ris: Vec<RisPathGroup>,
}

/// Random multipath statistics for one path group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSampling {
    pub count: usize,
    pub max_delay_taps: usize,
    pub max_doppler_hz: f64,
}

/// A pinned delay/Doppler point; gain and angles are still drawn unless the
/// gain is fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPath {
    pub delay_taps: usize,
    pub doppler_cycles: f64,
    pub gain: Option<C64>,
}

/// Random channel description: direct paths plus per-RIS segment statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSampler {
    pub direct: PathSampling,
    /// Overrides the direct delay/Doppler draw per path when present.
    pub fixed_direct: Option<Vec<FixedPath>>,
    pub ris: Vec<(PathSampling, PathSampling)>,
}

/// Delay-spread × Doppler-spread product; the sampled model assumes this is
/// far below one (underspread channel).
pub fn delay_doppler_product(max_delay_taps: usize, max_doppler_hz: f64, grid: &SamplingGrid) -> f64 {
    max_delay_taps as f64 * grid.sample_period_s() * max_doppler_hz
}

fn draw_angles<R: Rng + ?Sized>(rng: &mut R) -> PathAngles {
    // 3D azimuths on [−π/2, π/2]; elevations (also reused as the 2D ULA
    // angles) on [0, π].
    let azimuth_in = rng.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
    let elevation_in = rng.random_range(0.0..std::f64::consts::PI);
    let azimuth_out = rng.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
    let elevation_out = rng.random_range(0.0..std::f64::consts::PI);
    PathAngles {
        azimuth_in,
        elevation_in,
        azimuth_out,
        elevation_out,
    }
}

fn draw_path<R: Rng + ?Sized>(rng: &mut R, stats: &PathSampling, grid: &SamplingGrid) -> Path {
    let ts = grid.sample_period_s();
    let tau_max = stats.max_delay_taps as f64 * ts;
    let delay_taps = if stats.max_delay_taps == 0 {
        0
    } else {
        (rng.random_range(0.0..=tau_max) / ts).round() as usize
    };
    // Jakes spectrum: ν = ν_max · cos θ with θ uniform on [−π, π].
    let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let doppler_hz = stats.max_doppler_hz * theta.cos();
    let gain = complex_gaussian(rng, 1.0);
    let angles = draw_angles(rng);
    Path {
        gain,
        delay_taps,
        doppler_cycles: grid.doppler_cycles(doppler_hz),
        delay_s: delay_taps as f64 * ts,
        doppler_hz,
        angles,
    }
}

fn materialize_fixed<R: Rng + ?Sized>(rng: &mut R, fixed: &FixedPath, grid: &SamplingGrid) -> Path {
    let gain = fixed.gain.unwrap_or_else(|| complex_gaussian(rng, 1.0));
    let angles = draw_angles(rng);
    Path {
        gain,
        delay_taps: fixed.delay_taps,
        doppler_cycles: fixed.doppler_cycles,
        delay_s: fixed.delay_taps as f64 * grid.sample_period_s(),
        doppler_hz: grid.doppler_hz(fixed.doppler_cycles),
        angles,
    }
}

/// Draws one channel realization. Delays are uniform on `[0, τ_max]` then
/// quantized to taps, Doppler follows the Jakes spectrum, gains are unit
/// circularly-symmetric complex Gaussians.
pub fn sample_paths<R: Rng + ?Sized>(
    sampler: &ChannelSampler,
    grid: &SamplingGrid,
    rng: &mut R,
) -> PathSet {
    let product = delay_doppler_product(
        sampler.direct.max_delay_taps,
        sampler.direct.max_doppler_hz,
        grid,
    );
    if product >= 1.0 {
        log::warn!(
            "underspread assumption violated: delay-Doppler product {product:.3} >= 1; \
             the circular-convolution channel model is unreliable here"
        );
    }
    let direct = match &sampler.fixed_direct {
        Some(fixed) => fixed
            .iter()
            .map(|f| materialize_fixed(rng, f, grid))
            .collect(),
        None => (0..sampler.direct.count)
            .map(|_| draw_path(rng, &sampler.direct, grid))
            .collect(),
    };
    let ris = sampler
        .ris
        .iter()
        .map(|(tx, rx)| RisPathGroup {
            tx_paths: (0..tx.count).map(|_| draw_path(rng, tx, grid)).collect(),
            rx_paths: (0..rx.count).map(|_| draw_path(rng, rx, grid)).collect(),
        })
        .collect();
    PathSet { direct, ris }
}

/// Waveform-specific cyclic-prefix phase law `φ_CP(n)` in cycles.
///
/// Plain CP waveforms (OFDM, OTFS) contribute no phase; the AFDM
/// chirp-periodic prefix contributes `c1·(N² − 2Nn)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CpPhase {
    None,
    AfdmChirp { c1: f64 },
}

impl CpPhase {
    pub fn phase_cycles(&self, n: f64, frame_len: usize) -> f64 {
        match self {
            CpPhase::None => 0.0,
            CpPhase::AfdmChirp { c1 } => {
                let nf = frame_len as f64;
                c1 * (nf * nf - 2.0 * nf * n)
            }
        }
    }
}

/// Diagonal CP phase matrix `Θ`: the first `ℓ` samples of the frame carry
/// the wrapped prefix phases `exp(−j2π·φ_CP(ℓ)), …, exp(−j2π·φ_CP(1))`, the
/// rest are untouched.
pub fn cp_phase_matrix(delay_taps: usize, cp: &CpPhase, n: usize) -> Result<DMatrix<C64>> {
    if delay_taps >= n {
        return Err(Error::DelaySpread {
            delay: delay_taps,
            frame: n,
        });
    }
    Ok(DMatrix::from_diagonal(&DVector::from_fn(n, |m, _| {
        if m < delay_taps {
            C64::from_polar(
                1.0,
                -TWO_PI * cp.phase_cycles((delay_taps - m) as f64, n),
            )
        } else {
            C64::new(1.0, 0.0)
        }
    })))
}

/// Diagonal Doppler rotation: entry `n` is `exp(+j2π·f·n/N)`.
pub fn doppler_block(doppler_cycles: f64, n: usize) -> DMatrix<C64> {
    DMatrix::from_diagonal(&DVector::from_fn(n, |m, _| {
        C64::from_polar(1.0, TWO_PI * doppler_cycles * m as f64 / n as f64)
    }))
}

/// Forward cyclic shift `Π^ℓ`: applying it delays a frame by `ℓ` samples
/// circularly, and right-multiplying a matrix by it rotates the first `ℓ`
/// columns to the back.
pub fn cyclic_shift_block(delay_taps: usize, n: usize) -> DMatrix<C64> {
    let shift = delay_taps % n;
    DMatrix::from_fn(n, n, |i, j| {
        if (i + n - shift) % n == j {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// One per-path block `G = Θ · Ω^f · Π^ℓ` stored structurally: a cyclic
/// shift plus a per-row complex scale. Exactly one nonzero per row, unitary
/// by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBlock {
    n: usize,
    shift: usize,
    diag: DVector<C64>,
}

impl PathBlock {
    pub fn new(n: usize, delay_taps: usize, doppler_cycles: f64, cp: &CpPhase) -> Result<Self> {
        if delay_taps >= n {
            return Err(Error::DelaySpread {
                delay: delay_taps,
                frame: n,
            });
        }
        let diag = DVector::from_fn(n, |m, _| {
            let doppler = TWO_PI * doppler_cycles * m as f64 / n as f64;
            let theta = if m < delay_taps {
                -TWO_PI * cp.phase_cycles((delay_taps - m) as f64, n)
            } else {
                0.0
            };
            C64::from_polar(1.0, doppler + theta)
        });
        Ok(Self {
            n,
            shift: delay_taps,
            diag,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.n
    }

    pub fn delay_taps(&self) -> usize {
        self.shift
    }

    pub fn dense(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.n, self.n, |i, j| {
            if (i + self.n - self.shift) % self.n == j {
                self.diag[i]
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// `y[n] = diag[n] · x[(n − ℓ) mod N]`.
    pub fn apply(&self, x: &DVector<C64>) -> DVector<C64> {
        DVector::from_fn(self.n, |i, _| {
            self.diag[i] * x[(i + self.n - self.shift) % self.n]
        })
    }

    /// Left-multiplies a matrix by this block without densifying it: row `i`
    /// of the result is `diag[i]` times row `(i − ℓ) mod N` of `m`.
    pub fn apply_to_matrix(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        assert_eq!(m.nrows(), self.n, "row count must match the frame length");
        DMatrix::from_fn(self.n, m.ncols(), |i, j| {
            self.diag[i] * m[((i + self.n - self.shift) % self.n, j)]
        })
    }
}

/// Whether a channel's blocks live on the raw sample grid or behind a
/// waveform's demodulation transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalDomain {
    Time,
    Decision,
}

#[derive(Debug, Clone)]
pub enum TermBlock {
    Shift(PathBlock),
    Dense(DMatrix<C64>),
}

impl TermBlock {
    pub fn dense(&self) -> DMatrix<C64> {
        match self {
            TermBlock::Shift(b) => b.dense(),
            TermBlock::Dense(m) => m.clone(),
        }
    }

    pub fn apply(&self, x: &DVector<C64>) -> DVector<C64> {
        match self {
            TermBlock::Shift(b) => b.apply(x),
            TermBlock::Dense(m) => m * x,
        }
    }
}

/// One Kronecker term `Ȟ ⊗ G`: a small spatial gain matrix (receive streams
/// × transmit streams) times an `N × N` block.
#[derive(Debug, Clone)]
pub struct ChannelTerm {
    pub gain: DMatrix<C64>,
    pub block: TermBlock,
}

/// A stacked multi-stream transfer matrix kept in per-path decomposed form.
#[derive(Debug, Clone)]
pub struct Channel {
    pub frame_len: usize,
    pub rx_streams: usize,
    pub tx_streams: usize,
    pub cp: CpPhase,
    pub domain: SignalDomain,
    pub terms: Vec<ChannelTerm>,
}

impl Channel {
    /// Receive dimension `N̄ = N · rx_streams`.
    pub fn n_bar(&self) -> usize {
        self.frame_len * self.rx_streams
    }

    /// Transmit dimension `M̄ = N · tx_streams`.
    pub fn m_bar(&self) -> usize {
        self.frame_len * self.tx_streams
    }

    /// Dense `N̄ × M̄` assembly of `Σ Ȟ ⊗ G`.
    pub fn dense(&self) -> DMatrix<C64> {
        let n = self.frame_len;
        let mut h = DMatrix::zeros(self.n_bar(), self.m_bar());
        for term in &self.terms {
            let block = term.block.dense();
            for v in 0..self.rx_streams {
                for u in 0..self.tx_streams {
                    let g = term.gain[(v, u)];
                    if g == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let mut slice = h.view_mut((v * n, u * n), (n, n));
                    for j in 0..n {
                        for i in 0..n {
                            slice[(i, j)] += g * block[(i, j)];
                        }
                    }
                }
            }
        }
        h
    }

    /// Applies the stacked channel to a stacked input without assembling the
    /// dense matrix.
    pub fn apply(&self, x: &DVector<C64>) -> Result<DVector<C64>> {
        if x.len() != self.m_bar() {
            return Err(Error::Dimension(format!(
                "channel expects {} input samples, got {}",
                self.m_bar(),
                x.len()
            )));
        }
        let n = self.frame_len;
        let mut y = DVector::zeros(self.n_bar());
        for term in &self.terms {
            for u in 0..self.tx_streams {
                let xu = DVector::from_column_slice(&x.as_slice()[u * n..(u + 1) * n]);
                let gx = term.block.apply(&xu);
                for v in 0..self.rx_streams {
                    let g = term.gain[(v, u)];
                    if g == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let mut yv = y.rows_mut(v * n, n);
                    for i in 0..n {
                        yv[i] += g * gx[i];
                    }
                }
            }
        }
        Ok(y)
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.dense().norm_squared()
    }

    /// Rescales the decomposition so the dense matrix satisfies
    /// `‖H̄‖_F² = target`. Returns the applied scalar.
    pub fn normalized(&self, target_sq: f64) -> Result<(Channel, f64)> {
        let norm_sq = self.frobenius_norm_sq();
        if norm_sq <= 0.0 {
            return Err(Error::DegenerateChannel(
                "cannot normalize an all-zero channel".into(),
            ));
        }
        let scale = (target_sq / norm_sq).sqrt();
        let mut out = self.clone();
        for term in &mut out.terms {
            term.gain.scale_mut(scale);
        }
        Ok((out, scale))
    }
}

/// One reflective surface: a planar atom grid with fixed reflection phases.
#[derive(Debug, Clone)]
pub struct RisSurface {
    pub upa: UpaGeometry,
    pub phases: DVector<f64>,
}

impl RisSurface {
    pub fn identity(jx: usize, jz: usize, wavelength_m: f64) -> Result<Self> {
        let upa = UpaGeometry::half_wavelength(jx, jz, wavelength_m)?;
        let atoms = upa.elements();
        Ok(Self {
            upa,
            phases: DVector::zeros(atoms),
        })
    }

    pub fn atoms(&self) -> usize {
        self.upa.elements()
    }

    pub fn phase_matrix(&self) -> DMatrix<C64> {
        ris_phase_matrix(self.phases.as_slice())
    }
}

/// Transmit and receive ends of a metasurface-programmable link: the two
/// stacks, any ambient RIS, and the digital beamformers.
#[derive(Debug, Clone)]
pub struct MpddSystem {
    pub n_t: usize,
    pub n_r: usize,
    pub d_s: usize,
    pub tx_sim: SimStack,
    pub rx_sim: SimStack,
    pub ris: Vec<RisSurface>,
    /// Transmit beamformer, `N_T × d_s`; identity columns by default.
    pub v: DMatrix<C64>,
    /// Receive combiner, `N_R × rx_streams`. The default keeps every receive
    /// antenna as its own observation stream (identity over all antennas),
    /// which makes the stacked transfer matrix rectangular when `N_R > d_s`.
    pub u: DMatrix<C64>,
    pub r_tx_sqrt: DMatrix<C64>,
    pub r_rx_sqrt: DMatrix<C64>,
}

impl MpddSystem {
    pub fn new(
        tx_sim: SimStack,
        rx_sim: SimStack,
        ris: Vec<RisSurface>,
        d_s_override: Option<usize>,
    ) -> Result<Self> {
        let n_t = tx_sim.geom.antennas;
        let n_r = rx_sim.geom.antennas;
        let d_s = d_s_override.unwrap_or_else(|| n_t.min(n_r));
        if d_s == 0 || d_s > n_t {
            return Err(Error::InvalidInput(format!(
                "stream count {d_s} must lie in 1..=N_T ({n_t})"
            )));
        }
        let v = DMatrix::from_fn(n_t, d_s, |i, j| {
            if i == j {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let u = DMatrix::identity(n_r, n_r);
        let r_tx_sqrt = tx_sim.correlation().sqrt.map(|x| C64::new(x, 0.0));
        let r_rx_sqrt = rx_sim.correlation().sqrt.map(|x| C64::new(x, 0.0));
        Ok(Self {
            n_t,
            n_r,
            d_s,
            tx_sim,
            rx_sim,
            ris,
            v,
            u,
            r_tx_sqrt,
            r_rx_sqrt,
        })
    }

    pub fn rx_streams(&self) -> usize {
        self.u.ncols()
    }

    pub fn tx_upa(&self) -> UpaGeometry {
        self.tx_sim.geom.upa_geometry()
    }

    pub fn rx_upa(&self) -> UpaGeometry {
        self.rx_sim.geom.upa_geometry()
    }
}

/// The small spatial factor multiplying one path's delay-Doppler block:
/// `scale · h · U^H · Υ_R · R_RX^{1/2} · B · R_TX^{1/2} · Υ_T · V`.
#[allow(clippy::too_many_arguments)]
pub fn path_gain_matrix(
    gain: C64,
    scale: f64,
    u: &DMatrix<C64>,
    upsilon_r: &DMatrix<C64>,
    r_rx_sqrt: &DMatrix<C64>,
    b: &DMatrix<C64>,
    r_tx_sqrt: &DMatrix<C64>,
    upsilon_t: &DMatrix<C64>,
    v: &DMatrix<C64>,
) -> Result<DMatrix<C64>> {
    let chain = [
        (upsilon_r.ncols(), r_rx_sqrt.nrows(), "Υ_R · R_RX^{1/2}"),
        (r_rx_sqrt.ncols(), b.nrows(), "R_RX^{1/2} · B"),
        (b.ncols(), r_tx_sqrt.nrows(), "B · R_TX^{1/2}"),
        (r_tx_sqrt.ncols(), upsilon_t.nrows(), "R_TX^{1/2} · Υ_T"),
        (upsilon_t.ncols(), v.nrows(), "Υ_T · V"),
        (u.nrows(), upsilon_r.nrows(), "U^H · Υ_R"),
    ];
    for (a, b, what) in chain {
        if a != b {
            return Err(Error::Dimension(format!(
                "path gain factor dimensions do not chain at {what}: {a} vs {b}"
            )));
        }
    }
    let right = upsilon_t * v;
    let right = r_tx_sqrt * right;
    let right = b * right;
    let right = r_rx_sqrt * right;
    let right = upsilon_r * right;
    Ok(u.adjoint() * right * (gain * scale))
}

/// Builds the stacked time-domain channel of a full metasurface link for a
/// given CP phase law: direct terms plus one composite term per RIS segment
/// pair, with summed delays and Dopplers.
pub fn assemble_td_channel(
    system: &MpddSystem,
    paths: &PathSet,
    frame_len: usize,
    cp: CpPhase,
) -> Result<Channel> {
    let upsilon_t = system.tx_sim.cascade();
    let upsilon_r = system.rx_sim.cascade();
    let tx_upa = system.tx_upa();
    let rx_upa = system.rx_upa();
    let m = system.tx_sim.atoms() as f64;
    let m_tilde = system.rx_sim.atoms() as f64;

    let mut terms = Vec::new();
    let p_total = paths.direct.len().max(1) as f64;
    let direct_scale = (m * m_tilde / p_total).sqrt();
    for path in &paths.direct {
        let b_r = arrays::upa_response(&rx_upa, path.angles.azimuth_in, path.angles.elevation_in)?;
        let b_t = arrays::upa_response(&tx_upa, path.angles.azimuth_out, path.angles.elevation_out)?;
        let b = arrays::path_outer_product(&b_r, &b_t);
        let gain = path_gain_matrix(
            path.gain,
            direct_scale,
            &system.u,
            &upsilon_r,
            &system.r_rx_sqrt,
            &b,
            &system.r_tx_sqrt,
            &upsilon_t,
            &system.v,
        )?;
        let block = PathBlock::new(frame_len, path.delay_taps, path.doppler_cycles, &cp)?;
        terms.push(ChannelTerm {
            gain,
            block: TermBlock::Shift(block),
        });
    }

    if paths.ris.len() > system.ris.len() {
        return Err(Error::Dimension(format!(
            "path set references {} RIS but the system has {}",
            paths.ris.len(),
            system.ris.len()
        )));
    }
    for (k, group) in paths.ris.iter().enumerate() {
        let surface = &system.ris[k];
        let j = surface.atoms() as f64;
        let phi = surface.phase_matrix();
        let p_bar = group.rx_paths.len().max(1) as f64;
        let p_tilde = group.tx_paths.len().max(1) as f64;
        let scale = j * (m_tilde * m / (p_bar * p_tilde)).sqrt();
        for rx_path in &group.rx_paths {
            let b_rx = {
                let b_r = arrays::upa_response(
                    &rx_upa,
                    rx_path.angles.azimuth_in,
                    rx_path.angles.elevation_in,
                )?;
                let b_t = arrays::upa_response(
                    &surface.upa,
                    rx_path.angles.azimuth_out,
                    rx_path.angles.elevation_out,
                )?;
                arrays::path_outer_product(&b_r, &b_t)
            };
            for tx_path in &group.tx_paths {
                let b_tx = {
                    let b_r = arrays::upa_response(
                        &surface.upa,
                        tx_path.angles.azimuth_in,
                        tx_path.angles.elevation_in,
                    )?;
                    let b_t = arrays::upa_response(
                        &tx_upa,
                        tx_path.angles.azimuth_out,
                        tx_path.angles.elevation_out,
                    )?;
                    arrays::path_outer_product(&b_r, &b_t)
                };
                let composite = &b_rx * &phi * &b_tx;
                let gain = path_gain_matrix(
                    rx_path.gain * tx_path.gain,
                    scale,
                    &system.u,
                    &upsilon_r,
                    &system.r_rx_sqrt,
                    &composite,
                    &system.r_tx_sqrt,
                    &upsilon_t,
                    &system.v,
                )?;
                let block = PathBlock::new(
                    frame_len,
                    rx_path.delay_taps + tx_path.delay_taps,
                    rx_path.doppler_cycles + tx_path.doppler_cycles,
                    &cp,
                )?;
                terms.push(ChannelTerm {
                    gain,
                    block: TermBlock::Shift(block),
                });
            }
        }
    }

    Ok(Channel {
        frame_len,
        rx_streams: system.rx_streams(),
        tx_streams: system.d_s,
        cp,
        domain: SignalDomain::Time,
        terms,
    })
}

/// Plain multi-antenna link without metasurfaces: rank-1 ULA outer products
/// scaled by `√(N_T·N_R/P)`.
pub struct ConventionalSystem {
    pub tx_ula: UlaGeometry,
    pub rx_ula: UlaGeometry,
    pub v: DMatrix<C64>,
    pub u: DMatrix<C64>,
}

impl ConventionalSystem {
    /// Identity beamformers: `d_s` columns on the transmit side, all
    /// receive antennas kept as observations.
    pub fn identity(tx_ula: UlaGeometry, rx_ula: UlaGeometry, d_s: usize) -> Result<Self> {
        let n_t = tx_ula.elements;
        let n_r = rx_ula.elements;
        if d_s == 0 || d_s > n_t {
            return Err(Error::InvalidInput(format!(
                "stream count {d_s} must lie in 1..=N_T ({n_t})"
            )));
        }
        let v = DMatrix::from_fn(n_t, d_s, |i, j| {
            if i == j {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let u = DMatrix::identity(n_r, n_r);
        Ok(Self {
            tx_ula,
            rx_ula,
            v,
            u,
        })
    }
}

/// Stacked channel of the conventional (no SIM, no RIS) link. The 2D array
/// angles are the elevation pair of each path.
pub fn conventional_mimo_channel(
    system: &ConventionalSystem,
    paths: &PathSet,
    frame_len: usize,
    cp: CpPhase,
) -> Result<Channel> {
    if !paths.ris.is_empty() {
        return Err(Error::InvalidInput(
            "the conventional model has no surfaces to host RIS paths".into(),
        ));
    }
    let n_t = system.tx_ula.elements as f64;
    let n_r = system.rx_ula.elements as f64;
    let p_total = paths.direct.len().max(1) as f64;
    let scale = (n_t * n_r / p_total).sqrt();
    let mut terms = Vec::new();
    for path in &paths.direct {
        let a_r = arrays::ula_response(&system.rx_ula, path.angles.elevation_in)?;
        let a_t = arrays::ula_response(&system.tx_ula, path.angles.elevation_out)?;
        let spatial = arrays::path_outer_product(&a_r, &a_t);
        let gain = system.u.adjoint() * &spatial * &system.v * (path.gain * scale);
        let block = PathBlock::new(frame_len, path.delay_taps, path.doppler_cycles, &cp)?;
        terms.push(ChannelTerm {
            gain,
            block: TermBlock::Shift(block),
        });
    }
    Ok(Channel {
        frame_len,
        rx_streams: system.u.ncols(),
        tx_streams: system.v.ncols(),
        cp,
        domain: SignalDomain::Time,
        terms,
    })
}
