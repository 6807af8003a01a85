//! OFDM, OTFS and AFDM framing over a shared delay-Doppler channel.
//!
//! All three waveforms are unitary relabelings of the same time-domain
//! frame: modulation applies `T^H` per stream and demodulation applies `T`,
//! where `T` is the DFT (OFDM), a column-wise DFT across the Doppler axis
//! (OTFS, `F_{K'} ⊗ I_K`), or the discrete affine Fourier transform
//! `Λ_2 F Λ_1` (AFDM). Pushing a time-domain channel through the same
//! sandwich, block by block, yields each waveform's effective channel
//! `Σ Ȟ_p ⊗ (T·G_p·T^H)` without touching the spatial factors.
//!
//! Because every transform is unitary, effective channels inherit the
//! time-domain Frobenius norm and singular values, and demodulated AWGN
//! keeps its statistics.

use nalgebra::{DMatrix, DVector};

use crate::channel::{Channel, CpPhase, SignalDomain, TermBlock};
use crate::{C64, Error, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Which waveform a frame uses, with its shape parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrameKind {
    Ofdm,
    /// Delay-Doppler grid of `rows × cols` symbols with `rows · cols = N`.
    Otfs { rows: usize, cols: usize },
    /// Chirp parameters in cycles; `c1` is tied to the Doppler spread,
    /// `c2` is free.
    Afdm { c1: f64, c2: f64 },
}

impl FrameKind {
    pub fn label(&self) -> &'static str {
        match self {
            FrameKind::Ofdm => "ofdm",
            FrameKind::Otfs { .. } => "otfs",
            FrameKind::Afdm { .. } => "afdm",
        }
    }
}

/// One frame configuration: waveform, frame length, stream count and
/// per-symbol energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSpec {
    pub kind: FrameKind,
    pub frame_len: usize,
    pub streams: usize,
    pub symbol_energy: f64,
}

impl FrameSpec {
    pub fn new(kind: FrameKind, frame_len: usize, streams: usize, symbol_energy: f64) -> Result<Self> {
        if frame_len == 0 || streams == 0 {
            return Err(Error::InvalidInput(
                "frame needs a positive length and stream count".into(),
            ));
        }
        if !(symbol_energy > 0.0) {
            return Err(Error::InvalidInput("symbol energy must be positive".into()));
        }
        if let FrameKind::Otfs { rows, cols } = kind {
            if rows * cols != frame_len {
                return Err(Error::InvalidInput(format!(
                    "OTFS grid {rows}×{cols} does not tile a frame of {frame_len} symbols"
                )));
            }
        }
        if let FrameKind::Afdm { c1, c2 } = kind {
            if !c1.is_finite() || !c2.is_finite() {
                return Err(Error::InvalidInput("AFDM chirps must be finite".into()));
            }
        }
        Ok(Self {
            kind,
            frame_len,
            streams,
            symbol_energy,
        })
    }

    /// The CP phase law this waveform imprints on delayed samples.
    pub fn cp_phase(&self) -> CpPhase {
        match self.kind {
            FrameKind::Afdm { c1, .. } => CpPhase::AfdmChirp { c1 },
            _ => CpPhase::None,
        }
    }
}

/// Normalized DFT matrix: entry `(k, n)` is `exp(−j2πkn/N)/√N`.
pub fn dft_matrix(n: usize) -> DMatrix<C64> {
    let norm = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |k, m| {
        norm * C64::from_polar(1.0, -TWO_PI * (k * m) as f64 / n as f64)
    })
}

/// Diagonal chirp `Λ_c`: entry `n` is `exp(−j2πc·n²)`.
pub fn afdm_lambda(c: f64, n: usize) -> DMatrix<C64> {
    DMatrix::from_diagonal(&DVector::from_fn(n, |m, _| {
        C64::from_polar(1.0, -TWO_PI * c * (m * m) as f64)
    }))
}

/// The unitary map from a time-domain frame to a waveform's decision domain.
#[derive(Debug, Clone)]
pub struct DemodTransform {
    pub matrix: DMatrix<C64>,
}

/// Builds `T` for the given frame: demodulation is `y = T·r`, modulation is
/// `s = T^H·x`.
pub fn demod_transform(spec: &FrameSpec) -> DemodTransform {
    let n = spec.frame_len;
    let matrix = match spec.kind {
        FrameKind::Ofdm => dft_matrix(n),
        FrameKind::Otfs { rows, cols } => dft_matrix(cols).kronecker(&DMatrix::identity(rows, rows)),
        FrameKind::Afdm { c1, c2 } => afdm_lambda(c2, n) * dft_matrix(n) * afdm_lambda(c1, n),
    };
    DemodTransform { matrix }
}

fn per_stream(
    spec: &FrameSpec,
    input: &DVector<C64>,
    op: impl Fn(&DVector<C64>) -> DVector<C64>,
) -> Result<DVector<C64>> {
    let n = spec.frame_len;
    if input.len() != n * spec.streams {
        return Err(Error::Dimension(format!(
            "expected {} samples ({} streams of {}), got {}",
            n * spec.streams,
            spec.streams,
            n,
            input.len()
        )));
    }
    let mut out = DVector::zeros(input.len());
    for u in 0..spec.streams {
        let xu = DVector::from_column_slice(&input.as_slice()[u * n..(u + 1) * n]);
        let yu = op(&xu);
        out.rows_mut(u * n, n).copy_from(&yu);
    }
    Ok(out)
}

/// Symbols → time-domain transmit frame, stream by stream (`s_u = T^H x_u`).
pub fn modulate(spec: &FrameSpec, symbols: &DVector<C64>) -> Result<DVector<C64>> {
    let t = demod_transform(spec);
    let th = t.matrix.adjoint();
    per_stream(spec, symbols, |x| &th * x)
}

/// Received time-domain frame → decision-domain observations (`y_v = T r_v`).
pub fn demodulate(spec: &FrameSpec, received: &DVector<C64>) -> Result<DVector<C64>> {
    let t = demod_transform(spec);
    per_stream(spec, received, |r| &t.matrix * r)
}

/// Pushes a time-domain channel through the waveform's transform sandwich,
/// replacing every block `G` with `T·G·T^H` while keeping the spatial gain
/// factors.
pub fn effective_channel(td: &Channel, spec: &FrameSpec) -> Result<Channel> {
    if td.domain != SignalDomain::Time {
        return Err(Error::InvalidInput(
            "effective channel construction starts from a time-domain channel".into(),
        ));
    }
    if td.frame_len != spec.frame_len {
        return Err(Error::Dimension(format!(
            "channel frame length {} does not match the waveform frame length {}",
            td.frame_len, spec.frame_len
        )));
    }
    if td.cp != spec.cp_phase() {
        return Err(Error::InvalidInput(format!(
            "channel was assembled with CP law {:?} but the waveform requires {:?}",
            td.cp,
            spec.cp_phase()
        )));
    }
    if td.terms.is_empty() {
        return Err(Error::InvalidInput(
            "channel carries no per-path decomposition".into(),
        ));
    }
    let t = demod_transform(spec);
    let th = t.matrix.adjoint();
    let mut out = td.clone();
    out.domain = SignalDomain::Decision;
    for term in &mut out.terms {
        let sandwiched = match &term.block {
            TermBlock::Shift(block) => &t.matrix * block.apply_to_matrix(&th),
            TermBlock::Dense(m) => &t.matrix * m * &th,
        };
        term.block = TermBlock::Dense(sandwiched);
    }
    Ok(out)
}

/// Gray-mapped QPSK: bit pair `(b0, b1)` → `c·(1−2b0) + j·c·(1−2b1)` with
/// `c = √(E_S/2)`.
pub fn qpsk_map(bits: &[u8], symbol_energy: f64) -> Result<DVector<C64>> {
    if bits.len() % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "QPSK needs an even bit count, got {}",
            bits.len()
        )));
    }
    if let Some(b) = bits.iter().find(|&&b| b > 1) {
        return Err(Error::InvalidInput(format!("bits must be 0 or 1, got {b}")));
    }
    let c = (symbol_energy / 2.0).sqrt();
    Ok(DVector::from_fn(bits.len() / 2, |k, _| {
        let re = c * (1.0 - 2.0 * bits[2 * k] as f64);
        let im = c * (1.0 - 2.0 * bits[2 * k + 1] as f64);
        C64::new(re, im)
    }))
}

/// Nearest-point QPSK slicing back to bits.
pub fn qpsk_demap(symbols: &DVector<C64>) -> Vec<u8> {
    let mut bits = Vec::with_capacity(symbols.len() * 2);
    for s in symbols.iter() {
        bits.push(if s.re >= 0.0 { 0 } else { 1 });
        bits.push(if s.im >= 0.0 { 0 } else { 1 });
    }
    bits
}
