//! Metasurface responses: reflective surfaces (RIS), stacked transmissive
//! layers (SIM), their Rayleigh-Sommerfeld diffraction matrices and the
//! spatial correlation of sub-wavelength atom grids.
//!
//! Geometry convention: each layer carries a centered `mx × mz` rectangular
//! grid of meta-atoms in the x–z plane; layers stack along y at a uniform
//! gap; the antenna ULA is centered on and coaxial with the grid, spaced at
//! λ/2 along x. All diffraction matrices are computed once per geometry and
//! cached, while the phase layers are rebuilt from the phase vectors on
//! every use — phases are the optimization variables, geometry is static.

use nalgebra::{DMatrix, DVector};

use crate::{C64, Error, Result};

/// `sin(πa)/(πa)` with the removable singularity at zero filled in.
pub fn sinc(a: f64) -> f64 {
    if a == 0.0 {
        1.0
    } else {
        let x = std::f64::consts::PI * a;
        x.sin() / x
    }
}

fn unit_modulus_diag(phases: &[f64]) -> DMatrix<C64> {
    DMatrix::from_fn(phases.len(), phases.len(), |i, j| {
        if i == j {
            C64::from_polar(1.0, phases[i])
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Diagonal reflection matrix `diag(e^{jφ_1}, …, e^{jφ_J})` of one RIS.
pub fn ris_phase_matrix(phases: &[f64]) -> DMatrix<C64> {
    unit_modulus_diag(phases)
}

/// Diagonal transmission matrix of one SIM layer; same unit-modulus contract
/// as [`ris_phase_matrix`] with dimension equal to the atoms per layer.
pub fn sim_layer_matrix(phases: &[f64]) -> DMatrix<C64> {
    unit_modulus_diag(phases)
}

/// Rayleigh-Sommerfeld diffraction coefficient between two points:
/// `(ρ·cos ε / d) · (1/(2πd) − j/λ) · exp(j2πd/λ)`.
pub fn diffraction_coefficient(
    atom_area_m2: f64,
    epsilon: f64,
    distance_m: f64,
    wavelength_m: f64,
) -> Result<C64> {
    if !(distance_m > 0.0) {
        return Err(Error::Geometry(format!(
            "diffraction requires a positive propagation distance, got {distance_m}"
        )));
    }
    let amp = atom_area_m2 * epsilon.cos() / distance_m;
    let kernel = C64::new(
        1.0 / (2.0 * std::f64::consts::PI * distance_m),
        -1.0 / wavelength_m,
    );
    let phase = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * distance_m / wavelength_m);
    Ok(amp * kernel * phase)
}

/// A cached transmission matrix together with the link geometry it came from.
#[derive(Debug, Clone)]
pub struct DiffractionMatrix {
    pub entries: DMatrix<C64>,
    pub distances_m: DMatrix<f64>,
    pub angles: DMatrix<f64>,
}

/// Static description of one SIM: layer count, per-layer atom grid and the
/// distances that fix its diffraction matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SimGeometry {
    pub layers: usize,
    pub mx: usize,
    pub mz: usize,
    pub atom_spacing_wavelengths: f64,
    pub layer_spacing_wavelengths: f64,
    /// Gap between the antenna array and the innermost layer. The reference
    /// setup only states "very close"; one layer gap is the default.
    pub antenna_gap_wavelengths: f64,
    pub wavelength_m: f64,
    pub atom_area_m2: f64,
    pub antennas: usize,
    /// Treat every link as normally incident (cos ε = 1), matching the
    /// aligned-array setup of the reference experiments. Distances stay
    /// exact either way.
    pub normal_incidence: bool,
}

impl SimGeometry {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        layers: usize,
        mx: usize,
        mz: usize,
        atom_spacing_wavelengths: f64,
        layer_spacing_wavelengths: f64,
        antenna_gap_wavelengths: f64,
        wavelength_m: f64,
        antennas: usize,
        normal_incidence: bool,
    ) -> Result<Self> {
        if layers == 0 || mx == 0 || mz == 0 || antennas == 0 {
            return Err(Error::InvalidInput(
                "SIM needs at least one layer, one atom and one antenna".into(),
            ));
        }
        if !(atom_spacing_wavelengths > 0.0)
            || !(layer_spacing_wavelengths > 0.0)
            || !(antenna_gap_wavelengths > 0.0)
            || !(wavelength_m > 0.0)
        {
            return Err(Error::InvalidInput("SIM spacings must be positive".into()));
        }
        Ok(Self {
            layers,
            mx,
            mz,
            atom_spacing_wavelengths,
            layer_spacing_wavelengths,
            antenna_gap_wavelengths,
            wavelength_m,
            atom_area_m2: wavelength_m * wavelength_m / 4.0,
            antennas,
            normal_incidence,
        })
    }

    pub fn atoms(&self) -> usize {
        self.mx * self.mz
    }

    /// Centered grid coordinates (x, z) of every atom in meters, x-major.
    pub fn atom_positions(&self) -> Vec<[f64; 2]> {
        let s = self.atom_spacing_wavelengths * self.wavelength_m;
        let cx = (self.mx as f64 - 1.0) / 2.0;
        let cz = (self.mz as f64 - 1.0) / 2.0;
        let mut out = Vec::with_capacity(self.atoms());
        for ix in 0..self.mx {
            for iz in 0..self.mz {
                out.push([(ix as f64 - cx) * s, (iz as f64 - cz) * s]);
            }
        }
        out
    }

    /// Centered λ/2 ULA coordinates along x in meters.
    pub fn antenna_positions(&self) -> Vec<f64> {
        let s = self.wavelength_m / 2.0;
        let c = (self.antennas as f64 - 1.0) / 2.0;
        (0..self.antennas).map(|a| (a as f64 - c) * s).collect()
    }

    /// The outermost layer seen as a UPA, the aperture the channel couples to.
    pub fn upa_geometry(&self) -> UpaGeometryView {
        UpaGeometryView {
            nx: self.mx,
            nz: self.mz,
            dx_wavelengths: self.atom_spacing_wavelengths,
            dz_wavelengths: self.atom_spacing_wavelengths,
            wavelength_m: self.wavelength_m,
        }
    }

    fn link_epsilon(&self, axial_gap: f64, distance: f64) -> f64 {
        if self.normal_incidence {
            0.0
        } else {
            (axial_gap / distance).clamp(-1.0, 1.0).acos()
        }
    }
}

/// Alias so callers can feed [`crate::arrays::upa_response`] directly.
pub type UpaGeometryView = crate::arrays::UpaGeometry;

/// Transmission matrix between two adjacent layers of a stack (entry
/// `(m, m')` couples atom `m'` on the nearer layer to atom `m` on the
/// farther one). Uniform layer spacing makes this matrix identical for
/// every adjacent pair, so it is computed once.
pub fn inter_layer_matrix(geom: &SimGeometry) -> Result<DiffractionMatrix> {
    let atoms = geom.atoms();
    let pos = geom.atom_positions();
    let gap = geom.layer_spacing_wavelengths * geom.wavelength_m;
    let mut entries = DMatrix::zeros(atoms, atoms);
    let mut distances = DMatrix::zeros(atoms, atoms);
    let mut angles = DMatrix::zeros(atoms, atoms);
    for m in 0..atoms {
        for mp in 0..atoms {
            let dx = pos[m][0] - pos[mp][0];
            let dz = pos[m][1] - pos[mp][1];
            let d = (gap * gap + dx * dx + dz * dz).sqrt();
            let eps = geom.link_epsilon(gap, d);
            entries[(m, mp)] =
                diffraction_coefficient(geom.atom_area_m2, eps, d, geom.wavelength_m)?;
            distances[(m, mp)] = d;
            angles[(m, mp)] = eps;
        }
    }
    Ok(DiffractionMatrix {
        entries,
        distances_m: distances,
        angles,
    })
}

/// Indexed variant of [`inter_layer_matrix`] following the 1-based layer
/// numbering: valid for `q ∈ {2, …, Q}`.
pub fn inter_layer_matrix_at(geom: &SimGeometry, q: usize) -> Result<DiffractionMatrix> {
    if q < 2 || q > geom.layers {
        return Err(Error::InvalidInput(format!(
            "inter-layer index {q} outside 2..={}",
            geom.layers
        )));
    }
    inter_layer_matrix(geom)
}

/// Which end of the link a stack sits on; fixes the orientation of its
/// antenna interface matrix and the cascade ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimSide {
    Transmit,
    Receive,
}

/// Transmission matrix between the antenna ULA and the innermost layer:
/// atoms × antennas on the transmit side, antennas × atoms on the receive
/// side.
pub fn antenna_interface_matrix(geom: &SimGeometry, side: SimSide) -> Result<DiffractionMatrix> {
    let atoms = geom.atoms();
    let pos = geom.atom_positions();
    let ants = geom.antenna_positions();
    let gap = geom.antenna_gap_wavelengths * geom.wavelength_m;
    if !(gap > 0.0) {
        return Err(Error::Geometry(
            "antenna array cannot touch the innermost layer".into(),
        ));
    }
    let (rows, cols) = match side {
        SimSide::Transmit => (atoms, geom.antennas),
        SimSide::Receive => (geom.antennas, atoms),
    };
    let mut entries = DMatrix::zeros(rows, cols);
    let mut distances = DMatrix::zeros(rows, cols);
    let mut angles = DMatrix::zeros(rows, cols);
    for m in 0..atoms {
        for (a, &xa) in ants.iter().enumerate() {
            let dx = pos[m][0] - xa;
            let dz = pos[m][1];
            let d = (gap * gap + dx * dx + dz * dz).sqrt();
            let eps = geom.link_epsilon(gap, d);
            let coeff = diffraction_coefficient(geom.atom_area_m2, eps, d, geom.wavelength_m)?;
            let (i, j) = match side {
                SimSide::Transmit => (m, a),
                SimSide::Receive => (a, m),
            };
            entries[(i, j)] = coeff;
            distances[(i, j)] = d;
            angles[(i, j)] = eps;
        }
    }
    Ok(DiffractionMatrix {
        entries,
        distances_m: distances,
        angles,
    })
}

/// Real symmetric correlation matrix of one atom grid plus its principal
/// square root. `sqrt · sqrt` reproduces `clamped` (the PSD projection of
/// `matrix`) rather than `matrix` itself, since sinc correlation matrices
/// can be numerically indefinite at scale.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    pub matrix: DMatrix<f64>,
    pub clamped: DMatrix<f64>,
    pub sqrt: DMatrix<f64>,
}

/// Spatial correlation of a sub-wavelength grid: entry `(m, m')` is
/// `sinc(2·d_{m,m'}/λ)` over in-plane distances.
pub fn correlation_matrix(geom: &SimGeometry) -> Result<CorrelationMatrix> {
    let pos = geom.atom_positions();
    let atoms = geom.atoms();
    let r = DMatrix::from_fn(atoms, atoms, |m, mp| {
        let dx = pos[m][0] - pos[mp][0];
        let dz = pos[m][1] - pos[mp][1];
        let d = (dx * dx + dz * dz).sqrt();
        sinc(2.0 * d / geom.wavelength_m)
    });
    let (sqrt, clamped) = matrix_principal_sqrt(&r)?;
    Ok(CorrelationMatrix {
        matrix: r,
        clamped,
        sqrt,
    })
}

/// Principal square root of a real symmetric matrix with negative
/// eigenvalues clamped to zero. Returns `(sqrt, clamped)` where
/// `sqrt · sqrt == clamped` up to eigensolver accuracy.
pub fn matrix_principal_sqrt(r: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if r.nrows() != r.ncols() {
        return Err(Error::InvalidInput("matrix square root needs a square input".into()));
    }
    let scale = r.amax().max(1.0);
    for i in 0..r.nrows() {
        for j in (i + 1)..r.ncols() {
            if (r[(i, j)] - r[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::InvalidInput(format!(
                    "matrix square root needs a symmetric input; entries ({i},{j}) differ"
                )));
            }
        }
    }
    let eig = nalgebra::SymmetricEigen::new(r.clone());
    let clamped_vals: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    let q = &eig.eigenvectors;
    let rebuild = |vals: &[f64]| -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&DVector::from_row_slice(vals));
        q * d * q.transpose()
    };
    let sqrt_vals: Vec<f64> = clamped_vals.iter().map(|v| v.sqrt()).collect();
    Ok((rebuild(&sqrt_vals), rebuild(&clamped_vals)))
}

/// One SIM instance: static geometry and cached diffraction matrices plus
/// the tunable per-layer phase vectors.
#[derive(Debug, Clone)]
pub struct SimStack {
    pub geom: SimGeometry,
    pub side: SimSide,
    interface: DiffractionMatrix,
    layer_link: DiffractionMatrix,
    correlation: CorrelationMatrix,
    phases: Vec<DVector<f64>>,
}

impl SimStack {
    pub fn new(geom: SimGeometry, side: SimSide) -> Result<Self> {
        let interface = antenna_interface_matrix(&geom, side)?;
        let layer_link = inter_layer_matrix(&geom)?;
        let correlation = correlation_matrix(&geom)?;
        let phases = vec![DVector::zeros(geom.atoms()); geom.layers];
        Ok(Self {
            geom,
            side,
            interface,
            layer_link,
            correlation,
            phases,
        })
    }

    pub fn atoms(&self) -> usize {
        self.geom.atoms()
    }

    pub fn layers(&self) -> usize {
        self.geom.layers
    }

    pub fn interface(&self) -> &DiffractionMatrix {
        &self.interface
    }

    pub fn layer_link(&self) -> &DiffractionMatrix {
        &self.layer_link
    }

    pub fn correlation(&self) -> &CorrelationMatrix {
        &self.correlation
    }

    pub fn phases(&self) -> &[DVector<f64>] {
        &self.phases
    }

    pub fn set_phases(&mut self, phases: Vec<DVector<f64>>) -> Result<()> {
        if phases.len() != self.geom.layers {
            return Err(Error::Dimension(format!(
                "expected {} phase vectors, got {}",
                self.geom.layers,
                phases.len()
            )));
        }
        for (q, v) in phases.iter().enumerate() {
            if v.len() != self.atoms() {
                return Err(Error::Dimension(format!(
                    "layer {} expects {} phases, got {}",
                    q + 1,
                    self.atoms(),
                    v.len()
                )));
            }
            if v.iter().any(|p| !p.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "layer {} contains a non-finite phase",
                    q + 1
                )));
            }
        }
        self.phases = phases;
        Ok(())
    }

    pub fn reset_phases(&mut self) {
        for v in &mut self.phases {
            v.fill(0.0);
        }
    }

    /// Diagonal phase matrix of layer `q` (1-based).
    pub fn phase_matrix(&self, q: usize) -> Result<DMatrix<C64>> {
        if q == 0 || q > self.geom.layers {
            return Err(Error::InvalidInput(format!(
                "layer index {q} outside 1..={}",
                self.geom.layers
            )));
        }
        Ok(sim_layer_matrix(self.phases[q - 1].as_slice()))
    }

    /// End-to-end transfer matrix of the stack under its current phases:
    /// atoms × antennas on the transmit side (phase layers applied after
    /// each propagation step toward the channel), antennas × atoms on the
    /// receive side (outermost phase layer applied first).
    pub fn cascade(&self) -> DMatrix<C64> {
        match self.side {
            SimSide::Transmit => fold_transmit(
                &self.interface.entries,
                &self.layer_link.entries,
                &self.phases,
            ),
            SimSide::Receive => fold_receive(
                &self.interface.entries,
                &self.layer_link.entries,
                &self.phases,
            ),
        }
    }
}

/// Υ = Ψ_Q Γ_Q … Ψ_1 Γ_1 with Γ_1 the antenna interface and every other Γ
/// the same inter-layer link.
fn fold_transmit(
    interface: &DMatrix<C64>,
    link: &DMatrix<C64>,
    phases: &[DVector<f64>],
) -> DMatrix<C64> {
    let mut acc = interface.clone();
    for (q, phase) in phases.iter().enumerate() {
        scale_rows(&mut acc, phase);
        if q + 1 < phases.len() {
            acc = link * acc;
        }
    }
    acc
}

/// Υ = Ξ_1 Δ_1 Ξ_2 Δ_2 … Ξ_Q̃ Δ_Q̃ with Ξ_1 the antenna interface.
fn fold_receive(
    interface: &DMatrix<C64>,
    link: &DMatrix<C64>,
    phases: &[DVector<f64>],
) -> DMatrix<C64> {
    let mut acc = interface.clone();
    for (q, phase) in phases.iter().enumerate() {
        scale_cols(&mut acc, phase);
        if q + 1 < phases.len() {
            acc = &acc * link;
        }
    }
    acc
}

fn scale_rows(m: &mut DMatrix<C64>, phases: &DVector<f64>) {
    for (i, &p) in phases.iter().enumerate() {
        let f = C64::from_polar(1.0, p);
        for j in 0..m.ncols() {
            m[(i, j)] *= f;
        }
    }
}

fn scale_cols(m: &mut DMatrix<C64>, phases: &DVector<f64>) {
    for (j, &p) in phases.iter().enumerate() {
        let f = C64::from_polar(1.0, p);
        for i in 0..m.nrows() {
            m[(i, j)] *= f;
        }
    }
}
