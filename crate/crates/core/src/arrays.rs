//! Deterministic antenna-array responses.
//!
//! Uniform linear arrays (ULA) and uniform planar arrays (UPA) are described
//! by their element counts and spacings in wavelengths. Steering vectors are
//! normalized to unit L2 norm, so the rank-1 per-path response matrix
//! `b_rx * b_tx^H` always has unit Frobenius norm.
//!
//! Conventions: the UPA lies in the x–z plane, elevation is measured from the
//! z-axis (the `cos θ` factor drives the z-axis progression) and azimuth
//! enters through `sin φ sin θ` along x. Element indices start at zero, so
//! the first entry of every steering vector is 1 before normalization.

use nalgebra::{DMatrix, DVector};

use crate::{C64, Error, Result};

/// Uniform linear array along the x-axis.
#[derive(Debug, Clone, PartialEq)]
pub struct UlaGeometry {
    pub elements: usize,
    /// Element spacing in wavelengths (λ/2 unless stated otherwise).
    pub spacing_wavelengths: f64,
    pub wavelength_m: f64,
}

impl UlaGeometry {
    pub fn new(elements: usize, spacing_wavelengths: f64, wavelength_m: f64) -> Result<Self> {
        if elements == 0 {
            return Err(Error::InvalidInput("ULA needs at least one element".into()));
        }
        if !(spacing_wavelengths > 0.0) || !(wavelength_m > 0.0) {
            return Err(Error::InvalidInput(
                "ULA spacing and wavelength must be positive".into(),
            ));
        }
        Ok(Self {
            elements,
            spacing_wavelengths,
            wavelength_m,
        })
    }

    /// λ/2-spaced array, the default throughout.
    pub fn half_wavelength(elements: usize, wavelength_m: f64) -> Result<Self> {
        Self::new(elements, 0.5, wavelength_m)
    }
}

/// Uniform planar array in the x–z plane.
#[derive(Debug, Clone, PartialEq)]
pub struct UpaGeometry {
    pub nx: usize,
    pub nz: usize,
    pub dx_wavelengths: f64,
    pub dz_wavelengths: f64,
    pub wavelength_m: f64,
}

impl UpaGeometry {
    pub fn new(
        nx: usize,
        nz: usize,
        dx_wavelengths: f64,
        dz_wavelengths: f64,
        wavelength_m: f64,
    ) -> Result<Self> {
        if nx == 0 || nz == 0 {
            return Err(Error::InvalidInput("UPA needs at least one element".into()));
        }
        if !(dx_wavelengths > 0.0) || !(dz_wavelengths > 0.0) || !(wavelength_m > 0.0) {
            return Err(Error::InvalidInput(
                "UPA spacings and wavelength must be positive".into(),
            ));
        }
        Ok(Self {
            nx,
            nz,
            dx_wavelengths,
            dz_wavelengths,
            wavelength_m,
        })
    }

    pub fn half_wavelength(nx: usize, nz: usize, wavelength_m: f64) -> Result<Self> {
        Self::new(nx, nz, 0.5, 0.5, wavelength_m)
    }

    /// Total element count.
    pub fn elements(&self) -> usize {
        self.nx * self.nz
    }
}

/// Azimuth/elevation pairs for the incoming and outgoing legs of one path.
///
/// For 2D ULA use only the elevation pair is consumed, drawn on `[0, π]`;
/// 3D azimuths live on `[−π/2, π/2]`. Beyond finiteness no range policing is
/// applied, since the steering vectors are well defined for any real angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathAngles {
    pub azimuth_in: f64,
    pub elevation_in: f64,
    pub azimuth_out: f64,
    pub elevation_out: f64,
}

impl PathAngles {
    pub fn broadside() -> Self {
        Self {
            azimuth_in: 0.0,
            elevation_in: std::f64::consts::FRAC_PI_2,
            azimuth_out: 0.0,
            elevation_out: std::f64::consts::FRAC_PI_2,
        }
    }
}

fn check_finite(value: f64, what: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} must be finite, got {value}")))
    }
}

/// ULA steering vector: entry `a` is `exp(−j·2π·a·d·sin φ / λ) / √A`.
pub fn ula_response(geometry: &UlaGeometry, phi: f64) -> Result<DVector<C64>> {
    check_finite(phi, "ULA angle")?;
    let a = geometry.elements;
    let norm = 1.0 / (a as f64).sqrt();
    let step = -2.0 * std::f64::consts::PI * geometry.spacing_wavelengths * phi.sin();
    Ok(DVector::from_fn(a, |i, _| {
        norm * C64::from_polar(1.0, step * i as f64)
    }))
}

/// UPA steering vector: normalized Kronecker product of the x-axis and
/// z-axis progressions, x-major (index = ix·nz + iz).
pub fn upa_response(geometry: &UpaGeometry, phi: f64, theta: f64) -> Result<DVector<C64>> {
    check_finite(phi, "UPA azimuth")?;
    check_finite(theta, "UPA elevation")?;
    let step_x = -2.0 * std::f64::consts::PI * geometry.dx_wavelengths * phi.sin() * theta.sin();
    let step_z = -2.0 * std::f64::consts::PI * geometry.dz_wavelengths * theta.cos();
    let norm = 1.0 / (geometry.elements() as f64).sqrt();
    let nz = geometry.nz;
    Ok(DVector::from_fn(geometry.elements(), |i, _| {
        let ix = (i / nz) as f64;
        let iz = (i % nz) as f64;
        norm * C64::from_polar(1.0, step_x * ix + step_z * iz)
    }))
}

/// Rank-1 per-path response matrix `b_rx · b_tx^H`.
///
/// With unit-norm inputs the result has unit Frobenius norm and exactly one
/// nonzero singular value.
pub fn path_outer_product(rx: &DVector<C64>, tx: &DVector<C64>) -> DMatrix<C64> {
    rx * tx.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};

    fn assert_vec_close(actual: &DVector<C64>, expected: &[C64], tol: f64) {
        assert_eq!(actual.len(), expected.len());
        for (i, (a, e)) in actual.iter().zip(expected).enumerate() {
            assert!(
                (a - e).norm() < tol,
                "entry {i}: got {a}, expected {e}"
            );
        }
    }

    #[test]
    fn ula_broadside_is_uniform() {
        let geom = UlaGeometry::half_wavelength(2, 1.0).unwrap();
        let v = ula_response(&geom, 0.0).unwrap();
        let s = 1.0 / 2.0_f64.sqrt();
        assert_vec_close(&v, &[C64::new(s, 0.0), C64::new(s, 0.0)], 1e-12);
    }

    #[test]
    fn ula_endfire_alternates_sign() {
        let geom = UlaGeometry::half_wavelength(2, 1.0).unwrap();
        let v = ula_response(&geom, FRAC_PI_2).unwrap();
        let s = 1.0 / 2.0_f64.sqrt();
        assert_vec_close(&v, &[C64::new(s, 0.0), C64::new(-s, 0.0)], 1e-12);
    }

    #[test]
    fn ula_quarter_turn_phase_progression() {
        // sin(π/6) = 1/2 with λ/2 spacing gives a −π/2 step per element.
        let geom = UlaGeometry::half_wavelength(4, 1.0).unwrap();
        let v = ula_response(&geom, FRAC_PI_6).unwrap();
        let expected: Vec<C64> = (0..4)
            .map(|a| 0.5 * C64::from_polar(1.0, -FRAC_PI_2 * a as f64))
            .collect();
        assert_vec_close(&v, &expected, 1e-12);
    }

    #[test]
    fn ula_rejects_non_finite_angle() {
        let geom = UlaGeometry::half_wavelength(4, 1.0).unwrap();
        assert!(matches!(
            ula_response(&geom, f64::NAN),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn upa_single_element_is_unity() {
        let geom = UpaGeometry::half_wavelength(1, 1, 1.0).unwrap();
        let v = upa_response(&geom, 0.3, 1.1).unwrap();
        assert_vec_close(&v, &[C64::new(1.0, 0.0)], 1e-12);
    }

    #[test]
    fn upa_row_at_broadside_elevation() {
        let geom = UpaGeometry::half_wavelength(2, 1, 1.0).unwrap();
        let v = upa_response(&geom, 0.0, FRAC_PI_2).unwrap();
        let s = 1.0 / 2.0_f64.sqrt();
        assert_vec_close(&v, &[C64::new(s, 0.0), C64::new(s, 0.0)], 1e-12);
    }

    #[test]
    fn upa_two_by_two_kronecker_ordering() {
        // φ = θ = π/2: sin φ sin θ = 1 (x-step −π), cos θ = 0 (z-step 0).
        let geom = UpaGeometry::half_wavelength(2, 2, 1.0).unwrap();
        let v = upa_response(&geom, FRAC_PI_2, FRAC_PI_2).unwrap();
        let q = 0.5;
        assert_vec_close(
            &v,
            &[
                C64::new(q, 0.0),
                C64::new(q, 0.0),
                C64::new(-q, 0.0),
                C64::new(-q, 0.0),
            ],
            1e-12,
        );
    }

    #[test]
    fn upa_rejects_non_finite_angles() {
        let geom = UpaGeometry::half_wavelength(2, 2, 1.0).unwrap();
        assert!(upa_response(&geom, f64::INFINITY, 0.0).is_err());
        assert!(upa_response(&geom, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn steering_vectors_have_unit_norm() {
        let ula = UlaGeometry::half_wavelength(7, 1.0).unwrap();
        let upa = UpaGeometry::half_wavelength(3, 5, 1.0).unwrap();
        for k in 0..20 {
            let phi = -1.5 + 0.15 * k as f64;
            let theta = 0.1 + 0.15 * k as f64;
            assert_abs_diff_eq!(
                ula_response(&ula, phi).unwrap().norm(),
                1.0,
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                upa_response(&upa, phi, theta).unwrap().norm(),
                1.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn ula_equals_flat_upa() {
        // A UPA with a single z row at θ = π/2 degenerates to the ULA.
        let ula = UlaGeometry::new(5, 0.4, 1.0).unwrap();
        let upa = UpaGeometry::new(5, 1, 0.4, 0.7, 1.0).unwrap();
        for k in 0..10 {
            let phi = -1.4 + 0.3 * k as f64;
            let a = ula_response(&ula, phi).unwrap();
            let b = upa_response(&upa, phi, FRAC_PI_2).unwrap();
            for i in 0..5 {
                assert!((a[i] - b[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn outer_product_of_scalars() {
        let one = DVector::from_element(1, C64::new(1.0, 0.0));
        let b = path_outer_product(&one, &one);
        assert_eq!(b.nrows(), 1);
        assert!((b[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn outer_product_is_rank_one_with_unit_frobenius_norm() {
        let geom = UpaGeometry::half_wavelength(3, 3, 1.0).unwrap();
        for k in 0..10 {
            let rx = upa_response(&geom, 0.2 * k as f64 - 1.0, 0.3 + 0.2 * k as f64).unwrap();
            let tx = upa_response(&geom, 0.9 - 0.2 * k as f64, 1.9 - 0.1 * k as f64).unwrap();
            let b = path_outer_product(&rx, &tx);
            assert_abs_diff_eq!(b.norm(), 1.0, epsilon = 1e-12);
            let svd = b.svd(false, false);
            let mut sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
            sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert_abs_diff_eq!(sv[0], 1.0, epsilon = 1e-12);
            assert!(sv[1] < 1e-12, "second singular value {}", sv[1]);
        }
    }

    #[test]
    fn orthonormal_inputs_give_orthonormal_outer_factors() {
        // Orthonormal pair: singular values {1, 0}.
        let e0 = DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let e1 = DVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
        let b = path_outer_product(&e0, &e1);
        let svd = b.svd(false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((sv[0] - 1.0).abs() < 1e-12 && sv[1] < 1e-15);
    }
}
