//! Crystal frame geometry.
//!
//! x, y, z are the cubic ⟨100⟩ axes of the diamond. A field is written either
//! as a Cartesian [`Vec3`] or as a [`SphericalField`] where θ is the latitude
//! (angle between the vector and the yz-plane, positive towards +x) and φ the
//! longitude of the yz-projection measured from +y towards +z:
//!
//! ```text
//! x = B sin θ,  y = B cos θ cos φ,  z = B cos θ sin φ
//! ```
//!
//! The functions here are unit-agnostic; the rest of the crate feeds them mT.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Field magnitude plus latitude/longitude angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalField {
    pub b_m: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
}

impl SphericalField {
    pub fn new(b_m: f64, theta_deg: f64, phi_deg: f64) -> Result<Self> {
        if !(b_m.is_finite() && theta_deg.is_finite() && phi_deg.is_finite()) {
            return Err(Error::NonFinite("spherical field".into()));
        }
        if b_m < 0.0 {
            return Err(Error::InvalidParameter(format!("b_m = {b_m} < 0")));
        }
        if !(-90.0..=90.0).contains(&theta_deg) {
            return Err(Error::InvalidParameter(format!(
                "theta = {theta_deg} outside [-90, 90]"
            )));
        }
        Ok(Self {
            b_m,
            theta_deg,
            phi_deg: wrap_degrees(phi_deg),
        })
    }

    /// True for the zero field, where both angles are conventional zeros.
    pub fn is_degenerate(&self) -> bool {
        self.b_m == 0.0
    }

    pub fn to_cartesian(&self) -> Vec3 {
        spherical_to_cartesian(self)
    }
}

/// Wraps an angle into (−180°, 180°].
pub fn wrap_degrees(deg: f64) -> f64 {
    let mut w = deg.rem_euclid(360.0);
    if w > 180.0 {
        w -= 360.0;
    }
    w
}

pub fn spherical_to_cartesian(s: &SphericalField) -> Vec3 {
    let (st, ct) = s.theta_deg.to_radians().sin_cos();
    let (sp, cp) = s.phi_deg.to_radians().sin_cos();
    Vec3::new(s.b_m * st, s.b_m * ct * cp, s.b_m * ct * sp)
}

/// Inverse of [`spherical_to_cartesian`]. The zero vector maps to
/// `(0, 0°, 0°)`; check [`SphericalField::is_degenerate`].
pub fn cartesian_to_spherical(v: &Vec3) -> SphericalField {
    let b_m = v.norm();
    if b_m == 0.0 {
        return SphericalField {
            b_m: 0.0,
            theta_deg: 0.0,
            phi_deg: 0.0,
        };
    }
    let rho = v.y.hypot(v.z);
    let theta = v.x.atan2(rho).to_degrees();
    let phi = if rho == 0.0 {
        0.0
    } else {
        wrap_degrees(v.z.atan2(v.y).to_degrees())
    };
    SphericalField {
        b_m,
        theta_deg: theta,
        phi_deg: phi,
    }
}

/// The four NV symmetry axes of a diamond crystal, labeled 1..4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NvAxisSet {
    pub axes: [Vec3; 4],
}

impl NvAxisSet {
    pub fn axis(&self, label: usize) -> Option<&Vec3> {
        label.checked_sub(1).and_then(|i| self.axes.get(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec3> {
        self.axes.iter()
    }
}

/// `(1,1,1)/√3, (1,−1,−1)/√3, (−1,1,−1)/√3, (−1,−1,1)/√3`.
pub fn nv_axes() -> NvAxisSet {
    let s = 1.0 / 3f64.sqrt();
    NvAxisSet {
        axes: [
            Vec3::new(s, s, s),
            Vec3::new(s, -s, -s),
            Vec3::new(-s, s, -s),
            Vec3::new(-s, -s, s),
        ],
    }
}

/// Longitudinal and transverse parts of a field with respect to one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Signed component along the axis.
    pub parallel: f64,
    /// Magnitude of the component perpendicular to the axis.
    pub perp: f64,
}

/// `axis` must be a unit vector.
pub fn project_field(axis: &Vec3, b: &Vec3) -> Projection {
    let parallel = b.dot(axis);
    let perp = (b - axis * parallel).norm();
    Projection { parallel, perp }
}

/// Proper rotation taking lab-frame vectors into the crystal frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRotation(Matrix3<f64>);

impl FrameRotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Rows of `m` are the lab axes expressed in crystal coordinates.
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        if !err.is_finite() || err > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "rotation is not orthonormal (deviation {err:.3e})"
            )));
        }
        if m.determinant() < 0.0 {
            return Err(Error::InvalidParameter("rotation has determinant -1".into()));
        }
        Ok(Self(m))
    }

    pub fn from_row_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 9 {
            return Err(Error::InvalidParameter(format!(
                "rotation needs 9 entries, got {}",
                v.len()
            )));
        }
        Self::new(Matrix3::from_row_slice(v))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn lab_to_crystal(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn crystal_to_lab(&self, v: &Vec3) -> Vec3 {
        self.0.transpose() * v
    }
}

impl Default for FrameRotation {
    fn default() -> Self {
        Self::identity()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &Vec3, b: &Vec3, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn spherical_examples() {
        let v = spherical_to_cartesian(&SphericalField::new(1.0, 90.0, 37.0).unwrap());
        assert!(close(&v, &Vec3::new(1.0, 0.0, 0.0), 1e-15));
        let v = spherical_to_cartesian(&SphericalField::new(1.0, 0.0, 0.0).unwrap());
        assert!(close(&v, &Vec3::new(0.0, 1.0, 0.0), 1e-15));
    }

    #[test]
    fn halbach_point_components() {
        // independent evaluation of x = B sinθ, y = B cosθ cosφ, z = B cosθ sinφ
        let b = 104.5;
        let (t, p) = (35.46f64.to_radians(), (-2.43f64).to_radians());
        let expect = Vec3::new(b * t.sin(), b * t.cos() * p.cos(), b * t.cos() * p.sin());
        let v = spherical_to_cartesian(&SphericalField::new(b, 35.46, -2.43).unwrap());
        assert!(close(&v, &expect, 1e-12));
        assert!((v.norm() - b).abs() <= 1e-12 * b);
        assert!(v.x > 60.0 && v.y > 85.0 && v.z < 0.0);
    }

    #[test]
    fn cartesian_examples() {
        let s = cartesian_to_spherical(&Vec3::new(1.0, 0.0, 0.0));
        assert_eq!((s.b_m, s.theta_deg, s.phi_deg), (1.0, 90.0, 0.0));
        let s = cartesian_to_spherical(&Vec3::new(0.0, 0.0, 1.0));
        assert!((s.b_m - 1.0).abs() < 1e-15);
        assert!(s.theta_deg.abs() < 1e-12);
        assert!((s.phi_deg - 90.0).abs() < 1e-12);
    }

    #[test]
    fn zero_vector_is_degenerate() {
        let s = cartesian_to_spherical(&Vec3::zeros());
        assert!(s.is_degenerate());
        assert_eq!((s.theta_deg, s.phi_deg), (0.0, 0.0));
    }

    #[test]
    fn phi_range_is_half_open() {
        let s = cartesian_to_spherical(&Vec3::new(0.0, -1.0, 0.0));
        assert_eq!(s.phi_deg, 180.0);
        let s = cartesian_to_spherical(&Vec3::new(0.0, -1.0, -0.0));
        assert_eq!(s.phi_deg, 180.0);
        assert_eq!(wrap_degrees(-180.0), 180.0);
        assert_eq!(wrap_degrees(540.0), 180.0);
    }

    #[test]
    fn rejects_invalid_spherical() {
        assert!(SphericalField::new(-1.0, 0.0, 0.0).is_err());
        assert!(SphericalField::new(1.0, 91.0, 0.0).is_err());
        assert!(SphericalField::new(f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn axes_are_tetrahedral() {
        let set = nv_axes();
        let sum: Vec3 = set.iter().sum();
        assert!(sum.norm() < 1e-15);
        for (i, a) in set.iter().enumerate() {
            assert!((a.norm() - 1.0).abs() < 1e-12);
            for b in set.axes.iter().skip(i + 1) {
                assert!((a.dot(b) + 1.0 / 3.0).abs() < 1e-12);
            }
        }
        assert!((set.axis(1).unwrap().dot(set.axis(2).unwrap()) + 1.0 / 3.0).abs() < 1e-12);
        assert!(set.axis(0).is_none() && set.axis(5).is_none());
    }

    #[test]
    fn projection_examples() {
        let b = Vec3::new(3.0, -1.0, 2.0);
        let p = project_field(&b.normalize(), &b);
        assert!((p.parallel - b.norm()).abs() < 1e-12);
        assert!(p.perp < 1e-12);

        let axis = nv_axes().axes[0];
        let perp = Vec3::new(1.0, -1.0, 0.0) * 5.0;
        let p = project_field(&axis, &perp);
        assert!(p.parallel.abs() < 1e-12);
        assert!((p.perp - perp.norm()).abs() < 1e-12);

        // along [100] every axis sees |b|/√3
        let b = Vec3::new(2.0, 0.0, 0.0);
        for a in nv_axes().iter() {
            let p = project_field(a, &b);
            assert!((p.parallel.abs() - 2.0 / 3f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_along_axis_one() {
        let set = nv_axes();
        let b = set.axes[0] * 7.0;
        let p1 = project_field(&set.axes[0], &b);
        assert!(p1.perp < 1e-12);
        let others: Vec<_> = set.axes[1..].iter().map(|a| project_field(a, &b)).collect();
        for p in &others[1..] {
            assert!((p.parallel.abs() - others[0].parallel.abs()).abs() < 1e-12);
            assert!((p.perp - others[0].perp).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_validation() {
        assert!(FrameRotation::from_row_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).is_ok());
        assert!(FrameRotation::from_row_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0]).is_err());
        assert!(FrameRotation::from_row_slice(&[2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).is_err());
        let r = FrameRotation::from_row_slice(&[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let v = Vec3::new(1.0, 2.0, 3.0);
        assert!(close(&r.crystal_to_lab(&r.lab_to_crystal(&v)), &v, 1e-15));
    }

    proptest! {
        #[test]
        fn round_trip(x in -200.0..200.0f64, y in -200.0..200.0f64, z in -200.0..200.0f64) {
            let v = Vec3::new(x, y, z);
            prop_assume!(v.norm() > 1e-6);
            let back = spherical_to_cartesian(&cartesian_to_spherical(&v));
            prop_assert!((back - v).norm() <= 1e-10 * v.norm());
        }

        #[test]
        fn pythagoras(x in -200.0..200.0f64, y in -200.0..200.0f64, z in -200.0..200.0f64, k in 0usize..4) {
            let b = Vec3::new(x, y, z);
            let p = project_field(&nv_axes().axes[k], &b);
            let lhs = p.parallel * p.parallel + p.perp * p.perp;
            prop_assert!((lhs - b.norm_squared()).abs() <= 1e-12 * b.norm_squared().max(1e-300));
        }

        #[test]
        fn spherical_norm(b in 0.0..500.0f64, t in -90.0..=90.0f64, p in -180.0..180.0f64) {
            let v = spherical_to_cartesian(&SphericalField::new(b, t, p).unwrap());
            prop_assert!((v.norm() - b).abs() <= 1e-12 * b.max(1.0));
        }
    }
}
