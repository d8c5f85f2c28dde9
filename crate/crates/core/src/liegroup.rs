//! SE(3) / se(3) kernel.
//!
//! Twists are body-fixed and stored angular block first, `(ω, v)`; wrenches
//! pair with them as `(m, f)`. Every 6×6 operator in this module uses the
//! matching block layout:
//!
//! ```text
//! Ad_C = | R    0 |      ad_X = | ω̂  0 |
//!        | p̂R   R |             | v̂  ω̂ |
//! ```

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

/// Angles below this use Taylor expansions of the Rodrigues coefficients.
const SMALL_ANGLE: f64 = 1e-8;

/// Tolerance for the unit-norm checks on screws.
pub const SCREW_TOLERANCE: f64 = 1e-12;

/// Tolerance for `‖RᵀR − I‖` on poses.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-12;

/// Skew-symmetric cross-product matrix of `v`.
#[inline]
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`], reading the skew part of `m`.
#[inline]
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

macro_rules! six_vector {
    ($name:ident, $first:ident, $second:ident) => {
        #[derive(Clone, Copy, Debug, PartialEq, Default)]
        pub struct $name(pub Vector6<f64>);

        impl $name {
            #[inline]
            pub fn new($first: Vector3<f64>, $second: Vector3<f64>) -> Self {
                Self(Vector6::new(
                    $first.x, $first.y, $first.z, $second.x, $second.y, $second.z,
                ))
            }

            #[inline]
            pub fn zero() -> Self {
                Self(Vector6::zeros())
            }

            #[inline]
            pub fn from_slice(s: &[f64]) -> Self {
                Self(Vector6::from_column_slice(s))
            }

            #[inline]
            pub fn $first(&self) -> Vector3<f64> {
                self.0.fixed_rows::<3>(0).into_owned()
            }

            #[inline]
            pub fn $second(&self) -> Vector3<f64> {
                self.0.fixed_rows::<3>(3).into_owned()
            }

            #[inline]
            pub fn as_vector(&self) -> &Vector6<f64> {
                &self.0
            }

            #[inline]
            pub fn norm(&self) -> f64 {
                self.0.norm()
            }
        }

        impl From<Vector6<f64>> for $name {
            fn from(v: Vector6<f64>) -> Self {
                Self(v)
            }
        }

        impl Add for $name {
            type Output = Self;
            #[inline]
            fn add(self, rhs: Self) -> Self {
                Self(self.0 + rhs.0)
            }
        }

        impl Sub for $name {
            type Output = Self;
            #[inline]
            fn sub(self, rhs: Self) -> Self {
                Self(self.0 - rhs.0)
            }
        }

        impl Neg for $name {
            type Output = Self;
            #[inline]
            fn neg(self) -> Self {
                Self(-self.0)
            }
        }

        impl Mul<f64> for $name {
            type Output = Self;
            #[inline]
            fn mul(self, rhs: f64) -> Self {
                Self(self.0 * rhs)
            }
        }

        impl Mul<$name> for f64 {
            type Output = $name;
            #[inline]
            fn mul(self, rhs: $name) -> $name {
                $name(rhs.0 * self)
            }
        }

        impl AddAssign for $name {
            #[inline]
            fn add_assign(&mut self, rhs: Self) {
                self.0 += rhs.0;
            }
        }

        impl SubAssign for $name {
            #[inline]
            fn sub_assign(&mut self, rhs: Self) {
                self.0 -= rhs.0;
            }
        }
    };
}

six_vector!(Twist, angular, linear);
six_vector!(Wrench, moment, force);

impl Twist {
    /// Matrix of the Lie bracket, `ad(X)·Y = [X, Y]`.
    pub fn ad(&self) -> Matrix6<f64> {
        ad(self)
    }

    /// `ad_self(other)`, the spatial cross product.
    #[inline]
    pub fn bracket(&self, other: &Twist) -> Twist {
        let (w, v) = (self.angular(), self.linear());
        let (w2, v2) = (other.angular(), other.linear());
        Twist::new(w.cross(&w2), w.cross(&v2) + v.cross(&w2))
    }

    /// `ad_selfᵀ · w` without forming the matrix.
    #[inline]
    pub fn ad_transpose_apply(&self, w: &Wrench) -> Wrench {
        let (om, v) = (self.angular(), self.linear());
        let (m, f) = (w.moment(), w.force());
        Wrench::new(m.cross(&om) + f.cross(&v), f.cross(&om))
    }
}

impl Wrench {
    /// Mechanical power `⟨W, V⟩`.
    #[inline]
    pub fn power(&self, twist: &Twist) -> f64 {
        self.0.dot(&twist.0)
    }
}

/// `ad(X)` as a 6×6 matrix.
pub fn ad(x: &Twist) -> Matrix6<f64> {
    let w = hat(&x.angular());
    let v = hat(&x.linear());
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&w);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&v);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&w);
    m
}

/// `ad(X)ᵀ · W`.
pub fn ad_transpose_apply(x: &Twist, w: &Wrench) -> Wrench {
    x.ad_transpose_apply(w)
}

/// Rigid-body pose; an element of SE(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), translation)
    }

    /// `‖RᵀR − I‖_F`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }

    pub fn is_valid(&self) -> bool {
        self.orthonormality_error() <= ORTHONORMAL_TOLERANCE && self.rotation.determinant() > 0.0
    }

    #[inline]
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    #[inline]
    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `A⁻¹·B` without forming the inverse.
    #[inline]
    pub fn inverse_compose(&self, other: &Pose) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt * other.rotation,
            translation: rt * (other.translation - self.translation),
        }
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// The 6×6 twist transformation `Ad_C`.
    pub fn adjoint(&self) -> Matrix6<f64> {
        let r = &self.rotation;
        let pr = hat(&self.translation) * r;
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&pr);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
        m
    }

    /// `Ad_C · V`.
    #[inline]
    pub fn adjoint_apply(&self, v: &Twist) -> Twist {
        let w = self.rotation * v.angular();
        let lin = self.translation.cross(&w) + self.rotation * v.linear();
        Twist::new(w, lin)
    }

    /// `Ad_C⁻¹ · V`.
    #[inline]
    pub fn adjoint_inverse_apply(&self, v: &Twist) -> Twist {
        let rt = self.rotation.transpose();
        let w = v.angular();
        let lin = v.linear() - self.translation.cross(&w);
        Twist::new(rt * w, rt * lin)
    }

    /// `Ad_Cᵀ · W`.
    #[inline]
    pub fn adjoint_transpose_apply(&self, w: &Wrench) -> Wrench {
        let rt = self.rotation.transpose();
        let f = w.force();
        Wrench::new(rt * (w.moment() + f.cross(&self.translation)), rt * f)
    }

    /// Body-frame first-order difference to `target`: `(log(Rᵀ R_t), Rᵀ(p_t − p))`.
    pub fn body_error_to(&self, target: &Pose) -> Twist {
        let rel = self.inverse_compose(target);
        Twist::new(rotation_log(&rel.rotation), rel.translation)
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.translation;
        write!(f, "Pose(t = [{:.6}, {:.6}, {:.6}])", t.x, t.y, t.z)
    }
}

/// Group composition `A·B`.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

/// Group inverse.
pub fn inverse(a: &Pose) -> Pose {
    a.inverse()
}

/// `Ad_C` as a 6×6 matrix.
pub fn adjoint(c: &Pose) -> Matrix6<f64> {
    c.adjoint()
}

/// `Ad_Cᵀ · W`.
pub fn adjoint_transpose_apply(c: &Pose, w: &Wrench) -> Wrench {
    c.adjoint_transpose_apply(w)
}

/// Kind of a joint screw after normalization checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScrewKind {
    Revolute,
    Prismatic,
}

/// A constant joint axis in ray coordinates; either `‖ω‖ = 1` or
/// `ω = 0, ‖v‖ = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Screw {
    twist: Twist,
    kind: ScrewKind,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("screw is neither unit-rotational nor unit-prismatic (|w| = {angular_norm:.3e}, |v| = {linear_norm:.3e})")]
pub struct ScrewNormError {
    pub angular_norm: f64,
    pub linear_norm: f64,
}

impl Screw {
    pub fn new(twist: Twist) -> Result<Self, ScrewNormError> {
        let wn = twist.angular().norm();
        let vn = twist.linear().norm();
        let kind = if (wn - 1.0).abs() <= SCREW_TOLERANCE {
            ScrewKind::Revolute
        } else if wn <= SCREW_TOLERANCE && (vn - 1.0).abs() <= SCREW_TOLERANCE {
            ScrewKind::Prismatic
        } else {
            return Err(ScrewNormError {
                angular_norm: wn,
                linear_norm: vn,
            });
        };
        Ok(Self { twist, kind })
    }

    /// Revolute screw about `axis` through `point`.
    pub fn revolute(axis: Vector3<f64>, point: Vector3<f64>) -> Result<Self, ScrewNormError> {
        Self::new(Twist::new(axis, point.cross(&axis)))
    }

    pub fn prismatic(direction: Vector3<f64>) -> Result<Self, ScrewNormError> {
        Self::new(Twist::new(Vector3::zeros(), direction))
    }

    #[inline]
    pub fn twist(&self) -> &Twist {
        &self.twist
    }

    #[inline]
    pub fn kind(&self) -> ScrewKind {
        self.kind
    }
}

/// `exp(X̂θ)` in closed form.
pub fn exp_screw(x: &Screw, theta: f64) -> Pose {
    let w = x.twist.angular();
    let v = x.twist.linear();
    match x.kind {
        ScrewKind::Prismatic => Pose::from_translation(v * theta),
        ScrewKind::Revolute => {
            let (a, b, c) = rodrigues_coefficients(theta);
            let wh = hat(&w);
            let wh2 = wh * wh;
            let rotation = Matrix3::identity() + wh * a + wh2 * b;
            // ∫₀^θ exp(ω̂s) ds · v
            let translation = (Matrix3::identity() * theta + wh * b + wh2 * c) * v;
            Pose::new(rotation, translation)
        }
    }
}

/// `exp(V̂)` for an arbitrary twist, split into a unit screw and a magnitude.
pub fn exp_twist(v: &Twist) -> Pose {
    let w = v.angular().norm();
    if w <= SCREW_TOLERANCE {
        return Pose::from_translation(v.linear());
    }
    let screw = Screw::new(*v * (1.0 / w)).expect("unit angular part");
    exp_screw(&screw, w)
}

/// `(sin θ, 1 − cos θ, θ − sin θ)` with Taylor branches near zero.
#[inline]
fn rodrigues_coefficients(theta: f64) -> (f64, f64, f64) {
    if theta.abs() < SMALL_ANGLE {
        let t2 = theta * theta;
        let t3 = t2 * theta;
        (
            theta - t3 / 6.0,
            t2 / 2.0 - t2 * t2 / 24.0,
            t3 / 6.0 - t3 * t2 / 120.0,
        )
    } else {
        let half = 0.5 * theta;
        let s = half.sin();
        (theta.sin(), 2.0 * s * s, theta - theta.sin())
    }
}

/// Rotation vector `ω` with `exp(ω̂) = R`.
pub fn rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let skew = vee(r);
    let s = skew.norm();
    let c = 0.5 * (r.trace() - 1.0);
    let angle = s.atan2(c);
    if angle < SMALL_ANGLE {
        // sin θ ≈ θ
        return skew * (1.0 + angle * angle / 6.0);
    }
    if std::f64::consts::PI - angle > 1e-6 {
        return skew * (angle / s);
    }
    // near π the skew part vanishes; recover the axis from R + I
    let sym = (r + Matrix3::identity()) * 0.5;
    let col = (0..3)
        .max_by(|&i, &j| sym[(i, i)].total_cmp(&sym[(j, j)]))
        .unwrap_or(0);
    let mut axis: Vector3<f64> = sym.column(col).into_owned();
    axis /= axis.norm();
    if axis.dot(&skew) < 0.0 {
        axis = -axis;
    }
    axis * angle
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn taylor_expm(m: &nalgebra::DMatrix<f64>, terms: usize) -> nalgebra::DMatrix<f64> {
        let n = m.nrows();
        let mut sum = nalgebra::DMatrix::identity(n, n);
        let mut term = nalgebra::DMatrix::identity(n, n);
        for k in 1..terms {
            term = &term * m / k as f64;
            sum += &term;
        }
        sum
    }

    fn se3_hat(x: &Twist) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(4, 4);
        m.view_mut((0, 0), (3, 3)).copy_from(&hat(&x.angular()));
        m.view_mut((0, 3), (3, 1)).copy_from(&x.linear());
        m
    }

    struct Lcg(u64);
    impl Lcg {
        fn next(&mut self) -> f64 {
            self.0 = self
                .0
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((self.0 >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        }
        fn vec3(&mut self) -> Vector3<f64> {
            Vector3::new(self.next(), self.next(), self.next())
        }
        fn twist(&mut self) -> Twist {
            Twist::new(self.vec3(), self.vec3())
        }
        fn pose(&mut self) -> Pose {
            let axis = self.vec3().normalize();
            let x = Screw::revolute(axis, self.vec3()).unwrap();
            let t = 3.0 * self.next();
            exp_screw(&x, t).compose(&Pose::from_translation(self.vec3()))
        }
    }

    #[test]
    fn exp_twist_agrees_with_the_matrix_exponential() {
        let v = Twist::new(Vector3::new(0.3, -0.2, 0.5), Vector3::new(0.1, 0.4, -0.3));
        let mut m = nalgebra::Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&v.angular()));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&v.linear());
        let mut term = nalgebra::Matrix4::identity();
        let mut sum = term;
        for k in 1..30 {
            term = term * m / k as f64;
            sum += term;
        }
        let c = exp_twist(&v);
        assert!((c.rotation - sum.fixed_view::<3, 3>(0, 0)).amax() < 1e-14);
        assert!((c.translation - sum.fixed_view::<3, 1>(0, 3)).amax() < 1e-14);
        let p = Twist::new(Vector3::zeros(), Vector3::new(0.1, 0.2, 0.3));
        assert_eq!(exp_twist(&p).translation, p.linear());
    }

    #[test]
    fn exp_at_zero_is_identity() {
        let x = Screw::revolute(Vector3::new(0.0, 0.6, 0.8), Vector3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(exp_screw(&x, 0.0), Pose::identity());
        let p = Screw::prismatic(Vector3::x()).unwrap();
        assert_eq!(exp_screw(&p, 0.0), Pose::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let x = Screw::revolute(Vector3::z(), Vector3::zeros()).unwrap();
        let c = exp_screw(&x, PI / 2.0);
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((c.rotation - expected).norm() < 1e-15);
        assert!(c.translation.norm() < 1e-15);
    }

    #[test]
    fn exp_matches_taylor_series() {
        let x = Screw::new(Twist::new(Vector3::z(), Vector3::x())).unwrap();
        let c = exp_screw(&x, PI);
        let series = taylor_expm(&(se3_hat(x.twist()) * PI), 40);
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                err = err.max((series[(i, j)] - c.rotation[(i, j)]).abs());
            }
            err = err.max((series[(i, 3)] - c.translation[i]).abs());
        }
        assert!(err <= 1e-13, "err = {err:e}");
    }

    #[test]
    fn small_angle_branch_is_continuous() {
        let x = Screw::new(Twist::new(Vector3::new(0.0, 0.6, 0.8), Vector3::new(0.3, -0.2, 0.1)))
            .unwrap();
        for &t in &[0.99e-8, 1.01e-8, -0.99e-8, 1e-12] {
            let c = exp_screw(&x, t);
            let series = taylor_expm(&(se3_hat(x.twist()) * t), 8);
            let mut err: f64 = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    err = err.max((series[(i, j)] - c.rotation[(i, j)]).abs());
                }
                err = err.max((series[(i, 3)] - c.translation[i]).abs());
            }
            assert!(err < 1e-15, "t = {t:e}, err = {err:e}");
        }
    }

    #[test]
    fn compose_and_inverse() {
        let mut rng = Lcg(7);
        for _ in 0..100 {
            let a = rng.pose();
            let b = rng.pose();
            assert_eq!(Pose::identity().compose(&b), b);
            let back = a.inverse().inverse();
            assert!((back.rotation - a.rotation).norm() <= 1e-13);
            assert!((back.translation - a.translation).norm() <= 1e-13);
            let id = a.compose(&a.inverse());
            assert!((id.rotation - Matrix3::identity()).norm() <= 1e-13);
            assert!(id.translation.norm() <= 1e-13);
            let ab = a.inverse_compose(&b);
            let ab2 = a.inverse().compose(&b);
            assert!((ab.translation - ab2.translation).norm() <= 1e-13);
        }
    }

    #[test]
    fn adjoint_is_a_homomorphism() {
        let mut rng = Lcg(11);
        assert_eq!(Pose::identity().adjoint(), Matrix6::identity());
        for _ in 0..100 {
            let a = rng.pose();
            let b = rng.pose();
            let lhs = a.compose(&b).adjoint();
            let rhs = a.adjoint() * b.adjoint();
            assert!((lhs - rhs).amax() <= 1e-12);
            let inv = a.inverse().adjoint() * a.adjoint();
            assert!((inv - Matrix6::identity()).amax() <= 1e-12);
        }
    }

    #[test]
    fn adjoint_of_exp_matches_series_of_ad() {
        let mut rng = Lcg(3);
        for _ in 0..20 {
            let x = Screw::revolute(rng.vec3().normalize(), rng.vec3()).unwrap();
            let t = 2.0 * rng.next();
            let lhs = exp_screw(&x, t).adjoint();
            let m = nalgebra::DMatrix::from_column_slice(6, 6, (ad(x.twist()) * t).as_slice());
            let rhs = taylor_expm(&m, 60);
            let mut err: f64 = 0.0;
            for i in 0..6 {
                for j in 0..6 {
                    err = err.max((lhs[(i, j)] - rhs[(i, j)]).abs());
                }
            }
            assert!(err <= 1e-10, "err = {err:e}");
        }
    }

    #[test]
    fn ad_identities() {
        let mut rng = Lcg(5);
        assert_eq!(ad(&Twist::zero()), Matrix6::zeros());
        for _ in 0..100 {
            let (x, y, z) = (rng.twist(), rng.twist(), rng.twist());
            let xy = ad(&x) * y.0;
            assert!((xy + ad(&y) * x.0).amax() <= 1e-13);
            assert!((xy - x.bracket(&y).0).amax() <= 1e-13);
            let jacobi = ad(&x) * ad(&y) * z.0 - ad(&y) * ad(&x) * z.0 - ad(&Twist(xy)) * z.0;
            assert!(jacobi.amax() <= 1e-12);
        }
    }

    #[test]
    fn transpose_operators_are_dual() {
        let mut rng = Lcg(9);
        let w0 = Wrench(rng.twist().0);
        assert_eq!(Pose::identity().adjoint_transpose_apply(&w0), w0);
        for _ in 0..100 {
            let c = rng.pose();
            let w = Wrench(rng.twist().0);
            let v = rng.twist();
            let lhs = c.adjoint_transpose_apply(&w).power(&v);
            let rhs = w.power(&c.adjoint_apply(&v));
            assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + lhs.abs()));
            assert!((c.adjoint_apply(&v).0 - c.adjoint() * v.0).amax() <= 1e-13);
            assert!((c.adjoint_inverse_apply(&v).0 - c.inverse().adjoint() * v.0).amax() <= 1e-13);
            let x = rng.twist();
            let explicit = ad(&x).transpose() * w.0;
            assert!((x.ad_transpose_apply(&w).0 - explicit).amax() <= 1e-13);
        }
    }

    #[test]
    fn exp_derivative_matches_central_difference() {
        let mut rng = Lcg(13);
        for _ in 0..20 {
            let x = Screw::new(Twist::new(rng.vec3().normalize(), rng.vec3())).unwrap();
            let t0 = 2.0 * rng.next();
            let h = 1e-6;
            let (cp, cm) = (exp_screw(&x, t0 + h), exp_screw(&x, t0 - h));
            let c = exp_screw(&x, t0);
            // d/dθ exp(Xθ) = exp(Xθ)·X̂
            let dr = c.rotation * hat(&x.twist().angular());
            let dp = c.rotation * x.twist().linear();
            assert!(((cp.rotation - cm.rotation) / (2.0 * h) - dr).amax() <= 1e-9);
            assert!(((cp.translation - cm.translation) / (2.0 * h) - dp).amax() <= 1e-9);
        }
    }

    #[test]
    fn revolute_exp_is_two_pi_periodic() {
        let mut rng = Lcg(17);
        for _ in 0..20 {
            let x = Screw::revolute(rng.vec3().normalize(), rng.vec3()).unwrap();
            let t = 3.0 * rng.next();
            let a = exp_screw(&x, t);
            let b = exp_screw(&x, t + 2.0 * PI);
            assert!((a.rotation - b.rotation).amax() <= 1e-12);
            assert!((a.translation - b.translation).amax() <= 1e-12);
        }
    }

    #[test]
    fn screw_normalization_is_enforced() {
        assert!(Screw::new(Twist::new(Vector3::new(0.0, 0.0, 2.0), Vector3::zeros())).is_err());
        assert!(Screw::new(Twist::zero()).is_err());
        assert!(Screw::new(Twist::new(Vector3::new(1e-3, 0.0, 0.0), Vector3::x())).is_err());
        assert_eq!(
            Screw::prismatic(Vector3::y()).unwrap().kind(),
            ScrewKind::Prismatic
        );
    }

    #[test]
    fn rotation_log_inverts_exp() {
        let mut rng = Lcg(19);
        for _ in 0..100 {
            let axis = rng.vec3().normalize();
            let angle = 3.1 * rng.next().abs();
            let x = Screw::revolute(axis, Vector3::zeros()).unwrap();
            let r = exp_screw(&x, angle).rotation;
            let w = rotation_log(&r);
            assert!((w - axis * angle).norm() <= 1e-9, "angle = {angle}");
        }
        let x = Screw::revolute(Vector3::new(0.0, 0.6, 0.8), Vector3::zeros()).unwrap();
        let w = rotation_log(&exp_screw(&x, PI - 1e-9).rotation);
        assert!((w.norm() - (PI - 1e-9)).abs() <= 1e-7);
        assert!(rotation_log(&Matrix3::identity()).norm() == 0.0);
    }
}
