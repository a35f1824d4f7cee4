//! Rotationally symmetric model manifolds with exact Euclidean ends.
//!
//! The metric is `dr^2 + f(r)^2 g_{S^{n-1}}` with a warp function `f` that is
//! exactly linear outside a compact neck, so every quantity evaluated there
//! agrees with flat space to machine precision.

use crate::error::{Error, Result};

/// End structure of the model: a single Euclidean end or two ends joined by a neck.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ends {
    One,
    Two,
}

/// Which end of a two-end model a quantity is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    Plus,
    Minus,
}

/// Warp value together with its first two derivatives at a point.
#[derive(Debug, Clone, Copy)]
pub struct WarpValues {
    pub f: f64,
    pub df: f64,
    pub ddf: f64,
}

/// The radial warp function.
///
/// Outside `[-R, R]` the profile is exactly `r - c_plus` (right) and
/// `-r - c_minus` (left). Inside, the even and odd parts are low-degree
/// polynomials matched so that value, first and second derivative are
/// continuous at both joints and `f(0) = neck_min` exactly.
#[derive(Debug, Clone)]
pub struct WarpProfile {
    pub ends: Ends,
    pub neck_radius: f64,
    pub neck_min: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    /// even-part coefficients of r^0, r^2, r^4, r^6
    even: [f64; 4],
    /// odd-part coefficients of r^1, r^3, r^5
    odd: [f64; 3],
}

impl WarpProfile {
    /// Exactly flat one-end profile, `f(r) = r` everywhere.
    pub fn flat() -> Self {
        WarpProfile {
            ends: Ends::One,
            neck_radius: 1.0,
            neck_min: 0.0,
            c_plus: 0.0,
            c_minus: 0.0,
            even: [0.0; 4],
            odd: [1.0, 0.0, 0.0],
        }
    }

    /// Two-end profile with neck radius `R`, neck value `a = f(0)` and end
    /// offsets `c_plus`, `c_minus`.
    pub fn two_end(neck_radius: f64, neck_min: f64, c_plus: f64, c_minus: f64) -> Result<Self> {
        let r = neck_radius;
        let a = neck_min;
        if !(r > 0.0) {
            return Err(Error::InvalidModel("neck_radius must be positive".into()));
        }
        if !(a > 0.0) {
            return Err(Error::InvalidModel("neck_min must be positive".into()));
        }
        if r - c_plus <= 0.0 || r - c_minus <= 0.0 {
            return Err(Error::InvalidModel(
                "end offsets must keep f positive at the joints".into(),
            ));
        }

        // Even part a + B2 r^2 + B4 r^4 + B6 r^6 hits the averaged joint data.
        let rhs_e = [(r - 0.5 * (c_plus + c_minus)) - a, 1.0, 0.0];
        let m_e = [
            [r * r, r.powi(4), r.powi(6)],
            [2.0 * r, 4.0 * r.powi(3), 6.0 * r.powi(5)],
            [2.0, 12.0 * r * r, 30.0 * r.powi(4)],
        ];
        let e = solve3(m_e, rhs_e)
            .ok_or_else(|| Error::InvalidModel("degenerate even neck system".into()))?;

        // Odd part B1 r + B3 r^3 + B5 r^5 carries the end-offset asymmetry.
        let rhs_o = [0.5 * (c_minus - c_plus), 0.0, 0.0];
        let m_o = [
            [r, r.powi(3), r.powi(5)],
            [1.0, 3.0 * r * r, 5.0 * r.powi(4)],
            [0.0, 6.0 * r, 20.0 * r.powi(3)],
        ];
        let o = solve3(m_o, rhs_o)
            .ok_or_else(|| Error::InvalidModel("degenerate odd neck system".into()))?;

        let profile = WarpProfile {
            ends: Ends::Two,
            neck_radius: r,
            neck_min: a,
            c_plus,
            c_minus,
            even: [a, e[0], e[1], e[2]],
            odd: [o[0], o[1], o[2]],
        };

        // Reject necks that dip below half the requested waist.
        let mut fmin = f64::INFINITY;
        for i in 0..=2000 {
            let x = -r + 2.0 * r * (i as f64) / 2000.0;
            fmin = fmin.min(profile.eval(x).f);
        }
        if fmin < 0.5 * a {
            return Err(Error::InvalidModel(format!(
                "neck dips to {fmin:.4}, below neck_min/2 = {:.4}",
                0.5 * a
            )));
        }
        Ok(profile)
    }

    /// Warp value and first two derivatives. Exact linear data outside the neck.
    pub fn eval(&self, r: f64) -> WarpValues {
        match self.ends {
            Ends::One => WarpValues {
                f: r,
                df: 1.0,
                ddf: 0.0,
            },
            Ends::Two => {
                let rr = self.neck_radius;
                if r >= rr {
                    WarpValues {
                        f: r - self.c_plus,
                        df: 1.0,
                        ddf: 0.0,
                    }
                } else if r <= -rr {
                    WarpValues {
                        f: -r - self.c_minus,
                        df: -1.0,
                        ddf: 0.0,
                    }
                } else {
                    let [a0, a2, a4, a6] = self.even;
                    let [b1, b3, b5] = self.odd;
                    let r2 = r * r;
                    let f = a0
                        + r2 * (a2 + r2 * (a4 + r2 * a6))
                        + r * (b1 + r2 * (b3 + r2 * b5));
                    let df = r * (2.0 * a2 + r2 * (4.0 * a4 + r2 * 6.0 * a6))
                        + b1
                        + r2 * (3.0 * b3 + r2 * 5.0 * b5);
                    let ddf = 2.0 * a2
                        + r2 * (12.0 * a4 + r2 * 30.0 * a6)
                        + r * (6.0 * b3 + r2 * 20.0 * b5);
                    WarpValues { f, df, ddf }
                }
            }
        }
    }
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let mut a = [
        [m[0][0], m[0][1], m[0][2], b[0]],
        [m[1][0], m[1][1], m[1][2], b[1]],
        [m[2][0], m[2][1], m[2][2], b[2]],
    ];
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        for row in 0..3 {
            if row != col {
                let factor = a[row][col] / a[col][col];
                for k in col..4 {
                    a[row][k] -= factor * a[col][k];
                }
            }
        }
    }
    Some([a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]])
}

/// A point on the model manifold: signed radial coordinate plus a unit
/// direction on the sphere.
#[derive(Debug, Clone)]
pub struct PointM {
    pub r: f64,
    pub omega: Vec<f64>,
}

impl PointM {
    pub fn new(r: f64, omega: Vec<f64>) -> Result<Self> {
        let norm: f64 = omega.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::OutOfDomain(format!(
                "direction vector has norm {norm:.15}, expected 1"
            )));
        }
        Ok(PointM { r, omega })
    }

    /// Point on the polar axis of an `n`-dimensional model.
    pub fn on_axis(r: f64, n: usize) -> Self {
        let mut omega = vec![0.0; n];
        omega[0] = 1.0;
        PointM { r, omega }
    }

    /// Point whose direction makes the prescribed angle cosine with the axis.
    pub fn with_cos(r: f64, cos_gamma: f64, n: usize) -> Self {
        let mut omega = vec![0.0; n];
        omega[0] = cos_gamma;
        omega[1] = (1.0 - cos_gamma * cos_gamma).max(0.0).sqrt();
        PointM { r, omega }
    }

    pub fn cos_angle(&self, other: &PointM) -> f64 {
        self.omega
            .iter()
            .zip(&other.omega)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .clamp(-1.0, 1.0)
    }
}

/// The model manifold: dimension, end structure, warp profile and the
/// computational truncation radius.
#[derive(Debug, Clone)]
pub struct ModelManifold {
    pub n: usize,
    pub profile: WarpProfile,
    pub r_max: f64,
}

impl ModelManifold {
    pub fn new(n: usize, profile: WarpProfile, r_max: f64) -> Result<Self> {
        if n < 3 || n % 2 == 0 {
            return Err(Error::UnsupportedDimension(n));
        }
        if r_max <= 10.0 * profile.neck_radius {
            return Err(Error::InvalidModel(format!(
                "r_max = {r_max} must exceed 10 * neck_radius = {}",
                10.0 * profile.neck_radius
            )));
        }
        Ok(ModelManifold { n, profile, r_max })
    }

    pub fn ends(&self) -> Ends {
        self.profile.ends
    }

    /// Warp value and derivatives; errors outside `[-r_max, r_max]`.
    pub fn warp(&self, r: f64) -> Result<WarpValues> {
        let lo = match self.ends() {
            Ends::One => 0.0,
            Ends::Two => -self.r_max,
        };
        if r < lo - 1e-12 || r > self.r_max + 1e-12 {
            return Err(Error::OutOfDomain(format!(
                "r = {r} outside [{lo}, {}]",
                self.r_max
            )));
        }
        Ok(self.profile.eval(r))
    }

    /// Euclidean radius `|z| = f(r)` of a point in an exact end region,
    /// together with the end it belongs to.
    pub fn euclidean_radius(&self, r: f64) -> Option<(End, f64)> {
        match self.ends() {
            Ends::One => Some((End::Plus, r)),
            Ends::Two => {
                if r >= self.profile.neck_radius {
                    Some((End::Plus, r - self.profile.c_plus))
                } else if r <= -self.profile.neck_radius {
                    Some((End::Minus, -r - self.profile.c_minus))
                } else {
                    None
                }
            }
        }
    }

    /// Start of the exact region on the given end, in the signed coordinate.
    pub fn exact_start(&self, end: End) -> f64 {
        match (self.ends(), end) {
            (Ends::One, _) => 0.0,
            (Ends::Two, End::Plus) => self.profile.neck_radius,
            (Ends::Two, End::Minus) => -self.profile.neck_radius,
        }
    }

    /// Lower end of the radial domain.
    pub fn r_lo(&self) -> f64 {
        match self.ends() {
            Ends::One => 0.0,
            Ends::Two => -self.r_max,
        }
    }

    /// Integral of the volume weight `f^{n-1}` over `[a, b]`.
    ///
    /// Exact-region pieces are integrated in closed form; the neck piece by a
    /// Gauss-Legendre rule that is exact for the polynomial warp.
    pub fn weight_integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let p = (self.n - 1) as i32;
        match self.ends() {
            Ends::One => {
                // f = r exactly
                (b.powi(p + 1) - a.powi(p + 1)) / (p + 1) as f64
            }
            Ends::Two => {
                let rr = self.profile.neck_radius;
                let mut total = 0.0;
                // left exact region: f = -r - c_minus
                let la = a.min(-rr);
                let lb = b.min(-rr);
                if lb > la {
                    let s1 = -la - self.profile.c_minus;
                    let s0 = -lb - self.profile.c_minus;
                    total += (s1.powi(p + 1) - s0.powi(p + 1)) / (p + 1) as f64;
                }
                // right exact region: f = r - c_plus
                let ra = a.max(rr);
                let rb = b.max(rr);
                if rb > ra {
                    let s0 = ra - self.profile.c_plus;
                    let s1 = rb - self.profile.c_plus;
                    total += (s1.powi(p + 1) - s0.powi(p + 1)) / (p + 1) as f64;
                }
                // neck: polynomial of degree <= 6, so f^{n-1} has degree <= 6(n-1);
                // a 64-point rule is exact far beyond that
                let na = a.max(-rr);
                let nb = b.min(rr);
                if nb > na {
                    total += crate::quad::gauss_legendre(na, nb, 64, |r| {
                        self.profile.eval(r).f.powi(p)
                    });
                }
                total
            }
        }
    }

    /// Volume of the radial-distance ball of radius `rho` around the point at
    /// coordinate `r0` (distance measured along the radial coordinate).
    pub fn volume_ball(&self, r0: f64, rho: f64) -> f64 {
        if rho <= 0.0 {
            return 0.0;
        }
        let a = (r0 - rho).max(self.r_lo());
        let b = (r0 + rho).min(self.r_max);
        sphere_volume(self.n - 1) * self.weight_integral(a, b)
    }

    /// Pointwise metric norm of a one-form with the given radial component and
    /// round-sphere norm of the angular component.
    pub fn one_form_norm(&self, radial: f64, angular: f64, r: f64) -> f64 {
        let f = self.profile.eval(r).f;
        (radial * radial + (angular / f) * (angular / f)).sqrt()
    }
}

/// Volume of the unit sphere S^{d}, `2 pi^{(d+1)/2} / Gamma((d+1)/2)`.
pub fn sphere_volume(d: usize) -> f64 {
    let half = d + 1; // argument of Gamma is half/2
    2.0 * std::f64::consts::PI.powf(0.5 * half as f64) / gamma_half(half)
}

/// Gamma(m/2) for positive integer m.
pub fn gamma_half(m: usize) -> f64 {
    match m {
        0 => f64::NAN,
        1 => std::f64::consts::PI.sqrt(),
        2 => 1.0,
        _ => (0.5 * (m - 2) as f64) * gamma_half(m - 2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_end_default() -> ModelManifold {
        let p = WarpProfile::two_end(1.0, 0.5, 0.0, 0.0).unwrap();
        ModelManifold::new(3, p, 400.0).unwrap()
    }

    #[test]
    fn warp_exact_outside_neck() {
        let m = two_end_default();
        for r in [1.0, 2.0, 10.0, 399.0] {
            let w = m.warp(r).unwrap();
            assert_eq!(w.f, r);
            assert_eq!(w.df, 1.0);
            assert_eq!(w.ddf, 0.0);
            let w = m.warp(-r).unwrap();
            assert_eq!(w.f, r);
            assert_eq!(w.df, -1.0);
            assert_eq!(w.ddf, 0.0);
        }
    }

    #[test]
    fn warp_neck_center() {
        let m = two_end_default();
        let w = m.warp(0.0).unwrap();
        assert_relative_eq!(w.f, 0.5, max_relative = 1e-15);
        assert_relative_eq!(w.df, 0.0, epsilon = 1e-15);
        assert!(w.ddf > 0.0);
    }

    #[test]
    fn warp_c2_across_joint() {
        // value, first and second derivative match at +-R for an asymmetric neck
        let p = WarpProfile::two_end(1.0, 0.5, 0.15, -0.1).unwrap();
        for s in [1.0f64, -1.0] {
            let inside = p.eval(s * (1.0 - 1e-9));
            let outside = p.eval(s * (1.0 + 1e-9));
            assert_relative_eq!(inside.f, outside.f, max_relative = 1e-7);
            assert_relative_eq!(inside.df, outside.df, max_relative = 1e-6);
            assert!((inside.ddf - outside.ddf).abs() < 1e-5);
        }
        assert_relative_eq!(p.eval(0.0).f, 0.5, max_relative = 1e-14);
    }

    #[test]
    fn warp_second_derivative_consistent() {
        // finite differences of f agree with the reported ddf across the joint
        let m = two_end_default();
        let h = 1e-4;
        for r in [-1.3f64, -1.0, -0.4, 0.0, 0.7, 1.0, 1.2] {
            let fd = (m.warp(r + h).unwrap().f - 2.0 * m.warp(r).unwrap().f
                + m.warp(r - h).unwrap().f)
                / (h * h);
            assert!((fd - m.warp(r).unwrap().ddf).abs() < 1e-4);
        }
    }

    #[test]
    fn flat_one_end_warp() {
        let m = ModelManifold::new(3, WarpProfile::flat(), 400.0).unwrap();
        let w = m.warp(0.5).unwrap();
        assert_eq!((w.f, w.df, w.ddf), (0.5, 1.0, 0.0));
    }

    #[test]
    fn euclidean_unit_ball() {
        let m = ModelManifold::new(3, WarpProfile::flat(), 400.0).unwrap();
        assert_relative_eq!(
            m.volume_ball(0.0, 1.0),
            4.0 * std::f64::consts::PI / 3.0,
            max_relative = 1e-13
        );
        assert_eq!(m.volume_ball(0.0, 0.0), 0.0);
    }

    #[test]
    fn volume_monotone_and_polynomial_growth() {
        let m = two_end_default();
        let mut prev = 0.0;
        for i in 1..=40 {
            let v = m.volume_ball(0.0, i as f64);
            assert!(v > prev);
            prev = v;
        }
        // slope of log V vs log rho approaches n
        let xs: Vec<f64> = (0..25).map(|i| 1.0 * 10f64.powf(i as f64 / 10.4)).collect();
        let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, m.volume_ball(0.0, x))).collect();
        let fit = crate::fit::fit_loglog(&pts).unwrap();
        assert!((fit.slope - 3.0).abs() < 0.05, "slope = {}", fit.slope);
    }

    #[test]
    fn one_form_norm_examples() {
        let m = two_end_default();
        assert_eq!(m.one_form_norm(1.0, 0.0, 5.0), 1.0);
        let flat = ModelManifold::new(3, WarpProfile::flat(), 400.0).unwrap();
        assert_relative_eq!(flat.one_form_norm(0.0, 1.0, 2.0), 0.5);
        // f = 1 somewhere between neck and joint
        let mut r = 0.5;
        for _ in 0..60 {
            let w = m.warp(r).unwrap();
            r -= (w.f - 1.0) / w.df.max(1e-3);
        }
        // bisect instead if Newton wandered
        if (m.warp(r).unwrap().f - 1.0).abs() > 1e-10 {
            let (mut a, mut b) = (0.0, 1.0);
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                if m.warp(mid).unwrap().f < 1.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            r = 0.5 * (a + b);
        }
        assert_relative_eq!(m.one_form_norm(3.0, 4.0, r), 5.0, max_relative = 1e-8);
    }

    #[test]
    fn sphere_volumes() {
        assert_relative_eq!(sphere_volume(2), 4.0 * std::f64::consts::PI);
        assert_relative_eq!(
            sphere_volume(4),
            8.0 * std::f64::consts::PI * std::f64::consts::PI / 3.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn rejects_bad_models() {
        assert!(ModelManifold::new(4, WarpProfile::flat(), 400.0).is_err());
        assert!(ModelManifold::new(3, WarpProfile::flat(), 5.0).is_err());
        assert!(WarpProfile::two_end(1.0, -0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn point_validation() {
        assert!(PointM::new(1.0, vec![1.0, 0.0, 0.0]).is_ok());
        assert!(PointM::new(1.0, vec![1.0, 0.5, 0.0]).is_err());
        let a = PointM::on_axis(2.0, 3);
        let b = PointM::with_cos(3.0, -1.0, 3);
        assert_relative_eq!(a.cos_angle(&b), -1.0);
    }
}
