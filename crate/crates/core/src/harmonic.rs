//! The bounded harmonic profile attached to the ends.
//!
//! On a two-end model the unique bounded harmonic function with limits 1 at
//! the + end and 0 at the - end is the normalized flux integral
//! `Phi(r) = int_{-inf}^r f^{1-n} / int_{-inf}^{inf} f^{1-n}`. The improper
//! tails are integrated in closed form on the exact regions, so the
//! normalization carries no truncation error. On one-end models the profile
//! degenerates to the constant 1.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{End, Ends, ModelManifold, sphere_volume};
use crate::quad::adaptive_gk;

#[derive(Debug, Clone)]
pub struct HarmonicProfile {
    pub model: Arc<ModelManifold>,
    /// total flux integral `I = int f^{1-n} dr`; infinity on one-end models
    total_flux: f64,
    left_tail: f64,
    neck_cum: Vec<f64>,
    neck_r0: f64,
    neck_dr: f64,
}

impl HarmonicProfile {
    pub fn new(model: Arc<ModelManifold>) -> Result<Self> {
        let n = model.n;
        match model.ends() {
            Ends::One => Ok(HarmonicProfile {
                model,
                total_flux: f64::INFINITY,
                left_tail: 0.0,
                neck_cum: Vec::new(),
                neck_r0: 0.0,
                neck_dr: 1.0,
            }),
            Ends::Two => {
                let rr = model.profile.neck_radius;
                let p = 1.0 - n as f64;
                let left_tail = (rr - model.profile.c_minus).powf(p + 1.0) / (n as f64 - 2.0);
                let right_tail = (rr - model.profile.c_plus).powf(p + 1.0) / (n as f64 - 2.0);
                // dense cumulative over the neck; adaptive GK refines each cell
                let cells = 4000usize;
                let dr = 2.0 * rr / cells as f64;
                let mut cum = Vec::with_capacity(cells + 1);
                cum.push(0.0);
                let mut acc = 0.0;
                for i in 0..cells {
                    let a = -rr + i as f64 * dr;
                    let b = a + dr;
                    acc += adaptive_gk(a, b, 1e-13, |r| model.profile.eval(r).f.powf(p));
                    cum.push(acc);
                }
                let total_flux = left_tail + acc + right_tail;
                Ok(HarmonicProfile {
                    model,
                    total_flux,
                    left_tail,
                    neck_cum: cum,
                    neck_r0: -rr,
                    neck_dr: dr,
                })
            }
        }
    }

    pub fn total_flux(&self) -> f64 {
        self.total_flux
    }

    fn neck_cumulative(&self, r: f64) -> f64 {
        // cubic interpolation on the uniform table
        let t = (r - self.neck_r0) / self.neck_dr;
        let n = self.neck_cum.len();
        let i0 = ((t.floor() as isize) - 1).clamp(0, n as isize - 4) as usize;
        let u = t - i0 as f64;
        let mut out = 0.0;
        for a in 0..4 {
            let mut w = 1.0;
            for b in 0..4 {
                if a != b {
                    w *= (u - b as f64) / (a as f64 - b as f64);
                }
            }
            out += w * self.neck_cum[i0 + a];
        }
        out
    }

    /// Profile value `Phi_+(r)`.
    pub fn value(&self, r: f64) -> f64 {
        let n = self.model.n as f64;
        match self.model.ends() {
            Ends::One => 1.0,
            Ends::Two => {
                let rr = self.model.profile.neck_radius;
                if r <= -rr {
                    let s = -r - self.model.profile.c_minus;
                    s.powf(2.0 - n) / ((n - 2.0) * self.total_flux)
                } else if r >= rr {
                    let s = r - self.model.profile.c_plus;
                    1.0 - s.powf(2.0 - n) / ((n - 2.0) * self.total_flux)
                } else {
                    (self.left_tail + self.neck_cumulative(r)) / self.total_flux
                }
            }
        }
    }

    /// `Phi'(r) = f(r)^{1-n} / I`, exact given the normalization.
    pub fn derivative(&self, r: f64) -> f64 {
        match self.model.ends() {
            Ends::One => 0.0,
            Ends::Two => {
                let n = self.model.n as f64;
                self.model.profile.eval(r).f.powf(1.0 - n) / self.total_flux
            }
        }
    }

    pub fn second_derivative(&self, r: f64) -> f64 {
        match self.model.ends() {
            Ends::One => 0.0,
            Ends::Two => {
                let n = self.model.n as f64;
                let w = self.model.profile.eval(r);
                (1.0 - n) * w.f.powf(-n) * w.df / self.total_flux
            }
        }
    }

    /// The conserved flux `f^{n-1} Phi'`, identically `1/I`; its relative
    /// variation across radii is the harmonicity residual in conservation form.
    pub fn flux_residual(&self, radii: &[f64]) -> f64 {
        match self.model.ends() {
            Ends::One => 0.0,
            Ends::Two => {
                let expect = 1.0 / self.total_flux;
                let mut worst: f64 = 0.0;
                for &r in radii {
                    let w = self.model.profile.eval(r);
                    let flux = w.f.powi(self.model.n as i32 - 1) * self.derivative(r);
                    worst = worst.max(((flux - expect) / expect).abs());
                }
                worst
            }
        }
    }

    /// Boundary-expansion coefficient: `1 - Phi ~ A' s^{-(n-2)}` at the + end
    /// and `Phi ~ A' s^{-(n-2)}` at the - end, with the closed form
    /// `A' = [(n-2) I]^{-1}`.
    pub fn expansion_coefficient(&self, _end: End) -> Result<f64> {
        match self.model.ends() {
            Ends::One => Err(Error::InvalidModel(
                "expansion coefficient requires a two-end model".into(),
            )),
            Ends::Two => Ok(1.0 / ((self.model.n as f64 - 2.0) * self.total_flux)),
        }
    }

    /// `A'` recovered as the limit `s^{n-2} (1 - Phi)` sampled on the exact
    /// region (exact there, so any probe radius works).
    pub fn expansion_coefficient_from_limit(&self, end: End, r_probe: f64) -> Result<f64> {
        if self.model.ends() == Ends::One {
            return Err(Error::InvalidModel(
                "expansion coefficient requires a two-end model".into(),
            ));
        }
        let n = self.model.n as f64;
        match end {
            End::Plus => {
                let s = r_probe - self.model.profile.c_plus;
                Ok(s.powf(n - 2.0) * (1.0 - self.value(r_probe)))
            }
            End::Minus => {
                let s = -r_probe - self.model.profile.c_minus;
                Ok(s.powf(n - 2.0) * self.value(r_probe))
            }
        }
    }

    /// The bounded harmonic function `h = 2 Phi - 1` with limits +-1.
    pub fn bounded_h(&self, r: f64) -> f64 {
        2.0 * self.value(r) - 1.0
    }

    pub fn bounded_h_derivative(&self, r: f64) -> f64 {
        2.0 * self.derivative(r)
    }

    /// Dirichlet energy of `h` by quadrature: neck numerically, tails closed.
    pub fn dirichlet_energy(&self) -> f64 {
        match self.model.ends() {
            Ends::One => 0.0,
            Ends::Two => {
                let n = self.model.n as f64;
                let vol = sphere_volume(self.model.n - 1);
                let rr = self.model.profile.neck_radius;
                let neck = adaptive_gk(-rr, rr, 1e-13, |r| {
                    let w = self.model.profile.eval(r);
                    let dh = self.bounded_h_derivative(r);
                    dh * dh * w.f.powf(n - 1.0)
                });
                // tail integrand 4 f^{2(1-n)} f^{n-1} / I^2 = 4 s^{1-n} / I^2
                let tail = |s0: f64| {
                    4.0 * s0.powf(2.0 - n) / ((n - 2.0) * self.total_flux * self.total_flux)
                };
                neck + tail(rr - self.model.profile.c_plus) + tail(rr - self.model.profile.c_minus)
            }
        }
    }

    /// Closed-form cross-check of the Dirichlet energy via the flux identity:
    /// `E = 4 vol(S^{n-1}) A' (n-2) = 4 vol / I`.
    pub fn dirichlet_energy_flux_route(&self) -> Result<f64> {
        let vol = sphere_volume(self.model.n - 1);
        let a = self.expansion_coefficient(End::Plus)?;
        Ok(4.0 * vol * a * (self.model.n as f64 - 2.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::WarpProfile;
    use approx::assert_relative_eq;

    fn profile() -> HarmonicProfile {
        let p = WarpProfile::two_end(1.0, 0.5, 0.0, 0.0).unwrap();
        let m = ModelManifold::new(3, p, 400.0).unwrap();
        HarmonicProfile::new(Arc::new(m)).unwrap()
    }

    #[test]
    fn symmetric_midpoint() {
        let h = profile();
        assert_relative_eq!(h.value(0.0), 0.5, max_relative = 1e-11);
        assert_relative_eq!(h.bounded_h(0.0), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn limits_and_monotonicity() {
        let h = profile();
        assert!((h.value(399.0) - 1.0).abs() < 1e-5);
        assert!(h.value(-399.0) < 1e-5);
        let mut prev = -1.0;
        for i in 0..200 {
            let r = -10.0 + 0.1 * i as f64;
            let v = h.value(r);
            assert!(v > prev);
            assert!((0.0..=1.0).contains(&v));
            assert!(h.derivative(r) > 0.0);
            prev = v;
        }
    }

    #[test]
    fn flux_is_conserved() {
        let h = profile();
        let radii: Vec<f64> = (0..400).map(|i| -2.0 + 0.01 * i as f64).collect();
        assert!(h.flux_residual(&radii) < 1e-12);
    }

    #[test]
    fn expansion_coefficient_routes_agree() {
        let p = WarpProfile::two_end(1.0, 0.5, 0.2, -0.1).unwrap();
        let m = ModelManifold::new(3, p, 400.0).unwrap();
        let h = HarmonicProfile::new(Arc::new(m)).unwrap();
        let closed = h.expansion_coefficient(End::Plus).unwrap();
        for r in [5.0, 50.0, 300.0] {
            let lim_p = h.expansion_coefficient_from_limit(End::Plus, r).unwrap();
            let lim_m = h.expansion_coefficient_from_limit(End::Minus, -r).unwrap();
            assert_relative_eq!(lim_p, closed, max_relative = 1e-10);
            assert_relative_eq!(lim_m, closed, max_relative = 1e-10);
        }
    }

    #[test]
    fn expansion_coefficient_scaling_law() {
        // f -> lambda f with r -> lambda r sends A' to lambda^{n-2} A'
        let lam = 2.0;
        let p1 = WarpProfile::two_end(1.0, 0.5, 0.0, 0.0).unwrap();
        let m1 = ModelManifold::new(3, p1, 400.0).unwrap();
        let p2 = WarpProfile::two_end(lam, lam * 0.5, 0.0, 0.0).unwrap();
        let m2 = ModelManifold::new(3, p2, lam * 400.0).unwrap();
        let h1 = HarmonicProfile::new(Arc::new(m1)).unwrap();
        let h2 = HarmonicProfile::new(Arc::new(m2)).unwrap();
        let a1 = h1.expansion_coefficient(End::Plus).unwrap();
        let a2 = h2.expansion_coefficient(End::Plus).unwrap();
        assert_relative_eq!(a2, lam * a1, max_relative = 1e-9);
        // and the scaled profile agrees pointwise: Phi_2(lambda r) = Phi_1(r)
        for r in [-3.0, -0.4, 0.9, 12.0] {
            assert_relative_eq!(h2.value(lam * r), h1.value(r), max_relative = 1e-9);
        }
    }

    #[test]
    fn dirichlet_energy_identity() {
        let h = profile();
        let direct = h.dirichlet_energy();
        let via_flux = h.dirichlet_energy_flux_route().unwrap();
        assert_relative_eq!(direct, via_flux, max_relative = 1e-10);
    }

    #[test]
    fn one_end_is_constant() {
        let m = ModelManifold::new(3, WarpProfile::flat(), 400.0).unwrap();
        let h = HarmonicProfile::new(Arc::new(m)).unwrap();
        assert_eq!(h.value(3.0), 1.0);
        assert_eq!(h.derivative(3.0), 0.0);
        assert!(h.expansion_coefficient(End::Plus).is_err());
    }
}
