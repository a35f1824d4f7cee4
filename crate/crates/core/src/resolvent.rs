//! Two-point resolvent kernel assembly and the boundary-expansion probes:
//! the leading coefficient of the kernel as one variable goes to infinity
//! with `k |z'|` held fixed, and the order of the parametrix error.

use num_complex::Complex64;

use crate::bvp::ModeWorkspace;
use crate::error::{Error, Result};
use crate::fit::{fit_loglog, richardson_geometric, LineFit};
use crate::geometry::{End, Ends, PointM};
use crate::harmonic::HarmonicProfile;
use crate::special::ResolventProfile;

/// Synthesized resolvent kernel value for real `k >= 0`.
pub fn resolvent(ws: &ModeWorkspace, k: f64, z: &PointM, zp: &PointM) -> Result<f64> {
    if k < 0.0 {
        return Err(Error::BadSpectralParameter(format!("{k}")));
    }
    let syn = ws.resolvent_point(Complex64::new(k, 0.0), z, zp)?;
    let v = syn.value;
    if v.im.abs() > 1e-8 * v.re.abs().max(1e-300) {
        return Err(Error::Quadrature(format!(
            "imaginary residue {:.3e} on a real-k kernel",
            v.im
        )));
    }
    Ok(v.re)
}

/// Smooth cutoff equal to 0 for `|r| <= R`, 1 for `|r| >= 2R` on the given
/// end, interpolated by a quintic step.
pub fn end_cutoff(neck_radius: f64, end: End, r: f64) -> f64 {
    let x = match end {
        End::Plus => r,
        End::Minus => -r,
    };
    let t = (x - neck_radius) / neck_radius;
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

/// One row of the boundary-coefficient probe.
#[derive(Debug, Clone, Copy)]
pub struct Rb0Row {
    pub s_prime: f64,
    pub k: f64,
    pub raw: f64,
    pub scaled: f64,
}

#[derive(Debug, Clone)]
pub struct Rb0Result {
    pub rows: Vec<Rb0Row>,
    pub extrapolated: f64,
    pub extrapolation_spread: f64,
    pub phi_target: f64,
    pub monotone: bool,
}

/// Probes the kernel along `z' -> infinity` on the chosen end with
/// `k |z'| = kappa` fixed. The scaled sequence
/// `R(k; z, z') |z'|^{n-2} e^kappa / f_n(kappa)` converges to the harmonic
/// profile at `z`; two Richardson levels sharpen the limit.
pub fn rb0_probe(
    ws: &ModeWorkspace,
    harmonic: &HarmonicProfile,
    z: &PointM,
    end: End,
    kappa: f64,
    s_primes: &[f64],
) -> Result<Rb0Result> {
    if kappa <= 0.0 {
        return Err(Error::OutOfDomain("kappa must be positive".into()));
    }
    let n = ws.model.n;
    let fnp = ResolventProfile::new(n)?;
    let scale = kappa.exp() / fnp.eval(kappa);
    let cosg = -0.3; // any fixed separation angle works; kept away from 1
    let mut rows = Vec::with_capacity(s_primes.len());
    for &sp in s_primes {
        let r_prime = match (ws.model.ends(), end) {
            (Ends::One, _) => sp,
            (Ends::Two, End::Plus) => sp + ws.model.profile.c_plus,
            (Ends::Two, End::Minus) => -(sp + ws.model.profile.c_minus),
        };
        let zp = PointM::with_cos(r_prime, cosg, n);
        let k = kappa / sp;
        let raw = resolvent(ws, k, z, &zp)?;
        let scaled = raw * sp.powi(n as i32 - 2) * scale;
        rows.push(Rb0Row { s_prime: sp, k, raw, scaled });
    }
    let seq: Vec<f64> = rows.iter().map(|r| r.scaled).collect();
    let ratio = s_primes[1] / s_primes[0];
    let extr = richardson_geometric(&seq, ratio, 2);
    let extrapolated = *extr.last().unwrap();
    let spread = if extr.len() >= 2 {
        (extr[extr.len() - 1] - extr[extr.len() - 2]).abs()
            / extrapolated.abs().max(1e-300)
    } else {
        f64::NAN
    };
    let phi_target = match (ws.model.ends(), end) {
        (Ends::One, _) => 1.0,
        (Ends::Two, End::Plus) => harmonic.value(z.r),
        (Ends::Two, End::Minus) => 1.0 - harmonic.value(z.r),
    };
    let diffs: Vec<f64> = seq.iter().map(|v| (v - phi_target).abs()).collect();
    let monotone = diffs.windows(2).all(|w| w[1] <= w[0] * 1.02);
    Ok(Rb0Result {
        rows,
        extrapolated,
        extrapolation_spread: spread,
        phi_target,
        monotone,
    })
}

/// Row of the parametrix-error probe.
#[derive(Debug, Clone, Copy)]
pub struct ParametrixRow {
    pub s_prime: f64,
    pub k: f64,
    pub resolvent: f64,
    pub error_with: f64,
    pub error_without: f64,
}

#[derive(Debug, Clone)]
pub struct ParametrixResult {
    pub rows: Vec<ParametrixRow>,
    pub fit_with: LineFit,
    pub fit_without: LineFit,
    pub residual_flag: bool,
}

/// Fits the decay order of `R - G1` and `R - G1 - G3` along the rb0 probe
/// direction, where `G1` is the same-end flat kernel under the product
/// cutoffs and `G3` carries the harmonic-profile correction.
pub fn parametrix_error_fit(
    ws: &ModeWorkspace,
    harmonic: &HarmonicProfile,
    z: &PointM,
    end: End,
    kappa: f64,
    s_primes: &[f64],
) -> Result<ParametrixResult> {
    let model = &*ws.model;
    let n = model.n;
    if model.ends() != Ends::Two {
        return Err(Error::InvalidModel(
            "the parametrix probe needs a two-end model".into(),
        ));
    }
    let fnp = ResolventProfile::new(n)?;
    let rr = model.profile.neck_radius;
    let cosg = -0.3;
    let mut rows = Vec::with_capacity(s_primes.len());
    for &sp in s_primes {
        let r_prime = match end {
            End::Plus => sp + model.profile.c_plus,
            End::Minus => -(sp + model.profile.c_minus),
        };
        let zp = PointM::with_cos(r_prime, cosg, n);
        let k = kappa / sp;
        let value = resolvent(ws, k, z, &zp)?;

        // G1: same-end flat kernel with product cutoffs
        let phi_z_plus = end_cutoff(rr, End::Plus, z.r);
        let phi_z_minus = end_cutoff(rr, End::Minus, z.r);
        let phi_zp = end_cutoff(rr, end, r_prime);
        let mut g1 = 0.0;
        let same_end_cut = match end {
            End::Plus => phi_z_plus,
            End::Minus => phi_z_minus,
        };
        if same_end_cut > 0.0 && phi_zp > 0.0 {
            let (e1, sz) = model.euclidean_radius(z.r).ok_or_else(|| {
                Error::OutOfDomain("cutoff positive outside the exact region".into())
            })?;
            debug_assert_eq!(e1, end);
            let d = (sz * sz + sp * sp - 2.0 * sz * sp * cosg).sqrt();
            g1 = same_end_cut
                * phi_zp
                * (-k * d).exp()
                * d.powi(-(n as i32 - 2))
                * fnp.eval(k * d);
        }

        // G3: flat profile in |z'| times (Phi - cutoff) at z
        let flat_sp = (-kappa).exp() * sp.powi(-(n as i32 - 2)) * fnp.eval(kappa);
        let u_end = match end {
            End::Plus => harmonic.value(z.r) - phi_z_plus,
            End::Minus => (1.0 - harmonic.value(z.r)) - phi_z_minus,
        };
        let g3 = flat_sp * u_end * phi_zp;

        rows.push(ParametrixRow {
            s_prime: sp,
            k,
            resolvent: value,
            error_with: (value - g1 - g3).abs(),
            error_without: (value - g1).abs(),
        });
    }
    let pts_with: Vec<(f64, f64)> = rows.iter().map(|r| (r.s_prime, r.error_with)).collect();
    let pts_without: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.s_prime, r.error_without))
        .collect();
    let fit_with = fit_loglog(&pts_with)?;
    let fit_without = fit_loglog(&pts_without)?;
    let residual_flag = fit_with.r_squared < 0.98 || fit_without.r_squared < 0.98;
    Ok(ParametrixResult {
        rows,
        fit_with,
        fit_without,
        residual_flag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ModelManifold, WarpProfile};
    use approx::assert_relative_eq;

    #[test]
    fn cutoff_shape() {
        assert_eq!(end_cutoff(1.0, End::Plus, 0.5), 0.0);
        assert_eq!(end_cutoff(1.0, End::Plus, 2.5), 1.0);
        assert_relative_eq!(end_cutoff(1.0, End::Plus, 1.5), 0.5, max_relative = 1e-12);
        assert_eq!(end_cutoff(1.0, End::Minus, -3.0), 1.0);
        assert_eq!(end_cutoff(1.0, End::Minus, 3.0), 0.0);
    }

    #[test]
    fn flat_model_resolvent_matches_oracle() {
        let m = ModelManifold::new(3, WarpProfile::flat(), 400.0).unwrap();
        let ws = ModeWorkspace::new(m, 4000, 0.25, 64, 1e-8).unwrap();
        // aligned points, separation d
        for (r, d, k) in [(1.0, 0.5, 1.0), (2.0, 3.0, 0.3), (1.0, 6.0, 0.0)] {
            let z = PointM::on_axis(r, 3);
            let zp = PointM::on_axis(r + d, 3);
            let got = resolvent(&ws, k, &z, &zp).unwrap();
            let want = crate::special::euclidean_resolvent(3, k, d).unwrap();
            assert_relative_eq!(got, want, max_relative = 1e-7);
        }
    }

    #[test]
    fn resolvent_symmetry() {
        let p = WarpProfile::two_end(1.0, 0.5, 0.0, 0.0).unwrap();
        let m = ModelManifold::new(3, p, 400.0).unwrap();
        let ws = ModeWorkspace::new(m, 4001, 0.25, 48, 1e-8).unwrap();
        let z = PointM::with_cos(-2.0, 0.4, 3);
        let zp = PointM::on_axis(5.0, 3);
        let a = resolvent(&ws, 0.7, &z, &zp).unwrap();
        let b = resolvent(&ws, 0.7, &zp, &z).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
        assert!(a > 0.0);
    }
}
