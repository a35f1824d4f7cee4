//! Heat kernel via the tilted-contour integral over the resolvent.
//!
//! The contour runs along the rays `lambda = s e^{+-i pi/12}`; by conjugate
//! symmetry of the two rays the kernel is `Im(A)/pi` where `A` is the
//! upper-ray integral of `e^{-t lambda^2} R(lambda) 2 lambda dlambda` and the
//! resolvent is evaluated at `k = -i lambda` with `Re k > 0`.

use num_complex::Complex64;

use crate::bvp::ModeWorkspace;
use crate::error::{Error, Result};
use crate::fit::fit_loglog;
use crate::geometry::{End, Ends, PointM};
use crate::harmonic::HarmonicProfile;
use crate::modes::zonal_all;
use crate::quad::gl_rule;
use crate::report::Report;
use crate::special::{ResolventProfile, Scaled};

const RAY: f64 = std::f64::consts::PI / 12.0;

/// Contour discretization: ray angle pi/12, Gauss-Legendre in the ray
/// parameter `s` on `[0, s_max(t)]`.
#[derive(Debug, Clone, Copy)]
pub struct ContourSpec {
    pub nodes: usize,
    pub s_max_floor: f64,
}

impl Default for ContourSpec {
    fn default() -> Self {
        ContourSpec {
            nodes: 200,
            s_max_floor: 8.0,
        }
    }
}

impl ContourSpec {
    pub fn s_max(&self, t: f64) -> f64 {
        let env = 6.0 / (t * (std::f64::consts::PI / 6.0).cos()).sqrt();
        self.s_max_floor.max(env)
    }

    /// The damping envelope at the truncation point must be below 1e-12 of
    /// its peak.
    pub fn validate(&self, t: f64) -> Result<()> {
        let s = self.s_max(t);
        let mag = (-t * s * s * (std::f64::consts::PI / 6.0).cos()).exp();
        if mag > 1e-12 {
            return Err(Error::Quadrature(format!(
                "contour truncation envelope {mag:.3e} too large"
            )));
        }
        Ok(())
    }
}

/// Heat kernel values for a batch of point pairs at a common time.
///
/// Batching shares the per-contour-node mode solves across pairs; Green
/// functions for each node are evicted once the node is consumed.
pub fn heat_kernel_batch(
    ws: &ModeWorkspace,
    t: f64,
    pairs: &[(PointM, PointM)],
    spec: &ContourSpec,
    j_cap: usize,
) -> Result<Vec<f64>> {
    if t <= 0.0 {
        return Err(Error::OutOfDomain("time must be positive".into()));
    }
    spec.validate(t)?;
    let smax = spec.s_max(t);
    let (xs, wts) = gl_rule(spec.nodes);
    let ray = Complex64::new(0.0, RAY).exp();
    let n = ws.model.n;
    let jcap = j_cap.min(ws.j_max);
    // per pair, per mode accumulator of the contour integral
    let mut acc = vec![vec![0.0f64; jcap + 1]; pairs.len()];
    let mut imag_resid: f64 = 0.0;
    for (x, w) in xs.iter().zip(&wts) {
        let s = 0.5 * smax * (x + 1.0);
        let wgt = 0.5 * smax * w;
        if s == 0.0 {
            continue;
        }
        let lambda = s * ray;
        let k = Complex64::new(0.0, -1.0) * lambda; // Re k > 0 on this ray
        let damp = Scaled {
            m: Complex64::new(0.0, -t * s * s * (2.0 * RAY).sin()).exp(),
            log: -t * s * s * (2.0 * RAY).cos(),
        };
        let factor = 2.0 * lambda * ray * wgt;
        for j in 0..=jcap {
            let g = ws.green(j, k)?;
            for (pi, (z, zp)) in pairs.iter().enumerate() {
                let u = g.eval(z.r, zp.r)?;
                let term = u.mul(&damp).value() * factor;
                acc[pi][j] += term.im / std::f64::consts::PI;
                imag_resid = imag_resid.max(term.re.abs());
            }
        }
        ws.evict_k(k);
    }
    // zonal resummation with the truncation diagnostic
    let mut out = Vec::with_capacity(pairs.len());
    for (pi, (z, zp)) in pairs.iter().enumerate() {
        let c = z.cos_angle(zp);
        let zs = zonal_all(jcap, c, n)?;
        let mut total = 0.0;
        let mut last = 0.0;
        for j in 0..=jcap {
            last = (acc[pi][j] * zs[j]).abs();
            total += acc[pi][j] * zs[j];
        }
        if last > ws.trunc_tol * total.abs().max(1e-300) && last > 1e-300 {
            return Err(Error::Truncation {
                tail: last / total.abs().max(1e-300),
                tol: ws.trunc_tol,
            });
        }
        out.push(total);
    }
    Ok(out)
}

pub fn heat_kernel(
    ws: &ModeWorkspace,
    t: f64,
    z: &PointM,
    zp: &PointM,
    spec: &ContourSpec,
    j_cap: usize,
) -> Result<f64> {
    Ok(heat_kernel_batch(ws, t, std::slice::from_ref(&(z.clone(), zp.clone())), spec, j_cap)?[0])
}

/// Checks the closed contour identity
/// `(1/pi i) int_Gamma e^{-sigma^2 L^2} e^{iL} f_n(L) L dL
///  = (4 pi)^{-n/2} sigma^{-n} e^{-1/(4 sigma^2)}`.
pub fn contour_identity(n: usize, sigma: f64, nodes: usize) -> Result<(f64, f64, f64)> {
    if sigma <= 0.0 {
        return Err(Error::OutOfDomain("sigma must be positive".into()));
    }
    let fnp = ResolventProfile::new(n)?;
    let cos30 = (2.0 * RAY).cos();
    let umax = (10.0f64).max(6.5 / (sigma * cos30.sqrt()));
    let ray = Complex64::new(0.0, RAY).exp();
    let (xs, wts) = gl_rule(nodes);
    let mut lhs = 0.0;
    for (x, w) in xs.iter().zip(&wts) {
        let u = 0.5 * umax * (x + 1.0);
        let wgt = 0.5 * umax * w;
        let lam = u * ray;
        let integrand = (-sigma * sigma * lam * lam).exp()
            * (Complex64::new(0.0, 1.0) * lam).exp()
            * fnp.eval_c(lam)
            * lam
            * ray;
        lhs += 2.0 / std::f64::consts::PI * wgt * integrand.im;
    }
    let rhs = (4.0 * std::f64::consts::PI).powf(-0.5 * n as f64)
        * sigma.powi(-(n as i32))
        * (-1.0 / (4.0 * sigma * sigma)).exp();
    let rel = ((lhs - rhs) / rhs).abs();
    Ok((lhs, rhs, rel))
}

/// Long-time limit probe: `t^{n/2} grad^(l) H(t, z, r' omega')` against
/// `(4 pi)^{-n/2} e^{-1/(4 sigma^2)} grad^(l) Phi(z)` with `r' = sqrt(t)/sigma`.
pub fn limit_experiment(
    ws: &ModeWorkspace,
    harmonic: &HarmonicProfile,
    z: &PointM,
    sigma: f64,
    l: usize,
    t_list: &[f64],
    spec: &ContourSpec,
    j_cap: usize,
    tol: f64,
) -> Result<Report> {
    let n = ws.model.n;
    let model = &*ws.model;
    let mut report = Report::new(
        "heat-limit",
        &["t", "r_prime", "value", "scaled_value", "target", "rel_error", "cauchy"],
    );
    let target_const = (4.0 * std::f64::consts::PI).powf(-0.5 * n as f64)
        * (-1.0 / (4.0 * sigma * sigma)).exp();
    let target = match l {
        0 => target_const * harmonic.value(z.r),
        1 => target_const * harmonic.derivative(z.r),
        _ => return Err(Error::OutOfDomain("only l = 0, 1 supported".into())),
    };
    let cosg = 0.25;
    let mut prev_scaled: Option<f64> = None;
    for &t in t_list {
        let sp = t.sqrt() / sigma;
        let exact_floor = 1.5 * model.profile.neck_radius;
        if sp < exact_floor {
            return Err(Error::OutOfDomain(format!(
                "probe radius {sp:.3} leaves the exact region"
            )));
        }
        let r_prime = match model.ends() {
            Ends::One => sp,
            Ends::Two => sp + model.profile.c_plus,
        };
        if r_prime > model.r_max {
            return Err(Error::OutOfDomain(format!("probe radius {r_prime} beyond r_max")));
        }
        let zp = PointM::with_cos(r_prime, cosg, n);
        let value = match l {
            0 => heat_kernel(ws, t, z, &zp, spec, j_cap)?,
            _ => {
                let h = 1e-3 * (1.0 + z.r.abs());
                let zp1 = PointM { r: z.r + h, omega: z.omega.clone() };
                let zm1 = PointM { r: z.r - h, omega: z.omega.clone() };
                let zp2 = PointM { r: z.r + 0.5 * h, omega: z.omega.clone() };
                let zm2 = PointM { r: z.r - 0.5 * h, omega: z.omega.clone() };
                let vals = heat_kernel_batch(
                    ws,
                    t,
                    &[
                        (zp1, zp.clone()),
                        (zm1, zp.clone()),
                        (zp2, zp.clone()),
                        (zm2, zp.clone()),
                    ],
                    spec,
                    j_cap,
                )?;
                let d_full = (vals[0] - vals[1]) / (2.0 * h);
                let d_half = (vals[2] - vals[3]) / h;
                if (d_full - d_half).abs() > 1e-2 * d_half.abs().max(1e-300) {
                    report.note(format!(
                        "richardson check at t={t}: step-halving changes the derivative by {:.2e} relative",
                        ((d_full - d_half) / d_half.abs().max(1e-300)).abs()
                    ));
                }
                d_half
            }
        };
        let scaled = t.powf(0.5 * n as f64) * value;
        let rel = (scaled - target).abs() / target.abs().max(1e-300);
        let cauchy = prev_scaled.map(|p| (scaled - p).abs() / target.abs().max(1e-300)).unwrap_or(f64::NAN);
        report.push_row(vec![t, sp, value, scaled, target, rel, cauchy]);
        prev_scaled = Some(scaled);
    }
    let last_rel = report.rows.last().map(|r| r[5]).unwrap_or(f64::NAN);
    report.check_abs(&format!("heat-limit l={l} relative error at largest t"), last_rel, 0.0, tol);
    if l == 1 {
        let last_scaled = report.rows.last().map(|r| r[3]).unwrap_or(0.0);
        report.check_that(
            "scaled gradient sequence is non-vanishing",
            last_scaled.abs() > 0.2 * target.abs(),
        );
    }
    Ok(report)
}

/// Off-diagonal decay: both points to infinity with `sqrt(t)/r -> sigma`,
/// `sqrt(t)/r' -> sigma'`. Cross-end pairs decay like `t^{-(n-1)}`, same-end
/// pairs like `t^{-n/2}`.
pub fn offdiagonal_experiment(
    ws: &ModeWorkspace,
    sigma: f64,
    sigma_p: f64,
    t_list: &[f64],
    same_end: bool,
    spec: &ContourSpec,
    j_cap: usize,
) -> Result<(Report, f64)> {
    let model = &*ws.model;
    let n = model.n;
    if model.ends() != Ends::Two {
        return Err(Error::InvalidModel("off-diagonal probe needs two ends".into()));
    }
    let mut report = Report::new(
        "heat-offdiag",
        &["t", "value", "scaled_value", "cauchy"],
    );
    let cosg = 0.2;
    let power = if same_end { 0.5 * n as f64 } else { n as f64 - 1.0 };
    let mut pts = Vec::new();
    let mut prev: Option<f64> = None;
    let mut q_last = f64::NAN;
    for &t in t_list {
        let s = t.sqrt() / sigma;
        let sp = t.sqrt() / sigma_p;
        let floor = 1.5 * model.profile.neck_radius;
        if s < floor || sp < floor {
            return Err(Error::OutOfDomain("probe radius leaves the exact region".into()));
        }
        let (z, zp) = if same_end {
            (
                PointM::on_axis(s + model.profile.c_plus, n),
                PointM::with_cos(sp + model.profile.c_plus, cosg, n),
            )
        } else {
            (
                PointM::on_axis(-(s + model.profile.c_minus), n),
                PointM::with_cos(sp + model.profile.c_plus, cosg, n),
            )
        };
        let h = heat_kernel(ws, t, &z, &zp, spec, j_cap)?;
        let scaled = t.powf(power) * h;
        let cauchy = prev.map(|p| (scaled - p).abs() / scaled.abs().max(1e-300)).unwrap_or(f64::NAN);
        report.push_row(vec![t, h, scaled, cauchy]);
        pts.push((t, h.abs().max(1e-300)));
        prev = Some(scaled);
        q_last = scaled;
    }
    let fit = fit_loglog(&pts)?;
    report.fit("log-log slope of H vs t", &fit, Some(-power), None);
    Ok((report, q_last))
}

/// Total heat mass `int H(t, z, .) dvol` via the j = 0 mode, with closed-form
/// tails beyond the truncation radius (n = 3).
pub fn mass_integral(ws: &ModeWorkspace, t: f64, z: &PointM, spec: &ContourSpec) -> Result<f64> {
    if ws.model.n != 3 {
        return Err(Error::UnsupportedDimension(ws.model.n));
    }
    spec.validate(t)?;
    let smax = spec.s_max(t);
    let (xs, wts) = gl_rule(spec.nodes);
    let ray = Complex64::new(0.0, RAY).exp();
    let grid = ws.grid.clone();
    let model = ws.model.clone();
    let ones: Vec<Scaled> = grid
        .r
        .iter()
        .map(|&r| Scaled::from_f(model.profile.eval(r).f.powi(model.n as i32 - 1)))
        .collect();
    let mut total = 0.0;
    for (x, w) in xs.iter().zip(&wts) {
        let s = 0.5 * smax * (x + 1.0);
        let wgt = 0.5 * smax * w;
        if s == 0.0 {
            continue;
        }
        let lambda = s * ray;
        let k = Complex64::new(0.0, -1.0) * lambda;
        let g = ws.green(0, k)?;
        let samples = ws.sample_green(&g)?;
        // prefix quadrature of the Green function against 1
        let (u, _du) = crate::bvp::apply_sampled(&grid, &samples, &ones);
        let mut val = grid.interp_scaled(&u, z.r).value();
        // closed-form tails: integral of dec(s) s^2 beyond the grid (n = 3)
        let tail = |s0: f64| -> Complex64 {
            // dec(s) = sqrt(pi/(2k)) e^{-ks}/s; integral of dec * s^2 from s0
            (std::f64::consts::PI / (2.0 * k)).sqrt()
                * (-k * s0).exp()
                * (s0 / k + 1.0 / (k * k))
        };
        let (pmz, _) = g.eval_solution(&g.psi_minus, 3, z.r, None)?;
        let (ppz, _) = g.eval_solution(&g.psi_plus, 3, z.r, None)?;
        let c = samples.wronskian.neg();
        let s_plus = model.r_max - model.profile.c_plus;
        let s_minus = model.r_max - model.profile.c_minus;
        // psi_plus is exactly dec on the + tail; psi_minus exactly dec on the - tail
        let tail_plus = pmz.div(&c).value() * tail(s_plus);
        let tail_minus = ppz.div(&c).value() * tail(s_minus);
        val += tail_plus + tail_minus;
        let damp = Scaled {
            m: Complex64::new(0.0, -t * s * s * (2.0 * RAY).sin()).exp(),
            log: -t * s * s * (2.0 * RAY).cos(),
        };
        let term = damp.value() * val * 2.0 * lambda * ray * wgt;
        total += term.im / std::f64::consts::PI;
        ws.evict_k(k);
    }
    Ok(total)
}

/// Mode-level semigroup composition `int H^t_j(r, rho) H^s_j(rho, r') w(rho)
/// drho` compared against `H^{t+s}_j(r, r')`, resummed over modes.
pub fn semigroup_check(
    ws: &ModeWorkspace,
    t1: f64,
    t2: f64,
    z: &PointM,
    zp: &PointM,
    spec: &ContourSpec,
    j_cap: usize,
) -> Result<(f64, f64)> {
    let grid = ws.grid.clone();
    let model = ws.model.clone();
    let n = model.n;
    let cols_t = heat_mode_columns(ws, t1, z.r, spec, j_cap)?;
    let cols_s = heat_mode_columns(ws, t2, zp.r, spec, j_cap)?;
    let weight: Vec<f64> = grid
        .r
        .iter()
        .map(|&r| model.profile.eval(r).f.powi(n as i32 - 1))
        .collect();
    let c = z.cos_angle(zp);
    let zs = zonal_all(j_cap, c, n)?;
    let mut lhs = 0.0;
    for j in 0..=j_cap {
        let prod: Vec<f64> = cols_t[j]
            .iter()
            .zip(&cols_s[j])
            .zip(&weight)
            .map(|((a, b), w)| a * b * w)
            .collect();
        lhs += grid.integrate(&prod) * zs[j];
    }
    let rhs = heat_kernel(ws, t1 + t2, z, zp, spec, j_cap)?;
    Ok((lhs, rhs))
}

/// Per-mode heat columns `H_j(t, r, rho)` over all grid nodes rho.
fn heat_mode_columns(
    ws: &ModeWorkspace,
    t: f64,
    r: f64,
    spec: &ContourSpec,
    j_cap: usize,
) -> Result<Vec<Vec<f64>>> {
    spec.validate(t)?;
    let smax = spec.s_max(t);
    let (xs, wts) = gl_rule(spec.nodes);
    let ray = Complex64::new(0.0, RAY).exp();
    let grid = ws.grid.clone();
    let nn = grid.len();
    let mut cols = vec![vec![0.0f64; nn]; j_cap + 1];
    for (x, w) in xs.iter().zip(&wts) {
        let s = 0.5 * smax * (x + 1.0);
        let wgt = 0.5 * smax * w;
        if s == 0.0 {
            continue;
        }
        let lambda = s * ray;
        let k = Complex64::new(0.0, -1.0) * lambda;
        let damp = Scaled {
            m: Complex64::new(0.0, -t * s * s * (2.0 * RAY).sin()).exp(),
            log: -t * s * s * (2.0 * RAY).cos(),
        };
        let factor = 2.0 * lambda * ray * wgt / std::f64::consts::PI;
        let greens: Vec<_> = (0..=j_cap)
            .map(|j| ws.green(j, k))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&crate::bvp::ModeGreen> = greens.iter().map(|g| &**g).collect();
        let sampled = ws.sample_greens(&refs)?;
        for j in 0..=j_cap {
            let g = &greens[j];
            let (pmr, _) = g.eval_solution(&g.psi_minus, ws.model.n, r, None)?;
            let (ppr, _) = g.eval_solution(&g.psi_plus, ws.model.n, r, None)?;
            let cc = sampled[j].wronskian.neg();
            for i in 0..nn {
                let u = if grid.r[i] < r {
                    sampled[j].pm[i].mul(&ppr)
                } else {
                    pmr.mul(&sampled[j].pp[i])
                }
                .div(&cc);
                let term = u.mul(&damp).value() * factor;
                cols[j][i] += term.im;
            }
        }
        ws.evict_k(k);
    }
    Ok(cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn contour_identity_n3_closed_form() {
        // rhs spot values from the display
        let (lhs, rhs, rel) = contour_identity(3, 0.5, 400).unwrap();
        assert_relative_eq!(
            rhs,
            (4.0 * PI).powf(-1.5) * 8.0 * (-1.0f64).exp(),
            max_relative = 1e-14
        );
        assert!(rel < 1e-8, "lhs {lhs} rhs {rhs} rel {rel}");
        let (_, rhs2, rel2) = contour_identity(3, 2.0, 400).unwrap();
        assert_relative_eq!(
            rhs2,
            (4.0 * PI).powf(-1.5) * 0.125 * (-1.0f64 / 16.0).exp(),
            max_relative = 1e-14
        );
        assert!(rel2 < 1e-8);
    }

    #[test]
    fn contour_identity_n5() {
        let (lhs, rhs, rel) = contour_identity(5, 1.0, 400).unwrap();
        assert!(rel < 1e-8, "lhs {lhs} rhs {rhs} rel {rel}");
    }

    #[test]
    fn flat_contour_heat_matches_gaussian() {
        // pure contour engine against the flat closed-form resolvent:
        // no BVP machinery involved
        let spec = ContourSpec::default();
        for (t, d) in [(0.5, 1.0), (2.0, 3.0), (10.0, 0.7)] {
            let smax = spec.s_max(t);
            let (xs, wts) = gl_rule(400);
            let ray = Complex64::new(0.0, RAY).exp();
            let mut h = 0.0;
            for (x, w) in xs.iter().zip(&wts) {
                let s = 0.5 * smax * (x + 1.0);
                let wgt = 0.5 * smax * w;
                let lam = s * ray;
                let k = Complex64::new(0.0, -1.0) * lam;
                let res = crate::special::euclidean_resolvent_c(3, k, d).unwrap();
                let term = (-t * lam * lam).exp() * res * 2.0 * lam * ray * wgt;
                h += term.im / PI;
            }
            let want = (4.0 * PI * t).powf(-1.5) * (-d * d / (4.0 * t)).exp();
            assert_relative_eq!(h, want, max_relative = 1e-10);
        }
    }

    #[test]
    fn contour_spec_envelope() {
        let spec = ContourSpec::default();
        for t in [0.5, 5.0, 50.0] {
            spec.validate(t).unwrap();
        }
    }
}
