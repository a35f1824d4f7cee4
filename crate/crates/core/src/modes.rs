//! Spherical-harmonic mode bookkeeping: eigenvalues, zonal kernels via the
//! Gegenbauer recurrence, kernel synthesis from mode data, and the reduced
//! radial operator.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{sphere_volume, ModelManifold};
use crate::grid::RadialGrid;
use crate::special::Scaled;

/// Eigenvalue of the sphere Laplacian on degree-j harmonics, `j (j + n - 2)`.
pub fn sphere_eigenvalue(j: usize, n: usize) -> f64 {
    (j * (j + n - 2)) as f64
}

/// Zonal kernels `Z_j(cos gamma)` for j = 0..=j_max.
///
/// Summing `u_j(r, r') Z_j(omega . omega')` over j reconstructs a
/// rotation-invariant two-point kernel from its mode data. For n = 3 this is
/// `(2j+1)/(4 pi) P_j`; general n goes through the Gegenbauer three-term
/// recurrence with parameter `(n-2)/2`.
pub fn zonal_all(j_max: usize, cos_gamma: f64, n: usize) -> Result<Vec<f64>> {
    if !(-1.0..=1.0).contains(&cos_gamma) {
        return Err(Error::OutOfDomain(format!("cos gamma = {cos_gamma}")));
    }
    let lam = 0.5 * (n as f64 - 2.0);
    let vol = sphere_volume(n - 1);
    let mut out = Vec::with_capacity(j_max + 1);
    let mut c_prev = 1.0; // C_0
    let mut c_cur = 2.0 * lam * cos_gamma; // C_1
    for j in 0..=j_max {
        let c_j = if j == 0 {
            c_prev
        } else if j == 1 {
            c_cur
        } else {
            let jf = j as f64;
            let next = (2.0 * cos_gamma * (jf + lam - 1.0) * c_cur
                - (jf + 2.0 * lam - 2.0) * c_prev)
                / jf;
            c_prev = c_cur;
            c_cur = next;
            next
        };
        let weight = (2.0 * j as f64 + n as f64 - 2.0) / ((n as f64 - 2.0) * vol);
        out.push(weight * c_j);
    }
    Ok(out)
}

/// Single zonal value.
pub fn zonal(j: usize, cos_gamma: f64, n: usize) -> Result<f64> {
    Ok(zonal_all(j, cos_gamma, n)?[j])
}

/// Zonal kernels together with their derivative in `cos gamma`, needed for
/// the angular component of one-forms synthesized from mode data.
pub fn zonal_with_derivative(j_max: usize, c: f64, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let z = zonal_all(j_max, c, n)?;
    let lam = 0.5 * (n as f64 - 2.0);
    let vol = sphere_volume(n - 1);
    // dC_j/dc by differentiating the recurrence alongside it
    let mut dz = Vec::with_capacity(j_max + 1);
    let (mut cp, mut cc) = (1.0, 2.0 * lam * c);
    let (mut dp, mut dc_) = (0.0, 2.0 * lam);
    for j in 0..=j_max {
        let d_j = if j == 0 {
            dp
        } else if j == 1 {
            dc_
        } else {
            let jf = j as f64;
            let next_c = (2.0 * c * (jf + lam - 1.0) * cc - (jf + 2.0 * lam - 2.0) * cp) / jf;
            let next_d = (2.0 * (jf + lam - 1.0) * (cc + c * dc_)
                - (jf + 2.0 * lam - 2.0) * dp)
                / jf;
            cp = cc;
            cc = next_c;
            dp = dc_;
            dc_ = next_d;
            next_d
        };
        let weight = (2.0 * j as f64 + n as f64 - 2.0) / ((n as f64 - 2.0) * vol);
        dz.push(weight * d_j);
    }
    Ok((z, dz))
}

/// Result of a zonal synthesis, with the truncation diagnostics the caller
/// must inspect (or rely on `value` having passed the configured tolerance).
#[derive(Debug, Clone, Copy)]
pub struct Synthesis {
    pub value: Complex64,
    /// |last retained term| / |partial sum|
    pub last_term_rel: f64,
    /// |last term| / |second-to-last term|
    pub last_ratio: f64,
}

/// Sums `u_j Z_j(cos gamma)` in ascending j with a relative-tail refusal.
pub fn synthesize(
    mode_values: &[Scaled],
    cos_gamma: f64,
    n: usize,
    tol: f64,
) -> Result<Synthesis> {
    if mode_values.is_empty() {
        return Err(Error::Truncation { tail: 1.0, tol });
    }
    let z = zonal_all(mode_values.len() - 1, cos_gamma, n)?;
    let mut acc = crate::special::ScaledSum::new();
    let mut prev_term = 0.0f64;
    let mut last_term = 0.0f64;
    for (uj, zj) in mode_values.iter().zip(&z) {
        let term = uj.mul_c((*zj).into());
        prev_term = last_term;
        last_term = term.value().norm();
        acc.add(&term);
    }
    let value = acc.total().value();
    let scale = value.norm().max(1e-300);
    let diag = Synthesis {
        value,
        last_term_rel: last_term / scale,
        last_ratio: if prev_term > 0.0 {
            last_term / prev_term
        } else {
            0.0
        },
    };
    if diag.last_term_rel > tol {
        return Err(Error::Truncation {
            tail: diag.last_term_rel,
            tol,
        });
    }
    Ok(diag)
}

/// The mode-reduced operator `L_{j,k} u = -u'' - (n-1)(f'/f) u' +
/// [j(j+n-2)/f^2 + k^2] u`, applied by second-order finite differences on the
/// grid. One-sided stencils at the boundary nodes.
pub struct RadialOperator<'a> {
    pub model: &'a ModelManifold,
    pub grid: &'a RadialGrid,
    pub j: usize,
    pub k: Complex64,
}

impl<'a> RadialOperator<'a> {
    pub fn new(
        model: &'a ModelManifold,
        grid: &'a RadialGrid,
        j: usize,
        k: Complex64,
    ) -> Result<Self> {
        if grid.len() < 8 {
            return Err(Error::GridTooCoarse(format!("{} points", grid.len())));
        }
        Ok(RadialOperator { model, grid, j, k })
    }

    pub fn apply_c(&self, u: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.len();
        let r = &self.grid.r;
        let ev = sphere_eigenvalue(self.j, self.model.n);
        let k2 = self.k * self.k;
        let dim = self.model.n as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            let (im, ic, ip) = if i == 0 {
                (0, 1, 2)
            } else if i == n - 1 {
                (n - 3, n - 2, n - 1)
            } else {
                (i - 1, i, i + 1)
            };
            let (x0, x1, x2) = (r[im], r[ic], r[ip]);
            let (u0, u1, u2) = (u[im], u[ic], u[ip]);
            let xi = r[i];
            // Lagrange differentiation on the 3-point stencil at xi
            let d0 = (2.0 * xi - x1 - x2) / ((x0 - x1) * (x0 - x2));
            let d1 = (2.0 * xi - x0 - x2) / ((x1 - x0) * (x1 - x2));
            let d2 = (2.0 * xi - x0 - x1) / ((x2 - x0) * (x2 - x1));
            let s0 = 2.0 / ((x0 - x1) * (x0 - x2));
            let s1 = 2.0 / ((x1 - x0) * (x1 - x2));
            let s2 = 2.0 / ((x2 - x0) * (x2 - x1));
            let du = d0 * u0 + d1 * u1 + d2 * u2;
            let ddu = s0 * u0 + s1 * u1 + s2 * u2;
            let w = self.model.profile.eval(xi);
            out[i] = -ddu - (dim - 1.0) * (w.df / w.f) * du
                + (ev / (w.f * w.f) + k2) * u[i];
        }
        out
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let uc: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.apply_c(&uc).into_iter().map(|v| v.re).collect()
    }

    /// Operator applied to analytically supplied (u, u', u'') samples; used
    /// when finite-difference truncation would mask the quantity under test.
    pub fn apply_exact(&self, r: f64, u: f64, du: f64, ddu: f64) -> f64 {
        let ev = sphere_eigenvalue(self.j, self.model.n);
        let dim = self.model.n as f64;
        let w = self.model.profile.eval(r);
        -ddu - (dim - 1.0) * (w.df / w.f) * du + (ev / (w.f * w.f) + self.k.re * self.k.re - self.k.im * self.k.im) * u
    }
}
