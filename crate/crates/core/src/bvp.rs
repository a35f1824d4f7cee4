//! Mode-reduced radial boundary value problems with transparent boundary
//! data.
//!
//! Each homogeneous solution is integrated across the neck window by a
//! Numerov march in a Liouville-transformed coordinate (no first-derivative
//! term, uniform step), seeded with exact exterior values. Outside the window
//! the solution is carried by its coefficients against the exact decaying and
//! growing end solutions, so domain truncation contributes no error. Profiles
//! are held in scaled mantissa/exponent form; the spectral parameter may be
//! complex with `Re k >= 0` (sector `|arg k| <= 5 pi / 12`).

use std::sync::Arc;

use dashmap::DashMap;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{End, Ends, ModelManifold, PointM};
use crate::grid::RadialGrid;
use crate::modes::{sphere_eigenvalue, synthesize, Synthesis};
use crate::special::{end_solutions, EndSolutions, Scaled, ScaledSum};

const MAX_ARG_K: f64 = 5.0 * std::f64::consts::PI / 12.0 + 1e-9;

/// Liouville-form potential at grid node `i` for mode `j` and parameter `k`.
fn q_tilde(model: &ModelManifold, grid: &RadialGrid, j: usize, k: Complex64, i: usize) -> Complex64 {
    let w = model.profile.eval(grid.r[i]);
    let nm = model.n as f64;
    let fp = w.df / w.f;
    let liouville = 0.5 * (nm - 1.0) * w.ddf / w.f + 0.25 * (nm - 1.0) * (nm - 3.0) * fp * fp;
    let v = sphere_eigenvalue(j, model.n) / (w.f * w.f);
    let rp = grid.rp[i];
    let rpp = grid.rpp[i];
    let rppp = grid.rppp[i];
    let q = Complex64::new(liouville + v, 0.0) + k * k;
    rp * rp * q + Complex64::new(-rppp / (2.0 * rp) + 0.75 * (rpp / rp) * (rpp / rp), 0.0)
}

/// Converts `(psi, dpsi/dr)` at node `i` to the Liouville variable `(v, dv/dxi)`.
fn psi_to_v(model: &ModelManifold, grid: &RadialGrid, i: usize, psi: Scaled, dpsi: Scaled) -> (Scaled, Scaled) {
    let w = model.profile.eval(grid.r[i]);
    let nm = model.n as f64;
    let rp = grid.rp[i];
    let rpp = grid.rpp[i];
    let fpow = w.f.powf(0.5 * (nm - 1.0));
    let srp = rp.sqrt();
    // v = psi f^{(n-1)/2} / sqrt(r')
    let v = psi.mul_c((fpow / srp).into());
    // dv/dxi = sqrt(r') [psi' f^{(n-1)/2} + psi (n-1)/2 f^{(n-3)/2} f']
    //          - psi f^{(n-1)/2} r'' / (2 r'^{3/2})
    let t1 = dpsi
        .mul_c((fpow * srp).into())
        .add(&psi.mul_c((srp * 0.5 * (nm - 1.0) * w.f.powf(0.5 * (nm - 3.0)) * w.df).into()));
    let t2 = psi.mul_c((fpow * rpp / (2.0 * rp * srp)).into());
    (v, t1.add(&t2.neg()))
}

/// Inverse of `psi_to_v`: `psi = v sqrt(r') f^{-(n-1)/2}` and
/// `dpsi/dr = (1/r') d/dxi [ v sqrt(r') f^{-(n-1)/2} ]`.
fn v_to_psi(model: &ModelManifold, grid: &RadialGrid, i: usize, v: Scaled, dv: Scaled) -> (Scaled, Scaled) {
    let w = model.profile.eval(grid.r[i]);
    let nm = model.n as f64;
    let rp = grid.rp[i];
    let rpp = grid.rpp[i];
    let fpow = w.f.powf(0.5 * (nm - 1.0));
    let srp = rp.sqrt();
    let psi = v.mul_c((srp / fpow).into());
    let dfpow_dxi = 0.5 * (nm - 1.0) * w.f.powf(0.5 * (nm - 3.0)) * w.df * rp;
    let d_pref = rpp / (2.0 * srp) / fpow - srp * dfpow_dxi / (fpow * fpow);
    let dpsi = dv
        .mul_c((srp / fpow).into())
        .add(&v.mul_c(d_pref.into()))
        .mul_c((1.0 / rp).into());
    (psi, dpsi)
}

/// Which side of the grid a radius falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Region {
    Window,
    PlusExact,
    MinusExact,
}

/// Exterior basis `(dec, gro)` values and `d/dr` derivatives for all modes at
/// one radius, with the Minus-side orientation already applied.
pub struct PointBasis {
    pub r: f64,
    region: Region,
    sols: Option<EndSolutions>,
}

/// One homogeneous solution of `L_{j,k} psi = 0`, decaying at the given end.
#[derive(Debug, Clone)]
pub struct HomSolution {
    pub decay_end: End,
    first: usize,
    vals: Vec<Scaled>,
    dvals: Vec<Scaled>,
    /// coefficients (alpha, beta) against (dec, gro) on the + exact region
    plus_coeffs: (Scaled, Scaled),
    /// same on the - exact region (two-end models)
    minus_coeffs: Option<(Scaled, Scaled)>,
}

/// Sturm-Liouville mode Green function built from two decaying homogeneous
/// solutions and their weighted Wronskian.
pub struct ModeGreen {
    pub j: usize,
    pub k: Complex64,
    pub psi_minus: HomSolution,
    pub psi_plus: HomSolution,
    /// weighted Wronskian `f^{n-1} (psi_- psi_+' - psi_-' psi_+)`
    pub wronskian: Scaled,
    /// relative variation of the Wronskian across probe nodes
    pub wronskian_variation: f64,
    model: Arc<ModelManifold>,
    grid: Arc<RadialGrid>,
}

/// Solver workspace: model, grid and a concurrent cache of mode Green
/// functions keyed by `(j, k)`.
pub struct ModeWorkspace {
    pub model: Arc<ModelManifold>,
    pub grid: Arc<RadialGrid>,
    pub j_max: usize,
    pub trunc_tol: f64,
    greens: DashMap<(usize, u64, u64), Arc<ModeGreen>>,
}

fn key_of(j: usize, k: Complex64) -> (usize, u64, u64) {
    (j, k.re.to_bits(), k.im.to_bits())
}

fn check_k(k: Complex64) -> Result<()> {
    if k.norm() == 0.0 {
        return Ok(());
    }
    if k.re < 0.0 || k.arg().abs() > MAX_ARG_K {
        return Err(Error::BadSpectralParameter(format!("{k}")));
    }
    Ok(())
}

impl ModeWorkspace {
    pub fn new(model: ModelManifold, grid_points: usize, grading: f64, j_max: usize, trunc_tol: f64) -> Result<Self> {
        let grid = RadialGrid::for_model(&model, grid_points, grading)?;
        Ok(ModeWorkspace {
            model: Arc::new(model),
            grid: Arc::new(grid),
            j_max,
            trunc_tol,
            greens: DashMap::new(),
        })
    }

    /// Defaults used throughout the experiments: 6001 nodes, grading 0.25,
    /// 64 modes, refusal at 1e-8 relative tail.
    pub fn with_defaults(model: ModelManifold) -> Result<Self> {
        Self::new(model, 6001, 0.25, 64, 1e-8)
    }

    pub fn clear_cache(&self) {
        self.greens.clear();
    }

    /// End coordinate of a radius on the named exact region.
    fn s_of(&self, region: Region, r: f64) -> f64 {
        match region {
            Region::PlusExact => match self.model.ends() {
                Ends::One => r,
                Ends::Two => r - self.model.profile.c_plus,
            },
            Region::MinusExact => -r - self.model.profile.c_minus,
            Region::Window => unreachable!(),
        }
    }

    fn region_of(&self, r: f64) -> Result<Region> {
        let g = &self.grid;
        let (w0, w1) = g.window;
        if r > self.model.r_max + 1e-9 || r < self.model.r_lo() - 1e-9 {
            return Err(Error::OutOfDomain(format!("r = {r}")));
        }
        if r >= g.r[w1] {
            Ok(Region::PlusExact)
        } else if r <= g.r[w0] {
            match self.model.ends() {
                Ends::Two => Ok(Region::MinusExact),
                Ends::One => Ok(Region::Window), // one-end window starts at the first node
            }
        } else {
            Ok(Region::Window)
        }
    }

    /// Exterior basis at a point, shared across modes.
    pub fn point_basis(&self, k: Complex64, r: f64, j_max: usize) -> Result<PointBasis> {
        let region = self.region_of(r)?;
        let sols = match region {
            Region::Window => None,
            _ => Some(end_solutions(self.model.n, j_max, k, self.s_of(region, r))),
        };
        Ok(PointBasis { r, region, sols })
    }

    /// Solves the homogeneous problem for mode `j`, parameter `k`, decaying at
    /// `end`. One-end models impose regularity at the origin for `end = Minus`.
    pub fn solve_homogeneous(&self, j: usize, k: Complex64, end: End) -> Result<HomSolution> {
        check_k(k)?;
        let model = &*self.model;
        let grid = &*self.grid;
        let n_nodes = grid.len();
        let (w0, w1) = grid.window;
        let a = w0.saturating_sub(2);
        let b = (w1 + 2).min(n_nodes - 1);
        let h = grid.dxi;

        // precompute Q on the march range
        let q: Vec<Complex64> = (a..=b).map(|i| q_tilde(model, grid, j, k, i)).collect();
        for (off, qq) in q.iter().enumerate() {
            if (h * h * qq / 12.0).norm() > 0.9 {
                return Err(Error::GridTooCoarse(format!(
                    "numerov factor {:.2} at node {}",
                    (h * h * qq / 12.0).norm(),
                    a + off
                )));
            }
        }
        let len = b - a + 1;
        let mut vals = vec![Scaled::zero(); len];

        let seed_pair = |i0: usize, i1: usize| -> Result<(Scaled, Scaled)> {
            // exact psi at two nodes, converted to the Liouville variable
            let mut out = (Scaled::zero(), Scaled::zero());
            for (slot, &i) in [i0, i1].iter().enumerate() {
                let region = if grid.r[i] > 0.0 { Region::PlusExact } else { Region::MinusExact };
                let s = self.s_of(region, grid.r[i]);
                let sols = end_solutions(model.n, j, k, s);
                let (val, der_s) = match (end, region) {
                    (End::Plus, Region::PlusExact) => sols.dec[j],
                    (End::Minus, Region::MinusExact) => sols.dec[j],
                    (End::Minus, Region::PlusExact) => sols.gro[j], // one-end regular seed
                    _ => unreachable!(),
                };
                let dpsi = if region == Region::MinusExact { der_s.neg() } else { der_s };
                let (v, _dv) = psi_to_v(model, grid, i, val, dpsi);
                if slot == 0 {
                    out.0 = v;
                } else {
                    out.1 = v;
                }
            }
            Ok(out)
        };

        match (model.ends(), end) {
            (Ends::Two, End::Plus) => {
                // seed at the right edge, march leftward
                let (vb, vbm1) = seed_pair(b, b - 1)?;
                vals[len - 1] = vb;
                vals[len - 2] = vbm1;
                self.march_down(&q, h, &mut vals)?;
            }
            (Ends::Two, End::Minus) => {
                let (va, vap1) = seed_pair(a, a + 1)?;
                vals[0] = va;
                vals[1] = vap1;
                self.march_up(&q, h, &mut vals)?;
            }
            (Ends::One, End::Plus) => {
                let (vb, vbm1) = seed_pair(b, b - 1)?;
                vals[len - 1] = vb;
                vals[len - 2] = vbm1;
                self.march_down(&q, h, &mut vals)?;
            }
            (Ends::One, End::Minus) => {
                // regularity at the origin: seed with the exact growing solution
                let mut seeds = (Scaled::zero(), Scaled::zero());
                for (slot, i) in [a, a + 1].into_iter().enumerate() {
                    let sols = end_solutions(model.n, j, k, grid.r[i]);
                    let (val, der) = sols.gro[j];
                    let (v, _) = psi_to_v(model, grid, i, val, der);
                    if slot == 0 {
                        seeds.0 = v;
                    } else {
                        seeds.1 = v;
                    }
                }
                vals[0] = seeds.0;
                vals[1] = seeds.1;
                self.march_up(&q, h, &mut vals)?;
            }
        }

        // 4th-order derivative recovery: v' = [v_{i+1} - v_{i-1} - h^2/6 (Q_{i+1} v_{i+1} - Q_{i-1} v_{i-1})] / 2h
        let mut dvals = vec![Scaled::zero(); len];
        for i in 1..len - 1 {
            let up = vals[i + 1].mul_c(Complex64::new(1.0, 0.0) - h * h / 6.0 * q[i + 1]);
            let dn = vals[i - 1].mul_c(Complex64::new(1.0, 0.0) - h * h / 6.0 * q[i - 1]);
            dvals[i] = up.add(&dn.neg()).mul_c((1.0 / (2.0 * h)).into());
        }
        dvals[0] = dvals[1];
        dvals[len - 1] = dvals[len - 2];
        // exact derivatives at the pure closed-form edge improve the edge cells
        match (model.ends(), end) {
            (Ends::One, End::Minus) => {
                let sols = end_solutions(model.n, j, k, grid.r[a]);
                let (val, der) = sols.gro[j];
                let (_, dv) = psi_to_v(model, grid, a, val, der);
                dvals[0] = dv;
            }
            (_, End::Plus) => {
                let region = Region::PlusExact;
                let s = self.s_of(region, grid.r[b]);
                let sols = end_solutions(model.n, j, k, s);
                let (val, der) = sols.dec[j];
                let (_, dv) = psi_to_v(model, grid, b, val, der);
                dvals[len - 1] = dv;
            }
            (Ends::Two, End::Minus) => {
                let region = Region::MinusExact;
                let s = self.s_of(region, grid.r[a]);
                let sols = end_solutions(model.n, j, k, s);
                let (val, der) = sols.dec[j];
                let (v, dv) = psi_to_v(model, grid, a, val, der.neg());
                let _ = v;
                dvals[0] = dv;
            }
        }

        let mut sol = HomSolution {
            decay_end: end,
            first: a,
            vals,
            dvals,
            plus_coeffs: (Scaled::zero(), Scaled::zero()),
            minus_coeffs: None,
        };

        // attach exterior coefficients on the far side of the march
        match (model.ends(), end) {
            (Ends::Two, End::Plus) => {
                sol.plus_coeffs = (Scaled::from_f(1.0), Scaled::zero());
                sol.minus_coeffs = Some(self.match_coeffs(&sol, j, k, Region::MinusExact, a + 1)?);
            }
            (Ends::Two, End::Minus) => {
                sol.minus_coeffs = Some((Scaled::from_f(1.0), Scaled::zero()));
                sol.plus_coeffs = self.match_coeffs(&sol, j, k, Region::PlusExact, b - 1)?;
            }
            (Ends::One, End::Plus) => {
                sol.plus_coeffs = (Scaled::from_f(1.0), Scaled::zero());
            }
            (Ends::One, End::Minus) => {
                sol.plus_coeffs = self.match_coeffs(&sol, j, k, Region::PlusExact, b - 1)?;
            }
        }
        Ok(sol)
    }

    fn march_up(&self, q: &[Complex64], h: f64, vals: &mut [Scaled]) -> Result<()> {
        let len = vals.len();
        let c = h * h / 12.0;
        let mut prev = vals[0];
        let mut cur = vals[1];
        for i in 1..len - 1 {
            let num = cur.mul_c(2.0 * (Complex64::new(1.0, 0.0) + 5.0 * c * q[i]))
                .add(&prev.mul_c(Complex64::new(1.0, 0.0) - c * q[i - 1]).neg());
            let next = num.mul_c(1.0 / (Complex64::new(1.0, 0.0) - c * q[i + 1]));
            vals[i + 1] = next;
            prev = cur;
            cur = next;
        }
        Ok(())
    }

    fn march_down(&self, q: &[Complex64], h: f64, vals: &mut [Scaled]) -> Result<()> {
        let len = vals.len();
        let c = h * h / 12.0;
        let mut prev = vals[len - 1];
        let mut cur = vals[len - 2];
        for i in (1..len - 1).rev() {
            let num = cur.mul_c(2.0 * (Complex64::new(1.0, 0.0) + 5.0 * c * q[i]))
                .add(&prev.mul_c(Complex64::new(1.0, 0.0) - c * q[i + 1]).neg());
            let next = num.mul_c(1.0 / (Complex64::new(1.0, 0.0) - c * q[i - 1]));
            vals[i - 1] = next;
            prev = cur;
            cur = next;
        }
        Ok(())
    }

    /// Matches the marched solution to `(dec, gro)` coefficients at node `i`.
    fn match_coeffs(&self, sol: &HomSolution, j: usize, k: Complex64, region: Region, i: usize) -> Result<(Scaled, Scaled)> {
        let model = &*self.model;
        let grid = &*self.grid;
        let idx = i - sol.first;
        let (psi, dpsi) = v_to_psi(model, grid, i, sol.vals[idx], sol.dvals[idx]);
        let s = self.s_of(region, grid.r[i]);
        let sols = end_solutions(model.n, j, k, s);
        let (dv, dd_s) = sols.dec[j];
        let (gv, gd_s) = sols.gro[j];
        let sign = if region == Region::MinusExact { -1.0 } else { 1.0 };
        let dd = dd_s.mul_c(sign.into());
        let gd = gd_s.mul_c(sign.into());
        // alpha dec + beta gro = psi ; alpha dec' + beta gro' = psi'
        let denom = dv.mul(&gd).add(&dd.mul(&gv).neg());
        if denom.is_zero() {
            return Err(Error::DegenerateWronskian(0.0));
        }
        let alpha = psi.mul(&gd).add(&dpsi.mul(&gv).neg()).div(&denom);
        let beta = dv.mul(&dpsi).add(&dd.mul(&psi).neg()).div(&denom);
        Ok((alpha, beta))
    }

    /// The mode Green function for `(j, k)`, built from two homogeneous
    /// solutions and cached.
    pub fn green(&self, j: usize, k: Complex64) -> Result<Arc<ModeGreen>> {
        let key = key_of(j, k);
        if let Some(g) = self.greens.get(&key) {
            return Ok(g.clone());
        }
        let psi_minus = self.solve_homogeneous(j, k, End::Minus)?;
        let psi_plus = self.solve_homogeneous(j, k, End::Plus)?;
        let green = self.assemble_green(j, k, psi_minus, psi_plus)?;
        let arc = Arc::new(green);
        self.greens.insert(key, arc.clone());
        Ok(arc)
    }

    fn assemble_green(&self, j: usize, k: Complex64, psi_minus: HomSolution, psi_plus: HomSolution) -> Result<ModeGreen> {
        let grid = &*self.grid;
        let (w0, w1) = grid.window;
        let mut probes: Vec<usize> = (0..5).map(|t| w0 + t * (w1 - w0) / 4).collect();
        probes.dedup();
        let mut ws: Vec<Scaled> = Vec::new();
        let g = ModeGreen {
            j,
            k,
            psi_minus,
            psi_plus,
            wronskian: Scaled::zero(),
            wronskian_variation: 0.0,
            model: self.model.clone(),
            grid: self.grid.clone(),
        };
        for &i in &probes {
            let (pm, dpm) = g.eval_solution(&g.psi_minus, self.model.n, grid.r[i], None)?;
            let (pp, dpp) = g.eval_solution(&g.psi_plus, self.model.n, grid.r[i], None)?;
            let f = self.model.profile.eval(grid.r[i]).f;
            let w = pm
                .mul(&dpp)
                .add(&dpm.mul(&pp).neg())
                .mul_c(f.powi(self.model.n as i32 - 1).into());
            ws.push(w);
        }
        // constancy: compare log-magnitudes and values
        let lead = ws
            .iter()
            .max_by(|x, y| x.ln_abs().total_cmp(&y.ln_abs()))
            .copied()
            .unwrap();
        if lead.is_zero() {
            return Err(Error::DegenerateWronskian(0.0));
        }
        let mut var: f64 = 0.0;
        for w in &ws {
            let rel = w.add(&lead.neg()).ln_abs() - lead.ln_abs();
            var = var.max(rel.exp());
        }
        // degenerate if |W| is tiny against the solution scale at the mid probe
        let mid = probes[probes.len() / 2];
        let (pm, _) = g.eval_solution(&g.psi_minus, self.model.n, grid.r[mid], None)?;
        let (pp, dpp) = g.eval_solution(&g.psi_plus, self.model.n, grid.r[mid], None)?;
        let f = self.model.profile.eval(grid.r[mid]).f;
        let scale = pm.mul(&dpp).mul_c(f.powi(self.model.n as i32 - 1).into());
        let _ = pp;
        let rel_w = (lead.ln_abs() - scale.ln_abs()).exp();
        if !rel_w.is_finite() || rel_w < 1e-12 {
            return Err(Error::DegenerateWronskian(rel_w));
        }
        let mut out = g;
        out.wronskian = lead;
        out.wronskian_variation = var;
        Ok(out)
    }

    /// Synthesized two-point resolvent kernel `(Delta + k^2)^{-1}(z, z')`.
    ///
    /// Modes are added in ascending order until the configured tail tolerance
    /// is met; refuses (Truncation error) when `j_max` modes do not suffice.
    pub fn resolvent_point(&self, k: Complex64, z: &PointM, zp: &PointM) -> Result<Synthesis> {
        check_k(k)?;
        let c = z.cos_angle(zp);
        let (r_lo, r_hi) = if z.r <= zp.r { (z.r, zp.r) } else { (zp.r, z.r) };
        if (r_hi - r_lo).abs() < 1e-12 && c > 1.0 - 1e-12 {
            return Err(Error::OutOfDomain("coincident points".into()));
        }
        let basis_lo = self.point_basis(k, r_lo, self.j_max)?;
        let basis_hi = self.point_basis(k, r_hi, self.j_max)?;
        let mut mode_vals: Vec<Scaled> = Vec::new();
        let zs = crate::modes::zonal_all(self.j_max, c, self.model.n)?;
        let mut sum = ScaledSum::new();
        let mut settled = 0usize;
        for j in 0..=self.j_max {
            let g = self.green(j, k)?;
            let pm = g.eval_solution(&g.psi_minus, self.model.n, r_lo, Some(&basis_lo))?.0;
            let pp = g.eval_solution(&g.psi_plus, self.model.n, r_hi, Some(&basis_hi))?.0;
            let uj = pm.mul(&pp).div(&g.wronskian.neg());
            mode_vals.push(uj);
            let term = uj.mul_c(zs[j].into());
            sum.add(&term);
            let total = sum.total();
            if !total.is_zero() && !term.is_zero() {
                let rel = (term.ln_abs() - total.ln_abs()).exp();
                if rel < 0.02 * self.trunc_tol {
                    settled += 1;
                    if settled >= 2 {
                        break;
                    }
                } else {
                    settled = 0;
                }
            } else if total.is_zero() && term.is_zero() && j > 2 {
                break;
            }
        }
        synthesize(&mode_vals, c, self.model.n, self.trunc_tol)
    }

    /// Applies the mode resolvent to nodal data `v` (the right-hand side of
    /// `L_{j,k} u = v`) by quadrature of the Green function with weight
    /// `f^{n-1}`. Returns `(u, du/dr)` at the grid nodes.
    pub fn apply_mode_resolvent(&self, j: usize, k: Complex64, v: &[Scaled]) -> Result<(Vec<Scaled>, Vec<Scaled>)> {
        let g = self.green(j, k)?;
        let samples = self.sample_green(&g)?;
        Ok(apply_sampled(&self.grid, &samples, v))
    }

    /// Samples both homogeneous solutions (values and radial derivatives) at
    /// every grid node.
    pub fn sample_green(&self, g: &ModeGreen) -> Result<SampledGreen> {
        let batch = self.sample_greens(std::slice::from_ref(&g))?;
        Ok(batch.into_iter().next().unwrap())
    }

    /// Batched sampling: the exterior ladders at each node are shared across
    /// all requested modes, which dominates the cost for multi-mode sweeps.
    /// All greens must share the same `k`.
    pub fn sample_greens(&self, gs: &[&ModeGreen]) -> Result<Vec<SampledGreen>> {
        if gs.is_empty() {
            return Ok(Vec::new());
        }
        let k = gs[0].k;
        let jmax = gs.iter().map(|g| g.j).max().unwrap();
        let n = self.model.n;
        let grid = &*self.grid;
        let nn = grid.len();
        let mut out: Vec<SampledGreen> = gs
            .iter()
            .map(|_| SampledGreen {
                pm: vec![Scaled::zero(); nn],
                dpm: vec![Scaled::zero(); nn],
                pp: vec![Scaled::zero(); nn],
                dpp: vec![Scaled::zero(); nn],
                wronskian: Scaled::zero(),
            })
            .collect();
        for (gi, g) in gs.iter().enumerate() {
            out[gi].wronskian = g.wronskian;
            if g.k != k {
                return Err(Error::InvalidModel("mixed spectral parameters in batch".into()));
            }
        }
        for i in 0..nn {
            let r = grid.r[i];
            let region = self.region_of(r)?;
            match region {
                Region::Window => {
                    for (gi, g) in gs.iter().enumerate() {
                        let (pm, dpm) = g.window_node(&g.psi_minus, i);
                        let (pp, dpp) = g.window_node(&g.psi_plus, i);
                        out[gi].pm[i] = pm;
                        out[gi].dpm[i] = dpm;
                        out[gi].pp[i] = pp;
                        out[gi].dpp[i] = dpp;
                    }
                }
                _ => {
                    let s = self.s_of(region, r);
                    let sols = end_solutions(n, jmax, k, s);
                    let sign = if region == Region::MinusExact { -1.0 } else { 1.0 };
                    for (gi, g) in gs.iter().enumerate() {
                        for (sol, slot_v, slot_d) in [
                            (&g.psi_minus, 0usize, 0usize),
                            (&g.psi_plus, 1, 1),
                        ] {
                            let (alpha, beta) = match region {
                                Region::PlusExact => sol.plus_coeffs,
                                Region::MinusExact => sol.minus_coeffs.unwrap(),
                                Region::Window => unreachable!(),
                            };
                            let (dv, dd) = sols.dec[g.j];
                            let (gv, gd) = sols.gro[g.j];
                            let val = alpha.mul(&dv).add(&beta.mul(&gv));
                            let der = alpha
                                .mul(&dd)
                                .add(&beta.mul(&gd))
                                .mul_c(sign.into());
                            if slot_v == 0 {
                                out[gi].pm[i] = val;
                                out[gi].dpm[i] = der;
                            } else {
                                out[gi].pp[i] = val;
                                out[gi].dpp[i] = der;
                            }
                            let _ = slot_d;
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Nodal samples of the two homogeneous solutions of one mode.
pub struct SampledGreen {
    pub pm: Vec<Scaled>,
    pub dpm: Vec<Scaled>,
    pub pp: Vec<Scaled>,
    pub dpp: Vec<Scaled>,
    pub wronskian: Scaled,
}

/// Green quadrature against nodal data `v` with volume weight `f^{n-1}`,
/// using prefix integrals so a full application costs O(N).
pub fn apply_sampled(grid: &RadialGrid, s: &SampledGreen, v: &[Scaled]) -> (Vec<Scaled>, Vec<Scaled>) {
    let n = grid.len();
    let mut f_minus = Vec::with_capacity(n);
    let mut f_plus = Vec::with_capacity(n);
    for i in 0..n {
        f_minus.push(s.pm[i].mul(&v[i]));
        f_plus.push(s.pp[i].mul(&v[i]));
    }
    let a_minus = grid.cumulative_scaled(&f_minus);
    let a_plus = grid.cumulative_scaled_rev(&f_plus);
    let c = s.wronskian.neg();
    let mut u = Vec::with_capacity(n);
    let mut du = Vec::with_capacity(n);
    for i in 0..n {
        let val = s.pp[i].mul(&a_minus[i]).add(&s.pm[i].mul(&a_plus[i])).div(&c);
        let der = s.dpp[i].mul(&a_minus[i]).add(&s.dpm[i].mul(&a_plus[i])).div(&c);
        u.push(val);
        du.push(der);
    }
    (u, du)
}

impl ModeGreen {
    fn window_node(&self, sol: &HomSolution, i: usize) -> (Scaled, Scaled) {
        let idx = i - sol.first;
        v_to_psi(&self.model, &self.grid, i, sol.vals[idx], sol.dvals[idx])
    }

    /// Evaluates one homogeneous solution (value, d/dr) at radius `r`.
    /// `basis` may carry pre-built exterior ladders for the point.
    pub fn eval_solution(
        &self,
        sol: &HomSolution,
        _n: usize,
        r: f64,
        basis: Option<&PointBasis>,
    ) -> Result<(Scaled, Scaled)> {
        let grid = &*self.grid;
        let (w0, w1) = grid.window;
        let in_window = r >= grid.r[w0] && r <= grid.r[w1];
        let in_window = in_window
            || (self.model.ends() == Ends::One && r <= grid.r[w1] && r >= grid.r[0] - 1e-12);
        if in_window {
            // interpolate the Liouville arrays, then convert at the exact xi
            let lo = sol.first;
            let hi = sol.first + sol.vals.len() - 1;
            let _ = (lo, hi);
            let v = interp_scaled_window(grid, sol, r, false);
            let dv = interp_scaled_window(grid, sol, r, true);
            return Ok(v_to_psi_at(&self.model, grid, r, v, dv));
        }
        // exact region: coefficients against the end basis
        let region = if r > 0.0 { Region::PlusExact } else { Region::MinusExact };
        let (alpha, beta) = match region {
            Region::PlusExact => sol.plus_coeffs,
            Region::MinusExact => sol
                .minus_coeffs
                .ok_or_else(|| Error::OutOfDomain(format!("no minus-side data at r = {r}")))?,
            Region::Window => unreachable!(),
        };
        let s = match (self.model.ends(), region) {
            (Ends::One, _) => r,
            (Ends::Two, Region::PlusExact) => r - self.model.profile.c_plus,
            (Ends::Two, Region::MinusExact) => -r - self.model.profile.c_minus,
            _ => unreachable!(),
        };
        let tmp;
        let sols: &EndSolutions = match basis {
            Some(b) if b.region == region && (b.r - r).abs() < 1e-12 && b.sols.is_some() => {
                b.sols.as_ref().unwrap()
            }
            _ => {
                tmp = end_solutions(self.model.n, self.j, self.k, s);
                &tmp
            }
        };
        let sign = if region == Region::MinusExact { -1.0 } else { 1.0 };
        let (dv, dd) = sols.dec[self.j];
        let (gv, gd) = sols.gro[self.j];
        let val = alpha.mul(&dv).add(&beta.mul(&gv));
        let der = alpha.mul(&dd).add(&beta.mul(&gd)).mul_c(sign.into());
        Ok((val, der))
    }

    /// Green kernel value `u_j(r, r')`, symmetric by construction.
    pub fn eval(&self, r: f64, rp: f64) -> Result<Scaled> {
        let (lo, hi) = if r <= rp { (r, rp) } else { (rp, r) };
        let pm = self.eval_solution(&self.psi_minus, self.model.n, lo, None)?.0;
        let pp = self.eval_solution(&self.psi_plus, self.model.n, hi, None)?.0;
        Ok(pm.mul(&pp).div(&self.wronskian.neg()))
    }
}

/// Interpolates the stored Liouville arrays near `r` (4-point Lagrange on the
/// uniform xi grid), clamped to the stored range.
fn interp_scaled_window(grid: &RadialGrid, sol: &HomSolution, r: f64, derivative: bool) -> Scaled {
    let arr = if derivative { &sol.dvals } else { &sol.vals };
    let xi = grid.xi_of_r(r);
    let t = (xi - grid.xi0) / grid.dxi - sol.first as f64;
    let n = arr.len();
    let mut i0 = (t.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    if derivative {
        // derivative array has copied endpoints; bias the stencil inward
        i0 = i0.clamp(1, n.saturating_sub(5).max(1));
        i0 = i0.min(n - 4);
    }
    let u = t - i0 as f64;
    let lmax = (0..4).map(|a| arr[i0 + a].log).fold(f64::NEG_INFINITY, f64::max);
    if lmax == f64::NEG_INFINITY {
        return Scaled::zero();
    }
    let mut m = Complex64::new(0.0, 0.0);
    for a in 0..4 {
        let mut w = 1.0;
        for bq in 0..4 {
            if a != bq {
                w *= (u - bq as f64) / (a as f64 - bq as f64);
            }
        }
        let v = &arr[i0 + a];
        if !v.is_zero() {
            m += w * v.m * (v.log - lmax).exp();
        }
    }
    Scaled { m, log: lmax }.normalized()
}

/// `psi_to_v` inverse at an off-node radius.
fn v_to_psi_at(model: &ModelManifold, grid: &RadialGrid, r: f64, v: Scaled, dv: Scaled) -> (Scaled, Scaled) {
    let w = model.profile.eval(r);
    let nm = model.n as f64;
    // mapping derivatives at the exact xi
    let (rp, rpp) = match grid.kind {
        Ends::Two => {
            let xi = grid.xi_of_r(r);
            (grid.delta * xi.cosh(), grid.delta * xi.sinh())
        }
        Ends::One => (r, r),
    };
    let fpow = w.f.powf(0.5 * (nm - 1.0));
    let srp = rp.sqrt();
    let psi = v.mul_c((srp / fpow).into());
    let dfpow_dxi = 0.5 * (nm - 1.0) * w.f.powf(0.5 * (nm - 3.0)) * w.df * rp;
    let d_pref = rpp / (2.0 * srp) / fpow - srp * dfpow_dxi / (fpow * fpow);
    let dpsi = dv
        .mul_c((srp / fpow).into())
        .add(&v.mul_c(d_pref.into()))
        .mul_c((1.0 / rp).into());
    (psi, dpsi)
}

/// Decaying exterior solution at `(n, j, k)` normalized to 1 at `r_ref`:
/// returns `(value, d/dr)` at end radius `r`.
pub fn exterior_solution(n: usize, j: usize, k: Complex64, r: f64, r_ref: f64) -> Result<(Complex64, Complex64)> {
    check_k(k)?;
    if r <= 0.0 || r_ref <= 0.0 {
        return Err(Error::OutOfDomain("end radius must be positive".into()));
    }
    if n % 2 == 0 || n < 3 {
        return Err(Error::UnsupportedDimension(n));
    }
    let here = end_solutions(n, j, k, r);
    let there = end_solutions(n, j, k, r_ref);
    let (v, d) = here.dec[j];
    let refv = there.dec[j].0;
    Ok((v.div(&refv).value(), d.div(&refv).value()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::WarpProfile;
    use approx::assert_relative_eq;

    fn flat_ws() -> ModeWorkspace {
        let m = ModelManifold::new(3, WarpProfile::flat(), 400.0).unwrap();
        ModeWorkspace::new(m, 4000, 0.25, 48, 1e-8).unwrap()
    }

    fn two_end_ws() -> ModeWorkspace {
        let p = WarpProfile::two_end(1.0, 0.5, 0.0, 0.0).unwrap();
        let m = ModelManifold::new(3, p, 400.0).unwrap();
        ModeWorkspace::new(m, 6001, 0.25, 48, 1e-8).unwrap()
    }

    #[test]
    fn exterior_solution_log_derivative() {
        // n=3, j=0, k=1: decaying solution e^{-r}/r, log-derivative -1 - 1/r
        let k = Complex64::new(1.0, 0.0);
        for r in [2.0, 7.0, 31.0] {
            let (v, d) = exterior_solution(3, 0, k, r, 400.0).unwrap();
            let ld = (d / v).re;
            assert_relative_eq!(ld, -1.0 - 1.0 / r, max_relative = 1e-12);
        }
        // k=0 power laws
        let (v, d) = exterior_solution(3, 0, Complex64::new(0.0, 0.0), 5.0, 400.0).unwrap();
        assert_relative_eq!((d / v).re, -1.0 / 5.0, max_relative = 1e-12);
        let (v, d) = exterior_solution(5, 1, Complex64::new(0.0, 0.0), 5.0, 200.0).unwrap();
        assert_relative_eq!((d / v).re, -4.0 / 5.0, max_relative = 1e-12);
    }

    #[test]
    fn flat_homogeneous_matches_closed_form() {
        // the marched window solution must agree with e^{-kr}/r on the flat model
        let ws = flat_ws();
        let k = Complex64::new(1.0, 0.0);
        let g = ws.green(0, k).unwrap();
        for r in [0.02, 0.3, 0.9, 1.4] {
            let (v, d) = g.eval_solution(&g.psi_plus, 3, r, None).unwrap();
            let ld = (d.div(&v)).value().re;
            assert_relative_eq!(ld, -1.0 - 1.0 / r, max_relative = 1e-8);
        }
        // regular solution proportional to sinh(kr)/r
        for r in [0.05, 0.5, 1.2] {
            let (v, d) = g.eval_solution(&g.psi_minus, 3, r, None).unwrap();
            let ld = (d.div(&v)).value().re;
            let expect = (r.cosh() / r.sinh()) - 1.0 / r;
            assert_relative_eq!(ld, expect, max_relative = 1e-8);
        }
    }

    #[test]
    fn flat_green_matches_closed_form() {
        // u_0(r, r') = sinh(k r_<) e^{-k r_>} / (k r r')
        let ws = flat_ws();
        let k = Complex64::new(0.7, 0.0);
        let g = ws.green(0, k).unwrap();
        for (r, rp) in [(0.5, 2.0), (3.0, 10.0), (1.0, 1.1), (20.0, 150.0)] {
            let u = g.eval(r, rp).unwrap().value().re;
            let expect = (0.7f64 * r).sinh() * (-0.7 * rp).exp() / (0.7 * r * rp);
            assert_relative_eq!(u, expect, max_relative = 1e-8);
        }
        // symmetry is exact by construction
        let a = g.eval(2.0, 5.0).unwrap().value().re;
        let b = g.eval(5.0, 2.0).unwrap().value().re;
        assert_eq!(a, b);
    }

    #[test]
    fn wronskian_constancy() {
        let ws = two_end_ws();
        for (j, k) in [
            (0usize, Complex64::new(0.5, 0.0)),
            (3, Complex64::new(0.01, 0.0)),
            (1, Complex64::new(0.0, 0.0)),
            (2, Complex64::new(1.5, 4.0)),
        ] {
            let g = ws.green(j, k).unwrap();
            assert!(
                g.wronskian_variation < 1e-8,
                "variation {} at j={j} k={k}",
                g.wronskian_variation
            );
        }
    }

    #[test]
    fn two_end_symmetric_mirror() {
        // on the symmetric model psi_+(r) = psi_-(-r) up to normalization
        let ws = two_end_ws();
        let k = Complex64::new(0.8, 0.0);
        let g = ws.green(2, k).unwrap();
        let (vp, _) = g.eval_solution(&g.psi_plus, 3, 0.37, None).unwrap();
        let (vm, _) = g.eval_solution(&g.psi_minus, 3, -0.37, None).unwrap();
        let (vp0, _) = g.eval_solution(&g.psi_plus, 3, 0.0, None).unwrap();
        let (vm0, _) = g.eval_solution(&g.psi_minus, 3, 0.0, None).unwrap();
        let ratio1 = vp.div(&vp0).value().re;
        let ratio2 = vm.div(&vm0).value().re;
        assert_relative_eq!(ratio1, ratio2, max_relative = 1e-9);
    }

    #[test]
    fn two_end_k0_decay_law() {
        // k=0, j=0, + end: psi_+ proportional to 1/(r - c_plus) for r >= R
        let ws = two_end_ws();
        let g = ws.green(0, Complex64::new(0.0, 0.0)).unwrap();
        let (v1, _) = g.eval_solution(&g.psi_plus, 3, 10.0, None).unwrap();
        let (v2, _) = g.eval_solution(&g.psi_plus, 3, 100.0, None).unwrap();
        assert_relative_eq!(
            v1.div(&v2).value().re,
            10.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn through_neck_exponential_decay() {
        // u_0(r, r') ~ e^{-k r'} as r' grows with r fixed
        let ws = two_end_ws();
        let k = Complex64::new(0.5, 0.0);
        let g = ws.green(0, k).unwrap();
        let mut pts = Vec::new();
        for i in 0..8 {
            let rp = 40.0 + 30.0 * i as f64;
            let u = g.eval(-2.0, rp).unwrap();
            pts.push((rp, u.ln_abs()));
        }
        let fit = crate::fit::fit_linear(&pts).unwrap();
        assert_relative_eq!(fit.slope, -0.5, max_relative = 0.01);
    }

    #[test]
    fn green_resolves_discretized_source() {
        // apply L to a smooth compactly supported w analytically, feed it to
        // the Green quadrature and recover w
        let ws = two_end_ws();
        let k = Complex64::new(1.0, 0.0);
        let j = 0usize;
        let grid = ws.grid.clone();
        let model = ws.model.clone();
        // w = exp(-r^2), Lw computed with analytic derivatives
        let w_of = |r: f64| (-r * r).exp();
        let dw = |r: f64| -2.0 * r * (-r * r).exp();
        let ddw = |r: f64| (4.0 * r * r - 2.0) * (-r * r).exp();
        let v: Vec<Scaled> = grid
            .r
            .iter()
            .map(|&r| {
                let wv = model.profile.eval(r);
                let lw = -ddw(r) - 2.0 * (wv.df / wv.f) * dw(r) + (1.0 + 0.0) * w_of(r);
                Scaled::from_f(lw)
            })
            .collect();
        let (u, _du) = ws.apply_mode_resolvent(j, k, &v).unwrap();
        for (i, &r) in grid.r.iter().enumerate() {
            if r.abs() < 3.0 {
                let got = u[i].value().re;
                assert!(
                    (got - w_of(r)).abs() < 2e-7,
                    "r={r} got={got} want={}",
                    w_of(r)
                );
            }
        }
    }

    #[test]
    fn resolvent_positivity_j0() {
        let ws = two_end_ws();
        let g = ws.green(0, Complex64::new(0.9, 0.0)).unwrap();
        for (r, rp) in [(-3.0, 4.0), (0.0, 2.0), (5.0, 5.5)] {
            assert!(g.eval(r, rp).unwrap().value().re > 0.0);
        }
    }

    #[test]
    fn rejects_bad_sector() {
        let ws = flat_ws();
        assert!(ws.green(0, Complex64::new(-1.0, 0.0)).is_err());
        assert!(ws.green(0, Complex64::new(0.1, 3.0)).is_err());
    }
}
