//! Graded radial grids, uniform in a mapped coordinate.
//!
//! Two-end models use `r = delta sinh(xi)`: spacing `~ delta dxi` in the neck
//! and geometric growth toward the truncation radius. One-end models use the
//! pure log map `r = r_lo e^xi`, which keeps the Numerov step stable against
//! the `1/r^2` mode potential near the origin.

use crate::error::{Error, Result};
use crate::geometry::{Ends, ModelManifold};
use crate::special::{Scaled, ScaledSum};

#[derive(Debug, Clone)]
pub struct RadialGrid {
    pub kind: Ends,
    pub dxi: f64,
    pub xi0: f64,
    pub delta: f64,
    pub r_lo: f64,
    pub r: Vec<f64>,
    pub rp: Vec<f64>,
    pub rpp: Vec<f64>,
    pub rppp: Vec<f64>,
    /// inclusive index range of the Numerov window
    pub window: (usize, usize),
}

impl RadialGrid {
    /// Grid adapted to the model. `n_nodes >= 2000` by default policy;
    /// `grading` is the sinh scale for two-end grids.
    pub fn for_model(model: &ModelManifold, n_nodes: usize, grading: f64) -> Result<Self> {
        if n_nodes < 8 {
            return Err(Error::GridTooCoarse(format!("{n_nodes} nodes")));
        }
        let rr = model.profile.neck_radius;
        let margin = 0.75 * rr.max(1.0);
        match model.ends() {
            Ends::Two => {
                let delta = grading;
                let xi_max = (model.r_max / delta).asinh();
                let n = if n_nodes % 2 == 0 { n_nodes + 1 } else { n_nodes };
                let dxi = 2.0 * xi_max / (n - 1) as f64;
                let mut g = RadialGrid {
                    kind: Ends::Two,
                    dxi,
                    xi0: -xi_max,
                    delta,
                    r_lo: -model.r_max,
                    r: Vec::with_capacity(n),
                    rp: Vec::with_capacity(n),
                    rpp: Vec::with_capacity(n),
                    rppp: Vec::with_capacity(n),
                    window: (0, 0),
                };
                for i in 0..n {
                    let xi = g.xi0 + i as f64 * dxi;
                    let (s, c) = (xi.sinh(), xi.cosh());
                    g.r.push(delta * s);
                    g.rp.push(delta * c);
                    g.rpp.push(delta * s);
                    g.rppp.push(delta * c);
                }
                let hi = rr + margin;
                let i_lo = g.index_at_or_below(-hi).saturating_sub(1);
                let mut i_hi = g.index_at_or_below(hi) + 2;
                i_hi = i_hi.min(n - 1);
                g.window = (i_lo, i_hi);
                Ok(g)
            }
            Ends::One => {
                let r_lo = 1e-3_f64.min(0.01 * rr);
                let xi_max = (model.r_max / r_lo).ln();
                let dxi = xi_max / (n_nodes - 1) as f64;
                let mut g = RadialGrid {
                    kind: Ends::One,
                    dxi,
                    xi0: 0.0,
                    delta: grading,
                    r_lo,
                    r: Vec::with_capacity(n_nodes),
                    rp: Vec::with_capacity(n_nodes),
                    rpp: Vec::with_capacity(n_nodes),
                    rppp: Vec::with_capacity(n_nodes),
                    window: (0, 0),
                };
                for i in 0..n_nodes {
                    let r = r_lo * (i as f64 * dxi).exp();
                    g.r.push(r);
                    g.rp.push(r);
                    g.rpp.push(r);
                    g.rppp.push(r);
                }
                let hi = rr + margin;
                let i_hi = (g.index_at_or_below(hi) + 2).min(n_nodes - 1);
                g.window = (0, i_hi);
                Ok(g)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn xi_of_r(&self, r: f64) -> f64 {
        match self.kind {
            Ends::Two => (r / self.delta).asinh(),
            Ends::One => (r / self.r_lo).ln(),
        }
    }

    /// Largest index whose node lies at or below `r`.
    pub fn index_at_or_below(&self, r: f64) -> usize {
        let xi = self.xi_of_r(r);
        let i = ((xi - self.xi0) / self.dxi).floor();
        (i.max(0.0) as usize).min(self.len() - 1)
    }

    /// 4-point Lagrange interpolation of a nodal array at radius `r`.
    pub fn interp(&self, vals: &[f64], r: f64) -> f64 {
        let (i0, w) = self.stencil(r);
        (0..4).map(|a| w[a] * vals[i0 + a]).sum()
    }

    /// Same for scaled arrays; the stencil is rebased to a common exponent.
    pub fn interp_scaled(&self, vals: &[Scaled], r: f64) -> Scaled {
        let (i0, w) = self.stencil(r);
        let lmax = (0..4)
            .map(|a| vals[i0 + a].log)
            .fold(f64::NEG_INFINITY, f64::max);
        if lmax == f64::NEG_INFINITY {
            return Scaled::zero();
        }
        let mut m = num_complex::Complex64::new(0.0, 0.0);
        for a in 0..4 {
            let v = &vals[i0 + a];
            if !v.is_zero() {
                m += w[a] * v.m * (v.log - lmax).exp();
            }
        }
        Scaled { m, log: lmax }.normalized()
    }

    fn stencil(&self, r: f64) -> (usize, [f64; 4]) {
        let xi = self.xi_of_r(r);
        let t = (xi - self.xi0) / self.dxi;
        let mut i0 = (t.floor() as isize - 1).max(0) as usize;
        i0 = i0.min(self.len() - 4);
        let u = t - i0 as f64; // offset in stencil units, in [1, 2] away from edges
        let mut w = [0.0; 4];
        for a in 0..4 {
            let mut prod = 1.0;
            for b in 0..4 {
                if a != b {
                    prod *= (u - b as f64) / (a as f64 - b as f64);
                }
            }
            w[a] = prod;
        }
        (i0, w)
    }

    /// Integral over the whole grid of a nodal integrand given with respect to
    /// `r` (the Jacobian is applied internally). Fourth-order cell rule.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        let g: Vec<f64> = f.iter().zip(&self.rp).map(|(a, b)| a * b).collect();
        let n = g.len();
        let h = self.dxi;
        let mut total = 0.0;
        for i in 0..n - 1 {
            total += self.cell(&g, i) * h;
        }
        total
    }

    /// Cumulative integral from the left edge; `out[i]` approximates the
    /// integral up to node i.
    pub fn cumulative(&self, f: &[f64]) -> Vec<f64> {
        let g: Vec<f64> = f.iter().zip(&self.rp).map(|(a, b)| a * b).collect();
        let n = g.len();
        let h = self.dxi;
        let mut out = vec![0.0; n];
        for i in 0..n - 1 {
            out[i + 1] = out[i] + self.cell(&g, i) * h;
        }
        out
    }

    fn cell(&self, g: &[f64], i: usize) -> f64 {
        let n = g.len();
        if i == 0 {
            (9.0 * g[0] + 19.0 * g[1] - 5.0 * g[2] + g[3]) / 24.0
        } else if i == n - 2 {
            (9.0 * g[n - 1] + 19.0 * g[n - 2] - 5.0 * g[n - 3] + g[n - 4]) / 24.0
        } else {
            (-g[i - 1] + 13.0 * g[i] + 13.0 * g[i + 1] - g[i + 2]) / 24.0
        }
    }

    /// Cumulative integral of scaled samples from the left; the samples are
    /// with respect to `r` and may span thousands of orders of magnitude.
    pub fn cumulative_scaled(&self, f: &[Scaled]) -> Vec<Scaled> {
        let n = f.len();
        let h = self.dxi;
        let g: Vec<Scaled> = f
            .iter()
            .zip(&self.rp)
            .map(|(a, b)| a.mul_c((*b).into()))
            .collect();
        let mut out = Vec::with_capacity(n);
        let mut acc = ScaledSum::new();
        out.push(Scaled::zero());
        for i in 0..n - 1 {
            acc.add(&self.cell_scaled(&g, i).mul_c(h.into()));
            out.push(acc.total());
        }
        out
    }

    /// Cumulative integral of scaled samples from the right edge.
    pub fn cumulative_scaled_rev(&self, f: &[Scaled]) -> Vec<Scaled> {
        let n = f.len();
        let h = self.dxi;
        let g: Vec<Scaled> = f
            .iter()
            .zip(&self.rp)
            .map(|(a, b)| a.mul_c((*b).into()))
            .collect();
        let mut out = vec![Scaled::zero(); n];
        let mut acc = ScaledSum::new();
        for i in (0..n - 1).rev() {
            acc.add(&self.cell_scaled(&g, i).mul_c(h.into()));
            out[i] = acc.total();
        }
        out
    }

    fn cell_scaled(&self, g: &[Scaled], i: usize) -> Scaled {
        let n = g.len();
        let (idx, co): ([usize; 4], [f64; 4]) = if i == 0 {
            ([0, 1, 2, 3], [9.0, 19.0, -5.0, 1.0])
        } else if i == n - 2 {
            ([n - 1, n - 2, n - 3, n - 4], [9.0, 19.0, -5.0, 1.0])
        } else {
            ([i - 1, i, i + 1, i + 2], [-1.0, 13.0, 13.0, -1.0])
        };
        let lmax = idx
            .iter()
            .map(|&a| g[a].log)
            .fold(f64::NEG_INFINITY, f64::max);
        if lmax == f64::NEG_INFINITY {
            return Scaled::zero();
        }
        let mut m = num_complex::Complex64::new(0.0, 0.0);
        for a in 0..4 {
            let v = &g[idx[a]];
            if !v.is_zero() {
                m += co[a] * v.m * (v.log - lmax).exp();
            }
        }
        Scaled { m: m / 24.0, log: lmax }.normalized()
    }
}
