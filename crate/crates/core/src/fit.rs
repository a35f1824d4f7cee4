//! Least-squares fits for decay exponents and Richardson extrapolation of
//! convergence tables.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of y against x.
pub fn fit_linear(pts: &[(f64, f64)]) -> Result<LineFit> {
    let n = pts.len();
    if n < 2 {
        return Err(Error::Fit(format!("need >= 2 points, got {n}")));
    }
    let nf = n as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let xbar = sx / nf;
    let ybar = sy / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.0 - xbar)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    if sxx <= 0.0 {
        return Err(Error::Fit("x values are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - ybar) * (p.1 - ybar)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let e = p.1 - (intercept + slope * p.0);
            e * e
        })
        .sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    let slope_stderr = if n > 2 {
        (ss_res / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit {
        slope,
        intercept,
        slope_stderr,
        r_squared,
    })
}

/// Least squares in log-log coordinates; the slope is the fitted power-law
/// exponent. All values must be strictly positive.
pub fn fit_loglog(pts: &[(f64, f64)]) -> Result<LineFit> {
    if pts.len() < 5 {
        return Err(Error::Fit(format!(
            "need >= 5 points for a decay fit, got {}",
            pts.len()
        )));
    }
    let mut logs = Vec::with_capacity(pts.len());
    for &(x, y) in pts {
        if x <= 0.0 || y <= 0.0 {
            return Err(Error::Fit(format!("nonpositive sample ({x:.3e}, {y:.3e})")));
        }
        logs.push((x.ln(), y.ln()));
    }
    fit_linear(&logs)
}

/// Richardson extrapolation of `a_i` sampled on a geometric grid
/// `x_{i+1} = g x_i`, assuming an expansion `a = L + c1/x + c2/x^2 + ...`.
///
/// Returns the level-2 extrapolants (two orders removed). The spread of the
/// last extrapolants is a practical error indicator.
pub fn richardson_geometric(a: &[f64], ratio: f64, levels: usize) -> Vec<f64> {
    let mut cur = a.to_vec();
    let mut g_pow = ratio;
    for _ in 0..levels {
        if cur.len() < 2 {
            break;
        }
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            next.push(cur[i + 1] + (cur[i + 1] - cur[i]) / (g_pow - 1.0));
        }
        cur = next;
        g_pow *= ratio;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = (1..=12).map(|i| (i as f64, (i as f64).powi(-2))).collect();
        let fit = fit_loglog(&pts).unwrap();
        assert_relative_eq!(fit.slope, -2.0, max_relative = 1e-12);
        assert!(fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn asymptotic_power_law() {
        // r^-2 (1 + 1/r): slope approaches -2 as the window moves out
        let near: Vec<(f64, f64)> = (1..=8)
            .map(|i| {
                let r = 2.0f64.powi(i);
                (r, r.powi(-2) * (1.0 + 1.0 / r))
            })
            .collect();
        let far: Vec<(f64, f64)> = (8..=15)
            .map(|i| {
                let r = 2.0f64.powi(i);
                (r, r.powi(-2) * (1.0 + 1.0 / r))
            })
            .collect();
        let f_near = fit_loglog(&near).unwrap();
        let f_far = fit_loglog(&far).unwrap();
        assert!((f_far.slope + 2.0).abs() < (f_near.slope + 2.0).abs());
        assert!((f_far.slope + 2.0).abs() < 1e-3);
    }

    #[test]
    fn constant_series() {
        let pts: Vec<(f64, f64)> = (1..=6).map(|i| (i as f64, 5.0)).collect();
        let fit = fit_loglog(&pts).unwrap();
        assert_relative_eq!(fit.slope, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn richardson_strips_orders() {
        // a(x) = 1 + 3/x + 7/x^2 on x = 10 * 2^i
        let xs: Vec<f64> = (0..6).map(|i| 10.0 * 2.0f64.powi(i)).collect();
        let a: Vec<f64> = xs.iter().map(|x| 1.0 + 3.0 / x + 7.0 / (x * x)).collect();
        let out = richardson_geometric(&a, 2.0, 2);
        let last = *out.last().unwrap();
        assert_relative_eq!(last, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn rejects_nonpositive() {
        let pts = vec![(1.0, 1.0), (2.0, -0.5), (3.0, 0.2), (4.0, 0.1), (5.0, 0.05)];
        assert!(fit_loglog(&pts).is_err());
    }
}
