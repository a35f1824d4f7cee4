//! One-dimensional quadrature: Gauss-Legendre rules and an adaptive
//! Gauss-Kronrod integrator for the flux and norm integrals.

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
///
/// Computed by Newton iteration on the Legendre recurrence; cached per order.
pub fn gl_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Chebyshev-style initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_pn(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_pn(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Legendre integral of `f` over `[a, b]`.
pub fn gauss_legendre<F: Fn(f64) -> f64>(a: f64, b: f64, n: usize, f: F) -> f64 {
    let (x, w) = gl_rule(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut sum = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        sum += wi * f(c + h * xi);
    }
    sum * h
}

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK constants).
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

fn gk15<F: Fn(f64) -> f64>(a: f64, b: f64, f: &F) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let fsum = f(c - x) + f(c + x);
        kron += WGK[i] * fsum;
        if i % 2 == 1 {
            gauss += WG[i / 2] * fsum;
        }
    }
    (kron * h, (kron - gauss).abs() * h)
}

/// Adaptive Gauss-Kronrod integration to absolute tolerance `tol * scale`.
pub fn adaptive_gk<F: Fn(f64) -> f64>(a: f64, b: f64, tol: f64, f: F) -> f64 {
    let mut stack = vec![(a, b)];
    let mut total = 0.0;
    let (full, _) = gk15(a, b, &f);
    let scale = full.abs().max(1e-300);
    let mut depth_guard = 0usize;
    while let Some((lo, hi)) = stack.pop() {
        let (val, err) = gk15(lo, hi, &f);
        if err <= tol * scale.max(val.abs()) * ((hi - lo) / (b - a)).max(1e-6)
            || hi - lo < 1e-14 * (b - a).abs()
            || depth_guard > 100_000
        {
            total += val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid));
            stack.push((mid, hi));
        }
        depth_guard += 1;
    }
    total
}

/// Composite Gauss-Legendre panels with logarithmically spaced breakpoints on
/// `[a, b]`, `per_decade` panels per decade and an `order`-point rule on each.
pub fn log_panels(a: f64, b: f64, per_decade: usize) -> Vec<(f64, f64)> {
    assert!(a > 0.0 && b > a);
    let decades = (b / a).log10();
    let n = ((decades * per_decade as f64).ceil() as usize).max(1);
    let step = (b / a).powf(1.0 / n as f64);
    let mut panels = Vec::with_capacity(n);
    let mut lo = a;
    for _ in 0..n {
        let hi = (lo * step).min(b);
        panels.push((lo, hi));
        lo = hi;
    }
    panels
}

/// Integral over log-spaced panels.
pub fn integrate_log<F: Fn(f64) -> f64 + Copy>(
    a: f64,
    b: f64,
    per_decade: usize,
    order: usize,
    f: F,
) -> f64 {
    log_panels(a, b, per_decade)
        .into_iter()
        .map(|(lo, hi)| gauss_legendre(lo, hi, order, f))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gl_exactness() {
        // degree-9 polynomial integrated exactly by 5-point rule
        let val = gauss_legendre(0.0, 1.0, 5, |x| x.powi(9));
        assert_relative_eq!(val, 0.1, max_relative = 1e-14);
    }

    #[test]
    fn gl_smooth_function() {
        let val = gauss_legendre(0.0, std::f64::consts::PI, 32, |x| x.sin());
        assert_relative_eq!(val, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn adaptive_handles_peaks() {
        // integral of 1/(x^2 + 1e-4) over [0, 1] = atan(100) / 0.01
        let val = adaptive_gk(0.0, 1.0, 1e-12, |x| 1.0 / (x * x + 1e-4));
        assert_relative_eq!(val, (100.0f64).atan() * 100.0, max_relative = 1e-9);
    }

    #[test]
    fn log_panel_integral() {
        let val = integrate_log(1e-6, 1e6, 8, 16, |x| 1.0 / x);
        assert_relative_eq!(val, 12.0 * (10.0f64).ln(), max_relative = 1e-12);
    }
}
