//! Independent numerical oracles for the `sbvae` test suites.
//!
//! Nothing here shares code with the library under test: integrals are
//! computed by quadrature, quantiles by bisection on exact CDFs, and
//! derivatives by the caller's own finite differences.

use std::f64::consts::FRAC_PI_2;

/// Tanh-sinh (double exponential) quadrature of `f` over `(a, b)`.
///
/// Handles integrable endpoint singularities. `f` receives the abscissa
/// and is never evaluated at the endpoints themselves.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let half = 0.5 * (b - a);
    let eval = |t: f64| -> f64 {
        let s = FRAC_PI_2 * t.sinh();
        // 1 - tanh(s) and 1 + tanh(s) computed without cancellation
        let e = (-2.0 * s.abs()).exp();
        let small = 2.0 * e / (1.0 + e);
        let (x, dist) = if s >= 0.0 {
            (b - half * small, half * small)
        } else {
            (a + half * small, half * small)
        };
        if dist <= 0.0 || x <= a || x >= b {
            return 0.0;
        }
        let cs = s.cosh();
        let w = FRAC_PI_2 * t.cosh() / (cs * cs);
        let fx = f(x);
        if fx.is_finite() {
            half * w * fx
        } else {
            0.0
        }
    };
    let t_max = 4.0;
    let mut h = 0.5;
    let mut sum = eval(0.0);
    let mut k = 1;
    while (k as f64) * h <= t_max {
        sum += eval(k as f64 * h) + eval(-(k as f64) * h);
        k += 1;
    }
    let mut estimate = sum * h;
    for _level in 0..12 {
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= t_max {
            sum += eval(k as f64 * h) + eval(-(k as f64) * h);
            k += 2;
        }
        let next = sum * h;
        if (next - estimate).abs() <= tol * next.abs().max(1.0) {
            return next;
        }
        estimate = next;
    }
    estimate
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const GK_WEIGHTS_G: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = GK_WEIGHTS_K[7] * fc;
    let mut gauss = GK_WEIGHTS_G[3] * fc;
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x) + f(c + x);
        kron += GK_WEIGHTS_K[i] * s;
        if i % 2 == 1 {
            gauss += GK_WEIGHTS_G[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature on a finite interval.
pub fn gauss_kronrod<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (val, err) = gk15(f, a, b);
        if err <= tol || depth >= 40 {
            return val;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, 0.5 * tol, depth + 1) + recurse(f, m, b, 0.5 * tol, depth + 1)
    }
    recurse(&f, a, b, tol, 0)
}

/// Root of a continuous `f` with a sign change on `[lo, hi]`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    assert!(
        flo * f(hi) <= 0.0,
        "bisect: no sign change on [{lo}, {hi}]"
    );
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid == lo || mid == hi {
            return mid;
        }
        let fm = f(mid);
        if (fm <= 0.0) == (flo <= 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Regularized incomplete beta I_x(a, b): the Beta(a, b) CDF.
pub fn beta_cdf(x: f64, a: f64, b: f64) -> f64 {
    statrs::function::beta::beta_reg(a, b, x.clamp(0.0, 1.0))
}

/// Regularized lower incomplete gamma P(shape, x): the Gamma(shape, 1) CDF.
pub fn gamma_cdf(x: f64, shape: f64) -> f64 {
    statrs::function::gamma::gamma_lr(shape, x.max(0.0))
}

/// Exact Gamma(shape, 1) quantile by bisection in log space.
pub fn gamma_quantile(p: f64, shape: f64) -> f64 {
    let log_x = bisect(|lx| gamma_cdf(lx.exp(), shape) - p, -700.0, 10.0, 1e-14);
    log_x.exp()
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    statrs::function::beta::ln_beta(a, b)
}

/// Two-sided Kolmogorov–Smirnov distance between a sample and a CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

/// Mean and standard error of a sample.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        let v = tanh_sinh(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-12);
        assert!((v - 2.0).abs() < 1e-9, "{v}");
        let v = tanh_sinh(|x| (1.0 - x).ln(), 0.0, 1.0, 1e-12);
        assert!((v + 1.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn gauss_kronrod_polynomial_and_gaussian() {
        let v = gauss_kronrod(|x| x * x * x - x, -1.0, 2.0, 1e-12);
        assert!((v - 2.25).abs() < 1e-12);
        let v = gauss_kronrod(|x| (-0.5 * x * x).exp(), -40.0, 40.0, 1e-12);
        assert!((v - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn quantiles_invert_cdfs() {
        let q = gamma_quantile(0.3, 0.1);
        assert!((gamma_cdf(q, 0.1) - 0.3).abs() < 1e-10);
        assert!((beta_cdf(0.5, 0.5, 0.5) - 0.5).abs() < 1e-12);
    }
}
