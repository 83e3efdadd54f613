//! Special functions backing the chi-squared quantile.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos approximation, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS_COEFFS[0];
        for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 10_000;

/// Regularized incomplete gamma functions `(P(a, x), Q(a, x))`.
///
/// Uses the power series below `x < a + 1` and the Lentz continued fraction above,
/// so whichever of the two tails is small is computed without cancellation.
pub fn regularized_gamma(a: f64, x: f64) -> (f64, f64) {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..GAMMA_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_EPS {
                break;
            }
        }
        let p = (sum.ln() + log_prefactor).exp().min(1.0);
        (p, 1.0 - p)
    } else {
        let tiny = f64::MIN_POSITIVE / GAMMA_EPS;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_EPS {
                break;
            }
        }
        let q = (h.ln() + log_prefactor).exp().min(1.0);
        (1.0 - q, q)
    }
}

/// CDF of the chi-squared distribution with `dof` degrees of freedom.
pub fn chi2_cdf(dof: usize, q: f64) -> f64 {
    regularized_gamma(dof as f64 / 2.0, q / 2.0).0
}

/// Upper tail `1 - CDF`, computed without cancellation.
pub fn chi2_sf(dof: usize, q: f64) -> f64 {
    regularized_gamma(dof as f64 / 2.0, q / 2.0).1
}

fn chi2_ln_pdf(dof: usize, q: f64) -> f64 {
    let k = dof as f64 / 2.0;
    (k - 1.0) * q.ln() - q / 2.0 - k * 2f64.ln() - ln_gamma(k)
}

/// Standard normal CDF via `Φ(z) = (1 ± P(1/2, z²/2)) / 2`.
pub fn std_normal_cdf(z: f64) -> f64 {
    let (p, q) = regularized_gamma(0.5, 0.5 * z * z);
    if z >= 0.0 {
        0.5 + 0.5 * p
    } else {
        0.5 * q
    }
}

/// Acklam's rational approximation of the standard normal quantile (relative error ~1e-9).
/// Only used to seed Newton iterations.
fn approx_normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < 0.02425 {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - 0.02425 {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// The `(1 - alpha)` quantile of the chi-squared distribution with `dof` degrees of freedom.
///
/// Newton's method on the CDF, seeded with the Wilson–Hilferty approximation and
/// safeguarded by a bisection bracket. Panics if `dof == 0` or `alpha ∉ (0, 1)`.
pub fn chi2_quantile(dof: usize, alpha: f64) -> f64 {
    assert!(dof >= 1, "chi2_quantile: dof must be >= 1");
    assert!(alpha > 0.0 && alpha < 1.0, "chi2_quantile: alpha must lie in (0, 1)");
    let k = dof as f64;

    let z = approx_normal_quantile(1.0 - alpha);
    let h = 2.0 / (9.0 * k);
    let mut q = k * (1.0 - h + z * h.sqrt()).powi(3);
    if !(q.is_finite() && q > 0.0) {
        q = k;
    }

    // residual as a difference of whichever tail is smaller, to keep precision at both ends
    let residual = |q: f64| -> f64 {
        if alpha < 0.5 {
            alpha - chi2_sf(dof, q)
        } else {
            chi2_cdf(dof, q) - (1.0 - alpha)
        }
    };

    let mut lo = 0.0_f64;
    let mut hi = q.max(1.0);
    while residual(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }

    for _ in 0..200 {
        let r = residual(q);
        if r == 0.0 {
            return q;
        }
        if r < 0.0 {
            lo = lo.max(q);
        } else {
            hi = hi.min(q);
        }
        let slope = chi2_ln_pdf(dof, q).exp();
        let mut next = q - r / slope;
        if !(next.is_finite() && next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - q).abs() <= 1e-15 * q.max(1e-300) {
            return next;
        }
        q = next;
    }
    q
}
