//! Student's t tail probabilities through the regularized incomplete beta
//! function.

use crate::error::{Error, Result};

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
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
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=100_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b)).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail probability `P(|T| ≥ |t|)` for `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Paired two-sided t-test on `after − before`.
///
/// All-zero differences give `p = 1`; zero spread with a nonzero mean gives
/// `p = 0`.
pub fn paired_t_test(before: &[f64], after: &[f64]) -> Result<TTest> {
    if before.len() != after.len() {
        return Err(Error::LengthMismatch { left: before.len(), right: after.len() });
    }
    let n = before.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("a paired t-test needs at least 2 pairs, got {n}")));
    }
    let diffs: Vec<f64> = after.iter().zip(before).map(|(a, b)| a - b).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    let df = (n - 1) as f64;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTest { t: 0.0, df, p: 1.0 }
        } else {
            TTest { t: mean.signum() * f64::INFINITY, df, p: 0.0 }
        });
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    Ok(TTest { t, df, p: student_t_two_sided(t, df) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
    }

    #[test]
    fn beta_edges_and_symmetry() {
        assert_eq!(regularized_incomplete_beta(2.0, 3.0, 0.0), 0.0);
        assert_eq!(regularized_incomplete_beta(2.0, 3.0, 1.0), 1.0);
        // I_x(a,b) = 1 − I_{1−x}(b,a)
        let (a, b, x) = (2.5, 0.5, 0.3);
        let lhs = regularized_incomplete_beta(a, b, x);
        let rhs = 1.0 - regularized_incomplete_beta(b, a, 1.0 - x);
        assert!((lhs - rhs).abs() < 1e-14);
        // I_x(1,1) = x
        assert!((regularized_incomplete_beta(1.0, 1.0, 0.37) - 0.37).abs() < 1e-15);
    }

    #[test]
    fn degenerate_paired_tests() {
        assert_eq!(paired_t_test(&[0.3; 4], &[0.3; 4]).unwrap().p, 1.0);
        assert_eq!(paired_t_test(&[0.3; 4], &[0.4; 4]).unwrap().p, 0.0);
        assert!(paired_t_test(&[0.3], &[0.4]).is_err());
        assert!(paired_t_test(&[0.3, 0.1], &[0.4]).is_err());
    }

    #[test]
    fn t_two_at_fifteen_df() {
        assert!((student_t_two_sided(2.0, 15.0) - 0.0639).abs() < 1e-4);
    }

    // two-sided p-values computed to 20 digits with arbitrary precision
    #[allow(clippy::excessive_precision)]
    const REFERENCE: [(f64, f64, f64); 20] = [
        (2.0, 15.0, 0.063945007284720202851),
        (0.0, 5.0, 1.0),
        (1.0, 1.0, 0.5),
        (0.5, 2.0, 0.66666666666666666667),
        (1.5, 3.0, 0.23058386524482305228),
        (2.5, 4.0, 0.066766544811988145039),
        (3.0, 7.0, 0.019942126131992537922),
        (-2.0, 10.0, 0.073388034770740365618),
        (4.0, 20.0, 0.00070352329312831828948),
        (1.96, 30.0, 0.059342312896050476315),
        (2.776, 4.0, 0.05002277831997641223),
        (10.0, 3.0, 0.0021283990584141500574),
        (0.1, 100.0, 0.92054453109585123216),
        (6.0, 127.0, 1.9212393178369271832e-8),
        (2.0, 127.0, 0.047633619005572352739),
        (3.5, 383.0, 0.00052001591307053833211),
        (1.0, 1000.0, 0.31755241808467230708),
        (0.7, 9.0, 0.50161903921614519293),
        (12.7062, 1.0, 0.05000001856071039947),
        (-5.0, 50.0, 7.4332122472325739555e-6),
    ];

    #[test]
    fn reference_battery() {
        for (t, df, want) in REFERENCE {
            let got = student_t_two_sided(t, df);
            assert!((got - want).abs() < 1e-10, "t={t} df={df}: {got} vs {want}");
        }
    }

    /// With t = sqrt(v) tan(θ) the two-sided tail becomes a ratio of
    /// cosine-power integrals; Simpson's rule needs no special functions.
    fn quadrature_p(t: f64, v: f64) -> f64 {
        let half_pi = std::f64::consts::FRAC_PI_2;
        let theta0 = (t.abs() / v.sqrt()).atan();
        let f = |x: f64| x.cos().powf(v - 1.0);
        let simpson = |a: f64, b: f64| {
            let n = 20_000;
            let h = (b - a) / n as f64;
            let mut s = f(a) + f(b);
            for i in 1..n {
                s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        simpson(theta0, half_pi) / simpson(0.0, half_pi)
    }

    #[test]
    fn agrees_with_quadrature() {
        for v in [2.0, 3.0, 5.0, 9.0, 15.0, 40.0, 127.0] {
            for t in [0.0, 0.3, 1.0, 1.7, 2.5, 4.0] {
                let (a, b) = (student_t_two_sided(t, v), quadrature_p(t, v));
                assert!((a - b).abs() < 1e-8, "t={t} v={v}: {a} vs {b}");
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn p_is_a_probability_and_monotone(t in 0.0f64..50.0, dt in 0.0f64..5.0, df in 1u32..500) {
            let df = df as f64;
            let (p, q) = (student_t_two_sided(t, df), student_t_two_sided(t + dt, df));
            proptest::prop_assert!((0.0..=1.0).contains(&p));
            proptest::prop_assert!(q <= p + 1e-12);
            proptest::prop_assert!((student_t_two_sided(-t, df) - p).abs() < 1e-15);
        }

        #[test]
        fn paired_test_is_symmetric(xs in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..40)) {
            let (a, b): (Vec<f64>, Vec<f64>) = xs.into_iter().unzip();
            let p1 = paired_t_test(&a, &b).unwrap().p;
            let p2 = paired_t_test(&b, &a).unwrap().p;
            proptest::prop_assert!((0.0..=1.0).contains(&p1));
            proptest::prop_assert!((p1 - p2).abs() < 1e-12);
        }
    }
}
