//! Closed-form switching kernels of the consumption model and the decision
//! rule that turns their sign pattern on `[0, 1]` into a sampled control.

use crate::error::{Error, Result};
use crate::scalar::{bisect, golden_max};

const DOMAIN_SLACK: f64 = 1e-12;

fn check_x(x: f64) -> Result<f64> {
    if (-DOMAIN_SLACK..=1.0 + DOMAIN_SLACK).contains(&x) {
        Ok(x.clamp(0.0, 1.0))
    } else {
        Err(Error::OutOfDomain { x })
    }
}

/// `(e^{−y} − 1 + y) / y²`, evaluated without cancellation near zero.
fn phi2(y: f64) -> f64 {
    if y.abs() < 0.1 {
        // Σ_{k≥0} (−y)^k / (k + 2)!
        let mut term = 0.5;
        let mut sum = term;
        for k in 1..20 {
            term *= -y / (k as f64 + 2.0);
            sum += term;
        }
        sum
    } else {
        ((-y).exp_m1() + y) / (y * y)
    }
}

/// Continuous-state kernel `Γ` for a sampling interval of length `mu1` whose
/// right end carries the adjoint value `p_next`.
///
/// For `x ≠ 0` it equals `[e^{−μx} − (1 + μx(x(1 − P) − 1))] / x²`, which is
/// rewritten as `μ² φ(μx) − μ(1 − P)` so that small `x` loses no digits.
pub fn gamma_r(x: f64, mu1: f64, p_next: f64) -> Result<f64> {
    let x = check_x(x)?;
    if !(mu1 > 0.0) {
        return Err(Error::OutOfDomain { x: mu1 });
    }
    if x == 0.0 {
        return Ok(mu1 * (p_next + mu1 / 2.0 - 1.0));
    }
    Ok(mu1 * mu1 * phi2(mu1 * x) - mu1 * (1.0 - p_next))
}

fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Discrete-state kernel `Λ` for an integer sampling step `mu1`.
///
/// For `x ≠ 0` it equals
/// `[1 − (1 + x)^{μ−1}(1 + μx(x(1 − P) − 1) + x)] / x²`; the bracket is a
/// polynomial with vanishing constant and linear terms, so the quotient is
/// expanded exactly instead of being formed by division.
pub fn lambda_r(x: f64, mu1: f64, p_next: f64) -> Result<f64> {
    let x = check_x(x)?;
    let rounded = mu1.round();
    if !(rounded >= 1.0) || (mu1 - rounded).abs() > 1e-9 {
        return Err(Error::OutOfDomain { x: mu1 });
    }
    let mu = rounded as u32;
    let n = mu - 1;
    let nf = n as f64;
    let mut poly = 0.0;
    for k in (2..=n + 1).rev() {
        poly = poly * x - (binomial(n, k) - nf * binomial(n, k - 1));
    }
    Ok(poly - rounded * (1.0 - p_next) * (1.0 + x).powi(n as i32))
}

/// Consumption collected on a continuous sampling interval of length `mu1`
/// with control `x`, plus the value `p_next · q` carried past its end, for a
/// unit state at its start. Its derivative in `x` is `e^{μx} Γ(x)`.
pub fn interval_value_continuous(x: f64, mu1: f64, p_next: f64) -> f64 {
    let growth = (mu1 * x).exp();
    let collected = if x == 0.0 {
        mu1
    } else {
        (1.0 - x) * (mu1 * x).exp_m1() / x
    };
    collected + p_next * growth
}

/// Discrete analogue of [`interval_value_continuous`]; its derivative in `x`
/// is `Λ(x)`.
pub fn interval_value_discrete(x: f64, mu1: f64, p_next: f64) -> f64 {
    let mu = mu1.round() as i32;
    let collected: f64 = (0..mu).map(|j| (1.0 - x) * (1.0 + x).powi(j)).sum();
    collected + p_next * (1.0 + x).powi(mu)
}

/// Which pattern of the kernel determined the control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    NegativeOnOpenUnit,
    PositiveOnOpenUnit,
    Root,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Decision {
    pub value: f64,
    pub rule: DecisionRule,
    /// Sign changes seen by the scan.
    pub sign_changes: usize,
    pub diagnostic: Option<String>,
}

pub const SCAN_POINTS: usize = 1001;
pub const ROOT_TOL: f64 = 1e-10;

/// Chooses the control on one sampling interval from the kernel's sign
/// pattern on a uniform scan of `[0, 1]`. When no pattern applies, `value`
/// (whose derivative has the sign of the kernel) is maximized instead.
pub fn decide_scattered_control<K, V>(kernel: K, value: V) -> Decision
where
    K: Fn(f64) -> f64,
    V: Fn(f64) -> f64,
{
    let last = SCAN_POINTS - 1;
    let samples: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| kernel(i as f64 / last as f64))
        .collect();
    let sign_changes = samples
        .windows(2)
        .filter(|w| (w[0] > 0.0 && w[1] < 0.0) || (w[0] < 0.0 && w[1] > 0.0))
        .count();
    let decision = |value, rule, diagnostic| Decision {
        value,
        rule,
        sign_changes,
        diagnostic,
    };
    if samples[1..].iter().all(|&k| k < 0.0) {
        return decision(0.0, DecisionRule::NegativeOnOpenUnit, None);
    }
    if samples[..last].iter().all(|&k| k > 0.0) {
        return decision(1.0, DecisionRule::PositiveOnOpenUnit, None);
    }
    if samples[0] > 0.0 && samples[last] < 0.0 {
        let root = bisect(&kernel, 0.0, 1.0, ROOT_TOL);
        let note = (sign_changes > 1)
            .then(|| format!("kernel changes sign {sign_changes} times on the scan; kept the bracketed root"));
        return decision(root, DecisionRule::Root, note);
    }
    let x = golden_max(&value, 0.0, 1.0, 1e-10);
    decision(
        x,
        DecisionRule::Fallback,
        Some(format!(
            "no sign pattern applies (k(0) = {:e}, k(1) = {:e}); maximized the interval value instead",
            samples[0], samples[last]
        )),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gamma_literal(x: f64, mu: f64, p: f64) -> f64 {
        ((-mu * x).exp() - (1.0 + mu * x * (x * (1.0 - p) - 1.0))) / (x * x)
    }

    fn lambda_literal(x: f64, mu: f64, p: f64) -> f64 {
        (1.0 - (1.0 + x).powf(mu - 1.0) * (1.0 + mu * x * (x * (1.0 - p) - 1.0) + x)) / (x * x)
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_r(0.0, 2.0, 0.0).unwrap(), 0.0);
        let v = gamma_r(1.0, 2.0, 0.0).unwrap();
        assert!((v - ((-2f64).exp() - 1.0)).abs() < 1e-14);
        assert!((v + 0.864665).abs() < 1e-6);
        for (mu, p) in [(2.0, 0.0), (3.0, 1.0)] {
            let d = gamma_r(1e-7, mu, p).unwrap() - gamma_r(0.0, mu, p).unwrap();
            assert!(d.abs() <= 1e-5);
        }
        // The slope at zero is −μ³/6, so a step of 1e-7 moves Γ by about
        // 2.9e-5 when μ = 12.
        for (mu, p) in [(2.0, 0.0), (3.0, 1.0), (12.0, 0.5)] {
            let d = gamma_r(1e-7, mu, p).unwrap() - gamma_r(0.0, mu, p).unwrap();
            let slope = -mu * mu * mu / 6.0;
            assert!((d - slope * 1e-7).abs() <= 1e-12 * mu * mu * mu);
        }
        assert!(matches!(gamma_r(1.5, 2.0, 0.0), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn gamma_agrees_with_literal_form_away_from_zero() {
        for &x in &[0.05, 0.2, 0.5, 0.9, 1.0] {
            for &(mu, p) in &[(1.0, 0.0), (2.0, 0.5), (3.0, 0.0), (12.0, 0.0), (4.0, 2.24)] {
                let a = gamma_r(x, mu, p).unwrap();
                let b = gamma_literal(x, mu, p);
                assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{x} {mu} {p}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn lambda_examples() {
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(lambda_r(x, 1.0, 1.0).unwrap(), 0.0);
        }
        assert_eq!(lambda_r(0.0, 1.0, 0.0).unwrap(), -1.0);
        let p = 0.7;
        assert!((lambda_r(0.0, 4.0, p).unwrap() - 4.0 * (p + 0.5)).abs() < 1e-14);
        assert!(lambda_r(0.5, 2.5, 0.0).is_err());
        assert!(lambda_r(-0.1, 2.0, 0.0).is_err());
    }

    #[test]
    fn lambda_agrees_with_literal_form_away_from_zero() {
        for &x in &[0.05, 0.2, 0.5, 1.0] {
            for mu in 1..=12 {
                for &p in &[0.0, 1.0, 3.5] {
                    let a = lambda_r(x, mu as f64, p).unwrap();
                    let b = lambda_literal(x, mu as f64, p);
                    assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{x} {mu} {p}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn interval_values_differentiate_to_kernels() {
        let fd = |f: &dyn Fn(f64) -> f64, x: f64| (f(x + 1e-6) - f(x - 1e-6)) / 2e-6;
        for &x in &[0.1, 0.45, 0.8] {
            for &(mu, p) in &[(3.0, 0.0), (4.0, 1.2), (12.0, 0.0)] {
                let dv = fd(&|x| interval_value_continuous(x, mu, p), x);
                let k = (mu * x).exp() * gamma_r(x, mu, p).unwrap();
                assert!((dv - k).abs() <= 1e-6 * (1.0 + k.abs()));
                let dv = fd(&|x| interval_value_discrete(x, mu, p), x);
                let k = lambda_r(x, mu, p).unwrap();
                assert!((dv - k).abs() <= 1e-6 * (1.0 + k.abs()));
            }
        }
    }

    fn decide_continuous(mu: f64, p: f64) -> Decision {
        decide_scattered_control(
            |x| gamma_r(x, mu, p).unwrap(),
            |x| interval_value_continuous(x, mu, p),
        )
    }

    #[test]
    fn last_interval_decisions() {
        let d = decide_continuous(3.0, 0.0);
        assert_eq!(d.rule, DecisionRule::Root);
        assert!((d.value - 0.4536).abs() < 1e-3);
        assert!((decide_continuous(4.0, 0.0).value - 0.6392).abs() < 1e-3);
        let d = decide_scattered_control(
            |x| lambda_r(x, 4.0, 0.0).unwrap(),
            |x| interval_value_discrete(x, 4.0, 0.0),
        );
        assert!((d.value - 0.2886).abs() < 1e-3);
        assert_eq!(decide_continuous(2.0, 0.0).value, 0.0);
        assert_eq!(decide_continuous(2.0, 2.0).value, 1.0);
    }

    #[test]
    fn flat_kernel_falls_back() {
        let d = decide_scattered_control(
            |x| lambda_r(x, 1.0, 1.0).unwrap(),
            |x| interval_value_discrete(x, 1.0, 1.0),
        );
        assert_eq!(d.rule, DecisionRule::Fallback);
        assert!(d.diagnostic.is_some());
        assert!((0.0..=1.0).contains(&d.value));
    }
}
