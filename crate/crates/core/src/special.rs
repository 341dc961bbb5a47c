//! Small special functions used by the closed forms.

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `ln(e^y - 1)` for `y > 0`, without overflow for large `y`.
pub fn ln_expm1(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

/// Inverse of [`ln_expm1`]: `ln(1 + e^z)`.
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `ln n!`, exact summation for the small integers used here.
pub fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Harmonic number `H_n = 1 + 1/2 + ... + 1/n`.
pub fn harmonic(n: u64) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

/// Digamma at a positive integer: `ψ(n) = H_{n-1} - γ`.
pub fn digamma_int(n: u64) -> f64 {
    assert!(n >= 1);
    harmonic(n - 1) - EULER_GAMMA
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ln_expm1_and_softplus_are_inverse() {
        for &y in &[1e-8, 0.3, 2.0, 29.9, 30.1, 400.0] {
            assert_relative_eq!(softplus(ln_expm1(y)), y, max_relative = 1e-13);
        }
    }

    #[test]
    fn factorials() {
        assert_relative_eq!(ln_factorial(5), 120f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(ln_binomial(6, 2), 15f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(digamma_int(1), -EULER_GAMMA);
    }
}
