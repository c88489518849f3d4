//! Fixed-precision float formatting for the CSV artifacts.

/// Formats `x` like C's `%.12g`: twelve significant digits, trailing zeros
/// trimmed, scientific notation outside `[1e-5, 1e12)`.
pub fn g12(x: f64) -> String {
    fmt_g(x, 12)
}

pub fn fmt_g(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let digits = digits.max(1);
    // The exponent after rounding decides the notation.
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

/// Shortest decimal text that parses back to exactly `x`.
pub fn exact(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:?}")
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g() {
        assert_eq!(g12(0.0), "0");
        assert_eq!(g12(1.0), "1");
        assert_eq!(g12(-0.015), "-0.015");
        assert_eq!(g12(0.1 + 0.2), "0.3");
        assert_eq!(g12(123456.789), "123456.789");
        assert_eq!(g12(1.0e-7), "1e-07");
        assert_eq!(g12(2.5e13), "2.5e+13");
        assert_eq!(g12(999999999999.9), "1e+12");
        assert_eq!(g12(std::f64::consts::PI), "3.14159265359");
    }

    #[test]
    fn exact_round_trips() {
        for &x in &[0.1 + 0.2, -1.0e-7, 1.0 / 3.0, 5e-324, 0.0] {
            assert_eq!(exact(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn parses_back_within_twelve_digits() {
        for &x in &[1.234567890123456e-3, -98765.4321098765, 6.02214076e23] {
            let y: f64 = g12(x).parse().unwrap();
            assert!(((x - y) / x).abs() < 1e-11);
        }
    }
}
