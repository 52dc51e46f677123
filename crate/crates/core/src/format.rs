//! Number formatting for reports: six significant digits.

/// `x` printed with six significant digits, in plain notation unless the
/// magnitude is extreme.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{x:.5e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..].parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        sci
    }
}

/// `x` rounded to six significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    fmt_sig(x).parse().expect("formatted float parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig(0.18579123), "0.185791");
        assert_eq!(fmt_sig(1.0), "1.00000");
        assert_eq!(fmt_sig(123456.78), "123457");
        assert_eq!(fmt_sig(9.9999996), "10.0000");
        assert_eq!(fmt_sig(-0.0012345678), "-0.00123457");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.5e-9), "1.50000e-9");
        assert_eq!(round_sig(0.632120558828), 0.632121);
    }
}
