//! Float formatting shared by every text writer.

/// Rounds to 9 significant digits and prints the shortest decimal that
/// round-trips the rounded value. Idempotent: re-formatting a parsed output
/// reproduces it byte for byte.
pub fn fmt9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() { "NaN".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt9(30.0), "30");
        assert_eq!(fmt9(0.1), "0.1");
        assert_eq!(fmt9(1.234_567_891_23), "1.23456789");
        assert_eq!(fmt9(-0.0), "0");
        assert_eq!(fmt9(123_456_789_012.0), "123456789000");
    }

    #[test]
    fn idempotent() {
        for v in [1.0 / 3.0, -2.0 / 7.0 * 1e-5, 9.999_999_999_5, 12_345.678_9] {
            let once = fmt9(v);
            assert_eq!(fmt9(once.parse().unwrap()), once);
        }
    }
}
