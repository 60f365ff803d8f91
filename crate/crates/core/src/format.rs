//! Locale-independent number formatting for CSV and report output.

/// Fixed-point decimal with 9 significant digits, `.` as separator.
pub fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (8 - exponent).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // Rounding can carry into a new leading digit (9.9999999996 -> 10.00000000).
    let digits = s.chars().filter(char::is_ascii_digit).count();
    let leading_zeros = s
        .trim_start_matches('-')
        .chars()
        .take_while(|c| *c == '0' || *c == '.')
        .filter(|c| *c == '0')
        .count();
    if decimals > 0 && digits - leading_zeros > 9 {
        let d = decimals - 1;
        return format!("{x:.d$}");
    }
    s
}
