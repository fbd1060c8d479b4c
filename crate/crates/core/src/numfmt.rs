//! Fixed-precision number rendering shared by the grid and CSV writers.

/// Renders `v` the way C's `%.6g` does: six significant digits, trailing
/// zeros dropped, scientific notation outside `[1e-4, 1e6)`.
pub fn sig6(v: f64) -> String {
    sig(v, 6)
}

pub fn sig(v: f64, digits: usize) -> String {
    if v.is_nan() {
        return "nan".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let digits = digits.max(1);
    // Scientific rendering settles the decimal exponent after rounding.
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, v)).to_string()
    }
}

/// The value a reader recovers after `v` is written with [`sig6`].
pub fn printed(v: f64) -> f64 {
    if !v.is_finite() {
        return v;
    }
    sig6(v).parse().expect("sig6 output parses")
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
