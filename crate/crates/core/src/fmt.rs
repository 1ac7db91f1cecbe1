//! Number formatting shared by the CSV and table writers.

/// Formats like C's `%.{digits}g`: `digits` significant digits, trailing
/// zeros dropped, exponent form only for very large or small magnitudes.
pub fn sig(x: f64, digits: usize) -> String {
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
    let digits = digits.max(1);
    // round first so the exponent reflects the printed value (9.9996 -> 10.00)
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        return format!("{m}e{exp}");
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rounds to `digits` significant figures and prints without exponent,
/// the way published cost tables show values (514120 -> "514000").
pub fn round_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return sig(x, digits);
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = digits as i32 - 1 - exp;
    if decimals >= 0 {
        let s = format!("{x:.*}", decimals as usize);
        // rounding may carry into a new digit, e.g. 99.96 -> 100.0
        let back: f64 = s.parse().unwrap_or(x);
        if back != 0.0 && back.abs().log10().floor() as i32 > exp {
            return round_sig(back, digits);
        }
        s
    } else {
        let factor = 10f64.powi(-decimals);
        format!("{:.0}", (x / factor).round() * factor)
    }
}
