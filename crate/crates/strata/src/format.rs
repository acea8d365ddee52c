//! Number formatting shared by every report writer.

/// `v` with 6 significant digits, trailing zeros trimmed, switching to
/// exponent notation outside `[1e-4, 1e6)`.
///
/// ```
/// use canopy_strata::format::sig6;
/// assert_eq!(sig6(0.8181818), "0.818182");
/// assert_eq!(sig6(20.0), "20");
/// assert_eq!(sig6(1234567.0), "1.23457e6");
/// ```
pub fn sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

/// `v` rounded to what [`sig6`] prints, for structured (JSON) output.
pub fn round6(v: f64) -> f64 {
    sig6(v).parse().unwrap_or(v)
}

/// Fixed 3 decimals (millimeters), used for horizontal coordinates where
/// 6 significant digits would drop sub-meter detail.
pub fn fixed3(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn trim_zeros(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(-0.0), "0");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(0.9), "0.9");
        assert_eq!(sig6(9.0 / 11.0), "0.818182");
        assert_eq!(sig6(6.0 / 7.0), "0.857143");
        assert_eq!(sig6(123.4564), "123.456");
        assert_eq!(sig6(999999.6), "1e6");
        assert_eq!(sig6(0.00012345678), "0.000123457");
        assert_eq!(sig6(0.000012345678), "1.23457e-5");
        assert_eq!(sig6(0.0000012345678), "1.23457e-6");
        assert_eq!(sig6(-2.5), "-2.5");
        assert_eq!(sig6(f64::NAN), "NaN");
    }

    #[test]
    fn rounding_matches_printing() {
        assert_eq!(round6(0.81818181), 0.818182);
        assert_eq!(fixed3(-0.0001), "0.000");
        assert_eq!(fixed3(12.3456), "12.346");
    }
}
