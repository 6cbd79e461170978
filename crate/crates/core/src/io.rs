//! Text formatting shared by every CSV writer.

/// Shortest round-trip representation; scientific notation outside
/// `[1e-4, 1e15)` so tiny masses stay compact. `+∞` is written as `inf`.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let a = x.abs();
    if (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Inverse of [`format_float`]; also accepts anything `f64::from_str` does.
pub fn parse_float(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" | "+inf" | "Infinity" => Some(f64::INFINITY),
        "-inf" | "-Infinity" => Some(f64::NEG_INFINITY),
        t => t.parse().ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for x in [0.0, 0.02, 1.0 / 3.0, 1e-300, -2.5e-7, 123456.75, f64::INFINITY, 5e20] {
            let s = format_float(x);
            assert_eq!(parse_float(&s), Some(x), "{s}");
        }
        assert_eq!(format_float(0.02), "0.02");
        assert_eq!(format_float(1e-7), "1e-7");
        assert_eq!(format_float(f64::INFINITY), "inf");
    }
}
