//! Plain-text number formatting shared by the CSV writers.

/// Shortest-round-trip is not enough for diffing; every value is written with
/// 17 significant digits.
pub fn sig17(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_exactly() {
        for &v in &[0.1, 1.0 / 3.0, -2.5e-300, 123456.789, f64::MIN_POSITIVE] {
            let s = sig17(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(sig17(0.0), "0");
        assert_eq!(sig17(0.1), "1.0000000000000001e-1");
    }
}
