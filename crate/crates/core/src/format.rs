/// Round-trip decimal form with 17 significant digits.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}
