//! Decimal float formatting shared by every artifact writer.
//!
//! All CSV and JSON artifacts serialize f64 values through [`format_f64`],
//! which emits 17 significant digits. That is exactly enough to make the
//! decimal text round-trip bit-for-bit back to the original double, so
//! repeated runs with the same seed produce byte-identical files and a
//! saved checkpoint restores the exact parameter bits.

/// Format with 17 significant digits (one leading digit plus 16 after the
/// point, scientific notation). Round-trips any finite f64 exactly.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}
