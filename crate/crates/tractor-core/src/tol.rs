//! Tolerance convention used across the engine.
//!
//! Two floats compare equal when `|a - b| <= tol * max(1, |a|, |b|)`: absolute
//! near zero, relative for large magnitudes. `1e-9` is the engine default;
//! individual checks pin tighter or looser values where appropriate.

/// Default comparison tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Scale-aware closeness test.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

/// Scale-aware residual: `|a - b| / max(1, |a|, |b|)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absolute_near_zero_relative_when_large() {
        assert!(close(0.0, 5e-10, 1e-9));
        assert!(!close(0.0, 5e-9, 1e-9));
        assert!(close(1e12, 1e12 * (1.0 + 1e-10), 1e-9));
        assert!(!close(1e12, 1e12 * (1.0 + 1e-8), 1e-9));
    }
}
