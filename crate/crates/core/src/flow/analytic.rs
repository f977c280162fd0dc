//! Closed-form test objectives.

/// `(x + 2)^2 (x + 1)^2 (x - 1)^2`: three zero-valued wells at -2, -1 and 1.
pub fn fictitious_1d(x: f64) -> f64 {
    let v = (x + 2.0) * (x + 1.0) * (x - 1.0);
    v * v
}

pub const VALLEY_MIN: [f64; 2] = [2.0, 2.5];

/// Anisotropic quadratic valley, steep in `f` and shallow in `b`, with its
/// minimum at `(2, 2.5)`.
pub fn synthetic_valley_2d(f: f64, b: f64) -> f64 {
    let df = f - VALLEY_MIN[0];
    let db = b - VALLEY_MIN[1];
    5.0 * df * df + 0.2 * db * db + 0.05 * df * db
}

/// Analytic gradient of [`synthetic_valley_2d`].
pub fn synthetic_valley_gradient(f: f64, b: f64) -> [f64; 2] {
    let df = f - VALLEY_MIN[0];
    let db = b - VALLEY_MIN[1];
    [10.0 * df + 0.05 * db, 0.4 * db + 0.05 * df]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fictitious_roots_and_origin() {
        assert_eq!(fictitious_1d(-2.0), 0.0);
        assert_eq!(fictitious_1d(-1.0), 0.0);
        assert_eq!(fictitious_1d(1.0), 0.0);
        assert_eq!(fictitious_1d(0.0), 4.0);
    }

    #[test]
    fn valley_values() {
        assert_eq!(synthetic_valley_2d(2.0, 2.5), 0.0);
        assert!((synthetic_valley_2d(3.0, 2.5) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn valley_gradient_anisotropy() {
        let gf = synthetic_valley_gradient(2.5, 2.5)[0];
        let gb = synthetic_valley_gradient(2.0, 3.0)[1];
        assert!((gf / gb - 25.0).abs() < 1e-12);
        // central differences agree with the analytic gradient
        let h = 1e-5;
        let (f, b) = (2.7, 1.9);
        let g = synthetic_valley_gradient(f, b);
        let nf = (synthetic_valley_2d(f + h, b) - synthetic_valley_2d(f - h, b)) / (2.0 * h);
        let nb = (synthetic_valley_2d(f, b + h) - synthetic_valley_2d(f, b - h)) / (2.0 * h);
        assert!((g[0] - nf).abs() < 1e-8 && (g[1] - nb).abs() < 1e-8);
    }
}
