/// Compares an analytic gradient against central finite differences.
///
/// `f` returns `(value, gradient)` at a point. The result is the largest
/// coordinate error `|analytic − numeric| / max(1, |analytic|)`.
pub fn check_gradient<F>(f: F, point: &[f64], h: f64) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(point);
    assert_eq!(analytic.len(), point.len(), "gradient length");
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..point.len() {
        x[i] = point[i] + h;
        let fp = f(&x).0;
        x[i] = point[i] - h;
        let fm = f(&x).0;
        x[i] = point[i];
        let numeric = (fp - fm) / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(1.0);
        worst = worst.max(err);
    }
    worst
}
