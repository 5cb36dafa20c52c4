use super::tensor::{dot, norm};
use crate::error::{Error, Result};

/// Unit vector `v / ‖v‖` together with the norm it was divided by.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub unit: Vec<f64>,
    pub norm: f64,
}

pub fn l2_normalize(v: &[f64]) -> Result<Normalized> {
    let n = norm(v);
    if !n.is_finite() {
        return Err(Error::NonFinite("vector to normalize".into()));
    }
    if n == 0.0 {
        return Err(Error::Degenerate("cannot normalize a zero vector".into()));
    }
    Ok(Normalized {
        unit: v.iter().map(|x| x / n).collect(),
        norm: n,
    })
}

impl Normalized {
    /// Vector-Jacobian product: `(I − ûûᵀ) g / ‖v‖`.
    pub fn backward(&self, grad_unit: &[f64]) -> Vec<f64> {
        let proj = dot(&self.unit, grad_unit);
        self.unit
            .iter()
            .zip(grad_unit)
            .map(|(u, g)| (g - u * proj) / self.norm)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn three_four_five() {
        let n = l2_normalize(&[3.0, 4.0]).unwrap();
        assert!((n.unit[0] - 0.6).abs() < 1e-15);
        assert!((n.unit[1] - 0.8).abs() < 1e-15);
        assert_eq!(n.norm, 5.0);
    }

    #[test]
    fn unit_vector_is_fixed_point() {
        let u = [0.0, 1.0, 0.0];
        assert_eq!(l2_normalize(&u).unwrap().unit, u);
    }

    #[test]
    fn zero_vector_is_degenerate() {
        assert!(matches!(l2_normalize(&[0.0, 0.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn jvp_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for _ in 0..10 {
            let d = rng.gen_range(2..10);
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = l2_normalize(&v).unwrap();
            // analytic J·dir; J is symmetric so the VJP gives the JVP.
            let analytic = n.backward(&dir);
            let plus: Vec<f64> = v.iter().zip(&dir).map(|(a, b)| a + h * b).collect();
            let minus: Vec<f64> = v.iter().zip(&dir).map(|(a, b)| a - h * b).collect();
            let up = l2_normalize(&plus).unwrap().unit;
            let um = l2_normalize(&minus).unwrap().unit;
            for i in 0..d {
                let fd = (up[i] - um[i]) / (2.0 * h);
                let rel = (analytic[i] - fd).abs() / analytic[i].abs().max(1.0);
                assert!(rel < 1e-6, "coord {i}: {} vs {fd}", analytic[i]);
            }
        }
    }

    proptest! {
        #[test]
        fn output_has_unit_norm(v in proptest::collection::vec(-1e3f64..1e3, 1..32)) {
            prop_assume!(norm(&v) > 1e-12);
            let u = l2_normalize(&v).unwrap().unit;
            prop_assert!((norm(&u) - 1.0).abs() <= 1e-9);
        }
    }
}
