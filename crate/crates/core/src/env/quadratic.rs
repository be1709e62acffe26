use rand::{Rng, RngCore};

use super::{check_dim, Environment};
use crate::error::{Error, Result};
use crate::types::{Context, ValuationPair};

/// Quadratic valuations `f_s(x) = (x'Ax + d^2) / (2d^2)` and
/// `f_b(x) = (x'Bx + d^2) / (2d^2)` with entries of `A`, `B` in `[-1, 1]`.
///
/// `|x'Ax| <= d^2` on the cube, so both functions map into `[0, 1]`; the
/// gradient has 1-norm at most `2d^2 / (2d^2)`, so both are 1-Lipschitz in
/// the sup norm.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticEnv {
    d: usize,
    seller: Vec<f64>,
    buyer: Vec<f64>,
}

impl QuadraticEnv {
    /// `seller` and `buyer` are row-major `d x d` matrices.
    pub fn new(d: usize, seller: Vec<f64>, buyer: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidConfig("dimension must be positive".into()));
        }
        for (name, m) in [("seller", &seller), ("buyer", &buyer)] {
            if m.len() != d * d {
                return Err(Error::InvalidConfig(format!(
                    "{name} matrix has {} entries, expected {}",
                    m.len(),
                    d * d
                )));
            }
            if m.iter().any(|v| !(-1.0..=1.0).contains(v)) {
                return Err(Error::InvalidConfig(format!(
                    "{name} matrix entries must lie in [-1, 1]"
                )));
            }
        }
        Ok(QuadraticEnv { d, seller, buyer })
    }

    /// Matrices with independent uniform entries in `[-1, 1]`.
    pub fn random(d: usize, rng: &mut dyn RngCore) -> Result<Self> {
        let mut draw =
            || -> Vec<f64> { (0..d * d).map(|_| rng.random_range(-1.0..=1.0)).collect() };
        let seller = draw();
        let buyer = draw();
        Self::new(d, seller, buyer)
    }

    pub fn seller_matrix(&self) -> &[f64] {
        &self.seller
    }

    pub fn buyer_matrix(&self) -> &[f64] {
        &self.buyer
    }

    fn evaluate(&self, m: &[f64], x: &[f64]) -> f64 {
        let d = self.d;
        let mut q = 0.0;
        for i in 0..d {
            let row = &m[i * d..(i + 1) * d];
            let inner: f64 = row.iter().zip(x).map(|(a, xj)| a * xj).sum();
            q += x[i] * inner;
        }
        let d2 = (d * d) as f64;
        ((q + d2) / (2.0 * d2)).clamp(0.0, 1.0)
    }
}

impl Environment for QuadraticEnv {
    fn dim(&self) -> usize {
        self.d
    }

    fn lipschitz(&self) -> f64 {
        1.0
    }

    fn valuations(&self, x: &Context) -> Result<ValuationPair> {
        check_dim(self.d, x)?;
        ValuationPair::new(
            self.evaluate(&self.seller, x),
            self.evaluate(&self.buyer, x),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx(v: &[f64]) -> Context {
        Context::new(v.to_vec()).unwrap()
    }

    #[test]
    fn oracle_examples() {
        let env = QuadraticEnv::new(2, vec![0.0; 4], vec![0.0; 4]).unwrap();
        let v = env.valuations(&ctx(&[0.3, 0.9])).unwrap();
        assert_eq!((v.seller(), v.buyer()), (0.5, 0.5));

        let env = QuadraticEnv::new(2, vec![1.0; 4], vec![0.0; 4]).unwrap();
        let v = env.valuations(&ctx(&[1.0, 1.0])).unwrap();
        assert_eq!(v.seller(), 1.0);
        let env = QuadraticEnv::new(2, vec![-1.0; 4], vec![0.0; 4]).unwrap();
        assert_eq!(env.valuations(&ctx(&[1.0, 1.0])).unwrap().seller(), 0.0);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(QuadraticEnv::new(2, vec![0.0; 3], vec![0.0; 4]).is_err());
        assert!(QuadraticEnv::new(2, vec![1.5; 4], vec![0.0; 4]).is_err());
        assert!(QuadraticEnv::new(0, vec![], vec![]).is_err());
    }

    /// Independent check of the declared constant: finite-difference
    /// gradients over a grid, whose 1-norm bounds the sup-norm Lipschitz
    /// constant, stay below 1 for extreme and random matrices.
    #[test]
    fn gradient_sweep_confirms_unit_lipschitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in 1..=4usize {
            let mut envs = vec![QuadraticEnv::new(d, vec![1.0; d * d], vec![-1.0; d * d]).unwrap()];
            for _ in 0..5 {
                envs.push(QuadraticEnv::random(d, &mut rng).unwrap());
            }
            let h = 1e-6;
            for env in &envs {
                for _ in 0..400 {
                    let x: Vec<f64> = (0..d).map(|_| rng.random_range(h..1.0 - h)).collect();
                    for m in [env.seller_matrix(), env.buyer_matrix()] {
                        let mut norm1 = 0.0;
                        for i in 0..d {
                            let (mut up, mut dn) = (x.clone(), x.clone());
                            up[i] += h;
                            dn[i] -= h;
                            norm1 +=
                                ((env.evaluate(m, &up) - env.evaluate(m, &dn)) / (2.0 * h)).abs();
                        }
                        assert!(norm1 <= 1.0 + 1e-6, "d={d} grad 1-norm {norm1}");
                    }
                }
            }
        }
    }

    #[test]
    fn random_pairs_respect_declared_lipschitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in 1..=4usize {
            let env = QuadraticEnv::random(d, &mut rng).unwrap();
            for _ in 0..2000 {
                let x = ctx(&(0..d).map(|_| rng.random::<f64>()).collect::<Vec<_>>());
                let y = ctx(&(0..d).map(|_| rng.random::<f64>()).collect::<Vec<_>>());
                let (vx, vy) = (env.valuations(&x).unwrap(), env.valuations(&y).unwrap());
                let dist = x.sup_distance(&y);
                assert!((vx.seller() - vy.seller()).abs() <= env.lipschitz() * dist + 1e-12);
                assert!((vx.buyer() - vy.buyer()).abs() <= env.lipschitz() * dist + 1e-12);
                assert!((0.0..=1.0).contains(&vx.seller()) && (0.0..=1.0).contains(&vx.buyer()));
            }
        }
    }
}
