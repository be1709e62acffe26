use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::types::sup_distance;

/// Slack allowed when validating the finite-domain Lipschitz condition.
const LIPSCHITZ_SLACK: f64 = 1e-12;

/// The McShane extension `x -> min_i (f(x_i) + L |x - x_i|_inf)` of a
/// function known on finitely many points.
#[derive(Debug, Clone)]
pub struct LipschitzExtension {
    d: usize,
    points: Vec<f64>,
    values: Vec<f64>,
    lipschitz: f64,
    /// Exact coordinate bits of every domain point, so queries on the
    /// domain return the stored value without rounding.
    index: HashMap<Vec<u64>, usize>,
}

fn key(x: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 are the same point
    x.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// Extends `values` (given on `points`) to the whole space, after checking
/// that the data is `lipschitz`-Lipschitz under the sup norm.
pub fn mcshane_extend(
    points: &[Vec<f64>],
    values: &[f64],
    lipschitz: f64,
) -> Result<LipschitzExtension> {
    let ext = LipschitzExtension::build(points, values, lipschitz)?;
    let n = ext.values.len();
    for i in 0..n {
        for j in i + 1..n {
            let dist = sup_distance(ext.point(i), ext.point(j));
            if (ext.values[i] - ext.values[j]).abs() > lipschitz * dist + LIPSCHITZ_SLACK {
                return Err(Error::NotLipschitz { lipschitz, i, j });
            }
        }
    }
    Ok(ext)
}

impl LipschitzExtension {
    /// Builds without the quadratic pairwise check; callers guarantee the
    /// Lipschitz condition by construction.
    pub(crate) fn build(points: &[Vec<f64>], values: &[f64], lipschitz: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidConfig(
                "extension needs at least one point".into(),
            ));
        }
        if points.len() != values.len() {
            return Err(Error::InvalidConfig(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "Lipschitz constant {lipschitz} must be non-negative"
            )));
        }
        let d = points[0].len();
        if d == 0 || points.iter().any(|p| p.len() != d) {
            return Err(Error::InvalidConfig(
                "points must share a positive dimension".into(),
            ));
        }
        let mut index = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if index.insert(key(p), i).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate point {p:?}")));
            }
        }
        Ok(LipschitzExtension {
            d,
            points: points.concat(),
            values: values.to_vec(),
            lipschitz,
            index,
        })
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        if let Some(&i) = self.index.get(&key(x)) {
            return self.values[i];
        }
        (0..self.values.len())
            .map(|i| self.values[i] + self.lipschitz * sup_distance(x, self.point(i)))
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_point_is_a_cone() {
        let ext = mcshane_extend(&[vec![0.2, 0.4]], &[0.3], 2.0).unwrap();
        assert_eq!(ext.eval(&[0.2, 0.4]), 0.3);
        assert!((ext.eval(&[0.5, 0.5]) - (0.3 + 2.0 * 0.3)).abs() < 1e-15);
        assert!((ext.eval(&[0.0, 1.0]) - (0.3 + 2.0 * 0.6)).abs() < 1e-15);
    }

    #[test]
    fn agrees_on_domain() {
        let pts = vec![vec![0.1], vec![0.35], vec![0.9]];
        let vals = [0.2, 0.4, 0.1];
        let ext = mcshane_extend(&pts, &vals, 1.0).unwrap();
        for (p, v) in pts.iter().zip(vals) {
            assert_eq!(ext.eval(p), v);
        }
    }

    #[test]
    fn midpoint_of_two_points() {
        // values v and v + L*D at sup distance D: both cone terms meet at v + L*D/2
        let (l, v, dist) = (1.5, 0.2, 0.4);
        let ext = mcshane_extend(&[vec![0.1, 0.3], vec![0.5, 0.5]], &[v, v + l * dist], l).unwrap();
        let mid = ext.eval(&[0.3, 0.4]);
        assert!((mid - (v + l * dist / 2.0)).abs() < 1e-12, "{mid}");
    }

    #[test]
    fn rejects_non_lipschitz_data() {
        let err = mcshane_extend(&[vec![0.0], vec![0.1]], &[0.0, 0.5], 1.0).unwrap_err();
        assert!(matches!(err, Error::NotLipschitz { .. }));
        assert!(mcshane_extend(&[], &[], 1.0).is_err());
        assert!(mcshane_extend(&[vec![0.0], vec![0.0]], &[0.0, 0.0], 1.0).is_err());
        assert!(mcshane_extend(&[vec![0.0]], &[0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn random_instances_are_lipschitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let d = rng.random_range(1..4);
            let l = rng.random_range(0.1..3.0);
            // values built from a Lipschitz function so the data is valid
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = rng.random_range(1..30);
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
                .collect();
            let vals: Vec<f64> = pts
                .iter()
                .map(|p| {
                    l * p
                        .iter()
                        .zip(&w)
                        .map(|(x, w)| x * w)
                        .fold(f64::MIN, f64::max)
                })
                .collect();
            let ext = mcshane_extend(&pts, &vals, l).unwrap();
            for _ in 0..200 {
                let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                let y: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                assert!((ext.eval(&x) - ext.eval(&y)).abs() <= l * sup_distance(&x, &y) + 1e-12);
            }
        }
    }
}
