use num_traits::Zero;
use serde::Serialize;

use super::integrate::{boundary_integral, interior_integral, Polynomial};
use super::rational::{self, q, Q};
use super::Polytope;
use crate::error::{Error, Result};

/// `x -> constant + <linear, x>` with exact rational coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineFunction {
    pub constant: Q,
    pub linear: Vec<Q>,
}

#[derive(Serialize)]
struct AffineRepr {
    constant: f64,
    linear: Vec<f64>,
}

impl AffineFunction {
    pub fn new(constant: Q, linear: Vec<Q>) -> Self {
        AffineFunction { constant, linear }
    }

    pub fn constant(dim: usize, c: Q) -> Self {
        AffineFunction::new(c, vec![Q::zero(); dim])
    }

    pub fn coordinate(dim: usize, i: usize) -> Self {
        let mut linear = vec![Q::zero(); dim];
        linear[i] = q(1);
        AffineFunction::new(Q::zero(), linear)
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn eval_exact(&self, x: &[Q]) -> Q {
        &self.constant + self.linear.iter().zip(x).map(|(a, b)| a * b).sum::<Q>()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        rational::to_f64(&self.constant)
            + self
                .linear
                .iter()
                .zip(x)
                .map(|(a, b)| rational::to_f64(a) * b)
                .sum::<f64>()
    }

    pub fn constant_f64(&self) -> f64 {
        rational::to_f64(&self.constant)
    }

    pub fn linear_f64(&self) -> Vec<f64> {
        self.linear.iter().map(rational::to_f64).collect()
    }

    pub fn to_polynomial(&self) -> Polynomial {
        let m = self.dim();
        let mut terms = vec![(self.constant.clone(), vec![0; m])];
        for (i, c) in self.linear.iter().enumerate() {
            let mut e = vec![0; m];
            e[i] = 1;
            terms.push((c.clone(), e));
        }
        Polynomial::new(m, terms)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(AffineRepr {
            constant: self.constant_f64(),
            linear: self.linear_f64(),
        })
        .expect("serializable")
    }
}

/// The affine function `theta` with `int_P theta f dx = int_{dP} f dsigma`
/// for every affine `f`. Its mean over `P` is `Vol(dP)/Vol(P)`.
pub fn extremal_affine(p: &Polytope) -> Result<AffineFunction> {
    let m = p.dim();
    let basis: Vec<AffineFunction> = std::iter::once(AffineFunction::constant(m, q(1)))
        .chain((0..m).map(|i| AffineFunction::coordinate(m, i)))
        .collect();
    let mut gram = vec![vec![Q::zero(); m + 1]; m + 1];
    for a in 0..=m {
        for b in a..=m {
            let mut e = vec![0u32; m];
            if a > 0 {
                e[a - 1] += 1;
            }
            if b > 0 {
                e[b - 1] += 1;
            }
            let v = interior_integral(p, &Polynomial::monomial(m, &e))?;
            gram[a][b] = v.clone();
            gram[b][a] = v;
        }
    }
    let rhs: Vec<Q> = basis.iter().map(|f| boundary_integral(p, f)).collect();
    let sol = rational::solve(&gram, &rhs).ok_or(Error::SingularGram)?;
    Ok(AffineFunction::new(sol[0].clone(), sol[1..].to_vec()))
}

/// Toric Futaki invariant `L(f) = int_{dP} f dsigma - (Vol(dP)/Vol(P)) int_P f dx`.
pub fn donaldson_futaki(p: &Polytope, f: &AffineFunction) -> Q {
    let sbar = p.mean_scalar_curvature();
    let interior = interior_integral(p, &f.to_polynomial()).expect("affine");
    boundary_integral(p, f) - sbar * interior
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::rational::q_frac;
    use super::*;

    #[test]
    fn segment_theta_is_two() {
        let t = extremal_affine(&cp1()).unwrap();
        assert_eq!(t, AffineFunction::new(q(2), vec![q(0)]));
    }

    #[test]
    fn simplex_theta_is_six() {
        let t = extremal_affine(&cp2()).unwrap();
        assert_eq!(t, AffineFunction::new(q(6), vec![q(0), q(0)]));
    }

    #[test]
    fn trapezoid_theta() {
        let t = extremal_affine(&f1()).unwrap();
        assert_eq!(
            t,
            AffineFunction::new(q_frac(54, 13), vec![q(0), q_frac(-24, 13)])
        );
    }

    #[test]
    fn futaki_values() {
        assert_eq!(donaldson_futaki(&cp1(), &AffineFunction::coordinate(1, 0)), q(0));
        assert_eq!(donaldson_futaki(&f1(), &AffineFunction::coordinate(2, 1)), q_frac(-2, 9));
        // Reflection (x,y) -> (2-x-y,y) forces 2L(x) = -L(y).
        assert_eq!(donaldson_futaki(&f1(), &AffineFunction::coordinate(2, 0)), q_frac(1, 9));
        for i in 0..2 {
            assert_eq!(donaldson_futaki(&cp2(), &AffineFunction::coordinate(2, i)), q(0));
        }
    }
}
