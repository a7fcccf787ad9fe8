//! Known optima verified in exact rational arithmetic, then compared with the
//! floating-point planner.

use fockconv::planner::PmaxTable;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn to_f64(x: &BigRational) -> f64 {
    let n: f64 = x.numer().to_string().parse().unwrap();
    let d: f64 = x.denom().to_string().parse().unwrap();
    n / d
}

fn choose(n: usize, k: usize) -> BigRational {
    (0..k).fold(BigRational::one(), |acc, i| acc * q((n - i) as i64, (i + 1) as i64))
}

/// Polynomial in `T` with rational coefficients, lowest degree first.
#[derive(Clone, Debug)]
struct Poly(Vec<BigRational>);

impl Poly {
    fn eval(&self, t: &BigRational) -> BigRational {
        self.0.iter().rev().fold(BigRational::zero(), |acc, c| acc * t + c)
    }

    fn derivative(&self) -> Poly {
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * q(i as i64, 1))
                .collect(),
        )
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![BigRational::zero(); self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    fn pow(&self, e: usize) -> Poly {
        (0..e).fold(Poly(vec![BigRational::one()]), |acc, _| acc.mul(self))
    }

    fn scale(&self, c: &BigRational) -> Poly {
        Poly(self.0.iter().map(|x| x * c).collect())
    }

    fn add(&self, other: &Poly) -> Poly {
        let len = self.0.len().max(other.0.len());
        Poly(
            (0..len)
                .map(|i| {
                    self.0.get(i).cloned().unwrap_or_else(BigRational::zero)
                        + other.0.get(i).cloned().unwrap_or_else(BigRational::zero)
                })
                .collect(),
        )
    }
}

/// First-stage success probability as a polynomial in `T`, given the
/// continuation value after `j` subtracted photons.
fn first_stage(m: usize, n: usize, prior: &[BigRational]) -> Poly {
    let t = Poly(vec![BigRational::zero(), BigRational::one()]);
    let r = Poly(vec![BigRational::one(), -BigRational::one()]);
    (0..=m - n).fold(Poly(vec![BigRational::zero()]), |acc, j| {
        acc.add(&t.pow(m - j).mul(&r.pow(j)).scale(&(choose(m, j) * &prior[j])))
    })
}

fn single_stage_prior(d: usize) -> Vec<BigRational> {
    let mut p = vec![BigRational::zero(); d + 1];
    p[d] = BigRational::one();
    p
}

#[test]
fn two_to_one_optimum_is_k_over_k_plus_one() {
    // continuation after 0 subtractions with k-1 stages left is (k-1)/k
    for k in 1..=9i64 {
        let prior = [q(k - 1, k), BigRational::one()];
        let p = first_stage(2, 1, &prior);
        let t_opt = q(k, k + 1);
        assert!(p.derivative().eval(&t_opt).is_zero(), "k={k}");
        assert_eq!(p.eval(&t_opt), q(k, k + 1));

        let table = PmaxTable::build(2, 1, k as usize).unwrap();
        assert!((table.probability(2, k as usize).unwrap() - to_f64(&q(k, k + 1))).abs() < 1e-12);
        assert!((table.first_transmittance(2, k as usize).unwrap() - to_f64(&t_opt)).abs() < 1e-9);
    }
}

#[test]
fn three_to_two_with_two_stages() {
    let one_stage = first_stage(3, 2, &single_stage_prior(1));
    let t = q(2, 3);
    assert!(one_stage.derivative().eval(&t).is_zero());
    let p1 = one_stage.eval(&t);
    assert_eq!(p1, q(4, 9));

    let two_stage = first_stage(3, 2, &[p1, BigRational::one()]);
    let t1 = q(18, 23);
    assert!(two_stage.derivative().eval(&t1).is_zero());
    assert_eq!(two_stage.eval(&t1), q(324, 529));

    let table = PmaxTable::build(3, 2, 2).unwrap();
    assert!((table.probability(3, 2).unwrap() - 324.0 / 529.0).abs() < 1e-12);
    assert!((table.first_transmittance(3, 2).unwrap() - 18.0 / 23.0).abs() < 1e-9);
}

#[test]
fn three_to_one_single_stage() {
    let p = first_stage(3, 1, &single_stage_prior(2));
    let t = q(1, 3);
    assert!(p.derivative().eval(&t).is_zero());
    assert_eq!(p.eval(&t), q(4, 9));

    let table = PmaxTable::build(3, 1, 1).unwrap();
    assert!((table.probability(3, 1).unwrap() - 4.0 / 9.0).abs() < 1e-12);
    assert!((table.first_transmittance(3, 1).unwrap() - 1.0 / 3.0).abs() < 1e-9);
}

#[test]
fn five_to_four_single_stage() {
    let p = first_stage(5, 4, &single_stage_prior(1));
    assert_eq!(p.eval(&q(4, 5)), q(256, 625));
    assert!(p.derivative().eval(&q(4, 5)).is_zero());
    let table = PmaxTable::build(5, 4, 1).unwrap();
    assert!((table.probability(5, 1).unwrap() - 0.4096).abs() < 1e-12);
}
