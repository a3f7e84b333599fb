//! Small shared helpers: seeded RNG streams, point sampling, and global
//! polynomial functions evaluable as jets at any base point.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::jets::Jet;

/// FNV-1a hash, used to derive independent RNG streams from string labels.
pub fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic RNG for a (seed, label) pair. Different labels give
/// decorrelated streams, so adding a check never shifts another's samples.
pub fn rng_for(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(label))
}

/// Uniform point in the axis-aligned box `[-half, half]^dim`.
pub fn sample_box(rng: &mut ChaCha8Rng, dim: usize, half: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-half..=half)).collect()
}

/// A fixed global polynomial in monomial form, expandable as a jet at any
/// base point. Used to manufacture analytic test data (perturbed metrics,
/// conformal factors) that can be re-evaluated consistently across points.
#[derive(Clone, Debug)]
pub struct Poly {
    dim: usize,
    terms: Vec<(Vec<u16>, f64)>,
}

impl Poly {
    pub fn new(dim: usize, terms: Vec<(Vec<u16>, f64)>) -> Poly {
        assert!(terms.iter().all(|(a, _)| a.len() == dim));
        Poly { dim, terms }
    }

    /// Random polynomial of total degree `<= deg` with coefficients uniform
    /// in `[-amp, amp]`.
    pub fn random(rng: &mut ChaCha8Rng, dim: usize, deg: u16, amp: f64) -> Poly {
        let mut terms = Vec::new();
        let mut scratch = vec![0u16; dim];
        collect_monomials(deg, 0, &mut scratch, &mut terms, rng, amp);
        Poly { dim, terms }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(a, c)| {
                c * a
                    .iter()
                    .zip(x)
                    .map(|(&e, &v)| v.powi(e as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// Expand around `x` as a jet of the given order.
    pub fn eval_jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        let vars: Vec<Jet> = (0..self.dim)
            .map(|i| Jet::variable(self.dim, order, i, x[i]))
            .collect::<Result<_>>()?;
        let mut acc = Jet::constant(self.dim, order, 0.0);
        for (a, c) in &self.terms {
            let mut term = Jet::constant(self.dim, order, *c);
            for (i, &e) in a.iter().enumerate() {
                if e > 0 {
                    term = term.try_mul(&vars[i].powi(e as i32)?)?;
                }
            }
            acc = acc.try_add(&term)?;
        }
        Ok(acc)
    }
}

fn collect_monomials(
    left: u16,
    from: usize,
    scratch: &mut Vec<u16>,
    out: &mut Vec<(Vec<u16>, f64)>,
    rng: &mut ChaCha8Rng,
    amp: f64,
) {
    if from == scratch.len() {
        out.push((scratch.clone(), rng.gen_range(-amp..amp)));
        return;
    }
    for v in 0..=left {
        scratch[from] = v;
        collect_monomials(left - v, from + 1, scratch, out, rng, amp);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let mut a = rng_for(7, "alpha");
        let mut b = rng_for(7, "alpha");
        let mut c = rng_for(7, "beta");
        let xa: f64 = a.gen();
        let xb: f64 = b.gen();
        let xc: f64 = c.gen();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }
}
