//! Truncated multivariate Taylor ("jet") arithmetic.
//!
//! A [`Jet`] holds the mixed partial derivatives of an analytic function at a
//! base point, up to a fixed total order. Coefficients are
//! derivative-normalized: slot `alpha` stores the raw value `∂^alpha f`, with
//! no `1/alpha!` folded in. Multiplication therefore applies the general
//! Leibniz rule with multinomial weights, and [`Jet::partial`] is a pure
//! re-indexing that drops the order by one.
//!
//! Storage is dense in graded-lexicographic rank order (total degree first,
//! then lexicographic). Ranks are stable across orders, so truncating to a
//! lower order is a prefix slice. A jet of dimension `d` and order `k` has
//! `C(d + k, d)` coefficients.
//!
//! Shared per-(dim, order) tables (index lists, Leibniz product table, axis
//! shifts) are built once and cached process-wide.

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Number of multi-indices of dimension `dim` with total degree `<= order`,
/// i.e. `C(dim + order, dim)`.
pub fn coeff_count(dim: usize, order: usize) -> usize {
    let mut n: usize = 1;
    for i in 1..=dim {
        n = n * (order + i) / i;
    }
    n
}

fn binomial_u(n: u16, k: u16) -> f64 {
    let (n, k) = (n as u64, k as u64);
    let k = k.min(n - k.min(n));
    let mut acc = 1f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Per-(dim, order) lookup tables shared by all jets of that shape.
struct Basis {
    dim: usize,
    order: usize,
    /// Graded-lex ordered multi-indices, rank -> exponents.
    indices: Vec<Vec<u16>>,
    rank: HashMap<Vec<u16>, usize>,
    /// Prefix lengths: `prefix[k]` = number of indices with degree `<= k`.
    prefix: Vec<usize>,
    /// Flattened Leibniz table: (target, left, right, multinomial weight)
    /// over all ordered pairs with `left + right = target`.
    mul_table: Vec<(u32, u32, u32, f64)>,
    /// `shift_up[axis][r]` = rank of `indices[r] + e_axis`, defined for all
    /// `r` with `|indices[r]| < order`.
    shift_up: Vec<Vec<u32>>,
}

impl Basis {
    fn build(dim: usize, order: usize) -> Basis {
        assert!(dim >= 1, "jet dimension must be at least 1");
        let mut indices = Vec::with_capacity(coeff_count(dim, order));
        let mut prefix = Vec::with_capacity(order + 1);
        let mut scratch = vec![0u16; dim];
        for degree in 0..=order {
            gen_degree(degree as u16, 0, &mut scratch, &mut indices);
            prefix.push(indices.len());
        }
        let rank: HashMap<Vec<u16>, usize> = indices
            .iter()
            .enumerate()
            .map(|(r, ix)| (ix.clone(), r))
            .collect();

        let mut mul_table = Vec::new();
        for (t, gamma) in indices.iter().enumerate() {
            // Enumerate alpha <= gamma componentwise with an odometer.
            let mut alpha = vec![0u16; dim];
            loop {
                let beta: Vec<u16> = gamma.iter().zip(&alpha).map(|(g, a)| g - a).collect();
                let a = rank[&alpha];
                let b = rank[&beta];
                let w: f64 = gamma
                    .iter()
                    .zip(&alpha)
                    .map(|(&g, &a)| binomial_u(g, a))
                    .product();
                mul_table.push((t as u32, a as u32, b as u32, w));
                // Advance the odometer.
                let mut axis = 0;
                loop {
                    if axis == dim {
                        break;
                    }
                    if alpha[axis] < gamma[axis] {
                        alpha[axis] += 1;
                        break;
                    }
                    alpha[axis] = 0;
                    axis += 1;
                }
                if axis == dim {
                    break;
                }
            }
        }

        // Indices that can still absorb one more derivative.
        let below = if order == 0 { 0 } else { prefix[order - 1] };
        let mut shift_up = Vec::with_capacity(dim);
        for axis in 0..dim {
            let mut col = Vec::with_capacity(below);
            for ix in indices.iter().take(below) {
                let mut up = ix.clone();
                up[axis] += 1;
                col.push(rank[&up] as u32);
            }
            shift_up.push(col);
        }

        Basis {
            dim,
            order,
            indices,
            rank,
            prefix,
            mul_table,
            shift_up,
        }
    }
}

/// Emit all multi-indices of exact total degree `left`, lexicographically
/// ascending, into `out`, filling `scratch[from..]`.
fn gen_degree(left: u16, from: usize, scratch: &mut Vec<u16>, out: &mut Vec<Vec<u16>>) {
    if from + 1 == scratch.len() {
        scratch[from] = left;
        out.push(scratch.clone());
        return;
    }
    for v in 0..=left {
        scratch[from] = v;
        gen_degree(left - v, from + 1, scratch, out);
    }
}

fn basis(dim: usize, order: usize) -> Arc<Basis> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Basis>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap();
    map.entry((dim, order))
        .or_insert_with(|| Arc::new(Basis::build(dim, order)))
        .clone()
}

/// Dense truncated Taylor expansion of a scalar analytic function.
#[derive(Clone)]
pub struct Jet {
    basis: Arc<Basis>,
    coeffs: Vec<f64>,
}

impl Jet {
    /// Jet of the constant function `value`.
    pub fn constant(dim: usize, order: usize, value: f64) -> Jet {
        let basis = basis(dim, order);
        let mut coeffs = vec![0.0; basis.indices.len()];
        coeffs[0] = value;
        Jet { basis, coeffs }
    }

    /// Jet of the coordinate function `x_axis` at a point whose `axis`
    /// coordinate is `base`: constant term `base`, first derivative 1 on
    /// `axis`, everything else 0. At order 0 the slope is truncated away and
    /// only the constant remains.
    pub fn variable(dim: usize, order: usize, axis: usize, base: f64) -> Result<Jet> {
        if axis >= dim {
            return Err(Error::InvalidArgument(format!(
                "variable axis {axis} out of range for dimension {dim}"
            )));
        }
        let mut jet = Jet::constant(dim, order, base);
        if order >= 1 {
            let mut e = vec![0u16; dim];
            e[axis] = 1;
            let r = jet.basis.rank[&e];
            jet.coeffs[r] = 1.0;
        }
        Ok(jet)
    }

    /// Zero jet with the same shape as `self`.
    pub fn zero_like(&self) -> Jet {
        Jet {
            basis: self.basis.clone(),
            coeffs: vec![0.0; self.coeffs.len()],
        }
    }

    /// Constant jet with the same shape as `self`.
    pub fn constant_like(&self, value: f64) -> Jet {
        let mut jet = self.zero_like();
        jet.coeffs[0] = value;
        jet
    }

    pub fn dim(&self) -> usize {
        self.basis.dim
    }

    pub fn order(&self) -> usize {
        self.basis.order
    }

    /// Value of the expanded function at the base point.
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Raw derivative `∂^alpha f` at the base point.
    ///
    /// # Panics
    /// Panics if `alpha` has the wrong length or exceeds the truncation order.
    pub fn coeff(&self, alpha: &[u16]) -> f64 {
        let r = self
            .basis
            .rank
            .get(alpha)
            .unwrap_or_else(|| panic!("multi-index {alpha:?} outside jet basis"));
        self.coeffs[*r]
    }

    /// Overwrite one derivative slot.
    ///
    /// # Panics
    /// Panics if `alpha` has the wrong length or exceeds the truncation order.
    pub fn set_coeff(&mut self, alpha: &[u16], value: f64) {
        let r = *self
            .basis
            .rank
            .get(alpha)
            .unwrap_or_else(|| panic!("multi-index {alpha:?} outside jet basis"));
        self.coeffs[r] = value;
    }

    /// All coefficients in graded-lex rank order.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Multi-index for a given rank.
    pub fn index_at(&self, rank: usize) -> &[u16] {
        &self.basis.indices[rank]
    }

    /// Largest coefficient magnitude (a cheap whole-jet norm).
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    fn check_compat(&self, rhs: &Jet) -> Result<()> {
        if self.dim() != rhs.dim() {
            return Err(Error::DimensionMismatch(self.dim(), rhs.dim()));
        }
        if self.order() != rhs.order() {
            return Err(Error::OrderMismatch(self.order(), rhs.order()));
        }
        Ok(())
    }

    /// Checked sum.
    pub fn try_add(&self, rhs: &Jet) -> Result<Jet> {
        self.check_compat(rhs)?;
        let mut out = self.clone();
        for (o, r) in out.coeffs.iter_mut().zip(&rhs.coeffs) {
            *o += r;
        }
        Ok(out)
    }

    /// Checked difference.
    pub fn try_sub(&self, rhs: &Jet) -> Result<Jet> {
        self.check_compat(rhs)?;
        let mut out = self.clone();
        for (o, r) in out.coeffs.iter_mut().zip(&rhs.coeffs) {
            *o -= r;
        }
        Ok(out)
    }

    /// Checked truncated product (general Leibniz rule).
    pub fn try_mul(&self, rhs: &Jet) -> Result<Jet> {
        self.check_compat(rhs)?;
        let mut out = self.zero_like();
        for &(t, a, b, w) in &self.basis.mul_table {
            out.coeffs[t as usize] += w * self.coeffs[a as usize] * rhs.coeffs[b as usize];
        }
        Ok(out)
    }

    /// Rescale every coefficient.
    pub fn scaled(&self, s: f64) -> Jet {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c *= s;
        }
        out
    }

    /// Add a constant to the expanded function.
    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += s;
        out
    }

    /// Partial derivative along `axis`: a pure re-index. The result has order
    /// one lower; differentiating an order-0 jet is a budget error.
    pub fn partial(&self, axis: usize) -> Result<Jet> {
        if axis >= self.dim() {
            return Err(Error::InvalidArgument(format!(
                "partial axis {axis} out of range for dimension {}",
                self.dim()
            )));
        }
        if self.order() == 0 {
            return Err(Error::OrderBudget {
                needed: 1,
                available: 0,
                context: "partial derivative".into(),
            });
        }
        let out_basis = basis(self.dim(), self.order() - 1);
        let n = out_basis.indices.len();
        let shift = &self.basis.shift_up[axis];
        let coeffs = (0..n).map(|r| self.coeffs[shift[r] as usize]).collect();
        Ok(Jet {
            basis: out_basis,
            coeffs,
        })
    }

    /// Drop derivative information above `order`.
    pub fn truncated(&self, order: usize) -> Result<Jet> {
        if order > self.order() {
            return Err(Error::OrderBudget {
                needed: order,
                available: self.order(),
                context: "truncation".into(),
            });
        }
        if order == self.order() {
            return Ok(self.clone());
        }
        // Graded order makes truncation a prefix slice.
        let n = self.basis.prefix[order];
        Ok(Jet {
            basis: basis(self.dim(), order),
            coeffs: self.coeffs[..n].to_vec(),
        })
    }

    /// Restrict to the subspace where the `axis` coordinate stays at its base
    /// value: keeps the coefficients with zero exponent on `axis` and
    /// re-indexes into dimension `dim - 1`.
    pub fn restrict_axis(&self, axis: usize) -> Result<Jet> {
        if axis >= self.dim() {
            return Err(Error::InvalidArgument(format!(
                "restrict axis {axis} out of range for dimension {}",
                self.dim()
            )));
        }
        if self.dim() == 1 {
            return Err(Error::UnsupportedDimension(
                "cannot restrict a one-dimensional jet".into(),
            ));
        }
        let out_basis = basis(self.dim() - 1, self.order());
        let mut coeffs = vec![0.0; out_basis.indices.len()];
        let mut full = vec![0u16; self.dim()];
        for (r, ix) in out_basis.indices.iter().enumerate() {
            full[..axis].copy_from_slice(&ix[..axis]);
            full[axis] = 0;
            full[axis + 1..].copy_from_slice(&ix[axis..]);
            coeffs[r] = self.coeffs[self.basis.rank[&full]];
        }
        Ok(Jet {
            basis: out_basis,
            coeffs,
        })
    }

    /// Extend into one more dimension, constant along the new `axis`.
    pub fn insert_axis(&self, axis: usize) -> Result<Jet> {
        if axis > self.dim() {
            return Err(Error::InvalidArgument(format!(
                "insert axis {axis} out of range for dimension {}",
                self.dim()
            )));
        }
        let out_basis = basis(self.dim() + 1, self.order());
        let mut coeffs = vec![0.0; out_basis.indices.len()];
        let mut full = vec![0u16; self.dim() + 1];
        for (r, ix) in self.basis.indices.iter().enumerate() {
            full[..axis].copy_from_slice(&ix[..axis]);
            full[axis] = 0;
            full[axis + 1..].copy_from_slice(&ix[axis..]);
            coeffs[out_basis.rank[&full]] = self.coeffs[r];
        }
        Ok(Jet {
            basis: out_basis,
            coeffs,
        })
    }

    /// Divide by the centered coordinate `(x_axis - base)`, checking that the
    /// quotient exists: every coefficient with zero exponent on `axis` must be
    /// below `zero_tol` in absolute value (they are treated as exact zeros).
    /// The result has order one lower.
    pub fn div_axis(&self, axis: usize, zero_tol: f64) -> Result<Jet> {
        if axis >= self.dim() {
            return Err(Error::InvalidArgument(format!(
                "div axis {axis} out of range for dimension {}",
                self.dim()
            )));
        }
        if self.order() == 0 {
            return Err(Error::OrderBudget {
                needed: 1,
                available: 0,
                context: "coordinate division".into(),
            });
        }
        for (r, ix) in self.basis.indices.iter().enumerate() {
            if ix[axis] == 0 && self.coeffs[r].abs() > zero_tol {
                return Err(Error::DomainViolation(format!(
                    "jet not divisible by coordinate {axis}: residual coefficient {} at {ix:?}",
                    self.coeffs[r]
                )));
            }
        }
        let out_basis = basis(self.dim(), self.order() - 1);
        let n = out_basis.indices.len();
        let shift = &self.basis.shift_up[axis];
        // Derivative-normalized division: g_beta = f_{beta + e_axis} / (beta_axis + 1).
        let coeffs = (0..n)
            .map(|r| {
                let up = shift[r] as usize;
                self.coeffs[up] / (out_basis.indices[r][axis] + 1) as f64
            })
            .collect();
        Ok(Jet {
            basis: out_basis,
            coeffs,
        })
    }

    /// Compose with a univariate analytic function given by its normalized
    /// derivative taps `taps[k] = f^(k)(value)/k!`, via Horner evaluation in
    /// the nilpotent part.
    fn compose(&self, taps: &[f64]) -> Jet {
        let k = self.order();
        debug_assert_eq!(taps.len(), k + 1);
        let mut tilde = self.clone();
        tilde.coeffs[0] = 0.0;
        let mut r = self.constant_like(taps[k]);
        for j in (0..k).rev() {
            r = r.try_mul(&tilde).expect("compose shapes match");
            r.coeffs[0] += taps[j];
        }
        r
    }

    /// Truncated reciprocal. Errors when the constant term vanishes.
    pub fn recip(&self) -> Result<Jet> {
        let a0 = self.value();
        if a0 == 0.0 {
            return Err(Error::SingularDivision);
        }
        // 1/(a0 + t) = sum_k (-1)^k t^k / a0^{k+1}
        let taps: Vec<f64> = (0..=self.order())
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign / a0.powi(k as i32 + 1)
            })
            .collect();
        Ok(self.compose(&taps))
    }

    /// Truncated exponential.
    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let mut fact = 1.0;
        let taps: Vec<f64> = (0..=self.order())
            .map(|k| {
                if k > 0 {
                    fact *= k as f64;
                }
                e / fact
            })
            .collect();
        self.compose(&taps)
    }

    /// Truncated natural logarithm. Errors unless the constant term is positive.
    pub fn ln(&self) -> Result<Jet> {
        let a0 = self.value();
        if a0 <= 0.0 {
            return Err(Error::DomainViolation(format!(
                "log of non-positive constant term {a0}"
            )));
        }
        let taps: Vec<f64> = (0..=self.order())
            .map(|k| {
                if k == 0 {
                    a0.ln()
                } else {
                    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                    sign / (k as f64 * a0.powi(k as i32))
                }
            })
            .collect();
        Ok(self.compose(&taps))
    }

    /// Truncated square root. Errors unless the constant term is positive.
    pub fn sqrt(&self) -> Result<Jet> {
        if self.value() <= 0.0 {
            return Err(Error::DomainViolation(format!(
                "sqrt of non-positive constant term {}",
                self.value()
            )));
        }
        self.powf(0.5)
    }

    /// Truncated sine.
    pub fn sin(&self) -> Jet {
        self.compose(&trig_taps(self.value(), self.order(), false))
    }

    /// Truncated cosine.
    pub fn cos(&self) -> Jet {
        self.compose(&trig_taps(self.value(), self.order(), true))
    }

    /// Truncated real power. Integer exponents reduce to repeated
    /// multiplication (any sign of the constant term, nonzero for negative
    /// exponents); fractional exponents need a positive constant term.
    pub fn powf(&self, p: f64) -> Result<Jet> {
        if p.fract() == 0.0 && p.abs() <= 64.0 {
            return self.powi(p as i32);
        }
        let a0 = self.value();
        if a0 <= 0.0 {
            return Err(Error::DomainViolation(format!(
                "power {p} of non-positive constant term {a0}"
            )));
        }
        // taps[k] = binom(p, k) a0^{p-k}
        let mut b = 1.0;
        let taps: Vec<f64> = (0..=self.order())
            .map(|k| {
                if k > 0 {
                    b *= (p - (k as f64 - 1.0)) / k as f64;
                }
                b * a0.powf(p - k as f64)
            })
            .collect();
        Ok(self.compose(&taps))
    }

    /// Truncated integer power by binary exponentiation.
    pub fn powi(&self, n: i32) -> Result<Jet> {
        if n < 0 {
            return self.recip()?.powi(-n);
        }
        let mut acc = self.constant_like(1.0);
        let mut base = self.clone();
        let mut n = n as u32;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.try_mul(&base)?;
            }
            n >>= 1;
            if n > 0 {
                base = base.try_mul(&base)?;
            }
        }
        Ok(acc)
    }
}

fn trig_taps(a0: f64, order: usize, cosine: bool) -> Vec<f64> {
    let (s, c) = a0.sin_cos();
    let cycle = if cosine {
        [c, -s, -c, s]
    } else {
        [s, c, -s, -c]
    };
    let mut fact = 1.0;
    (0..=order)
        .map(|k| {
            if k > 0 {
                fact *= k as f64;
            }
            cycle[k % 4] / fact
        })
        .collect()
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.order() == other.order() && self.coeffs == other.coeffs
    }
}

impl std::fmt::Debug for Jet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Jet(dim={}, order={}, value={:.6e}, max|c|={:.3e})",
            self.dim(),
            self.order(),
            self.value(),
            self.max_abs()
        )
    }
}

macro_rules! jet_binop {
    ($trait:ident, $method:ident, $checked:ident, $symbol:literal) => {
        impl $trait<&Jet> for &Jet {
            type Output = Jet;
            /// # Panics
            /// Panics on dimension or order mismatch; use the checked method
            /// to get an error instead.
            fn $method(self, rhs: &Jet) -> Jet {
                self.$checked(rhs)
                    .unwrap_or_else(|e| panic!("jet {}: {e}", $symbol))
            }
        }
        impl $trait<Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                (&self).$method(rhs)
            }
        }
        impl $trait<Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                self.$method(&rhs)
            }
        }
    };
}

jet_binop!(Add, add, try_add, "+");
jet_binop!(Sub, sub, try_sub, "-");
jet_binop!(Mul, mul, try_mul, "*");

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        self.scaled(s)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        self.scaled(s)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scaled(-1.0)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scaled(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn coeff_counts() {
        assert_eq!(coeff_count(1, 6), 7);
        assert_eq!(coeff_count(5, 6), 462);
        assert_eq!(coeff_count(3, 0), 1);
    }

    #[test]
    fn graded_lex_prefix_property() {
        let j = Jet::constant(3, 4, 0.0);
        // Ranks sorted by total degree; truncation must be a prefix.
        let mut last_degree = 0;
        for r in 0..j.coeffs().len() {
            let deg: u16 = j.index_at(r).iter().sum();
            assert!(deg >= last_degree || deg as usize <= j.order());
            if deg > last_degree {
                last_degree = deg;
            }
        }
        assert_eq!(last_degree as usize, 4);
    }

    #[test]
    fn product_of_linear_factors() {
        // (x + 1)(x - 1) = x^2 - 1 at the origin.
        let x = Jet::variable(1, 3, 0, 0.0).unwrap();
        let p = (&x).add_scalar(1.0) * (&x).add_scalar(-1.0);
        assert_relative_eq!(p.coeff(&[0]), -1.0, epsilon = 1e-12);
        assert_relative_eq!(p.coeff(&[1]), 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.coeff(&[2]), 2.0, epsilon = 1e-12); // d^2/dx^2 (x^2) = 2
        assert_relative_eq!(p.coeff(&[3]), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn reciprocal_matches_geometric_series() {
        // 1/(1+x): derivatives 1, -1, 2, -6 at 0.
        let x = Jet::variable(1, 3, 0, 0.0).unwrap();
        let r = x.add_scalar(1.0).recip().unwrap();
        for (k, want) in [1.0, -1.0, 2.0, -6.0].into_iter().enumerate() {
            assert_relative_eq!(r.coeff(&[k as u16]), want, epsilon = 1e-12);
        }
    }

    #[test]
    fn reciprocal_of_zero_is_singular() {
        let x = Jet::variable(1, 3, 0, 0.0).unwrap();
        assert!(matches!(x.recip(), Err(Error::SingularDivision)));
    }

    #[test]
    fn sqrt_matches_binomial_series() {
        // sqrt(1+x): derivatives 1, 1/2, -1/4, 3/8 at 0.
        let x = Jet::variable(1, 3, 0, 0.0).unwrap();
        let s = x.add_scalar(1.0).sqrt().unwrap();
        for (k, want) in [1.0, 0.5, -0.25, 0.375].into_iter().enumerate() {
            assert_relative_eq!(s.coeff(&[k as u16]), want, epsilon = 1e-12);
        }
    }

    #[test]
    fn domain_violations_error() {
        let x = Jet::variable(1, 3, 0, 0.0).unwrap();
        assert!(x.add_scalar(-2.0).sqrt().is_err());
        assert!(x.ln().is_err());
        assert!(x.add_scalar(-1.0).powf(0.3).is_err());
        // Integer powers survive negative constant terms.
        assert!(x.add_scalar(-1.0).powf(3.0).is_ok());
    }

    #[test]
    fn partial_is_reindexing() {
        // f = x * y^2 at (0,0): d/dx d2/dy2 f = 2.
        let x = Jet::variable(2, 3, 0, 0.0).unwrap();
        let y = Jet::variable(2, 3, 1, 0.0).unwrap();
        let f = &x * &(&y * &y);
        assert_relative_eq!(f.coeff(&[1, 2]), 2.0, epsilon = 1e-12);
        let fx = f.partial(0).unwrap();
        assert_eq!(fx.order(), 2);
        assert_relative_eq!(fx.coeff(&[0, 2]), 2.0, epsilon = 1e-12);
        let fxyy = fx.partial(1).unwrap().partial(1).unwrap();
        assert_relative_eq!(fxyy.value(), 2.0, epsilon = 1e-12);
        assert!(fxyy.partial(0).is_err()); // order exhausted
    }

    #[test]
    fn mismatch_errors() {
        let a = Jet::constant(2, 3, 1.0);
        let b = Jet::constant(3, 3, 1.0);
        let c = Jet::constant(2, 2, 1.0);
        assert!(matches!(a.try_add(&b), Err(Error::DimensionMismatch(2, 3))));
        assert!(matches!(a.try_mul(&c), Err(Error::OrderMismatch(3, 2))));
    }

    #[test]
    fn pythagorean_identity_as_jets() {
        let x = Jet::variable(1, 6, 0, 0.7).unwrap();
        let id = &x.sin() * &x.sin() + &x.cos() * &x.cos();
        assert_relative_eq!(id.value(), 1.0, epsilon = 1e-12);
        for r in 1..id.coeffs().len() {
            assert_relative_eq!(id.coeffs()[r], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn restrict_insert_roundtrip() {
        let x = Jet::variable(2, 4, 0, 0.3).unwrap();
        let y = Jet::variable(2, 4, 1, -0.2).unwrap();
        let f = (&x * &y).exp();
        let g = f.restrict_axis(1).unwrap();
        assert_eq!(g.dim(), 1);
        // Restriction keeps pure-x derivatives with y pinned: d/dx of exp(x*y)
        // at y=-0.2 is y*exp(x*y).
        assert_relative_eq!(
            g.coeff(&[1]),
            -0.2 * (0.3f64 * -0.2).exp(),
            epsilon = 1e-12
        );
        let back = g.insert_axis(1).unwrap();
        assert_eq!(back.dim(), 2);
        assert_relative_eq!(back.coeff(&[1, 0]), g.coeff(&[1]), epsilon = 1e-12);
        assert_relative_eq!(back.coeff(&[1, 1]), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn coordinate_division() {
        // f = x^2 * (1 + y): divisible by x twice.
        let x = Jet::variable(2, 4, 0, 0.0).unwrap();
        let y = Jet::variable(2, 4, 1, 0.0).unwrap();
        let f = &(&x * &x) * &y.add_scalar(1.0);
        let g = f.div_axis(0, 1e-10).unwrap().div_axis(0, 1e-10).unwrap();
        assert_relative_eq!(g.value(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(g.coeff(&[0, 1]), 1.0, epsilon = 1e-12);
        // x*(1+y) is not divisible by x twice.
        let h = &x * &y.add_scalar(1.0);
        assert!(h.div_axis(0, 1e-10).unwrap().div_axis(0, 1e-10).is_err());
    }
}
