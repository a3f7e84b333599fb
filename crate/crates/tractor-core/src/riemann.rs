//! Metric charts and the Levi-Civita curvature suite.
//!
//! A [`MetricChart`] produces jet-valued metric components at a point; from
//! those this module derives Christoffel symbols, the curvature tensor, and
//! the standard trace decomposition (Ricci, scalar, Schouten, Weyl, Cotton,
//! Bach), each at the highest jet order the metric's own order supports.
//!
//! Conventions, fixed once here and relied on everywhere downstream:
//! - all components live in the coordinate frame of the chart;
//! - curvature is stored mixed as `R_ij^k_l` with `[∇_i,∇_j] w^k = R_ij^k_l w^l`,
//!   so one-forms pick up `-R_ij^d_c ω_d`;
//! - `Ric_ab = R_ca^c_b`, `J = Sc / (2(d-1))`, `Ric = (d-2) P + J g`;
//! - lowering the upper curvature slot gives `R_ijkl = g_km R_ij^m_l`, in
//!   which the unit round sphere satisfies `R_ijkl = g_ik g_jl - g_il g_jk`.
//!
//! Each derived object consumes jet order: a metric of order `m` yields
//! Christoffel symbols at `m-1`, curvature through Weyl at `m-2`, Cotton at
//! `m-3` and Bach at `m-4`. Operations fail fast with an order-budget error
//! instead of silently truncating.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::jets::Jet;

/// Square jet-valued matrix (metric, inverse metric).
pub type Mat = Vec<Vec<Jet>>;
/// Rank-3 jet array; Christoffel symbols are stored as `gamma[i][j][k] = Γ^i_jk`.
pub type Arr3 = Vec<Vec<Vec<Jet>>>;
/// Rank-4 jet array; curvature is stored as `r[i][j][k][l] = R_ij^k_l`.
pub type Arr4 = Vec<Vec<Vec<Vec<Jet>>>>;

pub type MetricGenerator = Arc<dyn Fn(&[f64], usize) -> Result<Mat> + Send + Sync>;
pub type ScalarGenerator = Arc<dyn Fn(&[f64], usize) -> Result<Jet> + Send + Sync>;
pub type DomainPredicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Threshold below which the metric's constant-term spectrum counts as
/// degenerate and the chart is rejected.
const DEGENERACY_TOL: f64 = 1e-12;

/// An analytic pseudo-Riemannian metric presented in a coordinate chart.
#[derive(Clone)]
pub struct MetricChart {
    pub name: String,
    pub dim: usize,
    /// Diagonal signs of the metric's signature, e.g. `[-1, 1, 1, 1]`.
    pub signature: Vec<i8>,
    generator: MetricGenerator,
    domain: DomainPredicate,
}

impl MetricChart {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        signature: Vec<i8>,
        generator: MetricGenerator,
        domain: DomainPredicate,
    ) -> MetricChart {
        assert_eq!(signature.len(), dim, "signature length must equal dim");
        MetricChart {
            name: name.into(),
            dim,
            signature,
            generator,
            domain,
        }
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        x.len() == self.dim && (self.domain)(x)
    }

    /// Metric component jets at `x`, validated: symmetric, non-degenerate,
    /// and matching the declared signature at the constant term.
    pub fn metric_at(&self, x: &[f64], order: usize) -> Result<Mat> {
        if !self.in_domain(x) {
            return Err(Error::DomainViolation(format!(
                "point {x:?} outside the domain of chart '{}'",
                self.name
            )));
        }
        let g = (self.generator)(x, order)?;
        let d = self.dim;
        if g.len() != d || g.iter().any(|row| row.len() != d) {
            return Err(Error::InternalConsistency(format!(
                "chart '{}' produced a non-{d}x{d} metric",
                self.name
            )));
        }
        let scale = g
            .iter()
            .flatten()
            .fold(1.0f64, |m, jet| m.max(jet.max_abs()));
        for i in 0..d {
            for j in (i + 1)..d {
                let diff = g[i][j].try_sub(&g[j][i])?;
                if diff.max_abs() > 1e-12 * scale {
                    return Err(Error::DegenerateMetric(format!(
                        "chart '{}': g_{i}{j} != g_{j}{i}",
                        self.name
                    )));
                }
            }
        }
        let g0 = DMatrix::from_fn(d, d, |i, j| g[i][j].value());
        let eigs = g0.symmetric_eigenvalues();
        let spectral_scale = eigs.iter().fold(1.0f64, |m, e| m.max(e.abs()));
        if eigs.iter().any(|e| e.abs() <= DEGENERACY_TOL * spectral_scale) {
            return Err(Error::DegenerateMetric(format!(
                "chart '{}' degenerate at {x:?}",
                self.name
            )));
        }
        let plus = eigs.iter().filter(|e| **e > 0.0).count();
        let declared_plus = self.signature.iter().filter(|s| **s > 0).count();
        if plus != declared_plus {
            return Err(Error::DegenerateMetric(format!(
                "chart '{}' has signature ({plus},{}) at {x:?}, declared ({declared_plus},{})",
                self.name,
                d - plus,
                d - declared_plus
            )));
        }
        Ok(g)
    }
}

impl std::fmt::Debug for MetricChart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MetricChart({}, dim={})", self.name, self.dim)
    }
}

pub(crate) fn truncate_mat(m: &Mat, order: usize) -> Result<Mat> {
    m.iter()
        .map(|row| row.iter().map(|j| j.truncated(order)).collect())
        .collect()
}

pub(crate) fn truncate_arr3(a: &Arr3, order: usize) -> Result<Arr3> {
    a.iter()
        .map(|m| {
            m.iter()
                .map(|row| row.iter().map(|j| j.truncated(order)).collect())
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// Jet-valued inverse of a square jet matrix: partial-pivot inverse of the
/// constant term, then a Neumann-series correction in the nilpotent part
/// (exact at truncation order because the correction has no constant term).
pub fn invert_matrix(a: &Mat) -> Result<Mat> {
    let d = a.len();
    let order = a[0][0].order();
    let a0 = DMatrix::from_fn(d, d, |i, j| a[i][j].value());
    if a0.determinant().abs() <= DEGENERACY_TOL {
        return Err(Error::DegenerateMetric(
            "matrix constant term is singular".into(),
        ));
    }
    let b0 = a0
        .try_inverse()
        .ok_or_else(|| Error::DegenerateMetric("matrix constant term is singular".into()))?;
    // K = B0 A - I has zero constant term, hence is nilpotent to truncation.
    let mut k: Mat = Vec::with_capacity(d);
    for i in 0..d {
        let mut row = Vec::with_capacity(d);
        for j in 0..d {
            let mut acc = a[0][j].zero_like();
            for l in 0..d {
                acc = acc.try_add(&a[l][j].scaled(b0[(i, l)]))?;
            }
            if i == j {
                acc = acc.add_scalar(-1.0);
            }
            row.push(acc);
        }
        k.push(row);
    }
    // Horner: S = I - K (I - K (...)) = sum_t (-K)^t, t = 0..=order.
    let mut s: Mat = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| a[0][0].constant_like(if i == j { 1.0 } else { 0.0 }))
                .collect()
        })
        .collect();
    for _ in 0..order {
        let ks = matmul(&k, &s)?;
        for i in 0..d {
            for j in 0..d {
                let mut e = ks[i][j].scaled(-1.0);
                if i == j {
                    e = e.add_scalar(1.0);
                }
                s[i][j] = e;
            }
        }
    }
    // A^{-1} = S B0.
    let mut inv: Mat = Vec::with_capacity(d);
    for i in 0..d {
        let mut row = Vec::with_capacity(d);
        for j in 0..d {
            let mut acc = s[i][0].scaled(b0[(0, j)]);
            for l in 1..d {
                acc = acc.try_add(&s[i][l].scaled(b0[(l, j)]))?;
            }
            row.push(acc);
        }
        inv.push(row);
    }
    Ok(inv)
}

fn matmul(a: &Mat, b: &Mat) -> Result<Mat> {
    let d = a.len();
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let mut row = Vec::with_capacity(d);
        for j in 0..d {
            let mut acc = a[i][0].try_mul(&b[0][j])?;
            for l in 1..d {
                acc = acc.try_add(&a[i][l].try_mul(&b[l][j])?)?;
            }
            row.push(acc);
        }
        out.push(row);
    }
    Ok(out)
}

/// Koszul formula: `Γ^i_jk = 1/2 g^{il} (g_{lj,k} + g_{lk,j} - g_{jk,l})`.
/// Output order is one below the metric's.
pub fn christoffel(g: &Mat, ginv: &Mat) -> Result<Arr3> {
    let d = g.len();
    let m = g[0][0].order();
    if m == 0 {
        return Err(Error::OrderBudget {
            needed: 1,
            available: 0,
            context: "Christoffel symbols".into(),
        });
    }
    let t = m - 1;
    // dg[k][i][j] = ∂_k g_ij
    let mut dg = vec![vec![Vec::with_capacity(d); d]; d];
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                dg[k][i].push(g[i][j].partial(k)?);
            }
        }
    }
    let gi = truncate_mat(ginv, t)?;
    let mut gamma: Arr3 = vec![vec![Vec::with_capacity(d); d]; d];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let mut acc = dg[0][0][0].zero_like();
                for l in 0..d {
                    let sym = dg[k][l][j]
                        .try_add(&dg[j][l][k])?
                        .try_sub(&dg[l][j][k])?;
                    acc = acc.try_add(&gi[i][l].try_mul(&sym)?)?;
                }
                gamma[i][j].push(acc.scaled(0.5));
            }
        }
    }
    Ok(gamma)
}

/// Coordinate-frame curvature from the connection coefficients:
/// `R_ij^k_l = ∂_i Γ^k_jl - ∂_j Γ^k_il + Γ^k_im Γ^m_jl - Γ^k_jm Γ^m_il`.
/// Output order is one below the connection's.
pub fn riemann_tensor(gamma: &Arr3) -> Result<Arr4> {
    let d = gamma.len();
    let q = gamma[0][0][0].order();
    if q == 0 {
        return Err(Error::OrderBudget {
            needed: 1,
            available: 0,
            context: "curvature tensor".into(),
        });
    }
    let t = q - 1;
    let mut dgamma = vec![vec![vec![Vec::with_capacity(d); d]; d]; d];
    for a in 0..d {
        for k in 0..d {
            for j in 0..d {
                for l in 0..d {
                    dgamma[a][k][j].push(gamma[k][j][l].partial(a)?);
                }
            }
        }
    }
    let gt = truncate_arr3(gamma, t)?;
    let mut r: Arr4 = vec![vec![vec![Vec::with_capacity(d); d]; d]; d];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let mut acc = dgamma[i][k][j][l].try_sub(&dgamma[j][k][i][l])?;
                    for m in 0..d {
                        acc = acc.try_add(&gt[k][i][m].try_mul(&gt[m][j][l])?)?;
                        acc = acc.try_sub(&gt[k][j][m].try_mul(&gt[m][i][l])?)?;
                    }
                    r[i][j][k].push(acc);
                }
            }
        }
    }
    Ok(r)
}

/// How a component array's indices transform; tractor indices are handled one
/// level up, in the tractor module.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndexKind {
    Up,
    Down,
    Tractor,
}

/// Flat row-major jet array with per-axis sizes. Tensor axes have size `d`;
/// tractor axes (used downstream) have size `d + 2`.
#[derive(Clone, Debug)]
pub struct Components {
    sizes: Vec<usize>,
    data: Vec<Jet>,
}

impl Components {
    pub fn zeros(sizes: &[usize], dim: usize, order: usize) -> Components {
        let n: usize = sizes.iter().product::<usize>().max(1);
        Components {
            sizes: sizes.to_vec(),
            data: vec![Jet::constant(dim, order, 0.0); n],
        }
    }

    pub fn from_fn(sizes: &[usize], mut f: impl FnMut(&[usize]) -> Jet) -> Components {
        let mut data = Vec::with_capacity(sizes.iter().product::<usize>().max(1));
        for ix in multi_indices(sizes) {
            data.push(f(&ix));
        }
        Components {
            sizes: sizes.to_vec(),
            data,
        }
    }

    pub fn scalar(j: Jet) -> Components {
        Components {
            sizes: Vec::new(),
            data: vec![j],
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn rank(&self) -> usize {
        self.sizes.len()
    }

    pub fn data(&self) -> &[Jet] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Jet] {
        &mut self.data
    }

    fn flat(&self, ix: &[usize]) -> usize {
        debug_assert_eq!(ix.len(), self.sizes.len());
        let mut r = 0;
        for (i, s) in ix.iter().zip(&self.sizes) {
            debug_assert!(i < s);
            r = r * s + i;
        }
        r
    }

    pub fn get(&self, ix: &[usize]) -> &Jet {
        &self.data[self.flat(ix)]
    }

    pub fn set(&mut self, ix: &[usize], j: Jet) {
        let f = self.flat(ix);
        self.data[f] = j;
    }

    pub fn order(&self) -> usize {
        self.data[0].order()
    }

    pub fn truncated(&self, order: usize) -> Result<Components> {
        Ok(Components {
            sizes: self.sizes.clone(),
            data: self
                .data
                .iter()
                .map(|j| j.truncated(order))
                .collect::<Result<_>>()?,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, j| m.max(j.max_abs()))
    }

    pub fn try_add(&self, rhs: &Components) -> Result<Components> {
        if self.sizes != rhs.sizes {
            return Err(Error::InvalidArgument(
                "component shape mismatch in addition".into(),
            ));
        }
        Ok(Components {
            sizes: self.sizes.clone(),
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a.try_add(b))
                .collect::<Result<_>>()?,
        })
    }

    pub fn try_sub(&self, rhs: &Components) -> Result<Components> {
        Ok(self.try_add(&rhs.scaled(-1.0))?)
    }

    pub fn scaled(&self, s: f64) -> Components {
        Components {
            sizes: self.sizes.clone(),
            data: self.data.iter().map(|j| j.scaled(s)).collect(),
        }
    }
}

/// Row-major iteration over all multi-indices of the given axis sizes.
pub fn multi_indices(sizes: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = sizes.iter().product::<usize>().max(1);
    let rank = sizes.len();
    (0..total).map(move |mut f| {
        let mut ix = vec![0usize; rank];
        for pos in (0..rank).rev() {
            ix[pos] = f % sizes[pos];
            f /= sizes[pos];
        }
        ix
    })
}

/// Levi-Civita covariant derivative of a plain tensor field: prepends one
/// lower index. Up indices receive `+Γ^i_ac T^c`, down indices `-Γ^c_ai T_c`;
/// on scalars this is the jet partial. Output order is one below the input's.
pub fn tensor_cov_deriv(t: &Components, kinds: &[IndexKind], gamma: &Arr3) -> Result<Components> {
    if kinds.len() != t.rank() {
        return Err(Error::InvalidArgument(format!(
            "{} index kinds for a rank-{} array",
            kinds.len(),
            t.rank()
        )));
    }
    if kinds.contains(&IndexKind::Tractor) {
        return Err(Error::InvalidArgument(
            "tractor index fed to the tensor covariant derivative".into(),
        ));
    }
    let d = gamma.len();
    if t.sizes().iter().any(|&s| s != d) {
        return Err(Error::InvalidArgument(
            "tensor axis size does not match the chart dimension".into(),
        ));
    }
    let p = t.order();
    if p == 0 {
        return Err(Error::OrderBudget {
            needed: 1,
            available: 0,
            context: "covariant derivative".into(),
        });
    }
    let target = p - 1;
    if gamma[0][0][0].order() < target {
        return Err(Error::OrderBudget {
            needed: target,
            available: gamma[0][0][0].order(),
            context: "connection order in covariant derivative".into(),
        });
    }
    let gt = truncate_arr3(gamma, target)?;
    let tt = t.truncated(target)?;
    let mut out_sizes = vec![d];
    out_sizes.extend_from_slice(t.sizes());
    let mut out = Components::zeros(&out_sizes, tt.data[0].dim(), target);
    for a in 0..d {
        for ix in multi_indices(t.sizes()) {
            let mut acc = t.get(&ix).partial(a)?;
            for (pos, kind) in kinds.iter().enumerate() {
                let mut jx = ix.clone();
                for c in 0..d {
                    jx[pos] = c;
                    let term = match kind {
                        IndexKind::Up => gt[ix[pos]][a][c].try_mul(tt.get(&jx))?,
                        IndexKind::Down => gt[c][a][ix[pos]].try_mul(tt.get(&jx))?.scaled(-1.0),
                        IndexKind::Tractor => unreachable!(),
                    };
                    acc = acc.try_add(&term)?;
                }
            }
            let mut ox = Vec::with_capacity(ix.len() + 1);
            ox.push(a);
            ox.extend_from_slice(&ix);
            out.set(&ox, acc);
        }
    }
    Ok(out)
}

/// The full local curvature data of a metric at a point. Field jet orders
/// step down with each derivative taken; `metric_order` is the input order.
pub struct CurvatureSuite {
    pub dim: usize,
    pub metric_order: usize,
    pub point: Vec<f64>,
    pub signature: Vec<i8>,
    /// g_ij at the metric order.
    pub g: Mat,
    /// g^ij at the metric order.
    pub ginv: Mat,
    /// Γ^i_jk at order m-1.
    pub gamma: Arr3,
    /// R_ij^k_l at order m-2.
    pub riemann: Arr4,
    /// Ric_ab at order m-2.
    pub ric: Mat,
    /// Scalar curvature at order m-2.
    pub sc: Jet,
    /// Schouten P_ab at order m-2.
    pub p: Mat,
    /// J = P^a_a = Sc / (2(d-1)) at order m-2.
    pub j: Jet,
    /// Weyl W_ij^k_l (trace-free part of curvature) at order m-2.
    pub weyl: Arr4,
    /// Cotton C_abc = ∇_a P_bc - ∇_b P_ac at order m-3.
    pub cotton: Arr3,
    /// Bach B_ab = ∇^c C_cba + P^dc W_dacb at order m-4.
    pub bach: Mat,
}

impl CurvatureSuite {
    /// Evaluate the whole suite. Needs `metric_order >= 4` so that even the
    /// Bach tensor retains a nonnegative jet order.
    pub fn at(chart: &MetricChart, x: &[f64], metric_order: usize) -> Result<CurvatureSuite> {
        if chart.dim < 3 {
            return Err(Error::UnsupportedDimension(format!(
                "curvature suite needs dim >= 3, got {}",
                chart.dim
            )));
        }
        if metric_order < 4 {
            return Err(Error::OrderBudget {
                needed: 4,
                available: metric_order,
                context: "curvature suite through the Bach tensor".into(),
            });
        }
        let d = chart.dim;
        let m = metric_order;
        let g = chart.metric_at(x, m)?;
        let ginv = invert_matrix(&g)?;
        let gamma = christoffel(&g, &ginv)?;
        let riemann = riemann_tensor(&gamma)?;

        let t2 = m - 2;
        let g2 = truncate_mat(&g, t2)?;
        let gi2 = truncate_mat(&ginv, t2)?;
        let mut ric: Mat = vec![Vec::with_capacity(d); d];
        for a in 0..d {
            for b in 0..d {
                let mut acc = riemann[0][a][0][b].zero_like();
                for c in 0..d {
                    acc = acc.try_add(&riemann[c][a][c][b])?;
                }
                ric[a].push(acc);
            }
        }
        let mut sc = ric[0][0].zero_like();
        for a in 0..d {
            for b in 0..d {
                sc = sc.try_add(&gi2[a][b].try_mul(&ric[a][b])?)?;
            }
        }
        let j = sc.scaled(1.0 / (2.0 * (d as f64 - 1.0)));
        let mut p: Mat = vec![Vec::with_capacity(d); d];
        for a in 0..d {
            for b in 0..d {
                let e = ric[a][b]
                    .try_sub(&j.try_mul(&g2[a][b])?)?
                    .scaled(1.0 / (d as f64 - 2.0));
                p[a].push(e);
            }
        }
        // P with one index raised: praise[a][b] = P_a^b.
        let mut praise: Mat = vec![Vec::with_capacity(d); d];
        for a in 0..d {
            for b in 0..d {
                let mut acc = p[0][0].zero_like();
                for c in 0..d {
                    acc = acc.try_add(&gi2[b][c].try_mul(&p[a][c])?)?;
                }
                praise[a].push(acc);
            }
        }
        // W_ij^k_l = R_ij^k_l - δ^k_i P_jl + δ^k_j P_il - g_jl P_i^k + g_il P_j^k.
        let mut weyl: Arr4 = vec![vec![vec![Vec::with_capacity(d); d]; d]; d];
        for i in 0..d {
            for jj in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let mut acc = riemann[i][jj][k][l].clone();
                        if k == i {
                            acc = acc.try_sub(&p[jj][l])?;
                        }
                        if k == jj {
                            acc = acc.try_add(&p[i][l])?;
                        }
                        acc = acc.try_sub(&g2[jj][l].try_mul(&praise[i][k])?)?;
                        acc = acc.try_add(&g2[i][l].try_mul(&praise[jj][k])?)?;
                        weyl[i][jj][k].push(acc);
                    }
                }
            }
        }

        // Cotton: antisymmetrized derivative of Schouten, order m-3.
        let p_arr = Components::from_fn(&[d, d], |ix| p[ix[0]][ix[1]].clone());
        let grad_p = tensor_cov_deriv(&p_arr, &[IndexKind::Down, IndexKind::Down], &gamma)?;
        let mut cotton: Arr3 = vec![vec![Vec::with_capacity(d); d]; d];
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    cotton[a][b].push(grad_p.get(&[a, b, c]).try_sub(grad_p.get(&[b, a, c]))?);
                }
            }
        }

        // Bach: B_ab = ∇^c C_cba + P^dc W_dacb, order m-4.
        let t4 = m - 4;
        let cot_arr = Components::from_fn(&[d, d, d], |ix| cotton[ix[0]][ix[1]][ix[2]].clone());
        let grad_c = tensor_cov_deriv(
            &cot_arr,
            &[IndexKind::Down, IndexKind::Down, IndexKind::Down],
            &gamma,
        )?;
        let g4 = truncate_mat(&g, t4)?;
        let gi4 = truncate_mat(&ginv, t4)?;
        // P^{ab} = g^{am} P_m^b at order m-4.
        let mut p_uu: Mat = vec![Vec::with_capacity(d); d];
        for a in 0..d {
            for b in 0..d {
                let mut acc = Jet::constant(g4[0][0].dim(), t4, 0.0);
                for m_ in 0..d {
                    acc = acc.try_add(&gi4[a][m_].try_mul(&praise[m_][b].truncated(t4)?)?)?;
                }
                p_uu[a].push(acc);
            }
        }
        let mut bach: Mat = vec![Vec::with_capacity(d); d];
        for a in 0..d {
            for b in 0..d {
                let mut acc = Jet::constant(g4[0][0].dim(), t4, 0.0);
                // ∇^c C_cba = g^{ce} ∇_e C_cba; grad_c[e][c][b][a] = ∇_e C_cba.
                for c in 0..d {
                    for e in 0..d {
                        acc = acc.try_add(&gi4[c][e].try_mul(grad_c.get(&[e, c, b, a]))?)?;
                    }
                }
                // P^{dc} W_dacb with the curvature slot lowered:
                // W_dacb = g_ck W_da^k_b.
                for dd in 0..d {
                    for c in 0..d {
                        let mut w_low = Jet::constant(g4[0][0].dim(), t4, 0.0);
                        for k in 0..d {
                            w_low = w_low
                                .try_add(&g4[c][k].try_mul(&weyl[dd][a][k][b].truncated(t4)?)?)?;
                        }
                        acc = acc.try_add(&p_uu[dd][c].try_mul(&w_low)?)?;
                    }
                }
                bach[a].push(acc);
            }
        }

        Ok(CurvatureSuite {
            dim: d,
            metric_order: m,
            point: x.to_vec(),
            signature: chart.signature.clone(),
            g,
            ginv,
            gamma,
            riemann,
            ric,
            sc,
            p,
            j,
            weyl,
            cotton,
            bach,
        })
    }

    /// Fully lowered curvature `R_ijkl = g_km R_ij^m_l` at order m-2.
    pub fn riemann_lowered(&self) -> Result<Arr4> {
        self.lower_third(&self.riemann)
    }

    /// Fully lowered Weyl tensor at order m-2.
    pub fn weyl_lowered(&self) -> Result<Arr4> {
        self.lower_third(&self.weyl)
    }

    fn lower_third(&self, r: &Arr4) -> Result<Arr4> {
        let d = self.dim;
        let t = r[0][0][0][0].order();
        let g = truncate_mat(&self.g, t)?;
        let mut out: Arr4 = vec![vec![vec![Vec::with_capacity(d); d]; d]; d];
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let mut acc = r[0][0][0][0].zero_like();
                        for m in 0..d {
                            acc = acc.try_add(&g[k][m].try_mul(&r[i][j][m][l])?)?;
                        }
                        out[i][j][k].push(acc);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn flat_chart(dim: usize) -> MetricChart {
        MetricChart::new(
            "flat",
            dim,
            vec![1; dim],
            Arc::new(move |_x: &[f64], order| {
                let mut g = vec![vec![Jet::constant(dim, order, 0.0); dim]; dim];
                for i in 0..dim {
                    g[i][i] = Jet::constant(dim, order, 1.0);
                }
                Ok(g)
            }),
            Arc::new(|_x| true),
        )
    }

    #[test]
    fn flat_chart_is_curvature_free() {
        let chart = flat_chart(3);
        let s = CurvatureSuite::at(&chart, &[0.2, -0.1, 0.4], 4).unwrap();
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max(s.ric[i][j].max_abs()).max(s.bach[i][j].max_abs());
                for k in 0..3 {
                    worst = worst.max(s.gamma[i][j][k].max_abs());
                    worst = worst.max(s.cotton[i][j][k].max_abs());
                    for l in 0..3 {
                        worst = worst.max(s.riemann[i][j][k][l].max_abs());
                    }
                }
            }
        }
        assert!(worst < 1e-12, "flat space curvature residual {worst}");
    }

    #[test]
    fn inverse_metric_roundtrip() {
        // An anisotropic analytic metric; g * g^{-1} = id to truncation.
        let dim = 3;
        let chart = MetricChart::new(
            "stretch",
            dim,
            vec![1, 1, 1],
            Arc::new(move |x: &[f64], order| {
                let x0 = Jet::variable(dim, order, 0, x[0])?;
                let x1 = Jet::variable(dim, order, 1, x[1])?;
                let mut g = vec![vec![Jet::constant(dim, order, 0.0); dim]; dim];
                g[0][0] = (&x1 * &x1).add_scalar(1.0);
                g[1][1] = x0.exp();
                g[2][2] = Jet::constant(dim, order, 2.0);
                g[0][1] = (&x0 * &x1).scaled(0.1);
                g[1][0] = g[0][1].clone();
                Ok(g)
            }),
            Arc::new(|_x| true),
        );
        let g = chart.metric_at(&[0.3, -0.2, 0.1], 5).unwrap();
        let gi = invert_matrix(&g).unwrap();
        let id = matmul(&g, &gi).unwrap();
        for i in 0..dim {
            for j in 0..dim {
                let want = if i == j { 1.0 } else { 0.0 };
                let diff = id[i][j].add_scalar(-want);
                assert!(diff.max_abs() < 1e-11, "g g^-1 residual at ({i},{j})");
            }
        }
    }

    #[test]
    fn signature_mismatch_rejected() {
        let dim = 3;
        let chart = MetricChart::new(
            "wrong-signature",
            dim,
            vec![-1, 1, 1],
            Arc::new(move |_x: &[f64], order| {
                let mut g = vec![vec![Jet::constant(dim, order, 0.0); dim]; dim];
                for i in 0..dim {
                    g[i][i] = Jet::constant(dim, order, 1.0);
                }
                Ok(g)
            }),
            Arc::new(|_x| true),
        );
        assert!(matches!(
            chart.metric_at(&[0.0, 0.0, 0.0], 3),
            Err(Error::DegenerateMetric(_))
        ));
    }

    #[test]
    fn suite_requires_order_budget() {
        let chart = flat_chart(3);
        assert!(matches!(
            CurvatureSuite::at(&chart, &[0.0; 3], 3),
            Err(Error::OrderBudget { .. })
        ));
    }
}
