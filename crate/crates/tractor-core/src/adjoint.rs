//! Adjoint tractors, conformal Killing fields, and tractor Lie derivatives.
//!
//! An adjoint tractor is an h-skew endomorphism of the standard tractor
//! bundle. Against the active scale it is stored as a slot quadruple
//! `(ν, l^a, μ_ab, ρ_a)`: a scalar, a vector, a two-form, and a one-form,
//! acting on standard tractors from the left by
//!
//! ```text
//! (σ, μ'_b, ρ)  ↦  (−νσ − l^bμ'_b,
//!                    −ρ_aσ + μ_a{}^bμ'_b + l_aρ,
//!                    ρ^bμ'_b + νρ)
//! ```
//!
//! In the trivialized weight bookkeeping `ν`, `l^a`, `ρ_a` are weight 0 while
//! `μ_ab` is the weight-2 two-form slot; this is exactly the weight the
//! bi-tractor slot storage assigns to the middle-middle block, so realizing
//! the quadruple as a valence-two tractor field (see [`AdjointTractor::endomorphism`])
//! involves no extra factors.
//!
//! The module provides the differential splitting operator from vector
//! fields, the slot formula for the tractor connection on adjoint tractors,
//! the prolongation connection whose parallel sections are exactly the
//! conformal Killing fields, the fundamental derivative, and the algebraic
//! Lie derivative of tractor fields along conformal Killing fields.

use crate::conformal::WeightedField;
use crate::error::{Error, Result};
use crate::jets::Jet;
use crate::riemann::{
    multi_indices, truncate_arr3, truncate_mat, Components, CurvatureSuite, IndexKind,
};
use crate::tractor::Tractor;

/// Relative size below which the trace-free symmetrized gradient counts as
/// zero and a vector field is accepted as conformal Killing.
pub const CONFORMAL_KILLING_TOL: f64 = 1e-8;

const SKEW_TOL: f64 = 1e-9;

/// Slot presentation of an h-skew endomorphism of the tractor bundle. The
/// middle two-form is stored lowered and antisymmetric; `l^a` is raised and
/// `ρ_a` lowered. All slots share one jet order.
#[derive(Clone, Debug)]
pub struct AdjointTractor {
    /// Weight-0 scalar slot; pairs the top and bottom of the endomorphism.
    pub nu: Jet,
    /// Weight-0 vector slot `l^a`; the image of the top-slot projection `Π`.
    pub l: Vec<Jet>,
    /// Antisymmetric `μ_ab`, the weight-2 two-form slot, stored lowered.
    pub mu: Components,
    /// Weight-0 one-form slot `ρ_a`.
    pub rho: Vec<Jet>,
}

impl AdjointTractor {
    /// Assemble from slots, aligning all jets to the smallest order. The
    /// middle slot must be antisymmetric to relative tolerance.
    pub fn new(nu: Jet, l: Vec<Jet>, mu: Components, rho: Vec<Jet>) -> Result<AdjointTractor> {
        let d = l.len();
        if rho.len() != d {
            return Err(Error::DimensionMismatch(d, rho.len()));
        }
        if mu.sizes() != [d, d] {
            return Err(Error::InvalidArgument(
                "middle slot of an adjoint tractor is a d-by-d two-form".into(),
            ));
        }
        let mut skew = 0.0f64;
        for a in 0..d {
            for b in 0..d {
                skew = skew.max(
                    mu.get(&[a, b])
                        .try_add(mu.get(&[b, a]))?
                        .max_abs(),
                );
            }
        }
        if skew > SKEW_TOL * mu.max_abs().max(1.0) {
            return Err(Error::InvalidArgument(
                "middle slot of an adjoint tractor must be antisymmetric".into(),
            ));
        }
        let mut t = nu.order();
        for j in l.iter().chain(rho.iter()) {
            t = t.min(j.order());
        }
        t = t.min(mu.order());
        let l = l.iter().map(|j| j.truncated(t)).collect::<Result<_>>()?;
        let rho = rho.iter().map(|j| j.truncated(t)).collect::<Result<_>>()?;
        Ok(AdjointTractor {
            nu: nu.truncated(t)?,
            l,
            mu: mu.truncated(t)?,
            rho,
        })
    }

    pub fn dim(&self) -> usize {
        self.l.len()
    }

    pub fn order(&self) -> usize {
        self.nu.order()
    }

    /// Largest slot coefficient, for relative residual scales.
    pub fn max_abs(&self) -> f64 {
        let mut m = self.nu.max_abs().max(self.mu.max_abs());
        for j in self.l.iter().chain(self.rho.iter()) {
            m = m.max(j.max_abs());
        }
        m
    }

    /// Top-slot projection `Π`: the underlying vector field.
    pub fn pi(&self) -> &[Jet] {
        &self.l
    }

    pub fn scaled(&self, c: f64) -> AdjointTractor {
        AdjointTractor {
            nu: self.nu.scaled(c),
            l: self.l.iter().map(|j| j.scaled(c)).collect(),
            mu: self.mu.scaled(c),
            rho: self.rho.iter().map(|j| j.scaled(c)).collect(),
        }
    }

    pub fn truncated(&self, order: usize) -> Result<AdjointTractor> {
        Ok(AdjointTractor {
            nu: self.nu.truncated(order)?,
            l: self.l.iter().map(|j| j.truncated(order)).collect::<Result<_>>()?,
            mu: self.mu.truncated(order)?,
            rho: self
                .rho
                .iter()
                .map(|j| j.truncated(order))
                .collect::<Result<_>>()?,
        })
    }

    /// Slotwise sum; orders must already agree.
    pub fn try_add(&self, other: &AdjointTractor) -> Result<AdjointTractor> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(self.dim(), other.dim()));
        }
        let l = self
            .l
            .iter()
            .zip(&other.l)
            .map(|(a, b)| a.try_add(b))
            .collect::<Result<_>>()?;
        let rho = self
            .rho
            .iter()
            .zip(&other.rho)
            .map(|(a, b)| a.try_add(b))
            .collect::<Result<_>>()?;
        Ok(AdjointTractor {
            nu: self.nu.try_add(&other.nu)?,
            l,
            rho,
            mu: self.mu.try_add(&other.mu)?,
        })
    }

    pub fn try_sub(&self, other: &AdjointTractor) -> Result<AdjointTractor> {
        self.try_add(&other.scaled(-1.0))
    }

    /// Multiply every slot by a scalar jet, aligning to the common order.
    /// The fundamental derivative is linear over such factors.
    pub fn mul_scalar(&self, f: &Jet) -> Result<AdjointTractor> {
        let t = self.order().min(f.order());
        let ft = f.truncated(t)?;
        let mul = |j: &Jet| -> Result<Jet> { j.truncated(t)?.try_mul(&ft) };
        let l = self.l.iter().map(&mul).collect::<Result<_>>()?;
        let rho = self.rho.iter().map(&mul).collect::<Result<_>>()?;
        let mut mu = self.mu.truncated(t)?;
        for e in mu.data_mut() {
            *e = e.try_mul(&ft)?;
        }
        Ok(AdjointTractor {
            nu: mul(&self.nu)?,
            l,
            mu,
            rho,
        })
    }

    /// Slot action matrix `A[s][u]` on stored tractor triples at order `t`,
    /// so that `(𝕃V)[s] = Σ_u A[s][u] V[u]`. The input middle slots are
    /// lowered and the output middle slots come out lowered, which turns the
    /// raised-index matrix action into `g`/`g^{-1}` conjugation on the block.
    fn action_matrix(&self, suite: &CurvatureSuite, t: usize) -> Result<Vec<Vec<Jet>>> {
        let d = self.dim();
        let gt = truncate_mat(&suite.g, t)?;
        let ginvt = truncate_mat(&suite.ginv, t)?;
        let zero = Jet::constant(self.nu.dim(), t, 0.0);
        let mut a = vec![vec![zero.clone(); d + 2]; d + 2];
        let nu = self.nu.truncated(t)?;
        a[0][0] = nu.scaled(-1.0);
        a[d + 1][d + 1] = nu;
        for c in 0..d {
            let lc = self.l[c].truncated(t)?;
            a[0][1 + c] = lc.scaled(-1.0);
            for e in 0..d {
                a[1 + e][d + 1] = a[1 + e][d + 1].try_add(&gt[e][c].try_mul(&lc)?)?;
                a[d + 1][1 + c] =
                    a[d + 1][1 + c].try_add(&ginvt[c][e].try_mul(&self.rho[e].truncated(t)?)?)?;
                let mut acc = zero.clone();
                for f in 0..d {
                    acc = acc.try_add(&ginvt[c][f].try_mul(&self.mu.get(&[e, f]).truncated(t)?)?)?;
                }
                a[1 + e][1 + c] = acc;
            }
            a[1 + c][0] = self.rho[c].truncated(t)?.scaled(-1.0);
        }
        Ok(a)
    }

    /// Left action on a valence-one standard tractor; the weight is
    /// unchanged.
    pub fn apply(&self, v: &Tractor, suite: &CurvatureSuite) -> Result<Tractor> {
        if v.kinds != [IndexKind::Tractor] {
            return Err(Error::InvalidArgument(
                "adjoint tractors act on valence-one tractors".into(),
            ));
        }
        let d = self.dim();
        let t = self.order().min(v.order()).min(suite.metric_order);
        let a = self.action_matrix(suite, t)?;
        let vt = v.comps.truncated(t)?;
        let mut comps = Components::zeros(&[d + 2], self.nu.dim(), t);
        for s in 0..d + 2 {
            let mut acc = vt.data()[0].zero_like();
            for u in 0..d + 2 {
                acc = acc.try_add(&a[s][u].try_mul(vt.get(&[u]))?)?;
            }
            comps.set(&[s], acc);
        }
        Ok(WeightedField {
            weight: v.weight,
            kinds: vec![IndexKind::Tractor],
            comps,
        })
    }

    /// Realize the endomorphism as a weight-0 valence-two tractor field with
    /// both axes raised by `h`. The slot matrix is antisymmetric:
    ///
    /// ```text
    /// [   0    −l_c   −ν ]
    /// [  l_b   μ_bc  −ρ_b ]
    /// [   ν     ρ_c    0  ]
    /// ```
    ///
    /// Pairing the second axis against a tractor recovers [`Self::apply`],
    /// and slot antisymmetry is the skewness `h(𝕃V, U) = −h(V, 𝕃U)`.
    pub fn endomorphism(&self, suite: &CurvatureSuite) -> Result<WeightedField> {
        let d = self.dim();
        let t = self.order().min(suite.metric_order);
        let gt = truncate_mat(&suite.g, t)?;
        let mut comps = Components::zeros(&[d + 2, d + 2], self.nu.dim(), t);
        let nu = self.nu.truncated(t)?;
        comps.set(&[0, d + 1], nu.scaled(-1.0));
        comps.set(&[d + 1, 0], nu);
        for b in 0..d {
            let mut lb = comps.get(&[0, 0]).zero_like();
            for c in 0..d {
                lb = lb.try_add(&gt[b][c].try_mul(&self.l[c].truncated(t)?)?)?;
                comps.set(&[1 + b, 1 + c], self.mu.get(&[b, c]).truncated(t)?);
            }
            comps.set(&[0, 1 + b], lb.scaled(-1.0));
            comps.set(&[1 + b, 0], lb);
            let rb = self.rho[b].truncated(t)?;
            comps.set(&[1 + b, d + 1], rb.scaled(-1.0));
            comps.set(&[d + 1, 1 + b], rb);
        }
        Ok(WeightedField {
            weight: 0.0,
            kinds: vec![IndexKind::Tractor, IndexKind::Tractor],
            comps,
        })
    }

    /// Read the slot quadruple back off a valence-two tractor field laid out
    /// as in [`Self::endomorphism`]. Only the lower-left triangle is read;
    /// use [`skew_residual`] to check that the field is actually skew.
    pub fn from_endomorphism(
        f: &WeightedField,
        suite: &CurvatureSuite,
    ) -> Result<AdjointTractor> {
        if f.kinds != [IndexKind::Tractor, IndexKind::Tractor] {
            return Err(Error::InvalidArgument(
                "expected a valence-two tractor field".into(),
            ));
        }
        let d = suite.dim;
        let t = f.order().min(suite.metric_order);
        let ginvt = truncate_mat(&suite.ginv, t)?;
        let ft = f.comps.truncated(t)?;
        let nu = ft.get(&[d + 1, 0]).clone();
        let mut l = Vec::with_capacity(d);
        let mut rho = Vec::with_capacity(d);
        let mut mu = Components::zeros(&[d, d], nu.dim(), t);
        for b in 0..d {
            let mut lb = nu.zero_like();
            for c in 0..d {
                lb = lb.try_add(&ginvt[b][c].try_mul(ft.get(&[1 + c, 0]))?)?;
                mu.set(&[b, c], ft.get(&[1 + b, 1 + c]).clone());
            }
            l.push(lb);
            rho.push(ft.get(&[1 + b, d + 1]).scaled(-1.0));
        }
        AdjointTractor::new(nu, l, mu, rho)
    }
}

/// How far the last two (tractor) axes of a field are from slot
/// antisymmetry, relative to the field scale. Slot antisymmetry of the
/// raised storage is exactly h-skewness of the endomorphism, and the
/// connection preserves it.
pub fn skew_residual(f: &WeightedField, suite: &CurvatureSuite) -> Result<f64> {
    let r = f.rank();
    if r < 2
        || f.kinds[r - 1] != IndexKind::Tractor
        || f.kinds[r - 2] != IndexKind::Tractor
    {
        return Err(Error::InvalidArgument(
            "skewness needs two trailing tractor axes".into(),
        ));
    }
    let d = suite.dim;
    let lead = &f.comps.sizes()[..r - 2];
    let mut worst = 0.0f64;
    for ix in multi_indices(lead) {
        let mut full = vec![0usize; r];
        full[..r - 2].copy_from_slice(&ix);
        for s in 0..d + 2 {
            for u in 0..=s {
                full[r - 2] = s;
                full[r - 1] = u;
                let a = f.comps.get(&full).clone();
                full[r - 2] = u;
                full[r - 1] = s;
                worst = worst.max(a.try_add(f.comps.get(&full))?.max_abs());
            }
        }
    }
    Ok(worst / f.comps.max_abs().max(1.0))
}

/// Fix the leading axis of a field to one chart index, dropping the axis.
pub fn fix_first_axis(f: &WeightedField, a: usize) -> Result<WeightedField> {
    if f.rank() == 0 || a >= f.comps.sizes()[0] {
        return Err(Error::InvalidArgument(
            "leading axis index out of range".into(),
        ));
    }
    let rest = &f.comps.sizes()[1..];
    let mut comps = Components::zeros(rest, f.comps.data()[0].dim(), f.order());
    for ix in multi_indices(rest) {
        let mut full = Vec::with_capacity(ix.len() + 1);
        full.push(a);
        full.extend_from_slice(&ix);
        comps.set(&ix, f.comps.get(&full).clone());
    }
    Ok(WeightedField {
        weight: f.weight,
        kinds: f.kinds[1..].to_vec(),
        comps,
    })
}

/// Lowered covariant gradient `∇_a k_b` of a raised vector field, together
/// with the divergence `∇_a k^a`, at the largest affordable order.
fn gradient_lowered(k: &[Jet], suite: &CurvatureSuite) -> Result<(Vec<Vec<Jet>>, Jet)> {
    let d = suite.dim;
    if k.len() != d {
        return Err(Error::DimensionMismatch(d, k.len()));
    }
    let mk = k.iter().map(|j| j.order()).min().unwrap();
    if mk == 0 || suite.metric_order < 2 {
        return Err(Error::OrderBudget {
            needed: 1,
            available: mk.min(suite.metric_order),
            context: "covariant gradient of a vector field".into(),
        });
    }
    let t = (mk - 1).min(suite.metric_order - 1);
    let gt = truncate_mat(&suite.g, t + 1)?;
    let gammat = truncate_arr3(&suite.gamma, t)?;
    let kt: Vec<Jet> = k
        .iter()
        .map(|j| j.truncated(t))
        .collect::<Result<_>>()?;
    let mut klow = vec![gt[0][0].zero_like(); d];
    for b in 0..d {
        for c in 0..d {
            klow[b] = klow[b].try_add(&gt[b][c].try_mul(&k[c].truncated(t + 1)?)?)?;
        }
    }
    let klow_t: Vec<Jet> = klow
        .iter()
        .map(|j| j.truncated(t))
        .collect::<Result<_>>()?;
    let mut grad = vec![vec![kt[0].zero_like(); d]; d];
    let mut div = kt[0].zero_like();
    for a in 0..d {
        for b in 0..d {
            let mut acc = klow[b].partial(a)?;
            // The correction lowers the index: Γ^c_ab k_c, not Γ^c_ab k^c.
            for c in 0..d {
                acc = acc.try_sub(&gammat[c][a][b].try_mul(&klow_t[c])?)?;
            }
            grad[a][b] = acc;
        }
        div = div.try_add(&k[a].truncated(t + 1)?.partial(a)?)?;
        for c in 0..d {
            div = div.try_add(&gammat[a][a][c].try_mul(&kt[c])?)?;
        }
    }
    Ok((grad, div))
}

/// Trace-free symmetrized gradient `∇_(a k_b) − (1/d)(∇_c k^c) g_ab`, the
/// obstruction to `k` being conformal Killing.
pub fn conformal_killing_residual(k: &[Jet], suite: &CurvatureSuite) -> Result<Components> {
    let d = suite.dim;
    let (grad, div) = gradient_lowered(k, suite)?;
    let t = div.order();
    let gt = truncate_mat(&suite.g, t)?;
    let nu = div.scaled(1.0 / d as f64);
    let mut out = Components::zeros(&[d, d], div.dim(), t);
    for a in 0..d {
        for b in 0..d {
            let sym = grad[a][b].try_add(&grad[b][a])?.scaled(0.5);
            out.set(&[a, b], sym.try_sub(&nu.try_mul(&gt[a][b])?)?);
        }
    }
    Ok(out)
}

/// Differential splitting operator from vector fields to adjoint tractors:
/// `ν = −(1/d)∇_a l^a`, `μ_ab = −∇_[a l_b]`, `ρ_a = ∇_a ν − P_ab l^b`. It is
/// a right inverse of the top-slot projection and costs two jet orders.
pub fn splitting(k: &[Jet], suite: &CurvatureSuite) -> Result<AdjointTractor> {
    let d = suite.dim;
    let (grad, div) = gradient_lowered(k, suite)?;
    let t1 = div.order();
    if t1 == 0 || suite.metric_order < 3 {
        return Err(Error::OrderBudget {
            needed: 2,
            available: t1.min(suite.metric_order.saturating_sub(1)),
            context: "splitting operator".into(),
        });
    }
    let t = (t1 - 1).min(suite.metric_order - 2);
    let nu = div.scaled(-1.0 / d as f64);
    let pt = truncate_mat(&suite.p, t)?;
    let mut mu = Components::zeros(&[d, d], div.dim(), t);
    let mut rho = Vec::with_capacity(d);
    for a in 0..d {
        for b in 0..d {
            mu.set(
                &[a, b],
                grad[a][b].try_sub(&grad[b][a])?.scaled(-0.5).truncated(t)?,
            );
        }
        let mut r = nu.partial(a)?.truncated(t)?;
        for b in 0..d {
            r = r.try_sub(&pt[a][b].try_mul(&k[b].truncated(t)?)?)?;
        }
        rho.push(r);
    }
    let l = k.iter().map(|j| j.truncated(t)).collect::<Result<_>>()?;
    AdjointTractor::new(nu.truncated(t)?, l, mu, rho)
}

/// A vector field packaged with its conformal Killing diagnostics and the
/// adjoint tractor `𝕂 = L(−k)` whose slots solve the prolonged conformal
/// Killing system whenever the residual vanishes.
pub struct KillingCandidate {
    /// The raised vector field.
    pub k: Vec<Jet>,
    /// Relative size of the trace-free symmetrized gradient.
    pub residual: f64,
    /// Whether the residual is below [`CONFORMAL_KILLING_TOL`].
    pub conformal: bool,
    /// `L(−k)`; generates the tractor Lie derivative along `k`.
    pub adjoint: AdjointTractor,
}

impl KillingCandidate {
    pub fn at(k: &[Jet], suite: &CurvatureSuite) -> Result<KillingCandidate> {
        let res = conformal_killing_residual(k, suite)?;
        let (grad, _) = gradient_lowered(k, suite)?;
        let mut scale = 1.0f64;
        for row in &grad {
            for j in row {
                scale = scale.max(j.max_abs());
            }
        }
        let residual = res.max_abs() / scale;
        Ok(KillingCandidate {
            k: k.to_vec(),
            residual,
            conformal: residual < CONFORMAL_KILLING_TOL,
            adjoint: splitting(k, suite)?.scaled(-1.0),
        })
    }
}

/// Tractor connection on adjoint tractors, in slots: one adjoint tractor per
/// chart direction `a`,
///
/// ```text
/// ν'   = ∇_a ν − P_a{}^b l_b − ρ_a
/// l'^b = ∇_a l^b + μ_a{}^b + ν δ_a^b
/// μ'_bc = ∇_a μ_bc − 2P_{a[b} l_{c]} + 2g_{a[b} ρ_{c]}
/// ρ'_c = ∇_a ρ_c − P_a{}^b μ_bc + ν P_ac
/// ```
///
/// This is the Leibniz extension of the standard tractor connection through
/// the endomorphism realization; the integration tests check that equality.
pub fn adjoint_connection(
    lt: &AdjointTractor,
    suite: &CurvatureSuite,
) -> Result<Vec<AdjointTractor>> {
    let d = suite.dim;
    if lt.dim() != d {
        return Err(Error::DimensionMismatch(d, lt.dim()));
    }
    if lt.order() == 0 || suite.metric_order < 3 {
        return Err(Error::OrderBudget {
            needed: 1,
            available: lt.order().min(suite.metric_order.saturating_sub(2)),
            context: "adjoint tractor connection".into(),
        });
    }
    let t = (lt.order() - 1).min(suite.metric_order - 2);
    let gt = truncate_mat(&suite.g, t)?;
    let ginvt = truncate_mat(&suite.ginv, t)?;
    let pt = truncate_mat(&suite.p, t)?;
    let gammat = truncate_arr3(&suite.gamma, t)?;
    let nu = lt.nu.truncated(t + 1)?;
    let nut = lt.nu.truncated(t)?;
    let lt1: Vec<Jet> = lt.l.iter().map(|j| j.truncated(t + 1)).collect::<Result<_>>()?;
    let ltt: Vec<Jet> = lt.l.iter().map(|j| j.truncated(t)).collect::<Result<_>>()?;
    let rho1: Vec<Jet> = lt
        .rho
        .iter()
        .map(|j| j.truncated(t + 1))
        .collect::<Result<_>>()?;
    let rhot: Vec<Jet> = lt.rho.iter().map(|j| j.truncated(t)).collect::<Result<_>>()?;
    let mu1 = lt.mu.truncated(t + 1)?;
    let mu0 = lt.mu.truncated(t)?;
    // Lowered l plus the mixed forms P_a{}^b and μ_a{}^b.
    let mut llow = vec![nut.zero_like(); d];
    let mut pmix = vec![vec![nut.zero_like(); d]; d];
    let mut mumix = vec![vec![nut.zero_like(); d]; d];
    for a in 0..d {
        for b in 0..d {
            llow[a] = llow[a].try_add(&gt[a][b].try_mul(&ltt[b])?)?;
            for c in 0..d {
                pmix[a][b] = pmix[a][b].try_add(&pt[a][c].try_mul(&ginvt[c][b])?)?;
                mumix[a][b] = mumix[a][b].try_add(&mu0.get(&[a, c]).try_mul(&ginvt[c][b])?)?;
            }
        }
    }
    let mut out = Vec::with_capacity(d);
    for a in 0..d {
        // ν slot.
        let mut nup = nu.partial(a)?.try_sub(&rhot[a])?;
        for b in 0..d {
            nup = nup.try_sub(&pmix[a][b].try_mul(&llow[b])?)?;
        }
        // l slot.
        let mut lp = Vec::with_capacity(d);
        for b in 0..d {
            let mut acc = lt1[b].partial(a)?.try_add(&mumix[a][b])?;
            for c in 0..d {
                acc = acc.try_add(&gammat[b][a][c].try_mul(&ltt[c])?)?;
            }
            if a == b {
                acc = acc.try_add(&nut)?;
            }
            lp.push(acc);
        }
        // μ slot.
        let mut mup = Components::zeros(&[d, d], nut.dim(), t);
        for b in 0..d {
            for c in 0..d {
                let mut acc = mu1.get(&[b, c]).partial(a)?;
                for e in 0..d {
                    acc = acc.try_sub(&gammat[e][a][b].try_mul(mu0.get(&[e, c]))?)?;
                    acc = acc.try_sub(&gammat[e][a][c].try_mul(mu0.get(&[b, e]))?)?;
                }
                acc = acc.try_sub(&pt[a][b].try_mul(&llow[c])?)?;
                acc = acc.try_add(&pt[a][c].try_mul(&llow[b])?)?;
                acc = acc.try_add(&gt[a][b].try_mul(&rhot[c])?)?;
                acc = acc.try_sub(&gt[a][c].try_mul(&rhot[b])?)?;
                mup.set(&[b, c], acc);
            }
        }
        // ρ slot.
        let mut rp = Vec::with_capacity(d);
        for c in 0..d {
            let mut acc = rho1[c].partial(a)?.try_add(&nut.try_mul(&pt[a][c])?)?;
            for e in 0..d {
                acc = acc.try_sub(&gammat[e][a][c].try_mul(&rhot[e])?)?;
                acc = acc.try_sub(&pmix[a][e].try_mul(mu0.get(&[e, c]))?)?;
            }
            rp.push(acc);
        }
        out.push(AdjointTractor::new(nup, lp, mup, rp)?);
    }
    Ok(out)
}

/// Prolongation connection `∇̃_a 𝕃 = ∇_a 𝕃 + κ(Π𝕃, ∂_a)`: the adjoint
/// connection plus the tractor curvature contracted with the top slot, which
/// adds `W_{dabc} l^d` to the two-form slot and `−C_{dac} l^d` to the
/// one-form slot. Parallel sections correspond exactly to conformal Killing
/// fields; expanding `∇̃ L(−k) = 0` in slots recovers the prolonged
/// first-order system for `k`.
pub fn prolongation_connection(
    lt: &AdjointTractor,
    suite: &CurvatureSuite,
) -> Result<Vec<AdjointTractor>> {
    let d = suite.dim;
    if suite.metric_order < 4 {
        return Err(Error::OrderBudget {
            needed: 4,
            available: suite.metric_order,
            context: "prolongation connection".into(),
        });
    }
    let base = adjoint_connection(lt, suite)?;
    let t = base[0].order().min(suite.metric_order - 3);
    let wl = suite.weyl_lowered()?;
    let lg: Vec<Jet> = lt.l.iter().map(|j| j.truncated(t)).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(d);
    for (a, conn) in base.iter().enumerate() {
        let mut mu = conn.mu.truncated(t)?;
        let mut rho: Vec<Jet> = conn
            .rho
            .iter()
            .map(|j| j.truncated(t))
            .collect::<Result<_>>()?;
        for b in 0..d {
            for c in 0..d {
                let mut acc = mu.get(&[b, c]).clone();
                for e in 0..d {
                    acc = acc.try_add(&wl[e][a][b][c].truncated(t)?.try_mul(&lg[e])?)?;
                }
                mu.set(&[b, c], acc);
            }
            for e in 0..d {
                rho[b] =
                    rho[b].try_sub(&suite.cotton[e][a][b].truncated(t)?.try_mul(&lg[e])?)?;
            }
        }
        out.push(AdjointTractor::new(
            conn.nu.truncated(t)?,
            conn.l.iter().map(|j| j.truncated(t)).collect::<Result<_>>()?,
            mu,
            rho,
        )?);
    }
    Ok(out)
}

/// Contract a raised vector into the leading lower axis of a field.
fn contract_leading(f: &WeightedField, v: &[Jet]) -> Result<WeightedField> {
    if f.rank() == 0 || f.kinds[0] != IndexKind::Down {
        return Err(Error::InvalidArgument(
            "contraction needs a leading lower tensor axis".into(),
        ));
    }
    let d = f.comps.sizes()[0];
    if v.len() != d {
        return Err(Error::DimensionMismatch(d, v.len()));
    }
    let t = v.iter().fold(f.order(), |m, j| m.min(j.order()));
    let ft = f.comps.truncated(t)?;
    let vt: Vec<Jet> = v.iter().map(|j| j.truncated(t)).collect::<Result<_>>()?;
    let rest = &ft.sizes()[1..];
    let mut comps = Components::zeros(rest, ft.data()[0].dim(), t);
    for ix in multi_indices(rest) {
        let mut acc = ft.data()[0].zero_like();
        let mut full = vec![0usize; ix.len() + 1];
        full[1..].copy_from_slice(&ix);
        for a in 0..d {
            full[0] = a;
            acc = acc.try_add(&vt[a].try_mul(ft.get(&full))?)?;
        }
        comps.set(&ix, acc);
    }
    Ok(WeightedField {
        weight: f.weight,
        kinds: f.kinds[1..].to_vec(),
        comps,
    })
}

/// Fundamental derivative along an adjoint tractor: directional coupled
/// derivative along the top slot, the weight term `wν`, the `±(μ_a{}^b +
/// νδ_a^b)` action on raised/lowered tensor axes, and `−𝕃` on tractor axes.
/// It is linear over scalar functions of the direction and annihilates the
/// weight-2 metric; densities reduce to `∇_l + wν`.
pub fn fundamental_derivative(
    lt: &AdjointTractor,
    f: &WeightedField,
    suite: &CurvatureSuite,
) -> Result<WeightedField> {
    let d = suite.dim;
    if lt.dim() != d {
        return Err(Error::DimensionMismatch(d, lt.dim()));
    }
    let df = crate::tractor::covariant_derivative(f, suite)?;
    let mut out = contract_leading(&df, &lt.l)?;
    let t = out.order().min(lt.order());
    out = out.truncated(t)?;
    let ft = f.comps.truncated(t)?;
    let nut = lt.nu.truncated(t)?;
    let ginvt = truncate_mat(&suite.ginv, t)?;
    // Weight term.
    if f.weight != 0.0 {
        let wnu = nut.scaled(f.weight);
        for (o, i) in out.comps.data_mut().iter_mut().zip(ft.data()) {
            *o = o.try_add(&wnu.try_mul(i)?)?;
        }
    }
    // Mixed μ_a{}^b at order t.
    let mut mumix = vec![vec![nut.zero_like(); d]; d];
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                mumix[a][b] =
                    mumix[a][b].try_add(&lt.mu.get(&[a, c]).truncated(t)?.try_mul(&ginvt[c][b])?)?;
            }
        }
    }
    let action = if f.kinds.contains(&IndexKind::Tractor) {
        Some(lt.action_matrix(suite, t)?)
    } else {
        None
    };
    for (pos, kind) in f.kinds.iter().enumerate() {
        for ix in multi_indices(ft.sizes()) {
            let mut acc = out.comps.get(&ix).clone();
            let mut jx = ix.clone();
            match kind {
                IndexKind::Up => {
                    // +(μ_a{}^b + νδ_a^b) on the raised index b = ix[pos].
                    let b = ix[pos];
                    for a in 0..d {
                        jx[pos] = a;
                        acc = acc.try_add(&mumix[a][b].try_mul(ft.get(&jx))?)?;
                    }
                    jx[pos] = b;
                    acc = acc.try_add(&nut.try_mul(ft.get(&jx))?)?;
                }
                IndexKind::Down => {
                    // −(μ_b{}^a + νδ_b^a) on the lowered index b = ix[pos].
                    let b = ix[pos];
                    for a in 0..d {
                        jx[pos] = a;
                        acc = acc.try_sub(&mumix[b][a].try_mul(ft.get(&jx))?)?;
                    }
                    jx[pos] = b;
                    acc = acc.try_sub(&nut.try_mul(ft.get(&jx))?)?;
                }
                IndexKind::Tractor => {
                    let a = action.as_ref().unwrap();
                    let s = ix[pos];
                    for u in 0..d + 2 {
                        jx[pos] = u;
                        acc = acc.try_sub(&a[s][u].try_mul(ft.get(&jx))?)?;
                    }
                }
            }
            out.comps.set(&ix, acc);
        }
    }
    Ok(out)
}

/// Lie derivative of a valence-one tractor along a conformal Killing
/// candidate, by the algebraic formula `ℒ_k V = ∇_k V + 𝕂 V` with
/// `𝕂 = L(−k)`. On a weighted tractor the weight term `−w ν_𝕂 V` is added,
/// the same term the density formula carries, so the result always equals
/// the fundamental derivative along `L(k)`. Evaluated for any input; the
/// flag carries a warning when the direction failed the conformal Killing
/// test, since only then is the result scale-independent.
pub struct LieDerivative {
    pub value: Tractor,
    /// Copied from the candidate: false means the formula was evaluated on a
    /// direction that is not conformal Killing to tolerance.
    pub conformal_killing: bool,
}

pub fn lie_derivative_tractor(
    cand: &KillingCandidate,
    v: &Tractor,
    suite: &CurvatureSuite,
) -> Result<LieDerivative> {
    if v.kinds != [IndexKind::Tractor] {
        return Err(Error::InvalidArgument(
            "tractor Lie derivative takes a valence-one tractor".into(),
        ));
    }
    let dv = crate::tractor::covariant_derivative(v, suite)?;
    let transport = contract_leading(&dv, &cand.k)?;
    let action = cand.adjoint.apply(v, suite)?;
    let t = transport.order().min(action.order());
    let mut value = transport.truncated(t)?.try_add(&action.truncated(t)?)?;
    if v.weight != 0.0 {
        let wnu = cand.adjoint.nu.truncated(t)?.scaled(-v.weight);
        let vt = v.comps.truncated(t)?;
        for (o, i) in value.comps.data_mut().iter_mut().zip(vt.data()) {
            *o = o.try_add(&wnu.try_mul(i)?)?;
        }
    }
    Ok(LieDerivative {
        value,
        conformal_killing: cand.conformal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemann::MetricChart;
    use crate::tractor::{h_pair, outer, standard_tractor};
    use crate::util::{rng_for, Poly};
    use std::sync::Arc;

    fn flat_chart(dim: usize) -> MetricChart {
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
            Arc::new(|_| true),
        )
    }

    fn random_adjoint(seed: u64, suite: &CurvatureSuite, order: usize) -> AdjointTractor {
        let d = suite.dim;
        let mut rng = rng_for(seed, "adjoint-slots");
        let x = suite.point.clone();
        let mut jet = |deg| {
            Poly::random(&mut rng, d, deg, 1.0)
                .eval_jet(&x, order)
                .unwrap()
        };
        let nu = jet(2);
        let l: Vec<Jet> = (0..d).map(|_| jet(2)).collect();
        let rho: Vec<Jet> = (0..d).map(|_| jet(2)).collect();
        let mut mu = Components::zeros(&[d, d], d, order);
        for a in 0..d {
            for b in 0..a {
                let e = jet(2);
                mu.set(&[a, b], e.clone());
                mu.set(&[b, a], e.scaled(-1.0));
            }
        }
        AdjointTractor::new(nu, l, mu, rho).unwrap()
    }

    #[test]
    fn endomorphism_realization_is_skew_and_round_trips() {
        let d = 3;
        let chart = flat_chart(d);
        let suite = CurvatureSuite::at(&chart, &[0.2, -0.4, 0.1], 6).unwrap();
        let lt = random_adjoint(11, &suite, 6);
        let f = lt.endomorphism(&suite).unwrap();
        assert!(skew_residual(&f, &suite).unwrap() < 1e-14);
        let back = AdjointTractor::from_endomorphism(&f, &suite).unwrap();
        assert!(lt.try_sub(&back).unwrap().max_abs() < 1e-12 * lt.max_abs());

        // Applying the endomorphism through the pairing equals the matrix
        // action, and skewness holds against the pairing.
        let mut rng = rng_for(12, "adjoint-args");
        let x = suite.point.clone();
        let mut jet = |deg| {
            Poly::random(&mut rng, d, deg, 1.0)
                .eval_jet(&x, 6)
                .unwrap()
        };
        let v = standard_tractor(0.5, &jet(2), &[jet(2), jet(2), jet(2)], &jet(2)).unwrap();
        let u = standard_tractor(-0.5, &jet(2), &[jet(2), jet(2), jet(2)], &jet(2)).unwrap();
        let via_pairing = h_pair(&outer(&f, &v).unwrap(), 1, 2, &suite).unwrap();
        let direct = lt.apply(&v, &suite).unwrap();
        assert!(
            crate::conformal::residual(&via_pairing.comps, &direct.comps).unwrap() < 1e-12
        );
        let lv_u = h_pair(
            &outer(&lt.apply(&v, &suite).unwrap(), &u).unwrap(),
            0,
            1,
            &suite,
        )
        .unwrap();
        let v_lu = h_pair(
            &outer(&v, &lt.apply(&u, &suite).unwrap()).unwrap(),
            0,
            1,
            &suite,
        )
        .unwrap();
        let skew = lv_u.comps.data()[0]
            .try_add(&v_lu.comps.data()[0])
            .unwrap();
        assert!(skew.max_abs() < 1e-12 * lv_u.comps.max_abs().max(1.0));
    }

    #[test]
    fn splitting_projects_back_and_guards_the_order_budget() {
        let d = 3;
        let chart = flat_chart(d);
        let suite = CurvatureSuite::at(&chart, &[0.3, 0.1, -0.2], 6).unwrap();
        let mut rng = rng_for(5, "splitting-k");
        let k: Vec<Jet> = (0..d)
            .map(|_| {
                Poly::random(&mut rng, d, 3, 1.0)
                    .eval_jet(&suite.point, 6)
                    .unwrap()
            })
            .collect();
        let lt = splitting(&k, &suite).unwrap();
        assert_eq!(lt.order(), 4);
        for (a, ka) in lt.pi().iter().zip(&k) {
            assert!(a.try_sub(&ka.truncated(4).unwrap()).unwrap().max_abs() < 1e-13);
        }
        // Too little jet order for the two derivatives the slots need.
        let flat: Vec<Jet> = (0..d)
            .map(|i| Jet::variable(d, 1, i, suite.point[i]).unwrap())
            .collect();
        assert!(matches!(
            splitting(&flat, &suite),
            Err(Error::OrderBudget { .. })
        ));
        // Non-antisymmetric middle slot is rejected.
        let bad = Components::from_fn(&[d, d], |_| Jet::constant(d, 4, 1.0));
        assert!(matches!(
            AdjointTractor::new(
                Jet::constant(d, 4, 0.0),
                vec![Jet::constant(d, 4, 0.0); d],
                bad,
                vec![Jet::constant(d, 4, 0.0); d],
            ),
            Err(Error::InvalidArgument(_))
        ));
    }
}
