//! The standard tractor bundle and its invariant operators.
//!
//! A weight-`w` tractor index is stored against the active scale as a slot
//! triple: slot `0` holds the top density `σ` (weight `w+1`), slots `1..=d`
//! hold the middle one-form `μ_b` (weight `w+1`, lower tensor index), and
//! slot `d+1` holds the bottom density `ρ` (weight `w-1`). The triple is the
//! same whether the abstract index sits up or down, so contracting any two
//! tractor axes is always the metric pairing `σρ' + ρσ' + g^{ab} μ_a μ'_b`
//! and raised components are never stored separately.
//!
//! Built on top of the slot storage: the tractor connection and its
//! curvature, scale transformation of trivializations, the splitting
//! projectors `X`, `Y`, `Z`, the Thomas-D operator with its Laplacian family
//! (`□`, Paneitz, `□_{2k}`), the scale tractor, and the W-tractor.

use crate::conformal::{ConformalFactor, WeightedField};
use crate::error::{Error, Result};
use crate::jets::Jet;
use crate::riemann::{
    multi_indices, truncate_arr3, truncate_mat, Components, CurvatureSuite, IndexKind,
    MetricChart,
};
use nalgebra::DMatrix;
use std::sync::Arc;

/// A tractor field is a weighted field whose `Tractor` axes carry the slot
/// layout described in the module docs. The alias keeps one engine for mixed
/// tensor/tractor valences.
pub type Tractor = WeightedField;

/// Assemble a valence-one tractor from its slot triple. All jets must share
/// the dimension; orders are aligned to the smallest.
pub fn standard_tractor(weight: f64, sigma: &Jet, mu: &[Jet], rho: &Jet) -> Result<Tractor> {
    let d = sigma.dim();
    if mu.len() != d {
        return Err(Error::InvalidArgument(format!(
            "{} middle slots for dimension {d}",
            mu.len()
        )));
    }
    let t = mu
        .iter()
        .fold(sigma.order().min(rho.order()), |m, j| m.min(j.order()));
    let mut comps = Components::zeros(&[d + 2], d, t);
    comps.set(&[0], sigma.truncated(t)?);
    for (b, j) in mu.iter().enumerate() {
        comps.set(&[1 + b], j.truncated(t)?);
    }
    comps.set(&[d + 1], rho.truncated(t)?);
    WeightedField::new(weight, vec![IndexKind::Tractor], comps, d)
}

/// Slot `s` of a valence-one tractor.
pub fn slot(v: &Tractor, s: usize) -> Result<Jet> {
    if v.kinds != [IndexKind::Tractor] {
        return Err(Error::InvalidArgument(
            "slot access needs a valence-one tractor".into(),
        ));
    }
    Ok(v.comps.get(&[s]).clone())
}

/// Tensor product of two weighted fields: weights add, axes concatenate.
pub fn outer(a: &WeightedField, b: &WeightedField) -> Result<WeightedField> {
    let t = a.order().min(b.order());
    let at = a.comps.truncated(t)?;
    let bt = b.comps.truncated(t)?;
    let ra = at.rank();
    let mut sizes = at.sizes().to_vec();
    sizes.extend_from_slice(bt.sizes());
    let dim = at.data()[0].dim();
    if dim != bt.data()[0].dim() {
        return Err(Error::DimensionMismatch(dim, bt.data()[0].dim()));
    }
    let mut comps = Components::zeros(&sizes, dim, t);
    for ix in multi_indices(&sizes) {
        comps.set(&ix, at.get(&ix[..ra]).try_mul(bt.get(&ix[ra..]))?);
    }
    let mut kinds = a.kinds.clone();
    kinds.extend_from_slice(&b.kinds);
    Ok(WeightedField {
        weight: a.weight + b.weight,
        kinds,
        comps,
    })
}

/// Nonzero entries of the tractor metric pairing on slot triples at a given
/// jet order: `(s, t, h_st)` with `σρ' + ρσ' + g^{ab} μ_a μ'_b`.
fn pairing_entries(suite: &CurvatureSuite, order: usize) -> Result<Vec<(usize, usize, Jet)>> {
    let d = suite.dim;
    let dim = suite.g[0][0].dim();
    let one = Jet::constant(dim, order, 1.0);
    let mut entries = vec![(0, d + 1, one.clone()), (d + 1, 0, one)];
    for i in 0..d {
        for j in 0..d {
            entries.push((1 + i, 1 + j, suite.ginv[i][j].truncated(order)?));
        }
    }
    Ok(entries)
}

/// Contract two tractor axes with the tractor metric; weight is unchanged.
pub fn h_pair(
    v: &WeightedField,
    ax1: usize,
    ax2: usize,
    suite: &CurvatureSuite,
) -> Result<WeightedField> {
    if ax1 == ax2
        || v.kinds.get(ax1) != Some(&IndexKind::Tractor)
        || v.kinds.get(ax2) != Some(&IndexKind::Tractor)
    {
        return Err(Error::InvalidArgument(format!(
            "tractor pairing needs two distinct tractor axes, got {ax1}, {ax2}"
        )));
    }
    let t = v.order().min(suite.metric_order);
    let vt = v.comps.truncated(t)?;
    let entries = pairing_entries(suite, t)?;
    let keep: Vec<usize> = (0..v.rank()).filter(|p| *p != ax1 && *p != ax2).collect();
    let out_sizes: Vec<usize> = keep.iter().map(|&p| vt.sizes()[p]).collect();
    let out_kinds: Vec<IndexKind> = keep.iter().map(|&p| v.kinds[p]).collect();
    let dim = vt.data()[0].dim();
    let mut comps = Components::zeros(&out_sizes, dim, t);
    for ox in multi_indices(&out_sizes) {
        let mut acc = vt.data()[0].zero_like();
        let mut full = vec![0usize; v.rank()];
        for (pos, &p) in keep.iter().enumerate() {
            full[p] = ox[pos];
        }
        for (s, u, h) in &entries {
            full[ax1] = *s;
            full[ax2] = *u;
            acc = acc.try_add(&h.try_mul(vt.get(&full))?)?;
        }
        comps.set(&ox, acc);
    }
    Ok(WeightedField {
        weight: v.weight,
        kinds: out_kinds,
        comps,
    })
}

/// Tractor metric `h(V, U)`: a scalar density of weight `w_V + w_U`.
pub fn tractor_metric(v: &Tractor, u: &Tractor, suite: &CurvatureSuite) -> Result<WeightedField> {
    if v.kinds != [IndexKind::Tractor] || u.kinds != [IndexKind::Tractor] {
        return Err(Error::InvalidArgument(
            "tractor metric takes two valence-one tractors".into(),
        ));
    }
    h_pair(&outer(v, u)?, 0, 1, suite)
}

/// Signature `(plus, minus)` of the tractor metric at the base point. A
/// metric of signature `(p, q)` yields `(p+1, q+1)`.
pub fn tractor_metric_signature(suite: &CurvatureSuite) -> Result<(usize, usize)> {
    let d = suite.dim;
    let mut h = DMatrix::<f64>::zeros(d + 2, d + 2);
    h[(0, d + 1)] = 1.0;
    h[(d + 1, 0)] = 1.0;
    for i in 0..d {
        for j in 0..d {
            h[(1 + i, 1 + j)] = suite.g[i][j].value();
        }
    }
    let eigs = h.symmetric_eigenvalues();
    let scale = eigs.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    let mut plus = 0;
    let mut minus = 0;
    for e in eigs.iter() {
        if e.abs() < 1e-12 * scale {
            return Err(Error::InternalConsistency(
                "tractor metric degenerate at the base point".into(),
            ));
        }
        if *e > 0.0 {
            plus += 1;
        } else {
            minus += 1;
        }
    }
    Ok((plus, minus))
}

/// The scale's splitting of the tractor bundle: `X` injects the bottom
/// density, `Z` the middle one-form, `Y` the top density, with
/// `U = Y σ + Z μ + X ρ` and the product table `X·Y = 1`, `Z^a·Z^b = g^{ab}`,
/// all else zero.
pub struct SplittingProjectors {
    /// Weight 1, slots `(0, 0, 1)`.
    pub x: Tractor,
    /// Weight -1, slots `(1, 0, 0)`.
    pub y: Tractor,
    /// Weight -1, one tractor and one raised tensor axis, `Z[1+i][a] = δ_i^a`.
    pub z: WeightedField,
}

impl SplittingProjectors {
    pub fn at(suite: &CurvatureSuite) -> SplittingProjectors {
        let d = suite.dim;
        let m = suite.metric_order;
        let one = Jet::constant(d, m, 1.0);
        let mut xc = Components::zeros(&[d + 2], d, m);
        xc.set(&[d + 1], one.clone());
        let mut yc = Components::zeros(&[d + 2], d, m);
        yc.set(&[0], one.clone());
        let mut zc = Components::zeros(&[d + 2, d], d, m);
        for i in 0..d {
            zc.set(&[1 + i, i], one.clone());
        }
        SplittingProjectors {
            x: WeightedField {
                weight: 1.0,
                kinds: vec![IndexKind::Tractor],
                comps: xc,
            },
            y: WeightedField {
                weight: -1.0,
                kinds: vec![IndexKind::Tractor],
                comps: yc,
            },
            z: WeightedField {
                weight: -1.0,
                kinds: vec![IndexKind::Tractor, IndexKind::Up],
                comps: zc,
            },
        }
    }
}

/// Coupled tractor-Levi-Civita covariant derivative: prepends a lower tensor
/// axis. Tensor axes take the usual `±Γ` corrections; each tractor axis takes
/// the slot corrections `σ' -= μ_a`, `μ'_b += P_ab σ + g_ab ρ - Γ^c_ab μ_c`,
/// `ρ' -= P_a{}^b μ_b`, so that on a valence-one tractor this is
/// `∇_a (σ, μ_b, ρ) = (∇σ - μ_a, ∇μ_b + g_ab ρ + P_ab σ, ∇ρ - P_ab μ^b)`.
/// Output order is the input's less one, capped by the connection data.
pub fn covariant_derivative(v: &WeightedField, suite: &CurvatureSuite) -> Result<WeightedField> {
    let d = suite.dim;
    if v.order() == 0 {
        return Err(Error::OrderBudget {
            needed: 1,
            available: 0,
            context: "tractor covariant derivative".into(),
        });
    }
    let has_tractor = v.kinds.contains(&IndexKind::Tractor);
    let cap = if has_tractor {
        suite.metric_order - 2
    } else {
        suite.metric_order - 1
    };
    let t = (v.order() - 1).min(cap);
    let vhead = v.comps.truncated((t + 1).min(v.order()))?;
    let vt = v.comps.truncated(t)?;
    let gt = truncate_mat(&suite.g, t)?;
    let gammat = truncate_arr3(&suite.gamma, t)?;
    let (pt, praise) = if has_tractor {
        let pt = truncate_mat(&suite.p, t)?;
        let ginvt = truncate_mat(&suite.ginv, t)?;
        let mut praise = vec![vec![vt.data()[0].zero_like(); d]; d];
        for a in 0..d {
            for b in 0..d {
                let mut acc = vt.data()[0].zero_like();
                for c in 0..d {
                    acc = acc.try_add(&pt[a][c].try_mul(&ginvt[c][b])?)?;
                }
                praise[a][b] = acc;
            }
        }
        (pt, praise)
    } else {
        (Vec::new(), Vec::new())
    };
    let mut out_sizes = vec![d];
    out_sizes.extend_from_slice(v.comps.sizes());
    let dim = vt.data()[0].dim();
    let mut out = Components::zeros(&out_sizes, dim, t);
    for a in 0..d {
        for ix in multi_indices(v.comps.sizes()) {
            let mut acc = vhead.get(&ix).partial(a)?;
            for (pos, kind) in v.kinds.iter().enumerate() {
                let mut jx = ix.clone();
                match kind {
                    IndexKind::Up => {
                        for c in 0..d {
                            jx[pos] = c;
                            acc = acc.try_add(&gammat[ix[pos]][a][c].try_mul(vt.get(&jx))?)?;
                        }
                    }
                    IndexKind::Down => {
                        for c in 0..d {
                            jx[pos] = c;
                            acc = acc.try_sub(&gammat[c][a][ix[pos]].try_mul(vt.get(&jx))?)?;
                        }
                    }
                    IndexKind::Tractor => {
                        let s = ix[pos];
                        if s == 0 {
                            jx[pos] = 1 + a;
                            acc = acc.try_sub(vt.get(&jx))?;
                        } else if s <= d {
                            let b = s - 1;
                            jx[pos] = 0;
                            acc = acc.try_add(&pt[a][b].try_mul(vt.get(&jx))?)?;
                            jx[pos] = d + 1;
                            acc = acc.try_add(&gt[a][b].try_mul(vt.get(&jx))?)?;
                            for c in 0..d {
                                jx[pos] = 1 + c;
                                acc = acc.try_sub(&gammat[c][a][b].try_mul(vt.get(&jx))?)?;
                            }
                        } else {
                            for b in 0..d {
                                jx[pos] = 1 + b;
                                acc = acc.try_sub(&praise[a][b].try_mul(vt.get(&jx))?)?;
                            }
                        }
                    }
                }
            }
            let mut ox = Vec::with_capacity(ix.len() + 1);
            ox.push(a);
            ox.extend_from_slice(&ix);
            out.set(&ox, acc);
        }
    }
    let mut kinds = vec![IndexKind::Down];
    kinds.extend_from_slice(&v.kinds);
    Ok(WeightedField {
        weight: v.weight,
        kinds,
        comps: out,
    })
}

/// Trace the two leading lower tensor axes with `g^{ab}`.
fn ginv_trace(dd: &WeightedField, suite: &CurvatureSuite) -> Result<WeightedField> {
    if dd.rank() < 2 || dd.kinds[0] != IndexKind::Down || dd.kinds[1] != IndexKind::Down {
        return Err(Error::InvalidArgument(
            "trace needs two leading lower tensor axes".into(),
        ));
    }
    let d = suite.dim;
    let t = dd.order().min(suite.metric_order);
    let ct = dd.comps.truncated(t)?;
    let ginvt = truncate_mat(&suite.ginv, t)?;
    let rest = &ct.sizes()[2..];
    let dim = ct.data()[0].dim();
    let mut out = Components::zeros(rest, dim, t);
    for ix in multi_indices(rest) {
        let mut acc = ct.data()[0].zero_like();
        let mut full = vec![0usize; ct.rank()];
        full[2..].copy_from_slice(&ix);
        for a in 0..d {
            for b in 0..d {
                full[0] = a;
                full[1] = b;
                acc = acc.try_add(&ginvt[a][b].try_mul(ct.get(&full))?)?;
            }
        }
        out.set(&ix, acc);
    }
    Ok(WeightedField {
        weight: dd.weight,
        kinds: dd.kinds[2..].to_vec(),
        comps: out,
    })
}

/// Connection Laplacian `g^{ab} ∇_a ∇_b` with the coupled tractor-Levi-Civita
/// connection; two jet orders below the input.
pub fn coupled_laplacian(v: &WeightedField, suite: &CurvatureSuite) -> Result<WeightedField> {
    let dv = covariant_derivative(v, suite)?;
    let ddv = covariant_derivative(&dv, suite)?;
    ginv_trace(&ddv, suite)
}

/// Re-trivialize into the scale `ĝ = Ω² g`: every tractor axis mixes by
/// `(σ, μ_b, ρ) ↦ (σ, μ_b + Υ_b σ, ρ - Υ^c μ_c - ½Υ² σ)` and the slots pick
/// up the density factors `Ω^{w+1}, Ω^{w+1}, Ω^{w-1}` per axis; tensor axes
/// are inert. Composing transforms for Ω₁ then Ω₂ equals the single
/// transform for Ω₁Ω₂.
pub fn tractor_transform(
    v: &WeightedField,
    factor: &ConformalFactor,
    suite: &CurvatureSuite,
) -> Result<WeightedField> {
    let d = suite.dim;
    let t = v
        .order()
        .min(factor.ups.first().map_or(usize::MAX, |j| j.order()))
        .min(suite.metric_order);
    let omw = factor.power(v.weight, t)?;
    let mut comps = v.comps.truncated(t)?;
    for e in comps.data_mut() {
        *e = e.try_mul(&omw)?;
    }
    let tractor_axes: Vec<usize> = (0..v.rank())
        .filter(|&p| v.kinds[p] == IndexKind::Tractor)
        .collect();
    if !tractor_axes.is_empty() {
        let om = factor.power(1.0, t)?;
        let ominv = factor.power(-1.0, t)?;
        let upl: Vec<Jet> = factor
            .ups
            .iter()
            .map(|j| j.truncated(t))
            .collect::<Result<_>>()?;
        let upr: Vec<Jet> = factor
            .ups_raised(&suite.ginv)?
            .iter()
            .map(|j| j.truncated(t))
            .collect::<Result<_>>()?;
        let mut ups2 = upl[0].zero_like();
        for a in 0..d {
            ups2 = ups2.try_add(&upl[a].try_mul(&upr[a])?)?;
        }
        let zero = upl[0].zero_like();
        let mut m = vec![vec![zero; d + 2]; d + 2];
        m[0][0] = om.clone();
        for b in 0..d {
            m[1 + b][0] = om.try_mul(&upl[b])?;
            m[1 + b][1 + b] = om.clone();
        }
        m[d + 1][0] = ominv.try_mul(&ups2)?.scaled(-0.5);
        for c in 0..d {
            m[d + 1][1 + c] = ominv.try_mul(&upr[c])?.scaled(-1.0);
        }
        m[d + 1][d + 1] = ominv;
        for axis in tractor_axes {
            comps = apply_axis_matrix(&comps, axis, &m)?;
        }
    }
    Ok(WeightedField {
        weight: v.weight,
        kinds: v.kinds.clone(),
        comps,
    })
}

/// Matrix action along one axis: `out[.., s, ..] = Σ_t m[s][t] in[.., t, ..]`.
fn apply_axis_matrix(comps: &Components, axis: usize, m: &[Vec<Jet>]) -> Result<Components> {
    let n = comps.sizes()[axis];
    let dim = comps.data()[0].dim();
    let mut out = Components::zeros(comps.sizes(), dim, comps.order());
    for ix in multi_indices(comps.sizes()) {
        let mut acc = comps.data()[0].zero_like();
        let mut jx = ix.clone();
        for u in 0..n {
            let entry = &m[ix[axis]][u];
            if entry.max_abs() == 0.0 {
                continue;
            }
            jx[axis] = u;
            acc = acc.try_add(&entry.try_mul(comps.get(&jx))?)?;
        }
        out.set(&ix, acc);
    }
    Ok(out)
}

/// Thomas-D operator: prepends a tractor axis and drops the weight by one,
/// with slots `((d+2w-2)w V, (d+2w-2)∇_a V, -(ΔV + wJV))`. Conformally
/// invariant on any weighted tractor bundle; costs two jet orders.
pub fn thomas_d(v: &WeightedField, suite: &CurvatureSuite) -> Result<WeightedField> {
    let d = suite.dim;
    let w = v.weight;
    let c = d as f64 + 2.0 * w - 2.0;
    let dv = covariant_derivative(v, suite)?;
    let ddv = covariant_derivative(&dv, suite)?;
    let lap = ginv_trace(&ddv, suite)?;
    let t = lap.order();
    let vt = v.comps.truncated(t)?;
    let dvt = dv.comps.truncated(t)?;
    let jt = suite.j.truncated(t)?;
    let mut sizes = vec![d + 2];
    sizes.extend_from_slice(v.comps.sizes());
    let dim = vt.data()[0].dim();
    let mut out = Components::zeros(&sizes, dim, t);
    for ix in multi_indices(v.comps.sizes()) {
        let mut ox = Vec::with_capacity(ix.len() + 1);
        ox.push(0);
        ox.extend_from_slice(&ix);
        out.set(&ox, vt.get(&ix).scaled(c * w));
        for a in 0..d {
            ox[0] = 1 + a;
            let mut dx = vec![a];
            dx.extend_from_slice(&ix);
            out.set(&ox, dvt.get(&dx).scaled(c));
        }
        ox[0] = d + 1;
        let bottom = lap
            .comps
            .get(&ix)
            .try_add(&jt.try_mul(vt.get(&ix))?.scaled(w))?
            .scaled(-1.0);
        out.set(&ox, bottom);
    }
    let mut kinds = vec![IndexKind::Tractor];
    kinds.extend_from_slice(&v.kinds);
    Ok(WeightedField {
        weight: w - 1.0,
        kinds,
        comps: out,
    })
}

/// Scale tractor of a weight-1 density: `I = (1/d) D σ`, slots
/// `(σ, ∇σ, -(Δσ + Jσ)/d)`. Parallel exactly when `σ` solves the
/// almost-Einstein equation.
pub fn scale_tractor(sigma: &WeightedField, suite: &CurvatureSuite) -> Result<Tractor> {
    if !sigma.is_scalar() {
        return Err(Error::InvalidArgument(
            "scale tractor takes a scalar density".into(),
        ));
    }
    if (sigma.weight - 1.0).abs() > 1e-9 {
        return Err(Error::UnsupportedWeight(format!(
            "scale tractor needs weight 1, got {}",
            sigma.weight
        )));
    }
    Ok(thomas_d(sigma, suite)?.scaled(1.0 / suite.dim as f64))
}

/// Squared length `h(I, I)` of the scale tractor: a weight-0 scalar equal to
/// `g^{ab}∇_a σ ∇_b σ - (2/d) σ (Δ + J) σ`; where `σ ≠ 0` this is
/// `-Sc/(d(d-1))` of the rescaled metric `σ^{-2} g`.
pub fn i_squared(sigma: &WeightedField, suite: &CurvatureSuite) -> Result<WeightedField> {
    let i = scale_tractor(sigma, suite)?;
    tractor_metric(&i, &i, suite)
}

/// Conformal Laplacian `Δ + (1 - d/2) J` with the coupled connection, defined
/// on weight `1 - d/2` tractors of any valence; drops the weight by two.
pub fn box_op(v: &WeightedField, suite: &CurvatureSuite) -> Result<WeightedField> {
    let d = suite.dim;
    let want = 1.0 - d as f64 / 2.0;
    if (v.weight - want).abs() > 1e-9 {
        return Err(Error::UnsupportedWeight(format!(
            "conformal Laplacian needs weight {want}, got {}",
            v.weight
        )));
    }
    let lap = coupled_laplacian(v, suite)?;
    let t = lap.order();
    let jt = suite.j.truncated(t)?;
    let vt = v.comps.truncated(t)?;
    let mut comps = lap.comps;
    for ix in multi_indices(vt.sizes()) {
        let add = jt.try_mul(vt.get(&ix))?.scaled(want);
        comps.set(&ix, comps.get(&ix).try_add(&add)?);
    }
    Ok(WeightedField {
        weight: v.weight - 2.0,
        kinds: v.kinds.clone(),
        comps,
    })
}

/// Relative size of the non-bottom slots of a valence-one tractor, used to
/// verify identities of the form `T = -X ρ`.
fn top_slot_residual(h: &WeightedField, d: usize) -> f64 {
    let scale = h.comps.max_abs().max(1.0);
    let mut top = 0.0f64;
    for s in 0..=d {
        top = top.max(h.comps.get(&[s]).max_abs());
    }
    top / scale
}

/// Paneitz operator on weight `2 - d/2` densities, extracted from
/// `□ D_A f = -X_A P₄ f`: the composition must put everything in the bottom
/// slot, and `P₄ f` is minus that slot. Fourth order, leading term `Δ²`.
pub fn paneitz(f: &WeightedField, suite: &CurvatureSuite) -> Result<WeightedField> {
    let d = suite.dim;
    if !f.is_scalar() {
        return Err(Error::InvalidArgument(
            "Paneitz operator takes a scalar density".into(),
        ));
    }
    let want = 2.0 - d as f64 / 2.0;
    if (f.weight - want).abs() > 1e-9 {
        return Err(Error::UnsupportedWeight(format!(
            "Paneitz operator needs weight {want}, got {}",
            f.weight
        )));
    }
    let h = box_op(&thomas_d(f, suite)?, suite)?;
    let res = top_slot_residual(&h, d);
    if res > 1e-8 {
        return Err(Error::InternalConsistency(format!(
            "Thomas-D composition leaked {res:.3e} outside the bottom slot"
        )));
    }
    Ok(WeightedField::scalar(
        -2.0 - d as f64 / 2.0,
        h.comps.get(&[d + 1]).scaled(-1.0),
    ))
}

/// The conformally invariant power Laplacian
/// `□_{2k} = D^{A_1}…D^{A_{k-1}} □ D_{A_{k-1}}…D_{A_1}` on weight `k - d/2`
/// tractors; order `2k`, leading term proportional to `Δ^k`. In even
/// dimension only `2k < d` is admissible.
pub fn box2k(v: &WeightedField, k: usize, suite: &CurvatureSuite) -> Result<WeightedField> {
    let d = suite.dim;
    if k == 0 {
        return Err(Error::InvalidArgument(
            "power Laplacian needs k >= 1".into(),
        ));
    }
    if d % 2 == 0 && 2 * k >= d {
        return Err(Error::UnsupportedWeight(format!(
            "power Laplacian order 2k = {} out of range in even dimension {d}",
            2 * k
        )));
    }
    let want = k as f64 - d as f64 / 2.0;
    if (v.weight - want).abs() > 1e-9 {
        return Err(Error::UnsupportedWeight(format!(
            "power Laplacian needs weight {want}, got {}",
            v.weight
        )));
    }
    let mut cur = v.clone();
    for _ in 1..k {
        cur = thomas_d(&cur, suite)?;
    }
    cur = box_op(&cur, suite)?;
    for _ in 1..k {
        cur = thomas_d(&cur, suite)?;
        cur = h_pair(&cur, 0, 1, suite)?;
    }
    Ok(cur)
}

/// Flat-chart proportionality constant of `□_{2k}` against `Δ^k`, measured on
/// `|x|^{2k}` whose k-th flat Laplacian power is the nonzero constant
/// `Π_{j=1..k} 2j(2j+d-2)`.
pub fn box2k_flat_constant(k: usize, d: usize) -> Result<f64> {
    let m = 4 * k + 2;
    let chart = MetricChart::new(
        "flat",
        d,
        vec![1; d],
        Arc::new(move |_x: &[f64], order| {
            let mut g = vec![vec![Jet::constant(d, order, 0.0); d]; d];
            for i in 0..d {
                g[i][i] = Jet::constant(d, order, 1.0);
            }
            Ok(g)
        }),
        Arc::new(|_| true),
    );
    let x: Vec<f64> = (0..d).map(|i| 0.05 + 0.1 * i as f64).collect();
    let suite = CurvatureSuite::at(&chart, &x, m)?;
    let mut sq = Jet::constant(d, 4 * k, 0.0);
    for i in 0..d {
        let xi = Jet::variable(d, 4 * k, i, x[i])?;
        sq = sq.try_add(&xi.try_mul(&xi)?)?;
    }
    let f = sq.powi(k as i32)?;
    let out = box2k(
        &WeightedField::scalar(k as f64 - d as f64 / 2.0, f),
        k,
        &suite,
    )?;
    let mut denom = 1.0;
    for j in 1..=k {
        denom *= 2.0 * j as f64 * (2.0 * j as f64 + d as f64 - 2.0);
    }
    Ok(out.comps.data()[0].value() / denom)
}

/// Curvature of the tractor connection, stored with both tractor axes raised:
/// `κ_ab^{KL}` has the middle block `W_abcj`, the mixed blocks `±C_abc`, and
/// zero top row and column, which makes the skewness `κ^{KL} = -κ^{LK}`
/// manifest. Applying it to a tractor pairs the last axis.
pub struct TractorCurvature {
    pub dim: usize,
    field: WeightedField,
}

impl TractorCurvature {
    /// Assemble `κ` from the Weyl and Cotton tensors of the suite; the jet
    /// order is the Cotton order `m - 3`.
    pub fn at(suite: &CurvatureSuite) -> Result<TractorCurvature> {
        let d = suite.dim;
        let t = suite.metric_order - 3;
        let wl = suite.weyl_lowered()?;
        let mut comps = Components::zeros(&[d, d, d + 2, d + 2], d, t);
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for j in 0..d {
                        comps.set(&[a, b, 1 + c, 1 + j], wl[a][b][c][j].truncated(t)?);
                    }
                    comps.set(&[a, b, 1 + c, d + 1], suite.cotton[a][b][c].clone());
                    comps.set(&[a, b, d + 1, 1 + c], suite.cotton[a][b][c].scaled(-1.0));
                }
            }
        }
        Ok(TractorCurvature {
            dim: d,
            field: WeightedField {
                weight: 0.0,
                kinds: vec![
                    IndexKind::Down,
                    IndexKind::Down,
                    IndexKind::Tractor,
                    IndexKind::Tractor,
                ],
                comps,
            },
        })
    }

    /// The raw weight-0 field `κ_ab^{KL}` with axes `[a, b, K, L]`.
    pub fn as_field(&self) -> &WeightedField {
        &self.field
    }

    /// `[∇_a, ∇_b] V`: contract the input's tractor axis against the second
    /// curvature axis with the tractor metric.
    pub fn apply(&self, v: &Tractor, suite: &CurvatureSuite) -> Result<WeightedField> {
        if v.kinds != [IndexKind::Tractor] {
            return Err(Error::InvalidArgument(
                "tractor curvature applies to valence-one tractors".into(),
            ));
        }
        h_pair(&outer(&self.field, v)?, 3, 4, suite)
    }
}

/// Numeric rank data of `κ` at the base point, viewed as a linear map from
/// the tractor fiber to two-form-valued tractors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EinsteinObstruction {
    /// Rank of the slot matrix; at most `d + 1` since `X` is always killed.
    pub rank: usize,
    /// `d + 2 - rank`.
    pub kernel_dim: usize,
    /// Kernel is exactly the span of `X`: no almost-Einstein scale can exist.
    pub maximal: bool,
}

/// Singular-value rank of the tractor curvature endomorphism at the point.
/// Conformally flat charts give rank 0; a kernel of exactly `span{X}`
/// obstructs every Einstein metric in the conformal class.
pub fn einstein_obstruction_rank(
    kappa: &TractorCurvature,
    suite: &CurvatureSuite,
) -> Result<EinsteinObstruction> {
    let d = kappa.dim;
    let mut pair = DMatrix::<f64>::zeros(d + 2, d + 2);
    pair[(0, d + 1)] = 1.0;
    pair[(d + 1, 0)] = 1.0;
    for i in 0..d {
        for j in 0..d {
            pair[(1 + i, 1 + j)] = suite.ginv[i][j].value();
        }
    }
    let comps = &kappa.as_field().comps;
    let mut endo = DMatrix::<f64>::zeros(d * d * (d + 2), d + 2);
    for a in 0..d {
        for b in 0..d {
            for k in 0..d + 2 {
                let row = (a * d + b) * (d + 2) + k;
                for m in 0..d + 2 {
                    let mut acc = 0.0;
                    for l in 0..d + 2 {
                        acc += comps.get(&[a, b, k, l]).value() * pair[(l, m)];
                    }
                    endo[(row, m)] = acc;
                }
            }
        }
    }
    let sv = endo.svd(false, false).singular_values;
    let smax = sv.iter().fold(0.0f64, |m, s| m.max(*s));
    let rank = sv.iter().filter(|s| **s > 1e-9 * smax.max(1.0)).count();
    Ok(EinsteinObstruction {
        rank,
        kernel_dim: d + 2 - rank,
        maximal: rank == d + 1,
    })
}

/// The W-tractor: a weight `-2` four-tractor assembled from the Weyl, Cotton,
/// and Bach tensors,
/// `(d-4)(Z Z Z Z W - 2 Z Z X_[ Z_] C - 2 X_[ Z_] Z Z C) + 4 X_[ Z_] X_[ Z_] B`,
/// carrying the symmetries of an algebraic Weyl tensor. Needs `d >= 4`; in
/// `d = 4` only the Bach block survives (kept unrenormalized).
pub fn w_tractor(suite: &CurvatureSuite) -> Result<WeightedField> {
    let d = suite.dim;
    if d < 4 {
        return Err(Error::UnsupportedDimension(format!(
            "W-tractor normalization needs dimension >= 4, got {d}"
        )));
    }
    let t = suite.metric_order - 4;
    let wl = suite.weyl_lowered()?;
    let fac = d as f64 - 4.0;
    let mut comps = Components::zeros(&[d + 2, d + 2, d + 2, d + 2], d, t);
    let mut add = |ix: [usize; 4], j: Jet| -> Result<()> {
        comps.set(&ix, comps.get(&ix).try_add(&j)?);
        Ok(())
    };
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                for e in 0..d {
                    add(
                        [1 + a, 1 + b, 1 + c, 1 + e],
                        wl[a][b][c][e].truncated(t)?.scaled(fac),
                    )?;
                }
                let cot = suite.cotton[a][b][c].truncated(t)?;
                add([1 + a, 1 + b, d + 1, 1 + c], cot.scaled(-fac))?;
                add([1 + a, 1 + b, 1 + c, d + 1], cot.scaled(fac))?;
                add([d + 1, 1 + c, 1 + a, 1 + b], cot.scaled(-fac))?;
                add([1 + c, d + 1, 1 + a, 1 + b], cot.scaled(fac))?;
            }
            let bach = suite.bach[a][b].clone();
            add([d + 1, 1 + b, d + 1, 1 + a], bach.clone())?;
            add([d + 1, 1 + b, 1 + a, d + 1], bach.scaled(-1.0))?;
            add([1 + b, d + 1, d + 1, 1 + a], bach.scaled(-1.0))?;
            add([1 + b, d + 1, 1 + a, d + 1], bach)?;
        }
    }
    Ok(WeightedField {
        weight: -2.0,
        kinds: vec![IndexKind::Tractor; 4],
        comps,
    })
}
