//! Conformally weighted fields and rescaling laws.
//!
//! A weight-`w` density is always handled through its trivialization against
//! an active scale (a metric chart): the stored jets are the true-function
//! components in that scale, and changing scale by a positive factor `Ω`
//! multiplies them by `Ω^w` (plus index mixing for tractor slots, handled in
//! the tractor module). This makes every covariance statement a literal
//! equality of jet arrays, which the `*_residual` functions here evaluate:
//! they build both scales explicitly and return the normalized mismatch.
//!
//! In its own scale the covariant derivative of a density is the plain
//! partial of the trivialized component; the weight surfaces only when
//! comparing scales, via `∇̂_a τ = ∇_a τ + w Υ_a τ` with `Υ_a = Ω^{-1} ∂_a Ω`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jets::Jet;
use crate::riemann::{
    multi_indices, tensor_cov_deriv, Components, CurvatureSuite, IndexKind, Mat, MetricChart,
    ScalarGenerator,
};
use crate::util::Poly;

/// Pointwise data of a conformal rescaling: the factor `Ω` and the one-form
/// `Υ_a = Ω^{-1} ∂_a Ω` (one jet order below `Ω`).
pub struct ConformalFactor {
    pub omega: Jet,
    pub ups: Vec<Jet>,
}

impl ConformalFactor {
    pub fn new(omega: Jet) -> Result<ConformalFactor> {
        if omega.value() <= 0.0 {
            return Err(Error::DomainViolation(format!(
                "conformal factor must be positive, constant term {}",
                omega.value()
            )));
        }
        let dim = omega.dim();
        let inv = omega.truncated(omega.order().saturating_sub(1))?.recip()?;
        let ups = (0..dim)
            .map(|a| Ok(omega.partial(a)?.try_mul(&inv)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(ConformalFactor { omega, ups })
    }

    /// `Ω^w` at a requested order.
    pub fn power(&self, w: f64, order: usize) -> Result<Jet> {
        self.omega.truncated(order)?.powf(w)
    }

    /// `Υ^a = g^{ab} Υ_b` in the given scale, at the order of `Υ`.
    pub fn ups_raised(&self, ginv: &Mat) -> Result<Vec<Jet>> {
        let t = self.ups[0].order();
        let d = self.ups.len();
        (0..d)
            .map(|a| {
                let mut acc = self.ups[0].zero_like();
                for b in 0..d {
                    acc = acc.try_add(&ginv[a][b].truncated(t)?.try_mul(&self.ups[b])?)?;
                }
                Ok(acc)
            })
            .collect()
    }
}

/// Scale factor of the form `exp(p(x))` for a fixed polynomial `p`; always
/// positive, analytic everywhere, and cheap to evaluate as a jet.
pub fn exp_poly_factor(p: Poly) -> ScalarGenerator {
    Arc::new(move |x: &[f64], order| Ok(p.eval_jet(x, order)?.exp()))
}

/// New chart carrying `ĝ = Ω² g`, with the domain restricted to where the
/// factor stays positive.
pub fn rescale_metric(
    chart: &MetricChart,
    omega: ScalarGenerator,
    name: impl Into<String>,
) -> MetricChart {
    let dim = chart.dim;
    let gen_omega = omega.clone();
    let base = chart.clone();
    let generator = Arc::new(move |x: &[f64], order: usize| {
        let g = base.metric_at(x, order)?;
        let om = gen_omega(x, order)?;
        if om.value() <= 0.0 {
            return Err(Error::DomainViolation(format!(
                "conformal factor not positive at {x:?}"
            )));
        }
        let om2 = om.try_mul(&om)?;
        let mut out = Vec::with_capacity(dim);
        for row in &g {
            out.push(
                row.iter()
                    .map(|e| om2.try_mul(e))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(out)
    });
    let dom_omega = omega;
    let base_dom = chart.clone();
    let domain = Arc::new(move |x: &[f64]| {
        base_dom.in_domain(x) && dom_omega(x, 0).map(|j| j.value() > 0.0).unwrap_or(false)
    });
    MetricChart::new(name, dim, chart.signature.clone(), generator, domain)
}

/// Everything needed to compare the two sides of a conformal transformation
/// law at one point: curvature suites in both scales plus the factor's jets.
pub struct ScalePair {
    pub base: CurvatureSuite,
    pub hat: CurvatureSuite,
    pub factor: ConformalFactor,
}

impl ScalePair {
    pub fn at(
        chart: &MetricChart,
        omega: &ScalarGenerator,
        x: &[f64],
        metric_order: usize,
    ) -> Result<ScalePair> {
        let base = CurvatureSuite::at(chart, x, metric_order)?;
        let hat_chart = rescale_metric(chart, omega.clone(), format!("{}^", chart.name));
        let hat = CurvatureSuite::at(&hat_chart, x, metric_order)?;
        let factor = ConformalFactor::new(omega(x, metric_order)?)?;
        Ok(ScalePair { base, hat, factor })
    }
}

/// Normalized mismatch of two component arrays: the largest coefficient
/// difference over `max(1, scale)` where the scale is the largest coefficient
/// of either side.
pub fn residual(a: &Components, b: &Components) -> Result<f64> {
    let diff = a.try_sub(b)?;
    Ok(diff.max_abs() / a.max_abs().max(b.max_abs()).max(1.0))
}

fn residual_jet(a: &Jet, b: &Jet) -> Result<f64> {
    Ok(a.try_sub(b)?.max_abs() / a.max_abs().max(b.max_abs()).max(1.0))
}

/// Transformation of the Levi-Civita connection on a weight-0 vector field:
/// `∇̂_a v^b = ∇_a v^b + Υ_a v^b - Υ^b v_a + Υ^c v_c δ_a^b`.
pub fn vector_transform_residual(pair: &ScalePair, v: &Components) -> Result<f64> {
    let d = pair.base.dim;
    let lhs = tensor_cov_deriv(v, &[IndexKind::Up], &pair.hat.gamma)?;
    let base_grad = tensor_cov_deriv(v, &[IndexKind::Up], &pair.base.gamma)?;
    let t = lhs.order();
    let ups: Vec<Jet> = pair
        .factor
        .ups
        .iter()
        .map(|u| u.truncated(t))
        .collect::<Result<_>>()?;
    let upsr: Vec<Jet> = pair
        .factor
        .ups_raised(&pair.base.ginv)?
        .iter()
        .map(|u| u.truncated(t))
        .collect::<Result<_>>()?;
    let vt = v.truncated(t)?;
    // v with the index lowered by the base metric.
    let mut vlow = Vec::with_capacity(d);
    for a in 0..d {
        let mut acc = vt.data()[0].zero_like();
        for b in 0..d {
            acc = acc.try_add(&pair.base.g[a][b].truncated(t)?.try_mul(vt.get(&[b]))?)?;
        }
        vlow.push(acc);
    }
    let mut upsdotv = vt.data()[0].zero_like();
    for c in 0..d {
        upsdotv = upsdotv.try_add(&ups[c].try_mul(vt.get(&[c]))?)?;
    }
    let rhs = Components::from_fn(&[d, d], |ix| {
        let (a, b) = (ix[0], ix[1]);
        let mut acc = base_grad.get(&[a, b]).clone();
        acc = acc.try_add(&ups[a].try_mul(vt.get(&[b])).unwrap()).unwrap();
        acc = acc.try_sub(&upsr[b].try_mul(&vlow[a]).unwrap()).unwrap();
        if a == b {
            acc = acc.try_add(&upsdotv).unwrap();
        }
        acc
    });
    residual(&lhs, &rhs)
}

/// Transformation on a weight-0 one-form:
/// `∇̂_a ω_b = ∇_a ω_b - Υ_a ω_b - Υ_b ω_a + Υ^c ω_c g_ab`.
pub fn oneform_transform_residual(pair: &ScalePair, om: &Components) -> Result<f64> {
    let d = pair.base.dim;
    let lhs = tensor_cov_deriv(om, &[IndexKind::Down], &pair.hat.gamma)?;
    let base_grad = tensor_cov_deriv(om, &[IndexKind::Down], &pair.base.gamma)?;
    let t = lhs.order();
    let ups: Vec<Jet> = pair
        .factor
        .ups
        .iter()
        .map(|u| u.truncated(t))
        .collect::<Result<_>>()?;
    let upsr = pair.factor.ups_raised(&pair.base.ginv)?;
    let ot = om.truncated(t)?;
    let mut upsdoto = ot.data()[0].zero_like();
    for c in 0..d {
        upsdoto = upsdoto.try_add(&upsr[c].truncated(t)?.try_mul(ot.get(&[c]))?)?;
    }
    let rhs = Components::from_fn(&[d, d], |ix| {
        let (a, b) = (ix[0], ix[1]);
        let mut acc = base_grad.get(&[a, b]).clone();
        acc = acc.try_sub(&ups[a].try_mul(ot.get(&[b])).unwrap()).unwrap();
        acc = acc.try_sub(&ups[b].try_mul(ot.get(&[a])).unwrap()).unwrap();
        acc = acc
            .try_add(
                &upsdoto
                    .try_mul(&pair.base.g[a][b].truncated(t).unwrap())
                    .unwrap(),
            )
            .unwrap();
        acc
    });
    residual(&lhs, &rhs)
}

/// Conformal invariance of the skew gradient of a two-form: `∇_[a F_bc]` has
/// identical components in both scales.
pub fn skew_gradient_residual(pair: &ScalePair, f: &Components) -> Result<f64> {
    let d = pair.base.dim;
    let kinds = [IndexKind::Down, IndexKind::Down];
    let skew = |grad: &Components| -> Components {
        Components::from_fn(&[d, d, d], |ix| {
            let (a, b, c) = (ix[0], ix[1], ix[2]);
            // Antisymmetrization over (a,b,c); F itself is skew, so six terms
            // collapse to the three cyclic gradients.
            grad.get(&[a, b, c])
                .try_add(grad.get(&[b, c, a]))
                .unwrap()
                .try_add(grad.get(&[c, a, b]))
                .unwrap()
                .scaled(1.0 / 3.0)
        })
    };
    let lhs = skew(&tensor_cov_deriv(f, &kinds, &pair.hat.gamma)?);
    let rhs = skew(&tensor_cov_deriv(f, &kinds, &pair.base.gamma)?);
    residual(&lhs, &rhs)
}

/// Divergence law for a weight-0 two-form:
/// `∇̂^b F_bc = Ω^{-2} (∇^b F_bc + (d-4) Υ^d F_dc)`; in d=4 this is the
/// conformal covariance of the Maxwell operator.
pub fn twoform_divergence_residual(pair: &ScalePair, f: &Components) -> Result<f64> {
    let d = pair.base.dim;
    let kinds = [IndexKind::Down, IndexKind::Down];
    let div = |grad: &Components, ginv: &Mat| -> Result<Components> {
        let t = grad.order();
        let mut out = Components::zeros(&[d], grad.data()[0].dim(), t);
        for c in 0..d {
            let mut acc = grad.data()[0].zero_like();
            for a in 0..d {
                for b in 0..d {
                    acc = acc.try_add(&ginv[a][b].truncated(t)?.try_mul(grad.get(&[a, b, c]))?)?;
                }
            }
            out.set(&[c], acc);
        }
        Ok(out)
    };
    let lhs = div(
        &tensor_cov_deriv(f, &kinds, &pair.hat.gamma)?,
        &pair.hat.ginv,
    )?;
    let t = lhs.order();
    let base_div = div(
        &tensor_cov_deriv(f, &kinds, &pair.base.gamma)?,
        &pair.base.ginv,
    )?;
    let upsr = pair.factor.ups_raised(&pair.base.ginv)?;
    let ft = f.truncated(t)?;
    let om2inv = pair.factor.power(-2.0, t)?;
    let rhs = Components::from_fn(&[d], |ix| {
        let c = ix[0];
        let mut acc = base_div.get(&[c]).clone();
        for dd in 0..d {
            let term = upsr[dd]
                .truncated(t)
                .unwrap()
                .try_mul(ft.get(&[dd, c]))
                .unwrap()
                .scaled(d as f64 - 4.0);
            acc = acc.try_add(&term).unwrap();
        }
        om2inv.try_mul(&acc).unwrap()
    });
    residual(&lhs, &rhs)
}

/// Schouten transformation: `P̂_ab = P_ab - ∇_a Υ_b + Υ_a Υ_b - ½ g_ab Υ²`.
pub fn schouten_transform_residual(pair: &ScalePair) -> Result<f64> {
    let d = pair.base.dim;
    let ups_arr = Components::from_fn(&[d], |ix| pair.factor.ups[ix[0]].clone());
    let grad_ups = tensor_cov_deriv(&ups_arr, &[IndexKind::Down], &pair.base.gamma)?;
    let t = grad_ups.order().min(pair.base.sc.order());
    let upsr = pair.factor.ups_raised(&pair.base.ginv)?;
    let mut ups2 = pair.base.sc.truncated(t)?.zero_like();
    for c in 0..d {
        ups2 = ups2.try_add(&upsr[c].truncated(t)?.try_mul(&pair.factor.ups[c].truncated(t)?)?)?;
    }
    let lhs = Components::from_fn(&[d, d], |ix| pair.hat.p[ix[0]][ix[1]].truncated(t).unwrap());
    let rhs = Components::from_fn(&[d, d], |ix| {
        let (a, b) = (ix[0], ix[1]);
        let mut acc = pair.base.p[a][b].truncated(t).unwrap();
        acc = acc.try_sub(&grad_ups.get(&[a, b]).truncated(t).unwrap()).unwrap();
        acc = acc
            .try_add(
                &pair.factor.ups[a]
                    .truncated(t)
                    .unwrap()
                    .try_mul(&pair.factor.ups[b].truncated(t).unwrap())
                    .unwrap(),
            )
            .unwrap();
        acc = acc
            .try_sub(
                &pair.base.g[a][b]
                    .truncated(t)
                    .unwrap()
                    .try_mul(&ups2)
                    .unwrap()
                    .scaled(0.5),
            )
            .unwrap();
        acc
    });
    residual(&lhs, &rhs)
}

/// Schouten-trace transformation: `Ĵ = Ω^{-2} (J - ∇^a Υ_a + (1 - d/2) Υ²)`.
pub fn j_transform_residual(pair: &ScalePair) -> Result<f64> {
    let d = pair.base.dim;
    let ups_arr = Components::from_fn(&[d], |ix| pair.factor.ups[ix[0]].clone());
    let grad_ups = tensor_cov_deriv(&ups_arr, &[IndexKind::Down], &pair.base.gamma)?;
    let t = grad_ups.order().min(pair.base.sc.order());
    let mut div_ups = pair.base.sc.truncated(t)?.zero_like();
    for a in 0..d {
        for b in 0..d {
            div_ups = div_ups.try_add(
                &pair.base.ginv[a][b]
                    .truncated(t)?
                    .try_mul(&grad_ups.get(&[a, b]).truncated(t)?)?,
            )?;
        }
    }
    let upsr = pair.factor.ups_raised(&pair.base.ginv)?;
    let mut ups2 = pair.base.sc.truncated(t)?.zero_like();
    for c in 0..d {
        ups2 = ups2.try_add(&upsr[c].truncated(t)?.try_mul(&pair.factor.ups[c].truncated(t)?)?)?;
    }
    let om2inv = pair.factor.power(-2.0, t)?;
    let inner = pair
        .base
        .j
        .truncated(t)?
        .try_sub(&div_ups)?
        .try_add(&ups2.scaled(1.0 - d as f64 / 2.0))?;
    let rhs = om2inv.try_mul(&inner)?;
    residual_jet(&pair.hat.j.truncated(t)?, &rhs)
}

/// Conformal invariance of the Weyl tensor in the `W_ij^k_l` position.
pub fn weyl_invariance_residual(pair: &ScalePair) -> Result<f64> {
    let d = pair.base.dim;
    let t = pair.hat.sc.order();
    let lhs = Components::from_fn(&[d, d, d, d], |ix| {
        pair.hat.weyl[ix[0]][ix[1]][ix[2]][ix[3]].truncated(t).unwrap()
    });
    let rhs = Components::from_fn(&[d, d, d, d], |ix| {
        pair.base.weyl[ix[0]][ix[1]][ix[2]][ix[3]].truncated(t).unwrap()
    });
    residual(&lhs, &rhs)
}

/// Density derivative law: `Ω^{-w} ∂_a (Ω^w f) = ∂_a f + w Υ_a f` for a
/// weight-w scalar density trivialized in the base scale.
pub fn density_derivative_residual(pair: &ScalePair, f: &Jet, w: f64) -> Result<f64> {
    let d = pair.base.dim;
    let t = f.order() - 1;
    let omw = pair.factor.power(w, f.order())?;
    let hat_comp = omw.try_mul(f)?;
    let om_negw = pair.factor.power(-w, t)?;
    let lhs = Components::from_fn(&[d], |ix| {
        om_negw
            .try_mul(&hat_comp.partial(ix[0]).unwrap())
            .unwrap()
    });
    let rhs = Components::from_fn(&[d], |ix| {
        let a = ix[0];
        f.partial(a)
            .unwrap()
            .try_add(
                &pair.factor.ups[a]
                    .truncated(t)
                    .unwrap()
                    .try_mul(&f.truncated(t).unwrap())
                    .unwrap()
                    .scaled(w),
            )
            .unwrap()
    });
    residual(&lhs, &rhs)
}

/// Conformal covariance of the conformal Laplacian:
/// `Y^ĝ (Ω^{1-d/2} f) = Ω^{-1-d/2} Y^g f` for any scalar `f` trivialized in
/// the base scale.
pub fn yamabe_covariance_residual(pair: &ScalePair, f: &Jet) -> Result<f64> {
    let d = pair.base.dim as f64;
    let w = 1.0 - d / 2.0;
    let base_in = WeightedField::scalar(w, f.clone());
    let base_out = yamabe(&base_in, &pair.base)?;
    let hat_comp = pair.factor.power(w, f.order())?.try_mul(f)?;
    let hat_out = yamabe(&WeightedField::scalar(w, hat_comp), &pair.hat)?;
    let t = hat_out.order().min(base_out.order());
    let rhs = pair
        .factor
        .power(-1.0 - d / 2.0, t)?
        .try_mul(&base_out.comps.data()[0].truncated(t)?)?;
    residual_jet(&hat_out.comps.data()[0].truncated(t)?, &rhs)
}

/// A jet-valued tensor density: components trivialized against an active
/// scale, a conformal weight, and one `IndexKind` per axis. Tensor axes have
/// size `d`; tractor axes have size `d + 2` and are operated on by the
/// tractor module.
#[derive(Clone, Debug)]
pub struct WeightedField {
    pub weight: f64,
    pub kinds: Vec<IndexKind>,
    pub comps: Components,
}

impl WeightedField {
    pub fn new(weight: f64, kinds: Vec<IndexKind>, comps: Components, dim: usize) -> Result<Self> {
        if kinds.len() != comps.rank() {
            return Err(Error::InvalidArgument(format!(
                "{} index kinds for rank {}",
                kinds.len(),
                comps.rank()
            )));
        }
        for (kind, size) in kinds.iter().zip(comps.sizes()) {
            let want = match kind {
                IndexKind::Up | IndexKind::Down => dim,
                IndexKind::Tractor => dim + 2,
            };
            if *size != want {
                return Err(Error::InvalidArgument(format!(
                    "axis size {size} does not match {kind:?} in dimension {dim}"
                )));
            }
        }
        Ok(WeightedField {
            weight,
            kinds,
            comps,
        })
    }

    pub fn scalar(weight: f64, jet: Jet) -> WeightedField {
        WeightedField {
            weight,
            kinds: Vec::new(),
            comps: Components::scalar(jet),
        }
    }

    pub fn order(&self) -> usize {
        self.comps.order()
    }

    pub fn rank(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn truncated(&self, order: usize) -> Result<WeightedField> {
        Ok(WeightedField {
            weight: self.weight,
            kinds: self.kinds.clone(),
            comps: self.comps.truncated(order)?,
        })
    }

    pub fn try_add(&self, rhs: &WeightedField) -> Result<WeightedField> {
        if (self.weight - rhs.weight).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "cannot add weights {} and {}",
                self.weight, rhs.weight
            )));
        }
        if self.kinds != rhs.kinds {
            return Err(Error::InvalidArgument(
                "cannot add fields of different valence".into(),
            ));
        }
        Ok(WeightedField {
            weight: self.weight,
            kinds: self.kinds.clone(),
            comps: self.comps.try_add(&rhs.comps)?,
        })
    }

    pub fn try_sub(&self, rhs: &WeightedField) -> Result<WeightedField> {
        self.try_add(&rhs.scaled(-1.0))
    }

    pub fn scaled(&self, s: f64) -> WeightedField {
        WeightedField {
            weight: self.weight,
            kinds: self.kinds.clone(),
            comps: self.comps.scaled(s),
        }
    }

    /// Multiply by a scalar density; weights add.
    pub fn mul_density(&self, s: &WeightedField) -> Result<WeightedField> {
        if !s.is_scalar() {
            return Err(Error::InvalidArgument(
                "mul_density expects a scalar density".into(),
            ));
        }
        let t = self.order().min(s.order());
        let sj = s.comps.data()[0].truncated(t)?;
        let mut comps = self.comps.truncated(t)?;
        for e in comps.data_mut() {
            *e = e.try_mul(&sj)?;
        }
        Ok(WeightedField {
            weight: self.weight + s.weight,
            kinds: self.kinds.clone(),
            comps,
        })
    }

    /// Levi-Civita covariant derivative in the active scale: prepends a Down
    /// index, weight unchanged (densities differentiate as their trivialized
    /// components). Tractor axes are rejected here; the tractor module owns
    /// the full connection.
    pub fn cov_deriv(&self, suite: &CurvatureSuite) -> Result<WeightedField> {
        let comps = tensor_cov_deriv(&self.comps, &self.kinds, &suite.gamma)?;
        let mut kinds = vec![IndexKind::Down];
        kinds.extend_from_slice(&self.kinds);
        Ok(WeightedField {
            weight: self.weight,
            kinds,
            comps,
        })
    }

    /// Lower an Up tensor index with the conformal metric: weight rises by 2.
    pub fn lower_index(&self, pos: usize, suite: &CurvatureSuite) -> Result<WeightedField> {
        self.flip_index(pos, suite, IndexKind::Up, IndexKind::Down, 2.0)
    }

    /// Raise a Down tensor index with the inverse conformal metric: weight
    /// drops by 2.
    pub fn raise_index(&self, pos: usize, suite: &CurvatureSuite) -> Result<WeightedField> {
        self.flip_index(pos, suite, IndexKind::Down, IndexKind::Up, -2.0)
    }

    fn flip_index(
        &self,
        pos: usize,
        suite: &CurvatureSuite,
        from: IndexKind,
        to: IndexKind,
        dw: f64,
    ) -> Result<WeightedField> {
        if pos >= self.rank() || self.kinds[pos] != from {
            return Err(Error::InvalidArgument(format!(
                "index {pos} is not {from:?}"
            )));
        }
        let d = suite.dim;
        let t = self.order();
        let metric = if dw > 0.0 { &suite.g } else { &suite.ginv };
        let mut comps = Components::zeros(self.comps.sizes(), suite.g[0][0].dim(), t);
        for ix in multi_indices(self.comps.sizes()) {
            let mut acc = self.comps.data()[0].zero_like();
            let mut jx = ix.clone();
            for c in 0..d {
                jx[pos] = c;
                acc = acc.try_add(&metric[ix[pos]][c].truncated(t)?.try_mul(self.comps.get(&jx))?)?;
            }
            comps.set(&ix, acc);
        }
        let mut kinds = self.kinds.clone();
        kinds[pos] = to;
        Ok(WeightedField {
            weight: self.weight + dw,
            kinds,
            comps,
        })
    }

    /// Contract an Up tensor index against a Down tensor index; weight is
    /// unchanged.
    pub fn contract(&self, pos_up: usize, pos_down: usize) -> Result<WeightedField> {
        if pos_up == pos_down
            || self.kinds.get(pos_up) != Some(&IndexKind::Up)
            || self.kinds.get(pos_down) != Some(&IndexKind::Down)
        {
            return Err(Error::InvalidArgument(format!(
                "contract needs one Up and one Down index, got positions {pos_up}, {pos_down}"
            )));
        }
        let d = self.comps.sizes()[pos_up];
        let keep: Vec<usize> = (0..self.rank())
            .filter(|p| *p != pos_up && *p != pos_down)
            .collect();
        let out_sizes: Vec<usize> = keep.iter().map(|&p| self.comps.sizes()[p]).collect();
        let out_kinds: Vec<IndexKind> = keep.iter().map(|&p| self.kinds[p]).collect();
        let dim_jets = self.comps.data()[0].dim();
        let mut comps = Components::zeros(&out_sizes, dim_jets, self.order());
        for ox in multi_indices(&out_sizes) {
            let mut acc = self.comps.data()[0].zero_like();
            let mut full = vec![0usize; self.rank()];
            for (slot, &p) in keep.iter().enumerate() {
                full[p] = ox[slot];
            }
            for c in 0..d {
                full[pos_up] = c;
                full[pos_down] = c;
                acc = acc.try_add(self.comps.get(&full))?;
            }
            comps.set(&ox, acc);
        }
        Ok(WeightedField {
            weight: self.weight,
            kinds: out_kinds,
            comps,
        })
    }

    /// Re-trivialize a field with only tensor indices into the scale
    /// `ĝ = Ω² g`: components scale by `Ω^w`. Tractor indices need the slot
    /// mixing owned by the tractor module.
    pub fn retrivialize_tensor(&self, factor: &ConformalFactor) -> Result<WeightedField> {
        if self.kinds.contains(&IndexKind::Tractor) {
            return Err(Error::InvalidArgument(
                "tractor index in tensor retrivialization".into(),
            ));
        }
        let t = self.order().min(factor.omega.order());
        let omw = factor.power(self.weight, t)?;
        let mut comps = self.comps.truncated(t)?;
        for e in comps.data_mut() {
            *e = e.try_mul(&omw)?;
        }
        Ok(WeightedField {
            weight: self.weight,
            kinds: self.kinds.clone(),
            comps,
        })
    }
}

/// Laplace-Beltrami operator on a scalar jet in the given scale:
/// `Δf = g^{ab} (∂_a ∂_b - Γ^c_ab ∂_c) f`, two jet orders below `f`.
pub fn laplace_beltrami(f: &Jet, suite: &CurvatureSuite) -> Result<Jet> {
    let d = suite.dim;
    let grad = tensor_cov_deriv(&Components::scalar(f.clone()), &[], &suite.gamma)?;
    let hess = tensor_cov_deriv(&grad, &[IndexKind::Down], &suite.gamma)?;
    let t = hess.order();
    let mut acc = hess.data()[0].zero_like();
    for a in 0..d {
        for b in 0..d {
            acc = acc.try_add(&suite.ginv[a][b].truncated(t)?.try_mul(hess.get(&[a, b]))?)?;
        }
    }
    Ok(acc)
}

/// The conformal Laplacian `Y f = Δf + (1 - d/2) J f` on densities of weight
/// exactly `1 - d/2`; output has weight `-1 - d/2`.
pub fn yamabe(f: &WeightedField, suite: &CurvatureSuite) -> Result<WeightedField> {
    let d = suite.dim as f64;
    if !f.is_scalar() {
        return Err(Error::InvalidArgument(
            "conformal Laplacian acts on scalar densities".into(),
        ));
    }
    let want = 1.0 - d / 2.0;
    if (f.weight - want).abs() > 1e-9 {
        return Err(Error::UnsupportedWeight(format!(
            "conformal Laplacian needs weight {want}, got {}",
            f.weight
        )));
    }
    let jet = &f.comps.data()[0];
    let lap = laplace_beltrami(jet, suite)?;
    let t = lap.order().min(suite.j.order());
    let out = lap
        .truncated(t)?
        .try_add(&suite.j.truncated(t)?.try_mul(&jet.truncated(t)?)?.scaled(want))?;
    Ok(WeightedField::scalar(f.weight - 2.0, out))
}

/// The almost-Einstein operator on a weight-1 scalar density:
/// `A_ab σ = ∇_(a ∇_b)0 σ + P_(ab)0 σ` (trace-free symmetric part); a scale
/// `σ` with `A σ = 0` makes `σ^{-2} g` Einstein off the zero locus.
pub fn almost_einstein_op(sigma: &WeightedField, suite: &CurvatureSuite) -> Result<WeightedField> {
    let d = suite.dim;
    if !sigma.is_scalar() {
        return Err(Error::InvalidArgument(
            "almost-Einstein operator acts on scalar densities".into(),
        ));
    }
    if (sigma.weight - 1.0).abs() > 1e-9 {
        return Err(Error::UnsupportedWeight(format!(
            "almost-Einstein operator needs weight 1, got {}",
            sigma.weight
        )));
    }
    let jet = &sigma.comps.data()[0];
    let grad = tensor_cov_deriv(&Components::scalar(jet.clone()), &[], &suite.gamma)?;
    let hess = tensor_cov_deriv(&grad, &[IndexKind::Down], &suite.gamma)?;
    let t = hess.order().min(suite.sc.order());
    let st = jet.truncated(t)?;
    let mut full = Components::zeros(&[d, d], jet.dim(), t);
    for a in 0..d {
        for b in 0..d {
            let sym = hess
                .get(&[a, b])
                .truncated(t)?
                .try_add(&hess.get(&[b, a]).truncated(t)?)?
                .scaled(0.5);
            let pd = suite.p[a][b]
                .truncated(t)?
                .try_add(&suite.p[b][a].truncated(t)?)?
                .scaled(0.5);
            full.set(&[a, b], sym.try_add(&pd.try_mul(&st)?)?);
        }
    }
    // Remove the conformal-metric trace.
    let mut tr = full.data()[0].zero_like();
    for a in 0..d {
        for b in 0..d {
            tr = tr.try_add(&suite.ginv[a][b].truncated(t)?.try_mul(full.get(&[a, b]))?)?;
        }
    }
    let tr = tr.scaled(1.0 / d as f64);
    let mut out = Components::zeros(&[d, d], jet.dim(), t);
    for a in 0..d {
        for b in 0..d {
            out.set(
                &[a, b],
                full.get(&[a, b])
                    .try_sub(&suite.g[a][b].truncated(t)?.try_mul(&tr)?)?,
            );
        }
    }
    WeightedField::new(1.0, vec![IndexKind::Down, IndexKind::Down], out, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemann::MetricChart;
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

    #[test]
    fn rescaling_flat_to_sphere() {
        // Ω = 2/(1+|x|²) turns the flat chart into the round sphere.
        let dim = 4;
        let omega: ScalarGenerator = Arc::new(move |x: &[f64], order| {
            let mut sq = Jet::constant(dim, order, 0.0);
            for i in 0..dim {
                let xi = Jet::variable(dim, order, i, x[i])?;
                sq = sq.try_add(&xi.try_mul(&xi)?)?;
            }
            Ok(sq.add_scalar(1.0).recip()?.scaled(2.0))
        });
        let chart = rescale_metric(&flat_chart(dim), omega, "sphere");
        let s = CurvatureSuite::at(&chart, &[0.3, -0.2, 0.1, 0.4], 4).unwrap();
        assert!(s.sc.add_scalar(-12.0).max_abs() < 1e-9 * 12.0);
    }

    #[test]
    fn yamabe_weight_guard_and_flat_value() {
        let dim = 4;
        let chart = flat_chart(dim);
        let suite = CurvatureSuite::at(&chart, &[0.1, 0.2, 0.3, -0.1], 5).unwrap();
        let x0 = Jet::variable(dim, 5, 0, 0.1).unwrap();
        // f = x1^2: on the flat chart Y f = Δ f = 2 (J = 0).
        let f = WeightedField::scalar(1.0 - dim as f64 / 2.0, (&x0 * &x0).clone());
        let y = yamabe(&f, &suite).unwrap();
        assert!(y.comps.data()[0].add_scalar(-2.0).max_abs() < 1e-11);
        assert!((y.weight - (-1.0 - dim as f64 / 2.0)).abs() < 1e-12);
        let wrong = WeightedField::scalar(0.0, x0.clone());
        assert!(matches!(
            yamabe(&wrong, &suite),
            Err(Error::UnsupportedWeight(_))
        ));
    }

    #[test]
    fn almost_einstein_flat_examples() {
        let dim = 4;
        let chart = flat_chart(dim);
        let suite = CurvatureSuite::at(&chart, &[0.2, -0.3, 0.1, 0.5], 5).unwrap();
        // σ = (1 - |x|²)/2 is a flat-chart almost-Einstein scale.
        let mut sq = Jet::constant(dim, 5, 0.0);
        for i in 0..dim {
            let xi = Jet::variable(dim, 5, i, suite.point[i]).unwrap();
            sq = sq.try_add(&xi.try_mul(&xi).unwrap()).unwrap();
        }
        let sigma = WeightedField::scalar(1.0, (-sq).add_scalar(1.0).scaled(0.5));
        let a = almost_einstein_op(&sigma, &suite).unwrap();
        assert!(a.comps.max_abs() < 1e-11, "hyperbolic scale residual");

        // σ = 1 (flat is Einstein).
        let one = WeightedField::scalar(1.0, Jet::constant(dim, 5, 1.0));
        let a = almost_einstein_op(&one, &suite).unwrap();
        assert!(a.comps.max_abs() < 1e-12);

        // σ = x1 x2 is not almost-Einstein.
        let x1 = Jet::variable(dim, 5, 0, suite.point[0]).unwrap();
        let x2 = Jet::variable(dim, 5, 1, suite.point[1]).unwrap();
        let bad = WeightedField::scalar(1.0, &x1 * &x2);
        let a = almost_einstein_op(&bad, &suite).unwrap();
        assert!(a.comps.max_abs() > 0.1);
    }

    #[test]
    fn weight_bookkeeping_on_raise_lower() {
        let dim = 3;
        let chart = flat_chart(dim);
        let suite = CurvatureSuite::at(&chart, &[0.0; 3], 4).unwrap();
        let comps = Components::from_fn(&[dim], |ix| {
            Jet::constant(dim, 4, ix[0] as f64 + 1.0)
        });
        let v = WeightedField::new(0.5, vec![IndexKind::Up], comps, dim).unwrap();
        let low = v.lower_index(0, &suite).unwrap();
        assert!((low.weight - 2.5).abs() < 1e-12);
        let back = low.raise_index(0, &suite).unwrap();
        assert!((back.weight - 0.5).abs() < 1e-12);
        let diff = back.comps.try_sub(&v.comps).unwrap();
        assert!(diff.max_abs() < 1e-12);
    }
}
