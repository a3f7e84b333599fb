//! Extrinsic conformal geometry of nondegenerate embedded hypersurfaces.
//!
//! Hypersurfaces are handled in adapted charts where the surface is the
//! coordinate slice x1 = 0 and a defining density vanishes there. All
//! extrinsic objects are computed as collar jets from a unit conormal that is
//! normalized identically in a neighborhood, so that projector identities
//! hold exactly as jets and restriction to the surface is the axis-0 slice.
//! The sign epsilon = |n|^2 = +-1 keys every +-/-+ in the shape formulas:
//! the upper sign is the spacelike-conormal case epsilon = +1.

use std::sync::Arc;

use crate::conformal::WeightedField;
use crate::error::{Error, Result};
use crate::jets::Jet;
use crate::riemann::{
    tensor_cov_deriv, Components, CurvatureSuite, IndexKind, MetricChart, ScalarGenerator,
};
use crate::tractor::{
    covariant_derivative, h_pair, outer, standard_tractor, tractor_metric, Tractor,
};

/// A chart in which the hypersurface of interest is the slice x1 = 0,
/// together with a defining density for it.
#[derive(Clone)]
pub struct AdaptedChart {
    pub chart: MetricChart,
    /// Defining density, trivialized in the chart's scale; vanishes on the
    /// slice x1 = 0 with nonzero, nowhere-null gradient there.
    pub sigma: ScalarGenerator,
}

impl AdaptedChart {
    pub fn new(chart: MetricChart, sigma: ScalarGenerator) -> AdaptedChart {
        AdaptedChart { chart, sigma }
    }

    /// The chart of the hypersurface itself: coordinates x2..xd with the
    /// pullback metric. `eps` selects which sign leaves the signature.
    pub fn induced_chart(&self, eps: f64) -> Result<MetricChart> {
        let dim = self.chart.dim;
        if dim < 2 {
            return Err(Error::UnsupportedDimension(format!(
                "cannot induce a chart from dimension {dim}"
            )));
        }
        let want: i8 = if eps > 0.0 { 1 } else { -1 };
        let mut signature = self.chart.signature.clone();
        match signature.iter().position(|s| *s == want) {
            Some(p) => {
                signature.remove(p);
            }
            None => {
                return Err(Error::InternalConsistency(format!(
                    "no {want:+} direction in the ambient signature to remove"
                )))
            }
        }
        let ambient = self.chart.clone();
        let generator = Arc::new(move |y: &[f64], order: usize| {
            let mut x = Vec::with_capacity(y.len() + 1);
            x.push(0.0);
            x.extend_from_slice(y);
            let g = ambient.metric_at(&x, order)?;
            let mut out = vec![vec![Jet::constant(y.len(), order, 0.0); y.len()]; y.len()];
            for i in 0..y.len() {
                for j in 0..y.len() {
                    out[i][j] = g[i + 1][j + 1].restrict_axis(0)?;
                }
            }
            Ok(out)
        });
        let domain_chart = self.chart.clone();
        let domain = Arc::new(move |y: &[f64]| {
            let mut x = Vec::with_capacity(y.len() + 1);
            x.push(0.0);
            x.extend_from_slice(y);
            domain_chart.in_domain(&x)
        });
        Ok(MetricChart::new(
            format!("{}|x1=0", self.chart.name),
            dim - 1,
            signature,
            generator,
            domain,
        ))
    }
}

fn tr(j: &Jet, t: usize) -> Result<Jet> {
    j.truncated(t)
}

/// Raised conormal n^a at the given truncation order.
fn raise(n: &[Jet], suite: &CurvatureSuite, t: usize) -> Result<Vec<Jet>> {
    let d = suite.dim;
    let mut up = vec![Jet::constant(d, t, 0.0); d];
    for a in 0..d {
        for b in 0..d {
            up[a] = up[a].try_add(&tr(&suite.ginv[a][b], t)?.try_mul(&tr(&n[b], t)?)?)?;
        }
    }
    Ok(up)
}

/// Tangential projector Pi^c_a = delta^c_a - eps n^c n_a as jets.
fn tangent_projector(n: &[Jet], eps: f64, suite: &CurvatureSuite, t: usize) -> Result<Vec<Vec<Jet>>> {
    let d = suite.dim;
    let up = raise(n, suite, t)?;
    let mut pi = vec![vec![Jet::constant(d, t, 0.0); d]; d];
    for c in 0..d {
        for a in 0..d {
            pi[c][a] = up[c].try_mul(&tr(&n[a], t)?)?.scaled(-eps);
            if c == a {
                pi[c][a] = pi[c][a].add_scalar(1.0);
            }
        }
    }
    Ok(pi)
}

/// Unit conormal field from a defining density: n_a = grad sigma normalized
/// to |n|^2 = eps in a collar. Returns (n, eps).
pub fn conormal(sigma: &Jet, suite: &CurvatureSuite) -> Result<(Vec<Jet>, f64)> {
    let d = suite.dim;
    if sigma.dim() != d {
        return Err(Error::DimensionMismatch(sigma.dim(), d));
    }
    if sigma.order() == 0 {
        return Err(Error::OrderBudget {
            needed: 1,
            available: 0,
            context: "gradient of the defining density".into(),
        });
    }
    let t = (sigma.order().min(suite.metric_order + 1) - 1).min(suite.metric_order);
    let mut grad = Vec::with_capacity(d);
    for a in 0..d {
        grad.push(sigma.partial(a)?.truncated(t)?);
    }
    let mut q = Jet::constant(d, t, 0.0);
    for a in 0..d {
        for b in 0..d {
            q = q.try_add(&tr(&suite.ginv[a][b], t)?.try_mul(&grad[a])?.try_mul(&grad[b])?)?;
        }
    }
    let scale = grad.iter().fold(0.0f64, |m, j| m.max(j.value().abs()));
    if q.value().abs() <= 1e-10 * scale.max(1.0) * scale.max(1.0) {
        return Err(Error::DegenerateHypersurface(format!(
            "conormal is null: |grad sigma|^2 = {:.3e}",
            q.value()
        )));
    }
    let eps = q.value().signum();
    let inv_len = q.scaled(eps).sqrt()?.recip()?;
    let n = grad
        .iter()
        .map(|g| g.try_mul(&inv_len))
        .collect::<Result<Vec<_>>>()?;
    Ok((n, eps))
}

/// Second fundamental form from a collar-normalized conormal:
/// L_ab = Pi^c_a grad_c n_b, its trace-free part, and the mean curvature.
/// Returns (L, Lo, H).
pub fn second_fundamental(
    n: &[Jet],
    eps: f64,
    suite: &CurvatureSuite,
) -> Result<(Components, Components, Jet)> {
    let d = suite.dim;
    let nfield = Components::from_fn(&[d], |ix| n[ix[0]].clone());
    let dn = tensor_cov_deriv(&nfield, &[IndexKind::Down], &suite.gamma)?;
    let t = dn.order();
    let pi = tangent_projector(n, eps, suite, t)?;
    let mut l = Components::zeros(&[d, d], d, t);
    for a in 0..d {
        for b in 0..d {
            let mut acc = Jet::constant(d, t, 0.0);
            for c in 0..d {
                acc = acc.try_add(&pi[c][a].try_mul(dn.get(&[c, b]))?)?;
            }
            l.set(&[a, b], acc);
        }
    }
    let mut mean = Jet::constant(d, t, 0.0);
    for a in 0..d {
        for b in 0..d {
            mean = mean.try_add(&tr(&suite.ginv[a][b], t)?.try_mul(l.get(&[a, b]))?)?;
        }
    }
    let mean = mean.scaled(1.0 / (d as f64 - 1.0));
    let mut l0 = Components::zeros(&[d, d], d, t);
    for a in 0..d {
        for b in 0..d {
            // Induced metric g_ab - eps n_a n_b, so that Lo stays tangential.
            let gbar = tr(&suite.g[a][b], t)?
                .try_add(&tr(&n[a], t)?.try_mul(&tr(&n[b], t)?)?.scaled(-eps))?;
            l0.set(&[a, b], l.get(&[a, b]).try_sub(&gbar.try_mul(&mean)?)?);
        }
    }
    Ok((l, l0, mean))
}

/// The normal tractor N = (0, n_a, -H), of weight 0 and squared length eps.
pub fn normal_tractor(n: &[Jet], mean: &Jet, suite: &CurvatureSuite) -> Result<Tractor> {
    let d = suite.dim;
    let t = mean.order().min(n[0].order());
    let zero = Jet::constant(d, t, 0.0);
    let nn = n.iter().map(|j| tr(j, t)).collect::<Result<Vec<_>>>()?;
    standard_tractor(0.0, &zero, &nn, &mean.truncated(t)?.scaled(-1.0))
}

/// Tractor shape form: the tangentially projected tractor derivative of the
/// normal tractor. Slots (0, Lo_ab, -(1/(d-2)) div Lo_a) along the surface.
pub fn tractor_shape_form(
    normal: &Tractor,
    n: &[Jet],
    eps: f64,
    suite: &CurvatureSuite,
) -> Result<WeightedField> {
    let d = suite.dim;
    let dn = covariant_derivative(normal, suite)?;
    let t = dn.order();
    let pi = tangent_projector(n, eps, suite, t)?;
    let comps = Components::from_fn(&[d, d + 2], |ix| {
        let mut acc = Jet::constant(d, t, 0.0);
        for c in 0..d {
            acc = acc
                .try_add(&pi[c][ix[0]].try_mul(dn.comps.get(&[c, ix[1]])).unwrap())
                .unwrap();
        }
        acc
    });
    WeightedField::new(0.0, vec![IndexKind::Down, IndexKind::Tractor], comps, d)
}

/// Fialkow tensor F_ab = (W_acbd n^c n^d + Lo^2_ab - |Lo|^2/(2(d-2)) gbar_ab)
/// / (d-3). Undefined in ambient dimension 3.
pub fn fialkow(l0: &Components, n: &[Jet], eps: f64, suite: &CurvatureSuite) -> Result<Components> {
    let d = suite.dim;
    if d < 4 {
        return Err(Error::UnsupportedDimension(format!(
            "Fialkow tensor needs ambient dimension at least 4, got {d}"
        )));
    }
    let wl = suite.weyl_lowered()?;
    let t = wl[0][0][0][0].order().min(l0.order());
    let up = raise(n, suite, t)?;
    let mut f = Components::zeros(&[d, d], d, t);
    for a in 0..d {
        for b in 0..d {
            let mut acc = Jet::constant(d, t, 0.0);
            for c in 0..d {
                for e in 0..d {
                    acc = acc.try_add(&tr(&wl[a][c][b][e], t)?.try_mul(&up[c])?.try_mul(&up[e])?)?;
                }
            }
            f.set(&[a, b], acc);
        }
    }
    // Lo_a^c Lo_cb and |Lo|^2.
    let mut l0up = Components::zeros(&[d, d], d, t);
    for a in 0..d {
        for c in 0..d {
            let mut acc = Jet::constant(d, t, 0.0);
            for e in 0..d {
                acc = acc.try_add(&tr(&suite.ginv[c][e], t)?.try_mul(&tr(l0.get(&[a, e]), t)?)?)?;
            }
            l0up.set(&[a, c], acc);
        }
    }
    let mut norm2 = Jet::constant(d, t, 0.0);
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                for e in 0..d {
                    norm2 = norm2.try_add(
                        &tr(&suite.ginv[a][c], t)?
                            .try_mul(&tr(&suite.ginv[b][e], t)?)?
                            .try_mul(&tr(l0.get(&[a, b]), t)?)?
                            .try_mul(&tr(l0.get(&[c, e]), t)?)?,
                    )?;
                }
            }
        }
    }
    for a in 0..d {
        for b in 0..d {
            let mut acc = f.get(&[a, b]).clone();
            let mut sq = Jet::constant(d, t, 0.0);
            for c in 0..d {
                sq = sq.try_add(&l0up.get(&[a, c]).try_mul(&tr(l0.get(&[c, b]), t)?)?)?;
            }
            acc = acc.try_add(&sq)?;
            let gbar = tr(&suite.g[a][b], t)?
                .try_add(&tr(&n[a], t)?.try_mul(&tr(&n[b], t)?)?.scaled(-eps))?;
            acc = acc.try_add(
                &gbar
                    .try_mul(&norm2)?
                    .scaled(-1.0 / (2.0 * (d as f64 - 2.0))),
            )?;
            f.set(&[a, b], acc.scaled(1.0 / (d as f64 - 3.0)));
        }
    }
    Ok(f)
}

/// All extrinsic data of the surface through the evaluation point.
pub struct ExtrinsicData {
    pub dim: usize,
    pub eps: f64,
    /// Collar-normalized unit conormal n_a (weight 1).
    pub conormal: Vec<Jet>,
    /// Second fundamental form L_ab.
    pub second: Components,
    /// Trace-free part of L.
    pub second_tf: Components,
    /// Mean curvature H (weight -1).
    pub mean: Jet,
    /// Normal tractor N_A.
    pub normal: Tractor,
    /// Tractor shape form, the tangential tractor derivative of N.
    pub shape: WeightedField,
    /// Fialkow tensor; None in ambient dimension 3 where it is undefined.
    pub fialkow: Option<Components>,
}

impl ExtrinsicData {
    /// Assemble at a point of the surface. The defining density must vanish
    /// at the jet's center.
    pub fn at(sigma: &Jet, suite: &CurvatureSuite) -> Result<ExtrinsicData> {
        if sigma.value().abs() > 1e-8 * sigma.max_abs().max(1.0) {
            return Err(Error::DomainViolation(format!(
                "evaluation point is off the surface: sigma = {:.3e}",
                sigma.value()
            )));
        }
        let (n, eps) = conormal(sigma, suite)?;
        let (l, l0, mean) = second_fundamental(&n, eps, suite)?;
        let normal = normal_tractor(&n, &mean, suite)?;
        let shape = tractor_shape_form(&normal, &n, eps, suite)?;
        let fk = if suite.dim >= 4 {
            Some(fialkow(&l0, &n, eps, suite)?)
        } else {
            None
        };
        Ok(ExtrinsicData {
            dim: suite.dim,
            eps,
            conormal: n,
            second: l,
            second_tf: l0,
            mean,
            normal,
            shape,
            fialkow: fk,
        })
    }
}

/// Identify a surface tractor inside the ambient bundle: orthogonal
/// projection along N followed by the mean-curvature shear of the slots and
/// pullback of the middle index. The result lives on the induced chart.
pub fn project_to_intrinsic(
    v: &Tractor,
    ext: &ExtrinsicData,
    suite: &CurvatureSuite,
) -> Result<Tractor> {
    let d = suite.dim;
    if v.rank() != 1 || v.kinds[0] != IndexKind::Tractor {
        return Err(Error::InvalidArgument(
            "intrinsic projection expects a valence-1 tractor".into(),
        ));
    }
    let t = v.order().min(ext.normal.order()).min(ext.mean.order());
    let hnv = tractor_metric(&ext.normal.truncated(t)?, &v.truncated(t)?, suite)?;
    let nfield = ext.normal.truncated(t)?;
    let vperp = v
        .truncated(t)?
        .try_add(&nfield.mul_density(&hnv)?.scaled(-ext.eps))?;
    let h = ext.mean.truncated(t)?;
    let sigma = vperp.comps.get(&[0]).clone();
    let rho = vperp.comps.get(&[d + 1]).try_add(
        &h.try_mul(&h)?
            .try_mul(&sigma)?
            .scaled(0.5 * ext.eps),
    )?;
    let mut mu = Vec::with_capacity(d - 1);
    for b in 1..d {
        mu.push(
            vperp
                .comps
                .get(&[1 + b])
                .try_sub(
                    &h.try_mul(&tr(&ext.conormal[b], t)?)?
                        .try_mul(&sigma)?
                        .scaled(ext.eps),
                )?
                .restrict_axis(0)?,
        );
    }
    standard_tractor(v.weight, &sigma.restrict_axis(0)?, &mu, &rho.restrict_axis(0)?)
}

/// Extend a surface tractor to an ambient one through the inverse slot map:
/// tangential completion of the middle slot plus the mean-curvature shear.
pub fn ambient_extension(
    v: &Tractor,
    ext: &ExtrinsicData,
    suite: &CurvatureSuite,
) -> Result<Tractor> {
    let d = suite.dim;
    if v.rank() != 1 || v.comps.sizes() != [d + 1] {
        return Err(Error::InvalidArgument(format!(
            "ambient extension expects a surface tractor with {} slots",
            d + 1
        )));
    }
    let t = v.order().min(ext.mean.order());
    let sigma = v.comps.get(&[0]).insert_axis(0)?.truncated(t)?;
    let mut mu = vec![Jet::constant(d, t, 0.0); d];
    for i in 0..d - 1 {
        mu[1 + i] = v.comps.get(&[1 + i]).insert_axis(0)?.truncated(t)?;
    }
    // Solve the x1 component from tangentiality n^a mu_a = 0.
    let up = raise(&ext.conormal, suite, t)?;
    if up[0].value().abs() < 1e-10 {
        return Err(Error::InternalConsistency(
            "conormal has no x1 component on an adapted chart".into(),
        ));
    }
    let mut dot = Jet::constant(d, t, 0.0);
    for b in 1..d {
        dot = dot.try_add(&up[b].try_mul(&mu[b])?)?;
    }
    mu[0] = dot.try_mul(&up[0].recip()?)?.scaled(-1.0);
    let h = ext.mean.truncated(t)?;
    for b in 0..d {
        mu[b] = mu[b].try_add(
            &h.try_mul(&tr(&ext.conormal[b], t)?)?
                .try_mul(&sigma)?
                .scaled(ext.eps),
        )?;
    }
    let rho = v
        .comps
        .get(&[d])
        .insert_axis(0)?
        .truncated(t)?
        .try_add(&h.try_mul(&h)?.try_mul(&sigma)?.scaled(-0.5 * ext.eps))?;
    standard_tractor(v.weight, &sigma, &mu, &rho)
}

/// Tractor contorsion of the surface, stored with both tractor axes in the
/// raised-pairing convention: S_a^{BC} = Xbar^B Zbar^{Cc} F_ac - (B <-> C).
pub fn tractor_contorsion(f_bar: &Components, isuite: &CurvatureSuite) -> Result<WeightedField> {
    let nd = isuite.dim;
    if f_bar.sizes() != [nd, nd] {
        return Err(Error::DimensionMismatch(f_bar.sizes()[0], nd));
    }
    let t = f_bar.order();
    let comps = Components::from_fn(&[nd, nd + 2, nd + 2], |ix| {
        let (a, bb, cc) = (ix[0], ix[1], ix[2]);
        if bb == nd + 1 && (1..=nd).contains(&cc) {
            f_bar.get(&[a, cc - 1]).clone()
        } else if cc == nd + 1 && (1..=nd).contains(&bb) {
            f_bar.get(&[a, bb - 1]).scaled(-1.0)
        } else {
            Jet::constant(nd, t, 0.0)
        }
    });
    WeightedField::new(
        0.0,
        vec![IndexKind::Down, IndexKind::Tractor, IndexKind::Tractor],
        comps,
        nd,
    )
}

/// Both halves of the tractor Gauss formula at a surface point, returned as
/// a normalized residual: the tangential part of the ambient derivative of an
/// extended surface tractor against the intrinsic derivative plus contorsion,
/// and the normal part against the shape form.
pub fn tractor_gauss_residual(
    adapted: &AdaptedChart,
    y: &[f64],
    order: usize,
    v: &Tractor,
) -> Result<f64> {
    let d = adapted.chart.dim;
    if d < 4 {
        return Err(Error::UnsupportedDimension(format!(
            "the Gauss formula test needs ambient dimension at least 4, got {d}"
        )));
    }
    let mut x = Vec::with_capacity(d);
    x.push(0.0);
    x.extend_from_slice(y);
    let asuite = CurvatureSuite::at(&adapted.chart, &x, order)?;
    let sj = (adapted.sigma)(&x, order)?;
    let ext = ExtrinsicData::at(&sj, &asuite)?;
    let ichart = adapted.induced_chart(ext.eps)?;
    let isuite = CurvatureSuite::at(&ichart, y, order)?;

    let vamb = ambient_extension(v, &ext, &asuite)?;
    let dv = covariant_derivative(&vamb, &asuite)?;
    let t = dv.order();
    let pi = tangent_projector(&ext.conormal, ext.eps, &asuite, t)?;

    // Tangential half: project each pulled-back direction to the intrinsic
    // bundle and compare with nablabar V - eps S_a V.
    let dbar = covariant_derivative(v, &isuite)?;
    let f_amb = ext
        .fialkow
        .as_ref()
        .ok_or_else(|| Error::UnsupportedDimension("no Fialkow tensor in dimension 3".into()))?;
    let f_bar = Components::from_fn(&[d - 1, d - 1], |ix| {
        f_amb
            .get(&[1 + ix[0], 1 + ix[1]])
            .restrict_axis(0)
            .unwrap()
    });
    let s = tractor_contorsion(&f_bar, &isuite)?;
    let sv = h_pair(
        &outer(&s.truncated(v.order().min(s.order()))?, &v.truncated(v.order().min(s.order()))?)?,
        2,
        3,
        &isuite,
    )?;

    let mut worst = 0.0f64;
    let mut scale = 1.0f64;
    for a in 1..d {
        // Pi-projected ambient derivative in the tangential direction a.
        let slice = Components::from_fn(&[d + 2], |ix| {
            let mut acc = Jet::constant(d, t, 0.0);
            for c in 0..d {
                acc = acc
                    .try_add(&pi[c][a].try_mul(dv.comps.get(&[c, ix[0]])).unwrap())
                    .unwrap();
            }
            acc
        });
        let slice = WeightedField::new(v.weight, vec![IndexKind::Tractor], slice, d)?;
        let proj = project_to_intrinsic(&slice, &ext, &asuite)?;
        let tt = proj
            .order()
            .min(dbar.order())
            .min(sv.order());
        for ss in 0..=d {
            let lhs = proj.comps.get(&[ss]).truncated(tt)?;
            let rhs = dbar
                .comps
                .get(&[a - 1, ss])
                .truncated(tt)?
                .try_add(&sv.comps.get(&[a - 1, ss]).truncated(tt)?.scaled(-ext.eps))?;
            worst = worst.max(lhs.try_sub(&rhs)?.max_abs());
            scale = scale.max(lhs.max_abs()).max(rhs.max_abs());
        }
        // Normal half: h(N, projected derivative) = -shape_a . V.
        let nslice = WeightedField::new(
            v.weight,
            vec![IndexKind::Tractor],
            Components::from_fn(&[d + 2], |ix| {
                let mut acc = Jet::constant(d, t, 0.0);
                for c in 0..d {
                    acc = acc
                        .try_add(&pi[c][a].try_mul(dv.comps.get(&[c, ix[0]])).unwrap())
                        .unwrap();
                }
                acc
            }),
            d,
        )?;
        let hn = tractor_metric(&ext.normal.truncated(t)?, &nslice, &asuite)?;
        let lv = h_pair(
            &outer(&ext.shape.truncated(t.min(ext.shape.order()))?, &vamb.truncated(t.min(ext.shape.order()))?)?,
            1,
            2,
            &asuite,
        )?;
        let tt2 = hn.order().min(lv.order());
        let lhs = hn.comps.get(&[] as &[usize]).truncated(tt2)?.restrict_axis(0)?;
        let rhs = lv
            .comps
            .get(&[a])
            .truncated(tt2)?
            .restrict_axis(0)?
            .scaled(-1.0);
        worst = worst.max(lhs.try_sub(&rhs)?.max_abs());
        scale = scale.max(lhs.max_abs()).max(rhs.max_abs());
    }
    Ok(worst / scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_chart(dim: usize, signature: Vec<i8>) -> MetricChart {
        let sig = signature.clone();
        MetricChart::new(
            "flat",
            dim,
            signature,
            Arc::new(move |_x: &[f64], order| {
                let mut g = vec![vec![Jet::constant(dim, order, 0.0); dim]; dim];
                for i in 0..dim {
                    g[i][i] = Jet::constant(dim, order, sig[i] as f64);
                }
                Ok(g)
            }),
            Arc::new(|_| true),
        )
    }

    #[test]
    fn hyperplane_in_flat_space_has_trivial_extrinsic_data() {
        let d = 4;
        let chart = flat_chart(d, vec![1; d]);
        let x = [0.0, 0.3, -0.2, 0.5];
        let suite = CurvatureSuite::at(&chart, &x, 5).unwrap();
        let sigma = Jet::variable(d, 5, 0, 0.0).unwrap();
        let ext = ExtrinsicData::at(&sigma, &suite).unwrap();
        assert_eq!(ext.eps, 1.0);
        assert!((ext.conormal[0].value() - 1.0).abs() < 1e-14);
        for b in 1..d {
            assert!(ext.conormal[b].max_abs() < 1e-14);
        }
        assert!(ext.second.max_abs() < 1e-14);
        assert!(ext.mean.max_abs() < 1e-14);
        assert!(ext.shape.comps.max_abs() < 1e-14);
        // N = (0, dx1, 0) and h(N, N) = 1.
        assert!(ext.normal.comps.get(&[0]).max_abs() < 1e-14);
        assert!((ext.normal.comps.get(&[1]).value() - 1.0).abs() < 1e-14);
        let nn = tractor_metric(&ext.normal, &ext.normal, &suite).unwrap();
        assert!((nn.comps.get(&[] as &[usize]).value() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn timelike_conormal_is_flagged_by_the_sign() {
        let d = 4;
        let mut sig = vec![1; d];
        sig[0] = -1;
        let chart = flat_chart(d, sig);
        let x = [0.0, 0.1, 0.2, 0.3];
        let suite = CurvatureSuite::at(&chart, &x, 4).unwrap();
        let sigma = Jet::variable(d, 4, 0, 0.0).unwrap();
        let (n, eps) = conormal(&sigma, &suite).unwrap();
        assert_eq!(eps, -1.0);
        assert!((n[0].value() - 1.0).abs() < 1e-14);
        let (_, _, mean) = second_fundamental(&n, eps, &suite).unwrap();
        assert!(mean.max_abs() < 1e-13);
    }

    #[test]
    fn null_defining_gradient_is_rejected() {
        let d = 3;
        let mut sig = vec![1; d];
        sig[0] = -1;
        let chart = flat_chart(d, sig);
        let x = [0.2, 0.2, 0.0];
        let suite = CurvatureSuite::at(&chart, &x, 4).unwrap();
        // sigma = t + x has a null gradient in the Minkowski plane.
        let t_coord = Jet::variable(d, 4, 0, 0.2).unwrap();
        let x_coord = Jet::variable(d, 4, 1, 0.2).unwrap();
        let sigma = t_coord.try_sub(&x_coord).unwrap();
        assert!(matches!(
            conormal(&sigma, &suite),
            Err(Error::DegenerateHypersurface(_))
        ));
    }

    #[test]
    fn sphere_through_a_flat_chart_is_umbilic_with_unit_mean_curvature() {
        // Zero locus of sigma = (1 - |x|^2)/2 at a point of the unit sphere.
        let d = 4;
        let chart = flat_chart(d, vec![1; d]);
        let x = [1.0, 0.0, 0.0, 0.0];
        let suite = CurvatureSuite::at(&chart, &x, 5).unwrap();
        let mut sq = Jet::constant(d, 5, 0.0);
        for i in 0..d {
            let xi = Jet::variable(d, 5, i, x[i]).unwrap();
            sq = sq.try_add(&xi.try_mul(&xi).unwrap()).unwrap();
        }
        let sigma = sq.scaled(-0.5).add_scalar(0.5);
        let ext = ExtrinsicData::at(&sigma, &suite).unwrap();
        // n = -x dx at |x| = 1; inward for this sigma.
        assert!((ext.conormal[0].value() + 1.0).abs() < 1e-12);
        // Umbilic: trace-free part vanishes at the point, H = -1 for the
        // inward conormal.
        assert!(ext.second_tf.get(&[1, 1]).value().abs() < 1e-12);
        assert!(ext.second_tf.get(&[2, 3]).value().abs() < 1e-12);
        assert!((ext.mean.value() + 1.0).abs() < 1e-12);
    }
}
