//! Boundary calculus of the scale tractor: the degenerate Laplacian `I·D`,
//! the sl(2) operator triple it generates with multiplication by the defining
//! density, tangential powers along the zero locus, and the asymptotic
//! extension solver with its obstruction at integer `h₀ = d + 2w₀`.
//!
//! Everything here works in an adapted chart: the zero locus of the defining
//! density is the slice `x⁰ = 0`, so σ-divisibility is coordinate division on
//! the transverse axis.

use crate::conformal::WeightedField;
use crate::error::Error;
use crate::jets::Jet;
use crate::riemann::{multi_indices, Components, CurvatureSuite};
use crate::tractor::{coupled_laplacian, covariant_derivative, scale_tractor, tractor_metric, Tractor};
use crate::Result;

/// Coefficients below this (relative to the field's own scale) are treated as
/// exact zeros when dividing by a power of the defining density.
const DIVISIBILITY_TOL: f64 = 1e-10;

/// Defining density with its scale tractor `I = D σ / d` and squared length.
///
/// `contracted` marks a null scale (`I² ≡ 0` in the collar): the sl(2)
/// algebra degenerates and `y` becomes `-I·D` without the `1/I²` factor.
pub struct BoundaryContext {
    pub sigma: Jet,
    pub scale: Tractor,
    pub i_squared: Jet,
    pub contracted: bool,
}

impl BoundaryContext {
    pub fn new(sigma: Jet, suite: &CurvatureSuite) -> Result<Self> {
        if sigma.dim() != suite.dim {
            return Err(Error::DimensionMismatch(sigma.dim(), suite.dim));
        }
        let wf = WeightedField::scalar(1.0, sigma.clone());
        let scale = scale_tractor(&wf, suite)?;
        let i2 = tractor_metric(&scale, &scale, suite)?;
        let i_squared = i2.comps.data()[0].clone();
        let contracted =
            i_squared.max_abs() <= DIVISIBILITY_TOL * sigma.max_abs().powi(2).max(1.0);
        Ok(BoundaryContext {
            sigma,
            scale,
            i_squared,
            contracted,
        })
    }
}

/// `I·D f` expanded in the active scale:
///
/// ```text
/// -σ Δf + (d+2w-2) [ (∇ᵃσ)∇ₐf - (w/d)(Δσ) f ] - (2w/d)(d+w-1) σ J f
/// ```
///
/// with the coupled connection when `f` carries tractor axes. Lowers the
/// weight by one and costs two jet orders.
pub fn i_dot_d(
    f: &WeightedField,
    sigma: &Jet,
    suite: &CurvatureSuite,
) -> Result<WeightedField> {
    let d = suite.dim;
    if sigma.dim() != d {
        return Err(Error::DimensionMismatch(sigma.dim(), d));
    }
    let w = f.weight;
    let c = d as f64 + 2.0 * w - 2.0;
    let df = covariant_derivative(f, suite)?;
    let lap = coupled_laplacian(f, suite)?;
    let t = lap.order();
    if sigma.order() < t + 2 {
        return Err(Error::OrderBudget {
            needed: t + 2,
            available: sigma.order(),
            context: "defining density in I·D".into(),
        });
    }
    let st = sigma.truncated(t)?;
    let grad: Vec<Jet> = (0..d)
        .map(|a| sigma.partial(a).and_then(|j| j.truncated(t)))
        .collect::<Result<_>>()?;
    // Plain second derivatives suffice for Δσ: σ is a scalar density and its
    // own-scale derivative is coordinate differentiation.
    let sig_field = WeightedField::scalar(1.0, sigma.truncated(t + 2)?);
    let lap_sigma = coupled_laplacian(&sig_field, suite)?
        .comps
        .data()[0]
        .truncated(t)?;
    let ginvt: Vec<Vec<Jet>> = suite
        .ginv
        .iter()
        .map(|row| row.iter().map(|e| e.truncated(t)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let mut grad_up = vec![st.zero_like(); d];
    for a in 0..d {
        for b in 0..d {
            grad_up[a] = grad_up[a].try_add(&ginvt[a][b].try_mul(&grad[b])?)?;
        }
    }
    let jt = suite.j.truncated(t)?;
    let sj = st.try_mul(&jt)?;
    let ft = f.comps.truncated(t)?;
    let dft = df.comps.truncated(t)?;
    let mut out = Components::zeros(f.comps.sizes(), ft.data()[0].dim(), t);
    for ix in multi_indices(f.comps.sizes()) {
        let mut acc = st.try_mul(lap.comps.get(&ix))?.scaled(-1.0);
        let mut transport = lap_sigma.try_mul(ft.get(&ix))?.scaled(-w / d as f64);
        for a in 0..d {
            let mut dx = vec![a];
            dx.extend_from_slice(&ix);
            transport = transport.try_add(&grad_up[a].try_mul(dft.get(&dx))?)?;
        }
        acc = acc.try_add(&transport.scaled(c))?;
        let curv = sj
            .try_mul(ft.get(&ix))?
            .scaled(-2.0 * w / d as f64 * (d as f64 + w - 1.0));
        out.set(&ix, acc.try_add(&curv)?);
    }
    Ok(WeightedField {
        weight: w - 1.0,
        kinds: f.kinds.clone(),
        comps: out,
    })
}

/// Raising operator of the boundary algebra: multiplication by the defining
/// density, weight +1.
pub fn op_x(f: &WeightedField, ctx: &BoundaryContext) -> Result<WeightedField> {
    f.mul_density(&WeightedField::scalar(1.0, ctx.sigma.clone()))
}

/// Lowering operator: `y = -(1/I²) I·D`, or `-I·D` when the scale is null.
pub fn op_y(
    f: &WeightedField,
    ctx: &BoundaryContext,
    suite: &CurvatureSuite,
) -> Result<WeightedField> {
    let idd = i_dot_d(f, &ctx.sigma, suite)?;
    if ctx.contracted {
        return Ok(idd.scaled(-1.0));
    }
    let t = idd.order().min(ctx.i_squared.order());
    let inv = ctx.i_squared.truncated(t)?.recip()?;
    idd.truncated(t)?
        .mul_density(&WeightedField::scalar(0.0, inv))
        .map(|v| v.scaled(-1.0))
}

/// Weight operator `h = d + 2w` (as an affine action: scalar on each weight).
pub fn op_h(f: &WeightedField, dim: usize) -> WeightedField {
    f.scaled(dim as f64 + 2.0 * f.weight)
}

/// `k`-th tangential power `P_k = y^k` on fields of weight `(k - n)/2` with
/// `n = d - 1`. Along the zero locus the result is insensitive to how the
/// argument extends off it.
pub fn tangential_power(
    f: &WeightedField,
    k: usize,
    ctx: &BoundaryContext,
    suite: &CurvatureSuite,
) -> Result<WeightedField> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "tangential power needs k >= 1".into(),
        ));
    }
    if ctx.contracted {
        return Err(Error::DegenerateHypersurface(
            "tangential powers need a scale tractor of nonzero length".into(),
        ));
    }
    let n = suite.dim as f64 - 1.0;
    let want = (k as f64 - n) / 2.0;
    if (f.weight - want).abs() > 1e-9 {
        return Err(Error::UnsupportedWeight(format!(
            "tangential power k = {k} in dimension {} needs weight {want}, got {}",
            suite.dim, f.weight
        )));
    }
    let mut cur = f.clone();
    for _ in 0..k {
        cur = op_y(&cur, ctx, suite)?;
    }
    Ok(cur)
}

/// Jet of the `x⁰^k` coefficient in the transverse expansion: a jet on the
/// slice (one dimension lower) whose tangential order drops by `k`.
pub fn transverse_coefficient(j: &Jet, k: usize) -> Result<Jet> {
    if j.order() < k {
        return Err(Error::OrderBudget {
            needed: k,
            available: j.order(),
            context: "transverse expansion coefficient".into(),
        });
    }
    let mut sliced = j.clone();
    for _ in 0..k {
        sliced = sliced.div_axis(0, f64::INFINITY)?;
    }
    // Division by the plain coordinate absorbs the k! of the Taylor factor.
    sliced.restrict_axis(0)
}

fn low_transverse_max(j: &Jet, ell: usize) -> f64 {
    let mut worst = 0.0f64;
    for (r, &c) in j.coeffs().iter().enumerate() {
        if (j.index_at(r)[0] as usize) < ell {
            worst = worst.max(c.abs());
        }
    }
    worst
}

/// Divide by `σ^ell` where `σ = x⁰ · (unit)`: coordinate division on the
/// transverse axis followed by the inverse unit power. Errors when the low
/// transverse coefficients are not zero to tolerance.
fn divide_sigma_power(
    f: &WeightedField,
    unit: &Jet,
    ell: usize,
) -> Result<WeightedField> {
    if ell == 0 {
        return Ok(f.clone());
    }
    let scale = f.comps.max_abs().max(1.0);
    let tol = DIVISIBILITY_TOL * scale;
    let mut comps = f.comps.truncated(f.order())?;
    for e in comps.data_mut() {
        let mut j = e.clone();
        for _ in 0..ell {
            j = j.div_axis(0, tol).map_err(|err| {
                Error::InternalConsistency(format!(
                    "residual not divisible by the defining density to order {ell}: {err}"
                ))
            })?;
        }
        *e = j;
    }
    let t = comps.order();
    let uinv = unit.truncated(t)?.recip()?.powi(ell as i32)?;
    for e in comps.data_mut() {
        *e = e.try_mul(&uinv)?;
    }
    Ok(WeightedField {
        weight: f.weight - ell as f64,
        kinds: f.kinds.clone(),
        comps,
    })
}

/// Asymptotic expansion data for `I·D f = O(σ^achieved)`.
///
/// `coeffs[i]` is `f_i`, extended off the zero locus as a constant in the
/// transverse coordinate; `total` is `Σ σ^i f_i` at the surviving jet order.
/// When the critical order `h₀ - 2` is reached the raw obstruction density
/// `[σ^{-(h₀-2)} y f^{(h₀-2)}]` (value on the zero locus, constant-extended)
/// is recorded; `halted` says whether its size stopped the solve.
pub struct ExtensionState {
    pub w0: f64,
    pub h0: f64,
    pub coeffs: Vec<WeightedField>,
    pub total: WeightedField,
    pub achieved: usize,
    pub obstruction: Option<WeightedField>,
    pub halted: bool,
}

/// Verdict of [`residual_order`]: whether `I·D f` vanishes to the requested
/// transverse order, the worst offending low coefficient, and the leading
/// `x⁰^ell` coefficient as a field on the slice.
pub struct ResidualReport {
    pub vanishes: bool,
    pub worst_low: f64,
    pub leading: Components,
}

/// Check `I·D f = O(σ^ell)` at a point of the zero locus by inspecting the
/// transverse Taylor coefficients of the residual.
pub fn residual_order(
    f: &WeightedField,
    ctx: &BoundaryContext,
    suite: &CurvatureSuite,
    ell: usize,
) -> Result<ResidualReport> {
    let r = i_dot_d(f, &ctx.sigma, suite)?;
    if r.order() < ell {
        return Err(Error::OrderBudget {
            needed: ell,
            available: r.order(),
            context: "transverse order of the I·D residual".into(),
        });
    }
    let scale = r.comps.max_abs().max(1.0);
    let mut worst = 0.0f64;
    for e in r.comps.data() {
        worst = worst.max(low_transverse_max(e, ell));
    }
    let dim = suite.dim;
    let mut leading = Components::zeros(r.comps.sizes(), dim - 1, r.order() - ell);
    for ix in multi_indices(r.comps.sizes()) {
        leading.set(&ix, transverse_coefficient(r.comps.get(&ix), ell)?);
    }
    Ok(ResidualReport {
        vanishes: worst <= 1e-8 * scale,
        worst_low: worst,
        leading,
    })
}

/// Solve `I·D f = O(σ^target)` for the transverse expansion of `f` with data
/// `f₀`, one order at a time:
///
/// ```text
/// f_{ℓ+1}|_Σ = [σ^{-ℓ} y f^{(ℓ)}]|_Σ / ((ℓ+1)(h₀-ℓ-2))
/// ```
///
/// Each coefficient is extended off the zero locus as a constant in the
/// transverse coordinate (any extension gives the same restrictions). At the
/// critical order `ℓ = h₀ - 2` (integer `h₀ ≥ 2`, detected within 1e-6) the
/// division degenerates: the raw residual density is recorded as the
/// obstruction, and the solve continues with a zero `f_{h₀-1}` only when the
/// obstruction vanishes to tolerance.
pub fn solve_extension(
    f0: &WeightedField,
    ctx: &BoundaryContext,
    suite: &CurvatureSuite,
    target: usize,
) -> Result<ExtensionState> {
    let d = suite.dim as f64;
    let w0 = f0.weight;
    let h0 = d + 2.0 * w0;
    let critical = if (h0 - h0.round()).abs() < 1e-6 && h0.round() >= 2.0 {
        Some(h0.round() as usize - 2)
    } else {
        None
    };
    // Each step costs two orders for y plus ell for the division.
    let needed: usize = (0..target).map(|ell| 2 + ell).sum();
    if f0.order() < needed {
        return Err(Error::OrderBudget {
            needed,
            available: f0.order(),
            context: format!("extension solve to order {target}"),
        });
    }
    let sig_scale = ctx.sigma.max_abs().max(1.0);
    let unit = ctx
        .sigma
        .div_axis(0, DIVISIBILITY_TOL * sig_scale)
        .map_err(|_| {
            Error::DomainViolation(
                "extension solving expects an adapted chart with the zero locus at x⁰ = 0"
                    .into(),
            )
        })?;
    if unit.value().abs() <= DIVISIBILITY_TOL * sig_scale {
        return Err(Error::DegenerateHypersurface(
            "defining density has vanishing transverse derivative".into(),
        ));
    }
    let data_scale = f0.comps.max_abs().max(1.0);
    let mut coeffs = vec![f0.clone()];
    let mut total = f0.clone();
    let mut obstruction = None;
    let mut halted = false;
    let mut achieved = 0;
    for ell in 0..target {
        let r = op_y(&total, ctx, suite)?;
        let q = divide_sigma_power(&r, &unit, ell)?;
        let t = q.order();
        let mut rest = Components::zeros(q.comps.sizes(), suite.dim, t);
        for ix in multi_indices(q.comps.sizes()) {
            rest.set(&ix, q.comps.get(&ix).restrict_axis(0)?.insert_axis(0)?);
        }
        let on_sigma = WeightedField {
            weight: q.weight,
            kinds: q.kinds.clone(),
            comps: rest,
        };
        let fnext = if critical == Some(ell) {
            obstruction = Some(on_sigma.clone());
            if on_sigma.comps.max_abs() > 1e-7 * data_scale {
                halted = true;
                achieved = ell;
                break;
            }
            // Free coefficient at the critical order; default to zero.
            WeightedField {
                weight: q.weight,
                kinds: q.kinds.clone(),
                comps: Components::zeros(q.comps.sizes(), suite.dim, t),
            }
        } else {
            let denom = (ell as f64 + 1.0) * (h0 - ell as f64 - 2.0);
            on_sigma.scaled(1.0 / denom)
        };
        let sig_pow = WeightedField::scalar(
            ell as f64 + 1.0,
            ctx.sigma.truncated(t)?.powi(ell as i32 + 1)?,
        );
        total = total
            .truncated(t)?
            .try_add(&fnext.mul_density(&sig_pow)?)?;
        coeffs.push(fnext);
        achieved = ell + 1;
    }
    Ok(ExtensionState {
        w0,
        h0,
        coeffs,
        total,
        achieved,
        obstruction,
        halted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemann::MetricChart;
    use std::sync::Arc;

    fn flat_suite(dim: usize, x: &[f64], m: usize) -> CurvatureSuite {
        let chart = MetricChart::new(
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
        );
        CurvatureSuite::at(&chart, x, m).unwrap()
    }

    #[test]
    fn transverse_coefficients_read_off_the_taylor_tail() {
        // j = x0 (3 + x1) + 5 x0^2
        let x0 = Jet::variable(3, 4, 0, 0.0).unwrap();
        let x1 = Jet::variable(3, 4, 1, 0.0).unwrap();
        let j = x0
            .try_mul(&x1.add_scalar(3.0))
            .unwrap()
            .try_add(&x0.try_mul(&x0).unwrap().scaled(5.0))
            .unwrap();
        let c0 = transverse_coefficient(&j, 0).unwrap();
        assert!(c0.max_abs() < 1e-15);
        let c1 = transverse_coefficient(&j, 1).unwrap();
        assert!((c1.value() - 3.0).abs() < 1e-15);
        assert!((c1.coeff(&[1, 0]) - 1.0).abs() < 1e-15);
        let c2 = transverse_coefficient(&j, 2).unwrap();
        assert!((c2.value() - 5.0).abs() < 1e-15);
        assert!(matches!(
            transverse_coefficient(&j, 5),
            Err(Error::OrderBudget { .. })
        ));
    }

    #[test]
    fn operator_triple_tracks_weights_and_guards_the_chart() {
        let d = 3;
        let x = [0.0, 0.2, -0.1];
        let suite = flat_suite(d, &x, 6);
        let sigma = Jet::variable(d, 6, 0, 0.0).unwrap();
        let ctx = BoundaryContext::new(sigma.clone(), &suite).unwrap();
        assert!(!ctx.contracted);
        let f = WeightedField::scalar(0.5, Jet::constant(d, 6, 2.0));
        assert!((op_x(&f, &ctx).unwrap().weight - 1.5).abs() < 1e-12);
        assert!((op_y(&f, &ctx, &suite).unwrap().weight + 0.5).abs() < 1e-12);
        assert!((op_h(&f, d).comps.get(&[] as &[usize]).value() - 8.0).abs() < 1e-12);

        // Too small a jet budget for the requested depth.
        let small = WeightedField::scalar(0.5, Jet::constant(d, 3, 1.0));
        assert!(matches!(
            solve_extension(&small, &ctx, &suite, 3),
            Err(Error::OrderBudget { .. })
        ));
        // A density that does not vanish on the slice x0 = 0.
        let off = BoundaryContext::new(sigma.add_scalar(1.0), &suite).unwrap();
        assert!(matches!(
            solve_extension(&f, &off, &suite, 1),
            Err(Error::DomainViolation(_))
        ));
        // A density vanishing to second order has a degenerate zero locus.
        let sq = BoundaryContext::new(sigma.try_mul(&sigma).unwrap(), &suite).unwrap();
        assert!(matches!(
            solve_extension(&f, &sq, &suite, 1),
            Err(Error::DegenerateHypersurface(_))
        ));
    }
}
