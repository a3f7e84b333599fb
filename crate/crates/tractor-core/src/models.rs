//! Catalog of analytic model geometries with known invariants.
//!
//! Each model is a metric chart, optionally a defining density whose zero
//! locus is conformal infinity, and a record of expected invariants that is
//! re-verified by jet evaluation at registration. On top of the catalog the
//! module houses the residual checker for the conformal field equations
//! (both the first-order scalar/one-form/density system and the equivalent
//! four-equation parallel-scale-tractor system), the curved-orbit
//! classification of a defining density together with its zero-locus
//! hypersurface checks, and the tractor identities attached to Killing
//! fields on static geometries.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::adjoint::KillingCandidate;
use crate::conformal::{self, WeightedField};
use crate::error::{Error, Result};
use crate::hypersurface::{tractor_gauss_residual, AdaptedChart, ExtrinsicData};
use crate::jets::Jet;
use crate::riemann::{
    tensor_cov_deriv, Components, CurvatureSuite, IndexKind, MetricChart, ScalarGenerator,
};
use crate::tractor::{
    covariant_derivative, h_pair, outer, scale_tractor, standard_tractor, tractor_metric,
    TractorCurvature,
};
use crate::util::{rng_for, Poly};

/// Jet-valued vector field on a chart.
pub type VectorGenerator = Arc<dyn Fn(&[f64], usize) -> Result<Vec<Jet>> + Send + Sync>;

/// Description of the zero locus of a defining density.
#[derive(Clone, Debug, PartialEq)]
pub enum ZeroLocus {
    /// The density never vanishes.
    Empty,
    /// A single zero at the chart origin (the density is degenerate there).
    IsolatedOrigin,
    /// The coordinate sphere of the given radius.
    Sphere { radius: f64 },
    /// The coordinate hyperplane `x_{axis+1} = 0`.
    Hyperplane { axis: usize },
    /// Two-sheeted hyperboloid `x1^2 = 1 + (x2^2 + ... + xd^2)` in a chart
    /// whose first coordinate is timelike.
    HyperboloidTwoSheeted,
    /// One-sheeted hyperboloid `x2^2 + ... + xd^2 = 1 + x1^2`.
    HyperboloidOneSheeted,
}

impl ZeroLocus {
    pub fn is_empty(&self) -> bool {
        matches!(self, ZeroLocus::Empty)
    }

    pub fn is_isolated(&self) -> bool {
        matches!(self, ZeroLocus::IsolatedOrigin)
    }

    /// Whether the locus is the straightened slice `x1 = 0`, needed by the
    /// induced-chart machinery.
    pub fn is_straightened(&self) -> bool {
        matches!(self, ZeroLocus::Hyperplane { axis: 0 })
    }

    /// Sample points on the locus. Empty for `Empty`; the origin for
    /// `IsolatedOrigin`.
    pub fn samples(&self, dim: usize, rng: &mut ChaCha8Rng, count: usize) -> Vec<Vec<f64>> {
        let gauss = |rng: &mut ChaCha8Rng| -> f64 {
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        };
        match self {
            ZeroLocus::Empty => Vec::new(),
            ZeroLocus::IsolatedOrigin => vec![vec![0.0; dim]],
            ZeroLocus::Sphere { radius } => (0..count)
                .map(|_| {
                    let mut v: Vec<f64> = (0..dim).map(|_| gauss(rng)).collect();
                    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
                    for a in &mut v {
                        *a *= radius / n;
                    }
                    v
                })
                .collect(),
            ZeroLocus::Hyperplane { axis } => (0..count)
                .map(|_| {
                    let mut v: Vec<f64> =
                        (0..dim).map(|_| rng.gen_range(-0.3..0.3)).collect();
                    v[*axis] = 0.0;
                    v
                })
                .collect(),
            ZeroLocus::HyperboloidTwoSheeted => (0..count)
                .map(|_| {
                    let mut v: Vec<f64> =
                        (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
                    let s: f64 = v[1..].iter().map(|a| a * a).sum();
                    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    v[0] = sign * (1.0 + s).sqrt();
                    v
                })
                .collect(),
            ZeroLocus::HyperboloidOneSheeted => (0..count)
                .map(|_| {
                    let t: f64 = rng.gen_range(-0.5..0.5);
                    let mut dir: Vec<f64> = (0..dim - 1).map(|_| gauss(rng)).collect();
                    let n = dir.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
                    let r = (1.0 + t * t).sqrt();
                    let mut v = Vec::with_capacity(dim);
                    v.push(t);
                    for a in &dir {
                        v.push(a * r / n);
                    }
                    v
                })
                .collect(),
        }
    }
}

/// Invariants a model claims; every `Some` claim and every `true` flag is
/// re-verified numerically at registration and in the test suite.
#[derive(Clone, Debug)]
pub struct ExpectedInvariants {
    /// Constant scalar curvature of the chart metric.
    pub scalar_curvature: Option<f64>,
    /// Constant trace of the Schouten tensor of the chart metric.
    pub j_density: Option<f64>,
    /// Constant squared length of the scale tractor of the defining density.
    pub i_norm: Option<f64>,
    /// Sign of `i_norm`, driving the zero-locus trichotomy.
    pub epsilon: Option<f64>,
    pub zero_locus: ZeroLocus,
    pub conformally_flat: bool,
    /// The defining density satisfies the almost-Einstein equation (its
    /// scale tractor is parallel).
    pub einstein: bool,
}

/// A named analytic geometry: chart, optional defining density, optional
/// distinguished Killing field, claimed invariants, and a sampling box.
#[derive(Clone)]
pub struct ModelGeometry {
    pub name: String,
    pub chart: MetricChart,
    pub sigma: Option<ScalarGenerator>,
    pub killing: Option<VectorGenerator>,
    pub expected: ExpectedInvariants,
    /// Per-coordinate sampling intervals, intersected with the chart domain.
    pub sample_box: Vec<(f64, f64)>,
}

impl ModelGeometry {
    /// Random in-domain points from the sampling box.
    pub fn sample_points(&self, seed: u64, count: usize) -> Vec<Vec<f64>> {
        let mut rng = rng_for(seed, "model-samples");
        let mut out = Vec::with_capacity(count);
        let mut guard = 0usize;
        while out.len() < count && guard < 10_000 * count.max(1) {
            guard += 1;
            let x: Vec<f64> = self
                .sample_box
                .iter()
                .map(|(lo, hi)| rng.gen_range(*lo..*hi))
                .collect();
            if self.chart.in_domain(&x) {
                out.push(x);
            }
        }
        out
    }

    /// Random points on the zero locus of the defining density, restricted
    /// to the chart domain.
    pub fn locus_samples(&self, seed: u64, count: usize) -> Vec<Vec<f64>> {
        let mut rng = rng_for(seed, "model-locus");
        let dim = self.chart.dim;
        self.expected
            .zero_locus
            .samples(dim, &mut rng, count)
            .into_iter()
            .filter(|x| self.chart.in_domain(x))
            .collect()
    }

    /// Curvature suite of the chart metric at a point.
    pub fn suite_at(&self, x: &[f64], order: usize) -> Result<CurvatureSuite> {
        CurvatureSuite::at(&self.chart, x, order)
    }

    /// Re-derive every claimed invariant by jet evaluation at `count` random
    /// points (plus a zero-locus sample when one exists) and return the worst
    /// relative residual.
    pub fn verify_expected(&self, order: usize, seed: u64, count: usize) -> Result<f64> {
        let mut worst = 0.0f64;
        for x in self.sample_points(seed, count) {
            let suite = self.suite_at(&x, order)?;
            if let Some(c) = self.expected.scalar_curvature {
                worst = worst
                    .max(suite.sc.add_scalar(-c).max_abs() / suite.sc.max_abs().max(1.0));
            }
            if let Some(c) = self.expected.j_density {
                worst =
                    worst.max(suite.j.add_scalar(-c).max_abs() / suite.j.max_abs().max(1.0));
            }
            if self.expected.conformally_flat {
                let kappa = TractorCurvature::at(&suite)?;
                let mut rmax = 0.0f64;
                for row in &suite.riemann {
                    for col in row {
                        for plane in col {
                            for e in plane {
                                rmax = rmax.max(e.max_abs());
                            }
                        }
                    }
                }
                worst = worst.max(kappa.as_field().comps.max_abs() / rmax.max(1.0));
            }
            if let Some(sgen) = &self.sigma {
                let sj = sgen(&x, order)?;
                let i_tr = scale_tractor(&WeightedField::scalar(1.0, sj), &suite)?;
                let i2 = tractor_metric(&i_tr, &i_tr, &suite)?;
                if let Some(c) = self.expected.i_norm {
                    worst = worst.max(
                        i2.comps.data()[0].add_scalar(-c).max_abs()
                            / i2.comps.max_abs().max(1.0),
                    );
                    if let Some(eps) = self.expected.epsilon {
                        let want = if c.abs() < 1e-12 { 0.0 } else { c.signum() };
                        if (eps - want).abs() > 1e-12 {
                            worst = worst.max(1.0);
                        }
                    }
                }
                if self.expected.einstein {
                    let di = covariant_derivative(&i_tr, &suite)?;
                    worst = worst
                        .max(di.comps.max_abs() / i_tr.comps.max_abs().max(1.0));
                }
            }
        }
        if let Some(sgen) = &self.sigma {
            for x in self.locus_samples(seed, 2) {
                let sj = sgen(&x, 1)?;
                worst = worst.max(sj.value().abs() / sj.max_abs().max(1.0));
            }
        }
        Ok(worst)
    }
}

fn flat_generator(dim: usize, signature: Vec<i8>) -> impl Fn(&[f64], usize) -> Result<Vec<Vec<Jet>>> {
    move |x: &[f64], order: usize| {
        let mut g = vec![vec![Jet::constant(x.len(), order, 0.0); x.len()]; x.len()];
        for (i, s) in signature.iter().enumerate().take(dim) {
            g[i][i] = Jet::constant(x.len(), order, *s as f64);
        }
        Ok(g)
    }
}

fn flat_chart(dim: usize) -> MetricChart {
    MetricChart::new(
        "flat",
        dim,
        vec![1; dim],
        Arc::new(flat_generator(dim, vec![1; dim])),
        Arc::new(|_| true),
    )
}

fn minkowski_chart(dim: usize) -> MetricChart {
    let mut signature = vec![1i8; dim];
    signature[0] = -1;
    MetricChart::new(
        "minkowski",
        dim,
        signature.clone(),
        Arc::new(flat_generator(dim, signature)),
        Arc::new(|_| true),
    )
}

/// `|x|^2` as a jet, with the given metric signature on the coordinates.
fn quadratic_jet(x: &[f64], order: usize, signs: &[f64]) -> Result<Jet> {
    let d = x.len();
    let mut s = Jet::constant(d, order, 0.0);
    for i in 0..d {
        let xi = Jet::variable(d, order, i, x[i])?;
        s = s.try_add(&xi.try_mul(&xi)?.scaled(signs[i]))?;
    }
    Ok(s)
}

fn conformal_ball_chart(name: &str, dim: usize, locus_sign: f64, max_r2: f64) -> MetricChart {
    MetricChart::new(
        name,
        dim,
        vec![1; dim],
        Arc::new(move |x: &[f64], order: usize| {
            let s = quadratic_jet(x, order, &vec![1.0; x.len()])?;
            let den = s.scaled(locus_sign).add_scalar(1.0).recip()?;
            let conf = den.try_mul(&den)?.scaled(4.0);
            let mut g = vec![vec![Jet::constant(x.len(), order, 0.0); x.len()]; x.len()];
            for i in 0..x.len() {
                g[i][i] = conf.clone();
            }
            Ok(g)
        }),
        Arc::new(move |x: &[f64]| {
            x.iter().map(|v| v * v).sum::<f64>() < max_r2
        }),
    )
}

/// Static anti-de Sitter chart in dimension 4: coordinates (t, r, u, v) with
/// `g = -(1+r^2) dt^2 + dr^2/(1+r^2) + r^2 w (du^2 + dv^2)` where `w` is the
/// round two-sphere factor in stereographic coordinates.
fn static_ads_chart() -> MetricChart {
    MetricChart::new(
        "static-ads",
        4,
        vec![-1, 1, 1, 1],
        Arc::new(move |x: &[f64], order: usize| {
            let d = x.len();
            let r = Jet::variable(d, order, 1, x[1])?;
            let r2 = r.try_mul(&r)?;
            let lapse = r2.add_scalar(1.0);
            let u = Jet::variable(d, order, 2, x[2])?;
            let v = Jet::variable(d, order, 3, x[3])?;
            let s = u.try_mul(&u)?.try_add(&v.try_mul(&v)?)?.add_scalar(1.0);
            let si = s.recip()?;
            let w = si.try_mul(&si)?.scaled(4.0);
            let ang = r2.try_mul(&w)?;
            let mut g = vec![vec![Jet::constant(d, order, 0.0); d]; d];
            g[0][0] = lapse.scaled(-1.0);
            g[1][1] = lapse.recip()?;
            g[2][2] = ang.clone();
            g[3][3] = ang;
            Ok(g)
        }),
        Arc::new(|x: &[f64]| x[1] > 0.4 && x[1] < 2.0),
    )
}

/// Graph chart around the x1-cap of an ellipsoid in flat space: coordinates
/// (x1, u) map to the ambient point (f(u) - x1, u), so the surface is the
/// straightened slice x1 = 0 and the metric is the flat pullback.
fn ellipsoid_chart(axes: Vec<f64>) -> MetricChart {
    let dim = axes.len();
    let a = axes.clone();
    let generator = Arc::new(move |x: &[f64], order: usize| {
        let d = x.len();
        let mut s = Jet::constant(d, order + 1, 0.0);
        for j in 1..d {
            let vj = Jet::variable(d, order + 1, j, x[j])?;
            s = s.try_add(&vj.try_mul(&vj)?.scaled(1.0 / (a[j] * a[j])))?;
        }
        let f = s.scaled(-1.0).add_scalar(1.0).sqrt()?.scaled(a[0]);
        let mut g = vec![vec![Jet::constant(d, order, 0.0); d]; d];
        g[0][0] = Jet::constant(d, order, 1.0);
        for j in 1..d {
            let fj = f.partial(j)?.truncated(order)?;
            g[0][j] = fj.scaled(-1.0);
            g[j][0] = fj.scaled(-1.0);
            for k in 1..d {
                let fk = f.partial(k)?.truncated(order)?;
                g[j][k] = fj.try_mul(&fk)?;
                if j == k {
                    g[j][k] = g[j][k].add_scalar(1.0);
                }
            }
        }
        Ok(g)
    });
    let a2 = axes;
    let domain = Arc::new(move |x: &[f64]| {
        let s: f64 = x[1..]
            .iter()
            .zip(&a2[1..])
            .map(|(v, ai)| v * v / (ai * ai))
            .sum();
        s < 0.9 && x[0].abs() < 0.4
    });
    MetricChart::new("ellipsoid-graph", dim, vec![1; dim], generator, domain)
}

fn density(
    f: impl Fn(&[f64], usize) -> Result<Jet> + Send + Sync + 'static,
) -> Option<ScalarGenerator> {
    Some(Arc::new(f))
}

/// The built-in catalog for a chart dimension. Every entry's invariant
/// record is re-verified by jet evaluation before it is returned.
pub fn builtin_models(dim: usize) -> Result<Vec<ModelGeometry>> {
    if dim < 3 {
        return Err(Error::UnsupportedDimension(format!(
            "model catalog needs dimension at least 3, got {dim}"
        )));
    }
    let d = dim;
    let df = d as f64;
    let box_sym = |r: f64| vec![(-r, r); d];
    let one = |x: &[f64], order: usize| Ok(Jet::constant(x.len(), order, 1.0));
    let mut models = vec![
        ModelGeometry {
            name: "flat".into(),
            chart: flat_chart(d),
            sigma: density(one),
            killing: None,
            expected: ExpectedInvariants {
                scalar_curvature: Some(0.0),
                j_density: Some(0.0),
                i_norm: Some(0.0),
                epsilon: Some(0.0),
                zero_locus: ZeroLocus::Empty,
                conformally_flat: true,
                einstein: true,
            },
            sample_box: box_sym(1.0),
        },
        ModelGeometry {
            name: "minkowski".into(),
            chart: minkowski_chart(d),
            sigma: density(one),
            killing: None,
            expected: ExpectedInvariants {
                scalar_curvature: Some(0.0),
                j_density: Some(0.0),
                i_norm: Some(0.0),
                epsilon: Some(0.0),
                zero_locus: ZeroLocus::Empty,
                conformally_flat: true,
                einstein: true,
            },
            sample_box: box_sym(1.0),
        },
        ModelGeometry {
            name: "sphere-round".into(),
            chart: conformal_ball_chart("sphere-stereographic", d, 1.0, f64::INFINITY),
            sigma: density(one),
            killing: Some(Arc::new(|x: &[f64], order| {
                let d = x.len();
                let mut k = vec![Jet::constant(d, order, 0.0); d];
                k[0] = Jet::variable(d, order, 1, x[1])?.scaled(-1.0);
                k[1] = Jet::variable(d, order, 0, x[0])?;
                Ok(k)
            })),
            expected: ExpectedInvariants {
                scalar_curvature: Some(df * (df - 1.0)),
                j_density: Some(df / 2.0),
                i_norm: Some(-1.0),
                epsilon: Some(-1.0),
                zero_locus: ZeroLocus::Empty,
                conformally_flat: true,
                einstein: true,
            },
            sample_box: box_sym(0.8),
        },
        ModelGeometry {
            name: "sphere".into(),
            chart: flat_chart(d),
            sigma: density(|x, order| {
                Ok(quadratic_jet(x, order, &vec![1.0; x.len()])?
                    .add_scalar(1.0)
                    .scaled(0.5))
            }),
            killing: None,
            expected: ExpectedInvariants {
                scalar_curvature: Some(0.0),
                j_density: Some(0.0),
                i_norm: Some(-1.0),
                epsilon: Some(-1.0),
                zero_locus: ZeroLocus::Empty,
                conformally_flat: true,
                einstein: true,
            },
            sample_box: box_sym(1.0),
        },
        ModelGeometry {
            name: "hyperbolic".into(),
            chart: flat_chart(d),
            sigma: density(|x, order| {
                Ok(quadratic_jet(x, order, &vec![1.0; x.len()])?
                    .scaled(-1.0)
                    .add_scalar(1.0)
                    .scaled(0.5))
            }),
            killing: None,
            expected: ExpectedInvariants {
                scalar_curvature: Some(0.0),
                j_density: Some(0.0),
                i_norm: Some(1.0),
                epsilon: Some(1.0),
                zero_locus: ZeroLocus::Sphere { radius: 1.0 },
                conformally_flat: true,
                einstein: true,
            },
            sample_box: box_sym(1.25),
        },
        ModelGeometry {
            name: "hyperbolic-ball".into(),
            chart: conformal_ball_chart("hyperbolic-ball", d, -1.0, 0.72),
            sigma: density(one),
            killing: None,
            expected: ExpectedInvariants {
                scalar_curvature: Some(-df * (df - 1.0)),
                j_density: Some(-df / 2.0),
                i_norm: Some(1.0),
                epsilon: Some(1.0),
                zero_locus: ZeroLocus::Empty,
                conformally_flat: true,
                einstein: true,
            },
            sample_box: box_sym(0.55),
        },
        ModelGeometry {
            name: "half-space".into(),
            chart: flat_chart(d),
            sigma: density(|x, order| Jet::variable(x.len(), order, 0, x[0])),
            killing: None,
            expected: ExpectedInvariants {
                scalar_curvature: Some(0.0),
                j_density: Some(0.0),
                i_norm: Some(1.0),
                epsilon: Some(1.0),
                zero_locus: ZeroLocus::Hyperplane { axis: 0 },
                conformally_flat: true,
                einstein: true,
            },
            sample_box: box_sym(0.9),
        },
        ModelGeometry {
            name: "ricci-flat".into(),
            chart: flat_chart(d),
            sigma: density(|x, order| {
                Ok(quadratic_jet(x, order, &vec![1.0; x.len()])?.scaled(0.5))
            }),
            killing: None,
            expected: ExpectedInvariants {
                scalar_curvature: Some(0.0),
                j_density: Some(0.0),
                i_norm: Some(0.0),
                epsilon: Some(0.0),
                zero_locus: ZeroLocus::IsolatedOrigin,
                conformally_flat: true,
                einstein: true,
            },
            sample_box: box_sym(1.0),
        },
        ModelGeometry {
            name: "de-sitter".into(),
            chart: minkowski_chart(d),
            sigma: density(|x, order| {
                let mut signs = vec![1.0; x.len()];
                signs[0] = -1.0;
                Ok(quadratic_jet(x, order, &signs)?.add_scalar(1.0).scaled(0.5))
            }),
            killing: None,
            expected: ExpectedInvariants {
                scalar_curvature: Some(0.0),
                j_density: Some(0.0),
                i_norm: Some(-1.0),
                epsilon: Some(-1.0),
                zero_locus: ZeroLocus::HyperboloidTwoSheeted,
                conformally_flat: true,
                einstein: true,
            },
            sample_box: {
                let mut b = box_sym(0.6);
                b[0] = (-1.6, 1.6);
                b
            },
        },
        ModelGeometry {
            name: "anti-de-sitter".into(),
            chart: minkowski_chart(d),
            sigma: density(|x, order| {
                let mut signs = vec![1.0; x.len()];
                signs[0] = -1.0;
                Ok(quadratic_jet(x, order, &signs)?
                    .scaled(-1.0)
                    .add_scalar(1.0)
                    .scaled(0.5))
            }),
            killing: None,
            expected: ExpectedInvariants {
                scalar_curvature: Some(0.0),
                j_density: Some(0.0),
                i_norm: Some(1.0),
                epsilon: Some(1.0),
                zero_locus: ZeroLocus::HyperboloidOneSheeted,
                conformally_flat: true,
                einstein: true,
            },
            sample_box: {
                let mut b = box_sym(1.3);
                b[0] = (-0.5, 0.5);
                b
            },
        },
        ModelGeometry {
            name: "perturbed".into(),
            chart: perturbed_chart(d, 7, 0.05),
            sigma: density(one),
            killing: None,
            expected: ExpectedInvariants {
                scalar_curvature: None,
                j_density: None,
                i_norm: None,
                epsilon: None,
                zero_locus: ZeroLocus::Empty,
                conformally_flat: false,
                einstein: false,
            },
            sample_box: box_sym(0.6),
        },
        ModelGeometry {
            name: "ellipsoid".into(),
            chart: ellipsoid_chart((0..d).map(|i| 1.0 + 0.3 * i as f64).collect()),
            sigma: density(|x, order| {
                Ok(Jet::variable(x.len(), order, 0, x[0])?.scaled(-1.0))
            }),
            killing: None,
            expected: ExpectedInvariants {
                scalar_curvature: Some(0.0),
                j_density: Some(0.0),
                i_norm: None,
                epsilon: None,
                zero_locus: ZeroLocus::Hyperplane { axis: 0 },
                conformally_flat: true,
                einstein: false,
            },
            sample_box: {
                let mut b = box_sym(0.25);
                b[0] = (-0.3, 0.3);
                b
            },
        },
    ];
    if dim == 4 {
        models.push(ModelGeometry {
            name: "static-ads".into(),
            chart: static_ads_chart(),
            sigma: density(one),
            killing: Some(Arc::new(|x: &[f64], order| {
                let d = x.len();
                let mut k = vec![Jet::constant(d, order, 0.0); d];
                k[0] = Jet::constant(d, order, 1.0);
                Ok(k)
            })),
            expected: ExpectedInvariants {
                scalar_curvature: Some(-12.0),
                j_density: Some(-2.0),
                i_norm: Some(1.0),
                epsilon: Some(1.0),
                zero_locus: ZeroLocus::Empty,
                conformally_flat: true,
                einstein: true,
            },
            sample_box: vec![(-1.0, 1.0), (0.7, 1.3), (-0.4, 0.4), (-0.4, 0.4)],
        });
    }
    for m in &models {
        let worst = m.verify_expected(4, 11, 1)?;
        if worst > 1e-7 {
            return Err(Error::InternalConsistency(format!(
                "model '{}' fails its own invariant record at registration: {worst:.3e}",
                m.name
            )));
        }
    }
    Ok(models)
}

/// Look a model up by name.
pub fn find_model(models: &[ModelGeometry], name: &str) -> Result<ModelGeometry> {
    models
        .iter()
        .find(|m| m.name == name)
        .cloned()
        .ok_or_else(|| {
            let known: Vec<&str> = models.iter().map(|m| m.name.as_str()).collect();
            Error::InvalidArgument(format!(
                "unknown geometry '{name}'; known: {}",
                known.join(", ")
            ))
        })
}

fn perturbed_chart(dim: usize, seed: u64, amp: f64) -> MetricChart {
    let mut rng = rng_for(seed, "model-perturbed");
    let polys: Vec<Vec<Poly>> = (0..dim)
        .map(|_| {
            (0..dim)
                .map(|_| Poly::random(&mut rng, dim, 3, amp))
                .collect()
        })
        .collect();
    MetricChart::new(
        "perturbed",
        dim,
        vec![1; dim],
        Arc::new(move |x: &[f64], order| {
            let d = x.len();
            let mut g = vec![vec![Jet::constant(d, order, 0.0); d]; d];
            for i in 0..d {
                for j in 0..=i {
                    let h = polys[i][j]
                        .eval_jet(x, order)?
                        .try_add(&polys[j][i].eval_jet(x, order)?)?
                        .scaled(0.5);
                    g[i][j] = h.clone();
                    g[j][i] = h;
                }
                g[i][i] = g[i][i].add_scalar(1.0);
            }
            Ok(g)
        }),
        Arc::new(|x: &[f64]| x.iter().all(|v| v.abs() <= 0.8)),
    )
}

/// Status of the two equations involving the rescaled Weyl field
/// `K = sigma^{-1} W`.
#[derive(Clone, Debug)]
pub enum KEquationStatus {
    /// Both residuals evaluated (K is zero when the chart is conformally
    /// flat, so the pair degenerates to the Cotton-flatness check).
    Computed { c_space: f64, divergence: f64 },
    /// The density vanishes at the point while the Weyl tensor does not;
    /// the rescaled field cannot be formed there and regularity is not
    /// verifiable from this chart.
    RegularityUnverifiable { sigma_value: f64, weyl_scale: f64 },
}

/// Residuals of the conformal field equations at one point: the first-order
/// system in the slot variables (sigma, mu_a, rho) and the equivalent
/// statements for the scale tractor.
#[derive(Clone, Debug)]
pub struct CfeReport {
    pub point: Vec<f64>,
    /// The constant against which `I^2` is compared.
    pub constant: f64,
    /// `nabla_a sigma - mu_a`.
    pub scale_gradient: f64,
    /// `nabla_a mu_b + sigma P_ab + rho g_ab`.
    pub momentum_gradient: f64,
    /// `nabla_a rho - P_ab mu^b`.
    pub density_gradient: f64,
    /// `2 sigma rho + mu_a mu^a - constant`, as a full jet.
    pub first_integral: f64,
    pub k_equations: KEquationStatus,
    /// `nabla I`.
    pub parallel_scale: f64,
    /// `I^2 - constant`, as a full jet.
    pub norm_constancy: f64,
    /// `kappa(I)`.
    pub curvature_annihilates_scale: f64,
    /// `nabla_[a kappa_bc]`.
    pub curvature_closure: f64,
}

impl CfeReport {
    /// Worst residual of the first-order system (including the K pair when
    /// it was computed).
    pub fn worst_friedrich(&self) -> f64 {
        let mut w = self
            .scale_gradient
            .max(self.momentum_gradient)
            .max(self.density_gradient)
            .max(self.first_integral);
        if let KEquationStatus::Computed { c_space, divergence } = &self.k_equations {
            w = w.max(*c_space).max(*divergence);
        }
        w
    }

    /// Worst residual of the four tractor equations.
    pub fn worst_tractor(&self) -> f64 {
        self.parallel_scale
            .max(self.norm_constancy)
            .max(self.curvature_annihilates_scale)
            .max(self.curvature_closure)
    }
}

/// Evaluate all conformal-field-equation residuals for a model's defining
/// density at a point.
pub fn cfe_residuals(model: &ModelGeometry, x: &[f64], order: usize) -> Result<CfeReport> {
    let sgen = model.sigma.as_ref().ok_or_else(|| {
        Error::InvalidArgument(format!("model '{}' carries no defining density", model.name))
    })?;
    let suite = CurvatureSuite::at(&model.chart, x, order)?;
    let d = suite.dim;
    let sj = sgen(x, order)?;
    let i_tr = scale_tractor(&WeightedField::scalar(1.0, sj.clone()), &suite)?;
    let ti = i_tr.order();
    let iscale = i_tr.comps.max_abs().max(1.0);

    let mu: Vec<Jet> = (0..d).map(|a| i_tr.comps.get(&[1 + a]).clone()).collect();
    let rho = i_tr.comps.get(&[d + 1]).clone();
    let i2 = tractor_metric(&i_tr, &i_tr, &suite)?;
    let c = model
        .expected
        .i_norm
        .unwrap_or_else(|| i2.comps.data()[0].value());

    // nabla_a sigma = mu_a: the scale tractor's middle slot is the gradient.
    let mut r1 = 0.0f64;
    for (a, m) in mu.iter().enumerate() {
        r1 = r1.max(
            sj.partial(a)?
                .truncated(ti)?
                .try_sub(m)?
                .max_abs(),
        );
    }
    let r1 = r1 / iscale;

    // nabla_a mu_b = -sigma P_ab - rho g_ab.
    let mut muc = Components::zeros(&[d], d, ti);
    for (a, m) in mu.iter().enumerate() {
        muc.set(&[a], m.clone());
    }
    let dmu = tensor_cov_deriv(&muc, &[IndexKind::Down], &suite.gamma)?;
    let t2 = dmu.order();
    let st = sj.truncated(t2)?;
    let rt = rho.truncated(t2)?;
    let rhs2 = Components::from_fn(&[d, d], |ix| {
        let (a, b) = (ix[0], ix[1]);
        st.try_mul(&suite.p[a][b].truncated(t2).unwrap())
            .unwrap()
            .try_add(&rt.try_mul(&suite.g[a][b].truncated(t2).unwrap()).unwrap())
            .unwrap()
            .scaled(-1.0)
    });
    let r2 = conformal::residual(&dmu.truncated(t2)?, &rhs2)?;

    // Raised gradient slot, at the full tractor order.
    let muup_full: Vec<Jet> = {
        let mut up = vec![Jet::constant(d, ti, 0.0); d];
        for (b, slot) in up.iter_mut().enumerate() {
            for a in 0..d {
                *slot = slot.try_add(&suite.ginv[b][a].truncated(ti)?.try_mul(&mu[a])?)?;
            }
        }
        up
    };

    // nabla_a rho = P_ab mu^b.
    let muup: Vec<Jet> = muup_full
        .iter()
        .map(|j| j.truncated(t2))
        .collect::<Result<_>>()?;
    let lhs3 = Components::from_fn(&[d], |ix| rho.partial(ix[0]).unwrap().truncated(t2).unwrap());
    let rhs3 = Components::from_fn(&[d], |ix| {
        let a = ix[0];
        let mut acc = Jet::constant(d, t2, 0.0);
        for b in 0..d {
            acc = acc
                .try_add(&suite.p[a][b].truncated(t2).unwrap().try_mul(&muup[b]).unwrap())
                .unwrap();
        }
        acc
    });
    let r3 = conformal::residual(&lhs3, &rhs3)?;

    // 2 sigma rho + mu_a mu^a = constant, as a jet statement. Assembled from
    // the slots rather than through the tractor pairing so the first-order
    // system is checked on its own terms.
    let mut fi = sj.truncated(ti)?.try_mul(&rho)?.scaled(2.0);
    for b in 0..d {
        fi = fi.try_add(&muup[b].truncated(ti)?.try_mul(&mu[b])?)?;
    }
    let r4 = fi.add_scalar(-c).max_abs() / fi.max_abs().max(1.0);

    // The rescaled Weyl pair.
    let wl = suite.weyl_lowered()?;
    let mut wmax = 0.0f64;
    let mut rmax = 0.0f64;
    for a in 0..d {
        for b in 0..d {
            for e in 0..d {
                for f in 0..d {
                    wmax = wmax.max(wl[a][b][e][f].max_abs());
                    rmax = rmax.max(suite.riemann[a][b][e][f].max_abs());
                }
            }
        }
    }
    let wrel = wmax / rmax.max(1.0);
    let tc = suite.cotton[0][0][0].order();
    let k_equations = if wrel < 1e-8 {
        // Conformally flat: K vanishes and the pair reduces to Cotton
        // flatness.
        let mut cmax = 0.0f64;
        for a in 0..d {
            for b in 0..d {
                for e in 0..d {
                    cmax = cmax.max(suite.cotton[a][b][e].max_abs());
                }
            }
        }
        KEquationStatus::Computed {
            c_space: cmax / rmax.max(1.0),
            divergence: 0.0,
        }
    } else if sj.value().abs() > 1e-8 * sj.max_abs().max(1.0) {
        let sinv = sj.recip()?;
        let tw = wl[0][0][0][0].order();
        let kc = Components::from_fn(&[d, d, d, d], |ix| {
            wl[ix[0]][ix[1]][ix[2]][ix[3]]
                .try_mul(&sinv.truncated(tw).unwrap())
                .unwrap()
        });
        // C-space: nabla_b P_ac - nabla_a P_bc = K_abcd mu^d.
        let lhs5 = Components::from_fn(&[d, d, d], |ix| {
            suite.cotton[ix[1]][ix[0]][ix[2]].truncated(tc).unwrap()
        });
        let muup_c: Vec<Jet> = muup
            .iter()
            .map(|j| j.truncated(tc))
            .collect::<Result<_>>()?;
        let rhs5 = Components::from_fn(&[d, d, d], |ix| {
            let mut acc = Jet::constant(d, tc, 0.0);
            for e in 0..d {
                acc = acc
                    .try_add(
                        &kc.get(&[ix[0], ix[1], ix[2], e])
                            .truncated(tc)
                            .unwrap()
                            .try_mul(&muup_c[e])
                            .unwrap(),
                    )
                    .unwrap();
            }
            acc
        });
        let c_space = conformal::residual(&lhs5, &rhs5)?;
        // Divergence: nabla^a K_abcd = 0 on the first index.
        let dk = tensor_cov_deriv(&kc, &[IndexKind::Down; 4], &suite.gamma)?;
        let tk = dk.order();
        let mut dmaxv = 0.0f64;
        let mut worst = 0.0f64;
        for b in 0..d {
            for e in 0..d {
                for f in 0..d {
                    let mut acc = Jet::constant(d, tk, 0.0);
                    for p in 0..d {
                        for a in 0..d {
                            acc = acc.try_add(
                                &suite.ginv[p][a]
                                    .truncated(tk)?
                                    .try_mul(&dk.get(&[p, a, b, e, f]).truncated(tk)?)?,
                            )?;
                        }
                    }
                    worst = worst.max(acc.max_abs());
                }
            }
        }
        dmaxv = dmaxv.max(dk.max_abs());
        KEquationStatus::Computed {
            c_space,
            divergence: worst / dmaxv.max(1.0),
        }
    } else {
        KEquationStatus::RegularityUnverifiable {
            sigma_value: sj.value(),
            weyl_scale: wrel,
        }
    };

    // The tractor side.
    let di = covariant_derivative(&i_tr, &suite)?;
    let parallel_scale = di.comps.max_abs() / iscale;
    let norm_constancy =
        i2.comps.data()[0].add_scalar(-c).max_abs() / i2.comps.max_abs().max(1.0);
    let kappa = TractorCurvature::at(&suite)?;
    let kscale = kappa.as_field().comps.max_abs();
    let ki = kappa.apply(&i_tr, &suite)?;
    let curvature_annihilates_scale = ki.comps.max_abs() / (kscale * iscale).max(1.0);
    let dk = covariant_derivative(kappa.as_field(), &suite)?;
    let tk = dk.order();
    let mut closure = 0.0f64;
    for a in 0..d {
        for b in 0..d {
            for e in 0..d {
                for s in 0..d + 2 {
                    for u in 0..d + 2 {
                        let acc = dk
                            .comps
                            .get(&[a, b, e, s, u])
                            .truncated(tk)?
                            .try_add(dk.comps.get(&[b, e, a, s, u]))?
                            .try_add(dk.comps.get(&[e, a, b, s, u]))?
                            .scaled(1.0 / 3.0);
                        closure = closure.max(acc.max_abs());
                    }
                }
            }
        }
    }
    let curvature_closure = closure / dk.comps.max_abs().max(1.0);

    Ok(CfeReport {
        point: x.to_vec(),
        constant: c,
        scale_gradient: r1,
        momentum_gradient: r2,
        density_gradient: r3,
        first_integral: r4,
        k_equations,
        parallel_scale,
        norm_constancy,
        curvature_annihilates_scale,
        curvature_closure,
    })
}

/// Strict sign of the defining density at a sample point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrbitClass {
    Positive,
    ZeroLocus,
    Negative,
}

#[derive(Clone, Debug)]
pub struct OrbitPoint {
    pub point: Vec<f64>,
    pub sigma: f64,
    pub class: OrbitClass,
}

/// Hypersurface checks at one zero-locus sample. `None` entries were
/// skipped: every geometric field is `None` when the scale tractor is null
/// at the sample (degenerate), and the agreement residual additionally needs
/// a straightened locus in dimension at least 4.
#[derive(Clone, Debug)]
pub struct LocusChecks {
    pub point: Vec<f64>,
    pub degenerate: bool,
    /// Slotwise gap between the normal tractor and the scale tractor.
    pub normal_matches_scale: Option<f64>,
    /// Trace-free second fundamental form, relative to the full one.
    pub umbilicity: Option<f64>,
    /// Weyl contracted with the raised conormal on its last index.
    pub weyl_normal: Option<f64>,
    /// Intrinsic/ambient tractor connection agreement through the Gauss
    /// formula, on a test tractor.
    pub intrinsic_agreement: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct OrbitReport {
    pub model: String,
    pub points: Vec<OrbitPoint>,
    /// The locus is a single degenerate point; hypersurface checks skipped.
    pub isolated_locus: bool,
    pub locus: Vec<LocusChecks>,
}

/// Classify sample points by the strict sign of the defining density and run
/// the zero-locus hypersurface checks where the locus is a hypersurface.
pub fn curved_orbit_report(
    model: &ModelGeometry,
    order: usize,
    seed: u64,
    interior_count: usize,
    locus_count: usize,
) -> Result<OrbitReport> {
    let sgen = model.sigma.as_ref().ok_or_else(|| {
        Error::InvalidArgument(format!("model '{}' carries no defining density", model.name))
    })?;
    let d = model.chart.dim;
    let mut points = Vec::new();
    for x in model.sample_points(seed, interior_count) {
        let sj = sgen(&x, 1)?;
        let v = sj.value();
        let class = if v.abs() < 1e-9 * sj.max_abs().max(1.0) {
            OrbitClass::ZeroLocus
        } else if v > 0.0 {
            OrbitClass::Positive
        } else {
            OrbitClass::Negative
        };
        points.push(OrbitPoint {
            point: x,
            sigma: v,
            class,
        });
    }

    let isolated_locus = model.expected.zero_locus.is_isolated();
    let mut locus = Vec::new();
    if !isolated_locus {
        for x in model.locus_samples(seed, locus_count) {
            let suite = CurvatureSuite::at(&model.chart, &x, order)?;
            let sj = sgen(&x, order)?;
            let i_tr = scale_tractor(&WeightedField::scalar(1.0, sj.clone()), &suite)?;
            let i2 = tractor_metric(&i_tr, &i_tr, &suite)?.comps.data()[0].value();
            if i2.abs() < 1e-6 {
                locus.push(LocusChecks {
                    point: x,
                    degenerate: true,
                    normal_matches_scale: None,
                    umbilicity: None,
                    weyl_normal: None,
                    intrinsic_agreement: None,
                });
                continue;
            }
            let ext = ExtrinsicData::at(&sj, &suite)?;
            let scale = 1.0 / i2.abs().sqrt();
            let mut gap = 0.0f64;
            for s in 0..d + 2 {
                gap = gap.max(
                    (ext.normal.comps.get(&[s]).value()
                        - scale * i_tr.comps.get(&[s]).value())
                    .abs(),
                );
            }
            let normal_matches_scale = Some(gap / i_tr.comps.max_abs().max(1.0));
            let umbilicity =
                Some(ext.second_tf.max_abs() / ext.second.max_abs().max(1.0));

            // W_ab^c_d n^d.
            let tn = ext.conormal[0].order();
            let mut nup = vec![Jet::constant(d, tn, 0.0); d];
            for (a, slot) in nup.iter_mut().enumerate() {
                for b in 0..d {
                    *slot = slot.try_add(
                        &suite.ginv[a][b]
                            .truncated(tn)?
                            .try_mul(&ext.conormal[b].truncated(tn)?)?,
                    )?;
                }
            }
            let tw = suite.weyl[0][0][0][0].order().min(tn);
            let mut wn = 0.0f64;
            let mut wscale = 0.0f64;
            for a in 0..d {
                for b in 0..d {
                    for e in 0..d {
                        let mut acc = Jet::constant(d, tw, 0.0);
                        for f in 0..d {
                            wscale = wscale.max(suite.weyl[a][b][e][f].max_abs());
                            acc = acc.try_add(
                                &suite.weyl[a][b][e][f]
                                    .truncated(tw)?
                                    .try_mul(&nup[f].truncated(tw)?)?,
                            )?;
                        }
                        wn = wn.max(acc.max_abs());
                    }
                }
            }
            let weyl_normal = Some(wn / wscale.max(1.0));

            let intrinsic_agreement = if model.expected.zero_locus.is_straightened()
                && d >= 4
            {
                let adapted = AdaptedChart::new(model.chart.clone(), sgen.clone());
                let mut rng = rng_for(seed, "orbit-gauss");
                let nd = d - 1;
                let y = &x[1..];
                let sigma_v = Poly::random(&mut rng, nd, 2, 1.0).eval_jet(y, order)?;
                let mu_v: Vec<Jet> = (0..nd)
                    .map(|_| Poly::random(&mut rng, nd, 2, 1.0).eval_jet(y, order))
                    .collect::<Result<_>>()?;
                let rho_v = Poly::random(&mut rng, nd, 2, 1.0).eval_jet(y, order)?;
                let v = standard_tractor(0.0, &sigma_v, &mu_v, &rho_v)?;
                Some(tractor_gauss_residual(&adapted, y, order, &v)?)
            } else {
                None
            };

            locus.push(LocusChecks {
                point: x,
                degenerate: false,
                normal_matches_scale,
                umbilicity,
                weyl_normal,
                intrinsic_agreement,
            });
        }
    }

    Ok(OrbitReport {
        model: model.name.clone(),
        points,
        isolated_locus,
        locus,
    })
}

/// Tractor identities attached to a Killing field of an Einstein scale: the
/// adjoint tractor of the field annihilates the scale tractor, the standard
/// tractor `K_B = X^A K_AB` pairs to zero with the scale tractor, and for a
/// hypersurface-orthogonal field the adjoint two-form is simple.
#[derive(Clone, Debug)]
pub struct StaticReport {
    /// Conformal Killing residual of the field itself.
    pub conformal_killing: f64,
    /// `K(I)` for the adjoint tractor of the field.
    pub scale_annihilation: f64,
    /// `K_A I^A` with `K_B = X^A K_AB`.
    pub scale_pairing: f64,
    /// `K_[AB K_C]D X^D`.
    pub simplicity: f64,
}

/// Evaluate the Killing-field tractor identities for an explicit field and
/// defining density.
pub fn killing_tractor_checks(
    k: &[Jet],
    sigma: &WeightedField,
    suite: &CurvatureSuite,
) -> Result<StaticReport> {
    let d = suite.dim;
    let cand = KillingCandidate::at(k, suite)?;
    let i_tr = scale_tractor(sigma, suite)?;
    let kk = &cand.adjoint;
    let kscale = kk.max_abs().max(1.0);
    let iscale = i_tr.comps.max_abs().max(1.0);

    let ki = kk.apply(&i_tr, suite)?;
    let scale_annihilation = ki.comps.max_abs() / (kscale * iscale);

    let f = kk.endomorphism(suite)?;
    let t = f.order();
    let zero = Jet::constant(d, t, 0.0);
    let x_tr = standard_tractor(
        1.0,
        &zero,
        &vec![zero.clone(); d],
        &Jet::constant(d, t, 1.0),
    )?;
    let kb = h_pair(&outer(&x_tr, &f)?, 0, 1, suite)?;
    let pairing = h_pair(&outer(&kb, &i_tr)?, 0, 1, suite)?;
    let scale_pairing = pairing.comps.max_abs() / (kscale * iscale);

    let t3 = outer(&f, &kb)?;
    let tt = t3.order();
    let mut simple = 0.0f64;
    for a in 0..d + 2 {
        for b in 0..d + 2 {
            for c in 0..d + 2 {
                let acc = t3
                    .comps
                    .get(&[a, b, c])
                    .truncated(tt)?
                    .try_add(t3.comps.get(&[b, c, a]))?
                    .try_add(t3.comps.get(&[c, a, b]))?
                    .scaled(1.0 / 3.0);
                simple = simple.max(acc.max_abs());
            }
        }
    }
    let simplicity = simple / (kscale * kscale).max(1.0);

    Ok(StaticReport {
        conformal_killing: cand.residual,
        scale_annihilation,
        scale_pairing,
        simplicity,
    })
}

/// Run [`killing_tractor_checks`] on a model's distinguished Killing field.
pub fn static_killing_checks(
    model: &ModelGeometry,
    x: &[f64],
    order: usize,
) -> Result<StaticReport> {
    let kgen = model.killing.as_ref().ok_or_else(|| {
        Error::InvalidArgument(format!(
            "model '{}' carries no distinguished Killing field",
            model.name
        ))
    })?;
    let sgen = model.sigma.as_ref().ok_or_else(|| {
        Error::InvalidArgument(format!("model '{}' carries no defining density", model.name))
    })?;
    let suite = CurvatureSuite::at(&model.chart, x, order)?;
    let k = kgen(x, order)?;
    let sj = sgen(x, order)?;
    killing_tractor_checks(&k, &WeightedField::scalar(1.0, sj), &suite)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn the_catalog_registers_in_dimensions_three_and_four() {
        let m3 = builtin_models(3).unwrap();
        assert!(m3.len() >= 12);
        assert!(m3.iter().all(|m| !m.name.is_empty()));
        assert!(!m3.iter().any(|m| m.name == "static-ads"));
        let m4 = builtin_models(4).unwrap();
        assert!(m4.iter().any(|m| m.name == "static-ads"));
        let mut names: Vec<&str> = m4.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), m4.len(), "model names are unique");
        assert!(matches!(
            find_model(&m3, "nonesuch"),
            Err(Error::InvalidArgument(_))
        ));
        assert!(builtin_models(2).is_err());
    }

    #[test]
    fn locus_samples_lie_on_the_locus_and_in_the_domain() {
        let models = builtin_models(4).unwrap();
        for m in &models {
            let samples = m.locus_samples(3, 4);
            if m.expected.zero_locus.is_empty() {
                assert!(samples.is_empty(), "{}", m.name);
                continue;
            }
            let sgen = m.sigma.as_ref().unwrap();
            for x in &samples {
                assert!(m.chart.in_domain(x), "{} sample off-domain", m.name);
                let sj = sgen(x, 1).unwrap();
                assert!(
                    sj.value().abs() < 1e-10 * sj.max_abs().max(1.0),
                    "{}: sigma = {:.3e} at a locus sample",
                    m.name,
                    sj.value()
                );
            }
        }
    }
}
