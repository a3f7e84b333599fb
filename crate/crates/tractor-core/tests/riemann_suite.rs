//! Curvature-suite tests against independent oracles: closed-form constant
//! curvature charts, the conformally flat Koszul formula, hand-computed polar
//! Christoffel symbols, and the classical identities (Bianchi, trace-freeness
//! of Weyl, commutator sign conventions).

use std::sync::Arc;

use tractor_core::jets::Jet;
use tractor_core::riemann::{
    multi_indices, tensor_cov_deriv, Components, CurvatureSuite, IndexKind, MetricChart,
};
use tractor_core::util::{rng_for, sample_box, Poly};

const TOL: f64 = 1e-9;

fn minkowski_chart(dim: usize) -> MetricChart {
    let mut signature = vec![1; dim];
    signature[0] = -1;
    let sig = signature.clone();
    MetricChart::new(
        "minkowski",
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

/// Stereographic chart of the unit round sphere: g = (2/(1+|x|^2))^2 δ.
fn sphere_chart(dim: usize) -> MetricChart {
    MetricChart::new(
        "sphere-round",
        dim,
        vec![1; dim],
        Arc::new(move |x: &[f64], order| {
            let mut sq = Jet::constant(dim, order, 0.0);
            for i in 0..dim {
                let xi = Jet::variable(dim, order, i, x[i])?;
                sq = sq.try_add(&xi.try_mul(&xi)?)?;
            }
            let psi = sq.add_scalar(1.0).recip()?.scaled(2.0);
            let psi2 = psi.try_mul(&psi)?;
            let mut g = vec![vec![Jet::constant(dim, order, 0.0); dim]; dim];
            for i in 0..dim {
                g[i][i] = psi2.clone();
            }
            Ok(g)
        }),
        Arc::new(|_| true),
    )
}

/// Poincare ball chart of hyperbolic space: g = (2/(1-|x|^2))^2 δ, |x| < 1.
fn hyperbolic_chart(dim: usize) -> MetricChart {
    MetricChart::new(
        "hyperbolic-ball",
        dim,
        vec![1; dim],
        Arc::new(move |x: &[f64], order| {
            let mut sq = Jet::constant(dim, order, 0.0);
            for i in 0..dim {
                let xi = Jet::variable(dim, order, i, x[i])?;
                sq = sq.try_add(&xi.try_mul(&xi)?)?;
            }
            let psi = (-sq).add_scalar(1.0).recip()?.scaled(2.0);
            let psi2 = psi.try_mul(&psi)?;
            let mut g = vec![vec![Jet::constant(dim, order, 0.0); dim]; dim];
            for i in 0..dim {
                g[i][i] = psi2.clone();
            }
            Ok(g)
        }),
        Arc::new(|x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() < 1.0),
    )
}

/// Flat metric plus a small random polynomial perturbation, fixed by seed, so
/// identities can be probed away from any special geometry.
fn perturbed_chart(dim: usize, seed: u64) -> MetricChart {
    let mut rng = rng_for(seed, "perturbed-metric");
    let mut polys = Vec::new();
    for i in 0..dim {
        for j in i..dim {
            polys.push(((i, j), Poly::random(&mut rng, dim, 3, 0.05)));
        }
    }
    MetricChart::new(
        "perturbed",
        dim,
        vec![1; dim],
        Arc::new(move |x: &[f64], order| {
            let mut g = vec![vec![Jet::constant(dim, order, 0.0); dim]; dim];
            for ((i, j), p) in &polys {
                let jet = p.eval_jet(x, order)?;
                if i == j {
                    g[*i][*j] = jet.add_scalar(1.0);
                } else {
                    g[*i][*j] = jet.clone();
                    g[*j][*i] = jet;
                }
            }
            Ok(g)
        }),
        Arc::new(|x: &[f64]| x.iter().all(|v| v.abs() <= 0.8)),
    )
}

fn max_abs_arr4(r: &[Vec<Vec<Vec<Jet>>>]) -> f64 {
    r.iter()
        .flatten()
        .flatten()
        .flatten()
        .fold(0.0f64, |m, j| m.max(j.max_abs()))
}

#[test]
fn conformally_flat_koszul_closed_form() {
    // For g = e^{2ω} δ the connection is Γ^i_jk = δ^i_j ω_k + δ^i_k ω_j - δ_jk ω^i.
    let dim = 3;
    let mut rng = rng_for(11, "koszul-omega");
    let omega = Poly::random(&mut rng, dim, 3, 0.2);
    let om = omega.clone();
    let chart = MetricChart::new(
        "conformally-flat",
        dim,
        vec![1; dim],
        Arc::new(move |x: &[f64], order| {
            let w = om.eval_jet(x, order)?;
            let factor = w.scaled(2.0).exp();
            let mut g = vec![vec![Jet::constant(dim, order, 0.0); dim]; dim];
            for i in 0..dim {
                g[i][i] = factor.clone();
            }
            Ok(g)
        }),
        Arc::new(|_| true),
    );
    let mut sampler = rng_for(11, "koszul-points");
    for _ in 0..5 {
        let x = sample_box(&mut sampler, dim, 0.7);
        let m = 4;
        let suite = CurvatureSuite::at(&chart, &x, m).unwrap();
        let w = omega.eval_jet(&x, m).unwrap();
        let dw: Vec<Jet> = (0..dim).map(|k| w.partial(k).unwrap()).collect();
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    let mut want = dw[0].zero_like();
                    if i == j {
                        want = want.try_add(&dw[k]).unwrap();
                    }
                    if i == k {
                        want = want.try_add(&dw[j]).unwrap();
                    }
                    if j == k {
                        want = want.try_sub(&dw[i]).unwrap();
                    }
                    let diff = suite.gamma[i][j][k].try_sub(&want).unwrap();
                    let scale = want.max_abs().max(1.0);
                    assert!(
                        diff.max_abs() <= TOL * scale,
                        "Koszul mismatch at Γ^{i}_{j}{k}: {}",
                        diff.max_abs()
                    );
                }
            }
        }
    }
}

#[test]
fn polar_chart_christoffel_hand_value() {
    // Chart (r, θ, φ) with g = dr² + dθ² + sin²θ dφ²: Γ^θ_φφ = -sinθ cosθ.
    let dim = 3;
    let chart = MetricChart::new(
        "cylinder-over-sphere",
        dim,
        vec![1; dim],
        Arc::new(move |x: &[f64], order| {
            let theta = Jet::variable(dim, order, 1, x[1])?;
            let s = theta.sin();
            let mut g = vec![vec![Jet::constant(dim, order, 0.0); dim]; dim];
            g[0][0] = Jet::constant(dim, order, 1.0);
            g[1][1] = Jet::constant(dim, order, 1.0);
            g[2][2] = s.try_mul(&s)?;
            Ok(g)
        }),
        Arc::new(|x: &[f64]| x[1].sin().abs() > 0.1),
    );
    let x = [0.4, 1.1, -0.3];
    let m = 5;
    let suite = CurvatureSuite::at(&chart, &x, m).unwrap();
    let theta = Jet::variable(dim, m - 1, 1, x[1]).unwrap();
    let want = (&theta.sin() * &theta.cos()).scaled(-1.0);
    let diff = suite.gamma[1][2][2].try_sub(&want).unwrap();
    assert!(diff.max_abs() < TOL, "Γ^θ_φφ residual {}", diff.max_abs());
}

#[test]
fn constant_curvature_ground_truths() {
    // Unit sphere in d=4: Sc = 12, J = 2, P = g/2, W = C = B = 0,
    // and R_ijkl = g_ik g_jl - g_il g_jk.
    let mut rng = rng_for(12, "sphere-points");
    let chart = sphere_chart(4);
    for _ in 0..4 {
        let x = sample_box(&mut rng, 4, 0.6);
        let s = CurvatureSuite::at(&chart, &x, 5).unwrap();
        assert!(s.sc.add_scalar(-12.0).max_abs() <= TOL * 12.0, "sphere Sc");
        assert!(s.j.add_scalar(-2.0).max_abs() <= TOL * 2.0, "sphere J");
        let t2 = s.sc.order();
        for i in 0..4 {
            for j in 0..4 {
                let half_g = s.g[i][j].truncated(t2).unwrap().scaled(0.5);
                let diff = s.p[i][j].try_sub(&half_g).unwrap();
                assert!(diff.max_abs() <= TOL * half_g.max_abs().max(1.0), "P = g/2");
                assert!(s.bach[i][j].max_abs() <= TOL, "sphere Bach = 0");
            }
        }
        assert!(max_abs_arr4(&s.weyl) <= TOL, "sphere Weyl = 0");
        let low = s.riemann_lowered().unwrap();
        let g2: Vec<Vec<Jet>> = s
            .g
            .iter()
            .map(|row| row.iter().map(|j| j.truncated(t2).unwrap()).collect())
            .collect();
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for l in 0..4 {
                        let want = (&g2[i][k] * &g2[j][l]) - (&g2[i][l] * &g2[j][k]);
                        let diff = low[i][j][k][l].try_sub(&want).unwrap();
                        worst = worst.max(diff.max_abs() / want.max_abs().max(1.0));
                    }
                }
            }
        }
        assert!(worst <= TOL, "sphere sectional curvature residual {worst}");
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    assert!(s.cotton[a][b][c].max_abs() <= TOL, "sphere Cotton = 0");
                }
            }
        }
    }

    // Poincare ball in d=4: Sc = -12 and opposite-sign sectional curvature.
    let chart = hyperbolic_chart(4);
    let mut rng = rng_for(12, "hyperbolic-points");
    for _ in 0..4 {
        let x = sample_box(&mut rng, 4, 0.35);
        let s = CurvatureSuite::at(&chart, &x, 5).unwrap();
        assert!(
            s.sc.add_scalar(12.0).max_abs() <= TOL * 12.0,
            "hyperbolic Sc"
        );
        assert!(s.j.add_scalar(2.0).max_abs() <= TOL * 2.0, "hyperbolic J");
        let low = s.riemann_lowered().unwrap();
        let t2 = s.sc.order();
        let g2: Vec<Vec<Jet>> = s
            .g
            .iter()
            .map(|row| row.iter().map(|j| j.truncated(t2).unwrap()).collect())
            .collect();
        for i in 0..4 {
            for j in 0..4 {
                let want = ((&g2[i][i] * &g2[j][j]) - (&g2[i][j] * &g2[j][i])).scaled(-1.0);
                let diff = low[i][j][i][j].try_sub(&want).unwrap();
                assert!(
                    diff.max_abs() <= TOL * want.max_abs().max(1.0),
                    "hyperbolic sectional"
                );
            }
        }
    }

    // Flat Minkowski chart: everything vanishes.
    let chart = minkowski_chart(4);
    let s = CurvatureSuite::at(&chart, &[0.1, 0.2, -0.3, 0.4], 4).unwrap();
    assert!(max_abs_arr4(&s.riemann) < 1e-12);
    assert!(s.sc.max_abs() < 1e-12);
}

#[test]
fn ricci_decomposition_and_weyl_traces() {
    for (dim, seed) in [(3usize, 21u64), (4, 22), (5, 23)] {
        let chart = perturbed_chart(dim, seed);
        let mut rng = rng_for(seed, "suite-points");
        let x = sample_box(&mut rng, dim, 0.5);
        let s = CurvatureSuite::at(&chart, &x, 4).unwrap();
        let t2 = s.sc.order();

        // Ric = (d-2) P + J g.
        for a in 0..dim {
            for b in 0..dim {
                let want = s.p[a][b]
                    .scaled(dim as f64 - 2.0)
                    .try_add(&s.j.try_mul(&s.g[a][b].truncated(t2).unwrap()).unwrap())
                    .unwrap();
                let diff = s.ric[a][b].try_sub(&want).unwrap();
                assert!(
                    diff.max_abs() <= TOL * want.max_abs().max(1.0),
                    "Ricci decomposition"
                );
            }
        }

        // Every metric trace of the lowered Weyl tensor vanishes.
        let w = s.weyl_lowered().unwrap();
        let gi: Vec<Vec<Jet>> = s
            .ginv
            .iter()
            .map(|row| row.iter().map(|j| j.truncated(t2).unwrap()).collect())
            .collect();
        let pairs: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        for (p0, p1) in pairs {
            let mut worst = 0.0f64;
            // Free indices run over the remaining two slots.
            for a in 0..dim {
                for b in 0..dim {
                    let mut acc = s.sc.zero_like();
                    for c in 0..dim {
                        for e in 0..dim {
                            let mut ix = [0usize; 4];
                            ix[p0] = c;
                            ix[p1] = e;
                            let mut free = [a, b].into_iter();
                            for slot in 0..4 {
                                if slot != p0 && slot != p1 {
                                    ix[slot] = free.next().unwrap();
                                }
                            }
                            acc = acc
                                .try_add(&gi[c][e].try_mul(&w[ix[0]][ix[1]][ix[2]][ix[3]]).unwrap())
                                .unwrap();
                        }
                    }
                    worst = worst.max(acc.max_abs());
                }
            }
            assert!(
                worst <= TOL,
                "Weyl trace over slots ({p0},{p1}) = {worst} in d={dim}"
            );
        }

        // d=3 forces Weyl to vanish identically.
        if dim == 3 {
            assert!(max_abs_arr4(&s.weyl) <= TOL, "Weyl must vanish in d=3");
        }

        // First Bianchi identity on the lowered tensor.
        let low = s.riemann_lowered().unwrap();
        let mut worst = 0.0f64;
        for ix in multi_indices(&[dim, dim, dim, dim]) {
            let (i, j, k, l) = (ix[0], ix[1], ix[2], ix[3]);
            let cyc = low[i][j][k][l]
                .try_add(&low[j][k][i][l])
                .unwrap()
                .try_add(&low[k][i][j][l])
                .unwrap();
            worst = worst.max(cyc.max_abs());
        }
        assert!(worst <= TOL, "first Bianchi residual {worst} in d={dim}");

        // Antisymmetry in the first index pair.
        let mut worst = 0.0f64;
        for ix in multi_indices(&[dim, dim, dim, dim]) {
            let (i, j, k, l) = (ix[0], ix[1], ix[2], ix[3]);
            let sym = s.riemann[i][j][k][l].try_add(&s.riemann[j][i][k][l]).unwrap();
            worst = worst.max(sym.max_abs());
        }
        assert!(worst <= 1e-12, "R symmetric part {worst}");

        // Cotton antisymmetry in its first pair.
        let mut worst = 0.0f64;
        for ix in multi_indices(&[dim, dim, dim]) {
            let (a, b, c) = (ix[0], ix[1], ix[2]);
            let sym = s.cotton[a][b][c].try_add(&s.cotton[b][a][c]).unwrap();
            worst = worst.max(sym.max_abs());
        }
        assert!(worst <= 1e-12, "Cotton symmetric part {worst}");
    }
}

#[test]
fn covariant_derivative_properties() {
    let dim = 3;
    let chart = perturbed_chart(dim, 31);
    let mut rng = rng_for(31, "covd-points");
    let x = sample_box(&mut rng, dim, 0.5);
    let m = 5;
    let s = CurvatureSuite::at(&chart, &x, m).unwrap();

    // Metricity: ∇g = 0.
    let g_arr = Components::from_fn(&[dim, dim], |ix| s.g[ix[0]][ix[1]].clone());
    let grad_g = tensor_cov_deriv(&g_arr, &[IndexKind::Down, IndexKind::Down], &s.gamma).unwrap();
    assert!(grad_g.max_abs() <= TOL, "∇g = {}", grad_g.max_abs());

    // Torsion-freeness: Hessian of a scalar is symmetric.
    let f = Poly::random(&mut rng, dim, 3, 1.0)
        .eval_jet(&x, m - 1)
        .unwrap();
    let grad_f = tensor_cov_deriv(&Components::scalar(f), &[], &s.gamma).unwrap();
    let hess = tensor_cov_deriv(&grad_f, &[IndexKind::Down], &s.gamma).unwrap();
    for a in 0..dim {
        for b in (a + 1)..dim {
            let diff = hess.get(&[a, b]).try_sub(hess.get(&[b, a])).unwrap();
            assert!(diff.max_abs() <= TOL, "Hessian asymmetry {}", diff.max_abs());
        }
    }

    // Contracted second Bianchi: ∇^a P_ab = ∇_b J.
    let p_arr = Components::from_fn(&[dim, dim], |ix| s.p[ix[0]][ix[1]].clone());
    let grad_p = tensor_cov_deriv(&p_arr, &[IndexKind::Down, IndexKind::Down], &s.gamma).unwrap();
    let t3 = grad_p.order();
    let gi3: Vec<Vec<Jet>> = s
        .ginv
        .iter()
        .map(|row| row.iter().map(|j| j.truncated(t3).unwrap()).collect())
        .collect();
    for b in 0..dim {
        let mut div = s.j.truncated(t3).unwrap().zero_like();
        for a in 0..dim {
            for c in 0..dim {
                div = div
                    .try_add(&gi3[a][c].try_mul(grad_p.get(&[a, c, b])).unwrap())
                    .unwrap();
            }
        }
        let want = s.j.partial(b).unwrap().truncated(t3).unwrap();
        let diff = div.try_sub(&want).unwrap();
        assert!(
            diff.max_abs() <= TOL * want.max_abs().max(1.0),
            "contracted Bianchi residual {}",
            diff.max_abs()
        );
    }
}

#[test]
fn commutator_sign_conventions() {
    let dim = 3;
    let chart = perturbed_chart(dim, 41);
    let mut rng = rng_for(41, "commutator");
    let x = sample_box(&mut rng, dim, 0.5);
    let m = 5;
    let s = CurvatureSuite::at(&chart, &x, m).unwrap();
    let t = m - 3; // order of ∇∇ applied to an order m-1 field

    // Vector field: [∇_a, ∇_b] w^k = R_ab^k_l w^l.
    let w = Components::from_fn(&[dim], |_| {
        Poly::random(&mut rng, dim, 2, 1.0)
            .eval_jet(&x, m - 1)
            .unwrap()
    });
    let grad_w = tensor_cov_deriv(&w, &[IndexKind::Up], &s.gamma).unwrap();
    let grad2_w = tensor_cov_deriv(&grad_w, &[IndexKind::Down, IndexKind::Up], &s.gamma).unwrap();
    let wt = w.truncated(t).unwrap();
    for a in 0..dim {
        for b in 0..dim {
            for k in 0..dim {
                let lhs = grad2_w
                    .get(&[a, b, k])
                    .try_sub(grad2_w.get(&[b, a, k]))
                    .unwrap();
                let mut rhs = lhs.zero_like();
                for l in 0..dim {
                    rhs = rhs
                        .try_add(
                            &s.riemann[a][b][k][l]
                                .truncated(t)
                                .unwrap()
                                .try_mul(wt.get(&[l]))
                                .unwrap(),
                        )
                        .unwrap();
                }
                let diff = lhs.try_sub(&rhs).unwrap();
                assert!(
                    diff.max_abs() <= TOL * rhs.max_abs().max(1.0),
                    "vector commutator residual {}",
                    diff.max_abs()
                );
            }
        }
    }

    // One-form: [∇_a, ∇_b] ω_c = -R_ab^d_c ω_d.
    let omega = Components::from_fn(&[dim], |_| {
        Poly::random(&mut rng, dim, 2, 1.0)
            .eval_jet(&x, m - 1)
            .unwrap()
    });
    let grad_o = tensor_cov_deriv(&omega, &[IndexKind::Down], &s.gamma).unwrap();
    let grad2_o = tensor_cov_deriv(&grad_o, &[IndexKind::Down, IndexKind::Down], &s.gamma).unwrap();
    let ot = omega.truncated(t).unwrap();
    for a in 0..dim {
        for b in 0..dim {
            for c in 0..dim {
                let lhs = grad2_o
                    .get(&[a, b, c])
                    .try_sub(grad2_o.get(&[b, a, c]))
                    .unwrap();
                let mut rhs = lhs.zero_like();
                for dd in 0..dim {
                    rhs = rhs
                        .try_sub(
                            &s.riemann[a][b][dd][c]
                                .truncated(t)
                                .unwrap()
                                .try_mul(ot.get(&[dd]))
                                .unwrap(),
                        )
                        .unwrap();
                }
                let diff = lhs.try_sub(&rhs).unwrap();
                assert!(
                    diff.max_abs() <= TOL * rhs.max_abs().max(1.0),
                    "one-form commutator residual {}",
                    diff.max_abs()
                );
            }
        }
    }
}
