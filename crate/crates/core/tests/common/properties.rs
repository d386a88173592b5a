//! Invariant checks shared by the `properties` test binary and the
//! acceptance report. Each check returns `Err` with a description of the
//! first counterexample.

#![allow(dead_code)]

use nalgebra::DMatrix;
use picar::basis::{
    leading_eigenpairs, moran_operator, parallel_moran_blocks, precision_kernel, PrecisionKind, SymmetricOperator,
};
use picar::eval::{cvmspe, misclassification, mpr, predict};
use picar::glm::{cumlogit_fit, irls_fit, select_rank, Link};
use picar::link::{cutoffs_from_alpha, ordinal_probs};
use picar::mcmc::{
    ess, gibbs_tau, metropolis_accept, run_chain, ChainConfig, ChainState, DrawSummary, GammaPrior, ModelSpec,
    Priors, Proposals, Sampler,
};
use picar::mesh::{build_mesh, Mesh, Point2};
use picar::pipeline::{fit_dataset, FitConfig, MeshSize};
use picar::randfield::{gen_binary, gen_count, gen_ordinal, gen_svc, Design, Family, REFERENCE_CROSS_COVARIANCE};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = fn() -> Result<(), String>;

/// Every invariant with a stable name.
pub const ALL: &[(&str, Check)] = &[
    ("mesh_is_delaunay_and_nondegenerate", mesh_is_delaunay_and_nondegenerate),
    ("mesh_is_deterministic", mesh_is_deterministic),
    ("projector_rows_are_convex_and_affine_exact", projector_rows_are_convex_and_affine_exact),
    ("adjacency_is_symmetric_without_loops", adjacency_is_symmetric_without_loops),
    ("moran_operator_is_symmetric_and_kills_constants", moran_operator_is_symmetric_and_kills_constants),
    ("moran_basis_is_orthonormal_centered_and_resolved", moran_basis_is_orthonormal_centered_and_resolved),
    ("precision_rows_and_kernel_definiteness", precision_rows_and_kernel_definiteness),
    ("parallel_blocks_are_invariant", parallel_blocks_are_invariant),
    ("ordinal_probabilities_are_a_distribution", ordinal_probabilities_are_a_distribution),
    ("cutoffs_are_monotone", cutoffs_are_monotone),
    ("irls_deviance_never_increases", irls_deviance_never_increases),
    ("cumlogit_cumulative_probabilities_are_monotone", cumlogit_cumulative_probabilities_are_monotone),
    ("selected_rank_attains_minimum", selected_rank_attains_minimum),
    ("metrics_are_bounded_and_consistent", metrics_are_bounded_and_consistent),
    ("draw_summaries_are_ordered", draw_summaries_are_ordered),
    ("metropolis_detailed_balance_two_state", metropolis_detailed_balance_two_state),
    ("flat_likelihood_acceptance_matches_normal_theory", flat_likelihood_acceptance_matches_normal_theory),
    ("rejection_keeps_state_and_posterior_finite", rejection_keeps_state_and_posterior_finite),
    ("ordinal_chain_cutoffs_stay_ordered", ordinal_chain_cutoffs_stay_ordered),
    ("gibbs_tau_matches_gamma_ks", gibbs_tau_matches_gamma_ks),
    ("ess_matches_iid_and_ar1_oracles", ess_matches_iid_and_ar1_oracles),
    ("generators_are_seed_deterministic", generators_are_seed_deterministic),
    ("chains_are_seed_deterministic", chains_are_seed_deterministic),
    ("fits_are_thread_count_invariant", fits_are_thread_count_invariant),
    ("predict_is_pure", predict_is_pure),
];

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn uniform_points(n: usize, seed: u64) -> Vec<Point2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Point2::new(rng.random(), rng.random())).collect()
}

fn circumcircle_violation(mesh: &Mesh) -> Option<(usize, usize)> {
    let v = mesh.vertices();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (a, b, c) = (v[tri[0]], v[tri[1]], v[tri[2]]);
        let d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
        let (a2, b2, c2) = (a.x * a.x + a.y * a.y, b.x * b.x + b.y * b.y, c.x * c.x + c.y * c.y);
        let ux = (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d;
        let uy = (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d;
        let r = (a.x - ux).hypot(a.y - uy);
        if let Some(i) = (0..v.len()).find(|&i| !tri.contains(&i) && (v[i].x - ux).hypot(v[i].y - uy) < r - 1e-9 * r.max(1.0)) {
            return Some((t, i));
        }
    }
    None
}

/// Exhaustive empty-circumcircle check over every vertex/triangle pair.
pub fn is_delaunay(mesh: &Mesh) -> bool {
    circumcircle_violation(mesh).is_none()
}

fn mesh_strategy() -> impl Strategy<Value = (u64, usize, usize)> {
    (0u64..10_000, 10usize..120, 20usize..200)
}

pub fn mesh_is_delaunay_and_nondegenerate() -> Result<(), String> {
    run(48, mesh_strategy(), |(seed, n, m)| {
        let mesh = build_mesh(&uniform_points(n, seed), m, 0.1, seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(circumcircle_violation(&mesh), None);
        prop_assert!((0..mesh.num_triangles()).all(|t| mesh.triangle_area(t) > 0.0));
        let bbox = mesh.boundary_box();
        let covered: f64 = (0..mesh.num_triangles()).map(|t| mesh.triangle_area(t)).sum();
        prop_assert!((covered - bbox.width() * bbox.height()).abs() < 1e-9);
        Ok(())
    })
}

pub fn mesh_is_deterministic() -> Result<(), String> {
    run(24, mesh_strategy(), |(seed, n, m)| {
        let pts = uniform_points(n, seed);
        let a = build_mesh(&pts, m, 0.1, seed).unwrap();
        let b = build_mesh(&pts, m, 0.1, seed).unwrap();
        prop_assert_eq!(a.to_text(), b.to_text());
        Ok(())
    })
}

pub fn projector_rows_are_convex_and_affine_exact() -> Result<(), String> {
    run(32, (mesh_strategy(), -5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), |((seed, n, m), c0, c1, c2)| {
        let pts = uniform_points(n, seed);
        let mesh = build_mesh(&pts, m, 0.1, seed).unwrap();
        let a = mesh.projector(&pts).unwrap();
        for i in 0..a.nrows() {
            let (_, w) = a.row(i);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(w.iter().all(|&x| x >= 0.0));
            prop_assert!(a.nnz_in_row(i) <= 3);
        }
        let f = |p: &Point2| c0 + c1 * p.x + c2 * p.y;
        let nodes: Vec<f64> = mesh.vertices().iter().map(f).collect();
        for (p, got) in pts.iter().zip(a.matvec(&nodes)) {
            prop_assert!((got - f(p)).abs() <= 1e-10);
        }
        Ok(())
    })
}

pub fn adjacency_is_symmetric_without_loops() -> Result<(), String> {
    run(32, mesh_strategy(), |(seed, n, m)| {
        let mesh = build_mesh(&uniform_points(n, seed), m, 0.1, seed).unwrap();
        let d = mesh.adjacency().to_dense();
        prop_assert_eq!(&d, &d.transpose());
        prop_assert!((0..d.nrows()).all(|i| d[(i, i)] == 0.0));
        prop_assert!(mesh.adjacency().is_connected());
        Ok(())
    })
}

pub fn moran_operator_is_symmetric_and_kills_constants() -> Result<(), String> {
    run(32, (mesh_strategy(), 0u64..1000), |((seed, n, m), vseed)| {
        let mesh = build_mesh(&uniform_points(n, seed), m, 0.1, seed).unwrap();
        let op = moran_operator(&mesh.adjacency());
        let dim = op.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(vseed);
        let u: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (mut ou, mut ov, mut o1) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
        op.apply(&u, &mut ou);
        op.apply(&v, &mut ov);
        op.apply(&vec![1.0; dim], &mut o1);
        let uov: f64 = u.iter().zip(&ov).map(|(a, b)| a * b).sum();
        let vou: f64 = v.iter().zip(&ou).map(|(a, b)| a * b).sum();
        prop_assert!((uov - vou).abs() <= 1e-10);
        prop_assert!(o1.iter().all(|x| x.abs() <= 1e-12));
        Ok(())
    })
}

pub fn moran_basis_is_orthonormal_centered_and_resolved() -> Result<(), String> {
    run(16, (0u64..10_000, 60usize..300, 1usize..40), |(seed, m, p)| {
        let mesh = build_mesh(&uniform_points(50, seed), m, 0.1, seed).unwrap();
        let op = moran_operator(&mesh.adjacency());
        let p = p.min(op.dim() - 2);
        let (basis, _) = leading_eigenpairs(&op, p, seed).unwrap();
        let v = basis.vectors();
        let gram = v.tr_mul(v);
        prop_assert!((gram - DMatrix::identity(v.ncols(), v.ncols())).amax() <= 1e-8);
        let lam = basis.eigenvalues();
        prop_assert!(lam.iter().all(|&l| l > 0.0));
        prop_assert!(lam.windows(2).all(|w| w[0] >= w[1]));
        let mut y = vec![0.0; op.dim()];
        for j in 0..v.ncols() {
            let col: Vec<f64> = v.column(j).iter().copied().collect();
            prop_assert!(col.iter().sum::<f64>().abs() <= 1e-8);
            op.apply(&col, &mut y);
            let res = y.iter().zip(&col).map(|(a, b)| (a - lam[j] * b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(res <= 1e-6, "column {} residual {}", j, res);
        }
        Ok(())
    })
}

pub fn precision_rows_and_kernel_definiteness() -> Result<(), String> {
    run(16, (0u64..10_000, 40usize..200, 0.0f64..0.99), |(seed, m, rho)| {
        let mesh = build_mesh(&uniform_points(40, seed), m, 0.1, seed).unwrap();
        let adj = mesh.adjacency();
        let (basis, _) = leading_eigenpairs(&moran_operator(&adj), 10, seed).unwrap();
        let deg = adj.degrees();
        for kind in [PrecisionKind::Identity, PrecisionKind::Icar, PrecisionKind::Car(rho)] {
            let k = precision_kernel(kind, &adj, &basis).unwrap();
            let q = k.q.to_dense();
            prop_assert_eq!(&q, &q.transpose());
            for i in 0..adj.size() {
                let expect = match kind {
                    PrecisionKind::Identity => 1.0,
                    PrecisionKind::Icar => 0.0,
                    PrecisionKind::Car(r) => (1.0 - r) * deg[i],
                };
                prop_assert!((k.q.row_sum(i) - expect).abs() <= 1e-12);
            }
            prop_assert!(nalgebra::Cholesky::new(k.k.clone()).is_some());
            prop_assert!((&k.k - k.k.transpose()).amax() <= 1e-12);
        }
        let icar = precision_kernel(PrecisionKind::Icar, &adj, &basis).unwrap();
        let near = precision_kernel(PrecisionKind::Car(1.0 - 1e-6), &adj, &basis).unwrap();
        prop_assert!((&icar.k - &near.k).amax() <= 1e-4);
        Ok(())
    })
}

pub fn parallel_blocks_are_invariant() -> Result<(), String> {
    run(12, (0u64..10_000, 20usize..250, 2usize..9), |(seed, m, blocks)| {
        let mesh = build_mesh(&uniform_points(30, seed), m, 0.1, seed).unwrap();
        let adj = mesh.adjacency();
        let one = parallel_moran_blocks(&adj, 1).unwrap();
        let many = parallel_moran_blocks(&adj, blocks.min(adj.size())).unwrap();
        prop_assert_eq!(one, many);
        Ok(())
    })
}

pub fn ordinal_probabilities_are_a_distribution() -> Result<(), String> {
    run(256, (prop::collection::vec(-3.0f64..3.0, 1..5), -40.0f64..40.0), |(alpha, eta)| {
        let theta = cutoffs_from_alpha(&alpha);
        let p = ordinal_probs(&theta, eta);
        prop_assert_eq!(p.len(), theta.len() + 1);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        Ok(())
    })
}

pub fn cutoffs_are_monotone() -> Result<(), String> {
    run(256, prop::collection::vec(-30.0f64..5.0, 0..6), |alpha| {
        let theta = cutoffs_from_alpha(&alpha);
        prop_assert_eq!(theta[0], 0.0);
        prop_assert!(theta.windows(2).all(|w| w[1] > w[0]));
        Ok(())
    })
}

fn logit_data(seed: u64, n: usize, k: usize, link: Link) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, k, |_, j| if j == 0 { 1.0 } else { rng.random_range(-1.0..1.0) });
    let z = (0..n)
        .map(|i| {
            let eta: f64 = (0..k).map(|j| x[(i, j)] * 0.7).sum();
            match link {
                Link::Logit => f64::from(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))),
                Link::Log => {
                    let d = rand_distr::Poisson::new(eta.exp()).unwrap();
                    rand_distr::Distribution::sample(&d, &mut rng)
                }
            }
        })
        .collect();
    (x, z)
}

pub fn irls_deviance_never_increases() -> Result<(), String> {
    run(64, (0u64..10_000, 20usize..300, 1usize..6, any::<bool>()), |(seed, n, k, log)| {
        let link = if log { Link::Log } else { Link::Logit };
        let (x, z) = logit_data(seed, n, k, link);
        let fit = irls_fit(link, &x, &z);
        for w in fit.deviance_path.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs(), "{:?}", fit.deviance_path);
        }
        Ok(())
    })
}

pub fn cumlogit_cumulative_probabilities_are_monotone() -> Result<(), String> {
    run(24, (0u64..10_000, 60usize..300, 3usize..6), |(seed, n, j)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
        // Cycle through every category first so none is empty.
        let z: Vec<f64> = (0..n).map(|i| if i < j { (i + 1) as f64 } else { rng.random_range(1..=j) as f64 }).collect();
        let fit = cumlogit_fit(&x, &z, j).map_err(|e| TestCaseError::fail(e.to_string()))?;
        fit.deviance_path
            .windows(2)
            .try_for_each(|w| if w[1] <= w[0] + 1e-12 * w[0].abs() { Ok(()) } else { Err(TestCaseError::fail("deviance rose")) })?;
        let theta = cutoffs_from_alpha(&fit.coefficients[..j - 2]);
        let eta = fit.linear_predictor(&x);
        for e in eta {
            let p = ordinal_probs(&theta, e);
            let mut cum = 0.0;
            let mut last = 0.0;
            for q in p {
                cum += q;
                prop_assert!(cum >= last - 1e-15);
                last = cum;
            }
        }
        Ok(())
    })
}

pub fn selected_rank_attains_minimum() -> Result<(), String> {
    run(6, 0u64..10_000, |seed| {
        let ds = gen_binary(&Design::reference(150, 60), seed).unwrap();
        let cfg = FitConfig { mesh: MeshSize::Nodes(150), ..FitConfig::default() };
        let mut timings = Default::default();
        let basis = picar::pipeline::prepare_basis(&ds, &cfg, &mut timings).unwrap();
        let grid: Vec<usize> = (2..=20).collect();
        let sel = select_rank(&ds, &basis.am_fit, &basis.am_cv, &grid).unwrap();
        let best = sel.chosen_score();
        prop_assert!(sel.scores.iter().all(|&s| best <= s));
        prop_assert!(sel.grid.contains(&sel.chosen));
        Ok(())
    })
}

pub fn metrics_are_bounded_and_consistent() -> Result<(), String> {
    let probs = prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..200);
    run(256, (probs, 0.05f64..0.95), |(pairs, threshold)| {
        let p: Vec<f64> = pairs.iter().map(|x| x.0).collect();
        let z: Vec<f64> = pairs.iter().map(|x| f64::from(u8::from(x.1))).collect();
        prop_assert!(cvmspe(&z, &p).unwrap() >= 0.0);
        let labels: Vec<f64> = p.iter().map(|&q| if q >= threshold { 1.0 } else { 0.0 }).collect();
        let rate = mpr(&z, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&rate));
        prop_assert_eq!(misclassification(&z, &p, threshold).unwrap(), rate);
        Ok(())
    })
}

pub fn draw_summaries_are_ordered() -> Result<(), String> {
    run(256, prop::collection::vec(-1e3f64..1e3, 1..300), |draws| {
        let s = DrawSummary::of(&draws);
        prop_assert!(s.sd >= 0.0);
        prop_assert!(s.lower <= s.upper);
        let min = draws.iter().copied().fold(f64::INFINITY, f64::min);
        let max = draws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min <= s.lower && s.upper <= max);
        Ok(())
    })
}

/// Empirical flip rates of a two-state chain driven by the Metropolis rule
/// against the exact transition matrix and detailed balance.
pub fn metropolis_detailed_balance_two_state() -> Result<(), String> {
    let pi: [f64; 2] = [0.3, 0.7];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut state = 0usize;
    let mut visits = [0usize; 2];
    let mut flips = [0usize; 2];
    let steps = 400_000;
    for _ in 0..steps {
        let other = 1 - state;
        visits[state] += 1;
        if metropolis_accept((pi[other] / pi[state]).ln(), &mut rng) {
            flips[state] += 1;
            state = other;
        }
    }
    let p01 = flips[0] as f64 / visits[0] as f64;
    let p10 = flips[1] as f64 / visits[1] as f64;
    ensure((p01 - 1.0).abs() < 1e-12, || format!("P(0->1) = {p01}, exact 1"))?;
    let exact10 = pi[0] / pi[1];
    let se = (exact10 * (1.0 - exact10) / visits[1] as f64).sqrt();
    ensure((p10 - exact10).abs() < 5.0 * se, || format!("P(1->0) = {p10}, exact {exact10}"))?;
    let share = visits[0] as f64 / steps as f64;
    ensure((share - pi[0]).abs() < 0.01, || format!("occupancy {share} vs {}", pi[0]))?;
    ensure((pi[0] * p01 - pi[1] * p10).abs() < 0.01, || "detailed balance violated".into())
}

fn empty_spec(k: usize, p: usize, beta_var: f64) -> ModelSpec {
    let kernel = picar::basis::PrecisionKernel::identity(p);
    let mut priors = Priors::isotropic(k, beta_var);
    priors.tau = GammaPrior { shape: 50.0, rate: 50.0 };
    ModelSpec::new(Family::Binary, DMatrix::zeros(0, k), DMatrix::zeros(0, p), kernel, priors).unwrap()
}

/// Acceptance of a random walk on a normal target, by 2-D quadrature.
fn normal_rw_acceptance(sigma: f64, step: f64) -> f64 {
    let n = 801;
    let h = 16.0 / (n - 1) as f64;
    let phi = |u: f64| (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut total = 0.0;
    for i in 0..n {
        let a = -8.0 + i as f64 * h;
        for j in 0..n {
            let b = -8.0 + j as f64 * h;
            let (x, y) = (sigma * a, sigma * a + step * b);
            let ratio = ((x * x - y * y) / (2.0 * sigma * sigma)).exp().min(1.0);
            total += phi(a) * phi(b) * ratio * h * h;
        }
    }
    total
}

/// With no data the beta block samples its normal prior; the empirical
/// acceptance rate and prior moments match theory.
pub fn flat_likelihood_acceptance_matches_normal_theory() -> Result<(), String> {
    let spec = empty_spec(1, 2, 4.0);
    let z: Vec<f64> = Vec::new();
    let step = 3.0;
    let proposals = Proposals::isotropic(&spec, step, 0.5);
    let mut sampler = Sampler::new(&spec, &z, ChainState::zeros(&spec), proposals).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 200_000;
    let mut accepted = 0usize;
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        accepted += usize::from(sampler.mh_beta(&mut rng));
        let b = sampler.state().beta[0];
        s1 += b;
        s2 += b * b;
    }
    let rate = accepted as f64 / n as f64;
    let exact = normal_rw_acceptance(2.0, step);
    ensure((rate - exact).abs() < 0.01, || format!("acceptance {rate} vs analytic {exact}"))?;
    let mean = s1 / n as f64;
    let var = s2 / n as f64 - mean * mean;
    ensure(mean.abs() < 0.1 && (var - 4.0).abs() < 0.3, || format!("prior moments {mean} {var}"))
}

pub fn rejection_keeps_state_and_posterior_finite() -> Result<(), String> {
    let ds = gen_binary(&Design::reference(120, 30), 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let am = DMatrix::from_fn(120, 6, |_, _| rng.random_range(-0.3..0.3));
    let spec = ModelSpec::new(
        Family::Binary,
        ds.fit.x.clone(),
        am,
        picar::basis::PrecisionKernel::identity(6),
        Priors::isotropic(2, 100.0),
    )
    .unwrap();
    let proposals = Proposals::isotropic(&spec, 0.6, 0.6);
    let mut sampler = Sampler::new(&spec, &ds.fit.z, ChainState::zeros(&spec), proposals).map_err(|e| e.to_string())?;
    for _ in 0..3000 {
        let before = sampler.state().clone();
        let lp_before = sampler.log_posterior();
        let moved = sampler.mh_beta(&mut rng);
        ensure(sampler.log_posterior().is_finite(), || "non-finite log posterior".into())?;
        if !moved {
            ensure(*sampler.state() == before && sampler.log_posterior() == lp_before, || "rejection changed the state".into())?;
        }
        sampler.mh_delta(&mut rng);
        sampler.gibbs_taus(&mut rng);
    }
    Ok(())
}

pub fn ordinal_chain_cutoffs_stay_ordered() -> Result<(), String> {
    let ds = gen_ordinal(&Design::reference(150, 30), &[0.0, 1.0, 2.0], 4).unwrap();
    let cfg = FitConfig {
        mesh: MeshSize::Nodes(120),
        rank: Some(8),
        iterations: 2000,
        burn_in: 500,
        thin: 1,
        ..FitConfig::default()
    };
    let out = fit_dataset(&ds, &cfg, 0).map_err(|e| e.to_string())?;
    for d in 0..out.chain.num_draws() {
        let theta = out.chain.state(d).cutoffs();
        ensure(theta[0] == 0.0 && theta.windows(2).all(|w| w[1] > w[0]), || format!("draw {d}: {theta:?}"))?;
    }
    Ok(())
}

/// One-sample Kolmogorov–Smirnov p-value (asymptotic distribution).
pub fn ks_pvalue(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    let d = sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let t = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * (k as f64 * t).powi(2)).exp();
        p += term;
    }
    p.clamp(0.0, 1.0)
}

/// Gibbs draws of the precision with the coefficients held fixed follow the
/// analytic Gamma conditional, for every prior kernel.
pub fn gibbs_tau_matches_gamma_ks() -> Result<(), String> {
    use statrs::distribution::{ContinuousCDF, Gamma};
    let mesh = build_mesh(&uniform_points(80, 2), 150, 0.1, 2).unwrap();
    let adj = mesh.adjacency();
    let (basis, _) = leading_eigenpairs(&moran_operator(&adj), 20, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let delta: Vec<f64> = (0..20).map(|_| rng.random_range(-2.0..2.0)).collect();
    for kind in [PrecisionKind::Identity, PrecisionKind::Icar, PrecisionKind::Car(0.5)] {
        let kernel = precision_kernel(kind, &adj, &basis).unwrap();
        let prior = GammaPrior::DIFFUSE;
        let mut draws: Vec<f64> = (0..10_000).map(|_| gibbs_tau(&delta, &kernel, prior, &mut rng)).collect();
        let shape = prior.shape + 10.0;
        let rate = prior.rate + 0.5 * kernel.quad_form(&delta);
        let gamma = Gamma::new(shape, rate).unwrap();
        let p = ks_pvalue(&mut draws, |x| gamma.cdf(x));
        ensure(p > 0.01, || format!("{}: KS p = {p}", kind.label()))?;
    }
    Ok(())
}

pub fn ess_matches_iid_and_ar1_oracles() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let normal = rand_distr::StandardNormal;
    let iid: Vec<f64> = (0..10_000).map(|_| rand_distr::Distribution::sample(&normal, &mut rng)).collect();
    let e = ess(&iid).map_err(|e| e.to_string())?.value;
    ensure((e - 1e4).abs() <= 0.15 * 1e4, || format!("iid ESS {e}"))?;
    let rho = 0.9;
    let mut x = 0.0;
    let ar: Vec<f64> = (0..100_000)
        .map(|_| {
            let u: f64 = rand_distr::Distribution::sample(&normal, &mut rng);
            x = rho * x + u;
            x
        })
        .collect();
    let e = ess(&ar).map_err(|e| e.to_string())?.value;
    let exact = 1e5 * (1.0 - rho) / (1.0 + rho);
    ensure((e - exact).abs() <= 0.2 * exact, || format!("AR(1) ESS {e} vs {exact}"))?;
    let flat = ess(&[2.5; 500]).map_err(|e| e.to_string())?;
    ensure(flat.value == 1.0 && flat.degenerate, || "constant series".into())
}

pub fn generators_are_seed_deterministic() -> Result<(), String> {
    let d = Design::reference(60, 20);
    for seed in [1u64, 99] {
        ensure(gen_binary(&d, seed).unwrap() == gen_binary(&d, seed).unwrap(), || "binary".into())?;
        ensure(gen_count(&d, seed).unwrap() == gen_count(&d, seed).unwrap(), || "count".into())?;
        let c = [0.0, 1.0, 2.0];
        ensure(gen_ordinal(&d, &c, seed).unwrap() == gen_ordinal(&d, &c, seed).unwrap(), || "ordinal".into())?;
        let t = REFERENCE_CROSS_COVARIANCE;
        ensure(gen_svc(&d, &t, seed).unwrap() == gen_svc(&d, &t, seed).unwrap(), || "svc".into())?;
    }
    ensure(gen_binary(&d, 1).unwrap() != gen_binary(&d, 2).unwrap(), || "seeds collide".into())
}

fn small_chain(seed: u64) -> picar::mcmc::Chain {
    let spec = empty_spec(2, 3, 1.0);
    let proposals = Proposals::isotropic(&spec, 0.5, 0.5);
    let config = ChainConfig { iterations: 600, burn_in: 100, thin: 2, seed, adapt: true };
    run_chain(&spec, &[], ChainState::zeros(&spec), proposals, &config).unwrap()
}

pub fn chains_are_seed_deterministic() -> Result<(), String> {
    ensure(small_chain(5).same_draws(&small_chain(5)), || "same seed, different draws".into())?;
    ensure(!small_chain(5).same_draws(&small_chain(6)), || "different seeds, same draws".into())
}

fn small_fit() -> picar::pipeline::FitOutput {
    let ds = gen_binary(&Design::reference(200, 60), 12).unwrap();
    let cfg = FitConfig {
        mesh: MeshSize::Nodes(200),
        max_rank: 30,
        iterations: 1500,
        burn_in: 500,
        thin: 2,
        ..FitConfig::default()
    };
    fit_dataset(&ds, &cfg, 0).unwrap()
}

/// Rank screen, chain and prediction do not depend on the worker count.
pub fn fits_are_thread_count_invariant() -> Result<(), String> {
    let pool = |threads| rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let one = pool(1).install(small_fit);
    let four = pool(4).install(small_fit);
    ensure(one.rank == four.rank, || "rank differs".into())?;
    ensure(one.chain.same_draws(&four.chain), || "draws differ".into())?;
    ensure(one.prediction == four.prediction, || "predictions differ".into())
}

pub fn predict_is_pure() -> Result<(), String> {
    let out = small_fit();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = out.chain.delta.ncols();
    let am = DMatrix::from_fn(25, p, |_, _| rng.random_range(-0.2..0.2));
    let x = DMatrix::from_fn(25, out.chain.beta.ncols(), |_, _| rng.random_range(-1.0..1.0));
    let a = predict(&out.chain, &am, &x).map_err(|e| e.to_string())?;
    let b = predict(&out.chain, &am, &x).map_err(|e| e.to_string())?;
    ensure(a == b, || "repeated predictions differ".into())
}
