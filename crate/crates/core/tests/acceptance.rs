//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wbary::barycenter::{empirical_barycenter_1d, empirical_barycenter_fixed_support, FixedSupportOptions};
use wbary::duality::{
    brenier_recover, c_transform, closed_form_check, closed_form_dual, dual_objective, duality_gap, primal_objective,
    DualFamily, GridFunction,
};
use wbary::experiments::{
    consistency_run, envelope_check, envelope_thresholds, euclid_vs_wasserstein, population_law, rate_fit,
    BernsteinConstants, ConsistencyConfig, EuclidOptions, ENVELOPE_LEVELS,
};
use wbary::models::{
    make_affine_family, make_location_scale_1d, make_shift_family, population_barycenter, sample_theta, templates,
    DeformableFamily, DensityKind, MemberScheme, ParamMap, Quadrature,
};
use wbary::transport1d::{barycenter_quantile, w2sq_1d, Univariate};
use wbary::transport_exact::{w2sq_lp, w2sq_permutation_oracle};
use wbary::{AffineMap, DiscreteMeasure, DomainBox, GridDensity, GridGeometry};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn shift_family(eps: f64) -> DeformableFamily {
    make_shift_family(
        templates::triangle(-0.5, 0.5, 400).unwrap(),
        DensityKind::Uniform,
        DomainBox::cube(1, -eps, eps).unwrap(),
    )
    .unwrap()
}

fn c1_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let dom = DomainBox::cube(1, -1.0, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let m = rng.random_range(1..=6);
        let mut pts = || (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect::<Vec<f64>>();
        let a = DiscreteMeasure::uniform(dom.clone(), pts()).unwrap();
        let b = DiscreteMeasure::uniform(dom.clone(), pts()).unwrap();
        let q = w2sq_1d(&a, &b).unwrap();
        let lp = w2sq_lp(&a, &b).unwrap().cost;
        let or = w2sq_permutation_oracle(&a, &b).unwrap();
        worst = worst.max((q - lp).abs()).max((q - or).abs()).max((lp - or).abs());
    }
    check(worst <= 1e-9, format!("200 pairs, max disagreement {worst:.2e} (tol 1e-9)"))
}

fn c2_location_scale() -> Outcome {
    let template = templates::triangle(-1.0, 1.0, 400).unwrap();
    let theta_box = DomainBox::from_intervals(&[[1.0, 2.0], [-1.0, 1.0]]).unwrap();
    let fam = make_location_scale_1d(template.clone(), DensityKind::Uniform, theta_box).unwrap();
    let quad = Quadrature::midpoint(fam.theta_box(), &[33, 33]).unwrap();
    let law = fam.law(&quad).unwrap();
    let pop = population_barycenter(&fam, &quad, None).unwrap();
    let fbar = template.quantile_fn().unwrap();
    let pop_q = pop.quantile_fn().unwrap();
    // Quantile averaging over the members at the quadrature nodes.
    let members: Vec<GridDensity> = law.nodes.iter().map(|t| fam.member_density(t, None).unwrap()).collect();
    let refs: Vec<&dyn Univariate> = members.iter().map(|m| m as &dyn Univariate).collect();
    let avg_q = barycenter_quantile(&refs, &law.probs).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let y = (i as f64 + 0.5) / 1000.0;
        let expected = 1.5 * fbar.eval(y).unwrap();
        worst = worst.max((pop_q.eval(y).unwrap() - expected).abs());
        worst = worst.max((avg_q.eval(y).unwrap() - expected).abs());
    }
    let thetas = sample_theta(&fam, 11, 10_000).unwrap();
    let sampled: Vec<DiscreteMeasure> =
        thetas.iter().map(|t| fam.member(t, &MemberScheme::Lagrangian).unwrap()).collect();
    let emp = empirical_barycenter_1d(&sampled).unwrap();
    let w2 = w2sq_1d(&emp, &pop).unwrap().sqrt();
    check(
        worst <= 1e-6 && w2 <= 0.02,
        format!("max quantile error {worst:.2e} (tol 1e-6), W2(empirical n=1e4, closed form) {w2:.4} (tol 0.02)"),
    )
}

fn c3_shift_duality() -> Outcome {
    let fam = shift_family(0.2);
    let law = population_law(&fam, 65).unwrap();
    let geom = fam.omega_grid(&[512]).unwrap();
    let scheme = MemberScheme::Grid(geom.clone());
    let c = closed_form_check(&fam, &law, &geom, &scheme).unwrap();
    let expected = 0.04 / 6.0;
    let rel_primal = (c.primal - expected).abs() / expected;
    let rel_dual = (c.dual - c.primal).abs() / c.primal;
    let df = closed_form_dual(&fam, &law, &geom).unwrap();
    let wrong = fam.member(&[0.2], &scheme).unwrap();
    let gap = duality_gap(&wrong, &df, &fam, &scheme).unwrap();
    check(
        rel_primal <= 0.02 && rel_dual <= 0.02 && gap > 0.0,
        format!(
            "primal {:.6} vs {expected:.6} (rel {rel_primal:.2e}), dual rel {rel_dual:.2e}, wrong-center gap {gap:.3e} > 0",
            c.primal
        ),
    )
}

fn c4_brenier() -> Outcome {
    let fam = shift_family(0.2);
    let law = population_law(&fam, 65).unwrap();
    let geom = fam.omega_grid(&[512]).unwrap();
    let scheme = MemberScheme::Grid(geom.clone());
    let df = closed_form_dual(&fam, &law, &geom).unwrap();
    let target = fam.image_measure(&fam.mean_map(&law).unwrap(), &scheme).unwrap();
    let h = geom.max_cell_size();
    let mut worst: f64 = 0.0;
    let mut min_dd = f64::INFINITY;
    for k in [2usize, 17, 32, 47, 62] {
        let rec = brenier_recover(&df, &fam, k, &scheme).unwrap();
        worst = worst.max(w2sq_1d(&rec.pushed, &target).unwrap().sqrt());
        min_dd = min_dd.min(rec.min_second_difference);
    }
    check(
        worst <= 2.0 * h && min_dd >= -1e-4,
        format!("max W2(pushed, barycenter) {worst:.2e} (tol {:.2e}), min second difference {min_dd:.2e}", 2.0 * h),
    )
}

fn affine_2d_family() -> DeformableFamily {
    let zero = DMatrix::zeros(2, 2);
    let phi = ParamMap::linear(
        DMatrix::identity(2, 2),
        vec![DMatrix::identity(2, 2) * 0.2, zero.clone(), zero],
        DVector::zeros(2),
        vec![DVector::zeros(2), DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0])],
    )
    .unwrap();
    let theta_box = DomainBox::from_intervals(&[[-1.0, 1.0], [-0.1, 0.1], [-0.1, 0.1]]).unwrap();
    let template = templates::bump(&DomainBox::cube(2, -0.5, 0.5).unwrap(), &[25, 25]).unwrap();
    make_affine_family(phi, DensityKind::Uniform, theta_box, template).unwrap()
}

fn c5_affine() -> Outcome {
    let fam = affine_2d_family();
    let quad = Quadrature::midpoint(fam.theta_box(), &[5, 5, 5]).unwrap();
    let law = fam.law(&quad).unwrap();
    let geom = fam.omega_grid(&[128, 128]).unwrap();
    let c = closed_form_check(&fam, &law, &geom, &MemberScheme::Lagrangian).unwrap();
    let rel = c.relative_gap();
    let pop = population_barycenter(&fam, &quad, None).unwrap();
    let direct = fam.template().pushforward(&fam.mean_map(&law).unwrap(), None).unwrap();
    let exact = pop == direct;
    let thetas = sample_theta(&fam, 5, 20).unwrap();
    let members: Vec<DiscreteMeasure> =
        thetas.iter().map(|t| fam.member(t, &MemberScheme::Lagrangian).unwrap()).collect();
    let res = empirical_barycenter_fixed_support(&members, None, &FixedSupportOptions::default()).unwrap();
    let closed = fam.image_measure(&fam.sample_mean_map(&thetas).unwrap(), &MemberScheme::Lagrangian).unwrap();
    let w2 = w2sq_lp(&res.measure, &closed).unwrap().cost.max(0.0).sqrt();
    let h = geom.max_cell_size();
    check(
        rel <= 0.03 && exact && w2 <= 3.0 * h,
        format!(
            "relative gap {rel:.2e} (tol 3e-2), closed form exact {exact}, fixed support W2 {w2:.2e} after {} iterations (tol {:.2e})",
            res.iterations,
            3.0 * h
        ),
    )
}

fn c6_rate() -> Outcome {
    let fam = shift_family(0.2);
    let cfg = ConsistencyConfig::new(vec![8, 16, 32, 64, 128, 256, 512, 1024], 200, 7, 1);
    let report = consistency_run(&fam, &cfg).unwrap();
    let fit = rate_fit(&report).unwrap();
    let law = population_law(&fam, cfg.quad_nodes).unwrap();
    let constants = BernsteinConstants::from_family(&fam, &law).unwrap();
    let ts = envelope_thresholds(&report, &ENVELOPE_LEVELS);
    let rows = envelope_check(&report, &constants, &ts);
    let bad = rows.iter().filter(|r| !r.ok).count();
    check(
        (-1.2..=-0.8).contains(&fit.slope) && bad == 0 && report.verify(),
        format!(
            "slope {:.3} (CI {:.3}..{:.3}, band [-1.2, -0.8]), envelope violations {bad}/{}",
            fit.slope,
            fit.ci.0,
            fit.ci.1,
            rows.len()
        ),
    )
}

fn c7_euclid() -> Outcome {
    let fam = shift_family(0.3);
    let rec = euclid_vs_wasserstein(&fam, 10_000, 3, &EuclidOptions::default_for(1)).unwrap();
    check(
        rec.l1_conv_template >= 0.1 && rec.l1_euclid_conv <= 0.02 && rec.w2_wass_template <= 0.01,
        format!(
            "L1(conv, template) {:.3} (>= 0.1), L1(euclid, conv) {:.2e} (tol 0.02), W2(wass, template) {:.2e} (tol 0.01)",
            rec.l1_conv_template, rec.l1_euclid_conv, rec.w2_wass_template
        ),
    )
}

fn runner() -> TestRunner {
    TestRunner::new_with_rng(Config { cases: 100, failure_persistence: None, ..Config::default() }, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn points(d: usize, max: usize) -> impl Strategy<Value = Vec<f64>> {
    (1..=max).prop_flat_map(move |m| prop::collection::vec(-1.0f64..1.0, m * d))
}

fn grid_fn(cells: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, cells)
}

fn c8_properties() -> Outcome {
    let dom1 = DomainBox::cube(1, -1.0, 1.0).unwrap();
    let dom2 = DomainBox::cube(2, -1.0, 1.0).unwrap();
    let mut failures = Vec::new();
    let mut record = |name: &str, r: Result<(), String>| {
        if let Err(e) = r {
            failures.push(format!("{name}: {e}"));
        }
    };

    let d1 = dom1.clone();
    record(
        "1d metric axioms",
        runner()
            .run(&(points(1, 6), points(1, 6), points(1, 6)), |(a, b, c)| {
                let (a, b, c) = (
                    DiscreteMeasure::uniform(d1.clone(), a).unwrap(),
                    DiscreteMeasure::uniform(d1.clone(), b).unwrap(),
                    DiscreteMeasure::uniform(d1.clone(), c).unwrap(),
                );
                let ab = w2sq_1d(&a, &b).unwrap();
                prop_assert_eq!(ab, w2sq_1d(&b, &a).unwrap());
                prop_assert_eq!(w2sq_1d(&a, &a).unwrap(), 0.0);
                let (x, y, z) = (ab.sqrt(), w2sq_1d(&b, &c).unwrap().sqrt(), w2sq_1d(&a, &c).unwrap().sqrt());
                prop_assert!(z <= x + y + 1e-9);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    let d2 = dom2.clone();
    record(
        "lp metric axioms",
        runner()
            .run(&(points(2, 5), points(2, 5), points(2, 5)), |(a, b, c)| {
                let (a, b, c) = (
                    DiscreteMeasure::uniform(d2.clone(), a).unwrap(),
                    DiscreteMeasure::uniform(d2.clone(), b).unwrap(),
                    DiscreteMeasure::uniform(d2.clone(), c).unwrap(),
                );
                let ab = w2sq_lp(&a, &b).unwrap().cost;
                prop_assert!((ab - w2sq_lp(&b, &a).unwrap().cost).abs() <= 1e-9);
                prop_assert!(w2sq_lp(&a, &a).unwrap().cost.abs() <= 1e-12);
                let (x, y, z) =
                    (ab.sqrt(), w2sq_lp(&b, &c).unwrap().cost.sqrt(), w2sq_lp(&a, &c).unwrap().cost.sqrt());
                prop_assert!(z <= x + y + 1e-8);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    let geom = GridGeometry::covering(&DomainBox::cube(1, -1.0, 1.0).unwrap(), &[24]).unwrap();
    let g2 = geom.clone();
    record(
        "c-transform order reversal",
        runner()
            .run(&(grid_fn(24), prop::collection::vec(0.0f64..1.0, 24), 0.1f64..5.0), |(f, bump, s)| {
                let lo = GridFunction::new(g2.clone(), f.clone()).unwrap();
                let hi = GridFunction::new(g2.clone(), f.iter().zip(&bump).map(|(a, b)| a + b).collect()).unwrap();
                let (sl, sh) = (c_transform(&lo, s).unwrap(), c_transform(&hi, s).unwrap());
                for (a, b) in sl.values().iter().zip(sh.values()) {
                    prop_assert!(a >= b);
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    let g3 = geom.clone();
    record(
        "c-transform triple collapse",
        runner()
            .run(&(grid_fn(24), 0.1f64..5.0), |(f, s)| {
                let f = GridFunction::new(g3.clone(), f).unwrap();
                let s1 = c_transform(&f, s).unwrap();
                let s3 = c_transform(&c_transform(&s1, s).unwrap(), s).unwrap();
                for (a, b) in s1.values().iter().zip(s3.values()) {
                    prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    let fam = make_shift_family(
        templates::triangle(-0.5, 0.5, 16).unwrap(),
        DensityKind::Uniform,
        DomainBox::cube(1, -0.2, 0.2).unwrap(),
    )
    .unwrap();
    let law = population_law(&fam, 5).unwrap();
    let dgeom = fam.omega_grid(&[16]).unwrap();
    let omega = fam.omega().clone();
    // ν lives on dual grid points, where the grid c-transform bound applies.
    let nu_strategy = prop::collection::vec((0usize..16, 0.05f64..1.0), 1..6);
    record(
        "weak duality",
        runner()
            .run(&(prop::collection::vec(grid_fn(16), 5), nu_strategy), |(fs, atoms)| {
                let mut fs = fs;
                let total: f64 = law.weights.iter().sum();
                for i in 0..16 {
                    let m: f64 = (0..5).map(|k| law.weights[k] * fs[k][i]).sum::<f64>() / total;
                    for f in fs.iter_mut() {
                        f[i] -= m;
                    }
                }
                let df = DualFamily::new(law.clone(), dgeom.clone(), fs).unwrap();
                let pts: Vec<f64> = atoms.iter().flat_map(|(i, _)| dgeom.center(*i)).collect();
                let w: Vec<f64> = atoms.iter().map(|a| a.1).collect();
                let sw: f64 = w.iter().sum();
                let nu = DiscreteMeasure::new(omega.clone(), pts, w.iter().map(|x| x / sw).collect()).unwrap();
                let p = primal_objective(&nu, &fam, &law, &MemberScheme::Lagrangian).unwrap();
                let d = dual_objective(&df, &fam, &MemberScheme::Lagrangian).unwrap();
                prop_assert!(d <= p + 1e-6, "dual {} > primal {}", d, p);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    let d4 = dom2.clone();
    record(
        "monotone fixed-support traces",
        runner()
            .run(&prop::collection::vec(points(2, 4), 2..4), |inputs| {
                let ms: Vec<DiscreteMeasure> =
                    inputs.into_iter().map(|p| DiscreteMeasure::uniform(d4.clone(), p).unwrap()).collect();
                let res = empirical_barycenter_fixed_support(&ms, None, &FixedSupportOptions { max_iter: 30, tol: None })
                    .unwrap();
                for w in res.trace.windows(2) {
                    prop_assert!(w[1] <= w[0] + 1e-9 + 1e-12 * w[0].abs());
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    let tgeom = GridGeometry::covering(&DomainBox::cube(1, 0.0, 1.0).unwrap(), &[40]).unwrap();
    let base = GridDensity::from_fn(tgeom, |x| 1.0 + x[0] * x[0]).unwrap();
    record(
        "push-forward composition",
        runner()
            .run(&(0.5f64..2.0, -1.0f64..1.0, 0.5f64..2.0, -1.0f64..1.0), |(a1, b1, a2, b2)| {
                let t1 = AffineMap::scaling(a1, &[b1]).unwrap();
                let t2 = AffineMap::scaling(a2, &[b2]).unwrap();
                let two = base.pushforward(&t1, None).unwrap().pushforward(&t2, None).unwrap();
                let one = base.pushforward(&t1.then(&t2).unwrap(), None).unwrap();
                prop_assert!(two.geometry().approx_eq(one.geometry()));
                prop_assert!(two.l1_distance(&one).unwrap() <= 1e-9);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    let sfam = shift_family(0.2);
    record(
        "determinism",
        runner()
            .run(&(any::<u64>(), 1usize..4), |(seed, reps)| {
                let cfg = ConsistencyConfig::new(vec![4, 9], reps, seed, 1);
                let a = consistency_run(&sfam, &cfg).unwrap();
                let b = consistency_run(&sfam, &cfg).unwrap();
                prop_assert_eq!(a.records_csv(), b.records_csv());
                prop_assert_eq!(&a.checksum, &b.checksum);
                prop_assert!(a.verify());
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    check(
        failures.is_empty(),
        if failures.is_empty() { "8 property suites x 100 cases".to_string() } else { failures.join("; ") },
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("C1 oracle equivalence", c1_oracles),
        ("C2 location-scale closed form", c2_location_scale),
        ("C3 shift-model strong duality", c3_shift_duality),
        ("C4 potential recovery", c4_brenier),
        ("C5 affine model", c5_affine),
        ("C6 consistency and rate", c6_rate),
        ("C7 Euclidean inconsistency", c7_euclid),
        ("C8 invariant suites", c8_properties),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.starts_with(o.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {name}: {msg} [{secs:.1}s]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
