use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use wbary::duality::{
    affine_dual_family, affine_dual_maximizer, brenier_recover, c_transform, c_transform_at, c_transform_naive,
    closed_form_check, closed_form_dual, dual_objective, duality_gap, node_terms, primal_objective,
    shift_dual_family, DualFamily, GridFunction,
};
use wbary::experiments::population_law;
use wbary::models::{
    make_affine_family, make_shift_family, templates, DeformableFamily, DensityKind, MemberScheme, ParamMap,
};
use wbary::transport1d::w2sq_1d;
use wbary::{DiscreteMeasure, DomainBox, Error, GridGeometry};

fn shift_family(cells: usize, eps: f64) -> DeformableFamily {
    make_shift_family(
        templates::triangle(-0.5, 0.5, cells).unwrap(),
        DensityKind::Uniform,
        DomainBox::cube(1, -eps, eps).unwrap(),
    )
    .unwrap()
}

/// `x -> θ x` with `θ ~ Uniform[1, 2]` on a triangle template.
fn scale_family(cells: usize) -> DeformableFamily {
    let phi = ParamMap::linear(
        DMatrix::zeros(1, 1),
        vec![DMatrix::identity(1, 1)],
        DVector::zeros(1),
        vec![DVector::zeros(1)],
    )
    .unwrap();
    make_affine_family(
        phi,
        DensityKind::Uniform,
        DomainBox::cube(1, 1.0, 2.0).unwrap(),
        templates::triangle(-0.5, 0.5, cells).unwrap(),
    )
    .unwrap()
}

fn line_grid(lo: f64, hi: f64, n: usize) -> GridGeometry {
    GridGeometry::covering(&DomainBox::cube(1, lo, hi).unwrap(), &[n]).unwrap()
}

#[test]
fn c_transform_of_zero_is_zero() {
    for geom in [line_grid(-1.0, 1.0, 40), GridGeometry::covering(&DomainBox::cube(2, 0.0, 1.0).unwrap(), &[7, 9]).unwrap()] {
        let s = c_transform(&GridFunction::zeros(geom), 3.0).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn c_transform_of_linear_function_is_affine() {
    // f(y) = −c v y gives S f(x) = c v x − c v²/2, attained at y = x − v.
    let geom = line_grid(-1.0, 1.0, 200);
    let (c, v) = (2.5, 0.1);
    let f = GridFunction::from_fn(geom.clone(), |y| -c * v * y[0]).unwrap();
    let s = c_transform(&f, c).unwrap();
    for i in 10..200 {
        let x = geom.center(i)[0];
        let expected = c * v * x - 0.5 * c * v * v;
        assert!((s.values()[i] - expected).abs() < 1e-12, "x = {x}");
    }
}

#[test]
fn c_transform_in_the_plane_matches_brute_force() {
    let geom = GridGeometry::new(vec![-1.0, 0.0], vec![0.2, 0.25], vec![10, 8]).unwrap();
    let f = GridFunction::from_fn(geom.clone(), |x| (3.0 * x[0]).sin() + x[1] * x[1] - x[0] * x[1]).unwrap();
    let fast = c_transform(&f, 1.7).unwrap();
    let slow = c_transform_naive(&f, 1.7).unwrap();
    for (a, b) in fast.values().iter().zip(slow.values()) {
        assert!((a - b).abs() < 1e-12);
    }
    let at = c_transform_at(&f, 1.7, &geom.centers()).unwrap();
    for (a, b) in at.iter().zip(slow.values()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn c_transform_rejects_bad_scales() {
    let f = GridFunction::zeros(line_grid(0.0, 1.0, 4));
    for s in [0.0, -1.0, f64::NAN, f64::INFINITY] {
        assert!(matches!(c_transform(&f, s), Err(Error::Scale(_))));
        assert!(matches!(c_transform_at(&f, s, &[0.5]), Err(Error::Scale(_))));
    }
}

#[test]
fn zero_sum_constraint_is_enforced() {
    let fam = shift_family(64, 0.2);
    let law = population_law(&fam, 5).unwrap();
    let geom = fam.omega_grid(&[16]).unwrap();
    let f = vec![vec![1.0; 16]; 5];
    assert!(matches!(DualFamily::new(law.clone(), geom.clone(), f), Err(Error::Constraint(_))));
    let df = DualFamily::zero(law, geom);
    assert!(matches!(df.add_constants(&[1.0, 0.0, 0.0, 0.0, 0.0]), Err(Error::Constraint(_))));
}

#[test]
fn primal_at_the_barycenter_is_half_the_variance() {
    // Shifts of the same atoms: W² = (θ − Eθ)² exactly, so J = midpoint variance / 2.
    let (eps, nodes) = (0.2, 33);
    let fam = shift_family(200, eps);
    let law = population_law(&fam, nodes).unwrap();
    let nu = fam.image_measure(&fam.mean_map(&law).unwrap(), &MemberScheme::Lagrangian).unwrap();
    let j = primal_objective(&nu, &fam, &law, &MemberScheme::Lagrangian).unwrap();
    let midpoint_variance = eps * eps / 3.0 * (1.0 - 1.0 / (nodes * nodes) as f64);
    assert!((j - 0.5 * midpoint_variance).abs() < 1e-12, "{j}");
    assert!((j - eps * eps / 6.0).abs() / (eps * eps / 6.0) < 1e-3);
}

#[test]
fn primal_of_a_concentrated_family_is_small() {
    let fam = make_shift_family(
        templates::triangle(-0.5, 0.5, 200).unwrap(),
        DensityKind::TruncGauss { mean: vec![0.0], sd: vec![1e-3] },
        DomainBox::cube(1, -0.2, 0.2).unwrap(),
    )
    .unwrap();
    let law = population_law(&fam, 401).unwrap();
    let nu = fam.member(&[0.0], &MemberScheme::Lagrangian).unwrap();
    let j = primal_objective(&nu, &fam, &law, &MemberScheme::Lagrangian).unwrap();
    assert!((0.0..1e-5).contains(&j), "{j}");
}

#[test]
fn dual_of_zero_family_is_zero_and_gap_is_primal() {
    let fam = shift_family(200, 0.2);
    let law = population_law(&fam, 9).unwrap();
    let geom = fam.omega_grid(&[128]).unwrap();
    let scheme = MemberScheme::Grid(geom.clone());
    let h = geom.max_cell_size();
    let df = DualFamily::zero(law.clone(), geom);
    assert_eq!(dual_objective(&df, &fam, &scheme).unwrap(), 0.0);
    // Off-grid atoms see the distance to the nearest grid point.
    let off_grid = dual_objective(&df, &fam, &MemberScheme::Lagrangian).unwrap();
    let g_max = law.density.iter().copied().fold(0.0, f64::max);
    assert!(off_grid >= 0.0 && off_grid <= 0.5 * g_max * (0.5 * h).powi(2), "{off_grid}");
    let nu = fam.image_measure(&fam.mean_map(&law).unwrap(), &scheme).unwrap();
    let gap = duality_gap(&nu, &df, &fam, &scheme).unwrap();
    let primal = primal_objective(&nu, &fam, &law, &scheme).unwrap();
    assert_eq!(gap, primal);
    assert!(gap > 0.0);
}

#[test]
fn shift_maximizer_closes_the_gap() {
    let fam = shift_family(400, 0.2);
    let law = population_law(&fam, 33).unwrap();
    let geom = fam.omega_grid(&[256]).unwrap();
    let check = closed_form_check(&fam, &law, &geom, &MemberScheme::Grid(geom.clone())).unwrap();
    assert!(check.relative_gap() < 1e-2, "{check:?}");
    let sum: (f64, f64) = check.terms.iter().fold((0.0, 0.0), |a, t| (a.0 + t.0, a.1 + t.1));
    assert!((sum.0 - check.primal).abs() < 1e-15 && (sum.1 - check.dual).abs() < 1e-15);
}

#[test]
fn off_centre_candidate_has_positive_gap() {
    let fam = shift_family(400, 0.2);
    let law = population_law(&fam, 33).unwrap();
    let geom = fam.omega_grid(&[256]).unwrap();
    let scheme = MemberScheme::Grid(geom.clone());
    let df = shift_dual_family(&fam, &law, &geom).unwrap();
    let center = fam.image_measure(&fam.mean_map(&law).unwrap(), &scheme).unwrap();
    let member = fam.member(&[0.15], &scheme).unwrap();
    let g_center = duality_gap(&center, &df, &fam, &scheme).unwrap();
    let g_member = duality_gap(&member, &df, &fam, &scheme).unwrap();
    assert!(g_member > 0.0 && g_member > 10.0 * g_center.abs(), "{g_member} vs {g_center}");
}

#[test]
fn affine_maximizer_for_the_scale_family() {
    // Ā = 1.5 and ĝ = 1, so f_θ(x) = −(θ/1.5 − 1) x² / 2.
    let fam = scale_family(200);
    let law = population_law(&fam, 33).unwrap();
    let geom = fam.omega_grid(&[64]).unwrap();
    for theta in [1.0, 1.25, 2.0] {
        let f = affine_dual_maximizer(&fam, &law, &[theta], &geom).unwrap();
        for i in 0..geom.len() {
            let x = geom.center(i)[0];
            let expected = -0.5 * (theta / 1.5 - 1.0) * x * x;
            assert!((f.values()[i] - expected).abs() < 1e-12, "θ = {theta}, x = {x}");
        }
    }
    let at_mean = affine_dual_maximizer(&fam, &law, &[1.5], &geom).unwrap();
    assert!(at_mean.values().iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn affine_maximizer_reduces_to_the_linear_form_for_shifts() {
    let fam = shift_family(200, 0.2);
    let law = population_law(&fam, 9).unwrap();
    let geom = fam.omega_grid(&[50]).unwrap();
    let quad = affine_dual_family(&fam, &law, &geom).unwrap();
    let lin = shift_dual_family(&fam, &law, &geom).unwrap();
    for k in 0..law.len() {
        for (a, b) in quad.values(k).iter().zip(lin.values(k)) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}

#[test]
fn affine_maximizer_closes_the_gap_for_the_scale_family() {
    let fam = scale_family(400);
    let law = population_law(&fam, 33).unwrap();
    let geom = fam.omega_grid(&[512]).unwrap();
    let check = closed_form_check(&fam, &law, &geom, &MemberScheme::Grid(geom.clone())).unwrap();
    assert!(check.relative_gap() < 2e-2, "{check:?}");
    assert!(check.dual <= check.primal + 1e-6);
}

#[test]
fn linear_maximizer_needs_a_shift_family() {
    let fam = scale_family(50);
    let law = population_law(&fam, 5).unwrap();
    let geom = fam.omega_grid(&[16]).unwrap();
    assert!(matches!(shift_dual_family(&fam, &law, &geom), Err(Error::Family(_))));
}

#[test]
fn brenier_with_zero_dual_is_the_identity() {
    let fam = shift_family(200, 0.2);
    let law = population_law(&fam, 9).unwrap();
    let geom = fam.omega_grid(&[128]).unwrap();
    let scheme = MemberScheme::Grid(geom.clone());
    let df = DualFamily::zero(law.clone(), geom.clone());
    for k in [0, 4, 8] {
        let rec = brenier_recover(&df, &fam, k, &scheme).unwrap();
        for i in 0..geom.len() {
            let x = geom.center(i)[0];
            assert!((rec.potential.values()[i] - 0.5 * x * x).abs() < 1e-14);
        }
        let member = fam.member(&law.nodes[k], &scheme).unwrap();
        assert!(w2sq_1d(&rec.pushed, &member).unwrap() < 1e-24);
        assert!(rec.convex);
    }
}

#[test]
fn brenier_for_shifts_moves_members_to_the_mean() {
    let fam = shift_family(400, 0.2);
    let law = population_law(&fam, 17).unwrap();
    let geom = fam.omega_grid(&[256]).unwrap();
    let scheme = MemberScheme::Grid(geom.clone());
    let df = closed_form_dual(&fam, &law, &geom).unwrap();
    let target = fam.image_measure(&fam.mean_map(&law).unwrap(), &scheme).unwrap();
    let h = geom.max_cell_size();
    for k in [1, 8, 15] {
        let rec = brenier_recover(&df, &fam, k, &scheme).unwrap();
        let w = w2sq_1d(&rec.pushed, &target).unwrap().sqrt();
        assert!(w <= 2.0 * h, "node {k}: {w} > {}", 2.0 * h);
        assert!(rec.min_second_difference >= -1e-4);
    }
}

#[test]
fn brenier_for_the_scale_family_recovers_the_barycenter() {
    let fam = scale_family(400);
    let law = population_law(&fam, 17).unwrap();
    let geom = fam.omega_grid(&[256]).unwrap();
    let scheme = MemberScheme::Grid(geom.clone());
    let df = closed_form_dual(&fam, &law, &geom).unwrap();
    let target = fam.image_measure(&fam.mean_map(&law).unwrap(), &scheme).unwrap();
    let h = geom.max_cell_size();
    for k in [0, 8, 16] {
        let rec = brenier_recover(&df, &fam, k, &scheme).unwrap();
        let w = w2sq_1d(&rec.pushed, &target).unwrap().sqrt();
        assert!(w <= 2.0 * h, "node {k}: {w} > {}", 2.0 * h);
        assert!(rec.convex);
    }
}

#[test]
fn brenier_rejects_unknown_nodes() {
    let fam = shift_family(50, 0.2);
    let law = population_law(&fam, 3).unwrap();
    let geom = fam.omega_grid(&[16]).unwrap();
    let df = DualFamily::zero(law, geom.clone());
    assert!(matches!(brenier_recover(&df, &fam, 3, &MemberScheme::Grid(geom)), Err(Error::Range(_))));
}

#[test]
fn node_terms_sum_to_the_objectives() {
    let fam = shift_family(200, 0.2);
    let law = population_law(&fam, 7).unwrap();
    let geom = fam.omega_grid(&[100]).unwrap();
    let scheme = MemberScheme::Grid(geom.clone());
    let df = shift_dual_family(&fam, &law, &geom).unwrap();
    let nu = fam.member(&[0.05], &scheme).unwrap();
    let terms = node_terms(&nu, &df, &fam, &scheme).unwrap();
    let p: f64 = terms.iter().map(|t| t.0).sum();
    let d: f64 = terms.iter().map(|t| t.1).sum();
    assert!((p - primal_objective(&nu, &fam, &law, &scheme).unwrap()).abs() < 1e-15);
    assert!((d - dual_objective(&df, &fam, &scheme).unwrap()).abs() < 1e-15);
}

#[test]
fn normalization_anchors_at_the_box_center_without_the_origin() {
    let fam = scale_family(50);
    let law = population_law(&fam, 5).unwrap();
    // A grid away from the origin.
    let geom = line_grid(1.0, 2.0, 10);
    let df = affine_dual_family(&fam, &law, &geom).unwrap();
    let anchor = geom.locate(&[1.5]).unwrap();
    let n = df.normalized().unwrap();
    for k in 0..law.len() {
        assert!(n.values(k)[anchor].abs() < 1e-15);
    }
}

fn grid_fn(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn c_transform_is_order_reversing(f in grid_fn(30), bump in prop::collection::vec(0.0f64..1.0, 30), s in 0.1f64..10.0) {
        let geom = line_grid(-1.0, 1.0, 30);
        let g: Vec<f64> = f.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let sf = c_transform(&GridFunction::new(geom.clone(), f).unwrap(), s).unwrap();
        let sg = c_transform(&GridFunction::new(geom, g).unwrap(), s).unwrap();
        for (a, b) in sf.values().iter().zip(sg.values()) {
            prop_assert!(a >= b);
        }
    }

    #[test]
    fn double_transform_dominates(f in grid_fn(48), s in 0.1f64..10.0) {
        let geom = GridGeometry::new(vec![0.0, 0.0], vec![0.125, 0.25], vec![8, 6]).unwrap();
        let f = GridFunction::new(geom, f).unwrap();
        let ss = c_transform(&c_transform(&f, s).unwrap(), s).unwrap();
        for (a, b) in ss.values().iter().zip(f.values()) {
            prop_assert!(*a >= b - 1e-12 * (1.0 + b.abs()), "{} < {}", a, b);
        }
    }

    #[test]
    fn triple_transform_collapses(f in grid_fn(48), s in 0.1f64..10.0) {
        let geom = GridGeometry::new(vec![0.0, 0.0], vec![0.125, 0.25], vec![8, 6]).unwrap();
        let s1 = c_transform(&GridFunction::new(geom, f).unwrap(), s).unwrap();
        let s3 = c_transform(&c_transform(&s1, s).unwrap(), s).unwrap();
        for (a, b) in s1.values().iter().zip(s3.values()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn separable_transform_matches_brute_force(f in grid_fn(35), s in 0.1f64..10.0) {
        let geom = GridGeometry::new(vec![-1.0, 2.0], vec![0.3, 0.2], vec![5, 7]).unwrap();
        let f = GridFunction::new(geom, f).unwrap();
        let fast = c_transform(&f, s).unwrap();
        let slow = c_transform_naive(&f, s).unwrap();
        for (a, b) in fast.values().iter().zip(slow.values()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn transform_is_lipschitz_across_cells(f in grid_fn(40), s in 0.1f64..10.0) {
        let geom = line_grid(-1.0, 1.0, 40);
        let sf = c_transform(&GridFunction::new(geom.clone(), f).unwrap(), s).unwrap();
        let diam = 2.0;
        let h = geom.cell_size()[0];
        for w in sf.values().windows(2) {
            prop_assert!((w[1] - w[0]).abs() <= s * diam * h + 1e-12);
        }
    }

    #[test]
    fn dual_is_invariant_under_zero_sum_constants(raw in prop::collection::vec(-1.0f64..1.0, 5), which in 0usize..2) {
        let fam = shift_family(64, 0.2);
        let law = population_law(&fam, 5).unwrap();
        let geom = fam.omega_grid(&[128]).unwrap();
        let scheme = if which == 0 { MemberScheme::Grid(geom.clone()) } else { MemberScheme::Lagrangian };
        let df = shift_dual_family(&fam, &law, &geom).unwrap();
        let total: f64 = law.weights.iter().sum();
        let mean: f64 = raw.iter().zip(&law.weights).map(|(c, w)| c * w).sum::<f64>() / total;
        let c: Vec<f64> = raw.iter().map(|x| x - mean).collect();
        let base = dual_objective(&df, &fam, &scheme).unwrap();
        let moved = dual_objective(&df.add_constants(&c).unwrap(), &fam, &scheme).unwrap();
        prop_assert!((base - moved).abs() <= 1e-12, "{} vs {}", base, moved);
    }

    #[test]
    fn weak_duality_for_the_scale_family(
        fs in prop::collection::vec(grid_fn(20), 4),
        atoms in prop::collection::vec((0usize..20, 0.05f64..1.0), 1..6),
    ) {
        let fam = scale_family(20);
        let law = population_law(&fam, 4).unwrap();
        let geom = fam.omega_grid(&[20]).unwrap();
        let total: f64 = law.weights.iter().sum();
        let mut fs = fs;
        for i in 0..20 {
            let m: f64 = (0..4).map(|k| law.weights[k] * fs[k][i]).sum::<f64>() / total;
            fs.iter_mut().for_each(|f| f[i] -= m);
        }
        let df = DualFamily::new(law.clone(), geom.clone(), fs).unwrap();
        let pts: Vec<f64> = atoms.iter().flat_map(|(i, _)| geom.center(*i)).collect();
        let sw: f64 = atoms.iter().map(|a| a.1).sum();
        let nu = DiscreteMeasure::new(fam.omega().clone(), pts, atoms.iter().map(|a| a.1 / sw).collect()).unwrap();
        let p = primal_objective(&nu, &fam, &law, &MemberScheme::Lagrangian).unwrap();
        let d = dual_objective(&df, &fam, &MemberScheme::Lagrangian).unwrap();
        prop_assert!(d <= p + 1e-6, "dual {} > primal {}", d, p);
    }

    #[test]
    fn primal_is_strictly_convex_along_mixtures(
        a in prop::collection::vec(-0.5f64..0.5, 1..6),
        b in prop::collection::vec(-0.5f64..0.5, 1..6),
    ) {
        let fam = shift_family(100, 0.2);
        let law = population_law(&fam, 9).unwrap();
        let omega = fam.omega().clone();
        let mu = DiscreteMeasure::uniform(omega.clone(), a).unwrap();
        let nu = DiscreteMeasure::uniform(omega, b).unwrap();
        prop_assume!(w2sq_1d(&mu, &nu).unwrap() > 1e-6);
        let j = |m: &DiscreteMeasure| primal_objective(m, &fam, &law, &MemberScheme::Lagrangian).unwrap();
        let mid = j(&mu.mix(&nu, 0.5).unwrap());
        prop_assert!(mid < 0.5 * (j(&mu) + j(&nu)), "{} vs {}", mid, 0.5 * (j(&mu) + j(&nu)));
    }

    #[test]
    fn primal_argmin_is_translation_invariant(
        cands in prop::collection::vec(prop::collection::vec(-0.4f64..0.4, 1..5), 2..5),
        shift in -1.0f64..1.0,
    ) {
        let base = shift_family(100, 0.2);
        // The same family moved by `shift`.
        let moved = make_affine_family(
            ParamMap::linear(DMatrix::identity(1, 1), vec![DMatrix::zeros(1, 1)], DVector::from_element(1, shift), vec![DVector::from_element(1, 1.0)]).unwrap(),
            DensityKind::Uniform,
            DomainBox::cube(1, -0.2, 0.2).unwrap(),
            templates::triangle(-0.5, 0.5, 100).unwrap(),
        ).unwrap();
        let law = population_law(&base, 9).unwrap();
        let score = |fam: &DeformableFamily, offset: f64| -> Vec<f64> {
            cands.iter().map(|c| {
                let pts: Vec<f64> = c.iter().map(|x| x + offset).collect();
                let m = DiscreteMeasure::uniform(fam.omega().clone(), pts).unwrap();
                primal_objective(&m, fam, &law, &MemberScheme::Lagrangian).unwrap()
            }).collect()
        };
        let argmin = |v: &[f64]| (0..v.len()).min_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap();
        let s0 = score(&base, 0.0);
        let s1 = score(&moved, shift);
        let mut sorted = s0.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted[1] - sorted[0] > 1e-9);
        prop_assert_eq!(argmin(&s0), argmin(&s1));
    }
}
