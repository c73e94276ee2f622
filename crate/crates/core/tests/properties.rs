use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use origami_core::analysis::{classify, tangent_report};
use origami_core::linalg::RANK_REL_TOL;
use origami_core::collision::Collider;
use origami_core::constraints::ConstraintSystem;
use origami_core::fixtures;
use origami_core::genericity::{dual_graph, pack_spanning_trees, Multigraph};
use origami_core::kinematics::Folder;
use origami_core::model::{from_normalized, to_normalized, CreasePattern, FoldDocument};
use origami_core::newton::{project, NewtonOptions};
use proptest::prelude::*;

/// Developable degree-4 vertex with sectors drawn from `w` (normalized to 2pi).
fn vertex4(w: &[f64]) -> CreasePattern {
    let total: f64 = w.iter().sum();
    let alphas: Vec<f64> = w.iter().map(|x| x / total * TAU).collect();
    fixtures::single_vertex(&alphas)
}

fn solve(system: &ConstraintSystem, start: &[f64]) -> Option<Vec<f64>> {
    let opts = NewtonOptions { max_iter: 60, ..Default::default() };
    let r = project(system, start, None, &opts);
    (r.converged && r.rho.iter().all(|x| x.abs() < PI - 1e-6)).then_some(r.rho)
}

fn sector_weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.6f64..1.4, 4)
}

fn start4() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.5f64..2.5, 4)
}

fn grid_patterns() -> Vec<CreasePattern> {
    vec![
        fixtures::fig2_vertex(),
        fixtures::degree6_vertex(),
        fixtures::miura(2, 2),
        fixtures::quad_grid(2, 2),
        fixtures::pentagon_hole(0.1),
        fixtures::fig6_lock(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fold_json_round_trip(idx in 0usize..6) {
        let p = &grid_patterns()[idx];
        let text = p.to_json();
        let back = CreasePattern::from_json(&text).unwrap();
        prop_assert_eq!(back.to_json(), text.clone());
        let doc = FoldDocument::from_json(&text).unwrap();
        prop_assert_eq!(doc.to_json(), text);
    }

    #[test]
    fn stored_sectors_match_coordinates(w in sector_weights()) {
        let p = vertex4(&w);
        let stored = &p.sector_angles().corners;
        let recomputed = p.embedding_sector_angles();
        for (a, b) in stored.iter().zip(&recomputed) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scaling_keeps_sectors_and_rank(w in sector_weights(), c in 0.05f64..20.0, start in start4()) {
        let p = vertex4(&w);
        let q = p.scaled(c);
        for (a, b) in p.sector_angles().corners.iter().zip(&q.sector_angles().corners) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
        let sp = ConstraintSystem::build(&p);
        let sq = ConstraintSystem::build(&q);
        if let Some(rho) = solve(&sp, &start) {
            prop_assert!(sq.is_satisfied(&rho));
            let rp = classify(&sp, &rho).unwrap();
            let rq = classify(&sq, &rho).unwrap();
            prop_assert_eq!(rp.deg, rq.deg);
        }
    }

    #[test]
    fn solutions_are_closed_under_negation(w in sector_weights(), start in start4()) {
        let p = vertex4(&w);
        let s = ConstraintSystem::build(&p);
        if let Some(rho) = solve(&s, &start) {
            let neg: Vec<f64> = rho.iter().map(|x| -x).collect();
            prop_assert!(s.is_satisfied(&neg), "residual {}", s.max_norm(&neg));
            let a = classify(&s, &rho).unwrap();
            let b = classify(&s, &neg).unwrap();
            prop_assert_eq!(a.deg, b.deg);
        }
    }

    #[test]
    fn placements_are_proper_rigid_motions(w in sector_weights(), start in start4()) {
        let p = vertex4(&w);
        let folder = Folder::new(&p);
        for t in folder.placements(&start) {
            let r = t.fixed_view::<3, 3>(0, 0).into_owned();
            prop_assert!((r.determinant() - 1.0).abs() < 1e-10);
            let err = (r.transpose() * r - nalgebra::Matrix3::identity()).norm();
            prop_assert!(err < 1e-10);
        }
    }

    #[test]
    fn fold_mesh_is_isometric_and_path_independent(w in sector_weights(), start in start4()) {
        let p = vertex4(&w);
        let s = ConstraintSystem::build(&p);
        if let Some(rho) = solve(&s, &start) {
            let mesh = Folder::new(&p).fold_mesh(&rho).unwrap();
            let mut seen: Vec<Option<Vector3<f64>>> = vec![None; p.vertices().len()];
            for placed in &mesh {
                let cycle = &p.panels()[placed.panel];
                let n = cycle.len();
                for k in 0..n {
                    let (i, j) = (cycle[k], cycle[(k + 1) % n]);
                    let flat = (p.vertices()[i] - p.vertices()[j]).norm();
                    let folded = (placed.vertices[k] - placed.vertices[(k + 1) % n]).norm();
                    prop_assert!((flat - folded).abs() < 1e-9);
                }
                for (k, &v) in cycle.iter().enumerate() {
                    match seen[v] {
                        Some(q) => prop_assert!((q - placed.vertices[k]).norm() < 1e-8),
                        None => seen[v] = Some(placed.vertices[k]),
                    }
                }
            }
        }
    }

    #[test]
    fn normalized_round_trip(rho in prop::collection::vec(-PI..=PI, 1..8)) {
        let back = from_normalized(&to_normalized(&rho)).rho;
        for (a, b) in rho.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_ignores_crease_order(seed in any::<u64>(), rho in prop::collection::vec(-2.5f64..2.5, 4)) {
        let p = fixtures::fig2_vertex();
        let mut raw = p.to_raw();
        let mut order: Vec<usize> = (0..raw.creases.len()).collect();
        let mut state = seed;
        for i in (1..order.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (state >> 33) as usize % (i + 1));
        }
        raw.creases = order.iter().map(|&i| raw.creases[i]).collect();
        raw.initial_rho = None;
        let q = raw.validate().unwrap();
        let mut mapped = vec![0.0; q.num_inner_creases()];
        for (j, &c) in p.inner_creases().iter().enumerate() {
            let [a, b] = p.creases()[c].vertices;
            let qc = q.edge_between(a, b).unwrap();
            mapped[q.inner_index(qc).unwrap()] = rho[j];
        }
        let ra = tangent_report(&ConstraintSystem::build(&p), &rho, RANK_REL_TOL, 0.0);
        let rb = tangent_report(&ConstraintSystem::build(&q), &mapped, RANK_REL_TOL, 0.0);
        prop_assert_eq!(ra.rank, rb.rank);
        prop_assert!((ConstraintSystem::build(&p).max_norm(&rho) > 1e-9)
            == (ConstraintSystem::build(&q).max_norm(&mapped) > 1e-9));
    }

    #[test]
    fn packing_ignores_vertex_labels(seed in any::<u64>(), k in 1usize..4) {
        let base = dual_graph(&fixtures::quad_grid(2, 2)).h.clone();
        let n = base.n;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut state = seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (state >> 33) as usize % (i + 1));
        }
        let g: Multigraph = base.relabel(&perm);
        let a = pack_spanning_trees(&base, k).unwrap();
        let b = pack_spanning_trees(&g, k).unwrap();
        prop_assert_eq!(a.feasible, b.feasible);
    }

    #[test]
    fn collision_verdict_is_mirror_and_scale_invariant(f in 0.0f64..3.1, c in 0.1f64..10.0) {
        let p = fixtures::flap_strip(1.0, 1.0);
        let rho = vec![f, f];
        let neg = vec![-f, -f];
        let scaled = p.scaled(c);
        let a = Collider::new(&p).check_unchecked(&rho, &[]).unwrap();
        let b = Collider::new(&p).check_unchecked(&neg, &[]).unwrap();
        let d = Collider::new(&scaled).check_unchecked(&rho, &[]).unwrap();
        prop_assert_eq!(a.verdict, b.verdict);
        prop_assert_eq!(&a.crossing, &b.crossing);
        prop_assert_eq!(a.verdict, d.verdict);
        let pairs = |r: &origami_core::collision::ContactReport| {
            r.stacked.iter().map(|s| ((s.a, s.b), s.sign)).collect::<Vec<_>>()
        };
        let flipped: Vec<_> = pairs(&a).into_iter().map(|(k, s)| (k, s.map(|x| -x))).collect();
        prop_assert_eq!(flipped, pairs(&b));
    }
}
