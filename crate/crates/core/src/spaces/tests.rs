use super::*;
use proptest::prelude::*;
use rand::Rng;

fn arccosh_dist(u: &[f64], v: &[f64]) -> f64 {
    let du = (u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2);
    let nu = 1.0 - u[0] * u[0] - u[1] * u[1];
    let nv = 1.0 - v[0] * v[0] - v[1] * v[1];
    (1.0 + 2.0 * du / (nu * nv)).acosh()
}

fn sample_tree() -> WeightedTree {
    // 0 - 1 - 2, 1 - 3 - 4, 3 - 5
    WeightedTree::new(6, &[(0, 1, 1.0), (1, 2, 2.0), (3, 1, 0.5), (3, 4, 1.5), (5, 3, 1.0)]).unwrap()
}

fn all_spaces() -> Vec<Space> {
    vec![
        Space::real_line(),
        Space::euclidean(3),
        Space::lp(3, 3.0).unwrap(),
        Space::Hyperbolic,
        Space::tree(sample_tree()),
        Space::product(2.0, vec![Space::euclidean(2), Space::Hyperbolic, Space::tree(sample_tree())]).unwrap(),
    ]
}

#[test]
fn disk_distance_matches_the_arccosh_formula() {
    let mut rng = seed::rng(5, &[]);
    for _ in 0..500 {
        let u = Space::Hyperbolic.random_point(&mut rng);
        let v = Space::Hyperbolic.random_point(&mut rng);
        let a = Space::Hyperbolic.dist(&u, &v);
        let b = arccosh_dist(&u, &v);
        assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{a} vs {b}");
    }
    let d = Space::Hyperbolic.dist(&[0.0, 0.0], &[0.5, 0.0]);
    assert!((d - 3f64.ln()).abs() < 1e-14);
}

#[test]
fn tree_distances_agree_with_a_subdivided_graph() {
    // Subdivide each edge at its point, then run Dijkstra-by-hand on the
    // vertex table through the two endpoints.
    let t = sample_tree();
    let space = Space::tree(t.clone());
    let pts = [vec![1.0, 0.5], vec![3.0, 1.5], vec![4.0, 0.25], vec![0.0, 0.0], vec![2.0, 0.5]];
    // Hand-computed: 0 -(1)- 1 -(2)- 2, 1 -(0.5)- 3 -(1.5)- 4, 3 -(1)- 5.
    // [1,0.5]: on (1,2) at 0.5 from 1. [3,1.5]: vertex 4. [4,0.25]: on (5,3) at 0.25 from 5.
    // [0,0]: vertex 0. [2,0.5]: on (3,1) at 0.5 from 3, i.e. vertex 1.
    let expect = [
        [0.0, 2.5, 1.75, 1.5, 0.5],
        [2.5, 0.0, 2.25, 3.0, 2.0],
        [1.75, 2.25, 0.0, 2.25, 1.25],
        [1.5, 3.0, 2.25, 0.0, 1.0],
        [0.5, 2.0, 1.25, 1.0, 0.0],
    ];
    for i in 0..5 {
        for j in 0..5 {
            assert!((space.dist(&pts[i], &pts[j]) - expect[i][j]).abs() < 1e-12, "{i} {j}");
        }
    }
    assert_eq!(t.canonical(&[2.0, 0.5]), t.vertex_point(1));
}

#[test]
fn geodesics_split_distance() {
    let mut rng = seed::rng(9, &[]);
    for space in all_spaces() {
        for _ in 0..200 {
            let y = space.random_point(&mut rng);
            let z = space.random_point(&mut rng);
            let t = rng.random::<f64>();
            let m = space.geodesic(&y, &z, t).unwrap();
            space.validate(&m).unwrap();
            let d = space.dist(&y, &z);
            let tol = 1e-9 * d.max(1.0);
            assert!((space.dist(&y, &m) - t * d).abs() < tol, "{}", space.kind());
            assert!((space.dist(&m, &z) - (1.0 - t) * d).abs() < tol, "{}", space.kind());
        }
        assert!(space.geodesic(&space.origin(), &space.origin(), 1.5).is_err());
    }
}

#[test]
fn claimed_convexity_constants_hold() {
    for space in all_spaces() {
        for p in [2.0, 3.0, 4.0] {
            if let Some(c) = space.convexity_constant(p) {
                let r = verify_p_convexity(&space, p, c, 4000, 11).unwrap();
                assert!(r.holds, "{} p={p}: {}", space.kind(), r.min_slack);
            }
        }
    }
}

#[test]
fn inflated_constant_is_caught() {
    let r = verify_p_convexity(&Space::euclidean(2), 2.0, 1.2, 2000, 3).unwrap();
    assert!(!r.holds);
    assert!(r.witness.is_some());
}

#[test]
fn euclidean_constant_is_sharp() {
    let c = certify_convexity_constant(&Space::euclidean(2), 2.0, 3000, 1).unwrap();
    assert!((c - 1.0).abs() < 1e-3, "{c}");
}

#[test]
fn convexity_constant_coverage() {
    assert_eq!(Space::euclidean(2).convexity_constant(2.0), Some(1.0));
    let c = Space::Hyperbolic.convexity_constant(4.0).unwrap();
    assert!((c.powf(4.0) - 0.25).abs() < 1e-12);
    assert!(Space::lp(2, 3.0).unwrap().convexity_constant(4.0).is_none());
    assert!(Space::euclidean(2).convexity_constant(1.5).is_none());
    let prod = Space::product(3.0, vec![Space::lp(2, 3.0).unwrap(), Space::euclidean(1)]).unwrap();
    assert!(prod.convexity_constant(3.0).is_some());
    assert!(prod.convexity_constant(2.0).is_none());
}

#[test]
fn invalid_points_are_rejected() {
    assert!(Space::Hyperbolic.validate(&[0.8, 0.7]).is_err());
    assert!(Space::euclidean(2).validate(&[1.0]).is_err());
    assert!(Space::euclidean(1).validate(&[f64::NAN]).is_err());
    let t = Space::tree(sample_tree());
    assert!(t.validate(&[1.0, 2.5]).is_err());
    assert!(t.validate(&[0.5, 0.1]).is_err());
    assert!(t.validate(&[7.0, 0.0]).is_err());
    assert!(WeightedTree::new(3, &[(0, 1, 1.0), (0, 1, 1.0)]).is_err());
    assert!(WeightedTree::new(3, &[(0, 1, 1.0), (1, 2, -1.0)]).is_err());
}

#[test]
fn descriptors_round_trip() {
    for space in all_spaces() {
        let json = serde_json::to_string(&space.descriptor()).unwrap();
        assert_eq!(Space::from_json(&json).unwrap(), space);
    }
    assert!(Space::from_json(r#"{"kind":"sphere"}"#).is_err());
}

fn isometries() -> Vec<(Space, Isometry)> {
    let t = Space::tree(WeightedTree::star(3).unwrap());
    vec![
        (Space::euclidean(2), Isometry::rotation2(0.7)),
        (Space::euclidean(2), Isometry::reflection2(0.3).compose(&Isometry::translation(vec![1.0, -2.0])).unwrap()),
        (Space::lp(3, 4.0).unwrap(), Isometry::signed_permutation(&[2, 0, 1], &[1.0, -1.0, 1.0]).unwrap()),
        (Space::Hyperbolic, Isometry::disk_translation(0.8).compose(&Isometry::disk_rotation(1.1)).unwrap()),
        (Space::Hyperbolic, Isometry::disk_conjugation().compose(&Isometry::disk_translation(-0.4)).unwrap()),
        (t, Isometry::tree(vec![0, 2, 3, 1]).unwrap()),
    ]
}

#[test]
fn isometries_preserve_distance_and_invert() {
    let mut rng = seed::rng(4, &[]);
    for (space, g) in isometries() {
        g.check(&space).unwrap();
        let gi = g.inverse();
        for _ in 0..100 {
            let x = space.random_point(&mut rng);
            let y = space.random_point(&mut rng);
            let (gx, gy) = (g.apply(&space, &x), g.apply(&space, &y));
            space.validate(&gx).unwrap();
            assert!((space.dist(&gx, &gy) - space.dist(&x, &y)).abs() < 1e-9);
            assert!(space.dist(&gi.apply(&space, &gx), &x) < 1e-9);
            let gg = g.compose(&g).unwrap();
            assert!(space.dist(&gg.apply(&space, &x), &g.apply(&space, &gx)) < 1e-9);
        }
    }
}

#[test]
fn non_isometries_fail_the_check() {
    let stretch = Isometry::Affine { dim: 2, linear: vec![2.0, 0.0, 0.0, 1.0], shift: vec![0.0, 0.0] };
    assert!(stretch.check(&Space::euclidean(2)).is_err());
    assert!(Isometry::rotation2(0.3).check(&Space::lp(2, 3.0).unwrap()).is_err());
    let t = Space::tree(sample_tree());
    assert!(Isometry::tree(vec![1, 0, 2, 3, 4, 5]).unwrap().check(&t).is_err());
    assert!(Isometry::tree(vec![0, 0, 1]).is_err());
}

proptest! {
    #[test]
    fn triangle_inequality(seed in 0u64..10_000) {
        let mut rng = seed::rng(seed, &[]);
        for space in all_spaces() {
            let x = space.random_point(&mut rng);
            let y = space.random_point(&mut rng);
            let z = space.random_point(&mut rng);
            let (a, b, c) = (space.dist(&x, &y), space.dist(&y, &z), space.dist(&x, &z));
            prop_assert!(c <= a + b + 1e-9);
            prop_assert!((space.dist(&y, &x) - a).abs() < 1e-12);
        }
    }

    #[test]
    fn perturbation_stays_in_the_space(seed in 0u64..10_000, scale in 0.01f64..3.0) {
        let mut rng = seed::rng(seed, &[]);
        for space in all_spaces() {
            let x = space.random_point(&mut rng);
            let y = space.perturb(&x, scale, &mut rng);
            prop_assert!(space.validate(&y).is_ok());
        }
    }
}
