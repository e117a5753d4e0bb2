//! Randomised invariants of the subspace primitives and the pipeline.

mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use qsec::sections::{dimension_lower_bound, naive_sections, sections, Representation};
use qsec::subspace::{
    equalise, intersect, kernel, preimage, principal_angle_distance, Subspace, Tol,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dist(a: &Subspace, b: &Subspace) -> f64 {
    principal_angle_distance(a, b).unwrap()
}

fn contained(a: &Subspace, b: &Subspace) -> bool {
    b.complement_apply(a.basis()).amax() <= 1e-9
}

/// Integer spanning set in `R^n` with up to `n` columns, sometimes
/// dependent.
fn span_strategy(n: usize) -> impl Strategy<Value = Subspace> {
    (0..=n, any::<u64>()).prop_map(move |(k, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = random_int_matrix(&mut rng, n, k, -3, 3);
        if k > 1 && rng.random_bool(0.3) {
            let c = b.column(0) * 2.0 - b.column(1);
            b.column_mut(k - 1).copy_from(&c);
        }
        Subspace::span(&b, Tol::Auto)
    })
}

fn pair_strategy() -> impl Strategy<Value = (Subspace, Subspace)> {
    (1usize..=6).prop_flat_map(|n| (span_strategy(n), span_strategy(n)))
}

/// Rows of a block-structured embedding, reordered from the vertex order
/// `vperm` back to the original one.
fn unpermute_rows(f: &DMatrix<f64>, dims: &[usize], vperm: &[usize]) -> DMatrix<f64> {
    let n = vperm.len();
    let mut new_dims = vec![0; n];
    for v in 0..n {
        new_dims[vperm[v]] = dims[v];
    }
    let mut new_off = vec![0; n];
    for v in 1..n {
        new_off[v] = new_off[v - 1] + new_dims[v - 1];
    }
    let rows: Vec<usize> = (0..n)
        .flat_map(|v| new_off[vperm[v]]..new_off[vperm[v]] + dims[v])
        .collect();
    f.select_rows(rows.iter())
}

fn random_invertible(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    loop {
        let g = DMatrix::from_fn(n, n, |i, j| {
            rng.random_range(-1.0_f64..1.0) + if i == j { 2.0 } else { 0.0 }
        });
        if n == 0 || g.clone().lu().determinant().abs() > 0.1_f64 {
            return g;
        }
    }
}

/// Two generic parallel maps into a non-maximal vertex whose only successor
/// is zero-dimensional: the merge imposes three constraints that the
/// path-count formula does not see.
#[test]
fn path_count_bound_misses_interior_merges() {
    let q = qsec::graph::Quiver::new(5, vec![(1, 3), (2, 3), (2, 3), (3, 4), (1, 4)]).unwrap();
    let maps = vec![
        DMatrix::zeros(2, 2),
        DMatrix::from_row_slice(2, 3, &[1.0, -3.0, 2.0, -1.0, 3.0, 3.0]),
        DMatrix::from_row_slice(2, 3, &[-3.0, 3.0, 3.0, -3.0, -2.0, 2.0]),
        DMatrix::zeros(0, 2),
        DMatrix::zeros(0, 2),
    ];
    let rep = Representation::new(q, vec![1, 2, 3, 2, 0], maps).unwrap();
    let (space, _) = sections(&rep, Tol::Auto).unwrap();
    assert_eq!(space.dim(), 3);
    assert_eq!(dimension_lower_bound(&rep).unwrap(), 6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn intersect_is_commutative_idempotent_and_contained((a, b) in pair_strategy()) {
        let ab = intersect(&a, &b, Tol::Auto).unwrap();
        let ba = intersect(&b, &a, Tol::Auto).unwrap();
        prop_assert_eq!(ab.dim(), ba.dim());
        prop_assert!(dist(&ab, &ba) <= 1e-8);
        let aa = intersect(&a, &a, Tol::Auto).unwrap();
        prop_assert_eq!(aa.dim(), a.dim());
        prop_assert!(dist(&aa, &a) <= 1e-8);
        prop_assert!(contained(&ab, &a) && contained(&ab, &b));
        prop_assert!(ab.dim() <= a.dim().min(b.dim()));
    }

    #[test]
    fn preimage_contains_kernel_and_maps_into_target(
        (b, seed) in (1usize..=5).prop_flat_map(|n| (span_strategy(n), any::<u64>()))
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = rng.random_range(1..=5);
        let m = random_int_matrix(&mut rng, b.ambient_dim(), c, -2, 2);
        let pre = preimage(&m, &b, Tol::Auto).unwrap();
        prop_assert!(contained(&kernel(&m, Tol::Auto), &pre));
        let image = &m * pre.basis();
        prop_assert!(b.complement_apply(&image).amax() <= 1e-9 * m.norm().max(1.0));
        let all = preimage(&m, &Subspace::full(b.ambient_dim()), Tol::Auto).unwrap();
        prop_assert!(all.is_full());
    }

    #[test]
    fn equalise_ignores_map_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=5);
        let r = rng.random_range(1..=3);
        let base = random_int_matrix(&mut rng, r, n, -2, 2);
        let mut maps: Vec<DMatrix<f64>> = (0..rng.random_range(1..=4))
            .map(|_| {
                let mut m = base.clone();
                m[(rng.random_range(0..r), rng.random_range(0..n))] += rng.random_range(-1..=1) as f64;
                m
            })
            .collect();
        let k = rng.random_range(0..=n);
        let dom = Subspace::span(&random_int_matrix(&mut rng, n, k, -2, 2), Tol::Auto);
        let e1 = equalise(&dom, &maps, Tol::Auto).unwrap();
        maps.shuffle(&mut rng);
        let e2 = equalise(&dom, &maps, Tol::Auto).unwrap();
        prop_assert_eq!(e1.dim(), e2.dim());
        prop_assert!(dist(&e1, &e2) <= 1e-8);
        prop_assert!(contained(&e1, &dom));
    }

    #[test]
    fn sections_are_compatible_and_match_the_kernel(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rep = random_representation(&mut rng);
        let (space, trace) = sections(&rep, Tol::Auto).unwrap();
        prop_assert!(space.compatibility_residual(&rep) <= 1e-9);
        prop_assert_eq!(trace.root_dim(), space.dim());
        prop_assert_eq!(space.image().dim(), space.dim());
        let naive = naive_sections(&rep, Tol::Auto);
        prop_assert_eq!(naive.dim(), space.dim());
        prop_assert!(dist(&naive, &space.image()) <= 1e-8);
    }

    #[test]
    fn sections_do_not_depend_on_labelling(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rep = random_representation(&mut rng);
        let mut vperm: Vec<usize> = (0..rep.quiver().n_vertices()).collect();
        let mut eperm: Vec<usize> = (0..rep.quiver().n_edges()).collect();
        vperm.shuffle(&mut rng);
        eperm.shuffle(&mut rng);
        let permuted = rep.permuted(&vperm, &eperm);
        let (a, _) = sections(&rep, Tol::Auto).unwrap();
        let (b, _) = sections(&permuted, Tol::Auto).unwrap();
        prop_assert_eq!(a.dim(), b.dim());
        let back = unpermute_rows(b.embedding(), rep.dims(), &vperm);
        let d = dist(&a.image(), &Subspace::span(&back, Tol::Auto));
        prop_assert!(d <= 1e-8, "distance {:e}", d);
    }

    #[test]
    fn sections_are_equivariant_under_base_change(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rep = random_representation(&mut rng);
        let g: Vec<DMatrix<f64>> = rep.dims().iter().map(|&d| random_invertible(&mut rng, d)).collect();
        let moved = rep.transformed(&g).unwrap();
        let (a, _) = sections(&rep, Tol::Auto).unwrap();
        let (b, _) = sections(&moved, Tol::Auto).unwrap();
        prop_assert_eq!(a.dim(), b.dim());
        let layout = rep.layout();
        let mut ga = DMatrix::zeros(layout.total(), a.dim());
        for (v, gv) in g.iter().enumerate() {
            let rows = gv * a.block(v);
            ga.rows_mut(layout.offset(v), layout.dim(v)).copy_from(&rows);
        }
        prop_assert!(dist(&Subspace::span(&ga, Tol::Auto), &b.image()) <= 1e-8);
    }

    #[test]
    fn bound_holds_when_only_maximal_vertices_merge(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rep = random_acyclic_representation(&mut rng);
        let q = rep.quiver();
        let inc = q.in_edges();
        let maximal = q.maximal_vertices();
        prop_assume!((0..q.n_vertices()).all(|v| inc[v].len() <= 1 || maximal.contains(&v)));
        let bound = dimension_lower_bound(&rep).unwrap();
        let (space, _) = sections(&rep, Tol::Auto).unwrap();
        prop_assert!(bound <= space.dim() as i64);
    }

    #[test]
    fn restriction_to_one_vertex_without_loops_is_free(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rep = random_representation(&mut rng);
        let v = rng.random_range(0..rep.quiver().n_vertices());
        let (sub, _): (Representation, _) = rep.restrict_to(|u| u == v);
        let (space, _) = sections(&sub, Tol::Auto).unwrap();
        if sub.quiver().n_edges() == 0 {
            prop_assert_eq!(space.dim(), rep.dim(v));
        } else {
            prop_assert!(space.dim() <= rep.dim(v));
        }
    }
}
