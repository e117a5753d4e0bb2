//! Least-squares map fitting against the normal equations and planted maps.

use nalgebra::DMatrix;
use qsec::graph::Quiver;
use qsec::learn::{
    delta_blowup, fit_edge_maps, fit_objective, learn_then_pca, parse_edge_list, VertexData,
};
use qsec::qpca::{covariance, one_arrow_pencil, solve_pencil, Dataset};
use qsec::sections::{BlockLayout, Representation};
use qsec::subspace::Tol;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut *rng))
}

/// Random quiver with loops and parallel edges, vertex data drawn
/// independently.
fn random_problem(rng: &mut ChaCha8Rng, m: usize) -> (Quiver, VertexData) {
    let n = rng.random_range(1..=5);
    let edges: Vec<(usize, usize)> = (0..rng.random_range(1..=7))
        .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
        .collect();
    let dims: Vec<usize> = (0..n).map(|_| rng.random_range(1..=4)).collect();
    let blocks = dims.iter().map(|&d| gaussian(rng, m, d)).collect();
    (Quiver::new(n, edges).unwrap(), VertexData::new(blocks).unwrap())
}

#[test]
fn estimator_solves_the_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..100 {
        let (q, vd) = random_problem(&mut rng, 30);
        let fit = fit_edge_maps(&q, &vd, Tol::Auto).unwrap();
        for (e, &(s, t)) in q.edges().iter().enumerate() {
            let ys = vd.block(s);
            let yt = vd.block(t);
            // A (YsᵀYs) = YtᵀYs
            let gram = ys.transpose() * ys;
            let rhs = (yt.transpose() * ys).transpose();
            let expect = gram.lu().solve(&rhs).unwrap().transpose();
            let got = fit.representation.map(e);
            assert!((got - &expect).norm() <= 1e-9 * expect.norm().max(1.0));
            let resid = (yt - ys * expect.transpose()).norm();
            assert!((fit.residuals[e] - resid).abs() <= 1e-9 * resid.max(1.0));
        }
    }
}

#[test]
fn estimator_is_a_local_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..50 {
        // few samples, so some source blocks are rank deficient
        let m = rng.random_range(2..=8);
        let (q, vd) = random_problem(&mut rng, m);
        let fit = fit_edge_maps(&q, &vd, Tol::Auto).unwrap();
        let best = fit_objective(&fit.representation, &vd).unwrap();
        for _ in 0..20 {
            let eps = 10f64.powi(-rng.random_range(1..=4));
            let maps: Vec<DMatrix<f64>> = fit
                .representation
                .maps()
                .iter()
                .map(|a| a + gaussian(&mut rng, a.nrows(), a.ncols()) * eps)
                .collect();
            let moved = Representation::new(q.clone(), vd.dims(), maps).unwrap();
            let value = fit_objective(&moved, &vd).unwrap();
            assert!(value >= best - 1e-10 * best.max(1.0), "{value} < {best}");
        }
    }
}

#[test]
fn planted_maps_are_recovered_from_noiseless_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..50 {
        // forest with non-increasing dimensions along edges: generic maps
        // are onto, so every block has full column rank
        let n = rng.random_range(2..=7);
        let mut dims: Vec<usize> = vec![rng.random_range(1..=5)];
        let mut edges = Vec::new();
        for v in 1..n {
            if rng.random_bool(0.8) {
                let p = rng.random_range(0..v);
                edges.push((p, v));
                dims.push(dims[p].saturating_sub(rng.random_range(0..=2)).max(1));
            } else {
                dims.push(rng.random_range(1..=3));
            }
        }
        let maps: Vec<DMatrix<f64>> = edges
            .iter()
            .map(|&(s, t)| gaussian(&mut rng, dims[t], dims[s]))
            .collect();
        let m = 40;
        let mut blocks: Vec<Option<DMatrix<f64>>> = vec![None; n];
        for v in 0..n {
            let parent = edges.iter().position(|&(_, t)| t == v);
            blocks[v] = Some(match parent {
                Some(e) => blocks[edges[e].0].as_ref().unwrap() * maps[e].transpose(),
                None => gaussian(&mut rng, m, dims[v]),
            });
        }
        let vd = VertexData::new(blocks.into_iter().map(Option::unwrap).collect()).unwrap();
        let q = Quiver::new(n, edges).unwrap();
        let fit = fit_edge_maps(&q, &vd, Tol::Auto).unwrap();
        for (e, planted) in maps.iter().enumerate() {
            let err = (fit.representation.map(e) - planted).norm();
            assert!(err <= 1e-9 * planted.norm().max(1.0), "edge {e}: {err:e}");
            assert!(fit.residuals[e] <= 1e-9 * vd.block(q.target(e)).norm().max(1.0));
        }
    }
}

#[test]
fn one_arrow_learning_reproduces_the_closed_form_pencil() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for _ in 0..20 {
        let p = rng.random_range(1..=3);
        let qd = rng.random_range(1..=3);
        let m = 30;
        let planted = gaussian(&mut rng, qd, p);
        let yu = gaussian(&mut rng, m, p);
        let yv = &yu * planted.transpose() + gaussian(&mut rng, m, qd) * 0.3;
        let mut data = DMatrix::zeros(m, p + qd);
        data.columns_mut(0, p).copy_from(&yu);
        data.columns_mut(p, qd).copy_from(&yv);
        let ds = Dataset::new(data, BlockLayout::new(&[p, qd])).unwrap().centred();
        let quiver = Quiver::new(2, vec![(0, 1)]).unwrap();
        let out = learn_then_pca(&quiver, &ds, 1, Tol::Auto).unwrap();

        let cu = ds.block(0);
        let cv = ds.block(1);
        let j = (cu.transpose() * &cu).lu().solve(&(cu.transpose() * &cv)).unwrap().transpose();
        assert!((out.learned.representation.map(0) - &j).norm() <= 1e-10 * j.norm().max(1.0));

        let s = covariance(&ds).unwrap();
        let (a, b) = one_arrow_pencil(s.matrix(), &j).unwrap();
        let closed = solve_pencil(&a, &b).unwrap();
        let scale = closed.values[0].abs().max(1.0);
        assert!((closed.values[0] - out.pcs.values[0]).abs() <= 1e-10 * scale);

        let u = closed.vectors.column(0);
        let mut dir = DMatrix::zeros(p + qd, 1);
        dir.view_mut((0, 0), (p, 1)).copy_from(&u);
        dir.view_mut((p, 0), (qd, 1)).copy_from(&(&j * u));
        let dir = &dir / dir.norm();
        let cos = dir.column(0).dot(&out.pcs.directions.column(0)).abs();
        assert!((1.0 - cos).abs() <= 1e-10, "{cos}");
    }
}

#[test]
fn blowup_carries_the_fitted_entries() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    for _ in 0..30 {
        let (q, vd) = random_problem(&mut rng, 20);
        let fit = fit_edge_maps(&q, &vd, Tol::Auto).unwrap();
        let dims = vd.dims();
        let g = delta_blowup(&q, &dims, Some(&fit.representation)).unwrap();
        let expected: usize = q.edges().iter().map(|&(s, t)| dims[s] * dims[t]).sum();
        assert_eq!(g.n_edges(), expected);
        assert_eq!(g.n_nodes(), dims.iter().sum::<usize>());
        let parsed = parse_edge_list(&g.to_edge_list()).unwrap();
        for (edge, (s, t, w)) in g.edges().iter().zip(parsed) {
            assert_eq!((edge.source, edge.target), (s, t));
            let (qs, qt) = q.edges()[edge.edge];
            let j = s - g.nodes_of(qs).start;
            let i = t - g.nodes_of(qt).start;
            assert_eq!(w.to_bits(), fit.representation.map(edge.edge)[(i, j)].to_bits());
        }
        let single_parent = (0..q.n_vertices()).all(|v| q.in_edges()[v].len() <= 1)
            && q.edges().iter().all(|&(s, t)| s != t);
        if single_parent {
            assert!(g.is_graphical());
        }
    }
}
