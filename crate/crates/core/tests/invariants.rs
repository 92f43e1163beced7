mod common;

use std::sync::Arc;

use approx::assert_relative_eq;
use kl_legendre::eigsolve::{lanczos_topk, solve_blocks, EigRequest};
use kl_legendre::klfield::DiagnosticQuad;
use kl_legendre::kronop::{build_operators, AssemblyOptions, KronOperator, KronTerm};
use kl_legendre::linalg::{Mat, SymmetricOperator};
use kl_legendre::orthopoly::{gauss_rule, Interval};
use kl_legendre::{decompose, fit_mixture, DecomposeOptions, Domain64, FitConfig, KLExpansion, KernelId, KernelSpec, SqExpMixture};

fn mixture(id: KernelId, tol: f64) -> SqExpMixture {
    fit_mixture(&KernelSpec::unit(id), &FitConfig::with_tol(tol)).unwrap().0
}

fn expansion(id: KernelId, tol: f64, dom: &str, n: usize, pairs: usize) -> KLExpansion {
    decompose(&mixture(id, tol), &dom.parse().unwrap(), n, pairs, &DecomposeOptions::default()).unwrap()
}

#[test]
fn coefficient_tensors_are_orthonormal() {
    for (dom, n, pairs) in [("0,1", 30, 31), ("0,1x0,2", 9, 60), ("0,1x0,1x0,1", 4, 40)] {
        let e = expansion(KernelId::Exponential, 1e-4, dom, n, pairs);
        assert!(e.orthonormality_defect() <= 1e-10, "{dom}");
        assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert!(e.eigenvalues.iter().all(|&l| l >= 0.0));
    }
}

#[test]
fn unit_norm_by_tensor_quadrature() {
    let e = expansion(KernelId::Matern52, 1e-4, "0,1x0,0.5", 6, 12);
    let rx = gauss_rule::<f64>(7, Interval::new(0.0, 1.0).unwrap()).unwrap();
    let ry = gauss_rule::<f64>(7, Interval::new(0.0, 0.5).unwrap()).unwrap();
    let mut pts = Vec::new();
    let mut wts = Vec::new();
    for (x, wx) in rx.iter() {
        for (y, wy) in ry.iter() {
            pts.push(vec![x, y]);
            wts.push(wx * wy);
        }
    }
    for j in 0..e.num_pairs() {
        let v = e.eigenfunction_eval(j, &pts).unwrap();
        let norm: f64 = v.iter().zip(&wts).map(|(f, w)| w * f * f).sum();
        assert!((norm - 1.0).abs() <= 1e-10, "pair {j}: {norm}");
    }
}

#[test]
fn dominant_eigenfunction_is_even_and_matches_dense_vector() {
    let m = mixture(KernelId::Exponential, 1e-6);
    let dom = Domain64::unit_cube(1);
    let n = 30;
    let e = decompose(&m, &dom, n, 4, &DecomposeOptions::default()).unwrap();
    assert_eq!(e.parity_labels[0].label(), "0");
    let grid: Vec<Vec<f64>> = (0..=50).map(|i| vec![i as f64 / 50.0]).collect();
    let mirrored: Vec<Vec<f64>> = grid.iter().map(|x| vec![1.0 - x[0]]).collect();
    let a = e.eigenfunction_eval(0, &grid).unwrap();
    let b = e.eigenfunction_eval(0, &mirrored).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-8);
    }

    let full = kl_legendre::kronop::build_full_operator(&m, &dom, n, &AssemblyOptions::default())
        .unwrap()
        .materialize()
        .unwrap();
    let dm = nalgebra::DMatrix::from_fn(n + 1, n + 1, |i, j| full[(i, j)]);
    let eig = dm.symmetric_eigen();
    let top = eig.eigenvalues.iter().enumerate().max_by(|x, y| x.1.partial_cmp(y.1).unwrap()).unwrap().0;
    let v = eig.eigenvectors.column(top);
    let dot: f64 = v.iter().zip(&e.coeffs[0]).map(|(a, b)| a * b).sum();
    assert_relative_eq!(dot.abs(), 1.0, epsilon = 1e-10);
    assert_relative_eq!(e.eigenvalues[0], eig.eigenvalues[top], max_relative = 1e-12);
}

#[test]
fn variance_matches_projected_kernel() {
    let e = expansion(KernelId::Exponential, 1e-6, "0,1", 59, 60);
    for x in [0.0, 0.01, 0.1, 0.3, 0.5, 0.8, 1.0] {
        let v = e.variance_n(60, &[x]).unwrap();
        let want = common::projected_diagonal(|d| (-d).exp(), 59, x);
        assert!((v - want).abs() <= 1e-5, "x = {x}: {v} vs {want}");
    }
    for i in 1..100 {
        let x = i as f64 / 100.0;
        let v = e.variance_n(60, &[x]).unwrap();
        assert!(v <= 1.0 + 1e-6, "x = {x}: {v}");
    }
    let c = e.covariance_n(60, &[0.5], &[0.5]).unwrap();
    assert_relative_eq!(c, e.variance_n(60, &[0.5]).unwrap(), max_relative = 1e-14);
}

#[test]
fn leading_eigenvalue_grows_with_degree() {
    let m = mixture(KernelId::Cauchy, 1e-4);
    let dom = Domain64::unit_cube(1);
    let mut prev = 0.0;
    for n in 0..=30 {
        let l1 = decompose(&m, &dom, n, 1, &DecomposeOptions::default()).unwrap().eigenvalues[0];
        assert!(l1 >= prev - 1e-14, "n = {n}: {l1} < {prev}");
        prev = l1;
    }
}

#[test]
fn decay_ordering_across_kernels() {
    let spectra: Vec<(KernelId, Vec<f64>)> = KernelId::ALL
        .into_iter()
        .map(|id| (id, expansion(id, 1e-6, "0,1x0,1", 49, 200).eigenvalues))
        .collect();
    let at = |id: KernelId, j: usize| spectra.iter().find(|s| s.0 == id).unwrap().1[j - 1];
    for j in [20, 50, 100] {
        let se = at(KernelId::SquaredExponential, j);
        let stretched = at(KernelId::StretchedExponential, j);
        let exp = at(KernelId::Exponential, j);
        for &(id, _) in &spectra {
            let v = at(id, j);
            if id != KernelId::SquaredExponential {
                assert!(se <= v, "j = {j}: squared exponential {se:e} above {id} {v:e}");
            }
            assert!(v <= stretched, "j = {j}: {id} {v:e} above stretched exponential {stretched:e}");
            if id != KernelId::StretchedExponential {
                assert!(v <= exp, "j = {j}: {id} {v:e} above exponential {exp:e}");
            }
        }
    }
}

#[test]
fn matvec_cost_is_linear_in_sizes() {
    let m = mixture(KernelId::Exponential, 1e-4);
    let k = m.rank() as u64;
    for (dom, n) in [("0,1x0,1", 20), ("0,1x0,1x0,1", 9), ("0,1x0,1x0,1", 29)] {
        let dom: Domain64 = dom.parse().unwrap();
        let ops = build_operators(&m, &dom, n, &AssemblyOptions::default()).unwrap();
        for op in &ops {
            let mut count = 0;
            op.matvec_counted(&vec![1.0; op.dim()], &mut count).unwrap();
            let sum: usize = op.sizes().iter().sum();
            assert_eq!(count, k * op.dim() as u64 * (sum as u64 + 1));
            if n == 29 {
                assert!(count * 5 < (op.dim() * op.dim()) as u64);
            }
        }
    }
}

#[test]
fn lanczos_matches_dense_on_large_blocks() {
    let m = mixture(KernelId::Exponential, 1e-3);
    let ops = build_operators(&m, &Domain64::unit_cube(2), 49, &AssemblyOptions::default()).unwrap();
    let req = EigRequest::new(40);
    for op in &ops {
        assert!(op.dim() > req.dense_threshold);
        let part = lanczos_topk(op, &req, 7).unwrap();
        let dense = common::dense_eigenvalues(&op.materialize().unwrap());
        for (a, b) in part.values.iter().zip(&dense) {
            assert!((a - b).abs() <= 1e-10 * dense[0], "{a} vs {b}");
        }
        for (v, l) in part.vectors.iter().zip(&part.values) {
            let av = op.apply(v);
            let r = av.iter().zip(v).map(|(x, y)| (x - l * y).powi(2)).sum::<f64>().sqrt();
            assert!(r <= 1e-9 * dense[0], "residual {r}");
        }
    }
    let a = solve_blocks(&ops, &req, 3).unwrap();
    let b = solve_blocks(&ops, &req, 3).unwrap();
    assert_eq!(a, b);
}

#[test]
fn covariance_error_of_exact_mixture() {
    let m = SqExpMixture::from_terms(KernelSpec::unit(KernelId::SquaredExponential), vec![1.0], vec![1.0], 2.0).unwrap();
    let e = decompose(&m, &Domain64::unit_cube(1), 59, 60, &DecomposeOptions::default()).unwrap();
    assert!(e.cov_l2_error(60, 120).unwrap() <= 1e-8);
    assert!(e.residual(0, &DiagnosticQuad::default()).unwrap() <= 1e-9);
}

#[test]
fn covariance_error_decreases_with_truncation() {
    let e = expansion(KernelId::Exponential, 1e-4, "0,1", 30, 31);
    let errs: Vec<f64> = [0, 1, 2, 4, 8, 16, 31].iter().map(|&n| e.cov_l2_error(n, 80).unwrap()).collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{errs:?}");
}

#[test]
fn single_precision_operator_agrees() {
    let mut b = Mat::<f32>::zeros(3, 3);
    for i in 0..3 {
        for j in 0..3 {
            b[(i, j)] = 1.0 / (1 + i + j) as f32;
        }
    }
    let op = KronOperator::new(None, vec![3, 3], vec![KronTerm { weight: 0.5f32, factors: vec![Arc::new(b.clone()), Arc::new(b.clone())] }])
        .unwrap();
    let x: Vec<f32> = (0..9).map(|i| i as f32 / 9.0).collect();
    let y = op.matvec(&x).unwrap();
    let dense = b.kron(&b).scaled(0.5).mul_vec(&x);
    for (p, q) in y.iter().zip(&dense) {
        assert!((p - q).abs() <= 1e-6);
    }
    let spec = lanczos_topk(&op, &EigRequest::new(2), 0).unwrap();
    assert!(spec.values[0] > spec.values[1]);
    let g = kl_legendre::GaussRule32::clone(&gauss_rule::<f32>(5, Interval::reference()).unwrap());
    assert!((g.integrate(|t| t.powi(8)) - 2.0 / 9.0).abs() < 1e-6);
}
