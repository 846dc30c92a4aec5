use fastspec::chains::{ApplyMode, ChainKind, TransformChain};
use fastspec::graph::{erdos_renyi, laplacian, parse_edge_list, parse_matrix_market, to_matrix_market};
use fastspec::linalg::DenseMatrix;
use fastspec::report::{FactorizeOptions, Mode, SpectrumRule, SpectrumSolver};
use fastspec::{gfactor, oracle, tfactor, Error};

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn symmetric_pipeline_round_trips_through_files() {
    let lap = laplacian(&erdos_renyi(24, 0.3, 5, false).unwrap());
    let reread = parse_matrix_market(&to_matrix_market(&lap)).unwrap();
    assert_eq!(reread.as_slice(), lap.as_slice());

    let (chain, report) = gfactor::factorize_symmetric(&reread, &FactorizeOptions::new(110)).unwrap();
    let back = TransformChain::deserialize(&chain.serialize()).unwrap();
    assert_eq!(back, chain);
    assert_eq!(report.flops, 6 * 110);

    let x: Vec<f64> = (0..24).map(|k| (k as f64 * 0.37).sin()).collect();
    let approx = back.reconstruct().unwrap().matvec(&x).unwrap();
    assert!(max_diff(&back.reconstruct_apply(&x).unwrap(), &approx) <= 1e-12);
    let err = lap.dist_sq(&back.reconstruct().unwrap()).unwrap();
    assert!((err - report.final_abs_error).abs() <= 1e-9 * err.max(1.0));
}

#[test]
fn general_pipeline_from_edge_list() {
    let g = parse_edge_list("n 6 directed\n0 1\n1 2\n2 0\n3 4\n4 5 2\n5 3\n0 3 0.5\n").unwrap();
    let lap = laplacian(&g);
    assert!(lap.row(0).iter().sum::<f64>().abs() < 1e-15);
    let (chain, report) = tfactor::factorize_general(&lap, &FactorizeOptions::new(20).eps(1e-8)).unwrap();
    assert_eq!(chain.kind(), ChainKind::T);
    assert!(report.final_rel_error < report.init_trace[0]);

    let x = vec![1.0, -1.0, 0.5, 2.0, 0.0, -0.25];
    let y = chain.apply(&x, ApplyMode::Forward).unwrap();
    assert!(max_diff(&chain.apply(&y, ApplyMode::Inverse).unwrap(), &x) <= 1e-10);
}

#[test]
fn proposed_chain_beats_jacobi_on_a_laplacian() {
    let lap = laplacian(&erdos_renyi(32, 0.3, 11, false).unwrap());
    let g = 160;
    let (_, report) = gfactor::factorize_symmetric(&lap, &FactorizeOptions::new(g)).unwrap();
    let jacobi = oracle::jacobi_truncated(&lap, g).unwrap();
    let jacobi_err = lap.dist_sq(&jacobi.reconstruct().unwrap()).unwrap();
    assert!(report.final_abs_error <= 1.05 * jacobi_err, "{} vs {jacobi_err}", report.final_abs_error);
}

#[test]
fn exact_eigenvalues_with_the_original_rule() {
    let lap = laplacian(&erdos_renyi(16, 0.4, 2, false).unwrap());
    let (eig, vecs) = oracle::symmetric_eigen(&lap).unwrap();
    let opts = FactorizeOptions::new(64).rule(SpectrumRule::Original).eigenvalues(eig.clone());
    let (chain, report) = gfactor::factorize_symmetric(&lap, &opts).unwrap();
    assert_eq!(chain.spectrum(), eig.as_slice());
    assert!(report.final_rel_error < report.init_trace[0]);
    let recon = vecs.matmul(&DenseMatrix::from_diag(&eig)).unwrap().matmul_tr(&vecs).unwrap();
    assert!(lap.dist_sq(&recon).unwrap() < 1e-20);
}

#[test]
fn both_modes_and_solvers_agree_on_structure() {
    let lap = laplacian(&erdos_renyi(12, 0.4, 9, true).unwrap());
    for mode in [Mode::Polish, Mode::Full] {
        for solver in [SpectrumSolver::Dense, SpectrumSolver::Iterative] {
            let opts = FactorizeOptions::new(30).mode(mode).spectrum_solver(solver).max_iters(5);
            let (chain, report) = tfactor::factorize_general(&lap, &opts).unwrap();
            assert_eq!(chain.len(), 30);
            assert!(report.iterations <= 5);
            assert!(report.sweep_trace.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}

#[test]
fn errors_surface_through_the_public_api() {
    let asym = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 0.0, 1.0]).unwrap();
    assert!(matches!(gfactor::factorize_symmetric(&asym, &FactorizeOptions::new(1)), Err(Error::NotSymmetric { .. })));
    assert!(matches!(oracle::brute_g_update(&DenseMatrix::identity(11), &DenseMatrix::identity(11)), Err(Error::TooLarge { .. })));
    assert!(matches!(
        tfactor::factorize_general(&asym, &FactorizeOptions::new(1).eps(0.0)),
        Err(Error::InvalidArgument(_))
    ));
    assert!(matches!(parse_edge_list("n 2 undirected\n0 2\n"), Err(Error::IndexOutOfRange { index: 2, n: 2, line: 2 })));
}
