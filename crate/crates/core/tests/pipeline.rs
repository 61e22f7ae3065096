use vvkrein::assembly::{assemble, Boundary};
use vvkrein::catalog::presets;
use vvkrein::eigensolve::{counting_function, eigenvalue};
use vvkrein::measure::{decompose, refine_uniform, CellDecomposition};
use vvkrein::rng::Stream;
use vvkrein::spectral::exponent::single_tree_block_log_sums;
use vvkrein::spectral::{counting_slope, solve_gamma, MonteCarloF, SolveOptions};
use vvkrein::vtree::{build_tree, TreeOptions};

#[test]
fn block_average_along_one_tree_matches_independent_blocks() {
    // Neck types are uniform and independent of the past, so the blocks of
    // one long tree are i.i.d. copies of an independent block.
    let cat = presets::cantor_uneven();
    let x = 0.45;
    let along = single_tree_block_log_sums(&cat, 2, x, 4000, 77).unwrap();
    let n = along.len() as f64;
    let mean = along.iter().sum::<f64>() / n;
    let var = along.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se_along = (var / n).sqrt();

    let est = MonteCarloF::new(&cat, 2, 20_000, 78).unwrap().estimate(x).unwrap();
    let gap = (mean - est.f).abs();
    let se = (se_along.powi(2) + est.se.powi(2)).sqrt();
    assert!(gap <= 4.0 * se, "gap {gap} vs se {se}");
}

#[test]
fn per_type_estimates_cover_all_types() {
    let cat = presets::cantor_fifths();
    let est = MonteCarloF::new(&cat, 3, 600, 5).unwrap().estimate(0.4).unwrap();
    assert_eq!(est.per_type.len(), 3);
    assert_eq!(est.per_type.iter().map(|t| t.blocks).sum::<usize>(), 600);
    assert!(est.mean_block_length >= 1.0);
}

#[test]
fn v2_monte_carlo_root_is_stable_across_seeds() {
    let cat = presets::cantor_uneven();
    let roots: Vec<(f64, (f64, f64))> = [1u64, 2]
        .iter()
        .map(|&seed| {
            let mut mc = MonteCarloF::new(&cat, 2, 4000, seed).unwrap();
            let r = solve_gamma(&mut mc, SolveOptions::monte_carlo()).unwrap();
            (r.gamma, r.confidence.unwrap())
        })
        .collect();
    let (a, (alo, ahi)) = roots[0];
    let (b, (blo, bhi)) = roots[1];
    assert!(alo <= bhi && blo <= ahi, "disjoint intervals around {a} and {b}");
}

#[test]
fn csv_round_trip_preserves_spectrum() {
    let tree = build_tree(
        &presets::cantor_fifths(),
        2,
        6,
        TreeOptions::default(),
        &mut Stream::new(12),
    )
    .unwrap();
    let d = refine_uniform(&decompose(&tree, 6).unwrap(), 2).unwrap();
    let mut buf = Vec::new();
    d.write_csv(&mut buf).unwrap();
    let back = CellDecomposition::read_csv(buf.as_slice(), d.level, d.splits, d.interval).unwrap();
    let p1 = assemble(&d, Boundary::Dirichlet).unwrap();
    let p2 = assemble(&back, Boundary::Dirichlet).unwrap();
    assert_eq!(p1, p2);
    let xs = [1.0, 10.0, 1e3, 1e5];
    let c1: Vec<usize> = counting_function(&p1, &xs).unwrap().iter().map(|s| s.count).collect();
    let c2: Vec<usize> = counting_function(&p2, &xs).unwrap().iter().map(|s| s.count).collect();
    assert_eq!(c1, c2);
}

#[test]
fn finer_mesh_lowers_ritz_eigenvalues() {
    let tree = build_tree(
        &presets::cantor_uneven(),
        2,
        8,
        TreeOptions::default(),
        &mut Stream::new(3),
    )
    .unwrap();
    let coarse = assemble(&decompose(&tree, 8).unwrap(), Boundary::Dirichlet).unwrap();
    let fine = assemble(
        &refine_uniform(&decompose(&tree, 8).unwrap(), 4).unwrap(),
        Boundary::Dirichlet,
    )
    .unwrap();
    for i in 1..=5 {
        assert!(eigenvalue(&fine, i).unwrap() <= eigenvalue(&coarse, i).unwrap() * (1.0 + 1e-12));
    }
}

#[test]
fn uneven_cantor_slope_is_near_the_exact_exponent() {
    let cat = presets::cantor_uneven();
    let tree = build_tree(&cat, 1, 14, TreeOptions::default(), &mut Stream::new(1)).unwrap();
    let p = assemble(&decompose(&tree, 14).unwrap(), Boundary::Dirichlet).unwrap();
    let (fit, _) = counting_slope(&p, None, 300).unwrap();
    let exact = vvkrein::spectral::solve_gamma_homogeneous(&cat).unwrap().gamma;
    assert!((fit.slope - exact).abs() < 0.05, "slope {} vs {exact}", fit.slope);
}
