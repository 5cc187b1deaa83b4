use ics::weights::{
    project_to_simplex, solve_weights, weight_objective, DistanceVector, WeightSolverConfig,
};

/// Minimizer of `f` over the 3-simplex on a grid of spacing `1/steps`.
fn grid_argmin3(steps: usize, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut best = (f64::INFINITY, vec![0.0; 3]);
    for i in 0..=steps {
        for j in 0..=steps - i {
            let w = [
                i as f64 / steps as f64,
                j as f64 / steps as f64,
                (steps - i - j) as f64 / steps as f64,
            ];
            let v = f(&w);
            if v < best.0 {
                best = (v, w.to_vec());
            }
        }
    }
    best.1
}

#[test]
fn solver_agrees_with_grid_search_on_lambda_extremes() {
    let d = DistanceVector::new(vec![1.0, 10.0, 10.0]).unwrap();
    for (lambda, tol) in [(1e-4, 0.01), (100.0, 0.05), (0.5, 0.01)] {
        let cfg = WeightSolverConfig::exact(1.0, lambda);
        let oracle = grid_argmin3(1000, |w| weight_objective(w, d.as_slice(), &cfg));
        let sol = solve_weights(&d, &cfg).unwrap();
        for (a, b) in sol.weights.as_slice().iter().zip(&oracle) {
            assert!(
                (a - b).abs() <= tol,
                "λ={lambda}: {:?} vs {oracle:?}",
                sol.weights
            );
        }
    }
}

#[test]
fn projection_agrees_with_grid_search() {
    for v in [
        [1.2, 0.1, -0.3],
        [0.5, 0.5, 0.5],
        [0.7, 0.2, 0.1],
        [-1.0, 2.0, 0.4],
        [0.31, 0.33, 0.29],
    ] {
        let oracle = grid_argmin3(1000, |w| {
            w.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum()
        });
        let w = project_to_simplex(&v).unwrap();
        for (a, b) in w.as_slice().iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-3, "{v:?}: {w:?} vs {oracle:?}");
        }
    }
}
