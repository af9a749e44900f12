use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::costs::{f_value, CostSpec};
use crate::measures::{discretize, relative_entropy, translate, BoxDomain, Grid, GridMeasure};
use crate::potentials::PotentialSpec;

fn gamma(res: usize) -> GridMeasure {
    discretize(&PotentialSpec::gaussian(1), &BoxDomain::symmetric(8.0, 1), res).unwrap()
}

fn mixture(grid: &Grid, rng: &mut ChaCha8Rng) -> GridMeasure {
    let k = rng.random_range(1..4);
    let comps: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| (rng.random_range(0.2..1.0), rng.random_range(-1.5..1.5), rng.random_range(0.5..1.3)))
        .collect();
    let w = grid
        .axis_coordinates(0)
        .iter()
        .map(|&x| comps.iter().map(|(p, m, s)| p / s * (-0.5 * ((x - m) / s).powi(2)).exp()).sum())
        .collect();
    GridMeasure::from_weights(grid.clone(), w, "synthetic:mixture").unwrap()
}

fn lp_value(mu: &GridMeasure, nu: &GridMeasure, cost: &CostSpec) -> f64 {
    solve_ot_exact(mu, nu, &cost_matrix(cost, mu, nu).unwrap()).unwrap().cost_value
}

fn gauss_kl(m: f64, s: f64) -> f64 {
    0.5 * (s * s + m * m - 1.0 - 2.0 * s.ln())
}

#[test]
fn exact_solver_examples() {
    let v = PotentialSpec::quadratic_plus_quartic(1.0, 1.0, 1).unwrap();
    let mu = discretize(&v, &BoxDomain::symmetric(5.0, 1), 256).unwrap();
    let c = cost_matrix(&CostSpec::Bregman(v), &mu, &mu).unwrap();
    let plan = solve_ot_exact(&mu, &mu, &c).unwrap();
    assert!(plan.cost_value.abs() <= 1e-12);

    let grid = Grid::new(&BoxDomain::new(vec![-0.5], vec![1.5]).unwrap(), 2).unwrap();
    let (p0, p1) = (
        GridMeasure::point_mass(grid.clone(), 0).unwrap(),
        GridMeasure::point_mass(grid, 1).unwrap(),
    );
    let q = CostSpec::Quadratic { lambda: 1.0 };
    let plan = solve_ot_exact(&p0, &p1, &cost_matrix(&q, &p0, &p1).unwrap()).unwrap();
    assert_eq!(plan.cost_value, 0.5);

    let g = gamma(1024);
    let t = translate(&g, &[0.5]).unwrap();
    let plan = solve_ot_exact(&g, &t, &cost_matrix(&q, &g, &t).unwrap()).unwrap();
    assert_abs_diff_eq!(plan.cost_value, 0.125, epsilon = 1e-3);
    let w2 = wasserstein(&g, &t, Metric::P2).unwrap();
    assert_abs_diff_eq!(plan.cost_value, 0.5 * w2 * w2, epsilon = 1e-9);
    assert!(plan.duality_gap.unwrap() <= 1e-9 * (1.0 + plan.cost_value));
    assert!(plan.marginal_violation <= 1e-9);
    assert_abs_diff_eq!(plan.recompute_cost(&cost_matrix(&q, &g, &t).unwrap()), plan.cost_value, epsilon = 1e-9);
}

#[test]
fn exact_solver_errors() {
    let c = CostMatrix::from_values(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    assert!(matches!(
        solve_ot_exact_weights(&[0.5, 0.5], &[0.5, 0.4], &c),
        Err(Error::Marginal(_))
    ));
    let n = 2001;
    let w = vec![1.0 / n as f64; n];
    let big = CostMatrix::from_values(n, 1, vec![0.0; n]).unwrap();
    assert!(matches!(
        solve_ot_exact_weights(&w, &[1.0], &big),
        Err(Error::Size { .. })
    ));
}

#[test]
fn entropic_solver_examples() {
    let grid = Grid::new(&BoxDomain::new(vec![-0.5], vec![1.5]).unwrap(), 2).unwrap();
    let (p0, p1) = (
        GridMeasure::point_mass(grid.clone(), 0).unwrap(),
        GridMeasure::point_mass(grid, 1).unwrap(),
    );
    let q = CostSpec::Quadratic { lambda: 1.0 };
    let c = cost_matrix(&q, &p0, &p1).unwrap();
    let plan = solve_ot_entropic(&p0, &p1, &c, 1e-3, 10_000).unwrap();
    assert_abs_diff_eq!(plan.cost_value, 0.5, epsilon = 5e-3);
    assert!(matches!(solve_ot_entropic(&p0, &p1, &c, 0.0, 10), Err(Error::Domain(_))));

    let mu = discretize(&PotentialSpec::gaussian(1), &BoxDomain::symmetric(6.0, 1), 48).unwrap();
    let cm = cost_matrix(&q, &mu, &mu).unwrap();
    let values: Vec<f64> = [1e-1, 1e-2, 1e-3]
        .iter()
        .map(|&e| solve_ot_entropic(&mu, &mu, &cm, e, 200_000).unwrap().cost_value)
        .collect();
    assert!(values[0] > values[1] && values[1] > values[2] && values[2] < 1e-3, "{values:?}");
}

#[test]
fn entropic_value_tracks_exact_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = Grid::new(&BoxDomain::symmetric(6.0, 1), 40).unwrap();
    let q = CostSpec::Quadratic { lambda: 1.0 };
    for _ in 0..3 {
        let (mu, nu) = (mixture(&grid, &mut rng), mixture(&grid, &mut rng));
        let c = cost_matrix(&q, &mu, &nu).unwrap();
        let exact = solve_ot_exact(&mu, &nu, &c).unwrap().cost_value;
        let mut previous = f64::INFINITY;
        for &eps in &[1e-1, 1e-2, 1e-3] {
            let ent = solve_ot_entropic(&mu, &nu, &c, eps, 500_000).unwrap();
            assert!(ent.marginal_violation <= 1e-8);
            assert!((ent.cost_value - exact).abs() <= 5.0 * eps * (40f64).ln());
            assert!(ent.cost_value <= previous + 1e-12);
            assert!(ent.cost_value >= exact - 1e-7);
            previous = ent.cost_value;
        }
    }
}

#[test]
fn entropic_iteration_cap() {
    let mu = gamma(32);
    let nu = translate(&mu, &[1.0]).unwrap();
    let c = cost_matrix(&CostSpec::Quadratic { lambda: 1.0 }, &mu, &nu).unwrap();
    assert!(matches!(
        solve_ot_entropic(&mu, &nu, &c, 1e-3, 3),
        Err(Error::Convergence { .. })
    ));
}

#[test]
fn monotone_map_examples() {
    let g = gamma(2048);
    let s = g.grid().spacing(0);
    let id = monotone_map_1d(&g, &g).unwrap();
    for i in 0..g.len() {
        assert!(id.displacement[i].abs() <= 1e-9);
        assert!(id.displacement_derivative[i].abs() <= 1e-6);
    }

    let t = translate(&g, &[0.5]).unwrap();
    let map = monotone_map_1d(&g, &t).unwrap();
    assert!(map.is_monotone());
    for (x, y) in map.points.iter().zip(&map.map_values) {
        if *x < 7.0 {
            assert!((y - x - 0.5).abs() <= s, "x = {x}");
        }
    }

    let wide = GridMeasure::gaussian(g.grid().clone(), &[0.0], &[1.2]).unwrap();
    let map = monotone_map_1d(&g, &wide).unwrap();
    for (x, y) in map.points.iter().zip(&map.map_values) {
        if x.abs() < 6.0 {
            assert!((y - 1.2 * x).abs() <= 2.0 * s, "x = {x}: {y}");
        }
    }
    let pushed = w1_atoms(&map.map_values, g.weights(), &wide.grid().axis_coordinates(0), wide.weights());
    assert!(pushed <= 2.0 * s, "W1(T#mu, nu) = {pushed}");

    let two_d = discretize(&PotentialSpec::gaussian(2), &BoxDomain::symmetric(8.0, 2), 16).unwrap();
    assert!(matches!(monotone_map_1d(&two_d, &two_d), Err(Error::Dimension { .. })));
}

#[test]
fn displacement_remainder_examples() {
    let spec = PotentialSpec::gaussian(1);
    let g = gamma(2048);
    let r = displacement_remainder_1d(&spec, &g, &g).unwrap();
    assert!(r.transport_term.abs() <= 1e-12 && r.remainder_term.abs() <= 1e-12);

    let t = translate(&g, &[0.5]).unwrap();
    let r = displacement_remainder_1d(&spec, &g, &t).unwrap();
    assert_abs_diff_eq!(r.transport_term, 0.125, epsilon = 1e-3);
    assert_abs_diff_eq!(r.remainder_term, 0.0, epsilon = 1e-6);

    let nu = GridMeasure::gaussian(g.grid().clone(), &[0.3], &[1.2]).unwrap();
    let r = displacement_remainder_1d(&spec, &g, &nu).unwrap();
    assert!(r.remainder_term >= 0.0);
    assert_abs_diff_eq!(r.transport_term + r.remainder_term, gauss_kl(0.3, 1.2), epsilon = 1e-3);
    assert_abs_diff_eq!(relative_entropy(&nu, &g).unwrap(), gauss_kl(0.3, 1.2), epsilon = 1e-3);
}

#[test]
fn wasserstein_examples() {
    let g = gamma(1024);
    for m in [Metric::P1, Metric::P2, Metric::L1] {
        assert_eq!(wasserstein(&g, &g, m).unwrap(), 0.0);
    }
    let t = translate(&g, &[0.5]).unwrap();
    assert_abs_diff_eq!(wasserstein(&g, &t, Metric::P2).unwrap(), 0.5, epsilon = 1e-3);
    assert_eq!(wasserstein(&g, &t, Metric::P1).unwrap(), wasserstein(&g, &t, Metric::L1).unwrap());

    // in 2D the ℓ¹ and Euclidean W₁ are ordered by the norm comparison
    let domain = BoxDomain::symmetric(8.0, 2);
    let mu = discretize(&PotentialSpec::gaussian(2), &domain, 16).unwrap();
    let nu = GridMeasure::gaussian(mu.grid().clone(), &[0.4, -0.3], &[1.1, 0.9]).unwrap();
    let (w1, w11) = (wasserstein(&mu, &nu, Metric::P1).unwrap(), wasserstein(&mu, &nu, Metric::L1).unwrap());
    assert!(w1 <= w11 + 1e-12 && w11 <= 2f64.sqrt() * w1 + 1e-12);
}

#[test]
fn costs_are_superadditive_under_transport() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let grid = Grid::new(&BoxDomain::symmetric(6.0, 1), 60).unwrap();
    let v = PotentialSpec::quadratic_plus_quartic(1.0, 1.0, 1).unwrap();
    let c1 = CostSpec::Bregman(v);
    let c2 = CostSpec::CappedQuadratic { scale: 0.8 };
    for _ in 0..10 {
        let (mu, nu) = (mixture(&grid, &mut rng), mixture(&grid, &mut rng));
        let both = transport_cost(&mu, &nu, &CostSpec::Sum(vec![c1.clone(), c2.clone()])).unwrap();
        let parts = transport_cost(&mu, &nu, &c1).unwrap() + transport_cost(&mu, &nu, &c2).unwrap();
        assert!(both >= parts - 1e-10);
    }
}

#[test]
fn jensen_lower_bound_for_remainder_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let grid = Grid::new(&BoxDomain::symmetric(6.0, 1), 80).unwrap();
    for _ in 0..10 {
        let (mu, nu) = (mixture(&grid, &mut rng), mixture(&grid, &mut rng));
        let lhs = transport_cost(&mu, &nu, &CostSpec::RemainderOfDistance).unwrap();
        let w1 = wasserstein(&mu, &nu, Metric::P1).unwrap();
        assert!(lhs >= f_value(w1) - 1e-10);
    }
}

#[test]
fn exact_value_never_exceeds_the_monotone_plan() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let grid = Grid::new(&BoxDomain::symmetric(6.0, 1), 80).unwrap();
    let base = PotentialSpec::gaussian(1);
    let wavy = PotentialSpec::perturbed(&base, 2.0, 1.0).unwrap();
    for spec in [base, wavy] {
        let cost = CostSpec::Bregman(spec);
        for _ in 0..5 {
            let (mu, nu) = (mixture(&grid, &mut rng), mixture(&grid, &mut rng));
            let lp = lp_value(&mu, &nu, &cost);
            let monotone = quantile_coupling_1d(&mu, &nu, &cost).unwrap().cost_value;
            assert!(lp <= monotone + 1e-10);
        }
    }
}

#[test]
fn quantile_and_lp_agree_in_one_dimension() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let grid = Grid::new(&BoxDomain::symmetric(6.0, 1), 100).unwrap();
    let cost = CostSpec::EuclideanPower { p: 2.0 };
    for _ in 0..10 {
        let (mu, nu) = (mixture(&grid, &mut rng), mixture(&grid, &mut rng));
        let lp = lp_value(&mu, &nu, &cost).sqrt();
        let q = wasserstein(&mu, &nu, Metric::P2).unwrap();
        assert!((lp - q).abs() <= 1e-6 + 2.0 * grid.spacing(0));
        assert!((lp - q).abs() <= 1e-9, "{lp} vs {q}");
    }
}

#[test]
fn coupling_export_round_trip() {
    let g = gamma(64);
    let t = translate(&g, &[1.0]).unwrap();
    let plan = solve_ot_exact(&g, &t, &cost_matrix(&CostSpec::Quadratic { lambda: 1.0 }, &g, &t).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (csv, json) = plan.export(dir.path(), "plan").unwrap();
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("i,j,mass"));
    let total: f64 = lines.map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap()).sum();
    assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(meta["solver"]["kind"], "exact_lp");
    assert_eq!(meta["cost_value"].as_f64().unwrap(), plan.cost_value);
}
