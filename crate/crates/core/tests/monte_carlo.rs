use num::ToPrimitive;
use runslab::combinatorics::{mean_runs_discrete, mean_runs_time, var_runs_discrete};
use runslab::evolve::{pattern_path, rep_seed, run_sweep, runs_path, Boundary, Model, SimConfig};
use runslab::pattern::PatternFunctional;
use runslab::rng::{random_permutation, CounterRng};
use runslab::stats::MomentAccumulator;

fn assert_within(label: &str, acc: &MomentAccumulator, reference: f64, k: f64) {
    let z = (acc.mean() - reference) / acc.se();
    assert!(
        z.abs() <= k,
        "{label}: mean {} vs {reference}, se {}, z = {z:.2}",
        acc.mean(),
        acc.se()
    );
}

#[test]
fn discrete_run_counts_match_exact_moments() {
    for &n in &[10usize, 100, 1000] {
        let reps = if n == 1000 { 4000 } else { 20_000 };
        let steps = [n / 4, n / 2, 3 * n / 4];
        let mut accs = vec![MomentAccumulator::new(); steps.len()];
        for rep in 0..reps {
            let mut rng = CounterRng::for_rep(0x5eed, rep);
            let path = runs_path(&random_permutation(&mut rng, n), Boundary::Linear);
            for (acc, &m) in accs.iter_mut().zip(&steps) {
                acc.push(path[m] as f64);
            }
        }
        for (acc, &m) in accs.iter().zip(&steps) {
            let (n, m) = (n as u64, m as u64);
            let mean = mean_runs_discrete(n, m).unwrap().to_f64().unwrap();
            assert_within(&format!("X_({n},{m})"), acc, mean, 4.0);
            let var = var_runs_discrete(n, m).unwrap().to_f64().unwrap();
            let var_z = (acc.variance() - var) / acc.variance_se_normal();
            assert!(var_z.abs() <= 4.0, "Var X_({n},{m}): {} vs {var}", acc.variance());
        }
    }
}

#[test]
fn half_filled_means_at_n_100() {
    let grid = vec![0.5];
    let discrete = run_sweep(&SimConfig::new(Model::Runs(Boundary::Linear), 100, 100_000, 11).with_grid(grid.clone())).unwrap();
    let z = (discrete.grid.mean(0) - 25.5) / (discrete.grid.covariance(0, 0) / 1e5).sqrt();
    assert!(z.abs() <= 3.0, "discrete mean {} (z = {z:.2})", discrete.grid.mean(0));

    let timed = run_sweep(&SimConfig::new(Model::RunsTime, 100, 100_000, 12).with_grid(grid)).unwrap();
    let reference = mean_runs_time(100, 0.5).unwrap();
    assert!((reference - 25.25).abs() < 1e-12);
    let z = (timed.grid.mean(0) - reference) / (timed.grid.covariance(0, 0) / 1e5).sqrt();
    assert!(z.abs() <= 3.0, "time-model mean {} (z = {z:.2})", timed.grid.mean(0));
}

#[test]
fn isolated_ones_mean_on_a_cycle() {
    // window 010 counts isolated ones; on a cycle of n cells with m ones the
    // expected count is m(n-m)(n-m-1)/((n-1)(n-2)).
    let psi = PatternFunctional::run_length(1).unwrap();
    for &n in &[30usize, 300] {
        let m = n / 3;
        let mut acc = MomentAccumulator::new();
        for rep in 0..20_000 {
            let mut rng = CounterRng::from_key(rep_seed(0xc0ffee, rep));
            let path = pattern_path(&psi, &random_permutation(&mut rng, n), Boundary::Cyclic).unwrap();
            acc.push(path[m]);
        }
        let (nf, mf) = (n as f64, m as f64);
        let exact = mf * (nf - mf) * (nf - mf - 1.0) / ((nf - 1.0) * (nf - 2.0));
        assert_within(&format!("isolated ones n={n}"), &acc, exact, 4.0);
    }
}

#[test]
fn queue_sizes_at_half_time() {
    let n = 2000;
    for model in [Model::PriorityQueue, Model::LazyHash] {
        let stats = run_sweep(&SimConfig::new(model.clone(), n, 5000, 21).with_grid(vec![0.5])).unwrap();
        let mean = stats.grid.mean(0);
        let var = stats.grid.covariance(0, 0);
        let z = (mean - n as f64 / 2.0) / (var / 5000.0).sqrt();
        assert!(z.abs() <= 4.0, "{:?}: E Y(1/2) = {mean} (z = {z:.2})", model.tag());
        assert!((var / (n as f64 / 4.0) - 1.0).abs() < 0.1, "{:?}: Var Y(1/2) = {var}", model.tag());
    }
}

#[test]
fn odd_size_sweep_is_consistent() {
    // odd n puts the midpoint at step ceil(n/2) = 7
    let config = SimConfig::new(Model::Runs(Boundary::Cyclic), 13, 50_000, 5);
    let stats = run_sweep(&config).unwrap();
    assert_eq!(stats.count(), 50_000);
    assert!(stats.max.mean() >= stats.mid.mean());
    let exact_mid = mean_runs_discrete(13, 7).unwrap().to_f64().unwrap();
    // joining the two ends can only merge runs
    assert!(stats.mid.mean() < exact_mid);
    assert!(stats.max.mean() <= 7.0 && stats.max.mean() > 3.0);
}
