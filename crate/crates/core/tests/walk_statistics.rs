use condlab::lattice::{Edge, Point};
use condlab::walk::{
    diffusive_rescale, local_rates, raw_horizon, simulate_path, FnField, PathKey, Position, Uniform, DEFAULT_EVENT_CAP,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Asymptotic 99% critical value of the one-sample Kolmogorov–Smirnov statistic.
fn ks_critical_99(n: usize) -> f64 {
    1.627_6 / (n as f64).sqrt()
}

fn ks_exponential(mut samples: Vec<f64>, rate: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let cdf = 1.0 - (-rate * x).exp();
            (cdf - i as f64 / n).abs().max((i as f64 + 1.0) / n - cdf)
        })
        .fold(0.0, f64::max)
}

fn one_heavy_edge(k: f64) -> FnField<impl Fn(Edge) -> f64 + Sync> {
    let heavy = Edge::horizontal(0, 0);
    FnField(move |e: Edge| if e == heavy { k } else { 1.0 })
}

#[test]
fn jump_count_is_poisson_with_rate_four() {
    let horizon = 3.0;
    let runs = 10_000;
    let counts: Vec<f64> = (0..runs)
        .map(|i| {
            simulate_path(
                &Uniform(1.0),
                Point::ORIGIN,
                horizon,
                PathKey::new(17, i),
                DEFAULT_EVENT_CAP,
            )
            .unwrap()
            .jumps() as f64
        })
        .collect();
    let mean = counts.iter().sum::<f64>() / runs as f64;
    // Poisson(4T): variance 4T
    let se = (4.0 * horizon / runs as f64).sqrt();
    assert!((mean - 4.0 * horizon).abs() < 3.0 * se, "mean {mean}");
}

#[test]
fn holding_times_are_exponential() {
    let k = 6.0;
    let field = one_heavy_edge(k);
    let rate = k + 3.0;
    let n = 10_000;
    let holds: Vec<f64> = (0..n)
        .map(|i| {
            let p = simulate_path(
                &field,
                Point::ORIGIN,
                40.0 / rate,
                PathKey::new(5, i),
                DEFAULT_EVENT_CAP,
            )
            .unwrap();
            p.events[1].0
        })
        .collect();
    let d = ks_exponential(holds, rate);
    assert!(d < ks_critical_99(n as usize), "KS statistic {d}");
}

#[test]
fn first_jump_frequencies_follow_conductances() {
    let k = 5.0;
    let field = one_heavy_edge(k);
    let rates = local_rates(&field, Point::ORIGIN).unwrap();
    let total: f64 = rates.iter().sum();
    let n = 100_000u64;
    let mut counts = [0u64; 4];
    let neighbours = Point::ORIGIN.neighbours();
    for i in 0..n {
        let p = simulate_path(
            &field,
            Point::ORIGIN,
            40.0 / total,
            PathKey::new(8, i),
            DEFAULT_EVENT_CAP,
        )
        .unwrap();
        let first = p.events[1].1;
        counts[neighbours.iter().position(|&q| q == first).unwrap()] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(rates)
        .map(|(&c, r)| {
            let expect = n as f64 * r / total;
            (c as f64 - expect).powi(2) / expect
        })
        .sum();
    let critical = ChiSquared::new(3.0).unwrap().inverse_cdf(0.99);
    assert!(chi2 < critical, "χ² = {chi2}, counts {counts:?}");
    // the heavy edge is the one to the right
    assert_eq!(rates, [1.0, 1.0, k, 1.0]);
}

#[test]
fn rescaled_second_moment_is_two() {
    let eps = 1.0 / 32.0;
    let paths = 4_000;
    let raw = raw_horizon(eps, 1.0);
    let squares: Vec<f64> = (0..paths)
        .map(|i| {
            let p = simulate_path(
                &Uniform(1.0),
                Point::ORIGIN,
                raw,
                PathKey::new(23, i),
                DEFAULT_EVENT_CAP,
            )
            .unwrap();
            let [x, y] = diffusive_rescale(&p, eps, 1.0).unwrap().at(1.0).coords();
            x * x + y * y
        })
        .collect();
    let n = squares.len() as f64;
    let mean = squares.iter().sum::<f64>() / n;
    let var = squares.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!((mean - 2.0).abs() < 3.0 * se, "E|X|² = {mean} ± {se}");
}
