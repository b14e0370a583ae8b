//! Acceptance gate. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use abhmm::dynamics::{
    exp_contraction_rates, fixed_point_equation_residual, reference_contraction_rate, reference_step,
    solve_fixed_point, steady_belief_bounds, stochastic_contraction_rate, switch_reference_trajectory,
    LogBeliefRatio, SolverOptions,
};
use abhmm::filter::{abhmm_update, bayes_update, equal_exit_matrix, full_hmm_update, Belief, FilterConfig};
use abhmm::model::{compute_identifiability, compute_llr_bound, GaussianGridModel, TruncatedGaussianModel};
use abhmm::sim::{measure_adaptation_time, monte_carlo_paired, EnvironmentSpec, MonteCarloConfig, Schedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALPHA_GRID: [f64; 4] = [0.01, 0.05, 0.1, 0.15];
const BETA_GRID: [f64; 3] = [0.5, 1.0, 2.0];
const D_MIN_GRID: [f64; 3] = [0.5, 1.0, 2.0];
const RATIO_GRID: [f64; 3] = [1.0, 2.0, 4.0];
const STATES_GRID: [usize; 3] = [2, 3, 5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// `M − 1` gaps spaced evenly from `d_min` to `ratio · d_min`.
fn spread_gaps(d_min: f64, ratio: f64, states: usize) -> Vec<f64> {
    let k = states - 1;
    if k == 1 {
        return vec![d_min];
    }
    (0..k)
        .map(|j| d_min + (ratio - 1.0) * d_min * j as f64 / (k - 1) as f64)
        .collect()
}

fn grid() -> impl Iterator<Item = (f64, f64, f64, f64, usize)> {
    ALPHA_GRID.into_iter().flat_map(|a| {
        BETA_GRID.into_iter().flat_map(move |b| {
            D_MIN_GRID.into_iter().flat_map(move |d| {
                RATIO_GRID
                    .into_iter()
                    .flat_map(move |r| STATES_GRID.into_iter().map(move |m| (a, b, d, r, m)))
            })
        })
    })
}

fn max_prob_diff(a: &Belief, b: &Belief) -> f64 {
    a.probabilities()
        .iter()
        .zip(b.probabilities())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn degeneration() -> Outcome {
    const BAYES_TOL: f64 = 1e-12;
    const HMM_TOL: f64 = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_bayes, mut worst_hmm) = (0.0f64, 0.0f64);
    for case in 0..1000 {
        let m = [2usize, 3, 5, 10][case % 4];
        let weights: Vec<f64> = (0..m).map(|_| rng.random_range(1e-6..1.0)).collect();
        let prior = Belief::from_probabilities(&weights).unwrap();
        let ll: Vec<f64> = (0..m).map(|_| rng.random_range(-30.0..30.0)).collect();
        let a = abhmm_update(&prior, &ll, 0.0, 1.0).unwrap();
        let b = bayes_update(&prior, &ll).unwrap();
        worst_bayes = worst_bayes.max(max_prob_diff(&a, &b));

        let h_max = (m - 1) as f64 / m as f64;
        let h = rng.random_range(0.001..h_max);
        let a = abhmm_update(&prior, &ll, h / (m - 1) as f64, 1.0).unwrap();
        let f = full_hmm_update(&prior, &ll, &equal_exit_matrix(m, h).unwrap()).unwrap();
        worst_hmm = worst_hmm.max(max_prob_diff(&a, &f));
    }
    outcome(
        worst_bayes <= BAYES_TOL && worst_hmm <= HMM_TOL,
        format!("max |Δμ| vs Bayes {worst_bayes:.2e} (≤ {BAYES_TOL:e}), vs equal-exit HMM {worst_hmm:.2e} (≤ {HMM_TOL:e})"),
    )
}

fn fixed_point_correctness() -> Outcome {
    const ORACLE: f64 = -2.749_726_735_507_650_7;
    const VALUE_TOL: f64 = 1e-10;
    const EQUATION_TOL: f64 = 1e-9;
    let fp = solve_fixed_point(0.1, 1.0, &[1.0], SolverOptions::default()).unwrap();
    let x = fp.x_inf[0];
    let eq = fixed_point_equation_residual(&fp.x_inf, 0.1, 1.0, &[1.0]).unwrap();
    let single = (x - ORACLE).abs() <= VALUE_TOL && eq < EQUATION_TOL && x < -1.0;
    let mut checked = 0;
    let mut violations = 0;
    for (a, b, dmin, r, m) in grid() {
        let d = spread_gaps(dmin, r, m);
        let fp = solve_fixed_point(a, b, &d, SolverOptions::default()).unwrap();
        checked += 1;
        if fp.x_inf.iter().zip(&d).any(|(x, dm)| !(*x < -b * dm)) {
            violations += 1;
        }
    }
    outcome(
        single && violations == 0,
        format!("x = {x:.16} (oracle {ORACLE}, tol {VALUE_TOL:e}), equation residual {eq:.1e} (< {EQUATION_TOL:e}); x̂ < −βd on {}/{checked} grid points", checked - violations),
    )
}

fn gaussian_gaps() -> Vec<f64> {
    let model = GaussianGridModel::unit_grid(5, 0.5).unwrap();
    compute_identifiability(&model, 0, &model, 0).unwrap()
}

fn trajectory_contraction() -> Outcome {
    const FLOOR: f64 = 1e-9;
    const SLACK: f64 = 1e-12;
    let d = gaussian_gaps();
    let mut worst_margin = f64::NEG_INFINITY;
    let mut max_ratio = 0.0f64;
    for a in [0.01, 0.05, 0.1] {
        for b in [0.5, 1.0, 2.0] {
            let fp = solve_fixed_point(a, b, &d, SolverOptions::default()).unwrap();
            let lambda = reference_contraction_rate(a, b, d[0], 0.0, 5).unwrap();
            let mut x = LogBeliefRatio::zeros(4);
            for _ in 0..200 {
                let prev = x.sup_distance(&fp.x_inf);
                x = reference_step(&x, a, b, &d).unwrap();
                if prev > FLOOR {
                    let ratio = x.sup_distance(&fp.x_inf) / prev;
                    max_ratio = max_ratio.max(ratio);
                    worst_margin = worst_margin.max(ratio - lambda);
                }
            }
        }
    }
    outcome(
        worst_margin <= SLACK,
        format!("d = {d:?}; max step ratio {max_ratio:.4}, worst ratio − λ = {worst_margin:.4} (≤ {SLACK:e})"),
    )
}

fn exp_domain_contraction() -> Outcome {
    const FLOOR: f64 = 1e-9;
    const SLACK: f64 = 1e-12;
    let d = gaussian_gaps();
    let mut worst_margin = f64::NEG_INFINITY;
    for a in [0.01, 0.05, 0.1] {
        for b in [0.5, 1.0, 2.0] {
            let fp = solve_fixed_point(a, b, &d, SolverOptions::default()).unwrap();
            let gamma1 = exp_contraction_rates(a, b, d[0], 1.0, 5).unwrap().gamma1;
            let mut x = LogBeliefRatio::zeros(4);
            for _ in 0..200 {
                let prev = x.exp_l1_distance(&fp.x_inf);
                x = reference_step(&x, a, b, &d).unwrap();
                if prev > FLOOR {
                    worst_margin = worst_margin.max(x.exp_l1_distance(&fp.x_inf) / prev - gamma1);
                }
            }
        }
    }
    outcome(worst_margin <= SLACK, format!("worst ratio − γ₁ = {worst_margin:.4} (≤ {SLACK:e})"))
}

fn steady_belief_containment() -> Outcome {
    const SLACK: f64 = 1e-12;
    let mut violations = 0;
    let mut vacuous = 0;
    let mut total = 0;
    for (a, b, dmin, r, m) in grid() {
        let d = spread_gaps(dmin, r, m);
        let d_max = d.iter().copied().fold(0.0, f64::max);
        let bounds = steady_belief_bounds(a, b, dmin, d_max, m).unwrap();
        let mu0 = solve_fixed_point(a, b, &d, SolverOptions::default()).unwrap().mu_inf[0];
        total += 1;
        vacuous += bounds.lower_vacuous as usize;
        if !(bounds.lower <= mu0 + SLACK && mu0 <= bounds.upper + SLACK) {
            violations += 1;
        }
    }
    let mut monotone = true;
    for m in STATES_GRID {
        for bd in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let lows: Vec<f64> = ALPHA_GRID
                .iter()
                .map(|&a| steady_belief_bounds(a, 1.0, bd, bd, m).unwrap().lower_raw)
                .collect();
            monotone &= lows.windows(2).all(|w| w[1] < w[0]);
        }
        for a in ALPHA_GRID {
            let lows: Vec<f64> = [0.25, 0.5, 1.0, 2.0, 4.0]
                .iter()
                .map(|&bd| steady_belief_bounds(a, 1.0, bd, bd, m).unwrap().lower_raw)
                .collect();
            monotone &= lows.windows(2).all(|w| w[1] > w[0]);
        }
    }
    outcome(
        violations == 0 && monotone,
        format!("μ̲ ≤ μ̂₀^∞ ≤ μ̄ on {}/{total} points ({vacuous} with vacuous μ̲), slack {SLACK:e}; μ̲ ↓ in α and ↑ in βd̲: {monotone}", total - violations),
    )
}

fn accuracy_sweep() -> Outcome {
    const SLACK: f64 = 0.02;
    const MARGIN: f64 = 0.02;
    let alphas = [0.002, 0.005, 0.01, 0.02, 0.04, 0.07, 0.1, 0.13, 0.16, 0.19];
    let model = GaussianGridModel::unit_grid(5, 0.5).unwrap();
    let env = EnvironmentSpec::new(Schedule::PeriodicRedraw { period: 10 }, 10_000);
    let mc = MonteCarloConfig::new(16, 6);
    let mut pass = true;
    let mut rows = Vec::new();
    for (k, &a) in alphas.iter().enumerate() {
        let filters = [
            FilterConfig::Abhmm { alpha: a, beta: 1.0 },
            FilterConfig::LinearizedAbhmm { alpha: a, beta: 1.0 },
        ];
        let out = monte_carlo_paired(&mc, &env, &model, &model, &filters, None).unwrap();
        let (ab, lin) = (out[0].overall_accuracy, out[1].overall_accuracy);
        pass &= ab >= lin - SLACK;
        if k < 2 {
            pass &= ab >= lin + MARGIN;
        }
        rows.push(format!("α={a}: {ab:.3}/{lin:.3}"));
    }
    outcome(pass, format!("accuracy αβ-HMM/linearized {}", rows.join(", ")))
}

struct TruncatedSetting {
    truth: TruncatedGaussianModel,
    likelihood: TruncatedGaussianModel,
}

fn truncated(sigma: f64) -> TruncatedSetting {
    TruncatedSetting {
        truth: TruncatedGaussianModel::new(vec![0.0, 1.0, 2.0], sigma, -5.0, 5.0).unwrap(),
        likelihood: TruncatedGaussianModel::new(vec![1.0, 2.0, 3.0], sigma, -5.0, 5.0).unwrap(),
    }
}

fn error_probability_trends() -> Outcome {
    const SMALL_ALPHA_CEILING: f64 = 0.02;
    let alphas = [0.01, 0.02, 0.05];
    let sigmas = [1.0, 2.0, 4.0];
    let env = EnvironmentSpec::new(Schedule::Constant { state: 0 }, 200);
    let mc = MonteCarloConfig::new(1000, 7);
    let filters: Vec<FilterConfig> = alphas.iter().map(|&a| FilterConfig::Abhmm { alpha: a, beta: a }).collect();
    // late[σ][α], early[σ][α]
    let mut late = Vec::new();
    let mut early = Vec::new();
    for s in sigmas {
        let t = truncated(s);
        let out = monte_carlo_paired(&mc, &env, &t.truth, &t.likelihood, &filters, None).unwrap();
        late.push(out.iter().map(|m| m.p_e_at(200)).collect::<Vec<_>>());
        early.push(out.iter().map(|m| m.p_e_at(10)).collect::<Vec<_>>());
    }
    let decays = (0..3).all(|i| (0..3).all(|j| late[i][j] <= early[i][j]));
    let small = late[0][0] <= SMALL_ALPHA_CEILING;
    let grows = (0..3).all(|j| late[0][j] <= late[1][j] && late[1][j] <= late[2][j] && late[2][j] > late[0][j]);
    let table: Vec<String> = sigmas
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let cells: Vec<String> = (0..3).map(|j| format!("{:.3}→{:.3}", early[i][j], late[i][j])).collect();
            format!("σ={s}: [{}]", cells.join(" "))
        })
        .collect();
    outcome(
        decays && small && grows,
        format!(
            "(a) p̂_e(200) ≤ p̂_e(10): {decays}; (b) p̂_e(200) at α=β=0.01, σ=1 = {:.3} (≤ {SMALL_ALPHA_CEILING}); (c) ↑ in σ: {grows}; α ∈ {alphas:?}, {}",
            late[0][0],
            table.join("; ")
        ),
    )
}

fn steady_gap() -> Outcome {
    let (a, b) = (0.05, 0.05);
    let env = EnvironmentSpec::new(Schedule::Constant { state: 0 }, 500);
    let mc = MonteCarloConfig::new(1000, 8);
    let mut pass = true;
    let mut rows = Vec::new();
    for sigma in [1.0, 2.0, 4.0] {
        let t = truncated(sigma);
        let d = compute_identifiability(&t.truth, 0, &t.likelihood, 0).unwrap();
        let c = compute_llr_bound(&t.truth, 0, &t.likelihood, 0).unwrap();
        let d_min = d.iter().copied().fold(f64::INFINITY, f64::min);
        let bound = stochastic_contraction_rate(a, b, d_min, c, 3).unwrap().steady_gap_bound;
        let fp = solve_fixed_point(a, b, &d, SolverOptions::default()).unwrap();
        let series = abhmm::sim::monte_carlo(&mc, &env, &t.truth, &t.likelihood, &FilterConfig::Abhmm { alpha: a, beta: b }, Some(&fp.x_inf)).unwrap();
        let gap = series.tail_mean_gap(50).unwrap();
        pass &= gap <= bound;
        rows.push(format!("σ={sigma}: gap {gap:.3} ≤ {bound:.2}"));
    }
    outcome(pass, format!("tail mean ‖x − x̂^∞‖∞ vs βC/(1−λ₁): {}", rows.join(", ")))
}

fn adaptation_saturation() -> Outcome {
    const BAYES_SLOPE_FACTOR: f64 = 0.8;
    const SATURATION_TOL: f64 = 1.0;
    let t1s = [10usize, 50, 200, 1000];
    // Binary Gaussian pair with means 1, 2 and σ = 1: both gaps are 0.5.
    let model = GaussianGridModel::unit_grid(2, 1.0).unwrap();
    let d1 = compute_identifiability(&model, 0, &model, 0).unwrap()[0];
    let d2 = compute_identifiability(&model, 1, &model, 1).unwrap()[0];
    let measure = |alpha: f64, t1: usize| {
        let horizon = t1 + 4 * t1 + 200;
        let x = switch_reference_trajectory(alpha, 1.0, d1, d2, 0.0, t1, horizon).unwrap();
        measure_adaptation_time(&x, t1).expect("adapts within horizon") as f64
    };
    let bayes: Vec<f64> = t1s.iter().map(|&t| measure(0.0, t)).collect();
    let ab: Vec<f64> = t1s.iter().map(|&t| measure(0.05, t)).collect();
    let bayes_grows = t1s
        .windows(2)
        .zip(bayes.windows(2))
        .all(|(t, v)| v[1] - v[0] >= BAYES_SLOPE_FACTOR * (d1 / d2) * (t[1] - t[0]) as f64);
    let saturated = (ab[3] - ab[2]).abs() <= SATURATION_TOL;
    outcome(
        bayes_grows && saturated,
        format!("T1 {t1s:?}: Bayes {bayes:?} (slope ≥ {BAYES_SLOPE_FACTOR}·d1/d2), αβ-HMM {ab:?} (|ΔT| ≤ {SATURATION_TOL} from 200 to 1000)"),
    )
}

fn numerical_robustness() -> Outcome {
    const SUM_TOL: f64 = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let filters = |m: usize| {
        let amax = 1.0 / m as f64;
        vec![
            FilterConfig::Abhmm { alpha: 0.1 * amax, beta: 1.0 },
            FilterConfig::Abhmm { alpha: 0.9 * amax, beta: 2.5 },
            FilterConfig::Bayes,
            FilterConfig::EqualExitHmm { h: 0.05 },
            FilterConfig::LinearizedAbhmm { alpha: 0.5 * amax, beta: 1.0 },
            FilterConfig::Asl { delta: 0.2 },
        ]
    };
    let mut worst = 0.0f64;
    let mut non_finite = 0usize;
    let mut steps = 0usize;
    for m in [2usize, 3, 5, 10] {
        for f in filters(m) {
            let mut belief = Belief::uniform(m);
            for _ in 0..100_000 / 24 + 1 {
                let ll: Vec<f64> = (0..m).map(|_| rng.random_range(-300.0..=300.0)).collect();
                belief = f.update(&belief, &ll).unwrap();
                let p = belief.probabilities();
                non_finite += p.iter().chain(belief.log_weights()).any(|v| v.is_nan() || v.is_infinite()) as usize;
                worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
                steps += 1;
            }
        }
    }
    outcome(
        worst <= SUM_TOL && non_finite == 0 && steps >= 100_000,
        format!("{steps} steps, max |Σμ − 1| = {worst:.1e} (≤ {SUM_TOL:e}), {non_finite} non-finite"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("degeneration to Bayes and equal-exit HMM", degeneration, Duration::from_secs(1)),
        ("fixed point value and sign", fixed_point_correctness, Duration::from_secs(1)),
        ("trajectory contraction envelope", trajectory_contraction, Duration::from_secs(1)),
        ("exponential-domain contraction", exp_domain_contraction, Duration::from_secs(1)),
        ("steady belief bounds", steady_belief_containment, Duration::from_secs(5)),
        ("accuracy vs linearized filter", accuracy_sweep, Duration::from_secs(60)),
        ("error probability trends", error_probability_trends, Duration::from_secs(60)),
        ("steady gap bound", steady_gap, Duration::from_secs(60)),
        ("adaptation time saturation", adaptation_saturation, Duration::from_secs(1)),
        ("numerical robustness", numerical_robustness, Duration::from_secs(5)),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed < *budget;
        failed += !pass as usize;
        println!(
            "[{}] {:>2}. {name}: {} [{:.3}s < {}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
