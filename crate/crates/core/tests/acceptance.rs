use std::process::ExitCode;
use std::time::{Duration, Instant};

use ddkit_core::laws::{self, DrawdownQuery};
use ddkit_core::mc::{self, McConfig, Probe, Scheme};
use ddkit_core::ode::{self, After, StepControl};
use ddkit_core::sturm::{self, OdeSettings};
use ddkit_core::verify::{self, VerifyPlan};
use ddkit_core::DiffusionModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

struct Ledger {
    results: Vec<(String, bool)>,
    max_drift: f64,
}

impl Ledger {
    fn run(&mut self, name: &str, budget: Duration, f: impl FnOnce(&mut f64) -> Outcome) {
        let start = Instant::now();
        let out = f(&mut self.max_drift);
        let took = start.elapsed();
        let in_time = took <= budget;
        let pass = out.pass && in_time;
        println!(
            "[{}] {name}: {} ({:.2}s of {:.0}s budget{})",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64(),
            budget.as_secs_f64(),
            if in_time { "" } else { ", over budget" }
        );
        self.results.push((name.to_string(), pass));
    }
}

fn bm() -> DiffusionModel {
    DiffusionModel::brownian(1.0).unwrap()
}

fn drifted() -> DiffusionModel {
    DiffusionModel::drifted_brownian(1.0, 1.0).unwrap()
}

fn tail_law() -> Outcome {
    let q = DrawdownQuery::new(0.0, 1.0);
    let mut worst = 0.0f64;
    for y in [0.5, 1.0, 2.0, 4.0] {
        match laws::max_tail(&bm(), &q, y) {
            Ok(v) => worst = worst.max(rel(v, (-y).exp())),
            Err(e) => return Outcome::new(false, e.to_string()),
        }
    }
    Outcome::new(worst <= 1e-9, format!("max rel error {worst:.2e} (limit 1e-9)"))
}

fn sech_transform(drift: &mut f64) -> Outcome {
    let mut worst = 0.0f64;
    for alpha in [0.1, 0.5, 2.0] {
        match laws::joint_transform(&bm(), &DrawdownQuery::new(0.0, 1.0).with_alpha(alpha)) {
            Ok(r) => {
                *drift = drift.max(r.max_wronskian_drift);
                worst = worst.max(rel(r.value, 1.0 / (2.0 * alpha).sqrt().cosh()));
            }
            Err(e) => return Outcome::new(false, e.to_string()),
        }
    }
    Outcome::new(worst <= 1e-8, format!("max rel error {worst:.2e} (limit 1e-8)"))
}

// The opposite arrangement: b in the exponent, the run-up intensity ĉ − ν
// outside.
fn swapped_orientation(model: &DiffusionModel, alpha: f64) -> f64 {
    let settings = OdeSettings::default();
    let ctl = StepControl::new(1e-11, 1e-11, 100_000);
    let out = ode::integrate(
        |y, s: &[f64; 2]| {
            let r = laws::excursion_rates(model, y, 1.0, alpha, &settings)?;
            Ok([r.b, (-s[0]).exp() * (r.c_hat - r.nu)])
        },
        0.0,
        [0.0, 0.0],
        1e4,
        &ctl,
        |_, s| Ok(if s[0] > 40.0 { After::Stop } else { After::Continue }),
    )
    .unwrap();
    out.y[1]
}

fn orientation(drift: &mut f64) -> Outcome {
    let mut implemented = Vec::new();
    for alpha in [1e-2, 1e-4, 1e-6, 1e-8, 1e-10] {
        match laws::joint_transform(&bm(), &DrawdownQuery::new(0.0, 1.0).with_alpha(alpha)) {
            Ok(r) => {
                *drift = drift.max(r.max_wronskian_drift);
                implemented.push(r.value);
            }
            Err(e) => return Outcome::new(false, e.to_string()),
        }
    }
    let printed: Vec<f64> = [0.5, 1e-2, 1e-4, 1e-6].iter().map(|a| swapped_orientation(&bm(), *a)).collect();
    let limit_gap = (implemented.last().unwrap() - 1.0).abs();
    let printed_vanishes = printed.windows(2).all(|w| w[1] < w[0]) && *printed.last().unwrap() < 1e-5;
    Outcome::new(
        limit_gap <= 1e-8 && printed_vanishes,
        format!(
            "implemented |1 - value| at alpha=1e-10: {limit_gap:.1e}; opposite orientation at alpha=0.5..1e-6: {} (expected to vanish)",
            printed.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn excursion_quotients() -> Outcome {
    let b = laws::b_factor(&bm(), 0.0, 1.0, 0.5).unwrap();
    let c = laws::c_hat(&bm(), 0.0, 1.0, 0.5).unwrap();
    let eb = rel(b, 1.0 / 1f64.sinh());
    let ec = rel(c, 1.0 / 1f64.tanh());

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let models = [bm(), drifted(), DiffusionModel::ornstein_uhlenbeck(1.0, 0.0, 1.0).unwrap()];
    for model in &models {
        let basis = sturm::solve_local_basis(model, 0.5, -0.5, 0.5, &OdeSettings::default()).unwrap();
        let pair = basis.endpoint_pair().unwrap();
        let (b0, c0) = laws::excursion_quotients(&pair).unwrap();
        let mut trials = 0;
        while trials < 200 {
            let m: [f64; 4] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
            if (m[0] * m[3] - m[1] * m[2]).abs() < 0.1 {
                continue;
            }
            trials += 1;
            let (b1, c1) = laws::excursion_quotients(&pair.recombine(m[0], m[1], m[2], m[3])).unwrap();
            worst = worst.max(rel(b1, b0)).max(rel(c1, c0));
        }
    }
    Outcome::new(
        eb <= 1e-9 && ec <= 1e-9 && worst <= 1e-10,
        format!("b rel {eb:.1e}, c_hat rel {ec:.1e} (limit 1e-9); recombination deviation {worst:.1e} (limit 1e-10)"),
    )
}

fn monte_carlo(drift: &mut f64) -> Outcome {
    let base = McConfig {
        n_paths: 100_000,
        dt: None,
        t_max: 50.0,
        seed: 20_240_611,
        scheme: None,
    };
    let ou_cfg = base.with_scheme(Scheme::Euler);
    let matrix: [(DiffusionModel, f64, f64, [f64; 3], McConfig); 4] = [
        (bm(), 0.0, 1.0, [0.5, 1.0, 2.0], base),
        (drifted(), 0.0, 1.0, [0.5, 1.0, 2.0], base),
        (DiffusionModel::geometric(0.05, 0.3).unwrap(), 1.0, 0.3, [1.1, 1.3, 1.6], base),
        (DiffusionModel::ornstein_uhlenbeck(1.0, 0.0, 1.0).unwrap(), 0.0, 1.0, [0.25, 0.5, 1.0], ou_cfg),
    ];
    let mut all = true;
    let mut parts = Vec::new();
    for (model, x, delta, ys, cfg) in matrix {
        let plan = VerifyPlan {
            tail_levels: ys.to_vec(),
            max_halvings: 5,
            ..VerifyPlan::default_for(x, delta, cfg)
        };
        match verify::verify(&model, &plan) {
            Ok(r) => {
                *drift = drift.max(r.max_wronskian_drift);
                let zs: Vec<String> = r.rows.iter().map(|row| format!("{:+.2}", row.z)).collect();
                println!(
                    "    {:<10} dt={:.2e} unstopped={:.1e} z=[{}] {}",
                    r.model_id,
                    r.dt,
                    r.unstopped_fraction,
                    zs.join(", "),
                    if r.pass { "ok" } else { "MISMATCH" }
                );
                all &= r.pass;
                parts.push(r.model_id);
            }
            Err(e) => {
                println!("    {}: {e}", model.id());
                all = false;
            }
        }
    }
    Outcome::new(all, format!("3-SE agreement on {} with n=1e5", parts.join(", ")))
}

fn excursions() -> Outcome {
    let n = 10_000;
    let cfg = McConfig::new(n, 0.0025, 1e4, 77);
    let paths = match mc::simulate_excursions(&bm(), 0.0, 1.0, 2.0, &cfg) {
        Ok(p) => p,
        Err(e) => return Outcome::new(false, e.to_string()),
    };
    let counts: Vec<usize> = paths.iter().map(|p| mc::extract_excursions(p, 1.0, (0.0, 2.0))).collect();
    let s = mc::poisson_summary(&counts).unwrap();
    let band = 3.0 * (2.0 / n as f64).sqrt();
    let pass = (s.mean - 2.0).abs() <= band && (0.9..=1.1).contains(&s.dispersion);
    Outcome::new(
        pass,
        format!("mean {:.4} (2 ± {band:.4}), variance/mean {:.4} (in [0.9, 1.1])", s.mean, s.dispersion),
    )
}

fn self_consistency(drift: &mut f64) -> Outcome {
    let model = drifted();
    let q = DrawdownQuery::new(0.0, 1.0).with_alpha(0.5).with_beta(0.3);
    let joint = match laws::joint_transform(&model, &q) {
        Ok(r) => {
            *drift = drift.max(r.max_wronskian_drift);
            r
        }
        Err(e) => return Outcome::new(false, e.to_string()),
    };
    let top = joint.truncation_point;
    let factored = ddkit_core::quad::integrate(
        |y| Ok((-q.beta * y).exp() * laws::conditional_laplace(&model, &q, y)? * laws::max_density(&model, &q, y)?),
        0.0,
        top,
        ddkit_core::quad::QuadSettings::with_tol(1e-11),
    )
    .unwrap()
    .value;
    let ef = rel(factored, joint.value);

    let times = [0.5, 1.0, 2.0];
    let cdf = laws::tau_cdf(&bm(), &DrawdownQuery::new(0.0, 1.0), &times).unwrap();
    *drift = drift.max(cdf.max_wronskian_drift);
    let monotone = cdf.cdf.windows(2).all(|w| w[0] <= w[1]);
    let probes: Vec<Probe> = times.iter().map(|&t| Probe::Cdf { t }).collect();
    let cfg = McConfig {
        n_paths: 100_000,
        dt: None,
        t_max: 50.0,
        seed: 99,
        scheme: None,
    };
    let choice = mc::choose_dt(&bm(), 0.0, 1.0, &cfg, &probes, 5).unwrap();
    let mut zs = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        let e = mc::estimate_cdf(&choice.samples, t).unwrap();
        zs.push((e.estimate - cdf.cdf[i]) / e.std_error);
    }
    let within = zs.iter().all(|z| z.abs() <= 3.0);
    Outcome::new(
        ef <= 1e-7 && monotone && within && !cdf.unstable.iter().any(|u| *u),
        format!(
            "factorization rel {ef:.1e} (limit 1e-7); tau CDF {:?} orders {:?}, z vs MC [{}]",
            cdf.cdf.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
            cdf.order,
            zs.iter().map(|z| format!("{z:+.2}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn hygiene(drift: &mut f64) -> Outcome {
    let models = [
        (bm(), vec![(0.0, 1.0), (-5.0, 5.0)]),
        (drifted(), vec![(0.0, 1.0), (-5.0, 5.0)]),
        (DiffusionModel::geometric(0.05, 0.3).unwrap(), vec![(0.5, 1.5), (0.5, 10.5)]),
        (DiffusionModel::ornstein_uhlenbeck(1.0, 0.0, 1.0).unwrap(), vec![(0.0, 1.0), (-5.0, 5.0)]),
    ];
    let mut sweep = 0.0f64;
    for (model, intervals) in &models {
        for &(l, r) in intervals {
            for alpha in [0.01, 0.5, 5.0, 50.0] {
                match sturm::solve_local_basis(model, alpha, l, r, &OdeSettings::default()) {
                    Ok(b) => sweep = sweep.max(b.max_wronskian_drift()),
                    Err(e) => return Outcome::new(false, e.to_string()),
                }
            }
        }
    }
    *drift = drift.max(sweep);

    let h = 1e-3;
    let mut worst_fd = 0.0f64;
    let cases = [
        (drifted(), 0.0, 1.0, 0.8),
        (DiffusionModel::geometric(0.05, 0.3).unwrap(), 1.0, 0.3, 1.3),
        (DiffusionModel::ornstein_uhlenbeck(1.0, 0.0, 1.0).unwrap(), 0.0, 1.0, 0.7),
    ];
    for (model, x, delta, y) in &cases {
        let q = DrawdownQuery::new(*x, *delta).with_tol(1e-12);
        let up = laws::max_tail(model, &q, y + h).unwrap().ln();
        let down = laws::max_tail(model, &q, y - h).unwrap().ln();
        let fd = -(up - down) / (2.0 * h);
        worst_fd = worst_fd.max(rel(fd, laws::nu_rate(model, *y, *delta).unwrap()));
    }
    Outcome::new(
        *drift <= 1e-8 && worst_fd <= 1e-6,
        format!("max Wronskian drift {:.1e} (limit 1e-8); -d/dy log tail vs nu S' rel {worst_fd:.1e} (limit 1e-6)", *drift),
    )
}

fn main() -> ExitCode {
    let mut ledger = Ledger {
        results: Vec::new(),
        max_drift: 0.0,
    };
    let secs = Duration::from_secs;
    ledger.run("1 BM tail law", secs(1), |_| tail_law());
    ledger.run("2 BM drawdown transform", secs(10), sech_transform);
    ledger.run("3 orientation check", secs(60), orientation);
    ledger.run("4 excursion quotients", secs(60), |_| excursion_quotients());
    ledger.run("5 Monte Carlo agreement", secs(300), monte_carlo);
    ledger.run("6 excursion Poisson structure", secs(120), |_| excursions());
    ledger.run("7 self-consistency", secs(300), self_consistency);
    ledger.run("8 numerical hygiene", secs(120), hygiene);

    let failed: Vec<&str> = ledger.results.iter().filter(|r| !r.1).map(|r| r.0.as_str()).collect();
    println!("acceptance: {}/{} criteria passed", ledger.results.len() - failed.len(), ledger.results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join("; "));
        ExitCode::FAILURE
    }
}
