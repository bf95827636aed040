//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::f64::consts::{PI, TAU};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use umax::extremum::{default_grid_n, find_max_oracle, pairwise_hessian, DEFAULT_REFINE_ITERS};
use umax::linalg::{det_exact, tridiagonal_det, tridiagonal_matrix};
use umax::rng::stream_rng;
use umax::{
    regular_polygon_analysis, tail_probability, umax_bruteforce, umax_gapsum_dp, DensitySpec,
    Error, GFunction, KernelSpec, LimitLaw, Point,
};
use umax_cli::{build_pipeline, cmd_simulate, CliError, ExperimentConfig};

type Outcome = Result<String, String>;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text).unwrap().resolve(Path::new(".")).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let target = 2.0 / (9.0 * PI);
    let spec = KernelSpec::gap_sum(GFunction::SinHalf, 3).map_err(|e| e.to_string())?;
    let u = DensitySpec::Uniform;
    let analytic = regular_polygon_analysis(&spec).map_err(|e| e.to_string())?;
    let c_an = LimitLaw::from_analysis(&analytic, &u).map_err(|e| e.to_string())?.coefficient;
    let oracle = find_max_oracle(&spec, default_grid_n(3), DEFAULT_REFINE_ITERS).map_err(|e| e.to_string())?;
    let c_fd = LimitLaw::from_analysis(&oracle, &u).map_err(|e| e.to_string())?.coefficient;
    let secs = start.elapsed().as_secs_f64();
    let (e_an, e_fd) = (rel(c_an, target), rel(c_fd, target));
    check(
        e_an <= 1e-8 && e_fd <= 1e-5 && secs < 1.0,
        format!("c analytic rel err {e_an:.2e} (<= 1e-8), FD rel err {e_fd:.2e} (<= 1e-5), {secs:.3} s (< 1 s)"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let s2 = 2f64.sqrt();
    let s3 = 3f64.sqrt();
    let s5 = 5f64.sqrt();
    // pairwise sin-half, det(-G), m = 3..6
    let distance = [
        9.0 / 16.0,
        (3.0 * s2 + 4.0) / 8.0,
        (175.0 + 75.0 * s5) / 128.0,
        (168.0 * s3 + 291.0) / 64.0,
    ];
    // inverse distance, U-min: minimum and det(G), m = 3..6
    let inv_min = [
        s3,
        2.0 * s2 + 1.0,
        10.0 / (10.0 - 2.0 * s5).sqrt() + 10.0 / (10.0 + 2.0 * s5).sqrt(),
        7.5 + 2.0 * s3,
    ];
    let inv_det = [
        25.0 / 144.0,
        57.0 * s2 / 128.0 + 9.0 / 32.0,
        (21847.0 + 7395.0 * s5) / 3200.0,
        2486141.0 / 13824.0 + 2224445.0 * s3 / 27648.0,
    ];
    let mut worst_fd: f64 = 0.0;
    let mut worst_closed: f64 = 0.0;
    for (k, m) in (3..=6).enumerate() {
        let pd = KernelSpec::pairwise_sum(GFunction::SinHalf, m).map_err(|e| e.to_string())?;
        let inv = KernelSpec::pairwise_sum(GFunction::CscHalf, m).map_err(|e| e.to_string())?.negated();
        let closed_pd = pairwise_hessian::<f64>(&GFunction::SinHalf, m).map_err(|e| e.to_string())?.det_neg_g;
        // det(G) of the original kernel is det(-G) of its negation
        let closed_inv = pairwise_hessian::<f64>(&GFunction::CscHalf, m).map_err(|e| e.to_string())?.det_g;
        let inv_poly = regular_polygon_analysis(&inv).map_err(|e| e.to_string())?;
        worst_closed = worst_closed
            .max(rel(closed_pd, distance[k]))
            .max(rel(closed_inv, inv_det[k]))
            .max(rel(inv_poly.extremal_value(), inv_min[k]))
            .max(rel(inv_poly.maximizers[0].det_neg_hessian, inv_det[k]));
        let o_pd = find_max_oracle(&pd, default_grid_n(m), DEFAULT_REFINE_ITERS).map_err(|e| e.to_string())?;
        let o_inv = find_max_oracle(&inv, default_grid_n(m), DEFAULT_REFINE_ITERS).map_err(|e| e.to_string())?;
        worst_fd = worst_fd
            .max(rel(o_pd.maximizers[0].det_neg_hessian, distance[k]))
            .max(rel(o_inv.maximizers[0].det_neg_hessian, inv_det[k]))
            .max(rel(o_inv.extremal_value(), inv_min[k]));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_fd <= 1e-4 && worst_closed <= 1e-9 && secs < 10.0,
        format!("worst rel err FD {worst_fd:.2e} (<= 1e-4), closed form {worst_closed:.2e} (<= 1e-9), {secs:.2} s (< 10 s)"),
    )
}

fn criterion_3() -> Outcome {
    let bad: Vec<usize> = (1..=64usize)
        .filter(|&n| {
            tridiagonal_det::<i128>(n) != Some(n as i128 + 1)
                || det_exact(&tridiagonal_matrix::<i128>(n)) != n as i128 + 1
        })
        .collect();
    check(bad.is_empty(), format!("d(n) = n + 1 for n = 1..64, mismatches: {bad:?}"))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut worst_pos: f64 = 0.0;
    let mut worst_val: f64 = 0.0;
    for m in 3..=5 {
        let mf = m as f64;
        let cases = [
            (KernelSpec::gap_sum(GFunction::SinHalf, m), 2.0 * mf * (PI / mf).sin()),
            (KernelSpec::gap_sum(GFunction::HalfSin, m), 0.5 * mf * (TAU / mf).sin()),
            (KernelSpec::pairwise_sum(GFunction::SinHalf, m), mf / (PI / (2.0 * mf)).tan()),
        ];
        for (spec, closed) in cases {
            let spec = spec.map_err(|e| e.to_string())?;
            let a = find_max_oracle(&spec, default_grid_n(m), DEFAULT_REFINE_ITERS).map_err(|e| e.to_string())?;
            if a.maximizers.len() != 1 {
                return Err(format!("m = {m}: {} maximizers", a.maximizers.len()));
            }
            for (i, &b) in a.maximizers[0].angles.iter().enumerate() {
                worst_pos = worst_pos.max((b - TAU * (i + 1) as f64 / mf).abs());
            }
            worst_val = worst_val.max((a.max_value - closed).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_pos <= 1e-5 && worst_val <= 1e-8 && secs < 60.0,
        format!("sup-norm to regular polygon {worst_pos:.2e} (<= 1e-5), |M - closed form| {worst_val:.2e} (<= 1e-8), {secs:.2} s (< 60 s)"),
    )
}

fn simulate_ks(density: &str, limit: f64) -> Outcome {
    let start = Instant::now();
    let cfg = config(&format!(
        "master_seed = 20240501\n[kernel]\nname = \"perimeter\"\nm = 3\n[density]\n{density}\n[simulate]\nn = 150\nreplicates = 2000\n"
    ));
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| cmd_simulate(&cfg, Path::new("."), dir.path()))
        .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    check(
        report.ks_distance <= limit && secs < 120.0,
        format!(
            "KS {:.4} (<= {limit}), c = {:.6}, single thread {secs:.1} s (< 120 s)",
            report.ks_distance, report.coefficient
        ),
    )
}

fn criterion_5() -> Outcome {
    simulate_ks("family = \"uniform\"", 0.05)
}

fn criterion_6() -> Outcome {
    simulate_ks("family = \"von-mises\"\nmu = 0.0\nkappa = 1.0", 0.07)
}

fn criterion_7() -> Outcome {
    let spec = KernelSpec::gap_sum(GFunction::SinHalf, 3).map_err(|e| e.to_string())?;
    let big_m = 3.0 * 3f64.sqrt();
    let k_total = 4.0 / (3.0 * PI);
    let mut lines = Vec::new();
    let mut ok = true;
    for (i, eps) in [1e-2, 3e-3, 1e-3].into_iter().enumerate() {
        let est = tail_probability(&spec, &DensitySpec::Uniform, big_m - eps, 1_000_000, 77 + i as u64)
            .map_err(|e| e.to_string())?;
        let (ratio, se) = (est.p_hat / eps, est.std_err / eps);
        let z = (ratio - k_total).abs() / se;
        ok &= z <= 3.0;
        lines.push(format!("eps {eps:.0e}: {ratio:.4} ({z:.2} SE)"));
    }
    check(ok, format!("p/eps vs K_total = {k_total:.5}: {}", lines.join(", ")))
}

fn criterion_8() -> Outcome {
    let mut mismatches = 0;
    let mut total = 0;
    for (k, &(n, m)) in [(10usize, 3usize), (12, 4), (14, 5)].iter().enumerate() {
        let spec = KernelSpec::gap_sum(GFunction::SinHalf, m).map_err(|e| e.to_string())?;
        let mut rng = stream_rng(8, k as u64);
        for _ in 0..500 {
            let pts: Vec<Point> = (0..n).map(|_| Point::new(rand::Rng::gen::<f64>(&mut rng) * TAU)).collect();
            let a = umax_bruteforce(&pts, &spec).map_err(|e| e.to_string())?;
            let b = umax_gapsum_dp(&pts, &spec).map_err(|e| e.to_string())?;
            mismatches += (a.to_bits() != b.to_bits()) as usize;
            total += 1;
        }
    }
    check(mismatches == 0, format!("{mismatches} mismatches over {total} instances"))
}

fn criterion_9() -> Outcome {
    let boundary = build_pipeline(
        &config("[kernel]\nname = \"generalized-perimeter(1.5)\"\nm = 6\n"),
        Path::new("."),
    );
    let flagged = matches!(boundary, Err(CliError::Core(Error::BoundaryMaximum { .. })));
    let concave = build_pipeline(
        &config("[kernel]\nname = \"generalized-perimeter(0.5)\"\nm = 6\n"),
        Path::new("."),
    );
    let (passes, c) = match &concave {
        Ok(p) => (p.validation.all_pass(), p.law.coefficient),
        Err(_) => (false, f64::NAN),
    };
    check(
        flagged && passes && c.is_finite() && c > 0.0,
        format!("y = 1.5 boundary maximum flagged: {flagged}; y = 0.5 conditions pass: {passes}, c = {c:.6e}"),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_umax"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stdout).into_owned())
    }
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("experiment.toml");
    std::fs::write(
        &cfg,
        "master_seed = 7\n[kernel]\nname = \"perimeter\"\nm = 3\n\
         [simulate]\nn = 60\nreplicates = 300\n\
         [bound]\nn_grid = [30, 60]\nt_grid = [0.0, 1.0]\nmc_samples = 70000\nlhs_trials = 300\n",
    )
    .map_err(|e| e.to_string())?;
    let cfg = cfg.to_str().unwrap();
    let files = ["simulation.json", "ecdf.csv", "bound.json", "bound.csv"];
    let mut runs = Vec::new();
    for (k, threads) in ["1", "4", "3"].iter().enumerate() {
        let out = dir.path().join(format!("run{k}"));
        let out = out.to_str().unwrap();
        for cmd in ["simulate", "bound"] {
            run_cli(&[cmd, "--config", cfg, "--out", out, "--threads", threads])?;
        }
        let bytes: Vec<Vec<u8>> = files
            .iter()
            .map(|f| std::fs::read(Path::new(out).join(f)).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        runs.push(bytes);
    }
    let identical = runs.windows(2).all(|w| w[0] == w[1]);
    check(
        identical,
        format!("{} files byte-identical across thread counts 1, 4, 3: {identical}", files.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("limit coefficient", criterion_1),
        ("closed-form value tables", criterion_2),
        ("tridiagonal identity", criterion_3),
        ("maximizer oracle", criterion_4),
        ("monte carlo convergence, uniform", criterion_5),
        ("monte carlo convergence, von mises", criterion_6),
        ("tail asymptotic", criterion_7),
        ("dp equals brute force", criterion_8),
        ("boundary detection", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
