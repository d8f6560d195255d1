use std::io::Write;
use std::time::{Duration, Instant};

use pat_core::experiments::{
    add_noise, build_operator, generate_data, reconstruct, sound_speed_nontrapping,
    ExperimentConfig, Method, NoiseConvention, TestCase,
};
use pat_core::field::relative_l2;
use pat_core::grid::{Domain, Grid};
use pat_core::linalg::Vector;
use pat_core::operators::{AdjointScheme, BoundaryTrace, PatOperator, TimeProfile, Window};
use pat_core::solvers::{IterationLog, SolverConfig};
use pat_core::spectral::wavenumber;
use pat_core::wavesolver::{WaveRecorder, WaveSolver};
use pat_core::{io, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex64, FftPlanner};

/// Prints the verdict line outside the test harness capture.
fn report(id: usize, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {id}: {verdict} {detail}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn full_circle(grid: Grid, c: ScalarField, profile: TimeProfile) -> PatOperator {
    let domain = Domain::new(grid);
    let meas = domain.boundary.indices().clone();
    let window = Window::ones(meas.len()).with_profile(profile);
    PatOperator::new(domain, c, meas, window).unwrap()
}

fn norms(log: &IterationLog) -> (Vec<f64>, Vec<f64>) {
    let err = log.errors().iter().map(|e| e.sqrt()).collect();
    let res = log.residuals().iter().map(|r| r.sqrt()).collect();
    (err, res)
}

fn fft2(data: &mut [Complex64], n: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    for row in data.chunks_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex64::default(); n];
    for c in 0..n {
        for r in 0..n {
            col[r] = data[r * n + c];
        }
        fft.process(&mut col);
        for r in 0..n {
            data[r * n + c] = col[r];
        }
    }
}

#[test]
fn criterion_1_constant_speed_is_spectrally_exact() {
    let start = Instant::now();
    let grid = Grid::new(64, 1.0, 256, 1.5).unwrap();
    let f = grid.sample(|[x, y]| (-(x * x + y * y) / 0.02).exp());
    let solver = WaveSolver::new(&grid, &grid.sample(|_| 1.0)).unwrap();
    let emb = *solver.embedding();
    let steps: Vec<usize> = (0..=grid.steps()).collect();
    let mut rec = WaveRecorder::new(grid.steps())
        .with_snapshots(&steps)
        .unwrap();
    solver.solve_ivp(&f, &mut rec).unwrap();

    let n = emb.size();
    let period = n as f64 * grid.hx();
    let embedded = emb.embed(&f, 0.0).unwrap();
    let mut spectrum: Vec<Complex64> = embedded
        .as_slice()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    fft2(&mut spectrum, n, false);
    let xi: Vec<f64> = (0..n).map(|a| wavenumber(a, n, period)).collect();

    let mut worst = 0.0f64;
    for &j in &steps {
        let t = grid.time(j);
        let mut s = spectrum.clone();
        for a in 0..n {
            for b in 0..n {
                s[a * n + b] *= (xi[a].hypot(xi[b]) * t).cos();
            }
        }
        fft2(&mut s, n, true);
        let values = s.iter().map(|z| z.re / (n * n) as f64).collect();
        let oracle = emb
            .restrict(&ScalarField::from_vec(n, n, grid.hx(), values).unwrap())
            .unwrap();
        worst = worst.max(relative_l2(
            rec.snapshot(j).unwrap().as_slice(),
            oracle.as_slice(),
        ));
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-10 && elapsed < Duration::from_secs(10);
    report(
        1,
        pass,
        format!("max relative deviation {worst:.2e} in {elapsed:.1?}"),
    );
    assert!(pass);
}

fn random_pair(op: &PatOperator, rng: &mut ChaCha8Rng) -> (ScalarField, BoundaryTrace) {
    let grid = *op.grid();
    let bumps: Vec<[f64; 4]> = (0..4)
        .map(|_| {
            [
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(0.15..0.35),
                rng.random_range(-1.0..1.0),
            ]
        })
        .collect();
    let mut f = grid.sample(|[x, y]| {
        bumps
            .iter()
            .map(|&[cx, cy, rho, a]| {
                a * (1.0 - ((x - cx).powi(2) + (y - cy).powi(2)) / (rho * rho))
                    .max(0.0)
                    .powi(4)
            })
            .sum()
    });
    op.domain().mask_interior(&mut f);

    let t_final = grid.final_time();
    let modes: Vec<[f64; 3]> = (0..3)
        .map(|k| {
            [
                (k + 1) as f64,
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(-1.0..1.0),
            ]
        })
        .collect();
    let freq = rng.random_range(2.0..6.0);
    let mut g = op.zero_trace();
    let angles = op.domain().boundary.angles();
    for (b, &angle) in angles.iter().enumerate() {
        for j in 0..g.time_count() {
            let t = grid.time(j);
            let envelope = (std::f64::consts::PI * t / t_final).sin().powi(2);
            let angular: f64 = modes
                .iter()
                .map(|&[k, ph, a]| a * (k * angle + ph).cos())
                .sum();
            g.set(b, j, envelope * angular * (freq * t).sin());
        }
    }
    (f, g)
}

fn dot_defects(n: usize, m: usize) -> Vec<f64> {
    let grid = Grid::new(n, 1.0, m, 1.5).unwrap();
    let op = full_circle(grid, sound_speed_nontrapping(&grid), TimeProfile::Constant);
    assert_eq!(op.adjoint_scheme(), AdjointScheme::Continuous);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..5)
        .map(|_| {
            let (f, g) = random_pair(&op, &mut rng);
            let a = op.y_inner(&op.forward(&f).unwrap(), &g).unwrap();
            let b = op.x_inner(&f, &op.adjoint(&g).unwrap()).unwrap();
            (a - b).abs() / a.abs().max(b.abs())
        })
        .collect()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

#[test]
fn criterion_2_adjoint_dot_product() {
    let coarse = dot_defects(64, 256);
    let fine = dot_defects(128, 512);
    let ratio = median(&coarse) / median(&fine);
    let worst = coarse.iter().fold(0.0f64, |m, v| m.max(*v));
    let pass = worst <= 5e-2 && ratio >= 1.5;
    report(
        2,
        pass,
        format!(
            "max defect {worst:.2e} at N=64, median {:.2e} -> {:.2e} (factor {ratio:.2})",
            median(&coarse),
            median(&fine)
        ),
    );
    assert!(pass);
}

/// Slope of the least-squares line through `(k, ln e_k)`, exponentiated.
fn geometric_ratio(err: &[f64], from: usize, to: usize) -> f64 {
    let pts: Vec<(f64, f64)> = (from..=to).map(|k| (k as f64, err[k].ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxy / sxx).exp()
}

fn non_increasing(err: &[f64], from: usize, to: usize) -> bool {
    (from..to).all(|k| err[k + 1] <= 1.01 * err[k])
}

#[test]
fn criteria_3_and_4_well_posed_convergence() {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        solver: SolverConfig::default().with_max_iter(10),
        ..Default::default()
    }
    .with_resolution(100, 400);
    let op = build_operator(&cfg).unwrap();
    let data = generate_data(&cfg, &op).unwrap();
    let mut runs = Vec::new();
    for method in Method::ALL {
        let (_, log, _) = reconstruct(
            &op,
            method,
            &data.noisy,
            Some(&data.phantom),
            &cfg.solver,
            None,
        )
        .unwrap();
        runs.push((method, norms(&log)));
    }
    let elapsed = start.elapsed();

    let mut pass3 = elapsed < Duration::from_secs(300);
    let mut detail3 = Vec::new();
    for (method, (err, _)) in &runs {
        if *method == Method::Cg {
            let q = geometric_ratio(err, 2, 10);
            pass3 &= q <= 0.8;
            detail3.push(format!("cg ratio {q:.3}"));
        } else {
            let ok = non_increasing(err, 1, 10);
            pass3 &= ok;
            detail3.push(format!("{method} err {:.3e} -> {:.3e}", err[1], err[10]));
        }
    }
    report(3, pass3, format!("{} in {elapsed:.1?}", detail3.join(", ")));

    let res10 = |m: Method| runs.iter().find(|r| r.0 == m).unwrap().1 .1[10];
    let (cg, lw, nes) = (
        res10(Method::Cg),
        res10(Method::Landweber),
        res10(Method::Nesterov),
    );
    let pass4 = cg <= lw && cg <= nes;
    report(
        4,
        pass4,
        format!("residual at k=10: cg {cg:.3e}, landweber {lw:.3e}, nesterov {nes:.3e}"),
    );
    assert!(pass3 && pass4);
}

#[test]
fn criterion_5_time_reversal_contracts() {
    let cfg = ExperimentConfig::default().with_resolution(100, 400);
    let op = build_operator(&cfg).unwrap();
    let data = generate_data(&cfg, &op).unwrap();
    let f = &data.phantom;
    let mut d = f.clone();
    d.axpy(-1.0, &op.time_reversal(&op.forward(f).unwrap()).unwrap());
    let ratio = (op.x_inner(&d, &d).unwrap() / op.x_inner(f, f).unwrap()).sqrt();
    let pass = ratio <= 0.95;
    report(5, pass, format!("|f - TR L f| / |f| = {ratio:.3}"));
    assert!(pass);
}

#[test]
fn criterion_6_noisy_visible_case() {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        testcase: TestCase::T2,
        fine_data: true,
        noise: 0.05,
        seed: 7,
        solver: SolverConfig::default().with_max_iter(10),
        ..Default::default()
    }
    .with_resolution(200, 800);
    let op = build_operator(&cfg).unwrap();
    let data = generate_data(&cfg, &op).unwrap();
    let delta = data.data_error;
    let mut pass = true;
    let mut detail = Vec::new();
    for method in Method::ALL {
        let (_, log, _) = reconstruct(
            &op,
            method,
            &data.noisy,
            Some(&data.phantom),
            &cfg.solver,
            None,
        )
        .unwrap();
        let ratio = norms(&log).1[10] / delta;
        pass &= match method {
            Method::TimeReversal => ratio >= 3.0,
            _ => (0.5..=1.5).contains(&ratio),
        };
        detail.push(format!("{method} {ratio:.3}"));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(1800);
    report(
        6,
        pass,
        format!(
            "residual/delta at k=10: {} (delta {delta:.3e}) in {elapsed:.1?}",
            detail.join(", ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_ill_posed_semi_convergence() {
    let base = ExperimentConfig {
        testcase: TestCase::T3,
        fine_data: true,
        seed: 7,
        ..Default::default()
    }
    .with_resolution(100, 400);

    let noisy = ExperimentConfig {
        noise: 0.05,
        solver: SolverConfig::default().with_max_iter(60),
        ..base.clone()
    };
    let op = build_operator(&noisy).unwrap();
    let data = generate_data(&noisy, &op).unwrap();
    let (_, log, _) = reconstruct(
        &op,
        Method::Cg,
        &data.noisy,
        Some(&data.phantom),
        &noisy.solver,
        None,
    )
    .unwrap();
    let (err, _) = norms(&log);
    let n_star = (1..err.len())
        .min_by(|&a, &b| err[a].total_cmp(&err[b]))
        .unwrap();
    let later = err[(3 * n_star).min(60)];
    let semi = (2..60).contains(&n_star) && later >= 1.05 * err[n_star];

    let exact = ExperimentConfig {
        solver: SolverConfig::default().with_max_iter(200),
        ..base
    };
    let data = generate_data(&exact, &op).unwrap();
    let (_, log, _) = reconstruct(
        &op,
        Method::Cg,
        &data.noisy,
        Some(&data.phantom),
        &exact.solver,
        None,
    )
    .unwrap();
    let (err_x, res_x) = norms(&log);
    let signature = res_x[200] <= 0.1 * res_x[1] && err_x[200] >= 0.2 * err_x[1];

    let pass = semi && signature;
    report(
        7,
        pass,
        format!(
            "noisy: n* = {n_star}, err(min(3n*,60))/err(n*) = {:.3}; exact: res {:.2e} -> {:.2e}, err {:.2e} -> {:.2e}",
            later / err[n_star],
            res_x[1],
            res_x[200],
            err_x[1],
            err_x[200]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_normal_operator_symbol() {
    let n = 128;
    let grid = Grid::new(n, 1.0, 5 * n, 2.5).unwrap();
    let op = full_circle(grid, grid.sample(|_| 1.0), TimeProfile::Linear);
    let omega = 0.35 * std::f64::consts::PI / grid.hx();
    let f = grid.sample(|[x, y]| {
        let r = x.hypot(y);
        (-(r * r) / 0.18).exp() * (omega * r).cos()
    });
    let q = op.x_inner(&op.normal(&f).unwrap(), &f).unwrap() / op.x_inner(&f, &f).unwrap();
    let pass = (0.35..=0.65).contains(&q);
    report(8, pass, format!("Rayleigh quotient {q:.4} (R/2 = 0.5)"));
    assert!(pass);
}

#[test]
fn criterion_9_property_battery() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);

    let grid = Grid::new(48, 1.0, 96, 1.5).unwrap();
    let c = sound_speed_nontrapping(&grid);
    let op = full_circle(grid, c.clone(), TimeProfile::Constant);
    let (f1, g) = random_pair(&op, &mut rng);
    let (f2, _) = random_pair(&op, &mut rng);
    let a = rng.random_range(-2.0..2.0);
    let mut comb = f1.clone();
    comb.scale(a);
    comb.axpy(1.0, &f2);
    let mut expect = op.forward(&f1).unwrap();
    expect.scale(a);
    expect.axpy(1.0, &op.forward(&f2).unwrap());
    check(
        "forward linearity",
        relative_l2(op.forward(&comb).unwrap().values(), expect.values()) < 1e-12,
    );
    let mut ga = g.clone();
    ga.scale(a);
    let mut lhs = op.adjoint(&g).unwrap();
    lhs.scale(a);
    check(
        "adjoint homogeneity",
        relative_l2(op.adjoint(&ga).unwrap().as_slice(), lhs.as_slice()) < 1e-12,
    );

    let exact = op.clone().with_adjoint_scheme(AdjointScheme::Transpose);
    let lhs = exact.y_inner(&exact.forward(&f1).unwrap(), &g).unwrap();
    let rhs = exact.x_inner(&f1, &exact.adjoint(&g).unwrap()).unwrap();
    check(
        "transpose adjointness",
        (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()),
    );

    let radial = full_circle(
        grid,
        grid.sample(|[x, y]| 1.0 + 0.1 * (-4.0 * (x * x + y * y)).exp()),
        TimeProfile::Constant,
    )
    .with_adjoint_scheme(AdjointScheme::Transpose);
    let sym_a = radial.normal(&f1.reflected()).unwrap();
    let sym_b = radial.normal(&f1).unwrap().reflected();
    check(
        "reflection transport",
        relative_l2(sym_a.as_slice(), sym_b.as_slice()) < 1e-10,
    );

    let lf = exact.forward(&f1).unwrap();
    check(
        "normal operator positivity",
        exact.x_inner(&exact.normal(&f1).unwrap(), &f1).unwrap() > 0.0
            && exact.y_inner(&lf, &lf).unwrap() > 0.0,
    );

    let domain = op.domain();
    let mut nested = true;
    for center in [-2.0, 0.3, 1.9] {
        let mut prev = domain.arc(0.4, center).unwrap();
        for opening in [1.0, 2.5, 4.0, std::f64::consts::TAU] {
            let next = domain.arc(opening, center).unwrap();
            nested &= prev.is_subset(&next);
            prev = next;
        }
        nested &= &prev == domain.boundary.indices();
    }
    check("arc monotonicity", nested);

    let hx = grid.hx();
    let (n1, d1) = add_noise(&lf, 0.05, 3, NoiseConvention::RelativeNorm, hx).unwrap();
    let (n2, d2) = add_noise(&lf, 0.05, 3, NoiseConvention::RelativeNorm, hx).unwrap();
    check(
        "noise determinism",
        n1 == n2 && d1.to_bits() == d2.to_bits(),
    );

    let mut buf = Vec::new();
    io::write_field_to(&mut buf, &f1).unwrap();
    check(
        "field round trip",
        io::read_field_from(&mut buf.as_slice()).unwrap() == f1,
    );
    let mut buf = Vec::new();
    io::write_trace_to(&mut buf, &n1).unwrap();
    check(
        "trace round trip",
        io::read_trace_from(&mut buf.as_slice()).unwrap() == n1,
    );

    let cfg = ExperimentConfig {
        solver: SolverConfig::default().with_max_iter(3),
        ..Default::default()
    }
    .with_resolution(32, 64);
    let run_op = build_operator(&cfg).unwrap();
    let data = generate_data(&cfg, &run_op).unwrap();
    let (x1, log1, _) = reconstruct(
        &run_op,
        Method::Cg,
        &data.noisy,
        Some(&data.phantom),
        &cfg.solver,
        None,
    )
    .unwrap();
    let (x2, log2, _) = reconstruct(
        &run_op,
        Method::Cg,
        &data.noisy,
        Some(&data.phantom),
        &cfg.solver,
        None,
    )
    .unwrap();
    check(
        "reconstruction determinism",
        x1 == x2 && log1.residuals() == log2.residuals(),
    );
    let mut buf = Vec::new();
    let mut writer = io::LogWriter::new(&mut buf).unwrap();
    for r in log1.records() {
        writer.write(r).unwrap();
    }
    let buf = writer.into_inner();
    let back = io::read_log_from(buf.as_slice()).unwrap();
    check("log round trip", back.residuals() == log1.residuals());

    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(300);
    let detail = if failures.is_empty() {
        "all properties hold".to_string()
    } else {
        format!("failed: {}", failures.join(", "))
    };
    report(9, pass, format!("{detail} in {elapsed:.1?}"));
    assert!(pass);
}
