//! End-to-end acceptance criteria, one line per criterion.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use stochan_core::basic_field::{beta_constants, BasicField, BetaConstants};
use stochan_core::galerkin::{
    assemble_operators, build_basis, FwSource, OperatorSet, SimConfig, Simulator,
};
use stochan_core::heat_kernel::{kernel_h, kernel_k, solve_heat, uniform_y_grid, KernelConfig};
use stochan_core::pipeline::{build_field, FieldSpec};
use stochan_core::quadrature::gauss_legendre;
use stochan_core::signals::{stream_rng, trapezoid, FluxKind, ForcingSignal, NoiseModel, TimeGrid};
use stochan_core::verify::{
    apriori_check, flux_and_divergence_audit, gagliardo_nirenberg_check, gronwall_uniqueness,
    ito_residual, monotonicity_check, AprioriInputs, FwNorms,
};
use stochan_core::volterra::{contraction_rho, forward_flux, solve_volterra};

const NU: f64 = 1.0;
const DT: f64 = 1e-3;
const T_END: f64 = 1.0;
const NOISE_MODES: usize = 8;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Shared {
    beta: BetaConstants,
    ops: OperatorSet,
}

fn shared() -> Shared {
    let build = build_field(&FieldSpec {
        kind: FluxKind::Ramp { slope: 1.0 },
        nu: NU,
        t_end: T_END,
        dt: DT,
        n_trunc: 64,
        seed: 7,
        ny: 100,
    })
    .expect("ramp field");
    let field = BasicField::straight(&build.heat, 2.0).expect("straight field");
    let beta = beta_constants(&field);
    let basis = build_basis(8, 8, 2.0).expect("basis");
    let ops = assemble_operators(&basis, Some(&build.heat), None).expect("operators");
    Shared { beta, ops }
}

/// `σ₀` with `∫₀ᵀ Tr(g*g) e^{−δt} dt = 0.1` for `σ_k = σ₀ k^{-3/2}`, `k ≤ 8`, `δ = 1`.
fn sigma0() -> f64 {
    let sum: f64 = (1..=NOISE_MODES).map(|k| (k as f64).powi(-3)).sum();
    (0.1 / (sum * (1.0 - (-T_END).exp()))).sqrt()
}

fn sim_config(dt: f64, noise: NoiseModel) -> SimConfig {
    SimConfig {
        nu: NU,
        dt,
        t_end: T_END,
        noise,
        fw: FwSource::Zero,
        delta: 1.0,
    }
}

fn l2(v: &[f64], dt: f64) -> f64 {
    let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
    trapezoid(&sq, dt).sqrt()
}

fn heat_oracle() -> Outcome {
    let start = Instant::now();
    let grid = TimeGrid::new(2.0, 1e-3).unwrap();
    let cfg = KernelConfig::new(1.0, 64, 2.0).unwrap();
    let f = ForcingSignal::from_fn(grid, |_| 1.0).unwrap();
    let ys = uniform_y_grid(100);
    let sol = solve_heat(&f, &ys, &cfg).unwrap();
    let last = grid.len() - 1;
    let sup = ys
        .iter()
        .enumerate()
        .map(|(j, y)| (sol.w1_at(j, last) - y * (1.0 - y) / 2.0).abs())
        .fold(0.0, f64::max);
    let flux_err = (sol.flux(last) - 1.0 / 12.0).abs();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        sup <= 1e-6 && flux_err <= 1e-6 && secs < 5.0,
        format!("sup error {sup:.2e}, flux error {flux_err:.2e}, {secs:.2} s"),
    )
}

fn kernel_identities() -> Outcome {
    let big = KernelConfig::new(1.0, 10_000, 1.0).unwrap();
    let h0 = kernel_h(0.0, &big).unwrap().value;
    let mut monotone = true;
    let mut prev = f64::INFINITY;
    for i in 0..100 {
        let h = kernel_h(i as f64 / 99.0, &big).unwrap().value;
        monotone &= h <= prev;
        prev = h;
    }
    let k = kernel_k(0.3, 1e-6, &KernelConfig::new(1.0, 2000, 1.0).unwrap()).unwrap().value;
    outcome(
        (h0 - 1.0).abs() <= 1e-8 && monotone && (k - 1.0).abs() <= 1e-3,
        format!("h(0) − 1 = {:.2e}, non-increasing {monotone}, K(0.3, 1e-6) − 1 = {:.2e}", h0 - 1.0, k - 1.0),
    )
}

fn volterra_round_trip() -> Outcome {
    let start = Instant::now();
    let grid = TimeGrid::new(1.0, 1e-3).unwrap();
    let cfg = KernelConfig::new(1.0, 64, 1.0).unwrap();
    let truth = ForcingSignal::from_fn(grid, |t| (2.0 * PI * t).sin()).unwrap();
    let fwd = forward_flux(&truth, &cfg).unwrap();
    let sol = solve_volterra(&fwd.dfdt, &grid, &cfg, 1e-10).unwrap();
    let err: Vec<f64> = sol.f.values.iter().zip(&truth.values).map(|(a, b)| a - b).collect();
    let rel = l2(&err, grid.dt) / l2(&truth.values, grid.dt);
    let c = contraction_rho(&cfg).unwrap();
    let worst = sol
        .gaps
        .windows(2)
        .filter(|w| w[0] > 1e-12)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let rho_gap = (c.rho - c.one_minus_h).abs();
    outcome(
        rel <= 1e-6 && worst <= c.rho + 0.01 && rho_gap <= 1e-8 && secs < 2.0,
        format!(
            "relative L2 error {rel:.2e}, worst ratio {worst:.6} vs ρ = {:.6}, |ρ − (1 − h(T))| = {rho_gap:.1e}, {secs:.2} s",
            c.rho
        ),
    )
}

fn operator_identities(s: &Shared) -> Outcome {
    let ops = &s.ops;
    let mut rng = stream_rng(404, 3, 0);
    let n = ops.n();
    let mut worst_b: f64 = 0.0;
    let mut worst_w: f64 = 0.0;
    for i in 0..200 {
        let u = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let scale = ops.dirichlet(&u).sqrt() * v.norm() * ops.dirichlet(&v).sqrt();
        worst_b = worst_b.max(ops.trilinear(&u, &v, &v).abs() / scale);
        let k = 1 + (i * 5) % (ops.shear.n_times - 1);
        let wmax = ops.shear.at(k).0.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let wscale = wmax * u.norm() * ops.dirichlet(&u).sqrt();
        worst_w = worst_w.max(ops.trilinear_w_first(k, &u, &u).abs() / wscale);
    }
    let asym = (&ops.a - ops.a.transpose()).amax();
    let gy = gauss_legendre(24, 0.0, 1.0);
    let (mut div, mut flux) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let (x, y) = (rng.random::<f64>() * 2.0, rng.random::<f64>());
        for j in 0..n {
            let g = ops.basis.eval_mode(j, x, y).grad;
            div = div.max((g[0][0] + g[1][1]).abs());
            let q: f64 = gy
                .nodes
                .iter()
                .zip(&gy.weights)
                .map(|(yy, w)| w * ops.basis.eval_mode(j, x, *yy).u[0])
                .sum();
            flux = flux.max(q.abs());
        }
    }
    outcome(
        worst_b <= 1e-10 && worst_w <= 1e-10 && asym <= 1e-12 && div <= 1e-10 && flux <= 1e-12,
        format!(
            "b(u,v,v) {worst_b:.1e}, b(w,u,u) {worst_w:.1e}, ‖A − Aᵀ‖ {asym:.1e}, div {div:.1e}, flux {flux:.1e} (scaled)"
        ),
    )
}

fn gagliardo_nirenberg(s: &Shared) -> Outcome {
    let r = gagliardo_nirenberg_check(&s.ops, 500, 17);
    outcome(
        r.violations == 0,
        format!("{} violations in {} fields, max ratio {:.3}", r.violations, r.n_samples, r.max_ratio),
    )
}

fn monotonicity(s: &Shared) -> Outcome {
    let start = Instant::now();
    let r = monotonicity_check(&s.ops, NU, &s.beta, 1.0, 1000, 31).unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        r.pass && secs < 30.0,
        format!(
            "Λ = {:.3}, C = {:.3e}, max violation {:.3e} (relative {:.3e}), {} rejections, {secs:.1} s",
            r.lambda, r.poincare, r.max_violation, r.max_relative, r.rejections
        ),
    )
}

fn ito_refinement(s: &Shared) -> Outcome {
    let noise = NoiseModel::decaying(sigma0(), NOISE_MODES).unwrap();
    let mean_abs = |dt: f64| -> f64 {
        let sim = Simulator::new(&s.ops, sim_config(dt, noise.clone())).unwrap();
        let ens = sim.ensemble(2024, 32).unwrap();
        ens.iter().map(|tr| ito_residual(tr).unwrap().mean_abs).sum::<f64>() / ens.len() as f64
    };
    let coarse = mean_abs(2e-3);
    let fine = mean_abs(1e-3);
    let ratio = coarse / fine;
    outcome(
        (1.5..=3.0).contains(&ratio),
        format!("mean |residual| {coarse:.3e} → {fine:.3e}, ratio {ratio:.3}"),
    )
}

fn apriori(s: &Shared) -> Outcome {
    let start = Instant::now();
    let noise = NoiseModel::decaying(sigma0(), NOISE_MODES).unwrap();
    let trace = noise.trace();
    let sim = Simulator::new(&s.ops, sim_config(DT, noise)).unwrap();
    let ens = sim.ensemble(99, 64).unwrap();
    let ledgers: Vec<_> = ens.into_iter().map(|t| t.ledger).collect();
    let inputs = AprioriInputs {
        nu: NU,
        t_end: T_END,
        trace,
        fw: FwNorms::default(),
    };
    let r = apriori_check(&ledgers, &inputs, &s.beta).unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        r.pass && secs < 120.0,
        format!(
            "discounted {:.4e} ≤ {:.4e} (±{:.1e}), undiscounted {:.4e} ≤ {:.4e}, ∫Tr e^(−δt) = {:.4}, {secs:.1} s",
            r.lhs, r.rhs, r.mc_stderr, r.lhs_undiscounted, r.rhs_undiscounted, r.trace_integral
        ),
    )
}

fn gronwall(s: &Shared) -> Outcome {
    let noise = NoiseModel::decaying(sigma0(), NOISE_MODES).unwrap();
    let sim = Simulator::new(&s.ops, sim_config(DT, noise)).unwrap();
    let r = gronwall_uniqueness(&sim, &s.beta, 5, 1e-6).unwrap();
    let last = *r.weighted.last().unwrap();
    let r_end = *r.r.last().unwrap();
    outcome(
        r.pass,
        format!(
            "C(ω) = {:.3}, max step increase {:.2e} (slack {:.1e}), r(T) = {r_end:.3}, e^(−r(T))|ϑ(T)|² = {last:.3e}",
            r.c_omega, r.max_increase, r.slack
        ),
    )
}

/// The realized flux of `w` carries an `O(dt^{3/2})` offset from the `√t` start-up of
/// the inverted forcing, so the field for this check is sampled at `dt = 2·10⁻⁵`; the
/// Galerkin step stays at `10⁻³`.
fn flux_transport() -> Outcome {
    let fine_dt = 2e-5;
    let build = build_field(&FieldSpec {
        kind: FluxKind::Ramp { slope: 1.0 },
        nu: NU,
        t_end: T_END,
        dt: fine_dt,
        n_trunc: 64,
        seed: 7,
        ny: 20,
    })
    .unwrap();
    let field = BasicField::straight(&build.heat, 2.0).unwrap();
    let basis = build_basis(8, 8, 2.0).unwrap();
    let ops = assemble_operators(&basis, Some(&build.heat), None).unwrap();
    let noise = NoiseModel::decaying(sigma0(), NOISE_MODES).unwrap();
    let sim = Simulator::new(&ops, sim_config(DT, noise)).unwrap();
    let tr = sim.simulate(8, 0, None).unwrap();
    let stride = (DT / fine_dt).round() as usize;
    let samples: Vec<(usize, &DVector<f64>)> = (1..=10)
        .map(|i| (100 * i * stride, &tr.states[100 * i]))
        .collect();
    let stations = [0.0, 0.4, 0.8, 1.2, 1.6];
    let flux = &build.flux.flux;
    let r = flux_and_divergence_audit(&ops, &field, &samples, &stations, |k| flux[k]).unwrap();
    outcome(
        r.pass,
        format!(
            "max relative flux error {:.2e}, pairwise {:.2e}, divergence {:.2e}",
            r.max_relative_error, r.max_pairwise, r.max_divergence
        ),
    )
}

fn pipeline_bytes() -> Vec<u8> {
    let build = build_field(&FieldSpec {
        kind: FluxKind::SmoothedBrownian { sigma: 1.0, width: 0.02 },
        nu: NU,
        t_end: 0.2,
        dt: DT,
        n_trunc: 64,
        seed: 123,
        ny: 40,
    })
    .unwrap();
    let mut out = Vec::new();
    build.flux.write_csv(&mut out).unwrap();
    build.volterra.write_csv(&mut out, &build.kernel).unwrap();
    build.heat.write_csv(&mut out).unwrap();
    let basis = build_basis(3, 4, 2.0).unwrap();
    let ops = assemble_operators(&basis, Some(&build.heat), None).unwrap();
    let cfg = SimConfig {
        t_end: 0.2,
        ..sim_config(DT, NoiseModel::decaying(0.5, 4).unwrap())
    };
    let sim = Simulator::new(&ops, cfg).unwrap();
    for (i, tr) in sim.ensemble(123, 4).unwrap().iter().enumerate() {
        tr.write_csv(&mut out, i == 0).unwrap();
        tr.write_binary(&mut out).unwrap();
    }
    let beta = beta_constants(&BasicField::straight(&build.heat, 2.0).unwrap());
    let report = monotonicity_check(&ops, NU, &beta, 1.0, 50, 123).unwrap();
    out.extend(serde_json::to_vec(&report).unwrap());
    out
}

fn determinism() -> Outcome {
    let a = pipeline_bytes();
    let b = pipeline_bytes();
    outcome(a == b, format!("{} bytes compared", a.len()))
}

fn main() {
    let mut failures = Vec::new();
    let mut report = |id: usize, name: &str, run: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = run();
        println!(
            "[{}] {id:>2} {name}: {} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.pass {
            failures.push(id);
        }
    };
    report(1, "heat solver oracle", &heat_oracle);
    report(2, "kernel identities", &kernel_identities);
    report(3, "Volterra round trip", &volterra_round_trip);
    let s = shared();
    report(4, "operator identities", &|| operator_identities(&s));
    report(5, "Gagliardo–Nirenberg", &|| gagliardo_nirenberg(&s));
    report(6, "local monotonicity", &|| monotonicity(&s));
    report(7, "Itô residual refinement", &|| ito_refinement(&s));
    report(8, "a-priori bound", &|| apriori(&s));
    report(9, "pathwise uniqueness contraction", &|| gronwall(&s));
    report(10, "flux transport", &flux_transport);
    report(11, "determinism", &determinism);
    if failures.is_empty() {
        println!("acceptance: all 11 criteria passed");
    } else {
        println!("acceptance: failed criteria {failures:?}");
        std::process::exit(1);
    }
}
