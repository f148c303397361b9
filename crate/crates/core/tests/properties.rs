use std::sync::OnceLock;

use nalgebra::DVector;
use proptest::prelude::*;
use stochan_core::basic_field::{mollified_step, BetaConstants};
use stochan_core::galerkin::{assemble_operators, build_basis, FwSource, OperatorSet, SimConfig, Simulator};
use stochan_core::heat_kernel::{kernel_h, solve_heat, uniform_y_grid, KernelConfig};
use stochan_core::signals::{gen_brownian_path, gen_flux, FluxKind, ForcingSignal, NoiseModel, TimeGrid};
use stochan_core::verify::{ledger_consistency, monotonicity_check};
use stochan_core::volterra::{apply_k, contraction_rho, solve_volterra};

fn ops() -> &'static OperatorSet {
    static OPS: OnceLock<OperatorSet> = OnceLock::new();
    OPS.get_or_init(|| assemble_operators(&build_basis(3, 4, 2.0).unwrap(), None, None).unwrap())
}

fn coeffs() -> impl Strategy<Value = DVector<f64>> {
    let n = ops().n();
    prop::collection::vec(-10.0f64..10.0, n).prop_map(DVector::from_vec)
}

fn signal(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, len)
}

fn kernel_cfg() -> KernelConfig {
    KernelConfig::new(1.0, 32, 0.2).unwrap()
}

fn zero_beta(nt: usize) -> BetaConstants {
    BetaConstants {
        beta10: vec![0.0; nt],
        beta11: 0.0,
        beta12: 0.0,
        beta20: 0.0,
        beta21: vec![0.0; nt],
        beta22: vec![0.0; nt],
        eta21: 0.0,
        eta22: 0.0,
        eta_dominates: true,
    }
}

fn l2(v: &[f64], dt: f64) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() * dt).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trilinear_form_vanishes_on_repeated_slots(u in coeffs(), v in coeffs()) {
        let o = ops();
        let b = o.trilinear(&u, &v, &v);
        let scale = o.l4_norm4(&u).powf(0.25) * o.gradient_quadrature(&v).sqrt() * o.l4_norm4(&v).powf(0.25);
        prop_assert!(b.abs() <= 1e-10 * scale, "b = {b}, scale = {scale}");
    }

    #[test]
    fn ladyzhenskaya_inequality_holds(phi in coeffs()) {
        let o = ops();
        let lhs = o.l4_norm4(&phi);
        let rhs = 2.0 * o.l2_quadrature(&phi) * o.gradient_quadrature(&phi);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12), "{lhs} > {rhs}");
    }

    #[test]
    fn poincare_inequality_holds(phi in coeffs()) {
        let o = ops();
        let l2 = phi.norm_squared();
        prop_assert!(l2 <= o.poincare * o.dirichlet(&phi) * (1.0 + 1e-12));
        prop_assert!((o.l2_quadrature(&phi) - l2).abs() <= 1e-9 * l2.max(1.0));
    }

    #[test]
    fn mollified_step_is_a_monotone_switch(a in -2.0f64..2.0, b in -2.0f64..2.0, eps in 0.01f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (s_lo, s_hi) = (mollified_step(lo, eps), mollified_step(hi, eps));
        prop_assert!((0.0..=1.0).contains(&s_lo) && (0.0..=1.0).contains(&s_hi));
        prop_assert!(s_lo <= s_hi);
    }

    #[test]
    fn flux_kernel_is_a_decreasing_fraction(t1 in 1e-4f64..2.0, t2 in 1e-4f64..2.0) {
        let cfg = kernel_cfg();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let (h_lo, h_hi) = (kernel_h(lo, &cfg).unwrap().value, kernel_h(hi, &cfg).unwrap().value);
        prop_assert!((0.0..=1.0).contains(&h_lo) && (0.0..=1.0).contains(&h_hi));
        prop_assert!(h_hi <= h_lo + 1e-15);
    }

    #[test]
    fn outlet_profile_is_symmetric_and_pinned(f in signal(41)) {
        let grid = TimeGrid::new(0.2, 5e-3).unwrap();
        let forcing = ForcingSignal::new(grid, f, 0.25).unwrap();
        let y = uniform_y_grid(20);
        let heat = solve_heat(&forcing, &y, &kernel_cfg()).unwrap();
        let ny = heat.ny();
        for k in 0..grid.len() {
            prop_assert!(heat.w1_at(0, k).abs() < 1e-12 && heat.w1_at(ny - 1, k).abs() < 1e-12);
            for j in 0..ny {
                let d = heat.w1_at(j, k) - heat.w1_at(ny - 1 - j, k);
                prop_assert!(d.abs() < 1e-12, "asymmetry {d} at y index {j}, t index {k}");
            }
        }
        for j in 0..ny {
            prop_assert_eq!(heat.w1_at(j, 0), 0.0);
        }
    }

    #[test]
    fn memory_operator_norm_is_below_contraction_constant(psi in signal(201)) {
        let cfg = kernel_cfg();
        let grid = TimeGrid::new(0.2, 1e-3).unwrap();
        let rho = contraction_rho(&cfg).unwrap().rho;
        let kpsi = apply_k(&psi, &grid, &cfg).unwrap();
        let (num, den) = (l2(&kpsi, grid.dt), l2(&psi, grid.dt));
        prop_assume!(den > 0.0);
        prop_assert!(num / den <= rho + 1e-6, "ratio {} vs rho {rho}", num / den);
    }

    #[test]
    fn volterra_solution_is_linear(g1 in signal(201), g2 in signal(201), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let cfg = kernel_cfg();
        let grid = TimeGrid::new(0.2, 1e-3).unwrap();
        let combo: Vec<f64> = g1.iter().zip(&g2).map(|(x, y)| a * x + b * y).collect();
        let s1 = solve_volterra(&g1, &grid, &cfg, 1e-12).unwrap();
        let s2 = solve_volterra(&g2, &grid, &cfg, 1e-12).unwrap();
        let s = solve_volterra(&combo, &grid, &cfg, 1e-12).unwrap();
        for k in 0..grid.len() {
            let expect = a * s1.f.values[k] + b * s2.f.values[k];
            prop_assert!((s.f.values[k] - expect).abs() <= 1e-10 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn coarsened_increments_sum_the_fine_path(seed in any::<u64>(), factor in 1usize..6) {
        let grid = TimeGrid::new(0.06, 1e-3).unwrap();
        let fine = gen_brownian_path(seed, 0, &grid, 3).unwrap();
        prop_assume!(grid.n_steps.is_multiple_of(factor));
        let coarse = fine.coarsen(factor).unwrap();
        prop_assert_eq!(coarse.n_steps * factor, fine.n_steps);
        for k in 0..3 {
            let total: f64 = fine.column(k).iter().sum();
            let total_c: f64 = coarse.column(k).iter().sum();
            prop_assert!((total - total_c).abs() < 1e-12);
        }
    }

    #[test]
    fn generated_flux_starts_at_zero_and_is_reproducible(seed in any::<u64>(), sigma in 0.1f64..3.0) {
        let grid = TimeGrid::new(0.5, 1e-3).unwrap();
        let kind = FluxKind::SmoothedBrownian { sigma, width: 0.05 };
        let a = gen_flux(kind, &grid, seed).unwrap();
        let b = gen_flux(kind, &grid, seed).unwrap();
        prop_assert_eq!(a.flux[0], 0.0);
        prop_assert_eq!(&a, &b);
    }

    #[test]
    fn forcing_passes_its_own_holder_check(f in signal(101), gamma in 0.05f64..0.49) {
        let grid = TimeGrid::new(0.1, 1e-3).unwrap();
        prop_assert!(ForcingSignal::new(grid, f, gamma).unwrap().holder_check());
    }

    #[test]
    fn noise_trace_is_the_sum_of_squares(sigma in prop::collection::vec(0.0f64..2.0, 1..12)) {
        let model = NoiseModel::new(sigma.clone()).unwrap();
        let sum: f64 = sigma.iter().map(|s| s * s).sum();
        prop_assert!((model.trace() - sum).abs() <= 1e-15 * sum.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn energy_ledger_matches_state(seed in any::<u64>(), sigma0 in 0.0f64..2.0) {
        let noise = NoiseModel::decaying(sigma0, 4).unwrap();
        let cfg = SimConfig { nu: 1.0, dt: 1e-3, t_end: 0.05, noise, fw: FwSource::Zero, delta: 1.0 };
        let sim = Simulator::new(ops(), cfg).unwrap();
        let tr = sim.simulate(seed, 0, None).unwrap();
        prop_assert!(ledger_consistency(&tr) <= 1e-12);
    }

    #[test]
    fn monotonicity_sign_holds_on_the_ball(seed in any::<u64>(), rho in 0.05f64..1.0) {
        let report = monotonicity_check(ops(), 1.0, &zero_beta(1), rho, 20, seed).unwrap();
        prop_assert!(report.pass, "max violation {}", report.max_violation);
    }
}
