//! Subcommand implementations. Each returns whether every verification passed.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde_json::json;
use stochan_core::basic_field::{beta_constants, forcing_fw, BasicField, ChannelGeometry, FwGrid};
use stochan_core::galerkin::{assemble_operators, build_basis, FwSource, OperatorSet, SimConfig, Simulator};
use stochan_core::pipeline::{build_field, FieldBuild, FieldSpec};
use stochan_core::signals::{gen_flux, NoiseModel, TimeGrid};
use stochan_core::verify::{
    apriori_check, flux_and_divergence_audit, gronwall_uniqueness, ito_residual, monotonicity_check,
    AprioriInputs, CheckReport, EnergyLedger, FwNorms, FLUX_TOL, MONOTONICITY_TOL,
};
use stochan_core::{Error, Result};

use crate::config::{GeometryName, RunConfig};
use crate::output::{Output, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Check {
    Monotonicity,
    Apriori,
    Ito,
    Gronwall,
    Flux,
    All,
}

impl Check {
    fn name(self) -> &'static str {
        match self {
            Check::Monotonicity => "monotonicity",
            Check::Apriori => "apriori",
            Check::Ito => "ito",
            Check::Gronwall => "gronwall",
            Check::Flux => "flux",
            Check::All => "all",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        <Self as clap::ValueEnum>::from_str(name, true)
            .map_err(|_| Error::Config(format!("unknown check {name:?}")))
    }
}

fn manifest(command: &str, cfg: &RunConfig) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        check: None,
        input_dir: None,
        binary: false,
        seed: cfg.seed,
        config: cfg.clone(),
        versions: Default::default(),
        outputs: Vec::new(),
    }
}

fn field_spec(cfg: &RunConfig) -> Result<FieldSpec> {
    if cfg.field_refine == 0 {
        return Err(Error::Config("field_refine must be at least 1".into()));
    }
    Ok(FieldSpec {
        kind: cfg.flux_kind(),
        nu: cfg.nu,
        t_end: cfg.t_end,
        dt: cfg.dt / cfg.field_refine as f64,
        n_trunc: cfg.n_trunc,
        seed: cfg.seed,
        ny: cfg.ny,
    })
}

fn geometry(cfg: &RunConfig) -> Result<ChannelGeometry> {
    match cfg.geometry {
        GeometryName::Straight => ChannelGeometry::straight(cfg.length),
        GeometryName::TwoOutlet => ChannelGeometry::two_outlet(
            cfg.length,
            cfg.junction_start,
            cfg.junction_end,
            cfg.offset,
            cfg.epsilon0,
        ),
    }
}

/// Basic field on the straight periodic channel plus the Galerkin operators.
struct Setup {
    build: FieldBuild,
    field: BasicField,
    ops: OperatorSet,
}

fn setup(cfg: &RunConfig, out: &mut Output) -> Result<Setup> {
    let spec = field_spec(cfg)?;
    let build = out.timed("basic_field", || build_field(&spec))?;
    let field = BasicField::straight(&build.heat, cfg.length)?;
    let ops = out.timed("operators", || {
        assemble_operators(&build_basis(cfg.kx, cfg.my, cfg.length)?, Some(&build.heat), None)
    })?;
    Ok(Setup { build, field, ops })
}

fn sim_config(cfg: &RunConfig, dt: f64) -> Result<SimConfig> {
    Ok(SimConfig {
        nu: cfg.nu,
        dt,
        t_end: cfg.t_end,
        noise: NoiseModel::decaying(cfg.sigma0, cfg.noise_modes)?,
        fw: FwSource::Zero,
        delta: cfg.delta,
    })
}

pub fn flux(cfg: &RunConfig, out_dir: &Path) -> Result<bool> {
    let mut out = Output::create(out_dir)?;
    let grid = TimeGrid::new(cfg.t_end, cfg.dt)?;
    let signal = out.timed("flux", || gen_flux(cfg.flux_kind(), &grid, cfg.seed))?;
    out.write_with("flux.csv", |b| signal.write_csv(b))?;
    eprintln!(
        "{} flux: {} samples, F(T) = {:.6e}",
        signal.kind.name(),
        grid.len(),
        signal.flux.last().copied().unwrap_or(0.0)
    );
    out.finish(manifest("flux", cfg))?;
    Ok(true)
}

pub fn basicfield(cfg: &RunConfig, out_dir: &Path) -> Result<bool> {
    let mut out = Output::create(out_dir)?;
    let geo = geometry(cfg)?;
    let spec = field_spec(cfg)?;
    let build = out.timed("volterra_and_heat", || build_field(&spec))?;
    let field = build.field(&geo)?;
    out.write_with("flux.csv", |b| build.flux.write_csv(b))?;
    out.write_with("volterra.csv", |b| build.volterra.write_csv(b, &build.kernel))?;
    out.write_with("outlet_profile.csv", |b| build.heat.write_csv(b))?;
    out.write("geometry.cfg", geo.to_config_block().as_bytes())?;
    let nt = field.n_times();
    let stride = (nt / 10).max(1);
    out.write_with("velocity.csv", |b| field.write_velocity_csv(b, 41, 21, stride))?;
    let beta = out.timed("beta", || Ok(beta_constants(&field)))?;
    out.write_json("beta.json", &beta)?;

    // Flux carried through five stations at every exported time.
    let (x0, x1) = field.sample_extent();
    let mut flux_err = 0.0f64;
    for k in (0..nt).step_by(stride) {
        let target = build.flux.flux[k];
        for i in 0..5 {
            let x = x0 + (x1 - x0) * (i as f64 + 0.5) / 5.0;
            let q = field.flux_through(x, k);
            flux_err = flux_err.max((q - target).abs() / target.abs().max(1e-12));
        }
    }
    let mut summary = json!({
        "volterra_iterations": build.volterra.iterations,
        "volterra_residual": build.volterra.residual,
        "rho": build.volterra.rho,
        "heat_tail_bound": build.heat.tail_bound,
        "max_relative_flux_error": flux_err,
        "eta_dominates": beta.eta_dominates,
    });
    let mut pass = beta.eta_dominates;
    if cfg.geometry == GeometryName::TwoOutlet {
        let fw = out.timed("residual_forcing", || forcing_fw(&field, &FwGrid::default()))?;
        out.write_with("fw.csv", |b| fw.write_csv(b, spec.dt))?;
        summary["fw_max"] = json!(fw.max_abs());
        summary["fw_outside_max"] = json!(fw.outside_max);
        summary["fw_outlet_residual_max"] = json!(fw.outlet_residual_max);
        summary["fw_support_ok"] = json!(fw.support_ok);
        pass &= fw.support_ok;
    }
    out.write_json("basicfield.json", &summary)?;
    eprintln!("{}", serde_json::to_string(&summary)?);
    out.finish(manifest("basicfield", cfg))?;
    Ok(pass)
}

pub fn simulate(cfg: &RunConfig, out_dir: &Path, binary: bool) -> Result<bool> {
    let mut out = Output::create(out_dir)?;
    let s = setup(cfg, &mut out)?;
    let sim = Simulator::new(&s.ops, sim_config(cfg, cfg.dt)?)?;
    let ens = out.timed("ensemble", || sim.ensemble(cfg.seed, cfg.paths))?;
    out.write_json("config.json", cfg)?;
    out.write_with("trajectories.csv", |b| {
        ens.iter().enumerate().try_for_each(|(i, tr)| tr.write_csv(&mut *b, i == 0))
    })?;
    if binary {
        out.write_with("states.bin", |b| ens.iter().try_for_each(|tr| tr.write_binary(&mut *b)))?;
    }
    let ledgers: Vec<&EnergyLedger> = ens.iter().map(|t| &t.ledger).collect();
    out.write_json("ledgers.json", &ledgers)?;
    out.write_json("beta.json", &beta_constants(&s.field))?;
    let mean_final =
        ens.iter().map(|t| *t.ledger.l2.last().unwrap_or(&0.0)).sum::<f64>() / ens.len().max(1) as f64;
    eprintln!(
        "{} paths, {} modes, {} steps; mean |v(T)|² = {mean_final:.4e}",
        ens.len(),
        s.ops.n(),
        sim.grid.n_steps
    );
    let mut m = manifest("simulate", cfg);
    m.binary = binary;
    out.finish(m)?;
    Ok(true)
}

fn read_ledgers(dir: &Path) -> Result<Vec<EnergyLedger>> {
    let path = dir.join("ledgers.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}; run `simulate` first", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

struct Outcome {
    report: CheckReport,
    detail: serde_json::Value,
}

fn report(check: &str, pass: bool, statistic: f64, tolerance: f64, n: usize, seed: u64) -> CheckReport {
    CheckReport {
        check: check.to_string(),
        pass,
        statistic,
        tolerance,
        n_samples: n,
        seed,
    }
}

fn run_check(check: Check, cfg: &RunConfig, s: &Setup, dir: Option<&Path>, out: &mut Output) -> Result<Outcome> {
    let beta = beta_constants(&s.field);
    let seed = cfg.seed;
    match check {
        Check::Monotonicity => {
            let r = out.timed("monotonicity", || {
                monotonicity_check(&s.ops, cfg.nu, &beta, cfg.ball, cfg.samples, seed)
            })?;
            Ok(Outcome {
                report: report("monotonicity", r.pass, r.max_relative, MONOTONICITY_TOL, r.n_samples, seed),
                detail: serde_json::to_value(&r)?,
            })
        }
        Check::Apriori => {
            let ledgers = match dir {
                Some(d) => read_ledgers(d)?,
                None => {
                    return Err(Error::Config(
                        "apriori needs simulated ledgers: pass --dir with the output of `simulate`".into(),
                    ))
                }
            };
            if let Some(l) = ledgers.iter().find(|l| (l.delta - cfg.delta).abs() > 1e-15) {
                return Err(Error::Config(format!(
                    "ledgers were discounted with delta = {}, requested delta = {}",
                    l.delta, cfg.delta
                )));
            }
            let inputs = AprioriInputs {
                nu: cfg.nu,
                t_end: cfg.t_end,
                trace: NoiseModel::decaying(cfg.sigma0, cfg.noise_modes)?.trace(),
                fw: FwNorms::default(),
            };
            let r = out.timed("apriori", || apriori_check(&ledgers, &inputs, &beta))?;
            Ok(Outcome {
                report: report("apriori", r.pass, r.lhs, r.rhs + 2.0 * r.mc_stderr, r.n_paths, seed),
                detail: serde_json::to_value(&r)?,
            })
        }
        Check::Ito => {
            let mean_abs = |dt: f64, out: &mut Output| -> Result<f64> {
                let sim = Simulator::new(&s.ops, sim_config(cfg, dt)?)?;
                let ens = out.timed("ito", || sim.ensemble(seed, cfg.paths))?;
                let total = ens
                    .iter()
                    .map(|tr| ito_residual(tr).map(|r| r.mean_abs))
                    .sum::<Result<f64>>()?;
                Ok(total / ens.len() as f64)
            };
            let coarse = mean_abs(2.0 * cfg.dt, out)?;
            let fine = mean_abs(cfg.dt, out)?;
            let ratio = coarse / fine;
            let pass = (1.5..=3.0).contains(&ratio);
            Ok(Outcome {
                report: report("ito", pass, ratio, 3.0, cfg.paths, seed),
                detail: json!({ "dt_coarse": 2.0 * cfg.dt, "dt_fine": cfg.dt, "mean_abs_coarse": coarse,
                    "mean_abs_fine": fine, "ratio": ratio, "accepted_range": [1.5, 3.0] }),
            })
        }
        Check::Gronwall => {
            let sim = Simulator::new(&s.ops, sim_config(cfg, cfg.dt)?)?;
            let r = out.timed("gronwall", || gronwall_uniqueness(&sim, &beta, seed, cfg.epsilon))?;
            let n = r.weighted.len();
            Ok(Outcome {
                report: report("gronwall", r.pass, r.max_increase, r.slack, n, seed),
                detail: serde_json::to_value(&r)?,
            })
        }
        Check::Flux => {
            let sim = Simulator::new(&s.ops, sim_config(cfg, cfg.dt)?)?;
            let tr = out.timed("flux", || sim.simulate(seed, 0, None))?;
            let n_steps = sim.grid.n_steps;
            let samples: Vec<(usize, &DVector<f64>)> = (1..=10)
                .map(|i| {
                    let j = i * n_steps / 10;
                    (j * cfg.field_refine, &tr.states[j])
                })
                .collect();
            let stations: Vec<f64> = (0..5).map(|i| cfg.length * i as f64 / 5.0).collect();
            let flux = &s.build.flux.flux;
            let r = flux_and_divergence_audit(&s.ops, &s.field, &samples, &stations, |k| flux[k])?;
            let stat = r.max_relative_error.max(r.max_pairwise);
            Ok(Outcome {
                report: report("flux", r.pass, stat, FLUX_TOL, samples.len() * stations.len(), seed),
                detail: serde_json::to_value(&r)?,
            })
        }
        Check::All => unreachable!("expanded by the caller"),
    }
}

pub fn verify(check: Check, cfg: &RunConfig, dir: Option<&Path>, out_dir: &Path) -> Result<bool> {
    let mut out = Output::create(out_dir)?;
    let s = setup(cfg, &mut out)?;
    let checks = match check {
        Check::All => vec![Check::Monotonicity, Check::Apriori, Check::Ito, Check::Gronwall, Check::Flux],
        c => vec![c],
    };
    let mut all = true;
    for c in checks {
        let o = run_check(c, cfg, &s, dir, &mut out)?;
        out.write_json(&format!("verify_{}.json", c.name()), &o.report)?;
        out.write_json(&format!("verify_{}_detail.json", c.name()), &o.detail)?;
        println!("{}", serde_json::to_string(&o.report)?);
        all &= o.report.pass;
    }
    let mut m = manifest("verify", cfg);
    m.check = Some(check.name().to_string());
    m.input_dir = dir.map(Path::to_path_buf);
    out.finish(m)?;
    Ok(all)
}

/// Reruns the command recorded in a manifest into `out_dir`.
pub fn replay(manifest_path: &Path, out_dir: &Path) -> Result<bool> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", manifest_path.display())))?;
    let m: RunManifest = serde_json::from_str(&text)?;
    let mut cfg = m.config;
    cfg.seed = m.seed;
    match m.command.as_str() {
        "flux" => flux(&cfg, out_dir),
        "basicfield" => basicfield(&cfg, out_dir),
        "simulate" => simulate(&cfg, out_dir, m.binary),
        "verify" => {
            let check = Check::parse(m.check.as_deref().unwrap_or("all"))?;
            verify(check, &cfg, m.input_dir.as_deref(), out_dir)
        }
        other => Err(Error::Config(format!("manifest names unknown command {other:?}"))),
    }
}
