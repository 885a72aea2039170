use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use bdsg::baselines::{monte_carlo, monte_carlo_sample, stochastic_collocation, ReferenceFactory};
use bdsg::bloch::compute_lattice_table;
use bdsg::cache::CacheDir;
use bdsg::diagnostics::Statistics;
use bdsg::driver::{BdsgSolver, RunSpec};
use bdsg::experiments::{
    compare, conserved_quantities, ensemble_conserved, localization, loglog_slope, max_relative_drift, sweep,
    BdsgConfig, Candidate, ComparisonRow, ConservedRow, Problem, SweepRow,
};
use bdsg::gpc::GpcBasis;
use bdsg::lattice::{Grid, RandomKind};
use bdsg::scalar::{from_usize, lit, to_f64};
use bdsg::scenarios::{builtin, builtin_scenarios, ExpectedRow, Method, Scenario};
use bdsg::Real;
use serde::Serialize;

use crate::output::{float, optional, write_json, Csv};
use crate::{Cli, Command, Precision, ScenarioAction};

macro_rules! in_precision {
    ($cli:expr, $f:ident($($arg:expr),*)) => {
        match $cli.precision {
            Precision::F32 => $f::<f32>($($arg),*),
            Precision::F64 => $f::<f64>($($arg),*),
        }
    };
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Scenarios { action } => scenarios(action),
        Command::Bands { scenario, out } => {
            let s = load(cli, scenario)?;
            prepare(out)?;
            in_precision!(cli, bands(cli, &s, out))
        }
        Command::Run { scenario, method, out } => {
            let s = load(cli, scenario)?;
            prepare(out)?;
            in_precision!(cli, run(cli, &s, *method, out))
        }
        Command::Sweep { scenario, axis, out } => {
            let s = load(cli, scenario)?;
            let axis = match axis.or(s.expect.axis) {
                Some(a) => a,
                None => bail!("scenario `{}` declares no sweep axis; pass --axis", s.name),
            };
            prepare(out)?;
            in_precision!(cli, run_sweep(cli, &s, axis, out))
        }
        Command::Compare { scenario, out } => {
            let s = load(cli, scenario)?;
            prepare(out)?;
            in_precision!(cli, run_compare(cli, &s, out))
        }
        Command::Localize { scenario, out } => {
            let s = load(cli, scenario)?;
            prepare(out)?;
            in_precision!(cli, localize(&s, out))
        }
    }
}

/// A scenario file path, or the name of a built-in scenario.
fn load(cli: &Cli, arg: &str) -> Result<Scenario> {
    let path = Path::new(arg);
    let s = if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Scenario::from_toml(&text).with_context(|| format!("loading {}", path.display()))?
    } else {
        builtin(arg)?
    };
    if s.grid.heavy && !cli.heavy {
        bail!("scenario `{}` is heavy; pass --heavy to run it", s.name);
    }
    Ok(s)
}

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn cache(cli: &Cli) -> Option<CacheDir> {
    (!cli.no_cache).then(|| CacheDir::new(&cli.cache_dir))
}

fn references(cli: &Cli) -> ReferenceFactory {
    if cli.no_cache {
        ReferenceFactory::uncached()
    } else {
        ReferenceFactory::cached(&cli.cache_dir)
    }
}

fn precision_name(cli: &Cli) -> &'static str {
    match cli.precision {
        Precision::F32 => "f32",
        Precision::F64 => "f64",
    }
}

fn scenarios(action: &ScenarioAction) -> Result<()> {
    match action {
        ScenarioAction::List => {
            for s in builtin_scenarios() {
                let heavy = if s.grid.heavy { " [heavy]" } else { "" };
                println!("{:<10}{heavy} {}", s.name, s.description);
            }
            Ok(())
        }
        ScenarioAction::Export { name, out } => {
            let text = builtin(name)?.to_toml()?;
            match out {
                Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}

fn bands<T: Real>(cli: &Cli, s: &Scenario, out: &Path) -> Result<()> {
    let grid = Grid::<T>::with_total_points(lit(s.grid.epsilon), s.grid.dx.points())?;
    let lattice = s.potentials.lattice.potential::<T>();
    let m = s.grid.bands.unwrap_or(grid.points_per_cell());
    let table = match cache(cli) {
        Some(c) => {
            let table = c.table(&lattice, &grid, m)?;
            log::info!(
                "band table cached at {}",
                c.table_path(&lattice.id(), grid.cells(), grid.points_per_cell(), m).display()
            );
            table
        }
        None => compute_lattice_table(&lattice, &grid, m)?,
    };
    let mut csv = Csv::new(&["m", "l", "k", "E"]);
    for band in 0..m {
        for cell in 0..grid.cells() {
            csv.row(&[
                (band + 1).to_string(),
                (cell + 1).to_string(),
                float(to_f64(grid.quasimomentum(cell))),
                float(to_f64(table.energy(band, cell))),
            ]);
        }
    }
    csv.write(&out.join("bands.csv"))
}

fn solver<T: Real>(cli: &Cli, problem: &Problem<T>, cfg: &BdsgConfig) -> Result<BdsgSolver<T>> {
    let grid = problem.grid(cfg.points)?;
    let m = cfg.bands.unwrap_or(grid.points_per_cell());
    let table = match cache(cli) {
        Some(c) => c.table(&problem.lattice, &grid, m)?,
        None => compute_lattice_table(&problem.lattice, &grid, m)?,
    };
    let basis = match cfg.quadrature_nodes {
        Some(n) => GpcBasis::with_quadrature(cfg.order, n)?,
        None => GpcBasis::new(cfg.order),
    };
    Ok(BdsgSolver::with_table(table, &problem.random, basis)?)
}

#[derive(Serialize)]
struct RunRecord<'a> {
    version: &'static str,
    method: &'static str,
    precision: &'static str,
    threads: usize,
    candidate: Candidate,
    scenario: &'a Scenario,
    snapshots: usize,
    max_mass_drift: f64,
    max_energy_drift: f64,
    seconds: f64,
}

fn run<T: Real>(cli: &Cli, s: &Scenario, method: Method, out: &Path) -> Result<()> {
    let start = Instant::now();
    let problem = s.problem::<T>();
    let candidate = s.candidate(method);
    let (stats, conserved): (Statistics<T>, Vec<ConservedRow>) = match candidate {
        Candidate::Bdsg(cfg) => {
            let solver = solver(cli, &problem, &cfg)?;
            let spec = RunSpec::new(s.time.t_final, cfg.dt).with_output_every(s.time.output_every.unwrap_or(1));
            let traj = solver.run(&problem.initial_state(&solver), &spec)?;
            let conserved = conserved_quantities(&solver, &problem.lattice, &traj)?;
            (Statistics::from_gpc(traj.final_state()), conserved)
        }
        Candidate::TsMc {
            points,
            dt,
            samples,
            seed,
        } => {
            let r = problem.ts_realizations(points, dt)?;
            let stats = monte_carlo(&r, samples, seed)?;
            let draws: Vec<T> = (0..samples as u64).map(|k| monte_carlo_sample(seed, k)).collect();
            let weights = vec![T::one() / from_usize::<T>(samples); samples];
            (stats, ensemble_conserved(&r, &draws, &weights)?)
        }
        Candidate::TsSc { points, dt, nodes } => {
            let r = problem.ts_realizations(points, dt)?;
            let c = stochastic_collocation(&r, nodes)?;
            let conserved = ensemble_conserved(&r, c.nodes(), c.weights())?;
            (c.into_statistics(), conserved)
        }
    };
    let grid = stats.grid();
    let mut field = Csv::new(&["j", "x", "re", "im"]);
    let mut density = Csv::new(&["j", "x", "density"]);
    for (j, (v, d)) in stats.mean.values().iter().zip(&stats.density).enumerate() {
        let x = float(to_f64(grid.coordinate(j)));
        field.row(&[j.to_string(), x.clone(), float(to_f64(v.re)), float(to_f64(v.im))]);
        density.row(&[j.to_string(), x, float(to_f64(*d))]);
    }
    let mut table = Csv::new(&["t", "mass", "energy", "second_moment"]);
    for row in &conserved {
        table.row(&[float(row.t), float(row.mass), float(row.energy), float(row.second_moment)]);
    }
    field.write(&out.join("mean_field.csv"))?;
    density.write(&out.join("mean_density.csv"))?;
    table.write(&out.join("conserved.csv"))?;
    let mass: Vec<f64> = conserved.iter().map(|r| r.mass).collect();
    let energy: Vec<f64> = conserved.iter().map(|r| r.energy).collect();
    let record = RunRecord {
        version: env!("CARGO_PKG_VERSION"),
        method: method.name(),
        precision: precision_name(cli),
        threads: rayon::current_num_threads(),
        candidate,
        scenario: s,
        snapshots: conserved.len(),
        max_mass_drift: max_relative_drift(&mass),
        max_energy_drift: max_relative_drift(&energy),
        seconds: start.elapsed().as_secs_f64(),
    };
    log::info!(
        "{} {}: mass drift {:.3e}, energy drift {:.3e}",
        s.name,
        method.name(),
        record.max_mass_drift,
        record.max_energy_drift
    );
    write_json(&out.join("run.json"), &record)
}

#[derive(Serialize)]
struct SweepRecord<'a> {
    version: &'static str,
    scenario: &'a str,
    axis: &'static str,
    precision: &'static str,
    plan: &'a bdsg::experiments::SweepPlan,
    rows: &'a [SweepRow],
    mean_slope: f64,
    density_slope: f64,
    expected: Vec<&'a ExpectedRow>,
}

fn run_sweep<T: Real>(cli: &Cli, s: &Scenario, axis: bdsg::experiments::Axis, out: &Path) -> Result<()> {
    let problem = s.problem::<T>();
    let plan = s.sweep_plan(axis)?;
    let rows = sweep(&problem, &plan, &references(cli))?;
    let mut csv = Csv::new(&["level", "mean", "density", "mean_order", "density_order", "seconds"]);
    for r in &rows {
        csv.row(&[
            float(r.level),
            float(r.errors.mean),
            float(r.errors.density),
            optional(r.mean_order),
            optional(r.density_order),
            float(r.seconds),
        ]);
    }
    csv.write(&out.join("errors.csv"))?;
    let levels: Vec<f64> = rows.iter().map(|r| r.level).collect();
    let mean: Vec<f64> = rows.iter().map(|r| r.errors.mean).collect();
    let den: Vec<f64> = rows.iter().map(|r| r.errors.density).collect();
    let (mean_slope, density_slope) = if rows.len() > 1 {
        (loglog_slope(&levels, &mean), loglog_slope(&levels, &den))
    } else {
        (f64::NAN, f64::NAN)
    };
    let record = SweepRecord {
        version: env!("CARGO_PKG_VERSION"),
        scenario: &s.name,
        axis: axis.name(),
        precision: precision_name(cli),
        plan: &plan,
        rows: &rows,
        mean_slope,
        density_slope,
        expected: if s.expect.axis == Some(axis) {
            s.expect.rows.iter().collect()
        } else {
            Vec::new()
        },
    };
    write_json(&out.join("sweep.json"), &record)
}

fn expected_for<'a>(s: &'a Scenario, row: &ComparisonRow) -> Option<&'a ExpectedRow> {
    s.expect
        .rows
        .iter()
        .find(|e| e.method.name() == row.method && (e.level - row.parameter).abs() < 1e-9)
}

fn run_compare<T: Real>(cli: &Cli, s: &Scenario, out: &Path) -> Result<()> {
    let problem = s.problem::<T>();
    let reference = s.reference_spec();
    let rows = compare(&problem, &reference, &references(cli), &s.candidates())?;
    let mut csv = Csv::new(&[
        "method",
        "parameter",
        "mean",
        "density",
        "seconds",
        "expected_mean",
        "expected_density",
    ]);
    for r in &rows {
        let expected = expected_for(s, r);
        csv.row(&[
            r.method.clone(),
            float(r.parameter),
            float(r.errors.mean),
            float(r.errors.density),
            float(r.seconds),
            optional(expected.map(|e| e.mean)),
            optional(expected.map(|e| e.density)),
        ]);
    }
    csv.write(&out.join("compare.csv"))?;
    write_json(
        &out.join("compare.json"),
        &serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "scenario": s,
            "reference": reference,
            "rows": rows,
        }),
    )
}

#[derive(Serialize)]
struct LocalizationSummary {
    sigma: f64,
    final_second_moment: f64,
    late_slope: f64,
    mode_norms: Vec<f64>,
}

fn localize<T: Real>(s: &Scenario, out: &Path) -> Result<()> {
    if s.potentials.random != RandomKind::AndersonCosine {
        bail!("localize needs the anderson-cosine random potential, scenario `{}` has another", s.name);
    }
    let problem = s.problem::<T>();
    let sigmas = s.sigma_levels();
    let every = s.time.output_every.unwrap_or(1);
    let histories = localization(
        &problem.lattice,
        s.grid.epsilon,
        s.time.t_final,
        &s.bdsg_config(),
        &sigmas,
        every,
    )?;
    let mut csv = Csv::new(&["sigma", "t", "second_moment"]);
    let t1 = s.time.t_final;
    let t0 = t1 * 2.0 / 3.0;
    let mut summary = Vec::new();
    for h in &histories {
        for (t, v) in h.times.iter().zip(&h.second_moment) {
            csv.row(&[float(h.sigma), float(*t), float(*v)]);
        }
        summary.push(LocalizationSummary {
            sigma: h.sigma,
            final_second_moment: h.final_value(),
            late_slope: h.slope(t0, t1),
            mode_norms: h.mode_norms.clone(),
        });
    }
    csv.write(&out.join("moments.csv"))?;
    write_json(
        &out.join("localization.json"),
        &serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "scenario": s,
            "slope_window": [t0, t1],
            "summary": summary,
        }),
    )
}
