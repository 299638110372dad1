use std::path::Path;

use fk_thermo::feynman_kac::{check_selfadjoint, propagate_mc, propagate_pde};
use fk_thermo::gibbs::{
    normalized_semigroup, rn_weight, simulate_sde_with, InitialLaw, Recording, SimulationOptions,
};
use fk_thermo::spectral::{critical_point_count, gibbs_density, solve, EigenSolution};
use fk_thermo::stats::{binned_mass, histogram, total_variation, McEstimate};
use fk_thermo::thermo::{
    entropy_report, maximize_pressure, pressure_deficit, pressure_value, relative_entropy,
    AdmissibleDrift, EntropyReport,
};
use fk_thermo::{
    GridFunction, HarmonicSpec, Laplacian, McConfig, PeriodicGrid, PropagatorConfig,
};
use serde_json::{json, Value as Json};

use crate::config::{spec_json, ConfigError, DriftChoice, InitSpec, Method, RunConfig, Source};
use crate::output::{cell, num, OutDir};
use crate::{CliError, Status};

/// Subcommands of the front end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Eigen,
    Propagate,
    Simulate,
    Entropy,
    Maximize,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Eigen => "eigen",
            Command::Propagate => "propagate",
            Command::Simulate => "simulate",
            Command::Entropy => "entropy",
            Command::Maximize => "maximize",
            Command::Verify => "verify",
        }
    }

    /// Laplacian used when the config does not choose one. Commands that
    /// compare eigen-quantities against spectral derivatives need the
    /// Fourier matrix to be consistent beyond second order.
    pub fn default_laplacian(self) -> Laplacian {
        match self {
            Command::Eigen | Command::Propagate => Laplacian::SecondDifference,
            _ => Laplacian::Fourier,
        }
    }
}

/// Runs `command`, writing `meta.json` and the command's outputs under the
/// configured output directory.
pub fn dispatch(command: Command, cfg: &RunConfig) -> Result<Status, CliError> {
    let laplacian = cfg.laplacian.unwrap_or(command.default_laplacian());
    let out = OutDir::create(&cfg.run.output)?;
    out.write_json(
        "meta.json",
        &json!({
            "command": command.name(),
            "version": env!("CARGO_PKG_VERSION"),
            "config": cfg.echo(laplacian),
        }),
    )?;
    let ctx = Context {
        cfg,
        laplacian,
        out,
    };
    match command {
        Command::Eigen => ctx.eigen(),
        Command::Propagate => ctx.propagate(),
        Command::Simulate => ctx.simulate(),
        Command::Entropy => ctx.entropy(),
        Command::Maximize => ctx.maximize(),
        Command::Verify => run_verify_in(&ctx).map(|r| r.status()),
    }
}

struct Context<'a> {
    cfg: &'a RunConfig,
    laplacian: Laplacian,
    out: OutDir,
}

/// Reads a `x,value` CSV whose `x` column matches the grid nodes.
pub fn read_grid_csv(path: &Path, grid: PeriodicGrid) -> Result<GridFunction, CliError> {
    let input_err = |message: String| CliError::Input {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| input_err(e.to_string()))?;
    let header = reader.headers().map_err(|e| input_err(e.to_string()))?;
    if header.len() != 2 || &header[0] != "x" || &header[1] != "value" {
        return Err(input_err("expected header `x,value`".into()));
    }
    let mut values = Vec::with_capacity(grid.n());
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| input_err(e.to_string()))?;
        let row = i + 2;
        let parse = |j: usize| -> Result<f64, CliError> {
            record
                .get(j)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| input_err(format!("row {row}: column {} is not a finite number", j + 1)))
        };
        let x = parse(0)?;
        if i >= grid.n() {
            return Err(input_err(format!("more than n = {} rows", grid.n())));
        }
        let node = grid.node(i);
        if (x - node).abs() > 1e-12 {
            return Err(input_err(format!("row {row}: x = {x} but grid node {i} is {node}")));
        }
        values.push(parse(1)?);
    }
    if values.len() != grid.n() {
        return Err(input_err(format!(
            "{} rows, expected one per grid node (n = {})",
            values.len(),
            grid.n()
        )));
    }
    Ok(GridFunction::new(grid, values)?)
}

fn load(source: &Source, grid: PeriodicGrid) -> Result<GridFunction, CliError> {
    match source {
        Source::Harmonics(spec) => Ok(spec.sample(grid)?),
        Source::File(path) => read_grid_csv(path, grid),
    }
}

fn require<'s>(source: Option<&'s Source>, section: &str, command: &str) -> Result<&'s Source, CliError> {
    source.ok_or_else(|| {
        CliError::Config(ConfigError::Invalid {
            key: section.to_string(),
            message: format!("the {command} command needs a [{section}] section"),
        })
    })
}

fn report_json(r: &EntropyReport) -> Json {
    json!({
        "h": num(r.h),
        "mean_v": num(r.mean_v),
        "pressure_value": num(r.pressure_value),
        "gap": num(r.gap),
        "lambda_ref": num(r.lambda_ref),
    })
}

impl Context<'_> {
    fn grid(&self) -> PeriodicGrid {
        self.cfg.grid
    }

    fn potential(&self) -> Result<GridFunction, CliError> {
        load(&self.cfg.potential, self.grid())
    }

    fn eigen(&self) -> Result<Status, CliError> {
        let v = self.potential()?;
        let e = solve(&v, self.laplacian)?;
        let mu = gibbs_density(&e);
        let grid = self.grid();
        self.out.write_csv(
            "eigen.csv",
            &["x", "V", "F", "density_muV", "drift"],
            (0..grid.n()).map(|i| {
                vec![
                    cell(grid.node(i)),
                    cell(v.values()[i]),
                    cell(e.f.values()[i]),
                    cell(mu.values()[i]),
                    cell(e.drift.values()[i]),
                ]
            }),
        )?;
        self.out.write_json(
            "eigen.json",
            &json!({
                "lambda": num(e.lambda),
                "gamma": num(e.gamma),
                "spectral_gap": num(e.spectral_gap),
                "n": grid.n(),
                "critical_points_F": critical_point_count(&e.f),
            }),
        )?;
        Ok(Status::Pass)
    }

    fn propagate(&self) -> Result<Status, CliError> {
        let r = &self.cfg.run;
        let v = self.potential()?;
        let f = match &self.cfg.f {
            Some(source) => load(source, self.grid())?,
            None => GridFunction::constant(self.grid(), 1.0)?,
        };
        let report = match r.method {
            Method::Pde => {
                let cfg = PropagatorConfig::new(r.t, r.dt)?.with_laplacian(self.laplacian);
                let u = propagate_pde(&v, &f, &cfg)?;
                let grid = self.grid();
                self.out.write_csv(
                    "propagate.csv",
                    &["x", "u(x)"],
                    (0..grid.n()).map(|i| vec![cell(grid.node(i)), cell(u.values()[i])]),
                )?;
                json!({
                    "method": "pde",
                    "t": num(r.t),
                    "x": num(r.x),
                    "value": num(u.interpolate(r.x)),
                    "n": grid.n(),
                    "dt": num(r.dt),
                })
            }
            Method::Mc => {
                let mc = McConfig::new(r.paths, r.dt, r.seed)?;
                let est = propagate_mc(&v, &f, r.x, &mc, r.t)?;
                json!({
                    "method": "mc",
                    "t": num(r.t),
                    "x": num(r.x),
                    "value": num(est.estimate),
                    "std_error": num(est.std_error),
                    "n": self.grid().n(),
                    "dt": num(r.dt),
                    "n_paths": r.paths,
                })
            }
        };
        self.out.write_json("propagate.json", &report)?;
        Ok(Status::Pass)
    }

    fn initial_law(&self, e: &EigenSolution) -> Result<InitialLaw, CliError> {
        Ok(match &self.cfg.run.init {
            InitSpec::Point(x) => InitialLaw::Point(*x),
            InitSpec::GibbsDensity => InitialLaw::Density(gibbs_density(e)),
            InitSpec::File(path) => {
                let raw = read_grid_csv(path, self.grid())?;
                let input_err = |message: &str| CliError::Input {
                    path: path.clone(),
                    message: message.to_string(),
                };
                if raw.min() < 0.0 {
                    return Err(input_err("initial density has negative values"));
                }
                let mass = raw.integrate();
                if !(mass > 0.0) {
                    return Err(input_err("initial density has zero mass"));
                }
                InitialLaw::Density(raw.scale(1.0 / mass))
            }
        })
    }

    fn simulate(&self) -> Result<Status, CliError> {
        let r = &self.cfg.run;
        let v = self.potential()?;
        let e = solve(&v, self.laplacian)?;
        let (drift, target) = match r.drift {
            DriftChoice::Doob => (e.drift.clone(), gibbs_density(&e)),
            DriftChoice::GSpec => {
                let g = load(require(self.cfg.g.as_ref(), "g", "simulate")?, self.grid())?;
                let ad = AdmissibleDrift::from_samples(g)?;
                (ad.g1, ad.mu_tilde)
            }
        };
        let init = self.initial_law(&e)?;
        let mc = McConfig::new(r.paths, r.dt, r.seed)?;
        let opts = SimulationOptions {
            record: if r.write_paths {
                Recording::Full
            } else {
                Recording::Endpoints
            },
            ..Default::default()
        };
        let ensemble = simulate_sde_with(&drift, &init, r.horizon, &mc, &opts)?;

        let counts = histogram(ensemble.final_positions(), r.bins);
        let width = 1.0 / r.bins as f64;
        let total = ensemble.n_paths as f64;
        let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
        let expected = binned_mass(&target, r.bins);
        let tv = total_variation(&empirical, &expected);
        self.out.write_csv(
            "histogram.csv",
            &["bin_left", "count", "empirical_density", "target_density"],
            (0..r.bins).map(|j| {
                vec![
                    cell(j as f64 * width),
                    counts[j].to_string(),
                    cell(empirical[j] / width),
                    cell(expected[j] / width),
                ]
            }),
        )?;
        if r.write_paths {
            self.out.write_csv(
                "paths.csv",
                &["path_id", "step", "x"],
                ensemble.paths().enumerate().flat_map(|(id, p)| {
                    p.positions()
                        .iter()
                        .enumerate()
                        .map(move |(k, x)| vec![id.to_string(), k.to_string(), cell(*x)])
                        .collect::<Vec<_>>()
                }),
            )?;
        }
        self.out.write_json(
            "simulate.json",
            &json!({
                "tv_distance": num(tv),
                "n_paths": ensemble.n_paths,
                "T": num(r.horizon),
                "dt": num(r.dt),
            }),
        )?;
        Ok(Status::Pass)
    }

    fn entropy(&self) -> Result<Status, CliError> {
        let v = self.potential()?;
        let e = solve(&v, self.laplacian)?;
        let g = load(require(self.cfg.g.as_ref(), "g", "entropy")?, self.grid())?;
        let report = entropy_report(&AdmissibleDrift::from_samples(g)?, &e)?;
        self.out.write_json("entropy.json", &report_json(&report))?;
        Ok(Status::Pass)
    }

    fn maximize(&self) -> Result<Status, CliError> {
        let r = &self.cfg.run;
        let v = self.potential()?;
        let e = solve(&v, self.laplacian)?;
        let best = maximize_pressure(&v, r.harmonics, r.lr, r.iters)?;
        let ad = AdmissibleDrift::from_spec(&best.g, self.grid())?;
        let report = entropy_report(&ad, &e)?;
        self.out.write_csv(
            "trace.csv",
            &["iter", "value", "grad_norm"],
            best.trace
                .iter()
                .map(|t| vec![t.iter.to_string(), cell(t.value), cell(t.grad_norm)]),
        )?;
        let mut json = report_json(&report);
        json["g"] = spec_json(&best.g);
        json["iterations"] = json!(best.trace.len());
        self.out.write_json("maximize.json", &json)?;
        Ok(Status::Pass)
    }
}

/// One invariant of the verification battery.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRecord {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub lambda: f64,
    pub checks: Vec<CheckRecord>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn status(&self) -> Status {
        if self.all_pass() {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

/// Runs the invariant battery for `cfg` and writes `verify.json` (plus
/// `meta.json`) to the configured output directory.
pub fn run_verify(cfg: &RunConfig) -> Result<VerifyReport, CliError> {
    let laplacian = cfg.laplacian.unwrap_or(Command::Verify.default_laplacian());
    let out = OutDir::create(&cfg.run.output)?;
    out.write_json(
        "meta.json",
        &json!({
            "command": Command::Verify.name(),
            "version": env!("CARGO_PKG_VERSION"),
            "config": cfg.echo(laplacian),
        }),
    )?;
    run_verify_in(&Context {
        cfg,
        laplacian,
        out,
    })
}

/// Fixed smooth test functions, restricted to wavenumbers the grid resolves.
fn test_specs(grid: PeriodicGrid, triples: &[&[(u32, f64, f64)]]) -> Vec<HarmonicSpec> {
    triples
        .iter()
        .filter(|t| t.iter().all(|(k, _, _)| *k <= grid.max_wavenumber()))
        .map(|t| HarmonicSpec::from_triples(0.0, t).expect("fixed specs are valid"))
        .collect()
}

fn run_verify_in(ctx: &Context<'_>) -> Result<VerifyReport, CliError> {
    let cfg = ctx.cfg;
    let r = &cfg.run;
    let grid = ctx.grid();
    let v = ctx.potential()?;
    let e = solve(&v, ctx.laplacian)?;
    let mu = gibbs_density(&e);
    let mut checks = Vec::new();

    let fs: Vec<GridFunction> = test_specs(
        grid,
        &[&[(1, 0.0, 0.5)], &[(2, 1.0, 0.0), (1, 0.0, 0.3)], &[(3, 0.0, 1.0)]],
    )
    .iter()
    .map(|s| s.sample(grid))
    .collect::<Result<_, _>>()?;

    let shift = 1.0;
    let shifted = solve(&v.map(|x| x + shift)?, ctx.laplacian)?;
    checks.push(CheckRecord::at_most(
        "eigen_shift_covariance",
        (shifted.lambda - e.lambda - shift).abs(),
        1e-10 * e.lambda.abs().max(1.0),
    ));

    let mut adjoint = 0.0_f64;
    for (i, f) in fs.iter().enumerate() {
        for g in &fs[i + 1..] {
            adjoint = adjoint.max(check_selfadjoint(&v, f, g, r.t, r.dt)?);
        }
    }
    checks.push(CheckRecord::at_most(
        "selfadjoint_residual",
        adjoint,
        1e-9 * (e.lambda * r.t).exp().max(1.0),
    ));

    let one = GridFunction::constant(grid, 1.0)?;
    let p_one = normalized_semigroup(&e, &one, r.t, r.dt)?;
    checks.push(CheckRecord::at_most(
        "normalized_semigroup_constant",
        (&p_one - &one).max_abs(),
        1e-8,
    ));

    let mut stationarity = 0.0_f64;
    for f in &fs {
        let before = (f * &mu).integrate();
        let after = (&normalized_semigroup(&e, f, r.t, r.dt)? * &mu).integrate();
        stationarity = stationarity.max((after - before).abs());
    }
    checks.push(CheckRecord::at_most("gibbs_stationarity", stationarity, 1e-7));

    let mut drifts = Vec::new();
    if let Some(g) = &cfg.g {
        drifts.push(AdmissibleDrift::from_samples(load(g, grid)?)?);
    }
    for spec in test_specs(
        grid,
        &[&[(1, 0.3, 0.0), (2, 0.0, 0.2)], &[(1, 0.0, -0.5), (3, 0.1, 0.0)]],
    ) {
        drifts.push(AdmissibleDrift::from_spec(&spec, grid)?);
    }
    drifts.push(AdmissibleDrift::from_samples(e.log_f())?);

    let mut max_entropy = f64::NEG_INFINITY;
    for ad in &drifts {
        max_entropy = max_entropy.max(relative_entropy(ad)?);
    }
    checks.push(CheckRecord::at_most("entropy_sign", max_entropy, 1e-12));

    // Fault injection shifts the eigenvalue seen by the pressure checks only.
    let lambda = e.lambda + r.perturb_eigenvalue;
    let mut decomposition = 0.0_f64;
    let mut excess = f64::NEG_INFINITY;
    for ad in &drifts {
        let p = pressure_value(ad, &v)?;
        decomposition = decomposition.max((pressure_deficit(ad, &e)? - (lambda - p)).abs());
        excess = excess.max(p - lambda);
    }
    checks.push(CheckRecord::at_most("pressure_decomposition", decomposition, 1e-8));
    checks.push(CheckRecord::at_most("pressure_bound", excess, 1e-8));

    let zero = GridFunction::constant(grid, 0.0)?;
    let mc = McConfig::new(r.paths, r.dt, r.seed)?;
    let start = InitialLaw::Point(r.x);
    let mc_allowance = 5e-3;
    let with_integrand = |integrand: &GridFunction| SimulationOptions {
        record: Recording::Endpoints,
        integrand: Some(integrand.clone()),
        first_path: 0,
    };

    let paths = simulate_sde_with(&zero, &start, r.horizon, &mc, &with_integrand(&v))?;
    let weights: Vec<f64> = paths
        .paths()
        .map(|p| rn_weight(&p, &e, r.horizon).map(|w| w.value()))
        .collect::<Result<_, _>>()?;
    let est = McEstimate::from_samples(&weights);
    checks.push(CheckRecord::at_most(
        "martingale_mean_gibbs",
        (est.estimate - 1.0).abs(),
        3.0 * est.std_error + mc_allowance,
    ));

    let ad = &drifts[0];
    let q = ad.entropy_integrand();
    let paths = simulate_sde_with(&zero, &start, r.horizon, &mc, &with_integrand(&q))?;
    let weights: Vec<f64> = paths
        .paths()
        .map(|p| (ad.g.interpolate(p.end()) - ad.g.interpolate(p.start()) - p.v_integral).exp())
        .collect();
    let est = McEstimate::from_samples(&weights);
    checks.push(CheckRecord::at_most(
        "martingale_mean_admissible",
        (est.estimate - 1.0).abs(),
        3.0 * est.std_error + mc_allowance,
    ));

    let report = VerifyReport {
        lambda: e.lambda,
        checks,
    };
    ctx.out.write_json(
        "verify.json",
        &json!({
            "lambda": num(report.lambda),
            "n": grid.n(),
            "pass": report.all_pass(),
            "checks": report
                .checks
                .iter()
                .map(|c| json!({
                    "name": c.name,
                    "value": num(c.value),
                    "tolerance": num(c.tolerance),
                    "pass": c.pass,
                }))
                .collect::<Vec<_>>(),
        }),
    )?;
    Ok(report)
}
