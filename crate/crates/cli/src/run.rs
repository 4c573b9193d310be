//! Subcommand execution, output bookkeeping and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use degctrl::carleman::{
    build_psi, build_weights, probe_carleman, probe_observability, s_from_normalized, select_lambda, ProbeOptions,
    ProbeReport, WeightSystem,
};
use degctrl::control_linear::{
    check_additional_estimates, check_control_regularity, solve_null_control, ControlProblemLinear, Preconditioner,
};
use degctrl::control_nonlinear::{find_smallness, track, FixedPointConfig, NonlinearProblem};
use degctrl::disc::{io as field_io, l2, FieldKind, Grid, StateField, Stepper, TimeScheme};
use degctrl::model::{
    power_law_metadata, power_law_unchecked, validate_problem, ControlGeometry, DegenerateCoefficient, DomainMotion,
    Interval, Nonlinearity, ValidationReport,
};
use degctrl::transform::{build_transform, TransformedCoefficients};

use crate::config::{Config, ConfigError, MotionKind, PreconditionerSpec, Profile, SMode, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Forward,
    Trajectory,
    Weights,
    ProbeCarleman,
    ProbeObservability,
    ControlLinear,
    ControlNonlinear,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Forward => "forward",
            Command::Trajectory => "trajectory",
            Command::Weights => "weights",
            Command::ProbeCarleman => "probe-carleman",
            Command::ProbeObservability => "probe-observability",
            Command::ControlLinear => "control-linear",
            Command::ControlNonlinear => "control-nonlinear",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Validation(ValidationReport),
    Solver(degctrl::Error),
    Io(io::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 4,
            Failure::Validation(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "{e}"),
            Failure::Validation(r) => {
                let names: Vec<&str> = r.failures().map(|e| e.name).collect();
                write!(f, "validation failed: {}", names.join(", "))
            }
            Failure::Solver(e) => write!(f, "solver failure: {e}"),
            Failure::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<degctrl::Error> for Failure {
    fn from(e: degctrl::Error) -> Self {
        Failure::Solver(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure::Config(ConfigError {
        line: None,
        message: message.into(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub exit_code: i32,
    pub status: String,
    pub timings: Vec<Timing>,
    pub outputs: Vec<String>,
}

/// Output directory plus the record of everything written to it.
struct Recorder {
    dir: PathBuf,
    outputs: Vec<String>,
    timings: Vec<Timing>,
}

impl Recorder {
    fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        Ok(())
    }

    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(Timing {
            phase: phase.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    fn field(&mut self, name: &str, field: &StateField) -> io::Result<()> {
        let mut buf = Vec::new();
        field_io::write_csv(field, &mut buf)?;
        self.write(name, &buf)
    }

    fn binary(&mut self, name: &str, field: &StateField) -> io::Result<()> {
        let mut buf = Vec::new();
        field_io::write_binary(field, &mut buf)?;
        self.write(name, &buf)
    }
}

/// Everything a subcommand needs that follows directly from the config.
pub struct Setup {
    pub motion: DomainMotion,
    pub coeff: DegenerateCoefficient,
    pub nl: Nonlinearity,
    pub geom: ControlGeometry,
    pub grid: Grid,
    pub scheme: TimeScheme,
}

impl Setup {
    pub fn new(cfg: &Config) -> Result<Self, Failure> {
        let m = &cfg.motion;
        let motion = match m.kind {
            MotionKind::Affine => DomainMotion::affine(m.ell0, m.rate, m.horizon),
            MotionKind::Exponential => DomainMotion::exponential(m.ell0, m.rate, m.horizon),
        }
        .map_err(|e| config_error(format!("[motion] {e}")))?;
        let alpha = cfg.coefficient.alpha;
        let coeff = if (0.0..1.0).contains(&alpha) {
            power_law_metadata(alpha, &motion).map_err(|e| config_error(format!("[coefficient] {e}")))?
        } else if alpha.is_finite() {
            power_law_unchecked(alpha, &motion)
        } else {
            return Err(config_error("[coefficient] alpha must be finite"));
        }
        .allow_nondegenerate(cfg.coefficient.allow_nondegenerate);
        let nl = Nonlinearity::by_name(&cfg.nonlinearity.name, cfg.nonlinearity.c).ok_or_else(|| {
            config_error(format!(
                "[nonlinearity] unknown name {:?}; expected linear, sine or saturating_cubic",
                cfg.nonlinearity.name
            ))
        })?;
        let g = &cfg.geometry;
        let iv = |p: [f64; 2]| Interval::new(p[0], p[1]);
        let geom = ControlGeometry::new(iv(g.omega), iv(g.omega1), iv(g.omega_prime));
        let d = &cfg.discretization;
        let grid = Grid::new(d.n, d.m, m.horizon).map_err(|e| config_error(format!("[discretization] {e}")))?;
        let scheme = match d.scheme {
            Scheme::BackwardEuler => TimeScheme::BackwardEuler,
            Scheme::CrankNicolson => TimeScheme::CrankNicolson,
        };
        Ok(Self {
            motion,
            coeff,
            nl,
            geom,
            grid,
            scheme,
        })
    }

    pub fn validate(&self, cfg: &Config) -> Result<ValidationReport, Failure> {
        validate_problem(&self.coeff, &self.motion, &self.nl, &self.geom, cfg.discretization.validation_samples)
            .map_err(|e| config_error(format!("validation could not run: {e}")))
    }

    pub fn coefficients(&self) -> Result<TransformedCoefficients, Failure> {
        Ok(build_transform(&self.coeff, &self.motion, &self.nl, None)?.1)
    }

    pub fn weights(&self, cfg: &Config) -> Result<WeightSystem, Failure> {
        let psi = build_psi(&self.coeff, &self.geom)?;
        let c = &cfg.control;
        let lambda = match c.lambda {
            Some(l) => l,
            None => select_lambda(&psi)?,
        };
        let s = match c.s_mode {
            SMode::Normalized => s_from_normalized(&psi, lambda, self.motion.horizon, c.s),
            SMode::Absolute => c.s,
        };
        Ok(build_weights(&psi, s, lambda, self.motion.horizon, c.m_margin)?)
    }

    /// Profile sampled at the interior nodes, `x̄ = ℓ(0) x`.
    pub fn sample(&self, p: &Profile) -> Vec<f64> {
        self.grid.xs().iter().map(|&x| p.eval(x)).collect()
    }

    pub fn mask(&self) -> Vec<f64> {
        self.grid.indicator(self.geom.omega1.lo, self.geom.omega1.hi)
    }

    fn linear_problem(&self, cfg: &Config, z0: Vec<f64>, coeffs: TransformedCoefficients) -> Result<ControlProblemLinear, Failure> {
        let ws = self.weights(cfg)?;
        let c = &cfg.control;
        let mut p = ControlProblemLinear::new(z0, None, ws, coeffs, self.geom, self.grid);
        p.cg_tol = c.cg_tol;
        p.cg_max_iter = c.cg_max_iter;
        p.tikhonov = c.tikhonov;
        p.terminal_tol = c.terminal_tol;
        p.preconditioner = match c.preconditioner {
            PreconditionerSpec::None => Preconditioner::None,
            PreconditionerSpec::Jacobi => Preconditioner::Jacobi,
            PreconditionerSpec::TimeBlock => Preconditioner::TimeBlock,
        };
        Ok(p)
    }

    fn trajectory(&self, cfg: &Config, coeffs: &TransformedCoefficients) -> Result<Option<Arc<StateField>>, Failure> {
        match &cfg.initial.trajectory {
            None => Ok(None),
            Some(p) => {
                let y0 = self.sample(p);
                let field = Stepper::new(coeffs, self.grid)
                    .with_scheme(self.scheme)
                    .solve_semilinear(&y0, None, None)?;
                Ok(Some(Arc::new(field)))
            }
        }
    }
}

fn thread_pool() -> rayon::ThreadPool {
    let threads = std::env::var("DEGCTRL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool")
}

/// Runs `command` on the config text, writing outputs and `manifest.json`
/// into `out_dir`. Returns the process exit code and the manifest.
pub fn run(command: Command, config_text: &str, out_dir: &Path) -> (i32, Manifest) {
    let mut rec = Recorder {
        dir: out_dir.to_path_buf(),
        outputs: Vec::new(),
        timings: Vec::new(),
    };
    let mut manifest = Manifest {
        command: command.name().to_string(),
        config_hash: String::new(),
        seed: 0,
        version: format!("degctrl {}", env!("CARGO_PKG_VERSION")),
        exit_code: 0,
        status: "ok".into(),
        timings: Vec::new(),
        outputs: Vec::new(),
    };
    let outcome = fs::create_dir_all(out_dir).map_err(Failure::Io).and_then(|_| {
        let cfg = Config::parse(config_text).map_err(Failure::Config)?;
        manifest.config_hash = cfg.hash_hex();
        manifest.seed = cfg.seed;
        thread_pool().install(|| dispatch(command, &cfg, &mut rec))
    });
    if let Err(f) = &outcome {
        manifest.exit_code = f.exit_code();
        manifest.status = f.to_string();
        let detail = match f {
            Failure::Validation(r) => r.render(),
            other => format!("{other}\n"),
        };
        let name = if matches!(f, Failure::Validation(_)) { "validation.txt" } else { "error.txt" };
        let _ = rec.write(name, detail.as_bytes());
    }
    manifest.timings = rec.timings.clone();
    manifest.outputs = rec.outputs.clone();
    manifest.outputs.push("manifest.json".into());
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    if let Err(e) = fs::write(out_dir.join("manifest.json"), json) {
        if manifest.exit_code == 0 {
            manifest.exit_code = 1;
            manifest.status = format!("i/o error: {e}");
        }
    }
    (manifest.exit_code, manifest)
}

fn dispatch(command: Command, cfg: &Config, rec: &mut Recorder) -> Result<(), Failure> {
    if command == Command::Sweep {
        return sweep(cfg, rec);
    }
    let setup = Setup::new(cfg)?;
    let report = rec.time("validate", || setup.validate(cfg))?;
    if !report.passed() {
        return Err(Failure::Validation(report));
    }
    match command {
        Command::Validate => rec.write("validation.txt", report.render().as_bytes()).map_err(Failure::from),
        Command::Forward => forward(cfg, &setup, rec),
        Command::Trajectory => trajectory(cfg, &setup, rec),
        Command::Weights => weights(cfg, &setup, rec),
        Command::ProbeCarleman | Command::ProbeObservability => probe(command, cfg, &setup, rec),
        Command::ControlLinear => control_linear(cfg, &setup, rec),
        Command::ControlNonlinear => control_nonlinear(cfg, &setup, rec),
        Command::Sweep => unreachable!(),
    }
}

/// `t,xbar,value` rows over the deformed grid, boundary nodes included.
fn physical_csv(field: &StateField, motion: &DomainMotion) -> String {
    let g = field.grid;
    let mut out = String::from("t,xbar,value\n");
    for n in 0..=g.m {
        let t = g.t(n);
        let ell = motion.ell(t);
        let s = field.slice(n);
        for i in 0..g.n + 2 {
            let v = if i == 0 || i == g.n + 1 { 0.0 } else { s[i - 1] };
            let _ = writeln!(out, "{},{},{}", t, ell * g.node(i), v);
        }
    }
    out
}

fn forward(cfg: &Config, setup: &Setup, rec: &mut Recorder) -> Result<(), Failure> {
    let coeffs = setup.coefficients()?;
    let y0 = setup.sample(&cfg.initial.u0);
    let stepper = Stepper::new(&coeffs, setup.grid).with_scheme(setup.scheme);
    let y = rec.time("solve", || stepper.solve_semilinear(&y0, None, None))?;
    let h = setup.grid.h();
    let mut report = String::new();
    let _ = writeln!(report, "initial_l2 {}", l2(h, &y0));
    let _ = writeln!(report, "terminal_l2 {}", l2(h, y.slice(setup.grid.m)));
    let _ = writeln!(report, "max_abs {}", y.max_abs());
    rec.field("state.csv", &y)?;
    rec.write("state_physical.csv", physical_csv(&y, &setup.motion).as_bytes())?;
    if cfg.output.binary {
        rec.binary("state.bin", &y)?;
    }
    rec.write("forward.txt", report.as_bytes())?;
    Ok(())
}

fn trajectory(cfg: &Config, setup: &Setup, rec: &mut Recorder) -> Result<(), Failure> {
    let coeffs = setup.coefficients()?;
    let profile = cfg.initial.trajectory.as_ref().unwrap_or(&cfg.initial.u0);
    let y0 = setup.sample(profile);
    let g = setup.grid;
    let field = rec.time("solve", || {
        Stepper::new(&coeffs, g).with_scheme(setup.scheme).solve_semilinear(&y0, None, None)
    })?;
    let field = Arc::new(field);
    let with = coeffs.with_trajectory(Some(field.clone()));
    let mut table = String::from("x,t,b,B,c\n");
    let (mut b_min, mut b_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for n in 0..=g.m {
        let t = g.t(n);
        let b = with.b(t);
        b_min = b_min.min(b);
        b_max = b_max.max(b);
        for j in 0..g.n {
            let x = g.x(j);
            let _ = writeln!(table, "{},{},{},{},{}", x, t, b, with.big_b(x, t), with.c_node(n, j)?);
        }
    }
    let mask = setup.mask();
    let min = field.min_abs_on(&mask);
    let floor = cfg.fixed_point.floor;
    let mut report = String::new();
    let _ = writeln!(report, "min_abs_on_omega1 {min}");
    let _ = writeln!(report, "floor {floor}");
    let _ = writeln!(report, "floor_ok {}", min >= floor);
    let _ = writeln!(report, "b_min {b_min}");
    let _ = writeln!(report, "b_max {b_max}");
    rec.field("trajectory.csv", &field)?;
    rec.write("trajectory_physical.csv", physical_csv(&field, &setup.motion).as_bytes())?;
    rec.write("coefficients.csv", table.as_bytes())?;
    if cfg.output.binary {
        rec.binary("trajectory.bin", &field)?;
    }
    rec.write("trajectory.txt", report.as_bytes())?;
    Ok(())
}

fn weights_report(ws: &WeightSystem) -> String {
    let d = &ws.diagnostics;
    let psi = &ws.psi;
    let mut r = String::new();
    let _ = writeln!(r, "lambda {}", ws.lambda);
    let _ = writeln!(r, "s {}", ws.s);
    let _ = writeln!(r, "m_margin {}", ws.m_margin);
    let _ = writeln!(r, "c1 {}", ws.c1);
    let _ = writeln!(r, "c2 {}", ws.c2);
    let _ = writeln!(r, "psi_max {}", psi.max);
    let _ = writeln!(r, "psi_min {}", psi.min);
    let _ = writeln!(r, "psi_argmax {}", psi.argmax);
    let _ = writeln!(r, "psi_bridge_unimodal {}", psi.bridge_unimodal);
    let _ = writeln!(r, "ordering {:?}", d.ordering);
    let _ = writeln!(r, "zeta_ratio_spread {}", d.zeta_ratio_spread);
    let _ = writeln!(r, "rho_hat_identity {}", d.rho_hat_identity);
    let _ = writeln!(r, "zeta_t_const {}", d.zeta_t_const);
    let _ = writeln!(r, "tau_t_const {}", d.tau_t_const);
    let _ = writeln!(r, "m_jump {:?}", d.m_jump);
    let _ = writeln!(r, "lambda_margin {}", d.lambda_margin);
    r
}

fn weights(cfg: &Config, setup: &Setup, rec: &mut Recorder) -> Result<(), Failure> {
    let ws = rec.time("build", || setup.weights(cfg))?;
    rec.write("weights.csv", ws.table_csv(cfg.output.table_samples.max(1)).as_bytes())?;
    rec.write("weights.txt", weights_report(&ws).as_bytes())?;
    Ok(())
}

fn probe_csv(r: &ProbeReport) -> String {
    let mut out = String::from("trial,ratio,secondary\n");
    for (i, v) in r.ratios.iter().enumerate() {
        let sec = r.secondary.as_ref().map_or(String::new(), |s| format!("{}", s[i]));
        let _ = writeln!(out, "{i},{v},{sec}");
    }
    out
}

fn probe(command: Command, cfg: &Config, setup: &Setup, rec: &mut Recorder) -> Result<(), Failure> {
    let coeffs = setup.coefficients()?;
    let ws = setup.weights(cfg)?;
    let opts = ProbeOptions {
        trials: cfg.probe.trials,
        seed: cfg.seed,
        window: setup.geom.omega1,
        data_scale: cfg.probe.data_scale,
    };
    let (report, stem) = if command == Command::ProbeCarleman {
        (rec.time("probe", || probe_carleman(&ws, &coeffs, &setup.grid, &opts))?, "probe_carleman")
    } else {
        (rec.time("probe", || probe_observability(&ws, &coeffs, &setup.grid, &opts))?, "probe_observability")
    };
    rec.write(&format!("{stem}.txt"), report.render().as_bytes())?;
    rec.write(&format!("{stem}.csv"), probe_csv(&report).as_bytes())?;
    Ok(())
}

fn control_linear(cfg: &Config, setup: &Setup, rec: &mut Recorder) -> Result<(), Failure> {
    let base = setup.coefficients()?;
    let traj = setup.trajectory(cfg, &base)?;
    let coeffs = base.with_trajectory(traj);
    let z0 = setup.sample(&cfg.initial.u0);
    let p = setup.linear_problem(cfg, z0, coeffs)?;
    let sol = rec.time("solve", || solve_null_control(&p))?;
    let extra = rec.time("estimates", || (check_additional_estimates(&sol, &p), check_control_regularity(&sol, &p)));
    let d = &sol.diagnostics;
    let z0n = l2(setup.grid.h(), &p.z0);
    let mut r = String::new();
    let _ = writeln!(r, "z0_l2 {z0n}");
    let _ = writeln!(r, "terminal_norm {}", d.terminal_norm);
    let _ = writeln!(r, "resimulated_terminal_norm {}", d.resimulated_terminal_norm);
    let _ = writeln!(r, "terminal_ratio {}", if z0n > 0.0 { d.resimulated_terminal_norm / z0n } else { 0.0 });
    let _ = writeln!(r, "terminal_tol {}", d.terminal_tol);
    let _ = writeln!(r, "certificate_ok {}", d.certificate_ok);
    let _ = writeln!(r, "cg_iters {}", d.cg_iters);
    let _ = writeln!(r, "cg_residual {}", d.residual);
    let _ = writeln!(r, "dropped_rhs {}", d.dropped_rhs);
    let _ = writeln!(r, "log_scale {}", d.log_scale);
    let _ = writeln!(r, "duality_direct {}", d.duality.0);
    let _ = writeln!(r, "duality_by_parts {}", d.duality.1);
    let _ = writeln!(r, "state_mismatch {}", d.state_mismatch);
    let _ = writeln!(r, "kappa0 {}", d.kappa0);
    let _ = writeln!(r, "kappa1 {}", d.kappa1);
    let _ = writeln!(r, "estimate_ratio_31 {}", d.estimate_ratio_31);
    let _ = writeln!(r, "additional_ratio_kappa0 {}", extra.0.ratio_kappa0);
    let _ = writeln!(r, "additional_ratio_kappa1 {}", extra.0.ratio_kappa1);
    let _ = writeln!(r, "regularity_identity_residual {}", extra.1.identity_residual);
    let _ = writeln!(r, "regularity_ratio {}", extra.1.ratio);
    let mut hist = String::from("iteration,residual\n");
    for (i, v) in d.residual_history.iter().enumerate() {
        let _ = writeln!(hist, "{i},{v}");
    }
    rec.field("state.csv", &sol.z)?;
    rec.field("control.csv", &sol.h_tilde)?;
    if cfg.output.binary {
        rec.binary("state.bin", &sol.z)?;
        rec.binary("control.bin", &sol.h_tilde)?;
    }
    rec.write("cg_history.csv", hist.as_bytes())?;
    rec.write("diagnostics.txt", r.as_bytes())?;
    if !d.certificate_ok {
        return Err(Failure::Solver(degctrl::Error::InvalidInput(format!(
            "re-simulated terminal norm {} exceeds tolerance {}",
            d.resimulated_terminal_norm, d.terminal_tol
        ))));
    }
    Ok(())
}

fn control_nonlinear(cfg: &Config, setup: &Setup, rec: &mut Recorder) -> Result<(), Failure> {
    let base = setup.coefficients()?;
    let g = setup.grid;
    let traj = match setup.trajectory(cfg, &base)? {
        Some(t) => t,
        None => Arc::new(StateField::zeros(g, FieldKind::State)),
    };
    let u0 = setup.sample(&cfg.initial.u0);
    let z0: Vec<f64> = u0.iter().zip(traj.slice(0)).map(|(a, b)| a - b).collect();
    let linear = setup.linear_problem(cfg, z0.clone(), base.clone())?;
    let fp = &cfg.fixed_point;
    let p = NonlinearProblem::new(linear, fp.floor);
    let mut fcfg = FixedPointConfig {
        max_outer: fp.max_outer,
        tol_fp: fp.tol_fp,
        damping: fp.damping,
        retry_damping: fp.retry_damping,
        smallness_eps: None,
    };
    fcfg.validate().map_err(|e| config_error(format!("[fixed_point] {e}")))?;
    let mut report = String::new();
    if fp.smallness_search {
        let probe_cfg = FixedPointConfig { max_outer: 20, ..fcfg };
        let sm = rec.time("smallness", || find_smallness(&z0, traj.clone(), &probe_cfg, &p, fp.bisection_steps))?;
        fcfg.smallness_eps = Some(sm.eps);
        let _ = writeln!(report, "smallness_scale {}", sm.scale);
        let _ = writeln!(report, "smallness_eps {}", sm.eps);
        let _ = writeln!(report, "smallness_probes {}", sm.probes);
    }
    let sol = rec.time("fixed_point", || track(&z0, traj.clone(), &fcfg, &p))?;
    let mut table = String::from("iteration,delta_z,h_tilde_norm,terminal_error,cg_iters,remainder_ratio\n");
    for r in &sol.history {
        let _ = writeln!(
            table,
            "{},{},{},{},{},{}",
            r.iteration, r.change, r.h_tilde_norm, r.terminal_error, r.cg_iters, r.remainder_ratio
        );
    }
    let z0n = l2(g.h(), &z0);
    let _ = writeln!(report, "mode {}", if sol.additive() { "additive" } else { "bilinear" });
    let _ = writeln!(report, "z0_l2 {z0n}");
    let _ = writeln!(report, "iterations {}", sol.iterations);
    let _ = writeln!(report, "damping {}", sol.damping);
    let _ = writeln!(report, "reported_terminal {}", sol.reported_terminal);
    let _ = writeln!(report, "terminal_error {}", sol.terminal_error);
    let _ = writeln!(report, "terminal_ratio {}", if z0n > 0.0 { sol.terminal_error / z0n } else { 0.0 });
    let _ = writeln!(report, "certificate_ok {}", sol.certificate_ok);
    let _ = writeln!(report, "remainder_bound_ok {}", sol.remainder_bound_ok);
    if let Some(w) = sol.within_smallness {
        let _ = writeln!(report, "within_smallness {w}");
    }
    let control = sol.h.as_ref().unwrap_or(&sol.h_tilde);
    let _ = writeln!(report, "control_l2q {}", control.l2_q());
    rec.write("iterations.csv", table.as_bytes())?;
    rec.field("deviation.csv", &sol.z)?;
    rec.field("state.csv", &sol.y)?;
    rec.field("control.csv", control)?;
    rec.write("u_physical.csv", physical_csv(&sol.y, &setup.motion).as_bytes())?;
    if cfg.output.binary {
        rec.binary("state.bin", &sol.y)?;
        rec.binary("control.bin", control)?;
    }
    rec.write("report.txt", report.as_bytes())?;
    Ok(())
}

const MAX_COMBINATIONS: usize = 10_000;

/// One config per point of the cartesian product of the sweep axes.
pub fn expand_sweep(cfg: &Config) -> Result<Vec<Config>, Failure> {
    let sw = cfg.sweep.clone().unwrap_or_default();
    let mut base = cfg.clone();
    base.sweep = None;
    let mut out = vec![base];
    fn axis<T: Clone>(out: Vec<Config>, values: &[T], set: impl Fn(&mut Config, T)) -> Vec<Config> {
        if values.is_empty() {
            return out;
        }
        out.into_iter()
            .flat_map(|c| {
                values.iter().map(|v| {
                    let mut c = c.clone();
                    set(&mut c, v.clone());
                    c
                }).collect::<Vec<_>>()
            })
            .collect()
    }
    let count = [sw.s.len(), sw.lambda.len(), sw.n.len(), sw.m.len(), sw.alpha.len()]
        .iter()
        .map(|&l| l.max(1))
        .product::<usize>();
    if count > MAX_COMBINATIONS {
        return Err(config_error(format!("[sweep] {count} combinations exceed the limit of {MAX_COMBINATIONS}")));
    }
    out = axis(out, &sw.alpha, |c, v| c.coefficient.alpha = v);
    out = axis(out, &sw.n, |c, v| c.discretization.n = v);
    out = axis(out, &sw.m, |c, v| c.discretization.m = v);
    out = axis(out, &sw.s, |c, v| c.control.s = v);
    out = axis(out, &sw.lambda, |c, v| c.control.lambda = Some(v));
    Ok(out)
}

fn sweep_row(index: usize, c: &Config) -> String {
    let head = format!(
        "{},{},{},{},{},{},{}",
        index,
        c.hash_hex(),
        c.coefficient.alpha,
        c.discretization.n,
        c.discretization.m,
        c.control.s,
        c.control.lambda.map_or(String::from("auto"), |l| format!("{l}"))
    );
    let result = (|| -> Result<String, Failure> {
        let setup = Setup::new(c)?;
        let report = setup.validate(c)?;
        if !report.passed() {
            return Err(Failure::Validation(report));
        }
        let coeffs = setup.coefficients()?;
        let z0 = setup.sample(&c.initial.u0);
        let p = setup.linear_problem(c, z0, coeffs)?;
        let sol = solve_null_control(&p)?;
        let d = &sol.diagnostics;
        let z0n = l2(setup.grid.h(), &p.z0);
        let ratio = if z0n > 0.0 { d.resimulated_terminal_norm / z0n } else { 0.0 };
        Ok(format!(
            "ok,{},{},{},{},{},{},",
            p.ws.lambda, ratio, d.certificate_ok, d.cg_iters, d.residual, d.estimate_ratio_31
        ))
    })();
    match result {
        Ok(tail) => format!("{head},{tail}"),
        Err(f) => {
            let msg = f.to_string().replace([',', '\n'], ";");
            format!("{head},failed,,,,,,,{msg}")
        }
    }
}

fn sweep(cfg: &Config, rec: &mut Recorder) -> Result<(), Failure> {
    let combos = expand_sweep(cfg)?;
    let rows: Vec<String> = rec.time("sweep", || {
        combos.par_iter().enumerate().map(|(i, c)| sweep_row(i, c)).collect()
    });
    let mut out = String::from(
        "index,config_hash,alpha,n,m,s,lambda,status,lambda_used,terminal_ratio,certificate_ok,cg_iters,residual,estimate_ratio_31,message\n",
    );
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    rec.write("sweep.csv", out.as_bytes())?;
    Ok(())
}
