//! Batch runner for the stage-map experiments.
//!
//! `sobolev-limits <command> --config <path> [--out <dir>] [--stage K] [--seed S]`
//!
//! Every command writes one or more CSV files into the output directory and
//! exits with 0 when all of its checks pass, 2 on a configuration error,
//! 3 when a check fails and 4 when a degree is indeterminate.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use sobolev_limits::analysis::{boundary_identity_check, cauchy_table, jacobian_survey, QuadratureConfig};
use sobolev_limits::composite::{continuum_witness, CompositeStage, Variant};
use sobolev_limits::degree::{degree_perturbed, SphereProbe};
use sobolev_limits::tentacle::{Profile, ScheduleMode, TentacleParams};
use sobolev_limits::{Error, Point, StageMap};

#[derive(Parser, Debug)]
#[command(name = "sobolev-limits", version, about = "Stage-map experiments on Cantor-tower constructions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Highest stage, overriding the config.
    #[arg(long)]
    stage: Option<usize>,
    /// Random seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tentacle parameters per level, with log-space radii.
    Params(Common),
    /// Cauchy table of the demo schedule and the strict closed-form bounds.
    VerifySobolev(Common),
    /// Finite-difference Jacobian determinant survey per stage.
    VerifyJacobian(Common),
    /// Boundary identity check per stage.
    VerifyBoundary(Common),
    /// Collapsing continuum per stage.
    Witness(Common),
    /// Topological degree at the configured targets.
    Degree(Common),
    /// Domain grid on a 2-D slice and its images.
    ExportSlice(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Params(c)
            | Command::VerifySobolev(c)
            | Command::VerifyJacobian(c)
            | Command::VerifyBoundary(c)
            | Command::Witness(c)
            | Command::Degree(c)
            | Command::ExportSlice(c) => c,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Params(_) => "params",
            Command::VerifySobolev(_) => "verify-sobolev",
            Command::VerifyJacobian(_) => "verify-jacobian",
            Command::VerifyBoundary(_) => "verify-boundary",
            Command::Witness(_) => "witness",
            Command::Degree(_) => "degree",
            Command::ExportSlice(_) => "export-slice",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
enum VariantName {
    T1,
    T2,
    W,
    FL,
}

impl From<VariantName> for Variant {
    fn from(v: VariantName) -> Self {
        match v {
            VariantName::T1 => Variant::T1,
            VariantName::T2 => Variant::T2,
            VariantName::W => Variant::W,
            VariantName::FL => Variant::FL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModeName {
    Strict,
    Demo,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadratureSettings {
    resolution: Option<usize>,
    max_depth: Option<usize>,
    tolerance: Option<f64>,
    fd_step: Option<f64>,
    tentacle_samples: Option<usize>,
    shells: Option<usize>,
    axial: Option<usize>,
    cube_grid: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Fixture {
    /// The configured composite stages.
    Stage,
    Identity,
    Antipodal,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct DegreeSettings {
    fixture: Fixture,
    center: Vec<f64>,
    radius: f64,
    /// Target points; the image of the center when empty.
    targets: Vec<Vec<f64>>,
    refinement: usize,
    max_refinement: usize,
}

impl Default for DegreeSettings {
    fn default() -> Self {
        Self {
            fixture: Fixture::Stage,
            center: vec![-0.5, 0.5, 0.5],
            radius: 0.05,
            targets: Vec::new(),
            refinement: 2,
            max_refinement: 6,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SampleSettings {
    jacobian: usize,
    boundary_per_face: usize,
    witness: usize,
    witness_word: Vec<u32>,
}

impl Default for SampleSettings {
    fn default() -> Self {
        Self { jacobian: 10_000, boundary_per_face: 1000, witness: 64, witness_word: vec![7] }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SliceSettings {
    /// The two varying coordinates.
    axes: [usize; 2],
    /// Value of the remaining coordinate.
    offset: f64,
    cells: usize,
}

impl Default for SliceSettings {
    fn default() -> Self {
        Self { axes: [0, 2], offset: 0.0, cells: 64 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    n: usize,
    beta: f64,
    variant: VariantName,
    schedule_mode: ModeName,
    max_stage: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_out")]
    output_dir: PathBuf,
    #[serde(default)]
    quadrature: QuadratureSettings,
    #[serde(default)]
    degree: DegreeSettings,
    #[serde(default)]
    samples: SampleSettings,
    #[serde(default)]
    slice: SliceSettings,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// A failure and the exit code it maps to.
#[derive(Debug)]
enum Failure {
    Config(String),
    Check(String),
    Indeterminate(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) | Failure::Io(_) => 2,
            Failure::Check(_) => 3,
            Failure::Indeterminate(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Check(m) => write!(f, "check failed: {m}"),
            Failure::Indeterminate(m) => write!(f, "indeterminate: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Indeterminate(m) => Failure::Indeterminate(m),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type BoxedMap = Box<dyn Fn(&Point<3>) -> Point<3> + Sync>;

type Outcome = std::result::Result<(), Failure>;

fn load_config(common: &Common) -> std::result::Result<RunConfig, Failure> {
    let text =
        fs::read_to_string(&common.config).map_err(|e| Failure::Config(format!("{}: {e}", common.config.display())))?;
    let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| {
        Failure::Config(format!("{}: line {} column {}: {e}", common.config.display(), e.line(), e.column()))
    })?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(k) = common.stage {
        cfg.max_stage = k;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn field(name: &str, msg: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("field `{name}`: {msg}"))
}

fn validate(cfg: &RunConfig) -> Outcome {
    if cfg.n != 3 {
        return Err(field("n", "only n = 3 is supported"));
    }
    if !cfg.beta.is_finite() || cfg.beta < cfg.n as f64 + 1.0 {
        return Err(field("beta", format!("needs a finite beta >= n + 1, got {}", cfg.beta)));
    }
    if cfg.max_stage == 0 || cfg.max_stage > 12 {
        return Err(field("max_stage", format!("needs 1 <= max_stage <= 12, got {}", cfg.max_stage)));
    }
    quadrature(cfg).validate().map_err(|e| field("quadrature", e))?;
    let d = &cfg.degree;
    if d.center.len() != cfg.n {
        return Err(field("degree.center", format!("needs {} coordinates", cfg.n)));
    }
    if let Some(t) = d.targets.iter().find(|t| t.len() != cfg.n) {
        return Err(field("degree.targets", format!("target {t:?} needs {} coordinates", cfg.n)));
    }
    if d.radius.is_nan() || d.radius <= 0.0 {
        return Err(field("degree.radius", "must be positive"));
    }
    if d.max_refinement <= d.refinement {
        return Err(field("degree.max_refinement", "must exceed degree.refinement"));
    }
    if cfg.samples.witness < 2 {
        return Err(field("samples.witness", "needs at least 2 points"));
    }
    if cfg.samples.witness_word.iter().any(|&m| m >= 1 << cfg.n) {
        return Err(field("samples.witness_word", format!("letters must be below {}", 1 << cfg.n)));
    }
    let s = &cfg.slice;
    if s.axes[0] == s.axes[1] || s.axes.iter().any(|&a| a >= cfg.n) {
        return Err(field("slice.axes", "needs two distinct coordinate indices"));
    }
    if !(-1.0..=1.0).contains(&s.offset) {
        return Err(field("slice.offset", "must lie in [-1, 1]"));
    }
    if s.cells == 0 {
        return Err(field("slice.cells", "must be positive"));
    }
    Ok(())
}

fn quadrature(cfg: &RunConfig) -> QuadratureConfig {
    let q = &cfg.quadrature;
    let base = QuadratureConfig::default();
    QuadratureConfig {
        resolution: q.resolution.unwrap_or(base.resolution),
        max_depth: q.max_depth.unwrap_or(base.max_depth),
        tolerance: q.tolerance.unwrap_or(base.tolerance),
        fd_step: q.fd_step.unwrap_or(base.fd_step),
        seed: cfg.seed,
        tentacle_samples: q.tentacle_samples.unwrap_or(base.tentacle_samples),
        shells: q.shells.unwrap_or(base.shells),
        axial: q.axial.unwrap_or(base.axial),
        cube_grid: q.cube_grid.unwrap_or(base.cube_grid),
    }
}

fn mode(cfg: &RunConfig) -> ScheduleMode {
    match cfg.schedule_mode {
        ModeName::Strict => ScheduleMode::Strict,
        ModeName::Demo => ScheduleMode::Demo,
    }
}

/// Stage maps need representable radii.
fn require_demo(cfg: &RunConfig, command: &str) -> Outcome {
    if cfg.schedule_mode == ModeName::Strict {
        return Err(field("schedule_mode", format!("`{command}` evaluates maps and needs the demo schedule")));
    }
    Ok(())
}

fn stages(cfg: &RunConfig) -> std::result::Result<Vec<CompositeStage<3>>, Failure> {
    (1..=cfg.max_stage).map(|k| Ok(CompositeStage::<3>::demo(cfg.variant.into(), cfg.beta, k)?)).collect()
}

/// 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(cfg: &RunConfig, name: &str) -> std::result::Result<csv::Writer<File>, Failure> {
    fs::create_dir_all(&cfg.output_dir)?;
    let path: PathBuf = Path::new(&cfg.output_dir).join(name);
    Ok(csv::Writer::from_writer(File::create(path)?))
}

fn point3(v: &[f64]) -> Point<3> {
    [v[0], v[1], v[2]]
}

fn run_params(cfg: &RunConfig) -> Outcome {
    let profile =
        Variant::from(cfg.variant).profile().ok_or_else(|| field("variant", "FL has no tentacle parameters"))?;
    let params = TentacleParams::solve(cfg.n, cfg.beta, profile, mode(cfg), cfg.max_stage)?;
    let mut w = writer(cfg, "params.csv")?;
    w.write_record([
        "k",
        "cube",
        "a",
        "c",
        "a_short",
        "c_short",
        "inner_knot",
        "neg_log_d",
        "neg_log_b",
        "d",
        "b",
        "spread",
        "amplitude",
        "ln_budget",
        "ln_seminorm_bound",
    ])?;
    for p in params.levels() {
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        w.write_record([
            p.level.to_string(),
            num(p.cube),
            num(p.a),
            num(p.c),
            num(p.a_short),
            num(p.c_short),
            num(p.inner_knot),
            num(p.d.neg_log()),
            num(p.b.neg_log()),
            opt(p.d.value()),
            opt(p.b.value()),
            num(p.spread),
            num(p.amplitude),
            opt(p.ln_budget),
            num(params.ln_seminorm_bound(p.level)?),
        ])?;
    }
    w.flush()?;
    println!("params: {} levels", params.levels().len());
    Ok(())
}

fn run_sobolev(cfg: &RunConfig) -> Outcome {
    let mut failures = Vec::new();
    let profile = match cfg.variant {
        VariantName::T1 => Profile::Squeeze,
        VariantName::T2 | VariantName::W => Profile::Stretch,
        VariantName::FL => return Err(field("variant", "FL has no Sobolev table")),
    };
    let strict = TentacleParams::solve(cfg.n, cfg.beta, profile, ScheduleMode::Strict, cfg.max_stage)?;
    let mut w = writer(cfg, "sobolev_strict.csv")?;
    w.write_record(["k", "ln_bound", "ln_budget", "stage_budget", "pass"])?;
    for k in 1..=cfg.max_stage {
        let ln_bound = strict.ln_seminorm_bound(k)?;
        let ln_budget = strict.level(k)?.ln_budget.unwrap_or(f64::INFINITY);
        let stage_budget =
            (k as f64 * cfg.beta * (cfg.n as f64 - 1.0) * std::f64::consts::LN_2 + strict.ln_stage_budget(k)).exp();
        let pass = ln_bound <= ln_budget;
        if !pass {
            failures.push(format!("strict bound exceeds the budget at k = {k}"));
        }
        w.write_record([k.to_string(), num(ln_bound), num(ln_budget), num(stage_budget), pass.to_string()])?;
    }
    w.flush()?;
    if cfg.schedule_mode == ModeName::Demo {
        if cfg.variant != VariantName::T1 {
            return Err(field("variant", "demo Cauchy tables are computed for T1"));
        }
        let table = cauchy_table(Variant::T1, cfg.beta, cfg.n as f64 - 1.0, cfg.max_stage, &quadrature(cfg))?;
        let mut w = writer(cfg, "sobolev_table.csv")?;
        w.write_record([
            "k",
            "integral",
            "envelope",
            "pass",
            "cube_part",
            "tentacle_part",
            "tentacles_sampled",
            "relative_change",
        ])?;
        for r in &table.rows {
            w.write_record([
                r.k.to_string(),
                num(r.integral),
                num(table.constant * r.envelope),
                r.pass.to_string(),
                num(r.cube_part),
                num(r.tentacle_part),
                r.tentacles_sampled.to_string(),
                num(r.relative_change),
            ])?;
        }
        w.flush()?;
        if !table.summable {
            failures.push("demo rows are not decreasing and summable".into());
        }
        if let Some(r) = table.rows.iter().find(|r| r.relative_change >= 0.05) {
            failures.push(format!("refinement changes row {} by {:.1}%", r.k, 100.0 * r.relative_change));
        }
    }
    finish("verify-sobolev", failures)
}

fn run_jacobian(cfg: &RunConfig) -> Outcome {
    require_demo(cfg, "verify-jacobian")?;
    let q = quadrature(cfg);
    let mut w = writer(cfg, "jacobian.csv")?;
    w.write_record(["k", "samples", "positive_fraction", "min_det", "nonpositive", "at_interfaces", "pass"])?;
    let mut failures = Vec::new();
    for f in stages(cfg)? {
        let s = jacobian_survey(&f, cfg.samples.jacobian, &q);
        let pass = s.positive_fraction >= 0.999 && s.at_interfaces == s.nonpositive.len();
        if !pass {
            failures.push(format!("stage {}: positive fraction {}", f.stage(), s.positive_fraction));
        }
        w.write_record([
            f.stage().to_string(),
            s.samples.to_string(),
            num(s.positive_fraction),
            num(s.min_det),
            s.nonpositive.len().to_string(),
            s.at_interfaces.to_string(),
            pass.to_string(),
        ])?;
    }
    w.flush()?;
    finish("verify-jacobian", failures)
}

fn run_boundary(cfg: &RunConfig) -> Outcome {
    require_demo(cfg, "verify-boundary")?;
    let mut w = writer(cfg, "boundary.csv")?;
    w.write_record(["k", "samples", "max_deviation", "pass"])?;
    let mut failures = Vec::new();
    for f in stages(cfg)? {
        let c = boundary_identity_check(&f, cfg.samples.boundary_per_face, cfg.seed);
        if !c.pass {
            failures.push(format!("stage {} moves the boundary by {:e}", f.stage(), c.max_deviation));
        }
        w.write_record([f.stage().to_string(), c.samples.to_string(), num(c.max_deviation), c.pass.to_string()])?;
    }
    w.flush()?;
    finish("verify-boundary", failures)
}

fn run_witness(cfg: &RunConfig) -> Outcome {
    require_demo(cfg, "witness")?;
    if cfg.variant == VariantName::FL {
        return Err(field("variant", "FL has no tentacle witness"));
    }
    let mut w = writer(cfg, "witness.csv")?;
    w.write_record(["k", "endpoint_distance", "image_diameter"])?;
    let mut failures = Vec::new();
    let mut diameters = Vec::new();
    for f in stages(cfg)? {
        let wit = continuum_witness(&f, &cfg.samples.witness_word, cfg.samples.witness)?;
        if wit.endpoint_distance < 0.5 {
            failures.push(format!("stage {}: endpoints only {} apart", wit.stage, wit.endpoint_distance));
        }
        diameters.push(wit.image_diameter);
        w.write_record([wit.stage.to_string(), num(wit.endpoint_distance), num(wit.image_diameter)])?;
    }
    w.flush()?;
    if diameters.windows(2).any(|p| p[1] >= p[0]) {
        failures.push("image diameters do not decrease strictly".into());
    }
    finish("witness", failures)
}

fn run_degree(cfg: &RunConfig) -> Outcome {
    let d = &cfg.degree;
    let center = point3(&d.center);
    let mut probe = SphereProbe::<3>::new(center, d.radius);
    probe.refinement = d.refinement;
    probe.max_refinement = d.max_refinement;
    let mut w = writer(cfg, "degree.csv")?;
    w.write_record(["k", "a_1", "a_2", "a_3", "r", "y_1", "y_2", "y_3", "degree", "raw", "refinements"])?;
    let maps: Vec<(usize, BoxedMap)> = match d.fixture {
        Fixture::Identity => vec![(0, Box::new(|x: &Point<3>| *x))],
        Fixture::Antipodal => vec![(0, Box::new(|x: &Point<3>| x.map(|v| -v)))],
        Fixture::Stage => {
            require_demo(cfg, "degree")?;
            stages(cfg)?
                .into_iter()
                .map(|f| (f.stage(), Box::new(move |x: &Point<3>| f.forward(x)) as BoxedMap))
                .collect()
        }
    };
    let mut failures = Vec::new();
    let mut unsettled = Vec::new();
    for (k, f) in &maps {
        let targets: Vec<Point<3>> =
            if d.targets.is_empty() { vec![f(&center)] } else { d.targets.iter().map(|t| point3(t)).collect() };
        for y in targets {
            let rep = match degree_perturbed(f, &probe, &y, cfg.seed) {
                Ok(rep) => rep,
                Err(Error::Indeterminate(m)) => {
                    unsettled.push(format!("stage {k}: {m}"));
                    let mut row = vec![k.to_string()];
                    row.extend(center.iter().map(|&v| num(v)));
                    row.push(num(d.radius));
                    row.extend(y.iter().map(|&v| num(v)));
                    row.extend([String::new(), String::new(), String::new()]);
                    w.write_record(&row)?;
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            if d.targets.is_empty() && d.fixture != Fixture::Antipodal && rep.degree != 1 {
                failures.push(format!("stage {k}: degree {} at the image of the center", rep.degree));
            }
            w.write_record([
                k.to_string(),
                num(center[0]),
                num(center[1]),
                num(center[2]),
                num(d.radius),
                num(y[0]),
                num(y[1]),
                num(y[2]),
                rep.degree.to_string(),
                num(rep.raw),
                rep.history.len().to_string(),
            ])?;
        }
    }
    w.flush()?;
    if failures.is_empty() && !unsettled.is_empty() {
        return Err(Failure::Indeterminate(unsettled.join("; ")));
    }
    finish("degree", failures)
}

fn run_slice(cfg: &RunConfig) -> Outcome {
    require_demo(cfg, "export-slice")?;
    let f = CompositeStage::<3>::demo(cfg.variant.into(), cfg.beta, cfg.max_stage)?;
    let s = &cfg.slice;
    let fixed = (0..3).find(|a| !s.axes.contains(a)).expect("two of three axes are used");
    let mut w = writer(cfg, "slice.csv")?;
    w.write_record(["i", "j", "x_1", "x_2", "x_3", "f_1", "f_2", "f_3"])?;
    let h = 2.0 / s.cells as f64;
    for i in 0..=s.cells {
        for j in 0..=s.cells {
            let mut x = [0.0; 3];
            x[s.axes[0]] = (-1.0 + i as f64 * h).min(1.0);
            x[s.axes[1]] = (-1.0 + j as f64 * h).min(1.0);
            x[fixed] = s.offset;
            let y = f.eval(&x)?;
            w.write_record([
                i.to_string(),
                j.to_string(),
                num(x[0]),
                num(x[1]),
                num(x[2]),
                num(y[0]),
                num(y[1]),
                num(y[2]),
            ])?;
        }
    }
    w.flush()?;
    println!("export-slice: {} points", (s.cells + 1) * (s.cells + 1));
    Ok(())
}

fn finish(command: &str, failures: Vec<String>) -> Outcome {
    if failures.is_empty() {
        println!("{command}: pass");
        Ok(())
    } else {
        Err(Failure::Check(failures.join("; ")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = load_config(cli.command.common()).and_then(|cfg| match &cli.command {
        Command::Params(_) => run_params(&cfg),
        Command::VerifySobolev(_) => run_sobolev(&cfg),
        Command::VerifyJacobian(_) => run_jacobian(&cfg),
        Command::VerifyBoundary(_) => run_boundary(&cfg),
        Command::Witness(_) => run_witness(&cfg),
        Command::Degree(_) => run_degree(&cfg),
        Command::ExportSlice(_) => run_slice(&cfg),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {e}", cli.command.name());
            ExitCode::from(e.code())
        }
    }
}
