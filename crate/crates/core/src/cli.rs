//! Command-line front end: form and fixture parsing, dispatch, JSON reports.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::associator_pde::{frame_associator_max, newton_solve, GraphState, NewtonOptions, Perturbation};
use crate::exterior::{parse_form, Form, Labels, PolyForm};
use crate::g2::{self, associative_residual, G2Structure, MetricVerdict, Plane3};
use crate::octonion::{associator, Octonion};
use crate::perturbed_sl::{
    equivalence_check, sl_residual, symbol_sweep, volume_bound_check, volume_identity_check, MultiplierField,
    Patch, SlSetting,
};
use crate::rng::sample_rng;
use crate::stable6::{self, Kind6};
use crate::{Error, Metric, Result};

/// Entrywise agreement required between the ℝ⁶ and cylinder symbols.
pub const SPLIT_TOL: f64 = 1e-12;

#[derive(Parser, Debug)]
#[command(name = "g2kit", version, about = "Stable forms, G2 structures and associative graphs")]
pub struct Cli {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Also write the JSON report to this file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print the JSON report instead of a summary.
    #[arg(long, global = true)]
    pub json: bool,
    /// JSON file presetting seed, samples, tol and grid; flags override.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "verb", rename_all = "kebab-case")]
pub enum Command {
    /// Stability class of a 2-, 3- or 4-form on ℝ⁶, or of a 3-/4-form on ℝ⁷.
    Classify {
        #[arg(allow_hyphen_values = true)]
        form: String,
        #[arg(long, default_value_t = 6)]
        dim: usize,
        #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
        orientation: i8,
    },
    /// Hitchin dual on ℝ⁶; φ ↔ ψ on ℝ⁷.
    Dual {
        #[arg(allow_hyphen_values = true)]
        form: String,
        #[arg(long, default_value_t = 6)]
        dim: usize,
        #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
        orientation: i8,
    },
    /// Metric and orientation of a 3-form on ℝ⁷.
    Metric {
        #[arg(allow_hyphen_values = true)]
        form: String,
    },
    Su3Check {
        #[arg(allow_hyphen_values = true)]
        rho: String,
        #[arg(allow_hyphen_values = true)]
        omega: String,
    },
    /// Cylinder lift of a (3,2) or (3,4) pair on ℝ⁶.
    G2pairCheck {
        #[arg(allow_hyphen_values = true)]
        rho: String,
        #[arg(allow_hyphen_values = true)]
        second: String,
    },
    /// Sampled min of φ′|V / vol V over ψ-associative planes.
    TameCheck {
        /// Taming 3-form; defaults to φ₀.
        #[arg(long, allow_hyphen_values = true)]
        phi: Option<String>,
        /// 4-form ψ; defaults to ψ₀.
        #[arg(long, allow_hyphen_values = true)]
        psi: Option<String>,
        #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
        orientation: i8,
    },
    /// Associator residual of one plane (three comma-separated vectors), or
    /// of sampled associative planes.
    AssocCheck {
        #[arg(long, allow_hyphen_values = true)]
        phi: Option<String>,
        #[arg(long, num_args = 3, value_name = "VEC", allow_hyphen_values = true)]
        plane: Option<Vec<String>>,
    },
    SlResidual {
        #[arg(long)]
        pair: Option<PathBuf>,
        #[arg(long)]
        patch: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<PathBuf>,
    },
    SymbolCheck {
        /// Number of (node, α) samples; overrides --samples.
        #[arg(long)]
        sweep: Option<usize>,
        #[arg(long)]
        pair: Option<PathBuf>,
        #[arg(long)]
        patch: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<PathBuf>,
    },
    VolumeCheck,
    /// Newton solve of the modified associator equation on a cube.
    SolveGraph {
        #[arg(long)]
        beta: Option<PathBuf>,
        #[arg(long)]
        boundary: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        max_iter: usize,
        #[arg(long, default_value_t = 1.0)]
        half_width: f64,
        /// Amplitude of a seeded random initial guess in the interior.
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        /// Write the Newton trace here as well.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    PaperExamples {
        /// Negates ρ in every fixture (harness self-test).
        #[arg(long)]
        negate_rho: bool,
    },
}

impl Command {
    fn verb(&self) -> &'static str {
        match self {
            Command::Classify { .. } => "classify",
            Command::Dual { .. } => "dual",
            Command::Metric { .. } => "metric",
            Command::Su3Check { .. } => "su3-check",
            Command::G2pairCheck { .. } => "g2pair-check",
            Command::TameCheck { .. } => "tame-check",
            Command::AssocCheck { .. } => "assoc-check",
            Command::SlResidual { .. } => "sl-residual",
            Command::SymbolCheck { .. } => "symbol-check",
            Command::VolumeCheck => "volume-check",
            Command::SolveGraph { .. } => "solve-graph",
            Command::PaperExamples { .. } => "paper-examples",
        }
    }

    fn default_grid(&self) -> usize {
        match self {
            Command::VolumeCheck => 16,
            Command::SolveGraph { .. } => 9,
            _ => 8,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    samples: Option<usize>,
    tol: Option<f64>,
    grid: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Resolved {
    pub seed: u64,
    pub samples: usize,
    pub tol: f64,
    pub grid: usize,
}

pub fn resolve(cli: &Cli) -> Result<Resolved> {
    let cfg = match &cli.config {
        Some(p) => serde_json::from_str::<ConfigFile>(&read(p)?).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?,
        None => ConfigFile::default(),
    };
    let r = Resolved {
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        samples: cli.samples.or(cfg.samples).unwrap_or(1000),
        tol: cli.tol.or(cfg.tol).unwrap_or(1e-10),
        grid: cli.grid.or(cfg.grid).unwrap_or(cli.command.default_grid()),
    };
    if !(r.tol > 0.0 && r.tol.is_finite()) {
        return Err(Error::Parse(format!("tolerance must be positive, got {}", r.tol)));
    }
    Ok(r)
}

/// A finished command: the report body and whether every check passed.
pub struct Outcome {
    pub result: Value,
    pub pass: bool,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn new(result: impl Serialize, pass: bool) -> Result<Self> {
        Ok(Outcome {
            result: to_value(result)?,
            pass,
            warnings: Vec::new(),
        })
    }
}

fn to_value(v: impl Serialize) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Numeric(format!("serialization: {e}")))
}

fn read(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).map_err(|e| Error::pre(format!("{}: {e}", p.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(p: &Path) -> Result<T> {
    serde_json::from_str(&read(p)?).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))
}

/// A form argument: `@file.json` or text in the dx-grammar.
fn form_arg(arg: &str, dim: usize, warnings: &mut Vec<String>) -> Result<Form> {
    let f = match arg.strip_prefix('@') {
        Some(path) => read_json::<Form>(Path::new(path))?,
        None => {
            let p = parse_form(arg, dim, Labels::Auto)?;
            warnings.extend(p.warnings);
            p.form
        }
    };
    if f.dim() != dim {
        return Err(Error::DimensionMismatch(dim, f.dim()));
    }
    Ok(f)
}

fn vector_arg(arg: &str) -> Result<Vec<f64>> {
    let v = arg
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad vector component {s:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if v.len() != 7 {
        return Err(Error::Parse(format!("expected 7 components, got {}", v.len())));
    }
    Ok(v)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FormSpec {
    Text(String),
    Json(Form),
}

impl FormSpec {
    fn resolve(self, dim: usize) -> Result<Form> {
        match self {
            FormSpec::Text(t) => Ok(parse_form(&t, dim, Labels::OneBased)?.form),
            FormSpec::Json(f) if f.dim() == dim => Ok(f),
            FormSpec::Json(f) => Err(Error::DimensionMismatch(dim, f.dim())),
        }
    }
}

/// `{"rho", "tau", "rho_prime", "omega_prime"}` on ℝ⁶.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairFile {
    rho: FormSpec,
    tau: FormSpec,
    rho_prime: FormSpec,
    omega_prime: FormSpec,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LambdaFile {
    Values(Vec<f64>),
    Field { values: Vec<f64> },
}

fn sl_inputs(
    pair: &Option<PathBuf>,
    patch: &Option<PathBuf>,
    lambda: &Option<PathBuf>,
    grid: usize,
) -> Result<(SlSetting, Patch, MultiplierField)> {
    let setting = match pair {
        Some(p) => {
            let f: PairFile = read_json(p)?;
            SlSetting::from_pairs(
                &f.rho.resolve(6)?,
                &f.tau.resolve(6)?,
                &f.rho_prime.resolve(6)?,
                &f.omega_prime.resolve(6)?,
            )?
        }
        None => SlSetting::calabi_yau(),
    };
    let patch = match patch {
        Some(p) => {
            let patch: Patch = read_json(p)?;
            patch.validate()?;
            patch
        }
        None => Patch::coordinate([3, 1, 5], grid, true)?,
    };
    let lambda = match lambda {
        Some(p) => {
            let values = match read_json::<LambdaFile>(p)? {
                LambdaFile::Values(v) | LambdaFile::Field { values: v } => v,
            };
            MultiplierField::from_values(&patch, values)?
        }
        None => MultiplierField::constant(&patch, 0.0),
    };
    Ok((setting, patch, lambda))
}

fn kind_name(k: Kind6) -> &'static str {
    match k {
        Kind6::Stable2 => "stable 2-form",
        Kind6::Positive3 => "positive 3-form",
        Kind6::Negative3 => "negative 3-form",
        Kind6::Stable4 => "stable 4-form",
        Kind6::Degenerate => "degenerate",
    }
}

fn classify(form: &Form, orientation: i8) -> Result<Outcome> {
    match (form.dim(), form.degree()) {
        (6, 2) => {
            let c = stable6::classify_2form(form)?;
            Outcome::new(json!({"class": kind_name(c.kind), "stable": c.kind != Kind6::Degenerate, "classification": c}), true)
        }
        (6, 3) => {
            let c = stable6::classify_3form(form)?;
            Outcome::new(json!({"class": kind_name(c.kind), "stable": c.kind != Kind6::Degenerate, "classification": c}), true)
        }
        (6, 4) => {
            let a = stable6::classify_4form(form)?;
            let k = a.classification.kind;
            Outcome::new(json!({"class": kind_name(k), "stable": k != Kind6::Degenerate, "classification": a}), true)
        }
        (7, 3) => {
            let v = g2::metric_from_phi(form)?;
            let stable = matches!(v, MetricVerdict::Definite { .. });
            Outcome::new(json!({"class": if stable { "G2 3-form" } else { "not G2" }, "stable": stable, "metric": v}), true)
        }
        (7, 4) => {
            let s = G2Structure::from_psi(form, orientation);
            let body = match &s {
                Ok(s) => json!({"class": "G2 4-form", "stable": true, "orientation": orientation, "phi": s.phi}),
                Err(e) => json!({"class": "not G2", "stable": false, "orientation": orientation, "diagnostic": e.to_string()}),
            };
            Outcome::new(body, true)
        }
        (n, p) => Err(Error::pre(format!("no stability classification for {p}-forms on ℝ^{n}"))),
    }
}

fn dual(form: &Form, orientation: i8) -> Result<Outcome> {
    let d = match (form.dim(), form.degree()) {
        (6, 2) => form.wedge(form)?.scale(0.5),
        (6, 3) => stable6::hitchin_dual_3form(form)?,
        (6, 4) => stable6::hitchin_dual_4form(form)?,
        (7, 3) => G2Structure::from_phi(form)?.psi,
        (7, 4) => G2Structure::from_psi(form, orientation)?.phi,
        (n, p) => return Err(Error::pre(format!("no dual for {p}-forms on ℝ^{n}"))),
    };
    Outcome::new(json!({"dual": d, "text": d.render(Labels::Auto)}), true)
}

fn tame(phi: &Option<String>, psi: &Option<String>, orientation: i8, o: &Resolved, w: &mut Vec<String>) -> Result<Outcome> {
    let s = match psi {
        Some(t) => G2Structure::from_psi(&form_arg(t, 7, w)?, orientation)?,
        None => G2Structure::from_phi(&g2::phi0())?,
    };
    let phi = match phi {
        Some(t) => form_arg(t, 7, w)?,
        None => g2::phi0(),
    };
    let t = g2::taming_estimate(&phi, &s, o.samples, o.seed)?;
    let pass = t.verdict != "refuted";
    Outcome::new(t, pass)
}

fn assoc(phi: &Option<String>, plane: &Option<Vec<String>>, o: &Resolved, w: &mut Vec<String>) -> Result<Outcome> {
    let s = G2Structure::from_phi(&match phi {
        Some(t) => form_arg(t, 7, w)?,
        None => g2::phi0(),
    })?;
    match plane {
        Some(vs) => {
            let p = Plane3::new(vector_arg(&vs[0])?, vector_arg(&vs[1])?, vector_arg(&vs[2])?);
            let r = associative_residual(&p, &s, o.tol)?;
            let pass = r.associative;
            Outcome::new(r, pass)
        }
        None => {
            let planes = g2::sample_associative(&s, o.samples, o.seed);
            let mut worst = 0.0f64;
            let mut min_phi = f64::INFINITY;
            for p in &planes {
                let r = associative_residual(p, &s, o.tol)?;
                worst = worst.max(r.relative);
                min_phi = min_phi.min(r.phi_value / p.volume(&s.metric));
            }
            let pass = worst <= o.tol && min_phi > 0.0;
            Outcome::new(json!({"samples": o.samples, "seed": o.seed, "max_relative_residual": worst, "min_phi_over_vol": min_phi}), pass)
        }
    }
}

fn volume(o: &Resolved) -> Result<Outcome> {
    let cy = SlSetting::calabi_yau();
    let sl = Patch::coordinate([3, 1, 5], o.grid, true)?;
    let mu = MultiplierField::sin_bump(&sl, 0.2, [1, 1, 0]);
    let identity = volume_identity_check(&mu, &sl, &Metric::identity(6))?;
    // ω′ does not vanish on this torus, so ∫dμ∧ω′ is a genuine test.
    let flat = Patch::coordinate([0, 1, 2], o.grid, true)?;
    let exact = volume_bound_check(&cy, &flat, &MultiplierField::sin_bump(&flat, 0.2, [1, 1, 0]), 1.0, o.tol)?;
    let g = cy.g2_at(&[0.0; 7])?;
    let taming = g2::taming_estimate(&cy.phi_prime, &g, o.samples, o.seed)?;
    let k = taming
        .k_estimate
        .ok_or_else(|| Error::Numeric("taming estimate refuted; no K".into()))?;
    let bound = volume_bound_check(&cy, &sl, &MultiplierField::constant(&sl, 0.5), k, o.tol)?;
    let pass = identity.wedge_defect <= o.tol
        && identity.hodge_defect <= o.tol
        && exact.exact_term.abs() <= o.tol
        && bound.pass;
    Outcome::new(
        json!({"identity": identity, "exact_term": exact.exact_term, "dmu_l2_squared": exact.dmu_l2_squared,
               "taming": taming, "bound": bound}),
        pass,
    )
}

#[allow(clippy::too_many_arguments)]
fn solve_graph(
    beta: &Option<PathBuf>,
    boundary: &Option<PathBuf>,
    max_iter: usize,
    half_width: f64,
    jitter: f64,
    trace: &Option<PathBuf>,
    o: &Resolved,
) -> Result<Outcome> {
    let pert = match beta {
        Some(p) => Perturbation::new(read_json::<PolyForm>(p)?)?,
        None => Perturbation::zero(),
    };
    let mut f0 = GraphState::new(o.grid, half_width)?;
    if let Some(p) = boundary {
        let b: GraphState = read_json(p)?;
        f0 = f0.with_boundary_of(&b)?;
    }
    if jitter != 0.0 {
        let mut x = f0.interior_values();
        let mut rng = sample_rng(o.seed, 0);
        x.iter_mut().for_each(|v| *v += jitter * rng.gen_range(-1.0..1.0));
        f0.set_interior(&x);
    }
    let opts = NewtonOptions {
        tol: o.tol,
        max_iter,
        ..NewtonOptions::default()
    };
    let r = newton_solve(&f0, &pert, &opts)?;
    if let Some(p) = trace {
        let text = serde_json::to_string_pretty(&r.trace).map_err(|e| Error::Numeric(e.to_string()))?;
        std::fs::write(p, text + "\n").map_err(|e| Error::pre(format!("{}: {e}", p.display())))?;
    }
    let assoc = frame_associator_max(&r.state, &pert)?;
    let pass = r.converged;
    Outcome::new(
        json!({"converged": r.converged, "iterations": r.iterations, "residual_inf": r.residual_inf,
               "failure": r.failure, "frame_associator_max": assoc, "beta_magnitude": pert.magnitude(),
               "trace": r.trace, "state": r.state}),
        pass,
    )
}

pub fn execute(cli: &Cli, o: &Resolved) -> Result<Outcome> {
    let mut w = Vec::new();
    let mut out = match &cli.command {
        Command::Classify { form, dim, orientation } => classify(&form_arg(form, *dim, &mut w)?, *orientation)?,
        Command::Dual { form, dim, orientation } => dual(&form_arg(form, *dim, &mut w)?, *orientation)?,
        Command::Metric { form } => {
            let phi = form_arg(form, 7, &mut w)?;
            let v = g2::metric_from_phi(&phi)?;
            let pass = matches!(v, MetricVerdict::Definite { .. });
            Outcome::new(v, pass)?
        }
        Command::Su3Check { rho, omega } => {
            let r = stable6::check_su3(&form_arg(rho, 6, &mut w)?, &form_arg(omega, 6, &mut w)?, o.tol)?;
            let pass = r.su3;
            Outcome::new(r, pass)?
        }
        Command::G2pairCheck { rho, second } => {
            let r = g2::g2_pair_check(&form_arg(rho, 6, &mut w)?, &form_arg(second, 6, &mut w)?, o.tol)?;
            let pass = r.g2_pair;
            Outcome::new(r, pass)?
        }
        Command::TameCheck { phi, psi, orientation } => tame(phi, psi, *orientation, o, &mut w)?,
        Command::AssocCheck { phi, plane } => assoc(phi, plane, o, &mut w)?,
        Command::SlResidual { pair, patch, lambda } => {
            let (setting, patch, lambda) = sl_inputs(pair, patch, lambda, o.grid)?;
            let sl = sl_residual(&lambda, &patch, &setting, o.tol)?;
            let eq = equivalence_check(&lambda, &patch, &setting, o.tol)?;
            let pass = eq.sl_solution && eq.associative;
            Outcome::new(json!({"residual": sl, "equivalence": eq}), pass)?
        }
        Command::SymbolCheck { sweep, pair, patch, lambda } => {
            let (setting, patch, lambda) = sl_inputs(pair, patch, lambda, o.grid)?;
            let n = sweep.unwrap_or(o.samples);
            let s = symbol_sweep(&lambda, &patch, &setting, n, o.seed, o.tol)?;
            let pass = s.max_split_gap <= SPLIT_TOL && s.min_singular > o.tol;
            Outcome::new(s, pass)?
        }
        Command::VolumeCheck => volume(o)?,
        Command::SolveGraph { beta, boundary, max_iter, half_width, jitter, trace } => {
            solve_graph(beta, boundary, *max_iter, *half_width, *jitter, trace, o)?
        }
        Command::PaperExamples { negate_rho } => {
            let ex = paper_examples(*negate_rho);
            let pass = ex.iter().all(|e| e.pass);
            let failed: Vec<&str> = ex.iter().filter(|e| !e.pass).map(|e| e.name).collect();
            Outcome::new(json!({"examples": ex, "failed": failed}), pass)?
        }
    };
    out.warnings.extend(w);
    Ok(out)
}

/// The full JSON report: verb, resolved options and result.
pub fn report(cli: &Cli, o: &Resolved, out: &Outcome) -> Result<String> {
    let doc = json!({
        "verb": cli.command.verb(),
        "command": to_value(&cli.command)?,
        "options": to_value(o)?,
        "pass": out.pass,
        "warnings": out.warnings,
        "result": out.result,
    });
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Numeric(e.to_string()))
}

fn summary(verb: &str, out: &Outcome) -> String {
    let mut s = format!("{verb}: {}\n", if out.pass { "pass" } else { "FAIL" });
    for w in &out.warnings {
        s += &format!("warning: {w}\n");
    }
    if let Value::Object(m) = &out.result {
        for (k, v) in m {
            match v {
                Value::Bool(_) | Value::Number(_) | Value::String(_) => s += &format!("  {k} = {v}\n"),
                _ => {}
            }
        }
    }
    s
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

/// Parses arguments, runs the command and returns the exit code:
/// 0 all checks pass, 2 parse, 3 precondition, 4 numeric or failed check.
pub fn run(args: impl IntoIterator<Item = std::ffi::OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let fail = |e: Error| {
        if cli.json {
            emit(&format!("{}\n", json!({"error": e.to_string(), "exit_code": e.exit_code()})));
        }
        eprintln!("error: {e}");
        e.exit_code()
    };
    let o = match resolve(&cli) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    let out = match execute(&cli, &o) {
        Ok(out) => out,
        Err(e) => return fail(e),
    };
    let text = match report(&cli, &o, &out) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    if let Some(p) = &cli.out {
        if let Err(e) = std::fs::write(p, format!("{text}\n")) {
            return fail(Error::pre(format!("{}: {e}", p.display())));
        }
    }
    if cli.json {
        emit(&format!("{text}\n"));
    } else {
        emit(&summary(cli.command.verb(), &out));
    }
    if out.pass {
        0
    } else {
        4
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Example {
    pub name: &'static str,
    pub what: &'static str,
    pub computed: String,
    pub expected: String,
    pub pass: bool,
}

const RHO: &str = "dx135 + dx632 + dx254 + dx416";
const OMEGA: &str = "dx63 + dx25 + dx41";
const OMEGA_STD: &str = "dx12 + dx34 + dx56";
const K: f64 = 0.1;

fn p6(s: &str) -> Form {
    parse_form(s, 6, Labels::OneBased).expect("fixture").form
}

fn ex(name: &'static str, what: &'static str, computed: impl ToString, expected: impl ToString, pass: bool) -> Example {
    Example {
        name,
        what,
        computed: computed.to_string(),
        expected: expected.to_string(),
        pass,
    }
}

fn show(f: &Form) -> String {
    f.render(Labels::Auto)
}

fn axis7(i: usize) -> Vec<f64> {
    let mut v = vec![0.0; 7];
    v[i] = 1.0;
    v
}

/// The reference coordinate computations, each with computed vs expected.
pub fn paper_examples(negate_rho: bool) -> Vec<Example> {
    let mut out = Vec::new();
    let rho = if negate_rho { p6(RHO).scale(-1.0) } else { p6(RHO) };
    let omega = p6(OMEGA);
    let omega_std = p6(OMEGA_STD);

    out.push(ex(
        "rho_normalization",
        "unsorted ρ normalizes to Re(dz₁dz₂dz₃)",
        show(&rho),
        show(&stable6::model_rho()),
        rho == stable6::model_rho(),
    ));

    let c2 = stable6::classify_2form(&omega).map(|c| c.kind);
    let c3 = stable6::classify_3form(&rho).map(|c| c.kind);
    out.push(ex(
        "pair_forms_stable",
        "ω is stable and ρ is a positive 3-form",
        format!("{c2:?}, {c3:?}"),
        "Ok(Stable2), Ok(Positive3)",
        matches!((&c2, &c3), (Ok(Kind6::Stable2), Ok(Kind6::Positive3))),
    ));

    let expected = p6("dx63254 + dx25416 + dx41632");
    let wedge = omega.wedge(&rho).expect("degrees fit");
    out.push(ex(
        "omega_wedge_rho",
        "ω∧ρ ≠ 0, so (ρ, ω) is not SU(3)",
        show(&wedge),
        show(&expected),
        wedge == expected && !wedge.is_zero(),
    ));

    let su3 = stable6::check_su3(&rho, &omega, 1e-10).map(|r| r.su3);
    out.push(ex("pair_not_su3", "check_su3(ρ, ω) rejects the pair", format!("{su3:?}"), "Ok(false)", matches!(su3, Ok(false))));

    let phi = g2::lift_phi(&rho, &omega).expect("lift");
    let x1 = axis7(1);
    let top = (|| -> Result<f64> {
        let c = phi.interior(&x1)?;
        Ok(c.wedge(&c)?.wedge(&phi)?.top_coeff())
    })();
    out.push(ex(
        "lift_contraction_vanishes",
        "(∂x₁⌟φ)∧(∂x₁⌟φ)∧φ = 0 for φ = ρ + dt∧ω",
        format!("{top:?}"),
        "Ok(0.0)",
        matches!(top, Ok(v) if v == 0.0),
    ));

    let verdict = g2::metric_from_phi(&phi);
    let pair = g2::g2_pair_check(&rho, &omega, 1e-10).map(|r| r.g2_pair);
    let witness_ok = matches!(&verdict, Ok(MetricVerdict::Degenerate { witness, .. }) if *witness == x1);
    out.push(ex(
        "lift_degenerate",
        "φ = ρ + dt∧ω is not stable; ∂x₁ witnesses it",
        match &verdict {
            Ok(MetricVerdict::Degenerate { witness, .. }) => format!("degenerate, witness {witness:?}, pair {pair:?}"),
            v => format!("{v:?}"),
        },
        format!("degenerate, witness {x1:?}, pair Ok(false)"),
        witness_ok && matches!(pair, Ok(false)),
    ));

    let rho_k = rho.clone() + Form::term(6, &[0, 1, 2], K);
    let wedge = rho_k.wedge(&omega_std).expect("degrees fit");
    let expected = Form::term(6, &[0, 1, 2, 4, 5], K);
    out.push(ex(
        "perturbed_rho_wedge_omega",
        "(ρ + K dx₁₂₃)∧ω = K dx₁₂₃₅₆ for K = 0.1",
        show(&wedge),
        show(&expected),
        wedge == expected,
    ));

    let phi_k = g2::lift_phi(&rho_k, &omega_std).expect("lift");
    let off = G2Structure::from_phi(&phi_k).map(|s| s.metric.matrix()[(3, 0)]);
    let report = g2::g2_pair_check(&rho_k, &omega_std, 1e-10);
    let flags = report.as_ref().map(|r| (r.g2_pair, r.su3, r.product_metric));
    out.push(ex(
        "perturbed_lift_off_diagonal",
        "φ′ = ρ + K dx₁₂₃ + dt∧ω is G₂ with g(∂x₃, ∂t) ≠ 0: not a product, not SU(3)",
        format!("g30 = {off:?}, (pair, su3, product) = {flags:?}"),
        "g30 ≠ 0, (true, false, false)",
        matches!(off, Ok(v) if v.abs() > 1e-6) && matches!(flags, Ok((true, false, false))),
    ));

    let m0 = g2::metric_from_phi(&g2::phi0());
    let id_ok = match &m0 {
        Ok(MetricVerdict::Definite { metric, vol_coeff, orientation }) => {
            *orientation == 1
                && (vol_coeff - 1.0).abs() <= 1e-12
                && (0..7).all(|i| (0..7).all(|j| (metric[i][j] - if i == j { 1.0 } else { 0.0 }).abs() <= 1e-12))
        }
        _ => false,
    };
    out.push(ex("phi0_metric", "φ₀ induces the Euclidean metric", format!("identity: {id_ok}"), "identity: true", id_ok));

    let s0 = G2Structure::from_phi(&g2::phi0()).expect("φ₀ is G₂");
    let r = associative_residual(&Plane3::axes(0, 1, 2), &s0, 1e-12);
    let a = associator(Octonion::unit(1), Octonion::unit(2), Octonion::unit(3)).map(|o| o.norm());
    let ok = matches!(&r, Ok(r) if r.associative && r.residual_norm == 0.0) && matches!(a, Ok(n) if n == 0.0);
    out.push(ex(
        "imaginary_quaternions_associative",
        "span{i, j, k} is associative; [i, j, k] = 0",
        format!("residual {:?}, |[i,j,k]| {a:?}", r.map(|r| r.residual_norm)),
        "residual Ok(0.0), |[i,j,k]| Ok(0.0)",
        ok,
    ));

    let t = g2::taming_estimate(&g2::phi0(), &s0, 1000, 0).map(|t| t.min_ratio);
    out.push(ex(
        "phi0_tames_psi0",
        "φ₀ calibrates ψ₀-associative planes: min φ₀|V / vol V = 1",
        format!("{t:?}"),
        "Ok(1 ± 1e-9)",
        matches!(t, Ok(m) if (m - 1.0).abs() <= 1e-9),
    ));

    let cy = SlSetting::calabi_yau();
    let sweep = Patch::coordinate([3, 1, 5], 4, true)
        .and_then(|p| symbol_sweep(&MultiplierField::constant(&p, 0.0), &p, &cy, 200, 0, 1e-10));
    let gap = sweep.map(|s| s.max_split_gap);
    out.push(ex(
        "symbol_split",
        "the ℝ⁶ symbol equals the cylinder symbol σ_ψ(k∂t + n)",
        format!("{gap:?}"),
        format!("≤ {SPLIT_TOL:e}"),
        matches!(gap, Ok(g) if g <= SPLIT_TOL),
    ));
    out
}
