//! JSON-configured experiment runner behind the `weakvalue` binary.
//!
//! A run reads one [`ExperimentConfig`], validates every parameter the mode
//! needs, evaluates it, and writes either a JSON [`ResultDocument`] or, for
//! sweeps and sample traces, CSV. Files are written once through a temporary
//! file in the target directory and renamed into place.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, fit_power_law, projector_weak_values, sweep_metric, weak_limit_extrapolate, Engine,
    Extrapolation, Grid, Metric, PowerLawFit, Protocol, Scale, SweepParameter, SweepResult,
    SweepSpec,
};
use crate::classical::{self, fc_match_params, min_disturbance_for_value, ClassicalParams};
use crate::montecarlo::{self, CountTable, Estimate, GofResult, TrialRecord};
use crate::quantum::{self, MeasurementModel, Postselection, TwoLevelState};
use crate::{BoxIndex, Error, JointDistribution, Result};

pub const ENGINE_VERSION: &str = concat!("weakvalue ", env!("CARGO_PKG_VERSION"));

/// Header of sweep CSV files.
pub const SWEEP_CSV_HEADER: &str = "param,value,metric,stderr";
/// Header of trace CSV files.
pub const TRACE_CSV_HEADER: &str = "trial,signal,final_box";

/// Environment variable that overrides the worker count.
pub const WORKERS_ENV: &str = "WEAKVALUE_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Classical,
    Quantum,
    Sweep,
    Match,
    Witness,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Classical,
    FcMatched,
    Quantum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub protocol: ProtocolKind,
    pub metric: String,
    /// `g`, `lambda`, `theta` or `p1`.
    pub parameter: String,
    pub from: f64,
    pub to: f64,
    pub points: usize,
    #[serde(default = "default_scale")]
    pub scale: Scale,
}

fn default_scale() -> Scale {
    Scale::Linear
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleBlock {
    /// Required in `sample` mode; ignored by sweeps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolKind>,
    pub n: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

/// One experiment. Angles are radians, probabilities are decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q0: Option<f64>,
    /// Postselected box for classical runs (default 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_box: Option<u8>,
    /// Grid resolution of the classical disturbance search in `witness` mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputBlock>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn format(&self) -> Format {
        self.output.as_ref().and_then(|o| o.format).unwrap_or_default()
    }

    pub fn output_path(&self) -> Option<&Path> {
        self.output.as_ref().and_then(|o| o.path.as_deref())
    }

    fn need(&self, value: Option<f64>, field: &str) -> Result<f64> {
        value.ok_or_else(|| {
            Error::Config(format!("missing field `{field}` (required by mode {:?})", self.mode))
        })
    }

    fn classical_params(&self) -> Result<ClassicalParams> {
        ClassicalParams::new(
            self.need(self.p1, "p1")?,
            self.need(self.g, "g")?,
            self.need(self.q, "q")?,
            self.need(self.q0, "q0")?,
        )
    }

    fn initial_state(&self) -> Result<TwoLevelState> {
        TwoLevelState::from_p1(self.need(self.p1, "p1")?)
    }

    fn postselection(&self) -> Result<Postselection> {
        Postselection::new(self.need(self.theta, "theta")?)
    }

    fn final_box(&self) -> Result<BoxIndex> {
        match self.final_box {
            None => Ok(BoxIndex::Box2),
            Some(n) => BoxIndex::from_number(n)
                .ok_or_else(|| Error::invalid("final_box", format!("{n} is not 1 or 2"))),
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

impl ExperimentConfig {
    pub fn apply(mut self, o: &Overrides) -> Result<Self> {
        if let Some(seed) = o.seed {
            match self.sample.as_mut() {
                Some(s) => s.seed = seed,
                None => {
                    return Err(Error::Config("--seed given but the config has no `sample` block".into()))
                }
            }
        }
        if o.out.is_some() || o.format.is_some() {
            let out = self.output.get_or_insert_with(OutputBlock::default);
            if let Some(p) = &o.out {
                out.path = Some(p.clone());
            }
            if let Some(f) = o.format {
                out.format = Some(f);
            }
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl From<num_complex::Complex64> for Complex {
    fn from(c: num_complex::Complex64) -> Self {
        Self { re: c.re, im: c.im }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextualValuesOut {
    pub alpha_s: f64,
    pub alpha_sbar: f64,
}

/// `joint[x][b]`: rows `S`, `Sbar`; columns final box 1, 2 (quantum: `f⊥`, `f`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalReport {
    pub joint: [[f64; 2]; 2],
    pub contextual_values: ContextualValuesOut,
    pub unconditional_mean: f64,
    pub final_box: u8,
    pub postselection_probability: f64,
    pub conditional_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantumReport {
    pub expectation: f64,
    /// Real part of the weak value; the CLI prepares real amplitudes only.
    pub weak_value: f64,
    pub weak_value_imag: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finite_strength: Option<FiniteStrength>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteStrength {
    pub lambda: f64,
    pub joint: [[f64; 2]; 2],
    pub conditional_mean: f64,
    pub postselection_probability: f64,
    pub postselection_shift: f64,
    pub quantum_disturbance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchReport {
    pub p1: f64,
    pub g: f64,
    pub q: f64,
    pub q0: f64,
    pub target: f64,
    pub conditional_mean: f64,
    pub postselection_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessReport {
    pub weak_value: Complex,
    pub w1: Complex,
    pub w2: Complex,
    pub negative: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classical_cost: Option<ClassicalCost>,
}

/// Cheapest outcome-dependent switching that reproduces the weak value classically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalCost {
    pub g: f64,
    pub resolution: usize,
    /// `null` when no grid point reaches the target.
    pub min_disturbance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepReport {
    pub sweep: SweepResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_law: Option<PowerLawFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extrapolation: Option<Extrapolation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleReport {
    pub protocol: ProtocolKind,
    pub trace: bool,
    pub counts: CountTable,
    pub exact: [[f64; 2]; 2],
    /// `null` when no trial was postselected.
    pub estimate: Option<Estimate>,
    pub exact_conditional_mean: Option<f64>,
    /// `null` when the counts are too small for the chi-square test.
    pub gof: Option<GofResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "result", rename_all = "snake_case", deny_unknown_fields)]
pub enum Report {
    Classical(ClassicalReport),
    Quantum(QuantumReport),
    Sweep(SweepReport),
    Match(MatchReport),
    Witness(WitnessReport),
    Sample(SampleReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub engine: String,
    pub config: ExperimentConfig,
    pub seed: Option<u64>,
}

/// Top-level JSON result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultDocument {
    pub provenance: Provenance,
    pub report: Report,
}

/// Parse a JSON result file against the result schema.
pub fn validate_result_json(text: &str) -> Result<ResultDocument> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("result schema: {e}")))
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// File contents exactly as written.
    pub content: String,
    pub summary: String,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads for sweeps; `None` uses the global pool.
    pub workers: Option<usize>,
}

/// Evaluate a config and render its output without touching the filesystem.
pub fn render(config: &ExperimentConfig, options: RunOptions) -> Result<RunOutput> {
    match options.workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
            pool.install(|| render_inner(config))
        }
        None => render_inner(config),
    }
}

/// [`render`] and write the result to the configured path (or stdout).
pub fn run(config: &ExperimentConfig, options: RunOptions) -> Result<RunOutput> {
    let out = render(config, options)?;
    match &out.path {
        Some(path) => write_atomic(path, &out.content)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(out.content.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(out)
}

fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(content.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn render_inner(config: &ExperimentConfig) -> Result<RunOutput> {
    let format = config.format();
    let path = config.output_path().map(Path::to_path_buf);
    let trace = config.sample.as_ref().is_some_and(|s| s.trace);
    if format == Format::Csv && !(config.mode == Mode::Sweep || (config.mode == Mode::Sample && trace)) {
        return Err(Error::Config(
            "output.format csv is only available for sweeps and sample traces".into(),
        ));
    }

    let (report, csv, summary) = match config.mode {
        Mode::Classical => {
            let r = classical_report(config)?;
            let s = format!(
                "classical: conditional mean {:.6} on box {}, unconditional {:.6}",
                r.conditional_mean, r.final_box, r.unconditional_mean
            );
            (Report::Classical(r), None, s)
        }
        Mode::Quantum => {
            let r = quantum_report(config)?;
            let s = format!("quantum: weak value {:.6}", r.weak_value);
            (Report::Quantum(r), None, s)
        }
        Mode::Match => {
            let r = match_report(config)?;
            let s = format!(
                "match: q = {:.6}, q0 = {:.6}, conditional mean {:.6}",
                r.q, r.q0, r.conditional_mean
            );
            (Report::Match(r), None, s)
        }
        Mode::Witness => {
            let r = witness_report(config)?;
            let s = format!(
                "witness: w1 = {:.6}, w2 = {:.6}, negative = {}",
                r.w1.re, r.w2.re, r.negative
            );
            (Report::Witness(r), None, s)
        }
        Mode::Sweep => {
            let r = sweep_report(config)?;
            let csv = (format == Format::Csv).then(|| sweep_csv(&r.sweep));
            let s = format!(
                "sweep: {} over {} points of {}",
                r.sweep.metric,
                r.sweep.points.len(),
                r.sweep.parameter
            );
            (Report::Sweep(r), csv, s)
        }
        Mode::Sample => {
            let (r, trials) = sample_report(config)?;
            let csv = (format == Format::Csv).then(|| trace_csv(&trials));
            let s = match &r.estimate {
                Some(e) => format!(
                    "sample: {} trials, conditional mean {:.6} ± {:.6}",
                    r.counts.total, e.mean, e.stderr
                ),
                None => format!("sample: {} trials, none postselected", r.counts.total),
            };
            (Report::Sample(r), csv, s)
        }
    };

    let content = match csv {
        Some(csv) => csv,
        None => {
            // The echo leaves out the output path so a result does not depend
            // on where it is written.
            let mut echo = config.clone();
            if let Some(out) = echo.output.as_mut() {
                out.path = None;
            }
            if echo.output.as_ref().is_some_and(|o| o.format.is_none()) {
                echo.output = None;
            }
            let doc = ResultDocument {
                provenance: Provenance {
                    engine: ENGINE_VERSION.into(),
                    config: echo,
                    seed: config.sample.as_ref().map(|s| s.seed),
                },
                report,
            };
            let mut text = serde_json::to_string_pretty(&doc)
                .map_err(|e| Error::Config(format!("serialising result: {e}")))?;
            text.push('\n');
            text
        }
    };
    Ok(RunOutput { content, summary, path })
}

fn cv_out(cv: &crate::contextual::ContextualValues) -> ContextualValuesOut {
    ContextualValuesOut { alpha_s: cv.alpha_s, alpha_sbar: cv.alpha_sbar }
}

fn classical_report(config: &ExperimentConfig) -> Result<ClassicalReport> {
    let params = config.classical_params()?;
    let final_box = config.final_box()?;
    let dist = classical::joint_distribution(&params)?;
    let cv = params.contextual_values()?;
    Ok(ClassicalReport {
        joint: dist.p,
        contextual_values: cv_out(&cv),
        unconditional_mean: classical::unconditional_mean(&dist, &cv)?,
        final_box: final_box.number(),
        postselection_probability: dist.final_marginal(final_box),
        conditional_mean: classical::conditional_mean(&dist, &cv, final_box)?,
    })
}

fn quantum_report(config: &ExperimentConfig) -> Result<QuantumReport> {
    let i = config.initial_state()?;
    let f = config.postselection()?;
    let model = config.lambda.map(MeasurementModel::new).transpose()?;
    let wv = quantum::weak_value(&i, &f)?;
    let finite_strength = match model {
        Some(m) => {
            let cv = m.contextual_values()?;
            let protocol = Protocol::Quantum { initial: i, post: f };
            Some(FiniteStrength {
                lambda: m.lambda(),
                joint: quantum::joint_outcome_probs(&i, &m, &f)?.p,
                conditional_mean: quantum::conditional_mean_quantum(&i, &m, &f, &cv)?,
                postselection_probability: quantum::postselection_probability(&i, &m, &f)?,
                postselection_shift: analysis::postselection_shift(&protocol, m.lambda())?,
                quantum_disturbance: quantum::quantum_disturbance(&i, &m)?,
            })
        }
        None => None,
    };
    Ok(QuantumReport {
        expectation: quantum::expectation(&i)?,
        weak_value: wv.re,
        weak_value_imag: wv.im,
        finite_strength,
    })
}

fn match_report(config: &ExperimentConfig) -> Result<MatchReport> {
    let theta = config.need(config.theta, "theta")?;
    let g = config.need(config.g, "g")?;
    let params = fc_match_params(theta, g)?;
    Ok(MatchReport {
        p1: params.p1,
        g: params.g,
        q: params.q,
        q0: params.q0,
        target: 1.0 / theta.cos(),
        conditional_mean: classical::conditional_mean_box2(&params)?,
        postselection_shift: analysis::postselection_shift(&Protocol::Classical(params), g)?,
    })
}

fn witness_report(config: &ExperimentConfig) -> Result<WitnessReport> {
    let i = config.initial_state()?;
    let f = config.postselection()?;
    let resolution = config.resolution.unwrap_or(51);
    if config.resolution.is_some() && config.g.is_none() {
        return Err(Error::Config("`resolution` needs `g` in witness mode".into()));
    }
    if resolution < 2 {
        return Err(Error::invalid("resolution", "must be at least 2"));
    }
    let w = projector_weak_values(&i, &f)?;
    let classical_cost = match config.g {
        Some(g) => {
            let target = w.observable().re;
            Some(ClassicalCost {
                g,
                resolution,
                min_disturbance: min_disturbance_for_value(target, g, resolution)?.value(),
            })
        }
        None => None,
    };
    Ok(WitnessReport {
        weak_value: w.observable().into(),
        w1: w.w1.into(),
        w2: w.w2.into(),
        negative: w.negative,
        classical_cost,
    })
}

fn sweep_spec(config: &ExperimentConfig) -> Result<SweepSpec> {
    let block = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("missing field `sweep` (required by mode Sweep)".into()))?;
    let metric: Metric = block.metric.parse().map_err(|e: Error| match e {
        Error::UnknownMetric(m) => Error::Config(format!("sweep.metric: unknown metric `{m}`")),
        other => other,
    })?;
    let parameter = match (block.parameter.as_str(), block.protocol) {
        ("lambda", ProtocolKind::Quantum) => SweepParameter::Strength,
        ("g", ProtocolKind::Classical | ProtocolKind::FcMatched) => SweepParameter::Strength,
        ("theta", ProtocolKind::Quantum | ProtocolKind::FcMatched) => SweepParameter::Theta,
        ("p1", ProtocolKind::Quantum | ProtocolKind::Classical) => SweepParameter::P1,
        (other, kind) => {
            return Err(Error::Config(format!(
                "sweep.parameter: `{other}` cannot be swept for protocol {kind:?}"
            )))
        }
    };
    let varies = |name: &str| block.parameter == name;
    // Placeholders stand in for the swept parameter; each grid point replaces them.
    let pick = |value: Option<f64>, field: &str, placeholder: f64| -> Result<f64> {
        if varies(field) {
            Ok(value.unwrap_or(placeholder))
        } else {
            config.need(value, field)
        }
    };
    let (protocol, strength) = match block.protocol {
        ProtocolKind::Classical => {
            let params = ClassicalParams::new(
                pick(config.p1, "p1", 0.5)?,
                pick(config.g, "g", 1.0)?,
                config.need(config.q, "q")?,
                config.need(config.q0, "q0")?,
            )?;
            (Protocol::Classical(params), params.g)
        }
        ProtocolKind::FcMatched => {
            let theta = pick(config.theta, "theta", 0.0)?;
            (Protocol::FcMatched { theta }, pick(config.g, "g", 0.0)?)
        }
        ProtocolKind::Quantum => {
            let initial = TwoLevelState::from_p1(pick(config.p1, "p1", 0.5)?)?;
            let post = Postselection::new(pick(config.theta, "theta", 0.0)?)?;
            (Protocol::Quantum { initial, post }, pick(config.lambda, "lambda", 0.0)?)
        }
    };
    let grid = Grid { from: block.from, to: block.to, points: block.points, scale: block.scale }
        .values()?;
    let engine = match &config.sample {
        Some(s) => Engine::MonteCarlo { n: s.n, seed: s.seed },
        None => Engine::Exact,
    };
    Ok(SweepSpec { protocol, metric, parameter, grid, strength, engine })
}

fn sweep_report(config: &ExperimentConfig) -> Result<SweepReport> {
    let spec = sweep_spec(config)?;
    let sweep = sweep_metric(&spec)?;
    let power_law = fit_power_law(&sweep).ok();
    let extrapolation = (spec.parameter == SweepParameter::Strength
        && spec.metric == Metric::ConditionalMean
        && spec.engine == Engine::Exact)
        .then(|| {
            let mut descending = sweep.clone();
            descending.points.sort_by(|a, b| b.param.total_cmp(&a.param));
            weak_limit_extrapolate(&descending).ok()
        })
        .flatten();
    Ok(SweepReport { sweep, power_law, extrapolation })
}

fn sample_report(config: &ExperimentConfig) -> Result<(SampleReport, Vec<TrialRecord>)> {
    let block = config
        .sample
        .as_ref()
        .ok_or_else(|| Error::Config("missing field `sample` (required by mode Sample)".into()))?;
    let kind = block
        .protocol
        .ok_or_else(|| Error::Config("missing field `sample.protocol`".into()))?;
    let mut trials = Vec::new();
    let keep = block.trace && config.format() == Format::Csv;
    let (counts, exact, cv): (CountTable, JointDistribution, _) = match kind {
        ProtocolKind::Classical => {
            let params = config.classical_params()?;
            let exact = classical::joint_distribution(&params)?;
            let counts = if block.trace {
                montecarlo::trace_classical(&params, block.n, block.seed, |t| {
                    if keep {
                        trials.push(t)
                    }
                })?
            } else {
                montecarlo::sample_classical(&params, block.n, block.seed)?
            };
            (counts, exact, params.contextual_values()?)
        }
        ProtocolKind::Quantum => {
            let i = config.initial_state()?;
            let f = config.postselection()?;
            let m = MeasurementModel::new(config.need(config.lambda, "lambda")?)?;
            let exact = quantum::joint_outcome_probs(&i, &m, &f)?;
            let counts = if block.trace {
                montecarlo::trace_quantum(&i, &m, &f, block.n, block.seed, |t| {
                    if keep {
                        trials.push(t)
                    }
                })?
            } else {
                montecarlo::sample_quantum(&i, &m, &f, block.n, block.seed)?
            };
            (counts, exact, m.contextual_values()?)
        }
        ProtocolKind::FcMatched => {
            return Err(Error::Config("sample.protocol must be classical or quantum".into()))
        }
    };
    let final_box = config.final_box()?;
    let estimate = montecarlo::estimate_conditional_mean(&counts, &cv, final_box).ok();
    let exact_conditional_mean = classical::conditional_mean(&exact, &cv, final_box).ok();
    let gof = montecarlo::gof_test(&counts, &exact).ok();
    Ok((
        SampleReport {
            protocol: kind,
            trace: block.trace,
            counts,
            exact: exact.p,
            estimate,
            exact_conditional_mean,
            gof,
        },
        trials,
    ))
}

/// Full-precision float for CSV: 17 significant digits.
pub fn csv_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sweep_csv(sweep: &SweepResult) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for p in &sweep.points {
        let stderr = p.stderr.map(csv_float).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", csv_float(p.param), csv_float(p.value), sweep.metric, stderr);
    }
    out
}

pub fn trace_csv(trials: &[TrialRecord]) -> String {
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    for (k, t) in trials.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", k, t.signal.tag(), t.final_box.number());
    }
    out
}

/// Process exit code for an error: 2 for configuration and validation
/// problems, 3 for domain errors raised by the engines, 1 for I/O.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => 1,
        e if e.is_domain() => 3,
        _ => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cfg(json: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(json).unwrap()
    }

    #[test]
    fn rejects_unknown_fields() {
        assert!(ExperimentConfig::from_json(r#"{"mode":"quantum","p_1":0.5}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"mode":"teleport"}"#).is_err());
    }

    #[test]
    fn missing_field_is_named() {
        let err = render(&cfg(r#"{"mode":"quantum","p1":0.75}"#), RunOptions::default()).unwrap_err();
        assert!(err.to_string().contains("theta"));
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn out_of_domain_is_validation_error() {
        let err = render(&cfg(r#"{"mode":"classical","p1":0.5,"g":0.2,"q":1.5,"q0":0}"#), RunOptions::default())
            .unwrap_err();
        assert!(err.to_string().contains("`q`"));
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn zero_postselection_is_domain_error() {
        let err = render(&cfg(r#"{"mode":"classical","p1":1.0,"g":0.2,"q":0,"q0":0}"#), RunOptions::default())
            .unwrap_err();
        assert_eq!(exit_code(&err), 3);
    }

    #[test]
    fn csv_only_for_sweeps_and_traces() {
        let c = cfg(&format!(
            r#"{{"mode":"quantum","p1":0.75,"theta":{},"output":{{"format":"csv"}}}}"#,
            PI / 3.0
        ));
        assert_eq!(exit_code(&render(&c, RunOptions::default()).unwrap_err()), 2);
    }

    #[test]
    fn seed_override_needs_sample_block() {
        let c = cfg(r#"{"mode":"quantum","p1":0.75,"theta":1.0}"#);
        assert!(c.apply(&Overrides { seed: Some(3), ..Default::default() }).is_err());
    }

    #[test]
    fn csv_float_has_seventeen_digits() {
        assert_eq!(csv_float(2.0), "2.0000000000000000e0");
        let v = 0.1f64 + 0.2;
        assert_eq!(csv_float(v).parse::<f64>().unwrap(), v);
    }
}
