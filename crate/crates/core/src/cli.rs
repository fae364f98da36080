//! Experiment harness behind the `sparsefix` binary: kernel regression,
//! kernel classification and image deblurring, each solved with the l0 model
//! or an l1 baseline.
//!
//! A run writes three artifacts into the output directory:
//!
//! * `trace.csv` with header `k,F,du_norm,gradH_norm,nnz,inner_iters`;
//! * `result.json` with metrics, iteration count, wall time and the resolved
//!   configuration;
//! * for deblurring, `restored.pgm` and `corrupted.pgm`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data_io::{self, LabeledDataset};
use crate::fidelity::Fidelity;
use crate::linops::{
    dct_framelet_operator, first_difference_operator, gaussian_kernel, gaussian_kernel_matrix,
    motion_blur_operator, operator_norm, Identity, Image, LinearOp,
};
use crate::solver_l0::{self, ErrorSequence, L0Config, L0Problem, L0State, SolveStatus};
use crate::solver_l1::{self, L1Config, L1GeneralConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regress,
    Classify,
    Deblur,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    #[default]
    L0,
    L1Identity,
    L1Tf,
    L1Tv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorSeqKind {
    InverseSquare,
    InversePower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    #[default]
    Gaussian,
    Poisson,
}

/// Sparsifying transform for deblurring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Framelet,
    Difference,
}

/// Flat JSON experiment description. Unset solver parameters are filled
/// with per-task defaults by [`ExperimentConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Option<Task>,
    pub model: Model,

    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha: f64,
    pub rho_prime: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub p1: Option<f64>,
    pub q1: Option<f64>,
    pub p2: Option<f64>,
    pub q2: Option<f64>,
    pub error_seq: Option<ErrorSeqKind>,
    pub error_m: Option<f64>,
    pub error_power: f64,
    pub tol: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_inner: usize,

    /// libsvm training file (or the whole set when `train_count` splits it).
    pub data: Option<PathBuf>,
    /// Separate libsvm test file.
    pub test_data: Option<PathBuf>,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    /// Digit pair for IDX classification; the first maps to +1.
    pub digits: Option<[u8; 2]>,
    pub train_count: Option<usize>,
    /// Caps the number of test rows after the split.
    pub test_count: Option<usize>,
    pub kernel_sigma: Option<f64>,

    /// PGM input for deblurring; a synthetic image is used when absent.
    pub image: Option<PathBuf>,
    pub image_size: usize,
    pub blur_length: usize,
    pub blur_angle: f64,
    pub noise: Noise,
    pub noise_sigma: f64,
    pub peak: f64,
    pub transform: Option<Transform>,
    pub framelet_block: usize,

    pub seed: u64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: None,
            model: Model::L0,
            lambda: None,
            gamma: None,
            alpha: 0.99,
            rho_prime: None,
            p: None,
            q: None,
            p1: None,
            q1: None,
            p2: None,
            q2: None,
            error_seq: None,
            error_m: None,
            error_power: 1.01,
            tol: None,
            max_outer: None,
            max_inner: 100_000,
            data: None,
            test_data: None,
            idx_images: None,
            idx_labels: None,
            digits: None,
            train_count: None,
            test_count: None,
            kernel_sigma: None,
            image: None,
            image_size: 64,
            blur_length: 9,
            blur_angle: 45.0,
            noise: Noise::Gaussian,
            noise_sigma: 3.0,
            peak: 255.0,
            transform: None,
            framelet_block: 7,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub p: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

fn set_default<T>(slot: &mut Option<T>, value: T) {
    if slot.is_none() {
        *slot = Some(value);
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn apply_overrides(&mut self, o: &Overrides) {
        if let Some(x) = o.lambda {
            self.lambda = Some(x);
        }
        if let Some(x) = o.gamma {
            self.gamma = Some(x);
        }
        if let Some(x) = o.alpha {
            self.alpha = x;
        }
        if let Some(x) = o.p {
            self.p = Some(x);
        }
        if let Some(x) = o.seed {
            self.seed = x;
        }
        if let Some(x) = &o.out {
            self.out = x.clone();
        }
    }

    /// Fixes the task and fills unset parameters with that task's defaults.
    pub fn resolve(&mut self, task: Task) -> Result<()> {
        if let Some(t) = self.task {
            if t != task {
                return Err(Error::invalid(format!("config task {t:?} conflicts with subcommand {task:?}")));
            }
        }
        self.task = Some(task);
        match task {
            Task::Regress => {
                set_default(&mut self.lambda, 1e-5);
                set_default(&mut self.gamma, 6e-6);
                set_default(&mut self.p, 1.0);
                set_default(&mut self.kernel_sigma, 10f64.sqrt());
                set_default(&mut self.tol, 1e-6);
                set_default(&mut self.max_outer, 100_000);
                set_default(&mut self.error_seq, ErrorSeqKind::InverseSquare);
                set_default(&mut self.error_m, 1e16);
            }
            Task::Classify => {
                set_default(&mut self.lambda, 1e-3);
                set_default(&mut self.gamma, 5e-4);
                set_default(&mut self.p, 1.0);
                set_default(&mut self.kernel_sigma, 4.0);
                set_default(&mut self.tol, 1e-4);
                set_default(&mut self.max_outer, 50_000);
                set_default(&mut self.error_seq, ErrorSeqKind::InverseSquare);
                set_default(&mut self.error_m, 1e16);
            }
            Task::Deblur => {
                set_default(&mut self.p, 0.1);
                set_default(&mut self.p1, 0.1);
                set_default(&mut self.p2, 0.1);
                set_default(&mut self.tol, 1e-5);
                set_default(&mut self.max_outer, 2000);
                set_default(
                    &mut self.transform,
                    match self.model {
                        Model::L1Tv => Transform::Difference,
                        _ => Transform::Framelet,
                    },
                );
                match self.noise {
                    Noise::Gaussian => {
                        set_default(&mut self.lambda, 1.0);
                        set_default(&mut self.gamma, 2.0);
                        set_default(&mut self.error_seq, ErrorSeqKind::InverseSquare);
                        set_default(&mut self.error_m, 1e6);
                    }
                    Noise::Poisson => {
                        set_default(&mut self.lambda, 0.05);
                        set_default(&mut self.gamma, 2.0);
                        set_default(&mut self.error_seq, ErrorSeqKind::InversePower);
                        set_default(&mut self.error_m, 1e8);
                    }
                }
            }
        }
        set_default(&mut self.p1, 1.0);
        set_default(&mut self.p2, 1.0);
        self.check()
    }

    fn check(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("p", self.p),
            ("q", self.q),
            ("p1", self.p1),
            ("q1", self.q1),
            ("p2", self.p2),
            ("q2", self.q2),
            ("tol", self.tol),
            ("error_m", self.error_m),
            ("kernel_sigma", self.kernel_sigma),
        ];
        for (name, val) in positive {
            if let Some(x) = val {
                if !(x > 0.0) {
                    return Err(Error::invalid(format!("{name} must be positive, got {x}")));
                }
            }
        }
        if !(self.alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.max_outer == Some(0) || self.max_inner == 0 {
            return Err(Error::invalid("iteration caps must be positive"));
        }
        if !(self.noise_sigma >= 0.0) || !(self.peak > 0.0) {
            return Err(Error::invalid("noise_sigma must be nonnegative and peak positive"));
        }
        Ok(())
    }

    /// Soft warnings for settings outside the ranges used in practice.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.alpha >= 1.0 {
            w.push(format!("alpha = {} >= 1: descent is not guaranteed", self.alpha));
        }
        if let (Some(l), Some(g)) = (self.lambda, self.gamma) {
            if g > 100.0 * l || l > 1e4 * g {
                w.push(format!("unusual lambda/gamma ratio {}", l / g));
            }
        }
        w
    }

    fn error_sequence(&self) -> ErrorSequence {
        let m = self.error_m.unwrap_or(1e16);
        match self.error_seq.unwrap_or(ErrorSeqKind::InverseSquare) {
            ErrorSeqKind::InverseSquare => ErrorSequence::InverseSquare { m },
            ErrorSeqKind::InversePower => ErrorSequence::InversePower { m, power: self.error_power },
        }
    }

    fn req(&self, v: Option<f64>, name: &str) -> Result<f64> {
        v.ok_or_else(|| Error::invalid(format!("{name} is unset; call resolve first")))
    }
}

/// `sum_j v_j K(x_j, x)` with the Gaussian kernel.
pub fn kernel_expansion(v: &[f64], train_points: &[Vec<f64>], sigma: f64, x: &[f64]) -> Result<f64> {
    Error::check_dim(train_points.len(), v.len())?;
    let mut s = 0.0;
    for (vj, xj) in v.iter().zip(train_points) {
        Error::check_dim(xj.len(), x.len())?;
        if *vj != 0.0 {
            s += vj * gaussian_kernel(xj, x, sigma);
        }
    }
    Ok(s)
}

pub fn predict_regression(v: &[f64], train_points: &[Vec<f64>], sigma: f64, x: &[f64]) -> Result<f64> {
    kernel_expansion(v, train_points, sigma, x)
}

/// Sign of the kernel expansion, with `sign(0) = +1`.
pub fn predict_classification(v: &[f64], train_points: &[Vec<f64>], sigma: f64, x: &[f64]) -> Result<f64> {
    Ok(if kernel_expansion(v, train_points, sigma, x)? >= 0.0 { 1.0 } else { -1.0 })
}

/// Final status and metrics of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub status: SolveStatus,
    pub iterations: usize,
    pub metrics: Value,
    pub out_dir: PathBuf,
}

impl ExperimentOutcome {
    /// 0 on convergence, 2 when the outer iteration cap was reached.
    pub fn exit_code(&self) -> i32 {
        match self.status {
            SolveStatus::Converged => 0,
            SolveStatus::MaxIterations => 2,
        }
    }
}

/// One row of `trace.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub f: f64,
    pub du_norm: f64,
    pub grad_norm: f64,
    pub nnz: usize,
    pub inner_iters: usize,
}

pub const TRACE_HEADER: &str = "k,F,du_norm,gradH_norm,nnz,inner_iters";

pub fn format_trace(rows: &[TraceRow]) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in rows {
        let _ =
            writeln!(s, "{},{:e},{:e},{:e},{},{}", r.k, r.f, r.du_norm, r.grad_norm, r.nnz, r.inner_iters);
    }
    s
}

/// Parses a trace written by [`format_trace`].
pub fn parse_trace(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == TRACE_HEADER => {}
        _ => return Err(Error::Format("trace header missing".into())),
    }
    lines
        .map(|(i, line)| {
            let perr = |m: &str| Error::Parse { line: i + 1, msg: m.to_string() };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(perr("expected 6 fields"));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| perr("bad integer"));
            let real = |s: &str| s.parse::<f64>().map_err(|_| perr("bad real"));
            Ok(TraceRow {
                k: int(f[0])?,
                f: real(f[1])?,
                du_norm: real(f[2])?,
                grad_norm: real(f[3])?,
                nnz: int(f[4])?,
                inner_iters: int(f[5])?,
            })
        })
        .collect()
}

fn json_real(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x > 0.0 {
        json!("inf")
    } else if x < 0.0 {
        json!("-inf")
    } else {
        json!("nan")
    }
}

struct SolveOutput {
    status: SolveStatus,
    coefficients: Vec<f64>,
    image_var: Vec<f64>,
    rows: Vec<TraceRow>,
    final_objective: f64,
    warnings: Vec<String>,
}

fn l0_rows(trace: &[solver_l0::IterationRecord]) -> Vec<TraceRow> {
    trace
        .iter()
        .map(|r| TraceRow {
            k: r.k,
            f: r.f_value,
            du_norm: r.u_step_norm,
            grad_norm: r.grad_h_norm,
            nnz: r.nnz,
            inner_iters: r.inner_iters,
        })
        .collect()
}

fn l1_rows(trace: &[solver_l1::L1Record]) -> Vec<TraceRow> {
    trace
        .iter()
        .map(|r| TraceRow {
            k: r.k,
            f: r.objective,
            du_norm: r.dv_norm,
            grad_norm: r.grad_norm,
            nnz: r.nnz,
            inner_iters: r.inner_iters,
        })
        .collect()
}

fn solve_model(
    cfg: &ExperimentConfig,
    b: &dyn LinearOp,
    d: &dyn LinearOp,
    fidelity: &Fidelity,
    v0: Vec<f64>,
) -> Result<SolveOutput> {
    let lambda = cfg.req(cfg.lambda, "lambda")?;
    let tol = cfg.req(cfg.tol, "tol")?;
    let max_outer = cfg.max_outer.unwrap_or(100_000);
    match cfg.model {
        Model::L0 => {
            let gamma = cfg.req(cfg.gamma, "gamma")?;
            let problem = L0Problem::new(b, d, fidelity, lambda, gamma)?;
            let p = cfg.req(cfg.p, "p")?;
            let mut l0 = L0Config::for_problem(&problem, cfg.alpha, p);
            if let Some(q) = cfg.q {
                l0.q = q;
            }
            if let Some(r) = cfg.rho_prime {
                l0.rho_prime = r;
            }
            l0.error_seq = cfg.error_sequence();
            l0.outer_tol = tol;
            l0.max_outer = max_outer;
            l0.max_inner = cfg.max_inner;
            let sol = solver_l0::solve_l0(&problem, &l0, L0State::from_v(&problem, v0))?;
            Ok(SolveOutput {
                status: sol.status,
                rows: l0_rows(&sol.trace),
                final_objective: sol.final_objective(),
                warnings: sol.warnings,
                coefficients: sol.state.u,
                image_var: sol.state.v,
            })
        }
        Model::L1Identity => {
            let p = cfg.req(cfg.p, "p")?;
            let q = match cfg.q {
                Some(q) => q,
                None => L0Config::default_q(operator_norm(b), p),
            };
            let l1 = L1Config { lambda, p, q, tol, max_outer };
            let sol = solver_l1::solve_l1_identity(b, fidelity, &l1, v0)?;
            Ok(SolveOutput {
                status: sol.status,
                rows: l1_rows(&sol.trace),
                final_objective: sol.final_objective().unwrap_or(f64::NAN),
                warnings: Vec::new(),
                image_var: sol.v.clone(),
                coefficients: sol.v,
            })
        }
        Model::L1Tf | Model::L1Tv => {
            let p1 = cfg.req(cfg.p1, "p1")?;
            let p2 = cfg.req(cfg.p2, "p2")?;
            let q1 = cfg.q1.unwrap_or_else(|| L0Config::default_q(operator_norm(d), p1));
            let q2 = cfg.q2.unwrap_or_else(|| L0Config::default_q(operator_norm(b), p2));
            let l1 = L1GeneralConfig {
                lambda,
                p1,
                q1,
                p2,
                q2,
                error_seq: cfg.error_sequence(),
                tol,
                max_outer,
                max_inner: cfg.max_inner,
            };
            let sol = solver_l1::solve_l1_general(b, d, fidelity, &l1, v0)?;
            let coefficients = d.apply(&sol.v);
            Ok(SolveOutput {
                status: sol.status,
                rows: l1_rows(&sol.trace),
                final_objective: sol.final_objective().unwrap_or(f64::NAN),
                warnings: Vec::new(),
                image_var: sol.v,
                coefficients,
            })
        }
    }
}

struct Split {
    train: LabeledDataset,
    test: LabeledDataset,
}

fn load_labeled(cfg: &ExperimentConfig, task: Task) -> Result<Split> {
    let full = match (&cfg.data, &cfg.idx_images, &cfg.idx_labels) {
        (Some(path), None, None) => {
            let ds = data_io::read_libsvm(path)?;
            if task == Task::Classify {
                let labels = ds.labels().iter().map(|&y| if y > 0.0 { 1.0 } else { -1.0 }).collect();
                LabeledDataset::new(ds.features().to_vec(), labels)?
            } else {
                ds
            }
        }
        (None, Some(img), Some(lab)) => {
            let idx = data_io::read_idx(img, lab)?;
            match (task, cfg.digits) {
                (Task::Classify, Some([a, b])) => {
                    let (a, b) = (f64::from(a), f64::from(b));
                    let pair = idx.dataset.filter_labels(|y| y == a || y == b);
                    let labels = pair.labels().iter().map(|&y| if y == a { 1.0 } else { -1.0 }).collect();
                    LabeledDataset::new(pair.features().to_vec(), labels)?
                }
                (Task::Classify, None) => {
                    return Err(Error::invalid("IDX classification needs a `digits` pair"));
                }
                _ => idx.dataset,
            }
        }
        _ => return Err(Error::invalid("give either `data` or both `idx_images` and `idx_labels`")),
    };
    if full.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    let mut split = if let Some(test_path) = &cfg.test_data {
        let mut test = data_io::read_libsvm(test_path)?;
        if task == Task::Classify {
            let labels = test.labels().iter().map(|&y| if y > 0.0 { 1.0 } else { -1.0 }).collect();
            test = LabeledDataset::new(test.features().to_vec(), labels)?;
        }
        Split { train: full, test }
    } else if let Some(n) = cfg.train_count {
        let (train, test) = full.split(n, cfg.seed)?;
        Split { train, test }
    } else {
        Split { test: LabeledDataset::new(Vec::new(), Vec::new())?, train: full }
    };
    if let Some(limit) = cfg.test_count {
        let keep: Vec<usize> = (0..split.test.len().min(limit)).collect();
        split.test = split.test.subset(&keep);
    }
    // files may disagree on the largest index seen
    let d = split.train.dim().max(split.test.dim());
    let pad = |ds: &LabeledDataset| -> Result<LabeledDataset> {
        let f = ds
            .features()
            .iter()
            .map(|x| {
                let mut x = x.clone();
                x.resize(d, 0.0);
                x
            })
            .collect();
        LabeledDataset::new(f, ds.labels().to_vec())
    };
    Ok(Split { train: pad(&split.train)?, test: pad(&split.test)? })
}

/// Runs one experiment and writes its artifacts. `cfg` must have been
/// through [`ExperimentConfig::resolve`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let task = cfg.task.ok_or_else(|| Error::invalid("task is unset"))?;
    let started = Instant::now();
    let (out, mut metrics) = match task {
        Task::Regress | Task::Classify => run_kernel_task(cfg, task)?,
        Task::Deblur => run_deblur(cfg)?,
    };
    let wall_ms = started.elapsed().as_millis() as u64;

    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("trace.csv"), format_trace(&out.rows))?;
    let mut warnings = cfg.warnings();
    warnings.extend(out.warnings.iter().cloned());
    metrics["final_objective"] = json_real(out.final_objective);
    let result = json!({
        "task": task,
        "model": cfg.model,
        "status": out.status,
        "iterations": out.rows.len(),
        "metrics": metrics,
        "warnings": warnings,
        "wall_ms": wall_ms,
        "config": cfg,
    });
    let text = serde_json::to_string_pretty(&result).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(cfg.out.join("result.json"), text + "\n")?;
    Ok(ExperimentOutcome {
        status: out.status,
        iterations: out.rows.len(),
        metrics: result["metrics"].clone(),
        out_dir: cfg.out.clone(),
    })
}

fn run_kernel_task(cfg: &ExperimentConfig, task: Task) -> Result<(SolveOutput, Value)> {
    if matches!(cfg.model, Model::L1Tf | Model::L1Tv) {
        return Err(Error::invalid("kernel tasks support the l0 and l1-identity models"));
    }
    let sigma = cfg.req(cfg.kernel_sigma, "kernel_sigma")?;
    let split = load_labeled(cfg, task)?;
    let points = split.train.features();
    let n = points.len();
    let k = gaussian_kernel_matrix(points, sigma)?;
    let (b, fidelity) = match task {
        Task::Regress => (k, Fidelity::squared_loss(split.train.labels().to_vec())?),
        _ => (k.scale_rows(split.train.labels())?, Fidelity::squared_hinge(n)),
    };
    let d = Identity(n);
    let out = solve_model(cfg, &b, &d, &fidelity, vec![0.0; n])?;

    let coef = &out.coefficients;
    let predict = |ds: &LabeledDataset| -> Result<Vec<f64>> {
        ds.features()
            .iter()
            .map(|x| match task {
                Task::Regress => predict_regression(coef, points, sigma, x),
                _ => predict_classification(coef, points, sigma, x),
            })
            .collect()
    };
    let score = |pred: &[f64], truth: &[f64]| match task {
        Task::Regress => data_io::mse(pred, truth),
        _ => data_io::accuracy(pred, truth),
    };
    let name = if task == Task::Regress { "mse" } else { "accuracy" };
    let mut metrics = json!({
        "nnz": data_io::nnz(coef),
        "train_size": n,
        "test_size": split.test.len(),
    });
    metrics[format!("train_{name}")] = json_real(score(&predict(&split.train)?, split.train.labels())?);
    if !split.test.is_empty() {
        metrics[format!("test_{name}")] = json_real(score(&predict(&split.test)?, split.test.labels())?);
    }
    if task == Task::Regress && cfg.model == Model::L0 {
        // fit of the smooth variable, for comparison with the sparse one
        let fit = b.apply(&out.image_var);
        metrics["train_mse_v"] = json_real(data_io::mse(&fit, split.train.labels())?);
    }
    Ok((out, metrics))
}

fn run_deblur(cfg: &ExperimentConfig) -> Result<(SolveOutput, Value)> {
    if cfg.model == Model::L1Identity {
        return Err(Error::invalid("deblurring supports the l0, l1-tf and l1-tv models"));
    }
    let clean = match &cfg.image {
        Some(path) => data_io::read_pgm(path)?,
        None => data_io::synthetic_piecewise_image(cfg.image_size, cfg.image_size)?,
    };
    let (w, h) = (clean.width(), clean.height());
    let blur = motion_blur_operator(cfg.blur_length, cfg.blur_angle, w, h)?;
    let (clean, observed, fidelity) = match cfg.noise {
        Noise::Gaussian => {
            let observed = data_io::add_gaussian_noise(&blur.blur_image(&clean)?, cfg.noise_sigma, cfg.seed)?;
            let f = Fidelity::squared_loss(observed.pixels().to_vec())?;
            (clean, observed, f)
        }
        Noise::Poisson => {
            let scaled = data_io::scale_to_peak(&clean, cfg.peak)?;
            let observed = data_io::sample_poisson(&blur.blur_image(&scaled)?, cfg.seed)?;
            let f = Fidelity::poisson_kl(observed.pixels().to_vec())?;
            (scaled, observed, f)
        }
    };
    let d: Box<dyn LinearOp> = match cfg.transform.unwrap_or(Transform::Framelet) {
        Transform::Framelet => Box::new(dct_framelet_operator(w, h, cfg.framelet_block)?),
        Transform::Difference => Box::new(first_difference_operator(w, h)?),
    };
    let out = solve_model(cfg, &blur, d.as_ref(), &fidelity, observed.pixels().to_vec())?;
    let restored = Image::new(w, h, out.image_var.clone())?;

    fs::create_dir_all(&cfg.out)?;
    data_io::write_pgm(&restored, cfg.out.join("restored.pgm"))?;
    data_io::write_pgm(&observed, cfg.out.join("corrupted.pgm"))?;
    let metrics = json!({
        "psnr": json_real(data_io::psnr(&clean, &restored)?),
        "psnr_corrupted": json_real(data_io::psnr(&clean, &observed)?),
        "nnz": data_io::nnz(&out.coefficients),
        "pixels": w * h,
    });
    Ok((out, metrics))
}
