use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stpca::dp::DpVariant;
use stpca::eval::grid::{self, ClusterMetrics, GridReport, Method, MethodSpec};
use stpca::eval::metrics::{poc, potc};
use stpca::io;
use stpca::score::{ScoreMap, Scenario};
use stpca::synth::{self, ArraySignalSpec, ErrorPattern, LabeledTensorDataset, OrbitSpec};
use stpca::tensor;

use crate::config::{required, EvaluateConfig, GenerateConfig, GridConfig, SelectConfig};
use crate::error::{invalid, CliError, CliResult};
use crate::pgm;

pub fn build_id() -> String {
    format!("stpca {} ({})", env!("CARGO_PKG_VERSION"), env!("STPCA_GIT_DESCRIBE"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| invalid(e.to_string()))?;
    bytes.push(b'\n');
    io::write_atomic(path, &bytes)?;
    Ok(())
}

fn load_dataset(path: &Path) -> CliResult<LabeledTensorDataset> {
    if !path.exists() {
        return Err(CliError::Io(format!("{}: no such file", path.display())));
    }
    io::load_dataset(path).map_err(|e| match e {
        stpca::StpcaError::Io(m) => CliError::Io(format!("{}: {}", path.display(), m)),
        e => invalid(format!("{}: {}", path.display(), e)),
    })
}

fn resolved_h(h: Option<usize>, ds: &LabeledTensorDataset) -> CliResult<usize> {
    let h = match h {
        Some(h) => h,
        None if !ds.true_features.is_empty() => ds.true_features.len(),
        None => return Err(invalid("h is required when the dataset has no ground-truth features")),
    };
    if h < 1 || h > ds.feature_count() {
        return Err(invalid(format!("h = {} outside 1..={}", h, ds.feature_count())));
    }
    Ok(h)
}

/// Cross-applied variants are allowed; the combinations outside a variant's
/// intended scope are reported.
pub fn scope_warnings(method: Method, ds: &LabeledTensorDataset) -> Vec<String> {
    let mut w = Vec::new();
    if method == Method::Dp(DpVariant::OneSd) && ds.scenario == Scenario::TubeWise && !ds.tensor.is_real() {
        w.push("dp-1sd on complex tube-wise data: the single direction set ignores the sample geometry".into());
    }
    if matches!(method, Method::Dp(DpVariant::TwoSd)) && ds.tensor.order() != 3 {
        w.push(format!("dp-2sd expects order-3 data, got order {}", ds.tensor.order()));
    }
    for m in &w {
        log::warn!("{}", m);
    }
    w
}

// generate

pub enum GenerateKind {
    Orbit,
    Array,
}

#[derive(Default)]
pub struct GenerateFlags {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub samples: Option<usize>,
    pub series_len: Option<usize>,
    pub noise_sigma: Option<f64>,
    pub no_normalize: bool,
    pub case: Option<u8>,
    pub pattern: Option<ErrorPattern>,
    pub units: Option<usize>,
    pub snr_db: Option<f64>,
    pub noiseless: bool,
}

pub fn generate(kind: GenerateKind, mut cfg: GenerateConfig, f: GenerateFlags) -> CliResult<()> {
    if f.out.is_some() {
        cfg.out = f.out.clone();
    }
    let out = required(&cfg.out, "out")?;
    let (ds, spec, seed) = match kind {
        GenerateKind::Orbit => {
            let mut s = cfg.orbit.clone().unwrap_or_default();
            if let Some(v) = f.n {
                s.n = v;
            }
            if let Some(v) = f.seed {
                s.seed = v;
            }
            if let Some(v) = f.samples {
                s.samples = v;
            }
            if let Some(v) = f.series_len {
                s.series_len = v;
            }
            if let Some(v) = f.noise_sigma {
                s.noise_sigma = v;
            }
            if f.no_normalize {
                s.normalize = false;
            }
            let ds = synth::gen_orbit(&s)?;
            let seed = s.seed;
            (ds, serde_json::to_value(OrbitJson { orbit: s }).expect("serializable"), seed)
        }
        GenerateKind::Array => {
            let mut s = cfg.array.clone().unwrap_or_default();
            let case = f.case.unwrap_or(s.case);
            if case != s.case || f.pattern.is_some_and(|p| p != s.error_pattern) {
                let seed = s.seed;
                s = match case {
                    1 => ArraySignalSpec::case1(seed),
                    2 => ArraySignalSpec::case2(f.pattern.unwrap_or(ErrorPattern::Random), seed),
                    c => return Err(invalid(format!("unknown case {}", c))),
                };
            }
            if let Some(v) = f.units {
                s.error_units = v;
            }
            if let Some(v) = f.seed {
                s.seed = v;
            }
            if let Some(v) = f.samples {
                s.samples = v;
            }
            if let Some(v) = f.snr_db {
                s.snr_db = Some(v);
            }
            if f.noiseless {
                s.snr_db = None;
            }
            let ds = synth::gen_array_signal(&s)?;
            let seed = s.seed;
            (ds, serde_json::to_value(ArrayJson { array: s }).expect("serializable"), seed)
        }
    };
    io::save_dataset(&out, &ds, spec, Some(seed))?;
    println!(
        "wrote {} ({:?}, {} samples, {} classes) and {}",
        out.display(),
        ds.tensor.shape(),
        ds.samples(),
        ds.classes(),
        io::sidecar_path(&out).display()
    );
    Ok(())
}

#[derive(Serialize)]
struct OrbitJson {
    orbit: OrbitSpec,
}

#[derive(Serialize)]
struct ArrayJson {
    array: ArraySignalSpec,
}

// select

#[derive(Serialize)]
struct SelectionFile<'a> {
    build: String,
    config: &'a SelectConfig,
    method: String,
    variant: String,
    scenario: Scenario,
    score_shape: Vec<usize>,
    h: usize,
    features: Vec<usize>,
    warnings: Vec<String>,
}

pub fn scores_csv(map: &ScoreMap) -> String {
    let ranks = map.ranks();
    let mut s = String::from("feature_index,score,rank\n");
    for (j, (score, rank)) in map.scores().iter().zip(ranks).enumerate() {
        writeln!(s, "{},{:e},{}", j, score, rank + 1).expect("write to string");
    }
    s
}

pub fn select(cfg: SelectConfig) -> CliResult<()> {
    let data = required(&cfg.data, "data")?;
    let method = required(&cfg.method, "method")?;
    let out_dir = required(&cfg.out_dir, "out_dir")?;
    if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite() && cfg.eta >= 0.0 && cfg.eta.is_finite()) {
        return Err(invalid("lambda and eta must be finite and nonnegative"));
    }
    let ds = load_dataset(&data)?;
    let h = resolved_h(cfg.h, &ds)?;
    let warnings = scope_warnings(method, &ds);
    let x = tensor::centralize(&ds.tensor, ds.tensor.order())?;
    let spec = MethodSpec { method, options: cfg.options.clone(), transform: cfg.transform };
    let map = spec.select(&x, ds.scenario, cfg.lambda, cfg.eta, cfg.seed)?;
    let features = map.top(h);

    fs::create_dir_all(&out_dir).map_err(|e| CliError::Io(format!("{}: {}", out_dir.display(), e)))?;
    io::write_atomic(&out_dir.join("scores.csv"), scores_csv(&map).as_bytes())?;
    let file = SelectionFile {
        build: build_id(),
        config: &cfg,
        method: method.to_string(),
        variant: method.variant().to_string(),
        scenario: ds.scenario,
        score_shape: map.shape().to_vec(),
        h,
        features: features.clone(),
        warnings,
    };
    write_json(&out_dir.join("selection.json"), &file)?;
    if ds.scenario == Scenario::TubeWise {
        io::write_atomic(&out_dir.join("scoremap.pgm"), &pgm::encode(&map))?;
    }
    println!("{} selected {:?}", method, features);
    if !ds.true_features.is_empty() {
        let sel = [features];
        println!("POC {:.4} POTC {:.4}", poc(&sel, &ds.true_features, h), potc(&sel, &ds.true_features));
    }
    println!("wrote {}", out_dir.display());
    Ok(())
}

// grid

#[derive(Serialize, Deserialize)]
pub struct GridReportFile {
    pub build: String,
    pub config: serde_json::Value,
    pub report: GridReport,
}

pub fn grid(mut cfg: GridConfig) -> CliResult<()> {
    let data = required(&cfg.data, "data")?;
    let method = required(&cfg.method, "method")?;
    let out = required(&cfg.out, "out")?;
    // Validate the grid shape before loading anything.
    cfg.grid(cfg.h.unwrap_or(1)).validate()?;
    let ds = load_dataset(&data)?;
    let h = resolved_h(cfg.h, &ds)?;
    cfg.h = Some(h);
    let spec = cfg.grid(h);
    cfg.lambda_grid = Some(spec.lambda_grid.clone());
    cfg.eta_grid = Some(spec.eta_grid.clone());
    scope_warnings(method, &ds);
    let ms = MethodSpec { method, options: cfg.options.clone(), transform: cfg.transform };
    let report = grid::grid_run(&ds, &ms, &spec, &cfg.protocol, cfg.seed)?;
    if report.failed == report.cells.len() {
        return Err(CliError::Numerical(format!(
            "every grid cell failed; first error: {}",
            report.cells.first().and_then(|c| c.error.clone()).unwrap_or_default()
        )));
    }
    print!("{}", report_table(std::slice::from_ref(&report)));
    let file = GridReportFile {
        build: build_id(),
        config: serde_json::to_value(&cfg).expect("serializable"),
        report,
    };
    write_json(&out, &file)?;
    println!("wrote {}", out.display());
    Ok(())
}

// evaluate

#[derive(Deserialize)]
struct SelectionInput {
    features: Vec<usize>,
}

#[derive(Serialize)]
struct EvaluationFile<'a> {
    build: String,
    config: &'a EvaluateConfig,
    features: Vec<usize>,
    poc: Option<f64>,
    potc: Option<f64>,
    clustering: Option<ClusterMetrics>,
}

pub fn read_selection(path: &Path) -> CliResult<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {}", path.display(), e)))?;
    let sel: SelectionInput = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {}", path.display(), e)))?;
    Ok(sel.features)
}

pub fn evaluate(cfg: EvaluateConfig) -> CliResult<()> {
    let data = required(&cfg.data, "data")?;
    let sel_path = required(&cfg.selection, "selection")?;
    let features = read_selection(&sel_path)?;
    let ds = load_dataset(&data)?;
    if features.is_empty() {
        return Err(invalid("selection is empty"));
    }
    if let Some(&j) = features.iter().find(|&&j| j >= ds.feature_count()) {
        return Err(invalid(format!("feature {} outside {} features", j, ds.feature_count())));
    }
    let truth = &ds.true_features;
    let sel = [features.clone()];
    let (p, t) = if truth.is_empty() {
        (None, None)
    } else {
        (Some(poc(&sel, truth, features.len())), Some(potc(&sel, truth)))
    };
    let clustering = if cfg.protocol.enabled { Some(grid::evaluate_selection(&ds, &features, &cfg.protocol)?) } else { None };
    if let (Some(p), Some(t)) = (p, t) {
        println!("POC {:.4} POTC {:.4}", p, t);
    }
    if let Some(m) = &clustering {
        println!("ACC {:.4} ± {:.4}  NMI {:.4} ± {:.4}", m.acc_mean, m.acc_std, m.nmi_mean, m.nmi_std);
    }
    if let Some(out) = &cfg.out {
        let file = EvaluationFile { build: build_id(), config: &cfg, features, poc: p, potc: t, clustering };
        write_json(out, &file)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

// report

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
}

fn opt(v: Option<f64>, scale: f64) -> String {
    v.map(|x| format!("{:.2}", x * scale)).unwrap_or_else(|| "-".into())
}

pub fn report_table(reports: &[GridReport]) -> String {
    let mut s = format!(
        "{:<8} {:<5} {:>3} {:>4} {:>8} {:>8} {:>15} {:>15} {:>6} {:>9}\n",
        "method", "var", "h", "g", "POC%", "POTC%", "ACC%", "NMI%", "failed", "time_s"
    );
    for r in reports {
        let (acc, nmi) = match &r.best_acc {
            Some(m) => (
                format!("{:.2}±{:.2}", 100.0 * m.acc_mean, 100.0 * m.acc_std),
                format!("{:.2}±{:.2}", 100.0 * m.nmi_mean, 100.0 * m.nmi_std),
            ),
            None => ("-".into(), "-".into()),
        };
        writeln!(
            s,
            "{:<8} {:<5} {:>3} {:>4} {:>8} {:>8} {:>15} {:>15} {:>6} {:>9.2}",
            r.method,
            r.variant,
            r.h,
            r.g,
            opt(r.poc, 100.0),
            opt(r.potc, 100.0),
            acc,
            nmi,
            r.failed,
            r.wall_time_s
        )
        .expect("write to string");
    }
    s
}

pub fn report_csv(reports: &[GridReport]) -> String {
    let mut s = String::from("method,variant,h,g,poc,potc,acc_mean,acc_std,nmi_mean,nmi_std,failed,wall_time_s\n");
    let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in reports {
        let m = r.best_acc;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.variant,
            r.h,
            r.g,
            f(r.poc),
            f(r.potc),
            f(m.map(|m| m.acc_mean)),
            f(m.map(|m| m.acc_std)),
            f(m.map(|m| m.nmi_mean)),
            f(m.map(|m| m.nmi_std)),
            r.failed,
            r.wall_time_s
        )
        .expect("write to string");
    }
    s
}

pub fn report(inputs: &[PathBuf], format: ReportFormat, out: Option<&Path>) -> CliResult<()> {
    if inputs.is_empty() {
        return Err(invalid("no report files given"));
    }
    let mut reports = Vec::new();
    for p in inputs {
        let text = fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {}", p.display(), e)))?;
        let f: GridReportFile = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {}", p.display(), e)))?;
        reports.push(f.report);
    }
    let text = match format {
        ReportFormat::Text => report_table(&reports),
        ReportFormat::Csv => report_csv(&reports),
    };
    match out {
        Some(path) => {
            io::write_atomic(path, text.as_bytes())?;
            println!("wrote {}", path.display());
        }
        None => print!("{}", text),
    }
    Ok(())
}
