//! Artifact writing: JSON records, plot-ready CSVs, the run manifest, and
//! machine-readable error records.

use serde::Serialize;
use serde_json::Value;
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("missing artifacts: no plottable JSON records in {0}")]
    MissingArtifacts(String),
    #[error("empty-measure: artifact {0} holds no curve points")]
    EmptyMeasure(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed artifact {file}: {reason}")]
    Malformed { file: String, reason: String },
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> std::io::Result<()> {
    let mut f = fs::File::create(dir.join(name))?;
    let text = serde_json::to_string_pretty(value).expect("report types serialize");
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")
}

fn load_json(dir: &Path, name: &str) -> Result<Option<Value>, PlotError> {
    let path = dir.join(name);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| PlotError::Malformed { file: name.into(), reason: e.to_string() })
}

fn arr<'v>(v: &'v Value, key: &str, file: &str) -> Result<&'v Vec<Value>, PlotError> {
    v.get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| PlotError::Malformed { file: file.into(), reason: format!("missing {key}") })
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

/// Regenerate the plot CSVs from whatever result artifacts are present in
/// `dir`: tail curves with fitted bands, TV decay with floor, fluctuation
/// ratios, and the zeta survival curve. Errors if nothing plottable exists.
pub fn emit_plot_data(dir: &Path) -> Result<Vec<String>, PlotError> {
    let mut written = Vec::new();

    if let Some(v) = load_json(dir, "zeta_tail.json")? {
        let ts = arr(&v, "t_grid", "zeta_tail.json")?;
        let logs = arr(&v, "log_survival", "zeta_tail.json")?;
        let c = num(v.get("c_fit").unwrap_or(&Value::Null));
        let mut f = fs::File::create(dir.join("zeta_survival.csv"))?;
        writeln!(f, "t,log_survival,fit")?;
        // anchor the fitted line at the first grid point
        let (t0, l0) = (num(&ts[0]), num(&logs[0]));
        for (t, l) in ts.iter().zip(logs) {
            let fit = l0 - c * (num(t) - t0);
            writeln!(f, "{:.16e},{:.16e},{:.16e}", num(t), num(l), fit)?;
        }
        written.push("zeta_survival.csv".into());
    }

    if let Some(v) = load_json(dir, "tails.json")? {
        for (key, out) in [("velocity", "tail_velocity.csv"), ("gap", "tail_gap.csv")] {
            let Some(fit) = v.get(key) else { continue };
            let curve = arr(fit, "curve", "tails.json")?;
            if curve.is_empty() {
                return Err(PlotError::EmptyMeasure(format!("tails.json:{key}")));
            }
            let slope = num(fit.get("slope").unwrap_or(&Value::Null));
            let ci = arr(fit, "ci", "tails.json")?;
            let intercept = num(fit.get("intercept").unwrap_or(&Value::Null));
            let shift = fit
                .get("transform")
                .and_then(|t| t.get("QuadraticShifted"))
                .and_then(|t| t.get("shift"))
                .map(num)
                .unwrap_or(0.0);
            let quad = fit
                .get("transform")
                .map(|t| t.get("QuadraticShifted").is_some())
                .unwrap_or(false);
            let mut f = fs::File::create(dir.join(out))?;
            writeln!(f, "y,log_surv,fit,ci_lo,ci_hi")?;
            for pt in curve {
                let y = num(&pt[0]);
                let s = num(&pt[1]);
                let u = if quad { (y + shift) * (y + shift) } else { y };
                writeln!(
                    f,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    y,
                    s.ln(),
                    intercept + slope * u,
                    intercept + num(&ci[0]) * u,
                    intercept + num(&ci[1]) * u,
                )?;
            }
            written.push(out.into());
        }
    }

    if let Some(v) = load_json(dir, "ergodicity.json")? {
        let mut f = fs::File::create(dir.join("tv_decay.csv"))?;
        writeln!(f, "t,tv,floor")?;
        for fit_key in ["fit_a", "fit_b"] {
            let Some(fit) = v.get(fit_key) else { continue };
            let times = arr(fit, "times", "ergodicity.json")?;
            let tvs = arr(fit, "tv_values", "ergodicity.json")?;
            let floor = num(fit.get("noise_floor").unwrap_or(&Value::Null));
            for (t, tv) in times.iter().zip(tvs) {
                writeln!(f, "{:.16e},{:.16e},{:.16e}", num(t), num(tv), floor)?;
            }
        }
        written.push("tv_decay.csv".into());
    }

    if let Some(v) = load_json(dir, "fluctuations.json")? {
        let pts = arr(&v, "points", "fluctuations.json")?;
        let mut f = fs::File::create(dir.join("fluctuation_ratios.csv"))?;
        writeln!(f, "t,v_ratio,h_ratio,running_max_v,running_max_h")?;
        for p in pts {
            writeln!(
                f,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                num(p.get("t").unwrap_or(&Value::Null)),
                num(p.get("v_ratio").unwrap_or(&Value::Null)),
                num(p.get("h_ratio").unwrap_or(&Value::Null)),
                num(p.get("running_max_v").unwrap_or(&Value::Null)),
                num(p.get("running_max_h").unwrap_or(&Value::Null)),
            )?;
        }
        written.push("fluctuation_ratios.csv".into());
    }

    if let Some(v) = load_json(dir, "lln.json")? {
        let seeds = arr(&v, "per_seed", "lln.json")?;
        let mut f = fs::File::create(dir.join("lln_seeds.csv"))?;
        writeln!(f, "seed,s_over_t,x_over_t")?;
        for (i, p) in seeds.iter().enumerate() {
            writeln!(f, "{},{:.16e},{:.16e}", i, num(&p[0]), num(&p[1]))?;
        }
        written.push("lln_seeds.csv".into());
    }

    if let Some(v) = load_json(dir, "convergence.json")? {
        let pts = arr(&v, "errors", "convergence.json")?;
        let mut f = fs::File::create(dir.join("convergence.csv"))?;
        writeln!(f, "dt,mean_terminal_error")?;
        for p in pts {
            writeln!(f, "{:.16e},{:.16e}", num(&p[0]), num(&p[1]))?;
        }
        written.push("convergence.csv".into());
    }

    if written.is_empty() {
        return Err(PlotError::MissingArtifacts(dir.display().to_string()));
    }
    Ok(written)
}

/// Manifest with the config echo, package version, and wall time. Written
/// next to the results; the only artifact carrying timestamps.
pub fn write_manifest(
    dir: &Path,
    config_echo: &str,
    threads: usize,
    wall_seconds: f64,
) -> std::io::Result<()> {
    let mut f = fs::File::create(dir.join("manifest.txt"))?;
    writeln!(f, "# inertdrift run manifest")?;
    writeln!(f, "version = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(f, "threads = {threads}")?;
    writeln!(f, "wall_seconds = {wall_seconds:.3}")?;
    writeln!(
        f,
        "finished_unix = {}",
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    )?;
    writeln!(f)?;
    writeln!(f, "# config echo")?;
    write!(f, "{config_echo}")
}

#[derive(Serialize)]
pub struct ErrorRecord {
    pub code: u8,
    pub kind: String,
    pub message: String,
}

pub fn write_error(dir: &Path, record: &ErrorRecord) {
    if fs::create_dir_all(dir).is_ok() {
        let _ = write_json(dir, "error.json", record);
    }
}
