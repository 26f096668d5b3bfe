//! Strict flat key-value experiment configuration with sections per module.
//! Unknown sections or keys are rejected; parse -> emit -> parse round trips
//! losslessly (floats are printed in shortest round-trip form).

use inertdrift_core::model::ModelParams;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {0}: {1}")]
    Syntax(usize, String),
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("unknown key '{key}' in section [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("missing key '{key}' in section [{section}]")]
    MissingKey { section: &'static str, key: &'static str },
    #[error("missing section [{0}]")]
    MissingSection(&'static str),
    #[error("invalid value for {key}: {value} ({reason})")]
    BadValue { key: String, value: String, reason: String },
    #[error("command '{command}' does not match argument section [{section}]")]
    CommandSectionMismatch { command: String, section: String },
    #[error("invalid model: {0}")]
    Model(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Cycles,
    Stationary,
    Tails,
    Fluctuations,
    Lln,
    Ergodicity,
    Bounds,
    Oracle,
    Convergence,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Cycles => "cycles",
            Command::Stationary => "stationary",
            Command::Tails => "tails",
            Command::Fluctuations => "fluctuations",
            Command::Lln => "lln",
            Command::Ergodicity => "ergodicity",
            Command::Bounds => "bounds",
            Command::Oracle => "oracle",
            Command::Convergence => "convergence",
        }
    }

    pub fn parse(s: &str) -> Option<Command> {
        Some(match s {
            "simulate" => Command::Simulate,
            "cycles" => Command::Cycles,
            "stationary" => Command::Stationary,
            "tails" => Command::Tails,
            "fluctuations" => Command::Fluctuations,
            "lln" => Command::Lln,
            "ergodicity" => Command::Ergodicity,
            "bounds" => Command::Bounds,
            "oracle" => Command::Oracle,
            "convergence" => Command::Convergence,
            _ => return None,
        })
    }
}

/// Command-specific arguments, one variant per subcommand.
#[derive(Debug, Clone, PartialEq)]
pub enum CommandArgs {
    Simulate { h0: f64, v0: f64, horizon: f64 },
    Cycles { n_cycles: u64, t_cap: f64 },
    Stationary { n_cycles: u64, t_cap: f64, nh: u64, nv: u64, pilot_cycles: u64 },
    Tails {
        n_cycles: u64,
        t_cap: f64,
        v_window: (f64, f64),
        h_window: (f64, f64),
    },
    Fluctuations { horizon: f64, n_checkpoints: u64 },
    Lln { horizon: f64, n_seeds: u64 },
    Ergodicity {
        pi_cycles: u64,
        n_chains: u64,
        t_max: f64,
        n_times: u64,
        init_h: f64,
        init_v: f64,
    },
    Bounds { n_trials: u64 },
    Oracle { n_samples: u64, spacing: f64, burn_in: f64, negative_control: bool },
    Convergence { n_seeds: u64, horizon: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub out_dir: String,
    pub params: ModelParams,
    pub dt: f64,
    pub max_steps: u64,
    pub record_stride: u64,
    pub seed: u64,
    /// Number of independent noise streams (affects results deterministically).
    pub workers: u64,
    pub args: CommandArgs,
}

type Sections = Vec<(String, Vec<(String, String)>)>;

fn parse_sections(text: &str) -> Result<Sections, ConfigError> {
    let mut sections: Sections = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax(idx + 1, format!("unclosed section: {raw}")))?;
            if sections.iter().any(|(n, _)| n == name) {
                return Err(ConfigError::Syntax(idx + 1, format!("duplicate section [{name}]")));
            }
            sections.push((name.trim().to_string(), Vec::new()));
        } else if let Some((k, v)) = line.split_once('=') {
            let section = sections
                .last_mut()
                .ok_or_else(|| ConfigError::Syntax(idx + 1, "key before any section".into()))?;
            let key = k.trim().to_string();
            if section.1.iter().any(|(existing, _)| *existing == key) {
                return Err(ConfigError::Syntax(idx + 1, format!("duplicate key '{key}'")));
            }
            section.1.push((key, v.trim().to_string()));
        } else {
            return Err(ConfigError::Syntax(idx + 1, format!("expected key = value: {raw}")));
        }
    }
    Ok(sections)
}

struct SectionReader {
    name: String,
    entries: BTreeMap<String, (String, bool)>,
}

impl SectionReader {
    fn new(name: String, pairs: Vec<(String, String)>) -> Self {
        let entries = pairs.into_iter().map(|(k, v)| (k, (v, false))).collect();
        Self { name, entries }
    }

    fn take(&mut self, key: &'static str) -> Option<String> {
        self.entries.get_mut(key).map(|(v, used)| {
            *used = true;
            v.clone()
        })
    }

    fn required(&mut self, key: &'static str) -> Result<String, ConfigError> {
        self.take(key).ok_or(ConfigError::MissingKey {
            section: Box::leak(self.name.clone().into_boxed_str()),
            key,
        })
    }

    fn finish(self) -> Result<(), ConfigError> {
        for (key, (_, used)) in self.entries {
            if !used {
                return Err(ConfigError::UnknownKey { section: self.name, key });
            }
        }
        Ok(())
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    v.parse().map_err(|e| ConfigError::BadValue {
        key: key.into(),
        value: v.into(),
        reason: format!("{e}"),
    })
}

fn parse_u64(key: &str, v: &str) -> Result<u64, ConfigError> {
    v.parse().map_err(|e| ConfigError::BadValue {
        key: key.into(),
        value: v.into(),
        reason: format!("{e}"),
    })
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.into(),
            value: v.into(),
            reason: "expected true or false".into(),
        }),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let sections = parse_sections(text)?;
        let known = ["run", "model", "step", "seeds"];
        let mut run = None;
        let mut model = None;
        let mut step = None;
        let mut seeds = None;
        let mut command_section: Option<SectionReader> = None;
        for (name, pairs) in sections {
            let reader = SectionReader::new(name.clone(), pairs);
            match name.as_str() {
                "run" => run = Some(reader),
                "model" => model = Some(reader),
                "step" => step = Some(reader),
                "seeds" => seeds = Some(reader),
                other => {
                    if Command::parse(other).is_some() {
                        if command_section.is_some() {
                            return Err(ConfigError::Syntax(
                                0,
                                "multiple command argument sections".into(),
                            ));
                        }
                        command_section = Some(reader);
                    } else {
                        debug_assert!(!known.contains(&other));
                        return Err(ConfigError::UnknownSection(name));
                    }
                }
            }
        }

        let mut run = run.ok_or(ConfigError::MissingSection("run"))?;
        let command_str = run.required("command")?;
        let command = Command::parse(&command_str).ok_or_else(|| ConfigError::BadValue {
            key: "command".into(),
            value: command_str.clone(),
            reason: "unknown command".into(),
        })?;
        let out_dir = run.required("out_dir")?;
        run.finish()?;

        let mut model = model.ok_or(ConfigError::MissingSection("model"))?;
        let gamma = parse_f64("gamma", &model.required("gamma")?)?;
        let g = parse_f64("g", &model.required("g")?)?;
        let gamma_zero = match model.take("gamma_zero") {
            Some(v) => parse_bool("gamma_zero", &v)?,
            None => false,
        };
        model.finish()?;
        let params = if gamma_zero {
            if gamma != 0.0 {
                return Err(ConfigError::Model(format!(
                    "gamma_zero mode requires gamma = 0, got {gamma}"
                )));
            }
            ModelParams::gamma_zero(g).map_err(|e| ConfigError::Model(e.to_string()))?
        } else {
            ModelParams::new(gamma, g).map_err(|e| ConfigError::Model(e.to_string()))?
        };

        let mut step = step.ok_or(ConfigError::MissingSection("step"))?;
        let dt = parse_f64("dt", &step.required("dt")?)?;
        let max_steps = match step.take("max_steps") {
            Some(v) => parse_u64("max_steps", &v)?,
            None => u64::MAX,
        };
        let record_stride = match step.take("record_stride") {
            Some(v) => parse_u64("record_stride", &v)?,
            None => 1,
        };
        step.finish()?;
        if !(dt > 0.0) || record_stride == 0 || max_steps == 0 {
            return Err(ConfigError::BadValue {
                key: "dt/max_steps/record_stride".into(),
                value: format!("{dt}/{max_steps}/{record_stride}"),
                reason: "must be positive".into(),
            });
        }

        let mut seeds = seeds.ok_or(ConfigError::MissingSection("seeds"))?;
        let seed = parse_u64("seed", &seeds.required("seed")?)?;
        let workers = match seeds.take("workers") {
            Some(v) => parse_u64("workers", &v)?,
            None => 2,
        };
        seeds.finish()?;
        if workers == 0 {
            return Err(ConfigError::BadValue {
                key: "workers".into(),
                value: "0".into(),
                reason: "need at least one worker lane".into(),
            });
        }

        let mut sec = command_section
            .ok_or(ConfigError::MissingSection("<command arguments>"))?;
        if sec.name != command.name() {
            return Err(ConfigError::CommandSectionMismatch {
                command: command.name().into(),
                section: sec.name,
            });
        }
        let args = Self::parse_args(command, &mut sec)?;
        sec.finish()?;

        // command-level validation that involves the model
        if matches!(
            command,
            Command::Cycles
                | Command::Stationary
                | Command::Tails
                | Command::Ergodicity
                | Command::Bounds
        ) && params.is_gamma_zero()
        {
            return Err(ConfigError::Model(format!(
                "command '{}' requires gamma > 0 (renewal constants involve g/gamma)",
                command.name()
            )));
        }
        if command == Command::Oracle && !params.is_gamma_zero() {
            if let CommandArgs::Oracle { negative_control: false, .. } = args {
                return Err(ConfigError::Model(
                    "oracle requires gamma_zero mode unless negative_control = true".into(),
                ));
            }
        }

        Ok(Self { command, out_dir, params, dt, max_steps, record_stride, seed, workers, args })
    }

    fn parse_args(command: Command, sec: &mut SectionReader) -> Result<CommandArgs, ConfigError> {
        Ok(match command {
            Command::Simulate => CommandArgs::Simulate {
                h0: parse_f64("h0", &sec.required("h0")?)?,
                v0: parse_f64("v0", &sec.required("v0")?)?,
                horizon: parse_f64("horizon", &sec.required("horizon")?)?,
            },
            Command::Cycles => CommandArgs::Cycles {
                n_cycles: parse_u64("n_cycles", &sec.required("n_cycles")?)?,
                t_cap: match sec.take("t_cap") {
                    Some(v) => parse_f64("t_cap", &v)?,
                    None => 1e3,
                },
            },
            Command::Stationary => CommandArgs::Stationary {
                n_cycles: parse_u64("n_cycles", &sec.required("n_cycles")?)?,
                t_cap: match sec.take("t_cap") {
                    Some(v) => parse_f64("t_cap", &v)?,
                    None => 1e3,
                },
                nh: match sec.take("nh") {
                    Some(v) => parse_u64("nh", &v)?,
                    None => 200,
                },
                nv: match sec.take("nv") {
                    Some(v) => parse_u64("nv", &v)?,
                    None => 200,
                },
                pilot_cycles: match sec.take("pilot_cycles") {
                    Some(v) => parse_u64("pilot_cycles", &v)?,
                    None => 2000,
                },
            },
            Command::Tails => CommandArgs::Tails {
                n_cycles: parse_u64("n_cycles", &sec.required("n_cycles")?)?,
                t_cap: match sec.take("t_cap") {
                    Some(v) => parse_f64("t_cap", &v)?,
                    None => 1e3,
                },
                v_window: (
                    match sec.take("v_window_lo") {
                        Some(v) => parse_f64("v_window_lo", &v)?,
                        None => 1e-3,
                    },
                    match sec.take("v_window_hi") {
                        Some(v) => parse_f64("v_window_hi", &v)?,
                        None => 3e-2,
                    },
                ),
                h_window: (
                    match sec.take("h_window_lo") {
                        Some(v) => parse_f64("h_window_lo", &v)?,
                        None => 3e-3,
                    },
                    match sec.take("h_window_hi") {
                        Some(v) => parse_f64("h_window_hi", &v)?,
                        None => 5e-2,
                    },
                ),
            },
            Command::Fluctuations => CommandArgs::Fluctuations {
                horizon: parse_f64("horizon", &sec.required("horizon")?)?,
                n_checkpoints: match sec.take("n_checkpoints") {
                    Some(v) => parse_u64("n_checkpoints", &v)?,
                    None => 40,
                },
            },
            Command::Lln => CommandArgs::Lln {
                horizon: parse_f64("horizon", &sec.required("horizon")?)?,
                n_seeds: parse_u64("n_seeds", &sec.required("n_seeds")?)?,
            },
            Command::Ergodicity => CommandArgs::Ergodicity {
                pi_cycles: parse_u64("pi_cycles", &sec.required("pi_cycles")?)?,
                n_chains: parse_u64("n_chains", &sec.required("n_chains")?)?,
                t_max: match sec.take("t_max") {
                    Some(v) => parse_f64("t_max", &v)?,
                    None => 12.0,
                },
                n_times: match sec.take("n_times") {
                    Some(v) => parse_u64("n_times", &v)?,
                    None => 12,
                },
                init_h: parse_f64("init_h", &sec.required("init_h")?)?,
                init_v: parse_f64("init_v", &sec.required("init_v")?)?,
            },
            Command::Bounds => CommandArgs::Bounds {
                n_trials: parse_u64("n_trials", &sec.required("n_trials")?)?,
            },
            Command::Oracle => CommandArgs::Oracle {
                n_samples: parse_u64("n_samples", &sec.required("n_samples")?)?,
                spacing: match sec.take("spacing") {
                    Some(v) => parse_f64("spacing", &v)?,
                    None => 5.0,
                },
                burn_in: match sec.take("burn_in") {
                    Some(v) => parse_f64("burn_in", &v)?,
                    None => 20.0,
                },
                negative_control: match sec.take("negative_control") {
                    Some(v) => parse_bool("negative_control", &v)?,
                    None => false,
                },
            },
            Command::Convergence => CommandArgs::Convergence {
                n_seeds: match sec.take("n_seeds") {
                    Some(v) => parse_u64("n_seeds", &v)?,
                    None => 400,
                },
                horizon: match sec.take("horizon") {
                    Some(v) => parse_f64("horizon", &v)?,
                    None => 1.0,
                },
            },
        })
    }

    /// Canonical text form; `parse(to_text())` reproduces the config exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "command = {}", self.command.name());
        let _ = writeln!(s, "out_dir = {}", self.out_dir);
        let _ = writeln!(s, "[model]");
        let _ = writeln!(s, "gamma = {:?}", self.params.gamma());
        let _ = writeln!(s, "g = {:?}", self.params.g());
        let _ = writeln!(s, "gamma_zero = {}", self.params.is_gamma_zero());
        let _ = writeln!(s, "[step]");
        let _ = writeln!(s, "dt = {:?}", self.dt);
        let _ = writeln!(s, "max_steps = {}", self.max_steps);
        let _ = writeln!(s, "record_stride = {}", self.record_stride);
        let _ = writeln!(s, "[seeds]");
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "[{}]", self.command.name());
        match &self.args {
            CommandArgs::Simulate { h0, v0, horizon } => {
                let _ = writeln!(s, "h0 = {h0:?}");
                let _ = writeln!(s, "v0 = {v0:?}");
                let _ = writeln!(s, "horizon = {horizon:?}");
            }
            CommandArgs::Cycles { n_cycles, t_cap } => {
                let _ = writeln!(s, "n_cycles = {n_cycles}");
                let _ = writeln!(s, "t_cap = {t_cap:?}");
            }
            CommandArgs::Stationary { n_cycles, t_cap, nh, nv, pilot_cycles } => {
                let _ = writeln!(s, "n_cycles = {n_cycles}");
                let _ = writeln!(s, "t_cap = {t_cap:?}");
                let _ = writeln!(s, "nh = {nh}");
                let _ = writeln!(s, "nv = {nv}");
                let _ = writeln!(s, "pilot_cycles = {pilot_cycles}");
            }
            CommandArgs::Tails { n_cycles, t_cap, v_window, h_window } => {
                let _ = writeln!(s, "n_cycles = {n_cycles}");
                let _ = writeln!(s, "t_cap = {t_cap:?}");
                let _ = writeln!(s, "v_window_lo = {:?}", v_window.0);
                let _ = writeln!(s, "v_window_hi = {:?}", v_window.1);
                let _ = writeln!(s, "h_window_lo = {:?}", h_window.0);
                let _ = writeln!(s, "h_window_hi = {:?}", h_window.1);
            }
            CommandArgs::Fluctuations { horizon, n_checkpoints } => {
                let _ = writeln!(s, "horizon = {horizon:?}");
                let _ = writeln!(s, "n_checkpoints = {n_checkpoints}");
            }
            CommandArgs::Lln { horizon, n_seeds } => {
                let _ = writeln!(s, "horizon = {horizon:?}");
                let _ = writeln!(s, "n_seeds = {n_seeds}");
            }
            CommandArgs::Ergodicity { pi_cycles, n_chains, t_max, n_times, init_h, init_v } => {
                let _ = writeln!(s, "pi_cycles = {pi_cycles}");
                let _ = writeln!(s, "n_chains = {n_chains}");
                let _ = writeln!(s, "t_max = {t_max:?}");
                let _ = writeln!(s, "n_times = {n_times}");
                let _ = writeln!(s, "init_h = {init_h:?}");
                let _ = writeln!(s, "init_v = {init_v:?}");
            }
            CommandArgs::Bounds { n_trials } => {
                let _ = writeln!(s, "n_trials = {n_trials}");
            }
            CommandArgs::Oracle { n_samples, spacing, burn_in, negative_control } => {
                let _ = writeln!(s, "n_samples = {n_samples}");
                let _ = writeln!(s, "spacing = {spacing:?}");
                let _ = writeln!(s, "burn_in = {burn_in:?}");
                let _ = writeln!(s, "negative_control = {negative_control}");
            }
            CommandArgs::Convergence { n_seeds, horizon } => {
                let _ = writeln!(s, "n_seeds = {n_seeds}");
                let _ = writeln!(s, "horizon = {horizon:?}");
            }
        }
        s
    }
}
