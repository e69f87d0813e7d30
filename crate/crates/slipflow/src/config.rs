//! Flat `key = value` run configuration: zero-dependency parsing,
//! diff-friendly experiment records, exact echo/reparse round trips.

use crate::error::ConfigError;
use crate::io::fmt_f64;
use crate::slip_solver::SlipBound;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    SolveP,
    SolveM,
    FixedPointP,
    FixedPointM,
    Optimize,
    Stability,
    ConvergenceStudy,
}

impl Task {
    pub fn parse(s: &str) -> Option<Task> {
        Some(match s {
            "solve_p" => Task::SolveP,
            "solve_m" => Task::SolveM,
            "fixed_point_p" => Task::FixedPointP,
            "fixed_point_m" => Task::FixedPointM,
            "optimize" => Task::Optimize,
            "stability" => Task::Stability,
            "convergence_study" => Task::ConvergenceStudy,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::SolveP => "solve_p",
            Task::SolveM => "solve_m",
            Task::FixedPointP => "fixed_point_p",
            Task::FixedPointM => "fixed_point_m",
            Task::Optimize => "optimize",
            Task::Stability => "stability",
            Task::ConvergenceStudy => "convergence_study",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeSpec {
    Constant(f64),
    Sine { base: f64, amp: f64, freq: f64 },
    Controls(Vec<f64>),
    File(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForceSpec {
    Constant(f64, f64),
    /// Manufactured forcing of the convergence study.
    Mms,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlipSpec {
    Constant { g0: f64 },
    LinearSat { g0: f64, slope: f64, t_cap: f64 },
    ExpDecay { g0: f64, amplitude: f64, rate: f64 },
}

impl SlipSpec {
    pub fn build(&self, t_max: f64) -> Result<SlipBound, crate::error::SolverError> {
        let bound = match *self {
            SlipSpec::Constant { g0 } => SlipBound::Constant { g0 },
            SlipSpec::LinearSat { g0, slope, t_cap } => {
                SlipBound::LinearSaturating { g0, slope, t_cap }
            }
            SlipSpec::ExpDecay {
                g0,
                amplitude,
                rate,
            } => SlipBound::ExpDecay {
                g0,
                amplitude,
                rate,
            },
        };
        bound.validated(t_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostKind {
    Dissipation,
    /// Track a constant target tangential velocity on S.
    TraceTracking(f64),
    /// Track a constant target shear stress on S.
    StressTracking(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSpec {
    Sine { amp: f64, freq: f64 },
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormulationSpec {
    P,
    M,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub nx: usize,
    pub ny: usize,
    pub force: ForceSpec,
    pub shape: ShapeSpec,
    pub omega: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub c1_bound: f64,
    pub c2_bound: f64,
    pub slip: SlipSpec,
    pub t_max: f64,
    pub phi0: f64,
    pub tol_uz: f64,
    pub tol_fp: f64,
    pub max_uzawa: usize,
    pub max_it: usize,
    pub rho: Option<f64>,
    pub seed: u64,
    pub out_dir: String,
    pub formulation: FormulationSpec,
    pub step0: f64,
    pub shrink: f64,
    pub budget: usize,
    pub m_controls: usize,
    pub cost: CostKind,
    pub deltas: Vec<f64>,
    pub beta: BetaSpec,
    pub n_list: Vec<usize>,
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        message: message.into(),
    }
}

fn parse_f64(key: &str, s: &str) -> Result<f64, ConfigError> {
    s.parse::<f64>()
        .map_err(|_| invalid(key, format!("`{s}` is not a number")))
}

fn parse_usize(key: &str, s: &str) -> Result<usize, ConfigError> {
    s.parse::<usize>()
        .map_err(|_| invalid(key, format!("`{s}` is not a nonnegative integer")))
}

fn parse_floats(key: &str, parts: &[&str]) -> Result<Vec<f64>, ConfigError> {
    parts.iter().map(|p| parse_f64(key, p)).collect()
}

/// Parses the `key = value` format with `#` comments. Unknown keys are
/// rejected; omitted optional keys take documented defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut task = None;
    let mut nx = None;
    let mut ny = None;
    let mut force = None;
    let mut shape = ShapeSpec::Constant(0.5);
    let mut omega = 1.5;
    let mut alpha_min = 0.1;
    let mut alpha_max = 0.9;
    let mut c1_bound = 2.0;
    let mut c2_bound = 10.0;
    let mut slip = SlipSpec::Constant { g0: 1.0 };
    let mut t_max = 10.0;
    let mut phi0 = 0.0;
    let mut tol_uz = 1e-10;
    let mut tol_fp = 1e-8;
    let mut max_uzawa = 5000usize;
    let mut max_it = 200usize;
    let mut rho = None;
    let mut seed = 0u64;
    let mut out_dir = "out".to_string();
    let mut formulation = FormulationSpec::M;
    let mut step0 = 0.1;
    let mut shrink = 0.5;
    let mut budget = 200usize;
    let mut m_controls = 5usize;
    let mut cost = CostKind::Dissipation;
    let mut deltas = vec![0.2, 0.1, 0.05, 0.025];
    let mut beta = BetaSpec::Sine {
        amp: 0.05,
        freq: 1.0,
    };
    let mut n_list = vec![8usize, 16, 32, 64];

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Parse {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(ConfigError::Parse {
                line,
                message: format!("empty value for `{key}`"),
            });
        }
        let parts: Vec<&str> = value.split_whitespace().collect();
        match key {
            "task" => {
                task = Some(
                    Task::parse(value)
                        .ok_or_else(|| invalid("task", format!("unknown task `{value}`")))?,
                );
            }
            "n_x" => nx = Some(parse_usize(key, value)?),
            "n_y" => ny = Some(parse_usize(key, value)?),
            "force" => {
                force = Some(if value == "mms" {
                    ForceSpec::Mms
                } else if parts.len() == 2 {
                    ForceSpec::Constant(parse_f64(key, parts[0])?, parse_f64(key, parts[1])?)
                } else {
                    return Err(invalid(key, "expected `fx fy` or `mms`"));
                });
            }
            "shape" => {
                shape = match parts.as_slice() {
                    ["constant", c] => ShapeSpec::Constant(parse_f64(key, c)?),
                    ["sine", base, amp, freq] => ShapeSpec::Sine {
                        base: parse_f64(key, base)?,
                        amp: parse_f64(key, amp)?,
                        freq: parse_f64(key, freq)?,
                    },
                    ["controls", rest @ ..] if rest.len() >= 4 => {
                        ShapeSpec::Controls(parse_floats(key, rest)?)
                    }
                    ["file", path] => ShapeSpec::File((*path).to_string()),
                    _ => {
                        return Err(invalid(
                            key,
                            "expected `constant c` | `sine base amp freq` | `controls v...` (>= 4) | `file path`",
                        ))
                    }
                };
            }
            "omega" => omega = parse_f64(key, value)?,
            "alpha_min" => alpha_min = parse_f64(key, value)?,
            "alpha_max" => alpha_max = parse_f64(key, value)?,
            "c1_bound" => c1_bound = parse_f64(key, value)?,
            "c2_bound" => c2_bound = parse_f64(key, value)?,
            "slip" => {
                slip = match parts.as_slice() {
                    ["constant", g0] => SlipSpec::Constant {
                        g0: parse_f64(key, g0)?,
                    },
                    ["linear_sat", g0, slope, t_cap] => SlipSpec::LinearSat {
                        g0: parse_f64(key, g0)?,
                        slope: parse_f64(key, slope)?,
                        t_cap: parse_f64(key, t_cap)?,
                    },
                    ["exp_decay", g0, amplitude, rate] => SlipSpec::ExpDecay {
                        g0: parse_f64(key, g0)?,
                        amplitude: parse_f64(key, amplitude)?,
                        rate: parse_f64(key, rate)?,
                    },
                    _ => {
                        return Err(invalid(
                            key,
                            "expected `constant g0` | `linear_sat g0 slope t_cap` | `exp_decay g0 amp rate`",
                        ))
                    }
                };
            }
            "t_max" => t_max = parse_f64(key, value)?,
            "phi0" => phi0 = parse_f64(key, value)?,
            "tol_uz" => tol_uz = parse_f64(key, value)?,
            "tol_fp" => tol_fp = parse_f64(key, value)?,
            "max_uzawa" => max_uzawa = parse_usize(key, value)?,
            "max_it" => max_it = parse_usize(key, value)?,
            "rho" => {
                rho = if value == "auto" {
                    None
                } else {
                    Some(parse_f64(key, value)?)
                };
            }
            "seed" => {
                seed = value
                    .parse::<u64>()
                    .map_err(|_| invalid(key, format!("`{value}` is not a u64")))?;
            }
            "out_dir" => out_dir = value.to_string(),
            "formulation" => {
                formulation = match value {
                    "p" => FormulationSpec::P,
                    "m" => FormulationSpec::M,
                    _ => return Err(invalid(key, "expected `p` or `m`")),
                };
            }
            "step0" => step0 = parse_f64(key, value)?,
            "shrink" => shrink = parse_f64(key, value)?,
            "budget" => budget = parse_usize(key, value)?,
            "m_controls" => m_controls = parse_usize(key, value)?,
            "cost" => {
                cost = match parts.as_slice() {
                    ["dissipation"] => CostKind::Dissipation,
                    ["trace_tracking", t] => CostKind::TraceTracking(parse_f64(key, t)?),
                    ["stress_tracking", t] => CostKind::StressTracking(parse_f64(key, t)?),
                    _ => {
                        return Err(invalid(
                            key,
                            "expected `dissipation` | `trace_tracking target` | `stress_tracking target`",
                        ))
                    }
                };
            }
            "deltas" => deltas = parse_floats(key, &parts)?,
            "beta" => {
                beta = match parts.as_slice() {
                    ["sine", amp, freq] => BetaSpec::Sine {
                        amp: parse_f64(key, amp)?,
                        freq: parse_f64(key, freq)?,
                    },
                    ["constant", c] => BetaSpec::Constant(parse_f64(key, c)?),
                    _ => return Err(invalid(key, "expected `sine amp freq` | `constant c`")),
                };
            }
            "n_list" => {
                n_list = parts
                    .iter()
                    .map(|p| parse_usize(key, p))
                    .collect::<Result<_, _>>()?;
            }
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
        }
    }

    let config = RunConfig {
        task: task.ok_or(ConfigError::MissingKey("task"))?,
        nx: nx.ok_or(ConfigError::MissingKey("n_x"))?,
        ny: ny.ok_or(ConfigError::MissingKey("n_y"))?,
        force: force.ok_or(ConfigError::MissingKey("force"))?,
        shape,
        omega,
        alpha_min,
        alpha_max,
        c1_bound,
        c2_bound,
        slip,
        t_max,
        phi0,
        tol_uz,
        tol_fp,
        max_uzawa,
        max_it,
        rho,
        seed,
        out_dir,
        formulation,
        step0,
        shrink,
        budget,
        m_controls,
        cost,
        deltas,
        beta,
        n_list,
    };
    validate(&config)?;
    Ok(config)
}

fn validate(config: &RunConfig) -> Result<(), ConfigError> {
    if config.nx < 2 || config.ny < 2 {
        return Err(invalid("n_x", "mesh counts must be at least 2"));
    }
    for (key, v) in [
        ("tol_uz", config.tol_uz),
        ("tol_fp", config.tol_fp),
        ("t_max", config.t_max),
        ("step0", config.step0),
    ] {
        if !(v > 0.0) {
            return Err(invalid(key, "must be positive"));
        }
    }
    if !(config.shrink > 0.0 && config.shrink < 1.0) {
        return Err(invalid("shrink", "must lie in (0, 1)"));
    }
    if config.phi0 < 0.0 {
        return Err(invalid("phi0", "must be nonnegative"));
    }
    if let Some(r) = config.rho {
        if !(r > 0.0) {
            return Err(invalid("rho", "must be positive or `auto`"));
        }
    }
    if config.m_controls < 4 {
        return Err(invalid("m_controls", "need at least 4 control points"));
    }
    if config.n_list.iter().any(|&n| n < 2) {
        return Err(invalid("n_list", "entries must be at least 2"));
    }
    if config.task == Task::ConvergenceStudy && !matches!(config.shape, ShapeSpec::Constant(_)) {
        return Err(invalid(
            "shape",
            "convergence_study needs a constant profile",
        ));
    }
    config
        .slip
        .build(config.t_max)
        .map_err(|e| invalid("slip", e.to_string()))?;
    Ok(())
}

/// Serializes a config so that `parse_config(echo(c)) == c`. All floats are
/// printed with 17 significant digits.
pub fn echo(config: &RunConfig) -> String {
    let mut s = String::new();
    let mut push = |k: &str, v: String| {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(&v);
        s.push('\n');
    };
    push("task", config.task.name().to_string());
    push("n_x", config.nx.to_string());
    push("n_y", config.ny.to_string());
    match config.force {
        ForceSpec::Constant(fx, fy) => push("force", format!("{} {}", fmt_f64(fx), fmt_f64(fy))),
        ForceSpec::Mms => push("force", "mms".to_string()),
    }
    match &config.shape {
        ShapeSpec::Constant(c) => push("shape", format!("constant {}", fmt_f64(*c))),
        ShapeSpec::Sine { base, amp, freq } => push(
            "shape",
            format!(
                "sine {} {} {}",
                fmt_f64(*base),
                fmt_f64(*amp),
                fmt_f64(*freq)
            ),
        ),
        ShapeSpec::Controls(c) => push(
            "shape",
            format!(
                "controls {}",
                c.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" ")
            ),
        ),
        ShapeSpec::File(path) => push("shape", format!("file {path}")),
    }
    push("omega", fmt_f64(config.omega));
    push("alpha_min", fmt_f64(config.alpha_min));
    push("alpha_max", fmt_f64(config.alpha_max));
    push("c1_bound", fmt_f64(config.c1_bound));
    push("c2_bound", fmt_f64(config.c2_bound));
    match config.slip {
        SlipSpec::Constant { g0 } => push("slip", format!("constant {}", fmt_f64(g0))),
        SlipSpec::LinearSat { g0, slope, t_cap } => push(
            "slip",
            format!(
                "linear_sat {} {} {}",
                fmt_f64(g0),
                fmt_f64(slope),
                fmt_f64(t_cap)
            ),
        ),
        SlipSpec::ExpDecay {
            g0,
            amplitude,
            rate,
        } => push(
            "slip",
            format!(
                "exp_decay {} {} {}",
                fmt_f64(g0),
                fmt_f64(amplitude),
                fmt_f64(rate)
            ),
        ),
    }
    push("t_max", fmt_f64(config.t_max));
    push("phi0", fmt_f64(config.phi0));
    push("tol_uz", fmt_f64(config.tol_uz));
    push("tol_fp", fmt_f64(config.tol_fp));
    push("max_uzawa", config.max_uzawa.to_string());
    push("max_it", config.max_it.to_string());
    match config.rho {
        Some(r) => push("rho", fmt_f64(r)),
        None => push("rho", "auto".to_string()),
    }
    push("seed", config.seed.to_string());
    push("out_dir", config.out_dir.clone());
    push(
        "formulation",
        match config.formulation {
            FormulationSpec::P => "p".to_string(),
            FormulationSpec::M => "m".to_string(),
        },
    );
    push("step0", fmt_f64(config.step0));
    push("shrink", fmt_f64(config.shrink));
    push("budget", config.budget.to_string());
    push("m_controls", config.m_controls.to_string());
    match config.cost {
        CostKind::Dissipation => push("cost", "dissipation".to_string()),
        CostKind::TraceTracking(t) => push("cost", format!("trace_tracking {}", fmt_f64(t))),
        CostKind::StressTracking(t) => push("cost", format!("stress_tracking {}", fmt_f64(t))),
    }
    push(
        "deltas",
        config
            .deltas
            .iter()
            .map(|v| fmt_f64(*v))
            .collect::<Vec<_>>()
            .join(" "),
    );
    match config.beta {
        BetaSpec::Sine { amp, freq } => {
            push("beta", format!("sine {} {}", fmt_f64(amp), fmt_f64(freq)))
        }
        BetaSpec::Constant(c) => push("beta", format!("constant {}", fmt_f64(c))),
    }
    push(
        "n_list",
        config
            .n_list
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(" "),
    );
    s
}
