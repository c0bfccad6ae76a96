//! Flat scenario configuration: `key = value` lines, `[section]` headers, `#` comments.
//!
//! ```text
//! experiment = delta_sweep
//! output_path = out/concave_power
//! deltas = 0.01, 0.1, 1, 10, 100
//!
//! [rate]
//! family = power
//! q = 1
//!
//! [kernel]
//! type = potential_concave
//!
//! [grid]
//! I = 10000
//! J = 200
//! T = 100
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;

use repligame::analysis::{KernelSpec, Scenario};
use repligame::mfg::FixedPointConfig;
use repligame::rates::TransitionRateSpec;
use repligame::utilities::EnergyParams;
use repligame::{GridSpec, InitialKind, PotentialSign, RateFamily, TerminalKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Grd,
    Mfg,
    DeltaSweep,
    Refinement,
    Longrun,
    Equilibrium,
}

impl Experiment {
    const ALL: [Experiment; 6] = [
        Experiment::Grd,
        Experiment::Mfg,
        Experiment::DeltaSweep,
        Experiment::Refinement,
        Experiment::Longrun,
        Experiment::Equilibrium,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Grd => "grd",
            Experiment::Mfg => "mfg",
            Experiment::DeltaSweep => "delta_sweep",
            Experiment::Refinement => "refinement",
            Experiment::Longrun => "longrun",
            Experiment::Equilibrium => "equilibrium",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelConfig {
    Zero,
    Concave,
    Convex,
    Energy {
        alpha: f64,
        sigma: f64,
        w: f64,
        x_bar: f64,
    },
}

impl KernelConfig {
    fn name(&self) -> &'static str {
        match self {
            KernelConfig::Zero => "zero",
            KernelConfig::Concave => "potential_concave",
            KernelConfig::Convex => "potential_convex",
            KernelConfig::Energy { .. } => "energy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongrunConfig {
    pub x_bars: Vec<f64>,
    pub times: Vec<f64>,
    pub dt: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub experiment: Experiment,
    pub output_path: String,
    pub family: RateFamily,
    pub q: f64,
    pub kernel: KernelConfig,
    pub init: InitialKind,
    pub terminal: TerminalKind,
    pub psi_bar: f64,
    pub big_i: usize,
    pub big_j: usize,
    pub t_end: f64,
    pub deltas: Vec<f64>,
    pub relaxation: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub divergence_cap: f64,
    /// Number of refinement levels; the scenario grid is level 1.
    pub refinement_levels: usize,
    pub longrun: LongrunConfig,
}

impl ScenarioConfig {
    /// Defaults for every key other than `experiment`.
    pub fn with_defaults(experiment: Experiment) -> Self {
        let fp = FixedPointConfig::default();
        Self {
            experiment,
            output_path: "output".into(),
            family: RateFamily::Power,
            q: 1.0,
            kernel: KernelConfig::Concave,
            init: InitialKind::Uniform,
            terminal: TerminalKind::Zero,
            psi_bar: 0.0,
            big_i: 10_000,
            big_j: 200,
            t_end: 100.0,
            deltas: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            relaxation: fp.relaxation,
            max_iters: fp.max_iters,
            tol: fp.tol,
            divergence_cap: fp.divergence_cap,
            refinement_levels: 5,
            longrun: LongrunConfig {
                x_bars: vec![0.1, 0.4, 0.8],
                times: vec![250.0, 1000.0, 4000.0],
                dt: 0.1,
                cells: 100,
            },
        }
    }

    pub fn rate(&self) -> Result<TransitionRateSpec<f64>, ConfigError> {
        TransitionRateSpec::new(self.family, self.q)
            .map_err(|e| ConfigError::Validation(e.to_string()))
    }

    pub fn grid(&self) -> Result<GridSpec, ConfigError> {
        GridSpec::new(self.big_i, self.big_j, self.t_end)
            .map_err(|e| ConfigError::Validation(e.to_string()))
    }

    pub fn energy_params(&self) -> Option<EnergyParams<f64>> {
        match self.kernel {
            KernelConfig::Energy {
                alpha,
                sigma,
                w,
                x_bar,
            } => Some(EnergyParams {
                alpha,
                sigma,
                w,
                x_bar,
            }),
            _ => None,
        }
    }

    pub fn fixed_point(&self) -> FixedPointConfig<f64> {
        FixedPointConfig {
            relaxation: self.relaxation,
            max_iters: self.max_iters,
            tol: self.tol,
            divergence_cap: self.divergence_cap,
            ..FixedPointConfig::default()
        }
    }

    pub fn scenario(&self) -> Result<Scenario<f64>, ConfigError> {
        let kernel = match self.kernel {
            KernelConfig::Zero => KernelSpec::Zero,
            KernelConfig::Concave => KernelSpec::Potential(PotentialSign::Concave),
            KernelConfig::Convex => KernelSpec::Potential(PotentialSign::Convex),
            KernelConfig::Energy { .. } => {
                KernelSpec::Energy(self.energy_params().expect("energy"))
            }
        };
        Ok(Scenario::new(kernel, self.rate()?, self.grid()?)
            .with_init(self.init)
            .with_terminal(self.terminal, self.psi_bar)
            .with_deltas(self.deltas.clone())
            .with_fixed_point(self.fixed_point()))
    }

    /// Checks every invariant that can be checked without running a solver.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Validation(m.to_string()));
        if !(self.q > 0.0) || !self.q.is_finite() {
            return bad("q > 0");
        }
        self.rate()?;
        self.grid()?;
        if !(self.psi_bar >= 0.0) || !self.psi_bar.is_finite() {
            return bad("psi_bar >= 0");
        }
        if let Some(params) = self.energy_params() {
            params
                .validate()
                .map_err(|e| ConfigError::Validation(e.to_string()))?;
        }
        self.fixed_point()
            .validate()
            .map_err(|e| ConfigError::Validation(e.to_string()))?;
        if self.output_path.is_empty() {
            return bad("output_path must not be empty");
        }
        match self.experiment {
            Experiment::Mfg | Experiment::DeltaSweep | Experiment::Refinement => {
                if !self.big_i.is_multiple_of(2) {
                    return bad("I must be even for mid-time comparisons");
                }
                if self.deltas.is_empty() {
                    return bad("deltas must not be empty");
                }
                if self.deltas.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
                    return bad("deltas > 0");
                }
                if self.experiment == Experiment::Mfg && self.deltas.len() != 1 {
                    return bad("the mfg experiment takes exactly one delta");
                }
                if self.experiment == Experiment::Refinement && self.refinement_levels < 2 {
                    return bad("refinement levels >= 2");
                }
            }
            Experiment::Longrun | Experiment::Equilibrium => {
                if self.energy_params().is_none() {
                    return bad("this experiment needs the energy kernel");
                }
            }
            Experiment::Grd => {}
        }
        if self.experiment == Experiment::Longrun {
            let lr = &self.longrun;
            if !(lr.dt > 0.0) || lr.cells == 0 {
                return bad("longrun dt > 0 and cells >= 1");
            }
            if lr.x_bars.iter().any(|x| !(*x > 0.0 && *x <= 1.0)) {
                return bad("0 < longrun x_bar <= 1");
            }
            if lr.times.iter().any(|t| {
                !(*t >= 0.0) || ((t / lr.dt).round() * lr.dt - t).abs() > 1e-9 * t.max(1.0)
            }) {
                return bad("longrun times must be nonnegative multiples of dt");
            }
        }
        Ok(())
    }

    /// Canonical text form; `parse_config(&cfg.render()) == Ok(cfg)`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let _ = writeln!(s, "experiment = {}", self.experiment.name());
        let _ = writeln!(s, "output_path = {}", self.output_path);
        let _ = writeln!(s, "deltas = {}", list(&self.deltas));
        let _ = writeln!(
            s,
            "\n[rate]\nfamily = {}\nq = {:?}",
            self.family.name(),
            self.q
        );
        let _ = writeln!(s, "\n[kernel]\ntype = {}", self.kernel.name());
        if let KernelConfig::Energy {
            alpha,
            sigma,
            w,
            x_bar,
        } = self.kernel
        {
            let _ = writeln!(
                s,
                "alpha = {alpha:?}\nsigma = {sigma:?}\nw = {w:?}\nx_bar = {x_bar:?}"
            );
        }
        let init = match self.init {
            InitialKind::Uniform => "uniform",
            InitialKind::FiniteSupport => "finite_support",
        };
        let _ = writeln!(s, "\n[init]\nkind = {init}");
        let terminal = match self.terminal {
            TerminalKind::Zero => "zero",
            TerminalKind::LinearGain => "linear",
        };
        let _ = writeln!(
            s,
            "\n[terminal]\nkind = {terminal}\npsi_bar = {:?}",
            self.psi_bar
        );
        let _ = writeln!(
            s,
            "\n[grid]\nI = {}\nJ = {}\nT = {:?}",
            self.big_i, self.big_j, self.t_end
        );
        let _ = writeln!(
            s,
            "\n[fixed_point]\nrelaxation = {:?}\nmax_iters = {}\ntol = {:?}\ndivergence_cap = {:?}",
            self.relaxation, self.max_iters, self.tol, self.divergence_cap
        );
        let _ = writeln!(s, "\n[refinement]\nlevels = {}", self.refinement_levels);
        let _ = writeln!(
            s,
            "\n[longrun]\nx_bars = {}\ntimes = {}\ndt = {:?}\ncells = {}",
            list(&self.longrun.x_bars),
            list(&self.longrun.times),
            self.longrun.dt,
            self.longrun.cells
        );
        s
    }
}

/// Values collected from the document before defaults and validation are applied.
#[derive(Default)]
struct Raw {
    experiment: Option<Experiment>,
    kernel_type: Option<KernelConfig>,
    energy: [Option<f64>; 4],
}

fn parse_f64(line: usize, v: &str) -> Result<f64, ConfigError> {
    v.parse().map_err(|_| ConfigError::Parse {
        line,
        message: format!("expected a number, got `{v}`"),
    })
}

fn parse_usize(line: usize, v: &str) -> Result<usize, ConfigError> {
    v.parse().map_err(|_| ConfigError::Parse {
        line,
        message: format!("expected a nonnegative integer, got `{v}`"),
    })
}

fn parse_list(line: usize, v: &str) -> Result<Vec<f64>, ConfigError> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| parse_f64(line, x.trim())).collect()
}

/// Parses and validates a scenario document, filling defaults for absent keys.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut raw = Raw::default();
    let mut cfg = ScenarioConfig::with_defaults(Experiment::Grd);
    let mut section = String::new();
    let mut seen = HashSet::new();

    for (idx, full) in text.lines().enumerate() {
        let line = idx + 1;
        let content = full.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Parse {
                line,
                message: "unterminated section header".into(),
            })?;
            section = name.trim().to_string();
            const SECTIONS: [&str; 8] = [
                "rate",
                "kernel",
                "init",
                "terminal",
                "grid",
                "fixed_point",
                "refinement",
                "longrun",
            ];
            if !SECTIONS.contains(&section.as_str()) {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("unknown section [{section}]"),
                });
            }
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let path = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        if !seen.insert(path.clone()) {
            return Err(ConfigError::Parse {
                line,
                message: format!("duplicate key `{path}`"),
            });
        }
        let unknown = |what: &str| ConfigError::Parse {
            line,
            message: format!("unknown {what} `{value}` for `{path}`"),
        };
        match path.as_str() {
            "experiment" => {
                raw.experiment =
                    Some(Experiment::from_name(value).ok_or_else(|| unknown("experiment"))?)
            }
            "output_path" => cfg.output_path = value.to_string(),
            "deltas" => cfg.deltas = parse_list(line, value)?,
            "rate.family" => {
                cfg.family = RateFamily::from_name(value).ok_or_else(|| unknown("rate family"))?
            }
            "rate.q" => cfg.q = parse_f64(line, value)?,
            "kernel.type" => {
                raw.kernel_type = Some(match value {
                    "zero" => KernelConfig::Zero,
                    "potential_concave" => KernelConfig::Concave,
                    "potential_convex" => KernelConfig::Convex,
                    "energy" => KernelConfig::Energy {
                        alpha: 0.5,
                        sigma: 1.25,
                        w: 1.25,
                        x_bar: 0.5,
                    },
                    _ => return Err(unknown("kernel type")),
                })
            }
            "kernel.alpha" => raw.energy[0] = Some(parse_f64(line, value)?),
            "kernel.sigma" => raw.energy[1] = Some(parse_f64(line, value)?),
            "kernel.w" => raw.energy[2] = Some(parse_f64(line, value)?),
            "kernel.x_bar" => raw.energy[3] = Some(parse_f64(line, value)?),
            "init.kind" => {
                cfg.init = match value {
                    "uniform" => InitialKind::Uniform,
                    "finite_support" => InitialKind::FiniteSupport,
                    _ => return Err(unknown("initial condition")),
                }
            }
            "terminal.kind" => {
                cfg.terminal = match value {
                    "zero" => TerminalKind::Zero,
                    "linear" => TerminalKind::LinearGain,
                    _ => return Err(unknown("terminal condition")),
                }
            }
            "terminal.psi_bar" => cfg.psi_bar = parse_f64(line, value)?,
            "grid.I" => cfg.big_i = parse_usize(line, value)?,
            "grid.J" => cfg.big_j = parse_usize(line, value)?,
            "grid.T" => cfg.t_end = parse_f64(line, value)?,
            "fixed_point.relaxation" => cfg.relaxation = parse_f64(line, value)?,
            "fixed_point.max_iters" => cfg.max_iters = parse_usize(line, value)?,
            "fixed_point.tol" => cfg.tol = parse_f64(line, value)?,
            "fixed_point.divergence_cap" => cfg.divergence_cap = parse_f64(line, value)?,
            "refinement.levels" => cfg.refinement_levels = parse_usize(line, value)?,
            "longrun.x_bars" => cfg.longrun.x_bars = parse_list(line, value)?,
            "longrun.times" => cfg.longrun.times = parse_list(line, value)?,
            "longrun.dt" => cfg.longrun.dt = parse_f64(line, value)?,
            "longrun.cells" => cfg.longrun.cells = parse_usize(line, value)?,
            _ => {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("unknown key `{path}`"),
                })
            }
        }
    }

    cfg.experiment = raw
        .experiment
        .ok_or_else(|| ConfigError::Validation("missing required key `experiment`".into()))?;
    if let Some(kernel) = raw.kernel_type {
        cfg.kernel = kernel;
    }
    match &mut cfg.kernel {
        KernelConfig::Energy {
            alpha,
            sigma,
            w,
            x_bar,
        } => {
            for (slot, v) in [alpha, sigma, w, x_bar].into_iter().zip(raw.energy) {
                if let Some(v) = v {
                    *slot = v;
                }
            }
        }
        _ if raw.energy.iter().any(Option::is_some) => {
            return Err(ConfigError::Validation(
                "energy parameters given for a non-energy kernel".into(),
            ))
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}
