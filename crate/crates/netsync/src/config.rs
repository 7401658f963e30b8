//! Scenario configuration: a flat sectioned key-value text format, defaults
//! that reproduce the benchmark scenarios with no file at all, and a
//! canonical serializer whose output parses back to the same config.
//!
//! ```text
//! [fem]
//! n = 40
//! a1 = 0.05
//! c_k = 0.0005
//! c_f = 0.01
//!
//! [topology]
//! kind = paper5
//!
//! [init]
//! kind = paper
//!
//! [sweep]
//! grid = 0:2:0.05
//! ```
//!
//! `#` starts a comment. Keys not present keep their defaults; unknown
//! sections or keys are errors with line diagnostics.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::expr;
use crate::fem::{build_fem, FemModel, SpatialField};
use crate::graph::{EdgeGains, Topology};

/// Which builtin or explicit topology to use.
#[derive(Debug, Clone, PartialEq)]
pub enum TopologySpec {
    /// The five-agent benchmark graph (`kind = paper5`, alias `default`).
    Paper5,
    /// Explicit `n_agents` + 1-based `edges` list.
    Custom {
        n_agents: usize,
        edges: Vec<(usize, usize)>,
    },
}

/// Which initial profiles to use.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    /// The five benchmark profiles (`kind = paper`, alias `default`).
    Paper,
    /// One expression in `xi` per agent, keys `x1..xN`.
    Expressions(Vec<String>),
}

/// Gain assignment for constant-gain runs and the design-III Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub enum GainsSpec {
    /// Same value on every directed pair (`alpha = v`).
    Uniform(f64),
    /// Per-pair values, keys `g<i>_<j> = v` with 1-based agent indices.
    Explicit(Vec<(usize, usize, f64)>),
}

/// Design selector for `cmd_design`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignChoice {
    One,
    Two,
    Three,
    Static,
}

impl DesignChoice {
    pub fn parse(s: &str) -> Option<DesignChoice> {
        match s {
            "1" => Some(DesignChoice::One),
            "2" => Some(DesignChoice::Two),
            "3" => Some(DesignChoice::Three),
            "static" => Some(DesignChoice::Static),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            DesignChoice::One => "1",
            DesignChoice::Two => "2",
            DesignChoice::Three => "3",
            DesignChoice::Static => "static",
        }
    }
}

/// Full scenario description. Every field has a default, so an empty config
/// file (or none) runs the benchmark scenario of the invoking subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n: usize,
    pub a1: f64,
    pub pulse_center: f64,
    pub pulse_width: f64,
    pub c_k: f64,
    pub c_f: f64,
    pub topology: TopologySpec,
    pub init: InitSpec,
    pub t_end: f64,
    pub dt: f64,
    /// Uniform sweep grid `start:stop:step`.
    pub grid: (f64, f64, f64),
    /// α values whose deviation traces `cmd_sweep` writes out.
    pub trace_alphas: Vec<f64>,
    pub gamma: f64,
    pub sigma: f64,
    pub alpha0: f64,
    pub design_which: Option<DesignChoice>,
    /// Design II search mode: grid sweep or per-edge optimization.
    pub design_multi: bool,
    /// Design I: tie the two directions of each edge together.
    pub design_symmetric: bool,
    pub gains: GainsSpec,
}

impl ScenarioConfig {
    /// α-sweep benchmark: slow plant, strong coupling profile.
    pub fn sweep_defaults() -> ScenarioConfig {
        ScenarioConfig {
            n: 40,
            a1: 0.05,
            pulse_center: 0.5,
            pulse_width: 0.1,
            c_k: 5e-4,
            c_f: 1e-2,
            topology: TopologySpec::Paper5,
            init: InitSpec::Paper,
            t_end: 2.0,
            dt: 1e-3,
            grid: (0.0, 2.0, 0.05),
            trace_alphas: vec![0.0, 0.3, 2.0],
            gamma: 100.0,
            sigma: 1e-5,
            alpha0: 1.0,
            design_which: None,
            design_multi: false,
            design_symmetric: true,
            gains: GainsSpec::Uniform(1.0),
        }
    }

    /// Adaptive-vs-constant benchmark: faster plant, weaker coupling.
    pub fn adaptive_defaults() -> ScenarioConfig {
        ScenarioConfig {
            a1: 0.1,
            c_f: 1e-3,
            ..ScenarioConfig::sweep_defaults()
        }
    }

    /// Design runs reuse the sweep scenario.
    pub fn design_defaults() -> ScenarioConfig {
        ScenarioConfig::sweep_defaults()
    }

    /// Parse `text` on top of `base`: keys present override, everything else
    /// keeps the base value.
    pub fn parse_with_base(text: &str, base: ScenarioConfig) -> Result<ScenarioConfig> {
        let mut cfg = base;
        cfg.apply_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overlay the assignments in `text` onto `self` without validating.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        // Explicit per-agent keys replace the builtin selections wholesale,
        // so the first such key in a file resets the collection.
        let mut init_exprs: Vec<(usize, String, usize)> = Vec::new();
        let mut gain_entries: Vec<(usize, usize, f64, usize)> = Vec::new();
        let mut custom_agents: Option<(usize, usize)> = None;
        let mut custom_edges: Option<(Vec<(usize, usize)>, usize)> = None;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(k) => &raw[..k],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| Error::Config {
                    line: line_no,
                    field: line.to_string(),
                    msg: "section header is missing ']'".into(),
                })?;
                section = name.trim().to_string();
                match section.as_str() {
                    "fem" | "topology" | "init" | "sim" | "sweep" | "adaptive" | "design"
                    | "gains" => {}
                    other => {
                        return Err(Error::Config {
                            line: line_no,
                            field: other.to_string(),
                            msg: "unknown section".into(),
                        })
                    }
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                field: line.to_string(),
                msg: "expected 'key = value'".into(),
            })?;
            let key = key.trim();
            let value = value.trim();
            if section.is_empty() {
                return Err(Error::Config {
                    line: line_no,
                    field: key.to_string(),
                    msg: "assignment before any [section] header".into(),
                });
            }
            let qualified = format!("{section}.{key}");
            if let Some(prev) = seen.insert(qualified.clone(), line_no) {
                return Err(Error::Config {
                    line: line_no,
                    field: qualified,
                    msg: format!("duplicate key (first set on line {prev})"),
                });
            }

            self.apply_key(
                &section,
                key,
                value,
                line_no,
                &mut init_exprs,
                &mut gain_entries,
                &mut custom_agents,
                &mut custom_edges,
            )?;
        }

        if !init_exprs.is_empty() {
            init_exprs.sort_by_key(|(k, _, _)| *k);
            for (want, (got, _, line)) in init_exprs.iter().enumerate() {
                if *got != want + 1 {
                    return Err(Error::Config {
                        line: *line,
                        field: format!("init.x{got}"),
                        msg: format!("expected consecutive keys x1.. (missing x{})", want + 1),
                    });
                }
            }
            self.init = InitSpec::Expressions(init_exprs.into_iter().map(|(_, e, _)| e).collect());
        }
        if !gain_entries.is_empty() {
            self.gains = GainsSpec::Explicit(
                gain_entries
                    .into_iter()
                    .map(|(i, j, v, _)| (i, j, v))
                    .collect(),
            );
        }
        match (custom_agents, custom_edges) {
            (None, None) => {}
            (Some((n_agents, _)), Some((edges, _))) => {
                self.topology = TopologySpec::Custom { n_agents, edges };
            }
            (Some((_, line)), None) => {
                return Err(Error::Config {
                    line,
                    field: "topology.edges".into(),
                    msg: "n_agents given without an edges list".into(),
                })
            }
            (None, Some((_, line))) => {
                return Err(Error::Config {
                    line,
                    field: "topology.n_agents".into(),
                    msg: "edges given without n_agents".into(),
                })
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn apply_key(
        &mut self,
        section: &str,
        key: &str,
        value: &str,
        line: usize,
        init_exprs: &mut Vec<(usize, String, usize)>,
        gain_entries: &mut Vec<(usize, usize, f64, usize)>,
        custom_agents: &mut Option<(usize, usize)>,
        custom_edges: &mut Option<(Vec<(usize, usize)>, usize)>,
    ) -> Result<()> {
        let bad = |msg: String| Error::Config {
            line,
            field: format!("{section}.{key}"),
            msg,
        };
        let num = |value: &str| -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|_| bad(format!("expected a number, got '{value}'")))
        };
        match (section, key) {
            ("fem", "n") => {
                self.n = value
                    .parse::<usize>()
                    .map_err(|_| bad(format!("expected a positive integer, got '{value}'")))?;
            }
            ("fem", "a1") => self.a1 = num(value)?,
            ("fem", "pulse_center") => self.pulse_center = num(value)?,
            ("fem", "pulse_width") => self.pulse_width = num(value)?,
            ("fem", "c_k") => self.c_k = num(value)?,
            ("fem", "c_f") => self.c_f = num(value)?,
            ("topology", "kind") => match value {
                "paper5" | "default" => self.topology = TopologySpec::Paper5,
                other => {
                    return Err(bad(format!(
                        "unknown topology '{other}' (use 'paper5' or n_agents/edges)"
                    )))
                }
            },
            ("topology", "n_agents") => {
                let n = value
                    .parse::<usize>()
                    .map_err(|_| bad(format!("expected a positive integer, got '{value}'")))?;
                *custom_agents = Some((n, line));
            }
            ("topology", "edges") => {
                let mut edges = Vec::new();
                for part in value.split(',') {
                    let part = part.trim();
                    if part.is_empty() {
                        continue;
                    }
                    let (i, j) = part
                        .split_once('-')
                        .ok_or_else(|| bad(format!("edge '{part}' is not of the form i-j")))?;
                    let i = i
                        .trim()
                        .parse::<usize>()
                        .map_err(|_| bad(format!("edge '{part}' has a non-integer endpoint")))?;
                    let j = j
                        .trim()
                        .parse::<usize>()
                        .map_err(|_| bad(format!("edge '{part}' has a non-integer endpoint")))?;
                    edges.push((i, j));
                }
                if edges.is_empty() {
                    return Err(bad("edge list is empty".into()));
                }
                *custom_edges = Some((edges, line));
            }
            ("init", "kind") => match value {
                "paper" | "default" => self.init = InitSpec::Paper,
                other => {
                    return Err(bad(format!(
                        "unknown initial-condition set '{other}' (use 'paper' or x1..xN keys)"
                    )))
                }
            },
            ("init", _) if key.starts_with('x') => {
                let idx = key[1..]
                    .parse::<usize>()
                    .map_err(|_| bad("initial-profile keys look like x1, x2, ...".into()))?;
                if idx == 0 {
                    return Err(bad("agent indices are 1-based".into()));
                }
                expr::parse(value).map_err(|e| bad(format!("bad expression: {e}")))?;
                init_exprs.push((idx, value.to_string(), line));
            }
            ("sim", "t_end") => self.t_end = num(value)?,
            ("sim", "dt") => self.dt = num(value)?,
            ("sweep", "grid") => self.grid = parse_grid(value).map_err(bad)?,
            ("sweep", "trace_alphas") => {
                let mut alphas = Vec::new();
                for part in value.split(',') {
                    let part = part.trim();
                    if part.is_empty() {
                        continue;
                    }
                    alphas.push(num(part)?);
                }
                self.trace_alphas = alphas;
            }
            ("adaptive", "gamma") => self.gamma = num(value)?,
            ("adaptive", "sigma") => self.sigma = num(value)?,
            ("adaptive", "alpha0") => self.alpha0 = num(value)?,
            ("design", "which") => {
                self.design_which =
                    Some(DesignChoice::parse(value).ok_or_else(|| {
                        bad(format!("expected 1, 2, 3, or static, got '{value}'"))
                    })?);
            }
            ("design", "mode") => match value {
                "uniform" => self.design_multi = false,
                "multi" => self.design_multi = true,
                other => return Err(bad(format!("expected uniform or multi, got '{other}'"))),
            },
            ("design", "symmetric") => {
                self.design_symmetric = value
                    .parse::<bool>()
                    .map_err(|_| bad(format!("expected true or false, got '{value}'")))?;
            }
            ("gains", "alpha") => self.gains = GainsSpec::Uniform(num(value)?),
            ("gains", _) if key.starts_with('g') => {
                let (i, j) = key[1..]
                    .split_once('_')
                    .ok_or_else(|| bad("gain keys look like g1_2 = value".into()))?;
                let i = i
                    .parse::<usize>()
                    .map_err(|_| bad("gain keys look like g1_2 = value".into()))?;
                let j = j
                    .parse::<usize>()
                    .map_err(|_| bad("gain keys look like g1_2 = value".into()))?;
                gain_entries.push((i, j, num(value)?, line));
            }
            _ => {
                return Err(bad("unknown key".into()));
            }
        }
        Ok(())
    }

    /// Cross-field validation; every builder below assumes this passed.
    pub fn validate(&self) -> Result<()> {
        let field_err = |field: &str, msg: String| Error::Config {
            line: 0,
            field: field.to_string(),
            msg,
        };
        if self.t_end <= 0.0 || !self.t_end.is_finite() {
            return Err(field_err(
                "sim.t_end",
                format!("must be positive, got {}", self.t_end),
            ));
        }
        if self.dt <= 0.0 || !self.dt.is_finite() {
            return Err(field_err(
                "sim.dt",
                format!("must be positive, got {}", self.dt),
            ));
        }
        let (start, stop, step) = self.grid;
        if !(step > 0.0) || !(start >= 0.0) || !(stop >= start) {
            return Err(field_err(
                "sweep.grid",
                format!("need 0 <= start <= stop and step > 0, got {start}:{stop}:{step}"),
            ));
        }
        for &a in &self.trace_alphas {
            if !(a >= 0.0) || !a.is_finite() {
                return Err(field_err(
                    "sweep.trace_alphas",
                    format!("values must be nonnegative, got {a}"),
                ));
            }
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(field_err(
                "adaptive.gamma",
                format!("must be positive, got {}", self.gamma),
            ));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(field_err(
                "adaptive.sigma",
                format!("must be nonnegative, got {}", self.sigma),
            ));
        }
        if !(self.alpha0 >= 0.0) || !self.alpha0.is_finite() {
            return Err(field_err(
                "adaptive.alpha0",
                format!("must be nonnegative, got {}", self.alpha0),
            ));
        }
        let topo = self.build_topology()?;
        if let InitSpec::Expressions(exprs) = &self.init {
            if exprs.len() != topo.n_agents() {
                return Err(field_err(
                    "init",
                    format!("{} expressions for {} agents", exprs.len(), topo.n_agents()),
                ));
            }
        } else if topo.n_agents() != 5 {
            return Err(field_err(
                "init.kind",
                format!(
                    "builtin profiles are for 5 agents, topology has {}",
                    topo.n_agents()
                ),
            ));
        }
        self.build_gains(&topo)?;
        // Fem parameter validation lives in the builder.
        self.build_fem()?;
        Ok(())
    }

    pub fn build_fem(&self) -> Result<FemModel> {
        build_fem(
            self.n,
            self.a1,
            self.pulse_center,
            self.pulse_width,
            self.c_k,
            self.c_f,
        )
    }

    pub fn build_topology(&self) -> Result<Topology> {
        match &self.topology {
            TopologySpec::Paper5 => Ok(Topology::benchmark()),
            TopologySpec::Custom { n_agents, edges } => Topology::new(*n_agents, edges),
        }
    }

    pub fn build_initial_states(&self, fem: &FemModel) -> Result<Vec<SpatialField>> {
        match &self.init {
            InitSpec::Paper => Ok(crate::fem::benchmark_initial_states(fem)),
            InitSpec::Expressions(exprs) => {
                let mut states = Vec::with_capacity(exprs.len());
                for (k, src) in exprs.iter().enumerate() {
                    let parsed = expr::parse(src).map_err(|e| Error::Config {
                        line: 0,
                        field: format!("init.x{}", k + 1),
                        msg: format!("bad expression: {e}"),
                    })?;
                    states.push(crate::fem::interpolate(fem, |xi| parsed.eval(xi))?);
                }
                Ok(states)
            }
        }
    }

    pub fn build_gains(&self, topo: &Topology) -> Result<EdgeGains> {
        match &self.gains {
            GainsSpec::Uniform(alpha) => EdgeGains::uniform(topo, *alpha),
            GainsSpec::Explicit(entries) => {
                let pairs: Vec<((usize, usize), f64)> =
                    entries.iter().map(|&(i, j, v)| ((i, j), v)).collect();
                EdgeGains::from_pairs(topo, &pairs)
            }
        }
    }

    /// Materialize the sweep grid. The step count is fixed up front so
    /// accumulated rounding cannot change the number of points.
    pub fn grid_points(&self) -> Vec<f64> {
        let (start, stop, step) = self.grid;
        let count = ((stop - start) / step).round() as usize;
        let mut points: Vec<f64> = (0..=count).map(|k| start + k as f64 * step).collect();
        if let Some(last) = points.last_mut() {
            if (*last - stop).abs() <= 1e-9 * step {
                *last = stop;
            }
        }
        points.retain(|&p| p <= stop + 1e-9 * step);
        points
    }

    /// Canonical text form: every field written explicitly, fixed section
    /// and key order, so serializing is idempotent under re-parsing.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[fem]");
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "a1 = {}", self.a1);
        let _ = writeln!(s, "pulse_center = {}", self.pulse_center);
        let _ = writeln!(s, "pulse_width = {}", self.pulse_width);
        let _ = writeln!(s, "c_k = {}", self.c_k);
        let _ = writeln!(s, "c_f = {}", self.c_f);
        let _ = writeln!(s);
        let _ = writeln!(s, "[topology]");
        match &self.topology {
            TopologySpec::Paper5 => {
                let _ = writeln!(s, "kind = paper5");
            }
            TopologySpec::Custom { n_agents, edges } => {
                let _ = writeln!(s, "n_agents = {n_agents}");
                let list: Vec<String> = edges.iter().map(|(i, j)| format!("{i}-{j}")).collect();
                let _ = writeln!(s, "edges = {}", list.join(", "));
            }
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "[init]");
        match &self.init {
            InitSpec::Paper => {
                let _ = writeln!(s, "kind = paper");
            }
            InitSpec::Expressions(exprs) => {
                for (k, e) in exprs.iter().enumerate() {
                    let _ = writeln!(s, "x{} = {}", k + 1, e);
                }
            }
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "[sim]");
        let _ = writeln!(s, "t_end = {}", self.t_end);
        let _ = writeln!(s, "dt = {}", self.dt);
        let _ = writeln!(s);
        let _ = writeln!(s, "[sweep]");
        let _ = writeln!(s, "grid = {}:{}:{}", self.grid.0, self.grid.1, self.grid.2);
        let alphas: Vec<String> = self.trace_alphas.iter().map(|a| a.to_string()).collect();
        let _ = writeln!(s, "trace_alphas = {}", alphas.join(", "));
        let _ = writeln!(s);
        let _ = writeln!(s, "[adaptive]");
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "sigma = {}", self.sigma);
        let _ = writeln!(s, "alpha0 = {}", self.alpha0);
        let _ = writeln!(s);
        let _ = writeln!(s, "[design]");
        if let Some(which) = self.design_which {
            let _ = writeln!(s, "which = {}", which.as_str());
        }
        let _ = writeln!(
            s,
            "mode = {}",
            if self.design_multi {
                "multi"
            } else {
                "uniform"
            }
        );
        let _ = writeln!(s, "symmetric = {}", self.design_symmetric);
        let _ = writeln!(s);
        let _ = writeln!(s, "[gains]");
        match &self.gains {
            GainsSpec::Uniform(alpha) => {
                let _ = writeln!(s, "alpha = {alpha}");
            }
            GainsSpec::Explicit(entries) => {
                for (i, j, v) in entries {
                    let _ = writeln!(s, "g{i}_{j} = {v}");
                }
            }
        }
        s
    }
}

pub(crate) fn parse_grid(value: &str) -> std::result::Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = value.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected start:stop:step, got '{value}'"));
    }
    let mut nums = [0.0; 3];
    for (slot, part) in nums.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .map_err(|_| format!("'{part}' is not a number"))?;
    }
    Ok((nums[0], nums[1], nums[2]))
}
