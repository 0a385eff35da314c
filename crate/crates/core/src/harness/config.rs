//! Flat `key = value` run configuration with dotted section prefixes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::multiindex::{MultiIndex, DEFAULT_ENUMERATION_CAP};
use crate::regularize::{Atom, MollifierSpec, Scaling};
use crate::vws::{GaussianBump, DEFAULT_EPS, DEFAULT_N_MIN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve,
    Vws,
    Consistency,
    Negligibility,
    Moderate,
    Sample,
    Section6,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Solve,
        Command::Vws,
        Command::Consistency,
        Command::Negligibility,
        Command::Moderate,
        Command::Sample,
        Command::Section6,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Vws => "vws",
            Command::Consistency => "consistency",
            Command::Negligibility => "negligibility",
            Command::Moderate => "moderate",
            Command::Sample => "sample",
            Command::Section6 => "section6",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::Validation(format!("unknown command {s:?}")))
    }
}

/// Every key the configuration accepts.
pub const KNOWN_KEYS: &[&str] = &[
    "command",
    "out",
    "seed",
    "threads",
    "grid.x_min",
    "grid.x_max",
    "grid.nx",
    "grid.t_final",
    "grid.nt",
    "truncation.k",
    "truncation.p",
    "truncation.cap",
    "operator.m",
    "operator.w",
    "data.force",
    "data.initial",
    "data.modes",
    "data.p_f",
    "data.p_g",
    "potential.kind",
    "potential.s",
    "potential.atoms",
    "potential.bumps",
    "mollifier.scaling",
    "eps",
    "p",
    "m",
    "negligibility.net2",
    "negligibility.order",
    "negligibility.center",
    "negligibility.n_min",
    "sample.count",
];

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Parse(format!(
                "line {}: expected key = value, got {raw:?}",
                no + 1
            ))
        })?;
        let key = k.trim().to_string();
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Validation(format!(
                "line {}: duplicate key {key:?}",
                no + 1
            )));
        }
    }
    Ok(map)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceKind {
    Zero,
    /// `f(t,x) = e^{-x²}` plus `e^{-x²/2} W_t`.
    Section6,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Zero,
    /// `W_x`.
    WhiteNoise,
    /// `e^{-x²/2}` in the zeroth coefficient.
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialConfig {
    None,
    Atoms {
        s: f64,
        atoms: Vec<(MultiIndex, Atom)>,
    },
    Smooth {
        bumps: Vec<(MultiIndex, GaussianBump)>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Net2Kind {
    Perturbed,
    Standard,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DataConfig {
    pub force: ForceKind,
    pub initial: InitialKind,
    pub modes: usize,
    pub p_f: u32,
    pub p_g: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NegligibilityConfig {
    pub net2: Net2Kind,
    pub order: f64,
    pub center: f64,
    pub n_min: f64,
}

/// Validated run configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    /// Output directory; not part of the output.
    #[serde(skip)]
    pub out: PathBuf,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool. Not part of the output.
    #[serde(skip)]
    pub threads: Option<usize>,
    pub grid: GridSpec,
    pub truncation_k: usize,
    pub truncation_p: u32,
    pub truncation_cap: usize,
    pub operator_m: f64,
    pub operator_w: f64,
    pub data: DataConfig,
    pub potential: PotentialConfig,
    pub mollifier: MollifierSpec,
    pub eps: Vec<f64>,
    pub p: Option<u32>,
    pub m: u32,
    pub negligibility: NegligibilityConfig,
    pub sample_count: u64,
    /// The key-value pairs the configuration was built from.
    pub echo: BTreeMap<String, String>,
}

struct Keys<'a> {
    map: &'a BTreeMap<String, String>,
}

impl Keys<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Validation(format!("key {key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn block_present(&self, prefix: &str) -> bool {
        self.map.keys().any(|k| k.starts_with(prefix))
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::Validation(format!("key {key}: bad number {x:?}")))
        })
        .collect()
}

/// `gamma@location[:weight[:order]]` entries separated by `;`.
fn parse_atoms(v: &str) -> Result<Vec<(MultiIndex, Atom)>> {
    v.split(';')
        .map(str::trim)
        .filter(|e| !e.is_empty())
        .map(|entry| {
            let (g, rest) = entry.split_once('@').ok_or_else(|| {
                Error::Validation(format!(
                    "potential.atoms: expected gamma@location, got {entry:?}"
                ))
            })?;
            let parts: Vec<&str> = rest.split(':').collect();
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Validation(format!("potential.atoms: bad number {s:?}")))
            };
            let location = num(parts[0])?;
            let weight = parts.get(1).map(|s| num(s)).transpose()?.unwrap_or(1.0);
            let order = parts
                .get(2)
                .map(|s| {
                    s.trim()
                        .parse::<u32>()
                        .map_err(|_| Error::Validation(format!("potential.atoms: bad order {s:?}")))
                })
                .transpose()?
                .unwrap_or(0);
            if parts.len() > 3 {
                return Err(Error::Validation(format!(
                    "potential.atoms: too many fields in {entry:?}"
                )));
            }
            Ok((
                g.parse::<MultiIndex>()
                    .map_err(|e| Error::Validation(format!("potential.atoms: {e}")))?,
                Atom {
                    location,
                    weight,
                    order,
                },
            ))
        })
        .collect()
}

/// `gamma@center:amplitude:sigma` entries separated by `;`.
fn parse_bumps(v: &str) -> Result<Vec<(MultiIndex, GaussianBump)>> {
    v.split(';')
        .map(str::trim)
        .filter(|e| !e.is_empty())
        .map(|entry| {
            let (g, rest) = entry.split_once('@').ok_or_else(|| {
                Error::Validation(format!(
                    "potential.bumps: expected gamma@center:amp:sigma, got {entry:?}"
                ))
            })?;
            let nums = parse_list("potential.bumps", &rest.replace(':', ","))?;
            if nums.len() != 3 || nums[2].is_nan() || nums[2] <= 0.0 {
                return Err(Error::Validation(format!(
                    "potential.bumps: need center:amplitude:sigma with sigma > 0 in {entry:?}"
                )));
            }
            Ok((
                g.parse::<MultiIndex>()
                    .map_err(|e| Error::Validation(format!("potential.bumps: {e}")))?,
                GaussianBump {
                    center: nums[0],
                    amplitude: nums[1],
                    sigma: nums[2],
                },
            ))
        })
        .collect()
}

/// Blocks each command needs in the configuration; the section6 command
/// falls back on its preset instead.
fn required_blocks(command: Command) -> &'static [&'static str] {
    match command {
        Command::Section6 => &[],
        Command::Solve | Command::Sample => &["grid", "truncation"],
        Command::Moderate => &["grid", "potential", "mollifier"],
        Command::Vws | Command::Negligibility => &["grid", "truncation", "potential", "mollifier"],
        Command::Consistency => &["grid", "truncation", "potential"],
    }
}

impl RunConfig {
    /// Build from parsed key-value pairs. `command` overrides a `command`
    /// key in the map.
    pub fn from_map(command: Option<Command>, map: &BTreeMap<String, String>) -> Result<Self> {
        for key in map.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Validation(format!(
                    "unknown configuration key {key:?}"
                )));
            }
        }
        let keys = Keys { map };
        let command = match command {
            Some(c) => c,
            None => keys
                .raw("command")
                .ok_or_else(|| Error::Validation("no command given".into()))?
                .parse()?,
        };
        for block in required_blocks(command) {
            if !keys.block_present(&format!("{block}.")) {
                return Err(Error::Validation(format!(
                    "command {command} needs the [{block}] block (keys {block}.*)"
                )));
            }
        }
        let s6 = command == Command::Section6;
        let preset = super::presets::Section6Preset::default();

        let grid_block = |key: &str| -> Result<()> {
            if !s6 && keys.raw(key).is_none() {
                return Err(Error::Validation(format!("grid block is missing {key}")));
            }
            Ok(())
        };
        for k in [
            "grid.x_min",
            "grid.x_max",
            "grid.nx",
            "grid.t_final",
            "grid.nt",
        ] {
            grid_block(k)?;
        }
        let grid = GridSpec {
            x_min: keys.or("grid.x_min", preset.grid.x_min)?,
            x_max: keys.or("grid.x_max", preset.grid.x_max)?,
            nx: keys.or("grid.nx", preset.grid.nx)?,
            t_final: keys.or("grid.t_final", preset.grid.t_final)?,
            nt: keys.or("grid.nt", preset.grid.nt)?,
        };
        grid.validate()
            .map_err(|e| Error::Validation(format!("grid block: {e}")))?;

        let (def_k, def_p) = if s6 { (preset.modes, 2) } else { (6, 3) };
        let truncation_k: usize = keys.or("truncation.k", def_k)?;
        let truncation_p: u32 = keys.or("truncation.p", def_p)?;
        let truncation_cap: usize = keys.or("truncation.cap", DEFAULT_ENUMERATION_CAP)?;
        if truncation_k == 0 {
            return Err(Error::Validation("truncation.k must be at least 1".into()));
        }

        let data = DataConfig {
            force: match keys
                .raw("data.force")
                .unwrap_or(if s6 { "section6" } else { "zero" })
            {
                "zero" => ForceKind::Zero,
                "section6" => ForceKind::Section6,
                other => {
                    return Err(Error::Validation(format!(
                        "data.force: unknown kind {other:?}"
                    )))
                }
            },
            initial: match keys.raw("data.initial").unwrap_or(if s6 {
                "white_noise"
            } else {
                "zero"
            }) {
                "zero" => InitialKind::Zero,
                "white_noise" => InitialKind::WhiteNoise,
                "gaussian" => InitialKind::Gaussian,
                other => {
                    return Err(Error::Validation(format!(
                        "data.initial: unknown kind {other:?}"
                    )))
                }
            },
            modes: keys.or("data.modes", preset.modes.min(truncation_k))?,
            p_f: keys.or("data.p_f", 1)?,
            p_g: keys.or("data.p_g", 2)?,
        };
        if data.modes == 0 || data.modes > truncation_k {
            return Err(Error::Validation(format!(
                "data.modes = {} must lie in 1..={truncation_k}",
                data.modes
            )));
        }

        let potential =
            match keys
                .raw("potential.kind")
                .unwrap_or(if s6 { "atoms" } else { "none" })
            {
                "none" => PotentialConfig::None,
                "atoms" => {
                    let s = keys.or("potential.s", 1.0)?;
                    let atoms = match keys.raw("potential.atoms") {
                        Some(v) => parse_atoms(v)?,
                        None if s6 => preset.atoms(),
                        None => {
                            return Err(Error::Validation(
                                "potential block is missing potential.atoms".into(),
                            ))
                        }
                    };
                    PotentialConfig::Atoms { s, atoms }
                }
                "smooth" => {
                    let bumps = parse_bumps(keys.raw("potential.bumps").ok_or_else(|| {
                        Error::Validation("potential block is missing potential.bumps".into())
                    })?)?;
                    PotentialConfig::Smooth { bumps }
                }
                other => {
                    return Err(Error::Validation(format!(
                        "potential.kind: unknown kind {other:?}"
                    )))
                }
            };
        match (command, &potential) {
            (
                Command::Vws | Command::Negligibility | Command::Moderate | Command::Section6,
                PotentialConfig::Atoms { .. },
            ) => {}
            (Command::Vws | Command::Negligibility | Command::Moderate | Command::Section6, _) => {
                return Err(Error::Validation(format!(
                    "command {command} needs potential.kind = atoms"
                )));
            }
            (Command::Consistency, PotentialConfig::Smooth { .. }) => {}
            (Command::Consistency, _) => {
                return Err(Error::Validation(
                    "command consistency needs potential.kind = smooth".into(),
                ));
            }
            (_, PotentialConfig::Atoms { .. }) => {
                return Err(Error::Validation(format!(
                    "command {command} solves bounded problems; use potential.kind = none or smooth"
                )));
            }
            _ => {}
        }

        let scaling_default = if s6 { "log" } else { "standard" };
        let mollifier = MollifierSpec {
            scaling: match keys.raw("mollifier.scaling").unwrap_or(scaling_default) {
                "standard" => Scaling::Standard,
                "log" => Scaling::Log,
                other => {
                    return Err(Error::Validation(format!(
                        "mollifier.scaling: unknown scaling {other:?}"
                    )))
                }
            },
        };
        let eps = match keys.raw("eps") {
            Some(v) => parse_list("eps", v)?,
            None => DEFAULT_EPS.to_vec(),
        };
        if eps.iter().any(|&e| !(e > 0.0 && e < 1.0))
            || eps.windows(2).any(|w| w[1] >= w[0])
            || eps.is_empty()
        {
            return Err(Error::Validation(format!(
                "eps must be strictly decreasing values in (0, 1), got {eps:?}"
            )));
        }
        let m: u32 = keys.or("m", 2)?;
        if m < 2 {
            return Err(Error::Validation(format!("m = {m} must be at least 2")));
        }
        let operator_m: f64 = keys.or("operator.m", 1.0)?;
        let operator_w: f64 = keys.or("operator.w", 0.0)?;
        if !(operator_m > 0.0 && operator_m.is_finite() && operator_w.is_finite()) {
            return Err(Error::Validation(
                "operator.m must be positive and operator.w finite".into(),
            ));
        }

        let negligibility = NegligibilityConfig {
            net2: match keys.raw("negligibility.net2").unwrap_or("perturbed") {
                "perturbed" => Net2Kind::Perturbed,
                "standard" => Net2Kind::Standard,
                "log" => Net2Kind::Log,
                other => {
                    return Err(Error::Validation(format!(
                        "negligibility.net2: unknown net {other:?}"
                    )))
                }
            },
            order: keys.or("negligibility.order", 2.0)?,
            center: keys.or("negligibility.center", 0.0)?,
            n_min: keys.or("negligibility.n_min", DEFAULT_N_MIN)?,
        };
        let sample_count: u64 = keys.or("sample.count", 1)?;
        if sample_count == 0 {
            return Err(Error::Validation("sample.count must be positive".into()));
        }
        let threads: Option<usize> = keys.get("threads")?;
        if threads == Some(0) {
            return Err(Error::Validation("threads must be positive".into()));
        }

        let mut echo = map.clone();
        echo.remove("threads");
        echo.remove("out");
        echo.insert("command".into(), command.to_string());
        Ok(RunConfig {
            command,
            out: PathBuf::from(keys.raw("out").unwrap_or("out")),
            seed: keys.or("seed", 0)?,
            threads,
            grid,
            truncation_k,
            truncation_p,
            truncation_cap,
            operator_m,
            operator_w,
            data,
            potential,
            mollifier,
            eps,
            p: keys.get("p")?,
            m,
            negligibility,
            sample_count,
            echo,
        })
    }

    pub fn from_text(command: Option<Command>, text: &str) -> Result<Self> {
        Self::from_map(command, &parse_key_values(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
        # zero data
        grid.x_min = -5
        grid.x_max = 5
        grid.nx = 41
        grid.t_final = 0.5
        grid.nt = 11
        truncation.k = 2
        truncation.p = 2
    ";

    #[test]
    fn minimal_solve_config() {
        let c = RunConfig::from_text(Some(Command::Solve), MINIMAL).unwrap();
        assert_eq!(c.grid.nx, 41);
        assert_eq!(c.potential, PotentialConfig::None);
        assert_eq!(c.echo["command"], "solve");
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_text(Some(Command::Solve), &format!("{MINIMAL}\ngrid.dx = 3"))
            .unwrap_err();
        assert!(err.to_string().contains("grid.dx"));
    }

    #[test]
    fn missing_grid_block_is_named() {
        let err = RunConfig::from_text(Some(Command::Solve), "truncation.k = 2").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("grid"));
    }

    #[test]
    fn section6_defaults() {
        let c = RunConfig::from_text(Some(Command::Section6), "").unwrap();
        assert_eq!(c.grid.nx, 401);
        assert_eq!(c.mollifier.scaling, Scaling::Log);
        match &c.potential {
            PotentialConfig::Atoms { s, atoms } => {
                assert_eq!(*s, 1.0);
                assert_eq!(atoms.len(), 5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn atom_and_bump_lists_parse() {
        let a = parse_atoms("(0)@0; (1)@-0.15:2; (0,1)@0.3:1:1").unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a[2].0, MultiIndex::unit(2));
        assert_eq!(a[2].1.order, 1);
        assert_eq!(a[1].1.weight, 2.0);
        let b = parse_bumps("(0)@0.5:1.2:0.7").unwrap();
        assert_eq!(b[0].1.sigma, 0.7);
        assert!(parse_bumps("(0)@0.5:1.2").is_err());
        assert!(parse_atoms("(0)0.5").is_err());
    }

    #[test]
    fn malformed_lines_and_duplicates() {
        assert!(parse_key_values("grid.nx 41").is_err());
        assert!(parse_key_values("a = 1\na = 2").is_err());
    }
}
