//! Run configuration: defaults, then the `key = value` file, then flags.

use std::fmt;
use std::path::{Path, PathBuf};

use phdae::circuits::{CircuitParams, ControlVariant};
use phdae::collocation::{NewtonOptions, MAX_STAGES};
use phdae::scenarios::{ScenarioConfig, ScenarioKind};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    pub params: CircuitParams,
    pub power: f64,
    pub alpha: f64,
    pub stages: usize,
    pub h: f64,
    pub t_final: Option<f64>,
    pub newton: NewtonOptions,
    pub control: Option<ControlVariant>,
    pub raw_endpoints: bool,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub samples: usize,
    pub tol: f64,
    pub h_list: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let base = ScenarioConfig::default();
        RunConfig {
            scenario: ScenarioKind::CircuitUncontrolled,
            params: base.params,
            power: base.power,
            alpha: base.alpha,
            stages: base.stages,
            h: base.h,
            t_final: None,
            newton: base.newton,
            control: None,
            raw_endpoints: false,
            out: None,
            seed: 0,
            samples: 200,
            tol: 1e-9,
            h_list: None,
        }
    }
}

pub fn parse_control(s: &str) -> Result<ControlVariant> {
    match s {
        "hold" => Ok(ControlVariant::RampThenHold),
        "verbatim" => Ok(ControlVariant::RampToUstar),
        "zero" => Ok(ControlVariant::OpenLoopZero),
        _ => Err(err(format!(
            "unknown control `{s}` (expected hold, verbatim or zero)"
        ))),
    }
}

pub fn parse_h_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| err(format!("bad step size `{v}` in h list")))
        })
        .collect()
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

impl RunConfig {
    /// Applies one `key = value` pair. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = || {
            value
                .parse::<f64>()
                .map_err(|_| err(format!("`{key}` expects a number, got `{value}`")))
        };
        let int = || {
            value.parse::<u64>().map_err(|_| {
                err(format!(
                    "`{key}` expects a non-negative integer, got `{value}`"
                ))
            })
        };
        match key {
            "L" => self.params.l = num()?,
            "C1" => self.params.c1 = num()?,
            "C2" => self.params.c2 = num()?,
            "RL" => self.params.r_l = num()?,
            "RG" => self.params.r_g = num()?,
            "RR" => self.params.r_r = num()?,
            "P" => self.power = num()?,
            "alpha" => self.alpha = num()?,
            "scenario" => {
                self.scenario = value
                    .parse()
                    .map_err(|e: phdae::Error| err(e.to_string()))?
            }
            "stages" => self.stages = int()? as usize,
            "h" => self.h = num()?,
            "t_final" => self.t_final = Some(num()?),
            "seed" => self.seed = int()?,
            "samples" => self.samples = int()? as usize,
            "tol" => self.tol = num()?,
            "out" => self.out = Some(PathBuf::from(value)),
            "h_list" => self.h_list = Some(parse_h_list(value)?),
            "control" => self.control = Some(parse_control(value)?),
            "raw_endpoints" => {
                self.raw_endpoints = parse_bool(value)
                    .ok_or_else(|| err(format!("`{key}` expects true or false, got `{value}`")))?
            }
            "newton_abs_tol" => self.newton.abs_tol = num()?,
            "newton_rel_tol" => self.newton.rel_tol = num()?,
            "newton_max_iter" => self.newton.max_iter = int()? as usize,
            "newton_fd_step" => self.newton.fd_step = num()?,
            _ => return Err(err(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("line {}: expected `key = value`", idx + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| err(format!("line {}: {e}", idx + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
            .map_err(|e| err(format!("{}: {e}", path.display())))
    }

    pub fn check(&self) -> Result<()> {
        if !(1..=MAX_STAGES).contains(&self.stages) {
            return Err(err(format!(
                "stages must lie in 1..={MAX_STAGES}, got {}",
                self.stages
            )));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(err(format!("h must be positive, got {}", self.h)));
        }
        if let Some(t) = self.t_final {
            if !(t.is_finite() && t > 0.0) {
                return Err(err(format!("t_final must be positive, got {t}")));
            }
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(err(format!("tol must be positive, got {}", self.tol)));
        }
        if self.samples == 0 {
            return Err(err("samples must be at least 1"));
        }
        Ok(())
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            params: self.params,
            power: self.power,
            alpha: self.alpha,
            stages: self.stages,
            h: self.h,
            t_final: self.t_final,
            newton: self.newton,
            control: self.control,
            raw_endpoints: self.raw_endpoints,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_keys_override_defaults() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# circuit\nL = 3\nP=12.5\nscenario = decay\nh_list = 0.1, 0.05,0.025\ncontrol = verbatim\n")
            .unwrap();
        assert_eq!(cfg.params.l, 3.0);
        assert_eq!(cfg.power, 12.5);
        assert_eq!(cfg.scenario, ScenarioKind::Decay);
        assert_eq!(cfg.h_list, Some(vec![0.1, 0.05, 0.025]));
        assert_eq!(cfg.control, Some(ControlVariant::RampToUstar));
    }

    #[test]
    fn unknown_key_names_the_line() {
        let e = RunConfig::default()
            .apply_text("h = 0.1\nbogus = 2\n")
            .unwrap_err();
        assert!(e.0.contains("line 2") && e.0.contains("bogus"), "{e}");
    }

    #[test]
    fn invariants() {
        let mut cfg = RunConfig {
            stages: 6,
            ..RunConfig::default()
        };
        assert!(cfg.check().is_err());
        cfg.stages = 2;
        cfg.h = 0.0;
        assert!(cfg.check().is_err());
        cfg.h = 0.1;
        cfg.t_final = Some(-1.0);
        assert!(cfg.check().is_err());
    }
}
