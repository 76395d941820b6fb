use serde::{Deserialize, Serialize};

use crate::error::{FcovError, Result};
use crate::pipeline::Method;
use crate::Alternative;

/// Innovation score standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    /// `sigma_l = 1` for `l <= 8`, zero beyond.
    Few,
    /// `sigma_l = 3^{-l}`.
    FastDecay,
    /// `sigma_l = 1 / l`.
    SlowDecay,
}

impl Setting {
    pub fn from_number(k: u32) -> Result<Self> {
        match k {
            1 => Ok(Setting::Few),
            2 => Ok(Setting::FastDecay),
            3 => Ok(Setting::SlowDecay),
            other => Err(FcovError::invalid(format!("setting must be 1, 2 or 3, got {other}"))),
        }
    }

    pub fn number(self) -> u32 {
        match self {
            Setting::Few => 1,
            Setting::FastDecay => 2,
            Setting::SlowDecay => 3,
        }
    }

    pub fn sigmas(self, d: usize) -> Vec<f64> {
        (1..=d)
            .map(|l| match self {
                Setting::Few => {
                    if l <= 8 {
                        1.0
                    } else {
                        0.0
                    }
                }
                Setting::FastDecay => 3f64.powi(-(l as i32)),
                Setting::SlowDecay => 1.0 / l as f64,
            })
            .collect()
    }

    /// Noise level used with this setting unless overridden.
    pub fn default_sigma_eps(self) -> f64 {
        match self {
            Setting::Few => 1.0,
            Setting::FastDecay => 0.2,
            Setting::SlowDecay => 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dependence {
    Iid,
    /// Tridiagonal operator on the basis coefficients.
    Far1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChangeKind {
    None,
    Amoc,
    Epidemic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MechanismKind {
    /// Eigenvalue shift `lambda_l -> lambda_l + delta_l` by rescaling scores.
    Example1,
    /// Common noise added to the first `m` directions.
    Example2,
}

/// Where the change mechanism acts under serial dependence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Injection {
    /// On the coefficients of the observed series.
    Output,
    /// On the innovation coefficients, before the recursion.
    Innovation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub setting: Setting,
    pub n: usize,
    pub basis_size: usize,
    pub grid: usize,
    pub dependence: Dependence,
    pub far_diag: f64,
    pub far_off: f64,
    pub burn_in: usize,
    pub change: ChangeKind,
    pub theta: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub mechanism: MechanismKind,
    pub injection: Injection,
    pub m: usize,
    /// `None` uses the setting's default.
    pub sigma_eps: Option<f64>,
    pub deltas: Vec<f64>,
    pub replications: usize,
    pub bootstrap: usize,
    pub block: Option<usize>,
    pub seed: u64,
    /// Projection dimension of the multivariate method.
    pub d: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub alphas: Vec<f64>,
    pub methods: Vec<Method>,
    /// Tested alternative; `None` follows the change kind.
    pub alternative: Option<Alternative>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            setting: Setting::Few,
            n: 200,
            basis_size: 55,
            grid: 101,
            dependence: Dependence::Far1,
            far_diag: 0.4,
            far_off: 0.1,
            burn_in: 100,
            change: ChangeKind::Amoc,
            theta: 0.5,
            theta1: 0.25,
            theta2: 0.75,
            mechanism: MechanismKind::Example2,
            injection: Injection::Output,
            m: 2,
            sigma_eps: None,
            deltas: Vec::new(),
            replications: 1000,
            bootstrap: 1000,
            block: None,
            seed: 0,
            d: 8,
            eps1: crate::statistics::DEFAULT_EPS1,
            eps2: crate::statistics::DEFAULT_EPS2,
            alphas: vec![0.01, 0.025, 0.05, 0.10],
            methods: vec![Method::Multi, Method::Func, Method::Wfunc],
            alternative: None,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| FcovError::invalid(format!("{key}: cannot parse '{v}'")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| num(key, s)).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl SimulationConfig {
    /// Parse `key=value` lines over the defaults. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| FcovError::invalid(format!("line {}: expected key=value, got '{line}'", i + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Set one option by its `key=value` name.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "setting" => self.setting = Setting::from_number(num(key, v)?)?,
            "n" => self.n = num(key, v)?,
            "D" => self.basis_size = num(key, v)?,
            "grid" => self.grid = num(key, v)?,
            "dependence" => {
                self.dependence = match v {
                    "iid" => Dependence::Iid,
                    "far1" => Dependence::Far1,
                    _ => return Err(FcovError::invalid(format!("dependence must be iid or far1, got '{v}'"))),
                }
            }
            "far_diag" => self.far_diag = num(key, v)?,
            "far_off" => self.far_off = num(key, v)?,
            "burn_in" => self.burn_in = num(key, v)?,
            "change" => {
                self.change = match v {
                    "none" => ChangeKind::None,
                    "amoc" => ChangeKind::Amoc,
                    "epidemic" => ChangeKind::Epidemic,
                    _ => return Err(FcovError::invalid(format!("change must be none, amoc or epidemic, got '{v}'"))),
                }
            }
            "theta" => self.theta = num(key, v)?,
            "theta1" => self.theta1 = num(key, v)?,
            "theta2" => self.theta2 = num(key, v)?,
            "mechanism" => {
                self.mechanism = match v {
                    "example1" => MechanismKind::Example1,
                    "example2" => MechanismKind::Example2,
                    _ => return Err(FcovError::invalid(format!("mechanism must be example1 or example2, got '{v}'"))),
                }
            }
            "injection" => {
                self.injection = match v {
                    "output" => Injection::Output,
                    "innovation" => Injection::Innovation,
                    _ => return Err(FcovError::invalid(format!("injection must be output or innovation, got '{v}'"))),
                }
            }
            "m" => self.m = num(key, v)?,
            "sigma_eps" => self.sigma_eps = Some(num(key, v)?),
            "delta" => self.deltas = list(key, v)?,
            "N" => self.replications = num(key, v)?,
            "B" => self.bootstrap = num(key, v)?,
            "K" => self.block = Some(num(key, v)?),
            "seed" => self.seed = num(key, v)?,
            "d" => self.d = num(key, v)?,
            "eps1" => self.eps1 = num(key, v)?,
            "eps2" => self.eps2 = num(key, v)?,
            "alphas" => self.alphas = list(key, v)?,
            "methods" => self.methods = v.split(',').map(|s| s.trim().parse()).collect::<Result<_>>()?,
            "alternative" => self.alternative = Some(v.parse()?),
            other => return Err(FcovError::invalid(format!("unknown simulation option '{other}'"))),
        }
        Ok(())
    }

    /// Canonical `key=value` form; parsing it gives back this config.
    pub fn to_kv_string(&self) -> String {
        let mut lines = vec![
            format!("setting={}", self.setting.number()),
            format!("n={}", self.n),
            format!("D={}", self.basis_size),
            format!("grid={}", self.grid),
            format!("dependence={}", if self.dependence == Dependence::Iid { "iid" } else { "far1" }),
            format!("far_diag={}", self.far_diag),
            format!("far_off={}", self.far_off),
            format!("burn_in={}", self.burn_in),
            format!(
                "change={}",
                match self.change {
                    ChangeKind::None => "none",
                    ChangeKind::Amoc => "amoc",
                    ChangeKind::Epidemic => "epidemic",
                }
            ),
            format!("theta={}", self.theta),
            format!("theta1={}", self.theta1),
            format!("theta2={}", self.theta2),
            format!("mechanism={}", if self.mechanism == MechanismKind::Example1 { "example1" } else { "example2" }),
            format!("injection={}", if self.injection == Injection::Output { "output" } else { "innovation" }),
            format!("m={}", self.m),
        ];
        if let Some(s) = self.sigma_eps {
            lines.push(format!("sigma_eps={s}"));
        }
        if !self.deltas.is_empty() {
            lines.push(format!("delta={}", join(&self.deltas)));
        }
        lines.push(format!("N={}", self.replications));
        lines.push(format!("B={}", self.bootstrap));
        if let Some(k) = self.block {
            lines.push(format!("K={k}"));
        }
        lines.push(format!("seed={}", self.seed));
        lines.push(format!("d={}", self.d));
        lines.push(format!("eps1={}", self.eps1));
        lines.push(format!("eps2={}", self.eps2));
        lines.push(format!("alphas={}", join(&self.alphas)));
        lines.push(format!("methods={}", join(&self.methods)));
        if let Some(a) = self.alternative {
            lines.push(format!("alternative={a}"));
        }
        let mut s = lines.join("\n");
        s.push('\n');
        s
    }

    /// FNV-1a hash of the canonical form.
    pub fn config_hash(&self) -> u64 {
        self.to_kv_string().bytes().fold(0xcbf29ce484222325, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
    }

    pub fn sigma_eps(&self) -> f64 {
        self.sigma_eps.unwrap_or_else(|| self.setting.default_sigma_eps())
    }

    pub fn burn_in_steps(&self) -> usize {
        if self.dependence == Dependence::Far1 {
            self.burn_in
        } else {
            0
        }
    }

    pub fn tested_alternative(&self) -> Alternative {
        self.alternative.unwrap_or(if self.change == ChangeKind::Epidemic {
            Alternative::Epidemic
        } else {
            Alternative::Amoc
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FcovError::InvalidInput(msg));
        if self.n < 4 {
            return bad(format!("n = {} too small", self.n));
        }
        if self.basis_size == 0 || self.grid < 2 {
            return bad("need D >= 1 and grid >= 2".into());
        }
        match self.change {
            ChangeKind::None => {}
            ChangeKind::Amoc => {
                if !(self.theta > 0.0 && self.theta < 1.0) {
                    return bad(format!("theta must lie in (0, 1), got {}", self.theta));
                }
            }
            ChangeKind::Epidemic => {
                if !(0.0 < self.theta1 && self.theta1 < self.theta2 && self.theta2 < 1.0) {
                    return bad(format!("need 0 < theta1 < theta2 < 1, got ({}, {})", self.theta1, self.theta2));
                }
            }
        }
        match (self.change, self.mechanism) {
            (ChangeKind::None, _) => {}
            (_, MechanismKind::Example2) => {
                if self.m == 0 || self.m > self.basis_size {
                    return bad(format!("m = {} outside 1..={}", self.m, self.basis_size));
                }
                if !(self.sigma_eps() >= 0.0) {
                    return bad("sigma_eps must be >= 0".into());
                }
            }
            (_, MechanismKind::Example1) => {
                if self.deltas.len() > self.basis_size {
                    return bad(format!("{} shifts for {} directions", self.deltas.len(), self.basis_size));
                }
                let sigma = self.setting.sigmas(self.basis_size);
                for (l, d) in self.deltas.iter().enumerate() {
                    let lambda = sigma[l] * sigma[l];
                    if *d != 0.0 && !(lambda + d > 0.0 && lambda > 0.0) {
                        return bad(format!("shift {d} of direction {} needs delta > -lambda = {}", l + 1, -lambda));
                    }
                }
            }
        }
        if self.replications == 0 || self.bootstrap == 0 {
            return bad("N and B must be >= 1".into());
        }
        if self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return bad("alphas must lie in (0, 1)".into());
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if self.d == 0 {
            return bad("d must be >= 1".into());
        }
        Ok(())
    }
}
