//! Flat `key=value` configuration with command-line overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use laguerre_kernels::special::SemigroupParams;
use laguerre_kernels::transference::SystemKind;

const DEFAULTS: &[(&str, &str)] = &[
    ("system", "base_phi"),
    ("alpha", "0"),
    ("mu", "0"),
    ("m", ""),
    ("nu", "0.5"),
    ("p", "2"),
    ("q", "2.5"),
    ("eps", "0.1"),
    ("t0", "0.5"),
    ("big_m", "4"),
    ("grid_points", "20"),
    ("grid_lo", "0.05"),
    ("grid_hi", "5"),
    ("times", "0.05,0.2,1,5"),
    ("n_max", "0"),
    ("rel_tol", "1e-9"),
    ("seed", "20240611"),
    ("datum", "ground"),
    ("xs", "0.5,1,2"),
    ("t_seq", "0.05,0.025,0.0125"),
    ("tol", "0.01"),
    ("weight", "gaussian"),
    ("n_exponent", "auto"),
    ("weight_nodes", "400"),
    ("x_max", "6"),
    ("x_points", "80"),
    ("functions", "30"),
    ("y_max", "3"),
    ("t_per_decade", "64"),
    ("t_decades", "3"),
    ("sweep", "true"),
    ("samples", "50"),
    ("systems", "all"),
    ("big_t", "1"),
    ("heat_t0s", "0.05,0.1,0.25,0.5"),
    ("heat_x_points", "40"),
    ("heat_t_per_decade", "16"),
];

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Resolved configuration: every known key with its final value.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

fn parse_line(line: &str) -> Result<Option<(String, String)>, ConfigError> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let (k, v) = line.split_once('=').ok_or_else(|| ConfigError(format!("expected key=value, got {line:?}")))?;
    Ok(Some((k.trim().to_string(), v.trim().to_string())))
}

impl ExperimentConfig {
    /// Defaults, then the file, then the overrides in order.
    pub fn resolve(file: Option<&str>, overrides: &[String], seed: Option<u64>) -> Result<Self, ConfigError> {
        let mut values: BTreeMap<String, String> = DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let mut set = |k: String, v: String| -> Result<(), ConfigError> {
            if !values.contains_key(&k) {
                return Err(ConfigError(format!("unknown key {k:?}")));
            }
            values.insert(k, v);
            Ok(())
        };
        if let Some(text) = file {
            for line in text.lines() {
                if let Some((k, v)) = parse_line(line)? {
                    set(k, v)?;
                }
            }
        }
        for o in overrides {
            match parse_line(o)? {
                Some((k, v)) => set(k, v)?,
                None => return Err(ConfigError(format!("empty override {o:?}"))),
            }
        }
        if let Some(s) = seed {
            set("seed".into(), s.to_string())?;
        }
        let cfg = Self { values };
        cfg.params()?;
        Ok(cfg)
    }

    pub fn echo(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_default()
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let v = self.raw(key);
        v.parse().map_err(|_| ConfigError(format!("cannot parse {key}={v:?}")))
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        let v = self.raw(key);
        v.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| ConfigError(format!("cannot parse {key}={v:?}"))))
            .collect()
    }

    pub fn system(&self) -> Result<SystemKind, ConfigError> {
        self.raw("system").parse().map_err(|e| ConfigError(format!("{e}")))
    }

    /// Systems named by `systems`, either `all` or a comma list.
    pub fn systems(&self) -> Result<Vec<SystemKind>, ConfigError> {
        let v = self.raw("systems");
        if v == "all" {
            return Ok(SystemKind::ALL.to_vec());
        }
        v.split(',').map(|s| s.trim().parse().map_err(|e| ConfigError(format!("{e}")))).collect()
    }

    /// `(α, μ, ν)`, with `μ` taken from `m = (α+1+μ)/2` when `m` is set.
    pub fn params(&self) -> Result<SemigroupParams, ConfigError> {
        let alpha: f64 = self.get("alpha")?;
        let nu: f64 = self.get("nu")?;
        let r = if self.raw("m").is_empty() {
            SemigroupParams::new(alpha, self.get("mu")?, nu)
        } else {
            if self.raw("mu") != "0" {
                return Err(ConfigError("set either mu or m, not both".into()));
            }
            SemigroupParams::from_m(alpha, self.get("m")?, nu)
        };
        r.map_err(|e| ConfigError(format!("{e}")))
    }
}
