//! Experiment configuration and the two power-study drivers.
//!
//! ```toml
//! seed = 7
//! reps = 10000
//! alpha = 0.01
//!
//! [figure2a]
//! k_values = [20, 100, 500]
//! rho = 0.9
//! settings = [1, 2]
//! deltas = [0.0, 0.5, 1.0]      # default 0, 0.25, ..., 5
//!
//! [figure2]
//! n_values = [2, 10, 100]
//! deltas = [0.0, 0.5]           # default 0, 0.1, ..., 3
//! ville_random_threshold = false
//! ```

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

use super::power::{estimate_powers, Method};
use super::scenario::GaussianScenario;

fn default_seed() -> u64 {
    0
}
fn default_reps() -> usize {
    10_000
}
fn default_alpha() -> f64 {
    0.01
}

pub fn default_figure2a_deltas() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.25).collect()
}

pub fn default_figure2_deltas() -> Vec<f64> {
    (0..=30).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure2aConfig {
    #[serde(default = "Figure2aConfig::default_k")]
    pub k_values: Vec<usize>,
    #[serde(default = "Figure2aConfig::default_rho")]
    pub rho: f64,
    #[serde(default = "Figure2aConfig::default_settings")]
    pub settings: Vec<u8>,
    #[serde(default = "default_figure2a_deltas")]
    pub deltas: Vec<f64>,
    /// Overrides the per-setting method lists.
    #[serde(default)]
    pub methods: Option<Vec<String>>,
}

impl Figure2aConfig {
    fn default_k() -> Vec<usize> {
        vec![20, 100, 500]
    }
    fn default_rho() -> f64 {
        0.9
    }
    fn default_settings() -> Vec<u8> {
        vec![1, 2]
    }
}

impl Default for Figure2aConfig {
    fn default() -> Self {
        Self {
            k_values: Self::default_k(),
            rho: Self::default_rho(),
            settings: Self::default_settings(),
            deltas: default_figure2a_deltas(),
            methods: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure2Config {
    #[serde(default = "Figure2Config::default_n")]
    pub n_values: Vec<usize>,
    #[serde(default = "default_figure2_deltas")]
    pub deltas: Vec<f64>,
    /// Also run the Ville test against `1/V`.
    #[serde(default)]
    pub ville_random_threshold: bool,
    #[serde(default)]
    pub methods: Option<Vec<String>>,
}

impl Figure2Config {
    fn default_n() -> Vec<usize> {
        vec![2, 10, 100]
    }
}

impl Default for Figure2Config {
    fn default() -> Self {
        Self {
            n_values: Self::default_n(),
            deltas: default_figure2_deltas(),
            ville_random_threshold: false,
            methods: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub figure2a: Figure2aConfig,
    #[serde(default)]
    pub figure2: Figure2Config,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            reps: default_reps(),
            alpha: default_alpha(),
            figure2a: Figure2aConfig::default(),
            figure2: Figure2Config::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// One output row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub setting: String,
    #[serde(rename = "K_or_n")]
    pub k_or_n: usize,
    pub delta: f64,
    pub method: String,
    pub power: f64,
    pub std_err: f64,
    pub reps: usize,
    pub seed: u64,
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    names.iter().map(|n| n.parse()).collect()
}

pub fn run_figure2a(c: &ExperimentConfig) -> Result<Vec<PowerRow>> {
    let f = &c.figure2a;
    let custom = f.methods.as_deref().map(parse_methods).transpose()?;
    let mut rows = Vec::new();
    for &setting in &f.settings {
        let methods: Vec<Method> = match (&custom, setting) {
            (Some(m), _) => m.clone(),
            (None, 1) => Method::SETTING_1.to_vec(),
            (None, 2) => Method::SETTING_2.to_vec(),
            (None, s) => return Err(domain(format!("unknown setting {s}; expected 1 or 2"))),
        };
        if !(1..=2).contains(&setting) {
            return Err(domain(format!("unknown setting {setting}; expected 1 or 2")));
        }
        if let Some(m) = methods.iter().find(|m| m.uses_observations()) {
            return Err(domain(format!("{m} is a martingale test")));
        }
        for &k in &f.k_values {
            for &delta in &f.deltas {
                let s = GaussianScenario {
                    k,
                    delta,
                    rho: f.rho,
                    independent_first: setting == 2,
                    n: 1,
                    reps: c.reps,
                    seed: c.seed,
                };
                for e in estimate_powers(&s, &methods, c.alpha)? {
                    rows.push(PowerRow {
                        setting: setting.to_string(),
                        k_or_n: k,
                        delta,
                        method: e.method,
                        power: e.power,
                        std_err: e.std_err,
                        reps: e.reps,
                        seed: c.seed,
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn run_figure2(c: &ExperimentConfig) -> Result<Vec<PowerRow>> {
    let f = &c.figure2;
    let mut methods = match &f.methods {
        Some(m) => parse_methods(m)?,
        None => Method::MARTINGALE.to_vec(),
    };
    if f.ville_random_threshold && !methods.contains(&Method::VilleMaxRandom) {
        methods.push(Method::VilleMaxRandom);
    }
    if let Some(m) = methods.iter().find(|m| !m.uses_observations()) {
        return Err(domain(format!("{m} is not a martingale test")));
    }
    let mut rows = Vec::new();
    for &n in &f.n_values {
        for &delta in &f.deltas {
            let s = GaussianScenario {
                k: 1,
                delta,
                rho: 0.0,
                independent_first: false,
                n,
                reps: c.reps,
                seed: c.seed,
            };
            for e in estimate_powers(&s, &methods, c.alpha)? {
                rows.push(PowerRow {
                    setting: "martingale".into(),
                    k_or_n: n,
                    delta,
                    method: e.method,
                    power: e.power,
                    std_err: e.std_err,
                    reps: e.reps,
                    seed: c.seed,
                });
            }
        }
    }
    Ok(rows)
}

/// Writes rows with the header `setting,K_or_n,delta,method,power,std_err,reps,seed`.
pub fn write_power_csv<W: Write>(rows: &[PowerRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["setting", "K_or_n", "delta", "method", "power", "std_err", "reps", "seed"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            r#"
            seed = 3
            reps = 200
            [figure2a]
            k_values = [5, 20]
            deltas = [0.0, 1.0, 2.0]
            [figure2]
            n_values = [2]
            deltas = [0.0, 1.0]
            ville_random_threshold = true
            "#,
        )
        .unwrap()
    }

    #[test]
    fn defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.figure2a.deltas.len(), 21);
        assert_eq!(c.figure2a.deltas[20], 5.0);
        assert_eq!(c.figure2.deltas.len(), 31);
        assert_eq!(c.figure2.deltas[30], 3.0);
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn row_counts() {
        let c = small();
        let rows = run_figure2a(&c).unwrap();
        assert_eq!(rows.len(), 2 * 3 * (5 + 6));
        let rows = run_figure2(&c).unwrap();
        assert_eq!(rows.len(), 2 * 6);
        assert!(rows.iter().any(|r| r.method == "ville-max-random"));
    }

    #[test]
    fn csv_header_and_determinism() {
        let c = small();
        let mut a = Vec::new();
        write_power_csv(&run_figure2a(&c).unwrap(), &mut a).unwrap();
        let mut b = Vec::new();
        write_power_csv(&run_figure2a(&c).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("setting,K_or_n,delta,method,power,std_err,reps,seed\n"));
        let mut e = Vec::new();
        write_power_csv(&[], &mut e).unwrap();
        assert_eq!(String::from_utf8(e).unwrap(), "setting,K_or_n,delta,method,power,std_err,reps,seed\n");
    }

    #[test]
    fn rejects_mismatched_methods() {
        let mut c = small();
        c.figure2a.methods = Some(vec!["ville-max".into()]);
        assert!(run_figure2a(&c).is_err());
        c.figure2.methods = Some(vec!["simes".into()]);
        assert!(run_figure2(&c).is_err());
        c.figure2a.settings = vec![3];
        c.figure2a.methods = None;
        assert!(run_figure2a(&c).is_err());
    }
}
