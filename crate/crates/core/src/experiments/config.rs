//! Flat `key = value` config files with one `[experiment]` section per run.

use std::fmt::Display;
use std::str::FromStr;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::iic::LawSource;

/// Experiments the harness knows how to run.
pub const EXPERIMENTS: [&str; 7] = [
    "exp_tau_tail",
    "exp_pond_volume",
    "exp_outlet_growth",
    "exp_tau_decay",
    "exp_ratio_density",
    "exp_local_laws",
    "exp_classic",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    /// Independent runs (or seeds) of the main loop.
    pub trials: u64,
    pub p_grid: Vec<f64>,
    /// Box sizes, or radius exponents for `exp_outlet_growth`.
    pub n_grid: Vec<u32>,
    pub k_range: Vec<usize>,
    pub r_max: u32,
    pub epsilon: f64,
    pub c_star: f64,
    pub p_c: f64,
    /// Step count for `exp_classic`.
    pub steps: u64,
    pub dist_grid: Vec<u32>,
    pub window_radius: u32,
    /// Window samples per law for `exp_local_laws`.
    pub samples: u64,
    /// Radius of the four-arm reference event.
    pub reference_n: u32,
    pub pivotal_n: u32,
    pub bootstrap: usize,
    /// Allowed max/min spread in flatness gates.
    pub gate_factor: f64,
    /// Trials per point for the crossing and one-arm side estimators.
    pub corr_trials: u64,
    pub sources: Vec<LawSource>,
    /// Output path stem; `.csv` and `.json` are appended.
    pub output: String,
}

impl ExperimentConfig {
    /// Defaults for the named experiment.
    pub fn new(name: &str) -> Result<Self> {
        if !EXPERIMENTS.contains(&name) {
            return Err(Error::Unsupported(format!("unknown experiment {name:?}")));
        }
        let mut c = ExperimentConfig {
            name: name.to_string(),
            seed: 1,
            trials: 200,
            p_grid: vec![0.52, 0.55, 0.6],
            n_grid: vec![16, 32, 64],
            k_range: vec![1, 2],
            r_max: 256,
            epsilon: 0.05,
            c_star: 1.0,
            p_c: 0.5,
            steps: 100_000,
            dist_grid: vec![32, 64, 128],
            window_radius: 1,
            samples: 1000,
            reference_n: 16,
            pivotal_n: 128,
            bootstrap: 200,
            gate_factor: 4.0,
            corr_trials: 1000,
            sources: vec![LawSource::OutletEdge, LawSource::PivotalEdge],
            output: name.to_string(),
        };
        match name {
            "exp_outlet_growth" => c.n_grid = vec![4, 5, 6, 7],
            "exp_tau_decay" => c.r_max = 1024,
            "exp_classic" => c.trials = 20,
            _ => {}
        }
        Ok(c)
    }

    /// Every parameter, in a fixed order.
    pub fn echo(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("name".into(), json!(self.name));
        m.insert("seed".into(), json!(self.seed));
        m.insert("trials".into(), json!(self.trials));
        m.insert("p_grid".into(), json!(self.p_grid));
        m.insert("n_grid".into(), json!(self.n_grid));
        m.insert("k_range".into(), json!(self.k_range));
        m.insert("r_max".into(), json!(self.r_max));
        m.insert("epsilon".into(), json!(self.epsilon));
        m.insert("c_star".into(), json!(self.c_star));
        m.insert("p_c".into(), json!(self.p_c));
        m.insert("steps".into(), json!(self.steps));
        m.insert("dist_grid".into(), json!(self.dist_grid));
        m.insert("window_radius".into(), json!(self.window_radius));
        m.insert("samples".into(), json!(self.samples));
        m.insert("reference_n".into(), json!(self.reference_n));
        m.insert("pivotal_n".into(), json!(self.pivotal_n));
        m.insert("bootstrap".into(), json!(self.bootstrap));
        m.insert("gate_factor".into(), json!(self.gate_factor));
        m.insert("corr_trials".into(), json!(self.corr_trials));
        m.insert("sources".into(), json!(self.sources.iter().map(|s| s.name()).collect::<Vec<_>>()));
        m.insert("output".into(), json!(self.output));
        m
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "seed" => self.seed = scalar(value)?,
            "trials" => self.trials = scalar(value)?,
            "p_grid" => self.p_grid = probabilities(value)?,
            "n_grid" => self.n_grid = int_list(value)?,
            "k_range" => self.k_range = int_list(value)?,
            "r_max" => self.r_max = scalar(value)?,
            "epsilon" => self.epsilon = probability(value)?,
            "c_star" => self.c_star = scalar(value)?,
            "p_c" => self.p_c = probability(value)?,
            "steps" => self.steps = scalar(value)?,
            "dist_grid" => self.dist_grid = int_list(value)?,
            "window_radius" => self.window_radius = scalar(value)?,
            "samples" => self.samples = scalar(value)?,
            "reference_n" => self.reference_n = scalar(value)?,
            "pivotal_n" => self.pivotal_n = scalar(value)?,
            "bootstrap" => self.bootstrap = scalar(value)?,
            "gate_factor" => self.gate_factor = scalar(value)?,
            "corr_trials" => self.corr_trials = scalar(value)?,
            "sources" => self.sources = list(value)?,
            "output" => {
                if value.is_empty() {
                    return Err("empty output path".into());
                }
                self.output = value.to_string();
            }
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Parse every section of a config file.
    pub fn parse_all(text: &str) -> Result<Vec<ExperimentConfig>> {
        let mut out: Vec<ExperimentConfig> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| Error::Config { line: line_no, msg };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| err("unterminated section header".into()))?.trim();
                let cfg = ExperimentConfig::new(name).map_err(|e| err(e.to_string()))?;
                out.push(cfg);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            let cfg = out.last_mut().ok_or_else(|| err("key outside any [experiment] section".into()))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        if out.is_empty() {
            return Err(Error::Config { line: 0, msg: "no [experiment] section".into() });
        }
        Ok(out)
    }

    /// Parse a config file holding exactly one section.
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let mut all = Self::parse_all(text)?;
        if all.len() != 1 {
            return Err(Error::Config { line: 0, msg: format!("expected one section, found {}", all.len()) });
        }
        Ok(all.remove(0))
    }

    /// Render back to the file format.
    pub fn to_text(&self) -> String {
        let mut s = format!("[{}]\n", self.name);
        for (k, v) in self.echo() {
            if k == "name" {
                continue;
            }
            let v = match v {
                Value::Array(a) => a.iter().map(render).collect::<Vec<_>>().join(", "),
                other => render(&other),
            };
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}

fn render(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn scalar<T: FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: Display,
{
    v.parse().map_err(|e| format!("bad value {v:?}: {e}"))
}

fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: Display,
{
    v.split(',').map(|x| scalar(x.trim())).collect()
}

/// Comma-separated integers, with `a..b` for inclusive ranges.
fn int_list<T: FromStr + TryFrom<u64>>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: Display,
{
    let mut out = Vec::new();
    for part in v.split(',').map(str::trim) {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u64, u64) = (scalar(a.trim())?, scalar(b.trim().trim_start_matches('='))?);
            if a > b {
                return Err(format!("empty range {part:?}"));
            }
            for x in a..=b {
                out.push(T::try_from(x).map_err(|_| format!("{x} out of range"))?);
            }
        } else {
            out.push(scalar(part)?);
        }
    }
    Ok(out)
}

fn probability(v: &str) -> std::result::Result<f64, String> {
    let p: f64 = scalar(v)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(format!("{v} is not a probability"));
    }
    Ok(p)
}

fn probabilities(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',').map(|x| probability(x.trim())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_ranges() {
        let text = "# demo\n[exp_outlet_growth]\nseed = 9\nn_grid = 4..6, 8\n\n[exp_classic]\ntrials = 3 # inline\n";
        let all = ExperimentConfig::parse_all(text).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].seed, 9);
        assert_eq!(all[0].n_grid, vec![4, 5, 6, 8]);
        assert_eq!(all[1].trials, 3);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = |t: &str| match ExperimentConfig::parse_all(t) {
            Err(Error::Config { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(bad("[exp_classic]\nseed = x\n"), 2);
        assert_eq!(bad("[exp_classic]\n\nbogus = 1\n"), 3);
        assert_eq!(bad("seed = 1\n"), 1);
        assert_eq!(bad("[exp_nope]\n"), 1);
        assert_eq!(bad("[exp_classic]\np_c = 1.5\n"), 2);
        assert_eq!(bad("[exp_classic\n"), 1);
    }

    #[test]
    fn text_round_trip() {
        let mut c = ExperimentConfig::new("exp_local_laws").unwrap();
        c.p_grid = vec![0.51, 0.6];
        c.output = "out/local".into();
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }
}
