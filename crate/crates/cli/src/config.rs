//! Flat `key = value` run configuration. Every number is read from its
//! decimal text; unknown keys and repeated keys are rejected.

use csos::lattice::Chain;
use csos::{Complex64 as C, ModelParams};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq)]
pub enum Xi {
    /// every ξ_l = 1/2
    Homogeneous,
    Values(Vec<C>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub tau: C,
    pub r: i64,
    pub l: i64,
    /// None selects the physical shift τL/(2r)
    pub s0: Option<C>,
    pub n: usize,
    pub xi: Xi,
    pub eps: Option<i64>,
    pub t: Option<i64>,
    pub n_list: Vec<usize>,
    pub resolution: Option<usize>,
    pub tolerance: Option<f64>,
    pub modes: Option<usize>,
    pub fallback: bool,
    pub csv: Option<bool>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tau: C::new(0.0, 0.5),
            r: 1,
            l: 3,
            s0: None,
            n: 4,
            xi: Xi::Homogeneous,
            eps: None,
            t: None,
            n_list: vec![4, 6, 8],
            resolution: None,
            tolerance: None,
            modes: None,
            fallback: false,
            csv: None,
        }
    }
}

const KEYS: &[&str] = &[
    "tau_re", "tau_im", "r", "L", "s0_re", "s0_im", "N", "xi", "xi_im", "eps", "t", "n_list", "resolution", "tolerance", "modes",
    "fallback", "format",
];

fn real(key: &str, v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("{key}: '{v}' is not a decimal number"))?;
    if !x.is_finite() {
        return Err(format!("{key}: '{v}' is not finite"));
    }
    Ok(x)
}

fn int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("{key}: '{v}' is not an integer"))
}

fn list<T>(key: &str, v: &str, f: impl Fn(&str, &str) -> Result<T, String>) -> Result<Vec<T>, String> {
    v.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(|s| f(key, s)).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut kv = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", no + 1))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(format!("line {}: unknown key '{k}'", no + 1));
            }
            if kv.insert(k.to_string(), v.to_string()).is_some() {
                return Err(format!("line {}: key '{k}' given twice", no + 1));
            }
        }
        let mut c = RunConfig::default();
        let get = |k: &str| kv.get(k).map(String::as_str);
        if let Some(v) = get("tau_re") {
            c.tau.re = real("tau_re", v)?;
        }
        if let Some(v) = get("tau_im") {
            c.tau.im = real("tau_im", v)?;
        }
        if let Some(v) = get("r") {
            c.r = int("r", v)?;
        }
        if let Some(v) = get("L") {
            c.l = int("L", v)?;
        }
        match (get("s0_re"), get("s0_im")) {
            (None, None) => {}
            (re, im) => {
                let re = re.map(|v| real("s0_re", v)).transpose()?.unwrap_or(0.0);
                let im = im.map(|v| real("s0_im", v)).transpose()?.unwrap_or(0.0);
                c.s0 = Some(C::new(re, im));
            }
        }
        if let Some(v) = get("N") {
            c.n = int("N", v)?;
        }
        match get("xi") {
            None | Some("homogeneous") => {
                if get("xi_im").is_some() {
                    return Err("xi_im needs an explicit xi list".into());
                }
            }
            Some(v) => {
                let re = list("xi", v, real)?;
                let im = match get("xi_im") {
                    Some(w) => list("xi_im", w, real)?,
                    None => vec![0.0; re.len()],
                };
                if im.len() != re.len() {
                    return Err("xi and xi_im have different lengths".into());
                }
                c.xi = Xi::Values(re.into_iter().zip(im).map(|(a, b)| C::new(a, b)).collect());
            }
        }
        if let Some(v) = get("eps") {
            c.eps = Some(int("eps", v)?);
        }
        if let Some(v) = get("t") {
            c.t = Some(int("t", v)?);
        }
        if let Some(v) = get("n_list") {
            c.n_list = list("n_list", v, int)?;
            if c.n_list.is_empty() {
                return Err("n_list is empty".into());
            }
        }
        if let Some(v) = get("resolution") {
            c.resolution = Some(int("resolution", v)?);
        }
        if let Some(v) = get("tolerance") {
            c.tolerance = Some(real("tolerance", v)?);
        }
        if let Some(v) = get("modes") {
            c.modes = Some(int("modes", v)?);
        }
        if let Some(v) = get("fallback") {
            c.fallback = match v {
                "true" => true,
                "false" => false,
                _ => return Err(format!("fallback: '{v}' is not true or false")),
            };
        }
        if let Some(v) = get("format") {
            c.csv = Some(match v {
                "csv" => true,
                "json" => false,
                _ => return Err(format!("format: '{v}' is not json or csv")),
            });
        }
        c.params()?;
        if let Some(e) = c.eps {
            if !(0..2).contains(&e) {
                return Err(format!("eps must be 0 or 1, got {e}"));
            }
        }
        if let Some(t) = c.t {
            if !(0..c.l - c.r).contains(&t) {
                return Err(format!("t must lie in 0..{}, got {t}", c.l - c.r));
            }
        }
        Ok(c)
    }

    pub fn params(&self) -> Result<ModelParams, String> {
        let s0 = self.s0.unwrap_or_else(|| ModelParams::physical_s0(self.tau, self.r, self.l));
        ModelParams::new(self.tau, self.r, self.l, s0).map_err(|e| e.to_string())
    }

    /// The first `n` line parameters.
    pub fn xi(&self, n: usize) -> Result<Vec<C>, String> {
        match &self.xi {
            Xi::Homogeneous => Ok(vec![C::new(0.5, 0.0); n]),
            Xi::Values(v) if v.len() >= n => Ok(v[..n].to_vec()),
            Xi::Values(v) => Err(format!("xi lists {} values but {n} sites are needed", v.len())),
        }
    }

    pub fn chain(&self, n: usize) -> Result<Chain, String> {
        Chain::new(self.params()?, self.xi(n)?).map_err(|e| e.to_string())
    }

    /// (ε, t) labels selected by the config.
    pub fn labels(&self) -> Vec<(i64, i64)> {
        let eps: Vec<i64> = self.eps.map_or_else(|| vec![0, 1], |e| vec![e]);
        let ts: Vec<i64> = self.t.map_or_else(|| (0..self.l - self.r).collect(), |t| vec![t]);
        eps.iter().flat_map(|&e| ts.iter().map(move |&t| (e, t))).collect()
    }

    /// Canonical text of everything that determines a result.
    pub fn describe(&self) -> String {
        let s0 = self.s0.unwrap_or_else(|| ModelParams::physical_s0(self.tau, self.r, self.l));
        let xi = match &self.xi {
            Xi::Homogeneous => "homogeneous".to_string(),
            Xi::Values(v) => v.iter().map(|x| format!("{:e},{:e}", x.re, x.im)).collect::<Vec<_>>().join(";"),
        };
        format!(
            "tau={:e},{:e};r={};L={};s0={:e},{:e};xi={xi};fallback={}",
            self.tau.re, self.tau.im, self.r, self.l, s0.re, s0.im, self.fallback
        )
    }
}
