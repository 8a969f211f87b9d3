//! Height-probability tables and finite-size convergence reports.

use crate::config::RunConfig;
use crate::Failure;
use csos::bethe::content_hash;
use csos::matel::{finite_lhp, normed_ground_states, AdjacentPath, LhpBasis, NormedRoots};
use csos::scalar::with_gamma;
use csos::thermo::{multipoint_lhp, QuadOptions, DEFAULT_RESOLUTION, DEFAULT_TOLERANCE};
use csos::{Complex64 as C, Error};
use serde_json::{json, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Finite,
    Thermo,
}

pub struct Table {
    pub rows: Vec<Row>,
}

pub struct Row {
    pub mode: Mode,
    pub sites: Option<usize>,
    pub path: AdjacentPath,
    pub eps: i64,
    pub t: i64,
    pub value: C,
    pub error_estimate: Option<f64>,
    pub resolution: Option<usize>,
    pub deviation: Option<f64>,
    pub note: Option<String>,
    pub hash: String,
}

fn cplx(x: C) -> Value {
    json!([x.re, x.im])
}

impl Row {
    fn to_json(&self) -> Value {
        json!({
            "mode": match self.mode { Mode::Finite => "finite", Mode::Thermo => "thermo" },
            "N": self.sites,
            "path": self.path.vertices,
            "heights": self.path.heights,
            "eps": self.eps,
            "t": self.t,
            "value": cplx(self.value),
            "error_estimate": self.error_estimate,
            "resolution": self.resolution,
            "deviation": self.deviation,
            "thermo_unavailable": self.note,
            "parameters_hash": self.hash,
        })
    }
}

impl Table {
    pub fn to_json(&self) -> Value {
        Value::Array(self.rows.iter().map(Row::to_json).collect())
    }

    pub fn to_csv(&self) -> Result<String, Failure> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Failure::Numerical(format!("csv: {e}"));
        w.write_record(["mode", "N", "eps", "t", "heights", "value_re", "value_im", "error_estimate", "resolution", "deviation", "parameters_hash"])
            .map_err(io)?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let heights: Vec<String> = r.path.heights.iter().map(|h| h.to_string()).collect();
            w.write_record([
                if r.mode == Mode::Finite { "finite".to_string() } else { "thermo".to_string() },
                r.sites.map(|n| n.to_string()).unwrap_or_default(),
                r.eps.to_string(),
                r.t.to_string(),
                heights.join(";"),
                r.value.re.to_string(),
                r.value.im.to_string(),
                opt(r.error_estimate),
                r.resolution.map(|n| n.to_string()).unwrap_or_default(),
                opt(r.deviation),
                r.hash.clone(),
            ])
            .map_err(io)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Failure::Numerical(e.to_string()))?).map_err(|e| Failure::Numerical(e.to_string()))
    }
}

pub struct Options {
    pub resolution: usize,
    pub tolerance: f64,
}

impl Options {
    pub fn new(cfg: &RunConfig, resolution: Option<usize>, tolerance: Option<f64>) -> Self {
        Options {
            resolution: resolution.or(cfg.resolution).unwrap_or(DEFAULT_RESOLUTION),
            tolerance: tolerance.or(cfg.tolerance).unwrap_or(DEFAULT_TOLERANCE),
        }
    }
    fn quad(&self, cfg: &RunConfig) -> QuadOptions {
        QuadOptions { resolution: self.resolution, tolerance: self.tolerance, fallback: cfg.fallback }
    }
}

/// Errors that stem from the request itself rather than from the numerics.
fn classify(e: Error) -> Failure {
    match e {
        Error::Invalid(m) | Error::Domain(m) => Failure::Config(m),
        other => Failure::Numerical(other.to_string()),
    }
}

fn hash(cfg: &RunConfig, extra: &str) -> String {
    format!("{:016x}", content_hash(&format!("{};{extra}", cfg.describe())))
}

fn shifted(path: &AdjacentPath, c: i64) -> AdjacentPath {
    AdjacentPath { heights: path.heights.iter().map(|h| h + c).collect(), ..path.clone() }
}

fn sites_needed(path: &AdjacentPath) -> usize {
    path.vertices.iter().map(|v| v.0).max().unwrap_or(1)
}

fn thermo(cfg: &RunConfig, path: &AdjacentPath, eps: i64, t: i64, o: &Options, n: usize) -> csos::Result<csos::thermo::LhpEstimate> {
    let p = cfg.params().map_err(Error::Invalid)?;
    let xi = cfg.xi(n).map_err(Error::Invalid)?;
    multipoint_lhp(&p, &xi, path, eps, t, &o.quad(cfg))
}

fn finite(cfg: &RunConfig, states: &[NormedRoots], n: usize, path: &AdjacentPath, eps: i64, t: i64) -> Result<C, Failure> {
    let chain = cfg.chain(n).map_err(Failure::Config)?;
    with_gamma(&chain.p, |g| finite_lhp(&chain, states, path, LhpBasis::Flat { eps, t }, g)).map_err(classify)
}

fn states(cfg: &RunConfig, n: usize) -> Result<Vec<NormedRoots>, Failure> {
    let chain = cfg.chain(n).map_err(Failure::Config)?;
    normed_ground_states(&chain).map_err(classify)
}

/// The path and every global shift of its heights, for each selected label.
pub fn table(cfg: &RunConfig, mode: Mode, path: &AdjacentPath, o: &Options) -> Result<Table, Failure> {
    let n = cfg.n.max(sites_needed(path));
    if mode == Mode::Finite {
        path.validate(n).map_err(classify)?;
    }
    let st = if mode == Mode::Finite { Some(states(cfg, n)?) } else { None };
    let mut rows = Vec::new();
    for (eps, t) in cfg.labels() {
        for c in 0..cfg.l {
            let path = shifted(path, c);
            let th = thermo(cfg, &path, eps, t, o, n);
            let row = match mode {
                Mode::Thermo => {
                    let e = th.map_err(classify)?;
                    Row {
                        mode,
                        sites: None,
                        path,
                        eps,
                        t,
                        value: e.value,
                        error_estimate: Some(e.error_estimate),
                        resolution: Some(e.resolution),
                        deviation: None,
                        note: None,
                        hash: hash(cfg, &format!("thermo;res={};tol={:e}", o.resolution, o.tolerance)),
                    }
                }
                Mode::Finite => {
                    let v = finite(cfg, st.as_deref().unwrap_or(&[]), n, &path, eps, t)?;
                    let (deviation, note) = match th {
                        Ok(e) => (Some((v - e.value).norm()), None),
                        Err(e) => (None, Some(e.to_string())),
                    };
                    Row {
                        mode,
                        sites: Some(n),
                        path,
                        eps,
                        t,
                        value: v,
                        error_estimate: None,
                        resolution: None,
                        deviation,
                        note,
                        hash: hash(cfg, &format!("finite;N={n}")),
                    }
                }
            };
            rows.push(row);
        }
    }
    Ok(Table { rows })
}

/// Deviation of the finite-size values from the thermodynamic one for each
/// N in the configured list.
pub fn converge(cfg: &RunConfig, path: &AdjacentPath, o: &Options) -> Result<Value, Failure> {
    let nmax = *cfg.n_list.iter().max().unwrap_or(&cfg.n);
    for &n in &cfg.n_list {
        path.validate(n).map_err(classify)?;
    }
    let mut states_by_n = Vec::new();
    for &n in &cfg.n_list {
        states_by_n.push(states(cfg, n)?);
    }
    let mut out = Vec::new();
    for (eps, t) in cfg.labels() {
        let th = thermo(cfg, path, eps, t, o, nmax);
        let mut rows = Vec::new();
        let mut devs = Vec::new();
        for (&n, st) in cfg.n_list.iter().zip(&states_by_n) {
            let v = finite(cfg, st, n, path, eps, t)?;
            let d = th.as_ref().ok().map(|e| (v - e.value).norm());
            if let Some(d) = d {
                devs.push(d);
            }
            rows.push(json!({ "N": n, "value": cplx(v), "deviation": d }));
        }
        let monotone = if devs.len() >= 2 && devs.len() == cfg.n_list.len() { Some(devs.windows(2).all(|w| w[1] < w[0])) } else { None };
        let (value, err, skipped) = match &th {
            Ok(e) => (Some(cplx(e.value)), Some(e.error_estimate), None),
            Err(e) => (None, None, Some(format!("skipped: {e}"))),
        };
        out.push(json!({
            "path": path.vertices,
            "heights": path.heights,
            "eps": eps,
            "t": t,
            "thermo_value": value,
            "error_estimate": err,
            "resolution": o.resolution,
            "thermo": skipped.unwrap_or_else(|| "ok".into()),
            "rows": rows,
            "monotone": monotone,
            "parameters_hash": hash(cfg, &format!("converge;res={};tol={:e}", o.resolution, o.tolerance)),
        }));
    }
    Ok(Value::Array(out))
}
