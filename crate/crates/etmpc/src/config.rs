//! Scenario files: a TOML document with sections `[model]`, `[cost]`,
//! `[etm]` and `[scenario]`. Dense matrices are written inline as rows
//! (rows separated by `;` or newlines, entries by whitespace or commas) or
//! referenced as external CSV files with `"@relative/path.csv"`; either form
//! accepts an optional scale factor via `{ file = "...", scale = 0.9 }`.
//!
//! Loading is two-phase: [`ScenarioFile`] holds raw parsed values so that
//! [`ScenarioFile::validation_report`] can list every constraint violation,
//! while [`ScenarioFile::build`] produces the typed [`Scenario`] and fails
//! on the first hard error.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::controller::{EtmMode, Scenario};
use crate::etm::EtmConfig;
use crate::linalg::is_spd;
use crate::lmi::CostConfig;
use crate::model::{DisturbanceSignal, PolytopicModel, SchedulingSignal, VertexMatrices};
use crate::sdp::SolverOptions;
use crate::{Error, Result};

/// Raw, minimally validated scenario contents.
#[derive(Debug, Clone)]
pub struct ScenarioFile {
    pub base_dir: PathBuf,
    pub delays: Vec<usize>,
    pub vertices: Vec<RawVertex>,
    pub d_matrix: DMatrix<f64>,
    pub u_sat: f64,
    pub d_sq: f64,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub varphi: f64,
    pub delta: f64,
    pub mu: f64,
    pub theta: f64,
    pub epsilon: f64,
    pub beta0: f64,
    pub mode: String,
    pub x0: Vec<f64>,
    pub steps: usize,
    pub zeta: f64,
    pub sample_time: f64,
    pub disturbance: DisturbanceSignal,
    pub scheduling: SchedulingSignal,
    pub initial_history: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct RawVertex {
    pub a: DMatrix<f64>,
    pub a_delay: Vec<DMatrix<f64>>,
    pub b: DMatrix<f64>,
}

/// One line of a validation report.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn get<'a>(table: &'a toml::Table, section: &str, key: &str) -> Result<&'a toml::Value> {
    table
        .get(key)
        .ok_or_else(|| Error::Config(format!("[{section}] missing key '{key}'")))
}

fn as_f64(v: &toml::Value, where_: &str) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::Config(format!("{where_}: expected a number"))),
    }
}

fn as_usize(v: &toml::Value, where_: &str) -> Result<usize> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(Error::Config(format!("{where_}: expected a non-negative integer"))),
    }
}

fn as_u64(v: &toml::Value, where_: &str) -> Result<u64> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(Error::Config(format!("{where_}: expected a non-negative integer"))),
    }
}

fn as_str<'a>(v: &'a toml::Value, where_: &str) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| Error::Config(format!("{where_}: expected a string")))
}

fn as_f64_list(v: &toml::Value, where_: &str) -> Result<Vec<f64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::Config(format!("{where_}: expected an array")))?;
    arr.iter()
        .enumerate()
        .map(|(i, e)| as_f64(e, &format!("{where_}[{i}]")))
        .collect()
}

/// Parse a dense numeric block: rows separated by `;` or newlines, entries
/// by whitespace or commas.
pub fn parse_matrix_text(text: &str, where_: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text
        .split([';', '\n'])
        .map(str::trim)
        .filter(|r| !r.is_empty())
        .map(|r| {
            r.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|e| !e.is_empty())
                .map(|e| {
                    e.parse::<f64>().map_err(|_| {
                        Error::Config(format!("{where_}: cannot parse entry '{e}'"))
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::Config(format!("{where_}: empty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{where_}: ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Load a CSV matrix file: plain decimal, comma-separated, one matrix row
/// per line.
pub fn load_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read matrix file '{}': {e}", path.display()))
    })?;
    parse_matrix_text(&text, &format!("file '{}'", path.display()))
}

/// Resolve a matrix value: inline string, `"@file.csv"` reference, or a
/// table `{ file | inline, scale }`.
fn resolve_matrix(v: &toml::Value, base: &Path, where_: &str) -> Result<DMatrix<f64>> {
    match v {
        toml::Value::String(s) => {
            if let Some(rel) = s.strip_prefix('@') {
                load_matrix_csv(&base.join(rel.trim()))
            } else {
                parse_matrix_text(s, where_)
            }
        }
        toml::Value::Table(t) => {
            let scale = match t.get("scale") {
                Some(s) => as_f64(s, &format!("{where_}.scale"))?,
                None => 1.0,
            };
            let m = if let Some(f) = t.get("file") {
                load_matrix_csv(&base.join(as_str(f, &format!("{where_}.file"))?))?
            } else if let Some(i) = t.get("inline") {
                parse_matrix_text(as_str(i, &format!("{where_}.inline"))?, where_)?
            } else {
                return Err(Error::Config(format!(
                    "{where_}: matrix table needs 'file' or 'inline'"
                )));
            };
            Ok(m * scale)
        }
        _ => Err(Error::Config(format!(
            "{where_}: expected a matrix (string, \"@file.csv\", or table)"
        ))),
    }
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read scenario '{}': {e}", path.display()))
        })?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("scenario parse error: {e}")))?;

        let model = doc
            .get("model")
            .and_then(|v| v.as_table())
            .ok_or_else(|| Error::Config("missing [model] section".into()))?;
        let cost = doc
            .get("cost")
            .and_then(|v| v.as_table())
            .ok_or_else(|| Error::Config("missing [cost] section".into()))?;
        let etm = doc
            .get("etm")
            .and_then(|v| v.as_table())
            .ok_or_else(|| Error::Config("missing [etm] section".into()))?;
        let scen = doc
            .get("scenario")
            .and_then(|v| v.as_table())
            .ok_or_else(|| Error::Config("missing [scenario] section".into()))?;

        let delays: Vec<usize> = get(model, "model", "delays")?
            .as_array()
            .ok_or_else(|| Error::Config("[model] delays must be an array".into()))?
            .iter()
            .enumerate()
            .map(|(i, v)| as_usize(v, &format!("model.delays[{i}]")))
            .collect::<Result<_>>()?;

        let vert_values = get(model, "model", "vertex")?
            .as_array()
            .ok_or_else(|| Error::Config("[[model.vertex]] must be an array of tables".into()))?
            .clone();
        let mut vertices = Vec::with_capacity(vert_values.len());
        for (vi, vv) in vert_values.iter().enumerate() {
            let vt = vv
                .as_table()
                .ok_or_else(|| Error::Config(format!("model.vertex[{vi}] must be a table")))?;
            let a = resolve_matrix(
                get(vt, &format!("model.vertex[{vi}]"), "A")?,
                base_dir,
                &format!("model.vertex[{vi}].A"),
            )?;
            let a_tau_val = get(vt, &format!("model.vertex[{vi}]"), "A_tau")?;
            let a_delay: Vec<DMatrix<f64>> = match a_tau_val {
                toml::Value::Array(items) => items
                    .iter()
                    .enumerate()
                    .map(|(ri, item)| {
                        resolve_matrix(
                            item,
                            base_dir,
                            &format!("model.vertex[{vi}].A_tau[{ri}]"),
                        )
                    })
                    .collect::<Result<_>>()?,
                single => vec![resolve_matrix(
                    single,
                    base_dir,
                    &format!("model.vertex[{vi}].A_tau"),
                )?],
            };
            let b = resolve_matrix(
                get(vt, &format!("model.vertex[{vi}]"), "B")?,
                base_dir,
                &format!("model.vertex[{vi}].B"),
            )?;
            vertices.push(RawVertex { a, a_delay, b });
        }

        let d_matrix = resolve_matrix(get(model, "model", "D")?, base_dir, "model.D")?;
        let u_sat = as_f64(get(model, "model", "u_sat")?, "model.u_sat")?;
        let d_sq = as_f64(get(model, "model", "d_sq")?, "model.d_sq")?;

        let q = resolve_matrix(get(cost, "cost", "Q")?, base_dir, "cost.Q")?;
        let r = resolve_matrix(get(cost, "cost", "R")?, base_dir, "cost.R")?;
        let varphi = as_f64(get(cost, "cost", "varphi")?, "cost.varphi")?;
        let delta = as_f64(get(cost, "cost", "delta")?, "cost.delta")?;

        let mu = as_f64(get(etm, "etm", "mu")?, "etm.mu")?;
        let theta = as_f64(get(etm, "etm", "theta")?, "etm.theta")?;
        let epsilon = as_f64(get(etm, "etm", "epsilon")?, "etm.epsilon")?;
        let beta0 = as_f64(get(etm, "etm", "beta0")?, "etm.beta0")?;
        let mode = match etm.get("mode") {
            Some(v) => as_str(v, "etm.mode")?.to_string(),
            None => "adaptive".to_string(),
        };

        let x0 = as_f64_list(get(scen, "scenario", "x0")?, "scenario.x0")?;
        let steps = as_usize(get(scen, "scenario", "steps")?, "scenario.steps")?;
        let zeta = match scen.get("zeta") {
            Some(v) => as_f64(v, "scenario.zeta")?,
            None => 0.05,
        };
        let sample_time = match scen.get("sample_time") {
            Some(v) => as_f64(v, "scenario.sample_time")?,
            None => 1.0,
        };
        let initial_history = match scen.get("initial_history") {
            Some(v) => {
                let arr = v.as_array().ok_or_else(|| {
                    Error::Config("scenario.initial_history must be an array of arrays".into())
                })?;
                Some(
                    arr.iter()
                        .enumerate()
                        .map(|(i, row)| {
                            as_f64_list(row, &format!("scenario.initial_history[{i}]"))
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            None => None,
        };

        let disturbance = match scen.get("disturbance") {
            None => DisturbanceSignal::Zero,
            Some(v) => {
                let t = v
                    .as_table()
                    .ok_or_else(|| Error::Config("scenario.disturbance must be a table".into()))?;
                let kind = as_str(
                    get(t, "scenario.disturbance", "kind")?,
                    "scenario.disturbance.kind",
                )?;
                match kind {
                    "zero" => DisturbanceSignal::Zero,
                    "sinusoid" => DisturbanceSignal::Sinusoid {
                        amplitude: DVector::from_vec(as_f64_list(
                            get(t, "scenario.disturbance", "amplitude")?,
                            "scenario.disturbance.amplitude",
                        )?),
                        freq: match t.get("freq") {
                            Some(v) => as_f64(v, "scenario.disturbance.freq")?,
                            None => 1.0,
                        },
                        phase: match t.get("phase") {
                            Some(v) => as_f64(v, "scenario.disturbance.phase")?,
                            None => 0.0,
                        },
                    },
                    "random" => DisturbanceSignal::BoundedRandom {
                        seed: match t.get("seed") {
                            Some(v) => as_u64(v, "scenario.disturbance.seed")?,
                            None => 0,
                        },
                        scale: match t.get("scale") {
                            Some(v) => as_f64(v, "scenario.disturbance.scale")?,
                            None => 1.0,
                        },
                    },
                    "table" => {
                        let rows = get(t, "scenario.disturbance", "rows")?
                            .as_array()
                            .ok_or_else(|| {
                                Error::Config("scenario.disturbance.rows must be an array".into())
                            })?
                            .iter()
                            .enumerate()
                            .map(|(i, row)| {
                                Ok(DVector::from_vec(as_f64_list(
                                    row,
                                    &format!("scenario.disturbance.rows[{i}]"),
                                )?))
                            })
                            .collect::<Result<Vec<_>>>()?;
                        DisturbanceSignal::Table { rows }
                    }
                    other => {
                        return Err(Error::Config(format!(
                            "scenario.disturbance.kind '{other}' unknown \
                             (zero | sinusoid | random | table)"
                        )))
                    }
                }
            }
        };

        let scheduling = match scen.get("scheduling") {
            None => SchedulingSignal::Random { seed: 0 },
            Some(v) => {
                let t = v
                    .as_table()
                    .ok_or_else(|| Error::Config("scenario.scheduling must be a table".into()))?;
                let kind = as_str(
                    get(t, "scenario.scheduling", "kind")?,
                    "scenario.scheduling.kind",
                )?;
                match kind {
                    "constant" => SchedulingSignal::Constant {
                        weights: as_f64_list(
                            get(t, "scenario.scheduling", "weights")?,
                            "scenario.scheduling.weights",
                        )?,
                    },
                    "sinusoid" => SchedulingSignal::SinusoidBlend {
                        period: match t.get("period") {
                            Some(v) => as_f64(v, "scenario.scheduling.period")?,
                            None => 16.0,
                        },
                    },
                    "random" => SchedulingSignal::Random {
                        seed: match t.get("seed") {
                            Some(v) => as_u64(v, "scenario.scheduling.seed")?,
                            None => 0,
                        },
                    },
                    other => {
                        return Err(Error::Config(format!(
                            "scenario.scheduling.kind '{other}' unknown \
                             (constant | sinusoid | random)"
                        )))
                    }
                }
            }
        };

        Ok(Self {
            base_dir: base_dir.to_path_buf(),
            delays,
            vertices,
            d_matrix,
            u_sat,
            d_sq,
            q,
            r,
            varphi,
            delta,
            mu,
            theta,
            epsilon,
            beta0,
            mode,
            x0,
            steps,
            zeta,
            sample_time,
            disturbance,
            scheduling,
            initial_history,
        })
    }

    /// Replace the seeds of the random generators (CLI `--seed`).
    pub fn reseed(&mut self, seed: u64) {
        if let DisturbanceSignal::BoundedRandom { seed: s, .. } = &mut self.disturbance {
            *s = seed.wrapping_add(1);
        }
        if let SchedulingSignal::Random { seed: s } = &mut self.scheduling {
            *s = seed.wrapping_add(2);
        }
    }

    /// Build the typed scenario, failing on the first invalid value.
    pub fn build(&self) -> Result<Scenario> {
        let vertices = self
            .vertices
            .iter()
            .map(|v| VertexMatrices {
                a: v.a.clone(),
                a_delay: v.a_delay.clone(),
                b: v.b.clone(),
            })
            .collect();
        let model = PolytopicModel::new(
            self.delays.clone(),
            vertices,
            self.d_matrix.clone(),
            self.u_sat,
            self.d_sq,
        )?;
        let cost = CostConfig::new(
            self.q.clone(),
            self.r.clone(),
            self.varphi,
            self.delta,
            self.d_sq,
        )?;
        let etm = EtmConfig::new(self.mu, self.theta, self.epsilon, self.beta0)?;
        let mode: EtmMode = self.mode.parse()?;
        let scenario = Scenario {
            model,
            cost,
            etm,
            mode,
            x0: DVector::from_vec(self.x0.clone()),
            steps: self.steps,
            disturbance: self.disturbance.clone(),
            scheduling: self.scheduling.clone(),
            initial_history: self
                .initial_history
                .as_ref()
                .map(|h| h.iter().map(|r| DVector::from_vec(r.clone())).collect()),
            zeta: self.zeta,
            sample_time: self.sample_time,
            solver: SolverOptions::default(),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Run every parameter check and report pass/fail per check instead of
    /// stopping at the first violation.
    pub fn validation_report(&self) -> Vec<Check> {
        let mut checks = Vec::new();
        let mut push = |name: &str, pass: bool, detail: String| {
            checks.push(Check {
                name: name.to_string(),
                pass,
                detail,
            })
        };

        push(
            "mu in (0, 1)",
            self.mu > 0.0 && self.mu < 1.0,
            format!("mu = {}", self.mu),
        );
        push(
            "theta in (0, 1)",
            self.theta > 0.0 && self.theta < 1.0,
            format!("theta = {}", self.theta),
        );
        let eps_ok = self.mu > 0.0 && self.epsilon >= 1.0 / self.mu;
        push(
            "epsilon >= 1/mu",
            eps_ok,
            format!("epsilon = {}, 1/mu = {:.6}", self.epsilon, 1.0 / self.mu),
        );
        push("beta0 >= 0", self.beta0 >= 0.0, format!("beta0 = {}", self.beta0));
        push(
            "0 < delta < 1 - mu",
            self.delta > 0.0 && self.delta < 1.0 - self.mu,
            format!("delta = {}, 1 - mu = {:.6}", self.delta, 1.0 - self.mu),
        );
        push("varphi > 0", self.varphi > 0.0, format!("varphi = {}", self.varphi));
        push("u_sat > 0", self.u_sat > 0.0, format!("u_sat = {}", self.u_sat));
        push("d_sq > 0", self.d_sq > 0.0, format!("d_sq = {}", self.d_sq));
        push(
            "Q positive definite",
            self.q.is_square() && is_spd(&self.q),
            format!("Q is {}x{}", self.q.nrows(), self.q.ncols()),
        );
        push(
            "R positive definite",
            self.r.is_square() && is_spd(&self.r),
            format!("R is {}x{}", self.r.nrows(), self.r.ncols()),
        );
        push(
            "delays strictly increasing, >= 1",
            !self.delays.is_empty()
                && self.delays[0] >= 1
                && self.delays.windows(2).all(|w| w[1] > w[0]),
            format!("delays = {:?}", self.delays),
        );
        push(
            "single delay for synthesis",
            self.delays.len() == 1,
            format!("{} delay channels", self.delays.len()),
        );

        // Dimension consistency across vertices, D, Q, R, x0.
        let dims_ok = (|| {
            let n_x = self.vertices.first()?.a.nrows();
            let n_u = self.vertices.first()?.b.ncols();
            for v in &self.vertices {
                if v.a.nrows() != n_x || v.a.ncols() != n_x || v.b.nrows() != n_x {
                    return Some(false);
                }
                if v.b.ncols() != n_u || v.a_delay.len() != self.delays.len() {
                    return Some(false);
                }
                if v.a_delay.iter().any(|m| m.nrows() != n_x || m.ncols() != n_x) {
                    return Some(false);
                }
            }
            Some(
                self.d_matrix.nrows() == n_x
                    && self.q.nrows() == n_x
                    && self.q.ncols() == n_x
                    && self.r.nrows() == n_u
                    && self.r.ncols() == n_u
                    && self.x0.len() == n_x,
            )
        })()
        .unwrap_or(false);
        push(
            "matrix dimensions consistent",
            dims_ok,
            format!("{} vertices", self.vertices.len()),
        );

        // Disturbance budget vs d^2 over the declared horizon.
        match self.build_model_unchecked() {
            Ok(model) => match self.disturbance.budget(&model, self.steps.max(1)) {
                Ok((ok, worst)) => push(
                    "disturbance budget within d^2",
                    ok,
                    format!("worst case {worst:.6e} vs d^2 = {}", self.d_sq),
                ),
                Err(e) => push("disturbance budget within d^2", false, e.to_string()),
            },
            Err(e) => push("disturbance budget within d^2", false, e.to_string()),
        }

        push(
            "steps >= 1",
            self.steps >= 1,
            format!("steps = {}", self.steps),
        );
        push("zeta > 0", self.zeta > 0.0, format!("zeta = {}", self.zeta));
        push(
            "ETM mode recognized",
            self.mode.parse::<EtmMode>().is_ok(),
            format!("mode = {}", self.mode),
        );

        checks
    }

    /// Render back to TOML with all matrices inline (file references are
    /// resolved at parse time). A dumped scenario re-parses to an
    /// equivalent one.
    pub fn to_toml_string(&self) -> String {
        let mat = |m: &DMatrix<f64>| {
            let rows: Vec<String> = (0..m.nrows())
                .map(|i| {
                    (0..m.ncols())
                        .map(|j| format!("{}", m[(i, j)]))
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect();
            format!("\"{}\"", rows.join("; "))
        };
        let list = |v: &[f64]| {
            format!(
                "[{}]",
                v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ")
            )
        };
        let mut out = String::new();
        out.push_str("[model]\n");
        out.push_str(&format!(
            "delays = [{}]\n",
            self.delays
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ));
        out.push_str(&format!("u_sat = {}\n", self.u_sat));
        out.push_str(&format!("d_sq = {}\n", self.d_sq));
        out.push_str(&format!("D = {}\n", mat(&self.d_matrix)));
        for v in &self.vertices {
            out.push_str("\n[[model.vertex]]\n");
            out.push_str(&format!("A = {}\n", mat(&v.a)));
            out.push_str(&format!(
                "A_tau = [{}]\n",
                v.a_delay.iter().map(&mat).collect::<Vec<_>>().join(", ")
            ));
            out.push_str(&format!("B = {}\n", mat(&v.b)));
        }
        out.push_str("\n[cost]\n");
        out.push_str(&format!("Q = {}\n", mat(&self.q)));
        out.push_str(&format!("R = {}\n", mat(&self.r)));
        out.push_str(&format!("varphi = {}\n", self.varphi));
        out.push_str(&format!("delta = {}\n", self.delta));
        out.push_str("\n[etm]\n");
        out.push_str(&format!("mu = {}\n", self.mu));
        out.push_str(&format!("theta = {}\n", self.theta));
        out.push_str(&format!("epsilon = {}\n", self.epsilon));
        out.push_str(&format!("beta0 = {}\n", self.beta0));
        out.push_str(&format!("mode = \"{}\"\n", self.mode));
        out.push_str("\n[scenario]\n");
        out.push_str(&format!("x0 = {}\n", list(&self.x0)));
        out.push_str(&format!("steps = {}\n", self.steps));
        out.push_str(&format!("zeta = {}\n", self.zeta));
        out.push_str(&format!("sample_time = {}\n", self.sample_time));
        if let Some(hist) = &self.initial_history {
            out.push_str(&format!(
                "initial_history = [{}]\n",
                hist.iter().map(|r| list(r)).collect::<Vec<_>>().join(", ")
            ));
        }
        out.push_str("\n[scenario.disturbance]\n");
        match &self.disturbance {
            DisturbanceSignal::Zero => out.push_str("kind = \"zero\"\n"),
            DisturbanceSignal::Sinusoid {
                amplitude,
                freq,
                phase,
            } => {
                out.push_str("kind = \"sinusoid\"\n");
                out.push_str(&format!(
                    "amplitude = {}\n",
                    list(amplitude.as_slice())
                ));
                out.push_str(&format!("freq = {freq}\n"));
                out.push_str(&format!("phase = {phase}\n"));
            }
            DisturbanceSignal::BoundedRandom { seed, scale } => {
                out.push_str("kind = \"random\"\n");
                out.push_str(&format!("seed = {seed}\n"));
                out.push_str(&format!("scale = {scale}\n"));
            }
            DisturbanceSignal::Table { rows } => {
                out.push_str("kind = \"table\"\n");
                out.push_str(&format!(
                    "rows = [{}]\n",
                    rows.iter()
                        .map(|r| list(r.as_slice()))
                        .collect::<Vec<_>>()
                        .join(", ")
                ));
            }
        }
        out.push_str("\n[scenario.scheduling]\n");
        match &self.scheduling {
            SchedulingSignal::Constant { weights } => {
                out.push_str("kind = \"constant\"\n");
                out.push_str(&format!("weights = {}\n", list(weights)));
            }
            SchedulingSignal::SinusoidBlend { period } => {
                out.push_str("kind = \"sinusoid\"\n");
                out.push_str(&format!("period = {period}\n"));
            }
            SchedulingSignal::Random { seed } => {
                out.push_str("kind = \"random\"\n");
                out.push_str(&format!("seed = {seed}\n"));
            }
        }
        out
    }

    fn build_model_unchecked(&self) -> Result<PolytopicModel> {
        PolytopicModel::new(
            self.delays.clone(),
            self.vertices
                .iter()
                .map(|v| VertexMatrices {
                    a: v.a.clone(),
                    a_delay: v.a_delay.clone(),
                    b: v.b.clone(),
                })
                .collect(),
            self.d_matrix.clone(),
            self.u_sat,
            self.d_sq,
        )
    }
}
