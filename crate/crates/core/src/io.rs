//! Text formats: model files, checkpoints and CSV exports.
//!
//! Model files are line-oriented and self-describing:
//!
//! ```text
//! onebit-model 1
//! n <n>
//! m <m>
//! layers <L>
//! c <c>
//! phi            followed by m rows of n values
//! deltas         followed by one row of L values
//! taus           followed by L rows of n values
//! end
//! ```
//!
//! Floats are written as `{:.16e}` (17 significant digits), which parses back
//! to the identical `f64`. A checkpoint is a model followed by an `adam`
//! block with the optimizer moments in the same layout.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grad::GradientBundle;
use crate::linalg::Matrix;
use crate::train::AdamState;
use crate::unfolded::{DecoderParams, Model};

const MODEL_MAGIC: &str = "onebit-model 1";

fn fmt_f64(a: f64) -> String {
    format!("{a:.16e}")
}

fn push_row(out: &mut String, row: &[f64]) {
    let line: Vec<String> = row.iter().map(|&a| fmt_f64(a)).collect();
    out.push_str(&line.join(" "));
    out.push('\n');
}

fn push_bundle_body(out: &mut String, phi: &Matrix, deltas: &[f64], taus: &[Vec<f64>]) {
    out.push_str("phi\n");
    for i in 0..phi.rows() {
        push_row(out, phi.row(i));
    }
    out.push_str("deltas\n");
    push_row(out, deltas);
    out.push_str("taus\n");
    for tau in taus {
        push_row(out, tau);
    }
}

pub fn model_to_string(model: &Model) -> String {
    let mut out = String::new();
    out.push_str(MODEL_MAGIC);
    out.push('\n');
    let _ = writeln!(out, "n {}", model.n());
    let _ = writeln!(out, "m {}", model.m());
    let _ = writeln!(out, "layers {}", model.layers());
    let _ = writeln!(out, "c {}", fmt_f64(model.c));
    push_bundle_body(
        &mut out,
        &model.phi,
        &model.params.deltas,
        &model.params.taus,
    );
    out.push_str("end\n");
    out
}

pub fn checkpoint_to_string(model: &Model, adam: &AdamState) -> String {
    let mut out = model_to_string(model);
    out.push_str("adam\n");
    let _ = writeln!(out, "step {}", adam.step);
    let _ = writeln!(out, "beta1 {}", fmt_f64(adam.beta1));
    let _ = writeln!(out, "beta2 {}", fmt_f64(adam.beta2));
    let _ = writeln!(out, "epsilon {}", fmt_f64(adam.epsilon));
    out.push_str("first-moment\n");
    push_bundle_body(&mut out, &adam.m.d_phi, &adam.m.d_deltas, &adam.m.d_taus);
    out.push_str("second-moment\n");
    push_bundle_body(&mut out, &adam.v.d_phi, &adam.v.d_deltas, &adam.v.d_taus);
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            line: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let l = l.trim();
            if !l.is_empty() && !l.starts_with('#') {
                return Ok(l);
            }
        }
        Err(Error::Parse {
            line: self.line + 1,
            msg: "unexpected end of input".into(),
        })
    }

    fn expect(&mut self, keyword: &str) -> Result<()> {
        let l = self.next_line()?;
        if l == keyword {
            Ok(())
        } else {
            Err(self.err(format!("expected `{keyword}`, found `{l}`")))
        }
    }

    fn keyed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let l = self.next_line()?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.err(format!("expected `{key} <value>`, found `{l}`")));
        }
        let value = parts
            .next()
            .ok_or_else(|| self.err(format!("missing value for `{key}`")))?;
        if parts.next().is_some() {
            return Err(self.err(format!("trailing tokens after `{key}`")));
        }
        value
            .parse()
            .map_err(|e: T::Err| self.err(format!("bad value for `{key}`: {e}")))
    }

    fn row(&mut self, len: usize) -> Result<Vec<f64>> {
        let l = self.next_line()?;
        let row: Vec<f64> = l
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|e| self.err(format!("bad float `{tok}`: {e}")))
            })
            .collect::<Result<_>>()?;
        if row.len() != len {
            return Err(self.err(format!("expected {len} values, found {}", row.len())));
        }
        if let Some(bad) = row.iter().find(|a| !a.is_finite()) {
            return Err(self.err(format!("non-finite value {bad}")));
        }
        Ok(row)
    }

    fn bundle_body(
        &mut self,
        n: usize,
        m: usize,
        layers: usize,
    ) -> Result<(Matrix, Vec<f64>, Vec<Vec<f64>>)> {
        self.expect("phi")?;
        let mut data = Vec::with_capacity(m * n);
        for _ in 0..m {
            data.extend(self.row(n)?);
        }
        let phi = Matrix::from_vec(m, n, data)?;
        self.expect("deltas")?;
        let deltas = self.row(layers)?;
        self.expect("taus")?;
        let taus = (0..layers).map(|_| self.row(n)).collect::<Result<_>>()?;
        Ok((phi, deltas, taus))
    }
}

fn parse_model(lines: &mut Lines<'_>) -> Result<Model> {
    lines.expect(MODEL_MAGIC)?;
    let n: usize = lines.keyed("n")?;
    let m: usize = lines.keyed("m")?;
    let layers: usize = lines.keyed("layers")?;
    let c: f64 = lines.keyed("c")?;
    let (phi, deltas, taus) = lines.bundle_body(n, m, layers)?;
    lines.expect("end")?;
    Model::new(phi, DecoderParams { deltas, taus }, c)
}

pub fn model_from_str(text: &str) -> Result<Model> {
    parse_model(&mut Lines::new(text))
}

pub fn checkpoint_from_str(text: &str) -> Result<(Model, AdamState)> {
    let mut lines = Lines::new(text);
    let model = parse_model(&mut lines)?;
    let (n, m, layers) = (model.n(), model.m(), model.layers());
    lines.expect("adam")?;
    let step: u64 = lines.keyed("step")?;
    let beta1: f64 = lines.keyed("beta1")?;
    let beta2: f64 = lines.keyed("beta2")?;
    let epsilon: f64 = lines.keyed("epsilon")?;
    lines.expect("first-moment")?;
    let (d_phi, d_deltas, d_taus) = lines.bundle_body(n, m, layers)?;
    let first = GradientBundle {
        d_phi,
        d_deltas,
        d_taus,
    };
    lines.expect("second-moment")?;
    let (d_phi, d_deltas, d_taus) = lines.bundle_body(n, m, layers)?;
    let second = GradientBundle {
        d_phi,
        d_deltas,
        d_taus,
    };
    lines.expect("end")?;
    Ok((
        model,
        AdamState {
            m: first,
            v: second,
            step,
            beta1,
            beta2,
            epsilon,
        },
    ))
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    std::fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    model_from_str(&std::fs::read_to_string(path)?)
}

pub fn save_checkpoint(path: &Path, model: &Model, adam: &AdamState) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(model, adam))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, AdamState)> {
    checkpoint_from_str(&std::fs::read_to_string(path)?)
}

/// Writes a header line and rows of decimal values.
pub fn write_csv<W: std::io::Write + ?Sized>(
    out: &mut W,
    header: &[&str],
    rows: &[Vec<f64>],
    index: bool,
) -> Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for (i, row) in rows.iter().enumerate() {
        let mut fields: Vec<String> = Vec::with_capacity(row.len() + 1);
        if index {
            fields.push(i.to_string());
        }
        fields.extend(row.iter().map(|a| a.to_string()));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Parses a CSV with a header; returns the header and the numeric rows.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty csv".into(),
    })?;
    let header: Vec<String> = head.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, l) in lines {
        let row: Vec<f64> = l
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 1,
                    msg: format!("bad value `{tok}`: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != header.len() {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected {} fields, found {}", header.len(), row.len()),
            });
        }
        rows.push(row);
    }
    Ok((header, rows))
}
