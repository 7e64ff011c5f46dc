//! CSV and JSON artifacts.
//!
//! Numbers are written with the shortest decimal that parses back to the
//! same `f64`, so files are bit-exact across runs and re-readable without
//! loss. Every file is written to a temporary sibling and renamed into
//! place.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::forward::{TimeGrid, Trajectory};
use crate::model::DiscreteModel;
use crate::optimize::IterateRecord;
use crate::oracle::{GradCheckReport, SweepResult};
use crate::shape::ShapeParams;

/// Shortest round-trip decimal for `x`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn push_row<I: IntoIterator<Item = f64>>(out: &mut String, values: I) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        out.push_str(&fmt_f64(v));
    }
    out.push('\n');
}

/// Writes `contents` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(contents).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// `t,q_1..q_N,v_1..v_N`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.final_state().n_modes();
    let mut out = String::from("t");
    for i in 1..=n {
        let _ = write!(out, ",q_{i}");
    }
    for i in 1..=n {
        let _ = write!(out, ",v_{i}");
    }
    out.push('\n');
    for (k, x) in traj.states().iter().enumerate() {
        let t = traj.grid().time(k);
        push_row(&mut out, std::iter::once(t).chain(x.q.iter().copied()).chain(x.v.iter().copied()));
    }
    out
}

/// `t,w(x_1)..w(x_{M-1})` on the interior quadrature nodes.
pub fn physical_csv(model: &DiscreteModel, traj: &Trajectory) -> String {
    let mut out = String::from("t");
    for x in model.quad_grid() {
        let _ = write!(out, ",w({})", fmt_f64(*x));
    }
    out.push('\n');
    for (k, x) in traj.states().iter().enumerate() {
        let w = model.synthesize(&x.q);
        push_row(&mut out, std::iter::once(traj.grid().time(k)).chain(w.iter().copied()));
    }
    out
}

/// `iter,J,control_stationarity,shape_stationarity,step`.
pub fn history_csv(log: &[IterateRecord]) -> String {
    let mut out = String::from("iter,J,control_stationarity,shape_stationarity,step\n");
    for r in log {
        let _ = write!(out, "{},", r.iter);
        push_row(&mut out, [r.cost, r.control_stationarity, r.shape_stationarity, r.step]);
    }
    out
}

/// `x,b` on the interior quadrature nodes.
pub fn shape_csv(model: &DiscreteModel, r: &ShapeParams) -> String {
    let mut out = String::from("x,b\n");
    for (&x, b) in model.quad_grid().iter().zip(r.sample(model.quad_grid())) {
        push_row(&mut out, [x, b]);
    }
    out
}

/// `t,u`.
pub fn control_csv(grid: &TimeGrid, u: &[f64]) -> String {
    let mut out = String::from("t,u\n");
    for (k, &v) in u.iter().enumerate() {
        push_row(&mut out, [grid.time(k), v]);
    }
    out
}

/// `r_1..r_m,J`; `J` is empty where the relaxation failed.
pub fn sweep_csv(sweep: &SweepResult) -> String {
    let m = sweep.points.first().map_or(0, Vec::len);
    let mut out = String::new();
    for i in 1..=m {
        let _ = write!(out, "r_{i},");
    }
    out.push_str("J\n");
    for (p, c) in sweep.points.iter().zip(&sweep.costs) {
        for v in p {
            let _ = write!(out, "{},", fmt_f64(*v));
        }
        if let Some(c) = c {
            out.push_str(&fmt_f64(*c));
        }
        out.push('\n');
    }
    out
}

/// `direction,adjoint,finite_difference,relative_error`.
pub fn gradcheck_csv(report: &GradCheckReport) -> String {
    let mut out = String::from("direction,adjoint,finite_difference,relative_error\n");
    for d in &report.directions {
        let _ = write!(out, "{},", d.label);
        push_row(&mut out, [d.adjoint, d.finite_difference, d.relative_error]);
    }
    out
}

/// Collects the files of one run under a directory.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    written: Vec<String>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        write_atomic(&self.dir.join(name), contents.as_bytes())?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// File names written so far, in order.
    pub fn files(&self) -> &[String] {
        &self.written
    }
}
