//! CSV emission and the trajectory reader used by `check-identities`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::estimates::{ErrorReport, NormReport};
use crate::grid::{Field, Grid, Truncation};
use crate::interpolants::{IdentityReport, Relation};
use crate::potentials::{Potential, PotentialKind};
use crate::stepper::{Forcing, SchemeParams, State, StepDiagnostics, Trajectory};

/// 17 significant digits in scientific notation.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Leading columns shared by per-run report rows.
#[derive(Clone, Debug)]
pub struct RunLabel {
    pub run_id: String,
    pub h: f64,
    pub grid: String,
    pub potential: &'static str,
}

impl RunLabel {
    fn cells(&self) -> String {
        format!("{},{},{},{}", self.run_id, fmt_float(self.h), self.grid, self.potential)
    }
}

const LABEL_HEADER: &str = "run_id,h,grid,potential";

pub fn write_estimates<W: Write>(mut w: W, rows: &[(RunLabel, NormReport)]) -> Result<()> {
    writeln!(
        w,
        "{LABEL_HEADER},{},energy_step_violation,energy_sum_violation,domain_excess",
        NormReport::MONITORED.join(",")
    )?;
    for (label, r) in rows {
        let vals: Vec<String> = r
            .monitored()
            .iter()
            .chain(&[r.energy_step_violation, r.energy_sum_violation, r.domain_excess])
            .map(|&v| fmt_float(v))
            .collect();
        writeln!(w, "{},{}", label.cells(), vals.join(","))?;
    }
    Ok(())
}

pub fn write_errors<W: Write>(mut w: W, rows: &[(RunLabel, ErrorReport)]) -> Result<()> {
    writeln!(w, "{LABEL_HEADER},{}", ErrorReport::NAMES.join(","))?;
    for (label, e) in rows {
        let vals: Vec<String> = e.as_array().iter().map(|&v| fmt_float(v)).collect();
        writeln!(w, "{},{}", label.cells(), vals.join(","))?;
    }
    Ok(())
}

/// Rows of `(quantity, slope, threshold)`; status is `PASS` when `slope >= threshold`.
pub fn write_rates<W: Write>(mut w: W, rows: &[(String, f64, f64)]) -> Result<()> {
    writeln!(w, "quantity,slope,threshold,status")?;
    for (name, slope, threshold) in rows {
        let status = if *slope >= *threshold { "PASS" } else { "FAIL" };
        writeln!(w, "{name},{},{},{status}", fmt_float(*slope), fmt_float(*threshold))?;
    }
    Ok(())
}

pub fn write_identities<W: Write>(mut w: W, report: &IdentityReport) -> Result<()> {
    writeln!(w, "name,relation,lhs,rhs,defect")?;
    for c in &report.checks {
        let rel = match c.relation {
            Relation::Equality => "eq",
            Relation::AtMost => "le",
        };
        writeln!(w, "{},{rel},{},{},{}", c.name, fmt_float(c.lhs), fmt_float(c.rhs), fmt_float(c.defect))?;
    }
    Ok(())
}

pub fn write_diagnostics<W: Write>(mut w: W, diags: &[StepDiagnostics]) -> Result<()> {
    writeln!(
        w,
        "step,newton_iterations,newton_residual,eps,phase_linear_iterations,heat_linear_iterations,heat_relative_residual"
    )?;
    for d in diags {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            d.step,
            d.phase.iterations,
            fmt_float(d.phase.final_residual),
            fmt_float(d.phase.eps_used),
            d.phase.linear_iterations,
            d.heat_linear_iterations,
            fmt_float(d.heat_relative_residual)
        )?;
    }
    Ok(())
}

/// One time level: coordinates, then `theta`, `phi`.
pub fn write_level<W: Write>(mut w: W, traj: &Trajectory<f64>, n: usize) -> Result<()> {
    let grid = &traj.grid;
    let axes = ["x", "y"];
    writeln!(w, "# step={n}")?;
    writeln!(w, "# t={}", fmt_float(traj.params.time(n)))?;
    writeln!(w, "{},theta,phi", axes[..grid.dim()].join(","))?;
    for i in 0..grid.len() {
        let c = grid.coords(i);
        for x in &c[..grid.dim()] {
            write!(w, "{},", fmt_float(*x))?;
        }
        writeln!(w, "{},{}", fmt_float(traj.theta(n).values()[i]), fmt_float(traj.phi(n).values()[i]))?;
    }
    Ok(())
}

/// All levels in long format, preceded by `# key=value` metadata lines.
pub fn write_trajectory<W: Write>(mut w: W, traj: &Trajectory<f64>) -> Result<()> {
    let grid = &traj.grid;
    let p = &traj.params;
    let join = |v: Vec<String>| v.join(";");
    writeln!(w, "# t_final={}", fmt_float(p.t_final))?;
    writeln!(w, "# n_steps={}", p.n_steps)?;
    writeln!(w, "# ell={}", fmt_float(p.ell))?;
    writeln!(w, "# potential={}", serde_json::to_string(&p.potential.kind())?)?;
    writeln!(w, "# extents={}", join(grid.extents().iter().map(|&e| fmt_float(e)).collect()))?;
    writeln!(w, "# points={}", join(grid.points().iter().map(|n| n.to_string()).collect()))?;
    writeln!(w, "# truncation={}", serde_json::to_string(&grid.truncation())?)?;
    let axes = ["x", "y"];
    writeln!(w, "step,t,node,{},theta,phi,xi", axes[..grid.dim()].join(","))?;
    for n in 0..=p.n_steps {
        let t = fmt_float(p.time(n));
        for i in 0..grid.len() {
            write!(w, "{n},{t},{i},")?;
            let c = grid.coords(i);
            for x in &c[..grid.dim()] {
                write!(w, "{},", fmt_float(*x))?;
            }
            let xi = if n == 0 { String::new() } else { fmt_float(traj.xi(n).values()[i]) };
            writeln!(w, "{},{},{xi}", fmt_float(traj.theta(n).values()[i]), fmt_float(traj.phi(n).values()[i]))?;
        }
    }
    Ok(())
}

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse { line, reason: reason.into() }
}

/// Reads a file produced by [`write_trajectory`]. The source is not stored,
/// so the result carries zero forcing and empty diagnostics.
pub fn read_trajectory(path: &Path) -> Result<Trajectory<f64>> {
    let reader = BufReader::new(File::open(path)?);
    let mut meta = std::collections::BTreeMap::new();
    let mut lines = reader.lines().enumerate();
    let mut header = None;
    for (i, line) in lines.by_ref() {
        let line = line?;
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest.trim().split_once('=').ok_or_else(|| parse_err(i + 1, "metadata line without `=`"))?;
            meta.insert(k.trim().to_string(), v.trim().to_string());
        } else {
            header = Some((i + 1, line));
            break;
        }
    }
    let (header_line, header) = header.ok_or_else(|| parse_err(0, "missing header"))?;
    let get = |k: &str| meta.get(k).ok_or_else(|| parse_err(header_line, format!("missing metadata `{k}`")));
    let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| parse_err(header_line, format!("bad `{k}`"))) };
    let t_final = num("t_final")?;
    let ell = num("ell")?;
    let n_steps: usize = get("n_steps")?.parse().map_err(|_| parse_err(header_line, "bad `n_steps`"))?;
    let kind: PotentialKind = serde_json::from_str(get("potential")?)?;
    let truncation: Truncation = serde_json::from_str(get("truncation")?)?;
    let extents: Vec<f64> = get("extents")?
        .split(';')
        .map(|s| s.parse().map_err(|_| parse_err(header_line, "bad `extents`")))
        .collect::<Result<_>>()?;
    let points: Vec<usize> = get("points")?
        .split(';')
        .map(|s| s.parse().map_err(|_| parse_err(header_line, "bad `points`")))
        .collect::<Result<_>>()?;
    let grid = Arc::new(Grid::new(&extents, &points, truncation)?);
    let dim = grid.dim();
    let cols = 3 + dim + 3;
    if header.split(',').count() != cols {
        return Err(parse_err(header_line, format!("expected {cols} columns")));
    }

    let len = grid.len();
    let mut theta = vec![Vec::with_capacity(len); n_steps + 1];
    let mut phi = vec![Vec::with_capacity(len); n_steps + 1];
    let mut xi = vec![Vec::with_capacity(len); n_steps + 1];
    let mut rows = 0usize;
    for (i, line) in lines {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols {
            return Err(parse_err(lineno, format!("expected {cols} cells, got {}", cells.len())));
        }
        let step: usize = cells[0].parse().map_err(|_| parse_err(lineno, "bad step"))?;
        let node: usize = cells[2].parse().map_err(|_| parse_err(lineno, "bad node"))?;
        if step != rows / len || node != rows % len {
            return Err(parse_err(lineno, "rows must be ordered by step, then node"));
        }
        let val = |j: usize| -> Result<f64> { cells[j].parse().map_err(|_| parse_err(lineno, format!("bad number `{}`", cells[j]))) };
        theta[step].push(val(3 + dim)?);
        phi[step].push(val(4 + dim)?);
        if step > 0 {
            xi[step].push(val(5 + dim)?);
        }
        rows += 1;
    }
    if rows != (n_steps + 1) * len {
        return Err(parse_err(0, format!("expected {} rows, found {rows}", (n_steps + 1) * len)));
    }
    let mut states = Vec::with_capacity(n_steps + 1);
    for (level, ((th, ph), x)) in theta.into_iter().zip(phi).zip(xi).enumerate() {
        states.push(State {
            level,
            theta: Field::new(&grid, th)?,
            phi: Field::new(&grid, ph)?,
            xi: if level == 0 { None } else { Some(Field::new(&grid, x)?) },
        });
    }
    let params = SchemeParams::new(t_final, n_steps, ell, Potential::from_kind(kind)?);
    Ok(Trajectory { params, grid, states, forcing: Forcing::zero(), diagnostics: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepper::run;

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(fmt_float(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_float(-0.1), "-1.0000000000000001e-1");
        let x = 0.1f64 + 0.2;
        assert_eq!(fmt_float(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn trajectory_round_trip() {
        let grid = Grid::rectangle([1.0, 0.5], [5, 4]).unwrap();
        let params = SchemeParams::new(0.25, 3, 0.8, Potential::logarithmic(2.0).unwrap());
        let theta0 = Field::from_fn(&grid, |x: [f64; 2]| x[0] - x[1]);
        let phi0 = Field::from_fn(&grid, |x: [f64; 2]| 0.5 * (3.0 * x[0]).cos());
        let traj = run(&params, &theta0, &phi0, Forcing::zero()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trajectory(create(&path).unwrap(), &traj).unwrap();
        let back = read_trajectory(&path).unwrap();
        assert_eq!(back.n_steps(), 3);
        assert_eq!(back.params.potential.kind(), traj.params.potential.kind());
        assert_eq!(*back.grid, *traj.grid);
        for n in 0..=3 {
            assert_eq!(back.theta(n).values(), traj.theta(n).values());
            assert_eq!(back.phi(n).values(), traj.phi(n).values());
            if n > 0 {
                assert_eq!(back.xi(n).values(), traj.xi(n).values());
            }
        }
    }

    #[test]
    fn reader_reports_line_of_bad_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(
            &path,
            "# t_final=1\n# n_steps=1\n# ell=1\n# potential={\"kind\":\"regular\"}\n# extents=1\n# points=3\n# truncation=\"bounded_box\"\nstep,t,node,x,theta,phi,xi\n0,0,0,0,1,0,\n0,0,1,0.5,oops,0,\n0,0,2,1,1,0,\n",
        )
        .unwrap();
        match read_trajectory(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 10),
            other => panic!("unexpected {other:?}"),
        }
    }
}
