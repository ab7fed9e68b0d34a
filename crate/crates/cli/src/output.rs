//! Series and report writers. Every file goes through a temp file in the target
//! directory and is renamed into place.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use markovian_embed::liouville::CMat;
use markovian_embed::propagator::{observable, Trajectory};
use serde::Serialize;

use crate::CliError;

pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    tmp.write_all(bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    tmp.persist(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

pub fn csv_header(observables: &[(String, CMat)]) -> String {
    let mut h = String::from("t");
    for (name, _) in observables {
        write!(h, ",re_{name},im_{name}").unwrap();
    }
    h.push_str(",trace_dev,top_level_norm");
    h
}

/// `t`, then `re_`/`im_` per observable, then `trace_dev` and `top_level_norm`.
/// Numbers use the shortest round-trip scientific form.
pub fn trajectory_csv(traj: &Trajectory, observables: &[(String, CMat)]) -> markovian_embed::Result<String> {
    let series: Vec<_> = observables.iter().map(|(_, o)| observable(traj, o)).collect::<Result<_, _>>()?;
    let mut out = csv_header(observables);
    out.push('\n');
    for (i, t) in traj.t_grid.iter().enumerate() {
        write!(out, "{t:e}").unwrap();
        for s in &series {
            write!(out, ",{:e},{:e}", s[i].re, s[i].im).unwrap();
        }
        let d = &traj.diagnostics;
        writeln!(out, ",{:e},{:e}", d.trace_dev[i], d.top_level_norm[i]).unwrap();
    }
    Ok(out)
}

#[derive(Serialize)]
struct SeriesJson {
    re: Vec<f64>,
    im: Vec<f64>,
}

#[derive(Serialize)]
struct TrajectoryJson<'a> {
    t: &'a [f64],
    observables: std::collections::BTreeMap<&'a str, SeriesJson>,
    trace_dev: &'a [f64],
    top_level_norm: &'a [f64],
}

pub fn trajectory_json(traj: &Trajectory, observables: &[(String, CMat)]) -> markovian_embed::Result<String> {
    let mut obs = std::collections::BTreeMap::new();
    for (name, o) in observables {
        let s = observable(traj, o)?;
        obs.insert(name.as_str(), SeriesJson { re: s.iter().map(|z| z.re).collect(), im: s.iter().map(|z| z.im).collect() });
    }
    let j = TrajectoryJson {
        t: &traj.t_grid,
        observables: obs,
        trace_dev: &traj.diagnostics.trace_dev,
        top_level_norm: &traj.diagnostics.top_level_norm,
    };
    Ok(serde_json::to_string_pretty(&j).expect("trajectory serializes") + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use markovian_embed::liouville::pauli;
    use num_complex::Complex64;

    #[test]
    fn header_layout() {
        let obs = vec![("sz".to_string(), pauli('z').unwrap()), ("sx".to_string(), pauli('x').unwrap())];
        assert_eq!(csv_header(&obs), "t,re_sz,im_sz,re_sx,im_sx,trace_dev,top_level_norm");
    }

    #[test]
    fn rows_round_trip() {
        let mut up = CMat::zeros(2, 2);
        up[(0, 0)] = Complex64::ONE;
        let traj = Trajectory::new(vec![0.0, 0.1], vec![up.clone(), up]);
        let obs = vec![("sz".to_string(), pauli('z').unwrap())];
        let csv = trajectory_csv(&traj, &obs).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        let row: Vec<f64> = lines[2].split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(row, vec![0.1, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(dir.path(), "a.txt", b"one").unwrap();
        write_atomic(dir.path(), "a.txt", b"two").unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("a.txt")).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
