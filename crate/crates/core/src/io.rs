//! Artifact formats: trajectory CSV, initial-configuration CSV and the
//! relative-equilibrium JSON document.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::Trajectory;
use crate::equilibria::RelativeEquilibrium;
use crate::phase::PhasePoint;
use crate::systems::{validate_spec, SystemSpec, MAX_BODIES, MAX_DIM};

/// Upper bound on configuration-space dimension accepted by the parsers.
pub const MAX_CONFIG_DIM: usize = MAX_BODIES * MAX_DIM;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {message}")]
    Format { line: u64, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_err(line: u64, message: impl Into<String>) -> IoError {
    IoError::Format {
        line,
        message: message.into(),
    }
}

/// Column names for a trajectory in `n` degrees of freedom.
pub fn trajectory_header(n: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain((1..=n).map(|i| format!("q_{i}")))
        .chain((1..=n).map(|i| format!("p_{i}")))
        .chain(["H", "J", "K", "int_theta"].map(String::from))
        .collect()
}

/// Shortest round-trip scientific notation.
pub fn format_float(x: f64) -> String {
    format!("{x:e}")
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_header(traj.dim()))?;
    for k in 0..traj.len() {
        let z = &traj.states[k];
        let row = std::iter::once(traj.times[k])
            .chain(z.q.iter().copied())
            .chain(z.p.iter().copied())
            .chain([
                traj.hamiltonian[k],
                traj.momentum[k],
                traj.kinetic[k],
                traj.int_theta[k],
            ])
            .map(format_float);
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn trajectory_to_csv(traj: &Trajectory) -> Result<String, IoError> {
    let mut buf = Vec::new();
    write_trajectory_csv(traj, &mut buf)?;
    String::from_utf8(buf).map_err(|e| IoError::Invalid(e.to_string()))
}

fn parse_field(field: &str, line: u64) -> Result<f64, IoError> {
    let x: f64 = field
        .trim()
        .parse()
        .map_err(|_| format_err(line, format!("not a number: {field:?}")))?;
    if !x.is_finite() {
        return Err(format_err(line, "non-finite value"));
    }
    Ok(x)
}

/// Parses a trajectory CSV. Times must be strictly increasing and every
/// value finite. The conformal parameter is not stored in the file.
pub fn parse_trajectory_csv(text: &str) -> Result<Trajectory, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    if header.len() < 7 || !(header.len() - 5).is_multiple_of(2) {
        return Err(format_err(
            1,
            format!("unexpected column count {}", header.len()),
        ));
    }
    let n = (header.len() - 5) / 2;
    if n > MAX_CONFIG_DIM {
        return Err(format_err(1, "too many columns"));
    }
    if header != trajectory_header(n) {
        return Err(format_err(
            1,
            "header does not match t,q_1..q_n,p_1..p_n,H,J,K,int_theta",
        ));
    }

    let mut traj = Trajectory {
        c: None,
        times: Vec::new(),
        states: Vec::new(),
        hamiltonian: Vec::new(),
        momentum: Vec::new(),
        kinetic: Vec::new(),
        int_theta: Vec::new(),
    };
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(format_err(line, "wrong number of fields"));
        }
        let values = record
            .iter()
            .map(|f| parse_field(f, line))
            .collect::<Result<Vec<_>, _>>()?;
        let t = values[0];
        if traj.times.last().is_some_and(|&prev| !(t > prev)) {
            return Err(format_err(line, "times must be strictly increasing"));
        }
        traj.times.push(t);
        traj.states.push(PhasePoint {
            q: DVector::from_column_slice(&values[1..=n]),
            p: DVector::from_column_slice(&values[n + 1..=2 * n]),
        });
        traj.hamiltonian.push(values[2 * n + 1]);
        traj.momentum.push(values[2 * n + 2]);
        traj.kinetic.push(values[2 * n + 3]);
        traj.int_theta.push(values[2 * n + 4]);
    }
    if traj.is_empty() {
        return Err(IoError::Invalid("trajectory has no rows".into()));
    }
    Ok(traj)
}

/// Initial configuration: one row per body, one column per spatial axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub bodies: usize,
    pub dim: usize,
    /// Stacked body coordinates.
    pub q: DVector<f64>,
}

/// Parses a configuration CSV. A leading row with no numeric fields is
/// taken as a header; lines starting with `#` are comments.
pub fn parse_configuration_csv(text: &str) -> Result<Configuration, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if index == 0 && record.iter().all(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if rows.len() == MAX_BODIES {
            return Err(format_err(line, format!("more than {MAX_BODIES} bodies")));
        }
        let row = record
            .iter()
            .map(|f| parse_field(f, line))
            .collect::<Result<Vec<_>, _>>()?;
        if row.is_empty() || row.len() > MAX_DIM {
            return Err(format_err(
                line,
                format!("expected 1..={MAX_DIM} coordinates"),
            ));
        }
        if rows.first().is_some_and(|first| first.len() != row.len()) {
            return Err(format_err(line, "rows have different lengths"));
        }
        rows.push(row);
    }
    let bodies = rows.len();
    if bodies == 0 {
        return Err(IoError::Invalid("configuration has no rows".into()));
    }
    let dim = rows[0].len();
    Ok(Configuration {
        bodies,
        dim,
        q: DVector::from_iterator(bodies * dim, rows.into_iter().flatten()),
    })
}

/// Writes a configuration in the format read by [`parse_configuration_csv`].
pub fn configuration_to_csv(q: &DVector<f64>, dim: usize) -> String {
    let mut out = String::new();
    for row in q.as_slice().chunks(dim.max(1)) {
        let fields: Vec<String> = row.iter().map(|&x| format_float(x)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// On-disk relative equilibrium: the solver output, the system it belongs
/// to and, optionally, the resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeEquilibriumDocument {
    #[serde(flatten)]
    pub equilibrium: RelativeEquilibrium,
    pub system: SystemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl RelativeEquilibriumDocument {
    pub fn to_json(&self) -> Result<String, IoError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

pub fn parse_relative_equilibrium(text: &str) -> Result<RelativeEquilibriumDocument, IoError> {
    let doc: RelativeEquilibriumDocument = serde_json::from_str(text)?;
    validate_spec(&doc.system).map_err(|e| IoError::Invalid(e.to_string()))?;
    let re = &doc.equilibrium;
    let n = doc.system.config_dim();
    if re.q.len() != n || re.p.len() != n {
        return Err(IoError::Invalid(format!(
            "q and p must have length {n}, got {} and {}",
            re.q.len(),
            re.p.len()
        )));
    }
    let scalars = [re.xi, re.residual_cc, re.residual_full];
    if !re
        .q
        .iter()
        .chain(&re.p)
        .chain(&scalars)
        .all(|x| x.is_finite())
    {
        return Err(IoError::Invalid("non-finite value".into()));
    }
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::integrate;
    use crate::systems::DampedOscillator;

    #[test]
    fn header_layout() {
        assert_eq!(
            trajectory_header(2).join(","),
            "t,q_1,q_2,p_1,p_2,H,J,K,int_theta"
        );
    }

    #[test]
    fn trajectory_round_trip_is_exact() {
        let osc = DampedOscillator { friction: 0.1 };
        let z0 = PhasePoint::from_slices(&[1.0], &[0.0]).unwrap();
        let traj = integrate(&osc, -0.1, &z0, 0.05, 0.01).unwrap();
        let text = trajectory_to_csv(&traj).unwrap();
        let back = parse_trajectory_csv(&text).unwrap();
        assert_eq!(back.times, traj.times);
        assert_eq!(back.states, traj.states);
        assert_eq!(back.int_theta, traj.int_theta);
        assert_eq!(trajectory_to_csv(&back).unwrap(), text);
    }

    #[test]
    fn trajectory_rejects_bad_input() {
        let h = "t,q_1,p_1,H,J,K,int_theta\n";
        for body in [
            "0,1,0,0,0,0,0\n0,1,0,0,0,0,0\n",
            "0,1,0,0,0,0,NaN\n",
            "0,1,0,0,0,0\n",
            "0,x,0,0,0,0,0\n",
            "",
        ] {
            assert!(
                parse_trajectory_csv(&format!("{h}{body}")).is_err(),
                "{body:?}"
            );
        }
        assert!(parse_trajectory_csv("t,q_1,p_2,H,J,K,int_theta\n0,0,0,0,0,0,0\n").is_err());
        assert!(parse_trajectory_csv("t,x\n").is_err());
        assert!(parse_trajectory_csv("").is_err());
    }

    #[test]
    fn configuration_with_and_without_header() {
        let plain = parse_configuration_csv("0.5,0,0\n-0.5,0,0\n").unwrap();
        assert_eq!((plain.bodies, plain.dim), (2, 3));
        assert_eq!(plain.q.as_slice(), &[0.5, 0.0, 0.0, -0.5, 0.0, 0.0]);
        let headed = parse_configuration_csv("x,y,z\n# comment\n0.5,0,0\n-0.5,0,0\n").unwrap();
        assert_eq!(headed, plain);
        let text = configuration_to_csv(&plain.q, 3);
        assert_eq!(parse_configuration_csv(&text).unwrap(), plain);
    }

    #[test]
    fn configuration_rejects_bad_input() {
        for bad in ["", "x,y\n", "1,2\n3\n", "1,2,3,4\n", "1,inf\n", "1,,2\n"] {
            assert!(parse_configuration_csv(bad).is_err(), "{bad:?}");
        }
    }

    fn sample_document() -> RelativeEquilibriumDocument {
        RelativeEquilibriumDocument {
            equilibrium: RelativeEquilibrium {
                q: vec![0.5, 0.0, 0.0, -0.5, 0.0, 0.0],
                p: vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0],
                xi: 2.0,
                residual_cc: 0.0,
                residual_full: 0.0,
                certified: true,
                iterations: 0,
            },
            system: SystemSpec::nbody(vec![1.0, 1.0], 3),
            config: None,
        }
    }

    #[test]
    fn relative_equilibrium_round_trip() {
        let doc = sample_document();
        let text = doc.to_json().unwrap();
        assert!(text.contains("\"xi\": 2.0"));
        assert_eq!(parse_relative_equilibrium(&text).unwrap(), doc);
    }

    #[test]
    fn relative_equilibrium_rejects_bad_input() {
        let mut doc = sample_document();
        doc.equilibrium.q.pop();
        assert!(parse_relative_equilibrium(&serde_json::to_string(&doc).unwrap()).is_err());
        assert!(parse_relative_equilibrium("{\"q\":[1],\"p\":[1]}").is_err());
        let bad_system = sample_document()
            .to_json()
            .unwrap()
            .replace("\"dim\": 3", "\"dim\": 9");
        assert!(parse_relative_equilibrium(&bad_system).is_err());
    }
}
