//! Columnar text format for grid functions: `# key=value` header lines
//! followed by whitespace-separated `r theta u` rows (one per node, the
//! origin first).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::solver::DiscreteSolution;
use super::DomainError;

/// Header entries describing a solution; callers may append more.
pub fn solution_header(sol: &DiscreteSolution) -> Vec<(String, String)> {
    let g = &sol.grid;
    vec![
        ("kind".into(), sol.kind.name().into()),
        ("dim".into(), g.dim().to_string()),
        ("lambda".into(), sol.e.lambda().to_string()),
        ("Lambda".into(), sol.e.Lambda().to_string()),
        ("p".into(), sol.p.to_string()),
        ("epsilon".into(), g.domain.epsilon.to_string()),
        ("shape".into(), g.domain.shape.to_string()),
        ("nr".into(), g.nr.to_string()),
        ("ntheta".into(), g.ntheta.to_string()),
        ("residual".into(), format!("{:e}", sol.residual_norm)),
        ("newton_iters".into(), sol.newton_iters.to_string()),
    ]
}

pub fn write_solution<W: Write>(sol: &DiscreteSolution, extra: &[(String, String)], mut w: W) -> Result<(), DomainError> {
    let io = |e: std::io::Error| DomainError::Io(e.to_string());
    for (k, v) in solution_header(sol).iter().chain(extra) {
        writeln!(w, "# {k}={v}").map_err(io)?;
    }
    writeln!(w, "# columns=r theta u").map_err(io)?;
    for (k, u) in sol.values.iter().enumerate() {
        let (r, t) = sol.grid.physical(k);
        writeln!(w, "{r:e} {t:e} {u:e}").map_err(io)?;
    }
    Ok(())
}

/// Parsed file: header map and `(r, θ, u)` rows.
pub type GridFile = (BTreeMap<String, String>, Vec<[f64; 3]>);

pub fn read_solution<R: BufRead>(r: R) -> Result<GridFile, DomainError> {
    let mut header = BTreeMap::new();
    let mut rows = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| DomainError::Io(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(kv) = line.strip_prefix('#') {
            if let Some((k, v)) = kv.trim().split_once('=') {
                header.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|x| x.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| DomainError::Io(format!("line {}: {e}", n + 1)))?;
        if vals.len() != 3 {
            return Err(DomainError::Io(format!("line {}: expected 3 columns, got {}", n + 1, vals.len())));
        }
        rows.push([vals[0], vals[1], vals[2]]);
    }
    Ok((header, rows))
}
