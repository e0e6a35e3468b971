//! On-disk formats: atom clouds as CSV (`x1,...,xd,weight` header) and grid
//! densities as JSON (axes plus a flat row-major value array, first axis
//! slowest).

use crate::error::{Error, Result};
use crate::measure::discrete::DiscreteMeasure;
use crate::measure::grid::GridDensity;
use std::io::{BufRead, Write};

/// Write an atom cloud as CSV with header `x1,...,xd,weight`.
pub fn write_measure_csv<W: Write>(out: &mut W, mu: &DiscreteMeasure) -> Result<()> {
    let d = mu.dim();
    let header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    writeln!(out, "{},weight", header.join(","))?;
    for k in 0..mu.n_atoms() {
        for v in mu.point(k) {
            write!(out, "{v:.17e},")?;
        }
        writeln!(out, "{:.17e}", mu.weights()[k])?;
    }
    Ok(())
}

/// Read an atom cloud from CSV written by [`write_measure_csv`] (or by
/// hand). The measure is flagged `probability` exactly when the weights sum
/// to one within the probability tolerance.
pub fn read_measure_csv<R: BufRead>(input: R) -> Result<DiscreteMeasure> {
    let mut lines = input.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => {
            return Err(Error::Parse {
                line: 1,
                col: 1,
                message: "empty file: expected header x1,...,xd,weight".into(),
            })
        }
    };
    let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    if cols.len() < 2 || cols.last() != Some(&"weight") {
        return Err(Error::Parse {
            line: 1,
            col: 1,
            message: format!("bad header {header:?}: expected x1,...,xd,weight"),
        });
    }
    for (j, c) in cols[..cols.len() - 1].iter().enumerate() {
        if *c != format!("x{}", j + 1) {
            return Err(Error::Parse {
                line: 1,
                col: j + 1,
                message: format!("bad header column {c:?}: expected x{}", j + 1),
            });
        }
    }
    let d = cols.len() - 1;
    let mut pts = Vec::new();
    let mut ws = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let row = line.trim();
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != d + 1 {
            return Err(Error::Parse {
                line: idx + 1,
                col: 1,
                message: format!("expected {} fields, found {}", d + 1, fields.len()),
            });
        }
        for (col, f) in fields.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: idx + 1,
                col: col + 1,
                message: format!("not a number: {f:?}"),
            })?;
            if col < d {
                pts.push(v);
            } else {
                ws.push(v);
            }
        }
    }
    DiscreteMeasure::sub_probability(d, pts, ws)
}

/// Serialize a grid density as JSON.
pub fn write_grid_json<W: Write>(out: &mut W, g: &GridDensity) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, g)?;
    writeln!(out)?;
    Ok(())
}

/// Deserialize a grid density from JSON, re-running all invariant checks
/// by rebuilding through the validating constructor.
pub fn read_grid_json<R: std::io::Read>(input: R) -> Result<GridDensity> {
    let g: GridDensity = serde_json::from_reader(input)?;
    GridDensity::new(g.axes().to_vec(), g.values().to_vec(), g.is_probability())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::grid::GridAxis;

    #[test]
    fn measure_csv_round_trips_exactly() {
        let mu = DiscreteMeasure::probability(
            2,
            vec![0.1, -0.25, 1.0 / 3.0, 7.5],
            vec![0.25, 0.75],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_measure_csv(&mut buf, &mu).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,weight\n"));
        let back = read_measure_csv(&buf[..]).unwrap();
        assert_eq!(back.points_flat(), mu.points_flat());
        assert_eq!(back.weights(), mu.weights());
        assert!(back.is_probability());
    }

    #[test]
    fn csv_errors_carry_line_and_column() {
        let bad = "x1,weight\n0.0,oops\n";
        match read_measure_csv(bad.as_bytes()) {
            Err(Error::Parse { line, col, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(col, 2);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_rejects_wrong_header() {
        let bad = "a,b,weight\n0,0,1\n";
        assert!(matches!(
            read_measure_csv(bad.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn grid_json_round_trips() {
        let g = GridDensity::new(
            vec![GridAxis::new(-1.0, 1.0, 4).unwrap()],
            vec![0.1, 0.4, 0.4, 0.1],
            false,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_grid_json(&mut buf, &g).unwrap();
        let back = read_grid_json(&buf[..]).unwrap();
        assert_eq!(back.values(), g.values());
        assert_eq!(back.axes(), g.axes());
    }

    #[test]
    fn grid_json_rejects_negative_values() {
        let text = r#"{"axes":[{"lo":0.0,"hi":1.0,"cells":2}],"values":[1.0,-1.0],"probability":false}"#;
        assert!(read_grid_json(text.as_bytes()).is_err());
    }
}
