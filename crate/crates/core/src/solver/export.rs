use std::io::{Read, Write};

use super::{FieldKind, OrthantGrid, SolveStats, SolverError, ValueField};

fn header(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

/// Writes `x1,…,xd,t,value,branch,stop`, one row per slice and node. Branch
/// numbers are 1-based; `stop` is 0 or 1.
pub fn write_values_csv<W: Write>(v: &ValueField, out: W) -> Result<(), SolverError> {
    let mut w = csv::Writer::from_writer(out);
    let mut head = header(v.grid.d);
    head.extend(["t", "value", "branch", "stop"].map(String::from));
    w.write_record(&head)?;
    for (k, t) in v.times.iter().enumerate() {
        for node in 0..v.grid.len() {
            let mut row: Vec<String> = v.grid.node(node).iter().map(|x| x.to_string()).collect();
            row.push(t.to_string());
            row.push(v.values[k][node].to_string());
            row.push((v.branch[k][node] + 1).to_string());
            row.push(u8::from(v.stop[k][node]).to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV written by [`write_values_csv`] back onto `grid`. Maximizer
/// responses and clamp flags are not part of the CSV and come back empty.
pub fn read_values_csv<R: Read>(
    input: R,
    grid: &OrthantGrid,
    kind: FieldKind,
    n_branches: usize,
    stats: SolveStats,
) -> Result<ValueField, SolverError> {
    let mut r = csv::Reader::from_reader(input);
    let d = grid.d;
    let nodes = grid.len();
    let mut times: Vec<f64> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut branch: Vec<Vec<u32>> = Vec::new();
    let mut stop: Vec<Vec<bool>> = Vec::new();
    let bad = |msg: String| SolverError::InvalidField(msg);
    for (row_no, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != d + 4 {
            return Err(bad(format!("row {row_no}: expected {} columns, got {}", d + 4, rec.len())));
        }
        let num = |i: usize| -> Result<f64, SolverError> {
            rec[i].trim().parse::<f64>().map_err(|e| bad(format!("row {row_no}, column {i}: {e}")))
        };
        let (k, node) = (row_no / nodes, row_no % nodes);
        if node == 0 {
            times.push(num(d)?);
            values.push(Vec::with_capacity(nodes));
            branch.push(Vec::with_capacity(nodes));
            stop.push(Vec::with_capacity(nodes));
        }
        let expected = grid.node(node);
        for (i, e) in expected.iter().enumerate() {
            if (num(i)? - e).abs() > 1e-9 * (1.0 + e.abs()) {
                return Err(bad(format!("row {row_no}: coordinates do not match the grid")));
            }
        }
        let j = rec[d + 2].trim().parse::<u32>().map_err(|e| bad(format!("row {row_no}: {e}")))?;
        if j == 0 || j as usize > n_branches {
            return Err(bad(format!("row {row_no}: branch {j} out of range")));
        }
        values[k].push(num(d + 1)?);
        branch[k].push(j - 1);
        stop[k].push(match rec[d + 3].trim() {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("row {row_no}: stop flag {other:?}"))),
        });
    }
    if values.is_empty() || values.last().map(Vec::len) != Some(nodes) {
        return Err(bad("row count is not a multiple of the grid size".into()));
    }
    Ok(ValueField {
        kind,
        grid: *grid,
        times,
        values,
        branch,
        stop,
        response: Vec::new(),
        n_branches,
        clamped: vec![false; nodes],
        stats,
    })
}

/// Points where slice `k` crosses `level`, found by linear interpolation
/// along every grid edge.
pub fn level_set_points(v: &ValueField, k: usize, level: f64) -> Vec<Vec<f64>> {
    let grid = &v.grid;
    let vals = &v.values[k];
    let mut out = Vec::new();
    for node in 0..grid.len() {
        let a = vals[node] - level;
        let x = grid.node(node);
        if a == 0.0 {
            out.push(x.clone());
            continue;
        }
        for axis in 0..grid.d {
            let Some(next) = grid.neighbor(node, axis, 1) else { continue };
            let b = vals[next] - level;
            if a * b < 0.0 {
                let s = a / (a - b);
                let mut p = x.clone();
                p[axis] += s * (grid.coordinate(grid.multi_index(next)[axis]) - x[axis]);
                out.push(p);
            }
        }
    }
    out
}

pub fn write_level_set_csv<W: Write>(points: &[Vec<f64>], d: usize, out: W) -> Result<(), SolverError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(d))?;
    for p in points {
        w.write_record(p.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
