//! Dataset CSV and edge-list file formats.
//!
//! Dataset header: `id,x1,...,xd[,px,py]`. The position columns are present
//! only when the positions are not the observations themselves (fields or
//! d != 2). Floats are written in shortest round-trip form, so files are
//! deterministic per seed and parse back losslessly.

use dkm_core::sim::Dataset;

pub struct LoadedDataset {
    pub ids: Vec<u64>,
    pub observations: Vec<Vec<f64>>,
    #[allow(dead_code)] // parsed for completeness; runs only need observations
    pub positions: Option<Vec<Vec<f64>>>,
}

pub fn dataset_to_csv(dataset: &Dataset) -> String {
    let d = dataset.observations.first().map_or(0, Vec::len);
    let with_positions = dataset.positions != dataset.observations;
    let mut out = String::from("id");
    for c in 1..=d {
        out.push_str(&format!(",x{c}"));
    }
    if with_positions {
        out.push_str(",px,py");
    }
    out.push('\n');
    for (row, id) in dataset.ids.iter().enumerate() {
        out.push_str(&id.to_string());
        for v in &dataset.observations[row] {
            out.push_str(&format!(",{v}"));
        }
        if with_positions {
            out.push_str(&format!(
                ",{},{}",
                dataset.positions[row][0], dataset.positions[row][1]
            ));
        }
        out.push('\n');
    }
    out
}

pub fn dataset_from_csv(text: &str) -> Result<LoadedDataset, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty dataset file")?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.first() != Some(&"id") {
        return Err(format!("expected header to start with 'id', got '{header}'"));
    }
    let with_positions = columns.ends_with(&["px", "py"]);
    let d = columns.len() - 1 - if with_positions { 2 } else { 0 };
    if d == 0 {
        return Err("dataset has no observation columns".into());
    }
    for (c, name) in columns[1..=d].iter().enumerate() {
        let expected = format!("x{}", c + 1);
        if *name != expected {
            return Err(format!("expected column '{expected}', got '{name}'"));
        }
    }

    let mut ids = Vec::new();
    let mut observations = Vec::new();
    let mut positions = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(format!(
                "row {}: {} fields, header has {}",
                lineno + 2,
                fields.len(),
                columns.len()
            ));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|e| format!("row {}: bad id: {e}", lineno + 2))?;
        let parse_f64 = |s: &str| -> Result<f64, String> {
            s.parse()
                .map_err(|e| format!("row {}: bad float '{s}': {e}", lineno + 2))
        };
        let obs: Vec<f64> = fields[1..=d]
            .iter()
            .map(|s| parse_f64(s))
            .collect::<Result<_, _>>()?;
        if with_positions {
            positions.push(vec![parse_f64(fields[d + 1])?, parse_f64(fields[d + 2])?]);
        }
        ids.push(id);
        observations.push(obs);
    }
    if ids.is_empty() {
        return Err("dataset has no rows".into());
    }
    let positions = if with_positions {
        Some(positions)
    } else if d == 2 {
        Some(observations.clone())
    } else {
        None
    };
    Ok(LoadedDataset {
        ids,
        observations,
        positions,
    })
}

pub fn edges_from_text(text: &str, n: usize) -> Result<Vec<(usize, usize)>, String> {
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let parse = |part: Option<&str>| -> Result<usize, String> {
            part.ok_or_else(|| format!("line {}: expected 'i j'", lineno + 1))?
                .parse()
                .map_err(|e| format!("line {}: {e}", lineno + 1))
        };
        let i = parse(parts.next())?;
        let j = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(format!("line {}: trailing fields", lineno + 1));
        }
        if i >= n || j >= n {
            return Err(format!(
                "line {}: edge ({i}, {j}) out of range for {n} vertices",
                lineno + 1
            ));
        }
        edges.push((i, j));
    }
    Ok(edges)
}
