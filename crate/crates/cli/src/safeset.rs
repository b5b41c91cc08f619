use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use softcbf::config::RunConfig;
use softcbf::env_geometry::{expand_safe_set, Facet, HalfspacePolytope, Orientation, Vertex};

use crate::simulate::out_dir;

#[derive(Debug, Serialize)]
struct RowOut {
    kind: &'static str,
    h: [f64; 2],
    offset: f64,
    orientation: Orientation,
}

#[derive(Debug, Serialize)]
struct VertexOut {
    x: f64,
    y: f64,
    facets: [usize; 2],
}

#[derive(Debug, Serialize)]
struct SetOut {
    rows: Vec<RowOut>,
    vertices: Vec<VertexOut>,
}

#[derive(Debug, Serialize)]
struct SafeSetExport {
    n_max: f64,
    no_contact: SetOut,
    safe_set: SetOut,
}

fn rows_out(rows: &[Facet], originals: usize) -> Vec<RowOut> {
    rows.iter()
        .enumerate()
        .map(|(i, f)| RowOut {
            kind: if i < originals { "original" } else { "vertex" },
            h: [f.coeffs.x, f.coeffs.y],
            offset: f.offset,
            orientation: f.orientation,
        })
        .collect()
}

fn vertices_out(poly: &HalfspacePolytope) -> Result<Vec<VertexOut>> {
    Ok(poly
        .vertices()?
        .iter()
        .map(|v: &Vertex| VertexOut {
            x: v.point.x,
            y: v.point.y,
            facets: [v.facets.0, v.facets.1],
        })
        .collect())
}

fn orientation_name(o: Orientation) -> &'static str {
    match o {
        Orientation::Upper => "upper",
        Orientation::Lower => "lower",
    }
}

/// Writes `safeset.json`, `safeset_rows.csv` and `safeset_vertices.csv`.
/// Floats are printed in shortest round-trip form, so re-parsing any of the
/// files gives back the exact rows.
pub fn cmd_safeset(config: &Path, out: Option<&Path>) -> Result<u8> {
    let cfg = RunConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    let out = out_dir(out, cfg.output_dir.as_deref());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let safe = expand_safe_set(&cfg.env, &cfg.model).context("expanding the environment")?;
    let export = SafeSetExport {
        n_max: safe.n_max(),
        no_contact: SetOut {
            rows: rows_out(cfg.env.facets(), cfg.env.len()),
            vertices: vertices_out(&cfg.env).context("no-contact vertices")?,
        },
        safe_set: SetOut {
            rows: rows_out(safe.rows(), safe.original_count()),
            vertices: vertices_out(&safe.as_polytope()?).context("safe-set vertices")?,
        },
    };

    let json = serde_json::to_string_pretty(&export)?;
    fs::write(out.join("safeset.json"), json + "\n")?;

    let mut rows = String::from("set,row,kind,h1,h2,offset,orientation\n");
    let mut verts = String::from("set,x,y,facet_i,facet_j\n");
    for (name, set) in [("N", &export.no_contact), ("P", &export.safe_set)] {
        for (i, r) in set.rows.iter().enumerate() {
            writeln!(
                rows,
                "{name},{i},{},{},{},{},{}",
                r.kind,
                r.h[0],
                r.h[1],
                r.offset,
                orientation_name(r.orientation)
            )?;
        }
        for v in &set.vertices {
            writeln!(verts, "{name},{},{},{},{}", v.x, v.y, v.facets[0], v.facets[1])?;
        }
    }
    fs::write(out.join("safeset_rows.csv"), rows)?;
    fs::write(out.join("safeset_vertices.csv"), verts)?;

    println!(
        "n_max = {} m; {} original row(s), {} vertex row(s); written to {}",
        safe.n_max(),
        safe.original_count(),
        safe.vertex_row_count(),
        out.display()
    );
    Ok(0)
}
