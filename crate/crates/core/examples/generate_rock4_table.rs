//! Regenerates `data/rock4_table.json`.
//!
//! ```text
//! cargo run --release -p stork --example generate_rock4_table -- data/rock4_table.json
//! ```

use std::time::Instant;

use stork::coefficients::rock4_design::design_table;
use stork::coefficients::{RawDegree, RawTable, TABLE_FORMAT, TABLE_VERSION};

/// Every degree from 5 to 64, then every fourth up to 152.
fn degree_set() -> Vec<usize> {
    (5..=64).chain((68..=152).step_by(4)).collect()
}

fn main() {
    let path = std::env::args().nth(1).unwrap_or_else(|| "data/rock4_table.json".into());
    let keep = degree_set();
    let start = Instant::now();
    let designed = design_table(*keep.last().unwrap(), &keep).expect("design failed");
    let degrees = designed
        .iter()
        .map(|d| {
            let m = d.design.m;
            let f = d.finishing;
            eprintln!(
                "s={:>3} extent={:>10.4} extent/s^2={:.4} finishing residual={:.1e}",
                m + 4,
                2.0 * d.design.scale,
                2.0 * d.design.scale / ((m + 4) * (m + 4)) as f64,
                d.finishing_residual
            );
            RawDegree {
                s: m + 4,
                scale: d.design.scale,
                stability_extent: 2.0 * d.design.scale,
                w4_roots: d.design.roots,
                mu: d.design.mu[1..].to_vec(),
                nu: d.design.nu[2..].to_vec(),
                kappa: d.design.kappa[2..].to_vec(),
                finishing_a: [f[0], f[1], f[2], f[3], f[4], f[5]],
                finishing_b: [f[6], f[7], f[8], f[9]],
            }
        })
        .collect();
    let table = RawTable {
        format: TABLE_FORMAT.into(),
        version: TABLE_VERSION,
        degrees,
    };
    let mut json = serde_json::to_string_pretty(&table).expect("serialize");
    json.push('\n');
    std::fs::write(&path, json).expect("write table");
    eprintln!("wrote {path} in {:.1}s", start.elapsed().as_secs_f64());
}
