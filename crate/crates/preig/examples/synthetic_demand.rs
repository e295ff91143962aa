//! Writes a seeded negative-elasticity demand panel with a schema and a run
//! configuration, ready for `preig train --config <dir>/config.json`.
//!
//! Usage: `cargo run -p preig --example synthetic_demand -- <dir> [seed]`

use std::path::PathBuf;

use preig_core::synthetic::{negative_elasticity, ElasticityConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "synthetic".into()));
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    std::fs::create_dir_all(&dir)?;

    let panel = negative_elasticity(&ElasticityConfig { seed, ..Default::default() });
    let mut csv = String::from("month,price,index,demand\n");
    for (i, ((p, q), d)) in panel.price.iter().zip(&panel.index).zip(&panel.demand).enumerate() {
        let (year, month) = (2000 + i / 12, i % 12 + 1);
        csv.push_str(&format!("{year}-{month:02},{p:.4},{q:.4},{d:.4}\n"));
    }
    std::fs::write(dir.join("demand.csv"), csv)?;
    std::fs::write(
        dir.join("schema.json"),
        "{\n  \"columns\": {\n    \"price\": \"price\",\n    \"index\": \"feature\",\n    \"demand\": \"target\"\n  }\n}\n",
    )?;
    let config = serde_json::json!({
        "data": "demand.csv",
        "schema": "schema.json",
        "denoise": { "enabled": false },
        "lags": { "max_lag": 3 },
        "split": { "train_end": 240, "val_fraction": 0.2 },
        "model": { "hidden": 4, "seed": seed },
        "loss": { "lambda1": 1.0, "physics_scope": "all_lags" },
        "pbt": { "population": 4, "generations": 4, "nadam_steps": 60, "lbfgs_iters": 10, "lambda2_range": [0.5, 2.0] },
        "output": "out"
    });
    std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&config)? + "\n")?;
    println!("wrote {}", dir.display());
    Ok(())
}
