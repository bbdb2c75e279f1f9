use std::path::Path;

use anyhow::{Context, Result};
use serde_json::json;

use kantoreg::io::{write_json, Manifest};
use kantoreg::model::estimate_constants;

use super::exit::Exit;

fn bound(k: Option<f64>) -> String {
    k.map_or_else(|| "kappa unbounded".to_string(), |v| format!("{v:.4}"))
}

pub fn run(manifest: &Path, json_out: Option<&Path>) -> Result<()> {
    let m = Manifest::load(manifest).with_context(|| format!("loading {}", manifest.display()))?;
    if m.dimension != 1 {
        return Err(Exit::usage("feasibility constants are defined for 1D manifests"));
    }
    let data = m.load_dataset_1d()?;
    let c = estimate_constants(&data);
    println!("n = {}, p = {}, q = {}", data.n(), data.p(), data.q());
    let mut per = Vec::new();
    for j in 0..data.p() {
        let (plus, minus) = c.max_linear_kappa1(j);
        println!(
            "predictor {}: eta = {:.6e}  lambda = {:.6}  gamma- = {:.6}  gamma+ = {:.6}  max kappa1,+ = {}  max kappa1,- = {}",
            j + 1,
            c.eta[j],
            c.lambda[j],
            c.gamma_minus[j],
            c.gamma_plus[j],
            bound(plus),
            bound(minus)
        );
        per.push(json!({
            "eta": c.eta[j], "lambda": c.lambda[j],
            "gamma_minus": c.gamma_minus[j], "gamma_plus": c.gamma_plus[j],
            "max_kappa1_plus": plus, "max_kappa1_minus": minus,
        }));
    }
    for k in 0..data.q() {
        println!("covariate {}: l = {:.6}", k + 1, c.l_bounds[k]);
    }
    if let Some(p) = json_out {
        write_json(p, &json!({ "predictors": per, "l": c.l_bounds, "constants": c }))?;
    }
    Ok(())
}
