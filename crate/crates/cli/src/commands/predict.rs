use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use kantoreg::io::{load_density_1d_on, read_density2d_on, read_json, write_density2d_csv, write_density_csv, write_potential_with_sidecar, DEFAULT_BANDWIDTH};
use kantoreg::model::predict_map;
use kantoreg::ot1d::pushforward;
use kantoreg::ot2d::{ot_solve_2d, pushforward_2d, Potential2D};

use super::fit::SavedModel;
use crate::output::{out_dir, table};

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model written by `kr fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// One density (or sample) file per distributional predictor, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub predictors: Vec<PathBuf>,
    /// Scalar covariates, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub scalars: Vec<f64>,
    /// KDE bandwidth for sample files.
    #[arg(long, default_value_t = DEFAULT_BANDWIDTH)]
    pub bandwidth: f64,
    /// Output directory.
    #[arg(long, short, default_value = "predict-out")]
    pub out: PathBuf,
}

pub fn run(args: &PredictArgs) -> Result<()> {
    let saved: SavedModel = read_json(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let dir = out_dir(&args.out)?;
    match saved {
        SavedModel::OneD { model } => {
            model.validate()?;
            let preds = args
                .predictors
                .iter()
                .map(|p| load_density_1d_on(p, model.grid, args.bandwidth).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let (map, phi) = predict_map(&model, &preds, &args.scalars, &model.nu_bar, &model.mu_bars)?;
            map.check_monotone_on(&model.nu_bar)?;
            let density = pushforward(&model.nu_bar, &map)?;
            write_density_csv(&dir.join("prediction.csv"), &density)?;
            table(
                &dir.join("displacement.csv"),
                &["x".into(), "displacement".into()],
                &[model.grid.nodes(), map.displacement()],
            )?;
            write_potential_with_sidecar(&dir.join("potential.csv"), &phi, "nu_bar")?;
            println!("predicted density (mean {:.6}) -> {}", density.mean(), dir.display());
        }
        SavedModel::TwoD { model, ot } => {
            if !args.scalars.is_empty() {
                return Err(super::exit::Exit::usage("2D models take no scalar covariates"));
            }
            let preds = args
                .predictors
                .iter()
                .map(|p| read_density2d_on(p, model.grid).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            if preds.len() != model.step_params.len() {
                return Err(super::exit::Exit::usage(format!(
                    "model has {} predictors, got {}",
                    model.step_params.len(),
                    preds.len()
                )));
            }
            let phis = preds
                .iter()
                .zip(&model.mu_bars)
                .map(|(mu, bar)| Ok(ot_solve_2d(bar, mu, &ot)?.potential))
                .collect::<Result<Vec<Potential2D>>>()?;
            let refs: Vec<&Potential2D> = phis.iter().collect();
            let map = model.map_for(&refs);
            let density = pushforward_2d(&model.nu_bar, &map)?;
            write_density2d_csv(&dir.join("prediction.csv"), &density)?;
            let g = model.grid;
            let (xs, ys): (Vec<f64>, Vec<f64>) = (0..g.len()).map(|i| g.point(i)).unzip();
            let disp = map.displacement();
            table(
                &dir.join("displacement.csv"),
                &["x".into(), "y".into(), "dx".into(), "dy".into()],
                &[xs, ys, disp.iter().map(|d| d[0]).collect(), disp.iter().map(|d| d[1]).collect()],
            )?;
            let (mx, my) = density.mean();
            println!("predicted density (mean ({mx:.4}, {my:.4})) -> {}", dir.display());
        }
    }
    Ok(())
}
