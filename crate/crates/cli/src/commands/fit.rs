use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use kantoreg::fit::{fit, FitConfig};
use kantoreg::io::{read_json, write_json, Manifest};
use kantoreg::model::{empirical_loss, format_signs, linspace, LossMode, ModelSpec, Sign, StepParams};
use kantoreg::ot2d::{fit_2d, BarycenterConfig, Fit2DConfig, Model2D, OtConfig};

use super::exit::Exit;
use crate::output::{out_dir, table};

/// Points at which `f'` curves are tabulated.
const CURVE_POINTS: usize = 501;

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset manifest (JSON).
    pub manifest: PathBuf,
    /// Flat JSON fit configuration; omitted keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, default_value = "fit-out")]
    pub out: PathBuf,
    /// Loss reported as `loss` in the summary (both are always written).
    #[arg(long, default_value = "quadratic", value_parser = ["quadratic", "exact"])]
    pub mode: String,
    /// Fail with exit code 2 when the fitted parameters violate the feasibility inequality.
    #[arg(long)]
    pub enforce_feasibility: bool,
    /// Only try these sign configurations, e.g. `++` or `+-,-+`.
    #[arg(long, value_delimiter = ',')]
    pub signs: Vec<String>,
}

/// A fitted model on disk, tagged by dimension.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "dimension")]
pub enum SavedModel {
    #[serde(rename = "1")]
    OneD { model: ModelSpec },
    #[serde(rename = "2")]
    TwoD { model: Model2D, ot: OtConfig },
}

pub fn parse_signs(s: &str) -> Result<Vec<Sign>> {
    s.chars()
        .map(|c| match c {
            '+' => Ok(Sign::Plus),
            '-' => Ok(Sign::Minus),
            other => Err(Exit::usage(format!("sign must be + or -, got {other:?} in {s:?}"))),
        })
        .collect()
}

fn sign_list(args: &FitArgs) -> Result<Option<Vec<Vec<Sign>>>> {
    if args.signs.is_empty() {
        return Ok(None);
    }
    Ok(Some(args.signs.iter().map(|s| parse_signs(s)).collect::<Result<_>>()?))
}

fn load_config<T: Default + for<'de> Deserialize<'de>>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => read_json(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(T::default()),
    }
}

fn fprime_table(dir: &Path, j: usize, f: &StepParams) -> Result<()> {
    let (lo, hi) = f.span();
    let ts = linspace(lo, hi, CURVE_POINTS);
    let fp = ts.iter().map(|t| f.fprime(*t)).collect();
    table(&dir.join(format!("fprime_{}.csv", j + 1)), &["t".into(), "fprime".into()], &[ts, fp])
}

/// JSON number, or `"inf"`/`"-inf"`/`"nan"` when not finite.
fn num(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(format!("{v}").to_lowercase())
    }
}

fn write_trace(dir: &Path, trace: &[f64]) -> Result<()> {
    let it = (0..trace.len()).map(|i| i as f64).collect();
    table(&dir.join("loss_trace.csv"), &["iteration".into(), "loss".into()], &[it, trace.to_vec()])
}

fn write_delta_losses<'a>(dir: &Path, losses: impl Iterator<Item = (&'a String, &'a f64)>) -> Result<()> {
    let mut s = String::from("delta,loss\n");
    for (d, l) in losses {
        writeln!(s, "{d},{l:?}").unwrap();
    }
    std::fs::write(dir.join("delta_losses.csv"), s)?;
    Ok(())
}

pub fn run(args: &FitArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest).with_context(|| format!("loading {}", args.manifest.display()))?;
    let dir = out_dir(&args.out)?;
    match manifest.dimension {
        2 => run_2d(args, &manifest, &dir),
        _ => run_1d(args, &manifest, &dir),
    }
}

fn run_1d(args: &FitArgs, manifest: &Manifest, dir: &Path) -> Result<()> {
    let mut cfg: FitConfig = load_config(args.config.as_deref())?;
    if let Some(s) = sign_list(args)? {
        cfg.sign_configs = Some(s);
    }
    let data = manifest.load_dataset_1d()?;
    let res = fit(&data, &cfg)?;
    let model = &res.model;

    write_json(&dir.join("model.json"), &SavedModel::OneD { model: model.clone() })?;
    write_trace(dir, &res.loss_trace)?;
    for (j, f) in model.step_params.iter().enumerate() {
        fprime_table(dir, j, f)?;
    }
    let nodes = model.grid.nodes();
    for (k, psi) in model.psi_params.iter().enumerate() {
        let d = nodes.iter().map(|x| psi.deriv(*x)).collect();
        table(&dir.join(format!("psiprime_{}.csv", k + 1)), &["x".into(), "psiprime".into()], &[nodes.clone(), d])?;
    }
    write_delta_losses(dir, res.per_delta_losses.iter())?;

    let quadratic = empirical_loss(model, &data, LossMode::Quadratic)?;
    let exact = empirical_loss(model, &data, LossMode::Exact)?;
    let (ok, slack) = model.feasibility()?;
    let summary = json!({
        "dimension": 1,
        "n": data.n(), "p": data.p(), "q": data.q(),
        "mode": args.mode,
        "loss": if args.mode == "exact" { exact } else { quadratic },
        "loss_quadratic": quadratic,
        "loss_exact": exact,
        "chosen_delta": format_signs(&res.chosen_delta),
        "per_delta_losses": res.per_delta_losses,
        "iterations": res.iterations,
        "step_size": res.step_size,
        "grad_norm_final": res.grad_norm_final,
        "feasible": ok,
        "feasibility_lhs": num(1.0 - slack),
        "feasibility_slack": num(slack),
        "constants": model.constants,
        "config": cfg,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "delta {}  loss {:.6e} (exact {:.6e})  {} iterations  -> {}",
        format_signs(&res.chosen_delta),
        quadratic,
        exact,
        res.iterations,
        dir.display()
    );
    if args.enforce_feasibility && !ok {
        return Err(Exit::infeasible(format!(
            "feasibility violated: sum_j (gamma_j + lambda_j) kappa1_j + eta_j kappa2_j + sum_k l_k rho_k = {:.6} > 1 (slack {:.6})",
            1.0 - slack,
            slack
        )));
    }
    Ok(())
}

fn run_2d(args: &FitArgs, manifest: &Manifest, dir: &Path) -> Result<()> {
    let mut cfg: Fit2DConfig = load_config(args.config.as_deref())?;
    if let Some(s) = sign_list(args)? {
        cfg.sign_configs = Some(s);
    }
    let bary = BarycenterConfig { ot: cfg.ot.clone(), ..Default::default() };
    let data = manifest.load_dataset_2d(&bary)?;
    let res = fit_2d(&data, &cfg)?;
    write_json(&dir.join("model.json"), &SavedModel::TwoD { model: res.model.clone(), ot: cfg.ot.clone() })?;
    write_trace(dir, &res.loss_trace)?;
    for (j, f) in res.model.step_params.iter().enumerate() {
        fprime_table(dir, j, f)?;
    }
    write_delta_losses(dir, res.per_delta_losses.iter())?;
    let summary = json!({
        "dimension": 2,
        "n": data.n(), "p": data.p(),
        "loss": res.final_loss(),
        "chosen_delta": format_signs(&res.chosen_delta),
        "per_delta_losses": res.per_delta_losses,
        "iterations": res.iterations,
        "step_size": res.step_size,
        "config": cfg,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "delta {}  loss {:.6e}  {} iterations  -> {}",
        format_signs(&res.chosen_delta),
        res.final_loss(),
        res.iterations,
        dir.display()
    );
    if args.enforce_feasibility {
        log::warn!("feasibility constants are only estimated for 1D data; --enforce-feasibility ignored");
    }
    Ok(())
}
