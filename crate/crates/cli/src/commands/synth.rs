use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;

use kantoreg::fit::FitConfig;
use kantoreg::grid::Grid1D;
use kantoreg::io::{write_density_csv, GridDescriptor, Manifest, ManifestRecord};
use kantoreg::model::linspace;
use kantoreg::synth::{self, gen_mixed_dataset, SynthConfig1D, TruthParams};

use super::exit::Exit;
use crate::output::{out_dir, table};

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of records.
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    /// Grid nodes on [0, 1].
    #[arg(long, default_value_t = 201)]
    pub grid: usize,
    /// Amplitude of the distortion coefficients (default 1 / (55 pi)).
    #[arg(long)]
    pub noise_amp: Option<f64>,
    /// Output directory.
    #[arg(long, short, default_value = "synth-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "50,100,150,200")]
    pub ns: Vec<usize>,
    /// Number of seeds per sample size, starting at `--seed`.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    /// Grid nodes on [0, 1].
    #[arg(long, default_value_t = 201)]
    pub grid: usize,
    /// Iteration cap per fit.
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    /// Knots per distributional predictor.
    #[arg(long, default_value_t = 100)]
    pub knots: usize,
    /// Select the sign configuration by loss instead of fixing it to the generator's.
    #[arg(long)]
    pub select_signs: bool,
    /// Output directory.
    #[arg(long, short, default_value = "convergence-out")]
    pub out: PathBuf,
}

fn grid(nodes: usize) -> Result<Grid1D> {
    Grid1D::new(0.0, 1.0, nodes).map_err(|e| Exit::usage(e.to_string()))
}

pub fn run_synth(args: &SynthArgs, seed: u64) -> Result<()> {
    let dir = out_dir(&args.out)?;
    let mut cfg = SynthConfig1D { grid: grid(args.grid)?, ..SynthConfig1D::new(args.n, seed) };
    if let Some(a) = args.noise_amp {
        cfg.noise_amp = a;
    }
    let truth = TruthParams::standard();
    let s = gen_mixed_dataset(&cfg, &truth)?;
    let data = &s.data;
    let mut records = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let response = PathBuf::from(format!("response_{i:04}.csv"));
        write_density_csv(&dir.join(&response), &data.responses()[i])?;
        let mut predictors = Vec::with_capacity(data.p());
        for (j, mu) in data.predictors(i).iter().enumerate() {
            let p = PathBuf::from(format!("predictor_{i:04}_{}.csv", j + 1));
            write_density_csv(&dir.join(&p), mu)?;
            predictors.push(p);
        }
        records.push(ManifestRecord { response, predictors, scalars: data.scalars(i).to_vec() });
    }
    let manifest = Manifest {
        dimension: 1,
        grid: GridDescriptor::from(cfg.grid),
        records,
        bandwidth: None,
        base: PathBuf::new(),
    };
    manifest.save(&dir.join("manifest.json"))?;
    write_truth(&dir, data, &truth)?;
    println!(
        "{} records ({} rejected distortion draws) -> {}",
        data.n(),
        s.rejected_draws,
        dir.join("manifest.json").display()
    );
    Ok(())
}

/// True `f_j'` over the observed potential range and `psi'` on the grid.
fn write_truth(dir: &Path, data: &kantoreg::model::Dataset, truth: &TruthParams) -> Result<()> {
    for (j, (sign, fp)) in truth.f_derivs.iter().enumerate() {
        let (lo, hi) = data.potential_range(j);
        let ts = linspace(lo, hi, 501);
        let v = ts.iter().map(|t| fp(sign.factor() * t)).collect();
        table(&dir.join(format!("truth_fprime_{}.csv", j + 1)), &["t".into(), "fprime".into()], &[ts, v])?;
    }
    let nodes = data.grid().nodes();
    for (k, pp) in truth.psi_derivs.iter().enumerate() {
        let v = nodes.iter().map(|x| pp(*x)).collect();
        table(&dir.join(format!("truth_psiprime_{}.csv", k + 1)), &["x".into(), "psiprime".into()], &[nodes.clone(), v])?;
    }
    Ok(())
}

pub fn run_convergence(args: &ConvergenceArgs, seed: u64) -> Result<()> {
    if args.ns.is_empty() || args.seeds == 0 {
        return Err(Exit::usage("need at least one n and one seed"));
    }
    let dir = out_dir(&args.out)?;
    let truth = TruthParams::standard();
    let cfg = FitConfig {
        max_iters: args.max_iters,
        knots: args.knots,
        sign_configs: (!args.select_signs).then(|| vec![truth.f_derivs.iter().map(|f| f.0).collect()]),
        ..Default::default()
    };
    let seeds: Vec<u64> = (seed..seed + args.seeds).collect();
    let rows = synth::run_convergence(&args.ns, &seeds, grid(args.grid)?, &cfg)?;
    let mut s = String::from("target,log_n,log_l2_error\n");
    for r in &rows {
        writeln!(s, "{},{:?},{:?}", r.target, r.log_n, r.log_l2_error).unwrap();
        println!("{:>5} n = {:>4}  log n = {:.4}  log error = {:.4}", r.target, r.n, r.log_n, r.log_l2_error);
    }
    std::fs::write(dir.join("convergence.csv"), s)?;
    Ok(())
}
