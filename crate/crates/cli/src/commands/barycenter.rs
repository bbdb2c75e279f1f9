use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use kantoreg::io::{load_density_1d_on, read_density2d_csv, write_density2d_csv, write_density_csv, DEFAULT_BANDWIDTH};
use kantoreg::io::read_density_csv;
use kantoreg::ot1d::barycenter;
use kantoreg::ot2d::{barycenter_2d, BarycenterConfig};

use super::exit::Exit;

#[derive(Debug, Args)]
pub struct BarycenterArgs {
    /// Input densities, comma separated. 2D inputs need their `.grid.json` sidecars.
    #[arg(long, value_delimiter = ',', required = true)]
    pub inputs: Vec<PathBuf>,
    /// Barycentric weights (1D only); default uniform.
    #[arg(long, value_delimiter = ',')]
    pub weights: Vec<f64>,
    /// 1 or 2.
    #[arg(long, default_value_t = 1)]
    pub dim: u8,
    /// KDE bandwidth when a 1D input holds raw samples; its grid is taken from the first density table.
    #[arg(long, default_value_t = DEFAULT_BANDWIDTH)]
    pub bandwidth: f64,
    /// Output density file.
    #[arg(long, short, default_value = "barycenter.csv")]
    pub out: PathBuf,
}

pub fn run(args: &BarycenterArgs) -> Result<()> {
    match args.dim {
        1 => {
            let grid = args
                .inputs
                .iter()
                .find_map(|p| read_density_csv(p).ok())
                .map(|d| *d.grid())
                .ok_or_else(|| Exit::usage("at least one input must be a density table (x,density)"))?;
            let ds = args
                .inputs
                .iter()
                .map(|p| load_density_1d_on(p, grid, args.bandwidth).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let w = (!args.weights.is_empty()).then_some(args.weights.as_slice());
            let b = barycenter(&ds, w)?;
            write_density_csv(&args.out, &b)?;
            println!("barycenter mean {:.6} -> {}", b.mean(), args.out.display());
        }
        2 => {
            if !args.weights.is_empty() {
                return Err(Exit::usage("weights are only supported in 1D"));
            }
            let ds = args
                .inputs
                .iter()
                .map(|p| read_density2d_csv(p).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let b = barycenter_2d(&ds, &BarycenterConfig::default())?;
            write_density2d_csv(&args.out, &b)?;
            let (x, y) = b.mean();
            println!("barycenter mean ({x:.4}, {y:.4}) -> {}", args.out.display());
        }
        d => return Err(Exit::usage(format!("--dim must be 1 or 2, got {d}"))),
    }
    Ok(())
}
