use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;

use kantoreg::grid::Grid1D;
use kantoreg::io::{write_density2d_csv, write_density_csv, GridDescriptor, Manifest, ManifestRecord};
use kantoreg::model::{linspace, Sign};
use kantoreg::ot2d::{circledcirc_2d, circledcirc_2d_on, mean_circledcirc, pushforward_2d, Grid2D, Model2D, OtConfig, Potential2D};
use kantoreg::synth::{demo_setting, gen_demo_1d, gen_demo_2d};

use super::exit::Exit;
use crate::output::{out_dir, table, write_panels, Panel};

pub const FIGURES: [&str; 5] = ["fig1", "fig1d-plus", "fig1d-minus", "fig2d-plus", "fig2d-minus"];

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Figure id: fig1, fig1d-plus, fig1d-minus, fig2d-plus or fig2d-minus.
    pub figure: String,
    /// Grid size: nodes for 1D figures, cells per side for 2D ones.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Output directory.
    #[arg(long, short, default_value = "demo-out")]
    pub out: PathBuf,
}

fn names(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}_{i}")).collect()
}

fn with_x(x: &str, rest: &[String]) -> Vec<String> {
    std::iter::once(x.to_string()).chain(rest.iter().cloned()).collect()
}

pub fn run(args: &DemoArgs) -> Result<()> {
    let sign = match args.figure.as_str() {
        "fig1" | "fig1d-plus" | "fig2d-plus" => Sign::Plus,
        "fig1d-minus" | "fig2d-minus" => Sign::Minus,
        other => {
            return Err(Exit::usage(format!("unknown figure {other:?}; expected one of {}", FIGURES.join(", "))));
        }
    };
    let dir = out_dir(&args.out)?;
    match args.figure.as_str() {
        "fig1" => fig_scaling(&dir, args.grid.unwrap_or(64)),
        f if f.starts_with("fig1d") => fig_1d(&dir, &args.figure, sign, args.grid.unwrap_or(1001)),
        _ => fig_2d(&dir, &args.figure, sign, args.grid.unwrap_or(64)),
    }
}

fn grid_2d(side: usize) -> Result<Grid2D> {
    Grid2D::new(0.0, 1.0, 0.0, 1.0, side, side)
        .and_then(|g| g.check_size().map(|_| g))
        .map_err(|e| Exit::usage(e.to_string()))
}

/// A radial potential and its rescaling by the nonlinear setting-2 function.
fn fig_scaling(dir: &Path, side: usize) -> Result<()> {
    let g = grid_2d(side)?;
    let raw: Vec<f64> = (0..g.len())
        .map(|i| {
            let (x, y) = g.point(i);
            0.15 * ((x - 0.5).powi(2) + (y - 0.5).powi(2))
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let phi = Potential2D::new(g, raw.iter().map(|v| v - mean).collect())?;
    let f = demo_setting(2, Sign::Plus)?;
    let scaled = circledcirc_2d(&f, &phi)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..g.len()).map(|i| g.point(i)).unzip();
    let cols = vec![
        xs,
        ys,
        phi.values.clone(),
        phi.grad.iter().map(|d| -d[0]).collect(),
        phi.grad.iter().map(|d| -d[1]).collect(),
        scaled.values.clone(),
        scaled.grad.iter().map(|d| -d[0]).collect(),
        scaled.grad.iter().map(|d| -d[1]).collect(),
    ];
    let header: Vec<String> = ["x", "y", "phi", "dx", "dy", "f_phi", "f_dx", "f_dy"].map(String::from).to_vec();
    table(&dir.join("scaling.csv"), &header, &cols)?;
    let ts = linspace(-0.05, 0.05, 501);
    let fp = ts.iter().map(|t| f.fprime(*t)).collect();
    table(&dir.join("fprime.csv"), &["t".into(), "fprime".into()], &[ts, fp])?;
    write_panels(
        dir,
        "fig1",
        vec![
            Panel::new("potential and displacement", "scaling.csv", "x,y", &header[2..5]),
            Panel::new("rescaled potential and displacement", "scaling.csv", "x,y", &header[5..]),
            Panel::new("f'", "fprime.csv", "t", &["fprime".into()]),
        ],
    )?;
    println!("fig1 -> {}", dir.display());
    Ok(())
}

fn fig_1d(dir: &Path, figure: &str, sign: Sign, nodes: usize) -> Result<()> {
    let grid = Grid1D::new(0.0, 1.0, nodes).map_err(|e| Exit::usage(e.to_string()))?;
    let demo = gen_demo_1d(grid)?;
    let x = grid.nodes();
    let mut panels = Vec::new();

    let mut cols = vec![x.clone(), demo.mu_bar.values().to_vec()];
    cols.extend(demo.predictors.iter().map(|d| d.values().to_vec()));
    let head = with_x("x", &[vec!["mu_bar".to_string()], names("mu", 3)].concat());
    table(&dir.join("reference_densities.csv"), &head, &cols)?;
    panels.push(Panel::new("mu_bar and mu_i", "reference_densities.csv", "x", &head[1..]));

    let head = with_x("x", &names("phi", 3));
    let mut cols = vec![x.clone()];
    cols.extend(demo.potentials.iter().map(|p| p.values.clone()));
    table(&dir.join("reference_potentials.csv"), &head, &cols)?;
    panels.push(Panel::new("phi_i", "reference_potentials.csv", "x", &head[1..]));

    let mut manifest_responses = Vec::new();
    for s in 1..=3 {
        let f = demo_setting(s, sign)?;
        let (nus, varphis) = demo.responses(&f)?;
        let file = format!("setting{s}_densities.csv");
        let mut cols = vec![x.clone(), demo.mu_bar.values().to_vec()];
        cols.extend(nus.iter().map(|d| d.values().to_vec()));
        let head = with_x("x", &[vec!["nu_bar".to_string()], names("nu", 3)].concat());
        table(&dir.join(&file), &head, &cols)?;
        panels.push(Panel::new(format!("setting {s}: nu_bar and nu_i"), file, "x", &head[1..]));

        let file = format!("setting{s}_potentials.csv");
        let mut cols = vec![x.clone()];
        cols.extend(varphis.iter().map(|p| p.values.clone()));
        let head = with_x("x", &names("varphi", 3));
        table(&dir.join(&file), &head, &cols)?;
        panels.push(Panel::new(format!("setting {s}: varphi_i"), file, "x", &head[1..]));

        let file = format!("setting{s}_fprime.csv");
        let ts = linspace(-0.05, 0.05, 501);
        let fp = ts.iter().map(|t| f.fprime(*t)).collect();
        table(&dir.join(&file), &["t".into(), "fprime".into()], &[ts, fp])?;
        panels.push(Panel::new(format!("setting {s}: f'"), file, "t", &["fprime".into()]));
        if s == 1 {
            manifest_responses = nus;
        }
    }

    // Setting 1 as a fit/check-ready dataset.
    let mut records = Vec::new();
    for (i, (nu, mu)) in manifest_responses.iter().zip(&demo.predictors).enumerate() {
        let r = PathBuf::from(format!("nu_{}.csv", i + 1));
        let p = PathBuf::from(format!("mu_{}.csv", i + 1));
        write_density_csv(&dir.join(&r), nu)?;
        write_density_csv(&dir.join(&p), mu)?;
        records.push(ManifestRecord { response: r, predictors: vec![p], scalars: vec![] });
    }
    Manifest { dimension: 1, grid: GridDescriptor::from(grid), records, bandwidth: None, base: PathBuf::new() }
        .save(&dir.join("manifest.json"))?;

    write_panels(dir, figure, panels)?;
    println!("{figure} -> {}", dir.display());
    Ok(())
}

fn fig_2d(dir: &Path, figure: &str, sign: Sign, side: usize) -> Result<()> {
    let g = grid_2d(side)?;
    let demo = gen_demo_2d(g)?;
    let ot = OtConfig::default();
    let phis = demo.potentials(&ot)?;
    let refs: Vec<&Potential2D> = phis.iter().collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..g.len()).map(|i| g.point(i)).unzip();
    let support: Vec<usize> = (0..g.len()).filter(|&i| demo.barycenter.values()[i] > 0.0).collect();
    let pick = |v: &[f64]| support.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let mut panels = Vec::new();

    let head: Vec<String> = ["x", "y", "mu_bar", "mu_1", "mu_2"].map(String::from).to_vec();
    let mut cols = vec![xs.clone(), ys.clone(), demo.barycenter.values().to_vec()];
    cols.extend(demo.disks.iter().map(|d| d.values().to_vec()));
    table(&dir.join("reference_densities.csv"), &head, &cols)?;
    panels.push(Panel::new("mu_bar and mu_i", "reference_densities.csv", "x,y", &head[2..]));

    let arrows = |file: &str, grads: Vec<&[[f64; 2]]>| -> Result<Vec<String>> {
        let mut head: Vec<String> = vec!["x".into(), "y".into()];
        let mut cols = vec![pick(&xs), pick(&ys)];
        for (i, gr) in grads.iter().enumerate() {
            head.push(format!("dx_{}", i + 1));
            head.push(format!("dy_{}", i + 1));
            cols.push(support.iter().map(|&k| -gr[k][0]).collect());
            cols.push(support.iter().map(|&k| -gr[k][1]).collect());
        }
        table(&dir.join(file), &head, &cols)?;
        Ok(head)
    };
    let head = arrows("reference_arrows.csv", phis.iter().map(|p| p.grad.as_slice()).collect())?;
    panels.push(Panel::new("displacements from mu_bar", "reference_arrows.csv", "x,y", &head[2..]));

    for s in 1..=3 {
        let f = demo_setting(s, sign)?;
        for phi in &phis {
            circledcirc_2d_on(&f, phi, &demo.barycenter)?;
        }
        let model = Model2D {
            grid: g,
            step_params: vec![f.clone()],
            intercepts: vec![mean_circledcirc(&f, &refs)],
            nu_bar: demo.barycenter.clone(),
            mu_bars: vec![demo.barycenter.clone()],
        };
        let mut cols = vec![xs.clone(), ys.clone(), demo.barycenter.values().to_vec()];
        let mut grads = Vec::new();
        let mut nus = Vec::new();
        for phi in &phis {
            let map = model.map_for(&[phi]);
            let nu = pushforward_2d(&demo.barycenter, &map)?;
            cols.push(nu.values().to_vec());
            nus.push(nu);
            grads.push(map.displacement().iter().map(|d| [-d[0], -d[1]]).collect::<Vec<_>>());
        }
        if s == 1 {
            let mut records = Vec::new();
            for (i, (nu, mu)) in nus.iter().zip(&demo.disks).enumerate() {
                let r = PathBuf::from(format!("nu_{}.csv", i + 1));
                let p = PathBuf::from(format!("mu_{}.csv", i + 1));
                write_density2d_csv(&dir.join(&r), nu)?;
                write_density2d_csv(&dir.join(&p), mu)?;
                records.push(ManifestRecord { response: r, predictors: vec![p], scalars: vec![] });
            }
            Manifest { dimension: 2, grid: GridDescriptor::from(g), records, bandwidth: None, base: PathBuf::new() }
                .save(&dir.join("manifest.json"))?;
        }
        let file = format!("setting{s}_densities.csv");
        let head: Vec<String> = ["x", "y", "nu_bar", "nu_1", "nu_2"].map(String::from).to_vec();
        table(&dir.join(&file), &head, &cols)?;
        panels.push(Panel::new(format!("setting {s}: nu_bar and nu_i"), file, "x,y", &head[2..]));
        let file = format!("setting{s}_arrows.csv");
        let head = arrows(&file, grads.iter().map(Vec::as_slice).collect())?;
        panels.push(Panel::new(format!("setting {s}: displacements from nu_bar"), file, "x,y", &head[2..]));
    }
    write_panels(dir, figure, panels)?;
    println!("{figure} -> {}", dir.display());
    Ok(())
}
