use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use maskdiff_core::kernel::KernelReference;
use maskdiff_core::model::load_checkpoint;
use maskdiff_core::probe::ProbeConfig;
use maskdiff_core::schema::EncodingDoc;
use maskdiff_core::scorer::ReconstructionEstimator;
use maskdiff_core::synthetic::{benchmark, gamma_grid, heatmap, population_means, validate_bounds, OracleEstimator};

use crate::commands::report;
use crate::Ctx;

#[derive(Subcommand, Debug)]
pub enum SynthCommand {
    /// Write the synthetic benchmark: encoded train/test files plus encoding.
    Generate,
    /// Mean target surprisal over mixture weight and mask rate.
    Heatmap(HeatmapArgs),
    /// Empirical error rates against the concentration bounds.
    Bounds,
}

impl SynthCommand {
    pub fn name(&self) -> &'static str {
        match self {
            SynthCommand::Generate => "synth generate",
            SynthCommand::Heatmap(_) => "synth heatmap",
            SynthCommand::Bounds => "synth bounds",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HeatmapEstimator {
    Oracle,
    Kernel,
    Parametric,
}

#[derive(Args, Debug)]
pub struct HeatmapArgs {
    #[arg(long, value_enum, default_value = "oracle")]
    pub estimator: HeatmapEstimator,
    /// Checkpoint for the parametric estimator [default: <out-dir>/model.ckpt].
    #[arg(long)]
    pub model: Option<PathBuf>,
}

pub fn run(ctx: &Ctx, cmd: SynthCommand) -> Result<()> {
    match cmd {
        SynthCommand::Generate => generate(ctx),
        SynthCommand::Heatmap(a) => run_heatmap(ctx, a),
        SynthCommand::Bounds => bounds(ctx),
    }
}

fn generate(ctx: &Ctx) -> Result<()> {
    let sy = &ctx.cfg.synthetic;
    let b = benchmark(&sy.spec, sy.n_train, sy.n_test_nominal, sy.n_test_anomalous)?;
    let paths = [ctx.out("encoding.json"), ctx.out("train.csv"), ctx.out("test.csv")];
    EncodingDoc::new(sy.spec.specs(), None).save(&paths[0])?;
    b.train.save_csv(&paths[1])?;
    b.test.save_csv(&paths[2])?;
    report(
        &format!(
            "synth generate: d={}, flip_prob={}, {} train rows, {} test rows ({} anomalous)",
            sy.spec.d,
            sy.spec.flip_prob,
            b.train.n_rows(),
            b.test.n_rows(),
            sy.n_test_anomalous
        ),
        &paths,
    );
    Ok(())
}

fn run_heatmap(ctx: &Ctx, a: HeatmapArgs) -> Result<()> {
    let sy = &ctx.cfg.synthetic;
    let est: Box<dyn ReconstructionEstimator> = match a.estimator {
        HeatmapEstimator::Oracle => Box::new(OracleEstimator { spec: sy.spec.clone() }),
        HeatmapEstimator::Kernel => {
            let b = benchmark(&sy.spec, sy.n_train, 1, 1)?;
            Box::new(KernelReference::from_options(&b.train, &ctx.cfg.kernel)?)
        }
        HeatmapEstimator::Parametric => {
            let path = a.model.unwrap_or_else(|| ctx.out("model.ckpt"));
            let model = load_checkpoint(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
            model
                .validate_cardinalities(&sy.spec.specs())
                .context("checkpoint does not match the synthetic spec")?;
            Box::new(model)
        }
    };
    let h = heatmap(&sy.spec, est.as_ref(), &sy.r_grid, &sy.tau_grid, sy.n_mc, sy.spec.seed)?;
    let name = format!("{:?}", a.estimator).to_lowercase();
    let out = ctx.out(&format!("heatmap_{name}.csv"));
    h.save_csv(&out)?;
    let (first, last) = (&h.cells[0], &h.cells[h.cells.len() - 1]);
    let gaps: Vec<String> = first
        .iter()
        .zip(last)
        .map(|(a, b)| format!("{:.3}", a.mean - b.mean))
        .collect();
    report(
        &format!(
            "synth heatmap: {name}, {}x{} cells, n_mc={}, gap r={} vs r={} per tau: [{}]",
            h.r.len(),
            h.tau.len(),
            sy.n_mc,
            h.r[0],
            h.r[h.r.len() - 1],
            gaps.join(", ")
        ),
        &[out],
    );
    Ok(())
}

fn bounds(ctx: &Ctx) -> Result<()> {
    let sy = &ctx.cfg.synthetic;
    let mut paths = Vec::new();
    let mut violations = 0;
    let mut vacuous = 0;
    let mut rows = 0;
    for &n in &sy.bound_sizes {
        let probe = ProbeConfig::uniform(n, n, ctx.cfg.parametric_probe.base_seed)?;
        let means = population_means(&sy.spec, &probe, sy.n_mean_views)?;
        let gammas = gamma_grid(means.mu0.mean, means.mu1.mean, sy.n_gamma);
        let r = validate_bounds(&sy.spec, &probe, &gammas, sy.n_trials, &means, sy.c)?;
        violations += r.violations();
        vacuous += r.rows.iter().filter(|row| row.type1_vacuous && row.type2_vacuous).count();
        rows += r.rows.len();
        let out = ctx.out(&format!("bounds_L{n}.csv"));
        r.save_csv(&out)?;
        paths.push(out);
    }
    report(
        &format!("synth bounds: {rows} rows, {violations} violations, {vacuous} with both bounds vacuous"),
        &paths,
    );
    Ok(())
}
