use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use ddbubble::config::{ModelSource, RunConfig, SolveMethod};
use ddbubble::ctdiscretize::{
    bessel_bubble_report, discretize_sde_path, ks_two_sample, Driver, InverseBessel, Schedule,
};
use ddbubble::iid::{iid_bubble_check, survival_product};
use ddbubble::io::{
    default_rows, kernel_report_rows, write_csv_rows, write_json, BesselSummary, DriverComparison, IidSummary,
    KsComparison, LadderRow,
};
use ddbubble::kernels::{classify_markov_bubble, MarkovKernel};
use ddbubble::montecarlo::{
    drawdowns, estimate_mass_loss, estimate_monotone_run, estimate_stopped_value, mass_loss_ladder,
    monotone_run_ladder, simulate as simulate_paths, simulate_drawdowns, terminal_mean, DrawdownRecord, DrawdownSpec,
    KernelChain, PathModel,
};
use ddbubble::rng::path_rng;
use ddbubble::volterra::{contraction_solve, picard_from_identity_with_shape};
use ddbubble::Result;

use crate::{Format, Status};

/// Output directory and the formats to write.
pub struct Outputs {
    dir: PathBuf,
    format: Option<Format>,
}

impl Outputs {
    pub fn new(dir: &Path, format: Option<Format>) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
        })
    }

    fn wants(&self, format: Format) -> bool {
        self.format.map_or(true, |f| f == format)
    }

    fn create(&self, name: &str) -> Result<BufWriter<fs::File>> {
        let path = self.dir.join(name);
        println!("{}", path.display());
        Ok(BufWriter::new(fs::File::create(path)?))
    }

    fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        if self.wants(Format::Csv) {
            write_csv_rows(self.create(name)?, rows)?;
        }
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        if self.wants(Format::Json) {
            write_json(self.create(name)?, value)?;
        }
        Ok(())
    }
}

pub fn kernel_report(config: &RunConfig, out: &Outputs) -> Result<Status> {
    let kernel = config.kernel()?;
    let grid = config.grid.points()?;
    let rows = kernel_report_rows(&*kernel, &grid, config.classify.eps)?;
    let verdict = classify_markov_bubble(&*kernel, &config.classify)?;
    out.csv("kernel_report.csv", &rows)?;
    out.json("verdict.json", &verdict)?;
    Ok(Status::Done)
}

pub fn solve_default(config: &RunConfig, out: &Outputs) -> Result<Status> {
    let kernel = config.kernel()?;
    let grid = config.grid.points()?;
    let opts = config.solve.options();
    let (m, report) = match config.solve.method {
        SolveMethod::Picard => picard_from_identity_with_shape(&*kernel, &grid, config.solve.shape, &opts)?,
        SolveMethod::Contraction => contraction_solve(&*kernel, &grid, config.solve.bounds, &opts)?,
    };
    out.csv("default.csv", &default_rows(&m))?;
    out.json("solve_report.json", &report)?;
    Ok(if report.converged {
        Status::Done
    } else {
        Status::NotConverged
    })
}

fn record_for(model: &dyn PathModel, config: &RunConfig, spec: &DrawdownSpec, out: &Outputs) -> Result<DrawdownRecord> {
    let sim = &config.simulate;
    let cells = sim.paths.saturating_mul(sim.steps + 1);
    if sim.export_paths && cells <= sim.export_limit {
        let batch = simulate_paths(model, sim.x0, sim.steps, sim.paths, sim.seed)?;
        if out.wants(Format::Csv) {
            batch.write_csv(out.create("paths.csv")?)?;
        }
        drawdowns(&batch, spec)
    } else {
        if sim.export_paths {
            eprintln!("simulate: {cells} path values exceed export_limit; paths.csv not written");
        }
        simulate_drawdowns(model, sim.x0, sim.steps, sim.paths, sim.seed, spec)
    }
}

pub fn simulate(config: &RunConfig, out: &Outputs) -> Result<Status> {
    let sim = &config.simulate;
    let mut spec = sim.spec.clone();
    spec.max_drawdowns = spec.max_drawdowns.max(sim.drawdown);
    let record = match config.simulate_source()? {
        ModelSource::Kernel => {
            let kernel = config.kernel()?;
            record_for(&KernelChain(&*kernel), config, &spec, out)?
        }
        ModelSource::Iid => {
            let model = config.iid()?.model()?;
            record_for(&model, config, &spec, out)?
        }
    };
    let estimates = vec![
        estimate_mass_loss(&record, sim.drawdown)?,
        estimate_stopped_value(&record, sim.drawdown)?,
        terminal_mean(&record),
        estimate_monotone_run(&record),
    ];
    let ladder: Vec<LadderRow> = mass_loss_ladder(&record, sim.drawdown)?
        .iter()
        .chain(&monotone_run_ladder(&record))
        .map(|e| LadderRow::new(e, None))
        .collect();
    out.json("estimates.json", &estimates)?;
    out.csv("ladder.csv", &ladder)?;
    Ok(Status::Done)
}

pub fn iid_check(config: &RunConfig, out: &Outputs) -> Result<Status> {
    let section = config.iid()?;
    let model = section.model()?;
    let verdict = iid_bubble_check(&model, section.terms)?;
    let sim = &config.simulate;
    let survival_end = sim.steps.max(section.survival_start);
    let survival = survival_product(&model, section.survival_start, survival_end)?;
    let mut ladder = Vec::new();
    let mut monotone_run = Vec::new();
    if sim.paths > 0 && sim.steps > 0 {
        let mut spec = sim.spec.clone();
        if spec.ladder.is_empty() {
            spec.ladder = DrawdownSpec::geometric_ladder(sim.steps, 8);
        }
        let record = simulate_drawdowns(&model, sim.x0, sim.steps, sim.paths, sim.seed, &spec)?;
        monotone_run = monotone_run_ladder(&record);
        // From k = 0 above a threshold below x0, the run value is
        // x0 ∏_{ℓ ≤ n} (1 − b_ℓ).
        let exact = spec.run_start == 0 && spec.run_threshold <= sim.x0;
        for e in &monotone_run {
            let reference = if exact {
                Some(sim.x0 * survival_product(&model, 1, e.n)?.value)
            } else {
                None
            };
            ladder.push(LadderRow::new(e, reference));
        }
    }
    let summary = IidSummary {
        verdict,
        survival_start: section.survival_start,
        survival_end,
        survival,
        monotone_run,
    };
    out.json("iid_verdict.json", &summary)?;
    out.csv("ladder.csv", &ladder)?;
    Ok(Status::Done)
}

fn compare_driver(driver: &Driver, schedule: &Schedule, config: &RunConfig, x0: f64) -> Result<DriverComparison> {
    let sim = &config.simulate;
    let opts = config.bessel()?.sde;
    let sde = discretize_sde_path(driver, schedule, x0, sim.steps, sim.paths, sim.seed, &opts)?;
    let record = drawdowns(&sde.batch, &DrawdownSpec::default())?;
    Ok(DriverComparison {
        driver: driver.clone(),
        mass_loss: estimate_mass_loss(&record, 1)?,
        barrier_hits: sde.barrier_hits,
        exploded_paths: sde.exploded_paths,
        substeps: sde.substeps,
    })
}

pub fn bessel(config: &RunConfig, out: &Outputs) -> Result<Status> {
    let section = config.bessel()?;
    let sim = &config.simulate;
    let report = bessel_bubble_report(section.x0, section.alpha, section.beta, sim.steps, sim.paths, sim.seed)?;
    let schedule = section.schedule();
    let drivers = section
        .drivers
        .iter()
        .map(|d| compare_driver(d, &schedule, config, section.x0))
        .collect::<Result<Vec<_>>>()?;
    let ks = if section.ks_paths > 0 {
        let n = section.ks_paths;
        let kernel = InverseBessel::new(section.alpha, section.beta)?;
        let mut rng = path_rng(sim.seed, u64::MAX);
        let from_kernel = (0..n)
            .map(|_| kernel.sample_step(section.x0, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let relative = Schedule::RelativeBarrier {
            alpha: section.alpha,
            beta: section.beta,
        };
        let sde = discretize_sde_path(
            &Driver::InverseBessel {},
            &relative,
            section.x0,
            1,
            n,
            sim.seed,
            &section.sde,
        )?;
        let from_paths: Vec<f64> = sde.batch.paths.iter().map(|p| p[1]).collect();
        Some(KsComparison::new(n, ks_two_sample(&from_kernel, &from_paths)))
    } else {
        None
    };
    let ladder: Vec<LadderRow> = report
        .mass_loss_ladder
        .iter()
        .chain(&report.run_ladder)
        .map(|e| LadderRow::new(e, None))
        .collect();
    let summary = BesselSummary {
        kernel: report,
        drivers,
        ks,
    };
    out.json("bessel_report.json", &summary)?;
    out.csv("ladder.csv", &ladder)?;
    Ok(Status::Done)
}
