//! CSV tables and JSON records written by the front ends, and their
//! readers. Every writer here has a reader that recovers the same values.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ctdiscretize::{BesselReport, Driver};
use crate::error::Result;
use crate::iid::{IidVerdict, SurvivalProduct};
use crate::kernels::{KernelDiagnostics, MarkovKernel};
use crate::montecarlo::{DrawdownEstimate, Estimand};
use crate::volterra::GridFunction;

/// Writes `rows` as CSV with a header taken from the field names.
pub fn write_csv_rows<T: Serialize, W: Write>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv_rows<T: DeserializeOwned, R: Read>(reader: R) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<T: Serialize + ?Sized, W: Write>(mut writer: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned, R: Read>(reader: R) -> Result<T> {
    Ok(serde_json::from_reader(reader)?)
}

/// One line of a kernel report: `a(x)`, `b(x)` and `b_ε(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelReportRow {
    pub x: f64,
    pub a: f64,
    pub b: f64,
    pub b_eps: f64,
}

impl From<KernelDiagnostics> for KernelReportRow {
    fn from(d: KernelDiagnostics) -> Self {
        Self {
            x: d.x,
            a: d.a,
            b: d.b,
            b_eps: d.b_eps,
        }
    }
}

pub fn kernel_report_rows<K: MarkovKernel + ?Sized>(
    kernel: &K,
    grid: &[f64],
    eps: f64,
) -> Result<Vec<KernelReportRow>> {
    grid.iter()
        .map(|&x| KernelDiagnostics::compute(kernel, x, eps).map(KernelReportRow::from))
        .collect()
}

/// One node of a solved default function: `x`, `M(x)` and `M(x)/x`.
///
/// The header `x,M,ratio` is also readable by [`GridFunction::read_csv`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefaultRow {
    pub x: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub ratio: f64,
}

pub fn default_rows(m: &GridFunction) -> Vec<DefaultRow> {
    m.grid()
        .iter()
        .zip(m.values())
        .map(|(&x, &v)| DefaultRow { x, m: v, ratio: v / x })
        .collect()
}

/// One horizon of a ladder of estimates, with an optional reference value
/// such as a partial product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub n: usize,
    pub estimand: Estimand,
    pub value: f64,
    pub std_error: f64,
    #[serde(rename = "N")]
    pub paths: usize,
    pub seed: u64,
    pub censored: usize,
    pub reference: Option<f64>,
}

impl LadderRow {
    pub fn new(estimate: &DrawdownEstimate, reference: Option<f64>) -> Self {
        Self {
            n: estimate.n,
            estimand: estimate.estimand,
            value: estimate.value,
            std_error: estimate.std_error,
            paths: estimate.paths,
            seed: estimate.seed,
            censored: estimate.censored,
            reference,
        }
    }
}

/// Verdict of an independent-returns check with the survival product and
/// optional simulated monotone-run estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IidSummary {
    pub verdict: IidVerdict,
    pub survival_start: usize,
    pub survival_end: usize,
    pub survival: SurvivalProduct,
    pub monotone_run: Vec<DrawdownEstimate>,
}

/// Mass loss of one driver sampled along a schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverComparison {
    pub driver: Driver,
    pub mass_loss: DrawdownEstimate,
    pub barrier_hits: usize,
    pub exploded_paths: usize,
    pub substeps: u64,
}

/// Two-sample KS distance between kernel-sampled and path-sampled `S_1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsComparison {
    pub paths: usize,
    pub distance: f64,
    /// Critical value at level `1e-3`.
    pub critical_value: f64,
    pub passes: bool,
}

impl KsComparison {
    pub fn new(paths: usize, distance: f64) -> Self {
        // c(α) = sqrt(−ln(α/2)/2), scaled by sqrt(2/n) for equal sizes.
        let critical_value = (-(0.5e-3f64).ln() / 2.0).sqrt() * (2.0 / paths as f64).sqrt();
        Self {
            paths,
            distance,
            critical_value,
            passes: distance <= critical_value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BesselSummary {
    pub kernel: BesselReport,
    pub drivers: Vec<DriverComparison>,
    pub ks: Option<KsComparison>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::AffineDrop;
    use crate::volterra::{log_grid, Shape};

    #[test]
    fn kernel_report_round_trip() {
        let grid = log_grid(0.5, 20.0, 7).unwrap();
        let rows = kernel_report_rows(&AffineDrop::kernel(), &grid, 0.5).unwrap();
        let mut buf = Vec::new();
        write_csv_rows(&mut buf, &rows).unwrap();
        assert!(buf.starts_with(b"x,a,b,b_eps\n"));
        let back: Vec<KernelReportRow> = read_csv_rows(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn default_rows_read_back_as_grid_function() {
        let grid = log_grid(0.1, 10.0, 9).unwrap();
        let m = GridFunction::from_fn(&grid, Shape::RatioLinear, |x| x * (1.0 - (-x).exp())).unwrap();
        let mut buf = Vec::new();
        write_csv_rows(&mut buf, &default_rows(&m)).unwrap();
        let back = GridFunction::read_csv(buf.as_slice(), Shape::RatioLinear).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn ladder_rows_with_missing_reference() {
        let rows = vec![LadderRow {
            n: 10,
            estimand: Estimand::MonotoneRun,
            value: 0.5,
            std_error: 0.01,
            paths: 100,
            seed: 3,
            censored: 0,
            reference: None,
        }];
        let mut buf = Vec::new();
        write_csv_rows(&mut buf, &rows).unwrap();
        let back: Vec<LadderRow> = read_csv_rows(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn json_round_trip() {
        let value = serde_json::json!({ "a": [1.0, 2.5], "b": null });
        let mut buf = Vec::new();
        write_json(&mut buf, &value).unwrap();
        assert!(buf.ends_with(b"\n"));
        let back: serde_json::Value = read_json(buf.as_slice()).unwrap();
        assert_eq!(back, value);
    }
}
