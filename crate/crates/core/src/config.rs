//! The TOML run configuration shared by the library front ends.
//!
//! Every table rejects unknown keys, so a misspelt parameter is an error
//! rather than a silently ignored default. A minimal kernel report needs
//! only the kernel:
//!
//! ```toml
//! [kernel]
//! family = "affine-drop"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ctdiscretize::{Driver, InverseBessel, Schedule, SdeOptions};
use crate::error::{Error, Result};
use crate::iid::{IidReturnModel, ReturnLaw, TailDeclaration};
use crate::kernels::{
    AffineDrop, ClassifyOptions, ContractionBounds, ExponentialRatio, GaussianLogStep, MarkovKernel, Multiplicative,
    SigmaProfile, TabulatedUpper, TwoPointComplete, UniformSplit,
};
use crate::montecarlo::DrawdownSpec;
use crate::volterra::{log_grid, Shape, SolveOptions};

/// A Markov kernel by family name and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSpec {
    /// Two atoms with down probability `down_prob` and recovery
    /// `min(recovery_scale · x^{−recovery_power}, down_prob)`.
    TwoPoint {
        down_prob: f64,
        recovery_scale: f64,
        recovery_power: f64,
    },
    /// Drops to `1/2` and stays there.
    AbsorbingHalf {},
    /// Multiply by `1/2` or `3/2` with equal probability.
    BinomialHalf {},
    /// `S_1 = x · R` for a discrete return law given as `(factor, prob)`.
    Multiplicative {
        factors: Vec<(f64, f64)>,
    },
    UniformSplit {},
    GaussianLogStep {
        sigma: SigmaProfile,
    },
    AffineDrop {},
    ExponentialRatio {},
    /// Upper density read from a CSV with columns `x,y,k`; relative paths
    /// resolve against the configuration file.
    Tabulated {
        table: PathBuf,
    },
    InverseBessel {
        alpha: f64,
        beta: f64,
    },
}

impl KernelSpec {
    pub fn build(&self, base_dir: &Path) -> Result<Box<dyn MarkovKernel>> {
        Ok(match self {
            KernelSpec::TwoPoint {
                down_prob,
                recovery_scale,
                recovery_power,
            } => Box::new(TwoPointComplete::new(*down_prob, *recovery_scale, *recovery_power)?),
            KernelSpec::AbsorbingHalf {} => Box::new(TwoPointComplete::absorbing_half()),
            KernelSpec::BinomialHalf {} => Box::new(TwoPointComplete::binomial_half()),
            KernelSpec::Multiplicative { factors } => Box::new(Multiplicative::new(factors)?),
            KernelSpec::UniformSplit {} => Box::new(UniformSplit),
            KernelSpec::GaussianLogStep { sigma } => Box::new(GaussianLogStep::new(*sigma)?),
            KernelSpec::AffineDrop {} => Box::new(AffineDrop::kernel()),
            KernelSpec::ExponentialRatio {} => Box::new(ExponentialRatio::kernel()),
            KernelSpec::Tabulated { table } => {
                let path = base_dir.join(table);
                let file = fs::File::open(&path)
                    .map_err(|e| Error::Config(format!("kernel table {}: {e}", path.display())))?;
                Box::new(TabulatedUpper::from_csv_reader(file)?.kernel())
            }
            KernelSpec::InverseBessel { alpha, beta } => Box::new(InverseBessel::new(*alpha, *beta)?),
        })
    }
}

/// Log-spaced state grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo: 1e-2,
            hi: 50.0,
            nodes: 400,
        }
    }
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<f64>> {
        log_grid(self.lo, self.hi, self.nodes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    /// Picard iteration from the identity.
    #[default]
    Picard,
    /// Banach iteration under contraction bounds.
    Contraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    pub method: SolveMethod,
    /// Continuation past the last node for Picard iteration; contraction
    /// always uses the gap shape.
    pub shape: Shape,
    pub tol: f64,
    pub max_iter: usize,
    pub tail_tolerance: Option<f64>,
    /// Overrides the kernel's own contraction bounds.
    pub bounds: Option<ContractionBounds>,
}

impl Default for SolveSection {
    fn default() -> Self {
        let opts = SolveOptions::default();
        Self {
            method: SolveMethod::default(),
            shape: Shape::default(),
            tol: opts.tol,
            max_iter: opts.max_iter,
            tail_tolerance: opts.tail_tolerance,
            bounds: None,
        }
    }
}

impl SolveSection {
    pub fn options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            tail_tolerance: self.tail_tolerance,
        }
    }
}

/// Which model the `simulate` command samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelSource {
    Kernel,
    Iid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Defaults to whichever of `[kernel]` and `[iid]` is present.
    pub source: Option<ModelSource>,
    pub x0: f64,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    /// Index `k` of the drawdown whose mass loss is reported.
    pub drawdown: usize,
    pub spec: DrawdownSpec,
    /// Also write every path as CSV when `paths · (steps + 1)` stays below
    /// `export_limit`.
    pub export_paths: bool,
    pub export_limit: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            source: None,
            x0: 1.0,
            steps: 60,
            paths: 100_000,
            seed: 0,
            drawdown: 1,
            spec: DrawdownSpec::default(),
            export_paths: false,
            export_limit: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IidSection {
    pub law: ReturnLaw,
    #[serde(default)]
    pub declared: Option<TailDeclaration>,
    /// Number of terms whose declared bounds are checked.
    #[serde(default = "default_terms")]
    pub terms: usize,
    /// First index of the survival product `∏_{ℓ ≥ start} (1 − b_ℓ)`.
    #[serde(default = "default_survival_start")]
    pub survival_start: usize,
}

fn default_terms() -> usize {
    10_000
}

fn default_survival_start() -> usize {
    1
}

impl IidSection {
    pub fn model(&self) -> Result<IidReturnModel> {
        let model = IidReturnModel::new(self.law.clone())?;
        Ok(match self.declared {
            Some(d) => model.with_declaration(d),
            None => model,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BesselSection {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "default_x0")]
    pub x0: f64,
    /// Further drivers sampled along `schedule` for comparison.
    #[serde(default)]
    pub drivers: Vec<Driver>,
    /// Defaults to the relative barrier with the same `alpha` and `beta`.
    #[serde(default)]
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub sde: SdeOptions,
    /// Paths for the kernel-versus-SDE comparison of `S_1`; zero skips it.
    #[serde(default)]
    pub ks_paths: usize,
}

fn default_x0() -> f64 {
    1.0
}

impl BesselSection {
    pub fn schedule(&self) -> Schedule {
        self.schedule.clone().unwrap_or(Schedule::RelativeBarrier {
            alpha: self.alpha,
            beta: self.beta,
        })
    }
}

/// Everything one invocation may need. Sections a command does not use
/// are ignored by it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: Option<KernelSpec>,
    pub grid: GridSpec,
    pub solve: SolveSection,
    pub classify: ClassifyOptions,
    pub simulate: SimulateSection,
    pub iid: Option<IidSection>,
    pub bessel: Option<BesselSection>,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    /// Parses TOML text; errors carry the offending line and key.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn kernel(&self) -> Result<Box<dyn MarkovKernel>> {
        self.kernel
            .as_ref()
            .ok_or_else(|| Error::Config("missing [kernel] table".into()))?
            .build(&self.base_dir)
    }

    pub fn iid(&self) -> Result<&IidSection> {
        self.iid
            .as_ref()
            .ok_or_else(|| Error::Config("missing [iid] table".into()))
    }

    pub fn bessel(&self) -> Result<&BesselSection> {
        self.bessel
            .as_ref()
            .ok_or_else(|| Error::Config("missing [bessel] table".into()))
    }

    /// The model `simulate` should sample.
    pub fn simulate_source(&self) -> Result<ModelSource> {
        match (self.simulate.source, &self.kernel, &self.iid) {
            (Some(source), _, _) => Ok(source),
            (None, Some(_), None) => Ok(ModelSource::Kernel),
            (None, None, Some(_)) => Ok(ModelSource::Iid),
            (None, Some(_), Some(_)) => Err(Error::Config(
                "both [kernel] and [iid] are present; set simulate.source".into(),
            )),
            (None, None, None) => Err(Error::Config("simulate needs a [kernel] or an [iid] table".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelKind;

    #[test]
    fn minimal_kernel_config() {
        let config = RunConfig::from_toml_str("[kernel]\nfamily = \"affine-drop\"\n").unwrap();
        assert_eq!(config.kernel, Some(KernelSpec::AffineDrop {}));
        assert_eq!(config.grid, GridSpec::default());
        assert_eq!(config.kernel().unwrap().kind(), AffineDrop::kernel().kind());
    }

    #[test]
    fn unknown_key_reports_line_and_key() {
        let err = RunConfig::from_toml_str("[grid]\nlo = 0.1\nnodez = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("nodez"), "{msg}");
    }

    #[test]
    fn unknown_family_is_rejected() {
        assert!(RunConfig::from_toml_str("[kernel]\nfamily = \"mystery\"\n").is_err());
        assert!(RunConfig::from_toml_str("[kernel]\nfamily = \"affine-drop\"\nscale = 2\n").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let text = r#"
            [kernel]
            family = "inverse-bessel"
            alpha = 1.0
            beta = 2.0

            [solve]
            method = "contraction"
            tol = 1e-9
            bounds = { alpha = 0.5, beta = 0.4 }

            [simulate]
            paths = 1000
            spec = { max_drawdowns = 2, ladder = [10, 20] }

            [iid]
            law = { type = "geometric-drops", rate = 0.5, depth = 0.5 }

            [bessel]
            alpha = 1.0
            beta = 1.0
            drivers = [{ type = "geometric-brownian", sigma = 0.3 }]
        "#;
        let config = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(config.solve.method, SolveMethod::Contraction);
        assert_eq!(config.simulate.spec.max_drawdowns, 2);
        assert_eq!(config.kernel().unwrap().kind(), KernelKind::InverseBesselDiscretized);
        let back = RunConfig::from_toml_str(&config.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn simulate_source_resolution() {
        let both = RunConfig::from_toml_str(
            "[kernel]\nfamily = \"binomial-half\"\n[iid]\nlaw = { type = \"harmonic-drops\" }\n",
        )
        .unwrap();
        assert!(both.simulate_source().is_err());
        let iid = RunConfig::from_toml_str("[iid]\nlaw = { type = \"harmonic-drops\" }\n").unwrap();
        assert_eq!(iid.simulate_source().unwrap(), ModelSource::Iid);
    }

    #[test]
    fn tabulated_kernel_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("k.csv"), "x,y,k\n1,1,0.2\n1,2,0.2\n2,2,0.1\n2,4,0.1\n").unwrap();
        let cfg_path = dir.path().join("run.toml");
        fs::write(&cfg_path, "[kernel]\nfamily = \"tabulated\"\ntable = \"k.csv\"\n").unwrap();
        let config = RunConfig::from_path(&cfg_path).unwrap();
        assert_eq!(config.kernel().unwrap().kind(), KernelKind::UserDefined);
    }
}
