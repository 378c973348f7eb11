//! Flag and config-file options, and their mapping onto model variants.
//!
//! Every option may come from the command line or from a TOML file given
//! with `--config`; the command line wins.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;
use spectral_rnn_core::cells::CellKind;
use spectral_rnn_core::model::{Frontend, LossDomain, ModelSpec};
use spectral_rnn_core::spectral::WindowSpec;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// One sample per cell step.
    Time,
    /// Non-overlapping raw windows.
    Window,
    /// Short-time Fourier frames.
    Stft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellArg {
    Gru,
    Cgru,
    Basic,
}

impl From<CellArg> for CellKind {
    fn from(c: CellArg) -> Self {
        match c {
            CellArg::Gru => CellKind::Gru,
            CellArg::Cgru => CellKind::ComplexGru,
            CellArg::Basic => CellKind::Basic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossArg {
    Time,
    Freq,
}

impl From<LossArg> for LossDomain {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Time => LossDomain::Time,
            LossArg::Freq => LossDomain::Frequency,
        }
    }
}

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_STFT_WINDOW: usize = 128;
pub const DEFAULT_RAW_WINDOW: usize = 64;
pub const DEFAULT_SIGMA: f64 = 0.5;

/// Options selecting one model variant.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ModelOptions {
    #[arg(long, value_enum)]
    pub cell: Option<CellArg>,
    #[arg(long, value_enum)]
    pub domain: Option<Domain>,
    /// Samples per frame or window.
    #[arg(long)]
    pub window_size: Option<usize>,
    /// Hop between STFT frames.
    #[arg(long)]
    pub step: Option<usize>,
    /// Initial window width.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Keep the lowest K frequency bins.
    #[arg(long, value_name = "K")]
    pub lowpass: Option<usize>,
    /// Keep every F-th sample of each window.
    #[arg(long, value_name = "F")]
    pub downsample: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
}

macro_rules! merge_fields {
    ($a:expr, $b:expr, $($f:ident),*) => {
        $( if $a.$f.is_none() { $a.$f = $b.$f.clone(); } )*
    };
}

impl ModelOptions {
    pub fn merge(&mut self, fallback: &ModelOptions) {
        merge_fields!(self, fallback, cell, domain, window_size, step, sigma, lowpass, downsample, hidden);
    }

    /// The variant these options describe, or an explanation of why the
    /// combination is contradictory.
    pub fn spec(&self, n_features: usize) -> Result<ModelSpec> {
        let domain = self.domain.unwrap_or(Domain::Stft);
        let cell: CellKind = self.cell.unwrap_or(CellArg::Gru).into();
        let name = match domain {
            Domain::Time => "time",
            Domain::Window => "window",
            Domain::Stft => "stft",
        };
        let reject = |flag: &str, why: &str| Err(CliError::usage(format!("--{flag} cannot be used with --domain {name}: {why}")));
        if domain != Domain::Stft {
            if self.lowpass.is_some() {
                return reject("lowpass", "low-pass filtering acts on STFT frames");
            }
            if self.sigma.is_some() {
                return reject("sigma", "only STFT models have a window width");
            }
            if cell.is_complex() {
                return reject("cell", "complex cells need STFT frames");
            }
        }
        let frontend = match domain {
            Domain::Time => {
                if self.window_size.is_some_and(|w| w != 1) || self.step.is_some_and(|s| s != 1) {
                    return reject("window-size", "the time domain advances one sample per step");
                }
                if self.downsample.is_some_and(|f| f != 1) {
                    return reject("downsample", "a single sample cannot be downsampled");
                }
                Frontend::Windowed { size: 1, factor: 1 }
            }
            Domain::Window => {
                let size = self.window_size.unwrap_or(DEFAULT_RAW_WINDOW);
                if self.step.is_some_and(|s| s != size) {
                    return reject("step", "raw windows do not overlap, so the step equals the window size");
                }
                Frontend::Windowed {
                    size,
                    factor: self.downsample.unwrap_or(1),
                }
            }
            Domain::Stft => {
                if self.downsample.is_some() {
                    return reject("downsample", "use --lowpass to reduce STFT frames");
                }
                let t = self.window_size.unwrap_or(DEFAULT_STFT_WINDOW);
                let s = self.step.unwrap_or((t / 2).max(1));
                let window = WindowSpec::new(t, s, self.sigma.unwrap_or(DEFAULT_SIGMA))
                    .map_err(|e| CliError::usage(e.to_string()))?;
                Frontend::Spectral {
                    window,
                    keep: self.lowpass,
                }
            }
        };
        let spec = ModelSpec {
            cell,
            hidden: self.hidden.unwrap_or(DEFAULT_HIDDEN),
            n_features,
            frontend,
        };
        spec.cell_config().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(spec)
    }
}

/// Options of `train` other than the model variant.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainOptions {
    /// `mackey` for fresh Mackey-Glass simulations, or a CSV path.
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long)]
    pub decay_every: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Context samples per pair for CSV data (default: half the series).
    #[arg(long)]
    pub context: Option<usize>,
    /// Target samples per pair for CSV data (default: the rest).
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Gap between context and target for CSV data.
    #[arg(long)]
    pub offset: Option<usize>,
    /// Stride between CSV pairs.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Train on raw values instead of standardized ones.
    #[arg(long)]
    #[serde(default)]
    pub no_normalize: bool,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Metrics CSV (default: next to the checkpoint).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

impl TrainOptions {
    pub fn merge(&mut self, fallback: &TrainOptions) {
        merge_fields!(
            self,
            fallback,
            data,
            loss,
            iterations,
            lr,
            decay,
            decay_every,
            clip_norm,
            seed,
            context,
            horizon,
            offset,
            stride,
            checkpoint,
            metrics
        );
        self.no_normalize |= fallback.no_normalize;
    }
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub model: ModelOptions,
    #[serde(default)]
    pub train: TrainOptions,
}

impl ConfigFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("{origin}: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        ConfigFile::parse(&text, &path.display().to_string())
    }
}

/// Conventional name of a variant, e.g. `STFT-GRU-lowpass`.
pub fn variant_name(spec: &ModelSpec) -> String {
    let cell = match spec.cell {
        CellKind::Gru => "GRU",
        CellKind::ComplexGru => "cgRNN",
        CellKind::Basic => "cRNN",
    };
    match &spec.frontend {
        Frontend::Windowed { size: 1, .. } => format!("time-{cell}"),
        Frontend::Windowed { factor: 1, .. } => format!("time-{cell}-window"),
        Frontend::Windowed { .. } => format!("time-{cell}-window-down"),
        Frontend::Spectral { keep: None, .. } => format!("STFT-{cell}"),
        Frontend::Spectral { keep: Some(_), .. } => format!("STFT-{cell}-lowpass"),
    }
}

/// The reference variants: five real-valued ablations and the complex cell.
pub fn reference_variants() -> Vec<ModelOptions> {
    let base = ModelOptions::default();
    let with = |f: &dyn Fn(&mut ModelOptions)| {
        let mut o = base.clone();
        f(&mut o);
        o
    };
    vec![
        with(&|o| o.domain = Some(Domain::Time)),
        with(&|o| o.domain = Some(Domain::Window)),
        with(&|o| {
            o.domain = Some(Domain::Window);
            o.downsample = Some(32);
        }),
        with(&|o| o.domain = Some(Domain::Stft)),
        with(&|o| {
            o.domain = Some(Domain::Stft);
            o.lowpass = Some(4);
        }),
        with(&|o| {
            o.cell = Some(CellArg::Cgru);
            o.hidden = Some(32);
        }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_counts() {
        let counts: Vec<(String, usize)> = reference_variants()
            .iter()
            .map(|o| {
                let s = o.spec(1).unwrap();
                (variant_name(&s), s.cell_config().unwrap().param_count())
            })
            .collect();
        let expected = [
            ("time-GRU", 12_737),
            ("time-GRU-window", 28_928),
            ("time-GRU-window-down", 12_994),
            ("STFT-GRU", 45_890),
            ("STFT-GRU-lowpass", 14_536),
            ("STFT-cgRNN", 23_040),
        ];
        for ((name, n), (e_name, e_n)) in counts.iter().zip(expected) {
            assert_eq!((name.as_str(), *n), (e_name, e_n));
        }
    }

    #[test]
    fn contradictions_are_explained() {
        let bad = [
            ModelOptions {
                domain: Some(Domain::Time),
                lowpass: Some(4),
                ..Default::default()
            },
            ModelOptions {
                domain: Some(Domain::Stft),
                downsample: Some(32),
                ..Default::default()
            },
            ModelOptions {
                domain: Some(Domain::Window),
                cell: Some(CellArg::Cgru),
                ..Default::default()
            },
            ModelOptions {
                domain: Some(Domain::Window),
                window_size: Some(64),
                step: Some(32),
                ..Default::default()
            },
            ModelOptions {
                lowpass: Some(100),
                ..Default::default()
            },
        ];
        for o in bad {
            let err = o.spec(1).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{err}");
        }
    }

    #[test]
    fn config_file_fills_missing_flags() {
        let file = ConfigFile::parse(
            "[model]\ndomain = \"stft\"\nlowpass = 4\nwindow-size = 128\n[train]\niterations = 5\nlr = 0.01\n",
            "t",
        )
        .unwrap();
        let mut flags = TrainOptions {
            iterations: Some(7),
            ..Default::default()
        };
        flags.merge(&file.train);
        assert_eq!((flags.iterations, flags.lr), (Some(7), Some(0.01)));
        let mut m = ModelOptions::default();
        m.merge(&file.model);
        assert_eq!(m.lowpass, Some(4));
        assert!(ConfigFile::parse("[model]\nbogus = 1\n", "t").is_err());
    }
}
