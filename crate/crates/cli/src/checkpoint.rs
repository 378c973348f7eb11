//! Binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "SPRN"  u32 version
//! u32 n   n bytes of UTF-8 `key=value` lines (model and training config)
//! f64     σ (0 for windowed models)
//! u32     array count
//! per array: u16 name length, name, u8 dtype (0 = f64, 1 = complex f64 as re, im),
//!            u8 rank, rank × u32 dims, payload
//! ```

use std::path::Path;

use spectral_rnn_core::cells::{ArrayMut, ArrayRef, CellKind, CellParams};
use spectral_rnn_core::model::{Frontend, Model, ModelSpec, Normalization};
use spectral_rnn_core::spectral::WindowSpec;
use spectral_rnn_core::Complex;

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"SPRN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F64 = 0,
    C128 = 1,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F64 => 1,
            Dtype::C128 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub dtype: Dtype,
    pub dims: Vec<usize>,
    /// Complex entries interleaved as `re, im`.
    pub data: Vec<f64>,
}

impl NamedArray {
    fn payload_len(&self) -> usize {
        self.dims.iter().product::<usize>() * self.dtype.width()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: Vec<(String, String)>,
    pub sigma: f64,
    pub arrays: Vec<NamedArray>,
}

fn spec_config(spec: &ModelSpec) -> Vec<(String, String)> {
    let mut cfg = vec![
        ("cell".to_string(), spec.cell.to_string()),
        ("hidden".to_string(), spec.hidden.to_string()),
        ("n_features".to_string(), spec.n_features.to_string()),
    ];
    match &spec.frontend {
        Frontend::Spectral { window, keep } => {
            cfg.push(("frontend".into(), "stft".into()));
            cfg.push(("window_size".into(), window.window_len().to_string()));
            cfg.push(("step".into(), window.hop().to_string()));
            cfg.push(("keep".into(), keep.map_or("none".into(), |k| k.to_string())));
        }
        Frontend::Windowed { size, factor } => {
            cfg.push(("frontend".into(), "window".into()));
            cfg.push(("window_size".into(), size.to_string()));
            cfg.push(("downsample".into(), factor.to_string()));
        }
    }
    cfg
}

impl Checkpoint {
    /// Snapshot of `model`; `extra` entries are appended to the config.
    pub fn from_model(model: &Model, extra: &[(String, String)]) -> Self {
        let mut config = spec_config(&model.spec);
        config.extend(extra.iter().cloned());
        let mut arrays: Vec<NamedArray> = model
            .cell
            .arrays()
            .into_iter()
            .map(|(name, a)| match a {
                ArrayRef::Real(m) => NamedArray {
                    name: name.to_string(),
                    dtype: Dtype::F64,
                    dims: vec![m.rows, m.cols],
                    data: m.data.clone(),
                },
                ArrayRef::Complex(m) => NamedArray {
                    name: name.to_string(),
                    dtype: Dtype::C128,
                    dims: vec![m.rows, m.cols],
                    data: m.data.iter().flat_map(|c| [c.re, c.im]).collect(),
                },
            })
            .collect();
        for (name, v) in [
            ("norm_shift", &model.normalization.shift),
            ("norm_scale", &model.normalization.scale),
        ] {
            arrays.push(NamedArray {
                name: name.to_string(),
                dtype: Dtype::F64,
                dims: vec![v.len()],
                data: v.clone(),
            });
        }
        Checkpoint {
            config,
            sigma: model.sigma().unwrap_or(0.0),
            arrays,
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.config.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| CliError::data(format!("checkpoint config lacks '{key}'")))
    }

    fn number(&self, key: &str) -> Result<usize> {
        let v = self.require(key)?;
        v.parse()
            .map_err(|_| CliError::data(format!("checkpoint config '{key}' = '{v}' is not a count")))
    }

    pub fn cell_kind(&self) -> Result<CellKind> {
        Ok(self.require("cell")?.parse()?)
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        let frontend = match self.require("frontend")? {
            "stft" => {
                let keep = match self.require("keep")? {
                    "none" => None,
                    _ => Some(self.number("keep")?),
                };
                let window = WindowSpec::new(self.number("window_size")?, self.number("step")?, self.sigma)?;
                Frontend::Spectral { window, keep }
            }
            "window" => Frontend::Windowed {
                size: self.number("window_size")?,
                factor: self.number("downsample")?,
            },
            other => return Err(CliError::data(format!("unknown frontend '{other}' in checkpoint"))),
        };
        let spec = ModelSpec {
            cell: self.cell_kind()?,
            hidden: self.number("hidden")?,
            n_features: self.number("n_features")?,
            frontend,
        };
        spec.cell_config()?;
        Ok(spec)
    }

    fn array(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| CliError::data(format!("checkpoint lacks array '{name}'")))
    }

    pub fn to_model(&self) -> Result<Model> {
        let spec = self.spec()?;
        let mut cell = CellParams::zeros(&spec.cell_config()?);
        for (name, slot) in cell.arrays_mut() {
            let a = self.array(name)?;
            let mismatch = |want: Dtype, rows: usize, cols: usize| {
                CliError::data(format!(
                    "array '{name}': expected {want:?} of shape [{rows}, {cols}], found {:?} of shape {:?}",
                    a.dtype, a.dims
                ))
            };
            match slot {
                ArrayMut::Real(m) => {
                    if a.dtype != Dtype::F64 || a.dims != [m.rows, m.cols] {
                        return Err(mismatch(Dtype::F64, m.rows, m.cols));
                    }
                    m.data.copy_from_slice(&a.data);
                }
                ArrayMut::Complex(m) => {
                    if a.dtype != Dtype::C128 || a.dims != [m.rows, m.cols] {
                        return Err(mismatch(Dtype::C128, m.rows, m.cols));
                    }
                    for (c, pair) in m.data.iter_mut().zip(a.data.chunks_exact(2)) {
                        *c = Complex::new(pair[0], pair[1]);
                    }
                }
            }
        }
        let norm = Normalization {
            shift: self.array("norm_shift")?.data.clone(),
            scale: self.array("norm_scale")?.data.clone(),
        };
        Ok(Model::new(spec, cell)?.with_normalization(norm)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let text: String = self.config.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out.extend_from_slice(&self.sigma.to_le_bytes());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            out.extend_from_slice(&(a.name.len() as u16).to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.push(a.dtype as u8);
            out.push(a.dims.len() as u8);
            for d in &a.dims {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(CliError::data("not a checkpoint: bad magic"));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(CliError::data(format!("unsupported checkpoint version {version}")));
        }
        let n = r.u32("config length")? as usize;
        let text = std::str::from_utf8(r.take(n, "config")?)
            .map_err(|_| CliError::data("checkpoint config is not UTF-8"))?;
        let config = text
            .lines()
            .map(|line| {
                line.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| CliError::data(format!("checkpoint config line '{line}' lacks '='")))
            })
            .collect::<Result<_>>()?;
        let sigma = f64::from_le_bytes(r.take(8, "sigma")?.try_into().unwrap());
        let count = r.u32("array count")? as usize;
        let mut arrays = Vec::with_capacity(count.min(1024));
        for i in 0..count {
            let header = format!("array #{i} header");
            let len = u16::from_le_bytes(r.take(2, &header)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(r.take(len, &header)?.to_vec())
                .map_err(|_| CliError::data(format!("array #{i} has a non-UTF-8 name")))?;
            let what = format!("array '{name}'");
            let dtype = match r.take(1, &what)?[0] {
                0 => Dtype::F64,
                1 => Dtype::C128,
                other => return Err(CliError::data(format!("{what}: unknown dtype code {other}"))),
            };
            let rank = r.take(1, &what)?[0] as usize;
            let dims = (0..rank)
                .map(|_| r.u32(&what).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let mut a = NamedArray {
                name,
                dtype,
                dims,
                data: Vec::new(),
            };
            let payload = r.take(a.payload_len() * 8, &what)?;
            a.data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            arrays.push(a);
        }
        if r.pos != bytes.len() {
            return Err(CliError::data(format!(
                "checkpoint has {} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint { config, sigma, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|e| match e {
            CliError::Data(msg) => CliError::data(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let remaining = self.bytes.len() - self.pos;
        if n > remaining {
            return Err(CliError::data(format!(
                "truncated checkpoint: {what} needs {n} bytes, {remaining} remain"
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}
