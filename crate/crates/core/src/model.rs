//! Trained model container.
//!
//! Layout: one UTF-8 header line `TMENHANCE-MODEL <version> <fingerprint>`,
//! then a sequence of arrays, each a little-endian `u64` length followed by
//! that many little-endian `f64` values.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::gmm::{Component, JointGmm};
use crate::mapping::MappingModel;
use crate::phone::Phone;

pub const MAGIC: &str = "TMENHANCE-MODEL";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub config: RunConfig,
    pub envelope: MappingModel,
    pub excitation: MappingModel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelHeader {
    pub version: u32,
    pub fingerprint: String,
}

fn push_array(out: &mut Vec<u8>, values: &[f64]) {
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn encode_config(c: &RunConfig) -> Vec<f64> {
    let a = &c.analysis;
    vec![
        a.lpc_order as f64,
        a.frame_shift_ms,
        a.window_ms,
        a.dft_size as f64,
        c.rate_hz as f64,
        c.mixtures_global as f64,
        c.mixtures_per_phone as f64,
        c.bands as f64,
        c.spacing as u8 as f64,
        c.tilt_mode as u8 as f64,
        c.scheme as u8 as f64,
        c.context_source as u8 as f64,
        (c.seed >> 32) as f64,
        (c.seed & 0xffff_ffff) as f64,
        c.em.max_iter as f64,
        c.em.tol,
    ]
}

fn encode_gmm(out: &mut Vec<u8>, g: &JointGmm) {
    push_array(out, &[g.n_mixtures() as f64, g.dim_x() as f64, g.dim_y() as f64]);
    push_array(out, g.weights());
    for c in g.components() {
        push_array(out, c.mean.as_slice());
        push_array(out, c.cov.as_slice());
    }
}

fn encode_mapping(out: &mut Vec<u8>, m: &MappingModel) {
    push_array(
        out,
        &[m.dim_x() as f64, m.dim_y() as f64, m.per_phone.len() as f64, m.fallback.len() as f64],
    );
    push_array(out, &m.fallback.iter().map(|p| p.index() as f64).collect::<Vec<_>>());
    encode_gmm(out, &m.global);
    for (p, g) in &m.per_phone {
        push_array(out, &[p.index() as f64]);
        encode_gmm(out, g);
    }
}

impl ModelFile {
    pub fn fingerprint(&self) -> String {
        self.config.fingerprint()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("{MAGIC} {VERSION} {}\n", self.fingerprint()).into_bytes();
        push_array(&mut out, &encode_config(&self.config));
        encode_mapping(&mut out, &self.envelope);
        encode_mapping(&mut out, &self.excitation);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::ModelFormat("missing header line".into()))?;
        let header = parse_header(&bytes[..nl])?;
        let mut r = Reader { bytes: &bytes[nl + 1..], pos: 0 };
        let config = decode_config(&r.array()?)?;
        let fingerprint = config.fingerprint();
        if fingerprint != header.fingerprint {
            return Err(Error::ModelFormat(format!(
                "header fingerprint {} does not match stored configuration {fingerprint}",
                header.fingerprint
            )));
        }
        let envelope = r.mapping(&fingerprint)?;
        let excitation = r.mapping(&fingerprint)?;
        if r.pos != r.bytes.len() {
            return Err(Error::ModelFormat("trailing data after the last array".into()));
        }
        Ok(ModelFile { config, envelope, excitation })
    }

    /// Writes through a temporary file in the target directory and renames it
    /// into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Reads only the header line of a model file.
pub fn read_header(path: &Path) -> Result<ModelHeader> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::ModelFormat("missing header line".into()))?;
    parse_header(&bytes[..nl])
}

fn parse_header(line: &[u8]) -> Result<ModelHeader> {
    let text = std::str::from_utf8(line).map_err(|_| Error::ModelFormat("header is not UTF-8".into()))?;
    let mut parts = text.split(' ');
    if parts.next() != Some(MAGIC) {
        return Err(Error::ModelFormat("not a model file".into()));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::ModelFormat("bad version field".into()))?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}, expected {VERSION}")));
    }
    let fingerprint = parts
        .next()
        .filter(|f| !f.is_empty())
        .ok_or_else(|| Error::ModelFormat("missing fingerprint".into()))?
        .to_string();
    Ok(ModelHeader { version, fingerprint })
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn as_count(v: f64, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e12 {
        Ok(v as usize)
    } else {
        Err(Error::ModelFormat(format!("invalid {what} {v}")))
    }
}

fn decode_config(v: &[f64]) -> Result<RunConfig> {
    if v.len() != 16 {
        return Err(Error::ModelFormat(format!("configuration block has {} values, expected 16", v.len())));
    }
    let pick = |x: f64, n: usize, what: &str| -> Result<usize> {
        let i = as_count(x, what)?;
        if i < n {
            Ok(i)
        } else {
            Err(Error::ModelFormat(format!("invalid {what} {x}")))
        }
    };
    let mut c = RunConfig::default();
    c.analysis.lpc_order = as_count(v[0], "lpc order")?;
    c.analysis.frame_shift_ms = v[1];
    c.analysis.window_ms = v[2];
    c.analysis.dft_size = as_count(v[3], "dft size")?;
    c.rate_hz = as_count(v[4], "sample rate")? as u32;
    c.mixtures_global = as_count(v[5], "mixture count")?;
    c.mixtures_per_phone = as_count(v[6], "mixture count")?;
    c.bands = as_count(v[7], "band count")?;
    c.spacing = ["linear", "mel"][pick(v[8], 2, "spacing")?].parse()?;
    c.tilt_mode = ["power", "literal"][pick(v[9], 2, "tilt mode")?].parse()?;
    c.scheme = ["sm", "hm", "pdsm", "pdhm"][pick(v[10], 4, "scheme")?].parse()?;
    c.context_source = ["true", "gmm", "file"][pick(v[11], 3, "context source")?].parse()?;
    c.seed = ((as_count(v[12], "seed")? as u64) << 32) | as_count(v[13], "seed")? as u64;
    c.em.max_iter = as_count(v[14], "iteration count")?;
    c.em.tol = v[15];
    Ok(c)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::ModelFormat("truncated model file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array(&mut self) -> Result<Vec<f64>> {
        let len = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        let len = usize::try_from(len).map_err(|_| Error::ModelFormat("array too long".into()))?;
        let raw = self.take(len.checked_mul(8).ok_or_else(|| Error::ModelFormat("array too long".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn sized(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let a = self.array()?;
        if a.len() != n {
            return Err(Error::ModelFormat(format!("{what} has {} values, expected {n}", a.len())));
        }
        Ok(a)
    }

    fn gmm(&mut self) -> Result<JointGmm> {
        let h = self.sized(3, "mixture header")?;
        let (l, dx, dy) = (as_count(h[0], "mixture count")?, as_count(h[1], "dimension")?, as_count(h[2], "dimension")?);
        let d = dx + dy;
        let weights = self.sized(l, "weights")?;
        let components = (0..l)
            .map(|_| {
                let mean = DVector::from_vec(self.sized(d, "mean")?);
                let cov = DMatrix::from_vec(d, d, self.sized(d * d, "covariance")?);
                Ok(Component { mean, cov })
            })
            .collect::<Result<Vec<_>>>()?;
        JointGmm::new(dx, dy, weights, components).map_err(|e| Error::ModelFormat(format!("invalid mixture: {e}")))
    }

    fn phone(v: f64) -> Result<Phone> {
        Phone::from_index(as_count(v, "phone index")?).ok_or_else(|| Error::ModelFormat(format!("invalid phone index {v}")))
    }

    fn mapping(&mut self, fingerprint: &str) -> Result<MappingModel> {
        let h = self.sized(4, "mapping header")?;
        let n_phone = as_count(h[2], "phone model count")?;
        let fallback = self
            .sized(as_count(h[3], "fallback count")?, "fallback list")?
            .into_iter()
            .map(Self::phone)
            .collect::<Result<BTreeSet<_>>>()?;
        let global = self.gmm()?;
        if (global.dim_x(), global.dim_y()) != (as_count(h[0], "dimension")?, as_count(h[1], "dimension")?) {
            return Err(Error::ModelFormat("mapping dimensions disagree with the global mixture".into()));
        }
        let mut per_phone = BTreeMap::new();
        for _ in 0..n_phone {
            let p = Self::phone(self.sized(1, "phone index")?[0])?;
            let g = self.gmm()?;
            if (g.dim_x(), g.dim_y()) != (global.dim_x(), global.dim_y()) {
                return Err(Error::ModelFormat(format!("phone {p} mixture has the wrong dimensions")));
            }
            per_phone.insert(p, g);
        }
        Ok(MappingModel {
            global,
            per_phone,
            fallback,
            fingerprint: fingerprint.to_string(),
        })
    }
}
