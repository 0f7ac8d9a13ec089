//! On-disk formats.
//!
//! # UET container
//!
//! ```text
//! "UET1" | dtype: u8 | rank: u8 | rank x dim: u32 LE | payload, row-major, LE
//! ```
//!
//! dtype codes: 0 = u8, 1 = i32, 2 = f32, 3 = f64. Class maps are rank 2
//! integer tensors, uncertainty maps rank 2 float tensors, and sample stacks
//! rank 4 float tensors laid out `T x C x H x W`.
//!
//! Class and scalar maps can also be read from binary PGM (`P5`). Patch grids
//! are written as PGM with white = accurate / uncertain, black = the
//! opposite, and mid-grey for patches skipped because their ground truth is
//! entirely ignored.

use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::patch::{BinaryGrid, ConditionalMetrics, PatchCounts, SweepCurve, SweepPoint};
use crate::tensor::{ClassMap, ProbStack, ScalarMap, Violation};

pub const MAGIC: &[u8; 4] = b"UET1";

/// Grey level used for skipped cells in exported patch grids.
pub const SKIPPED_GREY: u8 = 128;

pub const SWEEP_CSV_HEADER: &str = "t,u_th,n_ac,n_au,n_ic,n_iu,p_acc_given_cert,p_unc_given_inacc,pavpu";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Dtype {
    U8 = 0,
    I32 = 1,
    F32 = 2,
    F64 = 3,
}

impl Dtype {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::U8),
            1 => Some(Dtype::I32),
            2 => Some(Dtype::F32),
            3 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::I32 | Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn is_float(self) -> bool {
        matches!(self, Dtype::F32 | Dtype::F64)
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Dtype::U8 => "u8",
            Dtype::I32 => "i32",
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("bad magic {found:?} at byte 0")]
    BadMagic { found: Vec<u8> },

    #[error("truncated at byte {offset}: need {needed} bytes, {available} available")]
    Truncated { offset: usize, needed: usize, available: usize },

    #[error("unknown dtype code {code} at byte {offset}")]
    UnknownDtype { code: u8, offset: usize },

    #[error("{extra} trailing bytes after payload ending at byte {offset}")]
    TrailingBytes { offset: usize, extra: usize },

    #[error("payload size overflows at byte {offset}")]
    TooLarge { offset: usize },

    #[error("expected {expected} data, found dtype {found}")]
    DtypeMismatch { expected: &'static str, found: Dtype },

    #[error("expected rank {expected}, found rank {found}")]
    RankMismatch { expected: &'static str, found: usize },

    #[error("negative label {value} at ({row}, {col})")]
    NegativeLabel { row: usize, col: usize, value: i32 },

    #[error("label {value} at ({row}, {col}) does not fit dtype u8")]
    LabelTooWide { row: usize, col: usize, value: u32 },

    #[error("empty dimension on axis {axis}")]
    EmptyDimension { axis: usize },

    #[error("PGM: {message} at byte {offset}")]
    Pgm { offset: usize, message: String },

    #[error("invariant violation: {0}")]
    Invariant(#[from] Violation),
}

/// Container payload in its on-disk element type.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    U8(Vec<u8>),
    I32(Vec<i32>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn dtype(&self) -> Dtype {
        match self {
            TensorData::U8(_) => Dtype::U8,
            TensorData::I32(_) => Dtype::I32,
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::U8(v) => v.len(),
            TensorData::I32(v) => v.len(),
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn to_f64(&self) -> Vec<f64> {
        match self {
            TensorData::U8(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::I32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }
}

/// An untyped UET tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<u32>,
    pub data: TensorData,
}

impl RawTensor {
    pub fn new(dims: Vec<u32>, data: TensorData) -> Result<Self> {
        let n: usize = dims.iter().map(|&d| d as usize).product();
        if n != data.len() {
            return Err(Error::invalid(format!("payload holds {} values but dims {dims:?} need {n}", data.len())));
        }
        if dims.len() > u8::MAX as usize {
            return Err(Error::invalid("rank exceeds 255"));
        }
        Ok(Self { dims, data })
    }

    pub fn encode(&self) -> Vec<u8> {
        let dtype = self.data.dtype();
        let mut out = Vec::with_capacity(6 + 4 * self.dims.len() + self.data.len() * dtype.size());
        out.extend_from_slice(MAGIC);
        out.push(dtype as u8);
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            TensorData::U8(v) => out.extend_from_slice(v),
            TensorData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, FormatError> {
        let take = |offset: usize, needed: usize| {
            bytes.get(offset..offset + needed).ok_or(FormatError::Truncated {
                offset,
                needed,
                available: bytes.len().saturating_sub(offset),
            })
        };
        let magic = take(0, 4).map_err(|_| FormatError::BadMagic { found: bytes.to_vec() })?;
        if magic != MAGIC {
            return Err(FormatError::BadMagic { found: magic.to_vec() });
        }
        let code = take(4, 1)?[0];
        let dtype = Dtype::from_code(code).ok_or(FormatError::UnknownDtype { code, offset: 4 })?;
        let rank = take(5, 1)?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for axis in 0..rank {
            let b = take(6 + 4 * axis, 4)?;
            dims.push(u32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        }
        let start = 6 + 4 * rank;
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .and_then(|n| n.checked_mul(dtype.size()).map(|b| (n, b)));
        let (_, byte_len) = count.ok_or(FormatError::TooLarge { offset: 6 })?;
        let payload = take(start, byte_len)?;
        let end = start + byte_len;
        if bytes.len() > end {
            return Err(FormatError::TrailingBytes { offset: end, extra: bytes.len() - end });
        }
        let data = match dtype {
            Dtype::U8 => TensorData::U8(payload.to_vec()),
            Dtype::I32 => {
                TensorData::I32(payload.chunks_exact(4).map(|b| i32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
            }
            Dtype::F32 => {
                TensorData::F32(payload.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
            }
            Dtype::F64 => TensorData::F64(
                payload.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8"))).collect(),
            ),
        };
        Ok(Self { dims, data })
    }
}

/// Any of the three value types.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Class(ClassMap),
    Prob(ProbStack),
    Scalar(ScalarMap),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Class,
    Prob,
    Scalar,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadOptions {
    /// Class count for label maps; inferred as `max label + 1` when absent.
    pub class_count: Option<u32>,
    pub ignore_id: Option<u32>,
    /// Requested interpretation; decided by rank and dtype when absent.
    pub kind: Option<TensorKind>,
}

impl ReadOptions {
    pub fn class(class_count: Option<u32>, ignore_id: Option<u32>) -> Self {
        Self { class_count, ignore_id, kind: Some(TensorKind::Class) }
    }

    pub fn kind(kind: TensorKind) -> Self {
        Self { kind: Some(kind), ..Self::default() }
    }
}

fn class_map_from_labels(
    height: usize,
    width: usize,
    labels: Vec<u32>,
    opts: &ReadOptions,
) -> std::result::Result<ClassMap, FormatError> {
    let class_count = opts.class_count.unwrap_or_else(|| {
        let top = labels.iter().filter(|&&v| Some(v) != opts.ignore_id).max().copied().unwrap_or(0);
        (top + 1).max(2)
    });
    let map = ClassMap::from_raw(height, width, class_count, opts.ignore_id, labels).expect("label count matches dims");
    map.validate()?;
    Ok(map)
}

fn dims_usize(raw: &RawTensor) -> std::result::Result<Vec<usize>, FormatError> {
    if let Some(axis) = raw.dims.iter().position(|&d| d == 0) {
        return Err(FormatError::EmptyDimension { axis });
    }
    Ok(raw.dims.iter().map(|&d| d as usize).collect())
}

impl Tensor {
    pub fn kind(&self) -> TensorKind {
        match self {
            Tensor::Class(_) => TensorKind::Class,
            Tensor::Prob(_) => TensorKind::Prob,
            Tensor::Scalar(_) => TensorKind::Scalar,
        }
    }

    pub fn from_raw(raw: &RawTensor, opts: &ReadOptions) -> std::result::Result<Self, FormatError> {
        let dtype = raw.data.dtype();
        let kind = opts.kind.unwrap_or(match (raw.dims.len(), dtype.is_float()) {
            (4, _) => TensorKind::Prob,
            (_, true) => TensorKind::Scalar,
            _ => TensorKind::Class,
        });
        let expect_rank = |want: usize, label: &'static str| {
            if raw.dims.len() == want {
                Ok(())
            } else {
                Err(FormatError::RankMismatch { expected: label, found: raw.dims.len() })
            }
        };
        match kind {
            TensorKind::Class => {
                expect_rank(2, "2 (H x W)")?;
                let dims = dims_usize(raw)?;
                let (h, w) = (dims[0], dims[1]);
                let labels = match &raw.data {
                    TensorData::U8(v) => v.iter().map(|&x| x as u32).collect(),
                    TensorData::I32(v) => v
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| {
                            u32::try_from(x).map_err(|_| FormatError::NegativeLabel {
                                row: i / w,
                                col: i % w,
                                value: x,
                            })
                        })
                        .collect::<std::result::Result<Vec<_>, _>>()?,
                    _ => return Err(FormatError::DtypeMismatch { expected: "integer label", found: dtype }),
                };
                Ok(Tensor::Class(class_map_from_labels(h, w, labels, opts)?))
            }
            TensorKind::Scalar => {
                expect_rank(2, "2 (H x W)")?;
                if !dtype.is_float() {
                    return Err(FormatError::DtypeMismatch { expected: "floating-point", found: dtype });
                }
                let dims = dims_usize(raw)?;
                let map = ScalarMap::from_raw(dims[0], dims[1], raw.data.to_f64()).expect("len matches");
                map.validate()?;
                Ok(Tensor::Scalar(map))
            }
            TensorKind::Prob => {
                expect_rank(4, "4 (T x C x H x W)")?;
                if !dtype.is_float() {
                    return Err(FormatError::DtypeMismatch { expected: "floating-point", found: dtype });
                }
                let d = dims_usize(raw)?;
                let stack = ProbStack::from_raw(d[0], d[1], d[2], d[3], raw.data.to_f64()).expect("len matches");
                stack.validate()?;
                Ok(Tensor::Prob(stack))
            }
        }
    }

    /// Converts to a container tensor; `dtype` defaults to u8 for labels that
    /// fit, i32 for wider labels, and f64 for real-valued data.
    pub fn to_raw(&self, dtype: Option<Dtype>) -> Result<RawTensor> {
        match self {
            Tensor::Class(m) => {
                m.validate()?;
                let (h, w) = m.dims();
                let wide = m.values().iter().any(|&v| v > u8::MAX as u32);
                let dtype = dtype.unwrap_or(if wide { Dtype::I32 } else { Dtype::U8 });
                let data = match dtype {
                    Dtype::U8 => TensorData::U8(
                        m.values()
                            .iter()
                            .enumerate()
                            .map(|(i, &v)| {
                                u8::try_from(v).map_err(|_| FormatError::LabelTooWide {
                                    row: i / w,
                                    col: i % w,
                                    value: v,
                                })
                            })
                            .collect::<std::result::Result<_, _>>()?,
                    ),
                    Dtype::I32 => TensorData::I32(m.values().iter().map(|&v| v as i32).collect()),
                    other => return Err(FormatError::DtypeMismatch { expected: "integer label", found: other }.into()),
                };
                RawTensor::new(vec![h as u32, w as u32], data)
            }
            Tensor::Scalar(m) => {
                m.validate()?;
                let (h, w) = m.dims();
                RawTensor::new(vec![h as u32, w as u32], float_data(m.values(), dtype)?)
            }
            Tensor::Prob(s) => {
                s.validate()?;
                let dims = [s.samples(), s.class_count(), s.height(), s.width()];
                RawTensor::new(dims.iter().map(|&d| d as u32).collect(), float_data(s.values(), dtype)?)
            }
        }
    }
}

fn float_data(values: &[f64], dtype: Option<Dtype>) -> Result<TensorData> {
    match dtype.unwrap_or(Dtype::F64) {
        Dtype::F64 => Ok(TensorData::F64(values.to_vec())),
        Dtype::F32 => Ok(TensorData::F32(values.iter().map(|&v| v as f32).collect())),
        other => Err(FormatError::DtypeMismatch { expected: "floating-point", found: other }.into()),
    }
}

impl From<ClassMap> for Tensor {
    fn from(m: ClassMap) -> Self {
        Tensor::Class(m)
    }
}

impl From<ProbStack> for Tensor {
    fn from(s: ProbStack) -> Self {
        Tensor::Prob(s)
    }
}

impl From<ScalarMap> for Tensor {
    fn from(m: ScalarMap) -> Self {
        Tensor::Scalar(m)
    }
}

/// Decodes a UET container, or a PGM when the bytes start with `P5`.
pub fn decode_tensor(bytes: &[u8], opts: &ReadOptions) -> std::result::Result<Tensor, FormatError> {
    if bytes.starts_with(b"P5") {
        let pgm = Pgm::decode(bytes)?;
        return match opts.kind {
            Some(TensorKind::Scalar) => Ok(Tensor::Scalar(pgm.to_scalar_map())),
            Some(TensorKind::Prob) => Err(FormatError::RankMismatch { expected: "4 (T x C x H x W)", found: 2 }),
            _ => Ok(Tensor::Class(class_map_from_labels(
                pgm.height,
                pgm.width,
                pgm.samples.iter().map(|&v| v as u32).collect(),
                opts,
            )?)),
        };
    }
    Tensor::from_raw(&RawTensor::decode(bytes)?, opts)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

pub fn read_tensor(path: impl AsRef<Path>, opts: &ReadOptions) -> Result<Tensor> {
    Ok(decode_tensor(&read_bytes(path.as_ref())?, opts)?)
}

pub fn read_class_map(path: impl AsRef<Path>, class_count: Option<u32>, ignore_id: Option<u32>) -> Result<ClassMap> {
    match read_tensor(path, &ReadOptions::class(class_count, ignore_id))? {
        Tensor::Class(m) => Ok(m),
        _ => unreachable!("kind forced to class"),
    }
}

pub fn read_prob_stack(path: impl AsRef<Path>) -> Result<ProbStack> {
    match read_tensor(path, &ReadOptions::kind(TensorKind::Prob))? {
        Tensor::Prob(s) => Ok(s),
        _ => unreachable!("kind forced to prob"),
    }
}

pub fn read_scalar_map(path: impl AsRef<Path>) -> Result<ScalarMap> {
    match read_tensor(path, &ReadOptions::kind(TensorKind::Scalar))? {
        Tensor::Scalar(m) => Ok(m),
        _ => unreachable!("kind forced to scalar"),
    }
}

pub fn encode_tensor(value: &Tensor, dtype: Option<Dtype>) -> Result<Vec<u8>> {
    Ok(value.to_raw(dtype)?.encode())
}

pub fn write_tensor(value: &Tensor, path: impl AsRef<Path>, dtype: Option<Dtype>) -> Result<()> {
    let bytes = encode_tensor(value, dtype)?;
    write_bytes(path.as_ref(), &bytes)
}

/// A decoded binary greymap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl Pgm {
    pub fn new(width: usize, height: usize, maxval: u16, samples: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(FormatError::EmptyDimension { axis: usize::from(width == 0) }.into());
        }
        if maxval == 0 || samples.len() != width * height || samples.iter().any(|&s| s > maxval) {
            return Err(Error::invalid("PGM samples do not match the declared header"));
        }
        Ok(Self { width, height, maxval, samples })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval < 256 {
            out.extend(self.samples.iter().map(|&s| s as u8));
        } else {
            self.samples.iter().for_each(|s| out.extend_from_slice(&s.to_be_bytes()));
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, FormatError> {
        let err = |offset: usize, message: &str| FormatError::Pgm { offset, message: message.into() };
        if !bytes.starts_with(b"P5") {
            return Err(err(0, "missing P5 magic"));
        }
        let mut pos = 2;
        let mut fields = [0usize; 3];
        for (k, field) in fields.iter_mut().enumerate() {
            // whitespace and comments
            loop {
                match bytes.get(pos) {
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                            pos += 1;
                        }
                    }
                    Some(_) => break,
                    None => return Err(err(pos, "header ends early")),
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
                pos += 1;
            }
            if start == pos {
                return Err(err(pos, "expected a decimal number"));
            }
            *field = std::str::from_utf8(&bytes[start..pos])
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err(start, "number out of range"))?;
            if k < 2 && *field == 0 {
                return Err(FormatError::EmptyDimension { axis: 1 - k });
            }
        }
        let [width, height, maxval] = fields;
        if maxval == 0 || maxval > u16::MAX as usize {
            return Err(err(pos, "maxval must lie in 1..=65535"));
        }
        if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(err(pos, "expected whitespace after maxval"));
        }
        pos += 1;
        let bytes_per = if maxval < 256 { 1 } else { 2 };
        let needed = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(bytes_per))
            .ok_or(FormatError::TooLarge { offset: pos })?;
        let payload = bytes.get(pos..pos + needed).ok_or(FormatError::Truncated {
            offset: pos,
            needed,
            available: bytes.len() - pos,
        })?;
        if bytes.len() > pos + needed {
            return Err(FormatError::TrailingBytes { offset: pos + needed, extra: bytes.len() - pos - needed });
        }
        let samples: Vec<u16> = if bytes_per == 1 {
            payload.iter().map(|&b| b as u16).collect()
        } else {
            payload.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect()
        };
        if let Some(i) = samples.iter().position(|&s| s as usize > maxval) {
            return Err(err(pos + i * bytes_per, "sample exceeds maxval"));
        }
        Ok(Self { width, height, maxval: maxval as u16, samples })
    }

    pub fn to_scalar_map(&self) -> ScalarMap {
        let m = self.maxval as f64;
        ScalarMap::from_raw(self.height, self.width, self.samples.iter().map(|&s| s as f64 / m).collect())
            .expect("len matches")
    }

    pub fn from_class_map(map: &ClassMap) -> Result<Self> {
        map.validate()?;
        let (h, w) = map.dims();
        let samples = map
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                u8::try_from(v).map(u16::from).map_err(|_| FormatError::LabelTooWide {
                    row: i / w,
                    col: i % w,
                    value: v,
                })
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(w, h, 255, samples)
    }

    pub fn from_grid(grid: &BinaryGrid) -> Result<Self> {
        let samples = grid
            .cells
            .iter()
            .map(|c| match c {
                Some(true) => 255,
                Some(false) => 0,
                None => SKIPPED_GREY as u16,
            })
            .collect();
        Self::new(grid.cols, grid.rows, 255, samples)
    }
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Sweep curve as CSV; undefined metrics are empty fields.
pub fn sweep_to_csv(curve: &SweepCurve) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for p in &curve.points {
        let c = &p.counts;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            p.t,
            p.u_th,
            c.n_ac,
            c.n_au,
            c.n_ic,
            c.n_iu,
            opt_field(p.metrics.p_accurate_given_certain),
            opt_field(p.metrics.p_uncertain_given_inaccurate),
            opt_field(p.metrics.pavpu),
        ));
    }
    out
}

/// Parses [`sweep_to_csv`] output.
pub fn sweep_from_csv(text: &str) -> Result<Vec<SweepPoint>> {
    let mut lines = text.lines();
    if lines.next() != Some(SWEEP_CSV_HEADER) {
        return Err(Error::invalid("sweep CSV header does not match"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let bad = || Error::invalid(format!("sweep CSV line {}: `{line}`", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(bad());
            }
            let real = |s: &str| s.parse::<f64>().map_err(|_| bad());
            let count = |s: &str| s.parse::<u64>().map_err(|_| bad());
            let opt = |s: &str| if s.is_empty() { Ok(None) } else { real(s).map(Some) };
            Ok(SweepPoint {
                t: real(f[0])?,
                u_th: real(f[1])?,
                counts: PatchCounts { n_ac: count(f[2])?, n_au: count(f[3])?, n_ic: count(f[4])?, n_iu: count(f[5])? },
                metrics: ConditionalMetrics {
                    p_accurate_given_certain: opt(f[6])?,
                    p_uncertain_given_inaccurate: opt(f[7])?,
                    pavpu: opt(f[8])?,
                },
            })
        })
        .collect()
}
