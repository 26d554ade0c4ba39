//! ENVI header (`.hdr`) plus raw binary payload.
//!
//! Only the data types 1, 2, 4, 5 and 12 are supported. Interleave only
//! affects the byte layout on disk; [`read_cube`] always yields a
//! band-sequential [`HyperCube`].

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::cube::{CubeError, HyperCube};

#[derive(Debug, Error)]
pub enum EnviError {
    #[error("header is missing required key `{0}`")]
    MissingKey(String),
    #[error("malformed value for `{key}`: {reason}")]
    MalformedValue { key: String, reason: String },
    #[error("header line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unsupported ENVI data type {0} (supported: 1, 2, 4, 5, 12)")]
    UnsupportedDataType(i64),
    #[error("payload holds {actual} bytes, header requires at least {expected}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("value {value} is not representable as {data_type} without quantization")]
    LossyNarrowing { value: f64, data_type: DataType },
    #[error(transparent)]
    Cube(#[from] CubeError),
    #[error("no payload file found next to {0}")]
    PayloadNotFound(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl EnviError {
    fn malformed(key: &str, reason: impl Into<String>) -> Self {
        EnviError::MalformedValue {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataType {
    U8,
    I16,
    F32,
    F64,
    U16,
}

impl DataType {
    pub fn from_code(code: i64) -> Result<Self, EnviError> {
        match code {
            1 => Ok(DataType::U8),
            2 => Ok(DataType::I16),
            4 => Ok(DataType::F32),
            5 => Ok(DataType::F64),
            12 => Ok(DataType::U16),
            other => Err(EnviError::UnsupportedDataType(other)),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            DataType::U8 => 1,
            DataType::I16 => 2,
            DataType::F32 => 4,
            DataType::F64 => 5,
            DataType::U16 => 12,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DataType::U8 => 1,
            DataType::I16 | DataType::U16 => 2,
            DataType::F32 => 4,
            DataType::F64 => 8,
        }
    }

    pub fn is_float(self) -> bool {
        matches!(self, DataType::F32 | DataType::F64)
    }

    fn int_range(self) -> Option<(f64, f64)> {
        match self {
            DataType::U8 => Some((0.0, u8::MAX as f64)),
            DataType::I16 => Some((i16::MIN as f64, i16::MAX as f64)),
            DataType::U16 => Some((0.0, u16::MAX as f64)),
            DataType::F32 | DataType::F64 => None,
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            DataType::U8 => "uint8",
            DataType::I16 => "int16",
            DataType::F32 => "float32",
            DataType::F64 => "float64",
            DataType::U16 => "uint16",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Interleave {
    Bsq,
    Bil,
    Bip,
}

impl Interleave {
    pub const ALL: [Interleave; 3] = [Interleave::Bsq, Interleave::Bil, Interleave::Bip];

    pub fn as_str(self) -> &'static str {
        match self {
            Interleave::Bsq => "bsq",
            Interleave::Bil => "bil",
            Interleave::Bip => "bip",
        }
    }
}

impl FromStr for Interleave {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bsq" => Ok(Interleave::Bsq),
            "bil" => Ok(Interleave::Bil),
            "bip" => Ok(Interleave::Bip),
            other => Err(format!("unknown interleave `{other}`")),
        }
    }
}

impl fmt::Display for Interleave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ByteOrder {
    #[default]
    Little,
    Big,
}

impl ByteOrder {
    fn code(self) -> u8 {
        match self {
            ByteOrder::Little => 0,
            ByteOrder::Big => 1,
        }
    }
}

/// Parsed ENVI header. Keys the codec does not interpret are kept verbatim in
/// `extra`, in file order, and written back out unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct EnviHeader {
    pub samples: usize,
    pub lines: usize,
    pub bands: usize,
    pub data_type: DataType,
    pub interleave: Interleave,
    pub byte_order: ByteOrder,
    pub header_offset: usize,
    pub wavelength: Option<Vec<f64>>,
    pub wavelength_units: Option<String>,
    pub data_ignore_value: Option<f64>,
    pub extra: Vec<(String, String)>,
}

impl EnviHeader {
    pub fn new(samples: usize, lines: usize, bands: usize, data_type: DataType, interleave: Interleave) -> Self {
        Self {
            samples,
            lines,
            bands,
            data_type,
            interleave,
            byte_order: ByteOrder::Little,
            header_offset: 0,
            wavelength: None,
            wavelength_units: None,
            data_ignore_value: None,
            extra: Vec::new(),
        }
    }

    pub fn element_count(&self) -> usize {
        self.samples * self.lines * self.bands
    }

    /// Minimum payload size in bytes, including the header offset.
    pub fn payload_len(&self) -> usize {
        self.header_offset + self.element_count() * self.data_type.size()
    }

    /// Wavelengths converted to nanometres. Micrometre units are scaled by
    /// 1000; anything else is taken as nm.
    pub fn wavelengths_nm(&self) -> Option<Vec<f64>> {
        let scale = match self.wavelength_units.as_deref().map(|u| u.trim().to_ascii_lowercase()) {
            Some(u) if matches!(u.as_str(), "micrometers" | "micrometer" | "microns" | "um" | "µm") => 1000.0,
            _ => 1.0,
        };
        self.wavelength
            .as_ref()
            .map(|wl| wl.iter().map(|w| w * scale).collect())
    }

    fn no_data_is_nan(&self) -> bool {
        self.data_ignore_value.is_some_and(f64::is_nan)
    }
}

impl fmt::Display for EnviHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ENVI")?;
        writeln!(f, "samples = {}", self.samples)?;
        writeln!(f, "lines = {}", self.lines)?;
        writeln!(f, "bands = {}", self.bands)?;
        writeln!(f, "header offset = {}", self.header_offset)?;
        writeln!(f, "data type = {}", self.data_type.code())?;
        writeln!(f, "interleave = {}", self.interleave)?;
        writeln!(f, "byte order = {}", self.byte_order.code())?;
        if let Some(v) = self.data_ignore_value {
            writeln!(f, "data ignore value = {v}")?;
        }
        if let Some(units) = &self.wavelength_units {
            writeln!(f, "wavelength units = {units}")?;
        }
        if let Some(wl) = &self.wavelength {
            let items: Vec<String> = wl.iter().map(|w| w.to_string()).collect();
            writeln!(f, "wavelength = {{{}}}", items.join(", "))?;
        }
        for (k, v) in &self.extra {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Keys with a typed field on [`EnviHeader`]; everything else lands in `extra`.
pub const KNOWN_KEYS: [&str; 10] = [
    "samples",
    "lines",
    "bands",
    "data type",
    "interleave",
    "byte order",
    "header offset",
    "wavelength",
    "wavelength units",
    "data ignore value",
];

fn normalize_key(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_ascii_lowercase()
}

/// Splits header text into `(normalized key, raw value)` pairs, joining
/// brace lists that span several lines.
fn tokenize(text: &str) -> Result<Vec<(String, String)>, EnviError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut entries: Vec<(String, String)> = Vec::new();
    let mut lines = text.lines().enumerate();
    while let Some((n, line)) = lines.next() {
        let line = line.trim();
        if line.is_empty() || line.starts_with(';') || line.eq_ignore_ascii_case("envi") {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(EnviError::Syntax {
                line: n + 1,
                reason: "expected `key = value`".into(),
            });
        };
        let key = normalize_key(key);
        if key.is_empty() {
            return Err(EnviError::Syntax {
                line: n + 1,
                reason: "empty key".into(),
            });
        }
        let mut value = value.trim().to_string();
        if value.starts_with('{') && !value.contains('}') {
            loop {
                match lines.next() {
                    Some((_, cont)) => {
                        let cont = cont.trim();
                        if !cont.is_empty() {
                            value.push(' ');
                            value.push_str(cont);
                        }
                        if cont.contains('}') {
                            break;
                        }
                    }
                    None => return Err(EnviError::malformed(&key, "unterminated `{` list")),
                }
            }
        }
        if entries.iter().any(|(k, _)| *k == key) {
            return Err(EnviError::malformed(&key, "duplicate key"));
        }
        entries.push((key, value));
    }
    Ok(entries)
}

fn parse_positive(key: &str, value: &str) -> Result<usize, EnviError> {
    match value.trim().parse::<usize>() {
        Ok(0) => Err(EnviError::malformed(key, "must be positive")),
        Ok(v) => Ok(v),
        Err(e) => Err(EnviError::malformed(key, e.to_string())),
    }
}

fn parse_brace_list(key: &str, value: &str) -> Result<Vec<f64>, EnviError> {
    let inner = value
        .trim()
        .strip_prefix('{')
        .and_then(|v| v.strip_suffix('}'))
        .ok_or_else(|| EnviError::malformed(key, "expected `{...}` list"))?;
    let items: Result<Vec<f64>, _> = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| EnviError::malformed(key, format!("`{s}`: {e}")))
        })
        .collect();
    let items = items?;
    if items.is_empty() {
        return Err(EnviError::malformed(key, "empty list"));
    }
    Ok(items)
}

/// Parses ENVI header text. Keys are case-insensitive; `byte order` defaults
/// to little-endian and `header offset` to 0.
pub fn parse_header(text: &str) -> Result<EnviHeader, EnviError> {
    let entries = tokenize(text)?;
    let lookup = |name: &str| entries.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str());
    let required = |name: &str| lookup(name).ok_or_else(|| EnviError::MissingKey(name.to_string()));

    let samples = parse_positive("samples", required("samples")?)?;
    let lines = parse_positive("lines", required("lines")?)?;
    let bands = parse_positive("bands", required("bands")?)?;
    let code = required("data type")?
        .trim()
        .parse::<i64>()
        .map_err(|e| EnviError::malformed("data type", e.to_string()))?;
    let data_type = DataType::from_code(code)?;
    let interleave = required("interleave")?
        .parse::<Interleave>()
        .map_err(|e| EnviError::malformed("interleave", e))?;

    let byte_order = match lookup("byte order").map(str::trim) {
        None | Some("0") => ByteOrder::Little,
        Some("1") => ByteOrder::Big,
        Some(other) => return Err(EnviError::malformed("byte order", format!("`{other}` is not 0 or 1"))),
    };
    let header_offset = match lookup("header offset") {
        None => 0,
        Some(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|e| EnviError::malformed("header offset", e.to_string()))?,
    };
    let wavelength = match lookup("wavelength") {
        None => None,
        Some(v) => {
            let wl = parse_brace_list("wavelength", v)?;
            if wl.len() != bands {
                return Err(EnviError::malformed(
                    "wavelength",
                    format!("{} values for {} bands", wl.len(), bands),
                ));
            }
            Some(wl)
        }
    };
    let data_ignore_value = match lookup("data ignore value") {
        None => None,
        Some(v) => Some(
            v.trim()
                .parse::<f64>()
                .map_err(|e| EnviError::malformed("data ignore value", e.to_string()))?,
        ),
    };
    let wavelength_units = lookup("wavelength units").map(|v| v.trim().to_string());

    let extra = entries
        .iter()
        .filter(|(k, _)| !KNOWN_KEYS.contains(&k.as_str()))
        .cloned()
        .collect();

    Ok(EnviHeader {
        samples,
        lines,
        bands,
        data_type,
        interleave,
        byte_order,
        header_offset,
        wavelength,
        wavelength_units,
        data_ignore_value,
        extra,
    })
}

/// Position of element `(band, line, sample)` in the on-disk element stream.
#[inline]
fn file_index(il: Interleave, samples: usize, lines: usize, bands: usize, b: usize, l: usize, s: usize) -> usize {
    match il {
        Interleave::Bsq => (b * lines + l) * samples + s,
        Interleave::Bil => (l * bands + b) * samples + s,
        Interleave::Bip => (l * samples + s) * bands + b,
    }
}

fn decode_value(dt: DataType, order: ByteOrder, bytes: &[u8]) -> f64 {
    macro_rules! conv {
        ($t:ty, $n:expr) => {{
            let arr: [u8; $n] = bytes.try_into().expect("slice length matches element size");
            match order {
                ByteOrder::Little => <$t>::from_le_bytes(arr) as f64,
                ByteOrder::Big => <$t>::from_be_bytes(arr) as f64,
            }
        }};
    }
    match dt {
        DataType::U8 => bytes[0] as f64,
        DataType::I16 => conv!(i16, 2),
        DataType::U16 => conv!(u16, 2),
        DataType::F32 => conv!(f32, 4),
        DataType::F64 => conv!(f64, 8),
    }
}

/// Decodes a raw payload into a band-sequential cube.
///
/// NaN cells are accepted only when the header declares `data ignore value = NaN`.
pub fn read_cube(header: &EnviHeader, raw: &[u8]) -> Result<HyperCube, EnviError> {
    let expected = header.payload_len();
    if raw.len() < expected {
        return Err(EnviError::TruncatedPayload {
            expected,
            actual: raw.len(),
        });
    }
    let (samples, lines, bands) = (header.samples, header.lines, header.bands);
    let size = header.data_type.size();
    let payload = &raw[header.header_offset..expected];
    let mut data = vec![0.0; header.element_count()];
    for b in 0..bands {
        for l in 0..lines {
            for s in 0..samples {
                let k = file_index(header.interleave, samples, lines, bands, b, l, s) * size;
                data[(b * lines + l) * samples + s] =
                    decode_value(header.data_type, header.byte_order, &payload[k..k + size]);
            }
        }
    }
    let wavelengths = header.wavelengths_nm();
    let cube = if header.no_data_is_nan() {
        HyperCube::new_allow_nan(samples, lines, bands, wavelengths, data)?
    } else {
        HyperCube::new(samples, lines, bands, wavelengths, data)?
    };
    Ok(cube)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WriteOptions {
    pub interleave: Interleave,
    pub data_type: DataType,
    pub byte_order: ByteOrder,
    /// Round and clamp values that do not fit `data_type` instead of failing.
    /// NaN becomes 0 for integer types.
    pub quantize: bool,
    pub data_ignore_value: Option<f64>,
}

impl WriteOptions {
    pub fn new(interleave: Interleave, data_type: DataType) -> Self {
        Self {
            interleave,
            data_type,
            byte_order: ByteOrder::Little,
            quantize: false,
            data_ignore_value: None,
        }
    }
}

fn narrow(value: f64, dt: DataType, quantize: bool) -> Result<f64, EnviError> {
    let lossy = || EnviError::LossyNarrowing { value, data_type: dt };
    match dt {
        DataType::F64 => Ok(value),
        DataType::F32 => {
            let narrowed = value as f32 as f64;
            if narrowed == value || value.is_nan() || quantize {
                Ok(narrowed)
            } else {
                Err(lossy())
            }
        }
        _ => {
            let (lo, hi) = dt.int_range().expect("integer type");
            if value.is_finite() && value.fract() == 0.0 && value >= lo && value <= hi {
                Ok(value)
            } else if quantize {
                Ok(if value.is_nan() {
                    0.0
                } else {
                    value.round().clamp(lo, hi)
                })
            } else {
                Err(lossy())
            }
        }
    }
}

fn encode_value(value: f64, dt: DataType, order: ByteOrder, out: &mut Vec<u8>) {
    macro_rules! put {
        ($v:expr) => {
            match order {
                ByteOrder::Little => out.extend_from_slice(&$v.to_le_bytes()),
                ByteOrder::Big => out.extend_from_slice(&$v.to_be_bytes()),
            }
        };
    }
    match dt {
        DataType::U8 => out.push(value as u8),
        DataType::I16 => put!(value as i16),
        DataType::U16 => put!(value as u16),
        DataType::F32 => put!(value as f32),
        DataType::F64 => put!(value),
    }
}

/// Header describing `cube` as it would be written with `opts`.
pub fn header_for(cube: &HyperCube, opts: &WriteOptions) -> EnviHeader {
    let mut header = EnviHeader::new(
        cube.samples(),
        cube.lines(),
        cube.bands(),
        opts.data_type,
        opts.interleave,
    );
    header.byte_order = opts.byte_order;
    header.data_ignore_value = opts.data_ignore_value;
    if header.data_ignore_value.is_none() && opts.data_type.is_float() && cube.data().iter().any(|v| v.is_nan()) {
        header.data_ignore_value = Some(f64::NAN);
    }
    if let Some(wl) = cube.wavelengths() {
        header.wavelength = Some(wl.to_vec());
        header.wavelength_units = Some("Nanometers".to_string());
    }
    header
}

/// Serializes the payload of `cube` in the layout described by `header`.
pub fn encode_payload(cube: &HyperCube, header: &EnviHeader, quantize: bool) -> Result<Vec<u8>, EnviError> {
    let (samples, lines, bands) = (cube.samples(), cube.lines(), cube.bands());
    let dt = header.data_type;
    let mut out = Vec::with_capacity(header.payload_len());
    out.resize(header.header_offset, 0);
    let mut emit = |b: usize, l: usize, s: usize| -> Result<(), EnviError> {
        let v = narrow(cube.get(b, l, s), dt, quantize)?;
        encode_value(v, dt, header.byte_order, &mut out);
        Ok(())
    };
    match header.interleave {
        Interleave::Bsq => {
            for b in 0..bands {
                for l in 0..lines {
                    for s in 0..samples {
                        emit(b, l, s)?;
                    }
                }
            }
        }
        Interleave::Bil => {
            for l in 0..lines {
                for b in 0..bands {
                    for s in 0..samples {
                        emit(b, l, s)?;
                    }
                }
            }
        }
        Interleave::Bip => {
            for l in 0..lines {
                for s in 0..samples {
                    for b in 0..bands {
                        emit(b, l, s)?;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Serializes a cube into header text and payload bytes.
pub fn write_cube(cube: &HyperCube, opts: &WriteOptions) -> Result<(String, Vec<u8>), EnviError> {
    let header = header_for(cube, opts);
    let payload = encode_payload(cube, &header, opts.quantize)?;
    Ok((header.to_string(), payload))
}

const PAYLOAD_EXTENSIONS: [&str; 6] = ["img", "raw", "dat", "bsq", "bil", "bip"];

/// Finds the binary payload belonging to a `.hdr` file: same stem with one of
/// the usual extensions, or the bare stem.
pub fn locate_payload(header_path: &Path) -> Result<PathBuf, EnviError> {
    let stem = header_path.with_extension("");
    PAYLOAD_EXTENSIONS
        .iter()
        .map(|ext| header_path.with_extension(ext))
        .chain(std::iter::once(stem))
        .find(|p| p.is_file() && p != header_path)
        .ok_or_else(|| EnviError::PayloadNotFound(header_path.to_path_buf()))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EnviError + '_ {
    move |source| EnviError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads a cube from a `.hdr` path and its neighbouring payload.
pub fn read_envi(header_path: &Path) -> Result<HyperCube, EnviError> {
    let text = fs::read_to_string(header_path).map_err(io_err(header_path))?;
    let header = parse_header(&text)?;
    let payload_path = locate_payload(header_path)?;
    let raw = fs::read(&payload_path).map_err(io_err(&payload_path))?;
    read_cube(&header, &raw)
}

/// Writes `<path>.hdr` and `<path>.img`; returns both paths.
pub fn write_envi(path: &Path, cube: &HyperCube, opts: &WriteOptions) -> Result<(PathBuf, PathBuf), EnviError> {
    let (header, payload) = write_cube(cube, opts)?;
    let hdr = path.with_extension("hdr");
    let img = path.with_extension("img");
    fs::write(&hdr, header).map_err(io_err(&hdr))?;
    fs::write(&img, payload).map_err(io_err(&img))?;
    Ok((hdr, img))
}
