//! File formats: quadrature records and covariance matrices.
//!
//! Binary records are little-endian:
//!
//! | offset | type    | field                         |
//! |--------|---------|-------------------------------|
//! | 0      | `[u8;4]`| magic `TWPA`                  |
//! | 4      | `u32`   | format version (1)            |
//! | 8      | `u32`   | channel count `C`             |
//! | 12     | `f64`   | sample rate, Hz               |
//! | 20     | `u8`    | pump state, 1 = ON, 0 = OFF   |
//! | 21     | `f64`…  | frames of `I₀ Q₀ … I_{C−1} Q_{C−1}` |
//!
//! The CSV variant starts with a metadata comment line
//! `# kerrfree-records v1 sample_rate_hz=<f64> pump_state=<ON|OFF>`,
//! then a header `<label>_i,<label>_q,…` and one frame per row.
//!
//! Covariance matrices are JSON objects `{"n_modes": N, "data": [...]}` with
//! `data` row-major, or CSV with `2N` rows of `2N` values and no header.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::gaussian::CovarianceMatrix;
use crate::stats::{CovarianceAccumulator, MomentAccumulator};

pub const RECORD_MAGIC: &[u8; 4] = b"TWPA";
pub const RECORD_VERSION: u32 = 1;
pub const RECORD_HEADER_LEN: usize = 21;
const CSV_TAG: &str = "kerrfree-records v1";
const READ_FRAMES: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PumpState {
    On,
    Off,
}

impl PumpState {
    fn code(self) -> u8 {
        match self {
            PumpState::On => 1,
            PumpState::Off => 0,
        }
    }

    fn from_code(b: u8) -> Result<Self> {
        match b {
            1 => Ok(PumpState::On),
            0 => Ok(PumpState::Off),
            other => Err(Error::Format(format!("unknown pump state byte {other}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PumpState::On => "ON",
            PumpState::Off => "OFF",
        }
    }
}

/// Metadata shared by every channel of a record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub labels: Vec<String>,
    pub sample_rate: f64,
    pub pump_state: PumpState,
}

impl RecordHeader {
    pub fn new(n_channels: usize, sample_rate: f64, pump_state: PumpState) -> Self {
        Self {
            labels: (0..n_channels).map(|k| format!("ch{k}")).collect(),
            sample_rate,
            pump_state,
        }
    }

    pub fn n_channels(&self) -> usize {
        self.labels.len()
    }

    /// Values per frame, `2C`.
    pub fn frame_len(&self) -> usize {
        2 * self.labels.len()
    }
}

/// One channel's demodulated `(I, Q)` voltages.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRecord {
    pub label: String,
    pub samples: Vec<[f64; 2]>,
    pub sample_rate: f64,
    pub pump_state: PumpState,
}

impl QuadratureRecord {
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(invalid_arg(format!("record {} is empty", self.label)));
        }
        if self.samples.iter().flatten().any(|x| !x.is_finite()) {
            return Err(invalid_arg(format!("record {} has non-finite samples", self.label)));
        }
        Ok(())
    }
}

/// Multichannel record held in memory as interleaved frames.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSet {
    pub header: RecordHeader,
    /// Frame-major: `I₀ Q₀ I₁ Q₁ …` for each time step.
    pub frames: Vec<f64>,
}

impl RecordSet {
    pub fn n_frames(&self) -> usize {
        self.frames.len() / self.header.frame_len()
    }

    pub fn channel(&self, k: usize) -> QuadratureRecord {
        let f = self.header.frame_len();
        QuadratureRecord {
            label: self.header.labels[k].clone(),
            samples: self
                .frames
                .chunks_exact(f)
                .map(|fr| [fr[2 * k], fr[2 * k + 1]])
                .collect(),
            sample_rate: self.header.sample_rate,
            pump_state: self.header.pump_state,
        }
    }

    pub fn statistics(&self) -> RecordStatistics {
        let mut s = RecordStatistics::new(self.header.clone());
        s.extend(&self.frames);
        s
    }
}

/// Streaming summary of a record: joint covariance and per-quadrature moments.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordStatistics {
    pub header: RecordHeader,
    pub covariance: CovarianceAccumulator,
    pub moments: Vec<MomentAccumulator>,
}

impl RecordStatistics {
    pub fn new(header: RecordHeader) -> Self {
        let d = header.frame_len();
        Self {
            header,
            covariance: CovarianceAccumulator::new(d),
            moments: vec![MomentAccumulator::new(); d],
        }
    }

    pub fn extend(&mut self, frames: &[f64]) {
        let d = self.header.frame_len();
        for frame in frames.chunks_exact(d) {
            self.covariance.push(frame);
            for (m, &x) in self.moments.iter_mut().zip(frame) {
                m.push(x);
            }
        }
    }

    pub fn merge(&mut self, other: &RecordStatistics) {
        self.covariance.merge(&other.covariance);
        for (a, b) in self.moments.iter_mut().zip(&other.moments) {
            a.merge(b);
        }
    }

    pub fn count(&self) -> u64 {
        self.covariance.count()
    }
}

fn write_binary_header(w: &mut impl Write, header: &RecordHeader) -> Result<()> {
    w.write_all(RECORD_MAGIC)?;
    w.write_all(&RECORD_VERSION.to_le_bytes())?;
    w.write_all(&(header.n_channels() as u32).to_le_bytes())?;
    w.write_all(&header.sample_rate.to_le_bytes())?;
    w.write_all(&[header.pump_state.code()])?;
    Ok(())
}

fn read_binary_header(r: &mut impl Read) -> Result<RecordHeader> {
    let mut buf = [0u8; RECORD_HEADER_LEN];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("record file shorter than its header".into()))?;
    if &buf[0..4] != RECORD_MAGIC {
        return Err(Error::Format("bad magic; not a TWPA record file".into()));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != RECORD_VERSION {
        return Err(Error::Format(format!("unsupported record version {version}")));
    }
    let channels = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    if channels == 0 || 2 * channels > crate::stats::MAX_DIM {
        return Err(Error::Format(format!("unsupported channel count {channels}")));
    }
    let sample_rate = f64::from_le_bytes(buf[12..20].try_into().unwrap());
    let pump_state = PumpState::from_code(buf[20])?;
    Ok(RecordHeader::new(channels, sample_rate, pump_state))
}

/// Writes frames to a binary record file as they are produced.
pub struct BinaryRecordWriter {
    inner: BufWriter<File>,
    frame_len: usize,
}

impl BinaryRecordWriter {
    pub fn create(path: &Path, header: &RecordHeader) -> Result<Self> {
        let mut inner = BufWriter::new(File::create(path)?);
        write_binary_header(&mut inner, header)?;
        Ok(Self {
            inner,
            frame_len: header.frame_len(),
        })
    }

    pub fn write_frames(&mut self, frames: &[f64]) -> Result<()> {
        if !frames.len().is_multiple_of(self.frame_len) {
            return Err(invalid_arg("partial frame"));
        }
        for x in frames {
            self.inner.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_binary_records(path: &Path, records: &RecordSet) -> Result<()> {
    let mut w = BinaryRecordWriter::create(path, &records.header)?;
    w.write_frames(&records.frames)?;
    w.finish()
}

/// Chunked reader over a binary record file.
pub struct BinaryRecordReader {
    inner: BufReader<File>,
    header: RecordHeader,
    bytes: Vec<u8>,
    values: Vec<f64>,
    done: bool,
}

impl BinaryRecordReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut inner = BufReader::new(File::open(path)?);
        let header = read_binary_header(&mut inner)?;
        let frame_bytes = header.frame_len() * 8;
        Ok(Self {
            inner,
            bytes: vec![0u8; frame_bytes * READ_FRAMES],
            values: Vec::with_capacity(header.frame_len() * READ_FRAMES),
            header,
            done: false,
        })
    }

    pub fn header(&self) -> &RecordHeader {
        &self.header
    }

    /// Next block of whole frames, or `None` at end of file.
    pub fn next_chunk(&mut self) -> Result<Option<&[f64]>> {
        if self.done {
            return Ok(None);
        }
        let frame_bytes = self.header.frame_len() * 8;
        let mut filled = 0;
        while filled < self.bytes.len() {
            let k = self.inner.read(&mut self.bytes[filled..])?;
            if k == 0 {
                self.done = true;
                break;
            }
            filled += k;
        }
        if filled % frame_bytes != 0 {
            return Err(Error::Format("record file ends with a partial frame".into()));
        }
        if filled == 0 {
            return Ok(None);
        }
        self.values.clear();
        self.values.extend(
            self.bytes[..filled]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap())),
        );
        if self.values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format("record contains non-finite samples".into()));
        }
        Ok(Some(&self.values))
    }
}

/// Feeds each block of frames of a binary record file to `sink`.
pub fn stream_binary_records(path: &Path, mut sink: impl FnMut(&RecordHeader, &[f64])) -> Result<RecordHeader> {
    let mut r = BinaryRecordReader::open(path)?;
    let header = r.header().clone();
    while let Some(chunk) = r.next_chunk()? {
        sink(&header, chunk);
    }
    Ok(header)
}

pub fn read_binary_records(path: &Path) -> Result<RecordSet> {
    let mut frames = Vec::new();
    let header = stream_binary_records(path, |_, chunk| frames.extend_from_slice(chunk))?;
    Ok(RecordSet { header, frames })
}

pub fn write_csv_records(path: &Path, records: &RecordSet) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(
        file,
        "# {CSV_TAG} sample_rate_hz={} pump_state={}",
        records.header.sample_rate,
        records.header.pump_state.as_str()
    )?;
    let mut w = csv::Writer::from_writer(file);
    let names: Vec<String> = records
        .header
        .labels
        .iter()
        .flat_map(|l| [format!("{l}_i"), format!("{l}_q")])
        .collect();
    w.write_record(&names)?;
    for frame in records.frames.chunks_exact(records.header.frame_len()) {
        w.write_record(frame.iter().map(|x| format!("{x:e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv_records(path: &Path) -> Result<RecordSet> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let meta = first
        .trim()
        .strip_prefix('#')
        .map(str::trim)
        .and_then(|s| s.strip_prefix(CSV_TAG))
        .ok_or_else(|| Error::Format("missing record CSV metadata line".into()))?;
    let mut sample_rate = None;
    let mut pump_state = None;
    for kv in meta.split_whitespace() {
        match kv.split_once('=') {
            Some(("sample_rate_hz", v)) => {
                sample_rate = Some(v.parse::<f64>().map_err(|e| Error::Format(e.to_string()))?)
            }
            Some(("pump_state", "ON")) => pump_state = Some(PumpState::On),
            Some(("pump_state", "OFF")) => pump_state = Some(PumpState::Off),
            _ => return Err(Error::Format(format!("unknown metadata entry {kv}"))),
        }
    }
    let (sample_rate, pump_state) = sample_rate
        .zip(pump_state)
        .ok_or_else(|| Error::Format("metadata needs sample_rate_hz and pump_state".into()))?;

    let mut rdr = csv::Reader::from_reader(reader);
    let names = rdr.headers()?.clone();
    if names.is_empty() || names.len() % 2 != 0 || names.len() > crate::stats::MAX_DIM {
        return Err(Error::Format(format!("unsupported column count {}", names.len())));
    }
    let mut labels = Vec::new();
    for pair in names.iter().collect::<Vec<_>>().chunks(2) {
        let (i, q) = (pair[0], pair[1]);
        match (i.strip_suffix("_i"), q.strip_suffix("_q")) {
            (Some(a), Some(b)) if a == b => labels.push(a.to_string()),
            _ => return Err(Error::Format(format!("columns {i},{q} are not an _i/_q pair"))),
        }
    }
    let mut frames = Vec::new();
    for row in rdr.records() {
        let row = row?;
        for field in row.iter() {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|e| Error::Format(format!("bad sample {field:?}: {e}")))?;
            if !x.is_finite() {
                return Err(Error::Format("record contains non-finite samples".into()));
            }
            frames.push(x);
        }
    }
    Ok(RecordSet {
        header: RecordHeader {
            labels,
            sample_rate,
            pump_state,
        },
        frames,
    })
}

/// Record statistics from either format, chosen by extension (`.csv` or binary).
pub fn record_statistics(path: &Path) -> Result<RecordStatistics> {
    if is_csv(path) {
        return Ok(read_csv_records(path)?.statistics());
    }
    let mut r = BinaryRecordReader::open(path)?;
    let mut s = RecordStatistics::new(r.header().clone());
    while let Some(chunk) = r.next_chunk()? {
        s.extend(chunk);
    }
    Ok(s)
}

pub fn read_records(path: &Path) -> Result<RecordSet> {
    if is_csv(path) {
        read_csv_records(path)
    } else {
        read_binary_records(path)
    }
}

pub fn write_records(path: &Path, records: &RecordSet) -> Result<()> {
    if is_csv(path) {
        write_csv_records(path, records)
    } else {
        write_binary_records(path, records)
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// JSON form of a covariance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceJson {
    pub n_modes: usize,
    /// Row-major `(2N)²` entries.
    pub data: Vec<f64>,
}

impl From<&CovarianceMatrix> for CovarianceJson {
    fn from(v: &CovarianceMatrix) -> Self {
        Self {
            n_modes: v.n_modes(),
            data: v.to_row_major(),
        }
    }
}

impl TryFrom<CovarianceJson> for CovarianceMatrix {
    type Error = Error;

    fn try_from(j: CovarianceJson) -> Result<Self> {
        CovarianceMatrix::from_row_major(j.n_modes, &j.data)
    }
}

impl Serialize for CovarianceMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CovarianceJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for CovarianceMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = CovarianceJson::deserialize(d)?;
        CovarianceMatrix::try_from(j).map_err(serde::de::Error::custom)
    }
}

pub fn covariance_to_json(v: &CovarianceMatrix) -> Result<String> {
    Ok(serde_json::to_string_pretty(&CovarianceJson::from(v))?)
}

pub fn covariance_from_json(text: &str) -> Result<CovarianceMatrix> {
    let j: CovarianceJson = serde_json::from_str(text)?;
    j.try_into()
}

pub fn covariance_to_csv(v: &CovarianceMatrix) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for i in 0..v.dim() {
        w.write_record((0..v.dim()).map(|j| format!("{:e}", v.get(i, j))))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

pub fn covariance_from_csv(text: &str) -> Result<CovarianceMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut rows = 0;
    for row in rdr.records() {
        let row = row?;
        for f in row.iter() {
            values.push(
                f.parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad entry {f:?}: {e}")))?,
            );
        }
        rows += 1;
    }
    if rows == 0 || rows % 2 != 0 || values.len() != rows * rows {
        return Err(Error::Format(format!(
            "covariance CSV must be 2N x 2N, got {rows} rows and {} values",
            values.len()
        )));
    }
    CovarianceMatrix::from_row_major(rows / 2, &values)
}
