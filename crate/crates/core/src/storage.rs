//! On-disk artifacts: binary sweep recordings, text waveform and calibration
//! specs, JSON scenes/codebooks/ground truth and CSV result tables.
//!
//! Recording layout (little-endian): magic `SNDR`, u16 version, header
//! block, then per capture `u32 snapshot, u32 pair, f64 timestamp_s,
//! f32 gain_db, u32 sample count, f32 I/Q pairs`, then a CRC32 over all
//! preceding bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Read, Seek, SeekFrom, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use crc32fast::Hasher;
use num_complex::{Complex32, Complex64};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beamforming::{ArrayGeometry, Beam, BeamCodebook, PatternGrid};
use crate::calibration::{CalibrationResponse, CalibrationSource};
use crate::error::{Error, Result};
use crate::scene::PropagationScene;
use crate::sounder::{
    Capture, ClockMode, ClockModel, GroundTruthLog, ReceiverConfig, RecordingHeader, SweepRecording, SweepSchedule,
};
use crate::waveform::{MultitoneSpec, ToneGrid};

pub const RECORDING_MAGIC: [u8; 4] = *b"SNDR";
pub const RECORDING_VERSION: u16 = 1;
/// Schema version of the text and JSON artifacts.
pub const SCHEMA_VERSION: u32 = 1;

/// First 8 bytes of the SHA-256 digest, little-endian.
pub fn content_hash(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

fn json_hash<T: Serialize>(value: &T) -> u64 {
    content_hash(&serde_json::to_vec(value).expect("artifact serializes"))
}

pub fn scene_hash(scene: &PropagationScene) -> u64 {
    json_hash(scene)
}

pub fn codebook_hash(codebook: &BeamCodebook) -> u64 {
    json_hash(&CodebookFile::from(codebook))
}

// ---------------------------------------------------------------- recording

fn write_header<W: Write>(w: &mut W, h: &RecordingHeader) -> std::io::Result<()> {
    w.write_all(&RECORDING_MAGIC)?;
    w.write_u16::<LE>(h.version)?;
    w.write_f64::<LE>(h.carrier_hz)?;
    w.write_f64::<LE>(h.epoch_utc_s)?;

    let wf = &h.waveform;
    w.write_u32::<LE>(wf.num_tones as u32)?;
    w.write_f64::<LE>(wf.tone_spacing_hz)?;
    w.write_f64::<LE>(wf.first_tone_hz)?;
    w.write_f64::<LE>(wf.sample_rate_hz)?;
    for p in &wf.phases_rad {
        w.write_f64::<LE>(*p)?;
    }

    let s = &h.schedule;
    for beams in [&s.tx_beams, &s.rx_beams] {
        w.write_u32::<LE>(beams.len() as u32)?;
        for b in beams {
            w.write_u32::<LE>(*b as u32)?;
        }
    }
    w.write_f64::<LE>(s.waveform_duration_s)?;
    w.write_f64::<LE>(s.guard_s)?;
    w.write_u32::<LE>(s.repetitions_per_pair as u32)?;
    w.write_u32::<LE>(s.snapshots_per_burst as u32)?;
    w.write_f64::<LE>(s.burst_period_s)?;
    w.write_u32::<LE>(s.num_bursts as u32)?;
    w.write_f64::<LE>(s.start_time_s)?;
    for az in h.tx_beam_azimuths_deg.iter().chain(&h.rx_beam_azimuths_deg) {
        w.write_f64::<LE>(*az)?;
    }

    w.write_u64::<LE>(h.tx_codebook_hash)?;
    w.write_u64::<LE>(h.rx_codebook_hash)?;
    w.write_u64::<LE>(h.scene_hash)?;

    let c = &h.clock;
    w.write_u8(c.mode.code())?;
    w.write_f64::<LE>(c.fractional_offset)?;
    w.write_f64::<LE>(c.phase_noise_std_deg)?;
    w.write_f64::<LE>(c.random_walk_deg_per_sqrt_s)?;
    w.write_f64::<LE>(c.lo_phase_deg)?;
    w.write_u64::<LE>(c.seed)?;

    let r = &h.receiver;
    w.write_f64::<LE>(r.noise_figure_db)?;
    w.write_f64::<LE>(r.bandwidth_hz)?;
    w.write_u32::<LE>(r.adc_bits)?;
    w.write_f64::<LE>(r.agc_range_db)?;
    w.write_f64::<LE>(r.agc_step_db)?;
    w.write_f64::<LE>(r.saturation_dbm)?;
    w.write_u32::<LE>(r.awg_bits)?;
    w.write_f64::<LE>(r.agc_backoff_db)?;

    w.write_u64::<LE>(h.seed)?;
    w.write_u32::<LE>(h.snapshot_count)?;
    w.write_u32::<LE>(h.capture_count)?;
    w.write_u32::<LE>(h.clipped_captures)?;
    Ok(())
}

fn header_bytes(h: &RecordingHeader) -> Vec<u8> {
    let mut buf = Vec::new();
    write_header(&mut buf, h).expect("writing to a Vec cannot fail");
    buf
}

fn capture_bytes(c: &Capture) -> Vec<u8> {
    let mut buf = Vec::with_capacity(24 + 8 * c.samples.len());
    buf.write_u32::<LE>(c.snapshot).unwrap();
    buf.write_u32::<LE>(c.pair).unwrap();
    buf.write_f64::<LE>(c.timestamp_s).unwrap();
    buf.write_f32::<LE>(c.gain_db).unwrap();
    buf.write_u32::<LE>(c.samples.len() as u32).unwrap();
    for s in &c.samples {
        buf.write_f32::<LE>(s.re).unwrap();
        buf.write_f32::<LE>(s.im).unwrap();
    }
    buf
}

/// Streams captures into a seekable sink; the header counts are patched and
/// the checksum appended on [`finish`](Self::finish).
pub struct RecordingWriter<W: Write + Seek> {
    sink: W,
    header: RecordingHeader,
    start: u64,
    body_crc: Hasher,
}

impl<W: Write + Seek> RecordingWriter<W> {
    pub fn new(mut sink: W, mut header: RecordingHeader) -> Result<Self> {
        header.snapshot_count = 0;
        header.capture_count = 0;
        let start = sink.stream_position()?;
        sink.write_all(&header_bytes(&header))?;
        Ok(Self {
            sink,
            header,
            start,
            body_crc: Hasher::new(),
        })
    }

    pub fn append(&mut self, capture: &Capture) -> Result<()> {
        let bytes = capture_bytes(capture);
        self.body_crc.update(&bytes);
        self.sink.write_all(&bytes)?;
        self.header.capture_count += 1;
        self.header.snapshot_count = self.header.snapshot_count.max(capture.snapshot + 1);
        Ok(())
    }

    pub fn captures_written(&self) -> u32 {
        self.header.capture_count
    }

    /// Sets the clipped-capture count reported in the header.
    pub fn set_clipped_captures(&mut self, clipped: u32) {
        self.header.clipped_captures = clipped;
    }

    pub fn finish(mut self) -> Result<W> {
        let head = header_bytes(&self.header);
        let mut crc = Hasher::new();
        crc.update(&head);
        crc.combine(&self.body_crc);
        let end = self.sink.stream_position()?;
        self.sink.seek(SeekFrom::Start(self.start))?;
        self.sink.write_all(&head)?;
        self.sink.seek(SeekFrom::Start(end))?;
        self.sink.write_u32::<LE>(crc.finalize())?;
        self.sink.flush()?;
        Ok(self.sink)
    }
}

pub fn encode_recording(rec: &SweepRecording) -> Result<Vec<u8>> {
    let mut writer = RecordingWriter::new(Cursor::new(Vec::new()), rec.header.clone())?;
    for c in &rec.captures {
        writer.append(c)?;
    }
    writer.set_clipped_captures(rec.header.clipped_captures);
    Ok(writer.finish()?.into_inner())
}

pub fn write_recording(rec: &SweepRecording, path: &Path) -> Result<()> {
    let mut writer = RecordingWriter::new(BufWriter::new(File::create(path)?), rec.header.clone())?;
    for c in &rec.captures {
        writer.append(c)?;
    }
    writer.set_clipped_captures(rec.header.clipped_captures);
    writer.finish()?.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(())
}

/// Reader over a byte slice that names the section being parsed when it
/// runs out of data.
struct Parser<'a> {
    cur: Cursor<&'a [u8]>,
    section: String,
}

macro_rules! read_fn {
    ($name:ident, $t:ty, $call:ident) => {
        fn $name(&mut self) -> Result<$t> {
            self.cur.$call::<LE>().map_err(|_| self.truncated())
        }
    };
}

impl<'a> Parser<'a> {
    fn truncated(&self) -> Error {
        Error::Truncated {
            section: self.section.clone(),
        }
    }

    fn remaining(&self) -> usize {
        self.cur.get_ref().len() - self.cur.position() as usize
    }

    read_fn!(u16, u16, read_u16);
    read_fn!(u32, u32, read_u32);
    read_fn!(u64, u64, read_u64);
    read_fn!(f32, f32, read_f32);
    read_fn!(f64, f64, read_f64);

    fn u8(&mut self) -> Result<u8> {
        self.cur.read_u8().map_err(|_| self.truncated())
    }

    /// Length prefix checked against the bytes left, `elem` bytes each.
    fn len(&mut self, elem: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(elem) > self.remaining() {
            return Err(self.truncated());
        }
        Ok(n)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

fn parse_header(p: &mut Parser) -> Result<RecordingHeader> {
    p.section = "header".into();
    let carrier_hz = p.f64()?;
    let epoch_utc_s = p.f64()?;
    let num_tones = p.len(8)?;
    let tone_spacing_hz = p.f64()?;
    let first_tone_hz = p.f64()?;
    let sample_rate_hz = p.f64()?;
    let phases_rad = p.f64s(num_tones)?;
    let waveform = MultitoneSpec {
        num_tones,
        tone_spacing_hz,
        first_tone_hz,
        sample_rate_hz,
        phases_rad,
    };
    let beams = |p: &mut Parser| -> Result<Vec<usize>> {
        let n = p.len(4)?;
        (0..n).map(|_| p.u32().map(|v| v as usize)).collect()
    };
    let tx_beams = beams(p)?;
    let rx_beams = beams(p)?;
    let schedule = SweepSchedule {
        waveform_duration_s: p.f64()?,
        guard_s: p.f64()?,
        repetitions_per_pair: p.u32()? as usize,
        snapshots_per_burst: p.u32()? as usize,
        burst_period_s: p.f64()?,
        num_bursts: p.u32()? as usize,
        start_time_s: p.f64()?,
        tx_beams,
        rx_beams,
    };
    let tx_beam_azimuths_deg = p.f64s(schedule.tx_beams.len())?;
    let rx_beam_azimuths_deg = p.f64s(schedule.rx_beams.len())?;
    let tx_codebook_hash = p.u64()?;
    let rx_codebook_hash = p.u64()?;
    let scene_hash = p.u64()?;
    let code = p.u8()?;
    let mode = ClockMode::from_code(code).ok_or_else(|| Error::format("recording", format!("unknown clock mode {code}")))?;
    let clock = ClockModel {
        mode,
        fractional_offset: p.f64()?,
        phase_noise_std_deg: p.f64()?,
        random_walk_deg_per_sqrt_s: p.f64()?,
        lo_phase_deg: p.f64()?,
        seed: p.u64()?,
    };
    let receiver = ReceiverConfig {
        noise_figure_db: p.f64()?,
        bandwidth_hz: p.f64()?,
        adc_bits: p.u32()?,
        agc_range_db: p.f64()?,
        agc_step_db: p.f64()?,
        saturation_dbm: p.f64()?,
        awg_bits: p.u32()?,
        agc_backoff_db: p.f64()?,
    };
    Ok(RecordingHeader {
        version: RECORDING_VERSION,
        carrier_hz,
        epoch_utc_s,
        waveform,
        schedule,
        tx_beam_azimuths_deg,
        rx_beam_azimuths_deg,
        tx_codebook_hash,
        rx_codebook_hash,
        scene_hash,
        clock,
        receiver,
        seed: p.u64()?,
        snapshot_count: p.u32()?,
        capture_count: p.u32()?,
        clipped_captures: p.u32()?,
    })
}

/// Parses and validates a recording held in memory.
pub fn decode_recording(bytes: &[u8]) -> Result<SweepRecording> {
    if bytes.len() < 4 {
        return Err(Error::Truncated { section: "magic".into() });
    }
    let found: [u8; 4] = bytes[..4].try_into().expect("length checked");
    if found != RECORDING_MAGIC {
        return Err(Error::BadMagic { found });
    }
    let mut p = Parser {
        cur: Cursor::new(bytes),
        section: "version".into(),
    };
    p.cur.set_position(4);
    let version = p.u16()?;
    if version != RECORDING_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: RECORDING_VERSION,
        });
    }
    let header = parse_header(&mut p)?;
    // a capture occupies at least 28 bytes, which bounds a corrupted count
    let mut captures = Vec::with_capacity((header.capture_count as usize).min(p.remaining() / 28));
    for k in 0..header.capture_count {
        p.section = format!("capture {k}");
        let snapshot = p.u32()?;
        let pair = p.u32()?;
        let timestamp_s = p.f64()?;
        let gain_db = p.f32()?;
        let n = p.len(8)?;
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            samples.push(Complex32::new(p.f32()?, p.f32()?));
        }
        captures.push(Capture {
            snapshot,
            pair,
            timestamp_s,
            gain_db,
            samples,
        });
    }
    p.section = "checksum".into();
    let body_end = p.cur.position() as usize;
    let stored = p.u32()?;
    if p.remaining() != 0 {
        return Err(Error::format("recording", format!("{} unexpected trailing bytes", p.remaining())));
    }
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    Ok(SweepRecording { header, captures })
}

pub fn read_recording(path: &Path) -> Result<SweepRecording> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_recording(&bytes)
}

/// CRC32 stored in a recording file's trailer.
pub fn recording_checksum(bytes: &[u8]) -> Option<u32> {
    let tail: [u8; 4] = bytes.get(bytes.len().checked_sub(4)?..)?.try_into().ok()?;
    Some(u32::from_le_bytes(tail))
}

// --------------------------------------------------------------- text specs

fn key_values<'a>(text: &'a str, artifact: &'static str, block: &str) -> Result<(Vec<(&'a str, &'a str)>, Vec<&'a str>)> {
    let mut keys = Vec::new();
    let mut lines = text.lines();
    for line in lines.by_ref() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == block {
            return Ok((keys, lines.map(str::trim).filter(|l| !l.is_empty()).collect()));
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(artifact, format!("expected key=value, got '{line}'")))?;
        keys.push((k.trim(), v.trim()));
    }
    Err(Error::format(artifact, format!("missing '{block}' block")))
}

fn lookup<T: std::str::FromStr>(keys: &[(&str, &str)], key: &str, artifact: &'static str) -> Result<T> {
    let raw = keys
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::format(artifact, format!("missing key '{key}'")))?;
    raw.parse()
        .map_err(|_| Error::format(artifact, format!("bad value '{raw}' for '{key}'")))
}

fn check_schema(keys: &[(&str, &str)], artifact: &'static str) -> Result<()> {
    let v: u32 = lookup(keys, "schema_version", artifact)?;
    if v != SCHEMA_VERSION {
        return Err(Error::format(artifact, format!("unsupported schema_version {v}")));
    }
    Ok(())
}

/// Waveform spec as `key=value` lines followed by one phase per line
/// (radians, 12 significant digits).
pub fn format_waveform_spec(spec: &MultitoneSpec) -> String {
    let mut out = format!(
        "schema_version={SCHEMA_VERSION}\nnum_tones={}\ntone_spacing_hz={}\nfirst_tone_hz={}\nsample_rate_hz={}\nphases_rad:\n",
        spec.num_tones, spec.tone_spacing_hz, spec.first_tone_hz, spec.sample_rate_hz
    );
    for p in &spec.phases_rad {
        out.push_str(&format!("{p:.11e}\n"));
    }
    out
}

pub fn parse_waveform_spec(text: &str) -> Result<MultitoneSpec> {
    const A: &str = "waveform spec";
    let (keys, body) = key_values(text, A, "phases_rad:")?;
    check_schema(&keys, A)?;
    let phases = body
        .iter()
        .map(|l| l.parse::<f64>().map_err(|_| Error::format(A, format!("bad phase '{l}'"))))
        .collect::<Result<Vec<_>>>()?;
    let spec = MultitoneSpec {
        num_tones: lookup(&keys, "num_tones", A)?,
        tone_spacing_hz: lookup(&keys, "tone_spacing_hz", A)?,
        first_tone_hz: lookup(&keys, "first_tone_hz", A)?,
        sample_rate_hz: lookup(&keys, "sample_rate_hz", A)?,
        phases_rad: phases,
    };
    if spec.phases_rad.len() != spec.num_tones {
        return Err(Error::format(A, format!("{} phases for {} tones", spec.phases_rad.len(), spec.num_tones)));
    }
    Ok(spec)
}

pub fn write_waveform_spec(spec: &MultitoneSpec, path: &Path) -> Result<()> {
    std::fs::write(path, format_waveform_spec(spec))?;
    Ok(())
}

pub fn read_waveform_spec(path: &Path) -> Result<MultitoneSpec> {
    parse_waveform_spec(&std::fs::read_to_string(path)?)
}

fn push_response(out: &mut String, values: &[Complex64]) {
    for v in values {
        out.push_str(&format!("{:e} {:e}\n", v.re, v.im));
    }
}

/// Calibration response on the waveform tone grid: `key=value` lines, then
/// `re im` per tone. Per-pair tables follow as further `response:` blocks.
pub fn format_calibration(cal: &CalibrationResponse) -> String {
    let source = match cal.source {
        CalibrationSource::Synthetic => "synthetic",
        CalibrationSource::MeasuredFile => "measured",
    };
    let pairs = cal.per_pair.as_ref().map_or(0, Vec::len);
    let mut out = format!(
        "schema_version={SCHEMA_VERSION}\nnum_tones={}\ntone_spacing_hz={}\nfirst_tone_hz={}\nsource={source}\npair_tables={pairs}\nresponse:\n",
        cal.grid.num_tones, cal.grid.tone_spacing_hz, cal.grid.first_tone_hz
    );
    push_response(&mut out, &cal.response);
    for table in cal.per_pair.iter().flatten() {
        out.push_str("response:\n");
        push_response(&mut out, table);
    }
    out
}

pub fn parse_calibration(text: &str) -> Result<CalibrationResponse> {
    const A: &str = "calibration";
    let (keys, body) = key_values(text, A, "response:")?;
    check_schema(&keys, A)?;
    let grid = ToneGrid {
        num_tones: lookup(&keys, "num_tones", A)?,
        tone_spacing_hz: lookup(&keys, "tone_spacing_hz", A)?,
        first_tone_hz: lookup(&keys, "first_tone_hz", A)?,
    };
    let source = match lookup::<String>(&keys, "source", A)?.as_str() {
        "synthetic" => CalibrationSource::Synthetic,
        "measured" => CalibrationSource::MeasuredFile,
        other => return Err(Error::format(A, format!("unknown source '{other}'"))),
    };
    let pairs: usize = lookup(&keys, "pair_tables", A)?;
    let mut tables = vec![Vec::new()];
    for line in body {
        if line == "response:" {
            tables.push(Vec::new());
            continue;
        }
        let mut parts = line.split_whitespace().map(str::parse::<f64>);
        match (parts.next(), parts.next(), parts.next()) {
            (Some(Ok(re)), Some(Ok(im)), None) => tables.last_mut().expect("non-empty").push(Complex64::new(re, im)),
            _ => return Err(Error::format(A, format!("bad response line '{line}'"))),
        }
    }
    if tables.len() != pairs + 1 {
        return Err(Error::format(A, format!("expected {} response blocks, found {}", pairs + 1, tables.len())));
    }
    let response = tables.remove(0);
    let mut cal = CalibrationResponse::new(grid, response, source)?;
    if pairs > 0 {
        cal.per_pair = Some(tables);
        cal.validate()?;
    }
    Ok(cal)
}

pub fn write_calibration(cal: &CalibrationResponse, path: &Path) -> Result<()> {
    std::fs::write(path, format_calibration(cal))?;
    Ok(())
}

pub fn read_calibration(path: &Path) -> Result<CalibrationResponse> {
    parse_calibration(&std::fs::read_to_string(path)?)
}

// --------------------------------------------------------------------- JSON

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    schema_version: u32,
    #[serde(flatten)]
    body: T,
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(&Versioned {
        schema_version: SCHEMA_VERSION,
        body: value,
    })
    .expect("artifact serializes")
}

fn from_json<T: DeserializeOwned>(text: &str, artifact: &'static str) -> Result<T> {
    let v: Versioned<T> = serde_json::from_str(text).map_err(|e| Error::format(artifact, e.to_string()))?;
    if v.schema_version != SCHEMA_VERSION {
        return Err(Error::format(artifact, format!("unsupported schema_version {}", v.schema_version)));
    }
    Ok(v.body)
}

pub fn scene_to_json(scene: &PropagationScene) -> String {
    to_json(scene)
}

pub fn scene_from_json(text: &str) -> Result<PropagationScene> {
    let scene: PropagationScene = from_json(text, "scene")?;
    scene.validate()?;
    Ok(scene)
}

pub fn write_scene(scene: &PropagationScene, path: &Path) -> Result<()> {
    std::fs::write(path, scene_to_json(scene))?;
    Ok(())
}

pub fn read_scene(path: &Path) -> Result<PropagationScene> {
    scene_from_json(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookBeam {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub phase_steps: Vec<u32>,
}

/// Codebook as stored: geometry, phase step and quantized shifter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookFile {
    pub geometry: ArrayGeometry,
    pub phase_step_deg: f64,
    pub beams: Vec<CodebookBeam>,
}

impl From<&BeamCodebook> for CodebookFile {
    fn from(cb: &BeamCodebook) -> Self {
        Self {
            geometry: cb.geometry.clone(),
            phase_step_deg: cb.phase_step_deg,
            beams: cb
                .beams
                .iter()
                .map(|b| CodebookBeam {
                    azimuth_deg: b.azimuth_deg,
                    elevation_deg: b.elevation_deg,
                    phase_steps: b.phase_steps.clone(),
                })
                .collect(),
        }
    }
}

impl CodebookFile {
    pub fn into_codebook(self) -> Result<BeamCodebook> {
        self.geometry.validate()?;
        let n = self.geometry.num_elements();
        let levels = (360.0 / self.phase_step_deg).round() as u32;
        let beams = self
            .beams
            .into_iter()
            .map(|b| {
                if b.phase_steps.len() != n || b.phase_steps.iter().any(|&s| s >= levels) {
                    return Err(Error::format("codebook", "phase settings do not fit the array"));
                }
                Ok(Beam::from_phase_steps(&self.geometry, b.azimuth_deg, b.elevation_deg, b.phase_steps, self.phase_step_deg))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BeamCodebook::from_beams(self.geometry, self.phase_step_deg, beams, PatternGrid::default()))
    }
}

pub fn codebook_to_json(cb: &BeamCodebook) -> String {
    to_json(&CodebookFile::from(cb))
}

pub fn codebook_from_json(text: &str) -> Result<BeamCodebook> {
    from_json::<CodebookFile>(text, "codebook")?.into_codebook()
}

pub fn write_codebook(cb: &BeamCodebook, path: &Path) -> Result<()> {
    std::fs::write(path, codebook_to_json(cb))?;
    Ok(())
}

pub fn read_codebook(path: &Path) -> Result<BeamCodebook> {
    codebook_from_json(&std::fs::read_to_string(path)?)
}

pub fn ground_truth_to_json(log: &GroundTruthLog) -> String {
    to_json(log)
}

pub fn ground_truth_from_json(text: &str) -> Result<GroundTruthLog> {
    from_json(text, "ground truth")
}

pub fn write_ground_truth(log: &GroundTruthLog, path: &Path) -> Result<()> {
    std::fs::write(path, ground_truth_to_json(log))?;
    Ok(())
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruthLog> {
    ground_truth_from_json(&std::fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------- CSV

/// Writes a CSV table with a one-line header.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::format("csv", format!("{other:?}")),
    }
}
