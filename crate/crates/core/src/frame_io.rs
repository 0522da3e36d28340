//! Uncompressed frame input and output: YUV4MPEG2 (4:2:0) clips and
//! directories of binary PPM/PGM images.
//!
//! Color conversion is BT.601 full range:
//!
//! ```text
//! Y = 0.299 R + 0.587 G + 0.114 B
//! U = 128 - 0.168736 R - 0.331264 G + 0.5 B
//! V = 128 + 0.5 R - 0.418688 G - 0.081312 B
//!
//! R = Y + 1.402 (V - 128)
//! G = Y - 0.344136 (U - 128) - 0.714136 (V - 128)
//! B = Y + 1.772 (U - 128)
//! ```
//!
//! Chroma is averaged over each 2×2 block on write and replicated on read.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::image::{Frame, GrayFrame};

const Y4M_MAGIC: &str = "YUV4MPEG2";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceKind {
    Y4mFile,
    ImageDirectory,
    Memory,
}

enum Inner {
    Y4m {
        reader: BufReader<File>,
        offsets: Vec<u64>,
        frame_bytes: usize,
    },
    Images(Vec<PathBuf>),
    Memory(VecDeque<Frame>),
}

/// A sequential reader over a fixed-size frame sequence.
pub struct FrameSource {
    inner: Inner,
    width: usize,
    height: usize,
    frame_count: usize,
    next_index: usize,
    frame_rate: (u32, u32),
}

impl std::fmt::Debug for FrameSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrameSource")
            .field("kind", &self.kind())
            .field("width", &self.width)
            .field("height", &self.height)
            .field("frame_count", &self.frame_count)
            .field("next_index", &self.next_index)
            .finish()
    }
}

/// Opens a `.y4m` file or a directory of `.ppm`/`.pgm` frames.
pub fn open_source(path: impl AsRef<Path>) -> Result<FrameSource> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    if path.is_dir() {
        open_image_dir(path)
    } else {
        open_y4m(path)
    }
}

impl FrameSource {
    /// Wraps frames already in memory. All frames must share dimensions.
    pub fn from_frames(frames: Vec<Frame>) -> Result<Self> {
        let first = frames.first().ok_or(Error::SourceTooShort(0))?;
        let (width, height) = (first.width(), first.height());
        if let Some(f) = frames.iter().find(|f| (f.width(), f.height()) != (width, height)) {
            return Err(Error::DimensionMismatch {
                expected_w: width,
                expected_h: height,
                got_w: f.width(),
                got_h: f.height(),
            });
        }
        Ok(FrameSource {
            width,
            height,
            frame_count: frames.len(),
            next_index: 0,
            frame_rate: (30, 1),
            inner: Inner::Memory(frames.into()),
        })
    }

    pub fn kind(&self) -> SourceKind {
        match self.inner {
            Inner::Y4m { .. } => SourceKind::Y4mFile,
            Inner::Images(_) => SourceKind::ImageDirectory,
            Inner::Memory(_) => SourceKind::Memory,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn next_index(&self) -> usize {
        self.next_index
    }

    pub fn frame_rate(&self) -> (u32, u32) {
        self.frame_rate
    }

    /// Next frame, or `None` once every frame has been read.
    pub fn read_frame(&mut self) -> Result<Option<Frame>> {
        if self.next_index >= self.frame_count {
            return Ok(None);
        }
        let idx = self.next_index;
        let frame = match &mut self.inner {
            Inner::Y4m { reader, offsets, frame_bytes } => {
                reader.seek(SeekFrom::Start(offsets[idx]))?;
                let mut buf = vec![0u8; *frame_bytes];
                let got = read_fully(reader, &mut buf)?;
                if got < *frame_bytes {
                    return Err(Error::TruncatedStream { expected: *frame_bytes, got });
                }
                yuv420_to_rgb(&buf, self.width, self.height)
            }
            Inner::Images(paths) => read_image(&paths[idx])?,
            Inner::Memory(frames) => frames.pop_front().expect("frame_count tracks the queue"),
        };
        if (frame.width(), frame.height()) != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                expected_w: self.width,
                expected_h: self.height,
                got_w: frame.width(),
                got_h: frame.height(),
            });
        }
        self.next_index += 1;
        Ok(Some(frame))
    }
}

impl Iterator for FrameSource {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        self.read_frame().transpose()
    }
}

fn read_fully(r: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(got)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Y4mHeader {
    pub width: usize,
    pub height: usize,
    pub frame_rate: (u32, u32),
}

impl Y4mHeader {
    pub fn parse(line: &str) -> Result<Self> {
        let mut tokens = line.trim_end_matches('\n').split(' ');
        if tokens.next() != Some(Y4M_MAGIC) {
            return Err(Error::UnsupportedFormat("missing YUV4MPEG2 magic".into()));
        }
        let (mut width, mut height, mut frame_rate) = (None, None, (30, 1));
        for tok in tokens.filter(|t| !t.is_empty()) {
            let (tag, val) = tok.split_at(1);
            let num = |v: &str| v.parse::<usize>().map_err(|_| Error::Parse(format!("bad y4m tag {tok:?}")));
            match tag {
                "W" => width = Some(num(val)?),
                "H" => height = Some(num(val)?),
                "F" => {
                    let (n, d) = val.split_once(':').ok_or_else(|| Error::Parse(format!("bad frame rate {tok:?}")))?;
                    frame_rate = (num(n)? as u32, num(d)? as u32);
                }
                "C" if !val.starts_with("420") => {
                    return Err(Error::UnsupportedFormat(format!("y4m colorspace {val}, only 4:2:0 is supported")))
                }
                "I" if val != "p" && val != "?" => {
                    return Err(Error::UnsupportedFormat(format!("interlacing {val}")))
                }
                _ => {}
            }
        }
        match (width, height) {
            (Some(w), Some(h)) if w > 0 && h > 0 => Ok(Y4mHeader { width: w, height: h, frame_rate }),
            _ => Err(Error::Parse("y4m header needs positive W and H".into())),
        }
    }

    pub fn frame_bytes(&self) -> usize {
        let (cw, ch) = chroma_dims(self.width, self.height);
        self.width * self.height + 2 * cw * ch
    }
}

fn chroma_dims(w: usize, h: usize) -> (usize, usize) {
    (w.div_ceil(2), h.div_ceil(2))
}

fn read_header_line(r: &mut impl BufRead) -> Result<Option<String>> {
    let mut buf = Vec::new();
    let n = r.by_ref().take(4096).read_until(b'\n', &mut buf)?;
    if n == 0 {
        return Ok(None);
    }
    if buf.last() != Some(&b'\n') {
        return Err(Error::TruncatedStream { expected: n + 1, got: n });
    }
    String::from_utf8(buf)
        .map(Some)
        .map_err(|_| Error::UnsupportedFormat("non-ASCII y4m header".into()))
}

fn open_y4m(path: &Path) -> Result<FrameSource> {
    let file = File::open(path)?;
    let len = file.metadata()?.len();
    let mut reader = BufReader::new(file);

    let mut magic = [0u8; 9];
    let got = read_fully(&mut reader, &mut magic)?;
    if got < magic.len() || magic != Y4M_MAGIC.as_bytes() {
        return Err(Error::UnsupportedFormat(format!("{} is not a YUV4MPEG2 file", path.display())));
    }
    reader.seek(SeekFrom::Start(0))?;
    let header = read_header_line(&mut reader)?.ok_or_else(|| Error::UnsupportedFormat("empty file".into()))?;
    let header = Y4mHeader::parse(&header)?;
    let frame_bytes = header.frame_bytes();

    let mut offsets = Vec::new();
    let mut pos = reader.stream_position()?;
    while pos < len {
        let line = read_header_line(&mut reader)?.ok_or(Error::TruncatedStream { expected: 6, got: 0 })?;
        if !line.starts_with("FRAME") {
            return Err(Error::UnsupportedFormat(format!("expected FRAME marker at byte {pos}")));
        }
        let payload = pos + line.len() as u64;
        offsets.push(payload);
        pos = payload + frame_bytes as u64;
        reader.seek(SeekFrom::Start(pos))?;
    }

    Ok(FrameSource {
        width: header.width,
        height: header.height,
        frame_count: offsets.len(),
        next_index: 0,
        frame_rate: header.frame_rate,
        inner: Inner::Y4m { reader, offsets, frame_bytes },
    })
}

/// `.ppm` and `.pgm` files in `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
                    Some("ppm" | "pgm")
                )
        })
        .collect();
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(paths)
}

fn open_image_dir(dir: &Path) -> Result<FrameSource> {
    let paths = list_images(dir)?;
    let Some(first) = paths.first() else {
        return Err(Error::NotFound(dir.to_path_buf()));
    };
    let (width, height) = read_pnm_dims(first)?;
    for p in &paths[1..] {
        let (w, h) = read_pnm_dims(p)?;
        if (w, h) != (width, height) {
            return Err(Error::DimensionMismatch { expected_w: width, expected_h: height, got_w: w, got_h: h });
        }
    }
    Ok(FrameSource {
        width,
        height,
        frame_count: paths.len(),
        next_index: 0,
        frame_rate: (30, 1),
        inner: Inner::Images(paths),
    })
}

struct PnmHeader {
    gray: bool,
    width: usize,
    height: usize,
    data_offset: usize,
}

fn parse_pnm_header(bytes: &[u8]) -> Result<PnmHeader> {
    let gray = match bytes.get(..2) {
        Some(b"P6") => false,
        Some(b"P5") => true,
        _ => return Err(Error::UnsupportedFormat("expected binary PPM (P6) or PGM (P5)".into())),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
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
                None => return Err(Error::TruncatedStream { expected: pos + 1, got: pos }),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse("malformed PNM header".into()))?;
    }
    // exactly one whitespace byte separates maxval from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Parse("malformed PNM header".into()));
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!("PNM maxval {maxval}, only 255 is supported")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Parse("PNM dimensions must be positive".into()));
    }
    Ok(PnmHeader { gray, width, height, data_offset: pos + 1 })
}

fn read_pnm_dims(path: &Path) -> Result<(usize, usize)> {
    let mut head = Vec::with_capacity(512);
    File::open(path)?.take(512).read_to_end(&mut head)?;
    let h = parse_pnm_header(&head)?;
    Ok((h.width, h.height))
}

/// Decodes a binary PPM or PGM; grayscale is replicated into RGB.
pub fn decode_pnm(bytes: &[u8]) -> Result<Frame> {
    let h = parse_pnm_header(bytes)?;
    let channels = if h.gray { 1 } else { 3 };
    let need = h.width * h.height * channels;
    let payload = &bytes[h.data_offset.min(bytes.len())..];
    if payload.len() < need {
        return Err(Error::TruncatedStream { expected: need, got: payload.len() });
    }
    let payload = &payload[..need];
    if h.gray {
        Ok(GrayFrame::new(h.width, h.height, payload.to_vec())?.to_rgb())
    } else {
        Frame::new(h.width, h.height, payload.to_vec())
    }
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode_pnm(&bytes)
}

pub fn encode_ppm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.data());
    out
}

pub fn encode_pgm(img: &GrayFrame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn write_ppm(path: impl AsRef<Path>, frame: &Frame) -> Result<()> {
    std::fs::write(path, encode_ppm(frame))?;
    Ok(())
}

struct ChromaTables {
    r_from_v: [i16; 256],
    b_from_u: [i16; 256],
    /// Indexed by `u * 256 + v`.
    g_from_uv: Vec<i16>,
}

fn chroma_tables() -> &'static ChromaTables {
    static TABLES: OnceLock<ChromaTables> = OnceLock::new();
    // Y is an integer, so round(Y + c) == Y + round(c): the chroma terms can be pre-rounded.
    TABLES.get_or_init(|| {
        let round = |v: f64| (v + 0.5).floor() as i16;
        let mut r_from_v = [0; 256];
        let mut b_from_u = [0; 256];
        for i in 0..256 {
            let c = i as f64 - 128.0;
            r_from_v[i] = round(1.402 * c);
            b_from_u[i] = round(1.772 * c);
        }
        let mut g_from_uv = vec![0; 65536];
        for u in 0..256 {
            for v in 0..256 {
                g_from_uv[u * 256 + v] = round(-0.344136 * (u as f64 - 128.0) - 0.714136 * (v as f64 - 128.0));
            }
        }
        ChromaTables { r_from_v, b_from_u, g_from_uv }
    })
}

/// Converts one planar 4:2:0 frame to interleaved RGB.
pub fn yuv420_to_rgb(buf: &[u8], width: usize, height: usize) -> Frame {
    let t = chroma_tables();
    let (cw, ch) = chroma_dims(width, height);
    let (y_plane, rest) = buf.split_at(width * height);
    let (u_plane, v_plane) = rest.split_at(cw * ch);
    let mut data = vec![0u8; width * height * 3];
    for y in 0..height {
        let yrow = &y_plane[y * width..(y + 1) * width];
        let urow = &u_plane[(y / 2) * cw..(y / 2 + 1) * cw];
        let vrow = &v_plane[(y / 2) * cw..(y / 2 + 1) * cw];
        let out = &mut data[y * width * 3..(y + 1) * width * 3];
        for (x, (px, &luma)) in out.chunks_exact_mut(3).zip(yrow).enumerate() {
            let (u, v) = (urow[x / 2] as usize, vrow[x / 2] as usize);
            let l = luma as i16;
            px[0] = (l + t.r_from_v[v]).clamp(0, 255) as u8;
            px[1] = (l + t.g_from_uv[u * 256 + v]).clamp(0, 255) as u8;
            px[2] = (l + t.b_from_u[u]).clamp(0, 255) as u8;
        }
    }
    Frame::new(width, height, data).expect("planes sized from dimensions")
}

/// Converts interleaved RGB to planar 4:2:0, averaging chroma over 2×2 blocks.
pub fn rgb_to_yuv420(frame: &Frame) -> Vec<u8> {
    let (w, h) = (frame.width(), frame.height());
    let (cw, ch) = chroma_dims(w, h);
    let mut out = Vec::with_capacity(w * h + 2 * cw * ch);
    out.extend(
        frame
            .data()
            .chunks_exact(3)
            .map(|p| ((299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32 + 500) / 1000) as u8),
    );
    let mut u_plane = Vec::with_capacity(cw * ch);
    let mut v_plane = Vec::with_capacity(cw * ch);
    for by in 0..ch {
        for bx in 0..cw {
            let mut sum = [0.0f64; 3];
            let mut n = 0.0;
            for y in (2 * by)..(2 * by + 2).min(h) {
                for x in (2 * bx)..(2 * bx + 2).min(w) {
                    let p = frame.pixel(x, y);
                    for c in 0..3 {
                        sum[c] += p[c] as f64;
                    }
                    n += 1.0;
                }
            }
            let [r, g, b] = sum.map(|s| s / n);
            let u = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
            let v = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
            u_plane.push((u + 0.5).floor().clamp(0.0, 255.0) as u8);
            v_plane.push((v + 0.5).floor().clamp(0.0, 255.0) as u8);
        }
    }
    out.extend_from_slice(&u_plane);
    out.extend_from_slice(&v_plane);
    out
}

/// Destination for output frames.
pub trait FrameSink: Send {
    fn write_frame(&mut self, frame: &Frame) -> Result<()>;

    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Streams frames as a YUV4MPEG2 4:2:0 clip.
pub struct Y4mWriter<W: Write> {
    out: W,
    width: usize,
    height: usize,
    frame_rate: (u32, u32),
    extra: Vec<String>,
    header_written: bool,
}

impl<W: Write> Y4mWriter<W> {
    pub fn new(out: W, width: usize, height: usize, frame_rate: (u32, u32)) -> Self {
        Y4mWriter { out, width, height, frame_rate, extra: Vec::new(), header_written: false }
    }

    /// Adds an `X` application parameter to the stream header.
    pub fn with_param(mut self, key: &str, value: &str) -> Self {
        self.extra.push(format!("X{key}={value}"));
        self
    }

    pub fn into_inner(self) -> W {
        self.out
    }

    fn write_header(&mut self) -> Result<()> {
        write!(
            self.out,
            "{Y4M_MAGIC} W{} H{} F{}:{} Ip A1:1 C420jpeg",
            self.width, self.height, self.frame_rate.0, self.frame_rate.1
        )?;
        for param in &self.extra {
            write!(self.out, " {param}")?;
        }
        writeln!(self.out)?;
        self.header_written = true;
        Ok(())
    }
}

impl<W: Write + Send> FrameSink for Y4mWriter<W> {
    fn write_frame(&mut self, frame: &Frame) -> Result<()> {
        if (frame.width(), frame.height()) != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                expected_w: self.width,
                expected_h: self.height,
                got_w: frame.width(),
                got_h: frame.height(),
            });
        }
        if !self.header_written {
            self.write_header()?;
        }
        self.out.write_all(b"FRAME\n")?;
        self.out.write_all(&rgb_to_yuv420(frame))?;
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        if !self.header_written {
            self.write_header()?;
        }
        self.out.flush()?;
        Ok(())
    }
}

/// Writes `000000.ppm`, `000001.ppm`, ... into a directory.
pub struct PpmDirSink {
    dir: PathBuf,
    next: usize,
}

impl PpmDirSink {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(PpmDirSink { dir, next: 0 })
    }
}

impl FrameSink for PpmDirSink {
    fn write_frame(&mut self, frame: &Frame) -> Result<()> {
        write_ppm(self.dir.join(format!("{:06}.ppm", self.next)), frame)?;
        self.next += 1;
        Ok(())
    }
}

/// Keeps every written frame in memory.
#[derive(Default)]
pub struct MemorySink {
    pub frames: Vec<Frame>,
}

impl FrameSink for MemorySink {
    fn write_frame(&mut self, frame: &Frame) -> Result<()> {
        self.frames.push(frame.clone());
        Ok(())
    }
}

/// A `.y4m` path gets a clip; anything else is treated as a PPM directory.
pub fn create_sink(path: &Path, width: usize, height: usize, frame_rate: (u32, u32)) -> Result<Box<dyn FrameSink>> {
    if path.extension().and_then(|e| e.to_str()) == Some("y4m") {
        let file = BufWriter::new(File::create(path)?);
        Ok(Box::new(Y4mWriter::new(file, width, height, frame_rate)))
    } else {
        Ok(Box::new(PpmDirSink::create(path)?))
    }
}
