//! On-disk formats: track files, fixation files, 8-bit saliency PNGs,
//! grayscale Y4M streams and the video metadata CSV.
//!
//! Track file layout (UTF-8, LF):
//!
//! ```text
//! viewer_id,video_id,space,screen_w,screen_h,rect_x,rect_y,rect_w,rect_h
//! t_ms,x,y
//! t_ms,x,y
//! ```
//!
//! The first line is a single metadata record holding those nine fields.
//! `space` is `screen` or `video:WxH`. Timestamps are integer milliseconds;
//! fractional timestamps are truncated on load. Coordinates are written in
//! the shortest form that parses back to the same `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::types::{
    CoordSpace, DisplayGeometry, FrameFixations, MouseTrack, Rect, SaliencyFrame, Subset, TrackSample,
    ValidationError, VideoMeta,
};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("identifier {0:?} contains a separator character")]
    BadIdentifier(String),
    #[error("cannot encode a zero-sized frame")]
    EmptyFrame,
    #[error("png: {0}")]
    Png(String),
    #[error("frame {index}: {message}")]
    Frame { index: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl FormatError {
    fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        FormatError::Parse { line, column, message: message.into() }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io { path: path.to_path_buf(), source }
    }
}

fn check_identifier(id: &str) -> Result<(), FormatError> {
    if id.is_empty() || id.contains([',', '\n', '\r']) {
        return Err(FormatError::BadIdentifier(id.to_string()));
    }
    Ok(())
}

/// Splits a comma-separated line, returning each field with its 1-based column.
fn fields(line: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut column = 1;
    line.split(',').map(move |f| {
        let start = column;
        column += f.len() + 1;
        (start, f)
    })
}

fn parse_num<T: std::str::FromStr>(line: usize, column: usize, field: &str, what: &str) -> Result<T, FormatError> {
    field
        .trim()
        .parse()
        .map_err(|_| FormatError::parse(line, column, format!("invalid {what} {field:?}")))
}

fn parse_space(line: usize, column: usize, field: &str) -> Result<CoordSpace, FormatError> {
    if field == "screen" {
        return Ok(CoordSpace::Screen);
    }
    let dims = field
        .strip_prefix("video:")
        .and_then(|d| d.split_once('x'))
        .ok_or_else(|| FormatError::parse(line, column, format!("unknown space {field:?}")))?;
    let width = parse_num(line, column, dims.0, "space width")?;
    let height = parse_num(line, column, dims.1, "space height")?;
    Ok(CoordSpace::Video { width, height })
}

fn format_space(space: CoordSpace) -> String {
    match space {
        CoordSpace::Screen => "screen".to_string(),
        CoordSpace::Video { width, height } => format!("video:{width}x{height}"),
    }
}

pub fn load_track(bytes: &[u8]) -> Result<MouseTrack, FormatError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let upto = &bytes[..e.valid_up_to()];
        let line = upto.iter().filter(|b| **b == b'\n').count() + 1;
        FormatError::parse(line, 1, "invalid UTF-8")
    })?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| FormatError::parse(1, 1, "missing header record"))?;
    let header: Vec<(usize, &str)> = fields(header).collect();
    if header.len() != 9 {
        return Err(FormatError::parse(1, 1, format!("header has {} fields, expected 9", header.len())));
    }
    let viewer_id = header[0].1.to_string();
    let video_id = header[1].1.to_string();
    let space = parse_space(1, header[2].0, header[2].1)?;
    let mut nums = [0u32; 6];
    for (slot, (column, field)) in nums.iter_mut().zip(&header[3..]) {
        *slot = parse_num(1, *column, field, "geometry value")?;
    }
    let rect = Rect { x: nums[2], y: nums[3], w: nums[4], h: nums[5] };
    let geometry = DisplayGeometry::new(nums[0], nums[1], rect)?;

    let mut samples = Vec::new();
    for (line_no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<(usize, &str)> = fields(line).collect();
        if parts.len() != 3 {
            return Err(FormatError::parse(line_no, 1, format!("expected t_ms,x,y, got {} fields", parts.len())));
        }
        let t: f64 = parse_num(line_no, parts[0].0, parts[0].1, "timestamp")?;
        let x: f64 = parse_num(line_no, parts[1].0, parts[1].1, "x coordinate")?;
        let y: f64 = parse_num(line_no, parts[2].0, parts[2].1, "y coordinate")?;
        samples.push(TrackSample::new(t.trunc(), x, y));
    }
    Ok(MouseTrack::new(viewer_id, video_id, space, geometry, samples)?)
}

pub fn save_track(track: &MouseTrack) -> Result<Vec<u8>, FormatError> {
    use std::fmt::Write;
    check_identifier(&track.viewer_id)?;
    check_identifier(&track.video_id)?;
    let g = &track.geometry;
    let r = g.video_rect;
    let mut out = String::with_capacity(64 + track.samples.len() * 16);
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{}",
        track.viewer_id,
        track.video_id,
        format_space(track.space),
        g.screen_w,
        g.screen_h,
        r.x,
        r.y,
        r.w,
        r.h
    );
    for s in &track.samples {
        let _ = writeln!(out, "{},{},{}", s.t_ms, s.x, s.y);
    }
    Ok(out.into_bytes())
}

/// Serializes fixations as `frame_index,x,y` lines in frame order.
pub fn save_fixations(frames: &[FrameFixations]) -> Vec<u8> {
    use std::fmt::Write;
    let mut out = String::new();
    let mut sorted: Vec<&FrameFixations> = frames.iter().collect();
    sorted.sort_by_key(|f| f.frame_index);
    for frame in sorted {
        for (x, y) in &frame.points {
            let _ = writeln!(out, "{},{},{}", frame.frame_index, x, y);
        }
    }
    out.into_bytes()
}

/// Parses a fixation file into exactly `n_frames` entries; frames without
/// lines are empty.
pub fn load_fixations(bytes: &[u8], n_frames: usize) -> Result<Vec<FrameFixations>, FormatError> {
    let text = std::str::from_utf8(bytes).map_err(|_| FormatError::parse(1, 1, "invalid UTF-8"))?;
    let mut frames: Vec<FrameFixations> = (0..n_frames).map(|i| FrameFixations::new(i, Vec::new())).collect();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        let parts: Vec<(usize, &str)> = fields(line).collect();
        if parts.len() != 3 {
            return Err(FormatError::parse(line_no, 1, "expected frame_index,x,y"));
        }
        let frame: usize = parse_num(line_no, parts[0].0, parts[0].1, "frame index")?;
        let x: u32 = parse_num(line_no, parts[1].0, parts[1].1, "x")?;
        let y: u32 = parse_num(line_no, parts[2].0, parts[2].1, "y")?;
        let slot = frames.get_mut(frame).ok_or_else(|| {
            FormatError::parse(line_no, parts[0].0, format!("frame {frame} beyond {n_frames} frames"))
        })?;
        slot.points.push((x, y));
    }
    Ok(frames)
}

/// Maps a frame to 8 bits with its maximum at 255, rounding half away from zero.
pub fn quantize_frame(frame: &SaliencyFrame) -> Vec<u8> {
    let max = frame.max();
    if max <= 0.0 {
        return vec![0; frame.len()];
    }
    frame
        .values()
        .iter()
        .map(|v| (v / max * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

pub fn save_saliency_frame(frame: &SaliencyFrame) -> Result<Vec<u8>, FormatError> {
    if frame.is_empty() {
        return Err(FormatError::EmptyFrame);
    }
    encode_gray_png(frame.width() as u32, frame.height() as u32, &quantize_frame(frame))
}

pub fn encode_gray_png(width: u32, height: u32, pixels: &[u8]) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width, height);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(|e| FormatError::Png(e.to_string()))?;
        writer.write_image_data(pixels).map_err(|e| FormatError::Png(e.to_string()))?;
    }
    Ok(out)
}

/// Decodes an 8-bit PNG into a frame holding raw 0..255 intensities.
/// Color images are reduced to their first channel.
pub fn load_saliency_png(bytes: &[u8]) -> Result<SaliencyFrame, FormatError> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| FormatError::Png(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| FormatError::Png("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| FormatError::Png(e.to_string()))?;
    let channels = info.color_type.samples();
    let (w, h) = (info.width as usize, info.height as usize);
    let values = buf[..info.buffer_size()]
        .chunks_exact(channels)
        .map(|px| f64::from(px[0]))
        .collect::<Vec<_>>();
    if values.len() != w * h {
        return Err(FormatError::Png(format!("decoded {} pixels for {w}x{h}", values.len())));
    }
    Ok(SaliencyFrame::from_raw(w, h, values))
}

/// Random access to a sequence of saliency frames.
pub trait FrameSequence: Send + Sync {
    fn len(&self) -> usize;
    fn frame(&self, index: usize) -> Result<SaliencyFrame, FormatError>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl FrameSequence for Vec<SaliencyFrame> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn frame(&self, index: usize) -> Result<SaliencyFrame, FormatError> {
        self.get(index).cloned().ok_or_else(|| FormatError::Frame {
            index,
            message: "out of range".into(),
        })
    }
}

/// Directory of `%06d.png` frames numbered contiguously from zero.
#[derive(Debug, Clone)]
pub struct PngDir {
    paths: Vec<PathBuf>,
}

impl PngDir {
    pub fn open(dir: &Path) -> Result<Self, FormatError> {
        let mut indexed = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| FormatError::io(dir, e))? {
            let path = entry.map_err(|e| FormatError::io(dir, e))?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
            let Some(stem) = name.strip_suffix(".png") else { continue };
            if stem.len() == 6 && stem.bytes().all(|b| b.is_ascii_digit()) {
                indexed.push((stem.parse::<usize>().unwrap_or(usize::MAX), path));
            }
        }
        indexed.sort();
        for (expected, (index, path)) in indexed.iter().enumerate() {
            if *index != expected {
                return Err(FormatError::Frame {
                    index: expected,
                    message: format!("missing frame before {}", path.display()),
                });
            }
        }
        Ok(Self { paths: indexed.into_iter().map(|(_, p)| p).collect() })
    }

    pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
        dir.join(format!("{index:06}.png"))
    }
}

impl FrameSequence for PngDir {
    fn len(&self) -> usize {
        self.paths.len()
    }

    fn frame(&self, index: usize) -> Result<SaliencyFrame, FormatError> {
        let path = self.paths.get(index).ok_or_else(|| FormatError::Frame {
            index,
            message: "out of range".into(),
        })?;
        let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
        load_saliency_png(&bytes).map_err(|e| FormatError::Frame { index, message: e.to_string() })
    }
}

/// Grayscale YUV4MPEG2 stream. Only the luma plane is read.
#[derive(Debug, Clone)]
pub struct Y4mStream {
    path: PathBuf,
    width: usize,
    height: usize,
    offsets: Vec<u64>,
}

impl Y4mStream {
    pub fn open(path: &Path) -> Result<Self, FormatError> {
        let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
        let total = file.metadata().map_err(|e| FormatError::io(path, e))?.len();
        let mut reader = BufReader::new(file);
        let mut header = String::new();
        reader.read_line(&mut header).map_err(|e| FormatError::io(path, e))?;
        let mut tokens = header.trim_end().split(' ');
        if tokens.next() != Some("YUV4MPEG2") {
            return Err(FormatError::parse(1, 1, "missing YUV4MPEG2 signature"));
        }
        let (mut width, mut height, mut colorspace) = (0usize, 0usize, "420".to_string());
        for tok in tokens {
            match tok.split_at(1) {
                ("W", v) => width = parse_num(1, 1, v, "width")?,
                ("H", v) => height = parse_num(1, 1, v, "height")?,
                ("C", v) => colorspace = v.to_string(),
                _ => {}
            }
        }
        if width == 0 || height == 0 {
            return Err(FormatError::parse(1, 1, "missing frame dimensions"));
        }
        let luma = width * height;
        let chroma = if colorspace.starts_with("mono") {
            0
        } else if colorspace.starts_with("420") {
            2 * width.div_ceil(2) * height.div_ceil(2)
        } else if colorspace.starts_with("422") {
            2 * width.div_ceil(2) * height
        } else if colorspace.starts_with("444") {
            2 * luma
        } else {
            return Err(FormatError::parse(1, 1, format!("unsupported colorspace C{colorspace}")));
        };
        let mut pos = header.len() as u64;
        let mut offsets = Vec::new();
        let mut line = String::new();
        while pos < total {
            reader.seek(SeekFrom::Start(pos)).map_err(|e| FormatError::io(path, e))?;
            line.clear();
            let n = reader.read_line(&mut line).map_err(|e| FormatError::io(path, e))?;
            if !line.starts_with("FRAME") {
                return Err(FormatError::Frame { index: offsets.len(), message: "missing FRAME marker".into() });
            }
            let data = pos + n as u64;
            if data + luma as u64 > total {
                return Err(FormatError::Frame { index: offsets.len(), message: "truncated frame".into() });
            }
            offsets.push(data);
            pos = data + (luma + chroma) as u64;
        }
        Ok(Self { path: path.to_path_buf(), width, height, offsets })
    }
}

impl FrameSequence for Y4mStream {
    fn len(&self) -> usize {
        self.offsets.len()
    }

    fn frame(&self, index: usize) -> Result<SaliencyFrame, FormatError> {
        let offset = *self.offsets.get(index).ok_or_else(|| FormatError::Frame {
            index,
            message: "out of range".into(),
        })?;
        let mut file = File::open(&self.path).map_err(|e| FormatError::io(&self.path, e))?;
        file.seek(SeekFrom::Start(offset)).map_err(|e| FormatError::io(&self.path, e))?;
        let mut buf = vec![0u8; self.width * self.height];
        file.read_exact(&mut buf).map_err(|e| FormatError::io(&self.path, e))?;
        Ok(SaliencyFrame::from_raw(self.width, self.height, buf.into_iter().map(f64::from).collect()))
    }
}

/// Writes frames as a mono Y4M stream (each frame quantized independently).
pub fn write_y4m(frames: &[SaliencyFrame], fps: u32) -> Result<Vec<u8>, FormatError> {
    let first = frames.first().ok_or(FormatError::EmptyFrame)?;
    let (w, h) = first.dims();
    let mut out = format!("YUV4MPEG2 W{w} H{h} F{fps}:1 Ip A1:1 Cmono\n").into_bytes();
    for (index, f) in frames.iter().enumerate() {
        if f.dims() != (w, h) {
            return Err(FormatError::Frame { index, message: "dimension change inside stream".into() });
        }
        out.extend_from_slice(b"FRAME\n");
        out.extend_from_slice(&quantize_frame(f));
    }
    Ok(out)
}

/// Opens a prediction either as a `%06d.png` directory or a `.y4m` stream.
pub fn open_sequence(path: &Path) -> Result<Box<dyn FrameSequence>, FormatError> {
    if path.is_dir() {
        Ok(Box::new(PngDir::open(path)?))
    } else {
        Ok(Box::new(Y4mStream::open(path)?))
    }
}

pub const META_HEADER: [&str; 7] = ["video_id", "width", "height", "fps", "duration_ms", "has_audio", "subset"];

#[derive(Debug, serde::Deserialize, serde::Serialize)]
struct MetaRow {
    video_id: String,
    width: u32,
    height: u32,
    fps: f64,
    duration_ms: u64,
    has_audio: u8,
    subset: String,
}

/// Reads `video_id,width,height,fps,duration_ms,has_audio,subset` rows.
pub fn load_video_meta(bytes: &[u8]) -> Result<Vec<VideoMeta>, FormatError> {
    let mut reader = csv::Reader::from_reader(bytes);
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<MetaRow>().enumerate() {
        let row = row?;
        let subset = Subset::parse(&row.subset)
            .ok_or_else(|| FormatError::parse(i + 2, 1, format!("unknown subset {:?}", row.subset)))?;
        let meta = VideoMeta {
            video_id: row.video_id,
            width: row.width,
            height: row.height,
            fps: row.fps,
            duration_ms: row.duration_ms,
            has_audio: row.has_audio != 0,
            subset,
        };
        meta.validate()?;
        out.push(meta);
    }
    Ok(out)
}

pub fn save_video_meta(videos: &[VideoMeta]) -> Result<Vec<u8>, FormatError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for v in videos {
        writer.serialize(MetaRow {
            video_id: v.video_id.clone(),
            width: v.width,
            height: v.height,
            fps: v.fps,
            duration_ms: v.duration_ms,
            has_audio: u8::from(v.has_audio),
            subset: v.subset.as_str().to_string(),
        })?;
    }
    writer.into_inner().map_err(|e| FormatError::Csv(e.into_error().into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "v1,clip,screen,1920,1080,0,0,1920,1080\n0,0,0\n10,5,5\n";

    #[test]
    fn loads_minimal_track() {
        let t = load_track(MINIMAL.as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.samples[1], TrackSample::new(10.0, 5.0, 5.0));
        assert_eq!(save_track(&t).unwrap(), MINIMAL.as_bytes());
    }

    #[test]
    fn reports_non_monotone_sample() {
        let text = "v1,clip,screen,1920,1080,0,0,1920,1080\n0,0,0\n10,1,1\n10,2,2\n";
        let err = load_track(text.as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "non-monotone timestamp at sample 2");
    }

    #[test]
    fn reports_parse_position() {
        let text = "v1,clip,screen,1920,1080,0,0,1920,1080\n0,0,0\n10,abc,5\n";
        match load_track(text.as_bytes()).unwrap_err() {
            FormatError::Parse { line, column, .. } => assert_eq!((line, column), (3, 4)),
            e => panic!("unexpected {e}"),
        }
        let text = "v1,clip,plane,1920,1080,0,0,1920,1080\n";
        assert!(matches!(load_track(text.as_bytes()), Err(FormatError::Parse { line: 1, column: 9, .. })));
    }

    #[test]
    fn rejects_out_of_bounds_coordinate() {
        let text = "v1,clip,video:480x270,1920,1080,0,0,1920,1080\n0,481,0\n";
        assert!(matches!(
            load_track(text.as_bytes()),
            Err(FormatError::Validation(ValidationError::OutOfBounds { .. }))
        ));
    }

    #[test]
    fn truncates_sub_millisecond_timestamps() {
        let text = "v1,clip,screen,1920,1080,0,0,1920,1080\n0.9,0,0\n10.7,5,5\n";
        let t = load_track(text.as_bytes()).unwrap();
        assert_eq!(t.samples[0].t_ms, 0.0);
        assert_eq!(t.samples[1].t_ms, 10.0);
    }

    #[test]
    fn quantizes_half_away_from_zero() {
        let f = SaliencyFrame::new(2, 2, vec![0.0, 0.5, 0.5, 1.0]).unwrap();
        assert_eq!(quantize_frame(&f), vec![0, 128, 128, 255]);
        let png = save_saliency_frame(&f).unwrap();
        let back = load_saliency_png(&png).unwrap();
        assert_eq!(back.values(), &[0.0, 128.0, 128.0, 255.0]);
        assert_eq!(save_saliency_frame(&back).unwrap(), png);
        let zero = SaliencyFrame::zeros(3, 2);
        assert_eq!(load_saliency_png(&save_saliency_frame(&zero).unwrap()).unwrap().values(), &[0.0; 6]);
        assert!(matches!(save_saliency_frame(&SaliencyFrame::zeros(0, 0)), Err(FormatError::EmptyFrame)));
    }

    #[test]
    fn fixation_file_round_trip() {
        let frames = vec![
            FrameFixations::new(0, vec![(1, 2), (3, 4)]),
            FrameFixations::new(1, vec![]),
            FrameFixations::new(2, vec![(5, 6)]),
        ];
        let bytes = save_fixations(&frames);
        assert_eq!(std::str::from_utf8(&bytes).unwrap(), "0,1,2\n0,3,4\n2,5,6\n");
        assert_eq!(load_fixations(&bytes, 3).unwrap(), frames);
        assert!(load_fixations(&bytes, 2).is_err());
    }

    #[test]
    fn y4m_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let frames = vec![
            SaliencyFrame::new(3, 2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(),
            SaliencyFrame::new(3, 2, vec![5.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap(),
        ];
        let path = dir.path().join("clip.y4m");
        std::fs::write(&path, write_y4m(&frames, 30).unwrap()).unwrap();
        let stream = open_sequence(&path).unwrap();
        assert_eq!(stream.len(), 2);
        assert_eq!(stream.frame(0).unwrap().values(), &[0.0, 51.0, 102.0, 153.0, 204.0, 255.0]);
        assert_eq!(stream.frame(1).unwrap().values(), &[255.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn png_dir_requires_contiguous_frames() {
        let dir = tempfile::tempdir().unwrap();
        let png = save_saliency_frame(&SaliencyFrame::zeros(2, 2)).unwrap();
        std::fs::write(PngDir::frame_path(dir.path(), 0), &png).unwrap();
        std::fs::write(PngDir::frame_path(dir.path(), 1), &png).unwrap();
        assert_eq!(PngDir::open(dir.path()).unwrap().len(), 2);
        std::fs::write(PngDir::frame_path(dir.path(), 3), &png).unwrap();
        assert!(PngDir::open(dir.path()).is_err());
    }

    #[test]
    fn meta_csv_round_trip() {
        let text = "video_id,width,height,fps,duration_ms,has_audio,subset\nclip,1920,1080,30,19000,1,train\n";
        let meta = load_video_meta(text.as_bytes()).unwrap();
        assert_eq!(meta[0].frame_count(), 570);
        assert_eq!(load_video_meta(&save_video_meta(&meta).unwrap()).unwrap(), meta);
    }

    fn arb_track() -> impl Strategy<Value = MouseTrack> {
        (1u32..4000, 1u32..3000, prop::collection::vec((1u32..50, 0.0f64..1.0, 0.0f64..1.0), 1..60)).prop_map(
            |(w, h, steps)| {
                let geometry = DisplayGeometry::new(w, h, Rect { x: 0, y: 0, w, h }).unwrap();
                let mut t = 0u32;
                let samples = steps
                    .into_iter()
                    .map(|(dt, fx, fy)| {
                        t += dt;
                        TrackSample::new(f64::from(t), fx * f64::from(w), (fy * f64::from(h)).floor())
                    })
                    .collect();
                MouseTrack::new("viewer-7", "clip_3", CoordSpace::Screen, geometry, samples).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn canonical_track_files_round_trip(track in arb_track()) {
            let bytes = save_track(&track).unwrap();
            let loaded = load_track(&bytes).unwrap();
            prop_assert_eq!(&loaded, &track);
            prop_assert_eq!(save_track(&loaded).unwrap(), bytes);
        }

        #[test]
        fn png_reencode_is_byte_identical(values in prop::collection::vec(0.0f64..10.0, 12)) {
            let frame = SaliencyFrame::new(4, 3, values).unwrap();
            let png = save_saliency_frame(&frame).unwrap();
            let again = save_saliency_frame(&load_saliency_png(&png).unwrap()).unwrap();
            prop_assert_eq!(again, png);
        }
    }
}
