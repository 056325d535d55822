//! Raw `RVID` video container, luma conversion and deterministic synthetic
//! test videos.
//!
//! Layout (little-endian, 26-byte header, then `frame_count` frames stored
//! contiguously, row-major, channel-interleaved):
//!
//! ```text
//! offset size field
//!      0    4 magic "RVID"
//!      4    1 version (1)
//!      5    4 width
//!      9    4 height
//!     13    1 channels (1 or 3)
//!     14    4 fps_num
//!     18    4 fps_den
//!     22    4 frame_count
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Fps, VideoAsset};

pub const MAGIC: &[u8; 4] = b"RVID";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 26;

/// An 8-bit frame, row-major and channel-interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<Self> {
        if !matches!(channels, 1 | 3) {
            return Err(Error::Parameter(format!("unsupported channel count {channels}")));
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height}x{channels} frame needs {expected} bytes, got {}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, luma: u8) -> Self {
        Self {
            width,
            height,
            channels: 1,
            pixels: vec![luma; width as usize * height as usize],
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn byte_len(&self) -> usize {
        self.pixels.len()
    }

    /// Grayscale value at `(x, y)`; only meaningful for 1-channel frames.
    pub fn luma(&self, x: u32, y: u32) -> u8 {
        self.pixels[(y * self.width + x) as usize * self.channels as usize]
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }
}

/// Integer luma: `round(0.299 R + 0.587 G + 0.114 B)` with halves rounded up.
#[inline]
pub fn luma_of(r: u8, g: u8, b: u8) -> u8 {
    let weighted = 299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b);
    ((weighted + 500) / 1000).min(255) as u8
}

pub fn to_grayscale(frame: &Frame) -> Frame {
    if frame.channels == 1 {
        return frame.clone();
    }
    let pixels = frame
        .pixels
        .chunks_exact(3)
        .map(|p| luma_of(p[0], p[1], p[2]))
        .collect();
    Frame {
        width: frame.width,
        height: frame.height,
        channels: 1,
        pixels,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoHeader {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub fps_num: u32,
    pub fps_den: u32,
    pub frame_count: u32,
}

impl VideoHeader {
    pub fn frame_bytes(&self) -> usize {
        self.width as usize * self.height as usize * self.channels as usize
    }

    pub fn payload_bytes(&self) -> u64 {
        self.frame_bytes() as u64 * u64::from(self.frame_count)
    }

    fn validate(&self) -> Result<()> {
        if self.fps_den == 0 || self.fps_num == 0 {
            return Err(Error::Format(format!("bad fps {}/{}", self.fps_num, self.fps_den)));
        }
        if !matches!(self.channels, 1 | 3) {
            return Err(Error::Format(format!("bad channel count {}", self.channels)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Format(format!("bad dimensions {}x{}", self.width, self.height)));
        }
        Ok(())
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut buf = [0u8; HEADER_LEN];
        buf[0..4].copy_from_slice(MAGIC);
        buf[4] = VERSION;
        buf[5..9].copy_from_slice(&self.width.to_le_bytes());
        buf[9..13].copy_from_slice(&self.height.to_le_bytes());
        buf[13] = self.channels;
        buf[14..18].copy_from_slice(&self.fps_num.to_le_bytes());
        buf[18..22].copy_from_slice(&self.fps_den.to_le_bytes());
        buf[22..26].copy_from_slice(&self.frame_count.to_le_bytes());
        buf
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        if buf.len() < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN as u64,
                found: buf.len() as u64,
            });
        }
        if &buf[0..4] != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}",
                String::from_utf8_lossy(&buf[0..4])
            )));
        }
        if buf[4] != VERSION {
            return Err(Error::Format(format!("unsupported version {}", buf[4])));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        let header = Self {
            width: u32_at(5),
            height: u32_at(9),
            channels: buf[13],
            fps_num: u32_at(14),
            fps_den: u32_at(18),
            frame_count: u32_at(22),
        };
        header.validate()?;
        Ok(header)
    }

    pub fn to_asset(&self, asset_id: &str, path: &Path) -> Result<VideoAsset> {
        VideoAsset::new(
            asset_id,
            path,
            self.width,
            self.height,
            Fps::new(self.fps_num, self.fps_den)?,
            self.frame_count,
            self.channels,
        )
    }
}

fn check_frames(header: &VideoHeader, frames: &[Frame]) -> Result<()> {
    if frames.len() != header.frame_count as usize {
        return Err(Error::Parameter(format!(
            "header declares {} frames, got {}",
            header.frame_count,
            frames.len()
        )));
    }
    for f in frames {
        if f.width != header.width || f.height != header.height || f.channels != header.channels {
            return Err(Error::DimensionMismatch(format!(
                "frame {}x{}x{} does not match header {}x{}x{}",
                f.width, f.height, f.channels, header.width, header.height, header.channels
            )));
        }
    }
    Ok(())
}

pub fn write_video_to<W: Write>(mut w: W, header: &VideoHeader, frames: &[Frame]) -> Result<()> {
    header.validate()?;
    check_frames(header, frames)?;
    let io = |e| Error::io("<stream>", e);
    w.write_all(&header.encode()).map_err(io)?;
    for f in frames {
        w.write_all(&f.pixels).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_video(path: impl AsRef<Path>, header: &VideoHeader, frames: &[Frame]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_video_to(BufWriter::new(file), header, frames).map_err(|e| relabel(e, path))
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

/// Serializes a complete RVID stream into memory.
pub fn encode_video(header: &VideoHeader, frames: &[Frame]) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(HEADER_LEN + header.payload_bytes() as usize);
    write_video_to(&mut buf, header, frames)?;
    Ok(buf)
}

pub fn decode_video(bytes: &[u8]) -> Result<(VideoHeader, Vec<Frame>)> {
    let header = VideoHeader::decode(bytes)?;
    let expected = HEADER_LEN as u64 + header.payload_bytes();
    let found = bytes.len() as u64;
    if found < expected {
        return Err(Error::Truncated { expected, found });
    }
    if found > expected {
        return Err(Error::Format(format!("{} trailing bytes", found - expected)));
    }
    let frames = bytes[HEADER_LEN..]
        .chunks_exact(header.frame_bytes())
        .map(|px| Frame {
            width: header.width,
            height: header.height,
            channels: header.channels,
            pixels: px.to_vec(),
        })
        .collect();
    Ok((header, frames))
}

/// Single-frame RVID payload, as shipped to the caption service.
pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>> {
    let header = VideoHeader {
        width: frame.width,
        height: frame.height,
        channels: frame.channels,
        fps_num: 1,
        fps_den: 1,
        frame_count: 1,
    };
    encode_video(&header, std::slice::from_ref(frame))
}

/// Random-access reader. Frames are fetched on demand by index or range and
/// are byte-identical to an eager [`read_video`].
pub struct VideoReader {
    file: BufReader<File>,
    header: VideoHeader,
    path: std::path::PathBuf,
}

impl VideoReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        let mut file = BufReader::new(file);
        let mut buf = [0u8; HEADER_LEN];
        let n = read_fully(&mut file, &mut buf).map_err(|e| Error::io(path, e))?;
        let header = VideoHeader::decode(&buf[..n])?;
        let expected = HEADER_LEN as u64 + header.payload_bytes();
        if len < expected {
            return Err(Error::Truncated {
                expected,
                found: len,
            });
        }
        if len > expected {
            return Err(Error::Format(format!(
                "{}: {} trailing bytes",
                path.display(),
                len - expected
            )));
        }
        Ok(Self {
            file,
            header,
            path: path.to_path_buf(),
        })
    }

    pub fn header(&self) -> &VideoHeader {
        &self.header
    }

    pub fn frame_count(&self) -> u32 {
        self.header.frame_count
    }

    pub fn read_frame(&mut self, index: u32) -> Result<Frame> {
        let mut frames = self.read_range(index, index + 1)?;
        Ok(frames.pop().expect("one frame"))
    }

    /// Frames `[start, end)`.
    pub fn read_range(&mut self, start: u32, end: u32) -> Result<Vec<Frame>> {
        if start > end || end > self.header.frame_count {
            return Err(Error::Parameter(format!(
                "frame range [{start}, {end}) outside 0..{}",
                self.header.frame_count
            )));
        }
        let fb = self.header.frame_bytes();
        let offset = HEADER_LEN as u64 + u64::from(start) * fb as u64;
        self.file
            .seek(SeekFrom::Start(offset))
            .map_err(|e| Error::io(&self.path, e))?;
        let mut out = Vec::with_capacity((end - start) as usize);
        for _ in start..end {
            let mut pixels = vec![0u8; fb];
            let n = read_fully(&mut self.file, &mut pixels).map_err(|e| Error::io(&self.path, e))?;
            if n < fb {
                return Err(Error::Truncated {
                    expected: fb as u64,
                    found: n as u64,
                });
            }
            out.push(Frame {
                width: self.header.width,
                height: self.header.height,
                channels: self.header.channels,
                pixels,
            });
        }
        Ok(out)
    }

    /// Streams every frame in order.
    pub fn frames(&mut self) -> impl Iterator<Item = Result<Frame>> + '_ {
        let count = self.header.frame_count;
        let mut seeked = false;
        (0..count).map(move |i| {
            if !seeked {
                seeked = true;
                return self.read_frame(i);
            }
            let fb = self.header.frame_bytes();
            let mut pixels = vec![0u8; fb];
            let n = read_fully(&mut self.file, &mut pixels).map_err(|e| Error::io(&self.path, e))?;
            if n < fb {
                return Err(Error::Truncated {
                    expected: fb as u64,
                    found: n as u64,
                });
            }
            Ok(Frame {
                width: self.header.width,
                height: self.header.height,
                channels: self.header.channels,
                pixels,
            })
        })
    }
}

fn read_fully<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

pub fn read_video(path: impl AsRef<Path>) -> Result<(VideoHeader, Vec<Frame>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_video(&bytes)
}

/// A constant-luma run inside a [`SynthKind::SceneSequence`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub luma: u8,
    pub frames: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthKind {
    Static {
        width: u32,
        height: u32,
        frames: u32,
        luma: u8,
    },
    /// A 255-intensity square on a 0 background whose left edge sits at
    /// `x0 + dx * k` in frame `k`, wrapping around the canvas horizontally.
    MovingSquare {
        width: u32,
        height: u32,
        frames: u32,
        size: u32,
        dx: i32,
        x0: u32,
        y0: u32,
    },
    SceneSequence {
        width: u32,
        height: u32,
        scenes: Vec<Scene>,
    },
    /// Uniform random grayscale pixels.
    Noise {
        width: u32,
        height: u32,
        frames: u32,
        seed: u64,
    },
}

impl SynthKind {
    /// A square vertically centred on the canvas, starting at the left edge.
    pub fn moving_square(width: u32, height: u32, frames: u32, size: u32, dx: i32) -> Self {
        SynthKind::MovingSquare {
            width,
            height,
            frames,
            size,
            dx,
            x0: 0,
            y0: height.saturating_sub(size) / 2,
        }
    }
}

pub fn synth_frames(kind: &SynthKind) -> Result<(VideoHeader, Vec<Frame>)> {
    let header = |width: u32, height: u32, frame_count: u32| -> Result<VideoHeader> {
        if width == 0 || height == 0 || frame_count == 0 {
            return Err(Error::Parameter(format!(
                "synthetic video {width}x{height} with {frame_count} frames"
            )));
        }
        Ok(VideoHeader {
            width,
            height,
            channels: 1,
            fps_num: 30,
            fps_den: 1,
            frame_count,
        })
    };
    match *kind {
        SynthKind::Static {
            width,
            height,
            frames,
            luma,
        } => {
            let h = header(width, height, frames)?;
            Ok((h, vec![Frame::filled(width, height, luma); frames as usize]))
        }
        SynthKind::MovingSquare {
            width,
            height,
            frames,
            size,
            dx,
            x0,
            y0,
        } => {
            let h = header(width, height, frames)?;
            if size == 0 || size > width || x0 + size > width || y0 + size > height {
                return Err(Error::Parameter(format!(
                    "square {size}x{size} at ({x0},{y0}) does not fit {width}x{height}"
                )));
            }
            let out = (0..frames)
                .map(|k| {
                    let mut f = Frame::filled(width, height, 0);
                    let left = (i64::from(x0) + i64::from(dx) * i64::from(k))
                        .rem_euclid(i64::from(width)) as u32;
                    for y in y0..y0 + size {
                        for i in 0..size {
                            let x = (left + i) % width;
                            f.pixels[(y * width + x) as usize] = 255;
                        }
                    }
                    f
                })
                .collect();
            Ok((h, out))
        }
        SynthKind::SceneSequence {
            width,
            height,
            ref scenes,
        } => {
            let total: u32 = scenes.iter().map(|s| s.frames).sum();
            let h = header(width, height, total)?;
            let out = scenes
                .iter()
                .flat_map(|s| std::iter::repeat_n(Frame::filled(width, height, s.luma), s.frames as usize))
                .collect();
            Ok((h, out))
        }
        SynthKind::Noise {
            width,
            height,
            frames,
            seed,
        } => {
            let h = header(width, height, frames)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = (0..frames)
                .map(|_| {
                    let mut f = Frame::filled(width, height, 0);
                    rng.fill(f.pixels.as_mut_slice());
                    f
                })
                .collect();
            Ok((h, out))
        }
    }
}

/// Renders `kind` to `path` and returns the registered asset.
pub fn synth_video(kind: &SynthKind, asset_id: &str, path: impl AsRef<Path>) -> Result<VideoAsset> {
    let path = path.as_ref();
    let (header, frames) = synth_frames(kind)?;
    write_video(path, &header, &frames)?;
    header.to_asset(asset_id, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_examples() {
        assert_eq!(luma_of(255, 255, 255), 255);
        assert_eq!(luma_of(0, 0, 0), 0);
        assert_eq!(luma_of(255, 0, 0), 76);
        assert_eq!(luma_of(0, 255, 0), 150);
        assert_eq!(luma_of(0, 0, 255), 29);
    }

    #[test]
    fn luma_matches_float_formula() {
        for r in (0..=255).step_by(5) {
            for g in (0..=255).step_by(7) {
                for b in (0..=255).step_by(11) {
                    let exact = f64::from(299 * r + 587 * g + 114 * b) / 1000.0;
                    let want = exact.round().clamp(0.0, 255.0) as u8;
                    assert_eq!(luma_of(r as u8, g as u8, b as u8), want, "{r} {g} {b}");
                }
            }
        }
    }

    #[test]
    fn grayscale_is_identity_on_gray() {
        let f = Frame::new(2, 1, 1, vec![3, 200]).unwrap();
        assert_eq!(to_grayscale(&f), f);
        let rgb = Frame::new(1, 1, 3, vec![255, 0, 0]).unwrap();
        assert_eq!(to_grayscale(&rgb).pixels, vec![76]);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let (h, frames) = synth_frames(&SynthKind::Static {
            width: 4,
            height: 4,
            frames: 10,
            luma: 9,
        })
        .unwrap();
        let mut bytes = encode_video(&h, &frames).unwrap();
        let mut bad = bytes.clone();
        bad[0..4].copy_from_slice(b"XVID");
        assert!(matches!(decode_video(&bad), Err(Error::Format(_))));
        let mut bad_version = bytes.clone();
        bad_version[4] = 2;
        assert!(matches!(decode_video(&bad_version), Err(Error::Format(_))));
        bytes.truncate(bytes.len() - 16);
        assert!(matches!(decode_video(&bytes), Err(Error::Truncated { .. })));
    }

    #[test]
    fn reader_detects_truncation_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.rvid");
        let (h, frames) = synth_frames(&SynthKind::Static {
            width: 4,
            height: 4,
            frames: 10,
            luma: 1,
        })
        .unwrap();
        let mut bytes = encode_video(&h, &frames).unwrap();
        bytes.truncate(bytes.len() - 16);
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(VideoReader::open(&p), Err(Error::Truncated { .. })));
        assert!(matches!(read_video(&p), Err(Error::Truncated { .. })));
    }

    #[test]
    fn lazy_reads_match_eager() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("n.rvid");
        synth_video(
            &SynthKind::Noise {
                width: 7,
                height: 5,
                frames: 9,
                seed: 3,
            },
            "n",
            &p,
        )
        .unwrap();
        let (_, eager) = read_video(&p).unwrap();
        let mut r = VideoReader::open(&p).unwrap();
        assert_eq!(r.read_range(2, 6).unwrap(), eager[2..6].to_vec());
        assert_eq!(r.read_frame(8).unwrap(), eager[8]);
        let streamed: Vec<_> = r.frames().collect::<Result<_>>().unwrap();
        assert_eq!(streamed, eager);
        assert!(r.read_range(5, 10).is_err());
    }

    #[test]
    fn synthetic_examples() {
        let (_, f) = synth_frames(&SynthKind::Static {
            width: 64,
            height: 64,
            frames: 30,
            luma: 128,
        })
        .unwrap();
        assert_eq!(f.len(), 30);
        assert!(f.iter().all(|fr| fr == &f[0] && fr.pixels.iter().all(|&p| p == 128)));

        let (_, f) = synth_frames(&SynthKind::SceneSequence {
            width: 8,
            height: 8,
            scenes: vec![Scene { luma: 0, frames: 30 }, Scene { luma: 255, frames: 30 }],
        })
        .unwrap();
        assert!(f[29].pixels.iter().all(|&p| p == 0));
        assert!(f[30].pixels.iter().all(|&p| p == 255));

        let (_, f) = synth_frames(&SynthKind::moving_square(64, 64, 10, 16, 8)).unwrap();
        for (k, fr) in f.iter().enumerate().take(7) {
            let row = 24 * 64;
            let first = (0..64).find(|&x| fr.pixels[row + x] == 255).unwrap();
            assert_eq!(first, 8 * k, "frame {k}");
            assert_eq!(fr.pixels.iter().filter(|&&p| p == 255).count(), 256);
        }
    }

    #[test]
    fn square_must_fit() {
        assert!(matches!(
            synth_frames(&SynthKind::moving_square(8, 8, 2, 9, 1)),
            Err(Error::Parameter(_))
        ));
        assert!(synth_frames(&SynthKind::MovingSquare {
            width: 16,
            height: 16,
            frames: 2,
            size: 4,
            dx: 1,
            x0: 0,
            y0: 13
        })
        .is_err());
    }

    #[test]
    fn synthesis_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let kind = SynthKind::Noise {
            width: 16,
            height: 16,
            frames: 8,
            seed: 42,
        };
        synth_video(&kind, "x", dir.path().join("a")).unwrap();
        synth_video(&kind, "x", dir.path().join("b")).unwrap();
        assert_eq!(
            std::fs::read(dir.path().join("a")).unwrap(),
            std::fs::read(dir.path().join("b")).unwrap()
        );
    }
}
