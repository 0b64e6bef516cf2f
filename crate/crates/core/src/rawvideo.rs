//! Uncompressed 8-bit monochrome video files: frames concatenated row-major
//! in `video.raw`, described by a `video.meta` key/value sidecar.

use std::borrow::Cow;
use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameSource, Region, VideoBuffer};
use crate::textio::{fmt_f64, parse_entries, read_text, write_text};

pub const VIDEO_FILE: &str = "video.raw";
pub const META_FILE: &str = "video.meta";

#[derive(Debug, Clone, PartialEq)]
pub struct VideoMeta {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub frame_count: usize,
    /// Expert region of interest, when known.
    pub roi: Option<Region>,
}

impl VideoMeta {
    pub fn frame_bytes(&self) -> usize {
        self.width * self.height
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "width = {}\nheight = {}\nfps = {}\nframe_count = {}\n",
            self.width,
            self.height,
            fmt_f64(self.fps),
            self.frame_count
        );
        if let Some(r) = self.roi {
            s.push_str(&format!("roi = {},{},{},{}\n", r.row, r.col, r.height, r.width));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (mut width, mut height, mut fps, mut frame_count, mut roi) = (None, None, None, None, None);
        for e in parse_entries(text)? {
            match e.key.as_str() {
                "width" => width = Some(e.parse()?),
                "height" => height = Some(e.parse()?),
                "fps" => fps = Some(e.parse()?),
                "frame_count" => frame_count = Some(e.parse()?),
                "roi" => match e.parse_list::<usize>()?[..] {
                    [r, c, h, w] => roi = Some(Region::new(r, c, h, w)),
                    _ => return Err(e.error("expected `row,col,height,width`")),
                },
                _ => return Err(e.error("unknown key")),
            }
        }
        let missing = |k: &str| Error::Parse {
            line: text.lines().count().max(1),
            message: format!("missing `{k}`"),
        };
        Ok(Self {
            width: width.ok_or_else(|| missing("width"))?,
            height: height.ok_or_else(|| missing("height"))?,
            fps: fps.ok_or_else(|| missing("fps"))?,
            frame_count: frame_count.ok_or_else(|| missing("frame_count"))?,
            roi,
        })
    }
}

/// Appends frames to `video.raw`; `finish` writes the sidecar.
pub struct RawVideoWriter {
    dir: PathBuf,
    out: BufWriter<File>,
    meta: VideoMeta,
}

impl RawVideoWriter {
    pub fn create(dir: &Path, width: usize, height: usize, fps: f64, roi: Option<Region>) -> Result<Self> {
        let path = dir.join(VIDEO_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            out: BufWriter::new(file),
            meta: VideoMeta {
                width,
                height,
                fps,
                frame_count: 0,
                roi,
            },
        })
    }

    pub fn push(&mut self, frame: &Frame) -> Result<()> {
        if frame.width != self.meta.width || frame.height != self.meta.height {
            return Err(Error::Config(format!(
                "frame is {}x{}, video is {}x{}",
                frame.width, frame.height, self.meta.width, self.meta.height
            )));
        }
        self.out
            .write_all(&frame.data)
            .map_err(|e| Error::io(self.dir.join(VIDEO_FILE), e))?;
        self.meta.frame_count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<VideoMeta> {
        self.out.flush().map_err(|e| Error::io(self.dir.join(VIDEO_FILE), e))?;
        write_text(&self.dir.join(META_FILE), &self.meta.to_text())?;
        Ok(self.meta)
    }
}

pub fn write_video(dir: &Path, video: &VideoBuffer, roi: Option<Region>) -> Result<VideoMeta> {
    let mut w = RawVideoWriter::create(dir, video.width(), video.height(), video.fps, roi)?;
    for f in &video.frames {
        w.push(f)?;
    }
    w.finish()
}

/// Frames read on demand from a raw video file.
pub struct RawVideoFile {
    path: PathBuf,
    file: Mutex<File>,
    pub meta: VideoMeta,
}

impl RawVideoFile {
    pub fn open(dir: &Path) -> Result<Self> {
        let meta = VideoMeta::from_text(&read_text(&dir.join(META_FILE))?)?;
        let path = dir.join(VIDEO_FILE);
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let len = file.metadata().map_err(|e| Error::io(&path, e))?.len();
        let expected = (meta.frame_bytes() * meta.frame_count) as u64;
        if len != expected || meta.frame_count == 0 {
            return Err(Error::Config(format!(
                "{}: {len} bytes, metadata implies {expected}",
                path.display()
            )));
        }
        Ok(Self {
            path,
            file: Mutex::new(file),
            meta,
        })
    }

    pub fn load(&self) -> Result<VideoBuffer> {
        let frames = (0..self.meta.frame_count)
            .map(|i| self.frame(i).map(Cow::into_owned))
            .collect::<Result<Vec<_>>>()?;
        VideoBuffer::new(self.meta.fps, frames)
    }
}

impl FrameSource for RawVideoFile {
    fn frame_count(&self) -> usize {
        self.meta.frame_count
    }

    fn fps(&self) -> f64 {
        self.meta.fps
    }

    fn width(&self) -> usize {
        self.meta.width
    }

    fn height(&self) -> usize {
        self.meta.height
    }

    fn frame(&self, index: usize) -> Result<Cow<'_, Frame>> {
        if index >= self.meta.frame_count {
            return Err(Error::Config(format!("frame {index} out of range")));
        }
        let n = self.meta.frame_bytes();
        let mut data = vec![0u8; n];
        let mut file = self.file.lock().expect("video file lock poisoned");
        file.seek(SeekFrom::Start((index * n) as u64))
            .and_then(|_| file.read_exact(&mut data))
            .map_err(|e| Error::io(&self.path, e))?;
        Ok(Cow::Owned(Frame::new(
            self.meta.width,
            self.meta.height,
            index as f64 / self.meta.fps,
            data,
        )))
    }
}
