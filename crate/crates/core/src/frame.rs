//! Monochrome frames, rectangular regions and in-memory video.

use std::borrow::Cow;

use crate::error::{Error, Result};

/// Axis-aligned pixel rectangle, `row`/`col` of the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Region {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Region {
    pub fn new(row: usize, col: usize, height: usize, width: usize) -> Self {
        Self {
            row,
            col,
            height,
            width,
        }
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.height > 0 && self.width > 0 && self.row + self.height <= height && self.col + self.width <= width
    }

    /// Number of pixels shared with `other`.
    pub fn overlap(&self, other: &Region) -> usize {
        let r0 = self.row.max(other.row);
        let r1 = (self.row + self.height).min(other.row + other.height);
        let c0 = self.col.max(other.col);
        let c1 = (self.col + self.width).min(other.col + other.width);
        r1.saturating_sub(r0) * c1.saturating_sub(c0)
    }
}

/// One 8-bit monochrome image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub timestamp: f64,
    pub data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, timestamp: f64, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width * height, "frame buffer size mismatch");
        Self {
            width,
            height,
            timestamp,
            data,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Copies `region` out as a smaller frame.
    pub fn crop(&self, region: Region) -> Result<Frame> {
        if !region.fits(self.height, self.width) {
            return Err(Error::Config(format!(
                "region {region:?} exceeds {}x{} frame",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(region.area());
        for r in region.row..region.row + region.height {
            data.extend_from_slice(&self.row(r)[region.col..region.col + region.width]);
        }
        Ok(Frame::new(region.width, region.height, self.timestamp, data))
    }
}

/// Anything that can hand out frames by index.
pub trait FrameSource: Sync {
    fn frame_count(&self) -> usize;
    fn fps(&self) -> f64;
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn frame(&self, index: usize) -> Result<Cow<'_, Frame>>;
}

/// A fully materialized video sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoBuffer {
    pub fps: f64,
    pub frames: Vec<Frame>,
}

impl VideoBuffer {
    pub fn new(fps: f64, frames: Vec<Frame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Config("video has no frames".into()));
        }
        let (w, h) = (frames[0].width, frames[0].height);
        if frames.iter().any(|f| f.width != w || f.height != h) {
            return Err(Error::Config("frames differ in size".into()));
        }
        Ok(Self { fps, frames })
    }
}

impl FrameSource for VideoBuffer {
    fn frame_count(&self) -> usize {
        self.frames.len()
    }

    fn fps(&self) -> f64 {
        self.fps
    }

    fn width(&self) -> usize {
        self.frames[0].width
    }

    fn height(&self) -> usize {
        self.frames[0].height
    }

    fn frame(&self, index: usize) -> Result<Cow<'_, Frame>> {
        self.frames
            .get(index)
            .map(Cow::Borrowed)
            .ok_or_else(|| Error::Config(format!("frame {index} out of range")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_counts_shared_pixels() {
        let a = Region::new(0, 0, 12, 30);
        let b = Region::new(6, 10, 12, 30);
        assert_eq!(a.overlap(&b), 6 * 20);
        assert_eq!(a.overlap(&Region::new(12, 0, 4, 4)), 0);
    }

    #[test]
    fn crop_rejects_out_of_bounds() {
        let f = Frame::new(4, 3, 0.0, (0..12).collect());
        let c = f.crop(Region::new(1, 1, 2, 3)).unwrap();
        assert_eq!(c.data, vec![5, 6, 7, 9, 10, 11]);
        assert!(f.crop(Region::new(2, 0, 2, 1)).is_err());
    }
}
