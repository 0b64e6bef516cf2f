//! Image blocks and their DC-normalized spatial representations.

use crate::error::{Error, Result};
use crate::frame::{Frame, Region};

/// Intensity patch cut from a frame, row-major `f64` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub origin: (usize, usize),
    pub timestamp: f64,
}

impl Block {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows < 2 || cols < 1 {
            return Err(Error::Config(format!("block {rows}x{cols} is too small")));
        }
        if data.len() != rows * cols {
            return Err(Error::Config("block buffer size mismatch".into()));
        }
        Ok(Self {
            rows,
            cols,
            data,
            origin: (0, 0),
            timestamp: 0.0,
        })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Config("ragged block rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_frame(frame: &Frame, region: Region) -> Result<Self> {
        if !region.fits(frame.height, frame.width) {
            return Err(Error::Config(format!(
                "region {region:?} outside {}x{} frame",
                frame.height, frame.width
            )));
        }
        let mut data = Vec::with_capacity(region.area());
        for r in region.row..region.row + region.height {
            data.extend(
                frame.row(r)[region.col..region.col + region.width]
                    .iter()
                    .map(|&v| v as f64),
            );
        }
        let mut b = Self::new(region.height, region.width, data)?;
        b.origin = (region.row, region.col);
        b.timestamp = frame.timestamp;
        Ok(b)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.cols];
        for row in self.data.chunks_exact(self.cols) {
            for (acc, v) in m.iter_mut().zip(row) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.rows as f64);
        m
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Indices of columns whose mean intensity is not positive.
    pub fn dark_columns(&self) -> Vec<usize> {
        self.column_means()
            .iter()
            .enumerate()
            .filter(|(_, &m)| !(m > 0.0))
            .map(|(i, _)| i)
            .collect()
    }

    /// Copy without the listed columns.
    pub fn without_columns(&self, drop: &[usize]) -> Result<Block> {
        let keep: Vec<usize> = (0..self.cols).filter(|c| !drop.contains(c)).collect();
        if keep.is_empty() {
            return Err(Error::Degenerate("every column of the block is dark".into()));
        }
        let data = (0..self.rows)
            .flat_map(|r| keep.iter().map(move |&c| (r, c)))
            .map(|(r, c)| self.get(r, c))
            .collect();
        Ok(Block {
            rows: self.rows,
            cols: keep.len(),
            data,
            origin: self.origin,
            timestamp: self.timestamp,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Normalization {
    /// Every column divided by its own mean.
    PerColumn,
    /// The whole block divided by its mean.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProfileKind {
    /// One vertical profile: the row means of the block.
    C1D,
    /// Every column as its own vertical profile.
    M1D,
    /// The whole patch.
    D2,
}

impl ProfileKind {
    pub const ALL: [ProfileKind; 3] = [ProfileKind::C1D, ProfileKind::M1D, ProfileKind::D2];

    pub fn as_str(self) -> &'static str {
        match self {
            ProfileKind::C1D => "c1d",
            ProfileKind::M1D => "m1d",
            ProfileKind::D2 => "2d",
        }
    }

    /// Normalization applied before building this kind of profile.
    pub fn normalization(self) -> Normalization {
        match self {
            ProfileKind::C1D | ProfileKind::M1D => Normalization::PerColumn,
            ProfileKind::D2 => Normalization::Global,
        }
    }
}

/// Divides the block by its mean (per column or globally), leaving every
/// normalized unit with mean exactly one.
pub fn dc_normalize(block: &Block, mode: Normalization) -> Result<Block> {
    let mut out = block.clone();
    match mode {
        Normalization::PerColumn => {
            let means = block.column_means();
            if let Some(c) = means.iter().position(|&m| !(m > 0.0)) {
                return Err(Error::Degenerate(format!("column {c} has zero mean")));
            }
            for row in out.data.chunks_exact_mut(block.cols) {
                for (v, m) in row.iter_mut().zip(&means) {
                    *v /= m;
                }
            }
        }
        Normalization::Global => {
            let m = block.mean();
            if !(m > 0.0) {
                return Err(Error::Degenerate("block has zero mean".into()));
            }
            out.data.iter_mut().for_each(|v| *v /= m);
        }
    }
    Ok(out)
}

/// Row-major 2-D array of profile samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Patch {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }
}

/// Spatial representation of one block.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSet {
    Combined(Vec<f64>),
    Columns(Vec<Vec<f64>>),
    Patch(Patch),
}

impl ProfileSet {
    pub fn kind(&self) -> ProfileKind {
        match self {
            ProfileSet::Combined(_) => ProfileKind::C1D,
            ProfileSet::Columns(_) => ProfileKind::M1D,
            ProfileSet::Patch(_) => ProfileKind::D2,
        }
    }

    /// (rows, number of profiles or columns).
    pub fn dims(&self) -> (usize, usize) {
        match self {
            ProfileSet::Combined(p) => (p.len(), 1),
            ProfileSet::Columns(c) => (c.first().map_or(0, Vec::len), c.len()),
            ProfileSet::Patch(p) => (p.rows, p.cols),
        }
    }

    /// Vertical 1-D profiles (C1D and M1D); `None` for a 2-D patch.
    pub fn vertical_profiles(&self) -> Option<Vec<&[f64]>> {
        match self {
            ProfileSet::Combined(p) => Some(vec![p.as_slice()]),
            ProfileSet::Columns(c) => Some(c.iter().map(Vec::as_slice).collect()),
            ProfileSet::Patch(_) => None,
        }
    }
}

/// Builds the requested representation from an already normalized block.
pub fn make_profile(block: &Block, kind: ProfileKind) -> ProfileSet {
    match kind {
        ProfileKind::C1D => ProfileSet::Combined(
            block
                .data
                .chunks_exact(block.cols)
                .map(|row| row.iter().sum::<f64>() / block.cols as f64)
                .collect(),
        ),
        ProfileKind::M1D => ProfileSet::Columns((0..block.cols).map(|c| block.column(c)).collect()),
        ProfileKind::D2 => ProfileSet::Patch(Patch {
            rows: block.rows,
            cols: block.cols,
            data: block.data.clone(),
        }),
    }
}

/// Normalization and profile extraction in one step, with dark columns dropped.
pub fn block_profile(block: &Block, kind: ProfileKind) -> Result<ProfileSet> {
    let dark = block.dark_columns();
    let normalized = if dark.is_empty() {
        dc_normalize(block, kind.normalization())?
    } else {
        dc_normalize(&block.without_columns(&dark)?, kind.normalization())?
    };
    Ok(make_profile(&normalized, kind))
}
