//! Fixed-capacity bit storage for memory-bounded policies.
//!
//! Everything a bounded policy remembers between rounds lives in a
//! [`BitLedger`]. Regions are carved out once and never freed, so the
//! ledger's `bits_used` is the policy's memory footprint. Inside a region,
//! integers are stored least-significant bit first.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::LoadVector;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionHandle {
    offset: u64,
    width: u64,
    label: String,
}

impl RegionHandle {
    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn width(&self) -> u64 {
        self.width
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

#[derive(Debug, Clone)]
pub struct BitLedger {
    capacity: u64,
    used: u64,
    words: Vec<u64>,
    regions: Vec<RegionHandle>,
}

fn mask(width: u32) -> u64 {
    if width == 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Bits needed to store any value in `0..=max`.
pub fn bits_for(max: u64) -> u32 {
    64 - max.leading_zeros()
}

impl BitLedger {
    pub fn new(capacity: u64) -> Self {
        BitLedger {
            capacity,
            used: 0,
            words: Vec::new(),
            regions: Vec::new(),
        }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn bits_used(&self) -> u64 {
        self.used
    }

    pub fn regions(&self) -> &[RegionHandle] {
        &self.regions
    }

    pub fn alloc_region(&mut self, width: u64, label: &str) -> Result<RegionHandle> {
        let end = self.used.checked_add(width).filter(|&e| e <= self.capacity);
        let Some(end) = end else {
            return Err(Error::BudgetExceeded {
                used: self.used,
                requested: width,
                capacity: self.capacity,
            });
        };
        let region = RegionHandle {
            offset: self.used,
            width,
            label: label.to_string(),
        };
        self.used = end;
        self.words.resize(end.div_ceil(64) as usize, 0);
        self.regions.push(region.clone());
        Ok(region)
    }

    fn check(&self, region: &RegionHandle, offset: u64, width: u32) -> Result<u64> {
        if width > 64 || offset.checked_add(width as u64).is_none_or(|e| e > region.width) {
            return Err(Error::OutOfBounds {
                offset,
                width,
                region_width: region.width,
            });
        }
        Ok(region.offset + offset)
    }

    pub fn read_uint(&self, region: &RegionHandle, offset: u64, width: u32) -> Result<u64> {
        let pos = self.check(region, offset, width)?;
        Ok(self.read_raw(pos, width))
    }

    pub fn write_uint(&mut self, region: &RegionHandle, offset: u64, width: u32, value: u64) -> Result<()> {
        let pos = self.check(region, offset, width)?;
        if value & !mask(width) != 0 {
            return Err(Error::ValueTooWide { value, width });
        }
        self.write_raw(pos, width, value);
        Ok(())
    }

    pub fn get_bit(&self, region: &RegionHandle, offset: u64) -> Result<bool> {
        Ok(self.read_uint(region, offset, 1)? == 1)
    }

    pub fn set_bit(&mut self, region: &RegionHandle, offset: u64, value: bool) -> Result<()> {
        self.write_uint(region, offset, 1, value as u64)
    }

    /// Zeroes every bit of `region`.
    pub fn clear_region(&mut self, region: &RegionHandle) -> Result<()> {
        let mut off = 0;
        while off < region.width {
            let w = (region.width - off).min(64) as u32;
            self.write_uint(region, off, w, 0)?;
            off += w as u64;
        }
        Ok(())
    }

    /// Number of set bits in `region`.
    pub fn count_ones(&self, region: &RegionHandle) -> Result<u64> {
        let mut off = 0;
        let mut ones = 0;
        while off < region.width {
            let w = (region.width - off).min(64) as u32;
            ones += self.read_uint(region, off, w)?.count_ones() as u64;
            off += w as u64;
        }
        Ok(ones)
    }

    fn read_raw(&self, pos: u64, width: u32) -> u64 {
        if width == 0 {
            return 0;
        }
        let word = (pos / 64) as usize;
        let shift = (pos % 64) as u32;
        let mut v = self.words[word] >> shift;
        if shift + width > 64 {
            v |= self.words[word + 1] << (64 - shift);
        }
        v & mask(width)
    }

    fn write_raw(&mut self, pos: u64, width: u32, value: u64) {
        if width == 0 {
            return;
        }
        let word = (pos / 64) as usize;
        let shift = (pos % 64) as u32;
        let m = mask(width);
        self.words[word] = (self.words[word] & !(m << shift)) | (value << shift);
        if shift + width > 64 {
            let hi = 64 - shift;
            let m_hi = m >> hi;
            self.words[word + 1] = (self.words[word + 1] & !m_hi) | (value >> hi);
        }
    }

    /// Hex dump of the used bits (byte `i` holds bits `8i..8i+8`, LSB first)
    /// followed by the region table.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        let bytes = self.used.div_ceil(8);
        let _ = writeln!(out, "ledger capacity={} used={}", self.capacity, self.used);
        for i in 0..bytes {
            let width = (self.used - i * 8).min(8) as u32;
            let b = self.read_raw(i * 8, width);
            let _ = write!(out, "{b:02x}");
        }
        out.push('\n');
        let _ = writeln!(out, "{:>10} {:>10}  label", "offset", "width");
        for r in &self.regions {
            let _ = writeln!(out, "{:>10} {:>10}  {}", r.offset, r.width, r.label);
        }
        out
    }
}

/// A sequence of bits, used for the unary load encoding.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitString(Vec<bool>);

impl BitString {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Format(format!("unexpected character {other:?} in bit string"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(BitString)
    }
}

impl std::fmt::Display for BitString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &b in &self.0 {
            f.write_char(if b { '1' } else { '0' })?;
        }
        Ok(())
    }
}

/// Unary encoding of a load vector: `N(i)` zeros per bin, bins separated by
/// a single one. Length is `n + b - 1`.
pub fn unary_encode(loads: &LoadVector) -> BitString {
    let n = loads.n();
    let mut bits = Vec::with_capacity((n as u64 + loads.total()).saturating_sub(1) as usize);
    for (i, &c) in loads.counts().iter().enumerate() {
        if i > 0 {
            bits.push(true);
        }
        bits.extend(std::iter::repeat_n(false, c as usize));
    }
    BitString(bits)
}

pub fn unary_decode(bits: &BitString, n: usize) -> Result<LoadVector> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let separators = bits.0.iter().filter(|&&b| b).count();
    if separators != n - 1 {
        return Err(Error::Format(format!(
            "expected {} separators for n={n}, found {separators}",
            n - 1
        )));
    }
    let mut counts = Vec::with_capacity(n);
    let mut run = 0u32;
    for &b in &bits.0 {
        if b {
            counts.push(run);
            run = 0;
        } else {
            run += 1;
        }
    }
    counts.push(run);
    Ok(LoadVector::from_counts(counts))
}
