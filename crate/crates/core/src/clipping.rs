//! Server-side gradient clipping.
//!
//! [`mac_clip`] anchors each entry on the vector-median of the received
//! gradient: entries whose deviation from the median exceeds `C` are pulled
//! back to `median +/- C`, all other entries pass through bit-for-bit.
//! [`gnc_clip`] is the classical norm-clipping baseline.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::param::ParamVector;

/// Server-side post-processing of the aggregated gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClipMethod {
    /// Median anchored clipping with threshold `C`.
    Mac(f64),
    /// Gradient norm clipping with threshold `C`.
    Gnc(f64),
    None,
}

impl ClipMethod {
    pub fn mac(c: f64) -> Result<Self> {
        check_threshold(c)?;
        Ok(ClipMethod::Mac(c))
    }

    pub fn gnc(c: f64) -> Result<Self> {
        check_threshold(c)?;
        Ok(ClipMethod::Gnc(c))
    }

    pub fn threshold(&self) -> Option<f64> {
        match *self {
            ClipMethod::Mac(c) | ClipMethod::Gnc(c) => Some(c),
            ClipMethod::None => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ClipMethod::Mac(c) | ClipMethod::Gnc(c) => check_threshold(c),
            ClipMethod::None => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClipMethod::Mac(_) => "mac",
            ClipMethod::Gnc(_) => "gnc",
            ClipMethod::None => "none",
        }
    }
}

fn check_threshold(c: f64) -> Result<()> {
    if !(c > 0.0) || c.is_nan() {
        return Err(Error::param("C", format!("clipping threshold {c} must be positive")));
    }
    Ok(())
}

/// Scalar median of the entries of `v`. Even lengths average the two middle
/// order statistics.
pub fn vector_median(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Empty("vector_median of an empty vector"));
    }
    let mut scratch = v.to_vec();
    Ok(median_in_place(&mut scratch))
}

/// Selection-based median; reorders `scratch`.
pub(crate) fn median_in_place(scratch: &mut [f64]) -> f64 {
    let n = scratch.len();
    let mid = n / 2;
    let (lower, upper_mid, _) = scratch.select_nth_unstable_by(mid, f64::total_cmp);
    let upper_mid = *upper_mid;
    if n % 2 == 1 {
        upper_mid
    } else {
        let lower_mid = lower
            .iter()
            .copied()
            .max_by(f64::total_cmp)
            .expect("even length >= 2");
        0.5 * (lower_mid + upper_mid)
    }
}

/// Clip window `[median - C, median + C]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Window {
    pub median: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn new(median: f64, c: f64) -> Self {
        Window {
            median,
            lo: median - c,
            hi: median + c,
        }
    }

    /// Centralize, clip, recover. A deviation of exactly `C` is kept.
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        if x > self.hi {
            self.hi
        } else if x < self.lo {
            self.lo
        } else {
            x
        }
    }

    #[inline]
    pub fn clips(&self, x: f64) -> bool {
        x > self.hi || x < self.lo
    }
}

pub(crate) fn mac_window(g: &[f64], c: f64) -> Result<Window> {
    check_threshold(c)?;
    Ok(Window::new(vector_median(g)?, c))
}

/// Median anchored clipping of one gradient block.
///
/// The median is taken once, before clipping, and reused for the recovery
/// step.
pub fn mac_clip(g: &[f64], c: f64) -> Result<ParamVector> {
    let window = mac_window(g, c)?;
    Ok(g.iter().map(|&x| window.apply(x)).collect())
}

fn mac_clip_in_place(g: &mut [f64], c: f64, scratch: &mut Vec<f64>) -> Result<BlockClipStats> {
    check_threshold(c)?;
    if g.is_empty() {
        return Err(Error::Empty("mac_clip of an empty block"));
    }
    scratch.clear();
    scratch.extend_from_slice(g);
    let window = Window::new(median_in_place(scratch), c);
    let mut clipped = 0;
    for x in g.iter_mut() {
        if window.clips(*x) {
            clipped += 1;
        }
        *x = window.apply(*x);
    }
    Ok(BlockClipStats {
        clipped,
        len: g.len(),
    })
}

/// Gradient norm clipping: `g * min(1, C / ||g||)`. Zero vectors pass through.
pub fn gnc_clip(g: &[f64], c: f64) -> Result<ParamVector> {
    let mut out = ParamVector::from(g);
    gnc_clip_in_place(&mut out, c)?;
    Ok(out)
}

fn gnc_clip_in_place(g: &mut [f64], c: f64) -> Result<BlockClipStats> {
    check_threshold(c)?;
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let clipped = norm > c;
    if clipped {
        let scale = c / norm;
        g.iter_mut().for_each(|x| *x *= scale);
    }
    Ok(BlockClipStats {
        clipped: if clipped { g.len() } else { 0 },
        len: g.len(),
    })
}

/// Lengths of the contiguous parameter blocks (one per layer tensor).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout(Vec<usize>);

impl BlockLayout {
    pub fn new(lengths: Vec<usize>) -> Result<Self> {
        if lengths.is_empty() || lengths.contains(&0) {
            return Err(Error::param("block_layout", "blocks must be non-empty"));
        }
        Ok(BlockLayout(lengths))
    }

    pub fn single(dim: usize) -> Self {
        BlockLayout(vec![dim.max(1)])
    }

    pub fn lengths(&self) -> &[usize] {
        &self.0
    }

    pub fn n_blocks(&self) -> usize {
        self.0.len()
    }

    pub fn dim(&self) -> usize {
        self.0.iter().sum()
    }

    /// Half-open index ranges of the blocks within the flat vector.
    pub fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.0.iter().scan(0usize, |start, &len| {
            let r = *start..*start + len;
            *start += len;
            Some(r)
        })
    }
}

/// A gradient split into per-layer blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockedGradient {
    pub blocks: Vec<ParamVector>,
}

impl BlockedGradient {
    pub fn from_flat(flat: &[f64], layout: &BlockLayout) -> Result<Self> {
        if flat.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                found: flat.len(),
            });
        }
        Ok(BlockedGradient {
            blocks: layout.ranges().map(|r| ParamVector::from(&flat[r])).collect(),
        })
    }

    pub fn layout(&self) -> Result<BlockLayout> {
        BlockLayout::new(self.blocks.iter().map(|b| b.len()).collect())
    }

    pub fn flatten(&self) -> ParamVector {
        self.blocks.iter().flat_map(|b| b.iter().copied()).collect()
    }
}

/// Apply `method` to every block independently with the same threshold.
pub fn apply_blockwise(g: &BlockedGradient, method: ClipMethod) -> Result<BlockedGradient> {
    let blocks = g
        .blocks
        .iter()
        .map(|b| match method {
            ClipMethod::Mac(c) => mac_clip(b, c),
            ClipMethod::Gnc(c) => gnc_clip(b, c),
            ClipMethod::None => Ok(b.clone()),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockedGradient { blocks })
}

/// Per-block outcome of an in-place clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockClipStats {
    pub clipped: usize,
    pub len: usize,
}

impl BlockClipStats {
    /// Fraction of entries changed by the clip. For GNC this is 0 or 1.
    pub fn clipped_fraction(&self) -> f64 {
        self.clipped as f64 / self.len as f64
    }
}

/// In-place block-wise clipping of a flat gradient, as used by the training
/// loop.
pub fn clip_flat_in_place(
    g: &mut [f64],
    layout: &BlockLayout,
    method: ClipMethod,
) -> Result<Vec<BlockClipStats>> {
    if g.len() != layout.dim() {
        return Err(Error::DimensionMismatch {
            expected: layout.dim(),
            found: g.len(),
        });
    }
    let mut scratch = Vec::new();
    layout
        .ranges()
        .map(|r| {
            let block = &mut g[r];
            match method {
                ClipMethod::Mac(c) => mac_clip_in_place(block, c, &mut scratch),
                ClipMethod::Gnc(c) => gnc_clip_in_place(block, c),
                ClipMethod::None => Ok(BlockClipStats {
                    clipped: 0,
                    len: block.len(),
                }),
            }
        })
        .collect()
}

/// Counts of MAC clip events for one vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipStatistics {
    pub clipped_count: usize,
    pub unclipped_fraction: f64,
}

/// How many entries MAC at threshold `C` would clip.
pub fn clip_statistics(g: &[f64], c: f64) -> Result<ClipStatistics> {
    let window = mac_window(g, c)?;
    let clipped_count = g.iter().filter(|&&x| window.clips(x)).count();
    Ok(ClipStatistics {
        clipped_count,
        unclipped_fraction: 1.0 - clipped_count as f64 / g.len() as f64,
    })
}

/// `sgn` with `sgn(0) = 0`.
pub(crate) fn sgn(x: f64) -> f64 {
    match x.partial_cmp(&0.0) {
        Some(Ordering::Greater) => 1.0,
        Some(Ordering::Less) => -1.0,
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    #[test]
    fn median_examples() {
        assert_eq!(vector_median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(vector_median(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
        assert_eq!(vector_median(&[5.0, 5.0, 5.0, 1e9]).unwrap(), 5.0);
        assert_eq!(vector_median(&[-7.0]).unwrap(), -7.0);
        assert!(matches!(vector_median(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn median_ignores_order() {
        let a = [9.0, -1.0, 4.0, 4.0, 0.5, 12.0];
        let mut b = a;
        b.reverse();
        assert_eq!(vector_median(&a).unwrap(), vector_median(&b).unwrap());
    }

    #[test]
    fn mac_examples() {
        assert_eq!(*mac_clip(&[1.0, 2.0, 3.0], 10.0).unwrap(), v(&[1.0, 2.0, 3.0]));
        assert_eq!(*mac_clip(&[0.0, 0.0, 100.0], 1.0).unwrap(), v(&[0.0, 0.0, 1.0]));
        assert_eq!(
            *mac_clip(&[10.0, 11.0, 12.0, 1e6], 2.0).unwrap(),
            v(&[10.0, 11.0, 12.0, 13.5])
        );
    }

    #[test]
    fn mac_rejects_bad_threshold() {
        assert!(mac_clip(&[1.0], 0.0).is_err());
        assert!(mac_clip(&[1.0], -1.0).is_err());
        assert!(mac_clip(&[1.0], f64::NAN).is_err());
        assert!(mac_clip(&[], 1.0).is_err());
    }

    #[test]
    fn mac_keeps_entries_at_exact_threshold() {
        // median 1, deviation of 3.0 is exactly C
        let out = mac_clip(&[-2.0, 1.0, 4.0], 3.0).unwrap();
        assert_eq!(*out, v(&[-2.0, 1.0, 4.0]));
        let stats = clip_statistics(&[-2.0, 1.0, 4.0], 3.0).unwrap();
        assert_eq!(stats.clipped_count, 0);
    }

    #[test]
    fn gnc_examples() {
        assert_eq!(*gnc_clip(&[3.0, 4.0], 10.0).unwrap(), v(&[3.0, 4.0]));
        assert_eq!(*gnc_clip(&[3.0, 4.0], 5.0).unwrap(), v(&[3.0, 4.0]));
        assert_eq!(*gnc_clip(&[6.0, 8.0], 5.0).unwrap(), v(&[3.0, 4.0]));
        assert_eq!(*gnc_clip(&[0.0, 0.0], 1.0).unwrap(), v(&[0.0, 0.0]));
        assert!(gnc_clip(&[1.0], 0.0).is_err());
    }

    #[test]
    fn blockwise_examples() {
        let layout = BlockLayout::new(vec![3, 3]).unwrap();
        let g = BlockedGradient::from_flat(&[0.0, 0.0, 100.0, 1.0, 2.0, 3.0], &layout).unwrap();
        let out = apply_blockwise(&g, ClipMethod::Mac(1.0)).unwrap();
        assert_eq!(*out.flatten(), v(&[0.0, 0.0, 1.0, 1.0, 2.0, 3.0]));

        assert_eq!(apply_blockwise(&g, ClipMethod::None).unwrap(), g);

        let g2 = BlockedGradient {
            blocks: vec![ParamVector::from(vec![6.0, 8.0])],
        };
        let out2 = apply_blockwise(&g2, ClipMethod::Gnc(5.0)).unwrap();
        assert_eq!(*out2.blocks[0], v(&[3.0, 4.0]));

        assert!(apply_blockwise(&g, ClipMethod::Mac(-1.0)).is_err());
    }

    #[test]
    fn flat_in_place_matches_blockwise() {
        let layout = BlockLayout::new(vec![4, 2, 3]).unwrap();
        let flat = [1.0, -50.0, 2.0, 3.0, 7.0, -7.0, 0.1, 0.2, 90.0];
        for method in [ClipMethod::Mac(0.5), ClipMethod::Gnc(3.0), ClipMethod::None] {
            let mut g = flat.to_vec();
            let stats = clip_flat_in_place(&mut g, &layout, method).unwrap();
            let expect = apply_blockwise(&BlockedGradient::from_flat(&flat, &layout).unwrap(), method)
                .unwrap()
                .flatten();
            assert_eq!(g, *expect);
            assert_eq!(stats.len(), 3);
        }
        let mut g = flat.to_vec();
        let stats = clip_flat_in_place(&mut g, &layout, ClipMethod::Mac(0.5)).unwrap();
        assert_eq!(stats[0].clipped, 2);
        assert_eq!(stats[1].clipped, 2);
        assert_eq!(stats[2].clipped, 1);
        assert!(clip_flat_in_place(&mut [0.0; 3], &layout, ClipMethod::None).is_err());
    }

    #[test]
    fn clip_statistics_examples() {
        let s = clip_statistics(&[0.0, 0.0, 100.0], 1.0).unwrap();
        assert_eq!(s.clipped_count, 1);
        assert!((s.unclipped_fraction - 2.0 / 3.0).abs() < 1e-15);
        let s = clip_statistics(&[1.0, 2.0, 3.0], 10.0).unwrap();
        assert_eq!(s.clipped_count, 0);
        assert_eq!(s.unclipped_fraction, 1.0);
    }

    #[test]
    fn layout_ranges() {
        let layout = BlockLayout::new(vec![2, 1, 3]).unwrap();
        let r: Vec<_> = layout.ranges().collect();
        assert_eq!(r, vec![0..2, 2..3, 3..6]);
        assert_eq!(layout.dim(), 6);
        assert!(BlockLayout::new(vec![]).is_err());
        assert!(BlockLayout::new(vec![1, 0]).is_err());
    }
}
