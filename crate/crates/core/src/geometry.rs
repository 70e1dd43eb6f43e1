//! Boxes, binary masks, and the overlap measures used by the matcher,
//! the association factor, and the track evaluator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned bounding box in corner form, pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    /// Corners are reordered if given inverted, so `x1 <= x2` and `y1 <= y2`
    /// always hold.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self {
            x1: x1.min(x2),
            y1: y1.min(y2),
            x2: x1.max(x2),
            y2: y1.max(y2),
        }
    }

    pub fn from_cxcywh(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Center/size view `(cx, cy, w, h)` in pixels.
    pub fn to_cxcywh(&self) -> [f64; 4] {
        [
            (self.x1 + self.x2) / 2.0,
            (self.y1 + self.y2) / 2.0,
            self.width(),
            self.height(),
        ]
    }

    /// Center/size view normalized by the frame dimensions; components lie in
    /// `[0, 1]` whenever the box is inside the frame.
    pub fn to_cxcywh_norm(&self, frame: FrameSize) -> [f64; 4] {
        let [cx, cy, w, h] = self.to_cxcywh();
        let fw = frame.width as f64;
        let fh = frame.height as f64;
        [cx / fw, cy / fh, w / fw, h / fh]
    }

    /// Intersection area with another box; zero when disjoint.
    pub fn intersection(&self, other: &BBox) -> f64 {
        let iw = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let ih = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        iw * ih
    }

    /// Smallest box enclosing both.
    pub fn hull(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    /// Clamp the box to the frame rectangle.
    pub fn clip(&self, frame: FrameSize) -> BBox {
        let fw = frame.width as f64;
        let fh = frame.height as f64;
        BBox {
            x1: self.x1.clamp(0.0, fw),
            y1: self.y1.clamp(0.0, fh),
            x2: self.x2.clamp(0.0, fw),
            y2: self.y2.clamp(0.0, fh),
        }
    }
}

/// Frame dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSize {
    pub width: u32,
    pub height: u32,
}

impl FrameSize {
    pub fn new(width: u32, height: u32) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be positive");
        Self { width, height }
    }
}

/// Intersection over union of two boxes. Zero when the union is degenerate.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Generalized IoU: IoU minus the fraction of the enclosing hull not covered
/// by the union. Zero when the hull is degenerate.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b);
    let union = a.area() + b.area() - inter;
    let hull_area = a.hull(b).area();
    if hull_area <= 0.0 {
        return 0.0;
    }
    let iou = if union <= 0.0 { 0.0 } else { inter / union };
    iou - (hull_area - union) / hull_area
}

/// Sum of absolute differences of the normalized `(cx, cy, w, h)` views.
pub fn l1_box_distance(a: &BBox, b: &BBox, frame: FrameSize) -> f64 {
    let an = a.to_cxcywh_norm(frame);
    let bn = b.to_cxcywh_norm(frame);
    an.iter().zip(bn.iter()).map(|(x, y)| (x - y).abs()).sum()
}

/// Binary mask stored as a row-major bit grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; (width as usize) * (height as usize)],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != (width as usize) * (height as usize) {
            return Err(Error::MalformedRle(format!(
                "bit count {} does not equal {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// Rasterize a box: a pixel is set when its center falls inside the box.
    pub fn from_box(bbox: &BBox, frame: FrameSize) -> Self {
        let mut mask = Mask::new(frame.width, frame.height);
        let clipped = bbox.clip(frame);
        let x_lo = clipped.x1.floor().max(0.0) as u32;
        let x_hi = (clipped.x2.ceil() as u32).min(frame.width);
        let y_lo = clipped.y1.floor().max(0.0) as u32;
        let y_hi = (clipped.y2.ceil() as u32).min(frame.height);
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                if cx >= clipped.x1 && cx < clipped.x2 && cy >= clipped.y1 && cy < clipped.y2 {
                    mask.set(x, y, true);
                }
            }
        }
        mask
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y as usize) * (self.width as usize) + (x as usize)]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[(y as usize) * (self.width as usize) + (x as usize)] = value;
    }

    /// Number of set pixels.
    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Tight bounds of the set pixels as `(x0, y0, x1, y1)` with exclusive
    /// upper corners, or `None` for an empty mask.
    pub fn tight_bounds(&self) -> Option<(u32, u32, u32, u32)> {
        let (mut x0, mut y0) = (u32::MAX, u32::MAX);
        let (mut x1, mut y1) = (0u32, 0u32);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    any = true;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                }
            }
        }
        any.then_some((x0, y0, x1, y1))
    }

    /// Count of pixels set in both masks. Dimensions must match.
    pub fn intersection_count(&self, other: &Mask) -> Result<usize> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::MaskDimMismatch {
                expected: (self.width, self.height),
                got: (other.width, other.height),
            });
        }
        Ok(self
            .bits
            .iter()
            .zip(other.bits.iter())
            .filter(|(&a, &b)| a && b)
            .count())
    }

    /// Encode as uncompressed column-major run lengths, alternating runs of
    /// zeros and ones and starting with zeros.
    pub fn to_rle(&self) -> Rle {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run: u32 = 0;
        for x in 0..self.width {
            for y in 0..self.height {
                let bit = self.get(x, y);
                if bit == current {
                    run += 1;
                } else {
                    counts.push(run);
                    current = bit;
                    run = 1;
                }
            }
        }
        counts.push(run);
        Rle {
            size: [self.height, self.width],
            counts,
        }
    }
}

/// Run-length encoding of a binary mask, column-major with counts alternating
/// zero/one runs and starting with zeros. `size` is `[height, width]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

impl Rle {
    pub fn decode(&self) -> Result<Mask> {
        let [height, width] = self.size;
        let total: u64 = self.counts.iter().map(|&c| c as u64).sum();
        let expected = (width as u64) * (height as u64);
        if total != expected {
            return Err(Error::MalformedRle(format!(
                "counts sum to {total}, expected {expected} for {width}x{height}"
            )));
        }
        let mut mask = Mask::new(width, height);
        let mut idx: u64 = 0;
        let mut value = false;
        for &run in &self.counts {
            for _ in 0..run {
                if value {
                    let x = (idx / height as u64) as u32;
                    let y = (idx % height as u64) as u32;
                    mask.set(x, y, true);
                }
                idx += 1;
            }
            value = !value;
        }
        Ok(mask)
    }
}

/// IoU of two equally-sized masks. Both empty counts as a perfect match.
pub fn mask_iou(a: &Mask, b: &Mask) -> Result<f64> {
    let inter = a.intersection_count(b)?;
    let union = a.area() + b.area() - inter;
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}

/// Per-frame spatial extent of a track record.
#[derive(Debug, Clone)]
pub enum Region {
    Box(BBox),
    Mask(Mask),
}

impl Region {
    fn area(&self) -> f64 {
        match self {
            Region::Box(b) => b.area(),
            Region::Mask(m) => m.area() as f64,
        }
    }

    fn enclosing_box(&self) -> BBox {
        match self {
            Region::Box(b) => *b,
            Region::Mask(m) => match m.tight_bounds() {
                Some((x0, y0, x1, y1)) => {
                    BBox::new(x0 as f64, y0 as f64, x1 as f64, y1 as f64)
                }
                None => BBox::new(0.0, 0.0, 0.0, 0.0),
            },
        }
    }

    /// Intersection area. Mask pairs must share dimensions; a mixed pair
    /// falls back to comparing enclosing boxes.
    fn intersection(&self, other: &Region) -> Result<(f64, f64, f64)> {
        match (self, other) {
            (Region::Box(a), Region::Box(b)) => Ok((a.intersection(b), a.area(), b.area())),
            (Region::Mask(a), Region::Mask(b)) => Ok((
                a.intersection_count(b)? as f64,
                a.area() as f64,
                b.area() as f64,
            )),
            _ => {
                let a = self.enclosing_box();
                let b = other.enclosing_box();
                Ok((a.intersection(&b), a.area(), b.area()))
            }
        }
    }
}

/// Spatio-temporal track IoU: sum of per-frame intersections over sum of
/// per-frame unions, with absent frames contributing empty regions. Frame
/// indices must be strictly increasing within each sequence.
pub fn track_st_iou(a: &[(u64, Region)], b: &[(u64, Region)]) -> Result<f64> {
    debug_assert!(a.windows(2).all(|w| w[0].0 < w[1].0));
    debug_assert!(b.windows(2).all(|w| w[0].0 < w[1].0));

    let mut inter_sum = 0.0;
    let mut union_sum = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() || j < b.len() {
        let fa = a.get(i).map(|r| r.0);
        let fb = b.get(j).map(|r| r.0);
        match (fa, fb) {
            (Some(f1), Some(f2)) if f1 == f2 => {
                let (inter, area_a, area_b) = a[i].1.intersection(&b[j].1)?;
                inter_sum += inter;
                union_sum += area_a + area_b - inter;
                i += 1;
                j += 1;
            }
            (Some(f1), Some(f2)) if f1 < f2 => {
                union_sum += a[i].1.area();
                i += 1;
            }
            (Some(_), Some(_)) => {
                union_sum += b[j].1.area();
                j += 1;
            }
            (Some(_), None) => {
                union_sum += a[i].1.area();
                i += 1;
            }
            (None, Some(_)) => {
                union_sum += b[j].1.area();
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    if union_sum <= 0.0 {
        Ok(0.0)
    } else {
        Ok(inter_sum / union_sum)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Pixel-count oracle: rasterize both boxes on a unit grid and count
    /// cells. Exact for integer-coordinate boxes.
    fn rasterized_iou(a: &BBox, b: &BBox) -> f64 {
        let x_lo = a.x1.min(b.x1).floor() as i64;
        let x_hi = a.x2.max(b.x2).ceil() as i64;
        let y_lo = a.y1.min(b.y1).floor() as i64;
        let y_hi = a.y2.max(b.y2).ceil() as i64;
        let mut inter = 0u64;
        let mut union = 0u64;
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                let in_a = cx > a.x1 && cx < a.x2 && cy > a.y1 && cy < a.y2;
                let in_b = cx > b.x1 && cx < b.x2 && cy > b.y1 && cy < b.y2;
                if in_a && in_b {
                    inter += 1;
                }
                if in_a || in_b {
                    union += 1;
                }
            }
        }
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    fn int_box() -> impl Strategy<Value = BBox> {
        (0i64..40, 0i64..40, 1i64..20, 1i64..20).prop_map(|(x, y, w, h)| {
            BBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64)
        })
    }

    fn real_box() -> impl Strategy<Value = BBox> {
        (0.0f64..100.0, 0.0f64..100.0, 0.01f64..50.0, 0.01f64..50.0)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h))
    }

    #[test]
    fn iou_identity() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_disjoint() {
        let a = BBox::new(0.0, 0.0, 1.0, 1.0);
        let b = BBox::new(2.0, 2.0, 3.0, 3.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_partial_overlap_matches_rasterization() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        let b = BBox::new(1.0, 1.0, 3.0, 3.0);
        assert_relative_eq!(iou(&a, &b), 1.0 / 7.0, max_relative = 1e-12);
        assert_relative_eq!(iou(&a, &b), rasterized_iou(&a, &b), epsilon = 1e-6);
    }

    #[test]
    fn iou_degenerate_box_is_zero() {
        let a = BBox::new(1.0, 1.0, 1.0, 1.0);
        assert_eq!(iou(&a, &a), 0.0);
    }

    #[test]
    fn giou_identity() {
        let a = BBox::new(0.0, 0.0, 1.0, 1.0);
        assert_eq!(giou(&a, &a), 1.0);
    }

    #[test]
    fn giou_touching_boxes() {
        // inter 0, union 2, hull 2
        let a = BBox::new(0.0, 0.0, 1.0, 1.0);
        let b = BBox::new(1.0, 0.0, 2.0, 1.0);
        assert_relative_eq!(giou(&a, &b), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn giou_separated_boxes() {
        // inter 0, union 2, hull 10
        let a = BBox::new(0.0, 0.0, 1.0, 1.0);
        let b = BBox::new(9.0, 0.0, 10.0, 1.0);
        assert_relative_eq!(giou(&a, &b), -0.8, epsilon = 1e-12);
    }

    #[test]
    fn l1_distance_examples() {
        let frame = FrameSize::new(10, 10);
        let a = BBox::from_cxcywh(5.0, 5.0, 2.0, 2.0);
        let b = BBox::from_cxcywh(6.0, 5.0, 2.0, 2.0);
        assert_eq!(l1_box_distance(&a, &a, frame), 0.0);
        assert_relative_eq!(l1_box_distance(&a, &b, frame), 0.1, epsilon = 1e-12);
        assert_eq!(
            l1_box_distance(&a, &b, frame),
            l1_box_distance(&b, &a, frame)
        );
    }

    #[test]
    fn mask_iou_examples() {
        let mut a = Mask::new(2, 2);
        a.set(0, 0, true);
        a.set(1, 0, true); // {(0,0),(0,1)} in (row, col) terms
        let mut b = Mask::new(2, 2);
        b.set(1, 0, true);
        b.set(1, 1, true); // {(0,1),(1,1)}
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        assert_relative_eq!(mask_iou(&a, &b).unwrap(), 1.0 / 3.0, epsilon = 1e-12);

        let mut c = Mask::new(2, 2);
        c.set(0, 1, true);
        assert_eq!(mask_iou(&a, &c).unwrap(), 0.0);
    }

    #[test]
    fn mask_iou_both_empty_is_one() {
        let a = Mask::new(3, 3);
        let b = Mask::new(3, 3);
        assert_eq!(mask_iou(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn mask_iou_dimension_mismatch() {
        let a = Mask::new(2, 2);
        let b = Mask::new(3, 2);
        assert!(matches!(
            mask_iou(&a, &b),
            Err(Error::MaskDimMismatch { .. })
        ));
    }

    #[test]
    fn rle_roundtrip_zero_and_saturated() {
        let zeros = Mask::new(4, 4);
        assert_eq!(zeros.to_rle().decode().unwrap(), zeros);
        assert_eq!(zeros.to_rle().counts, vec![16]);

        let ones = Mask::from_bits(4, 4, vec![true; 16]).unwrap();
        assert_eq!(ones.to_rle().decode().unwrap(), ones);
        assert_eq!(ones.to_rle().counts, vec![0, 16]);
    }

    #[test]
    fn rle_decode_rejects_bad_total() {
        let rle = Rle {
            size: [2, 2],
            counts: vec![3],
        };
        assert!(matches!(rle.decode(), Err(Error::MalformedRle(_))));
    }

    #[test]
    fn rle_is_column_major() {
        // 2x3 mask (h=2, w=3) with only pixel (x=1, y=0) set: column-major
        // order visits (0,0),(0,1),(1,0),(1,1),(2,0),(2,1) -> runs 2,1,3.
        let mut m = Mask::new(3, 2);
        m.set(1, 0, true);
        let rle = m.to_rle();
        assert_eq!(rle.size, [2, 3]);
        assert_eq!(rle.counts, vec![2, 1, 3]);
    }

    #[test]
    fn track_st_iou_identity_and_disjoint() {
        let a = vec![
            (0, Region::Box(BBox::new(0.0, 0.0, 2.0, 2.0))),
            (1, Region::Box(BBox::new(1.0, 0.0, 3.0, 2.0))),
        ];
        assert_eq!(track_st_iou(&a, &a).unwrap(), 1.0);

        let b = vec![(5, Region::Box(BBox::new(0.0, 0.0, 2.0, 2.0)))];
        assert_eq!(track_st_iou(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn track_st_iou_mixed_frame_overlap() {
        // frame 0: identical boxes (inter 4, union 4); frame 1: equal-area
        // disjoint boxes (inter 0, union 8) -> 4/12
        let a = vec![
            (0, Region::Box(BBox::new(0.0, 0.0, 2.0, 2.0))),
            (1, Region::Box(BBox::new(0.0, 0.0, 2.0, 2.0))),
        ];
        let b = vec![
            (0, Region::Box(BBox::new(0.0, 0.0, 2.0, 2.0))),
            (1, Region::Box(BBox::new(10.0, 10.0, 12.0, 12.0))),
        ];
        assert_relative_eq!(track_st_iou(&a, &b).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn track_st_iou_masks() {
        let frame = FrameSize::new(8, 8);
        let m1 = Mask::from_box(&BBox::new(0.0, 0.0, 4.0, 4.0), frame);
        let m2 = Mask::from_box(&BBox::new(0.0, 0.0, 4.0, 4.0), frame);
        let a = vec![(0, Region::Mask(m1))];
        let b = vec![(0, Region::Mask(m2))];
        assert_eq!(track_st_iou(&a, &b).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in real_box(), b in real_box()) {
            let ab = iou(&a, &b);
            let ba = iou(&b, &a);
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn iou_self_is_one(a in real_box()) {
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn giou_never_exceeds_iou(a in real_box(), b in real_box()) {
            let g = giou(&a, &b);
            let i = iou(&a, &b);
            prop_assert!(g <= i + 1e-12);
            prop_assert!((giou(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn iou_matches_rasterization_on_integer_boxes(a in int_box(), b in int_box()) {
            prop_assert!((iou(&a, &b) - rasterized_iou(&a, &b)).abs() < 1e-6);
        }

        #[test]
        fn l1_distance_is_a_metric(a in real_box(), b in real_box(), c in real_box()) {
            let frame = FrameSize::new(100, 100);
            let dab = l1_box_distance(&a, &b, frame);
            let dba = l1_box_distance(&b, &a, frame);
            let dac = l1_box_distance(&a, &c, frame);
            let dcb = l1_box_distance(&c, &b, frame);
            prop_assert!(dab >= 0.0);
            prop_assert!((dab - dba).abs() < 1e-12);
            prop_assert!(dab <= dac + dcb + 1e-12);
        }

        #[test]
        fn rle_roundtrip_random_masks(bits in proptest::collection::vec(any::<bool>(), 256)) {
            let mask = Mask::from_bits(16, 16, bits).unwrap();
            prop_assert_eq!(mask.to_rle().decode().unwrap(), mask);
        }
    }
}
