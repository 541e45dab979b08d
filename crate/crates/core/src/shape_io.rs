//! Binary mask loading, validation and boundary extraction.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::geom::{Cell, N4, N8};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Keep the largest 4-connected component instead of failing.
    pub allow_largest_component: bool,
    /// Fill enclosed background instead of failing.
    pub fill_holes: bool,
}

/// Validated shape mask with a guaranteed false margin of at least one cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    inside: Vec<bool>,
}

impl BinaryMask {
    /// Validate a raw raster and pad it with a one-cell false margin.
    pub fn new(width: usize, height: usize, inside: Vec<bool>, opts: LoadOptions) -> Result<Self> {
        if inside.len() != width * height {
            return Err(Error::Invalid(format!(
                "raster has {} cells, expected {}x{}",
                inside.len(),
                width,
                height
            )));
        }
        let (pw, ph) = (width + 2, height + 2);
        let mut padded = vec![false; pw * ph];
        for y in 0..height {
            for x in 0..width {
                padded[(y + 1) * pw + x + 1] = inside[y * width + x];
            }
        }
        Self::validated(pw, ph, padded, opts)
    }

    /// Build from a predicate over `width × height` cells, then pad.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let inside = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, inside, LoadOptions::default())
    }

    fn validated(width: usize, height: usize, mut inside: Vec<bool>, opts: LoadOptions) -> Result<Self> {
        if !inside.iter().any(|&b| b) {
            return Err(Error::EmptyShape);
        }
        let (labels, sizes) = label_components(width, height, &inside, true, &N4);
        if sizes.len() > 1 {
            if !opts.allow_largest_component {
                return Err(Error::MultipleComponents(sizes.len()));
            }
            let mut keep = 0;
            for (i, &s) in sizes.iter().enumerate() {
                if s > sizes[keep] {
                    keep = i;
                }
            }
            for (b, &l) in inside.iter_mut().zip(&labels) {
                *b = l == keep as u32 + 1;
            }
        }
        let (bg_labels, bg) = label_components(width, height, &inside, false, &N8);
        if bg.len() > 1 && opts.fill_holes {
            // the padded corner is always outside
            let outer = bg_labels[0];
            for (b, &l) in inside.iter_mut().zip(&bg_labels) {
                if !*b && l != outer {
                    *b = true;
                }
            }
        } else if bg.len() > 1 {
            return Err(Error::HasHoles(bg.len() - 1));
        }
        Ok(BinaryMask { width, height, inside })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    /// Out-of-range coordinates read as background.
    pub fn get(&self, x: i32, y: i32) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.inside[y as usize * self.width + x as usize]
    }

    pub fn area(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let w = self.width;
        self.inside
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| Cell::new((i % w) as i32, (i / w) as i32))
    }

    /// True cells with at least one false 8-neighbor.
    pub fn is_boundary(&self, x: i32, y: i32) -> bool {
        self.get(x, y) && N8.iter().any(|&(dx, dy)| !self.get(x + dx, y + dy))
    }

    /// Raster without the one-cell margin added at construction.
    pub fn unpadded(&self) -> (usize, usize, Vec<bool>) {
        let (w, h) = (self.width - 2, self.height - 2);
        let mut out = Vec::with_capacity(w * h);
        for y in 1..=h {
            out.extend_from_slice(&self.inside[y * self.width + 1..y * self.width + 1 + w]);
        }
        (w, h, out)
    }

    fn remap(&self, w: usize, h: usize, f: impl Fn(usize, usize) -> bool) -> BinaryMask {
        let inside = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        BinaryMask::new(w, h, inside, LoadOptions::default()).expect("transform preserves topology")
    }

    /// Rotate the unpadded raster by 90° counter-clockwise (as displayed).
    pub fn rotate90(&self) -> BinaryMask {
        let (w, h, r) = self.unpadded();
        self.remap(h, w, |x, y| r[x * w + (w - 1 - y)])
    }

    /// Pixel-replicating upscale by an integer factor.
    pub fn upscale(&self, k: usize) -> BinaryMask {
        let (w, h, r) = self.unpadded();
        self.remap(w * k, h * k, |x, y| r[(y / k) * w + x / k])
    }

    /// Add `left`/`top` empty columns/rows before the raster.
    pub fn translate(&self, left: usize, top: usize) -> BinaryMask {
        let (w, h, r) = self.unpadded();
        self.remap(w + left, h + top, |x, y| {
            x >= left && y >= top && r[(y - top) * w + x - left]
        })
    }

    /// Mirror the raster left-to-right.
    pub fn mirror_x(&self) -> BinaryMask {
        let (w, h, r) = self.unpadded();
        self.remap(w, h, |x, y| r[y * w + (w - 1 - x)])
    }

    /// Plain (P1) PBM text of the unpadded raster.
    pub fn to_pbm_ascii(&self) -> String {
        let (w, h, r) = self.unpadded();
        let mut s = format!("P1\n{w} {h}\n");
        for y in 0..h {
            let row: Vec<&str> = (0..w).map(|x| if r[y * w + x] { "1" } else { "0" }).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    /// Packed (P4) PBM bytes of the unpadded raster.
    pub fn to_pbm_binary(&self) -> Vec<u8> {
        let (w, h, r) = self.unpadded();
        let mut out = format!("P4\n{w} {h}\n").into_bytes();
        let stride = w.div_ceil(8);
        for y in 0..h {
            let mut row = vec![0u8; stride];
            for x in 0..w {
                if r[y * w + x] {
                    row[x / 8] |= 0x80 >> (x % 8);
                }
            }
            out.extend_from_slice(&row);
        }
        out
    }

    pub fn write_pbm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_pbm_binary()).map_err(|e| Error::io(path, e))
    }
}

/// Returns per-cell labels (0 = not of `value`) and component sizes.
fn label_components(
    width: usize,
    height: usize,
    grid: &[bool],
    value: bool,
    nbrs: &[(i32, i32)],
) -> (Vec<u32>, Vec<usize>) {
    let mut labels = vec![0u32; grid.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..grid.len() {
        if grid[start] != value || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        labels[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = ((i % width) as i32, (i / width) as i32);
            for &(dx, dy) in nbrs {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx as usize >= width || ny as usize >= height {
                    continue;
                }
                let j = ny as usize * width + nx as usize;
                if grid[j] == value && labels[j] == 0 {
                    labels[j] = id;
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

pub fn load_mask(path: &Path, opts: LoadOptions) -> Result<BinaryMask> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, inside) = parse_pbm(&bytes)?;
    BinaryMask::new(w, h, inside, opts)
}

/// Decode a P1 or P4 PBM image. `true` = black = shape interior.
pub fn parse_pbm(bytes: &[u8]) -> Result<(usize, usize, Vec<bool>)> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    let binary = match magic.as_slice() {
        b"P1" => false,
        b"P4" => true,
        _ => return Err(Error::Parse("not a PBM file (expected P1 or P4)".into())),
    };
    let w = parse_dim(&next_token(bytes, &mut pos)?)?;
    let h = parse_dim(&next_token(bytes, &mut pos)?)?;
    if w == 0 || h == 0 {
        return Err(Error::Parse("zero image dimension".into()));
    }
    let mut cells = Vec::with_capacity(w * h);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(Error::Parse("missing raster separator".into()));
        }
        pos += 1;
        let stride = w.div_ceil(8);
        let data = &bytes[pos..];
        if data.len() < stride * h {
            return Err(Error::Parse(format!(
                "raster truncated: {} of {} bytes",
                data.len(),
                stride * h
            )));
        }
        for y in 0..h {
            for x in 0..w {
                cells.push(data[y * stride + x / 8] & (0x80 >> (x % 8)) != 0);
            }
        }
    } else {
        while cells.len() < w * h {
            skip_space(bytes, &mut pos);
            match bytes.get(pos) {
                Some(b'0') => cells.push(false),
                Some(b'1') => cells.push(true),
                Some(&c) => return Err(Error::Parse(format!("unexpected byte {c:#04x} in raster"))),
                None => {
                    return Err(Error::Parse(format!(
                        "raster truncated: {} of {} cells",
                        cells.len(),
                        w * h
                    )))
                }
            }
            pos += 1;
        }
    }
    Ok((w, h, cells))
}

fn skip_space(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        if bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else if bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        } else {
            break;
        }
    }
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<Vec<u8>> {
    skip_space(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Parse("unexpected end of header".into()));
    }
    Ok(bytes[start..*pos].to_vec())
}

fn parse_dim(tok: &[u8]) -> Result<usize> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad dimension {:?}", String::from_utf8_lossy(tok))))
}

/// Closed cycle of boundary cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryCurve {
    /// Counter-clockwise as displayed (image y axis pointing down).
    pub cells: Vec<Cell>,
}

impl BoundaryCurve {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Trace the shape outline by following pixel cracks with the interior on the
/// right, inserting the diagonal cell at each concave corner so the result
/// covers every cell with a false 8-neighbor.
pub fn extract_boundary(mask: &BinaryMask) -> BoundaryCurve {
    let first = mask.cells().next().expect("validated mask is non-empty");
    // vertices are pixel corners; pixel (i, j) spans [i, i+1] × [j, j+1]
    let pixel = |vx: i32, vy: i32, qx: i32, qy: i32| mask.get(vx + (qx - 1) / 2, vy + (qy - 1) / 2);
    let (sx, sy) = (first.x, first.y);
    let (mut vx, mut vy) = (sx, sy);
    let (mut dx, mut dy) = (1i32, 0i32);
    let mut seq: Vec<Cell> = Vec::new();
    let push = |c: Cell, seq: &mut Vec<Cell>| {
        if seq.last() != Some(&c) {
            seq.push(c);
        }
    };
    let step_inside = |vx: i32, vy: i32, dx: i32, dy: i32| {
        let (rx, ry) = (-dy, dx);
        Cell::new(vx + (dx + rx - 1) / 2, vy + (dy + ry - 1) / 2)
    };
    let mut started = false;
    loop {
        let (rx, ry) = (-dy, dx);
        let ahead_right = pixel(vx, vy, dx + rx, dy + ry);
        let ahead_left = pixel(vx, vy, dx - rx, dy - ry);
        let concave = ahead_right && ahead_left;
        let (ndx, ndy) = if !ahead_right {
            (rx, ry)
        } else if ahead_left {
            (-rx, -ry)
        } else {
            (dx, dy)
        };
        if started && (vx, vy) == (sx, sy) && (ndx, ndy) == (1, 0) {
            break;
        }
        started = true;
        if concave {
            // the ahead-right cell touches background only diagonally
            push(step_inside(vx, vy, dx, dy), &mut seq);
        }
        (dx, dy) = (ndx, ndy);
        push(step_inside(vx, vy, dx, dy), &mut seq);
        vx += dx;
        vy += dy;
    }
    // the walk keeps the interior on the right, i.e. clockwise on screen
    seq.reverse();
    let mut seen = HashSet::new();
    let mut cells: Vec<Cell> = seq.into_iter().filter(|c| seen.insert(*c)).collect();
    if let Some(i) = cells.iter().position(|&c| c == first) {
        cells.rotate_left(i);
    }
    BoundaryCurve { cells }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(w: usize, h: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |_, _| true).unwrap()
    }

    #[test]
    fn single_cell_is_padded() {
        let (w, h, r) = parse_pbm(b"P1\n3 3\n0 0 0\n0 1 0\n0 0 0\n").unwrap();
        let m = BinaryMask::new(w, h, r, LoadOptions::default()).unwrap();
        assert_eq!((m.width(), m.height()), (5, 5));
        assert_eq!(m.area(), 1);
        assert!(m.get(2, 2));
        let b = extract_boundary(&m);
        assert_eq!(b.cells, vec![Cell::new(2, 2)]);
    }

    #[test]
    fn rejects_two_blocks_unless_allowed() {
        let txt = b"P1 6 2\n110011\n110111\n";
        let (w, h, r) = parse_pbm(txt).unwrap();
        assert!(matches!(
            BinaryMask::new(w, h, r.clone(), LoadOptions::default()),
            Err(Error::MultipleComponents(2))
        ));
        let m = BinaryMask::new(
            w,
            h,
            r,
            LoadOptions {
                allow_largest_component: true,
                ..LoadOptions::default()
            },
        )
        .unwrap();
        assert_eq!(m.area(), 5);
    }

    #[test]
    fn diagonal_touch_is_two_components() {
        let (w, h, r) = parse_pbm(b"P1 2 2 10 01").unwrap();
        assert!(matches!(
            BinaryMask::new(w, h, r, LoadOptions::default()),
            Err(Error::MultipleComponents(2))
        ));
    }

    #[test]
    fn rejects_hole() {
        let m = BinaryMask::from_fn(10, 10, |x, y| !((4..6).contains(&x) && (4..6).contains(&y)));
        assert!(matches!(m, Err(Error::HasHoles(1))));
        let inside = (0..100)
            .map(|i| !((4..6).contains(&(i % 10)) && (4..6).contains(&(i / 10))))
            .collect();
        let filled = BinaryMask::new(
            10,
            10,
            inside,
            LoadOptions {
                fill_holes: true,
                ..LoadOptions::default()
            },
        )
        .unwrap();
        assert_eq!(filled.area(), 100);
    }

    #[test]
    fn rejects_empty_and_garbage() {
        assert!(matches!(
            BinaryMask::from_fn(4, 4, |_, _| false),
            Err(Error::EmptyShape)
        ));
        assert!(matches!(parse_pbm(b"P2 1 1 1"), Err(Error::Parse(_))));
        assert!(matches!(parse_pbm(b"P1 2 2 1 1 1"), Err(Error::Parse(_))));
        assert!(matches!(parse_pbm(b"P4 9 2\n\x00"), Err(Error::Parse(_))));
    }

    #[test]
    fn p4_decodes_msb_first_with_row_padding() {
        let mut f = b"P4\n# comment\n10 2\n".to_vec();
        f.extend_from_slice(&[0b1000_0000, 0b0100_0000, 0b0000_0001, 0b1100_0000]);
        let (w, h, r) = parse_pbm(&f).unwrap();
        assert_eq!((w, h), (10, 2));
        let on: Vec<usize> = r.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
        assert_eq!(on, vec![0, 9, 17, 18, 19]);
    }

    #[test]
    fn boundary_counts() {
        assert_eq!(extract_boundary(&rect(10, 10)).len(), 36);
        assert_eq!(extract_boundary(&rect(20, 10)).len(), 56);
    }

    #[test]
    fn boundary_is_counter_clockwise() {
        let b = extract_boundary(&rect(5, 3));
        // shoelace with y flipped to point up
        let n = b.len();
        let area2: i64 = (0..n)
            .map(|i| {
                let (p, q) = (b.cells[i], b.cells[(i + 1) % n]);
                (p.x as i64) * (-q.y as i64) - (q.x as i64) * (-p.y as i64)
            })
            .sum();
        assert!(area2 > 0);
    }

    #[test]
    fn round_trips_through_both_encodings() {
        let m = BinaryMask::from_fn(11, 7, |x, y| x * y < 30 && (x + y) % 4 != 0 || y == 3).unwrap();
        let (w, h, r) = parse_pbm(m.to_pbm_ascii().as_bytes()).unwrap();
        assert_eq!(BinaryMask::new(w, h, r, LoadOptions::default()).unwrap(), m);
        let (w, h, r) = parse_pbm(&m.to_pbm_binary()).unwrap();
        assert_eq!(BinaryMask::new(w, h, r, LoadOptions::default()).unwrap(), m);
    }

    #[test]
    fn transforms_preserve_area() {
        let m = BinaryMask::from_fn(9, 5, |x, y| x + 2 * y < 12).unwrap();
        assert_eq!(m.rotate90().area(), m.area());
        assert_eq!(m.rotate90().rotate90().rotate90().rotate90(), m);
        assert_eq!(m.upscale(3).area(), 9 * m.area());
        assert_eq!(m.translate(4, 2).area(), m.area());
        assert_eq!(m.mirror_x().mirror_x(), m);
    }
}
