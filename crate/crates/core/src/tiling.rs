//! Slicing a composite thumbnail sheet into tiles.
//!
//! Tile `(r, c)` spans `x ∈ [c·⌊W/cols⌋, (c+1)·⌊W/cols⌋)`, except the last
//! column, which runs to the right edge (rows likewise). Tiles are disjoint
//! and cover the sheet exactly.

use image::{imageops, RgbaImage};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("image could not be decoded: {0}")]
    ImageFormat(String),
    #[error("{width}x{height} image is too small for a {rows}x{cols} grid")]
    TooSmall {
        width: u32,
        height: u32,
        rows: u32,
        cols: u32,
    },
    #[error("tile layout does not form a {rows}x{cols} grid")]
    Layout { rows: u32, cols: u32 },
}

/// Start offsets and lengths of `parts` bands over `len` pixels.
pub fn bands(len: u32, parts: u32) -> Vec<(u32, u32)> {
    let step = len / parts;
    (0..parts)
        .map(|i| {
            let start = i * step;
            let end = if i + 1 == parts { len } else { start + step };
            (start, end - start)
        })
        .collect()
}

pub fn slice_image(img: &RgbaImage, rows: u32, cols: u32) -> Result<Vec<RgbaImage>, GridError> {
    let (w, h) = img.dimensions();
    if rows == 0 || cols == 0 || w < cols || h < rows {
        return Err(GridError::TooSmall {
            width: w,
            height: h,
            rows,
            cols,
        });
    }
    let xs = bands(w, cols);
    let ys = bands(h, rows);
    let mut tiles = Vec::with_capacity((rows * cols) as usize);
    for &(y, th) in &ys {
        for &(x, tw) in &xs {
            tiles.push(imageops::crop_imm(img, x, y, tw, th).to_image());
        }
    }
    Ok(tiles)
}

/// Decode a PNG sheet and slice it into `rows × cols` tiles, row-major.
pub fn slice_grid(png: &[u8], rows: u32, cols: u32) -> Result<Vec<RgbaImage>, GridError> {
    let img = image::load_from_memory(png)
        .map_err(|e| GridError::ImageFormat(e.to_string()))?
        .to_rgba8();
    slice_image(&img, rows, cols)
}

/// Put row-major tiles back together.
pub fn stitch(tiles: &[RgbaImage], rows: u32, cols: u32) -> Result<RgbaImage, GridError> {
    let layout = GridError::Layout { rows, cols };
    if rows == 0 || cols == 0 || tiles.len() != (rows * cols) as usize {
        return Err(layout);
    }
    let widths: Vec<u32> = tiles[..cols as usize].iter().map(|t| t.width()).collect();
    let heights: Vec<u32> = (0..rows as usize)
        .map(|r| tiles[r * cols as usize].height())
        .collect();
    let mut out = RgbaImage::new(widths.iter().sum(), heights.iter().sum());
    let mut y = 0;
    for r in 0..rows as usize {
        let mut x = 0;
        for c in 0..cols as usize {
            let tile = &tiles[r * cols as usize + c];
            if tile.width() != widths[c] || tile.height() != heights[r] {
                return Err(layout);
            }
            imageops::replace(&mut out, tile, x as i64, y as i64);
            x += widths[c];
        }
        y += heights[r];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgba;

    fn gradient(w: u32, h: u32) -> RgbaImage {
        RgbaImage::from_fn(w, h, |x, y| Rgba([(x % 256) as u8, (y % 256) as u8, ((x * 7 + y) % 256) as u8, 255]))
    }

    #[test]
    fn exact_division() {
        let tiles = slice_image(&gradient(9, 9), 3, 3).unwrap();
        assert_eq!(tiles.len(), 9);
        assert!(tiles.iter().all(|t| t.dimensions() == (3, 3)));
        // row-major: tile 1 starts at x = 3
        assert_eq!(tiles[1].get_pixel(0, 0), gradient(9, 9).get_pixel(3, 0));
        assert_eq!(tiles[3].get_pixel(0, 0), gradient(9, 9).get_pixel(0, 3));
    }

    #[test]
    fn remainder_goes_to_last_band() {
        let tiles = slice_image(&gradient(1024, 1024), 3, 3).unwrap();
        let widths: Vec<u32> = tiles[..3].iter().map(|t| t.width()).collect();
        assert_eq!(widths, [341, 341, 342]);
        let heights: Vec<u32> = [0, 3, 6].iter().map(|&i| tiles[i].height()).collect();
        assert_eq!(heights, [341, 341, 342]);
    }

    #[test]
    fn minimum_size() {
        let tiles = slice_image(&gradient(3, 3), 3, 3).unwrap();
        assert!(tiles.iter().all(|t| t.dimensions() == (1, 1)));
        assert!(matches!(
            slice_image(&gradient(2, 3), 3, 3),
            Err(GridError::TooSmall { .. })
        ));
    }

    #[test]
    fn restitch_is_identity() {
        let img = gradient(17, 11);
        let tiles = slice_image(&img, 3, 3).unwrap();
        assert_eq!(stitch(&tiles, 3, 3).unwrap(), img);
    }

    #[test]
    fn undecodable_input() {
        assert!(matches!(slice_grid(b"nope", 3, 3), Err(GridError::ImageFormat(_))));
    }
}
