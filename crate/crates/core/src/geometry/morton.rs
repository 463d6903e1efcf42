//! Bit-interleaved cube codes.
//!
//! A cube at level `L` has integer grid coordinates in `[0, 2^L)` per axis;
//! its code interleaves those coordinates with axis 0 in the lowest bit.

pub fn encode(coords: &[u64], dim: usize) -> u64 {
    let mut code = 0u64;
    let bits = 64 / dim as u32;
    for b in 0..bits {
        for (axis, &c) in coords.iter().enumerate().take(dim) {
            code |= ((c >> b) & 1) << (b as usize * dim + axis);
        }
    }
    code
}

pub fn decode(code: u64, dim: usize) -> [u64; 3] {
    let mut coords = [0u64; 3];
    let bits = 64 / dim as u32;
    for b in 0..bits {
        for (axis, c) in coords.iter_mut().enumerate().take(dim) {
            *c |= ((code >> (b as usize * dim + axis)) & 1) << b;
        }
    }
    coords
}

/// Grid cell of a coordinate in `[0, 1]` at the given level. Half-open cells,
/// with the upper boundary of the unit interval folded into the last cell.
#[inline]
pub fn cell_of(x: f64, level: u32) -> u64 {
    let cells = 1u64 << level;
    let c = (x * cells as f64).floor();
    if c < 0.0 {
        0
    } else {
        (c as u64).min(cells - 1)
    }
}

/// Chebyshev (max-norm) distance between two cells in grid units.
#[inline]
pub fn grid_distance(a: &[u64; 3], b: &[u64; 3], dim: usize) -> u64 {
    (0..dim).map(|k| a[k].abs_diff(b[k])).max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_2d_and_3d() {
        for dim in [2usize, 3] {
            for x in [0u64, 1, 5, 1023] {
                for y in [0u64, 7, 512] {
                    let c = [x, y, x ^ y];
                    let code = encode(&c[..dim], dim);
                    let back = decode(code, dim);
                    assert_eq!(&back[..dim], &c[..dim]);
                }
            }
        }
    }

    #[test]
    fn child_codes_extend_parent() {
        let parent = encode(&[3, 5], 2);
        let child = encode(&[7, 10], 2);
        assert_eq!(child >> 2, parent);
    }

    #[test]
    fn upper_boundary_folds_into_last_cell() {
        assert_eq!(cell_of(1.0, 3), 7);
        assert_eq!(cell_of(0.5, 1), 1);
        assert_eq!(cell_of(0.4999, 1), 0);
    }
}
