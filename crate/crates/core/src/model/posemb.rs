use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Fixed 2D sine–cosine positional table, one row per patch in row-major
/// grid order. The first `D/2` columns encode the grid row, the last `D/2`
/// the grid column. Within an axis half, columns `(2j, 2j+1)` hold
/// `sin`/`cos` of `pos / 10000^(2j / (D/2))`.
pub fn build_posemb(grid_rows: usize, grid_cols: usize, dim: usize) -> Result<Tensor> {
    if dim == 0 || !dim.is_multiple_of(4) {
        return Err(Error::shape(format!("positional width {dim} is not a positive multiple of 4")));
    }
    let half = dim / 2;
    let freqs: Vec<f64> = (0..half / 2)
        .map(|j| 10000f64.powf(2.0 * j as f64 / half as f64).recip())
        .collect();
    let mut data = Vec::with_capacity(grid_rows * grid_cols * dim);
    for r in 0..grid_rows {
        for c in 0..grid_cols {
            for pos in [r as f64, c as f64] {
                for f in &freqs {
                    let angle = pos * f;
                    data.push(angle.sin());
                    data.push(angle.cos());
                }
            }
        }
    }
    Tensor::new(vec![grid_rows * grid_cols, dim], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_is_sin_zero_cos_one() {
        let t = build_posemb(3, 3, 8).unwrap();
        for (i, v) in t.row(0).iter().enumerate() {
            assert_eq!(*v, if i % 2 == 0 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn small_grid_hand_values() {
        let t = build_posemb(1, 2, 4).unwrap();
        assert_eq!(t.row(1)[..2], [0.0, 1.0]);
        assert!((t.get2(1, 2) - 0.841471).abs() < 1e-6);
        assert!((t.get2(1, 3) - 0.540302).abs() < 1e-6);
    }

    #[test]
    fn matches_scalar_formula() {
        let (gr, gc, d) = (4, 8, 16);
        let t = build_posemb(gr, gc, d).unwrap();
        let width = (d / 2) as f64;
        for p in 0..gr * gc {
            let pos = [(p / gc) as f64, (p % gc) as f64];
            for col in 0..d {
                let axis = col / (d / 2);
                let within = col % (d / 2);
                let j = (within / 2) as f64;
                let angle = pos[axis] / 10000f64.powf(2.0 * j / width);
                let expected = if within % 2 == 0 { angle.sin() } else { angle.cos() };
                let v = t.get2(p, col);
                assert!((v - expected).abs() < 1e-12);
                assert!((-1.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn shared_row_shares_row_half() {
        let t = build_posemb(4, 8, 16).unwrap();
        for c in 1..8 {
            assert_eq!(t.row(2 * 8)[..8], t.row(2 * 8 + c)[..8]);
            assert_ne!(t.row(2 * 8)[8..], t.row(2 * 8 + c)[8..]);
        }
    }

    #[test]
    fn rejects_bad_width() {
        assert!(build_posemb(2, 2, 6).is_err());
        assert!(build_posemb(2, 2, 0).is_err());
    }
}
