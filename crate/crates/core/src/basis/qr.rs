//! Householder QR with column pivoting returning the full orthogonal factor.

use nalgebra::DMatrix;

pub const RANK_TOL: f64 = 1e-12;

pub struct PivotedQr {
    /// Full `m x m` orthogonal factor.
    pub q: DMatrix<f64>,
    pub rank: usize,
    /// Diagonal of `R` for the processed columns.
    pub diag: Vec<f64>,
}

/// Factors `a P = Q R`. Columns of `Q` beyond `rank` are orthogonal to the
/// numerical range of `a`, with rank decided by `|r_kk| > RANK_TOL * |r_00|`.
pub fn pivoted_qr(a: &DMatrix<f64>) -> PivotedQr {
    let (m, k) = a.shape();
    let mut w = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::new();
    let mut diag = Vec::new();
    let mut rank = 0;
    let mut lead = 0.0f64;
    for j in 0..m.min(k) {
        // Pivot on the largest remaining column norm.
        let (mut best, mut best_norm) = (j, -1.0);
        for c in j..k {
            let nrm: f64 = (j..m).map(|r| w[(r, c)] * w[(r, c)]).sum::<f64>();
            if nrm > best_norm {
                best = c;
                best_norm = nrm;
            }
        }
        let best_norm = best_norm.sqrt();
        if j == 0 {
            lead = best_norm;
        }
        if best_norm <= RANK_TOL * lead || best_norm == 0.0 {
            break;
        }
        w.swap_columns(j, best);
        let x0 = w[(j, j)];
        let alpha = if x0 >= 0.0 { -best_norm } else { best_norm };
        let mut v: Vec<f64> = (j..m).map(|r| w[(r, j)]).collect();
        v[0] -= alpha;
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vn > 0.0 {
            for x in &mut v {
                *x /= vn;
            }
            for c in j..k {
                let dot: f64 = v.iter().enumerate().map(|(i, vi)| vi * w[(j + i, c)]).sum();
                for (i, vi) in v.iter().enumerate() {
                    w[(j + i, c)] -= 2.0 * vi * dot;
                }
            }
        }
        diag.push(alpha);
        reflectors.push(v);
        rank += 1;
    }
    // Q = H_0 H_1 ... H_{r-1}, applied to the identity from the right end.
    let mut q = DMatrix::identity(m, m);
    for (j, v) in reflectors.iter().enumerate().rev() {
        for c in j..m {
            let dot: f64 = v.iter().enumerate().map(|(i, vi)| vi * q[(j + i, c)]).sum();
            if dot != 0.0 {
                for (i, vi) in v.iter().enumerate() {
                    q[(j + i, c)] -= 2.0 * vi * dot;
                }
            }
        }
    }
    PivotedQr { q, rank, diag }
}
