/// Householder QR of a column-major `n x p` matrix, applied in place to `b`.
pub(crate) struct Qr {
    /// Upper triangle holds R.
    pub r: Vec<Vec<f64>>,
    pub qtb: Vec<f64>,
    pub deficient: Vec<usize>,
}

const RANK_TOL: f64 = 1e-10;

pub(crate) fn householder(mut cols: Vec<Vec<f64>>, mut b: Vec<f64>) -> Qr {
    let n = b.len();
    let p = cols.len();
    let mut deficient = Vec::new();
    let mut r = vec![vec![0.0; p]; p];
    for j in 0..p {
        let scale = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        let tail_norm = cols[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if scale == 0.0 || tail_norm <= RANK_TOL * scale {
            deficient.push(j);
            for (i, row) in r.iter_mut().enumerate().take(j) {
                row[j] = cols[j][i];
            }
            continue;
        }
        let alpha = if cols[j][j] > 0.0 { -tail_norm } else { tail_norm };
        let mut v: Vec<f64> = cols[j][j..].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        for col in cols.iter_mut().skip(j) {
            reflect(&v, vv, &mut col[j..]);
        }
        reflect(&v, vv, &mut b[j..n]);
        cols[j][j] = alpha;
        for (i, row) in r.iter_mut().enumerate().take(j + 1) {
            row[j] = cols[j][i];
        }
    }
    Qr { r, qtb: b[..p.min(n)].to_vec(), deficient }
}

fn reflect(v: &[f64], vv: f64, x: &mut [f64]) {
    let dot: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    let f = 2.0 * dot / vv;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= f * vi;
    }
}

/// Solves `R x = c` for upper-triangular R.
pub(crate) fn back_substitute(r: &[Vec<f64>], c: &[f64]) -> Vec<f64> {
    let p = c.len();
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = c[i];
        for k in i + 1..p {
            s -= r[i][k] * x[k];
        }
        x[i] = s / r[i][i];
    }
    x
}

/// Diagonal of `(R^T R)^-1`.
pub(crate) fn inverse_gram_diagonal(r: &[Vec<f64>]) -> Vec<f64> {
    let p = r.len();
    let mut inv = vec![vec![0.0; p]; p];
    for col in 0..p {
        let mut e = vec![0.0; p];
        e[col] = 1.0;
        let x = back_substitute(r, &e);
        for (row, v) in x.into_iter().enumerate() {
            inv[row][col] = v;
        }
    }
    (0..p).map(|i| inv[i].iter().map(|v| v * v).sum()).collect()
}
