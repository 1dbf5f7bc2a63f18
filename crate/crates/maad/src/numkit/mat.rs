/// Dense row-major matrix of `f64`.
///
/// Rows are contiguous, so per-sample views (`row`) and per-unit weight rows
/// are cheap slices and the inner dot/axpy loops auto-vectorize.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must be rows*cols");
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat {
            rows: r,
            cols: c,
            data,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // four independent accumulators break the FP dependency chain so the
    // loop vectorizes; summation order is fixed, keeping results
    // deterministic across runs and thread counts
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for i in 0..x.len() {
        y[i] += alpha * x[i];
    }
}

/// `out = x · wᵀ + b` where `x` is B×n (samples) and `w` is m×n (one row per
/// output unit).
pub(crate) fn affine_batch(x: &Mat, w: &Mat, b: &[f64]) -> Mat {
    debug_assert_eq!(x.cols(), w.cols());
    debug_assert_eq!(w.rows(), b.len());
    let mut out = Mat::zeros(x.rows(), w.rows());
    for i in 0..x.rows() {
        let xi = x.row(i);
        let oi = out.row_mut(i);
        for o in 0..w.rows() {
            oi[o] = dot(w.row(o), xi) + b[o];
        }
    }
    out
}

/// Accumulates `dw += dzᵀ · x` (m×n) and `db += column sums of dz`.
pub(crate) fn grad_affine(dz: &Mat, x: &Mat, dw: &mut Mat, db: &mut [f64]) {
    debug_assert_eq!(dz.rows(), x.rows());
    debug_assert_eq!(dw.rows(), dz.cols());
    debug_assert_eq!(dw.cols(), x.cols());
    for i in 0..dz.rows() {
        let dzi = dz.row(i);
        let xi = x.row(i);
        for o in 0..dzi.len() {
            let g = dzi[o];
            if g != 0.0 {
                axpy(g, xi, dw.row_mut(o));
            }
            db[o] += g;
        }
    }
}

/// Returns `dx = dz · w` (B×n).
pub(crate) fn grad_input(dz: &Mat, w: &Mat) -> Mat {
    debug_assert_eq!(dz.cols(), w.rows());
    let mut dx = Mat::zeros(dz.rows(), w.cols());
    for i in 0..dz.rows() {
        let dzi = dz.row(i);
        let dxi = dx.row_mut(i);
        for o in 0..dzi.len() {
            let g = dzi[o];
            if g != 0.0 {
                axpy(g, w.row(o), dxi);
            }
        }
    }
    dx
}
