use super::LinearOperator;

/// Explicit row-major matrix. Used for small problems and as a reference
/// against the structured operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseOperator {
    /// # Panics
    /// If `data.len() != rows * cols`.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "dense operator data length");
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::new(n, n, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

impl LinearOperator for DenseOperator {
    fn input_len(&self) -> usize {
        self.cols
    }

    fn output_len(&self) -> usize {
        self.rows
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (yi, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
    }
}

/// Builds the dense matrix of `op` column by column from unit impulses.
pub fn materialize<O: LinearOperator + ?Sized>(op: &O) -> DenseOperator {
    let (rows, cols) = (op.output_len(), op.input_len());
    let mut data = vec![0.0; rows * cols];
    let mut e = vec![0.0; cols];
    let mut column = vec![0.0; rows];
    for j in 0..cols {
        e[j] = 1.0;
        op.apply(&e, &mut column);
        for (i, v) in column.iter().enumerate() {
            data[i * cols + j] = *v;
        }
        e[j] = 0.0;
    }
    DenseOperator::new(rows, cols, data)
}
