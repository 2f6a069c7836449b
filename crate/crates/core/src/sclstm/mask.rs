use super::tensor::Mat;
use super::SclstmError;
use crate::numerics::SimRng;

/// Allowed connections of a sparse layer, kept both as a bitmap and as a
/// row-ordered index list for the hot loops.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMask {
    rows: usize,
    cols: usize,
    bitmap: Vec<bool>,
    entries: Vec<(u32, u32)>,
}

impl SparseMask {
    pub fn from_entries(rows: usize, cols: usize, mut entries: Vec<(usize, usize)>) -> Self {
        entries.sort_unstable();
        entries.dedup();
        let mut bitmap = vec![false; rows * cols];
        for &(r, c) in &entries {
            assert!(r < rows && c < cols, "mask entry ({r}, {c}) outside {rows}x{cols}");
            bitmap[r * cols + c] = true;
        }
        Self {
            rows,
            cols,
            bitmap,
            entries: entries.into_iter().map(|(r, c)| (r as u32, c as u32)).collect(),
        }
    }

    pub fn from_bitmap(rows: usize, cols: usize, bitmap: Vec<bool>) -> Self {
        assert_eq!(bitmap.len(), rows * cols);
        let entries = (0..rows * cols)
            .filter(|&i| bitmap[i])
            .map(|i| (i / cols, i % cols))
            .collect();
        Self::from_entries(rows, cols, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn allows(&self, r: usize, c: usize) -> bool {
        self.bitmap[r * self.cols + c]
    }

    pub fn bitmap(&self) -> &[bool] {
        &self.bitmap
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.entries.iter().map(|&(r, c)| (r as usize, c as usize))
    }

    pub fn row_degree(&self, r: usize) -> usize {
        (0..self.cols).filter(|&c| self.allows(r, c)).count()
    }

    pub fn col_degree(&self, c: usize) -> usize {
        (0..self.rows).filter(|&r| self.allows(r, c)).count()
    }
}

/// Index of `Re{X[m,n]}` in a column-major real/imag stacking of an M×N
/// matrix; the imaginary part sits `M·N` further on.
#[inline]
pub fn stacked_index(m: usize, n: usize, rows: usize) -> usize {
    m + rows * n
}

/// G-layer (2MN×2MN) and h-layer (2N×2MN) connection patterns.
///
/// Output `Re/Im G[m,n]` sees only `Re/Im (G[m,n]h[n])`; output
/// `Re/Im h[n]` sees the real and imaginary parts of the whole column
/// `G[:,n]h[n]`.
pub fn build_masks(m: usize, n: usize) -> (SparseMask, SparseMask) {
    let mn = m * n;
    let mut g = Vec::with_capacity(4 * mn);
    for col in 0..n {
        for row in 0..m {
            let i = stacked_index(row, col, m);
            for out in [i, mn + i] {
                g.push((out, i));
                g.push((out, mn + i));
            }
        }
    }
    let mut h = Vec::with_capacity(4 * mn);
    for col in 0..n {
        for out in [col, n + col] {
            for row in 0..m {
                let i = stacked_index(row, col, m);
                h.push((out, i));
                h.push((out, mn + i));
            }
        }
    }
    (
        SparseMask::from_entries(2 * mn, 2 * mn, g),
        SparseMask::from_entries(2 * n, 2 * mn, h),
    )
}

/// Linear layer whose weight matrix is zero outside a mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedLinear {
    pub weight: Mat,
    pub bias: Vec<f64>,
    pub mask: SparseMask,
}

impl MaskedLinear {
    pub fn zeros(mask: SparseMask) -> Self {
        Self {
            weight: Mat::zeros(mask.rows(), mask.cols()),
            bias: vec![0.0; mask.rows()],
            mask,
        }
    }

    /// Uniform Glorot initialisation where fan-in and fan-out are the mask
    /// degrees of each connection's endpoints.
    pub fn glorot(mask: SparseMask, rng: &mut SimRng) -> Self {
        let mut layer = Self::zeros(mask);
        let row_deg: Vec<usize> = (0..layer.mask.rows()).map(|r| layer.mask.row_degree(r)).collect();
        let col_deg: Vec<usize> = (0..layer.mask.cols()).map(|c| layer.mask.col_degree(c)).collect();
        let entries: Vec<_> = layer.mask.entries().collect();
        for (r, c) in entries {
            let limit = (6.0 / (row_deg[r] + col_deg[c]) as f64).sqrt();
            *layer.weight.at_mut(r, c) = rng.uniform_range(-limit, limit);
        }
        layer
    }

    /// `y = W x + b` over the mask only.
    #[inline]
    pub fn forward_into(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.bias);
        let cols = self.weight.cols;
        for &(r, c) in &self.mask.entries {
            let (r, c) = (r as usize, c as usize);
            y[r] += self.weight.data[r * cols + c] * x[c];
        }
    }

    /// Accumulates `dW += dy ⊗ x` on the mask and `db += dy`; returns
    /// nothing for the input since sparse layers sit at the network input.
    #[inline]
    pub fn backward_params(&self, x: &[f64], dy: &[f64], grad: &mut MaskedLinear) {
        let cols = self.weight.cols;
        for &(r, c) in &self.mask.entries {
            let (r, c) = (r as usize, c as usize);
            grad.weight.data[r * cols + c] += dy[r] * x[c];
        }
        for (g, d) in grad.bias.iter_mut().zip(dy) {
            *g += d;
        }
    }

    /// Zeroes every weight outside the mask.
    pub fn apply_mask(&mut self) {
        for (w, &keep) in self.weight.data.iter_mut().zip(&self.mask.bitmap) {
            if !keep {
                *w = 0.0;
            }
        }
    }

    /// First off-mask nonzero weight, if any.
    pub fn mask_violation(&self) -> Option<(usize, usize)> {
        self.weight
            .data
            .iter()
            .zip(&self.mask.bitmap)
            .position(|(&w, &keep)| !keep && w != 0.0)
            .map(|i| (i / self.weight.cols, i % self.weight.cols))
    }
}

/// Checked forward pass of a sparse layer with identity activation.
pub fn sparse_layer_forward(layer: &MaskedLinear, x: &[f64]) -> Result<Vec<f64>, SclstmError> {
    if x.len() != layer.weight.cols {
        return Err(SclstmError::InvalidInput(format!(
            "sparse layer expects {} inputs, got {}",
            layer.weight.cols,
            x.len()
        )));
    }
    if let Some((r, c)) = layer.mask_violation() {
        return Err(SclstmError::MaskViolation { row: r, col: c });
    }
    let mut y = vec![0.0; layer.weight.rows];
    layer.forward_into(x, &mut y);
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_cardinality() {
        for (m, n) in [(1, 1), (2, 2), (4, 40), (3, 7)] {
            let (g, h) = build_masks(m, n);
            assert_eq!(g.nnz(), 4 * m * n);
            assert_eq!(h.nnz(), 4 * m * n);
            assert_eq!((g.rows(), g.cols()), (2 * m * n, 2 * m * n));
            assert_eq!((h.rows(), h.cols()), (2 * n, 2 * m * n));
        }
    }

    #[test]
    fn g_mask_connects_matching_entries() {
        let (g, _) = build_masks(2, 2);
        // output Re{G[1,1]} (1-based) is row 0; inputs 0 and 4 carry Re/Im of G[1,1]h[1]
        let row0: Vec<usize> = (0..8).filter(|&c| g.allows(0, c)).collect();
        assert_eq!(row0, vec![0, 4]);
        let row5: Vec<usize> = (0..8).filter(|&c| g.allows(5, c)).collect();
        assert_eq!(row5, vec![1, 5]);
    }

    #[test]
    fn h_mask_connects_whole_column() {
        let (_, h) = build_masks(3, 2);
        // output Im{h[1]} (0-based column 1) is row 3; column 1 occupies stacked 3..6 and 9..12
        let row: Vec<usize> = (0..12).filter(|&c| h.allows(3, c)).collect();
        assert_eq!(row, vec![3, 4, 5, 9, 10, 11]);
    }

    #[test]
    fn forward_cases() {
        let (g, _) = build_masks(2, 3);
        let mut layer = MaskedLinear::zeros(g);
        for i in 0..12 {
            *layer.weight.at_mut(i, i) = 1.0;
        }
        let x: Vec<f64> = (0..12).map(|i| i as f64 * 0.5 - 1.0).collect();
        assert_eq!(sparse_layer_forward(&layer, &x).unwrap(), x);

        let mut biased = MaskedLinear::zeros(layer.mask.clone());
        biased.bias = (0..12).map(|i| i as f64).collect();
        assert_eq!(sparse_layer_forward(&biased, &x).unwrap(), biased.bias);
    }

    #[test]
    fn forward_matches_dense_product() {
        let (_, h) = build_masks(4, 5);
        let mut rng = SimRng::new(2);
        let layer = MaskedLinear::glorot(h, &mut rng);
        let x: Vec<f64> = (0..40).map(|_| rng.standard_normal()).collect();
        let y = sparse_layer_forward(&layer, &x).unwrap();
        for r in 0..10 {
            let dense: f64 = (0..40).map(|c| layer.weight.at(r, c) * x[c]).sum();
            assert!((y[r] - dense).abs() < 1e-14);
        }
    }

    #[test]
    fn violations_detected_and_cleared() {
        let (g, _) = build_masks(2, 2);
        let mut layer = MaskedLinear::zeros(g);
        *layer.weight.at_mut(0, 1) = 0.3;
        assert!(matches!(
            sparse_layer_forward(&layer, &[0.0; 8]),
            Err(SclstmError::MaskViolation { row: 0, col: 1 })
        ));
        layer.apply_mask();
        assert!(layer.mask_violation().is_none());
    }

    #[test]
    fn bitmap_round_trip() {
        let (g, _) = build_masks(2, 3);
        let back = SparseMask::from_bitmap(g.rows(), g.cols(), g.bitmap().to_vec());
        assert_eq!(back, g);
    }
}
