use crate::scalar::Scalar;

/// Orthonormal type-II DCT on square `n`×`n` row-major blocks.
///
/// Coefficient `(row, col)` holds vertical frequency `row` and horizontal
/// frequency `col`.
#[derive(Clone, Debug)]
pub struct Dct2d<T> {
    n: usize,
    /// basis[k * n + x] = c_k cos(pi (2x + 1) k / 2n)
    basis: Vec<T>,
}

impl<T: Scalar> Dct2d<T> {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "DCT size must be positive");
        let mut basis = Vec::with_capacity(n * n);
        for k in 0..n {
            let c = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            for x in 0..n {
                let a = std::f64::consts::PI * (2 * x + 1) as f64 * k as f64 / (2 * n) as f64;
                basis.push(T::from_f64_lossy(c * a.cos()));
            }
        }
        Self { n, basis }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// `basis · block · basisᵀ`
    pub fn forward(&self, block: &[T]) -> Vec<T> {
        self.apply(block, false)
    }

    /// `basisᵀ · coeffs · basis`
    pub fn inverse(&self, coeffs: &[T]) -> Vec<T> {
        self.apply(coeffs, true)
    }

    fn apply(&self, input: &[T], inverse: bool) -> Vec<T> {
        let n = self.n;
        assert_eq!(input.len(), n * n, "block must be {n}x{n}");
        let mut tmp = vec![T::zero(); n * n];
        let mut out = vec![T::zero(); n * n];
        let (one, zero) = (T::one(), T::zero());
        // left multiply, then right multiply by the transpose
        T::gemm(inverse, false, n, n, n, one, &self.basis, input, zero, &mut tmp);
        T::gemm(false, !inverse, n, n, n, one, &tmp, &self.basis, zero, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(block: &[f64], n: usize) -> Vec<f64> {
        let c = |k: usize| if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        let mut out = vec![0.0; n * n];
        for u in 0..n {
            for v in 0..n {
                let mut s = 0.0;
                for y in 0..n {
                    for x in 0..n {
                        s += block[y * n + x]
                            * (std::f64::consts::PI * (2 * y + 1) as f64 * u as f64 / (2 * n) as f64).cos()
                            * (std::f64::consts::PI * (2 * x + 1) as f64 * v as f64 / (2 * n) as f64).cos();
                    }
                }
                out[u * n + v] = c(u) * c(v) * s;
            }
        }
        out
    }

    #[test]
    fn matches_direct_summation_and_inverts() {
        let n = 8;
        let block: Vec<f64> = (0..n * n).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let dct = Dct2d::<f64>::new(n);
        let fwd = dct.forward(&block);
        for (a, b) in fwd.iter().zip(naive(&block, n)) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in dct.inverse(&fwd).iter().zip(&block) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn energy_is_preserved() {
        let dct = Dct2d::<f32>::new(64);
        let block: Vec<f32> = (0..4096).map(|i| ((i * 7919) % 97) as f32 / 97.0 - 0.5).collect();
        let e_in: f32 = block.iter().map(|v| v * v).sum();
        let e_out: f32 = dct.forward(&block).iter().map(|v| v * v).sum();
        assert!((e_in - e_out).abs() / e_in < 1e-4);
    }
}
