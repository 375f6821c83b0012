//! Detection of the block-Hamiltonian form `[[0, P], [-P, 0]]` with symmetric `P`,
//! and its complex-Hamiltonian representation.

use crate::linalg::{Matrix, Vector};

/// Relative tolerance for the symmetry and zero-block tests.
pub const STRUCTURE_TOL: f64 = 1e-12;

/// `A = [[0, PA], [-PA, 0]]`, `B = [[0, PB], [-PB, 0]]` with symmetric `PA`, `PB`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockHamiltonianStructure {
    pub half_dim: usize,
    pub pa: Matrix,
    pub pb: Matrix,
}

impl BlockHamiltonianStructure {
    /// Rebuilds `(A, B)` from the blocks.
    pub fn reconstruct(&self) -> (Matrix, Matrix) {
        (embed_block(&self.pa), embed_block(&self.pb))
    }

    /// `P = PA + u PB`.
    pub fn hamiltonian_matrix(&self, u: f64) -> Matrix {
        self.pa
            .add_scaled(u, &self.pb)
            .expect("blocks share a shape")
    }
}

/// Embeds `P` as `[[0, P], [-P, 0]]`.
pub fn embed_block(p: &Matrix) -> Matrix {
    let m = p.rows();
    let mut out = Matrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        for j in 0..m {
            out[(i, m + j)] = p[(i, j)];
            out[(m + i, j)] = -p[(i, j)];
        }
    }
    out
}

fn extract_block(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    if !a.is_square() || n % 2 != 0 {
        return None;
    }
    let m = n / 2;
    let tol = STRUCTURE_TOL * (1.0 + a.max_abs());
    let p = a.block(0, m, m, m);
    for i in 0..m {
        for j in 0..m {
            if a[(i, j)].abs() > tol || a[(m + i, m + j)].abs() > tol {
                return None;
            }
            if (a[(m + i, j)] + p[(i, j)]).abs() > tol {
                return None;
            }
        }
    }
    if p.symmetry_defect() > tol {
        return None;
    }
    Some(p)
}

pub fn detect_block_structure(a: &Matrix, b: &Matrix) -> Option<BlockHamiltonianStructure> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return None;
    }
    let pa = extract_block(a)?;
    let pb = extract_block(b)?;
    Some(BlockHamiltonianStructure {
        half_dim: pa.rows(),
        pa,
        pb,
    })
}

/// Complex Hamiltonian `H = H1 + i H2` driving `w' = i H w`.
///
/// The real state `x = (y, z)` maps to `w = y - i z`, under which `H1 = PA + u PB`
/// and `H2 = 0` reproduce `y' = P z`, `z' = -P y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexHamiltonian {
    pub h1: Matrix,
    pub h2: Matrix,
}

impl ComplexHamiltonian {
    /// Real split of `w' = i H w` for `w = re + i im`:
    /// `re' = -H2 re - H1 im`, `im' = H1 re - H2 im`.
    pub fn rhs(&self, re: &[f64], im: &[f64], d_re: &mut [f64], d_im: &mut [f64]) {
        let m = re.len();
        let mut t1 = vec![0.0; m];
        let mut t2 = vec![0.0; m];
        self.h2.mul_slice_into(re, &mut t1);
        self.h1.mul_slice_into(im, &mut t2);
        for i in 0..m {
            d_re[i] = -t1[i] - t2[i];
        }
        self.h1.mul_slice_into(re, &mut t1);
        self.h2.mul_slice_into(im, &mut t2);
        for i in 0..m {
            d_im[i] = t1[i] - t2[i];
        }
    }
}

pub fn block_to_complex(s: &BlockHamiltonianStructure, u: f64) -> ComplexHamiltonian {
    ComplexHamiltonian {
        h1: s.hamiltonian_matrix(u),
        h2: Matrix::zeros(s.half_dim, s.half_dim),
    }
}

/// `(y, z) -> (Re w, Im w) = (y, -z)`.
pub fn to_complex_state(x: &Vector) -> (Vec<f64>, Vec<f64>) {
    let m = x.dim() / 2;
    let s = x.as_slice();
    (s[..m].to_vec(), s[m..].iter().map(|v| -v).collect())
}

pub fn from_complex_state(re: &[f64], im: &[f64]) -> Vector {
    let mut v = re.to_vec();
    v.extend(im.iter().map(|v| -v));
    Vector::from_raw(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use proptest::prelude::*;

    #[test]
    fn example_one_is_block_hamiltonian() {
        let p = catalog::example_one();
        let s = detect_block_structure(&p.a, &p.b).expect("structure");
        assert_eq!(s.half_dim, 2);
        assert_eq!(
            s.pa,
            Matrix::from_rows(&[[1.0, -2.0], [-2.0, -1.0]]).unwrap()
        );
        assert_eq!(s.pb, Matrix::from_rows(&[[-1.0, 1.0], [1.0, 2.0]]).unwrap());
        let (a, b) = s.reconstruct();
        assert_eq!(a, p.a);
        assert_eq!(b, p.b);
    }

    #[test]
    fn odd_or_filled_blocks_are_rejected() {
        let a3 = Matrix::zeros(3, 3);
        assert!(detect_block_structure(&a3, &a3).is_none());
        let p = catalog::example_one();
        let mut a = p.a.clone();
        a[(0, 0)] = 1.0;
        assert!(detect_block_structure(&a, &p.b).is_none());
        // non-symmetric P
        let mut b = p.b.clone();
        b[(0, 3)] += 5.0;
        b[(2, 1)] -= 5.0;
        assert!(detect_block_structure(&p.a, &b).is_none());
    }

    #[test]
    fn complex_form_examples() {
        let s = BlockHamiltonianStructure {
            half_dim: 2,
            pa: Matrix::identity(2),
            pb: Matrix::zeros(2, 2),
        };
        let h = block_to_complex(&s, 0.0);
        assert_eq!(h.h1, Matrix::identity(2));
        assert!(h.h2.is_zero());

        let p = catalog::example_one();
        let s = detect_block_structure(&p.a, &p.b).unwrap();
        let h = block_to_complex(&s, 1.0);
        assert_eq!(
            h.h1,
            Matrix::from_rows(&[[0.0, -1.0], [-1.0, 1.0]]).unwrap()
        );
        assert!(h.h2.is_zero());
    }

    fn rk4_real(a: &Matrix, x: &[f64], h: f64) -> Vec<f64> {
        let f = |x: &[f64]| {
            let mut o = vec![0.0; x.len()];
            a.mul_slice_into(x, &mut o);
            o
        };
        let k1 = f(x);
        let s: Vec<f64> = x.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
        let k2 = f(&s);
        let s: Vec<f64> = x.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
        let k3 = f(&s);
        let s: Vec<f64> = x.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
        let k4 = f(&s);
        (0..x.len())
            .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    }

    fn rk4_complex(
        hc: &ComplexHamiltonian,
        re: &[f64],
        im: &[f64],
        h: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let m = re.len();
        let f = |re: &[f64], im: &[f64]| {
            let mut dr = vec![0.0; m];
            let mut di = vec![0.0; m];
            hc.rhs(re, im, &mut dr, &mut di);
            (dr, di)
        };
        let axpy = |x: &[f64], d: &[f64], c: f64| -> Vec<f64> {
            x.iter().zip(d).map(|(a, b)| a + c * b).collect()
        };
        let (r1, i1) = f(re, im);
        let (r2, i2) = f(&axpy(re, &r1, 0.5 * h), &axpy(im, &i1, 0.5 * h));
        let (r3, i3) = f(&axpy(re, &r2, 0.5 * h), &axpy(im, &i2, 0.5 * h));
        let (r4, i4) = f(&axpy(re, &r3, h), &axpy(im, &i3, h));
        let comb = |x: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
            (0..m)
                .map(|i| x[i] + h / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
                .collect()
        };
        (comb(re, &r1, &r2, &r3, &r4), comb(im, &i1, &i2, &i3, &i4))
    }

    fn sym2() -> impl Strategy<Value = Matrix> {
        (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64)
            .prop_map(|(a, b, c)| Matrix::from_rows(&[[a, b], [b, c]]).unwrap())
    }

    proptest! {
        #[test]
        fn complex_step_matches_real_step(
            pa in sym2(), pb in sym2(), u in -3.0..3.0f64,
            x in proptest::collection::vec(-2.0..2.0f64, 4), h in 1e-4..0.1f64,
        ) {
            let s = BlockHamiltonianStructure { half_dim: 2, pa, pb };
            let (a, b) = s.reconstruct();
            let m = a.add_scaled(u, &b).unwrap();
            let real = rk4_real(&m, &x, h);
            let xv = Vector::new(x).unwrap();
            let (re, im) = to_complex_state(&xv);
            let (re1, im1) = rk4_complex(&block_to_complex(&s, u), &re, &im, h);
            let back = from_complex_state(&re1, &im1);
            for (r, c) in real.iter().zip(back.as_slice()) {
                prop_assert!((r - c).abs() <= 1e-13);
            }
        }

        #[test]
        fn reconstruction_is_exact(pa in sym2(), pb in sym2()) {
            let s = BlockHamiltonianStructure { half_dim: 2, pa, pb };
            let (a, b) = s.reconstruct();
            let found = detect_block_structure(&a, &b).unwrap();
            prop_assert_eq!(found.reconstruct(), (a, b));
            prop_assert!(found.pa == s.pa && found.pb == s.pb);
        }
    }
}
