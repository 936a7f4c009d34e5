//! The leader exosystem `v̇ = S v` with `S = diag(S_a, S_b)`, where `S_a` is in
//! companion form and generates the reference `x₀`, and `S_b` generates the
//! disturbance driver `w`.

use nalgebra::{Complex, DMatrix, DVector, Schur};

use crate::error::{Error, Result};

/// Largest exosystem order accepted by the dense spectrum check.
pub const MAX_SPECTRUM_ORDER: usize = 16;

pub const DEFAULT_SPECTRUM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Exosystem {
    alpha: Vec<f64>,
    s_b: DMatrix<f64>,
}

impl Exosystem {
    /// `alpha` is the bottom row of `S_a`; its length is the reference order `r`.
    pub fn new(alpha: Vec<f64>, s_b: DMatrix<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::param("alpha", "reference order r must be at least 1"));
        }
        if !s_b.is_square() {
            return Err(Error::dim("S_b columns", s_b.nrows(), s_b.ncols()));
        }
        if alpha.iter().chain(s_b.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("exosystem coefficients".into()));
        }
        Ok(Exosystem { alpha, s_b })
    }

    /// Rotation blocks `[[0, ω], [-ω, 0]]`: one for the reference (`r = 2`,
    /// `α = (-ω₀², 0)`) and one per disturbance frequency. Distinct nonzero
    /// frequencies satisfy the spectral assumption by construction.
    pub fn from_frequencies(reference: f64, disturbance: &[f64]) -> Result<Self> {
        let n_w = 2 * disturbance.len();
        let mut s_b = DMatrix::zeros(n_w, n_w);
        for (k, &omega) in disturbance.iter().enumerate() {
            s_b[(2 * k, 2 * k + 1)] = omega;
            s_b[(2 * k + 1, 2 * k)] = -omega;
        }
        Self::new(vec![-reference * reference, 0.0], s_b)
    }

    /// Reference order `r`.
    pub fn r(&self) -> usize {
        self.alpha.len()
    }

    /// Disturbance-generator order `n_w`.
    pub fn n_w(&self) -> usize {
        self.s_b.nrows()
    }

    /// Leader state dimension `q = r + n_w`.
    pub fn q(&self) -> usize {
        self.r() + self.n_w()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn s_b(&self) -> &DMatrix<f64> {
        &self.s_b
    }

    pub fn s_a(&self) -> DMatrix<f64> {
        companion(&self.alpha)
    }

    /// The assembled block-diagonal `S`.
    pub fn build_s(&self) -> DMatrix<f64> {
        let (r, q) = (self.r(), self.q());
        let mut s = DMatrix::zeros(q, q);
        s.view_mut((0, 0), (r, r)).copy_from(&self.s_a());
        s.view_mut((r, r), (self.n_w(), self.n_w())).copy_from(&self.s_b);
        s
    }

    /// `S v`.
    pub fn derivative(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.q() {
            return Err(Error::dim("leader state", self.q(), v.len()));
        }
        Ok(self.build_s() * v)
    }

    /// Spectrum of `S` and whether all eigenvalues are distinct and lie on
    /// the imaginary axis, both up to `tol`.
    pub fn check_assumption1(&self, tol: f64) -> Result<SpectrumReport> {
        let q = self.q();
        if q > MAX_SPECTRUM_ORDER {
            return Err(Error::MatrixTooLarge(q));
        }
        let schur = Schur::try_new(self.build_s(), f64::EPSILON, 10_000).ok_or(Error::EigenFailure)?;
        let mut eigenvalues: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
        eigenvalues.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
        let on_axis = eigenvalues.iter().all(|z| z.re.abs() <= tol);
        let distinct = eigenvalues
            .iter()
            .enumerate()
            .all(|(k, a)| eigenvalues[k + 1..].iter().all(|b| (a - b).norm() > tol));
        Ok(SpectrumReport {
            satisfied: on_axis && distinct,
            on_imaginary_axis: on_axis,
            distinct,
            eigenvalues,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub satisfied: bool,
    pub on_imaginary_axis: bool,
    pub distinct: bool,
    /// Sorted by imaginary part.
    pub eigenvalues: Vec<Complex<f64>>,
}

/// Companion matrix with superdiagonal ones and `bottom` as its last row.
pub fn companion(bottom: &[f64]) -> DMatrix<f64> {
    let r = bottom.len();
    let mut m = DMatrix::zeros(r, r);
    for s in 0..r.saturating_sub(1) {
        m[(s, s + 1)] = 1.0;
    }
    if r > 0 {
        for (s, &a) in bottom.iter().enumerate() {
            m[(r - 1, s)] = a;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    fn example() -> Exosystem {
        Exosystem::new(vec![-1.0, 0.0], dmatrix![0.0, 0.5; -0.5, 0.0]).unwrap()
    }

    #[test]
    fn build_s_examples() {
        let s = example().build_s();
        let expected = dmatrix![
            0.0, 1.0, 0.0, 0.0;
            -1.0, 0.0, 0.0, 0.0;
            0.0, 0.0, 0.0, 0.5;
            0.0, 0.0, -0.5, 0.0
        ];
        assert_eq!(s, expected);

        let no_w = Exosystem::new(vec![-1.0, 0.0], DMatrix::zeros(0, 0)).unwrap();
        assert_eq!(no_w.build_s(), no_w.s_a());

        let scalar = Exosystem::new(vec![0.0], DMatrix::zeros(0, 0)).unwrap();
        assert_eq!(scalar.build_s(), dmatrix![0.0]);
    }

    #[test]
    fn assumption1_examples() {
        let report = example().check_assumption1(DEFAULT_SPECTRUM_TOL).unwrap();
        assert!(report.satisfied);
        let ims: Vec<f64> = report.eigenvalues.iter().map(|z| z.im).collect();
        for (got, want) in ims.iter().zip([-1.0, -0.5, 0.5, 1.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }

        let double_zero = Exosystem::new(vec![0.0, 0.0], DMatrix::zeros(0, 0)).unwrap();
        let report = double_zero.check_assumption1(DEFAULT_SPECTRUM_TOL).unwrap();
        assert!(!report.satisfied && !report.distinct);

        let real_spectrum = Exosystem::new(vec![1.0, 0.0], DMatrix::zeros(0, 0)).unwrap();
        let report = real_spectrum.check_assumption1(DEFAULT_SPECTRUM_TOL).unwrap();
        assert!(!report.satisfied && !report.on_imaginary_axis);

        let big = Exosystem::new(vec![0.0; 17], DMatrix::zeros(0, 0)).unwrap();
        assert!(matches!(big.check_assumption1(1e-8), Err(Error::MatrixTooLarge(17))));
    }

    #[test]
    fn derivative_examples() {
        let e = example();
        assert_eq!(e.derivative(&DVector::zeros(4)).unwrap(), DVector::zeros(4));
        assert_eq!(
            e.derivative(&dvector![-2.0, 1.0, -1.0, 3.0]).unwrap(),
            dvector![1.0, 2.0, 1.5, 0.5]
        );
        let d = e.derivative(&dvector![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!((d[0], d[1]), (0.0, -1.0));
        assert!(e.derivative(&dvector![1.0]).is_err());
    }

    #[test]
    fn reference_rows_follow_the_chain() {
        let e = Exosystem::new(vec![-2.0, 0.5, 1.5], dmatrix![0.0]).unwrap();
        let v = dvector![0.3, -1.2, 2.0, 4.0];
        let d = e.derivative(&v).unwrap();
        assert_eq!(d[0], v[1]);
        assert_eq!(d[1], v[2]);
        assert_abs_diff_eq!(d[2], -2.0 * 0.3 + 0.5 * -1.2 + 1.5 * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn frequency_constructor_satisfies_assumption1() {
        let e = Exosystem::from_frequencies(1.0, &[0.5, 2.0]).unwrap();
        assert_eq!(e.q(), 6);
        assert!(e.check_assumption1(DEFAULT_SPECTRUM_TOL).unwrap().satisfied);
        assert_eq!(Exosystem::from_frequencies(1.0, &[0.5]).unwrap(), example());
    }
}
