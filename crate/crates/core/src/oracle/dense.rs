//! Dense reference for the second-moment recursion.
//!
//! Tracks the full `3d × 3d` second moment of `z = (w − w*, u − w*, S)`,
//! including every cross-coordinate entry, and applies the expected
//! update operator without any diagonal shortcut. Intended for small `d`
//! as an independent check of [`super::run`].

use nalgebra::DMatrix;

use super::{FourthMomentModel, RiskMode};
use crate::error::{validation, Result};
use crate::hyper::HyperParams;
use crate::spectrum::ProblemInstance;

pub struct DenseOracle<'a> {
    inst: &'a ProblemInstance,
    hp: HyperParams,
    fm: FourthMomentModel,
    h: DMatrix<f64>,
}

impl<'a> DenseOracle<'a> {
    pub fn new(inst: &'a ProblemInstance, hp: &HyperParams, fm: &FourthMomentModel) -> Result<Self> {
        fm.validate(inst.dim())?;
        let h = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(inst.spectrum.eigenvalues()));
        Ok(Self { inst, hp: *hp, fm: fm.clone(), h })
    }

    fn d(&self) -> usize {
        self.inst.dim()
    }

    /// `E[x xᵀ M x xᵀ] − H M H` for symmetric `M`.
    fn fourth_moment_excess(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.d();
        match &self.fm {
            FourthMomentModel::GaussianExact => {
                let hm = &self.h * m;
                let tr = hm.trace();
                &hm * &self.h + &self.h * tr
            }
            FourthMomentModel::OneHot(p) => {
                let lam = self.inst.spectrum.eigenvalues();
                let mut out = -(&self.h * m * &self.h);
                for i in 0..d {
                    out[(i, i)] += lam[i] * lam[i] / p[i] * m[(i, i)];
                }
                out
            }
            FourthMomentModel::MeanFieldOnly => DMatrix::zeros(d, d),
        }
    }

    fn transition(&self, accumulate: bool) -> DMatrix<f64> {
        let d = self.d();
        let HyperParams { c, q, delta, .. } = self.hp;
        let eye = DMatrix::<f64>::identity(d, d);
        let a = &eye - &self.h * delta;
        let b = &eye * (1.0 + c) - &self.h * q;
        let mut g = DMatrix::zeros(3 * d, 3 * d);
        g.view_mut((0, d), (d, d)).copy_from(&a);
        g.view_mut((d, 0), (d, d)).copy_from(&(&eye * -c));
        g.view_mut((d, d), (d, d)).copy_from(&b);
        if accumulate {
            g.view_mut((2 * d, d), (d, d)).copy_from(&a);
        }
        g.view_mut((2 * d, 2 * d), (d, d)).copy_from(&eye);
        g
    }

    /// One expected update of the full second moment.
    pub fn step(&self, m: &DMatrix<f64>, noise_variance: f64, accumulate: bool) -> DMatrix<f64> {
        let d = self.d();
        let g = self.transition(accumulate);
        let mut next = &g * m * g.transpose();
        let m_uu = m.view((d, d), (d, d)).clone_owned();
        let k = self.fourth_moment_excess(&m_uu) + &self.h * noise_variance;
        let HyperParams { q, delta, .. } = self.hp;
        let v = [delta, q, if accumulate { delta } else { 0.0 }];
        for a in 0..3 {
            for b in 0..3 {
                let mut blk = next.view_mut((a * d, b * d), (d, d));
                blk += &k * (v[a] * v[b]);
            }
        }
        next
    }

    pub fn initial(&self, mode: RiskMode, s: usize) -> (DMatrix<f64>, f64) {
        let d = self.d();
        let e = self.inst.initial_error();
        let acc = if s == 0 { 1.0 } else { 0.0 };
        let mut z = nalgebra::DVector::zeros(3 * d);
        for i in 0..d {
            z[i] = e[i];
            z[d + i] = e[i];
            z[2 * d + i] = acc * e[i];
        }
        let outer = &z * z.transpose();
        match mode {
            RiskMode::Full => (outer, self.inst.noise_variance),
            RiskMode::Bias => (outer, 0.0),
            RiskMode::Variance => (DMatrix::zeros(3 * d, 3 * d), self.inst.noise_variance),
        }
    }

    /// Full second moment after iterations `1..s+N`.
    pub fn run(&self, s: usize, n: usize, mode: RiskMode) -> Result<DMatrix<f64>> {
        if n == 0 {
            return Err(validation("N must be at least 1"));
        }
        let (mut m, noise) = self.initial(mode, s);
        for t in 1..s + n {
            m = self.step(&m, noise, t >= s);
        }
        Ok(m)
    }

    /// `(1/(2N²)) tr(H E[S Sᵀ])`.
    pub fn exact_risk(&self, s: usize, n: usize, mode: RiskMode) -> Result<f64> {
        let d = self.d();
        let m = self.run(s, n, mode)?;
        let mss = m.view((2 * d, 2 * d), (d, d));
        let nn = n as f64;
        Ok((&self.h * mss).trace() / (2.0 * nn * nn))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::spectrum::Spectrum;

    #[test]
    fn matches_diagonal_recursion() {
        let s = Spectrum::from_eigenvalues(vec![0.9, 0.5, 0.2, 0.05]).unwrap();
        let hp = HyperParams::derive_overparam(0.05, 0.3, 2, 3.0, &s).unwrap();
        let inst = ProblemInstance::new(s.clone(), vec![0.1, 0.0, -0.2, 0.3], vec![1.0, 2.0, -1.0, 0.5], 0.2, 3.0).unwrap();
        for fm in [FourthMomentModel::GaussianExact, FourthMomentModel::one_hot_default(&s), FourthMomentModel::MeanFieldOnly] {
            let dense = DenseOracle::new(&inst, &hp, &fm).unwrap();
            for mode in [RiskMode::Full, RiskMode::Bias, RiskMode::Variance] {
                let a = dense.exact_risk(4, 30, mode).unwrap();
                let b = oracle::exact_risk(&inst, &hp, &fm, 4, 30, mode).unwrap();
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300), "{fm:?} {mode:?}: {a} vs {b}");
            }
        }
    }
}
