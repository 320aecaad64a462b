//! The differentiable geometric operations: fixed sparse operators, spectral diffusion with
//! learned per-channel times, and gradient features with a learned matrix `A`.

use super::{mismatch, GradientMode, Op, Tape, Tensor, Var, MIN_DIFFUSION_TIME};
use crate::blas::{gemm, gemm_strided, View};
use crate::sparse::{ComplexCsr, CsrMatrix};
use crate::spectral::EigenBasis;
use crate::{Error, Result};

impl<'a> Tape<'a> {
    /// `Y = S X` for a constant real sparse matrix.
    pub fn sparse_apply(&mut self, s: &'a CsrMatrix, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let v = self.val(ix);
        let (rows, cols) = v.dims2();
        if v.shape().len() != 2 || s.ncols != rows {
            return Err(Error::ShapeMismatch {
                op: "sparse_apply",
                lhs: vec![s.nrows, s.ncols],
                rhs: v.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; s.nrows * cols];
        for r in 0..s.nrows {
            let o = &mut out[r * cols..(r + 1) * cols];
            for (c, w) in s.row(r) {
                for (y, xv) in o.iter_mut().zip(v.row(c)) {
                    *y += w * xv;
                }
            }
        }
        let out = Tensor::matrix(s.nrows, cols, out)?;
        self.push(out, Op::SparseReal(ix, s))
    }

    /// `Y = [Re(G X) | Im(G X)]` for a constant complex sparse matrix and real `X`.
    pub fn sparse_apply_complex(&mut self, g: &'a ComplexCsr, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let v = self.val(ix);
        let (rows, cols) = v.dims2();
        if v.shape().len() != 2 || g.ncols != rows {
            return Err(Error::ShapeMismatch {
                op: "sparse_apply_complex",
                lhs: vec![g.nrows, g.ncols],
                rhs: v.shape().to_vec(),
            });
        }
        let w = 2 * cols;
        let mut out = vec![0.0; g.nrows * w];
        for r in 0..g.nrows {
            let o = &mut out[r * w..(r + 1) * w];
            for (c, re, im) in g.row(r) {
                let xr = v.row(c);
                for j in 0..cols {
                    o[j] += re * xr[j];
                    o[cols + j] += im * xr[j];
                }
            }
        }
        let out = Tensor::matrix(g.nrows, w, out)?;
        self.push(out, Op::SparseComplex(ix, g))
    }

    /// Per-channel spectral diffusion `Phi (exp(-lambda t_d) * (Phi^T M x_d))` with
    /// `t = max(tau, 1e-8)`.
    pub fn spectral_diffusion(&mut self, x: Var, tau: Var, basis: &'a EigenBasis, mass: &'a [f64]) -> Result<Var> {
        let (ix, it) = (self.idx(x)?, self.idx(tau)?);
        let (vx, vt) = (self.val(ix), self.val(it));
        let (v, d) = vx.dims2();
        if vx.shape().len() != 2 || vt.shape() != [d] {
            return Err(mismatch("spectral_diffusion", vx, vt));
        }
        if basis.n_vertices() != v || mass.len() != v {
            return Err(Error::ShapeMismatch {
                op: "spectral_diffusion",
                lhs: vx.shape().to_vec(),
                rhs: vec![basis.n_vertices(), basis.k()],
            });
        }
        let k = basis.k();
        let clamped = vt.data().iter().filter(|&&t| t < MIN_DIFFUSION_TIME).count();
        if 2 * clamped > d {
            log::warn!("diffusion time clamp engaged on {clamped} of {d} channels");
        }
        let times: Vec<f64> = vt.data().iter().map(|&t| t.max(MIN_DIFFUSION_TIME)).collect();
        let phi = View::col_major(basis.vectors.as_slice(), v);
        let mx: Vec<f64> = vx.data().iter().enumerate().map(|(i, x)| x * mass[i / d]).collect();
        let mut coeffs = vec![0.0; k * d];
        gemm(k, v, d, 1.0, phi.t(), View::row_major(&mx, d), 0.0, &mut coeffs);
        let mut scaled = coeffs.clone();
        for i in 0..k {
            for c in 0..d {
                scaled[i * d + c] *= (-basis.values[i] * times[c]).exp();
            }
        }
        let mut out = vec![0.0; v * d];
        gemm(v, k, d, 1.0, phi, View::row_major(&scaled, d), 0.0, &mut out);
        let out = Tensor::matrix(v, d, out)?;
        self.push(
            out,
            Op::SpectralDiffusion {
                x: ix,
                tau: it,
                basis,
                mass,
                coeffs,
                times,
            },
        )
    }

    /// `g_v(i) = tanh(Re(conj(w_v(i)) (A w_v)(i)))` with `W = [Re | Im]` of shape `V x 2D`.
    ///
    /// `A` has shape `[D, D]` in real mode and `[2, D, D]` (real part, imaginary part) in
    /// complex mode.
    pub fn gradient_features(&mut self, w: Var, a: Var, mode: GradientMode) -> Result<Var> {
        let (iw, ia) = (self.idx(w)?, self.idx(a)?);
        let (vw, va) = (self.val(iw), self.val(ia));
        let (v, two_d) = vw.dims2();
        let d = two_d / 2;
        let expected: Vec<usize> = match mode {
            GradientMode::Real => vec![d, d],
            GradientMode::Complex => vec![2, d, d],
        };
        if vw.shape().len() != 2 || two_d % 2 != 0 || va.shape() != expected.as_slice() {
            return Err(mismatch("gradient_features", vw, va));
        }
        let aw = apply_a(vw.data(), va.data(), v, d, mode);
        let mut out = Vec::with_capacity(v * d);
        for r in 0..v {
            let (wr, br) = (&vw.row(r)[..d], &aw[r * two_d..r * two_d + d]);
            let (wi, bi) = (&vw.row(r)[d..], &aw[r * two_d + d..(r + 1) * two_d]);
            for i in 0..d {
                out.push((wr[i] * br[i] + wi[i] * bi[i]).tanh());
            }
        }
        let out = Tensor::matrix(v, d, out)?;
        self.push(out, Op::GradientFeatures { w: iw, a: ia, mode, aw })
    }
}

/// `B = A w` per vertex: `Br = Wr Ar^T - Wi Ai^T`, `Bi = Wi Ar^T + Wr Ai^T`, as `[Br | Bi]`.
fn apply_a(w: &[f64], a: &[f64], v: usize, d: usize, mode: GradientMode) -> Vec<f64> {
    let two_d = 2 * d;
    let mut out = vec![0.0; v * two_d];
    let wr = View { data: w, rs: two_d, cs: 1 };
    let wi = View { data: &w[d..], rs: two_d, cs: 1 };
    let ar = View::row_major(&a[..d * d], d).t();
    gemm_strided(v, d, d, 1.0, wr, ar, 0.0, &mut out, two_d, 1);
    gemm_strided(v, d, d, 1.0, wi, ar, 0.0, &mut out[d..], two_d, 1);
    if mode == GradientMode::Complex {
        let ai = View::row_major(&a[d * d..], d).t();
        gemm_strided(v, d, d, -1.0, wi, ai, 1.0, &mut out, two_d, 1);
        gemm_strided(v, d, d, 1.0, wr, ai, 1.0, &mut out[d..], two_d, 1);
    }
    out
}

pub(super) fn backward(tape: &Tape, op: &Op, out: &Tensor, g: &Tensor) -> Vec<(usize, Tensor)> {
    match op {
        Op::SparseReal(x, s) => {
            let vx = tape.val(*x);
            let cols = vx.cols();
            let mut dx = Tensor::zeros(vx.shape());
            let d = dx.data_mut();
            for r in 0..s.nrows {
                let gr = g.row(r);
                for (c, w) in s.row(r) {
                    for (dv, gv) in d[c * cols..(c + 1) * cols].iter_mut().zip(gr) {
                        *dv += w * gv;
                    }
                }
            }
            vec![(*x, dx)]
        }
        Op::SparseComplex(x, gm) => {
            let vx = tape.val(*x);
            let cols = vx.cols();
            let mut dx = Tensor::zeros(vx.shape());
            let d = dx.data_mut();
            for r in 0..gm.nrows {
                let gr = g.row(r);
                for (c, re, im) in gm.row(r) {
                    let dr = &mut d[c * cols..(c + 1) * cols];
                    for j in 0..cols {
                        dr[j] += re * gr[j] + im * gr[cols + j];
                    }
                }
            }
            vec![(*x, dx)]
        }
        Op::SpectralDiffusion {
            x,
            tau,
            basis,
            mass,
            coeffs,
            times,
        } => {
            let vx = tape.val(*x);
            let (v, d) = vx.dims2();
            let k = basis.k();
            let phi = View::col_major(basis.vectors.as_slice(), v);
            // dS = Phi^T g, where S = exp(-lambda t) * coeffs.
            let mut ds = vec![0.0; k * d];
            gemm(k, v, d, 1.0, phi.t(), View::row_major(g.data(), d), 0.0, &mut ds);
            let mut dtau = vec![0.0; d];
            let mut dc = ds;
            for i in 0..k {
                let lambda = basis.values[i];
                for c in 0..d {
                    let e = (-lambda * times[c]).exp();
                    let dsv = dc[i * d + c];
                    dtau[c] -= dsv * coeffs[i * d + c] * lambda * e;
                    dc[i * d + c] = dsv * e;
                }
            }
            let tv = tape.val(*tau);
            for c in 0..d {
                if tv.data()[c] < super::MIN_DIFFUSION_TIME {
                    dtau[c] = 0.0;
                }
            }
            let mut dx = vec![0.0; v * d];
            gemm(v, k, d, 1.0, phi, View::row_major(&dc, d), 0.0, &mut dx);
            for (i, val) in dx.iter_mut().enumerate() {
                *val *= mass[i / d];
            }
            vec![
                (*x, Tensor::matrix(v, d, dx).expect("shape")),
                (*tau, Tensor::vector(dtau)),
            ]
        }
        Op::GradientFeatures { w, a, mode, aw } => {
            let vw = tape.val(*w);
            let va = tape.val(*a);
            let (v, two_d) = vw.dims2();
            let d = two_d / 2;
            // ds = dg (1 - g^2); dB = ds * w (per component), stored as [dBr | dBi].
            let mut db = vec![0.0; v * two_d];
            let mut dw = vec![0.0; v * two_d];
            for r in 0..v {
                for i in 0..d {
                    let gv = out.data()[r * d + i];
                    let ds = g.data()[r * d + i] * (1.0 - gv * gv);
                    let (wr, wi) = (vw.data()[r * two_d + i], vw.data()[r * two_d + d + i]);
                    db[r * two_d + i] = ds * wr;
                    db[r * two_d + d + i] = ds * wi;
                    dw[r * two_d + i] = ds * aw[r * two_d + i];
                    dw[r * two_d + d + i] = ds * aw[r * two_d + d + i];
                }
            }
            // dW += dB applied through A^T: the adjoint of apply_a.
            let dbr = View { data: &db, rs: two_d, cs: 1 };
            let dbi = View { data: &db[d..], rs: two_d, cs: 1 };
            let ar = View::row_major(&va.data()[..d * d], d);
            gemm_strided(v, d, d, 1.0, dbr, ar, 1.0, &mut dw, two_d, 1);
            gemm_strided(v, d, d, 1.0, dbi, ar, 1.0, &mut dw[d..], two_d, 1);
            let wr = View { data: vw.data(), rs: two_d, cs: 1 };
            let wi = View { data: &vw.data()[d..], rs: two_d, cs: 1 };
            let mut da = vec![0.0; va.len()];
            {
                let dar = &mut da[..d * d];
                gemm(d, v, d, 1.0, dbr.t(), wr, 0.0, dar);
                gemm(d, v, d, 1.0, dbi.t(), wi, 1.0, dar);
            }
            if *mode == GradientMode::Complex {
                let ai = View::row_major(&va.data()[d * d..], d);
                gemm_strided(v, d, d, 1.0, dbi, ai, 1.0, &mut dw, two_d, 1);
                gemm_strided(v, d, d, -1.0, dbr, ai, 1.0, &mut dw[d..], two_d, 1);
                let dai = &mut da[d * d..];
                gemm(d, v, d, -1.0, dbr.t(), wi, 0.0, dai);
                gemm(d, v, d, 1.0, dbi.t(), wr, 1.0, dai);
            }
            vec![
                (*w, Tensor::matrix(v, two_d, dw).expect("shape")),
                (*a, Tensor::new(va.shape().to_vec(), da).expect("shape")),
            ]
        }
        _ => unreachable!("core ops are handled separately"),
    }
}
