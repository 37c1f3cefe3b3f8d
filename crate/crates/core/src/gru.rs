//! Gated recurrent unit with reset and update gates.
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! h̃  = tanh(W_h x + U_h (r ⊙ h) + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ h̃
//! ```

use rand::Rng;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_z: Tensor,
    pub w_r: Tensor,
    pub w_h: Tensor,
    pub u_z: Tensor,
    pub u_r: Tensor,
    pub u_h: Tensor,
    pub b_z: Tensor,
    pub b_r: Tensor,
    pub b_h: Tensor,
}

/// [`GruParams`] bound to a tape.
#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub w_z: Var,
    pub w_r: Var,
    pub w_h: Var,
    pub u_z: Var,
    pub u_r: Var,
    pub u_h: Var,
    pub b_z: Var,
    pub b_r: Var,
    pub b_h: Var,
    pub input: usize,
    pub hidden: usize,
}

impl GruParams {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        GruParams {
            w_z: Tensor::xavier(hidden, input, rng),
            w_r: Tensor::xavier(hidden, input, rng),
            w_h: Tensor::xavier(hidden, input, rng),
            u_z: Tensor::xavier(hidden, hidden, rng),
            u_r: Tensor::xavier(hidden, hidden, rng),
            u_h: Tensor::xavier(hidden, hidden, rng),
            b_z: Tensor::zeros(vec![hidden]),
            b_r: Tensor::zeros(vec![hidden]),
            b_h: Tensor::zeros(vec![hidden]),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruParams {
            w_z: Tensor::zeros(vec![hidden, input]),
            w_r: Tensor::zeros(vec![hidden, input]),
            w_h: Tensor::zeros(vec![hidden, input]),
            u_z: Tensor::zeros(vec![hidden, hidden]),
            u_r: Tensor::zeros(vec![hidden, hidden]),
            u_h: Tensor::zeros(vec![hidden, hidden]),
            b_z: Tensor::zeros(vec![hidden]),
            b_r: Tensor::zeros(vec![hidden]),
            b_h: Tensor::zeros(vec![hidden]),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.b_z.len()
    }

    /// Parameters in canonical order.
    pub fn named(&self) -> [(&'static str, &Tensor); 9] {
        [
            ("w_z", &self.w_z),
            ("w_r", &self.w_r),
            ("w_h", &self.w_h),
            ("u_z", &self.u_z),
            ("u_r", &self.u_r),
            ("u_h", &self.u_h),
            ("b_z", &self.b_z),
            ("b_r", &self.b_r),
            ("b_h", &self.b_h),
        ]
    }

    pub fn named_mut(&mut self) -> [(&'static str, &mut Tensor); 9] {
        [
            ("w_z", &mut self.w_z),
            ("w_r", &mut self.w_r),
            ("w_h", &mut self.w_h),
            ("u_z", &mut self.u_z),
            ("u_r", &mut self.u_r),
            ("u_h", &mut self.u_h),
            ("b_z", &mut self.b_z),
            ("b_r", &mut self.b_r),
            ("b_h", &mut self.b_h),
        ]
    }

    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> GruVars {
        GruVars {
            w_z: tape.param(&self.w_z),
            w_r: tape.param(&self.w_r),
            w_h: tape.param(&self.w_h),
            u_z: tape.param(&self.u_z),
            u_r: tape.param(&self.u_r),
            u_h: tape.param(&self.u_h),
            b_z: tape.param(&self.b_z),
            b_r: tape.param(&self.b_r),
            b_h: tape.param(&self.b_h),
            input: self.input_size(),
            hidden: self.hidden_size(),
        }
    }
}

impl GruVars {
    pub fn vars(&self) -> [Var; 9] {
        [
            self.w_z, self.w_r, self.w_h, self.u_z, self.u_r, self.u_h, self.b_z, self.b_r,
            self.b_h,
        ]
    }
}

/// One recurrent step. Rejects inputs whose sizes disagree with `p`.
pub fn gru_step(tape: &mut Tape<'_>, x: Var, h_prev: Var, p: &GruVars) -> Result<Var> {
    let (xs, hs) = (tape.shape(x), tape.shape(h_prev));
    if xs != [p.input] || hs != [p.hidden] {
        return Err(Error::Shape {
            op: "gru_step",
            lhs: vec![p.input, p.hidden],
            rhs: [xs, hs].concat(),
        });
    }
    let gate = |tape: &mut Tape<'_>, w: Var, u: Var, b: Var, h: Var| -> Result<Var> {
        let wx = tape.matvec(w, x)?;
        let uh = tape.matvec(u, h)?;
        let s = tape.add(wx, uh)?;
        tape.add(s, b)
    };
    let z_pre = gate(tape, p.w_z, p.u_z, p.b_z, h_prev)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, p.w_r, p.u_r, p.b_r, h_prev)?;
    let r = tape.sigmoid(r_pre);
    let rh = tape.mul(r, h_prev)?;
    let cand_pre = gate(tape, p.w_h, p.u_h, p.b_h, rh)?;
    let cand = tape.tanh(cand_pre);
    // (1 − z) ⊙ h + z ⊙ h̃  ==  h + z ⊙ (h̃ − h)
    let diff = tape.sub(cand, h_prev)?;
    let step = tape.mul(z, diff)?;
    tape.add(h_prev, step)
}

pub(crate) fn matvec_plain(m: &Tensor, x: &[f64]) -> Vec<f64> {
    let c = m.cols();
    m.values()
        .chunks_exact(c)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Tape-free [`gru_step`] for inference. Same arithmetic, no gradient record.
pub fn gru_step_plain(x: &[f64], h: &[f64], p: &GruParams) -> Vec<f64> {
    let gate = |w: &Tensor, u: &Tensor, b: &Tensor, hh: &[f64]| -> Vec<f64> {
        let wx = matvec_plain(w, x);
        let uh = matvec_plain(u, hh);
        wx.iter()
            .zip(&uh)
            .zip(b.values())
            .map(|((a, c), d)| a + c + d)
            .collect()
    };
    let z: Vec<f64> = gate(&p.w_z, &p.u_z, &p.b_z, h).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = gate(&p.w_r, &p.u_r, &p.b_r, h).into_iter().map(sigmoid).collect();
    let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
    let cand = gate(&p.w_h, &p.u_h, &p.b_h, &rh);
    h.iter()
        .zip(&z)
        .zip(&cand)
        .map(|((hp, zi), ci)| hp + zi * (ci.tanh() - hp))
        .collect()
}
