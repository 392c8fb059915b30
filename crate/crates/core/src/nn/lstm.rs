//! LSTM cell with cached forward steps and backpropagation through time.
//!
//! Every gate reads the concatenation `z = [h_{t-1}, x_t]`:
//!
//! ```text
//! f = σ(W_f z + b_f)      i = σ(W_i z + b_i)
//! g = tanh(W_c z + b_c)   o = σ(W_o z + b_o)
//! C_t = f ⊙ C_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(C_t)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathcore::{sigmoid, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    pub w_forget: Matrix,
    pub w_input: Matrix,
    pub w_candidate: Matrix,
    pub w_output: Matrix,
    pub b_forget: Vec<f64>,
    pub b_input: Vec<f64>,
    pub b_candidate: Vec<f64>,
    pub b_output: Vec<f64>,
}

impl LstmCellParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let w = || Matrix::zeros(hidden, hidden + input);
        Self {
            w_forget: w(),
            w_input: w(),
            w_candidate: w(),
            w_output: w(),
            b_forget: vec![0.0; hidden],
            b_input: vec![0.0; hidden],
            b_candidate: vec![0.0; hidden],
            b_output: vec![0.0; hidden],
        }
    }

    /// Uniform `±1/√(hidden + input)` weights, zero biases except the
    /// forget gate, which starts at 1.
    pub fn init(hidden: usize, input: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / ((hidden + input) as f64).sqrt();
        let mut p = Self::zeros(hidden, input);
        for w in [
            &mut p.w_forget,
            &mut p.w_input,
            &mut p.w_candidate,
            &mut p.w_output,
        ] {
            for v in w.as_mut_slice() {
                *v = rng.random_range(-bound..bound);
            }
        }
        p.b_forget.fill(1.0);
        p
    }

    pub fn hidden(&self) -> usize {
        self.b_forget.len()
    }

    pub fn input(&self) -> usize {
        self.w_forget.cols() - self.hidden()
    }

    pub(crate) fn slices(&self) -> [&[f64]; 8] {
        [
            self.w_forget.as_slice(),
            self.w_input.as_slice(),
            self.w_candidate.as_slice(),
            self.w_output.as_slice(),
            &self.b_forget,
            &self.b_input,
            &self.b_candidate,
            &self.b_output,
        ]
    }

    pub(crate) fn slices_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.w_forget.as_mut_slice(),
            self.w_input.as_mut_slice(),
            self.w_candidate.as_mut_slice(),
            self.w_output.as_mut_slice(),
            &mut self.b_forget,
            &mut self.b_input,
            &mut self.b_candidate,
            &mut self.b_output,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    pub concat: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub forget: Vec<f64>,
    pub input: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

pub fn lstm_cell_forward(
    params: &LstmCellParams,
    state: &LstmState,
    x: &[f64],
) -> Result<(LstmState, StepCache)> {
    let hidden = params.hidden();
    if state.h.len() != hidden || state.c.len() != hidden || x.len() != params.input() {
        return Err(Error::dims(format!(
            "lstm step: hidden {hidden}, input {} vs state {}/{} and x {}",
            params.input(),
            state.h.len(),
            state.c.len(),
            x.len()
        )));
    }
    let mut concat = Vec::with_capacity(hidden + x.len());
    concat.extend_from_slice(&state.h);
    concat.extend_from_slice(x);

    let gate = |w: &Matrix, b: &[f64], act: fn(f64) -> f64| {
        let mut z = vec![0.0; hidden];
        w.matvec_into(&concat, &mut z);
        z.iter_mut().zip(b).for_each(|(v, bb)| *v = act(*v + bb));
        z
    };
    let forget = gate(&params.w_forget, &params.b_forget, sigmoid);
    let input = gate(&params.w_input, &params.b_input, sigmoid);
    let candidate = gate(&params.w_candidate, &params.b_candidate, f64::tanh);
    let output = gate(&params.w_output, &params.b_output, sigmoid);

    let c: Vec<f64> = (0..hidden)
        .map(|j| forget[j] * state.c[j] + input[j] * candidate[j])
        .collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = output.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();

    let next = LstmState {
        h: h.clone(),
        c: c.clone(),
    };
    Ok((
        next,
        StepCache {
            concat,
            c_prev: state.c.clone(),
            forget,
            input,
            candidate,
            output,
            c,
            tanh_c,
            h,
        },
    ))
}

/// Runs the cell over a sequence of rows, returning every step's cache.
pub fn lstm_sequence_forward(
    params: &LstmCellParams,
    initial: &LstmState,
    inputs: impl IntoIterator<Item = impl AsRef<[f64]>>,
) -> Result<(LstmState, Vec<StepCache>)> {
    let mut state = initial.clone();
    let mut caches = Vec::new();
    for x in inputs {
        let (next, cache) = lstm_cell_forward(params, &state, x.as_ref())?;
        state = next;
        caches.push(cache);
    }
    Ok((state, caches))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrads {
    pub params: LstmCellParams,
    /// Gradient w.r.t. each step's input `x_t`.
    pub inputs: Vec<Vec<f64>>,
    /// Gradient w.r.t. the initial hidden and cell state.
    pub h0: Vec<f64>,
    pub c0: Vec<f64>,
}

/// Backpropagation through time over the cached window.
///
/// `upstream_h[t]` is ∂L/∂h_t arriving from outside the recurrence (for
/// instance a dense head reading the final step); `upstream_c_last` is
/// ∂L/∂C_T for the final cell state.
pub fn lstm_backward(
    params: &LstmCellParams,
    caches: &[StepCache],
    upstream_h: &[Vec<f64>],
    upstream_c_last: &[f64],
) -> Result<LstmGrads> {
    if caches.is_empty() {
        return Err(Error::MissingCache);
    }
    let hidden = params.hidden();
    if upstream_h.len() != caches.len() {
        return Err(Error::dims(format!(
            "{} upstream gradients for {} cached steps",
            upstream_h.len(),
            caches.len()
        )));
    }
    if upstream_h.iter().any(|g| g.len() != hidden) || upstream_c_last.len() != hidden {
        return Err(Error::dims("upstream gradient width differs from hidden size"));
    }

    let mut grads = LstmCellParams::zeros(hidden, params.input());
    let mut inputs = vec![Vec::new(); caches.len()];
    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = upstream_c_last.to_vec();
    let mut dz = [
        vec![0.0; hidden],
        vec![0.0; hidden],
        vec![0.0; hidden],
        vec![0.0; hidden],
    ];

    for t in (0..caches.len()).rev() {
        let s = &caches[t];
        let mut dconcat = vec![0.0; s.concat.len()];
        for j in 0..hidden {
            let dh = upstream_h[t][j] + dh_next[j];
            let d_out = dh * s.tanh_c[j];
            let dc = dc_next[j] + dh * s.output[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
            let d_forget = dc * s.c_prev[j];
            let d_input = dc * s.candidate[j];
            let d_cand = dc * s.input[j];
            dc_next[j] = dc * s.forget[j];

            dz[0][j] = d_forget * s.forget[j] * (1.0 - s.forget[j]);
            dz[1][j] = d_input * s.input[j] * (1.0 - s.input[j]);
            dz[2][j] = d_cand * (1.0 - s.candidate[j] * s.candidate[j]);
            dz[3][j] = d_out * s.output[j] * (1.0 - s.output[j]);
        }
        let weights = [
            &params.w_forget,
            &params.w_input,
            &params.w_candidate,
            &params.w_output,
        ];
        let (gw, gb) = (
            [
                &mut grads.w_forget,
                &mut grads.w_input,
                &mut grads.w_candidate,
                &mut grads.w_output,
            ],
            [
                &mut grads.b_forget,
                &mut grads.b_input,
                &mut grads.b_candidate,
                &mut grads.b_output,
            ],
        );
        for (k, (gwk, gbk)) in gw.into_iter().zip(gb).enumerate() {
            gwk.add_outer(&dz[k], &s.concat);
            gbk.iter_mut().zip(&dz[k]).for_each(|(b, d)| *b += d);
            weights[k].add_matvec_transposed(&dz[k], &mut dconcat);
        }
        dh_next.copy_from_slice(&dconcat[..hidden]);
        inputs[t] = dconcat[hidden..].to_vec();
    }

    Ok(LstmGrads {
        params: grads,
        inputs,
        h0: dh_next,
        c0: dc_next,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;
    use rand_distr::{Distribution, Normal};

    fn random_params(hidden: usize, input: usize, seed: u64) -> LstmCellParams {
        let mut r = rng(seed);
        let n = Normal::new(0.0, 0.5).unwrap();
        let mut p = LstmCellParams::zeros(hidden, input);
        for s in p.slices_mut() {
            for v in s {
                *v = n.sample(&mut r);
            }
        }
        p
    }

    /// Scalar, loop-per-unit re-implementation of one step.
    fn scalar_step(p: &LstmCellParams, h: &[f64], c: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hidden = h.len();
        let z: Vec<f64> = h.iter().chain(x).copied().collect();
        let mut h_out = vec![0.0; hidden];
        let mut c_out = vec![0.0; hidden];
        for j in 0..hidden {
            let mut a = [0.0f64; 4];
            for k in 0..z.len() {
                a[0] += p.w_forget.get(j, k) * z[k];
                a[1] += p.w_input.get(j, k) * z[k];
                a[2] += p.w_candidate.get(j, k) * z[k];
                a[3] += p.w_output.get(j, k) * z[k];
            }
            let f = 1.0 / (1.0 + (-(a[0] + p.b_forget[j])).exp());
            let i = 1.0 / (1.0 + (-(a[1] + p.b_input[j])).exp());
            let g = (a[2] + p.b_candidate[j]).tanh();
            let o = 1.0 / (1.0 + (-(a[3] + p.b_output[j])).exp());
            c_out[j] = f * c[j] + i * g;
            h_out[j] = o * c_out[j].tanh();
        }
        (h_out, c_out)
    }

    #[test]
    fn zero_params() {
        let p = LstmCellParams::zeros(1, 2);
        let state = LstmState {
            h: vec![0.3],
            c: vec![0.8],
        };
        let (next, cache) = lstm_cell_forward(&p, &state, &[1.0, -2.0]).unwrap();
        assert_eq!(cache.forget, vec![0.5]);
        assert_eq!(cache.input, vec![0.5]);
        assert_eq!(cache.output, vec![0.5]);
        assert_eq!(cache.candidate, vec![0.0]);
        assert_eq!(next.c, vec![0.4]);
        assert_eq!(next.h, vec![0.5 * 0.4f64.tanh()]);

        let (next, _) = lstm_cell_forward(&p, &LstmState::zeros(1), &[0.0, 0.0]).unwrap();
        assert_eq!(next, LstmState::zeros(1));
    }

    #[test]
    fn matches_scalar_reimplementation() {
        let p = random_params(5, 3, 21);
        let mut state = LstmState {
            h: vec![0.1, -0.2, 0.3, 0.0, 0.5],
            c: vec![1.0, -0.5, 0.2, 0.9, -1.2],
        };
        let mut r = rng(2);
        for _ in 0..6 {
            let x: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
            let (h_ref, c_ref) = scalar_step(&p, &state.h, &state.c, &x);
            let (next, cache) = lstm_cell_forward(&p, &state, &x).unwrap();
            for j in 0..5 {
                assert!((next.h[j] - h_ref[j]).abs() < 1e-12);
                assert!((next.c[j] - c_ref[j]).abs() < 1e-12);
                assert!(cache.forget[j] > 0.0 && cache.forget[j] < 1.0);
                assert!(cache.input[j] > 0.0 && cache.input[j] < 1.0);
                assert!(cache.output[j] > 0.0 && cache.output[j] < 1.0);
                assert!(cache.candidate[j].abs() < 1.0);
                assert!(next.h[j].abs() < 1.0);
            }
            state = next;
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = random_params(3, 2, 1);
        let xs = vec![vec![0.2, 0.1], vec![-0.4, 0.9]];
        let (_, caches) = lstm_sequence_forward(&p, &LstmState::zeros(3), &xs).unwrap();
        let g = lstm_backward(&p, &caches, &[vec![0.0; 3], vec![0.0; 3]], &[0.0; 3]).unwrap();
        assert!(g.params.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
        assert!(matches!(lstm_backward(&p, &[], &[], &[0.0; 3]), Err(Error::MissingCache)));
    }

    #[test]
    fn single_unit_hand_derivation() {
        // one step, hidden 1, input 1, loss L = h
        let mut p = LstmCellParams::zeros(1, 1);
        let vals = [0.3, -0.7, 0.5, 0.2, 0.1, -0.3, 0.4, 0.6];
        let w = [(0.3, -0.7), (0.5, 0.2), (0.1, -0.3), (0.4, 0.6)];
        for (k, m) in [
            &mut p.w_forget,
            &mut p.w_input,
            &mut p.w_candidate,
            &mut p.w_output,
        ]
        .into_iter()
        .enumerate()
        {
            m.as_mut_slice().copy_from_slice(&[w[k].0, w[k].1]);
        }
        p.b_forget = vec![vals[4]];
        p.b_input = vec![vals[5]];
        p.b_candidate = vec![vals[6]];
        p.b_output = vec![vals[7]];
        let (h0, c0, x) = (0.25, -0.4, 0.8);

        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let f = sig(w[0].0 * h0 + w[0].1 * x + vals[4]);
        let i = sig(w[1].0 * h0 + w[1].1 * x + vals[5]);
        let g = (w[2].0 * h0 + w[2].1 * x + vals[6]).tanh();
        let o = sig(w[3].0 * h0 + w[3].1 * x + vals[7]);
        let c = f * c0 + i * g;
        let tc = c.tanh();
        // dL/dh = 1
        let dc = o * (1.0 - tc * tc);
        let expect_bf = dc * c0 * f * (1.0 - f);
        let expect_bi = dc * g * i * (1.0 - i);
        let expect_bc = dc * i * (1.0 - g * g);
        let expect_bo = tc * o * (1.0 - o);
        let expect_x = expect_bf * w[0].1 + expect_bi * w[1].1 + expect_bc * w[2].1 + expect_bo * w[3].1;
        let expect_c0 = dc * f;

        let state = LstmState { h: vec![h0], c: vec![c0] };
        let (_, cache) = lstm_cell_forward(&p, &state, &[x]).unwrap();
        let gr = lstm_backward(&p, &[cache], &[vec![1.0]], &[0.0]).unwrap();
        assert!((gr.params.b_forget[0] - expect_bf).abs() < 1e-10);
        assert!((gr.params.b_input[0] - expect_bi).abs() < 1e-10);
        assert!((gr.params.b_candidate[0] - expect_bc).abs() < 1e-10);
        assert!((gr.params.b_output[0] - expect_bo).abs() < 1e-10);
        assert!((gr.params.w_forget.get(0, 0) - expect_bf * h0).abs() < 1e-10);
        assert!((gr.params.w_output.get(0, 1) - expect_bo * x).abs() < 1e-10);
        assert!((gr.inputs[0][0] - expect_x).abs() < 1e-10);
        assert!((gr.c0[0] - expect_c0).abs() < 1e-10);
    }

    #[test]
    fn window_seven_matches_finite_differences() {
        let hidden = 4;
        let input = 3;
        let p = random_params(hidden, input, 8);
        let mut r = rng(99);
        let xs: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..input).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let weights: Vec<f64> = (0..hidden).map(|_| r.random_range(-1.0..1.0)).collect();
        // L = Σ_j w_j h_T,j + 0.5 Σ_j C_T,j²
        let loss = |p: &LstmCellParams| {
            let (s, _) = lstm_sequence_forward(p, &LstmState::zeros(hidden), &xs).unwrap();
            s.h.iter().zip(&weights).map(|(h, w)| h * w).sum::<f64>()
                + 0.5 * s.c.iter().map(|c| c * c).sum::<f64>()
        };
        let (last, caches) = lstm_sequence_forward(&p, &LstmState::zeros(hidden), &xs).unwrap();
        let mut up = vec![vec![0.0; hidden]; 7];
        up[6] = weights.clone();
        let g = lstm_backward(&p, &caches, &up, &last.c).unwrap();

        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let analytic: Vec<f64> = g.params.slices().iter().flat_map(|s| s.to_vec()).collect();
        let mut k = 0;
        for s in 0..8 {
            for idx in 0..p.slices()[s].len() {
                let mut plus = p.clone();
                plus.slices_mut()[s][idx] += h;
                let mut minus = p.clone();
                minus.slices_mut()[s][idx] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let a = analytic[k];
                worst = worst.max((a - fd).abs() / (a.abs() + fd.abs()).max(1e-8));
                k += 1;
            }
        }
        assert!(worst <= 1e-4, "max relative error {worst}");
    }
}
