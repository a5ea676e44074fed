//! Forward pass, reverse-mode gradient and greedy decoding.

use rand::Rng;

use super::{Model, Offsets};
use crate::corpus::Example;
use crate::error::{Error, Result};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out[r] += Σ_c w[r, c] x[c]`
#[inline]
fn matvec_acc(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (row, o) in w.chunks_exact(cols).zip(out.iter_mut()) {
        let mut s = 0.0;
        for (a, b) in row.iter().zip(x) {
            s += a * b;
        }
        *o += s;
    }
}

/// `out[c] += Σ_r w[r, c] y[r]`
#[inline]
fn matvec_t_acc(w: &[f64], cols: usize, y: &[f64], out: &mut [f64]) {
    for (row, &yr) in w.chunks_exact(cols).zip(y) {
        if yr == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * yr;
        }
    }
}

/// `g[r, c] += y[r] x[c]`
#[inline]
fn outer_acc(g: &mut [f64], cols: usize, y: &[f64], x: &[f64]) {
    for (row, &yr) in g.chunks_exact_mut(cols).zip(y) {
        if yr == 0.0 {
            continue;
        }
        for (gv, xv) in row.iter_mut().zip(x) {
            *gv += yr * xv;
        }
    }
}

/// Recurrent state: hidden, cell and the DA memory.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

/// Activations of one time step, enough to back-propagate through it.
#[derive(Clone, Debug)]
pub struct StepCache {
    pub input: Option<usize>,
    pub x: Vec<f64>,
    pub mask_x: Option<Vec<f64>>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub d_prev: Vec<f64>,
    /// Post-activation gates `[i, f, o, g]`.
    pub gates: Vec<f64>,
    pub r: Vec<f64>,
    pub d: Vec<f64>,
    /// `tanh(W_d d)`, the DA contribution to the cell state.
    pub q: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    pub h_out: Vec<f64>,
    pub mask_h: Option<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    /// `log p` of the target token at this step.
    pub log_p_target: f64,
}

/// Teacher-forced pass over one example.
#[derive(Clone, Debug)]
pub struct Trace {
    pub targets: Vec<usize>,
    pub steps: Vec<StepCache>,
}

impl Trace {
    /// `p_{y_k}` for every position.
    pub fn target_probs(&self) -> Vec<f64> {
        self.steps
            .iter()
            .zip(&self.targets)
            .map(|(s, &y)| s.probs[y])
            .collect()
    }

    /// `-(1/K) Σ log p_{y_k}`.
    pub fn loss(&self) -> f64 {
        let k = self.steps.len() as f64;
        -self.steps.iter().map(|s| s.log_p_target).sum::<f64>() / k
    }

    /// Gradient of [`Trace::loss`] with respect to each step's logits.
    pub fn ce_logit_grads(&self) -> Vec<Vec<f64>> {
        let k = self.steps.len() as f64;
        self.steps
            .iter()
            .zip(&self.targets)
            .map(|(s, &y)| {
                let mut g: Vec<f64> = s.probs.iter().map(|p| p / k).collect();
                g[y] -= 1.0 / k;
                g
            })
            .collect()
    }
}

/// Dropout masks for one step, or `None` when dropout is off.
fn dropout_mask<R: Rng>(n: usize, rate: f64, rng: &mut Option<&mut R>) -> Option<Vec<f64>> {
    if rate <= 0.0 {
        return None;
    }
    let rng = rng.as_mut()?;
    let keep = 1.0 / (1.0 - rate);
    Some(
        (0..n)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    )
}

fn softmax(logits: &[f64]) -> (Vec<f64>, f64, f64) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    (exps.iter().map(|e| e / sum).collect(), max, sum.ln())
}

impl Model {
    pub fn initial_state(&self, da: &[f64]) -> CellState {
        let h = self.config.hidden_size;
        CellState {
            h: vec![0.0; h],
            c: vec![0.0; h],
            d: da.to_vec(),
        }
    }

    fn check_example(&self, ex: &Example) -> Result<()> {
        if ex.da.len() != self.config.da_dim {
            return Err(Error::Shape(format!(
                "DA vector has {} entries, model expects {}",
                ex.da.len(),
                self.config.da_dim
            )));
        }
        if ex.tokens.is_empty() {
            return Err(Error::Shape("empty token sequence".into()));
        }
        if let Some(&t) = ex.tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::Shape(format!(
                "token id {t} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    fn step<R: Rng>(
        &self,
        o: &Offsets,
        state: &CellState,
        input: Option<usize>,
        dropout: f64,
        rng: &mut Option<&mut R>,
    ) -> StepCache {
        let th = &self.params.theta;
        let (hs, es, vs, ds) = (
            self.config.hidden_size,
            self.config.embed_size,
            self.config.vocab_size,
            self.config.da_dim,
        );

        let (x, mask_x) = match input {
            Some(tok) => {
                let row = &th[o.emb + tok * es..o.emb + (tok + 1) * es];
                let mask = dropout_mask(es, dropout, rng);
                let x = match &mask {
                    Some(m) => row.iter().zip(m).map(|(a, b)| a * b).collect(),
                    None => row.to_vec(),
                };
                (x, mask)
            }
            None => (vec![0.0; es], None),
        };

        let mut z = th[o.b..o.b + 4 * hs].to_vec();
        matvec_acc(&th[o.w_x..o.w_x + 4 * hs * es], es, &x, &mut z);
        matvec_acc(&th[o.w_h..o.w_h + 4 * hs * hs], hs, &state.h, &mut z);
        let mut gates = z;
        for (j, v) in gates.iter_mut().enumerate() {
            *v = if j < 3 * hs { sigmoid(*v) } else { v.tanh() };
        }

        let mut r = th[o.b_r..o.b_r + ds].to_vec();
        matvec_acc(&th[o.w_rx..o.w_rx + ds * es], es, &x, &mut r);
        matvec_acc(&th[o.w_rh..o.w_rh + ds * hs], hs, &state.h, &mut r);
        for v in r.iter_mut() {
            *v = sigmoid(*v);
        }
        let d: Vec<f64> = r.iter().zip(&state.d).map(|(a, b)| a * b).collect();

        let mut q = vec![0.0; hs];
        matvec_acc(&th[o.w_d..o.w_d + hs * ds], ds, &d, &mut q);
        for v in q.iter_mut() {
            *v = v.tanh();
        }

        let mut c = vec![0.0; hs];
        let mut tanh_c = vec![0.0; hs];
        let mut h = vec![0.0; hs];
        for j in 0..hs {
            let (i, f, og, g) = (
                gates[j],
                gates[hs + j],
                gates[2 * hs + j],
                gates[3 * hs + j],
            );
            c[j] = f * state.c[j] + i * g + q[j];
            tanh_c[j] = c[j].tanh();
            h[j] = og * tanh_c[j];
        }

        let mask_h = dropout_mask(hs, dropout, rng);
        let h_out = match &mask_h {
            Some(m) => h.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => h.clone(),
        };

        let mut logits = th[o.b_out..o.b_out + vs].to_vec();
        matvec_acc(&th[o.w_out..o.w_out + vs * hs], hs, &h_out, &mut logits);
        let (probs, _, _) = softmax(&logits);

        StepCache {
            input,
            x,
            mask_x,
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            d_prev: state.d.clone(),
            gates,
            r,
            d,
            q,
            c,
            tanh_c,
            h,
            h_out,
            mask_h,
            logits,
            probs,
            log_p_target: 0.0,
        }
    }

    /// One recurrent step in evaluation mode.
    ///
    /// `input = None` feeds the zero start vector.
    pub fn cell_step(
        &self,
        state: &CellState,
        input: Option<usize>,
    ) -> Result<(CellState, Vec<f64>)> {
        let hs = self.config.hidden_size;
        if state.h.len() != hs || state.c.len() != hs || state.d.len() != self.config.da_dim {
            return Err(Error::Shape(
                "cell state does not match model config".into(),
            ));
        }
        if matches!(input, Some(t) if t >= self.config.vocab_size) {
            return Err(Error::Shape("input token outside vocabulary".into()));
        }
        let o = self.offsets();
        let s = self.step::<rand_chacha::ChaCha8Rng>(&o, state, input, 0.0, &mut None);
        let next = CellState {
            h: s.h,
            c: s.c,
            d: s.d,
        };
        Ok((next, s.logits))
    }

    /// Teacher-forced forward pass. Dropout applies only when `rng` is given
    /// and the configured rate is positive.
    pub fn forward<R: Rng>(&self, ex: &Example, mut rng: Option<&mut R>) -> Result<Trace> {
        self.check_example(ex)?;
        let o = self.offsets();
        let dropout = if rng.is_some() {
            self.config.dropout_rate
        } else {
            0.0
        };
        let mut state = self.initial_state(&ex.da);
        let mut steps = Vec::with_capacity(ex.tokens.len());
        let mut input = None;
        for &y in &ex.tokens {
            let mut s = self.step(&o, &state, input, dropout, &mut rng);
            let (_, max, log_sum) = softmax(&s.logits);
            s.log_p_target = s.logits[y] - max - log_sum;
            state = CellState {
                h: s.h.clone(),
                c: s.c.clone(),
                d: s.d.clone(),
            };
            steps.push(s);
            input = Some(y);
        }
        Ok(Trace {
            targets: ex.tokens.clone(),
            steps,
        })
    }

    pub fn forward_eval(&self, ex: &Example) -> Result<Trace> {
        self.forward::<rand_chacha::ChaCha8Rng>(ex, None)
    }

    /// Accumulates into `grad` the gradient of a scalar whose derivative
    /// with respect to step `k`'s logits is `dlogits[k]`.
    pub fn backward(&self, trace: &Trace, dlogits: &[Vec<f64>], grad: &mut [f64]) {
        let o = self.offsets();
        let th = &self.params.theta;
        let (hs, es, vs, ds) = (
            self.config.hidden_size,
            self.config.embed_size,
            self.config.vocab_size,
            self.config.da_dim,
        );
        let mut dh_next = vec![0.0; hs];
        let mut dc_next = vec![0.0; hs];
        let mut dd_next = vec![0.0; ds];

        let mut dh = vec![0.0; hs];
        let mut dz = vec![0.0; 4 * hs];
        let mut dc = vec![0.0; hs];
        let mut dq_pre = vec![0.0; hs];
        let mut dd = vec![0.0; ds];
        let mut dr_pre = vec![0.0; ds];
        let mut dx = vec![0.0; es];

        for (s, dlog) in trace.steps.iter().zip(dlogits).rev() {
            // output layer
            for (g, d) in grad[o.b_out..o.b_out + vs].iter_mut().zip(dlog) {
                *g += d;
            }
            outer_acc(&mut grad[o.w_out..o.w_out + vs * hs], hs, dlog, &s.h_out);
            dh.iter_mut().for_each(|v| *v = 0.0);
            matvec_t_acc(&th[o.w_out..o.w_out + vs * hs], hs, dlog, &mut dh);
            if let Some(m) = &s.mask_h {
                for (a, b) in dh.iter_mut().zip(m) {
                    *a *= b;
                }
            }
            for (a, b) in dh.iter_mut().zip(&dh_next) {
                *a += b;
            }

            // cell
            for j in 0..hs {
                let (i, f, og, g) = (
                    s.gates[j],
                    s.gates[hs + j],
                    s.gates[2 * hs + j],
                    s.gates[3 * hs + j],
                );
                let d_o = dh[j] * s.tanh_c[j];
                dc[j] = dh[j] * og * (1.0 - s.tanh_c[j] * s.tanh_c[j]) + dc_next[j];
                let d_i = dc[j] * g;
                let d_g = dc[j] * i;
                let d_f = dc[j] * s.c_prev[j];
                dz[j] = d_i * i * (1.0 - i);
                dz[hs + j] = d_f * f * (1.0 - f);
                dz[2 * hs + j] = d_o * og * (1.0 - og);
                dz[3 * hs + j] = d_g * (1.0 - g * g);
                dc_next[j] = dc[j] * f;
                dq_pre[j] = dc[j] * (1.0 - s.q[j] * s.q[j]);
            }

            // DA memory
            outer_acc(&mut grad[o.w_d..o.w_d + hs * ds], ds, &dq_pre, &s.d);
            dd.copy_from_slice(&dd_next);
            matvec_t_acc(&th[o.w_d..o.w_d + hs * ds], ds, &dq_pre, &mut dd);
            for j in 0..ds {
                let r = s.r[j];
                dr_pre[j] = dd[j] * s.d_prev[j] * r * (1.0 - r);
                dd_next[j] = dd[j] * r;
            }

            // gate and reading-gate weights
            for (g, d) in grad[o.b..o.b + 4 * hs].iter_mut().zip(&dz) {
                *g += d;
            }
            for (g, d) in grad[o.b_r..o.b_r + ds].iter_mut().zip(&dr_pre) {
                *g += d;
            }
            outer_acc(&mut grad[o.w_h..o.w_h + 4 * hs * hs], hs, &dz, &s.h_prev);
            outer_acc(&mut grad[o.w_rh..o.w_rh + ds * hs], hs, &dr_pre, &s.h_prev);

            dh_next.iter_mut().for_each(|v| *v = 0.0);
            matvec_t_acc(&th[o.w_h..o.w_h + 4 * hs * hs], hs, &dz, &mut dh_next);
            matvec_t_acc(&th[o.w_rh..o.w_rh + ds * hs], hs, &dr_pre, &mut dh_next);

            if let Some(tok) = s.input {
                outer_acc(&mut grad[o.w_x..o.w_x + 4 * hs * es], es, &dz, &s.x);
                outer_acc(&mut grad[o.w_rx..o.w_rx + ds * es], es, &dr_pre, &s.x);
                dx.iter_mut().for_each(|v| *v = 0.0);
                matvec_t_acc(&th[o.w_x..o.w_x + 4 * hs * es], es, &dz, &mut dx);
                matvec_t_acc(&th[o.w_rx..o.w_rx + ds * es], es, &dr_pre, &mut dx);
                let row = &mut grad[o.emb + tok * es..o.emb + (tok + 1) * es];
                match &s.mask_x {
                    Some(m) => {
                        for ((g, d), mv) in row.iter_mut().zip(&dx).zip(m) {
                            *g += d * mv;
                        }
                    }
                    None => {
                        for (g, d) in row.iter_mut().zip(&dx) {
                            *g += d;
                        }
                    }
                }
            }
        }
    }

    /// Average cross-entropy in evaluation mode.
    pub fn loss_ce(&self, ex: &Example) -> Result<f64> {
        Ok(self.forward_eval(ex)?.loss())
    }

    /// Loss and exact gradient of [`Model::loss_ce`] (evaluation mode).
    pub fn grad_ce(&self, ex: &Example) -> Result<(f64, Vec<f64>)> {
        self.grad_ce_with::<rand_chacha::ChaCha8Rng>(ex, None)
    }

    /// As [`Model::grad_ce`], with training-mode dropout when `rng` is set.
    pub fn grad_ce_with<R: Rng>(
        &self,
        ex: &Example,
        rng: Option<&mut R>,
    ) -> Result<(f64, Vec<f64>)> {
        let trace = self.forward(ex, rng)?;
        let mut grad = vec![0.0; self.num_params()];
        self.backward(&trace, &trace.ce_logit_grads(), &mut grad);
        Ok((trace.loss(), grad))
    }

    /// Greedy decoding; ties go to the lowest token id. The end marker is
    /// included in the output when emitted.
    pub fn generate(&self, da: &[f64], eos: usize, max_len: usize) -> Result<Vec<usize>> {
        if da.len() != self.config.da_dim {
            return Err(Error::Shape(format!(
                "DA vector has {} entries, model expects {}",
                da.len(),
                self.config.da_dim
            )));
        }
        let o = self.offsets();
        let mut state = self.initial_state(da);
        let mut input = None;
        let mut out = Vec::new();
        while out.len() < max_len {
            let s = self.step::<rand_chacha::ChaCha8Rng>(&o, &state, input, 0.0, &mut None);
            let mut best = 0;
            for (i, &l) in s.logits.iter().enumerate() {
                if l > s.logits[best] {
                    best = i;
                }
            }
            out.push(best);
            if best == eos {
                break;
            }
            state = CellState {
                h: s.h,
                c: s.c,
                d: s.d,
            };
            input = Some(best);
        }
        Ok(out)
    }
}
