use crate::error::{Error, Result};
use crate::tensor::{Graph, Rng, Tensor, Var};

/// Weights of one LSTM layer: input projections `w_x*` are
/// `[hidden, input]`, recurrent projections `w_h*` are `[hidden, hidden]`,
/// biases are `[hidden]`. Gate suffixes: i input, f forget, g modulation, o output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_xi: Tensor,
    pub w_xf: Tensor,
    pub w_xg: Tensor,
    pub w_xo: Tensor,
    pub w_hi: Tensor,
    pub w_hf: Tensor,
    pub w_hg: Tensor,
    pub w_ho: Tensor,
    pub b_i: Tensor,
    pub b_f: Tensor,
    pub b_g: Tensor,
    pub b_o: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Tensor,
    pub c: Tensor,
}

/// [`LstmParams`] recorded on a graph.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w_x: [Var; 4],
    pub w_h: [Var; 4],
    pub b: [Var; 4],
}

/// [`LstmState`] recorded on a graph.
#[derive(Clone, Copy, Debug)]
pub struct StateVars {
    pub h: Var,
    pub c: Var,
}

impl LstmParams {
    pub fn init(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let bx = 1.0 / (input as f64).sqrt();
        let bh = 1.0 / (hidden as f64).sqrt();
        let mut wx = || Tensor::uniform(vec![hidden, input], -bx, bx, rng);
        let (w_xi, w_xf, w_xg, w_xo) = (wx(), wx(), wx(), wx());
        let mut wh = || Tensor::uniform(vec![hidden, hidden], -bh, bh, rng);
        let (w_hi, w_hf, w_hg, w_ho) = (wh(), wh(), wh(), wh());
        LstmParams {
            w_xi,
            w_xf,
            w_xg,
            w_xo,
            w_hi,
            w_hf,
            w_hg,
            w_ho,
            b_i: Tensor::zeros(vec![hidden]),
            b_f: Tensor::full(vec![hidden], 1.0),
            b_g: Tensor::zeros(vec![hidden]),
            b_o: Tensor::zeros(vec![hidden]),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        let wx = || Tensor::zeros(vec![hidden, input]);
        let wh = || Tensor::zeros(vec![hidden, hidden]);
        let b = || Tensor::zeros(vec![hidden]);
        LstmParams {
            w_xi: wx(),
            w_xf: wx(),
            w_xg: wx(),
            w_xo: wx(),
            w_hi: wh(),
            w_hf: wh(),
            w_hg: wh(),
            w_ho: wh(),
            b_i: b(),
            b_f: b(),
            b_g: b(),
            b_o: b(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_i.len()
    }

    pub fn input(&self) -> usize {
        self.w_xi.shape()[1]
    }

    pub fn named(&self) -> [(&'static str, &Tensor); 12] {
        [
            ("w_xi", &self.w_xi),
            ("w_xf", &self.w_xf),
            ("w_xg", &self.w_xg),
            ("w_xo", &self.w_xo),
            ("w_hi", &self.w_hi),
            ("w_hf", &self.w_hf),
            ("w_hg", &self.w_hg),
            ("w_ho", &self.w_ho),
            ("b_i", &self.b_i),
            ("b_f", &self.b_f),
            ("b_g", &self.b_g),
            ("b_o", &self.b_o),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 12] {
        [
            &mut self.w_xi,
            &mut self.w_xf,
            &mut self.w_xg,
            &mut self.w_xo,
            &mut self.w_hi,
            &mut self.w_hf,
            &mut self.w_hg,
            &mut self.w_ho,
            &mut self.b_i,
            &mut self.b_f,
            &mut self.b_g,
            &mut self.b_o,
        ]
    }

    pub fn bind<'p>(&'p self, put: &mut impl FnMut(&'p Tensor) -> Var) -> LstmVars {
        LstmVars {
            w_x: [put(&self.w_xi), put(&self.w_xf), put(&self.w_xg), put(&self.w_xo)],
            w_h: [put(&self.w_hi), put(&self.w_hf), put(&self.w_hg), put(&self.w_ho)],
            b: [put(&self.b_i), put(&self.b_f), put(&self.b_g), put(&self.b_o)],
        }
    }
}

impl LstmVars {
    pub fn all(&self) -> Vec<Var> {
        self.w_x.iter().chain(&self.w_h).chain(&self.b).copied().collect()
    }
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: Tensor::zeros(vec![hidden]),
            c: Tensor::zeros(vec![hidden]),
        }
    }

    pub fn bind(&self, g: &mut Graph<'_>) -> StateVars {
        StateVars {
            h: g.constant(self.h.clone()),
            c: g.constant(self.c.clone()),
        }
    }
}

impl StateVars {
    pub fn value(&self, g: &Graph<'_>) -> LstmState {
        LstmState {
            h: g.value(self.h).clone(),
            c: g.value(self.c).clone(),
        }
    }
}

/// One recurrence step given the input projections `W_x* x` of each gate:
///
/// ```text
/// i = σ(W_xi x + W_hi h + b_i)
/// f = σ(W_xf x + W_hf h + b_f)
/// g = tanh(W_xg x + W_hg h + b_g)
/// c' = f ⊙ c + i ⊙ g
/// o = σ(W_xo x + W_ho h + b_o)
/// h' = o ⊙ tanh(c')
/// ```
pub fn lstm_cell(g: &mut Graph<'_>, p: &LstmVars, input_proj: [Var; 4], state: StateVars) -> Result<StateVars> {
    let hidden = g.shape(p.b[0])[0];
    for v in [state.h, state.c] {
        if g.shape(v) != [hidden] {
            return Err(Error::shape("lstm_step", &[hidden], g.shape(v)));
        }
    }
    let mut pre = [state.h; 4];
    for gate in 0..4 {
        let rec = g.matmul(p.w_h[gate], state.h)?;
        let z = g.add(input_proj[gate], rec)?;
        pre[gate] = g.add(z, p.b[gate])?;
    }
    let i = g.sigmoid(pre[0])?;
    let f = g.sigmoid(pre[1])?;
    let gg = g.tanh(pre[2])?;
    let keep = g.mul(f, state.c)?;
    let write = g.mul(i, gg)?;
    let c = g.add(keep, write)?;
    let o = g.sigmoid(pre[3])?;
    let tc = g.tanh(c)?;
    let h = g.mul(o, tc)?;
    Ok(StateVars { h, c })
}

/// One step from a raw input vector `x`; returns the new state, whose `h`
/// is also the layer output.
pub fn lstm_step(g: &mut Graph<'_>, p: &LstmVars, x: Var, state: StateVars) -> Result<StateVars> {
    let mut proj = [x; 4];
    for gate in 0..4 {
        proj[gate] = g.matmul(p.w_x[gate], x)?;
    }
    lstm_cell(g, p, proj, state)
}

/// Runs a layer over every column of `xs` (`[input, T]`). Input projections
/// for all steps are computed as one matrix product per gate.
pub fn lstm_layer(g: &mut Graph<'_>, p: &LstmVars, xs: Var, state: StateVars) -> Result<(Vec<Var>, StateVars)> {
    let steps = match *g.shape(xs) {
        [_, t] => t,
        _ => return Err(Error::invalid("lstm_layer", format!("expected [input, T], got {:?}", g.shape(xs)))),
    };
    let mut proj = [xs; 4];
    for gate in 0..4 {
        proj[gate] = g.matmul(p.w_x[gate], xs)?;
    }
    let mut state = state;
    let mut outputs = Vec::with_capacity(steps);
    for k in 0..steps {
        let mut cols = [xs; 4];
        for gate in 0..4 {
            cols[gate] = g.column(proj[gate], k)?;
        }
        state = lstm_cell(g, p, cols, state)?;
        outputs.push(state.h);
    }
    Ok((outputs, state))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_params(w: f64, b: f64) -> LstmParams {
        let m = || Tensor::full(vec![1, 1], w);
        let v = || Tensor::full(vec![1], b);
        LstmParams {
            w_xi: m(),
            w_xf: m(),
            w_xg: m(),
            w_xo: m(),
            w_hi: m(),
            w_hf: m(),
            w_hg: m(),
            w_ho: m(),
            b_i: v(),
            b_f: v(),
            b_g: v(),
            b_o: v(),
        }
    }

    fn step(p: &LstmParams, x: f64, h: f64, c: f64) -> (f64, f64) {
        let mut g = Graph::new();
        let vars = p.bind(&mut |t| g.constant_ref(t));
        let xv = g.constant(Tensor::full(vec![1], x));
        let st = LstmState {
            h: Tensor::full(vec![1], h),
            c: Tensor::full(vec![1], c),
        }
        .bind(&mut g);
        let out = lstm_step(&mut g, &vars, xv, st).unwrap();
        (g.value(out.h).item(), g.value(out.c).item())
    }

    #[test]
    fn zero_weights_zero_cell() {
        let p = scalar_params(0.0, 0.0);
        assert_eq!(step(&p, 3.0, 0.0, 0.0), (0.0, 0.0));
    }

    #[test]
    fn zero_weights_unit_cell() {
        let p = scalar_params(0.0, 0.0);
        let (h, c) = step(&p, -2.0, 0.0, 1.0);
        assert_eq!(c, 0.5);
        assert!((h - 0.231_058_57).abs() < 1e-8, "{h}");
    }

    #[test]
    fn rejects_wrong_state_size() {
        let p = LstmParams::init(3, 4, &mut Rng::new(1));
        let mut g = Graph::new();
        let vars = p.bind(&mut |t| g.constant_ref(t));
        let x = g.constant(Tensor::zeros(vec![3]));
        let st = LstmState::zeros(5).bind(&mut g);
        assert!(lstm_step(&mut g, &vars, x, st).is_err());
        let bad_x = g.constant(Tensor::zeros(vec![2]));
        let st = LstmState::zeros(4).bind(&mut g);
        assert!(lstm_step(&mut g, &vars, bad_x, st).is_err());
    }
}
