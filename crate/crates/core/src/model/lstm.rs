//! LSTM cell with an explicit reverse pass.
//!
//! Gate rows are stacked `[input; forget; candidate; output]`, each `hidden`
//! wide. Sequences are processed row-wise: `x` is `T × input`, the returned
//! hidden states are `T × hidden`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    /// `4h × input`
    pub w_x: Array2<f64>,
    /// `4h × h`
    pub w_h: Array2<f64>,
    /// `4h`
    pub bias: Array1<f64>,
}

/// Forward activations retained for the reverse pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    x: Array2<f64>,
    h0: Array1<f64>,
    c0: Array1<f64>,
    /// Post-nonlinearity gates, `T × 4h`.
    gates: Array2<f64>,
    c: Array2<f64>,
    h: Array2<f64>,
}

/// Gradients flowing out of a sequence back to its inputs.
pub struct LstmInputGrads {
    pub dx: Array2<f64>,
    pub dh0: Array1<f64>,
    pub dc0: Array1<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmWeights {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmWeights {
            w_x: Array2::zeros((4 * hidden, input)),
            w_h: Array2::zeros((4 * hidden, hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.ncols()
    }

    pub fn input(&self) -> usize {
        self.w_x.ncols()
    }

    /// Applies the gate nonlinearities in place to pre-activations `z` and
    /// returns the new `(c, h)`.
    fn activate(&self, z: &mut [f64], c_prev: ArrayView1<f64>, c: &mut [f64], h: &mut [f64]) {
        let hd = self.hidden();
        let (ifz, go) = z.split_at_mut(2 * hd);
        let (iz, fz) = ifz.split_at_mut(hd);
        let (gz, oz) = go.split_at_mut(hd);
        for k in 0..hd {
            let i = sigmoid(iz[k]);
            let f = sigmoid(fz[k]);
            let g = gz[k].tanh();
            let o = sigmoid(oz[k]);
            iz[k] = i;
            fz[k] = f;
            gz[k] = g;
            oz[k] = o;
            c[k] = f * c_prev[k] + i * g;
            h[k] = o * c[k].tanh();
        }
    }

    /// One step without retaining activations.
    pub fn step(
        &self,
        x: ArrayView1<f64>,
        h_prev: ArrayView1<f64>,
        c_prev: ArrayView1<f64>,
    ) -> (Array1<f64>, Array1<f64>) {
        let hd = self.hidden();
        let mut z = self.w_x.dot(&x) + self.w_h.dot(&h_prev) + &self.bias;
        let mut c = Array1::zeros(hd);
        let mut h = Array1::zeros(hd);
        self.activate(
            z.as_slice_mut().expect("contiguous"),
            c_prev,
            c.as_slice_mut().expect("contiguous"),
            h.as_slice_mut().expect("contiguous"),
        );
        (h, c)
    }

    /// Runs the cell over every row of `x` starting from `(h0, c0)`.
    pub fn forward(
        &self,
        x: Array2<f64>,
        h0: Array1<f64>,
        c0: Array1<f64>,
    ) -> (Array2<f64>, LstmCache) {
        let steps = x.nrows();
        let hd = self.hidden();
        let mut gates = x.dot(&self.w_x.t());
        gates += &self.bias;
        let mut c = Array2::zeros((steps, hd));
        let mut h = Array2::zeros((steps, hd));
        let mut h_prev = h0.clone();
        let mut c_prev = c0.clone();
        let mut h_t = Array1::zeros(hd);
        let mut c_t = Array1::zeros(hd);
        for t in 0..steps {
            let rec = self.w_h.dot(&h_prev);
            let mut z = gates.row_mut(t);
            z += &rec;
            self.activate(
                z.as_slice_mut().expect("contiguous"),
                c_prev.view(),
                c_t.as_slice_mut().expect("contiguous"),
                h_t.as_slice_mut().expect("contiguous"),
            );
            c.row_mut(t).assign(&c_t);
            h.row_mut(t).assign(&h_t);
            std::mem::swap(&mut h_prev, &mut h_t);
            std::mem::swap(&mut c_prev, &mut c_t);
        }
        let out = h.clone();
        (
            out,
            LstmCache {
                x,
                h0,
                c0,
                gates,
                c,
                h,
            },
        )
    }

    /// Reverse pass: accumulates weight gradients into `grads` and returns
    /// gradients for the inputs and initial state.
    pub fn backward(
        &self,
        cache: &LstmCache,
        dh_out: ArrayView2<f64>,
        grads: &mut LstmWeights,
    ) -> LstmInputGrads {
        let steps = cache.x.nrows();
        let hd = self.hidden();
        let mut dz = Array2::<f64>::zeros((steps, 4 * hd));
        let mut dh_next = Array1::<f64>::zeros(hd);
        let mut dc_next = Array1::<f64>::zeros(hd);
        for t in (0..steps).rev() {
            let g = cache.gates.row(t);
            let c_t = cache.c.row(t);
            let c_prev = if t == 0 { cache.c0.view() } else { cache.c.row(t - 1) };
            let dh = &dh_out.row(t) + &dh_next;
            let mut dzt = dz.row_mut(t);
            let dzs = dzt.as_slice_mut().expect("contiguous");
            for k in 0..hd {
                let (i, f, gg, o) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
                let tc = c_t[k].tanh();
                let d_o = dh[k] * tc;
                let dc = dc_next[k] + dh[k] * o * (1.0 - tc * tc);
                dzs[k] = dc * gg * i * (1.0 - i);
                dzs[hd + k] = dc * c_prev[k] * f * (1.0 - f);
                dzs[2 * hd + k] = dc * i * (1.0 - gg * gg);
                dzs[3 * hd + k] = d_o * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            dh_next = dz.row(t).dot(&self.w_h);
        }

        grads.w_x += &dz.t().dot(&cache.x);
        grads.bias += &dz.sum_axis(Axis(0));
        if steps > 0 {
            // h_{t-1} for every step: h0 followed by h[..T-1].
            let mut h_prev = Array2::zeros((steps, hd));
            h_prev.row_mut(0).assign(&cache.h0);
            if steps > 1 {
                h_prev
                    .slice_mut(s![1.., ..])
                    .assign(&cache.h.slice(s![..steps - 1, ..]));
            }
            grads.w_h += &dz.t().dot(&h_prev);
        }
        let dx = dz.dot(&self.w_x);
        LstmInputGrads {
            dx,
            dh0: dh_next,
            dc0: dc_next,
        }
    }
}
