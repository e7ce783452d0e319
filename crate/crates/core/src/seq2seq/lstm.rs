use super::linalg::{matvec, matvec_t, outer_acc, sigmoid};
use super::params::LstmSlots;

/// Activations of one step: gates (i, f, g, o, already squashed), new cell
/// and its tanh.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub gates: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

pub(crate) fn lstm_step(
    p: &[f64],
    s: &LstmSlots,
    x: &[f64],
    h: &[f64],
    c: &[f64],
) -> (Vec<f64>, Vec<f64>, StepCache) {
    let n = s.hidden;
    let mut z = s.b.of(p).to_vec();
    matvec(s.wx.of(p), s.wx.cols, x, &mut z);
    matvec(s.wh.of(p), n, h, &mut z);
    for (k, v) in z.iter_mut().enumerate() {
        *v = if (2 * n..3 * n).contains(&k) {
            v.tanh()
        } else {
            sigmoid(*v)
        };
    }
    let mut c_new = vec![0.0; n];
    let mut h_new = vec![0.0; n];
    let mut tanh_c = vec![0.0; n];
    for j in 0..n {
        c_new[j] = z[n + j] * c[j] + z[j] * z[2 * n + j];
        tanh_c[j] = c_new[j].tanh();
        h_new[j] = z[3 * n + j] * tanh_c[j];
    }
    (h_new, c_new, StepCache { gates: z, tanh_c })
}

/// A forward pass over a sequence; `hs[0]`/`cs[0]` are the initial state.
#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    pub xs: Vec<Vec<f64>>,
    pub hs: Vec<Vec<f64>>,
    pub cs: Vec<Vec<f64>>,
    pub steps: Vec<StepCache>,
}

impl LstmCache {
    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.hs[1..]
    }

    pub fn last_h(&self) -> &[f64] {
        self.hs.last().expect("initial state present")
    }

    pub fn last_c(&self) -> &[f64] {
        self.cs.last().expect("initial state present")
    }
}

pub(crate) fn lstm_forward(
    p: &[f64],
    s: &LstmSlots,
    xs: Vec<Vec<f64>>,
    h0: Vec<f64>,
    c0: Vec<f64>,
) -> LstmCache {
    let mut hs = vec![h0];
    let mut cs = vec![c0];
    let mut steps = Vec::with_capacity(xs.len());
    for x in &xs {
        let (h, c, step) = lstm_step(p, s, x, hs.last().unwrap(), cs.last().unwrap());
        hs.push(h);
        cs.push(c);
        steps.push(step);
    }
    LstmCache { xs, hs, cs, steps }
}

/// Backpropagates `dhs` (gradient on each output) plus gradients on the
/// final hidden and cell state. Accumulates parameter gradients into `g`
/// and returns (input gradients, initial-h gradient, initial-c gradient).
pub(crate) fn lstm_backward(
    p: &[f64],
    g: &mut [f64],
    s: &LstmSlots,
    cache: &LstmCache,
    dhs: &[Vec<f64>],
    dh_last: Option<&[f64]>,
    dc_last: Option<&[f64]>,
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let n = s.hidden;
    let steps = cache.steps.len();
    let mut dh_next = dh_last.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut dc_next = dc_last.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut dxs = vec![Vec::new(); steps];
    let mut dz = vec![0.0; 4 * n];
    for t in (0..steps).rev() {
        let StepCache { gates, tanh_c } = &cache.steps[t];
        let c_prev = &cache.cs[t];
        for j in 0..n {
            let dh = dhs[t][j] + dh_next[j];
            let (i, f, gg, o) = (gates[j], gates[n + j], gates[2 * n + j], gates[3 * n + j]);
            let dc = dc_next[j] + dh * o * (1.0 - tanh_c[j] * tanh_c[j]);
            dz[j] = dc * gg * i * (1.0 - i);
            dz[n + j] = dc * c_prev[j] * f * (1.0 - f);
            dz[2 * n + j] = dc * i * (1.0 - gg * gg);
            dz[3 * n + j] = dh * tanh_c[j] * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        outer_acc(s.wx.of_mut(g), &dz, &cache.xs[t]);
        outer_acc(s.wh.of_mut(g), &dz, &cache.hs[t]);
        for (gb, d) in s.b.of_mut(g).iter_mut().zip(&dz) {
            *gb += d;
        }
        let mut dx = vec![0.0; s.wx.cols];
        matvec_t(s.wx.of(p), s.wx.cols, &dz, &mut dx);
        dxs[t] = dx;
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        matvec_t(s.wh.of(p), n, &dz, &mut dh_next);
    }
    (dxs, dh_next, dc_next)
}
