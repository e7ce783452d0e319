use super::ModelDims;

/// A matrix (or vector when `cols == 1`) inside the flat parameter buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Mat {
    pub off: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Mat {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn of<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.off..self.off + self.len()]
    }

    pub fn of_mut<'a>(&self, p: &'a mut [f64]) -> &'a mut [f64] {
        &mut p[self.off..self.off + self.len()]
    }

    pub fn row<'a>(&self, p: &'a [f64], r: usize) -> &'a [f64] {
        let start = self.off + r * self.cols;
        &p[start..start + self.cols]
    }

    pub fn row_mut<'a>(&self, p: &'a mut [f64], r: usize) -> &'a mut [f64] {
        let start = self.off + r * self.cols;
        &mut p[start..start + self.cols]
    }
}

/// One LSTM layer: gates stacked as input, forget, cell, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LstmSlots {
    pub wx: Mat,
    pub wh: Mat,
    pub b: Mat,
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub emb: Mat,
    /// `[layer][direction]`, direction 0 forward, 1 backward.
    pub enc: [[LstmSlots; 2]; 2],
    pub bridge_h_w: Mat,
    pub bridge_h_b: Mat,
    pub bridge_c_w: Mat,
    pub bridge_c_b: Mat,
    pub dec: LstmSlots,
    pub att_enc: Mat,
    pub att_dec: Mat,
    pub att_b: Mat,
    pub att_v: Mat,
    pub out_w: Mat,
    pub out_b: Mat,
    pub gen_ctx: Mat,
    pub gen_state: Mat,
    pub gen_input: Mat,
    pub gen_b: Mat,
    pub total: usize,
}

struct Alloc(usize);

impl Alloc {
    fn mat(&mut self, rows: usize, cols: usize) -> Mat {
        let m = Mat {
            off: self.0,
            rows,
            cols,
        };
        self.0 += rows * cols;
        m
    }

    fn lstm(&mut self, input: usize, hidden: usize) -> LstmSlots {
        LstmSlots {
            wx: self.mat(4 * hidden, input),
            wh: self.mat(4 * hidden, hidden),
            b: self.mat(4 * hidden, 1),
            hidden,
        }
    }
}

impl Layout {
    pub fn new(vocab: usize, dims: &ModelDims) -> Self {
        let (e, h) = (dims.emb_dim, dims.enc_hidden);
        let (s, a) = (dims.dec_hidden(), dims.dec_hidden());
        let mut al = Alloc(0);
        let emb = al.mat(vocab, e);
        let enc = [
            [al.lstm(e, h), al.lstm(e, h)],
            [al.lstm(2 * h, h), al.lstm(2 * h, h)],
        ];
        let bridge_h_w = al.mat(s, 2 * h);
        let bridge_h_b = al.mat(s, 1);
        let bridge_c_w = al.mat(s, 2 * h);
        let bridge_c_b = al.mat(s, 1);
        let dec = al.lstm(e, s);
        let att_enc = al.mat(a, 2 * h);
        let att_dec = al.mat(a, s);
        let att_b = al.mat(a, 1);
        let att_v = al.mat(a, 1);
        let out_w = al.mat(vocab, s + 2 * h);
        let out_b = al.mat(vocab, 1);
        let gen_ctx = al.mat(2 * h, 1);
        let gen_state = al.mat(s, 1);
        let gen_input = al.mat(e, 1);
        let gen_b = al.mat(1, 1);
        Self {
            emb,
            enc,
            bridge_h_w,
            bridge_h_b,
            bridge_c_w,
            bridge_c_b,
            dec,
            att_enc,
            att_dec,
            att_b,
            att_v,
            out_w,
            out_b,
            gen_ctx,
            gen_state,
            gen_input,
            gen_b,
            total: al.0,
        }
    }

    /// Named parameter groups in buffer order.
    pub fn groups(&self) -> Vec<(String, Mat)> {
        let mut g = vec![("embedding".to_string(), self.emb)];
        for (l, layer) in self.enc.iter().enumerate() {
            for (d, slots) in layer.iter().enumerate() {
                let dir = if d == 0 { "fwd" } else { "bwd" };
                g.push((format!("encoder.l{l}.{dir}.wx"), slots.wx));
                g.push((format!("encoder.l{l}.{dir}.wh"), slots.wh));
                g.push((format!("encoder.l{l}.{dir}.b"), slots.b));
            }
        }
        g.extend([
            ("bridge.h.w".to_string(), self.bridge_h_w),
            ("bridge.h.b".to_string(), self.bridge_h_b),
            ("bridge.c.w".to_string(), self.bridge_c_w),
            ("bridge.c.b".to_string(), self.bridge_c_b),
            ("decoder.wx".to_string(), self.dec.wx),
            ("decoder.wh".to_string(), self.dec.wh),
            ("decoder.b".to_string(), self.dec.b),
            ("attention.enc".to_string(), self.att_enc),
            ("attention.dec".to_string(), self.att_dec),
            ("attention.b".to_string(), self.att_b),
            ("attention.v".to_string(), self.att_v),
            ("output.w".to_string(), self.out_w),
            ("output.b".to_string(), self.out_b),
            ("pgen.context".to_string(), self.gen_ctx),
            ("pgen.state".to_string(), self.gen_state),
            ("pgen.input".to_string(), self.gen_input),
            ("pgen.b".to_string(), self.gen_b),
        ]);
        g
    }

    pub fn lstms(&self) -> [LstmSlots; 5] {
        [
            self.enc[0][0],
            self.enc[0][1],
            self.enc[1][0],
            self.enc[1][1],
            self.dec,
        ]
    }
}
