use super::NnError;
use crate::linalg::gemm;

/// Geometry of a 2D sliding window; 1D layers use a unit first axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
}

impl Window {
    fn square(k: usize, s: usize, p: usize) -> Self {
        Self { kh: k, kw: k, sh: s, sw: s, ph: p, pw: p }
    }

    fn line(k: usize, s: usize, p: usize) -> Self {
        Self { kh: 1, kw: k, sh: 1, sw: s, ph: 0, pw: p }
    }

    fn area(&self) -> usize {
        self.kh * self.kw
    }
}

/// One layer of a feed-forward network. Shapes exclude the batch axis.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    Dense { inp: usize, out: usize },
    Conv1d { cin: usize, cout: usize, k: usize, s: usize, p: usize },
    Conv2d { cin: usize, cout: usize, k: usize, s: usize, p: usize },
    ConvTranspose1d { cin: usize, cout: usize, k: usize, s: usize, p: usize, op: usize },
    ConvTranspose2d { cin: usize, cout: usize, k: usize, s: usize, p: usize, op: usize },
    Reshape { shape: Vec<usize> },
    Elu,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Dense { .. } => "dense",
            LayerKind::Conv1d { .. } => "conv1d",
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::ConvTranspose1d { .. } => "convtranspose1d",
            LayerKind::ConvTranspose2d { .. } => "convtranspose2d",
            LayerKind::Reshape { .. } => "reshape",
            LayerKind::Elu => "elu",
        }
    }

    pub fn has_params(&self) -> bool {
        !matches!(self, LayerKind::Reshape { .. } | LayerKind::Elu)
    }

    /// Weight tensor shape in PyTorch layout: `(out, in)`, `(cout, cin, k…)`
    /// or `(cin, cout, k…)` for transposed convolutions.
    pub fn weight_shape(&self) -> Vec<usize> {
        match *self {
            LayerKind::Dense { inp, out } => vec![out, inp],
            LayerKind::Conv1d { cin, cout, k, .. } => vec![cout, cin, k],
            LayerKind::Conv2d { cin, cout, k, .. } => vec![cout, cin, k, k],
            LayerKind::ConvTranspose1d { cin, cout, k, .. } => vec![cin, cout, k],
            LayerKind::ConvTranspose2d { cin, cout, k, .. } => vec![cin, cout, k, k],
            _ => Vec::new(),
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            LayerKind::Dense { out, .. } => out,
            LayerKind::Conv1d { cout, .. }
            | LayerKind::Conv2d { cout, .. }
            | LayerKind::ConvTranspose1d { cout, .. }
            | LayerKind::ConvTranspose2d { cout, .. } => cout,
            _ => 0,
        }
    }

    pub fn n_params(&self) -> usize {
        if self.has_params() {
            self.weight_shape().iter().product::<usize>() + self.bias_len()
        } else {
            0
        }
    }

    /// Fan-in used for initialization, following `weight.size(1) * kernel area`.
    pub fn fan_in(&self) -> usize {
        let w = self.weight_shape();
        if w.len() < 2 {
            return 0;
        }
        w[1..].iter().product()
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        let numel: usize = input.iter().product();
        match self {
            LayerKind::Dense { inp, out } => {
                if input.len() != 1 || input[0] != *inp {
                    return Err(format!("dense expects ({inp}), got {input:?}"));
                }
                Ok(vec![*out])
            }
            LayerKind::Conv1d { cin, cout, k, s, p } => {
                if input.len() != 2 || input[0] != *cin {
                    return Err(format!("conv1d expects ({cin}, L), got {input:?}"));
                }
                let l = conv_out(input[1], *k, *s, *p)?;
                Ok(vec![*cout, l])
            }
            LayerKind::Conv2d { cin, cout, k, s, p } => {
                if input.len() != 3 || input[0] != *cin {
                    return Err(format!("conv2d expects ({cin}, H, W), got {input:?}"));
                }
                Ok(vec![*cout, conv_out(input[1], *k, *s, *p)?, conv_out(input[2], *k, *s, *p)?])
            }
            LayerKind::ConvTranspose1d { cin, cout, k, s, p, op } => {
                if input.len() != 2 || input[0] != *cin {
                    return Err(format!("convtranspose1d expects ({cin}, L), got {input:?}"));
                }
                Ok(vec![*cout, deconv_out(input[1], *k, *s, *p, *op)?])
            }
            LayerKind::ConvTranspose2d { cin, cout, k, s, p, op } => {
                if input.len() != 3 || input[0] != *cin {
                    return Err(format!("convtranspose2d expects ({cin}, H, W), got {input:?}"));
                }
                Ok(vec![*cout, deconv_out(input[1], *k, *s, *p, *op)?, deconv_out(input[2], *k, *s, *p, *op)?])
            }
            LayerKind::Reshape { shape } => {
                if shape.iter().product::<usize>() != numel {
                    return Err(format!("cannot reshape {input:?} to {shape:?}"));
                }
                Ok(shape.clone())
            }
            LayerKind::Elu => Ok(input.to_vec()),
        }
    }

    fn window(&self) -> Option<(usize, usize, Window, bool)> {
        match *self {
            LayerKind::Conv1d { cin, cout, k, s, p } => Some((cin, cout, Window::line(k, s, p), false)),
            LayerKind::Conv2d { cin, cout, k, s, p } => Some((cin, cout, Window::square(k, s, p), false)),
            LayerKind::ConvTranspose1d { cin, cout, k, s, p, .. } => Some((cin, cout, Window::line(k, s, p), true)),
            LayerKind::ConvTranspose2d { cin, cout, k, s, p, .. } => Some((cin, cout, Window::square(k, s, p), true)),
            _ => None,
        }
    }
}

pub fn conv_out(n: usize, k: usize, s: usize, p: usize) -> Result<usize, String> {
    if s == 0 || n + 2 * p < k {
        return Err(format!("window k={k} s={s} p={p} does not fit length {n}"));
    }
    Ok((n + 2 * p - k) / s + 1)
}

pub fn deconv_out(n: usize, k: usize, s: usize, p: usize, op: usize) -> Result<usize, String> {
    if s == 0 || n == 0 || op >= s || (n - 1) * s + k + op <= 2 * p {
        return Err(format!("transposed window k={k} s={s} p={p} op={op} invalid for length {n}"));
    }
    Ok((n - 1) * s + k + op - 2 * p)
}

/// `(H, W)` of a per-sample spatial shape; 1D shapes get `H = 1`.
fn spatial(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        2 => (1, shape[1]),
        3 => (shape[1], shape[2]),
        _ => unreachable!("spatial layers have 2 or 3 axes"),
    }
}

/// Destination columns `x0..x1` whose source `x·s + j − p` lies inside `0..ws`.
fn valid_range(ws: usize, wd: usize, s: usize, p: usize, j: usize) -> (usize, usize) {
    let x0 = if p > j { (p - j).div_ceil(s) } else { 0 };
    let x1 = if ws + p > j { ((ws + p - j - 1) / s + 1).min(wd) } else { 0 };
    (x0.min(x1), x1)
}

/// Gathers windows of `src` (`c x hs x ws`) for every destination position
/// (`hd x wd`) into `cols` (`c·kh·kw` rows of stride `ld`). Position `(y, x)`
/// with offset `(i, j)` reads `src[y·sh − ph + i, x·sw − pw + j]`, or zero outside.
#[allow(clippy::too_many_arguments)]
fn im2col(
    src: &[f64],
    c: usize,
    hs: usize,
    ws: usize,
    win: &Window,
    hd: usize,
    wd: usize,
    cols: &mut [f64],
    ld: usize,
) {
    let np = hd * wd;
    for ch in 0..c {
        let plane = &src[ch * hs * ws..(ch + 1) * hs * ws];
        for i in 0..win.kh {
            for j in 0..win.kw {
                let row = ((ch * win.kh + i) * win.kw + j) * ld;
                let dst = &mut cols[row..row + np];
                for y in 0..hd {
                    let sy = (y * win.sh + i) as isize - win.ph as isize;
                    let out = &mut dst[y * wd..(y + 1) * wd];
                    if sy < 0 || sy >= hs as isize {
                        out.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let line = &plane[sy as usize * ws..(sy as usize + 1) * ws];
                    let (x0, x1) = valid_range(ws, wd, win.sw, win.pw, j);
                    out[..x0].iter_mut().for_each(|v| *v = 0.0);
                    out[x1..].iter_mut().for_each(|v| *v = 0.0);
                    let base = x0 * win.sw + j - win.pw;
                    if win.sw == 1 {
                        out[x0..x1].copy_from_slice(&line[base..base + x1 - x0]);
                    } else {
                        for (o, v) in out[x0..x1].iter_mut().zip(line[base..].iter().step_by(win.sw)) {
                            *o = *v;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `cols` back, accumulating into `dst`.
#[allow(clippy::too_many_arguments)]
fn col2im(
    cols: &[f64],
    c: usize,
    hs: usize,
    ws: usize,
    win: &Window,
    hd: usize,
    wd: usize,
    dst: &mut [f64],
    ld: usize,
) {
    let np = hd * wd;
    for ch in 0..c {
        let plane = &mut dst[ch * hs * ws..(ch + 1) * hs * ws];
        for i in 0..win.kh {
            for j in 0..win.kw {
                let row = ((ch * win.kh + i) * win.kw + j) * ld;
                let src = &cols[row..row + np];
                for y in 0..hd {
                    let sy = (y * win.sh + i) as isize - win.ph as isize;
                    if sy < 0 || sy >= hs as isize {
                        continue;
                    }
                    let line = &mut plane[sy as usize * ws..(sy as usize + 1) * ws];
                    let (x0, x1) = valid_range(ws, wd, win.sw, win.pw, j);
                    let base = x0 * win.sw + j - win.pw;
                    for (d, v) in line[base..].iter_mut().step_by(win.sw).zip(&src[y * wd + x0..y * wd + x1]) {
                        *d += v;
                    }
                }
            }
        }
    }
}

thread_local! {
    static SCRATCH: std::cell::RefCell<[Vec<f64>; 2]> = const { std::cell::RefCell::new([Vec::new(), Vec::new()]) };
}

/// Runs `f` with two reusable buffers of at least `a` and `b` entries. Contents are stale.
fn with_scratch<R>(a: usize, b: usize, f: impl FnOnce(&mut [f64], &mut [f64]) -> R) -> R {
    SCRATCH.with(|s| {
        let mut s = s.borrow_mut();
        let [x, y] = &mut *s;
        if x.len() < a {
            x.resize(a, 0.0);
        }
        if y.len() < b {
            y.resize(b, 0.0);
        }
        f(&mut x[..a], &mut y[..b])
    })
}

#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else if x < -0.5 {
        x.exp() - 1.0
    } else {
        x.exp_m1()
    }
}

/// Forward pass of one layer over a batch. `weights` is `[W, b]` flattened.
pub(super) fn forward(
    kind: &LayerKind,
    in_shape: &[usize],
    out_shape: &[usize],
    batch: usize,
    weights: &[f64],
    x: &[f64],
    y: &mut [f64],
) {
    let in_n: usize = in_shape.iter().product();
    let out_n: usize = out_shape.iter().product();
    match kind {
        LayerKind::Dense { inp, out } => {
            let (w, b) = weights.split_at(inp * out);
            for r in 0..batch {
                y[r * out..(r + 1) * out].copy_from_slice(b);
            }
            // y (B x out) += x (B x in) · Wᵀ
            gemm(batch, *inp, *out, 1.0, (x, *inp as isize, 1), (w, 1, *inp as isize), 1.0, (y, *out as isize, 1));
        }
        LayerKind::Reshape { .. } => y.copy_from_slice(x),
        LayerKind::Elu => {
            for (o, &v) in y.iter_mut().zip(x) {
                *o = elu(v);
            }
        }
        _ => {
            let (cin, cout, win, transposed) = kind.window().expect("spatial layer");
            let (hi, wi) = spatial(in_shape);
            let (ho, wo) = spatial(out_shape);
            let kk = win.area();
            let (w, b) = weights.split_at(cin * cout * kk);
            let (npi, npo) = (hi * wi, ho * wo);
            if !transposed {
                // out (cout x B·np) = W (cout x k) · cols (k x B·np)
                let k = cin * kk;
                let ld = batch * npo;
                with_scratch(k * ld, cout * ld, |cols, out| {
                    for r in 0..batch {
                        im2col(&x[r * in_n..(r + 1) * in_n], cin, hi, wi, &win, ho, wo, &mut cols[r * npo..], ld);
                    }
                    gemm(cout, k, ld, 1.0, (w, k as isize, 1), (cols, ld as isize, 1), 0.0, (out, ld as isize, 1));
                    from_channel_major(out, batch, cout, npo, b, y);
                });
            } else {
                // cols (cout·kk x B·np) = Wᵀ (cout·kk x cin) · x (cin x B·np)
                let m = cout * kk;
                let ld = batch * npi;
                with_scratch(m * ld, cin * ld, |cols, xc| {
                    to_channel_major(x, batch, cin, npi, xc);
                    gemm(m, cin, ld, 1.0, (w, 1, m as isize), (xc, ld as isize, 1), 0.0, (cols, ld as isize, 1));
                    for r in 0..batch {
                        let ys = &mut y[r * out_n..(r + 1) * out_n];
                        for (co, plane) in ys.chunks_mut(npo).enumerate() {
                            plane.iter_mut().for_each(|v| *v = b[co]);
                        }
                        col2im(&cols[r * npi..], cout, ho, wo, &win, hi, wi, ys, ld);
                    }
                });
            }
        }
    }
}

/// `(B, c, np)` sample-major to `(c, B·np)` channel-major.
fn to_channel_major(x: &[f64], batch: usize, c: usize, np: usize, out: &mut [f64]) {
    let ld = batch * np;
    for r in 0..batch {
        for ch in 0..c {
            let src = &x[(r * c + ch) * np..(r * c + ch + 1) * np];
            out[ch * ld + r * np..ch * ld + (r + 1) * np].copy_from_slice(src);
        }
    }
}

/// Inverse of [`to_channel_major`], adding `bias[ch]` to every entry of channel `ch`.
fn from_channel_major(src: &[f64], batch: usize, c: usize, np: usize, bias: &[f64], y: &mut [f64]) {
    let ld = batch * np;
    for r in 0..batch {
        for ch in 0..c {
            let dst = &mut y[(r * c + ch) * np..(r * c + ch + 1) * np];
            for (d, v) in dst.iter_mut().zip(&src[ch * ld + r * np..ch * ld + (r + 1) * np]) {
                *d = v + bias[ch];
            }
        }
    }
}

/// Backward pass of one layer. Accumulates into `grad_w` and writes `dx`.
#[allow(clippy::too_many_arguments)]
pub(super) fn backward(
    kind: &LayerKind,
    in_shape: &[usize],
    out_shape: &[usize],
    batch: usize,
    weights: &[f64],
    x: &[f64],
    y: &[f64],
    dy: &[f64],
    grad_w: &mut [f64],
    dx: &mut [f64],
) {
    let in_n: usize = in_shape.iter().product();
    let out_n: usize = out_shape.iter().product();
    match kind {
        LayerKind::Dense { inp, out } => {
            let (w, _) = weights.split_at(inp * out);
            let (gw, gb) = grad_w.split_at_mut(inp * out);
            // dW (out x in) += dyᵀ · x
            gemm(*out, batch, *inp, 1.0, (dy, 1, *out as isize), (x, *inp as isize, 1), 1.0, (gw, *inp as isize, 1));
            for r in 0..batch {
                for (g, d) in gb.iter_mut().zip(&dy[r * out..(r + 1) * out]) {
                    *g += d;
                }
            }
            // dx (B x in) = dy · W
            gemm(batch, *out, *inp, 1.0, (dy, *out as isize, 1), (w, *inp as isize, 1), 0.0, (dx, *inp as isize, 1));
        }
        LayerKind::Reshape { .. } => dx.copy_from_slice(dy),
        LayerKind::Elu => {
            for ((d, &g), (&xv, &yv)) in dx.iter_mut().zip(dy).zip(x.iter().zip(y)) {
                *d = if xv > 0.0 { g } else { g * (yv + 1.0) };
            }
        }
        _ => {
            let (cin, cout, win, transposed) = kind.window().expect("spatial layer");
            let (hi, wi) = spatial(in_shape);
            let (ho, wo) = spatial(out_shape);
            let kk = win.area();
            let (w, _) = weights.split_at(cin * cout * kk);
            let (gw, gb) = grad_w.split_at_mut(cin * cout * kk);
            for r in 0..batch {
                let dys = &dy[r * out_n..(r + 1) * out_n];
                for (co, plane) in dys.chunks(ho * wo).enumerate() {
                    gb[co] += plane.iter().sum::<f64>();
                }
            }
            let (npi, npo) = (hi * wi, ho * wo);
            if !transposed {
                let k = cin * kk;
                let ld = batch * npo;
                with_scratch(k * ld, cout * ld, |cols, dyc| {
                    for r in 0..batch {
                        im2col(&x[r * in_n..(r + 1) * in_n], cin, hi, wi, &win, ho, wo, &mut cols[r * npo..], ld);
                    }
                    to_channel_major(dy, batch, cout, npo, dyc);
                    // dW (cout x k) += dy (cout x B·np) · colsᵀ
                    gemm(cout, ld, k, 1.0, (dyc, ld as isize, 1), (cols, 1, ld as isize), 1.0, (gw, k as isize, 1));
                    // dcols (k x B·np) = Wᵀ · dy
                    gemm(k, cout, ld, 1.0, (w, 1, k as isize), (dyc, ld as isize, 1), 0.0, (cols, ld as isize, 1));
                    dx.iter_mut().for_each(|v| *v = 0.0);
                    for r in 0..batch {
                        col2im(&cols[r * npo..], cin, hi, wi, &win, ho, wo, &mut dx[r * in_n..(r + 1) * in_n], ld);
                    }
                });
            } else {
                let m = cout * kk;
                let ld = batch * npi;
                with_scratch(m * ld, cin * ld, |cols, xc| {
                    for r in 0..batch {
                        im2col(&dy[r * out_n..(r + 1) * out_n], cout, ho, wo, &win, hi, wi, &mut cols[r * npi..], ld);
                    }
                    to_channel_major(x, batch, cin, npi, xc);
                    // dW (cin x m) += x (cin x B·np) · colsᵀ
                    gemm(cin, ld, m, 1.0, (xc, ld as isize, 1), (cols, 1, ld as isize), 1.0, (gw, m as isize, 1));
                    // dx (cin x B·np) = W (cin x m) · cols, reusing the x buffer
                    gemm(cin, m, ld, 1.0, (w, m as isize, 1), (cols, ld as isize, 1), 0.0, (xc, ld as isize, 1));
                    from_channel_major(xc, batch, cin, npi, &vec![0.0; cin], dx);
                });
            }
        }
    }
}

pub(super) fn check_shape(layer: usize, kind: &LayerKind, input: &[usize]) -> Result<Vec<usize>, NnError> {
    kind.output_shape(input).map_err(|message| NnError::Shape { layer, message })
}
