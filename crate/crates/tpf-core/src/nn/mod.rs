//! Velocity-field approximators: residual MLPs over the state with sinusoidal
//! (t, s[, mu]) conditioning, exact reverse-mode parameter gradients, and an
//! AdamW optimizer.
//!
//! The architecture is fixed rather than graph-based: one flat weight vector,
//! a layout derived from the spec, and a hand-written backward pass. All
//! arithmetic is f64; transcendentals go through `libm` so results do not
//! depend on the platform's libm.

mod adamw;

pub use adamw::{adamw_step, AdamWState};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SeededRng};

/// Number of sinusoidal frequencies per conditioned scalar.
pub const SIN_FREQS: usize = 16;
/// Largest sinusoidal frequency. Conditioning axes are observed at a
/// handful of grid values (about a dozen marginals on [0, 1]), so
/// frequencies beyond their Nyquist band would be pure unconstrained
/// oscillation between the grid points; the cap sits at that band edge.
pub const SIN_FREQ_MAX: f64 = 4.0;
/// Features per conditioned scalar (sin and cos per frequency).
pub const FEATS_PER_SCALAR: usize = 2 * SIN_FREQS;
/// Hidden width of the conditioning embedding network.
pub const EMBED_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Gelu,
}

/// Architecture description for a velocity-field MLP.
///
/// `depth` counts hidden layers. Residual connections apply between
/// consecutive equal-width hidden layers (never on the first, which adapts
/// the input width). `time_embed_dim = 0` disables conditioning entirely;
/// otherwise t and s (and mu when `mu_conditioned`) are featurized with
/// sinusoids, passed through a two-layer embedding MLP, and added to every
/// hidden layer's preactivation through a learned per-layer projection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_width: usize,
    pub depth: usize,
    pub activation: Activation,
    pub residual: bool,
    pub time_embed_dim: usize,
    pub mu_conditioned: bool,
}

impl MlpSpec {
    pub fn new(input_dim: usize, output_dim: usize, hidden_width: usize, depth: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            hidden_width,
            depth,
            activation: Activation::Gelu,
            residual: true,
            time_embed_dim: 32,
            mu_conditioned: false,
        }
    }

    pub fn with_time_embed(mut self, dim: usize) -> Self {
        self.time_embed_dim = dim;
        self
    }

    pub fn with_mu(mut self, on: bool) -> Self {
        self.mu_conditioned = on;
        self
    }

    pub fn with_residual(mut self, on: bool) -> Self {
        self.residual = on;
        self
    }

    fn conditioned_scalars(&self) -> usize {
        if self.time_embed_dim == 0 {
            0
        } else if self.mu_conditioned {
            3
        } else {
            2
        }
    }

    pub fn layout(&self) -> Layout {
        Layout::of(self)
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }

    fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::DimMismatch("depth must be at least 1".into()));
        }
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_width == 0 {
            return Err(Error::DimMismatch("zero-sized layer".into()));
        }
        Ok(())
    }
}

/// Half-open weight range of one parameter block inside the flat array.
#[derive(Debug, Clone, Copy)]
pub struct Block {
    pub start: usize,
    pub len: usize,
    /// Fan-in used for initialization scaling.
    pub fan_in: usize,
    /// True for bias blocks (initialized to zero).
    pub bias: bool,
}

impl Block {
    fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Weight layout of an [`MlpSpec`]: embedding network, hidden layers with
/// optional conditioning projections, and the linear output layer.
#[derive(Debug, Clone)]
pub struct Layout {
    pub embed_w1: Option<Block>,
    pub embed_b1: Option<Block>,
    pub embed_w2: Option<Block>,
    pub embed_b2: Option<Block>,
    /// Per hidden layer: (weight, bias, conditioning projection).
    pub layers: Vec<(Block, Block, Option<Block>)>,
    pub out_w: Block,
    pub out_b: Block,
    pub total: usize,
}

impl Layout {
    fn of(spec: &MlpSpec) -> Layout {
        let mut cursor = 0usize;
        let mut block = |len: usize, fan_in: usize, bias: bool| {
            let b = Block {
                start: cursor,
                len,
                fan_in,
                bias,
            };
            cursor += len;
            b
        };
        let ted = spec.time_embed_dim;
        let (embed_w1, embed_b1, embed_w2, embed_b2) = if ted > 0 {
            let feat = FEATS_PER_SCALAR * spec.conditioned_scalars();
            (
                Some(block(EMBED_HIDDEN * feat, feat, false)),
                Some(block(EMBED_HIDDEN, feat, true)),
                Some(block(ted * EMBED_HIDDEN, EMBED_HIDDEN, false)),
                Some(block(ted, EMBED_HIDDEN, true)),
            )
        } else {
            (None, None, None, None)
        };
        let mut layers = Vec::with_capacity(spec.depth);
        for l in 0..spec.depth {
            let fan_in = if l == 0 {
                spec.input_dim
            } else {
                spec.hidden_width
            };
            let w = block(spec.hidden_width * fan_in, fan_in, false);
            let b = block(spec.hidden_width, fan_in, true);
            let c = if ted > 0 {
                Some(block(spec.hidden_width * ted, ted, false))
            } else {
                None
            };
            layers.push((w, b, c));
        }
        let out_w = block(spec.output_dim * spec.hidden_width, spec.hidden_width, false);
        let out_b = block(spec.output_dim, spec.hidden_width, true);
        Layout {
            embed_w1,
            embed_b1,
            embed_w2,
            embed_b2,
            layers,
            out_w,
            out_b,
            total: cursor,
        }
    }

    fn all_blocks(&self) -> Vec<Block> {
        let mut v = Vec::new();
        for b in [self.embed_w1, self.embed_b1, self.embed_w2, self.embed_b2]
            .into_iter()
            .flatten()
        {
            v.push(b);
        }
        for (w, b, c) in &self.layers {
            v.push(*w);
            v.push(*b);
            if let Some(c) = c {
                v.push(*c);
            }
        }
        v.push(self.out_w);
        v.push(self.out_b);
        v
    }
}

/// Trained or initialized parameters of an MLP velocity field.
#[derive(Debug, Clone)]
pub struct NetParams {
    pub spec: MlpSpec,
    pub weights: Vec<f64>,
}

impl NetParams {
    pub fn param_count(&self) -> usize {
        self.weights.len()
    }
}

/// Fan-in-scaled normal initialization (std = 1/sqrt(fan_in)), zero biases.
///
/// The per-layer conditioning projections start at zero: the sinusoidal
/// features span frequencies far above what a handful of marginals can
/// constrain in t, and a freshly initialized field must not oscillate along
/// axes the data never pins down. Gradients reach the projections (and
/// through them the embedding network) after the first step.
pub fn net_init(spec: &MlpSpec, rng: &mut SeededRng) -> Result<NetParams> {
    spec.validate()?;
    let layout = spec.layout();
    let mut weights = vec![0.0; layout.total];
    for b in layout.all_blocks() {
        if b.bias {
            continue;
        }
        let std = 1.0 / (b.fan_in as f64).sqrt();
        for w in &mut weights[b.range()] {
            *w = rng.normal() * std;
        }
    }
    for (_, _, cond) in &layout.layers {
        if let Some(c) = cond {
            weights[c.range()].fill(0.0);
        }
    }
    Ok(NetParams {
        spec: spec.clone(),
        weights,
    })
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

pub fn gelu_prime(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.3989422804014327;
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
        + x * INV_SQRT_2PI * libm::exp(-0.5 * x * x)
}

/// Sinusoidal features of one scalar: frequencies geometrically spaced in
/// [1, SIN_FREQ_MAX], sin and cos each.
pub fn sinusoidal_features(z: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), FEATS_PER_SCALAR);
    for j in 0..SIN_FREQS {
        let omega = libm::pow(SIN_FREQ_MAX, j as f64 / (SIN_FREQS - 1) as f64);
        out[2 * j] = libm::sin(omega * z);
        out[2 * j + 1] = libm::cos(omega * z);
    }
}

/// Forward-pass scratch recorded for the backward pass.
struct Tape {
    feats: Vec<f64>,
    embed_pre: Vec<f64>,
    embed_hidden: Vec<f64>,
    embed: Vec<f64>,
    layer_in: Vec<Vec<f64>>,
    layer_pre: Vec<Vec<f64>>,
    h_last: Vec<f64>,
}

impl Tape {
    fn empty() -> Tape {
        Tape {
            feats: Vec::new(),
            embed_pre: Vec::new(),
            embed_hidden: Vec::new(),
            embed: Vec::new(),
            layer_in: Vec::new(),
            layer_pre: Vec::new(),
            h_last: Vec::new(),
        }
    }
}

fn matvec_block(weights: &[f64], b: &Block, rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(b.len, rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    let w = &weights[b.range()];
    for i in 0..rows {
        let row = &w[i * cols..(i + 1) * cols];
        let mut acc = 0.0;
        for (a, b2) in row.iter().zip(x.iter()) {
            acc += a * b2;
        }
        out[i] = acc;
    }
}

fn check_inputs(p: &NetParams, x: &[f64], mu: Option<f64>) -> Result<()> {
    if x.len() != p.spec.input_dim {
        return Err(Error::DimMismatch(format!(
            "input has {} entries, spec wants {}",
            x.len(),
            p.spec.input_dim
        )));
    }
    if p.spec.time_embed_dim > 0 && p.spec.mu_conditioned != mu.is_some() {
        return Err(Error::DimMismatch(
            "mu must be present iff the spec was built with parameter conditioning".into(),
        ));
    }
    Ok(())
}

fn forward_impl(
    p: &NetParams,
    x: &[f64],
    t: f64,
    s: f64,
    mu: Option<f64>,
    mut tape: Option<&mut Tape>,
) -> Vec<f64> {
    let spec = &p.spec;
    let layout = spec.layout();
    let ted = spec.time_embed_dim;

    let embed: Vec<f64> = if ted > 0 {
        let scalars = spec.conditioned_scalars();
        let mut feats = vec![0.0; FEATS_PER_SCALAR * scalars];
        sinusoidal_features(t, &mut feats[..FEATS_PER_SCALAR]);
        sinusoidal_features(s, &mut feats[FEATS_PER_SCALAR..2 * FEATS_PER_SCALAR]);
        if let Some(m) = mu {
            sinusoidal_features(m, &mut feats[2 * FEATS_PER_SCALAR..]);
        }
        let mut pre = vec![0.0; EMBED_HIDDEN];
        matvec_block(
            &p.weights,
            &layout.embed_w1.unwrap(),
            EMBED_HIDDEN,
            feats.len(),
            &feats,
            &mut pre,
        );
        let b1 = layout.embed_b1.unwrap();
        for (v, w) in pre.iter_mut().zip(&p.weights[b1.range()]) {
            *v += w;
        }
        let hidden: Vec<f64> = pre.iter().map(|&v| gelu(v)).collect();
        let mut emb = vec![0.0; ted];
        matvec_block(
            &p.weights,
            &layout.embed_w2.unwrap(),
            ted,
            EMBED_HIDDEN,
            &hidden,
            &mut emb,
        );
        let b2 = layout.embed_b2.unwrap();
        for (v, w) in emb.iter_mut().zip(&p.weights[b2.range()]) {
            *v += w;
        }
        if let Some(tp) = tape.as_deref_mut() {
            tp.feats = feats;
            tp.embed_pre = pre;
            tp.embed_hidden = hidden;
            tp.embed = emb.clone();
        }
        emb
    } else {
        Vec::new()
    };

    let mut h: Vec<f64> = x.to_vec();
    for (l, (wb, bb, cb)) in layout.layers.iter().enumerate() {
        let fan_in = if l == 0 {
            spec.input_dim
        } else {
            spec.hidden_width
        };
        let mut pre = vec![0.0; spec.hidden_width];
        matvec_block(&p.weights, wb, spec.hidden_width, fan_in, &h, &mut pre);
        for (v, w) in pre.iter_mut().zip(&p.weights[bb.range()]) {
            *v += w;
        }
        if let Some(cb) = cb {
            let mut cond = vec![0.0; spec.hidden_width];
            matvec_block(&p.weights, cb, spec.hidden_width, ted, &embed, &mut cond);
            for (v, c) in pre.iter_mut().zip(&cond) {
                *v += c;
            }
        }
        let act: Vec<f64> = pre.iter().map(|&v| gelu(v)).collect();
        let next = if spec.residual && l > 0 {
            h.iter().zip(&act).map(|(a, b)| a + b).collect()
        } else {
            act
        };
        if let Some(tp) = tape.as_deref_mut() {
            tp.layer_in.push(h);
            tp.layer_pre.push(pre);
        }
        h = next;
    }

    let mut out = vec![0.0; spec.output_dim];
    matvec_block(
        &p.weights,
        &layout.out_w,
        spec.output_dim,
        spec.hidden_width,
        &h,
        &mut out,
    );
    for (v, w) in out.iter_mut().zip(&p.weights[layout.out_b.range()]) {
        *v += w;
    }
    if let Some(tp) = tape {
        tp.h_last = h;
    }
    out
}

/// Evaluate the network at one state and conditioning tuple.
pub fn net_forward(p: &NetParams, x: &[f64], t: f64, s: f64, mu: Option<f64>) -> Result<Vec<f64>> {
    check_inputs(p, x, mu)?;
    Ok(forward_impl(p, x, t, s, mu, None))
}

/// One quadratic-regression batch: rows of `x` with per-row conditioning and
/// a target row each. Both supported losses (flow-matching targets and
/// finite-difference regression targets) take this shape.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Matrix,
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub mu: Option<Vec<f64>>,
    pub target: Matrix,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    fn validate(&self, p: &NetParams) -> Result<()> {
        let b = self.x.rows();
        if b == 0 {
            return Err(Error::DimMismatch("empty batch".into()));
        }
        if self.t.len() != b
            || self.s.len() != b
            || self.target.rows() != b
            || self.mu.as_ref().is_some_and(|m| m.len() != b)
        {
            return Err(Error::DimMismatch("batch row counts disagree".into()));
        }
        if self.x.cols() != p.spec.input_dim || self.target.cols() != p.spec.output_dim {
            return Err(Error::DimMismatch("batch width vs spec".into()));
        }
        if p.spec.time_embed_dim > 0 && p.spec.mu_conditioned != self.mu.is_some() {
            return Err(Error::DimMismatch(
                "batch mu presence must match spec conditioning".into(),
            ));
        }
        Ok(())
    }
}

/// Mean squared residual of the batch.
pub fn batch_loss(p: &NetParams, batch: &Batch) -> Result<f64> {
    batch.validate(p)?;
    let mut loss = 0.0;
    for r in 0..batch.len() {
        let mu = batch.mu.as_ref().map(|m| m[r]);
        let y = forward_impl(p, batch.x.row(r), batch.t[r], batch.s[r], mu, None);
        for (yi, ti) in y.iter().zip(batch.target.row(r)) {
            let d = yi - ti;
            loss += d * d;
        }
    }
    Ok(loss / batch.len() as f64)
}

/// Exact reverse-mode gradient of [`batch_loss`] with respect to the weights.
///
/// With `threads > 1` the batch is split into contiguous shards whose partial
/// gradients are reduced in shard order: results are deterministic for a
/// fixed thread count.
pub fn batch_loss_grad(p: &NetParams, batch: &Batch, threads: usize) -> Result<(f64, Vec<f64>)> {
    batch.validate(p)?;
    let b = batch.len();
    let threads = threads.max(1).min(b);
    if threads == 1 {
        let mut grad = vec![0.0; p.weights.len()];
        let loss = grad_rows(p, batch, 0..b, &mut grad)?;
        return Ok((loss, grad));
    }
    let chunk = b.div_ceil(threads);
    let mut parts: Vec<Result<(f64, Vec<f64>)>> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for ti in 0..threads {
            let lo = ti * chunk;
            let hi = ((ti + 1) * chunk).min(b);
            handles.push(scope.spawn(move || {
                let mut grad = vec![0.0; p.weights.len()];
                let loss = grad_rows(p, batch, lo..hi, &mut grad)?;
                Ok((loss, grad))
            }));
        }
        for h in handles {
            parts.push(h.join().expect("gradient worker panicked"));
        }
    });
    let mut grad = vec![0.0; p.weights.len()];
    let mut loss = 0.0;
    for part in parts {
        let (l, g) = part?;
        loss += l;
        for (a, b2) in grad.iter_mut().zip(&g) {
            *a += b2;
        }
    }
    Ok((loss, grad))
}

/// Backward over a row range; returns that range's loss contribution
/// (already divided by the full batch size).
fn grad_rows(
    p: &NetParams,
    batch: &Batch,
    rows: std::ops::Range<usize>,
    grad: &mut [f64],
) -> Result<f64> {
    let spec = &p.spec;
    let layout = spec.layout();
    let ted = spec.time_embed_dim;
    let inv_b = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut tape = Tape::empty();

    for r in rows {
        tape.layer_in.clear();
        tape.layer_pre.clear();
        let mu = batch.mu.as_ref().map(|m| m[r]);
        let y = forward_impl(p, batch.x.row(r), batch.t[r], batch.s[r], mu, Some(&mut tape));

        let mut dy = vec![0.0; spec.output_dim];
        for (i, (yi, ti)) in y.iter().zip(batch.target.row(r)).enumerate() {
            let d = yi - ti;
            loss += d * d * inv_b;
            dy[i] = 2.0 * d * inv_b;
        }

        // Output layer.
        let h = &tape.h_last;
        {
            let w = layout.out_w;
            for i in 0..spec.output_dim {
                let gi = dy[i];
                let row = &mut grad[w.start + i * spec.hidden_width
                    ..w.start + (i + 1) * spec.hidden_width];
                for (g, hv) in row.iter_mut().zip(h.iter()) {
                    *g += gi * hv;
                }
                grad[layout.out_b.start + i] += gi;
            }
        }
        let mut dh = vec![0.0; spec.hidden_width];
        {
            let w = &p.weights[layout.out_w.range()];
            for i in 0..spec.output_dim {
                let gi = dy[i];
                let row = &w[i * spec.hidden_width..(i + 1) * spec.hidden_width];
                for (dhv, wv) in dh.iter_mut().zip(row) {
                    *dhv += gi * wv;
                }
            }
        }

        let mut dembed = vec![0.0; ted];
        for l in (0..spec.depth).rev() {
            let (wb, bb, cb) = &layout.layers[l];
            let fan_in = if l == 0 {
                spec.input_dim
            } else {
                spec.hidden_width
            };
            let pre = &tape.layer_pre[l];
            let input = &tape.layer_in[l];
            let residual_here = spec.residual && l > 0;

            let dpre: Vec<f64> = dh
                .iter()
                .zip(pre)
                .map(|(d, &z)| d * gelu_prime(z))
                .collect();
            for i in 0..spec.hidden_width {
                let gi = dpre[i];
                if gi == 0.0 {
                    continue;
                }
                let row = &mut grad[wb.start + i * fan_in..wb.start + (i + 1) * fan_in];
                for (g, xv) in row.iter_mut().zip(input.iter()) {
                    *g += gi * xv;
                }
                grad[bb.start + i] += gi;
            }
            if let Some(cb) = cb {
                for i in 0..spec.hidden_width {
                    let gi = dpre[i];
                    if gi == 0.0 {
                        continue;
                    }
                    let row = &mut grad[cb.start + i * ted..cb.start + (i + 1) * ted];
                    for (g, ev) in row.iter_mut().zip(tape.embed.iter()) {
                        *g += gi * ev;
                    }
                }
                let w = &p.weights[cb.range()];
                for i in 0..spec.hidden_width {
                    let gi = dpre[i];
                    let row = &w[i * ted..(i + 1) * ted];
                    for (de, wv) in dembed.iter_mut().zip(row) {
                        *de += gi * wv;
                    }
                }
            }
            let mut dh_prev = vec![0.0; fan_in];
            {
                let w = &p.weights[wb.range()];
                for i in 0..spec.hidden_width {
                    let gi = dpre[i];
                    let row = &w[i * fan_in..(i + 1) * fan_in];
                    for (d, wv) in dh_prev.iter_mut().zip(row) {
                        *d += gi * wv;
                    }
                }
            }
            if residual_here {
                for (d, carried) in dh_prev.iter_mut().zip(dh.iter()) {
                    *d += carried;
                }
            }
            dh = dh_prev;
        }

        if ted > 0 {
            let w2 = layout.embed_w2.unwrap();
            let b2 = layout.embed_b2.unwrap();
            let w1 = layout.embed_w1.unwrap();
            let b1 = layout.embed_b1.unwrap();
            for i in 0..ted {
                let gi = dembed[i];
                if gi == 0.0 {
                    continue;
                }
                let row =
                    &mut grad[w2.start + i * EMBED_HIDDEN..w2.start + (i + 1) * EMBED_HIDDEN];
                for (g, hv) in row.iter_mut().zip(tape.embed_hidden.iter()) {
                    *g += gi * hv;
                }
                grad[b2.start + i] += gi;
            }
            let mut dhidden = vec![0.0; EMBED_HIDDEN];
            {
                let w = &p.weights[w2.range()];
                for i in 0..ted {
                    let gi = dembed[i];
                    let row = &w[i * EMBED_HIDDEN..(i + 1) * EMBED_HIDDEN];
                    for (d, wv) in dhidden.iter_mut().zip(row) {
                        *d += gi * wv;
                    }
                }
            }
            let feat_dim = tape.feats.len();
            for i in 0..EMBED_HIDDEN {
                let gi = dhidden[i] * gelu_prime(tape.embed_pre[i]);
                if gi == 0.0 {
                    continue;
                }
                let row = &mut grad[w1.start + i * feat_dim..w1.start + (i + 1) * feat_dim];
                for (g, fv) in row.iter_mut().zip(tape.feats.iter()) {
                    *g += gi * fv;
                }
                grad[b1.start + i] += gi;
            }
        }
    }
    Ok(loss)
}

#[cfg(test)]
mod tests;
