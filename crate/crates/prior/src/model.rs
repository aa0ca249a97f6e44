use rand::Rng;
use sha2::{Digest, Sha256};
use vqat_core::layers::{normal_init, Embedding, LayerNorm, Linear};
use vqat_core::ops::{causal_attention, causal_attention_backward, cross_entropy, gelu, gelu_backward, AttentionShape};
use vqat_core::{Module, Param, Scalar};

use crate::config::PriorConfig;
use crate::error::{PriorError, Result};
use crate::sample::TokenModel;

/// Linear layer with `N(0, 0.02)` weights and zero bias.
fn linear<T: Scalar, R: Rng>(name: &str, i: usize, o: usize, rng: &mut R) -> Linear<T> {
    let mut l = Linear::new(name, i, o, rng);
    l.weight.value = normal_init(&[o, i], INIT_STD, rng);
    l
}

const INIT_STD: f64 = 0.02;

fn add_assign<T: Scalar>(a: &mut [T], b: &[T]) {
    a.iter_mut().zip(b).for_each(|(x, &y)| *x += y);
}

/// Pre-norm block: `x + attn(ln1(x))`, then `+ mlp(ln2(.))`.
#[derive(Clone, Debug)]
pub struct Block<T> {
    pub ln1: LayerNorm<T>,
    pub qkv: Linear<T>,
    pub proj: Linear<T>,
    pub ln2: LayerNorm<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    pub heads: usize,
}

#[derive(Clone, Debug)]
pub struct BlockCache<T> {
    x: Vec<T>,
    a: Vec<T>,
    qkv: Vec<T>,
    probs: Vec<T>,
    att: Vec<T>,
    m: Vec<T>,
    b: Vec<T>,
    h: Vec<T>,
    g: Vec<T>,
}

impl<T: Scalar> Block<T> {
    pub fn new<R: Rng>(name: &str, d: usize, mlp: usize, heads: usize, rng: &mut R) -> Self {
        Self {
            ln1: LayerNorm::new(&format!("{name}.ln1"), d),
            qkv: linear(&format!("{name}.qkv"), d, 3 * d, rng),
            proj: linear(&format!("{name}.proj"), d, d, rng),
            ln2: LayerNorm::new(&format!("{name}.ln2"), d),
            fc1: linear(&format!("{name}.fc1"), d, mlp, rng),
            fc2: linear(&format!("{name}.fc2"), mlp, d, rng),
            heads,
        }
    }

    fn dim(&self) -> usize {
        self.ln1.dim()
    }

    pub fn forward(&self, x: &[T], batch: usize, seq: usize) -> Result<(Vec<T>, BlockCache<T>)> {
        let rows = batch * seq;
        let shape = AttentionShape::new(batch, seq, self.dim(), self.heads)?;
        let a = self.ln1.forward_rows(x);
        let qkv = self.qkv.forward_rows(&a, rows);
        let (att, probs) = causal_attention(&qkv, shape)?;
        let mut m = self.proj.forward_rows(&att, rows);
        add_assign(&mut m, x);
        let b = self.ln2.forward_rows(&m);
        let h = self.fc1.forward_rows(&b, rows);
        let g = gelu(&h);
        let mut y = self.fc2.forward_rows(&g, rows);
        add_assign(&mut y, &m);
        Ok((y, BlockCache { x: x.to_vec(), a, qkv, probs, att, m, b, h, g }))
    }

    pub fn backward(&mut self, c: &BlockCache<T>, dy: &[T], batch: usize, seq: usize) -> Result<Vec<T>> {
        let rows = batch * seq;
        let shape = AttentionShape::new(batch, seq, self.dim(), self.heads)?;
        let dg = self.fc2.backward_rows(&c.g, dy, rows);
        let dh = gelu_backward(&c.h, &dg);
        let db = self.fc1.backward_rows(&c.b, &dh, rows);
        let mut dm = self.ln2.backward_rows(&c.m, &db);
        add_assign(&mut dm, dy);
        let datt = self.proj.backward_rows(&c.att, &dm, rows);
        let dqkv = causal_attention_backward(&c.qkv, &c.probs, &datt, shape)?;
        let da = self.qkv.backward_rows(&c.a, &dqkv, rows);
        let mut dx = self.ln1.backward_rows(&c.x, &da);
        add_assign(&mut dx, &dm);
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for Block<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        self.ln1.visit(f);
        self.qkv.visit(f);
        self.proj.visit(f);
        self.ln2.visit(f);
        self.fc1.visit(f);
        self.fc2.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.ln1.visit_mut(f);
        self.qkv.visit_mut(f);
        self.proj.visit_mut(f);
        self.ln2.visit_mut(f);
        self.fc1.visit_mut(f);
        self.fc2.visit_mut(f);
    }
}

/// GPT-style decoder with learned positional embeddings.
#[derive(Clone, Debug)]
pub struct Transformer<T> {
    pub config: PriorConfig,
    pub tok_emb: Embedding<T>,
    pub pos_emb: Embedding<T>,
    pub blocks: Vec<Block<T>>,
    pub ln_f: LayerNorm<T>,
    pub head: Linear<T>,
}

#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    tokens: Vec<usize>,
    batch: usize,
    seq: usize,
    blocks: Vec<BlockCache<T>>,
    last: Vec<T>,
    normed: Vec<T>,
}

impl<T: Scalar> Transformer<T> {
    pub fn new<R: Rng>(config: PriorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        Ok(Self {
            tok_emb: Embedding::new("tok_emb", config.vocab_size, d, rng),
            pos_emb: Embedding::new("pos_emb", config.context, d, rng),
            blocks: (0..config.n_blocks)
                .map(|i| Block::new(&format!("block{i}"), d, config.mlp_dim, config.n_heads, rng))
                .collect(),
            ln_f: LayerNorm::new("ln_f", d),
            head: linear("head", d, config.vocab_size, rng),
            config,
        })
    }

    pub fn vocab(&self) -> usize {
        self.config.vocab_size
    }

    pub fn context(&self) -> usize {
        self.config.context
    }

    fn check_tokens(&self, tokens: &[usize], batch: usize) -> Result<usize> {
        if batch == 0 || tokens.is_empty() || tokens.len() % batch != 0 {
            return Err(PriorError::Usage(format!("{} tokens do not split into {batch} rows", tokens.len())));
        }
        let seq = tokens.len() / batch;
        if seq > self.context() {
            return Err(PriorError::ContextOverflow { len: seq, context: self.context() });
        }
        if let Some(&t) = tokens.iter().find(|&&t| t >= self.vocab()) {
            return Err(PriorError::Usage(format!("token {t} outside vocabulary of {}", self.vocab())));
        }
        Ok(seq)
    }

    /// Logits for every position of `batch` equal-length sequences,
    /// row-major `[batch * seq, vocab]`.
    pub fn forward(&self, tokens: &[usize], batch: usize) -> Result<(Vec<T>, ForwardCache<T>)> {
        let seq = self.check_tokens(tokens, batch)?;
        let d = self.config.embed_dim;
        let mut x = self.tok_emb.forward(tokens)?;
        let pos = self.pos_emb.weight.value.data();
        for (r, row) in x.chunks_mut(d).enumerate() {
            add_assign(row, &pos[(r % seq) * d..][..d]);
        }
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, c) = block.forward(&x, batch, seq)?;
            caches.push(c);
            x = y;
        }
        let normed = self.ln_f.forward_rows(&x);
        let logits = self.head.forward_rows(&normed, batch * seq);
        Ok((logits, ForwardCache { tokens: tokens.to_vec(), batch, seq, blocks: caches, last: x, normed }))
    }

    pub fn backward(&mut self, c: &ForwardCache<T>, dlogits: &[T]) -> Result<()> {
        let rows = c.batch * c.seq;
        let d = self.config.embed_dim;
        let dn = self.head.backward_rows(&c.normed, dlogits, rows);
        let mut dx = self.ln_f.backward_rows(&c.last, &dn);
        for (block, bc) in self.blocks.iter_mut().zip(&c.blocks).rev() {
            dx = block.backward(bc, &dx, c.batch, c.seq)?;
        }
        self.tok_emb.backward(&c.tokens, &dx);
        let positions: Vec<usize> = (0..rows).map(|r| r % c.seq).collect();
        self.pos_emb.backward(&positions, &dx);
        debug_assert_eq!(dx.len(), rows * d);
        Ok(())
    }

    /// Mean next-token cross-entropy over `batch` sequences of equal
    /// length; gradients are accumulated scaled by `weight`.
    pub fn loss_and_backward(&mut self, sequences: &[&[usize]], weight: f64) -> Result<f64> {
        let (inputs, targets) = split_shifted(sequences)?;
        let (logits, cache) = self.forward(&inputs, sequences.len())?;
        let (loss, mut grad) = cross_entropy(&logits, self.vocab(), &targets)?;
        if weight != 1.0 {
            let w = T::from_f64(weight);
            grad.iter_mut().for_each(|g| *g *= w);
        }
        self.backward(&cache, &grad)?;
        Ok(loss)
    }

    /// Mean next-token cross-entropy without touching gradients.
    pub fn loss(&self, sequences: &[&[usize]]) -> Result<f64> {
        let (inputs, targets) = split_shifted(sequences)?;
        let (logits, _) = self.forward(&inputs, sequences.len())?;
        Ok(cross_entropy(&logits, self.vocab(), &targets)?.0)
    }

    /// Logits for the token following `prefix`.
    pub fn next_token_logits(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        if prefix.is_empty() {
            return Err(PriorError::Usage("prefix must hold at least the start token".into()));
        }
        let (logits, _) = self.forward(prefix, 1)?;
        let v = self.vocab();
        Ok(logits[logits.len() - v..].iter().map(|x| x.as_f64()).collect())
    }

    /// Incremental decoder with a key/value cache.
    pub fn generator(&self) -> Generator<'_, T> {
        Generator::new(self)
    }

    /// Hex SHA-256 of every parameter value, in visit order.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        self.visit(&mut |p| {
            h.update(p.name.as_bytes());
            for v in p.value.data() {
                h.update(v.as_f64().to_le_bytes());
            }
        });
        hex::encode(h.finalize())
    }
}

fn split_shifted(sequences: &[&[usize]]) -> Result<(Vec<usize>, Vec<usize>)> {
    let len = sequences.first().map(|s| s.len()).unwrap_or(0);
    if len < 2 || sequences.iter().any(|s| s.len() != len) {
        return Err(PriorError::Usage("sequences must share one length of at least 2".into()));
    }
    let mut inputs = Vec::with_capacity(sequences.len() * (len - 1));
    let mut targets = Vec::with_capacity(inputs.capacity());
    for s in sequences {
        inputs.extend_from_slice(&s[..len - 1]);
        targets.extend_from_slice(&s[1..]);
    }
    Ok((inputs, targets))
}

impl<T: Scalar> Module<T> for Transformer<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        self.tok_emb.visit(f);
        self.pos_emb.visit(f);
        self.blocks.iter().for_each(|b| b.visit(f));
        self.ln_f.visit(f);
        self.head.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.tok_emb.visit_mut(f);
        self.pos_emb.visit_mut(f);
        self.blocks.iter_mut().for_each(|b| b.visit_mut(f));
        self.ln_f.visit_mut(f);
        self.head.visit_mut(f);
    }
}

/// Single-sequence decoder that caches each block's keys and values.
pub struct Generator<'a, T> {
    model: &'a Transformer<T>,
    keys: Vec<Vec<T>>,
    values: Vec<Vec<T>>,
    pos: usize,
}

impl<'a, T: Scalar> Generator<'a, T> {
    pub fn new(model: &'a Transformer<T>) -> Self {
        let n = model.blocks.len();
        Self { model, keys: vec![Vec::new(); n], values: vec![Vec::new(); n], pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    fn step(&mut self, token: usize) -> Result<Vec<f64>> {
        let m = self.model;
        if self.pos >= m.context() {
            return Err(PriorError::ContextOverflow { len: self.pos + 1, context: m.context() });
        }
        let d = m.config.embed_dim;
        let mut x = m.tok_emb.forward(&[token])?;
        add_assign(&mut x, &m.pos_emb.weight.value.data()[self.pos * d..][..d]);
        let heads = m.config.n_heads;
        let dh = d / heads;
        let scale = T::from_f64(1.0 / (dh as f64).sqrt());
        let t = self.pos + 1;
        for (i, block) in m.blocks.iter().enumerate() {
            let a = block.ln1.forward_rows(&x);
            let qkv = block.qkv.forward_rows(&a, 1);
            self.keys[i].extend_from_slice(&qkv[d..2 * d]);
            self.values[i].extend_from_slice(&qkv[2 * d..]);
            let (keys, vals) = (&self.keys[i], &self.values[i]);
            let mut att = vec![T::zero(); d];
            let mut scores = vec![T::zero(); t];
            for h in 0..heads {
                let q = &qkv[h * dh..(h + 1) * dh];
                for (j, s) in scores.iter_mut().enumerate() {
                    let k = &keys[j * d + h * dh..][..dh];
                    *s = q.iter().zip(k).map(|(&a, &b)| a * b).sum::<T>() * scale;
                }
                vqat_core::ops::softmax_in_place(&mut scores);
                let out = &mut att[h * dh..(h + 1) * dh];
                for (j, &p) in scores.iter().enumerate() {
                    let v = &vals[j * d + h * dh..][..dh];
                    out.iter_mut().zip(v).for_each(|(o, &vv)| *o += p * vv);
                }
            }
            let mut mid = block.proj.forward_rows(&att, 1);
            add_assign(&mut mid, &x);
            let b = block.ln2.forward_rows(&mid);
            let g = gelu(&block.fc1.forward_rows(&b, 1));
            let mut y = block.fc2.forward_rows(&g, 1);
            add_assign(&mut y, &mid);
            x = y;
        }
        self.pos += 1;
        let logits = m.head.forward_rows(&m.ln_f.forward_rows(&x), 1);
        Ok(logits.into_iter().map(|v| v.as_f64()).collect())
    }
}

impl<T: Scalar> TokenModel for Generator<'_, T> {
    fn vocab_size(&self) -> usize {
        self.model.vocab()
    }

    fn context(&self) -> usize {
        self.model.context()
    }

    fn reset(&mut self) {
        self.keys.iter_mut().for_each(Vec::clear);
        self.values.iter_mut().for_each(Vec::clear);
        self.pos = 0;
    }

    fn push(&mut self, token: usize) -> Result<Vec<f64>> {
        if token >= self.model.vocab() {
            return Err(PriorError::Usage(format!("token {token} outside vocabulary")));
        }
        self.step(token)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use vqat_core::rng::seeded;

    fn tiny(context: usize) -> Transformer<f64> {
        let cfg = PriorConfig { context, embed_dim: 16, mlp_dim: 32, vocab_size: 11, ..Default::default() };
        Transformer::new(cfg, &mut seeded(2)).unwrap()
    }

    #[test]
    fn cache_matches_full_forward() {
        let m = tiny(9);
        let seq = [10, 3, 4, 1, 9, 0, 2, 7];
        let mut g = m.generator();
        for t in 0..seq.len() {
            let inc = g.push(seq[t]).unwrap();
            let full = m.next_token_logits(&seq[..=t]).unwrap();
            for (a, b) in inc.iter().zip(&full) {
                assert!((a - b).abs() < 1e-10, "position {t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn overflow_and_range_errors() {
        let m = tiny(4);
        assert!(matches!(m.next_token_logits(&[1; 5]), Err(PriorError::ContextOverflow { .. })));
        assert!(m.next_token_logits(&[11]).is_err());
        let mut g = m.generator();
        for _ in 0..4 {
            g.push(1).unwrap();
        }
        assert!(matches!(g.push(1), Err(PriorError::ContextOverflow { .. })));
    }

    #[test]
    fn untrained_loss_is_near_uniform() {
        let cfg = PriorConfig { context: 33, embed_dim: 32, mlp_dim: 64, ..Default::default() };
        let m = Transformer::<f64>::new(cfg, &mut seeded(4)).unwrap();
        let mut r = seeded(5);
        let seqs: Vec<Vec<usize>> =
            (0..4).map(|_| (0..33).map(|_| r.gen_range(0..256)).collect()).collect();
        let refs: Vec<&[usize]> = seqs.iter().map(|s| s.as_slice()).collect();
        let ce = m.loss(&refs).unwrap();
        assert!((ce - 267f64.ln()).abs() < 0.1, "ce {ce}");
    }

    #[test]
    fn digest_tracks_weights() {
        let a = tiny(4);
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.head.bias.value.data_mut()[0] += 1.0;
        assert_ne!(a.digest(), b.digest());
    }
}
