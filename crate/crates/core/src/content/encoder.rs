//! Hash-bucket item encoder and attention-pooled user encoder.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;

use crate::data::ItemCorpus;
use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, softmax_backward, softmax_in_place, Matrix};

pub const DEFAULT_BUCKETS: usize = 4096;
const CHECKPOINT_MAGIC: &str = "CLITE1";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn token_buckets(text: &str, buckets: usize) -> Vec<usize> {
    tokenize(text)
        .iter()
        .map(|t| (fnv1a64(t.as_bytes()) % buckets as u64) as usize)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ContentDims {
    /// Embedding width; must be even.
    pub hidden: usize,
    /// Hash bucket count `V_b`.
    pub buckets: usize,
    /// History sample size `B`.
    pub history: usize,
    /// Negatives per impression `K`.
    pub negatives: usize,
}

impl Default for ContentDims {
    fn default() -> Self {
        ContentDims {
            hidden: 64,
            buckets: DEFAULT_BUCKETS,
            history: 8,
            negatives: 4,
        }
    }
}

impl ContentDims {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || !self.hidden.is_multiple_of(2) {
            return Err(Error::Config(format!("content hidden size must be even and positive, got {}", self.hidden)));
        }
        if self.buckets == 0 || self.history == 0 || self.negatives == 0 {
            return Err(Error::Config(format!("bucket count, history size and negatives must be ≥ 1 ({self:?})")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContentParams {
    pub dims: ContentDims,
    /// `V_b × h`
    pub bucket_emb: Matrix,
    /// `h × h/2`
    pub fc1_w: Matrix,
    /// `1 × h/2`
    pub fc1_b: Matrix,
    /// `h/2 × 1`
    pub fc2_w: Matrix,
    /// `1 × 1`
    pub fc2_b: Matrix,
}

pub const CONTENT_TENSOR_NAMES: [&str; 5] = ["bucket_emb", "fc1_w", "fc1_b", "fc2_w", "fc2_b"];

impl ContentParams {
    pub fn init<R: Rng + ?Sized>(dims: ContentDims, rng: &mut R) -> Result<Self> {
        dims.validate()?;
        let h = dims.hidden;
        let half = h / 2;
        let emb = (6.0 / h as f64).sqrt();
        let b1 = (6.0 / (h + half) as f64).sqrt();
        let b2 = (6.0 / (half + 1) as f64).sqrt();
        Ok(ContentParams {
            dims,
            bucket_emb: Matrix::uniform(dims.buckets, h, -emb, emb, rng),
            fc1_w: Matrix::uniform(h, half, -b1, b1, rng),
            fc1_b: Matrix::zeros(1, half),
            fc2_w: Matrix::uniform(half, 1, -b2, b2, rng),
            fc2_b: Matrix::zeros(1, 1),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        ContentParams {
            dims: self.dims,
            bucket_emb: z(&self.bucket_emb),
            fc1_w: z(&self.fc1_w),
            fc1_b: z(&self.fc1_b),
            fc2_w: z(&self.fc2_w),
            fc2_b: z(&self.fc2_b),
        }
    }

    pub fn tensors(&self) -> [(&'static str, &Matrix); 5] {
        [
            (CONTENT_TENSOR_NAMES[0], &self.bucket_emb),
            (CONTENT_TENSOR_NAMES[1], &self.fc1_w),
            (CONTENT_TENSOR_NAMES[2], &self.fc1_b),
            (CONTENT_TENSOR_NAMES[3], &self.fc2_w),
            (CONTENT_TENSOR_NAMES[4], &self.fc2_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Matrix); 5] {
        [
            (CONTENT_TENSOR_NAMES[0], &mut self.bucket_emb),
            (CONTENT_TENSOR_NAMES[1], &mut self.fc1_w),
            (CONTENT_TENSOR_NAMES[2], &mut self.fc1_b),
            (CONTENT_TENSOR_NAMES[3], &mut self.fc2_w),
            (CONTENT_TENSOR_NAMES[4], &mut self.fc2_b),
        ]
    }

    /// `CLITE1 V_b h B K\n` followed by the tensors as little-endian f64.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let d = &self.dims;
        let mut out = format!("{CHECKPOINT_MAGIC} {} {} {} {}\n", d.buckets, d.hidden, d.history, d.negatives).into_bytes();
        for (_, m) in self.tensors() {
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Invalid(format!("content checkpoint: {m}"));
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not UTF-8"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some(CHECKPOINT_MAGIC) {
            return Err(bad("wrong magic"));
        }
        let nums: Vec<usize> = fields.map(|f| f.parse().map_err(|_| bad("bad header field"))).collect::<Result<_>>()?;
        let &[buckets, hidden, history, negatives] = nums.as_slice() else {
            return Err(bad("expected 4 header fields"));
        };
        let dims = ContentDims {
            hidden,
            buckets,
            history,
            negatives,
        };
        dims.validate()?;
        let half = hidden / 2;
        let shapes = [(buckets, hidden), (hidden, half), (1, half), (half, 1), (1, 1)];
        let body = &bytes[nl + 1..];
        let expected: usize = shapes.iter().map(|(r, c)| r * c * 8).sum();
        if body.len() != expected {
            return Err(bad(&format!("expected {expected} payload bytes, found {}", body.len())));
        }
        let mut offset = 0;
        let mut read = |(r, c): (usize, usize)| {
            let data = body[offset..offset + r * c * 8]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            offset += r * c * 8;
            Matrix::from_vec(r, c, data)
        };
        Ok(ContentParams {
            dims,
            bucket_emb: read(shapes[0])?,
            fc1_w: read(shapes[1])?,
            fc1_b: read(shapes[2])?,
            fc2_w: read(shapes[3])?,
            fc2_b: read(shapes[4])?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_checkpoint_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Pre-hashed item descriptions, one bucket list per item id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenizedCorpus {
    buckets: Vec<Vec<usize>>,
}

impl TokenizedCorpus {
    pub fn new(corpus: &ItemCorpus, num_items: usize, buckets: usize) -> Self {
        TokenizedCorpus {
            buckets: (0..num_items).map(|i| token_buckets(corpus.text(i), buckets)).collect(),
        }
    }

    pub fn item(&self, item: usize) -> &[usize] {
        &self.buckets[item]
    }

    pub fn num_items(&self) -> usize {
        self.buckets.len()
    }

    /// Items whose description produced no tokens.
    pub fn empty_items(&self) -> Vec<usize> {
        (0..self.buckets.len()).filter(|&i| self.buckets[i].is_empty()).collect()
    }
}

/// Mean of the bucket embeddings of the given token buckets; zero when empty.
pub fn encode_buckets(buckets: &[usize], params: &ContentParams) -> Vec<f64> {
    let mut out = vec![0.0; params.dims.hidden];
    if buckets.is_empty() {
        return out;
    }
    let inv = 1.0 / buckets.len() as f64;
    for &b in buckets {
        axpy(inv, params.bucket_emb.row(b), &mut out);
    }
    out
}

/// Item embedding from text. The flag is `true` when the text has no
/// tokens and the zero vector was returned.
pub fn encode_item(text: &str, params: &ContentParams) -> (Vec<f64>, bool) {
    let buckets = token_buckets(text, params.dims.buckets);
    (encode_buckets(&buckets, params), buckets.is_empty())
}

/// Accumulates the gradient of an item embedding into the bucket table.
pub fn encode_buckets_backward(buckets: &[usize], d_out: &[f64], grads: &mut ContentParams) {
    if buckets.is_empty() {
        return;
    }
    let inv = 1.0 / buckets.len() as f64;
    for &b in buckets {
        axpy(inv, d_out, grads.bucket_emb.row_mut(b));
    }
}

/// User-encoder activations.
#[derive(Clone, Debug, PartialEq)]
pub struct UserEncoding {
    pub embedding: Vec<f64>,
    pub attention: Vec<f64>,
    /// `B × h/2` hidden activations `tanh(E·W₁ + b₁)`.
    pub hidden: Matrix,
}

/// Attention pooling over browsed-item embeddings (`B × h`):
/// `α = softmax(tanh(E·W₁ + b₁)·W₂ + b₂)`, output `Σ_b α_b E_b`.
pub fn encode_user(history: &Matrix, params: &ContentParams) -> Result<UserEncoding> {
    let h = params.dims.hidden;
    if history.rows() == 0 {
        return Err(Error::Invalid("user encoder needs at least one history item".into()));
    }
    if history.cols() != h {
        return Err(Error::DimMismatch {
            expected: h,
            found: history.cols(),
        });
    }
    let mut hidden = history.matmul(&params.fc1_w)?;
    for b in 0..hidden.rows() {
        for (z, &bias) in hidden.row_mut(b).iter_mut().zip(params.fc1_b.row(0)) {
            *z = (*z + bias).tanh();
        }
    }
    let fc2 = params.fc2_w.as_slice();
    let mut attention: Vec<f64> = (0..hidden.rows())
        .map(|b| dot(hidden.row(b), fc2) + params.fc2_b.get(0, 0))
        .collect();
    softmax_in_place(&mut attention);
    let mut embedding = vec![0.0; h];
    for (b, &a) in attention.iter().enumerate() {
        axpy(a, history.row(b), &mut embedding);
    }
    Ok(UserEncoding {
        embedding,
        attention,
        hidden,
    })
}

/// Reverse of [`encode_user`]. Accumulates weight gradients into `grads`
/// and returns the gradient on each history row.
pub fn encode_user_backward(
    history: &Matrix,
    enc: &UserEncoding,
    d_out: &[f64],
    params: &ContentParams,
    grads: &mut ContentParams,
) -> Matrix {
    let (n, h) = history.shape();
    let half = h / 2;
    let mut d_hist = Matrix::zeros(n, h);
    let d_att: Vec<f64> = (0..n).map(|b| dot(history.row(b), d_out)).collect();
    for (b, &a) in enc.attention.iter().enumerate() {
        axpy(a, d_out, d_hist.row_mut(b));
    }
    let d_logit = softmax_backward(&enc.attention, &d_att);
    let fc2 = params.fc2_w.as_slice();
    let mut dz = vec![0.0; half];
    for b in 0..n {
        let t = enc.hidden.row(b);
        let g = d_logit[b];
        axpy(g, t, grads.fc2_w.as_mut_slice());
        grads.fc2_b.as_mut_slice()[0] += g;
        for k in 0..half {
            dz[k] = g * fc2[k] * (1.0 - t[k] * t[k]);
        }
        axpy(1.0, &dz, grads.fc1_b.row_mut(0));
        let row = history.row(b);
        for (r, &x) in row.iter().enumerate() {
            axpy(x, &dz, grads.fc1_w.row_mut(r));
        }
        let dh = d_hist.row_mut(b);
        for (r, d) in dh.iter_mut().enumerate() {
            *d += dot(params.fc1_w.row(r), &dz);
        }
    }
    d_hist
}

/// One training impression: a user history, a clicked item and negatives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Impression {
    pub history: Vec<usize>,
    pub positive: usize,
    pub negatives: Vec<usize>,
}

/// Click loss of one impression; gradients are added to `grads`.
pub fn impression_loss(
    imp: &Impression,
    tokens: &TokenizedCorpus,
    params: &ContentParams,
    grads: Option<&mut ContentParams>,
) -> Result<f64> {
    let h = params.dims.hidden;
    let rows: Vec<Vec<f64>> = imp
        .history
        .iter()
        .map(|&i| encode_buckets(tokens.item(i), params))
        .collect();
    let history = Matrix::from_rows(&rows)?;
    let user = encode_user(&history, params)?;
    let pos_emb = encode_buckets(tokens.item(imp.positive), params);
    let neg_embs: Vec<Vec<f64>> = imp
        .negatives
        .iter()
        .map(|&i| encode_buckets(tokens.item(i), params))
        .collect();
    let pos = dot(&user.embedding, &pos_emb);
    let neg: Vec<f64> = neg_embs.iter().map(|e| dot(&user.embedding, e)).collect();
    let loss = crate::objectives::nrms_click_loss(pos, &neg)?;
    let Some(grads) = grads else {
        return Ok(loss.value);
    };
    let mut d_user = vec![0.0; h];
    axpy(loss.d_pos, &pos_emb, &mut d_user);
    let d_pos_item: Vec<f64> = user.embedding.iter().map(|u| u * loss.d_pos).collect();
    encode_buckets_backward(tokens.item(imp.positive), &d_pos_item, grads);
    for ((&i, e), &g) in imp.negatives.iter().zip(&neg_embs).zip(&loss.d_neg) {
        axpy(g, e, &mut d_user);
        let d_item: Vec<f64> = user.embedding.iter().map(|u| u * g).collect();
        encode_buckets_backward(tokens.item(i), &d_item, grads);
    }
    let d_hist = encode_user_backward(&history, &user, &d_user, params, grads);
    for (b, &i) in imp.history.iter().enumerate() {
        encode_buckets_backward(tokens.item(i), d_hist.row(b), grads);
    }
    Ok(loss.value)
}

/// Deterministic export-time user embedding: the history is split into
/// consecutive chunks of `B` items, each chunk is encoded, and the chunk
/// outputs are averaged. Empty histories give the zero vector.
pub fn encode_full_history(history: &[usize], tokens: &TokenizedCorpus, params: &ContentParams) -> Result<Vec<f64>> {
    let h = params.dims.hidden;
    let mut out = vec![0.0; h];
    if history.is_empty() {
        return Ok(out);
    }
    let chunks: Vec<&[usize]> = history.chunks(params.dims.history).collect();
    let inv = 1.0 / chunks.len() as f64;
    for chunk in &chunks {
        let rows: Vec<Vec<f64>> = chunk.iter().map(|&i| encode_buckets(tokens.item(i), params)).collect();
        let enc = encode_user(&Matrix::from_rows(&rows)?, params)?;
        axpy(inv, &enc.embedding, &mut out);
    }
    Ok(out)
}
