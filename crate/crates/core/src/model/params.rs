use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

const CHECKPOINT_MAGIC: &str = "KMPN1";

/// Model hyperparameters that fix tensor shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    /// Embedding width `h`.
    pub hidden: usize,
    /// Number of graph convolution layers `L`.
    pub layers: usize,
    /// Number of meta-preferences.
    pub n_meta: usize,
    /// Number of preferences.
    pub n_pref: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            hidden: 64,
            layers: 3,
            n_meta: 64,
            n_pref: 8,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.n_meta == 0 || self.n_pref == 0 {
            return Err(Error::Config(format!(
                "hidden, n_meta and n_pref must be ≥ 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Every trainable tensor of the collaborative model. The same type holds
/// gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct KmpnParams {
    pub dims: ModelDims,
    /// `N_v × h` layer-0 entity embeddings.
    pub entity_emb: Matrix,
    /// `2·N_r × h`, inverse relations included.
    pub relation_emb: Matrix,
    /// `N_u × h` per-user attention query.
    pub user_emb: Matrix,
    /// `N_m × h`.
    pub meta_pref_emb: Matrix,
    /// `N_p × N_m` mixture logits over meta-preferences.
    pub pref_logits: Matrix,
}

pub const TENSOR_NAMES: [&str; 5] = [
    "entity_emb",
    "relation_emb",
    "user_emb",
    "meta_pref_emb",
    "pref_logits",
];

impl KmpnParams {
    /// Embeddings ~ U[-√(6/h), √(6/h)], logits ~ U[-0.1, 0.1].
    pub fn init<R: Rng + ?Sized>(
        dims: ModelDims,
        num_entities: usize,
        num_relations: usize,
        num_users: usize,
        rng: &mut R,
    ) -> Result<Self> {
        dims.validate()?;
        let h = dims.hidden;
        let bound = (6.0 / h as f64).sqrt();
        Ok(KmpnParams {
            dims,
            entity_emb: Matrix::uniform(num_entities, h, -bound, bound, rng),
            relation_emb: Matrix::uniform(num_relations, h, -bound, bound, rng),
            user_emb: Matrix::uniform(num_users, h, -bound, bound, rng),
            meta_pref_emb: Matrix::uniform(dims.n_meta, h, -bound, bound, rng),
            pref_logits: Matrix::uniform(dims.n_pref, dims.n_meta, -0.1, 0.1, rng),
        })
    }

    pub fn zeros_like(&self) -> Self {
        KmpnParams {
            dims: self.dims,
            entity_emb: Matrix::zeros(self.entity_emb.rows(), self.entity_emb.cols()),
            relation_emb: Matrix::zeros(self.relation_emb.rows(), self.relation_emb.cols()),
            user_emb: Matrix::zeros(self.user_emb.rows(), self.user_emb.cols()),
            meta_pref_emb: Matrix::zeros(self.meta_pref_emb.rows(), self.meta_pref_emb.cols()),
            pref_logits: Matrix::zeros(self.pref_logits.rows(), self.pref_logits.cols()),
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entity_emb.rows()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_emb.rows()
    }

    pub fn num_users(&self) -> usize {
        self.user_emb.rows()
    }

    /// Tensors in checkpoint order, paired with their names.
    pub fn tensors(&self) -> [(&'static str, &Matrix); 5] {
        [
            (TENSOR_NAMES[0], &self.entity_emb),
            (TENSOR_NAMES[1], &self.relation_emb),
            (TENSOR_NAMES[2], &self.user_emb),
            (TENSOR_NAMES[3], &self.meta_pref_emb),
            (TENSOR_NAMES[4], &self.pref_logits),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Matrix); 5] {
        [
            (TENSOR_NAMES[0], &mut self.entity_emb),
            (TENSOR_NAMES[1], &mut self.relation_emb),
            (TENSOR_NAMES[2], &mut self.user_emb),
            (TENSOR_NAMES[3], &mut self.meta_pref_emb),
            (TENSOR_NAMES[4], &mut self.pref_logits),
        ]
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.as_slice().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    /// Serializes as `KMPN1 N_v N_r2 N_u h L N_m N_p\n` followed by every
    /// tensor in row-major little-endian f64.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let d = &self.dims;
        let header = format!(
            "{CHECKPOINT_MAGIC} {} {} {} {} {} {} {}\n",
            self.num_entities(),
            self.num_relations(),
            self.num_users(),
            d.hidden,
            d.layers,
            d.n_meta,
            d.n_pref
        );
        let mut out = Vec::with_capacity(header.len() + self.num_scalars() * 8);
        out.extend_from_slice(header.as_bytes());
        for (_, m) in self.tensors() {
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Invalid(format!("checkpoint: {m}"));
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing header line".into()))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not UTF-8".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some(CHECKPOINT_MAGIC) {
            return Err(bad(format!("expected magic {CHECKPOINT_MAGIC}")));
        }
        let nums: Vec<usize> = fields
            .map(|f| f.parse().map_err(|_| bad(format!("bad header field `{f}`"))))
            .collect::<Result<_>>()?;
        let &[n_v, n_r2, n_u, h, layers, n_m, n_p] = nums.as_slice() else {
            return Err(bad(format!("expected 7 header fields, found {}", nums.len())));
        };
        let dims = ModelDims {
            hidden: h,
            layers,
            n_meta: n_m,
            n_pref: n_p,
        };
        dims.validate()?;
        let shapes = [(n_v, h), (n_r2, h), (n_u, h), (n_m, h), (n_p, n_m)];
        let expected: usize = shapes.iter().map(|(r, c)| r * c * 8).sum();
        let body = &bytes[nl + 1..];
        if body.len() != expected {
            return Err(bad(format!("expected {expected} payload bytes, found {}", body.len())));
        }
        let mut offset = 0;
        let mut read = |(r, c): (usize, usize)| -> Result<Matrix> {
            let data = body[offset..offset + r * c * 8]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            offset += r * c * 8;
            Matrix::from_vec(r, c, data)
        };
        Ok(KmpnParams {
            dims,
            entity_emb: read(shapes[0])?,
            relation_emb: read(shapes[1])?,
            user_emb: read(shapes[2])?,
            meta_pref_emb: read(shapes[3])?,
            pref_logits: read(shapes[4])?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_checkpoint_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dims = ModelDims {
            hidden: 4,
            layers: 2,
            n_meta: 3,
            n_pref: 2,
        };
        let p = KmpnParams::init(dims, 5, 4, 3, &mut rng).unwrap();
        let bytes = p.to_checkpoint_bytes();
        assert!(bytes.starts_with(b"KMPN1 5 4 3 4 2 3 2\n"));
        let q = KmpnParams::from_checkpoint_bytes(&bytes).unwrap();
        assert_eq!(p, q);
        assert!(KmpnParams::from_checkpoint_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn init_respects_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = KmpnParams::init(ModelDims::default(), 10, 4, 5, &mut rng).unwrap();
        let b = (6.0f64 / 64.0).sqrt();
        assert!(p.entity_emb.as_slice().iter().all(|x| x.abs() <= b));
        assert!(p.pref_logits.as_slice().iter().all(|x| x.abs() <= 0.1));
    }
}
