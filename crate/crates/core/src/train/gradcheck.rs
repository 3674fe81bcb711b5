use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::content::{impression_loss, ContentDims, ContentEmbeddings, ContentParams, Impression, TokenizedCorpus};
use crate::data::{InteractionStore, ItemCorpus, KnowledgeGraph};
use crate::error::{Error, Result};
use crate::model::{KmpnParams, ModelDims, Triple};
use crate::objectives::{pca_project, LossWeights};
use crate::tensor::Matrix;

use super::adam::ParamSet;
use super::kmpn::{kmpn_batch_objective, KmpnObjective};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-4;
/// Lower bound on the relative-error denominator, so that entries whose true
/// gradient is zero compare on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Kmpn,
    Ckmpn,
    Content,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Kmpn => "kmpn",
            ModelKind::Ckmpn => "ckmpn",
            ModelKind::Content => "content",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmpn" => Ok(ModelKind::Kmpn),
            "ckmpn" => Ok(ModelKind::Ckmpn),
            "content" => Ok(ModelKind::Content),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Size of the random instance used for checking.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckSpec {
    pub seed: u64,
    pub entities: usize,
    pub items: usize,
    pub users: usize,
    pub relations_raw: usize,
    pub triplets: usize,
    pub hidden: usize,
    pub layers: usize,
    pub n_pref: usize,
    pub n_meta: usize,
    pub weights: LossWeights,
    pub buckets: usize,
    pub history: usize,
    pub negatives: usize,
    pub impressions: usize,
}

impl Default for GradCheckSpec {
    fn default() -> Self {
        GradCheckSpec {
            seed: 11,
            entities: 12,
            items: 6,
            users: 4,
            relations_raw: 2,
            triplets: 16,
            hidden: 8,
            layers: 2,
            n_pref: 4,
            n_meta: 4,
            weights: LossWeights {
                lambda1: 0.1,
                lambda2: 0.5,
                lambda_cs: 0.7,
                epsilon: 0.5,
            },
            buckets: 16,
            history: 3,
            negatives: 2,
            impressions: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorReport {
    pub name: &'static str,
    pub entries: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub kind: ModelKind,
    pub tolerance: f64,
    pub tensors: Vec<TensorReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.passed)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "tensor\tentries\tmax_rel_err\tmax_abs_err\tstatus")?;
        for t in &self.tensors {
            writeln!(
                f,
                "{}\t{}\t{:.3e}\t{:.3e}\t{}",
                t.name,
                t.entries,
                t.max_rel_err,
                t.max_abs_err,
                if t.passed { "ok" } else { "FAIL" }
            )?;
        }
        write!(
            f,
            "{}: max relative error {:.3e} (tolerance {:e}) {}",
            self.kind.name(),
            self.max_rel_err(),
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

fn compare<P: ParamSet + Clone>(
    params: &P,
    analytic: &P,
    tolerance: f64,
    f: &dyn Fn(&P) -> Result<f64>,
) -> Result<Vec<TensorReport>> {
    let mut probe = params.clone();
    let grads = analytic.named();
    let mut out = Vec::with_capacity(grads.len());
    for (t, (name, g)) in grads.iter().enumerate() {
        let (mut max_rel, mut max_abs) = (0.0f64, 0.0f64);
        for k in 0..g.as_slice().len() {
            let x = probe.named()[t].1.as_slice()[k];
            probe.named_mut()[t].1.as_mut_slice()[k] = x + FD_STEP;
            let up = f(&probe)?;
            probe.named_mut()[t].1.as_mut_slice()[k] = x - FD_STEP;
            let down = f(&probe)?;
            probe.named_mut()[t].1.as_mut_slice()[k] = x;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = g.as_slice()[k];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
        }
        out.push(TensorReport {
            name,
            entries: g.as_slice().len(),
            max_rel_err: max_rel,
            max_abs_err: max_abs,
            passed: max_rel < tolerance,
        });
    }
    Ok(out)
}

struct KmpnInstance {
    graph: KnowledgeGraph,
    interactions: InteractionStore,
    params: KmpnParams,
    batch: Vec<Triple>,
    content: ContentEmbeddings,
}

fn kmpn_instance(spec: &GradCheckSpec, rng: &mut ChaCha8Rng) -> Result<KmpnInstance> {
    if spec.items == 0 || spec.items >= spec.entities || spec.users == 0 {
        return Err(Error::Config("gradcheck instance needs 0 < items < entities and users ≥ 1".into()));
    }
    let triplets = (0..spec.triplets)
        .map(|_| {
            (
                rng.random_range(0..spec.entities),
                rng.random_range(0..spec.relations_raw),
                rng.random_range(spec.items..spec.entities),
            )
        })
        .collect();
    let graph = KnowledgeGraph::from_triplets(spec.entities, spec.relations_raw, triplets)?;
    let per_user = (spec.items / 2).max(1);
    let train: Vec<Vec<usize>> = (0..spec.users)
        .map(|_| index::sample(rng, spec.items, per_user).into_vec())
        .collect();
    let interactions = InteractionStore::from_lists(spec.items, train, None, None, None)?;
    let mut batch = Vec::new();
    for u in 0..spec.users {
        let pos = interactions.train(u);
        let neg: Vec<usize> = (0..spec.items).filter(|i| pos.binary_search(i).is_err()).collect();
        for (k, &p) in pos.iter().enumerate().take(2) {
            if !neg.is_empty() {
                batch.push((u, p, neg[(u + k) % neg.len()]));
            }
        }
    }
    let dims = ModelDims {
        hidden: spec.hidden,
        layers: spec.layers,
        n_meta: spec.n_meta,
        n_pref: spec.n_pref,
    };
    let params = KmpnParams::init(dims, spec.entities, graph.num_relations(), spec.users, rng)?;
    let content = ContentEmbeddings {
        users: Matrix::uniform(spec.users, spec.hidden, -1.0, 1.0, rng),
        items: Matrix::uniform(spec.items, spec.hidden, -1.0, 1.0, rng),
    };
    Ok(KmpnInstance {
        graph,
        interactions,
        params,
        batch,
        content,
    })
}

fn check_kmpn(spec: &GradCheckSpec, ckmpn: bool, tolerance: f64) -> Result<Vec<TensorReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let inst = kmpn_instance(spec, &mut rng)?;
    let mut weights = spec.weights;
    if !ckmpn {
        weights.lambda_cs = 0.0;
    }
    let obj = KmpnObjective {
        graph: &inst.graph,
        interactions: &inst.interactions,
        weights,
        content: ckmpn.then_some(&inst.content),
    };
    let pref = crate::model::preference_embeddings(&inst.params)?;
    let basis = if weights.lambda2 > 0.0 {
        Some(pca_project(&pref.pref, weights.epsilon)?.basis)
    } else {
        None
    };
    let analytic = kmpn_batch_objective(&obj, &inst.params, &inst.batch, basis.as_ref(), true)?
        .grads
        .expect("requested gradients");
    let f = |p: &KmpnParams| kmpn_batch_objective(&obj, p, &inst.batch, basis.as_ref(), false).map(|o| o.value);
    compare(&inst.params, &analytic, tolerance, &f)
}

fn check_content(spec: &GradCheckSpec, tolerance: f64) -> Result<Vec<TensorReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_items = spec.history + spec.negatives + 4;
    let texts = (0..n_items)
        .map(|i| {
            let len = if i == n_items - 1 { 0 } else { rng.random_range(2..7) };
            let words: Vec<String> = (0..len).map(|_| format!("w{}", rng.random_range(0..40))).collect();
            (i, words.join(" "))
        })
        .collect();
    let corpus = ItemCorpus::new(texts);
    let dims = ContentDims {
        hidden: spec.hidden,
        buckets: spec.buckets,
        history: spec.history,
        negatives: spec.negatives,
    };
    let mut params = ContentParams::init(dims, &mut rng)?;
    // Non-zero biases so every tensor gets a generic gradient.
    for b in params.fc1_b.as_mut_slice().iter_mut().chain(params.fc2_b.as_mut_slice()) {
        *b = rng.random_range(-0.5..0.5);
    }
    let tokens = TokenizedCorpus::new(&corpus, n_items, spec.buckets);
    let impressions: Vec<Impression> = (0..spec.impressions)
        .map(|_| {
            let picks = index::sample(&mut rng, n_items, spec.history + 1 + spec.negatives).into_vec();
            Impression {
                history: picks[..spec.history].to_vec(),
                positive: picks[spec.history],
                negatives: picks[spec.history + 1..].to_vec(),
            }
        })
        .collect();
    let mut analytic = params.zeros_like();
    for imp in &impressions {
        impression_loss(imp, &tokens, &params, Some(&mut analytic))?;
    }
    let f = |p: &ContentParams| -> Result<f64> {
        impressions
            .iter()
            .map(|imp| impression_loss(imp, &tokens, p, None))
            .sum()
    };
    compare(&params, &analytic, tolerance, &f)
}

/// Compares analytic gradients with central differences for every trainable
/// scalar of a small random instance. An entry passes when its maximum
/// relative error is below `tolerance`.
pub fn grad_check(kind: ModelKind, spec: &GradCheckSpec, tolerance: f64) -> Result<GradCheckReport> {
    let tensors = match kind {
        ModelKind::Kmpn => check_kmpn(spec, false, tolerance)?,
        ModelKind::Ckmpn => check_kmpn(spec, true, tolerance)?,
        ModelKind::Content => check_content(spec, tolerance)?,
    };
    Ok(GradCheckReport {
        kind,
        tolerance,
        tensors,
    })
}
