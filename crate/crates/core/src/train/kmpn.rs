use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::content::{ContentEmbeddings, EmbeddingMatrixFile};
use crate::data::{InteractionStore, KnowledgeGraph};
use crate::error::{Error, Result};
use crate::model::{backward, forward, KmpnParams, Triple, UpstreamGrads};
use crate::objectives::{
    bpr_loss, cross_system_loss, num_components, pca_project, soft_dcorr_with_basis, total_loss, LossParts, LossWeights,
    Mode,
};
use crate::sampling::ReciprocalSampler;
use crate::tensor::{axpy, Matrix};

use super::adam::{adam_step, AdamState};
use super::{lr_at, EpochLog, TrainConfig};

/// Everything a batch objective needs besides parameters and triples.
#[derive(Clone, Copy, Debug)]
pub struct KmpnObjective<'a> {
    pub graph: &'a KnowledgeGraph,
    pub interactions: &'a InteractionStore,
    pub weights: LossWeights,
    /// Fixed content-side anchors; present in ckmpn mode.
    pub content: Option<&'a ContentEmbeddings>,
}

impl KmpnObjective<'_> {
    pub fn mode(&self) -> Mode {
        if self.content.is_some() {
            Mode::Ckmpn
        } else {
            Mode::Kmpn
        }
    }

    fn check(&self, params: &KmpnParams) -> Result<()> {
        self.weights.validate()?;
        let dims = params.dims;
        if self.weights.lambda2 > 0.0 && num_components(dims.hidden, dims.n_pref, self.weights.epsilon) < 2 {
            return Err(Error::Config(format!(
                "soft distance correlation needs at least 2 principal components (h = {}, N_p = {}, epsilon = {})",
                dims.hidden, dims.n_pref, self.weights.epsilon
            )));
        }
        if let Some(c) = self.content {
            let h = dims.hidden;
            if c.users.cols() != h || c.items.cols() != h {
                return Err(Error::DimMismatch {
                    expected: h,
                    found: c.users.cols().max(c.items.cols()),
                });
            }
            if c.users.rows() < self.interactions.num_users() || c.items.rows() < self.interactions.num_items() {
                return Err(Error::Config("content embeddings do not cover every user and item".into()));
            }
        }
        Ok(())
    }
}

/// Summed (not yet averaged) components of one batch, the batch objective
/// and optionally its gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchObjective {
    pub triples: usize,
    pub bpr_sum: f64,
    pub l2_sum: f64,
    pub cs_sum: f64,
    pub dcorr: f64,
    /// `(bpr + λ₁·l2 + λ_CS·cs)/n + λ₂·dcorr`
    pub value: f64,
    pub grads: Option<KmpnParams>,
}

/// Evaluates the per-batch objective. Components whose weight is zero are
/// neither evaluated nor differentiated. When `basis` is given it is used as
/// the PCA projection; otherwise it is recomputed from the current
/// preference embeddings. Either way it is held constant for the gradient.
pub fn kmpn_batch_objective(
    obj: &KmpnObjective<'_>,
    params: &KmpnParams,
    batch: &[Triple],
    basis: Option<&Matrix>,
    with_grads: bool,
) -> Result<BatchObjective> {
    obj.check(params)?;
    if batch.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    let w = obj.weights;
    let h = params.dims.hidden;
    let n = batch.len();
    let (trace, scores) = forward(params, obj.graph, obj.interactions, batch)?;
    let bpr = bpr_loss(&scores.pos, &scores.neg)?;

    let gather = |f: &dyn Fn(&Triple) -> Vec<f64>| -> Result<Matrix> {
        Matrix::from_rows(&batch.iter().map(f).collect::<Vec<_>>())
    };
    let user_rows = gather(&|t| trace.user_embedding(t.0).expect("batch user").to_vec())?;
    let pos_rows = gather(&|t| trace.item_embedding(t.1).to_vec())?;
    let neg_rows = gather(&|t| trace.item_embedding(t.2).to_vec())?;

    let l2_sum = if w.lambda1 > 0.0 {
        0.5 * (user_rows.frobenius_sq() + pos_rows.frobenius_sq() + neg_rows.frobenius_sq())
    } else {
        0.0
    };

    let cs = match obj.content {
        Some(c) if w.lambda_cs > 0.0 => {
            let anchor_user = gather(&|t| c.users.row(t.0).to_vec())?;
            let anchor_pos = gather(&|t| c.items.row(t.1).to_vec())?;
            let anchor_neg = gather(&|t| c.items.row(t.2).to_vec())?;
            Some(cross_system_loss(
                &user_rows,
                &pos_rows,
                &neg_rows,
                &anchor_user,
                &anchor_pos,
                &anchor_neg,
            )?)
        }
        _ => None,
    };
    let cs_sum = cs.as_ref().map_or(0.0, |c| c.value);

    let dcorr = if w.lambda2 > 0.0 {
        let owned;
        let basis = match basis {
            Some(b) => b,
            None => {
                owned = pca_project(&trace.pref.pref, w.epsilon)?.basis;
                &owned
            }
        };
        Some(soft_dcorr_with_basis(&trace.pref.pref, basis)?)
    } else {
        None
    };
    let dcorr_value = dcorr.as_ref().map_or(0.0, |d| d.0);

    let inv = 1.0 / n as f64;
    let parts = LossParts {
        bpr: bpr.value * inv,
        l2: l2_sum * inv,
        dcorr: dcorr_value,
        cross_system: obj.content.map(|_| cs_sum * inv),
    };
    let value = total_loss(obj.mode(), &w, &parts)?;

    let grads = if with_grads {
        let mut up = UpstreamGrads::zeros(&trace);
        for (t, &(u, i, j)) in batch.iter().enumerate() {
            let row = trace.users.row_of(u).expect("batch user");
            let du = up.user_agg.row_mut(row);
            axpy(inv * bpr.d_pos[t], pos_rows.row(t), du);
            axpy(inv * bpr.d_neg[t], neg_rows.row(t), du);
            if w.lambda1 > 0.0 {
                axpy(inv * w.lambda1, user_rows.row(t), du);
            }
            if let Some(c) = &cs {
                axpy(inv * w.lambda_cs, c.d_user.row(t), du);
            }
            for (item, d_score, rows, d_cs) in [
                (i, bpr.d_pos[t], &pos_rows, cs.as_ref().map(|c| &c.d_pos)),
                (j, bpr.d_neg[t], &neg_rows, cs.as_ref().map(|c| &c.d_neg)),
            ] {
                let de = up.entity_agg.row_mut(item);
                axpy(inv * d_score, user_rows.row(t), de);
                if w.lambda1 > 0.0 {
                    axpy(inv * w.lambda1, rows.row(t), de);
                }
                if let Some(d) = d_cs {
                    axpy(inv * w.lambda_cs, d.row(t), de);
                }
            }
        }
        if let Some((_, mut d_pref)) = dcorr {
            d_pref.scale(w.lambda2);
            up.pref = Some(d_pref);
        }
        debug_assert_eq!(up.user_agg.cols(), h);
        Some(backward(params, obj.graph, obj.interactions, &trace, &up)?)
    } else {
        None
    };

    Ok(BatchObjective {
        triples: n,
        bpr_sum: bpr.value,
        l2_sum,
        cs_sum,
        dcorr: dcorr_value,
        value,
        grads,
    })
}

/// Trains KMPN. `content` switches on the cross-system term.
pub fn train_kmpn(
    graph: &KnowledgeGraph,
    interactions: &InteractionStore,
    params: KmpnParams,
    config: &TrainConfig,
) -> Result<(KmpnParams, Vec<EpochLog>)> {
    train_kmpn_observed(graph, interactions, params, None, config, &mut |_, _| Ok(()))
}

/// CKMPN: the KMPN loop with fixed content embeddings as anchors. Both files
/// must cover every user and item id with width `h`.
pub fn train_ckmpn(
    graph: &KnowledgeGraph,
    interactions: &InteractionStore,
    params: KmpnParams,
    content_users: &EmbeddingMatrixFile,
    content_items: &EmbeddingMatrixFile,
    config: &TrainConfig,
) -> Result<(KmpnParams, Vec<EpochLog>)> {
    let content = ContentEmbeddings::from_files(
        content_users,
        content_items,
        interactions.num_users(),
        interactions.num_items(),
        params.dims.hidden,
    )?;
    train_kmpn_observed(graph, interactions, params, Some(&content), config, &mut |_, _| Ok(()))
}

/// The shared loop. `observer` is called after every `eval_every`-th epoch.
pub fn train_kmpn_observed(
    graph: &KnowledgeGraph,
    interactions: &InteractionStore,
    mut params: KmpnParams,
    content: Option<&ContentEmbeddings>,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&EpochLog, &KmpnParams) -> Result<()>,
) -> Result<(KmpnParams, Vec<EpochLog>)> {
    config.validate()?;
    let obj = KmpnObjective {
        graph,
        interactions,
        weights: config.weights,
        content,
    };
    obj.check(&params)?;
    let mut log = Vec::with_capacity(config.epochs);
    if config.epochs == 0 {
        return Ok((params, log));
    }
    let sampler = ReciprocalSampler::build(interactions)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pairs = interactions.train_pairs();
    if pairs.is_empty() {
        return Err(Error::Invalid("no training interactions".into()));
    }
    let mut state = AdamState::new();
    let w = config.weights;
    for epoch in 0..config.epochs {
        let lr = lr_at(config, epoch, config.epochs)?;
        pairs.shuffle(&mut rng);
        let (mut bpr, mut l2, mut cs, mut dcorr) = (0.0, 0.0, 0.0, 0.0);
        let mut batches = 0usize;
        for chunk in pairs.chunks(config.batch_size) {
            let batch = chunk
                .iter()
                .map(|&(u, i)| Ok((u, i, sampler.sample_negative(interactions, u, &mut rng)?)))
                .collect::<Result<Vec<Triple>>>()?;
            let out = kmpn_batch_objective(&obj, &params, &batch, None, true)?;
            let grads = out.grads.expect("requested gradients");
            adam_step(&mut params, &grads, &mut state, &config.adam, lr)?;
            bpr += out.bpr_sum;
            l2 += out.l2_sum;
            cs += out.cs_sum;
            dcorr += out.dcorr;
            batches += 1;
        }
        let n = pairs.len() as f64;
        let parts = LossParts {
            bpr: bpr / n,
            l2: l2 / n,
            dcorr: dcorr / batches as f64,
            cross_system: content.map(|_| cs / n),
        };
        let entry = EpochLog {
            epoch: epoch + 1,
            total: total_loss(obj.mode(), &w, &parts)?,
            bpr: parts.bpr,
            l2: parts.l2,
            dcorr: parts.dcorr,
            cs: parts.cross_system.unwrap_or(0.0),
            lr,
        };
        if !entry.total.is_finite() {
            return Err(Error::Invalid(format!("non-finite total loss at epoch {}", entry.epoch)));
        }
        log::debug!("{entry}");
        if config.eval_every > 0 && (epoch + 1) % config.eval_every == 0 {
            observer(&entry, &params)?;
        }
        log.push(entry);
    }
    Ok((params, log))
}
