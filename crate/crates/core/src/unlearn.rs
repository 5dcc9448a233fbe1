//! Training stages: original training, knowledge erasure against a
//! stochastic teacher, reconstruction distilled from the original model, the
//! retrain baseline, and the end-to-end pipeline tying them together.
//!
//! Erasure fits the student's softened outputs on the forget set to those of
//! a freshly initialized, never-trained teacher, so the forget-set behavior
//! converges to what an untrained model would do. Reconstruction then
//! restores remaining-data accuracy with cross-entropy plus a distillation
//! term from the original model. Teachers are never updated.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint::save_checkpoint;
use crate::data::{batch_iter_epoch, partition_forget, Dataset, ForgetPartition, ForgetSpec};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, RecoveryTrace, TracePoint};
use crate::loss::{
    cross_entropy, cross_entropy_logit_grad, kl_divergence, kl_divergence_logit_grad,
    softmax_with_temperature, total_loss,
};
use crate::net::{build_conv_net, Network};
use crate::optim::SgdMomentum;
use crate::seed::RngSeed;

/// Hyperparameters of one training stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: RngSeed,
}

impl TrainConfig {
    fn validate(&self, allow_zero_epochs: bool) -> Result<()> {
        if self.epochs == 0 && !allow_zero_epochs {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::invalid(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Hyperparameters of the two unlearning stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlearnConfig {
    pub tau_erase: f64,
    pub tau_reconstruct: f64,
    pub alpha: f64,
    /// Scale the KL term by tau^2 (common distillation practice). Off by
    /// default: the combined objective here weighs the raw KL.
    pub kl_tau2_scaling: bool,
    pub erase: TrainConfig,
    pub reconstruct: TrainConfig,
    pub teacher_seed: RngSeed,
}

impl UnlearnConfig {
    fn validate(&self) -> Result<()> {
        for (name, tau) in [("tau_erase", self.tau_erase), ("tau_reconstruct", self.tau_reconstruct)] {
            if !tau.is_finite() || tau <= 0.0 {
                return Err(Error::invalid(format!("{name} must be positive, got {tau}")));
            }
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::invalid(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        self.erase.validate(true)?;
        self.reconstruct.validate(true)?;
        Ok(())
    }
}

/// Accuracy snapshot taken after an epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSnapshot {
    pub remaining_avg: f64,
    pub forgotten_avg: Option<f64>,
    pub overall: f64,
}

/// Losses, timing, and optional evaluation for one completed epoch.
/// `wall_seconds` is cumulative training time for the stage, excluding the
/// evaluation snapshots themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_kl: Option<f64>,
    pub loss_ce: Option<f64>,
    pub loss_total: f64,
    pub wall_seconds: f64,
    pub eval: Option<EvalSnapshot>,
}

/// Per-epoch records of one stage, in completion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: String,
    pub epochs: Vec<EpochRecord>,
}

impl StageTrace {
    fn new(stage: &str) -> Self {
        StageTrace {
            stage: stage.to_string(),
            epochs: Vec::new(),
        }
    }

    /// Recovery series from the epochs that carry evaluation snapshots.
    pub fn to_recovery_trace(&self) -> Result<RecoveryTrace> {
        let points: Vec<TracePoint> = self
            .epochs
            .iter()
            .filter_map(|e| {
                e.eval.as_ref().map(|s| TracePoint {
                    epoch: e.epoch,
                    remaining_avg: s.remaining_avg,
                    forgotten_avg: s.forgotten_avg,
                    wall_seconds: e.wall_seconds,
                })
            })
            .collect();
        if points.is_empty() {
            return Err(Error::invalid(format!(
                "stage {} has no evaluation snapshots",
                self.stage
            )));
        }
        RecoveryTrace::new(self.stage.clone(), points)
    }
}

/// Test set and forgotten-class set used for per-epoch snapshots.
#[derive(Debug, Clone, Copy)]
pub struct EvalProbe<'a> {
    pub test: &'a Dataset,
    pub forgotten: &'a BTreeSet<usize>,
}

impl EvalProbe<'_> {
    fn snapshot(&self, model: &Network, stage: &str) -> Result<EvalSnapshot> {
        let report = evaluate(model, self.test, self.forgotten, stage)?;
        Ok(EvalSnapshot {
            remaining_avg: report.remaining_avg,
            forgotten_avg: report.forgotten_avg,
            overall: report.overall_accuracy(),
        })
    }
}

fn check_finite(stage: &str, epoch: usize, loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Stage {
            stage: stage.to_string(),
            epoch,
            message: format!("non-finite loss {loss}; training aborted"),
        })
    }
}

fn stage_err(stage: &str, epoch: usize, err: Error) -> Error {
    match err {
        e @ Error::Stage { .. } => e,
        other => Error::Stage {
            stage: stage.to_string(),
            epoch,
            message: other.to_string(),
        },
    }
}

/// Plain cross-entropy training, shared by original training and the retrain
/// baseline.
fn run_ce_training(
    stage: &str,
    ds: &Dataset,
    mut model: Network,
    cfg: &TrainConfig,
    probe: Option<&EvalProbe>,
) -> Result<(Network, StageTrace)> {
    cfg.validate(false)?;
    if ds.is_empty() {
        return Err(Error::invalid(format!("{stage}: training set is empty")));
    }
    if !model.is_initialized() {
        return Err(Error::Uninitialized);
    }
    let mut opt = SgdMomentum::new(&model, cfg.learning_rate, cfg.momentum)?;
    let mut trace = StageTrace::new(stage);
    let mut trained_secs = 0.0f64;

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in batch_iter_epoch(ds, cfg.batch_size, true, cfg.seed, epoch - 1) {
            let logits = model
                .forward_train(&batch.images)
                .map_err(|e| stage_err(stage, epoch, e))?;
            let loss = cross_entropy(&logits, &batch.labels)?;
            check_finite(stage, epoch, loss)?;
            let grad = cross_entropy_logit_grad(&logits, &batch.labels)?;
            model.backward(&grad)?;
            opt.step(&mut model)?;
            loss_sum += loss * batch.labels.len() as f64;
            seen += batch.labels.len();
        }
        trained_secs += start.elapsed().as_secs_f64();
        let mean_ce = loss_sum / seen as f64;
        let eval = probe.map(|p| p.snapshot(&model, stage)).transpose()?;
        trace.epochs.push(EpochRecord {
            epoch,
            loss_kl: None,
            loss_ce: Some(mean_ce),
            loss_total: mean_ce,
            wall_seconds: trained_secs,
            eval,
        });
    }
    Ok((model, trace))
}

/// Train the original model on the complete dataset with cross-entropy.
pub fn train_original(
    ds: &Dataset,
    model: Network,
    cfg: &TrainConfig,
    probe: Option<&EvalProbe>,
) -> Result<(Network, StageTrace)> {
    run_ce_training("original", ds, model, cfg, probe)
}

/// Retrain from a fresh random initialization on the remaining data only.
/// The returned model has never seen the forget set.
pub fn retrain_baseline(
    d_r: &Dataset,
    cfg: &TrainConfig,
    probe: Option<&EvalProbe>,
) -> Result<(Network, StageTrace)> {
    if d_r.is_empty() {
        return Err(Error::invalid("retrain: remaining set is empty"));
    }
    let mut model = build_conv_net(d_r.input_shape(), d_r.num_classes())?;
    model.init_random(cfg.seed);
    run_ce_training("retrain", d_r, model, cfg, probe)
}

/// Freshly initialized network with the same architecture as `arch_like`.
/// Never trained, so its outputs on any data are those of a random model.
pub fn make_stochastic_teacher(arch_like: &Network, seed: RngSeed) -> Network {
    let mut teacher = arch_like.clone_architecture();
    teacher.init_random(seed);
    teacher
}

/// Erase the forget set's influence: initialize the student from the trained
/// model and minimize KL(teacher || student) on the forget set, where the
/// teacher is a stochastic (random, untrained) network. Neither the teacher
/// nor the original model is modified. Returns the scratch model.
pub fn knowledge_erase(
    m_d: &Network,
    d_f: &Dataset,
    cfg: &UnlearnConfig,
    probe: Option<&EvalProbe>,
) -> Result<(Network, StageTrace)> {
    cfg.validate()?;
    if d_f.is_empty() {
        return Err(Error::invalid("erase: forget set is empty"));
    }
    let (c, h, w) = d_f.input_shape();
    if m_d.input_shape() != (c, h, w) {
        return Err(Error::ShapeMismatch {
            context: "erase: model input vs forget set".into(),
            expected: vec![m_d.input_shape().0, m_d.input_shape().1, m_d.input_shape().2],
            actual: vec![c, h, w],
        });
    }
    let stage = "erase";
    let m_s = make_stochastic_teacher(m_d, cfg.teacher_seed);
    let mut m_u = m_d.clone_params()?;
    let mut opt = SgdMomentum::new(&m_u, cfg.erase.learning_rate, cfg.erase.momentum)?;
    let tau = cfg.tau_erase;
    let scale = if cfg.kl_tau2_scaling { tau * tau } else { 1.0 };
    let mut trace = StageTrace::new(stage);
    let mut trained_secs = 0.0f64;

    for epoch in 1..=cfg.erase.epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in batch_iter_epoch(d_f, cfg.erase.batch_size, true, cfg.erase.seed, epoch - 1) {
            let teacher_logits = m_s
                .forward_eval(&batch.images)
                .map_err(|e| stage_err(stage, epoch, e))?;
            let p = softmax_with_temperature(&teacher_logits, tau)?;
            let student_logits = m_u
                .forward_train(&batch.images)
                .map_err(|e| stage_err(stage, epoch, e))?;
            let q = softmax_with_temperature(&student_logits, tau)?;
            let kl = kl_divergence(&p, &q)? * scale;
            check_finite(stage, epoch, kl)?;
            let mut grad = kl_divergence_logit_grad(&p, &q, tau)?;
            if scale != 1.0 {
                grad.values_mut().iter_mut().for_each(|g| *g *= scale);
            }
            m_u.backward(&grad)?;
            opt.step(&mut m_u)?;
            loss_sum += kl * batch.labels.len() as f64;
            seen += batch.labels.len();
        }
        trained_secs += start.elapsed().as_secs_f64();
        let mean_kl = loss_sum / seen as f64;
        let eval = probe.map(|p| p.snapshot(&m_u, stage)).transpose()?;
        trace.epochs.push(EpochRecord {
            epoch,
            loss_kl: Some(mean_kl),
            loss_ce: None,
            loss_total: mean_kl,
            wall_seconds: trained_secs,
            eval,
        });
    }
    Ok((m_u, trace))
}

/// Restore remaining-data accuracy: cross-entropy on the remaining set plus
/// `alpha` times the KL from the original model's softened outputs. With
/// `alpha = 0` the original model is never queried and the run is exactly
/// cross-entropy fine-tuning.
pub fn reconstruct(
    mut m_u: Network,
    m_d: &Network,
    d_r: &Dataset,
    cfg: &UnlearnConfig,
    probe: Option<&EvalProbe>,
) -> Result<(Network, StageTrace)> {
    cfg.validate()?;
    if d_r.is_empty() {
        return Err(Error::invalid("reconstruct: remaining set is empty"));
    }
    if !m_u.is_initialized() {
        return Err(Error::Uninitialized);
    }
    let use_teacher = cfg.alpha != 0.0;
    if use_teacher && !m_d.same_architecture(&m_u) {
        return Err(Error::invalid(
            "reconstruct: teacher and student architectures differ",
        ));
    }
    let stage = "reconstruct";
    let mut opt = SgdMomentum::new(&m_u, cfg.reconstruct.learning_rate, cfg.reconstruct.momentum)?;
    let tau = cfg.tau_reconstruct;
    let scale = if cfg.kl_tau2_scaling { tau * tau } else { 1.0 };
    let mut trace = StageTrace::new(stage);
    let mut trained_secs = 0.0f64;

    for epoch in 1..=cfg.reconstruct.epochs {
        let start = Instant::now();
        let mut ce_sum = 0.0;
        let mut kl_sum = 0.0;
        let mut total_sum = 0.0;
        let mut seen = 0usize;
        for batch in batch_iter_epoch(
            d_r,
            cfg.reconstruct.batch_size,
            true,
            cfg.reconstruct.seed,
            epoch - 1,
        ) {
            let logits = m_u
                .forward_train(&batch.images)
                .map_err(|e| stage_err(stage, epoch, e))?;
            let ce = cross_entropy(&logits, &batch.labels)?;
            let mut grad = cross_entropy_logit_grad(&logits, &batch.labels)?;
            let mut kl = 0.0;
            if use_teacher {
                let teacher_logits = m_d
                    .forward_eval(&batch.images)
                    .map_err(|e| stage_err(stage, epoch, e))?;
                let p = softmax_with_temperature(&teacher_logits, tau)?;
                let q = softmax_with_temperature(&logits, tau)?;
                kl = kl_divergence(&p, &q)? * scale;
                let kl_grad = kl_divergence_logit_grad(&p, &q, tau)?;
                let weight = cfg.alpha * scale;
                for (g, &k) in grad.values_mut().iter_mut().zip(kl_grad.values()) {
                    *g += weight * k;
                }
            }
            let loss = total_loss(ce, kl, cfg.alpha);
            check_finite(stage, epoch, loss)?;
            m_u.backward(&grad)?;
            opt.step(&mut m_u)?;
            let b = batch.labels.len() as f64;
            ce_sum += ce * b;
            kl_sum += kl * b;
            total_sum += loss * b;
            seen += batch.labels.len();
        }
        trained_secs += start.elapsed().as_secs_f64();
        let n = seen as f64;
        let eval = probe.map(|p| p.snapshot(&m_u, stage)).transpose()?;
        trace.epochs.push(EpochRecord {
            epoch,
            loss_kl: use_teacher.then_some(kl_sum / n),
            loss_ce: Some(ce_sum / n),
            loss_total: total_sum / n,
            wall_seconds: trained_secs,
            eval,
        });
    }
    Ok((m_u, trace))
}

/// Resolved configuration for a full pipeline run. Stage seeds are expected
/// to be derived from one master seed (see [`PipelineConfig::derive_seeds`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub forget: ForgetSpec,
    pub train: TrainConfig,
    pub retrain: TrainConfig,
    pub unlearn: UnlearnConfig,
}

impl PipelineConfig {
    /// Overwrite every stage seed with its derivation from `master`:
    /// `master XOR fnv1a64(stage_name)` for stage names `original`,
    /// `retrain`, `erase`, `reconstruct`, and `teacher`.
    pub fn derive_seeds(mut self, master: RngSeed) -> Self {
        self.train.seed = master.derive("original");
        self.retrain.seed = master.derive("retrain");
        self.unlearn.erase.seed = master.derive("erase");
        self.unlearn.reconstruct.seed = master.derive("reconstruct");
        self.unlearn.teacher_seed = master.derive("teacher");
        self
    }
}

/// Stage traces of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTraces {
    pub original: StageTrace,
    pub erase: StageTrace,
    pub reconstruct: StageTrace,
    pub retrain: StageTrace,
}

impl PipelineTraces {
    pub fn all(&self) -> [&StageTrace; 4] {
        [&self.original, &self.erase, &self.reconstruct, &self.retrain]
    }
}

/// Everything a pipeline run produces.
pub struct PipelineResult {
    pub m_d: Network,
    pub m_u_scratch: Network,
    pub m_u_final: Network,
    pub m_r: Network,
    pub partition: ForgetPartition,
    pub traces: PipelineTraces,
    /// Reports in column order: original, scratch, retrained, ours.
    pub reports: Vec<EvalReport>,
    pub checkpoint_paths: Vec<PathBuf>,
}

/// Run partition, original training, erasure, reconstruction, and the
/// retrain baseline; evaluate all four models; optionally checkpoint each
/// model into `checkpoint_dir`.
pub fn unlearn_pipeline(
    train: &Dataset,
    test: &Dataset,
    cfg: &PipelineConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<PipelineResult> {
    let partition = partition_forget(train, &cfg.forget)?;
    let forgotten = cfg.forget.forgotten_classes();
    let probe = EvalProbe {
        test,
        forgotten: &forgotten,
    };

    let mut model = build_conv_net(train.input_shape(), train.num_classes())?;
    model.init_random(cfg.train.seed);
    let (m_d, trace_original) = train_original(train, model, &cfg.train, Some(&probe))?;

    let (m_u_scratch, trace_erase) =
        knowledge_erase(&m_d, &partition.forget, &cfg.unlearn, Some(&probe))?;

    let (m_u_final, trace_reconstruct) = reconstruct(
        m_u_scratch.clone_params()?,
        &m_d,
        &partition.remain,
        &cfg.unlearn,
        Some(&probe),
    )?;

    let (m_r, trace_retrain) = retrain_baseline(&partition.remain, &cfg.retrain, Some(&probe))?;

    let reports = vec![
        evaluate(&m_d, test, &forgotten, "original")?,
        evaluate(&m_u_scratch, test, &forgotten, "scratch")?,
        evaluate(&m_r, test, &forgotten, "retrained")?,
        evaluate(&m_u_final, test, &forgotten, "ours")?,
    ];

    let mut checkpoint_paths = Vec::new();
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir)?;
        for (name, net) in [
            ("m_d", &m_d),
            ("m_u_scratch", &m_u_scratch),
            ("m_u_final", &m_u_final),
            ("m_r", &m_r),
        ] {
            let path = dir.join(format!("{name}.unlf"));
            save_checkpoint(net, &path)?;
            checkpoint_paths.push(path);
        }
    }

    Ok(PipelineResult {
        m_d,
        m_u_scratch,
        m_u_final,
        m_r,
        partition,
        traces: PipelineTraces {
            original: trace_original,
            erase: trace_erase,
            reconstruct: trace_reconstruct,
            retrain: trace_retrain,
        },
        reports,
        checkpoint_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;

    fn train_cfg(epochs: usize, lr: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 16,
            learning_rate: lr,
            momentum: 0.9,
            seed: RngSeed(seed),
        }
    }

    fn unlearn_cfg(erase_epochs: usize, reconstruct_epochs: usize) -> UnlearnConfig {
        UnlearnConfig {
            tau_erase: 2.0,
            tau_reconstruct: 2.0,
            alpha: 1.0,
            kl_tau2_scaling: false,
            erase: train_cfg(erase_epochs, 1e-3, 100),
            reconstruct: train_cfg(reconstruct_epochs, 1e-3, 101),
            teacher_seed: RngSeed(900),
        }
    }

    fn trained_blob_model(seed: u64) -> (Dataset, Network) {
        let train = synth_blobs(4, 30, 8, RngSeed(seed)).unwrap();
        let mut model = build_conv_net((1, 8, 8), 4).unwrap();
        model.init_random(RngSeed(seed + 1));
        let (m_d, _) = train_original(&train, model, &train_cfg(2, 1e-2, seed + 2), None).unwrap();
        (train, m_d)
    }

    #[test]
    fn zero_epoch_original_training_errors() {
        let ds = synth_blobs(2, 4, 4, RngSeed(0)).unwrap();
        let mut model = build_conv_net((1, 4, 4), 2).unwrap();
        model.init_random(RngSeed(1));
        assert!(train_original(&ds, model, &train_cfg(0, 1e-2, 2), None).is_err());
    }

    #[test]
    fn training_produces_one_record_per_epoch_with_monotone_time() {
        let ds = synth_blobs(3, 10, 6, RngSeed(4)).unwrap();
        let mut model = build_conv_net((1, 6, 6), 3).unwrap();
        model.init_random(RngSeed(5));
        let (_, trace) = train_original(&ds, model, &train_cfg(3, 1e-2, 6), None).unwrap();
        assert_eq!(trace.epochs.len(), 3);
        assert_eq!(
            trace.epochs.iter().map(|e| e.epoch).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        assert!(trace
            .epochs
            .windows(2)
            .all(|w| w[0].wall_seconds <= w[1].wall_seconds));
    }

    #[test]
    fn erase_with_zero_epochs_is_identity() {
        let (train, m_d) = trained_blob_model(10);
        let part = partition_forget(&train, &ForgetSpec::by_class([1])).unwrap();
        let (m_u, trace) = knowledge_erase(&m_d, &part.forget, &unlearn_cfg(0, 1), None).unwrap();
        assert!(trace.epochs.is_empty());
        assert_eq!(m_u.flat_params(), m_d.flat_params());
    }

    #[test]
    fn erase_rejects_empty_forget_set_and_shape_mismatch() {
        let (train, m_d) = trained_blob_model(20);
        let empty = train.subset(&[], "empty").unwrap();
        assert!(knowledge_erase(&m_d, &empty, &unlearn_cfg(1, 1), None).is_err());

        let other = synth_blobs(4, 5, 6, RngSeed(3)).unwrap();
        assert!(knowledge_erase(&m_d, &other, &unlearn_cfg(1, 1), None).is_err());
    }

    #[test]
    fn erase_leaves_teachers_untouched_and_depends_on_teacher_seed() {
        let (train, m_d) = trained_blob_model(30);
        let part = partition_forget(&train, &ForgetSpec::by_class([2])).unwrap();
        let before = m_d.flat_params();

        let cfg_a = unlearn_cfg(1, 1);
        let (u1, _) = knowledge_erase(&m_d, &part.forget, &cfg_a, None).unwrap();
        assert_eq!(m_d.flat_params(), before, "original model was modified");

        let mut cfg_b = unlearn_cfg(1, 1);
        cfg_b.teacher_seed = RngSeed(901);
        let (u2, _) = knowledge_erase(&m_d, &part.forget, &cfg_b, None).unwrap();
        assert_ne!(u1.flat_params(), u2.flat_params());

        // Same config is bitwise reproducible.
        let (u3, _) = knowledge_erase(&m_d, &part.forget, &cfg_a, None).unwrap();
        assert_eq!(u1.flat_params(), u3.flat_params());
    }

    #[test]
    fn reconstruct_alpha_zero_never_queries_teacher_and_matches_ce_run() {
        let (train, m_d) = trained_blob_model(40);
        let part = partition_forget(&train, &ForgetSpec::by_class([0])).unwrap();
        let mut cfg = unlearn_cfg(1, 2);
        cfg.alpha = 0.0;

        let (scratch, _) = knowledge_erase(&m_d, &part.forget, &cfg, None).unwrap();

        m_d.reset_query_count();
        let (rebuilt, trace) =
            reconstruct(scratch.clone_params().unwrap(), &m_d, &part.remain, &cfg, None).unwrap();
        assert_eq!(m_d.query_count(), 0, "teacher queried despite alpha = 0");
        assert!(trace.epochs.iter().all(|e| e.loss_kl.is_none()));

        // Bit-for-bit identical to a plain CE fine-tuning loop with the same
        // seed: run reconstruct against a differently-initialized teacher,
        // which must not matter when alpha = 0.
        let other_teacher = make_stochastic_teacher(&m_d, RngSeed(77));
        let (rebuilt2, trace2) = reconstruct(
            scratch.clone_params().unwrap(),
            &other_teacher,
            &part.remain,
            &cfg,
            None,
        )
        .unwrap();
        assert_eq!(rebuilt.flat_params(), rebuilt2.flat_params());
        let ce1: Vec<f64> = trace.epochs.iter().map(|e| e.loss_ce.unwrap()).collect();
        let ce2: Vec<f64> = trace2.epochs.iter().map(|e| e.loss_ce.unwrap()).collect();
        assert_eq!(ce1, ce2);
    }

    #[test]
    fn reconstruct_rejects_empty_remaining_set() {
        let (train, m_d) = trained_blob_model(50);
        let empty = train.subset(&[], "empty").unwrap();
        let cfg = unlearn_cfg(1, 1);
        let m_u = m_d.clone_params().unwrap();
        assert!(reconstruct(m_u, &m_d, &empty, &cfg, None).is_err());
    }

    #[test]
    fn pipeline_emits_checkpoints_traces_and_reports() {
        let dir = tempfile::tempdir().unwrap();
        let train = synth_blobs(4, 30, 8, RngSeed(60)).unwrap();
        let test = synth_blobs(4, 10, 8, RngSeed(61)).unwrap();
        let cfg = PipelineConfig {
            forget: ForgetSpec::by_class([1]),
            train: train_cfg(2, 1e-2, 0),
            retrain: train_cfg(2, 1e-2, 0),
            unlearn: unlearn_cfg(1, 1),
        }
        .derive_seeds(RngSeed(42));

        let result = unlearn_pipeline(&train, &test, &cfg, Some(dir.path())).unwrap();
        assert_eq!(result.checkpoint_paths.len(), 4);
        for p in &result.checkpoint_paths {
            assert!(p.exists(), "{p:?} missing");
        }
        assert_eq!(result.traces.all().len(), 4);
        assert_eq!(result.reports.len(), 4);
        let ids: Vec<&str> = result.reports.iter().map(|r| r.model_id.as_str()).collect();
        assert_eq!(ids, vec!["original", "scratch", "retrained", "ours"]);
    }

    #[test]
    fn pipeline_is_bitwise_reproducible() {
        let train = synth_blobs(3, 20, 8, RngSeed(70)).unwrap();
        let test = synth_blobs(3, 8, 8, RngSeed(71)).unwrap();
        let cfg = PipelineConfig {
            forget: ForgetSpec::by_class([2]),
            train: train_cfg(1, 1e-2, 0),
            retrain: train_cfg(1, 1e-2, 0),
            unlearn: unlearn_cfg(1, 1),
        }
        .derive_seeds(RngSeed(7));

        let a = unlearn_pipeline(&train, &test, &cfg, None).unwrap();
        let b = unlearn_pipeline(&train, &test, &cfg, None).unwrap();
        for (x, y) in [
            (&a.m_d, &b.m_d),
            (&a.m_u_scratch, &b.m_u_scratch),
            (&a.m_u_final, &b.m_u_final),
            (&a.m_r, &b.m_r),
        ] {
            let (xp, yp) = (x.flat_params(), y.flat_params());
            assert_eq!(xp.len(), yp.len());
            for (u, v) in xp.iter().zip(&yp) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn pipeline_stages_do_not_read_forget_set_except_erase() {
        let train = synth_blobs(3, 20, 8, RngSeed(80)).unwrap();
        let test = synth_blobs(3, 8, 8, RngSeed(81)).unwrap();
        let cfg = PipelineConfig {
            forget: ForgetSpec::by_class([0]),
            train: train_cfg(1, 1e-2, 0),
            retrain: train_cfg(1, 1e-2, 0),
            unlearn: unlearn_cfg(1, 1),
        }
        .derive_seeds(RngSeed(9));

        let result = unlearn_pipeline(&train, &test, &cfg, None).unwrap();
        let forget = &result.partition.forget;
        let remain = &result.partition.remain;
        assert_eq!(
            forget.access_count(),
            forget.len() as u64,
            "forget set must be read exactly once (one erase epoch)"
        );
        // Reconstruct and retrain each swept the remaining set once.
        assert_eq!(remain.access_count(), 2 * remain.len() as u64);
    }
}
