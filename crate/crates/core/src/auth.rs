//! Online transmitter authentication.
//!
//! Alice trains a two-component mixture on Bob's training block, takes the
//! component holding most training points as Bob's, and then flags every
//! message whose Bob posterior falls below the threshold. Every
//! `block_size` messages the mixture is refit on the new block, warm-started
//! from the current parameters; older data is dropped.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::ChannelEstimate;
use crate::error::{Error, Result};
use crate::gmm::snapshot::{from_json_str, ModelSnapshot};
use crate::gmm::{e_step, fit, FitOptions, GaussianComponent, GmmModel};

/// Number of mixture components: one for Bob, one for everything else.
pub const NUM_COMPONENTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    AcceptBob,
    FlagEve,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuthDecision {
    pub verdict: Verdict,
    pub bob_posterior: f64,
    pub threshold_used: f64,
}

impl AuthDecision {
    /// Applies the acceptance rule `score >= threshold`.
    pub fn from_score(score: f64, threshold: f64) -> Self {
        let verdict = if score >= threshold {
            Verdict::AcceptBob
        } else {
            Verdict::FlagEve
        };
        Self {
            verdict,
            bob_posterior: score,
            threshold_used: threshold,
        }
    }

    pub fn accepted(&self) -> bool {
        self.verdict == Verdict::AcceptBob
    }
}

/// Which buffered messages feed a block refit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefitMode {
    /// Every message of the block, whatever its verdict.
    #[default]
    All,
    /// Only the messages accepted as Bob.
    AcceptedOnly,
}

/// How the two-component model is built from Bob-only training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Bob's component is the EM fit of the training block; the second
    /// component starts as a broad "unknown sender" Gaussian with the same
    /// centre and `scale` times Bob's covariance, at equal weight. The first
    /// block update moves it onto whatever else transmits.
    Background { scale: f64 },
    /// Plain two-component EM fit of the training block.
    Split,
}

impl Default for TrainingMode {
    fn default() -> Self {
        TrainingMode::Background { scale: 100.0 }
    }
}

/// Per-dimension affine map fixed on the training block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    fn fit(data: &DMatrix<f64>) -> Self {
        let n = data.nrows() as f64;
        let mut mean = Vec::with_capacity(data.ncols());
        let mut scale = Vec::with_capacity(data.ncols());
        for col in data.column_iter() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            mean.push(m);
            scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Self { mean, scale }
    }

    fn apply(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthConfig {
    /// Messages per model update block (`N`).
    pub block_size: usize,
    pub threshold: f64,
    pub fit: FitOptions,
    #[serde(default)]
    pub training_mode: TrainingMode,
    #[serde(default)]
    pub refit_mode: RefitMode,
    /// Z-score features with training statistics before clustering.
    #[serde(default)]
    pub standardize: bool,
}

impl Default for AuthConfig {
    fn default() -> Self {
        Self {
            block_size: 1000,
            threshold: 0.5,
            fit: FitOptions::default(),
            training_mode: TrainingMode::default(),
            refit_mode: RefitMode::All,
            standardize: false,
        }
    }
}

/// Single-owner authenticator state machine.
#[derive(Debug, Clone, PartialEq)]
pub struct AuthenticatorState {
    model: GmmModel,
    bob_component: usize,
    threshold: f64,
    block_size: usize,
    buffer: Vec<(ChannelEstimate, bool)>,
    block_count: usize,
    fit_options: FitOptions,
    refit_mode: RefitMode,
    standardizer: Option<Standardizer>,
}

fn features(estimates: &[&ChannelEstimate], standardizer: Option<&Standardizer>) -> DMatrix<f64> {
    let m = estimates.first().map_or(0, |e| e.dim());
    let mut data = DMatrix::zeros(estimates.len(), m);
    let mut row = vec![0.0; m];
    for (i, e) in estimates.iter().enumerate() {
        row.copy_from_slice(e.gains());
        if let Some(s) = standardizer {
            s.apply(&mut row);
        }
        for (j, v) in row.iter().enumerate() {
            data[(i, j)] = *v;
        }
    }
    data
}

/// Component with the most hard assignments; ties go to the larger weight,
/// then to the lower index.
fn majority_component(model: &GmmModel, data: &DMatrix<f64>) -> Result<usize> {
    let (resp, _) = e_step(model, data)?;
    let mut counts = vec![0usize; model.k()];
    for a in resp.hard_assignments() {
        counts[a] += 1;
    }
    let weights = model.weights();
    let mut best = 0;
    for k in 1..model.k() {
        if counts[k] > counts[best] || (counts[k] == counts[best] && weights[k] > weights[best]) {
            best = k;
        }
    }
    Ok(best)
}

fn nearest_mean(model: &GmmModel, target: &DVector<f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, c) in model.components().iter().enumerate() {
        let d = (&c.mean - target).norm_squared();
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

/// Fits the initial model on Bob's training messages.
///
/// Bob's component is the one holding the majority of hard assignments over
/// the training block (ties: larger weight, then lower index).
pub fn train_initial(training: &[ChannelEstimate], config: &AuthConfig) -> Result<AuthenticatorState> {
    if training.len() < 2 {
        return Err(Error::Contract(format!(
            "training needs at least 2 messages, got {}",
            training.len()
        )));
    }
    if config.block_size == 0 {
        return Err(Error::config("block_size", "must be positive"));
    }
    if !config.threshold.is_finite() {
        return Err(Error::config("threshold", "must be finite"));
    }
    let dim = training[0].dim();
    if let Some(e) = training.iter().find(|e| e.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: e.dim(),
        });
    }
    let refs: Vec<&ChannelEstimate> = training.iter().collect();
    let raw = features(&refs, None);
    let standardizer = config.standardize.then(|| Standardizer::fit(&raw));
    let data = match &standardizer {
        Some(s) => features(&refs, Some(s)),
        None => raw,
    };
    let opts = FitOptions {
        k: NUM_COMPONENTS,
        ..config.fit.clone()
    };
    let model = match config.training_mode {
        TrainingMode::Split => fit(&data, &opts, None)?,
        TrainingMode::Background { scale } => {
            if !(scale.is_finite() && scale > 1.0) {
                return Err(Error::config("background_scale", "must be finite and above 1"));
            }
            let single = fit(&data, &FitOptions { k: 1, ..opts.clone() }, None)?;
            let bob = &single.components()[0];
            let background = GaussianComponent {
                weight: 0.5,
                mean: bob.mean.clone(),
                covariance: &bob.covariance * scale,
            };
            let bob = GaussianComponent {
                weight: 0.5,
                ..bob.clone()
            };
            GmmModel::new(vec![bob, background], single.fit_info.clone())?
        }
    };
    let bob_component = majority_component(&model, &data)?;
    Ok(AuthenticatorState {
        model,
        bob_component,
        threshold: config.threshold.clamp(0.0, 1.0),
        block_size: config.block_size,
        buffer: Vec::with_capacity(config.block_size),
        block_count: 1,
        fit_options: opts,
        refit_mode: config.refit_mode,
        standardizer,
    })
}

impl AuthenticatorState {
    pub fn model(&self) -> &GmmModel {
        &self.model
    }

    pub fn bob_component(&self) -> usize {
        self.bob_component
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Sets the decision threshold, clamped to `[0, 1]`.
    pub fn set_threshold(&mut self, threshold: f64) {
        self.threshold = threshold.clamp(0.0, 1.0);
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn block_count(&self) -> usize {
        self.block_count
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    fn point(&self, estimate: &ChannelEstimate) -> Result<DVector<f64>> {
        if estimate.dim() != self.model.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.model.dim(),
                actual: estimate.dim(),
            });
        }
        let mut x = estimate.gains().to_vec();
        if let Some(s) = &self.standardizer {
            s.apply(&mut x);
        }
        Ok(DVector::from_vec(x))
    }

    /// Posterior probability that `estimate` came from Bob's component.
    pub fn bob_posterior(&self, estimate: &ChannelEstimate) -> Result<f64> {
        let post = self.model.posterior(&self.point(estimate)?)?;
        Ok(post[self.bob_component].clamp(0.0, 1.0))
    }

    /// Decision under the current model, without touching the state.
    pub fn score(&self, estimate: &ChannelEstimate) -> Result<AuthDecision> {
        Ok(AuthDecision::from_score(self.bob_posterior(estimate)?, self.threshold))
    }

    /// Decides on one message, buffers it, and refits the model once the
    /// buffer holds a full block.
    ///
    /// If the refit fails the decision is lost, the state keeps the full
    /// buffer, and the error carries the block index; call
    /// [`update_block`](Self::update_block) or
    /// [`discard_buffer`](Self::discard_buffer) before classifying again.
    pub fn classify(&mut self, estimate: &ChannelEstimate) -> Result<AuthDecision> {
        if self.buffer.len() >= self.block_size {
            return Err(Error::Contract("a block update is pending".into()));
        }
        let decision = self.score(estimate)?;
        self.buffer.push((estimate.clone(), decision.accepted()));
        if self.buffer.len() == self.block_size {
            self.update_block()?;
        }
        Ok(decision)
    }

    /// Refits the mixture on the buffered block, warm-started from the
    /// current parameters, and re-identifies Bob's component as the one whose
    /// mean is nearest the previous Bob mean.
    pub fn update_block(&mut self) -> Result<()> {
        if self.buffer.len() != self.block_size {
            return Err(Error::Contract(format!(
                "update needs {} buffered messages, have {}",
                self.block_size,
                self.buffer.len()
            )));
        }
        let block = self.block_count;
        let wrap = |e: Error| Error::BlockUpdate {
            block,
            source: Box::new(e),
        };
        let selected: Vec<&ChannelEstimate> = self
            .buffer
            .iter()
            .filter(|(_, accepted)| self.refit_mode == RefitMode::All || *accepted)
            .map(|(e, _)| e)
            .collect();
        if selected.len() < self.model.k() {
            return Err(wrap(Error::Contract(format!(
                "only {} messages selected for the refit",
                selected.len()
            ))));
        }
        let data = features(&selected, self.standardizer.as_ref());
        let refit = fit(&data, &self.fit_options, Some(&self.model)).map_err(wrap)?;
        let previous_bob = self.model.components()[self.bob_component].mean.clone();
        self.bob_component = nearest_mean(&refit, &previous_bob);
        self.model = refit;
        self.buffer.clear();
        self.block_count += 1;
        Ok(())
    }

    /// Drops the pending block without refitting.
    pub fn discard_buffer(&mut self) {
        self.buffer.clear();
    }
}

/// JSON form of an [`AuthenticatorState`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSnapshot {
    pub model: ModelSnapshot,
    pub bob_component: usize,
    pub threshold: f64,
    pub block_size: usize,
    pub block_count: usize,
    #[serde(default)]
    pub fit_options: Option<FitOptions>,
    #[serde(default)]
    pub refit_mode: RefitMode,
    #[serde(default)]
    pub standardizer: Option<Standardizer>,
    /// Gains of the messages buffered toward the next update.
    #[serde(default)]
    pub buffer: Vec<BufferedMessage>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferedMessage {
    pub gains: Vec<f64>,
    pub carrier_indices: Vec<usize>,
    pub accepted: bool,
}

impl From<&AuthenticatorState> for StateSnapshot {
    fn from(s: &AuthenticatorState) -> Self {
        Self {
            model: ModelSnapshot::from(&s.model),
            bob_component: s.bob_component,
            threshold: s.threshold,
            block_size: s.block_size,
            block_count: s.block_count,
            fit_options: Some(s.fit_options.clone()),
            refit_mode: s.refit_mode,
            standardizer: s.standardizer.clone(),
            buffer: s
                .buffer
                .iter()
                .map(|(e, a)| BufferedMessage {
                    gains: e.gains().to_vec(),
                    carrier_indices: e.carrier_indices().to_vec(),
                    accepted: *a,
                })
                .collect(),
        }
    }
}

impl TryFrom<StateSnapshot> for AuthenticatorState {
    type Error = Error;

    fn try_from(s: StateSnapshot) -> Result<Self> {
        let model = GmmModel::try_from(s.model)?;
        let bad = |m: String| Error::Snapshot(m);
        if s.bob_component >= model.k() {
            return Err(bad(format!(
                "bob_component {} out of range for {} components",
                s.bob_component,
                model.k()
            )));
        }
        if !(0.0..=1.0).contains(&s.threshold) {
            return Err(bad(format!("threshold {} outside [0, 1]", s.threshold)));
        }
        if s.block_size == 0 {
            return Err(bad("block_size must be positive".into()));
        }
        if s.buffer.len() >= s.block_size {
            return Err(bad("buffer must hold fewer than block_size messages".into()));
        }
        if let Some(st) = &s.standardizer {
            if st.mean.len() != model.dim() || st.scale.len() != model.dim() {
                return Err(bad("standardizer dimension differs from the model".into()));
            }
        }
        let buffer = s
            .buffer
            .into_iter()
            .map(|b| {
                let e = ChannelEstimate::new(b.gains, b.carrier_indices)?;
                if e.dim() != model.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: model.dim(),
                        actual: e.dim(),
                    });
                }
                Ok((e, b.accepted))
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| bad(format!("buffer: {e}")))?;
        Ok(Self {
            fit_options: s.fit_options.unwrap_or_else(|| FitOptions {
                k: model.k(),
                ..Default::default()
            }),
            model,
            bob_component: s.bob_component,
            threshold: s.threshold,
            block_size: s.block_size,
            buffer,
            block_count: s.block_count,
            refit_mode: s.refit_mode,
            standardizer: s.standardizer,
        })
    }
}

impl AuthenticatorState {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&StateSnapshot::from(self)).map_err(|e| Error::Snapshot(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        from_json_str::<StateSnapshot>(text)?.try_into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{MessageRecord, Sender};
    use crate::eval::{build_stream, ExperimentConfig};
    use crate::gmm::FitInfo;

    fn scenario(ai: f64, n: usize, m: usize) -> (Vec<ChannelEstimate>, Vec<MessageRecord>, AuthConfig) {
        let cfg = ExperimentConfig {
            m_subcarriers: m,
            block_size: n,
            num_test_blocks: 3,
            attack_intensity: ai,
            snr_db: 25.0,
            ..Default::default()
        };
        let s = build_stream(&cfg).unwrap();
        (s.training, s.test, cfg.auth_config(0.5))
    }

    fn one_d(w: (f64, f64)) -> GmmModel {
        let c = |weight: f64, mu: f64| GaussianComponent {
            weight,
            mean: DVector::from_element(1, mu),
            covariance: DMatrix::from_element(1, 1, 1.0),
        };
        GmmModel::new(vec![c(w.0, -5.0), c(w.1, 5.0)], FitInfo::default()).unwrap()
    }

    #[test]
    fn majority_tie_goes_to_larger_weight_then_lower_index() {
        let data = DMatrix::from_column_slice(4, 1, &[-5.0, -5.0, 5.0, 5.0]);
        assert_eq!(majority_component(&one_d((0.4, 0.6)), &data).unwrap(), 1);
        assert_eq!(majority_component(&one_d((0.6, 0.4)), &data).unwrap(), 0);
        assert_eq!(majority_component(&one_d((0.5, 0.5)), &data).unwrap(), 0);
    }

    #[test]
    fn single_training_message_is_rejected() {
        let (training, _, cfg) = scenario(0.5, 50, 12);
        assert!(matches!(train_initial(&training[..1], &cfg), Err(Error::Contract(_))));
    }

    #[test]
    fn training_block_is_accepted() {
        let (training, _, cfg) = scenario(0.5, 1000, 48);
        let state = train_initial(&training, &cfg).unwrap();
        assert!(state.model().weights()[state.bob_component()] >= 0.5);
        let accepted = training.iter().filter(|e| state.score(e).unwrap().accepted()).count();
        assert!(accepted as f64 >= 0.99 * training.len() as f64, "{accepted}");
    }

    #[test]
    fn split_training_gives_bob_the_majority_component() {
        let (training, _, cfg) = scenario(0.5, 1000, 48);
        let cfg = AuthConfig {
            training_mode: TrainingMode::Split,
            ..cfg
        };
        let state = train_initial(&training, &cfg).unwrap();
        assert!(state.model().weights()[state.bob_component()] >= 0.5);
    }

    #[test]
    fn posterior_at_bob_mean_is_high() {
        let (training, _, cfg) = scenario(0.5, 500, 12);
        let state = train_initial(&training, &cfg).unwrap();
        let mean = state.model().components()[state.bob_component()]
            .mean
            .as_slice()
            .to_vec();
        let d = state.score(&ChannelEstimate::from_gains(mean).unwrap()).unwrap();
        assert!(d.bob_posterior > 0.99);
        assert!(d.accepted());
    }

    #[test]
    fn threshold_endpoints_and_monotonicity() {
        let (training, test, cfg) = scenario(0.5, 200, 12);
        let mut state = train_initial(&training, &cfg).unwrap();
        for r in test.iter().take(150) {
            state.set_threshold(0.0);
            assert!(state.score(&r.estimate).unwrap().accepted());
            let post = state.bob_posterior(&r.estimate).unwrap();
            assert!((0.0..=1.0).contains(&post));
            state.set_threshold(1.0);
            assert_eq!(state.score(&r.estimate).unwrap().accepted(), post == 1.0);
            let mut prev = true;
            for t in [0.0, 0.2, 0.5, 0.8, 1.0] {
                state.set_threshold(t);
                let a = state.score(&r.estimate).unwrap().accepted();
                assert!(prev || !a);
                prev = a;
            }
        }
        state.set_threshold(3.0);
        assert_eq!(state.threshold(), 1.0);
    }

    #[test]
    fn decisions_are_deterministic() {
        let (training, test, cfg) = scenario(0.5, 200, 12);
        let a = train_initial(&training, &cfg).unwrap();
        let b = train_initial(&training, &cfg).unwrap();
        assert_eq!(a, b);
        for r in test.iter().take(50) {
            assert_eq!(a.score(&r.estimate).unwrap(), b.score(&r.estimate).unwrap());
        }
    }

    #[test]
    fn bookkeeping_counts_every_message() {
        let (training, test, cfg) = scenario(0.5, 100, 12);
        let n = cfg.block_size;
        let mut state = train_initial(&training, &cfg).unwrap();
        for (consumed, r) in test.iter().enumerate() {
            state.classify(&r.estimate).unwrap();
            assert!(state.buffered() < n);
            assert_eq!(state.block_count() * n + state.buffered(), consumed + 1 + n);
        }
    }

    #[test]
    fn update_needs_full_buffer() {
        let (training, test, cfg) = scenario(0.5, 100, 12);
        let mut state = train_initial(&training, &cfg).unwrap();
        state.classify(&test[0].estimate).unwrap();
        assert!(matches!(state.update_block(), Err(Error::Contract(_))));
        assert_eq!(state.buffered(), 1);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (training, _, cfg) = scenario(0.5, 100, 12);
        let state = train_initial(&training, &cfg).unwrap();
        let short = ChannelEstimate::from_gains(vec![1.0; 6]).unwrap();
        assert!(matches!(state.score(&short), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn bob_only_block_keeps_bob_mean_within_standard_error() {
        let (training, test, cfg) = scenario(0.0, 1000, 12);
        let mut state = train_initial(&training, &cfg).unwrap();
        let before = state.model().components()[state.bob_component()].clone();
        for r in test.iter().take(1000) {
            state.classify(&r.estimate).unwrap();
        }
        assert_eq!(state.block_count(), 2);
        let after = &state.model().components()[state.bob_component()].mean;
        let n = 1000f64;
        for j in 0..after.len() {
            let se = before.covariance[(j, j)].sqrt() / n.sqrt();
            assert!((after[j] - before.mean[j]).abs() < 3.0 * se, "dim {j}");
        }
    }

    #[test]
    fn eve_only_block_keeps_nearest_mean_identity() {
        let (training, test, cfg) = scenario(1.0, 500, 12);
        let mut state = train_initial(&training, &cfg).unwrap();
        let prior = state.model().components()[state.bob_component()].mean.clone();
        assert!(test.iter().take(500).all(|r| r.true_sender == Sender::Eve));
        for r in test.iter().take(500) {
            state.classify(&r.estimate).unwrap();
        }
        let chosen = state.bob_component();
        let dist = |k: usize| (&state.model().components()[k].mean - &prior).norm();
        for k in 0..state.model().k() {
            assert!(dist(chosen) <= dist(k));
        }
    }

    #[test]
    fn snapshot_round_trip_preserves_state_and_decisions() {
        let (training, test, cfg) = scenario(0.5, 100, 12);
        let mut state = train_initial(&training, &cfg).unwrap();
        for r in test.iter().take(130) {
            state.classify(&r.estimate).unwrap();
        }
        let back = AuthenticatorState::from_json(&state.to_json().unwrap()).unwrap();
        assert_eq!(back, state);
        let mut a = state.clone();
        let mut b = back;
        for r in test.iter().skip(130) {
            assert_eq!(a.classify(&r.estimate).unwrap(), b.classify(&r.estimate).unwrap());
        }
    }

    #[test]
    fn corrupted_snapshot_names_key() {
        let (training, _, cfg) = scenario(0.5, 100, 12);
        let state = train_initial(&training, &cfg).unwrap();
        let text = state.to_json().unwrap().replace("\"bob_component\"", "\"bob_comp\"");
        let err = AuthenticatorState::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("bob_comp"), "{err}");
    }
}
