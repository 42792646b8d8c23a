//! Analytic predictors with closed-form responses to token removal.

use super::{ModelError, Predictor, TokenizedImage};

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Two-class predictor whose class-1 confidence is `sigmoid(weight * v)`,
/// where `v` is the mean pixel value over the present signal tokens
/// (`v = 0` when none are present). Every other token is ignored.
#[derive(Debug, Clone)]
pub struct PlantedPredictor {
    model_id: String,
    signal: Vec<usize>,
    weight: f64,
}

impl PlantedPredictor {
    pub fn new(
        model_id: impl Into<String>,
        signal_tokens: impl IntoIterator<Item = usize>,
        weight: f64,
    ) -> Result<Self, ModelError> {
        let mut signal: Vec<usize> = signal_tokens.into_iter().collect();
        signal.sort_unstable();
        signal.dedup();
        if signal.is_empty() {
            return Err(ModelError::InvalidConfig(
                "planted predictor needs signal tokens".into(),
            ));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(ModelError::InvalidConfig(format!(
                "planted weight must be positive, got {weight}"
            )));
        }
        Ok(Self {
            model_id: model_id.into(),
            signal,
            weight,
        })
    }

    pub fn signal_tokens(&self) -> &[usize] {
        &self.signal
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Mean pixel value over present signal tokens, 0 if none survive.
    pub fn signal_level(&self, img: &TokenizedImage, present: &[usize]) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for &k in &self.signal {
            if present.binary_search(&k).is_ok() {
                sum += img.token(k).iter().sum::<f64>();
                count += img.token(k).len();
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }
}

impl Predictor for PlantedPredictor {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn n_classes(&self) -> usize {
        2
    }

    fn evaluate(&self, img: &TokenizedImage, present: &[usize]) -> Result<Vec<f64>, ModelError> {
        if let Some(&k) = self.signal.last() {
            img.grid.check_index(k).map_err(|_| ModelError::BadTokenSet {
                n_tokens: img.n_tokens(),
            })?;
        }
        let c1 = sigmoid(self.weight * self.signal_level(img, present));
        Ok(vec![1.0 - c1, c1])
    }
}

/// Planted two-class predictor with model id `"planted"`.
pub fn planted_predictor(
    signal_tokens: impl IntoIterator<Item = usize>,
    weight: f64,
) -> Result<PlantedPredictor, ModelError> {
    PlantedPredictor::new("planted", signal_tokens, weight)
}

/// Predictor that always returns the uniform distribution.
#[derive(Debug, Clone)]
pub struct UniformPredictor {
    model_id: String,
    n_classes: usize,
}

impl UniformPredictor {
    pub fn new(model_id: impl Into<String>, n_classes: usize) -> Self {
        Self {
            model_id: model_id.into(),
            n_classes: n_classes.max(1),
        }
    }
}

impl Predictor for UniformPredictor {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn evaluate(&self, _img: &TokenizedImage, _present: &[usize]) -> Result<Vec<f64>, ModelError> {
        Ok(vec![1.0 / self.n_classes as f64; self.n_classes])
    }
}
