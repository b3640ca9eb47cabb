//! Seeded synthetic registries with known generative parameters.

use serde::{Deserialize, Serialize};

use crate::baselines::{from_loss, PowerLawParams};
use crate::error::{invalid, Result};
use crate::registry::{
    Categorical, FeatureKey, MetricKind, ModelRecord, Registry, ScoreRecord, TaskSpec,
};
use crate::rng::{CounterRng, PRNG_ID};

/// Noise-free part of the score as a function of scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Response {
    /// `a + b·log10 N + c·log10 D`, with D in raw tokens.
    LogLinear { a: f64, b: f64, c: f64 },
    /// The power law, mapped from loss to score by the task polarity.
    PowerLaw { params: PowerLawParams },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Effect {
    /// Adds `shift` to models holding `level` of a categorical feature.
    Level { feature: String, level: String, shift: f64 },
    /// Adds `coef · value` for a numeric or generation feature; missing adds 0.
    Linear { feature: String, coef: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_models: usize,
    pub task: TaskSpec,
    /// Uniform range of log10 parameter count.
    pub log10_params: (f64, f64),
    /// Uniform range of log10 training tokens in billions.
    pub log10_tokens_billions: (f64, f64),
    pub response: Response,
    #[serde(default)]
    pub effects: Vec<Effect>,
    pub noise_sd: f64,
    /// Chance that each optional field is left undocumented.
    pub missing_rate: f64,
}

impl SynthSpec {
    /// Accuracy task with a log-linear response and no extra effects.
    pub fn log_linear(n_models: usize, a: f64, b: f64, c: f64) -> Self {
        Self {
            n_models,
            task: TaskSpec::new("synthetic", 0, MetricKind::Accuracy).with_items(1000),
            log10_params: (8.0, 11.0),
            log10_tokens_billions: (1.5, 3.5),
            response: Response::LogLinear { a, b, c },
            effects: Vec::new(),
            noise_sd: 0.0,
            missing_rate: 0.0,
        }
    }

    pub fn with_effect(mut self, e: Effect) -> Self {
        self.effects.push(e);
        self
    }

    pub fn with_noise(mut self, sd: f64) -> Self {
        self.noise_sd = sd;
        self
    }

    pub fn with_missing_rate(mut self, r: f64) -> Self {
        self.missing_rate = r;
        self
    }

    pub fn with_task(mut self, task: TaskSpec) -> Self {
        self.task = task;
        self
    }

    pub fn with_response(mut self, r: Response) -> Self {
        self.response = r;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_models == 0 {
            return Err(invalid("n_models must be positive"));
        }
        if !(self.noise_sd >= 0.0 && (0.0..1.0).contains(&self.missing_rate)) {
            return Err(invalid("noise_sd must be >= 0 and missing_rate in [0, 1)"));
        }
        for (lo, hi) in [self.log10_params, self.log10_tokens_billions] {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(invalid("scale ranges must be finite with lo <= hi"));
            }
        }
        for e in &self.effects {
            match e {
                Effect::Level { feature, level, .. } => {
                    let c = Categorical::from_name(feature)
                        .ok_or_else(|| invalid(format!("{feature:?} is not a categorical feature")))?;
                    c.parse_level(level).map_err(invalid)?;
                }
                Effect::Linear { feature, .. } => match FeatureKey::parse(feature) {
                    Some(FeatureKey::Numeric(_)) | Some(FeatureKey::Gen(_)) => {}
                    _ => return Err(invalid(format!("{feature:?} is not a numeric feature"))),
                },
            }
        }
        self.task.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub seed: u64,
    pub prng: String,
    /// Score before noise and clamping, per model in registry order.
    pub noiseless: Vec<f64>,
    /// Scores that fell outside the metric range and were clamped.
    pub n_clamped: usize,
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub registry: Registry,
    pub scores: Vec<ScoreRecord>,
    pub truth: GroundTruth,
}

const GEN_FEATURES: [&str; 4] = ["question_words_ratio", "entropy_mean", "edu_classifier_mean", "domain_code_pct_mean"];

fn maybe<T>(rng: &mut CounterRng, rate: f64, v: T) -> Option<T> {
    (rng.next_f64() >= rate).then_some(v)
}

fn draw_record(rng: &mut CounterRng, spec: &SynthSpec, i: usize) -> ModelRecord {
    let params = 10f64.powf(rng.uniform(spec.log10_params.0, spec.log10_params.1));
    let tokens = 10f64.powf(rng.uniform(spec.log10_tokens_billions.0, spec.log10_tokens_billions.1));
    let mut r = ModelRecord::new(format!("synth-{i:03}"), params, tokens);
    r.organization = format!("org-{}", rng.below(8));
    let miss = spec.missing_rate;

    let heads = 8u64 << rng.below(4);
    let dimension = heads * 64 * (1 + rng.below(4));
    let mlp_ratio = [2.667, 4.0, 3.5][rng.below(3) as usize];
    let sequence_length = 512u64 << rng.below(4);
    let batch_instances = 256u64 << rng.below(5);
    r.arch.num_heads = maybe(rng, miss, heads);
    r.arch.dimension = maybe(rng, miss, dimension);
    r.arch.mlp_ratio = maybe(rng, miss, mlp_ratio);
    r.arch.sequence_length = maybe(rng, miss, sequence_length);
    r.arch.batch_instances = maybe(rng, miss, batch_instances);
    for c in Categorical::ALL {
        let levels = c.levels();
        let pick = levels[rng.below(levels.len() as u64) as usize];
        let level = maybe(rng, miss, pick);
        r.arch.set_level(c, level).expect("level from vocabulary");
    }

    // domain shares: random split of up to 100%
    let w: Vec<f64> = (0..6).map(|_| rng.next_f64() + 0.05).collect();
    let total: f64 = w.iter().sum();
    let scale = 100.0 * rng.uniform(0.9, 1.0) / total;
    let english = rng.uniform(50.0, 100.0);
    r.data.pct_web = maybe(rng, miss, w[0] * scale);
    r.data.pct_code = maybe(rng, miss, w[1] * scale);
    r.data.pct_books = maybe(rng, miss, w[2] * scale);
    r.data.pct_reference = maybe(rng, miss, w[3] * scale);
    r.data.pct_academic = maybe(rng, miss, w[4] * scale);
    r.data.pct_english = maybe(rng, miss, english);

    let gen_values = [
        rng.uniform(0.0, 400.0),
        rng.uniform(2.0, 8.0),
        rng.uniform(-1.0, 3.0),
        rng.uniform(0.0, 40.0),
    ];
    for (name, v) in GEN_FEATURES.iter().zip(gen_values) {
        if let Some(v) = maybe(rng, miss, v) {
            r.gen.insert(name.to_string(), v);
        }
    }
    r
}

fn feature_value(r: &ModelRecord, name: &str) -> Option<f64> {
    match FeatureKey::parse(name)? {
        FeatureKey::Numeric(f) => f.value(r),
        FeatureKey::Gen(g) => r.gen.get(&g).copied(),
        FeatureKey::Categorical(_) => None,
    }
}

fn noiseless_score(spec: &SynthSpec, r: &ModelRecord) -> f64 {
    let n = r.arch.total_params;
    let d = r.total_tokens();
    let mut s = match spec.response {
        Response::LogLinear { a, b, c } => a + b * n.log10() + c * d.log10(),
        Response::PowerLaw { params } => {
            let loss = ((params.nc / n).powf(params.alpha_n / params.alpha_d) + params.dc / d).powf(params.alpha_d);
            from_loss(loss, spec.task.polarity)
        }
    };
    for e in &spec.effects {
        match e {
            Effect::Level { feature, level, shift } => {
                let c = Categorical::from_name(feature).expect("validated");
                if r.arch.level(c) == Some(level.as_str()) {
                    s += shift;
                }
            }
            Effect::Linear { feature, coef } => s += coef * feature_value(r, feature).unwrap_or(0.0),
        }
    }
    s
}

/// Generate a registry, its scores and the ground truth that produced them.
pub fn gen_registry(spec: &SynthSpec, seed: u64) -> Result<Synthetic> {
    spec.validate()?;
    let (lo, hi) = spec.task.metric_kind.range();
    let mut records = Vec::with_capacity(spec.n_models);
    let mut scores = Vec::with_capacity(spec.n_models);
    let mut noiseless = Vec::with_capacity(spec.n_models);
    let mut n_clamped = 0;
    for i in 0..spec.n_models {
        let mut rng = CounterRng::substream(seed, "synth-model", i as u64);
        let r = draw_record(&mut rng, spec, i);
        let clean = noiseless_score(spec, &r);
        let noisy = clean + spec.noise_sd * rng.normal();
        let value = noisy.clamp(lo, hi);
        if value != noisy {
            n_clamped += 1;
        }
        scores.push(ScoreRecord {
            model_id: r.model_id.clone(),
            task_id: spec.task.task_id.clone(),
            shots: spec.task.shots,
            metric_kind: spec.task.metric_kind,
            value,
        });
        noiseless.push(clean);
        records.push(r);
    }
    Ok(Synthetic {
        registry: Registry::from_records(records)?,
        scores,
        truth: GroundTruth {
            spec: spec.clone(),
            seed,
            prng: PRNG_ID.to_string(),
            noiseless,
            n_clamped,
        },
    })
}

impl Synthetic {
    pub fn dataset(&self) -> Result<crate::registry::Dataset> {
        Ok(crate::registry::join_scores(&self.registry, &self.scores, &self.truth.spec.task)?)
    }
}
