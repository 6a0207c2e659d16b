//! Static model profiling: parameter skewness, the eligibility gate, and the
//! network-cost-minimizing split point.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LayerKind, ModelGraph};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("skewness needs at least 2 layers, got {0}")]
    TooFewLayers(usize),
    #[error("all layer parameter sizes are zero")]
    AllZero,
    #[error("parameter size {0} is negative or not finite")]
    InvalidValue(f64),
    #[error("split search needs a nonempty layer list")]
    EmptyInput,
    #[error("length mismatch: {params} parameter sizes, {outputs} output sizes, {kinds} kinds")]
    LengthMismatch {
        params: usize,
        outputs: usize,
        kinds: usize,
    },
}

/// How the skewness factor treats the per-layer parameter sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkewnessMode {
    /// Third standardized moment of the layer index, weighted by each
    /// layer's share of the parameters. Negative when mass sits late.
    #[default]
    IndexWeighted,
    /// Population sample skewness of the parameter sizes themselves.
    LiteralValues,
}

impl std::str::FromStr for SkewnessMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "index_weighted" | "index-weighted" => Ok(SkewnessMode::IndexWeighted),
            "literal_values" | "literal-values" | "literal" => Ok(SkewnessMode::LiteralValues),
            other => Err(format!(
                "unknown skewness mode `{other}` (expected index_weighted or literal_values)"
            )),
        }
    }
}

pub const DEFAULT_THRESHOLD: f64 = -0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilerConfig {
    pub threshold_k: f64,
    pub skewness_mode: SkewnessMode,
}

impl Default for ProfilerConfig {
    fn default() -> Self {
        ProfilerConfig {
            threshold_k: DEFAULT_THRESHOLD,
            skewness_mode: SkewnessMode::IndexWeighted,
        }
    }
}

impl ProfilerConfig {
    pub fn with_threshold(threshold_k: f64) -> Self {
        ProfilerConfig {
            threshold_k,
            ..Self::default()
        }
    }

    /// Nonfatal configuration issues. The threshold is never adjusted.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.threshold_k.is_finite() {
            out.push(format!("threshold {} is not finite", self.threshold_k));
        } else if self.threshold_k >= 0.0 {
            out.push(format!(
                "threshold {} is not negative: models without left skew become eligible",
                self.threshold_k
            ));
        }
        out
    }
}

/// Third standardized moment of the per-layer parameter sizes.
///
/// Returns 0 when the second moment vanishes.
pub fn compute_skewness(params: &[f64], mode: SkewnessMode) -> Result<f64, ProfileError> {
    if params.len() < 2 {
        return Err(ProfileError::TooFewLayers(params.len()));
    }
    if let Some(&bad) = params.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(ProfileError::InvalidValue(bad));
    }
    let max = params.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(ProfileError::AllZero);
    }

    // (value, weight) pairs; weights sum to 1.
    let points: Vec<(f64, f64)> = match mode {
        SkewnessMode::IndexWeighted => {
            let total: f64 = params.iter().map(|p| p / max).sum();
            params
                .iter()
                .enumerate()
                .map(|(i, p)| ((i + 1) as f64, (p / max) / total))
                .collect()
        }
        SkewnessMode::LiteralValues => {
            if params.iter().all(|p| *p == params[0]) {
                return Ok(0.0);
            }
            let w = 1.0 / params.len() as f64;
            params.iter().map(|p| (p / max, w)).collect()
        }
    };

    let mean: f64 = points.iter().map(|(x, w)| x * w).sum();
    let (m2, m3) = points.iter().fold((0.0, 0.0), |(m2, m3), (x, w)| {
        let d = x - mean;
        (m2 + w * d * d, m3 + w * d * d * d)
    });
    let scale = points.iter().map(|(x, _)| x.abs()).fold(0.0, f64::max);
    if m2 <= (f64::EPSILON * scale).powi(2) {
        return Ok(0.0);
    }
    Ok(m3 / m2.powf(1.5))
}

/// True iff the model is skewed strictly beyond the threshold.
pub fn gate_eligibility(skewness: f64, config: &ProfilerConfig) -> bool {
    skewness < config.threshold_k
}

/// A chosen split: layers `1..=index` stay on workers, the rest move to the
/// PS machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub index: usize,
    pub cost_bytes: u64,
}

/// Per-candidate network cost `O_i + sum_{x<=i} P_x`, or `None` for a
/// boundary between two compute-demand layers.
pub fn split_costs(
    params: &[u64],
    outputs: &[u64],
    kinds: &[LayerKind],
) -> Result<Vec<Option<u64>>, ProfileError> {
    if params.len() != outputs.len() || params.len() != kinds.len() {
        return Err(ProfileError::LengthMismatch {
            params: params.len(),
            outputs: outputs.len(),
            kinds: kinds.len(),
        });
    }
    if params.is_empty() {
        return Err(ProfileError::EmptyInput);
    }
    let n = params.len();
    let mut prefix: u128 = 0;
    let mut costs = Vec::with_capacity(n);
    for i in 0..n {
        prefix += params[i] as u128;
        let blocked =
            i + 1 < n && kinds[i].is_compute_demand() && kinds[i + 1].is_compute_demand();
        costs.push(if blocked {
            None
        } else {
            Some(u64::try_from(outputs[i] as u128 + prefix).unwrap_or(u64::MAX))
        });
    }
    Ok(costs)
}

/// The feasible boundary with the smallest network cost; ties go to the
/// smallest index. `None` when every boundary is infeasible.
pub fn find_split(
    params: &[u64],
    outputs: &[u64],
    kinds: &[LayerKind],
) -> Result<Option<Split>, ProfileError> {
    let costs = split_costs(params, outputs, kinds)?;
    let mut best: Option<Split> = None;
    for (i, cost) in costs.into_iter().enumerate() {
        let Some(cost) = cost else { continue };
        if best.map_or(true, |b| cost < b.cost_bytes) {
            best = Some(Split {
                index: i + 1,
                cost_bytes: cost,
            });
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recommendation {
    /// Offload the layers behind the split to the PS machine.
    Ralp,
    /// Train on the standard parameter-server architecture.
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub model_name: String,
    pub batch_size: u64,
    pub bytes_per_element: u64,
    pub threshold_k: f64,
    pub skewness_mode: SkewnessMode,
    pub layer_names: Vec<String>,
    pub layer_kinds: Vec<LayerKind>,
    pub param_bytes: Vec<u64>,
    pub output_bytes: Vec<u64>,
    pub cumulative_params: Vec<u64>,
    pub total_param_bytes: u64,
    pub skewness: f64,
    pub eligible: bool,
    pub split_index: Option<usize>,
    pub split_layer: Option<String>,
    pub split_cost_bytes: Option<u64>,
    pub recommendation: Recommendation,
    pub note: String,
    pub warnings: Vec<String>,
}

impl ProfileReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile report serializes")
    }
}

/// Runs skewness, gate and split search over a model.
pub fn profile(model: &ModelGraph, config: &ProfilerConfig) -> Result<ProfileReport, ProfileError> {
    let param_bytes = model.param_bytes();
    let output_bytes = model.output_bytes();
    let kinds = model.kinds();
    let cumulative_params: Vec<u64> = param_bytes
        .iter()
        .scan(0u64, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let total = model.total_param_bytes();
    let n = model.num_layers();

    let degenerate = n < 2 || total == 0;
    let skewness = if degenerate {
        0.0
    } else {
        let values: Vec<f64> = param_bytes.iter().map(|&p| p as f64).collect();
        compute_skewness(&values, config.skewness_mode)?
    };
    let eligible = !degenerate && gate_eligibility(skewness, config);
    let split = if eligible {
        find_split(&param_bytes, &output_bytes, &kinds)?
    } else {
        None
    };
    // A model with no feasible split cannot be partitioned.
    let eligible = eligible && split.is_some();

    let (recommendation, note) = match split {
        _ if degenerate => (
            Recommendation::Baseline,
            "single-layer or parameterless model: no partitioning, training runs on the standard PS architecture".to_string(),
        ),
        None => (
            Recommendation::Baseline,
            format!(
                "skewness {skewness:.3} is not below threshold {}: no partitioning, training runs on the standard PS architecture",
                config.threshold_k
            ),
        ),
        Some(s) if s.index == n => (
            Recommendation::Baseline,
            "cheapest boundary is after the last layer: nothing to offload, training runs on the standard PS architecture".to_string(),
        ),
        Some(s) => (
            Recommendation::Ralp,
            format!(
                "layers 1..={} stay on workers, layers {}..={} run on the PS machine",
                s.index,
                s.index + 1,
                n
            ),
        ),
    };

    Ok(ProfileReport {
        model_name: model.name.clone(),
        batch_size: model.batch_size,
        bytes_per_element: model.bytes_per_element,
        threshold_k: config.threshold_k,
        skewness_mode: config.skewness_mode,
        layer_names: model.layers.iter().map(|l| l.name.clone()).collect(),
        layer_kinds: kinds,
        param_bytes,
        output_bytes,
        cumulative_params,
        total_param_bytes: total,
        skewness,
        eligible,
        split_index: split.map(|s| s.index),
        split_layer: split.map(|s| model.layers[s.index - 1].name.clone()),
        split_cost_bytes: split.map(|s| s.cost_bytes),
        recommendation,
        note,
        warnings: config.warnings(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Catalog, Hyperparams, ModelGraph, Shape};
    use LayerKind::*;

    /// Independent evaluation of the weighted index moments by explicit
    /// expansion of the sums.
    fn index_weighted_oracle(p: &[f64]) -> f64 {
        let total: f64 = p.iter().sum();
        let mut mu = 0.0;
        for (i, x) in p.iter().enumerate() {
            mu += (i as f64 + 1.0) * x / total;
        }
        let mut m2 = 0.0;
        let mut m3 = 0.0;
        for (i, x) in p.iter().enumerate() {
            let d = i as f64 + 1.0 - mu;
            m2 += x / total * d.powi(2);
            m3 += x / total * d.powi(3);
        }
        m3 / m2.powf(1.5)
    }

    #[test]
    fn two_layer_hand_value() {
        // weights 0.1/0.9, mean 1.9, m2 0.09, m3 -0.072
        let s = compute_skewness(&[1.0, 9.0], SkewnessMode::IndexWeighted).unwrap();
        assert!((s - (-0.072 / 0.09f64.powf(1.5))).abs() < 1e-9);
        assert!((s + 2.6666666666666665).abs() < 1e-9);
    }

    #[test]
    fn uniform_parameters_are_unskewed() {
        for mode in [SkewnessMode::IndexWeighted, SkewnessMode::LiteralValues] {
            for n in 2..20 {
                let s = compute_skewness(&vec![7.0; n], mode).unwrap();
                assert!(s.abs() < 1e-12, "{mode:?} n={n}: {s}");
            }
        }
    }

    #[test]
    fn literal_mode_matches_textbook_formula() {
        let p = [1.0f64, 2.0, 10.0];
        let n = 3.0;
        let mean = 13.0f64 / 3.0;
        let m2: f64 = p.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m3: f64 = p.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
        let s = compute_skewness(&p, SkewnessMode::LiteralValues).unwrap();
        assert!((s - m3 / m2.powf(1.5)).abs() < 1e-12);
        assert!(s > 0.0);
    }

    #[test]
    fn skewness_errors() {
        assert_eq!(
            compute_skewness(&[3.0], SkewnessMode::IndexWeighted),
            Err(ProfileError::TooFewLayers(1))
        );
        assert_eq!(
            compute_skewness(&[0.0, 0.0], SkewnessMode::LiteralValues),
            Err(ProfileError::AllZero)
        );
        assert!(matches!(
            compute_skewness(&[1.0, -1.0], SkewnessMode::IndexWeighted),
            Err(ProfileError::InvalidValue(_))
        ));
    }

    #[test]
    fn alexnet_matches_oracle() {
        let g = Catalog::bundled().lookup("alexnet").unwrap();
        let p: Vec<f64> = g.param_bytes().iter().map(|&x| x as f64).collect();
        let s = compute_skewness(&p, SkewnessMode::IndexWeighted).unwrap();
        assert!((s - index_weighted_oracle(&p)).abs() < 1e-9);
        assert!((s + 2.27).abs() < 0.01, "{s}");
    }

    #[test]
    fn gate_is_strict() {
        let k = ProfilerConfig::with_threshold(-0.5);
        assert!(gate_eligibility(-2.27, &k));
        assert!(!gate_eligibility(-0.3, &k));
        assert!(!gate_eligibility(-0.5, &k));
    }

    #[test]
    fn nonnegative_threshold_warns_without_altering() {
        let cfg = ProfilerConfig::with_threshold(0.5);
        assert_eq!(cfg.warnings().len(), 1);
        assert_eq!(cfg.threshold_k, 0.5);
        assert!(ProfilerConfig::default().warnings().is_empty());
    }

    #[test]
    fn split_hand_example() {
        // candidates 110, 70, 101
        let s = find_split(&[10, 10, 80], &[100, 50, 1], &[Convolution, Pooling, FullyConnected])
            .unwrap()
            .unwrap();
        assert_eq!(s, Split { index: 2, cost_bytes: 70 });
    }

    #[test]
    fn single_layer_split() {
        let s = find_split(&[5], &[3], &[FullyConnected]).unwrap().unwrap();
        assert_eq!(s.index, 1);
        assert_eq!(s.cost_bytes, 8);
    }

    #[test]
    fn conv_conv_boundary_excluded_and_ties_go_low() {
        // Boundary 1 is cheapest but lies between two convolutions.
        let s = find_split(&[1, 1, 1, 1], &[0, 9, 5, 5], &[Convolution, Convolution, Pooling, Pooling])
            .unwrap()
            .unwrap();
        // candidates: -, 11, 8, 9
        assert_eq!(s.index, 3);
        let t = find_split(&[0, 0], &[4, 4], &[Pooling, Pooling]).unwrap().unwrap();
        assert_eq!(t.index, 1);
    }

    #[test]
    fn split_input_errors() {
        assert_eq!(find_split(&[], &[], &[]), Err(ProfileError::EmptyInput));
        assert!(matches!(
            find_split(&[1], &[1, 2], &[Pooling]),
            Err(ProfileError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn vgg11_splits_before_first_fc() {
        let g = Catalog::bundled().lookup("vgg11").unwrap();
        let r = profile(&g, &ProfilerConfig::default()).unwrap();
        assert!(r.eligible);
        let idx = r.split_index.unwrap();
        assert_eq!(r.split_layer.as_deref(), Some("pool5"));
        assert_eq!(g.layers[idx].kind, FullyConnected);
        assert_eq!(r.recommendation, Recommendation::Ralp);
    }

    #[test]
    fn googlenet_not_eligible_at_minus_one_and_a_half() {
        let g = Catalog::bundled().lookup("googlenet").unwrap();
        let r = profile(&g, &ProfilerConfig::with_threshold(-1.5)).unwrap();
        assert!(!r.eligible);
        assert!(r.split_index.is_none() && r.split_cost_bytes.is_none());
        assert_eq!(r.recommendation, Recommendation::Baseline);
    }

    #[test]
    fn uniform_model_not_eligible() {
        let layers = (0..4)
            .map(|i| {
                (
                    format!("fc{i}"),
                    Hyperparams::FullyConnected {
                        inputs: 8,
                        outputs: 8,
                    },
                )
            })
            .collect();
        let g = ModelGraph::from_layers("u", Shape::Flat(8), 1, 4, layers).unwrap();
        let r = profile(&g, &ProfilerConfig::default()).unwrap();
        assert!(r.skewness.abs() < 1e-12);
        assert!(!r.eligible);
    }

    #[test]
    fn degenerate_models_short_circuit() {
        let g = ModelGraph::from_layers(
            "one",
            Shape::Flat(4),
            1,
            4,
            vec![("fc".into(), Hyperparams::FullyConnected { inputs: 4, outputs: 2 })],
        )
        .unwrap();
        let r = profile(&g, &ProfilerConfig::with_threshold(1.0)).unwrap();
        assert!(!r.eligible && r.split_index.is_none());
        assert_eq!(r.skewness, 0.0);
    }

    #[test]
    fn report_json_has_fixed_fields() {
        let g = Catalog::bundled().lookup("lenet").unwrap();
        let r = profile(&g, &ProfilerConfig::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in [
            "model_name",
            "param_bytes",
            "output_bytes",
            "cumulative_params",
            "skewness",
            "eligible",
            "split_index",
            "split_cost_bytes",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: ProfileReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
