//! Deterministic synthetic flow data whose per-client class mix follows the
//! TON-IoT ten-client distribution at a configurable scale.
//!
//! Numeric features are class-conditional Gaussians; categorical features
//! draw from class-specific category weights. Counts depend only on the
//! profile, feature values on the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{Column, ColumnKind, ClientPartition, FeatureKind, FeatureSchema, FlowRecord, LabelIndex, RawDataset, Value};
use crate::seed::derive_seed;

/// Per-client class counts after preprocessing, columns in
/// [`crate::flow::TON_IOT_CLASSES`] order.
pub const TON10_COUNTS: [[u64; 10]; 10] = [
    [815, 3_502_650, 576, 26_460, 192_130, 16_202, 0, 48_052, 0, 0],
    [636_963, 993_069, 285_436, 278_833, 303_583, 149_315, 0, 93_129, 0, 2],
    [1_167_320, 6_906, 344_136, 864_611, 13_108, 48_046, 0, 91_740, 0, 7],
    [568_501, 465_525, 280_915, 95_029, 399_568, 79_285, 0, 95_323, 0, 3],
    [13_382, 630_127, 604_691, 2_883, 86_721, 27_304, 18, 12_889, 0, 564],
    [1_161_124, 210, 0, 0, 0, 4_508, 0, 0, 0, 0],
    [412_493, 452_559, 0, 4_444, 116_463, 22_154, 0, 0, 0, 0],
    [680_446, 0, 0, 0, 0, 22, 0, 0, 0, 12],
    [336_770, 3_642, 0, 37_835, 181_710, 21_745, 133, 0, 21_629, 1],
    [384, 0, 0, 0, 0, 0, 423_122, 3, 1_737, 0],
];

/// Whole-dataset class totals of TON-IoT, same column order.
pub const TON_TOTALS: [u64; 10] = [
    7_140_161, 6_165_008, 2_108_944, 1_718_568, 3_375_328, 796_380, 508_116, 452_659, 72_805, 1_052,
];

pub const N_FEATURES: usize = 38;
const CATEGORICAL: [(&str, &[&str]); 4] = [
    ("proto", &["icmp", "tcp", "udp"]),
    ("service", &["-", "dns", "ftp", "http", "smtp", "ssl"]),
    ("conn_state", &["OTH", "REJ", "RSTO", "S0", "S1", "SF", "SH"]),
    ("http_method", &["-", "GET", "HEAD", "POST"]),
];
/// Distinct residual IPs; each stays well below the smallest client.
const RESIDUAL_IPS: usize = 24;

pub const DEFAULT_SEPARATION: f64 = 1.0;
pub const DEFAULT_NOISE: f64 = 1.0;

/// Settings of the desk benchmark profile, see [`profile_benchmark`].
pub const BENCH_MODES: usize = 64;
pub const BENCH_SEPARATION: f64 = 2.0;
pub const BENCH_AFFINITY: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("scale must be positive and finite, got {0}")]
    Scale(f64),
    #[error("invalid profile: {0}")]
    Profile(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSpec {
    /// Index into the feature vector.
    pub feature: usize,
    pub categories: Vec<String>,
    /// Per class, one weight per category (sums to 1).
    pub class_weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewProfile {
    /// `counts[client][class]`
    pub counts: Vec<Vec<u64>>,
    /// Class counts of the server-side pool outside the clients.
    pub residual: Vec<u64>,
    pub schema: FeatureSchema,
    /// Per class, one or more modes, each a mean per numeric feature (in
    /// feature order). Samples pick a mode uniformly.
    pub class_means: Vec<Vec<Vec<f64>>>,
    pub noise_std: f64,
    pub categorical: Vec<CategoricalSpec>,
    /// Probability that a residual record goes to one of the three residual
    /// IPs its class favours rather than to a uniformly chosen one. At 0 the
    /// residual is dealt round-robin.
    #[serde(default)]
    pub residual_affinity: f64,
}

fn scale_count(entry: u64, scale: f64) -> u64 {
    (entry as f64 * scale + 0.5).floor() as u64
}

/// The schema of generated data: `dst_ip`, 34 numeric and 4 categorical
/// features, and the `type` label over the ten TON-IoT classes.
pub fn synthetic_schema() -> FeatureSchema {
    let mut columns = vec![Column {
        name: "dst_ip".into(),
        kind: ColumnKind::Drop,
    }];
    for (name, _) in CATEGORICAL {
        columns.push(Column {
            name: name.into(),
            kind: ColumnKind::Categorical,
        });
    }
    for j in 0..N_FEATURES - CATEGORICAL.len() {
        columns.push(Column {
            name: format!("num_{j:02}"),
            kind: ColumnKind::Numeric,
        });
    }
    columns.push(Column {
        name: "type".into(),
        kind: ColumnKind::Label,
    });
    FeatureSchema::new(columns, "dst_ip", LabelIndex::ton_iot()).expect("static schema is valid")
}

/// Ten-client profile at `scale` with default feature parameters.
pub fn profile_ton10(scale: f64) -> Result<SkewProfile, SynthError> {
    profile_ton10_with(scale, DEFAULT_SEPARATION, DEFAULT_NOISE)
}

/// Ten-client profile with explicit mean spread and noise level.
pub fn profile_ton10_with(scale: f64, separation: f64, noise_std: f64) -> Result<SkewProfile, SynthError> {
    profile_ton10_modes(scale, separation, noise_std, 1)
}

/// The ten-client counts with multi-modal classes and a class-skewed
/// residual: each class is a mixture of [`BENCH_MODES`] Gaussians, so its
/// decision region is not linear, and every residual IP sees a lopsided class
/// mix, like a real destination host.
pub fn profile_benchmark(scale: f64) -> Result<SkewProfile, SynthError> {
    let mut p = profile_ton10_modes(scale, BENCH_SEPARATION, DEFAULT_NOISE, BENCH_MODES)?;
    p.residual_affinity = BENCH_AFFINITY;
    Ok(p)
}

/// Like [`profile_ton10_with`], with `modes` Gaussian modes per class.
pub fn profile_ton10_modes(scale: f64, separation: f64, noise_std: f64, modes: usize) -> Result<SkewProfile, SynthError> {
    if modes == 0 {
        return Err(SynthError::Profile("at least one mode per class is required".into()));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(SynthError::Scale(scale));
    }
    let counts = TON10_COUNTS
        .iter()
        .map(|row| row.iter().map(|&e| scale_count(e, scale)).collect())
        .collect();
    let residual = ton10_residual_counts()
        .iter()
        .map(|&e| scale_count(e, scale))
        .collect();
    let schema = synthetic_schema();
    let n_classes = schema.n_classes();
    let n_numeric = schema
        .feature_kinds()
        .iter()
        .filter(|k| **k == FeatureKind::Numeric)
        .count();
    let class_means = (0..n_classes)
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0x0C1A_55E5, &[c as u64]));
            (0..modes)
                .map(|_| {
                    (0..n_numeric)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            separation * z
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let categorical = CATEGORICAL
        .iter()
        .enumerate()
        .map(|(j, (_, cats))| CategoricalSpec {
            feature: j,
            categories: cats.iter().map(|s| s.to_string()).collect(),
            class_weights: (0..n_classes)
                .map(|c| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0xCA7E_6041, &[j as u64, c as u64]));
                    let raw: Vec<f64> = cats.iter().map(|_| rng.random::<f64>().powi(3) + 0.01).collect();
                    let s: f64 = raw.iter().sum();
                    raw.into_iter().map(|w| w / s).collect()
                })
                .collect(),
        })
        .collect();
    let profile = SkewProfile {
        counts,
        residual,
        schema,
        class_means,
        noise_std,
        categorical,
        residual_affinity: 0.0,
    };
    profile.validate()?;
    Ok(profile)
}

/// Whole-dataset totals minus the ten clients' column sums: the class mix of
/// traffic to every other destination IP.
pub fn ton10_residual_counts() -> [u64; 10] {
    let mut out = TON_TOTALS;
    for row in TON10_COUNTS {
        for (o, v) in out.iter_mut().zip(row) {
            *o -= v;
        }
    }
    out
}

impl SkewProfile {
    pub fn n_clients(&self) -> usize {
        self.counts.len()
    }

    pub fn n_classes(&self) -> usize {
        self.schema.n_classes()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let n_classes = self.n_classes();
        if self.counts.is_empty() {
            return Err(SynthError::Profile("no clients".into()));
        }
        for (i, row) in self.counts.iter().enumerate() {
            if row.len() != n_classes {
                return Err(SynthError::Profile(format!("client {} has {} class counts", i + 1, row.len())));
            }
            if row.iter().sum::<u64>() == 0 {
                return Err(SynthError::Profile(format!("client {} has no samples at this scale", i + 1)));
            }
        }
        if self.residual.len() != n_classes {
            return Err(SynthError::Profile("residual counts have the wrong length".into()));
        }
        let kinds = self.schema.feature_kinds();
        let n_numeric = kinds.iter().filter(|k| **k == FeatureKind::Numeric).count();
        if self.class_means.len() != n_classes
            || self
                .class_means
                .iter()
                .any(|modes| modes.is_empty() || modes.iter().any(|m| m.len() != n_numeric))
        {
            return Err(SynthError::Profile("class means do not match the schema".into()));
        }
        for spec in &self.categorical {
            if kinds.get(spec.feature) != Some(&FeatureKind::Categorical) {
                return Err(SynthError::Profile(format!("feature {} is not categorical", spec.feature)));
            }
            if spec.class_weights.len() != n_classes
                || spec.class_weights.iter().any(|w| w.len() != spec.categories.len())
            {
                return Err(SynthError::Profile("categorical weights do not match".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.residual_affinity) {
            return Err(SynthError::Profile(format!(
                "residual affinity must lie in [0, 1], got {}",
                self.residual_affinity
            )));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(SynthError::Profile(format!("noise must be >= 0, got {}", self.noise_std)));
        }
        Ok(())
    }

    fn sample(&self, class: usize, dst_ip: &str, rng: &mut ChaCha8Rng) -> FlowRecord {
        let kinds = self.schema.feature_kinds();
        let mut features = vec![Value::Missing; kinds.len()];
        let modes = &self.class_means[class];
        let mode = if modes.len() > 1 { rng.random_range(0..modes.len()) } else { 0 };
        let mut means = modes[mode].iter();
        for (slot, kind) in features.iter_mut().zip(&kinds) {
            if *kind == FeatureKind::Numeric {
                let mu = means.next().expect("validated mean length");
                let z: f64 = StandardNormal.sample(rng);
                *slot = Value::Num(mu + self.noise_std * z);
            }
        }
        for spec in &self.categorical {
            let u: f64 = rng.random();
            let weights = &spec.class_weights[class];
            let mut acc = 0.0;
            let mut pick = weights.len() - 1;
            for (k, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            features[spec.feature] = Value::cat(&spec.categories[pick]);
        }
        FlowRecord {
            dst_ip: dst_ip.to_string(),
            features,
            label: class,
        }
    }
}

pub fn client_ip(client_id: usize) -> String {
    format!("10.0.0.{client_id}")
}

/// One unsplit partition per client; client `i` (1-based) has IP `10.0.0.i`.
pub fn generate(profile: &SkewProfile, seed: u64) -> Result<Vec<ClientPartition>, SynthError> {
    use rayon::prelude::*;
    profile.validate()?;
    Ok(profile
        .counts
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            let client_id = i + 1;
            let ip = client_ip(client_id);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[client_id as u64]));
            let mut records = Vec::with_capacity(row.iter().sum::<u64>() as usize);
            for (class, &n) in row.iter().enumerate() {
                for _ in 0..n {
                    records.push(profile.sample(class, &ip, &mut rng));
                }
            }
            ClientPartition::new(client_id, ip, records)
        })
        .collect())
}

/// The residual pool, spread over small IPs `10.0.1.j`.
pub fn generate_residual(profile: &SkewProfile, seed: u64) -> Result<RawDataset, SynthError> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5E5E_0000]));
    let ips: Vec<String> = (1..=RESIDUAL_IPS).map(|j| format!("10.0.1.{j}")).collect();
    let mut records = Vec::with_capacity(profile.residual.iter().sum::<u64>() as usize);
    let mut next = 0;
    for (class, &n) in profile.residual.iter().enumerate() {
        for _ in 0..n {
            let slot = if profile.residual_affinity == 0.0 {
                next % RESIDUAL_IPS
            } else if rng.random::<f64>() < profile.residual_affinity {
                (3 * class + rng.random_range(0..3)) % RESIDUAL_IPS
            } else {
                rng.random_range(0..RESIDUAL_IPS)
            };
            records.push(profile.sample(class, &ips[slot], &mut rng));
            next += 1;
        }
    }
    Ok(RawDataset::new(profile.schema.clone(), records))
}
