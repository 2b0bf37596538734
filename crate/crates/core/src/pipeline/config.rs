use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::clustering::{ClusterModelConfig, KernelScale};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::graph_learner::{GraphLearnerConfig, NtXentDenominator};
use crate::ingest::SynthConfig;
use crate::spatial::MoranWeights;

/// Which per-cell embedding the similarity report compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimilarityEmbedding {
    /// Autoencoder bottleneck.
    #[default]
    Bottleneck,
    /// Soft cluster assignment.
    Assignment,
}

pub const DEFAULT_MIN_CITY_POPULATION: f64 = 25_000.0;
pub const DEFAULT_PERMUTATIONS: usize = 999;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub cells_csv: Option<PathBuf>,
    pub occurrences_csv: Option<PathBuf>,
    pub features_csv: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Seeds every random draw of every stage.
    pub seed: u64,
    /// Width of BF; inferred from the largest week index when unset.
    pub weeks: Option<usize>,
    pub synth: SynthConfig,
    pub graph: GraphLearnerConfig,
    pub cluster: ClusterModelConfig,
    pub min_city_population: f64,
    pub permutations: usize,
    pub moran_weights: MoranWeights,
    pub similarity_embedding: SimilarityEmbedding,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cells_csv: None,
            occurrences_csv: None,
            features_csv: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
            weeks: None,
            synth: SynthConfig::default(),
            graph: GraphLearnerConfig::default(),
            cluster: ClusterModelConfig::default(),
            min_city_population: DEFAULT_MIN_CITY_POPULATION,
            permutations: DEFAULT_PERMUTATIONS,
            moran_weights: MoranWeights::Raw,
            similarity_embedding: SimilarityEmbedding::Bottleneck,
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

fn flag(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("invalid value `{value}` for `{key}`")),
    }
}

fn widths(value: &str) -> std::result::Result<Vec<usize>, String> {
    value
        .split(',')
        .map(|w| w.trim().parse().map_err(|_| format!("invalid layer width `{w}`")))
        .collect()
}

impl PipelineConfig {
    /// Sets one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key.trim() {
            "cells_csv" => self.cells_csv = Some(PathBuf::from(v)),
            "occurrences_csv" => self.occurrences_csv = Some(PathBuf::from(v)),
            "features_csv" => self.features_csv = Some(PathBuf::from(v)),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "seed" => self.seed = num(key, v)?,
            "weeks" => self.weeks = Some(num(key, v)?),
            "synth_cells" => self.synth.cells = num(key, v)?,
            "synth_weeks" => self.synth.weeks = num(key, v)?,
            "synth_clusters" => self.synth.planted_clusters = num(key, v)?,
            "synth_separation" => self.synth.separation = num(key, v)?,
            "synth_contiguous" => self.synth.spatially_contiguous = flag(key, v)?,
            "graph_layers" => self.graph.embedding_layers = num(key, v)?,
            "knn" => self.graph.knn_k = num(key, v)?,
            "temperature" => self.graph.temperature = num(key, v)?,
            "mask_prob" => self.graph.mask_prob = num(key, v)?,
            "edge_drop_prob" => self.graph.edge_drop_prob = num(key, v)?,
            "tau" => self.graph.tau = num(key, v)?,
            "graph_encoder_width" => self.graph.encoder_width = num(key, v)?,
            "graph_projector_width" => self.graph.projector_width = num(key, v)?,
            "graph_epochs" => self.graph.epochs = num(key, v)?,
            "graph_learning_rate" => self.graph.learning_rate = num(key, v)?,
            "graph_threshold" => self.graph.threshold = num(key, v)?,
            "contrastive_denominator" => {
                self.graph.denominator = match v {
                    "standard" => NtXentDenominator::Standard,
                    "negatives_only" => NtXentDenominator::NegativesOnly,
                    _ => return Err(format!("invalid value `{v}` for `{key}`")),
                }
            }
            "hidden" => self.cluster.hidden = widths(v)?,
            "k" => self.cluster.clusters = num(key, v)?,
            "fusion" => self.cluster.fusion = num(key, v)?,
            "dof" => self.cluster.dof = num(key, v)?,
            "kernel_scale" => {
                self.cluster.kernel_scale = match v {
                    "dof" => KernelScale::DegreesOfFreedom,
                    "half" => KernelScale::Half,
                    _ => return Err(format!("invalid value `{v}` for `{key}`")),
                }
            }
            "alpha" => self.cluster.alpha = num(key, v)?,
            "beta" => self.cluster.beta = num(key, v)?,
            "pretrain_epochs" => self.cluster.pretrain_epochs = num(key, v)?,
            "epochs" => self.cluster.epochs = num(key, v)?,
            "learning_rate" => self.cluster.learning_rate = num(key, v)?,
            "kmeans_restarts" => self.cluster.kmeans_restarts = num(key, v)?,
            "min_city_pop" => self.min_city_population = num(key, v)?,
            "perms" => self.permutations = num(key, v)?,
            "moran_weights" => {
                self.moran_weights = match v {
                    "raw" => MoranWeights::Raw,
                    "row" => MoranWeights::RowStandardized,
                    _ => return Err(format!("invalid value `{v}` for `{key}`")),
                }
            }
            "similarity_embedding" => {
                self.similarity_embedding = match v {
                    "h" => SimilarityEmbedding::Bottleneck,
                    "z" => SimilarityEmbedding::Assignment,
                    _ => return Err(format!("invalid value `{v}` for `{key}`")),
                }
            }
            other => return Err(format!("unknown setting `{other}`")),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::schema(source, format!("line {}: expected `key = value`", n + 1)));
            };
            self.set(k, v)
                .map_err(|e| Error::schema(source, format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(&fsutil::read_to_string(path)?, &path.display().to_string())?;
        Ok(cfg)
    }

    /// Every setting that affects results, in a fixed order. Paths are left
    /// out; inputs are identified by content in the manifest.
    pub fn canonical_entries(&self) -> Vec<(&'static str, String)> {
        let g = &self.graph;
        let c = &self.cluster;
        let s = &self.synth;
        vec![
            ("seed", self.seed.to_string()),
            ("weeks", self.weeks.map(|w| w.to_string()).unwrap_or_default()),
            ("synth_cells", s.cells.to_string()),
            ("synth_weeks", s.weeks.to_string()),
            ("synth_clusters", s.planted_clusters.to_string()),
            ("synth_separation", s.separation.to_string()),
            ("synth_contiguous", s.spatially_contiguous.to_string()),
            ("graph_layers", g.embedding_layers.to_string()),
            ("knn", g.knn_k.to_string()),
            ("temperature", g.temperature.to_string()),
            ("mask_prob", g.mask_prob.to_string()),
            ("edge_drop_prob", g.edge_drop_prob.to_string()),
            ("tau", g.tau.to_string()),
            ("graph_encoder_width", g.encoder_width.to_string()),
            ("graph_projector_width", g.projector_width.to_string()),
            ("graph_epochs", g.epochs.to_string()),
            ("graph_learning_rate", g.learning_rate.to_string()),
            ("graph_threshold", g.threshold.to_string()),
            (
                "contrastive_denominator",
                match g.denominator {
                    NtXentDenominator::Standard => "standard",
                    NtXentDenominator::NegativesOnly => "negatives_only",
                }
                .to_string(),
            ),
            ("hidden", c.hidden.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")),
            ("k", c.clusters.to_string()),
            ("fusion", c.fusion.to_string()),
            ("dof", c.dof.to_string()),
            (
                "kernel_scale",
                match c.kernel_scale {
                    KernelScale::DegreesOfFreedom => "dof",
                    KernelScale::Half => "half",
                }
                .to_string(),
            ),
            ("alpha", c.alpha.to_string()),
            ("beta", c.beta.to_string()),
            ("pretrain_epochs", c.pretrain_epochs.to_string()),
            ("epochs", c.epochs.to_string()),
            ("learning_rate", c.learning_rate.to_string()),
            ("kmeans_restarts", c.kmeans_restarts.to_string()),
            ("min_city_pop", self.min_city_population.to_string()),
            ("perms", self.permutations.to_string()),
            (
                "moran_weights",
                match self.moran_weights {
                    MoranWeights::Raw => "raw",
                    MoranWeights::RowStandardized => "row",
                }
                .to_string(),
            ),
            (
                "similarity_embedding",
                match self.similarity_embedding {
                    SimilarityEmbedding::Bottleneck => "h",
                    SimilarityEmbedding::Assignment => "z",
                }
                .to_string(),
            ),
        ]
    }

    pub fn canonical_text(&self) -> String {
        self.canonical_entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    pub fn graph_config(&self) -> GraphLearnerConfig {
        GraphLearnerConfig {
            seed: self.seed,
            ..self.graph.clone()
        }
    }

    pub fn cluster_config(&self) -> ClusterModelConfig {
        ClusterModelConfig {
            seed: self.seed,
            ..self.cluster.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.graph_config().validate()?;
        self.cluster_config().validate()?;
        if self.permutations == 0 {
            return Err(Error::invalid("permutation count must be at least 1"));
        }
        if !(self.min_city_population >= 0.0) {
            return Err(Error::invalid("population threshold must be non-negative"));
        }
        Ok(())
    }
}
