//! File-to-file orchestration of the rating pipeline. Each stage reads the
//! files of the stages before it, so running stages one at a time gives the
//! same outputs as a single `all` run.

mod config;
pub mod report;

pub use config::{PipelineConfig, SimilarityEmbedding, DEFAULT_MIN_CITY_POPULATION, DEFAULT_PERMUTATIONS};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::checkpoint;
use crate::clustering::train_clustering;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::graph_learner::{train_graph_structure, SpatialDependenceGraph};
use crate::ingest::{
    assemble_bf, assemble_fr, csvio, generate_synthetic, zscore_standardize, FeatureMatrix, GridSpec,
};
use crate::matrix::Matrix;
use crate::risk::rate_clusters;
use crate::spatial::{
    city_risk_summary, embedding_similarity_report, pearson_correlation, permutation_pvalue,
};

pub const CELLS_FILE: &str = "cells.csv";
pub const OCCURRENCES_FILE: &str = "occurrences.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const PLANTED_FILE: &str = "planted_labels.csv";
pub const GRAPH_CHECKPOINT: &str = "graph.ckpt";
pub const EDGES_FILE: &str = "edges.csv";
pub const CLUSTER_CHECKPOINT: &str = "cluster_state.ckpt";
pub const CLUSTERS_FILE: &str = "clusters.csv";
pub const RISK_LEVELS_FILE: &str = "risk_levels.csv";
pub const CELL_LEVELS_FILE: &str = "cell_levels.csv";
pub const GEOJSON_FILE: &str = "risk_map.geojson";
pub const REPORT_FILE: &str = "analysis_report.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    LearnGraph,
    Cluster,
    Rate,
    Analyze,
    All,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Synth,
        Stage::LearnGraph,
        Stage::Cluster,
        Stage::Rate,
        Stage::Analyze,
        Stage::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::LearnGraph => "learn-graph",
            Stage::Cluster => "cluster",
            Stage::Rate => "rate",
            Stage::Analyze => "analyze",
            Stage::All => "all",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown stage `{s}`")))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn file_key(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Files read and written during one run, with content hashes.
struct Run<'a> {
    cfg: &'a PipelineConfig,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    written: Vec<PathBuf>,
}

impl<'a> Run<'a> {
    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn input(&self, configured: &Option<PathBuf>, name: &str) -> PathBuf {
        configured.clone().unwrap_or_else(|| self.out(name))
    }

    fn read_text(&mut self, path: &Path) -> Result<String> {
        let text = fsutil::read_to_string(path)?;
        self.note_read(path, text.as_bytes());
        Ok(text)
    }

    fn read_bytes(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fsutil::read_bytes(path)?;
        self.note_read(path, &bytes);
        Ok(bytes)
    }

    fn note_read(&mut self, path: &Path, bytes: &[u8]) {
        let key = file_key(path);
        if !self.outputs.contains_key(&key) {
            self.inputs.insert(key, sha256_hex(bytes));
        }
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out(name);
        fsutil::write_atomic(&path, bytes)?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        self.written.push(path);
        Ok(())
    }

    fn grid(&mut self) -> Result<GridSpec> {
        let path = self.input(&self.cfg.cells_csv, CELLS_FILE);
        let text = self.read_text(&path)?;
        csvio::parse_cells(&text, &path.display().to_string())
    }

    fn features(&mut self, m: usize) -> Result<FeatureMatrix> {
        let path = self.input(&self.cfg.features_csv, FEATURES_FILE);
        let text = self.read_text(&path)?;
        let src = path.display().to_string();
        let table = csvio::parse_features(&text, &src)?;
        assemble_fr(&table, m).map_err(|e| match e {
            Error::InvalidArgument(detail) => Error::schema(&src, detail),
            other => other,
        })
    }

    fn checkpoint(&mut self, name: &str) -> Result<Vec<(String, Matrix)>> {
        let path = self.out(name);
        let bytes = self.read_bytes(&path)?;
        checkpoint::decode(&bytes, &path.display().to_string())
    }

    fn entry(entries: &[(String, Matrix)], name: &str, shape: Option<(usize, usize)>, src: &str) -> Result<Matrix> {
        let m = checkpoint::find(entries, name)
            .ok_or_else(|| Error::schema(src, format!("missing entry `{name}`")))?;
        if let Some(s) = shape {
            if m.shape() != s {
                return Err(Error::schema(src, format!("entry `{name}` is {:?}, expected {s:?}", m.shape())));
            }
        }
        Ok(m.clone())
    }

    fn graph(&mut self, m: usize) -> Result<SpatialDependenceGraph> {
        let entries = self.checkpoint(GRAPH_CHECKPOINT)?;
        let src = self.out(GRAPH_CHECKPOINT).display().to_string();
        let a = Self::entry(&entries, "a_star", Some((m, m)), &src)?;
        SpatialDependenceGraph::new(a).map_err(|e| Error::schema(&src, e.to_string()))
    }

    fn synth(&mut self) -> Result<()> {
        let data = generate_synthetic(&self.cfg.synth_config())?;
        self.write(CELLS_FILE, csvio::format_cells(&data.grid).as_bytes())?;
        self.write(OCCURRENCES_FILE, csvio::format_occurrences(data.bf.matrix()).as_bytes())?;
        self.write(FEATURES_FILE, csvio::format_features(&data.fr).as_bytes())?;
        self.write(PLANTED_FILE, report::format_planted(&data.labels).as_bytes())
    }

    fn learn_graph(&mut self) -> Result<()> {
        let m = self.grid()?.len();
        let path = self.input(&self.cfg.occurrences_csv, OCCURRENCES_FILE);
        let src = path.display().to_string();
        let text = self.read_text(&path)?;
        let events = csvio::parse_occurrences(&text, &src)?;
        let weeks = self
            .cfg
            .weeks
            .unwrap_or_else(|| events.iter().map(|&(_, w)| w + 1).max().unwrap_or(1));
        let bf = assemble_bf(&events, m, weeks).map_err(|e| match e {
            Error::InvalidArgument(detail) => Error::schema(&src, detail),
            other => other,
        })?;
        let out = train_graph_structure(bf.matrix(), &self.cfg.graph_config())?;
        info!(
            "graph learned: {} edges, final loss {:.6}",
            out.graph.edges().len(),
            out.losses.last().copied().unwrap_or(f64::NAN)
        );
        let mut entries = vec![
            ("a_star".to_string(), out.graph.matrix().clone()),
            ("anchor".to_string(), out.anchor.clone()),
        ];
        entries.extend(checkpoint::params_to_entries(&out.params));
        self.write(GRAPH_CHECKPOINT, &checkpoint::encode(&entries))?;
        self.write(EDGES_FILE, report::format_edges(&out.graph).as_bytes())
    }

    fn cluster(&mut self) -> Result<()> {
        let m = self.grid()?.len();
        let fr = self.features(m)?;
        let graph = self.graph(m)?;
        let z = zscore_standardize(fr.matrix())?.matrix;
        let out = train_clustering(&z, graph.matrix(), &self.cfg.cluster_config())?;
        let st = &out.state;
        info!("clustered {m} cells into {} clusters", st.clusters());
        let column = |v: &[usize]| Matrix::new(v.len(), 1, v.iter().map(|&x| x as f64).collect());
        let entries = vec![
            ("h".to_string(), st.h.clone()),
            ("z".to_string(), st.z.clone()),
            ("q".to_string(), st.q.clone()),
            ("p".to_string(), st.p.clone()),
            ("centers".to_string(), st.centers.clone()),
            ("labels".to_string(), column(&st.labels)?),
            ("kept".to_string(), column(&st.kept)?),
        ];
        self.write(CLUSTER_CHECKPOINT, &checkpoint::encode(&entries))?;
        self.write(CLUSTERS_FILE, report::format_clusters(st).as_bytes())
    }

    fn rate(&mut self) -> Result<()> {
        let grid = self.grid()?;
        let m = grid.len();
        let fr = self.features(m)?;
        let path = self.out(CLUSTERS_FILE);
        let text = self.read_text(&path)?;
        let (labels, _) = report::parse_clusters(&text, m, &path.display().to_string())?;
        let table = rate_clusters(fr.matrix(), &labels)?;
        self.write(RISK_LEVELS_FILE, report::format_risk_levels(&table).as_bytes())?;
        self.write(CELL_LEVELS_FILE, report::format_cell_levels(&table).as_bytes())?;
        let standardized = zscore_standardize(fr.matrix())?.matrix;
        let geo = report::export_geojson(&grid, &table.cell_clusters, &table.cell_levels, &standardized)?;
        self.write(GEOJSON_FILE, geo.as_bytes())
    }

    fn analyze(&mut self) -> Result<()> {
        let grid = self.grid()?;
        let m = grid.len();
        let graph = self.graph(m)?;
        let entries = self.checkpoint(CLUSTER_CHECKPOINT)?;
        let src = self.out(CLUSTER_CHECKPOINT).display().to_string();
        let embedding = match self.cfg.similarity_embedding {
            SimilarityEmbedding::Bottleneck => Run::entry(&entries, "h", None, &src)?,
            SimilarityEmbedding::Assignment => Run::entry(&entries, "z", None, &src)?,
        };
        if embedding.rows() != m {
            return Err(Error::schema(&src, format!("embedding has {} rows for {m} cells", embedding.rows())));
        }
        let path = self.out(CELL_LEVELS_FILE);
        let text = self.read_text(&path)?;
        let levels: Vec<usize> = report::parse_cell_levels(&text, m, &path.display().to_string())?
            .into_iter()
            .map(|(_, l)| l)
            .collect();

        let similarity = embedding_similarity_report(&embedding, &levels)?;
        let values: Vec<f64> = levels.iter().map(|&l| l as f64).collect();
        let moran = match permutation_pvalue(
            &values,
            graph.matrix(),
            self.cfg.moran_weights,
            self.cfg.permutations,
            self.cfg.seed,
        ) {
            Ok(t) => Some(t),
            Err(Error::InvalidArgument(why)) => {
                warn!("Moran's I undefined: {why}");
                None
            }
            Err(e) => return Err(e),
        };
        let cities = city_risk_summary(&levels, &grid.cells, self.cfg.min_city_population)?;
        let means: Vec<f64> = cities.iter().map(|c| c.mean_level).collect();
        let inequality: Vec<f64> = cities.iter().map(|c| c.inequality).collect();
        let correlation = pearson_correlation(&means, &inequality).ok();
        let text = report::format_analysis_report(&similarity, moran.as_ref(), &cities, correlation);
        self.write(REPORT_FILE, text.as_bytes())
    }

    fn manifest(&mut self, stage: Stage) -> Result<()> {
        let config: serde_json::Map<String, serde_json::Value> = self
            .cfg
            .canonical_entries()
            .into_iter()
            .map(|(k, v)| (k.to_string(), json!(v)))
            .collect();
        let doc = json!({
            "stage": stage.name(),
            "versions": {
                "floodrisk_core": env!("CARGO_PKG_VERSION"),
                "checkpoint_format": checkpoint::VERSION,
            },
            "config_hash": sha256_hex(self.cfg.canonical_text().as_bytes()),
            "config": config,
            "inputs": self.inputs,
            "outputs": self.outputs,
        });
        let text = serde_json::to_string_pretty(&doc).expect("JSON values always serialize") + "\n";
        let path = self.out(MANIFEST_FILE);
        fsutil::write_atomic(&path, text.as_bytes())?;
        self.written.push(path);
        Ok(())
    }
}

/// Paths written by a successful run, manifest last.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub stage: Stage,
    pub written: Vec<PathBuf>,
}

/// Runs `stage`, or for [`Stage::All`] every stage in order, skipping
/// generation when input tables are configured.
pub fn run_pipeline(stage: Stage, cfg: &PipelineConfig) -> Result<RunSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|source| Error::Output {
        path: cfg.out_dir.clone(),
        source,
    })?;
    let mut run = Run {
        cfg,
        inputs: BTreeMap::new(),
        outputs: BTreeMap::new(),
        written: Vec::new(),
    };
    match stage {
        Stage::Synth => run.synth()?,
        Stage::LearnGraph => run.learn_graph()?,
        Stage::Cluster => run.cluster()?,
        Stage::Rate => run.rate()?,
        Stage::Analyze => run.analyze()?,
        Stage::All => {
            let external = cfg.cells_csv.is_some() || cfg.occurrences_csv.is_some() || cfg.features_csv.is_some();
            if !external {
                run.synth()?;
            }
            run.learn_graph()?;
            run.cluster()?;
            run.rate()?;
            run.analyze()?;
        }
    }
    run.manifest(stage)?;
    Ok(RunSummary {
        stage,
        written: run.written,
    })
}
