//! Python bindings. Matrices cross the boundary as lists of row lists.

use std::path::PathBuf;

use floodrisk_core::clustering::{self, ClusterModelConfig, ClusterState, KernelScale};
use floodrisk_core::graph_learner::{self, GraphLearnerConfig, NtXentDenominator};
use floodrisk_core::ingest::{self, SynthConfig};
use floodrisk_core::pipeline::{self, PipelineConfig, Stage};
use floodrisk_core::spatial::{self, MoranWeights};
use floodrisk_core::{matrix, metrics, risk, Error, Matrix};
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyException, PyOSError, PyValueError};
use pyo3::prelude::*;

create_exception!(floodrisk_net, SchemaError, PyException);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Input { .. } | Error::Output { .. } => PyOSError::new_err(e.to_string()),
        Error::Schema { .. } => SchemaError::new_err(e.to_string()),
        Error::NonFinite(_) | Error::Numerical(_) => PyArithmeticError::new_err(e.to_string()),
        Error::Shape { .. } | Error::InvalidArgument(_) => PyValueError::new_err(e.to_string()),
    }
}

fn mat(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(to_py)
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.to_rows()
}

#[pyfunction]
fn cosine_similarity_matrix(e: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&matrix::cosine_similarity_matrix(&mat(e)?)))
}

#[pyfunction]
fn normalized_adjacency(a: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&matrix::normalized_adjacency(&mat(a)?).map_err(to_py)?))
}

#[pyfunction]
fn build_knn_graph(x: Vec<Vec<f64>>, k: usize) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&graph_learner::build_knn_graph(&mat(x)?, k).map_err(to_py)?))
}

#[pyfunction]
#[pyo3(signature = (z1, z2, temperature=0.5, negatives_only=false))]
fn nt_xent_loss(z1: Vec<Vec<f64>>, z2: Vec<Vec<f64>>, temperature: f64, negatives_only: bool) -> PyResult<f64> {
    let denom = if negatives_only {
        NtXentDenominator::NegativesOnly
    } else {
        NtXentDenominator::Standard
    };
    graph_learner::nt_xent_loss(&mat(z1)?, &mat(z2)?, temperature, denom).map_err(to_py)
}

#[pyfunction]
fn bootstrap_anchor(anchor: Vec<Vec<f64>>, learned: Vec<Vec<f64>>, tau: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&graph_learner::bootstrap_anchor(&mat(anchor)?, &mat(learned)?, tau).map_err(to_py)?))
}

#[pyfunction]
#[pyo3(signature = (h, centers, dof=1.0, half_scale=false))]
fn ancillary_distribution(h: Vec<Vec<f64>>, centers: Vec<Vec<f64>>, dof: f64, half_scale: bool) -> PyResult<Vec<Vec<f64>>> {
    let scale = if half_scale {
        KernelScale::Half
    } else {
        KernelScale::DegreesOfFreedom
    };
    Ok(rows(&clustering::ancillary_distribution(&mat(h)?, &mat(centers)?, dof, scale).map_err(to_py)?))
}

#[pyfunction]
fn target_distribution(q: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&clustering::target_distribution(&mat(q)?).map_err(to_py)?))
}

#[pyfunction]
fn kl_divergence(p: Vec<Vec<f64>>, r: Vec<Vec<f64>>) -> PyResult<f64> {
    clustering::kl_divergence(&mat(p)?, &mat(r)?).map_err(to_py)
}

#[pyfunction]
fn minmax_scale(fr: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&risk::minmax_scale(&mat(fr)?)))
}

#[pyfunction]
fn assign_risk_levels(values: Vec<f64>) -> Vec<usize> {
    risk::assign_risk_levels(&values)
}

/// Per-cluster `(FH, FE, FV, FR value, level)` and per-cell levels.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn rate_clusters(fr: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<(Vec<(f64, f64, f64, f64, usize)>, Vec<usize>)> {
    let t = risk::rate_clusters(&mat(fr)?, &labels).map_err(to_py)?;
    let clusters = t
        .clusters
        .iter()
        .map(|c| {
            (
                c.components.hazard,
                c.components.exposure,
                c.components.vulnerability,
                c.value,
                c.level,
            )
        })
        .collect();
    Ok((clusters, t.cell_levels))
}

fn moran_mode(row_standardized: bool) -> MoranWeights {
    if row_standardized {
        MoranWeights::RowStandardized
    } else {
        MoranWeights::Raw
    }
}

#[pyfunction]
#[pyo3(signature = (values, weights, row_standardized=false))]
fn global_morans_i(values: Vec<f64>, weights: Vec<Vec<f64>>, row_standardized: bool) -> PyResult<f64> {
    spatial::global_morans_i(&values, &mat(weights)?, moran_mode(row_standardized)).map_err(to_py)
}

/// `(I, p)` from a one-sided permutation test.
#[pyfunction]
#[pyo3(signature = (values, weights, permutations=999, seed=0, row_standardized=false))]
fn permutation_pvalue(
    values: Vec<f64>,
    weights: Vec<Vec<f64>>,
    permutations: usize,
    seed: u64,
    row_standardized: bool,
) -> PyResult<(f64, f64)> {
    let t = spatial::permutation_pvalue(&values, &mat(weights)?, moran_mode(row_standardized), permutations, seed)
        .map_err(to_py)?;
    Ok((t.i, t.p_value))
}

#[pyfunction]
fn gini(values: Vec<f64>) -> PyResult<f64> {
    spatial::gini(&values).map_err(to_py)
}

#[pyfunction]
fn pearson_correlation(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64)> {
    spatial::pearson_correlation(&x, &y).map_err(to_py)
}

#[pyfunction]
fn adjusted_rand_index(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    metrics::adjusted_rand_index(&a, &b).map_err(to_py)
}

#[pyfunction]
fn silhouette_score(x: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
    metrics::silhouette_score(&mat(x)?, &labels).map_err(to_py)
}

#[pyfunction]
fn zscore_standardize(x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&ingest::zscore_standardize(&mat(x)?).map_err(to_py)?.matrix))
}

/// Synthetic grid with planted clusters.
#[pyclass(frozen, get_all)]
struct SyntheticData {
    bf: Vec<Vec<f64>>,
    fr: Vec<Vec<f64>>,
    labels: Vec<usize>,
    cell_ids: Vec<usize>,
    city_ids: Vec<Option<String>>,
}

#[pyfunction]
#[pyo3(signature = (seed=0, cells=150, weeks=52, clusters=3, separation=4.0, spatially_contiguous=true))]
fn generate_synthetic(
    seed: u64,
    cells: usize,
    weeks: usize,
    clusters: usize,
    separation: f64,
    spatially_contiguous: bool,
) -> PyResult<SyntheticData> {
    let d = ingest::generate_synthetic(&SynthConfig {
        seed,
        cells,
        weeks,
        planted_clusters: clusters,
        separation,
        spatially_contiguous,
    })
    .map_err(to_py)?;
    Ok(SyntheticData {
        bf: rows(d.bf.matrix()),
        fr: rows(d.fr.matrix()),
        labels: d.labels,
        cell_ids: d.grid.cells.iter().map(|c| c.cell_id).collect(),
        city_ids: d.grid.cells.iter().map(|c| c.city_id.clone()).collect(),
    })
}

/// Learned dependence graph and the per-epoch contrastive loss.
#[pyfunction]
#[pyo3(signature = (bf, seed=0, knn=10, tau=0.99, epochs=500, temperature=0.5))]
fn learn_graph(
    bf: Vec<Vec<f64>>,
    seed: u64,
    knn: usize,
    tau: f64,
    epochs: usize,
    temperature: f64,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let cfg = GraphLearnerConfig {
        seed,
        knn_k: knn,
        tau,
        epochs,
        temperature,
        ..Default::default()
    };
    let out = graph_learner::train_graph_structure(&mat(bf)?, &cfg).map_err(to_py)?;
    Ok((rows(out.graph.matrix()), out.losses))
}

#[pyclass(frozen, name = "ClusterState")]
struct PyClusterState(ClusterState);

#[pymethods]
impl PyClusterState {
    #[getter]
    fn h(&self) -> Vec<Vec<f64>> {
        rows(&self.0.h)
    }

    #[getter]
    fn z(&self) -> Vec<Vec<f64>> {
        rows(&self.0.z)
    }

    #[getter]
    fn q(&self) -> Vec<Vec<f64>> {
        rows(&self.0.q)
    }

    #[getter]
    fn p(&self) -> Vec<Vec<f64>> {
        rows(&self.0.p)
    }

    #[getter]
    fn centers(&self) -> Vec<Vec<f64>> {
        rows(&self.0.centers)
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.0.labels.clone()
    }

    fn __len__(&self) -> usize {
        self.0.cells()
    }

    fn __repr__(&self) -> String {
        format!("ClusterState(cells={}, clusters={})", self.0.cells(), self.0.clusters())
    }
}

/// Deep clustering of standardized features over a dependence graph.
#[pyfunction]
#[pyo3(signature = (fr, a_star, k=6, seed=0, pretrain_epochs=200, epochs=300, alpha=0.1, beta=0.01))]
#[allow(clippy::too_many_arguments)]
fn train_clustering(
    fr: Vec<Vec<f64>>,
    a_star: Vec<Vec<f64>>,
    k: usize,
    seed: u64,
    pretrain_epochs: usize,
    epochs: usize,
    alpha: f64,
    beta: f64,
) -> PyResult<PyClusterState> {
    let cfg = ClusterModelConfig {
        clusters: k,
        seed,
        pretrain_epochs,
        epochs,
        alpha,
        beta,
        ..Default::default()
    };
    let out = clustering::train_clustering(&mat(fr)?, &mat(a_star)?, &cfg).map_err(to_py)?;
    Ok(PyClusterState(out.state))
}

/// Runs a pipeline stage; `settings` uses the configuration-file keys.
#[pyfunction]
#[pyo3(signature = (stage, out_dir, settings=None))]
fn run_pipeline(stage: &str, out_dir: PathBuf, settings: Option<Vec<(String, String)>>) -> PyResult<Vec<String>> {
    let stage: Stage = stage.parse().map_err(to_py)?;
    let mut cfg = PipelineConfig {
        out_dir,
        ..Default::default()
    };
    for (k, v) in settings.unwrap_or_default() {
        cfg.set(&k, &v).map_err(PyValueError::new_err)?;
    }
    let summary = pipeline::run_pipeline(stage, &cfg).map_err(to_py)?;
    Ok(summary.written.iter().map(|p| p.display().to_string()).collect())
}

#[pymodule]
fn floodrisk_net(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SchemaError", m.py().get_type::<SchemaError>())?;
    m.add_class::<SyntheticData>()?;
    m.add_class::<PyClusterState>()?;
    m.add_function(wrap_pyfunction!(cosine_similarity_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_adjacency, m)?)?;
    m.add_function(wrap_pyfunction!(build_knn_graph, m)?)?;
    m.add_function(wrap_pyfunction!(nt_xent_loss, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_anchor, m)?)?;
    m.add_function(wrap_pyfunction!(ancillary_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(target_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(minmax_scale, m)?)?;
    m.add_function(wrap_pyfunction!(assign_risk_levels, m)?)?;
    m.add_function(wrap_pyfunction!(rate_clusters, m)?)?;
    m.add_function(wrap_pyfunction!(global_morans_i, m)?)?;
    m.add_function(wrap_pyfunction!(permutation_pvalue, m)?)?;
    m.add_function(wrap_pyfunction!(gini, m)?)?;
    m.add_function(wrap_pyfunction!(pearson_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_rand_index, m)?)?;
    m.add_function(wrap_pyfunction!(silhouette_score, m)?)?;
    m.add_function(wrap_pyfunction!(zscore_standardize, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(learn_graph, m)?)?;
    m.add_function(wrap_pyfunction!(train_clustering, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
