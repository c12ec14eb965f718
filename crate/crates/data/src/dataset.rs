use std::path::{Path, PathBuf};

use cda_scm::CausalGraph;
use cda_tensor::Container;
use ndarray::{Array1, Array2, ArrayD, ArrayViewD, Axis};

use crate::{DataError, DatasetName, FactorSpec};

/// A generated dataset: rendered images, raw and normalized factor labels, a
/// supervision mask, and everything needed to interpret them (factor specs,
/// the ground-truth causal graph, and the generator seed).
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub(crate) name: DatasetName,
    /// `[N, C, H, W]`, values in `[−1, 1]`.
    pub(crate) images: ArrayD<f32>,
    /// `[N, n]` raw factor values.
    pub(crate) labels_raw: Array2<f64>,
    /// `[N, n]` factors normalized per spec to (−1, 1).
    pub(crate) labels_norm: Array2<f64>,
    /// `[N]`; 1.0 = labeled, 0.0 = unlabeled.
    pub(crate) mask: Array1<f32>,
    pub(crate) specs: Vec<FactorSpec>,
    pub(crate) graph: CausalGraph,
    pub(crate) seed: u64,
    pub(crate) p_unlabeled: f64,
}

impl LabeledDataset {
    pub fn name(&self) -> DatasetName {
        self.name
    }

    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_factors(&self) -> usize {
        self.specs.len()
    }

    pub fn channels(&self) -> usize {
        self.images.shape()[1]
    }

    pub fn resolution(&self) -> usize {
        self.images.shape()[2]
    }

    pub fn images(&self) -> &ArrayD<f32> {
        &self.images
    }

    pub fn image(&self, index: usize) -> ArrayViewD<'_, f32> {
        self.images.index_axis(Axis(0), index)
    }

    pub fn labels_raw(&self) -> &Array2<f64> {
        &self.labels_raw
    }

    pub fn labels_norm(&self) -> &Array2<f64> {
        &self.labels_norm
    }

    /// Normalized labels as f32, the dtype consumed by conditioning networks.
    pub fn labels_norm_f32(&self) -> Array2<f32> {
        self.labels_norm.mapv(|v| v as f32)
    }

    pub fn mask(&self) -> &Array1<f32> {
        &self.mask
    }

    pub fn specs(&self) -> &[FactorSpec] {
        &self.specs
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn p_unlabeled(&self) -> f64 {
        self.p_unlabeled
    }

    /// Normalize one raw label vector with this dataset's factor specs.
    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().zip(&self.specs).map(|(&v, s)| s.normalize(v)).collect()
    }

    /// Invert [`normalize`](Self::normalize).
    pub fn denormalize(&self, norm: &[f64]) -> Vec<f64> {
        norm.iter().zip(&self.specs).map(|(&v, s)| s.denormalize(v)).collect()
    }

    /// Path of the metadata sidecar that travels with `path`.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut os = path.as_os_str().to_owned();
        os.push(".meta");
        PathBuf::from(os)
    }

    /// Persist as a binary tensor container (`images`, `labels_raw`,
    /// `labels_norm`, `mask`) plus a text sidecar at `<path>.meta`.
    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let mut c = Container::new(format!("dataset:{}", self.name));
        c.insert("images", &self.images);
        c.insert("labels_raw", &self.labels_raw.clone().into_dyn());
        c.insert("labels_norm", &self.labels_norm.clone().into_dyn());
        c.insert("mask", &self.mask.clone().into_dyn());
        c.save(path)?;

        let mut meta = String::new();
        meta.push_str("format_version = 1\n");
        meta.push_str(&format!("dataset = {}\n", self.name));
        meta.push_str(&format!("seed = {}\n", self.seed));
        meta.push_str(&format!("p_unlabeled = {}\n", self.p_unlabeled));
        for (k, s) in self.specs.iter().enumerate() {
            meta.push_str(&format!("factor{k} = {}\n", s.to_line()));
        }
        meta.push_str("[graph]\n");
        meta.push_str(&self.graph.to_text());
        std::fs::write(Self::sidecar_path(path), meta)?;
        Ok(())
    }

    /// Load a dataset written by [`save`](Self::save), re-deriving nothing:
    /// arrays come back bit-exact, and the stored normalized labels are
    /// checked against re-normalizing the raw ones.
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let c = Container::load(path)?;
        let images = c.get::<f32>("images")?;
        let labels_raw: Array2<f64> = c
            .get::<f64>("labels_raw")?
            .into_dimensionality()
            .map_err(|e| DataError::Metadata(format!("labels_raw is not 2-D: {e}")))?;
        let labels_norm: Array2<f64> = c
            .get::<f64>("labels_norm")?
            .into_dimensionality()
            .map_err(|e| DataError::Metadata(format!("labels_norm is not 2-D: {e}")))?;
        let mask: Array1<f32> = c
            .get::<f32>("mask")?
            .into_dimensionality()
            .map_err(|e| DataError::Metadata(format!("mask is not 1-D: {e}")))?;

        let text = std::fs::read_to_string(Self::sidecar_path(path))?;
        let (head, graph_text) = text
            .split_once("[graph]\n")
            .ok_or_else(|| DataError::Metadata("missing [graph] section".into()))?;
        let mut name = None;
        let mut seed = None;
        let mut p_unlabeled = None;
        let mut factor_lines: Vec<(usize, String)> = Vec::new();
        for line in head.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| DataError::Metadata(format!("bad line {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "format_version" => {
                    if value != "1" {
                        return Err(DataError::Metadata(format!(
                            "unsupported sidecar version {value}"
                        )));
                    }
                }
                "dataset" => name = Some(value.parse::<DatasetName>()?),
                "seed" => {
                    seed = Some(value.parse::<u64>().map_err(|_| {
                        DataError::Metadata(format!("bad seed {value:?}"))
                    })?);
                }
                "p_unlabeled" => {
                    p_unlabeled = Some(value.parse::<f64>().map_err(|_| {
                        DataError::Metadata(format!("bad p_unlabeled {value:?}"))
                    })?);
                }
                k if k.starts_with("factor") => {
                    let idx: usize = k["factor".len()..]
                        .parse()
                        .map_err(|_| DataError::Metadata(format!("bad factor key {k:?}")))?;
                    factor_lines.push((idx, value.to_string()));
                }
                other => {
                    return Err(DataError::Metadata(format!("unknown sidecar key {other:?}")));
                }
            }
        }
        let name = name.ok_or_else(|| DataError::Metadata("missing dataset name".into()))?;
        let seed = seed.ok_or_else(|| DataError::Metadata("missing seed".into()))?;
        let p_unlabeled =
            p_unlabeled.ok_or_else(|| DataError::Metadata("missing p_unlabeled".into()))?;
        factor_lines.sort_by_key(|(i, _)| *i);
        let specs: Vec<FactorSpec> = factor_lines
            .iter()
            .enumerate()
            .map(|(want, (got, line))| {
                if want != *got {
                    return Err(DataError::Metadata(format!(
                        "factor indices not contiguous at {got}"
                    )));
                }
                FactorSpec::from_line(line)
            })
            .collect::<Result<_, _>>()?;
        let graph = CausalGraph::from_text(graph_text)?;

        let ds = LabeledDataset {
            name,
            images,
            labels_raw,
            labels_norm,
            mask,
            specs,
            graph,
            seed,
            p_unlabeled,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub(crate) fn validate(&self) -> Result<(), DataError> {
        let n = self.len();
        let k = self.specs.len();
        if self.images.ndim() != 4 {
            return Err(DataError::Metadata(format!(
                "images must be [N, C, H, W], got {:?}",
                self.images.shape()
            )));
        }
        if self.labels_raw.dim() != (n, k) || self.labels_norm.dim() != (n, k) {
            return Err(DataError::Metadata(format!(
                "label shapes {:?}/{:?} do not match N = {n}, factors = {k}",
                self.labels_raw.dim(),
                self.labels_norm.dim()
            )));
        }
        if self.mask.len() != n {
            return Err(DataError::Metadata(format!(
                "mask length {} does not match N = {n}",
                self.mask.len()
            )));
        }
        if self.graph.n() != k {
            return Err(DataError::Metadata(format!(
                "graph has {} nodes but there are {k} factors",
                self.graph.n()
            )));
        }
        for (row_raw, row_norm) in self.labels_raw.outer_iter().zip(self.labels_norm.outer_iter())
        {
            for ((raw, norm), spec) in row_raw.iter().zip(row_norm.iter()).zip(&self.specs) {
                if spec.normalize(*raw).to_bits() != norm.to_bits() {
                    return Err(DataError::Metadata(format!(
                        "stored normalized label {norm} disagrees with normalize({raw})"
                    )));
                }
            }
        }
        Ok(())
    }
}
