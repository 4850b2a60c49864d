//! Identity-level k-fold evaluation with CMC curves.
//!
//! Randomness is drawn from `ChaCha8Rng::seed_from_u64(seed)` (crate `rand_chacha`).
//! Fold plans sort and deduplicate the identities, shuffle them with
//! `rand::seq::SliceRandom::shuffle` and deal them round-robin into `k` folds.
//! Synthetic data draws every identity's latent vector first (identity-major,
//! coordinate-minor, standard normal), then all view-A noise, then all view-B noise,
//! in the same order.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    fuse_tensors, load_features, split_to_tensor, FeatureFormat, FeatureRecord, FeatureSet, Standardizer, View,
    ViewTensor,
};
use crate::matching::{distance_matrix, normalize_scores, rank_gallery, DistanceMatrix, Normalization};
use crate::txqda::{fit, TxqdaConfig};
use crate::xqda::{Alignment, TargetDim};

pub const REPORT_VERSION: &str = concat!("txreid-report/1 (txreid ", env!("CARGO_PKG_VERSION"), ")");
pub const PRNG_DESCRIPTION: &str =
    "ChaCha8Rng::seed_from_u64(seed) from rand_chacha 0.9; identities sorted, shuffled with rand 0.9 SliceRandom::shuffle, dealt round-robin";

/// Cumulative match rates; `rates[r - 1]` is the rank-`r` rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmcCurve {
    pub rates: Vec<f64>,
}

impl CmcCurve {
    pub fn max_rank(&self) -> usize {
        self.rates.len()
    }

    /// Rate at `rank` (1-based); ranks past the end repeat the last value.
    pub fn at(&self, rank: usize) -> f64 {
        let idx = rank.clamp(1, self.rates.len()) - 1;
        self.rates[idx]
    }

    /// Rank-wise mean of several curves of equal length.
    pub fn mean(curves: &[&CmcCurve]) -> Option<CmcCurve> {
        let first = curves.first()?;
        let n = curves.len() as f64;
        let rates = (0..first.rates.len())
            .map(|i| curves.iter().map(|c| c.rates[i]).sum::<f64>() / n)
            .collect();
        Some(CmcCurve { rates })
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "rank,rate")?;
        for (i, r) in self.rates.iter().enumerate() {
            writeln!(out, "{},{r:?}", i + 1)?;
        }
        Ok(())
    }
}

/// CMC from a distance matrix; with repeated gallery identities the earliest hit counts.
pub fn cmc(d: &DistanceMatrix, max_rank: usize) -> Result<CmcCurve> {
    if max_rank == 0 {
        return Err(Error::usage("max_rank must be at least 1"));
    }
    if d.probe_labels.is_empty() {
        return Err(Error::data("no probes"));
    }
    let mut hits = vec![0usize; max_rank];
    for (i, order) in rank_gallery(d).iter().enumerate() {
        let label = d.probe_labels[i];
        let pos = order
            .iter()
            .position(|&g| d.gallery_labels[g] == label)
            .ok_or_else(|| Error::data(format!("probe {i} (identity {label}) has no match in the gallery")))?;
        for h in hits.iter_mut().skip(pos) {
            *h += 1;
        }
    }
    let n = d.probe_labels.len() as f64;
    Ok(CmcCurve {
        rates: hits.into_iter().map(|h| h as f64 / n).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Vec<u32>>,
    pub seed: u64,
}

impl FoldPlan {
    /// Identities outside fold `f`.
    pub fn train_ids(&self, f: usize) -> BTreeSet<u32> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != f)
            .flat_map(|(_, ids)| ids.iter().copied())
            .collect()
    }
}

pub fn kfold_split(ids: &[u32], k: usize, seed: u64) -> Result<FoldPlan> {
    let mut ids: Vec<u32> = ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if k < 2 {
        return Err(Error::usage(format!("fold count must be at least 2, got {k}")));
    }
    if k > ids.len() {
        return Err(Error::usage(format!("{k} folds requested for {} identities", ids.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (i, id) in ids.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    Ok(FoldPlan { k, folds, seed })
}

/// Two single-shot views of `n_ids` identities (labels `0..n_ids`) sharing a
/// standard-normal latent vector per identity plus independent view noise.
pub fn synth_dataset(n_ids: usize, dim: usize, noise: f64, seed: u64) -> Result<(FeatureSet, FeatureSet)> {
    if n_ids < 2 || dim < 2 {
        return Err(Error::usage(format!("synthetic data needs n_ids >= 2 and dim >= 2, got {n_ids} and {dim}")));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(Error::usage(format!("noise must be a non-negative number, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let latent: Vec<Vec<f64>> = (0..n_ids).map(|_| draw(dim)).collect();
    let mut view = |view: View| -> Result<FeatureSet> {
        let records = latent
            .iter()
            .enumerate()
            .map(|(id, z)| FeatureRecord {
                identity: id as u32,
                view,
                vector: z.iter().zip(draw(dim)).map(|(l, g)| l + noise * g).collect(),
            })
            .collect();
        FeatureSet::new("synth", records)
    };
    let a = view(View::A)?;
    let b = view(View::B)?;
    Ok((a, b))
}

/// Mode-1 output dimension: a count, or one of the keywords `auto` / `full`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModeDim {
    Count(usize),
    Keyword(ModeKeyword),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKeyword {
    Auto,
    Full,
}

impl Default for ModeDim {
    fn default() -> Self {
        ModeDim::Keyword(ModeKeyword::Auto)
    }
}

impl ModeDim {
    pub fn resolve(self, source: usize) -> TargetDim {
        match self {
            ModeDim::Count(r) => TargetDim::Explicit(r),
            ModeDim::Keyword(ModeKeyword::Auto) => TargetDim::Auto,
            ModeDim::Keyword(ModeKeyword::Full) => TargetDim::Explicit(source),
        }
    }
}

impl std::str::FromStr for ModeDim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(ModeDim::Keyword(ModeKeyword::Auto)),
            "full" => Ok(ModeDim::Keyword(ModeKeyword::Full)),
            n => n
                .parse::<usize>()
                .map(ModeDim::Count)
                .map_err(|_| Error::usage(format!("mode dimension {n:?} is not auto, full or a count"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptorFiles {
    pub name: String,
    pub view_a: PathBuf,
    pub view_b: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TxqdaSection {
    pub max_itr: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub alignment: Alignment,
}

impl Default for TxqdaSection {
    fn default() -> Self {
        let d = TxqdaConfig::default();
        TxqdaSection {
            max_itr: d.max_itr,
            epsilon: d.epsilon,
            lambda: d.lambda,
            alignment: d.alignment,
        }
    }
}

fn default_dims() -> Vec<usize> {
    vec![50, 100, 150, 200, 250]
}

fn default_folds() -> usize {
    10
}

fn default_ranks() -> Vec<usize> {
    vec![1, 5, 10, 15, 20]
}

fn default_format() -> FeatureFormat {
    FeatureFormat::Csv
}

/// Declarative experiment description, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "descriptor")]
    pub descriptors: Vec<DescriptorFiles>,
    /// Descriptor names in fusion order; defaults to declaration order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion: Option<Vec<String>>,
    pub part_len: usize,
    /// Sweep over the features-mode output dimension.
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default)]
    pub mode1_dim: ModeDim,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ranks")]
    pub ranks: Vec<usize>,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub both_directions: bool,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default = "default_format")]
    pub format: FeatureFormat,
    #[serde(default)]
    pub txqda: TxqdaSection,
}

impl ExperimentConfig {
    /// Parse a TOML config; relative feature paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::usage(format!("experiment config: {e}")))?;
        for d in &mut cfg.descriptors {
            for p in [&mut d.view_a, &mut d.view_b] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn txqda_config(&self, mode1: TargetDim, dim: usize) -> TxqdaConfig {
        TxqdaConfig {
            target_dims: [mode1, TargetDim::Explicit(dim)],
            max_itr: self.txqda.max_itr,
            epsilon: self.txqda.epsilon,
            lambda: self.txqda.lambda,
            alignment: self.txqda.alignment,
        }
    }

    fn max_rank(&self) -> usize {
        self.ranks.iter().copied().max().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.descriptors.is_empty() {
            return Err(Error::usage("experiment config lists no descriptors"));
        }
        if self.part_len == 0 {
            return Err(Error::usage("part_len must be at least 1"));
        }
        if self.folds < 2 {
            return Err(Error::usage("folds must be at least 2"));
        }
        if self.dims.is_empty() || self.dims.iter().any(|&d| d == 0 || d > self.part_len) {
            return Err(Error::usage(format!(
                "every swept dimension must lie in 1..={} (the part length), got {:?}",
                self.part_len, self.dims
            )));
        }
        if self.ranks.is_empty() || self.ranks.contains(&0) {
            return Err(Error::usage("ranks must be a non-empty list of positive integers"));
        }
        if let ModeDim::Count(0) = self.mode1_dim {
            return Err(Error::usage("mode1_dim must be positive"));
        }
        Ok(())
    }
}

/// One descriptor's records for both views.
#[derive(Clone, Debug)]
pub struct Descriptor {
    pub name: String,
    pub features: FeatureSet,
}

pub fn load_descriptors(cfg: &ExperimentConfig) -> Result<Vec<Descriptor>> {
    let order: Vec<&DescriptorFiles> = match &cfg.fusion {
        None => cfg.descriptors.iter().collect(),
        Some(names) => names
            .iter()
            .map(|n| {
                cfg.descriptors
                    .iter()
                    .find(|d| &d.name == n)
                    .ok_or_else(|| Error::usage(format!("fusion lists unknown descriptor {n:?}")))
            })
            .collect::<Result<_>>()?,
    };
    order
        .into_iter()
        .map(|files| {
            let a = load_features(&files.view_a, cfg.format)?.filter(|r| r.view == View::A)?;
            let b = load_features(&files.view_b, cfg.format)?.filter(|r| r.view == View::B)?;
            Ok(Descriptor {
                name: files.name.clone(),
                features: a.merged(&b)?,
            })
        })
        .collect::<Result<_>>()
        .map_err(|e: Error| e.context("loading features"))
}

/// Identities present in both views of every descriptor.
pub fn shared_identities(descriptors: &[Descriptor]) -> Result<Vec<u32>> {
    let mut all = BTreeSet::new();
    for d in descriptors {
        all.extend(d.features.identities(View::A));
        all.extend(d.features.identities(View::B));
    }
    for d in descriptors {
        for view in [View::A, View::B] {
            let have = d.features.identities(view);
            if let Some(missing) = all.iter().find(|id| !have.contains(id)) {
                return Err(Error::data(format!(
                    "identity {missing} has no view-{view} record in descriptor {}",
                    d.name
                )));
            }
        }
    }
    Ok(all.into_iter().collect())
}

/// Training and test tensors of one fold.
struct FoldData {
    train_a: ViewTensor,
    train_b: ViewTensor,
    test_a: ViewTensor,
    test_b: ViewTensor,
}

fn fold_data(cfg: &ExperimentConfig, descriptors: &[Descriptor], plan: &FoldPlan, f: usize) -> Result<FoldData> {
    let test: BTreeSet<u32> = plan.folds[f].iter().copied().collect();
    let train = plan.train_ids(f);
    if let Some(leak) = test.intersection(&train).next() {
        return Err(Error::data(format!("identity {leak} is in both the training and test split")));
    }
    let mut tensors: Option<[ViewTensor; 4]> = None;
    for d in descriptors {
        let sorted = d.features.sorted_by_identity();
        let mut train_fs = sorted.filter(|r| train.contains(&r.identity))?;
        let mut test_fs = sorted.filter(|r| test.contains(&r.identity))?;
        if cfg.standardize {
            let z = Standardizer::fit(&train_fs);
            train_fs = z.apply(&train_fs)?;
            test_fs = z.apply(&test_fs)?;
        }
        let parts = [
            split_to_tensor(&train_fs, View::A, cfg.part_len)?,
            split_to_tensor(&train_fs, View::B, cfg.part_len)?,
            split_to_tensor(&test_fs, View::A, cfg.part_len)?,
            split_to_tensor(&test_fs, View::B, cfg.part_len)?,
        ];
        tensors = Some(match tensors {
            None => parts,
            Some(prev) => {
                let mut fused = Vec::with_capacity(4);
                for (p, n) in prev.iter().zip(&parts) {
                    fused.push(fuse_tensors(p, n).map_err(|e| e.context(format!("fusing {}", d.name)))?);
                }
                fused.try_into().expect("four tensors")
            }
        });
    }
    let [train_a, train_b, test_a, test_b] = tensors.expect("at least one descriptor");
    Ok(FoldData {
        train_a,
        train_b,
        test_a,
        test_b,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellDiagnostics {
    pub target_dims: [usize; 2],
    pub iterations_run: usize,
    pub converged: bool,
    pub eigenvalue_counts: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellReport {
    pub dim: usize,
    pub fold: usize,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cmc: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<CellDiagnostics>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankRate {
    pub rank: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DimSummary {
    pub dim: usize,
    pub folds_ok: usize,
    pub folds_failed: Vec<usize>,
    pub mean_cmc: Option<Vec<f64>>,
    /// Mean rates at the configured report ranks.
    pub rank_rates: Vec<RankRate>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProtocolEcho {
    pub prng: &'static str,
    pub split: &'static str,
    pub probe_view: &'static str,
    pub gallery_view: &'static str,
    pub pair_alignment: Alignment,
    pub final_metric: &'static str,
    pub dim_mapping: String,
    pub normalization: Normalization,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
    pub config: ExperimentConfig,
    pub protocol: ProtocolEcho,
    pub descriptors: Vec<String>,
    pub identities: usize,
    pub folds: Vec<Vec<u32>>,
    pub cells: Vec<CellReport>,
    pub sweep: Vec<DimSummary>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Write one `rank,rate` CSV per swept dimension holding the mean curve.
    pub fn write_curves(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for s in &self.sweep {
            let Some(rates) = &s.mean_cmc else { continue };
            let path = dir.join(format!("cmc_dim{}.csv", s.dim));
            let mut buf = Vec::new();
            CmcCurve { rates: rates.clone() }
                .write_csv(&mut buf)
                .expect("writing to memory");
            std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// The folds and (Dim, fold) cells an experiment would run.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentPlan {
    pub identities: usize,
    pub folds: FoldPlan,
    pub cells: Vec<(usize, usize)>,
}

pub fn plan_experiment(cfg: &ExperimentConfig, descriptors: &[Descriptor]) -> Result<ExperimentPlan> {
    cfg.validate()?;
    let ids = shared_identities(descriptors)?;
    let folds = kfold_split(&ids, cfg.folds, cfg.seed)?;
    let cells = cfg
        .dims
        .iter()
        .flat_map(|&dim| (0..cfg.folds).map(move |f| (dim, f)))
        .collect();
    Ok(ExperimentPlan {
        identities: ids.len(),
        folds,
        cells,
    })
}

fn evaluate_cell(cfg: &ExperimentConfig, data: &FoldData, dim: usize) -> Result<(CmcCurve, CellDiagnostics)> {
    let n1 = data.train_a.dims()[0];
    let tcfg = cfg.txqda_config(cfg.mode1_dim.resolve(n1), dim);
    let model = fit(&data.train_a, &data.train_b, &tcfg)?;
    let max_rank = cfg.max_rank();
    let curve = |probe: &ViewTensor, gallery: &ViewTensor| -> Result<CmcCurve> {
        let d = distance_matrix(probe, gallery, &model)?;
        cmc(&normalize_scores(&d, cfg.normalization), max_rank)
    };
    let forward = curve(&data.test_a, &data.test_b)?;
    let cmc_curve = if cfg.both_directions {
        let backward = curve(&data.test_b, &data.test_a)?;
        CmcCurve::mean(&[&forward, &backward]).expect("two curves")
    } else {
        forward
    };
    Ok((
        cmc_curve,
        CellDiagnostics {
            target_dims: model.projections.target_dims(),
            iterations_run: model.iterations_run,
            converged: model.converged,
            eigenvalue_counts: [model.per_mode_eigvals[0].len(), model.per_mode_eigvals[1].len()],
        },
    ))
}

/// Run the full sweep on already-loaded descriptors. `threads > 1` evaluates
/// cells on a dedicated pool; results do not depend on the thread count.
pub fn run_on(cfg: &ExperimentConfig, descriptors: &[Descriptor], threads: usize) -> Result<ExperimentReport> {
    let plan = plan_experiment(cfg, descriptors)?;
    let fold_inputs: Vec<Result<FoldData>> = (0..cfg.folds)
        .map(|f| fold_data(cfg, descriptors, &plan.folds, f))
        .collect();

    let run_cell = |&(dim, fold): &(usize, usize)| -> CellReport {
        let outcome = fold_inputs[fold]
            .as_ref()
            .map_err(|e| e.to_string())
            .and_then(|data| evaluate_cell(cfg, data, dim).map_err(|e| e.to_string()));
        match outcome {
            Ok((curve, diag)) => CellReport {
                dim,
                fold,
                status: "ok",
                error: None,
                cmc: Some(curve.rates),
                diagnostics: Some(diag),
            },
            Err(msg) => CellReport {
                dim,
                fold,
                status: "failed",
                error: Some(format!("dim {dim}, fold {fold}: {msg}")),
                cmc: None,
                diagnostics: None,
            },
        }
    };
    let cells: Vec<CellReport> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::usage(format!("cannot start {threads} worker threads: {e}")))?;
        pool.install(|| plan.cells.par_iter().map(run_cell).collect())
    } else {
        plan.cells.iter().map(run_cell).collect()
    };

    if cells.iter().all(|c| c.cmc.is_none()) {
        let first = cells.first().and_then(|c| c.error.clone()).unwrap_or_default();
        return Err(Error::data(format!("every (Dim, fold) cell failed; first failure: {first}")));
    }

    let sweep = cfg
        .dims
        .iter()
        .map(|&dim| {
            let of_dim: Vec<&CellReport> = cells.iter().filter(|c| c.dim == dim).collect();
            let curves: Vec<CmcCurve> = of_dim
                .iter()
                .filter_map(|c| c.cmc.clone().map(|rates| CmcCurve { rates }))
                .collect();
            let mean = CmcCurve::mean(&curves.iter().collect::<Vec<_>>());
            DimSummary {
                dim,
                folds_ok: curves.len(),
                folds_failed: of_dim.iter().filter(|c| c.cmc.is_none()).map(|c| c.fold).collect(),
                rank_rates: mean
                    .as_ref()
                    .map(|m| cfg.ranks.iter().map(|&rank| RankRate { rank, rate: m.at(rank) }).collect())
                    .unwrap_or_default(),
                mean_cmc: mean.map(|m| m.rates),
            }
        })
        .collect();

    Ok(ExperimentReport {
        version: REPORT_VERSION,
        timestamp: None,
        config: cfg.clone(),
        protocol: ProtocolEcho {
            prng: PRNG_DESCRIPTION,
            split: "identity-level k-fold: test identities never appear in training",
            probe_view: if cfg.both_directions { "A and B (averaged)" } else { "A" },
            gallery_view: if cfg.both_directions { "B and A (averaged)" } else { "B" },
            pair_alignment: cfg.txqda.alignment,
            final_metric: "recomputed on vectorized projected training slices, identity-level pairs, alignment all",
            dim_mapping: format!(
                "Dim -> features-mode (mode-2) target; parts-mode (mode-1) target = {}",
                match cfg.mode1_dim {
                    ModeDim::Count(r) => r.to_string(),
                    ModeDim::Keyword(ModeKeyword::Auto) => "auto (eigenvalue > 1, frozen after sweep 1)".into(),
                    ModeDim::Keyword(ModeKeyword::Full) => "full (no reduction)".into(),
                }
            ),
            normalization: cfg.normalization,
        },
        descriptors: descriptors.iter().map(|d| d.name.clone()).collect(),
        identities: plan.identities,
        folds: plan.folds.folds.clone(),
        cells,
        sweep,
    })
}

/// Load the configured feature files and run the sweep.
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let descriptors = load_descriptors(cfg)?;
    run_on(cfg, &descriptors, threads)
}
