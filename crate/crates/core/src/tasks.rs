//! Deterministic synthetic tasks: a 1-D curve sampled from a smooth prior,
//! random-feature kernels, cluster classification with one-hot targets, and
//! presentation-order policies with task boundaries.
//!
//! Every generator is a pure function of (config, seed). Randomness comes
//! from a ChaCha8 generator seeded with the task seed; independent draws use
//! fixed stream ids (1 curve, 2 split, 3 train noise, 4 test noise,
//! 5 feature projection, 6 cluster means, 7 train samples, 8 test samples,
//! 9 ordering) so datasets reproduce bit-for-bit across platforms.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{self, KernelSpec};
use crate::linalg::CholeskyFactor;
use crate::regression::OrderedDataset;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// 1-D regression task drawn from a smooth random curve on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gp1dConfig {
    pub sigma_sq_rbf: f64,
    pub noise_sigma: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub grid_step: f64,
}

impl Default for Gp1dConfig {
    fn default() -> Self {
        Gp1dConfig {
            sigma_sq_rbf: 0.1,
            noise_sigma: 0.3,
            n_train: 40,
            n_test: 160,
            grid_step: 0.005,
        }
    }
}

/// Cluster classification: class means on the unit sphere, isotropic spread,
/// one-hot targets. Totals are split round-robin across classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub n_classes: usize,
    pub input_dim: usize,
    pub spread: f64,
    pub n_train: usize,
    pub n_test: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            n_classes: 10,
            input_dim: 16,
            spread: 0.2,
            n_train: 1024,
            n_test: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Gp1d(Gp1dConfig),
    ClusterClassification(ClusterConfig),
}

/// Presentation-order policies. Class- and domain-incremental orders need
/// labels; domain-incremental derives pairings `(0,1),(2,3),…` when none are
/// given and remaps targets to a 2-dim one-hot on a single shared head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingPolicy {
    AsGenerated,
    RandomShuffle,
    ClassIncremental,
    DomainIncremental { pairings: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub ordering: OrderingPolicy,
    pub seed: u64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            kind: TaskKind::Gp1d(Gp1dConfig::default()),
            ordering: OrderingPolicy::AsGenerated,
            seed: 0,
        }
    }
}

/// A generated 1-D task: disjoint train/test draws plus the underlying curve.
#[derive(Debug, Clone)]
pub struct GpTask {
    pub train: OrderedDataset,
    pub test: OrderedDataset,
    pub grid: Array1<f64>,
    pub true_curve: Array1<f64>,
}

/// Sample the curve from N(0, K_rbf(grid, grid)) through a jittered Cholesky
/// factor, then draw disjoint train/test points with additive noise.
pub fn gen_gp1d(cfg: &Gp1dConfig, seed: u64) -> Result<GpTask> {
    if !(cfg.grid_step > 0.0) || cfg.grid_step > 1.0 {
        return Err(Error::InvalidParameter {
            name: "grid_step",
            reason: format!("must be in (0, 1], got {}", cfg.grid_step),
        });
    }
    let m = (1.0 / cfg.grid_step).round() as usize + 1;
    if cfg.n_train + cfg.n_test > m {
        return Err(Error::InvalidParameter {
            name: "n_train + n_test",
            reason: format!("{} exceeds grid size {m}", cfg.n_train + cfg.n_test),
        });
    }
    let grid = Array1::from_shape_fn(m, |i| i as f64 * cfg.grid_step);
    let grid2 = grid.view().insert_axis(ndarray::Axis(0)).to_owned();
    let rbf = KernelSpec::rbf(cfg.sigma_sq_rbf)?;
    let k_grid = kernel::gram_self(&rbf, grid2.view())?;

    // RBF grams on fine grids are numerically singular; escalate the jitter
    // twice before giving up.
    let base_jitter = 1e-10 * m as f64;
    let mut factor = None;
    for attempt in 0..3 {
        let jitter = base_jitter * 100f64.powi(attempt);
        let shifted = &k_grid + &(Array2::<f64>::eye(m) * jitter);
        if let Ok(f) = CholeskyFactor::decompose(shifted.view()) {
            factor = Some(f);
            break;
        }
    }
    let factor = factor.ok_or(Error::JitterExhausted { attempts: 3 })?;

    let normal: Normal<f64> = Normal::new(0.0, 1.0).unwrap();
    let mut curve_rng = stream_rng(seed, 1);
    let xi = Array1::from_shape_fn(m, |_| normal.sample(&mut curve_rng));
    let true_curve = factor.lower_product(xi.view());

    let mut split_rng = stream_rng(seed, 2);
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut split_rng);
    let train_idx = &idx[..cfg.n_train];
    let test_idx = &idx[cfg.n_train..cfg.n_train + cfg.n_test];

    let mut noise_train = stream_rng(seed, 3);
    let mut noise_test = stream_rng(seed, 4);
    let build = |ids: &[usize], rng: &mut ChaCha8Rng| -> OrderedDataset {
        let x = Array2::from_shape_fn((1, ids.len()), |(_, j)| grid[ids[j]]);
        let y = Array2::from_shape_fn((1, ids.len()), |(_, j)| {
            true_curve[ids[j]] + cfg.noise_sigma * normal.sample(rng)
        });
        OrderedDataset::new(x, y).expect("matched columns")
    };
    let train = build(train_idx, &mut noise_train);
    let test = build(test_idx, &mut noise_test);
    Ok(GpTask {
        train,
        test,
        grid,
        true_curve,
    })
}

/// Random-feature map `φ(x) = tanh(Jx)/√d_J` with J entries drawn N(0, 1);
/// the 1/√d_J feature normalization keeps k(x, x) = O(1) so one learning
/// rate scale serves every d_J.
pub fn gen_random_feature_map(d_j: usize, d_x: usize, seed: u64) -> KernelSpec {
    let normal: Normal<f64> = Normal::new(0.0, 1.0).unwrap();
    let mut rng = stream_rng(seed, 5);
    let j = Array2::from_shape_fn((d_j, d_x), |_| normal.sample(&mut rng));
    KernelSpec::random_feature_tanh(j, 1.0 / (d_j as f64).sqrt())
}

/// Two disjoint draws (train, test) of labeled cluster data; column j of the
/// one-hot target matrix has a single 1 at its class row.
pub fn gen_cluster_classification(
    cfg: &ClusterConfig,
    seed: u64,
) -> Result<(OrderedDataset, OrderedDataset)> {
    if cfg.n_classes < 2 {
        return Err(Error::InvalidParameter {
            name: "n_classes",
            reason: format!("need >= 2 classes, got {}", cfg.n_classes),
        });
    }
    let normal: Normal<f64> = Normal::new(0.0, 1.0).unwrap();
    let mut means_rng = stream_rng(seed, 6);
    let mut means = Array2::from_shape_fn((cfg.n_classes, cfg.input_dim), |_| {
        normal.sample(&mut means_rng)
    });
    for mut row in means.rows_mut() {
        let norm = row.dot(&row).sqrt().max(1e-12);
        row.mapv_inplace(|v| v / norm);
    }
    let gen = |n: usize, stream: u64| -> OrderedDataset {
        let mut rng = stream_rng(seed, stream);
        let mut x = Array2::zeros((cfg.input_dim, n));
        let mut y = Array2::zeros((cfg.n_classes, n));
        let mut labels = Vec::with_capacity(n);
        for j in 0..n {
            let c = j % cfg.n_classes;
            for i in 0..cfg.input_dim {
                x[(i, j)] = means[(c, i)] + cfg.spread * normal.sample(&mut rng);
            }
            y[(c, j)] = 1.0;
            labels.push(c);
        }
        OrderedDataset::with_labels(x, y, labels).expect("matched columns")
    };
    Ok((gen(cfg.n_train, 7), gen(cfg.n_test, 8)))
}

/// A dataset in presentation order plus its task boundaries (end-exclusive,
/// cumulative; a single task is `[n]`).
#[derive(Debug, Clone)]
pub struct OrderedTask {
    pub data: OrderedDataset,
    pub boundaries: Vec<usize>,
}

/// Apply a presentation-order policy. The multiset of inputs is preserved;
/// domain-incremental additionally remaps targets to a shared binary head.
pub fn order_samples(
    data: &OrderedDataset,
    policy: &OrderingPolicy,
    seed: u64,
) -> Result<OrderedTask> {
    let n = data.len();
    match policy {
        OrderingPolicy::AsGenerated => Ok(OrderedTask {
            data: data.clone(),
            boundaries: vec![n],
        }),
        OrderingPolicy::RandomShuffle => {
            let mut rng = stream_rng(seed, 9);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            Ok(OrderedTask {
                data: data.select(&idx),
                boundaries: vec![n],
            })
        }
        OrderingPolicy::ClassIncremental => {
            let labels = data.labels().ok_or(Error::InvalidParameter {
                name: "ordering",
                reason: "class-incremental order needs labels".to_string(),
            })?;
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by_key(|&i| labels[i]); // stable within label
            let ordered = data.select(&idx);
            let mut boundaries = Vec::new();
            let ordered_labels = ordered.labels().unwrap();
            for i in 1..n {
                if ordered_labels[i] != ordered_labels[i - 1] {
                    boundaries.push(i);
                }
            }
            boundaries.push(n);
            Ok(OrderedTask {
                data: ordered,
                boundaries,
            })
        }
        OrderingPolicy::DomainIncremental { pairings } => {
            let labels = data.labels().ok_or(Error::InvalidParameter {
                name: "ordering",
                reason: "domain-incremental order needs labels".to_string(),
            })?;
            let pairs = resolve_pairings(pairings, labels)?;
            let mut rng = stream_rng(seed, 9);
            let mut order = Vec::with_capacity(n);
            let mut boundaries = Vec::new();
            for &(a, b) in &pairs {
                let mut task_idx: Vec<usize> = (0..n)
                    .filter(|&i| labels[i] == a || labels[i] == b)
                    .collect();
                task_idx.shuffle(&mut rng);
                order.extend(task_idx);
                boundaries.push(order.len());
            }
            let remapped = remap_binary_head(&data.select(&order), &pairs)?;
            Ok(OrderedTask {
                data: remapped,
                boundaries,
            })
        }
    }
}

/// Explicit pairings, or pairs `(0,1),(2,3),…` over the distinct labels when
/// none are given; an odd class count is an error.
pub fn resolve_pairings(
    pairings: &[(usize, usize)],
    labels: &[usize],
) -> Result<Vec<(usize, usize)>> {
    if !pairings.is_empty() {
        return Ok(pairings.to_vec());
    }
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() % 2 != 0 {
        return Err(Error::InvalidParameter {
            name: "pairings",
            reason: format!("odd class count {}", distinct.len()),
        });
    }
    Ok(distinct.chunks(2).map(|c| (c[0], c[1])).collect())
}

/// Rewrite targets onto the shared 2-dim binary head: label = side within
/// its pair. Samples whose label is not covered by any pair are dropped.
/// Presentation order is otherwise preserved.
pub fn remap_binary_head(
    data: &OrderedDataset,
    pairs: &[(usize, usize)],
) -> Result<OrderedDataset> {
    let labels = data.labels().ok_or(Error::InvalidParameter {
        name: "remap_binary_head",
        reason: "needs labels".to_string(),
    })?;
    let side_of = |l: usize| {
        pairs.iter().find_map(|&(a, b)| {
            if l == a {
                Some(0)
            } else if l == b {
                Some(1)
            } else {
                None
            }
        })
    };
    let keep: Vec<usize> = (0..data.len())
        .filter(|&j| side_of(labels[j]).is_some())
        .collect();
    let picked = data.select(&keep);
    let sides: Vec<usize> = picked
        .labels()
        .unwrap()
        .iter()
        .map(|&l| side_of(l).unwrap())
        .collect();
    let mut y = Array2::zeros((2, picked.len()));
    for (j, &s) in sides.iter().enumerate() {
        y[(s, j)] = 1.0;
    }
    OrderedDataset::with_labels(picked.x().to_owned(), y, sides)
}

/// Train+test rows as `split,task_id,label,x…,y…` with a JSON sidecar
/// holding the config.
pub fn write_dataset_csv(
    csv_path: impl AsRef<std::path::Path>,
    train: &OrderedTask,
    test: &OrderedDataset,
    config: Option<&TaskConfig>,
) -> Result<()> {
    use std::io::Write;
    let csv_path = csv_path.as_ref();
    let d_x = train.data.input_dim();
    let d_y = train.data.output_dim();
    let mut out = String::from("split,task_id,label");
    for i in 0..d_x {
        out.push_str(&format!(",x_{i}"));
    }
    for r in 0..d_y {
        out.push_str(&format!(",y_{r}"));
    }
    out.push('\n');
    let mut write_rows = |split: &str, data: &OrderedDataset, boundaries: Option<&[usize]>| {
        for j in 0..data.len() {
            let task_id = boundaries
                .map(|b| b.iter().position(|&end| j < end).unwrap_or(b.len()))
                .unwrap_or(0);
            let label = data
                .labels()
                .map(|l| l[j].to_string())
                .unwrap_or_default();
            out.push_str(&format!("{split},{task_id},{label}"));
            for i in 0..d_x {
                out.push_str(&format!(",{}", data.x()[(i, j)]));
            }
            for r in 0..d_y {
                out.push_str(&format!(",{}", data.y()[(r, j)]));
            }
            out.push('\n');
        }
    };
    write_rows("train", &train.data, Some(&train.boundaries));
    write_rows("test", test, None);
    std::fs::write(csv_path, out).map_err(|e| Error::io(csv_path.display().to_string(), e))?;
    if let Some(cfg) = config {
        let sidecar = csv_path.with_extension("json");
        let body = serde_json::to_string_pretty(cfg).map_err(|e| {
            Error::parse(sidecar.display().to_string(), e.to_string())
        })?;
        let mut f = std::fs::File::create(&sidecar)
            .map_err(|e| Error::io(sidecar.display().to_string(), e))?;
        f.write_all(body.as_bytes())
            .map_err(|e| Error::io(sidecar.display().to_string(), e))?;
    }
    Ok(())
}

/// Inverse of [`write_dataset_csv`] (boundaries recovered from task ids).
pub fn read_dataset_csv(
    csv_path: impl AsRef<std::path::Path>,
) -> Result<(OrderedTask, OrderedDataset)> {
    let csv_path = csv_path.as_ref();
    let body = std::fs::read_to_string(csv_path)
        .map_err(|e| Error::io(csv_path.display().to_string(), e))?;
    let path_str = csv_path.display().to_string();
    let mut lines = body.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(&path_str, "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    let d_x = cols.iter().filter(|c| c.starts_with("x_")).count();
    let d_y = cols.iter().filter(|c| c.starts_with("y_")).count();
    if cols.len() != 3 + d_x + d_y {
        return Err(Error::parse(&path_str, format!("bad header: {header}")));
    }
    struct Rows {
        x: Vec<f64>,
        y: Vec<f64>,
        labels: Vec<Option<usize>>,
        task_ids: Vec<usize>,
    }
    let mut train = Rows {
        x: vec![],
        y: vec![],
        labels: vec![],
        task_ids: vec![],
    };
    let mut test = Rows {
        x: vec![],
        y: vec![],
        labels: vec![],
        task_ids: vec![],
    };
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(Error::parse(&path_str, format!("row {} malformed", lineno + 2)));
        }
        let rows = match f[0] {
            "train" => &mut train,
            "test" => &mut test,
            other => return Err(Error::parse(&path_str, format!("unknown split {other}"))),
        };
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::parse(&path_str, format!("bad float `{s}`")))
        };
        rows.task_ids.push(
            f[1].parse()
                .map_err(|_| Error::parse(&path_str, format!("bad task id `{}`", f[1])))?,
        );
        rows.labels.push(if f[2].is_empty() {
            None
        } else {
            Some(
                f[2].parse()
                    .map_err(|_| Error::parse(&path_str, format!("bad label `{}`", f[2])))?,
            )
        });
        for v in &f[3..3 + d_x] {
            rows.x.push(parse_f(v)?);
        }
        for v in &f[3 + d_x..] {
            rows.y.push(parse_f(v)?);
        }
    }
    let build = |rows: &Rows| -> Result<OrderedDataset> {
        let n = rows.task_ids.len();
        let x = Array2::from_shape_vec((n, d_x), rows.x.clone())
            .map_err(|e| Error::parse(&path_str, e.to_string()))?
            .t()
            .to_owned();
        let y = Array2::from_shape_vec((n, d_y), rows.y.clone())
            .map_err(|e| Error::parse(&path_str, e.to_string()))?
            .t()
            .to_owned();
        if rows.labels.iter().all(|l| l.is_some()) && n > 0 {
            OrderedDataset::with_labels(x, y, rows.labels.iter().map(|l| l.unwrap()).collect())
        } else {
            OrderedDataset::new(x, y)
        }
    };
    let train_data = build(&train)?;
    let mut boundaries = Vec::new();
    for i in 1..train.task_ids.len() {
        if train.task_ids[i] != train.task_ids[i - 1] {
            boundaries.push(i);
        }
    }
    boundaries.push(train.task_ids.len());
    Ok((
        OrderedTask {
            data: train_data,
            boundaries,
        },
        build(&test)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::offline_predict;

    #[test]
    fn gp_defaults_reproduce_task_shape() {
        let task = gen_gp1d(&Gp1dConfig::default(), 0).unwrap();
        assert_eq!(task.grid.len(), 201);
        assert_eq!(task.train.len(), 40);
        assert_eq!(task.test.len(), 160);
        // Disjoint by grid point.
        for i in 0..task.train.len() {
            for j in 0..task.test.len() {
                assert_ne!(task.train.x()[(0, i)], task.test.x()[(0, j)]);
            }
        }
    }

    #[test]
    fn gp_zero_noise_hits_curve() {
        let cfg = Gp1dConfig {
            noise_sigma: 0.0,
            ..Gp1dConfig::default()
        };
        let task = gen_gp1d(&cfg, 3).unwrap();
        for j in 0..task.train.len() {
            let x = task.train.x()[(0, j)];
            let gi = (x / cfg.grid_step).round() as usize;
            assert_eq!(task.train.y()[(0, j)], task.true_curve[gi]);
        }
    }

    #[test]
    fn gp_deterministic() {
        let a = gen_gp1d(&Gp1dConfig::default(), 7).unwrap();
        let b = gen_gp1d(&Gp1dConfig::default(), 7).unwrap();
        assert_eq!(a.train.x(), b.train.x());
        assert_eq!(a.train.y(), b.train.y());
        assert_eq!(a.true_curve, b.true_curve);
        let c = gen_gp1d(&Gp1dConfig::default(), 8).unwrap();
        assert_ne!(a.train.y(), c.train.y());
    }

    #[test]
    fn feature_map_properties() {
        let spec = gen_random_feature_map(100, 1, 4);
        let x = ndarray::arr1(&[0.7]);
        let zero = ndarray::arr1(&[0.0]);
        let kxx = kernel::eval_kernel(&spec, x.view(), x.view()).unwrap();
        assert!(kxx >= 0.0);
        assert!(kxx < 1.0, "normalized features keep k(x,x) = O(1), got {kxx}");
        let k0 = kernel::eval_kernel(&spec, zero.view(), x.view()).unwrap();
        assert_eq!(k0, 0.0);
        match &spec {
            KernelSpec::RandomFeatureTanh(t) => {
                assert_eq!(t.projection().nrows(), 100);
                assert_eq!(t.projection().ncols(), 1);
            }
            _ => panic!("wrong kernel kind"),
        }
    }

    #[test]
    fn cluster_one_hot_and_determinism() {
        let cfg = ClusterConfig {
            n_classes: 4,
            input_dim: 6,
            spread: 0.1,
            n_train: 30,
            n_test: 10,
        };
        let (train, test) = gen_cluster_classification(&cfg, 5).unwrap();
        assert_eq!(train.len(), 30);
        assert_eq!(test.len(), 10);
        for j in 0..train.len() {
            let col = train.y().column(j).to_vec();
            assert_eq!(col.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(col.iter().sum::<f64>(), 1.0);
        }
        let (train2, _) = gen_cluster_classification(&cfg, 5).unwrap();
        assert_eq!(train.x(), train2.x());
    }

    #[test]
    fn cluster_zero_spread_linearly_separable() {
        let cfg = ClusterConfig {
            n_classes: 3,
            input_dim: 8,
            spread: 0.0,
            n_train: 24,
            n_test: 9,
        };
        let (train, _) = gen_cluster_classification(&cfg, 11).unwrap();
        let kernel = KernelSpec::linear(8);
        let pred = offline_predict(&kernel, train.x(), train.y(), 1e-6, train.x()).unwrap();
        let acc = crate::ntk::accuracy_of(pred.view(), train.labels().unwrap());
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn shuffle_is_permutation() {
        let cfg = ClusterConfig {
            n_classes: 3,
            input_dim: 2,
            spread: 0.3,
            n_train: 21,
            n_test: 6,
        };
        let (train, _) = gen_cluster_classification(&cfg, 1).unwrap();
        let shuffled = order_samples(&train, &OrderingPolicy::RandomShuffle, 2).unwrap();
        assert_eq!(shuffled.boundaries, vec![21]);
        let mut orig: Vec<String> = (0..21)
            .map(|j| format!("{:?}", train.x().column(j).to_vec()))
            .collect();
        let mut perm: Vec<String> = (0..21)
            .map(|j| format!("{:?}", shuffled.data.x().column(j).to_vec()))
            .collect();
        orig.sort();
        perm.sort();
        assert_eq!(orig, perm);
    }

    #[test]
    fn class_incremental_sorts_stably() {
        let x = Array2::from_shape_fn((1, 4), |(_, j)| j as f64);
        let y = Array2::zeros((3, 4));
        let data = OrderedDataset::with_labels(x, y, vec![2, 0, 1, 0]).unwrap();
        let ordered = order_samples(&data, &OrderingPolicy::ClassIncremental, 0).unwrap();
        assert_eq!(ordered.data.labels().unwrap(), &[0, 0, 1, 2]);
        // Stable: the two label-0 samples keep their relative order.
        assert_eq!(ordered.data.x()[(0, 0)], 1.0);
        assert_eq!(ordered.data.x()[(0, 1)], 3.0);
        assert_eq!(ordered.boundaries, vec![2, 3, 4]);
    }

    #[test]
    fn domain_incremental_five_binary_tasks() {
        let cfg = ClusterConfig {
            n_classes: 10,
            input_dim: 4,
            spread: 0.2,
            n_train: 100,
            n_test: 20,
        };
        let (train, _) = gen_cluster_classification(&cfg, 9).unwrap();
        let ordered = order_samples(
            &train,
            &OrderingPolicy::DomainIncremental { pairings: vec![] },
            3,
        )
        .unwrap();
        assert_eq!(ordered.boundaries, vec![20, 40, 60, 80, 100]);
        assert_eq!(ordered.data.output_dim(), 2);
        let oy = ordered.data.y();
        for j in 0..100 {
            assert_eq!(oy.column(j).sum(), 1.0);
        }
        // Binary labels match the one-hot rows.
        for (j, &l) in ordered.data.labels().unwrap().iter().enumerate() {
            assert_eq!(ordered.data.y()[(l, j)], 1.0);
        }
    }

    #[test]
    fn domain_incremental_rejects_odd_classes() {
        let x = Array2::zeros((1, 3));
        let y = Array2::zeros((3, 3));
        let data = OrderedDataset::with_labels(x, y, vec![0, 1, 2]).unwrap();
        let err = order_samples(
            &data,
            &OrderingPolicy::DomainIncremental { pairings: vec![] },
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { .. }));
    }

    #[test]
    fn ordering_preserves_pair_multiset() {
        let cfg = ClusterConfig {
            n_classes: 4,
            input_dim: 3,
            spread: 0.2,
            n_train: 28,
            n_test: 4,
        };
        let (train, _) = gen_cluster_classification(&cfg, 2).unwrap();
        for policy in [OrderingPolicy::ClassIncremental, OrderingPolicy::RandomShuffle] {
            let ordered = order_samples(&train, &policy, 5).unwrap();
            let key = |d: &OrderedDataset, j: usize| {
                format!(
                    "{:?}|{:?}",
                    d.x().column(j).to_vec(),
                    d.y().column(j).to_vec()
                )
            };
            let mut a: Vec<String> = (0..28).map(|j| key(&train, j)).collect();
            let mut b: Vec<String> = (0..28).map(|j| key(&ordered.data, j)).collect();
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn dataset_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("task.csv");
        let cfg = ClusterConfig {
            n_classes: 4,
            input_dim: 3,
            spread: 0.15,
            n_train: 16,
            n_test: 8,
        };
        let (train, test) = gen_cluster_classification(&cfg, 6).unwrap();
        let ordered = order_samples(&train, &OrderingPolicy::ClassIncremental, 0).unwrap();
        let config = TaskConfig {
            kind: TaskKind::ClusterClassification(cfg),
            ordering: OrderingPolicy::ClassIncremental,
            seed: 6,
        };
        write_dataset_csv(&path, &ordered, &test, Some(&config)).unwrap();
        let (train2, test2) = read_dataset_csv(&path).unwrap();
        assert_eq!(train2.boundaries, ordered.boundaries);
        assert_eq!(train2.data.labels(), ordered.data.labels());
        assert!(
            crate::linalg::max_abs(
                (&train2.data.x().to_owned() - &ordered.data.x()).view()
            ) < 1e-12
        );
        assert!(
            crate::linalg::max_abs((&test2.x().to_owned() - &test.x()).view()) < 1e-12
        );
        let sidecar: TaskConfig = serde_json::from_str(
            &std::fs::read_to_string(path.with_extension("json")).unwrap(),
        )
        .unwrap();
        assert_eq!(sidecar, config);
    }
}
