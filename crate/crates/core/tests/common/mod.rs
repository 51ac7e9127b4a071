//! Independent reference implementations used as test oracles. None of these
//! call into the library's numeric code beyond building inputs.
#![allow(dead_code)]

use std::collections::HashMap;

use adaincv::numcore::EmbeddingMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub fn unit_matrix(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> EmbeddingMatrix {
    let rows: Vec<Vec<f64>> = (0..rows).map(|_| unit_vec(rng, dim)).collect();
    EmbeddingMatrix::from_unit_rows(dim, &rows).unwrap()
}

/// Unit rows scattered around `centers` random directions.
pub fn blobs(rng: &mut ChaCha8Rng, n: usize, dim: usize, centers: usize, spread: f64) -> EmbeddingMatrix {
    let cs: Vec<Vec<f64>> = (0..centers).map(|_| unit_vec(rng, dim)).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let c = &cs[rng.random_range(0..centers)];
            let v: Vec<f64> = c
                .iter()
                .map(|x| x + spread * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    EmbeddingMatrix::from_unit_rows(dim, &rows).unwrap()
}

pub fn ip(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Neumaier-compensated sum.
pub fn csum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

// ---------------------------------------------------------------- DBSCAN

/// Reference DBSCAN: core flags from an O(n²) scan, union-find over
/// core-core edges, clusters numbered by smallest core index, and each border
/// point given the smallest cluster id among its core neighbours.
pub fn naive_dbscan(x: &EmbeddingMatrix, eps: f64, min_pts: usize) -> Vec<i64> {
    let n = x.rows();
    let near = |i: usize, j: usize| 1.0 - ip(x.row(i), x.row(j)) <= eps;
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts)
        .collect();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if core[i] && core[j] && near(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut id_of_root: HashMap<usize, i64> = HashMap::new();
    let mut labels = vec![-1i64; n];
    for i in 0..n {
        if core[i] {
            let r = find(&mut parent, i);
            let next = id_of_root.len() as i64;
            labels[i] = *id_of_root.entry(r).or_insert(next);
        }
    }
    for i in 0..n {
        if !core[i] {
            labels[i] = (0..n)
                .filter(|&j| core[j] && near(i, j))
                .map(|j| labels[j])
                .min()
                .unwrap_or(-1);
        }
    }
    labels
}

/// Canonical relabeling: clusters renumbered by first appearance.
pub fn canonical(labels: &[i64]) -> Vec<i64> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|&l| {
            if l < 0 {
                -1
            } else {
                let next = map.len() as i64;
                *map.entry(l).or_insert(next)
            }
        })
        .collect()
}

// ---------------------------------------------------------------- adaptive

/// `−τ log ΣₙΣₘ exp(−⟨Fₙ,Fₘ⟩/τ)` summed directly (no max shift).
pub fn oracle_sim_h(f: &EmbeddingMatrix, tau: f64) -> f64 {
    let k = f.rows();
    let terms = (0..k).flat_map(|n| (0..k).map(move |m| (n, m)));
    -tau * csum(terms.map(|(n, m)| (-ip(f.row(n), f.row(m)) / tau).exp())).ln()
}

pub fn oracle_per_instance(f: &EmbeddingMatrix, tau: f64) -> Vec<f64> {
    (0..f.rows())
        .map(|n| -tau * csum((0..f.rows()).map(|m| (-ip(f.row(n), f.row(m)) / tau).exp())).ln())
        .collect()
}

/// `τ log Σₙ 1 / Σₘ exp(−⟨Fₙ,Fₘ⟩/τ)`, the closed form that skips the
/// per-instance values entirely.
pub fn oracle_sim_lh(f: &EmbeddingMatrix, tau: f64) -> f64 {
    let k = f.rows();
    let inv = (0..k).map(|n| 1.0 / csum((0..k).map(|m| (-ip(f.row(n), f.row(m)) / tau).exp())));
    tau * csum(inv).ln()
}

// ---------------------------------------------------------------- retrieval

/// Per-query (AP, first-hit rank) by explicit sort of the full gallery.
pub fn oracle_retrieval(q: &EmbeddingMatrix, qid: &[i64], g: &EmbeddingMatrix, gid: &[i64]) -> Vec<(f64, usize)> {
    (0..q.rows())
        .map(|i| {
            let mut items: Vec<(f64, usize)> = (0..g.rows()).map(|j| (ip(q.row(i), g.row(j)), j)).collect();
            items.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let mut hits = 0usize;
            let mut precisions = Vec::new();
            let mut first = 0;
            for (pos, &(_, j)) in items.iter().enumerate() {
                if gid[j] == qid[i] {
                    hits += 1;
                    precisions.push(hits as f64 / (pos + 1) as f64);
                    if first == 0 {
                        first = pos + 1;
                    }
                }
            }
            (precisions.iter().sum::<f64>() / precisions.len() as f64, first)
        })
        .collect()
}

pub fn oracle_map_cmc(
    q: &EmbeddingMatrix,
    qid: &[i64],
    g: &EmbeddingMatrix,
    gid: &[i64],
    ks: &[usize],
) -> (f64, Vec<f64>) {
    let per = oracle_retrieval(q, qid, g, gid);
    let n = per.len() as f64;
    let map = per.iter().map(|p| p.0).sum::<f64>() / n;
    let cmc = ks
        .iter()
        .map(|&k| per.iter().filter(|p| p.1 <= k).count() as f64 / n)
        .collect();
    (map, cmc)
}

// ---------------------------------------------------------------- clustering agreement

fn singletonize(labels: &[i64]) -> Vec<i64> {
    let base = labels.iter().copied().max().unwrap_or(0) + 1;
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| if l < 0 { base + i as i64 } else { l })
        .collect()
}

fn table(a: &[i64], b: &[i64]) -> (HashMap<(i64, i64), f64>, HashMap<i64, f64>, HashMap<i64, f64>) {
    let (a, b) = (singletonize(a), singletonize(b));
    let mut t = HashMap::new();
    let mut ra = HashMap::new();
    let mut rb = HashMap::new();
    for (&x, &y) in a.iter().zip(&b) {
        *t.entry((x, y)).or_insert(0.0) += 1.0;
        *ra.entry(x).or_insert(0.0) += 1.0;
        *rb.entry(y).or_insert(0.0) += 1.0;
    }
    (t, ra, rb)
}

pub fn oracle_ari(a: &[i64], b: &[i64]) -> f64 {
    let (t, ra, rb) = table(a, b);
    let c2 = |x: f64| x * (x - 1.0) / 2.0;
    let n = a.len() as f64;
    let idx: f64 = t.values().map(|&v| c2(v)).sum();
    let sa: f64 = ra.values().map(|&v| c2(v)).sum();
    let sb: f64 = rb.values().map(|&v| c2(v)).sum();
    let exp = sa * sb / c2(n);
    let max = (sa + sb) / 2.0;
    if max == exp {
        1.0
    } else {
        (idx - exp) / (max - exp)
    }
}

pub fn oracle_nmi(a: &[i64], b: &[i64]) -> f64 {
    let (t, ra, rb) = table(a, b);
    let n = a.len() as f64;
    let h = |m: &HashMap<i64, f64>| -m.values().map(|&v| (v / n) * (v / n).ln()).sum::<f64>();
    let (ha, hb) = (h(&ra), h(&rb));
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    let mi: f64 = t
        .iter()
        .map(|(&(x, y), &v)| (v / n) * ((v / n) / ((ra[&x] / n) * (rb[&y] / n))).ln())
        .sum();
    mi / ((ha + hb) / 2.0)
}

// ---------------------------------------------------------------- finite differences

/// Central difference `(f(x+h) − f(x−h)) / 2h` along each coordinate.
pub fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let a = f(&xp);
        xp[i] = x[i] - h;
        let b = f(&xp);
        xp[i] = x[i];
        g.push((a - b) / (2.0 * h));
    }
    g
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let d = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / na.max(nb).max(floor)
}

// ---------------------------------------------------------------- gradient instances
//
// These build random problems and compare the library's analytic gradients
// with `central_diff`; the returned value is the relative error.

use adaincv::encoder::{backward, forward, forward_cached, EncoderParams};
use adaincv::loss::{hybrid_nce, sample_objective};
use adaincv::memory::ClusterMemory;

pub const FD_STEP: f64 = 1e-5;

fn random_memory(r: &mut ChaCha8Rng, dim: usize, n_c: usize, n_o: usize, tau: f64) -> ClusterMemory {
    let mut m = ClusterMemory::from_centroids(unit_matrix(r, n_c, dim), 0.2, tau).unwrap();
    if n_o > 0 {
        m.set_outlier_bank(unit_matrix(r, n_o, dim)).unwrap();
    }
    m
}

pub fn hybrid_grad_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let dim = r.random_range(2..=12);
    let (n_c, n_o) = (r.random_range(1..=8), r.random_range(0..=5));
    let tau = r.random_range(0.05..0.5);
    let mem = random_memory(&mut r, dim, n_c, n_o, tau);
    let pos = r.random_range(0..n_c);
    let q = unit_vec(&mut r, dim);
    let (_, g) = hybrid_nce(&q, &mem, pos).unwrap();
    let fd = central_diff(&q, FD_STEP, |x| hybrid_nce(x, &mem, pos).unwrap().0);
    rel_err(&g, &fd, 1e-8)
}

fn flatten(p: &EncoderParams) -> Vec<f64> {
    p.tensors().into_iter().flatten().copied().collect()
}

fn unflatten(template: &EncoderParams, flat: &[f64]) -> EncoderParams {
    let mut p = template.clone();
    let mut it = flat.iter();
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v = *it.next().unwrap();
        }
    }
    p
}

/// Mean per-sample objective of a small batch pushed through the encoder,
/// differentiated with respect to every weight and bias.
pub fn encoder_grad_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (raw_dim, out_dim) = (r.random_range(3..=8), r.random_range(2..=5));
    let hidden = if r.random_bool(0.5) {
        Some(r.random_range(2..=6))
    } else {
        None
    };
    let mut params = EncoderParams::init(raw_dim, out_dim, hidden, seed).unwrap();
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v += 0.3 * r.sample::<f64, _>(StandardNormal);
        }
    }
    let batch = r.random_range(1..=4);
    let raw_rows: Vec<Vec<f64>> = (0..batch)
        .map(|_| (0..raw_dim).map(|_| r.sample(StandardNormal)).collect())
        .collect();
    let raw = EmbeddingMatrix::from_rows(raw_dim, &raw_rows).unwrap();
    let (n_c, n_o) = (r.random_range(1..=5), r.random_range(0..=3));
    let tau = r.random_range(0.05..0.5);
    let mem = random_memory(&mut r, out_dim, n_c, n_o, tau);
    let lambda = if r.random_bool(0.5) { 1.0 } else { 0.0 };
    let pos: Vec<usize> = (0..batch).map(|_| r.random_range(0..n_c)).collect();
    let teacher = unit_matrix(&mut r, batch, out_dim);

    let loss = |p: &EncoderParams| {
        let e = forward(p, &raw).unwrap();
        (0..batch)
            .map(|b| {
                sample_objective(e.row(b), teacher.row(b), &mem, pos[b], lambda)
                    .unwrap()
                    .0
                    .total
            })
            .sum::<f64>()
            / batch as f64
    };

    let cache = forward_cached(&params, &raw).unwrap();
    let mut upstream = Vec::with_capacity(batch * out_dim);
    for b in 0..batch {
        let (_, g) = sample_objective(cache.embeddings.row(b), teacher.row(b), &mem, pos[b], lambda).unwrap();
        upstream.extend(g.into_iter().map(|x| x / batch as f64));
    }
    let upstream = EmbeddingMatrix::new(batch, out_dim, upstream).unwrap();
    let analytic = flatten(&backward(&params, &cache, &upstream).unwrap());
    let fd = central_diff(&flatten(&params), FD_STEP, |x| loss(&unflatten(&params, x)));
    rel_err(&analytic, &fd, 1e-8)
}

// ---------------------------------------------------------------- retrieval instances

/// Random query/gallery split over `n_ids` identities. Every identity appears
/// in the gallery; features sit around per-identity directions.
pub fn random_split(
    seed: u64,
    nq: usize,
    ng: usize,
    n_ids: usize,
    dim: usize,
) -> (EmbeddingMatrix, Vec<i64>, EmbeddingMatrix, Vec<i64>) {
    let mut r = rng(seed);
    let centers: Vec<Vec<f64>> = (0..n_ids).map(|_| unit_vec(&mut r, dim)).collect();
    let spread = r.random_range(0.2..1.5);
    let sample = |id: usize, r: &mut ChaCha8Rng| {
        let v: Vec<f64> = centers[id]
            .iter()
            .map(|c| c + spread * r.sample::<f64, _>(StandardNormal))
            .collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let gid: Vec<i64> = (0..ng)
        .map(|j| {
            if j < n_ids {
                j as i64
            } else {
                r.random_range(0..n_ids) as i64
            }
        })
        .collect();
    let qid: Vec<i64> = (0..nq).map(|_| r.random_range(0..n_ids) as i64).collect();
    let g: Vec<Vec<f64>> = gid.iter().map(|&i| sample(i as usize, &mut r)).collect();
    let q: Vec<Vec<f64>> = qid.iter().map(|&i| sample(i as usize, &mut r)).collect();
    (
        EmbeddingMatrix::from_unit_rows(dim, &q).unwrap(),
        qid,
        EmbeddingMatrix::from_unit_rows(dim, &g).unwrap(),
        gid,
    )
}

// ---------------------------------------------------------------- training fixtures

use adaincv::synthgen::{generate, generate_holdout, SynthSpec};
use adaincv::trainer::{EvalData, TrainConfig, TrainData};

pub const DESK_SCALE_CONF: &str = include_str!("../../../../configs/desk_scale.conf");

pub fn desk_config() -> TrainConfig {
    TrainConfig::from_kv_str(DESK_SCALE_CONF).unwrap()
}

pub fn synth_pair(spec: &SynthSpec) -> (TrainData, EvalData) {
    (
        TrainData::from(&generate(spec).unwrap()),
        EvalData::from(&generate_holdout(spec).unwrap()),
    )
}

pub fn small_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        n_identities: 16,
        samples_per_identity: 8,
        seed,
        ..SynthSpec::default()
    }
}

// ---------------------------------------------------------------- CLI helpers

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

pub fn run_cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adaincv")).args(args).output().unwrap()
}

/// Every file under `dir`, keyed by relative path.
pub fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}
