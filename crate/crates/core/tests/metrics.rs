mod common;

use std::collections::BTreeSet;

use common::{normal, rng};
use dwh_core::corpus::Corpus;
use dwh_core::eval::{
    annotation_eval, average_precision, nearest_centroid_eval, precision_recall_curve, project,
    retrieval_eval, retrieve, topic_report, LatentMatrix, Ranking, Split,
};
use dwh_core::gmf::GmfConfig;
use dwh_core::model::{HarmoniumParams, ModelDims, Observation};
use dwh_core::{Error, Matrix};
use rand::seq::SliceRandom;
use rand::Rng;

fn ranking(ids: &[String]) -> Ranking {
    Ranking {
        query: "q".into(),
        entries: ids.iter().enumerate().map(|(r, id)| (id.clone(), -(r as f64))).collect(),
    }
}

fn ids(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn set(v: &[&str]) -> BTreeSet<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn three_candidate_example_is_exact() {
    let ap = average_precision(&ranking(&ids(&["a", "b", "c"])), &set(&["a", "c"])).unwrap();
    assert_eq!(ap, (1.0 / 1.0 + 2.0 / 3.0) / 2.0);
    assert_eq!(average_precision(&ranking(&ids(&["a", "b"])), &set(&["a", "b"])).unwrap(), 1.0);
}

#[test]
fn pr_curve_relates_to_average_precision() {
    let r = ranking(&ids(&["a", "b", "c"]));
    let rel = set(&["a", "c"]);
    let curve = precision_recall_curve(&r, &rel).unwrap();
    assert_eq!(curve[0], (0.5, 1.0));
    // AP is the right-endpoint sum Σ Δrecall · precision.
    let mut prev = 0.0;
    let mut step = 0.0;
    let mut trapezoid = 0.0;
    let mut prev_p = curve[0].1;
    for &(rec, p) in &curve {
        step += (rec - prev) * p;
        trapezoid += (rec - prev) * 0.5 * (p + prev_p);
        prev = rec;
        prev_p = p;
    }
    let ap = average_precision(&r, &rel).unwrap();
    assert!((step - ap).abs() < 1e-15);
    // (0,1)→(0.5,1) gives 0.5; (0.5,0.5)→(1,2/3) gives 0.5·(0.5+2/3)/2.
    assert!((trapezoid - (0.5 + 0.25 * (0.5 + 2.0 / 3.0))).abs() < 1e-15);
    let mut recall_seen = 0.0;
    for &(rec, _) in &curve {
        assert!(rec >= recall_seen);
        recall_seen = rec;
    }
}

fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == items.len() {
        out.push(items.clone());
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, out);
        items.swap(k, i);
    }
}

#[test]
fn random_ranking_matches_enumerated_expectation() {
    let names: Vec<String> = (0..6).map(|i| format!("c{i}")).collect();
    let rel = set(&["c0", "c1"]);
    let mut all = Vec::new();
    permutations(&mut (0..6).collect(), 0, &mut all);
    assert_eq!(all.len(), 720);
    let expected: f64 = all
        .iter()
        .map(|p| {
            let order: Vec<String> = p.iter().map(|&i| names[i].clone()).collect();
            average_precision(&ranking(&order), &rel).unwrap()
        })
        .sum::<f64>()
        / 720.0;
    let mut r = rng(8);
    let mut order = names.clone();
    let trials = 10_000;
    let mut total = 0.0;
    for _ in 0..trials {
        order.shuffle(&mut r);
        total += average_precision(&ranking(&order), &rel).unwrap();
    }
    assert!((total / trials as f64 - expected).abs() < 0.01);
}

#[test]
fn ap_ignores_reordering_of_irrelevant_items() {
    let a = ranking(&ids(&["r1", "x", "y", "r2", "z"]));
    let b = ranking(&ids(&["r1", "z", "x", "r2", "y"]));
    let rel = set(&["r1", "r2"]);
    assert_eq!(average_precision(&a, &rel).unwrap(), average_precision(&b, &rel).unwrap());
}

fn latents(rows: Vec<Vec<f64>>) -> LatentMatrix {
    let n = rows.len();
    LatentMatrix::new(Matrix::from_rows(&rows), (0..n).map(|i| format!("d{i:03}")).collect()).unwrap()
}

#[test]
fn retrieval_basics() {
    let index = latents(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0], vec![1.0, 1.0]]);
    let r = retrieve("q", &[1.0, 0.0], &index, 4).unwrap();
    assert_eq!(r.entries[0], ("d000".to_string(), 1.0));
    let score = |id: &str, r: &Ranking| r.entries.iter().find(|e| e.0 == id).unwrap().1;
    assert_eq!(score("d001", &r), 0.0);
    assert_eq!(score("d002", &r), -1.0);
    assert_eq!(r.entries.last().unwrap().0, "d002");
    let scaled = retrieve("q", &[7.5, 0.0], &index, 4).unwrap();
    let order = |r: &Ranking| r.entries.iter().map(|e| e.0.clone()).collect::<Vec<_>>();
    assert_eq!(order(&r), order(&scaled));
    assert_eq!(retrieve("q", &[0.0, 0.0], &index, 4), Err(Error::ZeroQuery));
    let bigger = latents(vec![vec![3.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0], vec![1.0, 1.0]]);
    let r2 = retrieve("q", &[0.6, 0.2], &bigger, 4).unwrap();
    let r1 = retrieve("q", &[0.6, 0.2], &index, 4).unwrap();
    assert!((score("d000", &r1) - score("d000", &r2)).abs() < 1e-15);
}

#[test]
fn duplicated_index_gives_perfect_map() {
    let mut r = rng(2);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for n in 0..10 {
        let v = vec![normal(&mut r), normal(&mut r), normal(&mut r)];
        rows.push(v.clone());
        rows.push(v);
        labels.push(format!("l{n}"));
        labels.push(format!("l{n}"));
    }
    let report = retrieval_eval(&latents(rows), &labels, &Split::alternating(20)).unwrap();
    assert_eq!(report.mean_ap, 1.0);
    assert_eq!(report.pr_curve, [1.0; 11]);
}

fn random_ranking_map(c: usize, sims: usize) -> f64 {
    let names: Vec<String> = (0..2 * c).map(|i| format!("c{i}")).collect();
    let rel: BTreeSet<String> = names[..c].iter().cloned().collect();
    let mut r = rng(99);
    let mut order = names.clone();
    let mut total = 0.0;
    for _ in 0..sims {
        order.shuffle(&mut r);
        total += average_precision(&ranking(&order), &rel).unwrap();
    }
    total / sims as f64
}

#[test]
fn random_latents_give_chance_map_and_rotation_invariance() {
    let c = 20;
    let queries = 400;
    let mut r = rng(3);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut split = Split::default();
    for n in 0..2 * c + queries {
        rows.push((0..4).map(|_| normal(&mut r)).collect::<Vec<f64>>());
        labels.push(format!("l{}", n % 2));
        if n < 2 * c {
            split.index.push(n);
        } else {
            split.queries.push(n);
        }
    }
    let m = latents(rows.clone());
    let report = retrieval_eval(&m, &labels, &split).unwrap();
    let chance = random_ranking_map(c, 20_000);
    assert!((report.mean_ap - chance).abs() < 0.02, "{} vs {chance}", report.mean_ap);
    assert!((0.0..=1.0).contains(&report.mean_ap));

    // Rotation in the (0, 1) plane and a reflection of axis 3.
    let (s, co) = (0.3f64.sin(), 0.3f64.cos());
    let rotated: Vec<Vec<f64>> = rows
        .iter()
        .map(|v| vec![co * v[0] - s * v[1], s * v[0] + co * v[1], v[2], -v[3]])
        .collect();
    let rot = retrieval_eval(&latents(rotated), &labels, &split).unwrap();
    assert!((rot.mean_ap - report.mean_ap).abs() < 1e-12);
}

#[test]
fn unsupported_query_label_is_skipped() {
    let m = latents(vec![vec![1.0], vec![2.0], vec![1.0]]);
    let labels = ids(&["a", "b", "a"]);
    let split = Split { index: vec![0, 2], queries: vec![1] };
    let report = retrieval_eval(&m, &labels, &split).unwrap();
    assert_eq!(report.skipped, vec!["d001".to_string()]);
    assert!(report.per_query.is_empty());
}

#[test]
fn nearest_centroid_matches_brute_force() {
    let mut r = rng(4);
    let rows: Vec<Vec<f64>> = (0..20).map(|_| vec![normal(&mut r), normal(&mut r)]).collect();
    let labels: Vec<String> = (0..20).map(|_| if r.random_bool(0.5) { "a" } else { "b" }.to_string()).collect();
    let train: Vec<usize> = (0..10).collect();
    let test: Vec<usize> = (10..20).collect();
    let m = latents(rows.clone());
    let report = nearest_centroid_eval(&m, &labels, &train, &test).unwrap();
    let centroid = |l: &str| {
        let members: Vec<&Vec<f64>> = train.iter().filter(|&&i| labels[i] == l).map(|&i| &rows[i]).collect();
        let n = members.len() as f64;
        [members.iter().map(|v| v[0]).sum::<f64>() / n, members.iter().map(|v| v[1]).sum::<f64>() / n]
    };
    let (ca, cb) = (centroid("a"), centroid("b"));
    let d = |v: &[f64], c: [f64; 2]| (v[0] - c[0]).powi(2) + (v[1] - c[1]).powi(2);
    let correct = test
        .iter()
        .filter(|&&i| {
            let guess = if d(&rows[i], ca) <= d(&rows[i], cb) { "a" } else { "b" };
            guess == labels[i]
        })
        .count();
    assert_eq!(report.accuracy, correct as f64 / 10.0);
    let total: f64 = report.confusion.as_slice().iter().sum();
    assert_eq!(total, 10.0);
}

#[test]
fn identical_latents_pick_first_label() {
    let m = latents(vec![vec![1.0, 1.0]; 6]);
    let labels = ids(&["b", "a", "b", "a", "b", "b"]);
    let report = nearest_centroid_eval(&m, &labels, &[0, 1], &[2, 3, 4, 5]).unwrap();
    assert_eq!(report.accuracy, 0.25);
    let bad = nearest_centroid_eval(&m, &ids(&["a", "a", "a", "a", "a", "c"]), &[0], &[5]);
    assert_eq!(bad.unwrap_err(), Error::UnseenLabel("c".into()));
}

fn small_corpus() -> Corpus {
    let rows = [
        (vec![3, 0, 0, 1], vec![1.0, 0.0]),
        (vec![0, 2, 0, 0], vec![0.0, 1.0]),
        (vec![1, 0, 4, 0], vec![0.5, 0.5]),
        (vec![0, 0, 0, 2], vec![2.0, 0.0]),
    ];
    Corpus::new(
        rows.iter().map(|(x, z)| Observation::from_dense(x, z)).collect(),
        ids(&["sun", "sea", "car", "dog"]),
        ids(&["p", "q"]),
        Some(ids(&["x", "y", "x", "y"])),
        ids(&["d0", "d1", "d2", "d3"]),
    )
    .unwrap()
}

#[test]
fn image_free_annotation_is_fixed_ranking_ap() {
    let c = small_corpus();
    let mut p = HarmoniumParams::zeros(ModelDims::new(4, 2, 1).unwrap());
    p.alpha = vec![0.4, -0.2, 0.1, -1.0];
    let report = annotation_eval(&p, &c, &[2, 4], &GmfConfig::default()).unwrap();
    // Fixed ranking sun, car, sea, dog for every image.
    let order = ids(&["0", "2", "1", "3"]);
    for &(n, ap) in &report.by_top_n {
        let mut total = 0.0;
        for obs in &c.observations {
            let truth: BTreeSet<String> = obs.x.nonzeros().iter().map(|e| e.0.to_string()).collect();
            total += average_precision(&ranking(&order[..n]), &truth).unwrap();
        }
        assert!((ap - total / 4.0).abs() < 1e-12);
    }
}

#[test]
fn perfect_annotation_scores_one() {
    let c = small_corpus().subset(&[1]);
    let mut p = HarmoniumParams::zeros(ModelDims::new(4, 2, 1).unwrap());
    p.alpha = vec![-1.0, 1.0, -1.0, -1.0];
    let report = annotation_eval(&p, &c, &[1, 4], &GmfConfig::default()).unwrap();
    assert_eq!(report.by_top_n, vec![(1, 1.0), (4, 1.0)]);
}

#[test]
fn projection_and_topics() {
    let c = small_corpus();
    let mut p = HarmoniumParams::zeros(ModelDims::new(4, 2, 1).unwrap());
    assert!(project(&p, &c).unwrap().rows.as_slice().iter().all(|v| *v == 0.0));
    p.w = Matrix::from_rows(&[vec![0.1], vec![0.5], vec![-0.2], vec![0.3]]);
    p.u = Matrix::from_rows(&[vec![0.2], vec![0.0]]);
    let proj = project(&p, &c).unwrap();
    let doubled_obs = Observation::from_dense(&[6, 0, 0, 2], &[2.0, 0.0]);
    let mut c2 = c.clone();
    c2.observations[0] = doubled_obs;
    let proj2 = project(&p, &c2).unwrap();
    assert!((proj2.row(0)[0] - 2.0 * proj.row(0)[0]).abs() < 1e-15);

    let report = topic_report(&p, &c, 2, 2).unwrap();
    assert_eq!(report.aspects[0].words[0].0, "sea");
    assert_eq!(report.aspects[0].words.len(), 2);
    let text = report.to_string();
    assert!(text.starts_with("aspect 0\twords: sea(0.5000) dog(0.3000)"));

    // Reordering the vocabulary (with W rows) leaves the word list unchanged.
    let perm = [3usize, 0, 2, 1];
    let mut q = p.clone();
    q.w = Matrix::from_rows(&perm.iter().map(|&i| p.w.row(i).to_vec()).collect::<Vec<_>>());
    let mut cq = c.clone();
    cq.vocab = perm.iter().map(|&i| c.vocab[i].clone()).collect();
    for obs in cq.observations.iter_mut() {
        let dense = obs.x.to_dense();
        *obs = Observation::from_dense(&perm.iter().map(|&i| dense[i]).collect::<Vec<_>>(), &obs.z);
    }
    assert_eq!(topic_report(&q, &cq, 4, 4).unwrap(), topic_report(&p, &c, 4, 4).unwrap());
}
