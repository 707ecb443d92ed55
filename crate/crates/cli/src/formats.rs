//! Text file formats.
//!
//! Corpus text: optional `#vocab w1 w2 ...` header, then one line per
//! observation `id<TAB>word:count word:count ...`, where `word` is a
//! vocabulary token or a 0-based index. Corpus images: optional
//! `#bins b1 b2 ...` header, then `id<TAB>v1,v2,...,vK`. Labels:
//! `id<TAB>label`. Model: `DWH v1 M K J` followed by the sections `alpha`,
//! `beta`, `sigma`, `W`, `U`, floats in 17 significant digits. Latents:
//! `id<TAB>g1,...,gJ`. Splits: `id<TAB>query` or `id<TAB>index`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dwh_core::eval::{LatentMatrix, RetrievalReport, Split};
use dwh_core::model::{validate_params, HarmoniumParams, ModelDims, Observation, SparseCounts};
use dwh_core::train::TrainReport;
use dwh_core::{Corpus, Matrix};

use crate::error::{CliError, Result};

pub const MODEL_MAGIC: &str = "DWH v1";

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Non-blank lines with 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn split_id(path: &Path, line: usize, l: &str) -> Result<(String, String)> {
    let (id, rest) = l.split_once('\t').unwrap_or((l, ""));
    let id = id.trim();
    if id.is_empty() {
        return Err(CliError::parse(path, line, "empty id"));
    }
    Ok((id.to_string(), rest.trim().to_string()))
}

fn parse_float(path: &Path, line: usize, s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| CliError::parse(path, line, format!("malformed number {s:?}")))?;
    if !v.is_finite() {
        return Err(CliError::parse(path, line, format!("non-finite number {s:?}")));
    }
    Ok(v)
}

fn parse_float_list(path: &Path, line: usize, s: &str, sep: char) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(sep).map(|v| parse_float(path, line, v)).collect()
}

fn join_floats(v: &[f64], sep: &str) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

type Pairs = Vec<(usize, u32)>;

/// Parsed text file: ids, sparse counts and the vocabulary.
pub struct TextFile {
    pub vocab: Vec<String>,
    pub rows: Vec<(String, SparseCounts)>,
}

pub fn parse_text(path: &Path, text: &str) -> Result<TextFile> {
    let mut vocab: Option<Vec<String>> = None;
    let mut raw: Vec<(usize, String, Pairs)> = Vec::new();
    let mut lookup: BTreeMap<String, usize> = BTreeMap::new();
    let mut max_index = None;
    for (n, l) in lines(text) {
        if let Some(rest) = l.strip_prefix("#vocab") {
            if vocab.is_some() || !raw.is_empty() {
                return Err(CliError::parse(path, n, "#vocab must be the first line"));
            }
            let words: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
            for (i, w) in words.iter().enumerate() {
                if lookup.insert(w.clone(), i).is_some() {
                    return Err(CliError::parse(path, n, format!("duplicate vocabulary word {w:?}")));
                }
            }
            vocab = Some(words);
            continue;
        }
        if l.starts_with('#') {
            continue;
        }
        let (id, rest) = split_id(path, n, l)?;
        let mut pairs = Vec::new();
        let mut seen = BTreeSet::new();
        for entry in rest.split_whitespace() {
            let (word, count) = entry
                .rsplit_once(':')
                .ok_or_else(|| CliError::parse(path, n, format!("expected word:count, got {entry:?}")))?;
            let count: u32 = count
                .parse()
                .map_err(|_| CliError::parse(path, n, format!("malformed count in {entry:?}")))?;
            let index = match lookup.get(word) {
                Some(&i) => i,
                None => word.parse::<usize>().map_err(|_| {
                    CliError::parse(path, n, format!("unknown word {word:?}"))
                })?,
            };
            if let Some(v) = &vocab {
                if index >= v.len() {
                    return Err(CliError::parse(
                        path,
                        n,
                        format!("word index {index} outside the {}-word vocabulary", v.len()),
                    ));
                }
            }
            if !seen.insert(index) {
                return Err(CliError::parse(path, n, format!("word {word:?} listed twice")));
            }
            max_index = max_index.max(Some(index));
            if count > 0 {
                pairs.push((index, count));
            }
        }
        raw.push((n, id, pairs));
    }
    let vocab = vocab.unwrap_or_else(|| {
        (0..max_index.map_or(0, |m| m + 1)).map(|i| i.to_string()).collect()
    });
    let mut rows = Vec::with_capacity(raw.len());
    for (n, id, pairs) in raw {
        let counts = SparseCounts::from_pairs(vocab.len(), pairs)
            .map_err(|e| CliError::parse(path, n, e.to_string()))?;
        rows.push((id, counts));
    }
    Ok(TextFile { vocab, rows })
}

pub struct ImageFile {
    pub bin_labels: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

pub fn parse_images(path: &Path, text: &str) -> Result<ImageFile> {
    let mut bins: Option<Vec<String>> = None;
    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    for (n, l) in lines(text) {
        if let Some(rest) = l.strip_prefix("#bins") {
            if bins.is_some() || !rows.is_empty() {
                return Err(CliError::parse(path, n, "#bins must be the first line"));
            }
            bins = Some(rest.split_whitespace().map(str::to_string).collect());
            continue;
        }
        if l.starts_with('#') {
            continue;
        }
        let (id, rest) = split_id(path, n, l)?;
        let values = parse_float_list(path, n, &rest, ',')?;
        let expected = bins.as_ref().map(Vec::len).or(rows.first().map(|r| r.1.len()));
        if let Some(k) = expected {
            if values.len() != k {
                return Err(CliError::parse(path, n, format!("expected {k} values, got {}", values.len())));
            }
        }
        rows.push((id, values));
    }
    let k = bins
        .as_ref()
        .map(Vec::len)
        .or(rows.first().map(|r| r.1.len()))
        .unwrap_or(0);
    Ok(ImageFile {
        bin_labels: bins.unwrap_or_else(|| (0..k).map(|i| format!("b{i}")).collect()),
        rows,
    })
}

pub fn parse_labels(path: &Path, text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, l) in lines(text) {
        if l.starts_with('#') {
            continue;
        }
        let (id, label) = split_id(path, n, l)?;
        if label.is_empty() {
            return Err(CliError::parse(path, n, "missing label"));
        }
        out.push((id, label));
    }
    Ok(out)
}

fn index_by_id<T>(path: &Path, rows: Vec<(String, T)>) -> Result<BTreeMap<String, T>> {
    let mut map = BTreeMap::new();
    for (id, v) in rows {
        if map.contains_key(&id) {
            return Err(CliError::Join(format!("{}: duplicate id {id:?}", path.display())));
        }
        map.insert(id, v);
    }
    Ok(map)
}

/// Joins text, images and optional labels by id, in text-file order.
pub fn load_corpus(text: &Path, images: &Path, labels: Option<&Path>) -> Result<Corpus> {
    let t = parse_text(text, &read(text)?)?;
    let i = parse_images(images, &read(images)?)?;
    let l = match labels {
        Some(p) => Some((p, parse_labels(p, &read(p)?)?)),
        None => None,
    };
    join_corpus(text, t, images, i, l)
}

pub fn join_corpus(
    text_path: &Path,
    text: TextFile,
    image_path: &Path,
    images: ImageFile,
    labels: Option<(&Path, Vec<(String, String)>)>,
) -> Result<Corpus> {
    let mut seen = BTreeSet::new();
    for (id, _) in &text.rows {
        if !seen.insert(id.clone()) {
            return Err(CliError::Join(format!("{}: duplicate id {id:?}", text_path.display())));
        }
    }
    let mut by_id = index_by_id(image_path, images.rows)?;
    let mut label_map = match labels {
        Some((p, rows)) => Some((p, index_by_id(p, rows)?)),
        None => None,
    };
    let mut observations = Vec::with_capacity(text.rows.len());
    let mut ids = Vec::with_capacity(text.rows.len());
    let mut out_labels = label_map.as_ref().map(|_| Vec::new());
    for (id, x) in text.rows {
        let z = by_id.remove(&id).ok_or_else(|| {
            CliError::Join(format!("{}: no image for id {id:?}", image_path.display()))
        })?;
        if let (Some((p, map)), Some(out)) = (label_map.as_mut(), out_labels.as_mut()) {
            let label = map
                .remove(&id)
                .ok_or_else(|| CliError::Join(format!("{}: no label for id {id:?}", p.display())))?;
            out.push(label);
        }
        observations.push(Observation { x, z });
        ids.push(id);
    }
    if let Some(extra) = by_id.keys().next() {
        return Err(CliError::Join(format!(
            "{}: id {extra:?} has an image but no text",
            image_path.display()
        )));
    }
    if let Some((p, map)) = &label_map {
        if let Some(extra) = map.keys().next() {
            return Err(CliError::Join(format!("{}: id {extra:?} is not in the corpus", p.display())));
        }
    }
    Ok(Corpus::new(observations, text.vocab, images.bin_labels, out_labels, ids)?)
}

fn check_token(kind: &str, t: &str) -> Result<()> {
    if t.is_empty() || t.chars().any(char::is_whitespace) || t.starts_with('#') {
        return Err(CliError::Join(format!("{kind} {t:?} cannot be written to a corpus file")));
    }
    Ok(())
}

pub fn emit_text(corpus: &Corpus) -> Result<String> {
    let mut s = String::from("#vocab");
    for w in &corpus.vocab {
        check_token("vocabulary word", w)?;
        s.push(' ');
        s.push_str(w);
    }
    s.push('\n');
    for (obs, id) in corpus.observations.iter().zip(&corpus.ids) {
        check_token("id", id)?;
        s.push_str(id);
        s.push('\t');
        let entries: Vec<String> = obs
            .x
            .nonzeros()
            .iter()
            .map(|&(i, c)| format!("{}:{c}", corpus.vocab[i]))
            .collect();
        s.push_str(&entries.join(" "));
        s.push('\n');
    }
    Ok(s)
}

pub fn emit_images(corpus: &Corpus) -> Result<String> {
    let mut s = String::from("#bins");
    for b in &corpus.bin_labels {
        check_token("bin label", b)?;
        s.push(' ');
        s.push_str(b);
    }
    s.push('\n');
    for (obs, id) in corpus.observations.iter().zip(&corpus.ids) {
        let _ = writeln!(s, "{id}\t{}", join_floats(&obs.z, ","));
    }
    Ok(s)
}

pub fn emit_labels(corpus: &Corpus) -> Option<String> {
    let labels = corpus.labels.as_ref()?;
    let mut s = String::new();
    for (id, l) in corpus.ids.iter().zip(labels) {
        let _ = writeln!(s, "{id}\t{l}");
    }
    Some(s)
}

pub fn save_corpus(corpus: &Corpus, text: &Path, images: &Path, labels: Option<&Path>) -> Result<()> {
    write(text, &emit_text(corpus)?)?;
    write(images, &emit_images(corpus)?)?;
    if let (Some(p), Some(s)) = (labels, emit_labels(corpus)) {
        write(p, &s)?;
    }
    Ok(())
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn emit_model(p: &HarmoniumParams) -> String {
    let d = p.dims;
    let row = |v: &[f64]| v.iter().map(|x| fmt17(*x)).collect::<Vec<_>>().join(" ");
    let mut s = format!("{MODEL_MAGIC} {} {} {}\n", d.words, d.bins, d.aspects);
    for (name, v) in [("alpha", &p.alpha), ("beta", &p.beta), ("sigma", &p.sigma)] {
        let _ = writeln!(s, "{name}\n{}", row(v));
    }
    for (name, m) in [("W", &p.w), ("U", &p.u)] {
        let _ = writeln!(s, "{name}");
        for r in 0..m.rows() {
            let _ = writeln!(s, "{}", row(m.row(r)));
        }
    }
    s
}

/// Parses and validates a model file.
pub fn parse_model(path: &Path, text: &str) -> Result<HarmoniumParams> {
    let all: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim_end_matches('\r')))
        .collect();
    let mut it = all.into_iter();
    let (n, header) = it
        .next()
        .ok_or_else(|| CliError::parse(path, 1, "empty model file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 2 || fields[0] != "DWH" || fields[1] != "v1" {
        return Err(CliError::Version {
            path: path.to_path_buf(),
            found: fields.iter().take(2).copied().collect::<Vec<_>>().join(" "),
        });
    }
    if fields.len() != 5 {
        return Err(CliError::parse(path, n, "header must be `DWH v1 M K J`"));
    }
    let dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| CliError::parse(path, n, format!("malformed dimension {s:?}")))
    };
    let dims = ModelDims::new(dim(fields[2])?, dim(fields[3])?, dim(fields[4])?)
        .map_err(|e| CliError::parse(path, n, e.to_string()))?;

    let mut next_line = |what: &str| {
        it.next()
            .ok_or_else(|| CliError::parse(path, n, format!("unexpected end of file, expected {what}")))
    };
    let mut section = |name: &str, rows: usize, cols: usize| -> Result<Vec<f64>> {
        let (ln, l) = next_line(name)?;
        if l.trim() != name {
            return Err(CliError::parse(path, ln, format!("expected section {name:?}, found {l:?}")));
        }
        let mut out = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (ln, l) = next_line("a row of numbers")?;
            let v: Vec<f64> = l
                .split_whitespace()
                .map(|t| parse_float(path, ln, t))
                .collect::<Result<_>>()?;
            if v.len() != cols {
                return Err(CliError::parse(path, ln, format!("expected {cols} numbers, got {}", v.len())));
            }
            out.extend(v);
        }
        Ok(out)
    };
    let (m, k, j) = (dims.words, dims.bins, dims.aspects);
    let alpha = section("alpha", 1, m)?;
    let beta = section("beta", 1, k)?;
    let sigma = section("sigma", 1, k)?;
    let w = section("W", m, j)?;
    let u = section("U", k, j)?;
    for (ln, l) in it {
        if !l.trim().is_empty() {
            return Err(CliError::parse(path, ln, "trailing content after U"));
        }
    }
    let p = HarmoniumParams::new(
        dims,
        alpha,
        beta,
        sigma,
        Matrix::from_row_major(m, j, w),
        Matrix::from_row_major(k, j, u),
    )?;
    validate_params(&p)?.into_result()?;
    Ok(p)
}

pub fn save_model(p: &HarmoniumParams, path: &Path) -> Result<()> {
    validate_params(p)?.into_result()?;
    write(path, &emit_model(p))
}

pub fn load_model(path: &Path) -> Result<HarmoniumParams> {
    parse_model(path, &read(path)?)
}

pub fn emit_latents(l: &LatentMatrix) -> String {
    let mut s = String::new();
    for n in 0..l.len() {
        let _ = writeln!(s, "{}\t{}", l.ids[n], join_floats(l.row(n), ","));
    }
    s
}

pub fn parse_latents(path: &Path, text: &str) -> Result<LatentMatrix> {
    let img = parse_images(path, text)?;
    let dim = img.rows.first().map_or(0, |r| r.1.len());
    let mut data = Vec::with_capacity(img.rows.len() * dim);
    let mut ids = Vec::with_capacity(img.rows.len());
    for (id, v) in img.rows {
        data.extend(v);
        ids.push(id);
    }
    Ok(LatentMatrix::new(Matrix::from_row_major(ids.len(), dim, data), ids)?)
}

pub fn emit_split(split: &Split, ids: &[String]) -> String {
    let mut rows: Vec<(usize, &str)> = split.queries.iter().map(|&i| (i, "query")).collect();
    rows.extend(split.index.iter().map(|&i| (i, "index")));
    rows.sort();
    let mut s = String::new();
    for (i, role) in rows {
        let _ = writeln!(s, "{}\t{role}", ids[i]);
    }
    s
}

/// Resolves a split file against corpus ids. Ids not listed are unused.
pub fn parse_split(path: &Path, text: &str, ids: &[String]) -> Result<Split> {
    let position: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut split = Split::default();
    let mut seen = BTreeSet::new();
    for (n, l) in lines(text) {
        if l.starts_with('#') {
            continue;
        }
        let (id, role) = split_id(path, n, l)?;
        let &i = position
            .get(id.as_str())
            .ok_or_else(|| CliError::parse(path, n, format!("id {id:?} is not in the corpus")))?;
        if !seen.insert(i) {
            return Err(CliError::parse(path, n, format!("id {id:?} listed twice")));
        }
        match role.as_str() {
            "query" => split.queries.push(i),
            "index" => split.index.push(i),
            other => {
                return Err(CliError::parse(path, n, format!("role must be query or index, got {other:?}")))
            }
        }
    }
    Ok(split)
}

pub fn emit_average_precisions(r: &RetrievalReport) -> String {
    let mut s = String::from("query\tap\n");
    for (q, ap) in &r.per_query {
        let _ = writeln!(s, "{q}\t{ap}");
    }
    s
}

pub fn emit_pr_curve(points: &[(f64, f64)]) -> String {
    let mut s = String::from("recall\tprecision\n");
    for (r, p) in points {
        let _ = writeln!(s, "{r}\t{p}");
    }
    s
}

pub fn emit_train_report(r: &TrainReport) -> String {
    let mut s = String::from(
        "epoch\tgrad_norm\tclamped_words\tgmf_divergences\trate_overflows\tprojections\telapsed_secs\n",
    );
    for e in &r.epochs {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.epoch,
            e.grad_norm,
            e.clamped_words,
            e.gmf_divergences,
            e.rate_overflows,
            e.projections,
            e.elapsed_secs
        );
    }
    s
}
