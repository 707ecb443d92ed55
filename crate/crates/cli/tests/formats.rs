use std::path::Path;

use dwh_cli::formats::*;
use dwh_cli::CliError;
use dwh_core::corpus::{generate_synthetic, SyntheticSpec};
use dwh_core::eval::{LatentMatrix, Split};
use dwh_core::model::{Observation, SparseCounts};
use dwh_core::{oracle, Corpus, Error, Matrix};
use proptest::prelude::*;

fn p() -> &'static Path {
    Path::new("mem")
}

fn synthetic() -> Corpus {
    generate_synthetic(&SyntheticSpec::disjoint_clusters(2, 12, 4, 1.5, 0.5, 0.3, 30, 3)).unwrap()
}

fn join(text: &str, images: &str, labels: Option<&str>) -> dwh_cli::Result<Corpus> {
    join_corpus(
        p(),
        parse_text(p(), text)?,
        p(),
        parse_images(p(), images)?,
        labels.map(|l| (p(), parse_labels(p(), l).unwrap())),
    )
}

#[test]
fn corpus_round_trips_through_files() {
    let c = synthetic();
    let dir = tempfile::tempdir().unwrap();
    let (t, i, l) = (dir.path().join("t"), dir.path().join("i"), dir.path().join("l"));
    save_corpus(&c, &t, &i, Some(&l)).unwrap();
    assert_eq!(load_corpus(&t, &i, Some(&l)).unwrap(), c);
    let again = (read(&t).unwrap(), read(&i).unwrap());
    assert_eq!(again, (emit_text(&c).unwrap(), emit_images(&c).unwrap()));
}

#[test]
fn empty_document_is_all_zero() {
    let c = join("#vocab a b\nd1\t\nd2\tb:3\n", "d1\t0.5\nd2\t1\n", None).unwrap();
    assert_eq!(c.observations[0].x, SparseCounts::zeros(2));
    assert_eq!(c.observations[1].x.to_dense(), vec![0, 3]);
    assert_eq!(c.bin_labels, vec!["b0"]);
}

#[test]
fn words_by_index_without_header() {
    let t = parse_text(p(), "x\t0:1 3:2\ny\t1:1\n").unwrap();
    assert_eq!(t.vocab, vec!["0", "1", "2", "3"]);
    assert_eq!(t.rows[0].1.to_dense(), vec![1, 0, 0, 2]);
    let with_header = parse_text(p(), "#vocab a b c\nx\ta:1 2:4\n").unwrap();
    assert_eq!(with_header.rows[0].1.to_dense(), vec![1, 0, 4]);
}

fn parse_line(e: CliError) -> usize {
    match e {
        CliError::Parse { line, .. } => line,
        other => panic!("expected a parse error, got {other}"),
    }
}

#[test]
fn malformed_count_names_line() {
    let e = parse_text(p(), "#vocab a b\nd1\ta:1\nd2\tword:abc\n").err().unwrap();
    assert!(e.to_string().contains("mem:3:"), "{e}");
    assert_eq!(parse_line(e), 3);
}

#[test]
fn text_errors() {
    let cases = [
        ("#vocab a\nd\tb:1\n", 2),
        ("#vocab a\nd\t3:1\n", 2),
        ("#vocab a\nd\ta1\n", 2),
        ("#vocab a\nd\ta:1 a:2\n", 2),
        ("#vocab a a\n", 1),
        ("d\t0:1\n#vocab a\n", 2),
        ("d\t0:-1\n", 1),
        ("\tx\n", 1),
    ];
    for (text, line) in cases {
        assert_eq!(parse_line(parse_text(p(), text).err().unwrap()), line, "{text:?}");
    }
}

#[test]
fn image_errors() {
    for (text, line) in [
        ("a\t1,2\nb\t1\n", 2),
        ("#bins x y\na\t1\n", 2),
        ("a\t1,nan\n", 1),
        ("a\t1,inf\n", 1),
        ("a\t1,,2\n", 1),
    ] {
        assert_eq!(parse_line(parse_images(p(), text).err().unwrap()), line, "{text:?}");
    }
}

#[test]
fn join_errors() {
    let text = "#vocab a\nd1\ta:1\nd2\t\n";
    for (t, i, l) in [
        (text, "d1\t1\n", None),
        (text, "d1\t1\nd2\t1\nd3\t1\n", None),
        (text, "d1\t1\nd1\t2\nd2\t1\n", None),
        ("#vocab a\nd1\t\nd1\t\n", "d1\t1\n", None),
        (text, "d1\t1\nd2\t1\n", Some("d1\tx\n")),
        (text, "d1\t1\nd2\t1\n", Some("d1\tx\nd2\ty\nd3\tz\n")),
    ] {
        match join(t, i, l) {
            Err(CliError::Join(_)) => {}
            other => panic!("expected a join error for {t:?} {i:?} {l:?}, got {other:?}"),
        }
    }
    let ok = join(text, "d2\t1\nd1\t0\n", Some("d2\ty\nd1\tx\n")).unwrap();
    assert_eq!(ok.ids, vec!["d1", "d2"]);
    assert_eq!(ok.labels.unwrap(), vec!["x", "y"]);
    assert_eq!(ok.observations[0].z, vec![0.0]);
}

#[test]
fn unwritable_tokens_are_rejected() {
    let mut c = synthetic();
    c.vocab[0] = "two words".into();
    assert!(emit_text(&c).is_err());
}

#[test]
fn model_round_trip_is_bit_exact() {
    for seed in 0..5 {
        let mut params = oracle::canonical_params(seed);
        params.alpha[0] = 0.1 + 0.2;
        params.w.row_mut(1)[0] = -1.0 / 3.0;
        params.sigma[0] = f64::MIN_POSITIVE * 3.0;
        let text = emit_model(&params);
        let back = parse_model(p(), &text).unwrap();
        for (a, b) in [(&params.alpha, &back.alpha), (&params.beta, &back.beta), (&params.sigma, &back.sigma)] {
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(back, params);
        assert_eq!(emit_model(&back), text);
    }
}

#[test]
fn model_file_errors() {
    let good = emit_model(&oracle::canonical_params(1));
    let v2 = good.replacen("DWH v1", "DWH v2", 1);
    assert!(matches!(parse_model(p(), &v2), Err(CliError::Version { .. })));
    assert!(matches!(parse_model(p(), "hello\n"), Err(CliError::Version { .. })));

    let mut lines: Vec<String> = good.lines().map(String::from).collect();
    let sigma_line = lines.iter().position(|l| l == "sigma").unwrap() + 1;
    lines[sigma_line] = format!("-{}", lines[sigma_line]);
    match parse_model(p(), &lines.join("\n")) {
        Err(CliError::Core(Error::InvalidParams(v))) => assert!(!v.is_empty()),
        other => panic!("expected an invariant violation, got {other:?}"),
    }

    let short = good.replacen("DWH v1 2 1 2", "DWH v1 3 1 2", 1);
    assert_eq!(parse_line(parse_model(p(), &short).err().unwrap()), 3);
    let truncated: String = good.lines().take(8).map(|l| format!("{l}\n")).collect();
    assert!(matches!(parse_model(p(), &truncated), Err(CliError::Parse { .. })));
    let trailing = format!("{good}1 2\n");
    assert!(matches!(parse_model(p(), &trailing), Err(CliError::Parse { .. })));
    let renamed = good.replacen("\nbeta\n", "\nbeat\n", 1);
    assert_eq!(parse_line(parse_model(p(), &renamed).err().unwrap()), 4);
}

#[test]
fn saving_invalid_model_fails() {
    let mut params = oracle::canonical_params(2);
    params.sigma[0] = 0.0;
    let dir = tempfile::tempdir().unwrap();
    assert!(save_model(&params, &dir.path().join("m")).is_err());
}

#[test]
fn latents_and_splits_round_trip() {
    let ids: Vec<String> = (0..4).map(|i| format!("q{i}")).collect();
    let l = LatentMatrix::new(
        Matrix::from_row_major(4, 2, vec![0.1, -2.5e-300, 1.0 / 3.0, 4.0, 0.0, -0.0, 1e300, 7.25]),
        ids.clone(),
    )
    .unwrap();
    let text = emit_latents(&l);
    assert!(text.starts_with("q0\t0.1,-"));
    let back = parse_latents(p(), &text).unwrap();
    assert_eq!(back, l);

    let split = Split { queries: vec![1, 3], index: vec![0, 2] };
    let text = emit_split(&split, &ids);
    assert_eq!(text, "q0\tindex\nq1\tquery\nq2\tindex\nq3\tquery\n");
    assert_eq!(parse_split(p(), &text, &ids).unwrap(), split);
    assert!(parse_split(p(), "q9\tquery\n", &ids).is_err());
    assert!(parse_split(p(), "q0\tquery\nq0\tindex\n", &ids).is_err());
    assert!(parse_split(p(), "q0\ttrain\n", &ids).is_err());
}

#[test]
fn plot_files_have_two_columns() {
    let text = emit_pr_curve(&[(0.0, 1.0), (0.5, 0.75)]);
    assert_eq!(text, "recall\tprecision\n0\t1\n0.5\t0.75\n");
}

fn arb_corpus() -> impl Strategy<Value = Corpus> {
    (1usize..6, 0usize..4).prop_flat_map(|(m, k)| {
        prop::collection::vec(
            (
                prop::collection::vec(0u32..5, m),
                prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, k),
                "[a-z]{1,3}",
            ),
            0..8,
        )
        .prop_map(move |rows| {
            let observations: Vec<Observation> =
                rows.iter().map(|(x, z, _)| Observation::from_dense(x, z)).collect();
            let ids = (0..rows.len()).map(|i| format!("id{i}")).collect();
            let labels = Some(rows.iter().map(|r| r.2.clone()).collect());
            Corpus::new(
                observations,
                (0..m).map(|i| format!("w{i}")).collect(),
                (0..k).map(|i| format!("b{i}")).collect(),
                labels,
                ids,
            )
            .unwrap()
        })
    })
}

proptest! {
    #[test]
    fn corpus_parse_emit_identity(c in arb_corpus()) {
        let text = emit_text(&c).unwrap();
        let images = emit_images(&c).unwrap();
        let labels = emit_labels(&c).unwrap();
        let back = join(&text, &images, Some(&labels)).unwrap();
        prop_assert_eq!(emit_text(&back).unwrap(), text);
        prop_assert_eq!(emit_images(&back).unwrap(), images);
        prop_assert_eq!(back, c);
    }
}
