use proptest::prelude::*;
use treff::format::{read_embeddings, write_embeddings, EmbeddingFile, FormatError};
use treff::params::{load_params, save_params};
use treff_core::{AdapterParams, ClassVocabulary, EmbeddingSet, Matrix, Sharpness};

fn f32_values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        any::<f32>()
            .prop_filter("finite", |x| x.is_finite())
            .prop_map(f64::from),
        n,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn disk_round_trip(
        (rows, dim, values) in (1usize..8, 1usize..40).prop_flat_map(|(r, d)| (Just(r), Just(d), f32_values(r * d))),
        classes in 1usize..5,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.treff");
        let set = EmbeddingSet::new(rows, dim, values).unwrap();
        let labels: Vec<usize> = (0..rows).map(|i| i % classes).collect();
        let vocab = ClassVocabulary::numbered(classes);
        write_embeddings(&path, &set, Some(&labels), Some(&vocab)).unwrap();
        let back = read_embeddings(&path).unwrap();
        prop_assert_eq!(&back.set, &set);
        let support = back.into_support().unwrap();
        prop_assert_eq!(support.labels(), &labels[..]);
    }

    #[test]
    fn truncation_is_always_detected(cut in 0usize..64) {
        let set = EmbeddingSet::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        let bytes = treff::format::encode(&set, Some(&[0, 1]), Some(&ClassVocabulary::new(["x", "yy"]).unwrap())).unwrap();
        let cut = cut.min(bytes.len() - 1);
        prop_assert!(treff::format::decode(&bytes[..cut]).is_err());
    }
}

#[test]
fn f64_values_are_rounded_to_f32() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.treff");
    let set = EmbeddingSet::from_rows(&[&[0.1, 1.0 / 3.0]]).unwrap();
    write_embeddings(&path, &set, None, None).unwrap();
    let back = read_embeddings(&path).unwrap();
    assert_eq!(
        back.set.row(0),
        &[f64::from(0.1f32), f64::from(1.0f32 / 3.0)]
    );
    assert!(back.labels.is_none() && back.vocab.is_none());
    assert!(matches!(
        EmbeddingFile::unlabeled(set).into_support(),
        Err(FormatError::LabelArity)
    ));
}

#[test]
fn params_survive_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.bin");
    let w = Matrix::from_rows(&[&[0.5, 0.25, 0.0], &[0.0, 1.0, -1.0], &[2.0, 0.0, 1.0]]).unwrap();
    let params = AdapterParams::new(w, Sharpness::new(4.0).unwrap(), 1.5).unwrap();
    save_params(&path, &params).unwrap();
    assert_eq!(load_params(&path).unwrap(), params);
}
