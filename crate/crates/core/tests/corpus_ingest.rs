mod common;

use capt_bench::corpus::{self, ingest, Adapter, Corpus, CorpusError, IngestOptions, Split};
use capt_bench::phoneset::PhoneInventory;
use common::{fixtures, ground_truth, mini_corpus};

#[test]
fn mini_corpus_matches_generator_records() {
    let corpus = mini_corpus();
    let truth = ground_truth();
    let records = truth["per_utterance"].as_array().unwrap();
    assert_eq!(corpus.len(), records.len());
    for rec in records {
        let utt = corpus.get(rec["utt_id"].as_str().unwrap()).unwrap();
        assert_eq!(utt.word_text, rec["text"].as_str().unwrap());
        assert_eq!(utt.canonical_phones.render(), rec["canonical"].as_str().unwrap());
        assert_eq!(utt.perceived_phones.render(), rec["perceived"].as_str().unwrap());
        let flags: Vec<bool> = rec["flags"].as_array().unwrap().iter().map(|f| f.as_bool().unwrap()).collect();
        assert_eq!(utt.mispronounced, flags, "{}", utt.utt_id);
        assert_eq!(utt.speaker.speaker_id, rec["speaker"].as_str().unwrap());
        let s = &rec["scores"];
        assert_eq!(
            (utt.scores.accuracy, utt.scores.fluency, utt.scores.prosodic, utt.scores.total),
            (
                s["accuracy"].as_u64().unwrap() as u8,
                s["fluency"].as_u64().unwrap() as u8,
                s["prosodic"].as_u64().unwrap() as u8,
                s["total"].as_u64().unwrap() as u8
            )
        );
        assert_eq!(utt.split, Split::Test);
    }
}

#[test]
fn mini_corpus_statistics() {
    let stats = corpus::stats(&mini_corpus());
    let truth = ground_truth();
    assert_eq!(stats.train.files, 0);
    assert_eq!(stats.test.files as u64, truth["test_files"].as_u64().unwrap());
    assert_eq!(stats.test.speakers as u64, truth["test_speakers"].as_u64().unwrap());
    for group in ["age", "gender"] {
        let table = if group == "age" { &stats.test.age } else { &stats.test.gender };
        for (band, share) in truth[group].as_object().unwrap() {
            let got = &table[band];
            assert_eq!(got.count as u64, share["count"].as_u64().unwrap(), "{group} {band}");
            assert_eq!(format!("{:.1}", got.percent), share["percent"].as_str().unwrap(), "{group} {band}");
        }
    }
    assert_eq!(stats.test.canonical_phones as u64, truth["canonical_phones"].as_u64().unwrap());
    assert_eq!(stats.test.mispronounced_phones as u64, truth["mispronounced_phones"].as_u64().unwrap());
    assert!(stats.render().contains("40.0% (2)"));
}

#[test]
fn corpus_file_round_trip() {
    let corpus = mini_corpus();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.ndjson");
    corpus.save(&path).unwrap();
    let back = Corpus::load(&path).unwrap();
    assert_eq!(back.utterances(), corpus.utterances());
    assert_eq!(std::fs::read_to_string(&path).unwrap(), back.to_ndjson_string());
    let header: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(&path).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(header["schema"], "capt-corpus/1");
    assert_eq!(header["counts"]["test"], 20);
}

#[test]
fn ingest_is_deterministic() {
    assert_eq!(mini_corpus().to_ndjson_string(), mini_corpus().to_ndjson_string());
}

fn copy_tree(src: &std::path::Path, dst: &std::path::Path) {
    std::fs::create_dir_all(dst).unwrap();
    for entry in std::fs::read_dir(src).unwrap() {
        let entry = entry.unwrap();
        let to = dst.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_tree(&entry.path(), &to);
        } else {
            std::fs::copy(entry.path(), to).unwrap();
        }
    }
}

#[test]
fn corrupted_phone_is_reported_or_skipped() {
    let dir = tempfile::tempdir().unwrap();
    copy_tree(&fixtures().join("mini_so762"), dir.path());
    let scores = dir.path().join("resource/scores.json");
    let text = std::fs::read_to_string(&scores).unwrap();
    let mut json: serde_json::Value = serde_json::from_str(&text).unwrap();
    let first = json.as_object_mut().unwrap().values_mut().next().unwrap();
    let word = &mut first["words"][0];
    match &mut word["phones"] {
        serde_json::Value::Array(p) => p[0] = "QX".into(),
        serde_json::Value::String(s) => *s = format!("QX {}", s.split_once(' ').map_or("", |x| x.1)),
        _ => unreachable!(),
    }
    std::fs::write(&scores, serde_json::to_string(&json).unwrap()).unwrap();

    let inv = PhoneInventory::default_inventory();
    let strict = IngestOptions {
        phone_acc_threshold: 0.5,
        lenient: false,
    };
    let err = ingest(dir.path(), Adapter::Speechocean762, &inv, &strict).unwrap_err();
    assert!(matches!(err, CorpusError::PhoneValidation { .. }), "{err}");
    assert!(err.to_string().contains("QX"), "{err}");

    let lenient = IngestOptions { lenient: true, ..strict };
    let outcome = ingest(dir.path(), Adapter::Speechocean762, &inv, &lenient).unwrap();
    assert_eq!(outcome.corpus.len(), 19);
    assert_eq!(outcome.skipped.len(), 1);
}

#[test]
fn missing_source_is_io_error() {
    let inv = PhoneInventory::default_inventory();
    let err = ingest(
        std::path::Path::new("/no/such/dir"),
        Adapter::Speechocean762,
        &inv,
        &IngestOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, CorpusError::Io { .. }), "{err}");
}
