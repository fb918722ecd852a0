use recmix_core::corpus::{extract_features, Corpus, CorpusConfig, Domain, Section, SectionNoise, Split};

fn small() -> CorpusConfig {
    CorpusConfig {
        source_pairs: 60,
        target_recipes: 40,
        target_test_pairs: 20,
        common_ingredients: 30,
        source_unique_ingredients: 10,
        target_unique_ingredients: 5,
        feature_dim: 8,
        image_dim: 6,
        unified_clusters: 12,
        ..Default::default()
    }
}

fn to_text(c: &Corpus) -> String {
    let mut buf = Vec::new();
    c.write_jsonl(&mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn save_load_round_trip() {
    let corpus = Corpus::generate(&small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    corpus.save(&path).unwrap();
    let back = Corpus::load(&path).unwrap();
    assert_eq!(back, corpus);
    assert_eq!(to_text(&back), std::fs::read_to_string(&path).unwrap());
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1 + 120);
}

#[test]
fn generation_is_byte_identical() {
    let a = to_text(&Corpus::generate(&small()).unwrap());
    let b = to_text(&Corpus::generate(&small()).unwrap());
    assert_eq!(a, b);
    let c = to_text(&Corpus::generate(&CorpusConfig { seed: 8, ..small() }).unwrap());
    assert_ne!(a, c);
}

#[test]
fn missing_section_names_field_and_line() {
    let text = to_text(&Corpus::generate(&small()).unwrap());
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut record: serde_json::Value = serde_json::from_str(&lines[4]).unwrap();
    record["features"].as_object_mut().unwrap().remove("instructions");
    lines[4] = record.to_string();
    let err = Corpus::read_jsonl(lines.join("\n").as_bytes()).unwrap_err().to_string();
    assert!(err.contains("line 5"), "{err}");
    assert!(err.contains("instructions"), "{err}");
}

#[test]
fn record_count_must_match_header() {
    let text = to_text(&Corpus::generate(&small()).unwrap());
    let mut lines: Vec<&str> = text.lines().collect();
    lines.remove(3);
    let err = Corpus::read_jsonl(lines.join("\n").as_bytes()).unwrap_err().to_string();
    assert!(err.contains("source_pairs"), "{err}");
}

#[test]
fn target_training_recipes_cannot_carry_images() {
    let corpus = Corpus::generate(&small()).unwrap();
    assert!(corpus.target_train().iter().all(|r| r.image().is_none()));
    let text = to_text(&corpus);
    let idx = corpus.records().iter().position(|r| r.split == Split::TargetTrain).unwrap() + 1;
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut record: serde_json::Value = serde_json::from_str(&lines[idx]).unwrap();
    record["image"] = serde_json::json!(vec![0.0; 6]);
    lines[idx] = record.to_string();
    let err = Corpus::read_jsonl(lines.join("\n").as_bytes()).unwrap_err().to_string();
    assert!(err.contains("cannot carry images"), "{err}");
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn ingredient_frequencies_follow_zipf_rank() {
    let config = CorpusConfig {
        source_pairs: 10_000,
        target_recipes: 10_000,
        target_test_pairs: 10,
        feature_dim: 8,
        image_dim: 4,
        ..Default::default()
    };
    let corpus = Corpus::generate(&config).unwrap();
    for domain in [Domain::Source, Domain::Target] {
        let ranked = corpus.ingredient_ranks.of(domain);
        let mut counts = vec![0.0; config.universe_size()];
        for r in corpus.records().iter().filter(|r| r.domain() == domain) {
            for &i in &r.latent.ingredients {
                counts[i] += 1.0;
            }
        }
        let freq: Vec<f64> = ranked.iter().map(|&id| counts[id]).collect();
        let position: Vec<f64> = (0..ranked.len()).map(|p| -(p as f64)).collect();
        let rho = spearman(&position, &freq);
        assert!(rho > 0.9, "{domain:?}: rank correlation {rho}");
    }
}

#[test]
fn no_gap_configuration_translates_exactly() {
    let config = CorpusConfig {
        source_unique_ingredients: 0,
        target_unique_ingredients: 0,
        translation_noise: 0.0,
        target_zipf: 1.0,
        target_style_shift: 0.0,
        ..small()
    };
    let corpus = Corpus::generate(&config).unwrap();
    let noise = SectionNoise {
        title: config.title_noise,
        ingredients: config.ingredient_noise,
        instructions: config.instruction_noise,
    };
    for r in corpus.records().iter().filter(|r| r.domain() == Domain::Target) {
        let native = extract_features(&r.latent, &corpus.source_codebook, &noise, r.latent.noise_seed).unwrap();
        let translated = r.translated.as_ref().unwrap();
        for s in Section::ALL {
            assert_eq!(translated.section(s), native.section(s));
        }
    }
}
