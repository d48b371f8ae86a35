use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use codeshift::geometry::{l2_normalize, mean_offdiag_cosine, mean_offdiag_cosine_direct, EmbeddingMatrix};
use codeshift::lexical::{batched_entropy, BatchSize, WordTokenizer};
use codeshift::retrieval::retrieve_topk;
use codeshift::stats::permutation_extreme_count;
use codeshift::ExecMode;

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn random_matrix(rng: &mut ChaCha8Rng, prefix: &str, b: usize, d: usize) -> EmbeddingMatrix {
    let ids = (0..b).map(|i| format!("{prefix}{i}")).collect();
    let rows = (0..b).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    l2_normalize(EmbeddingMatrix::from_rows("bench", ids, rows).unwrap()).unwrap()
}

fn topk(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let corpus = random_matrix(&mut rng, "d", 5_000, 128);
    let queries = random_matrix(&mut rng, "q", 200, 128);
    let mut g = c.benchmark_group("retrieve_topk_5000x200");
    for (name, mode) in MODES {
        g.bench_function(name, |b| b.iter(|| retrieve_topk(mode, black_box(&queries), &corpus, 10).unwrap()));
    }
    g.finish();
}

fn s_bar(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = random_matrix(&mut rng, "r", 2_000, 128);
    let mut g = c.benchmark_group("mean_offdiag_cosine_2000");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::new("identity", name), |b| {
            b.iter(|| mean_offdiag_cosine(mode, black_box(&m)).unwrap())
        });
        g.bench_function(BenchmarkId::new("direct", name), |b| {
            b.iter(|| mean_offdiag_cosine_direct(mode, black_box(&m)).unwrap())
        });
    }
    g.finish();
}

fn entropy(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tok = WordTokenizer::new(WordTokenizer::DEFAULT_VOCAB).unwrap();
    let texts: Vec<String> = (0..20_000)
        .map(|_| {
            (0..rng.random_range(5..40))
                .map(|_| format!("w{}", rng.random_range(0..5_000)))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let mut g = c.benchmark_group("batched_entropy_20000_texts");
    g.sample_size(20);
    for (name, mode) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| batched_entropy(mode, black_box(&texts), &tok, BatchSize::Fixed(32), 7).unwrap())
        });
    }
    g.finish();
}

fn permutation(c: &mut Criterion) {
    let x: Vec<f64> = (0..9).map(|i| f64::from(i) * 1.3).collect();
    let y = [3.0, 1.0, 4.0, 1.5, 5.0, 9.0, 2.0, 6.0, 5.5];
    let mut g = c.benchmark_group("permutation_p_n9");
    g.sample_size(20);
    for (name, mode) in MODES {
        g.bench_function(name, |b| b.iter(|| permutation_extreme_count(mode, black_box(&x), &y)));
    }
    g.finish();
}

criterion_group!(benches, topk, s_bar, entropy, permutation);
criterion_main!(benches);
