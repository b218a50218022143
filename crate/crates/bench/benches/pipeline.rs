use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use tod_instruct::metrics::corpus_bleu;
use tod_instruct::sampler::{sample_k_dialogs_per_domain, sample_k_per_label, sample_percent_dialogs};
use tod_instruct::{
    parse_acts, render_naive, render_t2g2, variant_matrix, CompileOptions, Compiler, Mode, PromptCatalog, Task,
};
use tod_instruct_bench as synth;

fn semantic(c: &mut Criterion) {
    let frames = synth::frame_lists(1_000);
    let strings = synth::naive_strings(&frames);
    let table = synth::template_table();
    let mut g = c.benchmark_group("semantic");
    g.throughput(Throughput::Elements(frames.len() as u64));
    g.bench_function("parse_acts", |b| b.iter(|| strings.iter().map(|s| parse_acts(black_box(s)).unwrap().len()).sum::<usize>()));
    g.bench_function("render_naive", |b| b.iter(|| frames.iter().map(|f| render_naive(black_box(f)).unwrap().len()).sum::<usize>()));
    g.bench_function("render_t2g2", |b| {
        b.iter(|| frames.iter().map(|f| render_t2g2(black_box(f), &table).unwrap().len()).sum::<usize>())
    });
    g.finish();
}

fn compile(c: &mut Criterion) {
    let compiler = Compiler::default();
    let ontology = synth::ontology(1, 150);
    let examples = synth::intent_examples(150, 4);
    let prompt = variant_matrix(&PromptCatalog::default(), Task::Ic).remove(0);
    let mut g = c.benchmark_group("compile_ic");
    g.throughput(Throughput::Elements(examples.len() as u64));
    for (name, opts) in [
        ("std", CompileOptions::standard()),
        ("pe", CompileOptions::prompted(Mode::Pe, prompt.clone())),
        ("cins", CompileOptions::prompted(Mode::Cins, prompt.clone())),
    ] {
        g.bench_function(name, |b| {
            b.iter(|| {
                examples
                    .iter()
                    .map(|e| compiler.compile_ic(&e.id, &e.utterance, &e.intent, &ontology, "domain0", &opts).unwrap().input_text.len())
                    .sum::<usize>()
            })
        });
    }
    g.finish();
}

fn bleu(c: &mut Criterion) {
    let mut g = c.benchmark_group("corpus_bleu");
    for n in [1_000, 10_000] {
        let (h, r) = synth::bleu_corpus(n);
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| corpus_bleu(black_box(&h), &r).unwrap()));
    }
    g.finish();
}

fn sampling(c: &mut Criterion) {
    let intents = synth::intent_examples(150, 100);
    let dialogs = synth::dialogs(8_420);
    let items = synth::nlg_items(14, 50);
    let mut g = c.benchmark_group("sampler");
    g.bench_function("k_per_label/150x100", |b| b.iter(|| sample_k_per_label(black_box(&intents), 5, 0).unwrap()));
    g.bench_function("percent_dialogs/8420", |b| b.iter(|| sample_percent_dialogs(black_box(&dialogs), 5.0, 0).unwrap()));
    g.bench_function("k_dialogs_per_domain/14x50", |b| {
        b.iter(|| sample_k_dialogs_per_domain(black_box(&items), 5, 0, false).unwrap())
    });
    g.finish();
}

criterion_group!(benches, semantic, compile, bleu, sampling);
criterion_main!(benches);
