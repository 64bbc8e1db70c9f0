use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use packest_bench::recorded;
use packest_core::experiment::{replay, FilterKind};
use packest_core::{CentralizedUkf, Pukf};

fn filter_steps(c: &mut Criterion) {
    let (s, traj, model, initial) = recorded(60.0);
    let (prev, now) = (&traj.records[20], &traj.records[21]);

    let cukf = CentralizedUkf::new(model.clone(), &s.cukf, &initial).unwrap();
    c.bench_function("centralized step, 6 cells", |b| {
        b.iter_batched(|| cukf.clone(), |mut f| f.step(prev, now).unwrap(), BatchSize::SmallInput)
    });

    let pukf = Pukf::new(model, &s.pukf, &initial).unwrap();
    c.bench_function("partitioned round, 6 nodes", |b| {
        b.iter_batched(|| pukf.clone(), |mut f| f.step(prev, now).unwrap(), BatchSize::SmallInput)
    });
}

fn full_replay(c: &mut Criterion) {
    let (s, traj, _, _) = recorded(200.0);
    let mut group = c.benchmark_group("replay 200 s");
    group.sample_size(10);
    for kind in [FilterKind::Cukf, FilterKind::Pukf] {
        group.bench_function(kind.name(), |b| {
            b.iter(|| replay(&s, &traj.records, &[kind]).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, filter_steps, full_replay);
criterion_main!(benches);
