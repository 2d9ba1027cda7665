int unused_bench_forward;
