int unused_bench_prob;
