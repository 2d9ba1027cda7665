int unused_bench_cim;
